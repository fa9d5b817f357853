"""Numeric hot kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time from ``TOKCOL_BACKEND``
(``numba`` or ``numpy``; default ``numba`` when numba imports).  Both paths
must return bit-identical results; ``tests/test_kernels.py`` enforces it.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

_REQUESTED = os.environ.get("TOKCOL_BACKEND", "numba").strip().lower()
if _REQUESTED not in ("numba", "numpy"):
    raise ImportError(f"TOKCOL_BACKEND must be 'numba' or 'numpy', got {_REQUESTED!r}")
BACKEND = "numba" if (_REQUESTED == "numba" and nb is not None) else "numpy"


def _njit(fn):
    if nb is None:
        return fn
    return nb.njit(cache=True)(fn)


# ---------------------------------------------------------------- APSP / BFS

def _apsp_loops(n, indptr, indices):
    dist = np.full((n, n), -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[s, s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[s, u]
            for e in range(indptr[u], indptr[u + 1]):
                w = indices[e]
                if dist[s, w] < 0:
                    dist[s, w] = du + 1
                    queue[tail] = w
                    tail += 1
    return dist


_apsp_numba = _njit(_apsp_loops)


def apsp_numpy(n, indptr, indices):
    """Level-synchronous BFS from every source at once (boolean matmul)."""
    adj = np.zeros((n, n), dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    adj[rows, indices] = 1
    dist = np.full((n, n), -1, dtype=np.int64)
    frontier = np.eye(n, dtype=np.int64)
    visited = frontier.astype(bool)
    dist[visited] = 0
    level = 0
    while frontier.any():
        level += 1
        reach = (frontier @ adj) > 0
        new = reach & ~visited
        dist[new] = level
        visited |= new
        frontier = new.astype(np.int64)
    return dist


def apsp_numba(n, indptr, indices):
    return _apsp_numba(n, indptr, indices)


def apsp(n, indptr, indices):
    """All-pairs hop distances (``-1`` when unreachable)."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if BACKEND == "numba":
        return apsp_numba(n, indptr, indices)
    return apsp_numpy(n, indptr, indices)


# ------------------------------------------- single-shot algorithm, metrics only
#
# Array form of the single-shot automaton for sweeps that need no traces.
# Tokens must fit in int63; TOP is INT64_MAX.  Status codes: 0 all halted,
# 3 round limit, 4 bandwidth violation, 6 read from a halted peer.
# Returned metrics: (status, iterations, max_bits, total_messages,
# build_false_iteration or -1); res/halted_round are written in place.

TOP = np.iinfo(np.int64).max
ST_OK, ST_TIMEOUT, ST_BANDWIDTH, ST_SILENCE = 0, 3, 4, 6


def _small_loops(n, indptr, peer, peer_port, qbuf, qlen, rid, L, know, n_val, k_val,
                 capm, cw_cap, base_bits, B, strict, limit, res, halted_round):
    kq = qbuf.shape[1]
    qhead = np.zeros(n, dtype=np.int64)
    p = np.zeros(n, dtype=np.int64)
    f = np.zeros(n, dtype=np.bool_)
    build = np.ones(n, dtype=np.bool_)
    cnt = np.full(n, -1, dtype=np.int64)
    ek = np.zeros(n, dtype=np.int64)  # 0 TOP, 1 BOT, 2 tokens
    etok = np.zeros((n, capm), dtype=np.int64)
    elen = np.zeros(n, dtype=np.int64)
    halted = np.zeros(n, dtype=np.bool_)
    chi = np.zeros(indptr[n], dtype=np.bool_)
    it = 0
    max_bits = 0
    msgs = 0
    bf_iter = -1
    tmp = np.empty(kq, dtype=np.int64)
    while it < limit:
        alive = False
        for v in range(n):
            if not halted[v]:
                alive = True
        if not alive:
            return ST_OK, it, max_bits, msgs, bf_iter
        it += 1
        res0 = res.copy()
        build0 = build.copy()
        rid0 = rid.copy()
        p0 = p.copy()
        f0 = f.copy()
        cnt0 = cnt.copy()
        ek0 = ek.copy()
        etok0 = etok.copy()
        elen0 = elen.copy()
        halted0 = halted.copy()
        for v in range(n):
            if halted0[v]:
                continue
            bits = base_bits + (2 if rid0[v] == TOP else 2 + L)
            if ek0[v] != 2:
                bits += 2
            elif capm > 1:
                bits += 2 + cw_cap + elen0[v] * L
            else:
                bits += 2 + elen0[v] * L
            if indptr[v + 1] > indptr[v]:
                if strict and bits > B:
                    return ST_BANDWIDTH, it, bits, msgs, bf_iter
                if bits > max_bits:
                    max_bits = bits
                msgs += indptr[v + 1] - indptr[v]
            if res0[v] != 0:
                halted[v] = True
                halted_round[v] = it
        for v in range(n):
            if halted[v]:
                continue
            lo = indptr[v]
            hi = indptr[v + 1]
            b = build[v]
            for s in range(lo, hi):
                u = peer[s]
                if halted0[u]:
                    return ST_SILENCE, it, max_bits, msgs, bf_iter
                if res0[u] != 0:
                    res[v] = res0[u]
                b = b and build0[u]
            build[v] = b
            if b:
                if hi > lo:
                    lowest = TOP
                    j = -1
                    for s in range(lo, hi):
                        if j < 0 or rid0[peer[s]] < lowest:
                            lowest = rid0[peer[s]]
                            j = s
                    if lowest < rid[v]:
                        rid[v] = lowest
                        p[v] = j - lo + 1
                        f[v] = False
                    elif rid[v] != TOP:
                        same = True
                        for s in range(lo, hi):
                            if rid0[peer[s]] != rid[v]:
                                same = False
                        if same:
                            allf = True
                            for s in range(lo, hi):
                                chi[s] = p0[peer[s]] == peer_port[s]
                                if chi[s] and not f0[peer[s]]:
                                    allf = False
                            if allf:
                                f[v] = True
                else:
                    f[v] = True
                if p[v] == 0 and f[v]:
                    build[v] = False
                continue
            # detection
            for s in range(lo, hi):
                u = peer[s]
                chi[s] = (not build0[u]) and p0[u] == peer_port[s] and rid0[u] == rid[v]
            for s in range(lo, hi):
                u = peer[s]
                if chi[s] and ek0[u] == 2:
                    for e in range(elen0[u]):
                        qbuf[v, (qhead[v] + qlen[v]) % kq] = etok0[u, e]
                        qlen[v] += 1
            anyb = False
            for s in range(lo, hi):
                if build0[peer[s]]:
                    anyb = True
            if anyb:
                continue
            counted = True
            total = 1
            drained = True
            for s in range(lo, hi):
                if chi[s]:
                    u = peer[s]
                    if cnt0[u] < 0:
                        counted = False
                    else:
                        total += cnt0[u]
                    if ek0[u] != 1:
                        drained = False
            if counted:
                cnt[v] = total
            if p[v] != 0:
                if qlen[v] > 0:
                    m = min(capm, qlen[v])
                    for e in range(m):
                        etok[v, e] = qbuf[v, qhead[v]]
                        qhead[v] = (qhead[v] + 1) % kq
                    qlen[v] -= m
                    elen[v] = m
                    ek[v] = 2
                elif drained:
                    ek[v] = 1
                else:
                    ek[v] = 0
            elif cnt[v] >= 0 and drained and res[v] == 0 and know != 2:
                if know == 0:
                    ok = cnt[v] == n_val
                else:
                    ok = qlen[v] == k_val
                m = qlen[v]
                for e in range(m):
                    tmp[e] = qbuf[v, (qhead[v] + e) % kq]
                srt = np.sort(tmp[:m])
                for e in range(1, m):
                    if srt[e] == srt[e - 1]:
                        ok = False
                res[v] = 1 if ok else 2
        if bf_iter < 0:
            anyb = False
            for v in range(n):
                if build[v]:
                    anyb = True
            if not anyb:
                bf_iter = it
    alive = False
    for v in range(n):
        if not halted[v]:
            alive = True
    return (ST_TIMEOUT if alive else ST_OK), it, max_bits, msgs, bf_iter


_small_numba = _njit(_small_loops)


def small_numba(*args):
    return _small_numba(*args)


def _seg_reduce(op, values, starts, has, fill):
    """``op.reduceat`` over CSR segments; empty segments get ``fill``."""
    if values.size == 0:
        return np.full(starts.size, fill)
    out = op.reduceat(values, np.minimum(starts, values.size - 1))
    return np.where(has, out, fill)


def small_numpy(n, indptr, peer, peer_port, qbuf, qlen, rid, L, know, n_val, k_val,
                capm, cw_cap, base_bits, B, strict, limit, res, halted_round):
    """Vectorized twin of :func:`_small_loops` (one numpy pass per iteration)."""
    kq = qbuf.shape[1]
    starts = indptr[:-1]
    deg = np.diff(indptr)
    has = deg > 0
    src = np.repeat(np.arange(n), deg)
    qhead = np.zeros(n, dtype=np.int64)
    p = np.zeros(n, dtype=np.int64)
    f = np.zeros(n, dtype=bool)
    build = np.ones(n, dtype=bool)
    cnt = np.full(n, -1, dtype=np.int64)
    ek = np.zeros(n, dtype=np.int64)
    etok = np.zeros((n, capm), dtype=np.int64)
    elen = np.zeros(n, dtype=np.int64)
    halted = np.zeros(n, dtype=bool)
    chi = np.zeros(indptr[n], dtype=bool)
    it = 0
    max_bits = 0
    msgs = 0
    bf_iter = -1
    big = np.iinfo(np.int64).max
    cols = np.arange(capm)
    while it < limit:
        if halted.all():
            return ST_OK, it, max_bits, msgs, bf_iter
        it += 1
        res0, build0, rid0, p0, f0 = res.copy(), build.copy(), rid.copy(), p.copy(), f.copy()
        cnt0, ek0, etok0, elen0 = cnt.copy(), ek.copy(), etok.copy(), elen.copy()
        halted0 = halted.copy()
        live0 = ~halted0

        bits = base_bits + np.where(rid0 == TOP, 2, 2 + L)
        if capm > 1:
            bits = bits + np.where(ek0 == 2, 2 + cw_cap + elen0 * L, 2)
        else:
            bits = bits + np.where(ek0 == 2, 2 + elen0 * L, 2)
        senders = live0 & has
        if strict and (bits[senders] > B).any():
            first = int(np.flatnonzero(senders & (bits > B))[0])
            return ST_BANDWIDTH, it, int(bits[first]), msgs, bf_iter
        if senders.any():
            max_bits = max(max_bits, int(bits[senders].max()))
        msgs += int(deg[live0].sum())
        leaving = live0 & (res0 != 0)
        halted |= leaving
        halted_round[leaving] = it
        live = ~halted

        pr = peer
        live_slot = live[src]
        if (live_slot & halted0[pr]).any():
            return ST_SILENCE, it, max_bits, msgs, bf_iter

        # verdict adoption: the last port carrying one wins
        carrier = np.where(res0[pr] != 0, np.arange(pr.size), -1)
        last = _seg_reduce(np.maximum, carrier, starts, has, -1)
        adopt = live & (last >= 0)
        res[adopt] = res0[pr[last[adopt]]]

        nb_build = _seg_reduce(np.logical_and, build0[pr], starts, has, True)
        build = np.where(live, build & nb_build, build)
        in_bfs = live & build
        in_det = live & ~build

        # BFS step
        nrid = rid0[pr]
        lowest = _seg_reduce(np.minimum, nrid, starts, has, big)
        first_min = _seg_reduce(np.minimum, np.where(nrid == lowest[src], np.arange(pr.size), big),
                                starts, has, big)
        adopt = in_bfs & has & (lowest < rid)
        same = _seg_reduce(np.logical_and, nrid == rid[src], starts, has, True)
        settle = in_bfs & has & ~adopt & (rid != TOP) & same
        lone = in_bfs & ~has
        rid = np.where(adopt, lowest, rid)
        p = np.where(adopt, first_min - starts + 1, p)
        f = np.where(adopt, False, f)
        bfs_chi = p0[pr] == peer_port
        settle_slot = settle[src]
        chi = np.where(settle_slot, bfs_chi, chi)
        allf = _seg_reduce(np.logical_and, ~bfs_chi | f0[pr], starts, has, True)
        f = np.where((settle & allf) | lone, True, f)
        build = np.where(in_bfs & (p == 0) & f, False, build)

        # detection step: chi and token arrival
        det_slot = in_det[src]
        det_chi = ~build0[pr] & (p0[pr] == peer_port) & (nrid == rid[src])
        chi = np.where(det_slot, det_chi, chi)
        carry = det_slot & det_chi & (ek0[pr] == 2)
        ccount = np.where(carry, elen0[pr], 0)
        if ccount.any():
            csum = np.cumsum(ccount)
            seg_base = np.concatenate(([0], csum))[starts]
            offset = csum - ccount - seg_base[src]  # tokens before this slot within the node
            slots = np.repeat(np.arange(pr.size), ccount)
            within = np.arange(slots.size) - np.repeat(csum - ccount, ccount)
            dst = src[slots]
            pos = (qhead[dst] + qlen[dst] + offset[slots] + within) % kq
            qbuf[dst, pos] = etok0[pr[slots], within]
            qlen += np.bincount(dst, minlength=n)
        any_b = _seg_reduce(np.logical_or, build0[pr], starts, has, False)
        act = in_det & ~any_b
        counted = _seg_reduce(np.logical_and, ~det_chi | (cnt0[pr] >= 0), starts, has, True)
        total = 1 + _seg_reduce(np.add, np.where(det_chi, cnt0[pr], 0), starts, has, 0)
        cnt = np.where(act & counted, total, cnt)
        drained = _seg_reduce(np.logical_and, ~det_chi | (ek0[pr] == 1), starts, has, True)
        child = act & (p != 0)
        ejecting = child & (qlen > 0)
        m = np.where(ejecting, np.minimum(capm, qlen), 0)
        take = cols[None, :] < m[:, None]
        pos2 = (qhead[:, None] + cols[None, :]) % kq
        etok = np.where(take, qbuf[np.arange(n)[:, None], pos2], etok)
        qhead = (qhead + m) % kq
        qlen = qlen - m
        elen = np.where(ejecting, m, elen)
        ek = np.where(ejecting, 2, np.where(child, np.where(drained, 1, 0), ek))
        deciding = act & (p == 0) & (cnt >= 0) & drained & (res == 0)
        if know != 2:
            for v in np.flatnonzero(deciding):
                vals = qbuf[v, (qhead[v] + np.arange(qlen[v])) % kq]
                ok = (cnt[v] == n_val) if know == 0 else (qlen[v] == k_val)
                if ok and vals.size > 1:
                    srt = np.sort(vals)
                    ok = not (srt[1:] == srt[:-1]).any()
                res[v] = 1 if ok else 2
        if bf_iter < 0 and not build.any():
            bf_iter = it
    status = ST_TIMEOUT if not halted.all() else ST_OK
    return status, it, max_bits, msgs, bf_iter
