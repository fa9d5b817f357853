"""Array-kernel execution of the single-shot algorithm (metrics only).

Produces the same :class:`RunMetrics` as :func:`tokcol.engine.run` with
``trace_level="metrics"``, without per-node Python objects.  Only
``det_small`` runs with tokens below ``2**62`` are eligible.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .engine import (
    BandwidthViolation,
    InternalInvariantError,
    RunConfig,
    RunMetrics,
    default_round_limit,
    resolve_bandwidth,
)
from .messages import Verdict, count_width, pack_capacity
from .topology import TokenAssignment, Topology, diameter

MAX_FAST_L = 62
_KNOW = {"know_n": 0, "know_k": 1, "none": 2}
_VERDICT = {0: None, 1: Verdict.ALL_DISTINCT, 2: Verdict.COLLISION}


def eligible(a: TokenAssignment, cfg: RunConfig) -> bool:
    return cfg.algorithm == "det_small" and a.L <= MAX_FAST_L


def prepare(t: Topology, a: TokenAssignment, cfg: RunConfig):
    """Kernel argument tuple (without the two output arrays)."""
    if not eligible(a, cfg):
        raise ValueError("fast path handles det_small with L <= 62 only")
    n, k, L = t.n, a.k, a.L
    B = resolve_bandwidth(cfg, n, L)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([t.degree(v) for v in range(n)])
    peer = np.array([u for v in range(n) for u, _ in t.ports[v]], dtype=np.int64)
    peer_port = np.array([pu for v in range(n) for _, pu in t.ports[v]], dtype=np.int64)
    qbuf = np.zeros((n, max(1, k)), dtype=np.int64)
    qlen = np.zeros(n, dtype=np.int64)
    rid = np.full(n, _kernels.TOP, dtype=np.int64)
    for v, lst in enumerate(a.lists):
        qbuf[v, : len(lst)] = lst
        qlen[v] = len(lst)
        if lst:
            rid[v] = min(lst)
    cap = pack_capacity(n, L, B) if cfg.pack_tokens else 0
    capm = max(1, cap)
    base_bits = 2 + 1 + 1 + 1 + 1 + count_width(n)
    limit = cfg.round_limit or default_round_limit(diameter(t), k, L, B)
    return (n, indptr, peer, peer_port, qbuf, qlen, rid, L, _KNOW[cfg.knowledge], n, k,
            capm, count_width(cap) if cap else 0, base_bits, B, cfg.strict, limit), B


def run_metrics(t: Topology, a: TokenAssignment, cfg: RunConfig, backend: str | None = None) -> RunMetrics:
    args, B = prepare(t, a, cfg)
    n = t.n
    res = np.zeros(n, dtype=np.int64)
    halted_round = np.full(n, -1, dtype=np.int64)
    backend = backend or _kernels.BACKEND
    kernel = _kernels.small_numba if backend == "numba" else _kernels.small_numpy
    status, it, max_bits, msgs, bf = kernel(*args, res, halted_round)
    if status == _kernels.ST_BANDWIDTH:
        raise BandwidthViolation(f"round {it}: a message of {max_bits} bits exceeds B={B}")
    if status == _kernels.ST_SILENCE:
        raise InternalInvariantError(f"iteration {it}: live node reads a port whose peer halted earlier")
    verdicts = [_VERDICT[int(r)] if hr >= 0 else None for r, hr in zip(res, halted_round)]
    return RunMetrics(
        rounds=int(it), iterations=int(it), max_bits=int(max_bits), total_messages=int(msgs),
        verdict_per_node=verdicts,
        halted_round=[int(h) if h >= 0 else None for h in halted_round],
        timed_out=status == _kernels.ST_TIMEOUT,
        build_false_iteration=int(bf) if bf >= 0 else None,
        build_false_round=int(bf) if bf >= 0 else None,
        bandwidth=B,
    )
