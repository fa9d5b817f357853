"""Pipelined variant for tokens longer than one message.

Identifiers and convergecast tokens travel as windows of ``B``-bit pieces,
most significant piece first.  A node that adopts a smaller identifier
resumes sending from the position where it learned it instead of
restarting, which keeps identifier broadcast pipelined across hops.

Tokens are left-padded with zeros to ``M * B`` bits so every piece is
exactly ``B`` bits; zero padding on the high side preserves ordering.
"""
from __future__ import annotations

from collections import deque
from typing import Sequence

from .algo_small import KNOWLEDGE, NodeSnapshot, decide
from .messages import TOP_ID, Mark, RoundMessage, Verdict, pieces_per_iteration, pieces_per_token


def split_pieces(value: int, M: int, B: int, lo: int, hi: int) -> tuple[int, ...]:
    """Pieces ``lo..hi`` (1-based, inclusive) of ``value`` viewed as ``M`` pieces."""
    mask = (1 << B) - 1
    return tuple((value >> ((M - j) * B)) & mask for j in range(lo, hi + 1))


def splice(prefix: int, M: int, B: int, lo: int, window: Sequence[int]) -> int:
    """Keep pieces ``1..lo-1`` of ``prefix``, write ``window`` from ``lo``, pad the rest with ones."""
    total = M * B
    hi = lo + len(window) - 1
    keep_bits = (lo - 1) * B
    if prefix == TOP_ID:
        prefix = (1 << total) - 1
    head = prefix >> (total - keep_bits) if keep_bits else 0
    for piece in window:
        head = (head << B) | piece
    tail_bits = (M - hi) * B
    return (head << tail_bits) | ((1 << tail_bits) - 1)


class LargeNode:
    """Per-node automaton of the pipelined algorithm.

    ``L``/``B`` size the identifier channel; ``ele_bits`` sizes the token
    channel (defaults to ``L``; the randomized variant overrides it).
    """

    kind = "det_large"

    def __init__(self, tokens: Sequence[int], degree: int, L: int, B: int,
                 knowledge: str = "know_n", n: int | None = None, k: int | None = None,
                 ele_bits: int | None = None, rid: object = None):
        if L < 1 or B < 1:
            raise ValueError("L and B must be positive")
        if knowledge not in KNOWLEDGE:
            raise ValueError(f"unknown knowledge mode {knowledge!r}")
        self.degree = degree
        self.knowledge = knowledge
        self.n = n
        self.k = k
        self.L = L
        self.B = B
        self.M = pieces_per_token(L, B)
        self.P = pieces_per_iteration(self.M, B)
        self.set_ele_bits(L if ele_bits is None else ele_bits)

        self.build = True
        self.x: deque[int] = deque(tokens)
        if rid is None:
            rid = min(tokens) if tokens else TOP_ID
        self.rid = rid
        self.p: int | None = None
        self.chi: frozenset[int] = frozenset()
        self.f = False
        self.cnt: int | None = None
        self.ele: object = Mark.TOP
        self.res: Verdict | None = None
        self.sent = 0
        self.decided = False
        self.quit = False

        self.nb_rid: list[object] = [TOP_ID] * degree
        self.nb_sent = [0] * degree
        self.nb_pos = [0] * degree  # position field of the last window per port
        self.in_buf = [0] * degree
        self.in_cnt = [0] * degree  # sente_i
        self.ele0: int | None = None
        self.sente0 = 0

    def set_ele_bits(self, bits: int) -> None:
        self.ele_bits = bits
        self.Me = pieces_per_token(bits, self.B)
        self.Pe = pieces_per_iteration(self.Me, self.B)

    # -- send side ------------------------------------------------------

    def rid_window(self) -> tuple[int, tuple[int, ...] | None, int]:
        lo = self.sent + 1
        hi = min(self.sent + self.P, self.M)
        window = None if self.rid == TOP_ID else split_pieces(self.rid, self.M, self.B, lo, hi)
        return self.sent, window, hi

    def compose(self, port: int) -> RoundMessage:
        pos, window, _ = self.rid_window()
        return RoundMessage(self.res, self.build, window, self.p == port, self.f, self.cnt,
                            self.ele, pos=pos)

    def base_message(self, pos: int, window) -> RoundMessage:
        return RoundMessage(self.res, self.build, window, False, self.f, self.cnt, self.ele, pos=pos)

    def outbox(self) -> list[RoundMessage]:
        pos, window, hi = self.rid_window()
        base = self.base_message(pos, window)
        out = [base] * self.degree
        if self.p is not None:
            out[self.p - 1] = base._replace(ischild=True)
        self.sent = hi
        return out

    # -- receive side ---------------------------------------------------

    def absorb_pieces(self, msgs: Sequence[RoundMessage]) -> None:
        M, P, B = self.M, self.P, self.B
        for i, m in enumerate(msgs):
            lo = m.pos + 1
            hi = min(m.pos + P, M)
            self.nb_sent[i] = hi
            self.nb_pos[i] = m.pos
            if m.rid is None:
                self.nb_rid[i] = TOP_ID
            elif m.rid:
                self.nb_rid[i] = splice(self.nb_rid[i], M, B, lo, m.rid)

    def receive(self, msgs: Sequence[RoundMessage]) -> None:
        self.decided = False
        self.absorb_pieces(msgs)
        build = self.build
        for m in msgs:
            if m.res is not None:
                self.res = m.res
            build = build and m.build
        self.build = build
        if build:
            self.bfs_step(msgs)
        else:
            self.detect_step(msgs)

    def bfs_step(self, msgs: Sequence[RoundMessage]) -> None:
        ids = self.nb_rid
        if ids:
            lowest = min(ids)
            if lowest < self.rid:
                if self.p is not None and ids[self.p - 1] == lowest:
                    j = self.p
                else:
                    j = ids.index(lowest) + 1
                self.rid = ids[j - 1]
                self.sent = self.nb_pos[j - 1]
                self.p = j
                self.f = False
            elif (self.rid != TOP_ID and all(r == self.rid for r in ids) and self.sent == self.M
                  and all(s == self.M for s in self.nb_sent)):
                self.chi = frozenset(i for i, m in enumerate(msgs, 1) if m.ischild)
                if all(msgs[i - 1].f for i in self.chi):
                    self.f = True
        elif self.sent == self.M:
            self.chi = frozenset()
            self.f = True
        if self.p is None and self.f:
            self.build = False

    def children(self, msgs: Sequence[RoundMessage]) -> frozenset[int]:
        rid, M = self.rid, self.M
        return frozenset(
            i for i, m in enumerate(msgs, 1)
            if not m.build and m.ischild and self.nb_sent[i - 1] == M and self.nb_rid[i - 1] == rid
        )

    def collect(self, msgs: Sequence[RoundMessage], chi) -> None:
        """Reassemble incoming token windows; append tokens once complete."""
        Me, Pe, B = self.Me, self.Pe, self.B
        for i in sorted(chi):
            window = msgs[i - 1].ele
            if isinstance(window, Mark):
                continue
            s = self.in_cnt[i - 1]
            hi = min(s + Pe, Me)
            if len(window) != hi - s:
                raise AssertionError(f"token window of {len(window)} pieces, expected {hi - s}")
            buf = self.in_buf[i - 1]
            for piece in window:
                buf = (buf << B) | piece
            if hi == Me:
                self.x.append(buf)
                self.in_buf[i - 1] = 0
                self.in_cnt[i - 1] = 0
            else:
                self.in_buf[i - 1] = buf
                self.in_cnt[i - 1] = hi

    def next_ele(self, drained: bool) -> object:
        Me, Pe, B = self.Me, self.Pe, self.B
        if self.sente0 != 0:
            lo = self.sente0 + 1
            hi = min(self.sente0 + Pe, Me)
            self.sente0 = hi % Me
            return split_pieces(self.ele0, Me, B, lo, hi)
        if self.x:
            self.ele0 = self.x.popleft()
            hi = min(Pe, Me)
            self.sente0 = hi % Me
            return split_pieces(self.ele0, Me, B, 1, hi)
        return Mark.BOT if drained else Mark.TOP

    def detect_step(self, msgs: Sequence[RoundMessage]) -> None:
        self.chi = chi = self.children(msgs)
        self.collect(msgs, chi)
        if any(m.build for m in msgs) or self.sent != self.M:
            return
        self.quit = True
        if all(msgs[i - 1].cnt is not None for i in chi):
            self.cnt = 1 + sum(msgs[i - 1].cnt for i in chi)
        drained = all(msgs[i - 1].ele is Mark.BOT for i in chi)
        if self.p is not None:
            self.ele = self.next_ele(drained)
        elif self.cnt is not None and drained and self.res is None:
            verdict = decide(self.knowledge, self.cnt, self.x, self.n, self.k)
            if verdict is not None:
                self.res = verdict
                self.decided = True

    # -- observation ----------------------------------------------------

    def snapshot(self, halted: bool = False) -> NodeSnapshot:
        window = not isinstance(self.ele, Mark)
        transit = (self.ele0,) if window and not halted else ()
        return NodeSnapshot(
            self.rid, self.p, tuple(sorted(self.chi)), self.f, self.build, self.cnt,
            self.ele, tuple(self.x), self.res, self.decided, self.quit, halted,
            sent=self.sent, sente0=self.sente0, ele0=self.ele0,
            transit=transit, final=bool(transit) and self.sente0 == 0,
        )


def init_node_large(input_tokens: Sequence[int], degree: int, L: int, B: int, **kw) -> LargeNode:
    return LargeNode(input_tokens, degree, L, B, **kw)
