"""Deterministic token-collision automaton for tokens that fit in one message.

Each node first grows min-identifier BFS trees (identifier = smallest own
token), then counts tree sizes and convergecasts its tokens to the root,
which decides.  Optionally tokens are packed several per message.
"""
from __future__ import annotations

from collections import deque
from typing import NamedTuple, Sequence

from .messages import TOP_ID, Mark, RoundMessage, Verdict

KNOWLEDGE = ("know_n", "know_k", "none")


class NodeSnapshot(NamedTuple):
    """End-of-round view of one node, as recorded in full traces.

    ``transit`` holds tokens that have left ``x`` but not yet reached the
    parent; ``final`` marks whether they complete delivery next round.
    """

    rid: object
    p: int | None
    chi: tuple[int, ...]
    f: bool
    build: bool
    cnt: int | None
    ele: object
    x: tuple[int, ...]
    res: Verdict | None
    decided: bool
    quit: bool
    halted: bool = False
    sent: int | None = None
    sente0: int | None = None
    ele0: int | None = None
    transit: tuple[int, ...] = ()
    final: bool = False
    phase: str | None = None


def has_duplicate(tokens) -> bool:
    s = sorted(tokens)
    return any(a == b for a, b in zip(s, s[1:]))


def decide(knowledge: str, cnt: int, x: Sequence[int], n: int | None, k: int | None) -> Verdict | None:
    """Root decision rule; ``None`` when nodes know neither ``n`` nor ``k``."""
    if knowledge == "none":
        return None
    if knowledge == "know_n":
        ok = cnt == n
    else:
        ok = len(x) == k
    return Verdict.ALL_DISTINCT if ok and not has_duplicate(x) else Verdict.COLLISION


class SmallNode:
    """Per-node state and transition function.

    ``n`` and ``k`` are consulted only according to ``knowledge``.
    ``pack_cap`` of 0 means one token per message.
    """

    kind = "det_small"

    def __init__(self, tokens: Sequence[int], degree: int, knowledge: str = "know_n",
                 n: int | None = None, k: int | None = None, pack_cap: int = 0):
        if knowledge not in KNOWLEDGE:
            raise ValueError(f"unknown knowledge mode {knowledge!r}")
        self.degree = degree
        self.knowledge = knowledge
        self.n = n
        self.k = k
        self.pack_cap = pack_cap
        self.build = True
        self.x: deque[int] = deque(tokens)
        self.rid = min(tokens) if tokens else TOP_ID
        self.p: int | None = None
        self.chi: frozenset[int] = frozenset()
        self.f = False
        self.cnt: int | None = None
        self.ele: object = Mark.TOP
        self.res: Verdict | None = None
        self.decided = False
        self.quit = False

    # -- send side ------------------------------------------------------

    def compose(self, port: int) -> RoundMessage:
        return RoundMessage(self.res, self.build, self.rid, self.p == port, self.f, self.cnt, self.ele)

    def outbox(self) -> list[RoundMessage]:
        base = RoundMessage(self.res, self.build, self.rid, False, self.f, self.cnt, self.ele)
        out = [base] * self.degree
        if self.p is not None:
            out[self.p - 1] = base._replace(ischild=True)
        return out

    # -- receive side ---------------------------------------------------

    def receive(self, msgs: Sequence[RoundMessage]) -> None:
        self.decided = False
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
        if msgs:
            ids = [m.rid for m in msgs]
            lowest = min(ids)
            if lowest < self.rid:
                j = ids.index(lowest) + 1
                self.rid, self.p, self.f = lowest, j, False
            elif self.rid != TOP_ID and all(r == self.rid for r in ids):
                self.chi = frozenset(i for i, m in enumerate(msgs, 1) if m.ischild)
                if all(msgs[i - 1].f for i in self.chi):
                    self.f = True
        else:
            self.chi = frozenset()
            self.f = True
        if self.p is None and self.f:
            self.build = False

    def detect_step(self, msgs: Sequence[RoundMessage]) -> None:
        rid = self.rid
        self.chi = chi = frozenset(
            i for i, m in enumerate(msgs, 1) if not m.build and m.ischild and m.rid == rid
        )
        for i in sorted(chi):
            e = msgs[i - 1].ele
            if not isinstance(e, Mark):
                self.x.extend(e)
        if any(m.build for m in msgs):
            return
        self.quit = True
        if all(msgs[i - 1].cnt is not None for i in chi):
            self.cnt = 1 + sum(msgs[i - 1].cnt for i in chi)
        drained = all(msgs[i - 1].ele is Mark.BOT for i in chi)
        if self.p is not None:
            if self.x:
                self.ele = self.eject()
            elif drained:
                self.ele = Mark.BOT
            else:
                self.ele = Mark.TOP
        elif self.cnt is not None and drained and self.res is None:
            verdict = decide(self.knowledge, self.cnt, self.x, self.n, self.k)
            if verdict is not None:
                self.res = verdict
                self.decided = True

    def eject(self) -> tuple[int, ...]:
        """Remove the next batch of tokens (FIFO) for the parent."""
        take = min(max(1, self.pack_cap), len(self.x))
        return tuple(self.x.popleft() for _ in range(take))

    # -- observation ----------------------------------------------------

    def snapshot(self, halted: bool = False) -> NodeSnapshot:
        transit = () if halted or isinstance(self.ele, Mark) else tuple(self.ele)
        return NodeSnapshot(
            self.rid, self.p, tuple(sorted(self.chi)), self.f, self.build, self.cnt,
            self.ele, tuple(self.x), self.res, self.decided, self.quit, halted,
            transit=transit, final=bool(transit),
        )


def init_node(input_tokens: Sequence[int], degree: int, **kw) -> SmallNode:
    return SmallNode(input_tokens, degree, **kw)


def pack_eject(node: SmallNode) -> list[int]:
    return list(node.eject())
