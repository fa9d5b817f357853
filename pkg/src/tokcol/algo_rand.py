"""Randomized token collision with random identifiers and hashed tokens.

Token holders draw ``c * ceil(log2 K)``-bit identifiers (``K`` is whichever
of ``n``/``k`` the nodes know); the pipelined BFS elects the minimum.  Each
root then counts its tree (nodes and tokens), draws a hash seed and floods
``seed || token_count`` down the tree.  Nodes hash their tokens to
``ceil(log2 q)`` bits and convergecast the hashes; the root decides.

Error is one-sided: real duplicates always hash equal, and more than one
tree always fails the size check, so AllDistinct is never wrong.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sympy import isprime

from .algo_large import LargeNode, split_pieces
from .algo_small import NodeSnapshot, has_duplicate
from .messages import TOP_ID, Mark, RoundMessage, Verdict, clog2, pieces_per_iteration, pieces_per_token
from .rng import randbelow, randbits

SEED_BITS = 64
COUNT_BITS = 32
HEADER_BITS = SEED_BITS + COUNT_BITS


@dataclass(frozen=True)
class HashSpec:
    """``h(x) = (x mod modulus) mod q`` for a random prime ``modulus``."""

    modulus: int
    q: int
    seed: int

    def __call__(self, x: int) -> int:
        return (x % self.modulus) % self.q

    @property
    def out_bits(self) -> int:
        return max(1, clog2(self.q))


def hash_range(k: int, beta: float) -> int:
    return max(1, math.ceil(k ** (2 + beta)))


def build_hash(L: int, k: int, beta: float, seed: int) -> HashSpec:
    """Draw a uniform prime from ``[T, 2T]``, ``T = max(64, q * max(1, L))``.

    Two distinct ``L``-bit tokens agree modulo the prime only if it divides
    their difference, which has fewer than ``L / log2 T`` prime factors of
    that size, against roughly ``T / (2 ln T)`` primes in the window.
    """
    if k < 1 or beta < 0:
        raise ValueError("need k >= 1 and beta >= 0")
    q = hash_range(k, beta)
    T = max(64, q * max(1, L))
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed & ((1 << 64) - 1))))
    lo, hi = T, 2 * T
    while True:
        for _ in range(64 * max(1, hi.bit_length())):
            cand = lo + randbelow(gen, hi - lo + 1)
            if isprime(cand):
                return HashSpec(cand, q, seed)
        lo, hi = hi, 2 * hi  # unreachable in practice (Bertrand)


def id_bits(k: int, c: int) -> int:
    return c * max(1, clog2(k))


def sample_identifier(gen: np.random.Generator, k: int, c: int = 4) -> int:
    """Uniform identifier of ``c * ceil(log2 k)`` bits."""
    if k < 1 or c < 3:
        raise ValueError("need k >= 1 and c >= 3")
    return randbits(gen, id_bits(k, c))


class RandNode(LargeNode):
    """Pipelined election on random identifiers, then a hashed convergecast."""

    kind = "randomized"

    def __init__(self, tokens: Sequence[int], degree: int, L: int, B: int, gen: np.random.Generator,
                 knowledge: str = "know_n", n: int | None = None, k: int | None = None,
                 c: int = 4, beta: float = 2.0):
        if knowledge == "none":
            raise ValueError("randomized runs need know_n or know_k")
        size_bound = n if knowledge == "know_n" else k
        self.id_len = id_bits(size_bound, c)
        rid = sample_identifier(gen, size_bound, c) if tokens else TOP_ID
        super().__init__(tokens, degree, self.id_len, B, knowledge=knowledge, n=n, k=k,
                         ele_bits=1, rid=rid)
        self.token_len = L
        self.beta = beta
        self.gen = gen
        self.own_tokens = len(tokens)
        self.tcnt: int | None = None
        self.hash: HashSpec | None = None
        self.Mh = pieces_per_token(HEADER_BITS, B)
        self.Ph = pieces_per_iteration(self.Mh, B)
        self.hs_pieces: list[int] = []  # header pieces known, most significant first
        self.hs_sent = 0  # header pieces forwarded

    @property
    def phase(self) -> str:
        if self.res is not None:
            return "done"
        if self.build:
            return "elect"
        if self.hash is None:
            return "seed_broadcast"
        return "aggregate"

    def base_message(self, pos: int, window) -> RoundMessage:
        hs = None
        hs_pos = None
        if len(self.hs_pieces) > self.hs_sent:
            hi = min(self.hs_sent + self.Ph, len(self.hs_pieces))
            hs = tuple(self.hs_pieces[self.hs_sent:hi])
            hs_pos = self.hs_sent
            self.hs_sent = hi
        return RoundMessage(self.res, self.build, window, False, self.f, self.cnt, self.ele,
                            pos=pos, tcnt=self.tcnt, hs=hs, hs_pos=hs_pos)

    def install_hash(self, header: int) -> None:
        seed = header >> COUNT_BITS
        count = header & ((1 << COUNT_BITS) - 1)
        self.hash = build_hash(self.token_len, max(1, count), self.beta, seed)
        self.set_ele_bits(self.hash.out_bits)
        self.x.extend([self.hash(t) for t in [self.x.popleft() for _ in range(len(self.x))]])

    def absorb_header(self, msgs: Sequence[RoundMessage]) -> None:
        if self.p is None or self.hash is not None:
            return
        m = msgs[self.p - 1]
        if not m.hs or m.hs_pos != len(self.hs_pieces):
            return
        self.hs_pieces.extend(m.hs)
        if len(self.hs_pieces) == self.Mh:
            header = 0
            for piece in self.hs_pieces:
                header = (header << self.B) | piece
            self.install_hash(header)

    def detect_step(self, msgs: Sequence[RoundMessage]) -> None:
        self.chi = chi = self.children(msgs)
        if self.hash is not None:
            self.collect(msgs, chi)
        self.absorb_header(msgs)
        if any(m.build for m in msgs) or self.sent != self.M:
            return
        self.quit = True
        if all(msgs[i - 1].cnt is not None for i in chi):
            self.cnt = 1 + sum(msgs[i - 1].cnt for i in chi)
            self.tcnt = self.own_tokens + sum(msgs[i - 1].tcnt for i in chi)
        if self.p is None and self.hash is None and self.cnt is not None:
            seed = randbits(self.gen, SEED_BITS)
            header = (seed << COUNT_BITS) | min(self.tcnt, (1 << COUNT_BITS) - 1)
            self.hs_pieces = list(split_pieces(header, self.Mh, self.B, 1, self.Mh))
            self.install_hash(header)
        if self.hash is None:
            self.ele = Mark.TOP
            return
        drained = all(msgs[i - 1].ele is Mark.BOT for i in chi)
        if self.p is not None:
            self.ele = self.next_ele(drained)
        elif drained and self.res is None:
            if self.knowledge == "know_n":
                ok = self.cnt == self.n
            else:
                ok = len(self.x) == self.k
            self.res = Verdict.ALL_DISTINCT if ok and not has_duplicate(self.x) else Verdict.COLLISION
            self.decided = True

    def snapshot(self, halted: bool = False) -> NodeSnapshot:
        return super().snapshot(halted)._replace(phase=self.phase)


def sampled_id_collision_free(ids: Sequence[int]) -> bool:
    return len(set(ids)) == len(ids)
