"""Message tuple, marker values, and the bit-accounting wire layout.

Wire layout (sizes in bits; see FORMATS.md for the full table)::

    res      2                      none / AllDistinct / Collision
    build    1
    ischild  1
    f        1
    cnt      1 + ceil(log2(n+1))    presence flag + value
    rid      2 + L                  tag + value   (2 for the empty-input sentinel)
             2 + wpos + w*B         tag + position + w pieces   (pipelined)
    ele      2                      tag only for TOP / BOT
             2 + L                  one token
             2 + wcap + c*L         packed: count field + c tokens
             2 + w*B                pipelined: w token pieces
    tcnt     1 + ceil(log2(k+1))    randomized only
    hs       2 + wpos + w*B         randomized only (hash-seed window)
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

TOP_ID = math.inf
"""Identifier of a node with no input token; larger than every token."""


class Mark(enum.Enum):
    TOP = "T"  # tokens may still be pending below
    BOT = "B"  # subtree fully drained

    def __repr__(self):
        return f"Mark.{self.name}"


class Verdict(enum.Enum):
    ALL_DISTINCT = "AllDistinct"
    COLLISION = "Collision"

    def __str__(self):
        return self.value


class RoundMessage(NamedTuple):
    res: Verdict | None
    build: bool
    rid: object  # int | TOP_ID (single shot), tuple[int, ...] | None (window)
    ischild: bool
    f: bool
    cnt: int | None
    ele: object  # Mark | tuple[int, ...]
    pos: int | None = None  # first-piece position of a pipelined rid window
    tcnt: int | None = None
    hs: tuple | None = None
    hs_pos: int | None = None


def clog2(x: int) -> int:
    """``ceil(log2(x))`` for positive integers, exact for big ints."""
    if x < 1:
        raise ValueError("clog2 of non-positive value")
    return (x - 1).bit_length()


def count_width(n: int) -> int:
    return clog2(n + 1)


def pieces_per_token(L: int, B: int) -> int:
    return -(-L // B)


def pieces_per_iteration(M: int, B: int) -> int:
    """``ceil(log2(M) / B)``, floored at one piece."""
    return max(1, -(-clog2(M) // B)) if M > 1 else 1


def _pack_fields(n: int, L: int, cap: int) -> int:
    header = 2 + 1 + 1 + 1 + (1 + count_width(n)) + (2 + L)
    return header + 2 + count_width(cap)


def pack_capacity(n: int, L: int, B: int) -> int:
    """Largest token count per packed message that keeps it within ``B`` bits."""
    best = 1
    cap = 1
    while _pack_fields(n, L, cap) + cap * L <= B:
        best = cap
        cap += 1
    return best


def default_bandwidth(n: int, L: int, pack: bool = False) -> int:
    """Exact size of the largest legal single-shot message for ``(n, L)``.

    With packing the budget doubles, which leaves room for
    ``Theta(log n / L)`` tokens per message when ``L`` is small.
    """
    base = 2 + 1 + 1 + 1 + (1 + count_width(n)) + (2 + L) + (2 + L)
    return 2 * base if pack else base


@dataclass(frozen=True)
class Layout:
    """Bit sizes for one run's messages.

    ``B`` is only needed for pipelined windows; ``pack_cap > 0`` switches
    the single-shot ``ele`` slot to the packed form.
    """

    n: int
    L: int
    B: int | None = None
    m_rid: int = 1
    pack_cap: int = 0
    k: int = 0
    m_hs: int = 0

    def fields(self, m: RoundMessage) -> dict[str, int]:
        """Per-field bit sizes of ``m``, in wire order."""
        out = {"res": 2, "build": 1, "ischild": 1, "f": 1, "cnt": 1 + count_width(self.n)}
        if m.pos is None:
            out["rid"] = 2 if m.rid == TOP_ID else 2 + self.L
            if isinstance(m.ele, Mark):
                out["ele"] = 2
            elif self.pack_cap:
                out["ele"] = 2 + count_width(self.pack_cap) + len(m.ele) * self.L
            else:
                out["ele"] = 2 + self.L * len(m.ele)
        else:
            wpos = clog2(self.m_rid + 1)
            out["rid"] = 2 + wpos + (0 if m.rid is None else len(m.rid) * self.B)
            out["ele"] = 2 if isinstance(m.ele, Mark) else 2 + len(m.ele) * self.B
        if self.m_hs:
            out["tcnt"] = 1 + count_width(self.k)
            out["hs"] = 2 if m.hs is None else 2 + clog2(self.m_hs + 1) + len(m.hs) * self.B
        return out

    def bits(self, m: RoundMessage) -> int:
        return sum(self.fields(m).values())


def message_bits(m: RoundMessage, n: int, L: int, **layout) -> int:
    """Encoded size of ``m``; keyword arguments are :class:`Layout` fields."""
    return Layout(n, L, **layout).bits(m)
