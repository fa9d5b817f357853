"""Anonymous network instances: port-labelled graphs plus token assignments.

Algorithm code only ever sees a node's degree and its local port numbers
``1..deg``.  The :class:`Topology` keeps the engine-private map from
``(node, port)`` to the ``(neighbor, neighbor_port)`` at the other end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .rng import randbits, stream


class InvalidParameterError(ValueError):
    """A generator precondition was violated."""


class InfeasibleAssignmentError(ValueError):
    """The requested token assignment cannot exist (e.g. too few values)."""


@dataclass(frozen=True)
class Topology:
    """Connected simple graph with per-node port labels.

    ``ports[v][i]`` is ``(u, j)``: port ``i + 1`` of ``v`` leads to ``u``,
    where the same edge is port ``j`` (1-based).
    """

    n: int
    ports: tuple[tuple[tuple[int, int], ...], ...]
    _dist: np.ndarray | None = field(default=None, repr=False, compare=False)

    def degree(self, v: int) -> int:
        return len(self.ports[v])

    def peer(self, v: int, port: int) -> tuple[int, int]:
        return self.ports[v][port - 1]

    def port_to(self, v: int, u: int) -> int:
        for i, (w, _) in enumerate(self.ports[v]):
            if w == u:
                return i + 1
        raise KeyError(f"{u} is not adjacent to {v}")

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted({(min(v, u), max(v, u)) for v in range(self.n) for u, _ in self.ports[v]})

    def neighbors(self, v: int) -> list[int]:
        return [u for u, _ in self.ports[v]]

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(p) for p in self.ports])
        indices = np.array([u for p in self.ports for u, _ in p], dtype=np.int64)
        return indptr, indices

    def distances(self) -> np.ndarray:
        if self._dist is None:
            indptr, indices = self.csr()
            object.__setattr__(self, "_dist", _kernels.apsp(self.n, indptr, indices))
        return self._dist

    def is_connected(self) -> bool:
        return bool((self.distances()[0] >= 0).all())

    def check(self) -> None:
        """Raise ``ValueError`` unless the port map is a valid simple graph."""
        for v in range(self.n):
            nbrs = [u for u, _ in self.ports[v]]
            if v in nbrs:
                raise ValueError(f"self-loop at {v}")
            if len(set(nbrs)) != len(nbrs):
                raise ValueError(f"multi-edge at {v}")
            for i, (u, j) in enumerate(self.ports[v]):
                if not (1 <= j <= len(self.ports[u])) or self.ports[u][j - 1] != (v, i + 1):
                    raise ValueError(f"port map not an involution at ({v}, {i + 1})")
        if not self.is_connected():
            raise ValueError("graph is not connected")


def from_edges(n: int, edges: Iterable[tuple[int, int]], gen: np.random.Generator | None = None) -> Topology:
    """Build a topology; port order is shuffled per node when ``gen`` is given."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        if u == v:
            raise InvalidParameterError(f"self-loop {u}")
        if v in adj[u]:
            raise InvalidParameterError(f"duplicate edge {u}-{v}")
        adj[u].append(v)
        adj[v].append(u)
    if gen is not None:
        for v in range(n):
            perm = gen.permutation(len(adj[v]))
            adj[v] = [adj[v][i] for i in perm]
    return _with_ports(n, adj)


def _with_ports(n: int, adj: Sequence[Sequence[int]]) -> Topology:
    index = [{u: i + 1 for i, u in enumerate(adj[v])} for v in range(n)]
    ports = tuple(tuple((u, index[u][v]) for u in adj[v]) for v in range(n))
    return Topology(n, ports)


def _ring_edges(n: int) -> list[tuple[int, int]]:
    return [(i, (i + 1) % n) for i in range(n)]


def make_ring(n: int, seed: int = 0) -> Topology:
    if n < 3:
        raise InvalidParameterError(f"ring needs n >= 3 (got n={n})")
    return from_edges(n, _ring_edges(n), stream(seed, "ports", "ring", n))


def make_path(n: int, seed: int = 0) -> Topology:
    if n < 1:
        raise InvalidParameterError(f"path needs n >= 1 (got n={n})")
    return from_edges(n, [(i, i + 1) for i in range(n - 1)], stream(seed, "ports", "path", n))


def make_random_connected(n: int, edge_prob: float, seed: int = 0) -> Topology:
    """Random spanning tree, then every other pair independently with ``edge_prob``."""
    if n < 1:
        raise InvalidParameterError(f"random graph needs n >= 1 (got n={n})")
    if not 0.0 <= edge_prob <= 1.0:
        raise InvalidParameterError(f"edge_prob must lie in [0, 1] (got {edge_prob})")
    gen = stream(seed, "random_connected", n)
    order = gen.permutation(n)
    edges = set()
    for i in range(1, n):
        parent = order[int(gen.integers(0, i))]
        a, b = int(order[i]), int(parent)
        edges.add((min(a, b), max(a, b)))
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in edges and gen.random() < edge_prob:
                edges.add((a, b))
    return from_edges(n, sorted(edges), stream(seed, "ports", "random", n))


def make_dumbbell(n_half: int, bridge_len: int, seed: int = 0) -> Topology:
    """Two ``n_half``-cliques joined by a path through ``bridge_len`` extra nodes."""
    if n_half < 1:
        raise InvalidParameterError(f"dumbbell needs n_half >= 1 (got {n_half})")
    if bridge_len < 0:
        raise InvalidParameterError(f"bridge_len must be >= 0 (got {bridge_len})")
    n = 2 * n_half + bridge_len
    left = list(range(n_half))
    bridge = list(range(n_half, n_half + bridge_len))
    right = list(range(n_half + bridge_len, n))
    edges = [(a, b) for clique in (left, right) for i, a in enumerate(clique) for b in clique[i + 1:]]
    chain = [left[-1], *bridge, right[0]]
    edges += list(zip(chain, chain[1:]))
    return from_edges(n, edges, stream(seed, "ports", "dumbbell", n))


def diameter(t: Topology) -> int:
    dist = t.distances()
    if (dist < 0).any():
        raise ValueError("diameter of a disconnected graph")
    return int(dist.max())


def eccentricities(t: Topology) -> np.ndarray:
    return t.distances().max(axis=1)


# ------------------------------------------------------------------ tokens


@dataclass(frozen=True)
class TokenAssignment:
    """Per-node ordered token lists; tokens are ints in ``[0, 2**L)``."""

    L: int
    lists: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.L < 1:
            raise InvalidParameterError("token length L must be >= 1")
        if not any(self.lists):
            raise InvalidParameterError("an assignment needs at least one token (k >= 1)")
        top = 1 << self.L
        for lst in self.lists:
            for tok in lst:
                if not 0 <= tok < top:
                    raise InvalidParameterError(f"token {tok} does not fit in L={self.L} bits")

    @property
    def n(self) -> int:
        return len(self.lists)

    @property
    def k(self) -> int:
        return sum(len(x) for x in self.lists)

    def tokens(self) -> list[int]:
        return [t for lst in self.lists for t in lst]


def _distinct_values(gen: np.random.Generator, count: int, L: int) -> list[int]:
    space = 1 << L
    if count > space:
        raise InfeasibleAssignmentError(f"cannot draw {count} distinct {L}-bit tokens (2^L = {space})")
    if space <= 4 * count:
        return [int(v) for v in gen.permutation(space)[:count]]
    seen: dict[int, None] = {}
    while len(seen) < count:
        seen.setdefault(randbits(gen, L), None)
    return list(seen)


def _place(gen, n: int, k: int, placement: str) -> list[int]:
    if placement == "random":
        return [int(v) for v in gen.integers(0, n, size=k)]
    if placement == "spread":
        perm = gen.permutation(n)
        return [int(perm[i % n]) for i in range(k)]
    if placement == "single":
        home = int(gen.integers(0, n))
        return [home] * k
    raise InvalidParameterError(f"unknown placement {placement!r}")


MODES = ("distinct", "with_duplicates", "adversarial_min_far", "uniform")


def assign_tokens(
    t: Topology,
    k: int,
    L: int,
    mode: str = "distinct",
    seed: int = 0,
    duplicates: int = 1,
    placement: str = "random",
) -> TokenAssignment:
    """Draw ``k`` tokens and distribute them over the nodes of ``t``.

    ``with_duplicates`` plants exactly ``duplicates`` equal pairs whose two
    copies sit on different nodes when ``n >= 2``; ``uniform`` draws values
    with replacement (collisions by chance, and forced when ``k > 2**L``).
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1 (got {k})")
    if L < 1:
        raise InvalidParameterError(f"L must be >= 1 (got {L})")
    if mode not in MODES:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    gen = stream(seed, "tokens", mode, k, L)
    n = t.n
    lists: list[list[int]] = [[] for _ in range(n)]

    if mode == "uniform":
        for tok, v in zip([randbits(gen, L) for _ in range(k)], _place(gen, n, k, placement)):
            lists[v].append(tok)
    elif mode == "with_duplicates":
        if not 1 <= duplicates or 2 * duplicates > k:
            raise InvalidParameterError(f"need 1 <= duplicates <= k/2 (got {duplicates}, k={k})")
        values = _distinct_values(gen, k - duplicates, L)
        singles = values[duplicates:]
        for v, tok in zip(_place(gen, n, len(singles), placement), singles):
            lists[v].append(tok)
        for tok in values[:duplicates]:
            if n >= 2:
                a, b = (int(x) for x in gen.choice(n, size=2, replace=False))
            else:
                a = b = 0
            lists[a].append(tok)
            lists[b].append(tok)
        for lst in lists:
            order = gen.permutation(len(lst))
            lst[:] = [lst[i] for i in order]
    else:
        values = _distinct_values(gen, k, L)
        homes = _place(gen, n, k, placement)
        if mode == "adversarial_min_far":
            far = int(np.flatnonzero(eccentricities(t) == eccentricities(t).max())[0])
            homes[int(np.argmin(values))] = far
        for v, tok in zip(homes, values):
            lists[v].append(tok)
    return TokenAssignment(L, tuple(tuple(x) for x in lists))


# --------------------------------------------------------- impossibility pair


@dataclass(frozen=True)
class ImpossibilityPair:
    """Ring ``C_n`` with tokens ``1..n`` and ring ``C_2n`` with each value twice.

    ``correspondence[b]`` is the ``C_n`` node whose local view node ``b`` of
    ``C_2n`` mirrors (``v'_i`` is node ``i-1``, ``u_i`` is node ``n+i-1``).
    """

    small: Topology
    small_tokens: TokenAssignment
    big: Topology
    big_tokens: TokenAssignment
    correspondence: tuple[int, ...]


def _oriented_ring(n: int, reverse: bool = False) -> Topology:
    # port 1 = clockwise successor, port 2 = predecessor
    adj = [[(v + 1) % n, (v - 1) % n] for v in range(n)]
    if reverse:
        adj = [a[::-1] for a in adj]
    return _with_ports(n, adj)


def make_impossibility_pair(n: int, mismatched: bool = False) -> ImpossibilityPair:
    """The two indistinguishable rings; ``mismatched`` flips the big ring's ports."""
    if n < 3:
        raise InvalidParameterError(f"impossibility pair needs n >= 3 (got n={n})")
    L = max(1, math.ceil(math.log2(n + 1)))
    small = _oriented_ring(n)
    small_tokens = TokenAssignment(L, tuple((i + 1,) for i in range(n)))
    big = _oriented_ring(2 * n, reverse=mismatched)
    big_tokens = TokenAssignment(L, tuple((i % n + 1,) for i in range(2 * n)))
    corr = tuple(i % n for i in range(2 * n))
    return ImpossibilityPair(small, small_tokens, big, big_tokens, corr)


# ------------------------------------------------------------- text format

FORMAT_TAG = "# tokcol-instance v1"


def _hex_width(L: int) -> int:
    return (L + 3) // 4


def emit_instance(t: Topology, a: TokenAssignment) -> str:
    """Plain-text form: ``n k L``; ``u v pu pv`` per edge; ``v: tok ...`` per node."""
    if a.n != t.n:
        raise ValueError("assignment and topology disagree on n")
    w = _hex_width(a.L)
    lines = [FORMAT_TAG, f"{t.n} {a.k} {a.L}"]
    for u, v in t.edges:
        lines.append(f"{u} {v} {t.port_to(u, v)} {t.port_to(v, u)}")
    for v, lst in enumerate(a.lists):
        toks = " ".join(format(tok, f"0{w}x") for tok in lst)
        lines.append(f"{v}: {toks}".rstrip())
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> tuple[Topology, TokenAssignment]:
    header = None
    edges: list[tuple[int, int, int | None, int | None]] = []
    lists: dict[int, tuple[int, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("# tokcol-instance") and line != FORMAT_TAG:
            raise ValueError(f"unsupported instance format {line!r}")
        if not line or line.startswith("#"):
            continue
        try:
            if header is None:
                n, k, L = (int(x) for x in line.split())
                header = (n, k, L)
            elif ":" in line:
                node, _, rest = line.partition(":")
                lists[int(node)] = tuple(int(tok, 16) for tok in rest.split())
            else:
                parts = [int(x) for x in line.split()]
                if len(parts) == 2:
                    edges.append((parts[0], parts[1], None, None))
                elif len(parts) == 4:
                    edges.append((parts[0], parts[1], parts[2], parts[3]))
                else:
                    raise ValueError("edge line needs 2 or 4 integers")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}: {raw!r}") from None
    if header is None:
        raise ValueError("missing 'n k L' header")
    n, k, L = header
    slots: list[dict[int, int]] = [{} for _ in range(n)]
    unlabeled: list[list[int]] = [[] for _ in range(n)]
    for u, v, pu, pv in edges:
        for a_, b_, p in ((u, v, pu), (v, u, pv)):
            if p is None:
                unlabeled[a_].append(b_)
            elif p in slots[a_]:
                raise ValueError(f"port {p} of node {a_} used twice")
            else:
                slots[a_][p] = b_
    adj = []
    for v in range(n):
        deg = len(slots[v]) + len(unlabeled[v])
        if any(p > deg or p < 1 for p in slots[v]):
            raise ValueError(f"node {v} has port labels outside 1..{deg}")
        row = [slots[v].get(p) for p in range(1, deg + 1)]
        free = iter(unlabeled[v])
        row = [u if u is not None else next(free) for u in row]
        adj.append(row)
    t = _with_ports(n, adj)
    t.check()
    a = TokenAssignment(L, tuple(lists.get(v, ()) for v in range(n)))
    if a.k != k:
        raise ValueError(f"header says k={k} but {a.k} tokens listed")
    return t, a
