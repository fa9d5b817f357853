"""Ground truth, identifier-induced graphs, and post-hoc trace checkers.

The checkers read recorded traces plus the topology (they may see through
anonymity: parent ports are resolved to global node indices) and report
every violation with the first counterexample per invariant.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .engine import RunTrace, serialize_state
from .messages import TOP_ID, Verdict
from .topology import TokenAssignment, Topology

# ------------------------------------------------------------------ oracle


def oracle_collision(a: TokenAssignment | Sequence[int]) -> Verdict:
    """Collision iff some value occurs twice in the global multiset."""
    values = a.tokens() if isinstance(a, TokenAssignment) else list(a)
    if not values:
        raise ValueError("oracle needs at least one token")
    values.sort()
    for i in range(1, len(values)):
        if values[i] == values[i - 1]:
            return Verdict.COLLISION
    return Verdict.ALL_DISTINCT


# -------------------------------------------------- identifier-induced graph


@dataclass(frozen=True)
class IIGraph:
    """Parent edges ``v -> parent[v]`` in global indices, with rids."""

    parent: tuple
    rid: tuple

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(v, p) for v, p in enumerate(self.parent) if p is not None]

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for v, p in enumerate(self.parent):
            if p is not None:
                out[p].append(v)
        return out

    def roots(self) -> list[int]:
        return [v for v, p in enumerate(self.parent) if p is None]

    def cycle_node(self) -> int | None:
        """Some node on a directed cycle, or ``None`` for a forest."""
        state = [0] * self.n  # 0 new, 1 on stack, 2 done
        for s in range(self.n):
            path = []
            v = s
            while v is not None and state[v] == 0:
                state[v] = 1
                path.append(v)
                v = self.parent[v]
            if v is not None and state[v] == 1:
                return v
            for w in path:
                state[w] = 2
        return None

    def _descend(self, r: int, same_rid: bool) -> list[int]:
        kids = self.children()
        out, stack, seen = [], [r], {r}
        while stack:
            v = stack.pop()
            out.append(v)
            for c in kids[v]:
                if c not in seen and (not same_rid or self.rid[c] == self.rid[r]):
                    seen.add(c)
                    stack.append(c)
        return out

    def subtree(self, r: int) -> list[int]:
        return self._descend(r, False)

    def id_subtree(self, r: int) -> list[int]:
        """Nodes reachable from ``r`` downward through nodes sharing ``r``'s rid."""
        return self._descend(r, True)


def extract_iig(snapshot: Sequence, t: Topology) -> IIGraph:
    parent = tuple(None if s.p is None else t.peer(v, s.p)[0] for v, s in enumerate(snapshot))
    return IIGraph(parent, tuple(s.rid for s in snapshot))


# ------------------------------------------------------------------ report

REPORT_TAG = "# tokcol-invariant-report v1"

INVARIANTS = (
    "rid_monotone",
    "path_nonincreasing",
    "forest",
    "subtree_connected",
    "conservation",
    "no_drop_on_distinct",
    "cnt_stable",
    "cnt_correct",
    "exactly_once",
    "single_tree_on_distinct",
    "chi_stable",
    "halt_safety",
    "verdict_agreement",
    "verdict_correct",
)


@dataclass
class Violation:
    invariant: str
    iteration: int
    nodes: tuple
    detail: str

    def __str__(self):
        return f"iteration={self.iteration} nodes={list(self.nodes)} {self.detail}"


@dataclass
class InvariantReport:
    checks: dict = field(default_factory=lambda: {name: 0 for name in INVARIANTS})
    violations: dict = field(default_factory=lambda: {name: [] for name in INVARIANTS})
    truncated: bool = False
    iterations: int = 0

    def fail(self, name: str, iteration: int, nodes, detail: str) -> None:
        self.violations[name].append(Violation(name, iteration, tuple(nodes), detail))

    def tick(self, name: str, count: int = 1) -> None:
        self.checks[name] += count

    @property
    def failures(self) -> int:
        return sum(len(v) for v in self.violations.values())

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def failed(self) -> list[str]:
        return [name for name in INVARIANTS if self.violations[name]]

    def first(self, name: str) -> Violation | None:
        v = self.violations[name]
        return v[0] if v else None

    def merge(self, other: "InvariantReport") -> None:
        for name in INVARIANTS:
            self.checks[name] += other.checks[name]
            self.violations[name].extend(other.violations[name])
        self.truncated = self.truncated or other.truncated
        self.iterations += other.iterations

    def to_text(self) -> str:
        lines = [
            REPORT_TAG,
            f"status: {'pass' if self.ok else 'fail'}",
            f"truncated: {str(self.truncated).lower()}",
            f"iterations: {self.iterations}",
        ]
        for name in INVARIANTS:
            v = self.violations[name]
            state = "pass" if not v else "FAIL"
            line = f"invariant {name}: {state} checks={self.checks[name]} failures={len(v)}"
            if v:
                line += f" first: {v[0]}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "InvariantReport":
        rep = cls()
        for line in text.splitlines():
            if line.startswith("# tokcol-invariant-report") and line != REPORT_TAG:
                raise ValueError(f"unsupported report format {line!r}")
            if line.startswith("truncated:"):
                rep.truncated = line.split(":", 1)[1].strip() == "true"
            elif line.startswith("iterations:"):
                rep.iterations = int(line.split(":", 1)[1])
            elif line.startswith("invariant "):
                name, _, rest = line[len("invariant "):].partition(":")
                fields = dict(kv.split("=", 1) for kv in rest.split()[1:3])
                rep.checks[name] = int(fields["checks"])
                # counterexample details are not round-tripped, only counts
                rep.violations[name] = [Violation(name, -1, (), "")] * int(fields["failures"])
        return rep


# ---------------------------------------------------------------- checkers


def _transit_fate(trace: RunTrace, t: Topology, i: int, v: int) -> str:
    """What happens to node ``v``'s in-flight tokens recorded at iteration ``i``.

    Returns ``"pending"``, ``"delivered"``, ``"dropped"`` or ``"open"`` (end of trace).
    """
    s = trace.states[i][v]
    if i + 1 >= len(trace.states):
        return "open"
    nxt = trace.states[i + 1]
    if not s.final:
        if nxt[v].halted:
            return "dropped"
        return "pending"
    if s.p is None:
        return "dropped"
    u, pu = t.peer(v, s.p)
    if nxt[u].halted or pu not in nxt[u].chi:
        return "dropped"
    return "delivered"


def check_trace(trace: RunTrace, a: TokenAssignment, t: Topology,
                one_sided: bool | None = None) -> InvariantReport:
    """Evaluate every invariant at every recorded iteration.

    Token-level checks (conservation, exactly-once) are skipped for the
    randomized algorithm, whose collected values are hashes.
    """
    rep = InvariantReport(truncated=not trace.complete, iterations=len(trace.states) - 1)
    if not trace.states:
        return rep
    n = t.n
    randomized = trace.algorithm == "randomized"
    if one_sided is None:
        one_sided = randomized
    oracle = oracle_collision(a)
    initial = Counter(a.tokens())
    dropped: Counter = Counter()
    graphs = [extract_iig(states, t) for states in trace.states]

    for i, states in enumerate(trace.states):
        g = graphs[i]
        prev = trace.states[i - 1] if i else None

        # rid monotone, cnt stable, chi stable
        if prev is not None:
            for v in range(n):
                s, q = states[v], prev[v]
                rep.tick("rid_monotone")
                if s.rid > q.rid:
                    rep.fail("rid_monotone", i, [v], f"rid {q.rid} -> {s.rid}")
                rep.tick("cnt_stable")
                if q.cnt is not None and s.cnt != q.cnt:
                    rep.fail("cnt_stable", i, [v], f"cnt {q.cnt} -> {s.cnt}")
                if q.quit and not q.halted:
                    rep.tick("chi_stable")
                    if s.chi != q.chi:
                        rep.fail("chi_stable", i, [v], f"chi {q.chi} -> {s.chi}")

        # forest, path non-increase, subtree connectivity
        rep.tick("forest")
        c = g.cycle_node()
        if c is not None:
            rep.fail("forest", i, [c], "parent pointers contain a cycle")
        for v, p in g.edges:
            rep.tick("path_nonincreasing")
            if g.rid[v] < g.rid[p]:
                rep.fail("path_nonincreasing", i, [v, p], f"child rid {g.rid[v]} < parent rid {g.rid[p]}")
        if c is None:
            for r in g.roots():
                rep.tick("subtree_connected")
                same = {v for v in g.subtree(r) if g.rid[v] == g.rid[r]}
                reach = set(g.id_subtree(r))
                if same != reach:
                    bad = sorted(same - reach)
                    rep.fail("subtree_connected", i, [r] + bad[:3],
                             f"{len(bad)} nodes share the root rid but are cut off")

        # halt safety
        for v in range(n):
            if states[v].halted:
                continue
            for u, _ in t.ports[v]:
                rep.tick("halt_safety")
                if states[u].halted and states[v].res is None:
                    rep.fail("halt_safety", i, [v, u], "live node without verdict next to a halted node")

        # conservation (tokens in lists + in flight + dropped)
        if not randomized:
            if i:
                for v in range(n):
                    if prev[v].transit and _transit_fate(trace, t, i - 1, v) == "dropped":
                        dropped.update(prev[v].transit)
            held: Counter = Counter()
            for s in states:
                held.update(s.x)
                held.update(s.transit)
            rep.tick("conservation")
            if held + dropped != initial:
                extra = (held + dropped) - initial
                missing = initial - (held + dropped)
                rep.fail("conservation", i, [],
                         f"extra={sorted(extra.elements())[:4]} missing={sorted(missing.elements())[:4]}")
            if oracle is Verdict.ALL_DISTINCT:
                rep.tick("no_drop_on_distinct")
                if dropped:
                    rep.fail("no_drop_on_distinct", i, [], f"dropped {sorted(dropped.elements())[:4]}")

        # decision-time checks
        for r in range(n):
            s = states[r]
            if not s.decided or s.halted:
                continue
            sub = g.id_subtree(r)
            rep.tick("cnt_correct")
            if s.cnt != len(sub):
                rep.fail("cnt_correct", i, [r], f"cnt {s.cnt} but identifier subtree has {len(sub)} nodes")
            if not randomized:
                rep.tick("exactly_once")
                want = Counter(tok for v in sub for tok in a.lists[v])
                if Counter(s.x) != want:
                    rep.fail("exactly_once", i, [r], f"collected {len(s.x)} tokens, subtree holds {sum(want.values())}")

    # single tree on distinct inputs, at the first all-build-false iteration
    if oracle is Verdict.ALL_DISTINCT:
        first = next((i for i, st in enumerate(trace.states) if not any(s.build for s in st)), None)
        if first is not None:
            rep.tick("single_tree_on_distinct")
            g = graphs[first]
            roots = g.roots()
            holders = [v for v in range(n) if a.lists[v]]
            vmin = min(holders, key=lambda v: min(a.lists[v]))
            if not randomized:
                if roots != [vmin]:
                    rep.fail("single_tree_on_distinct", first, roots, f"roots {roots}, expected [{vmin}]")
            elif len(roots) != 1:
                rep.fail("single_tree_on_distinct", first, roots, f"{len(roots)} roots")
            if len(set(g.rid)) != 1 and not (randomized and len(roots) != 1):
                rep.fail("single_tree_on_distinct", first, [], "rids differ")

    # verdicts at the end of the trace
    if trace.complete:
        final = [s.res for s in trace.states[-1]]
        rep.tick("verdict_agreement")
        if len(set(final)) != 1:
            rep.fail("verdict_agreement", len(trace.states) - 1, [],
                     f"verdicts {sorted(Counter(map(str, final)).items())}")
        rep.tick("verdict_correct")
        wrong = [v for v, res in enumerate(final) if res is not None and res is not oracle
                 and not (one_sided and res is Verdict.COLLISION)]
        if wrong:
            rep.fail("verdict_correct", len(trace.states) - 1, wrong[:4], f"oracle says {oracle}")
    return rep


# -------------------------------------------------------- trace equivalence


@dataclass(frozen=True)
class EquivalenceResult:
    passed: bool
    compared: int
    unequal_length: bool
    divergence: tuple | None = None  # (iteration, big node, small node)

    def __str__(self):
        if self.passed:
            return f"pass ({self.compared} iterations)"
        it, b, s = self.divergence
        return f"fail at iteration {it}: big node {b} vs small node {s}"


def check_trace_equivalence(trace_a: RunTrace, trace_b: RunTrace,
                            correspondence: Sequence[int]) -> EquivalenceResult:
    """Compare corresponding node states round by round.

    ``correspondence[b]`` maps each node of the larger ring to the node of
    the smaller ring it must mirror.  Argument order does not matter.
    """
    big, small = (trace_a, trace_b) if trace_a.n == len(correspondence) else (trace_b, trace_a)
    if big.n != len(correspondence):
        raise ValueError("correspondence does not match either trace")
    compared = min(len(big.states), len(small.states))
    for i in range(compared):
        sb, ss = big.states[i], small.states[i]
        cache = [serialize_state(s) for s in ss]
        for b, target in enumerate(correspondence):
            if serialize_state(sb[b]) != cache[target]:
                return EquivalenceResult(False, i, len(big.states) != len(small.states), (i, b, target))
    return EquivalenceResult(True, compared, len(big.states) != len(small.states))


# --------------------------------------------------------- fault injection


def _edit(trace: RunTrace, i: int, v: int, **changes) -> RunTrace:
    states = [list(st) for st in trace.states]
    states[i][v] = states[i][v]._replace(**changes)
    return RunTrace(trace.algorithm, trace.n, trace.L, trace.B, states, list(trace.rounds_at), trace.complete)


def _decision(trace: RunTrace) -> tuple[int, int]:
    for i, st in enumerate(trace.states):
        for v, s in enumerate(st):
            if s.decided:
                return i, v
    raise ValueError("trace has no decision")


def _changed_rid(trace: RunTrace) -> list[tuple[int, int]]:
    out = []
    for i in range(1, len(trace.states)):
        for v in range(trace.n):
            if trace.states[i][v].rid != trace.states[i - 1][v].rid:
                out.append((i, v))
    return out


def _tree_edges(trace: RunTrace, t: Topology, i: int) -> list[tuple[int, int]]:
    return extract_iig(trace.states[i], t).edges


def canned_faults(trace: RunTrace, a: TokenAssignment, t: Topology) -> dict[str, list[RunTrace]]:
    """Three mutated copies of ``trace`` per invariant, each violating it.

    The base trace must come from a complete deterministic run on an
    all-distinct instance of at least four nodes on a path or ring.
    """
    last = len(trace.states) - 1
    dec_i, root = _decision(trace)
    bf = next(i for i, st in enumerate(trace.states) if not any(s.build for s in st))
    g = extract_iig(trace.states[bf], t)
    non_roots = [v for v in range(t.n) if g.parent[v] is not None]
    leaves = [v for v in non_roots if not g.children()[v]]
    changed = _changed_rid(trace)
    mid_edges = _tree_edges(trace, t, bf)
    tok = a.tokens()[0]
    out: dict[str, list[RunTrace]] = {}

    def bump(i, v):
        s = trace.states[i][v]
        return _edit(trace, i, v, rid=s.rid + 1 if s.rid != TOP_ID else s.rid)

    ci, cv = changed[0]
    out["rid_monotone"] = [
        _edit(trace, ci, cv, rid=trace.states[ci - 1][cv].rid + 1) if trace.states[ci - 1][cv].rid != TOP_ID
        else _edit(trace, ci - 1, cv, rid=trace.states[ci][cv].rid - 1),
        _edit(trace, last, root, rid=TOP_ID),
        _edit(trace, bf, leaves[0], rid=trace.states[bf][leaves[0]].rid + 7),
    ]

    def parent_port(v, u):
        return t.port_to(v, u)

    c0 = non_roots[0]
    out["forest"] = [
        _edit(trace, bf, root, p=parent_port(root, t.neighbors(root)[0])),
        _edit(trace, last, root, p=parent_port(root, t.neighbors(root)[-1])),
        _edit(trace, dec_i, root, p=parent_port(root, t.neighbors(root)[0])),
    ]
    assert g.parent[c0] is not None

    def lower_child(i, edge):
        v, p = edge
        return _edit(trace, i, v, rid=trace.states[i][p].rid - 1)

    out["path_nonincreasing"] = [
        lower_child(bf, mid_edges[0]),
        lower_child(last, mid_edges[-1]),
        lower_child(dec_i, mid_edges[len(mid_edges) // 2]),
    ]

    # a node whose parent is not the root: give that parent a larger rid
    inner = [v for v in non_roots if g.parent[v] != root]
    out["subtree_connected"] = [
        bump(bf, g.parent[inner[0]]),
        bump(last, g.parent[inner[-1]]),
        bump(dec_i, g.parent[inner[len(inner) // 2]]),
    ]

    rx = trace.states[dec_i][root].x
    out["conservation"] = [
        _edit(trace, dec_i, root, x=rx + (rx[0],)),
        _edit(trace, dec_i, root, x=rx[1:]),
        _edit(trace, bf, leaves[0], transit=trace.states[bf][leaves[0]].transit + (tok,), final=False),
    ]
    # drops are only legal on collision inputs: fake a token lost in flight
    drop_v = next(v for v in non_roots if a.lists[v])
    drop_i = next((i for i in range(1, last) if trace.states[i][drop_v].transit), bf)
    drop_tok = trace.states[drop_i][drop_v].transit or (tok,)
    out["no_drop_on_distinct"] = [
        _edit(_edit(trace, drop_i, drop_v, transit=drop_tok, final=False), drop_i + 1, drop_v, halted=True),
        _edit(_edit(trace, drop_i, drop_v, transit=drop_tok, final=True),
              drop_i + 1, g.parent[drop_v], chi=()),
        _edit(_edit(trace, drop_i, drop_v, transit=drop_tok, final=True),
              drop_i + 1, g.parent[drop_v], halted=True),
    ]

    cnt_i = next(i for i, st in enumerate(trace.states) if st[root].cnt is not None)
    cnt = trace.states[cnt_i][root].cnt
    out["cnt_stable"] = [
        _edit(trace, last, root, cnt=cnt + 1),
        _edit(trace, last, root, cnt=None),
        _edit(trace, dec_i, root, cnt=cnt - 1) if dec_i > cnt_i else _edit(trace, last, root, cnt=0),
    ]
    dcnt = trace.states[dec_i][root].cnt
    out["cnt_correct"] = [
        _edit(trace, dec_i, root, cnt=dcnt + 1),
        _edit(trace, dec_i, root, cnt=dcnt - 1),
        _edit(trace, dec_i, root, cnt=1),
    ]
    out["exactly_once"] = [
        _edit(trace, dec_i, root, x=rx + (rx[-1],)),
        _edit(trace, dec_i, root, x=rx[:-1]),
        _edit(trace, dec_i, root, x=rx[:-1] + (rx[-1] ^ 1,)),
    ]
    out["single_tree_on_distinct"] = [
        _edit(trace, bf, c0, p=None),
        _edit(trace, bf, leaves[-1], rid=trace.states[bf][leaves[-1]].rid + 1),
        _edit(trace, bf, non_roots[-1], p=None),
    ]

    quit_v = next(v for v in range(t.n) if trace.states[bf + 1][v].quit and trace.states[bf + 1][v].chi)
    quit_i = next(i for i in range(len(trace.states)) if trace.states[i][quit_v].quit)
    chi = trace.states[quit_i][quit_v].chi
    out["chi_stable"] = [
        _edit(trace, quit_i + 1, quit_v, chi=chi[1:]),
        _edit(trace, quit_i + 1, quit_v, chi=()),
        _edit(trace, quit_i + 1, quit_v, chi=tuple(sorted(set(chi) | set(range(1, t.degree(quit_v) + 1))))
              if len(chi) < t.degree(quit_v) else chi[:-1]),
    ]

    nb = t.neighbors(root)
    out["halt_safety"] = [
        _edit(trace, bf, root, halted=True),
        _edit(trace, 1, leaves[0], halted=True),
        _edit(trace, dec_i, nb[0], halted=True),
    ]
    final = trace.states[last][0].res
    flip = Verdict.COLLISION if final is Verdict.ALL_DISTINCT else Verdict.ALL_DISTINCT
    out["verdict_agreement"] = [
        _edit(trace, last, 0, res=flip),
        _edit(trace, last, t.n - 1, res=None),
        _edit(trace, last, root, res=flip),
    ]
    flipped = RunTrace(trace.algorithm, trace.n, trace.L, trace.B,
                       [list(st) for st in trace.states], list(trace.rounds_at), trace.complete)
    flipped.states[last] = [s._replace(res=flip) for s in flipped.states[last]]
    out["verdict_correct"] = [
        flipped,
        _edit(trace, last, 0, res=flip),
        _edit(trace, last, root, res=flip),
    ]
    return out


def fault_injection_selftest(trace: RunTrace, a: TokenAssignment, t: Topology) -> dict[str, list[bool]]:
    """For each invariant, whether its checker flags each canned mutation."""
    base = check_trace(trace, a, t)
    if not base.ok:
        raise ValueError(f"base trace already fails: {base.failed()}")
    result = {}
    for name, mutants in canned_faults(trace, a, t).items():
        result[name] = [bool(check_trace(m, a, t).violations[name]) for m in mutants]
    return result

