"""Synchronous round scheduler with CONGEST bit accounting.

One *iteration* is one application of every live node's transition: each
live node composes one message per port from its pre-iteration state, nodes
whose verdict was already set halt after sending, and the remaining nodes
receive and step.  For the single-shot algorithm an iteration is one round
and every message must fit in ``B`` bits.  For the pipelined algorithms an
iteration costs ``ceil(max message bits / B)`` rounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable

from . import algo_large, algo_rand, algo_small
from .messages import (
    TOP_ID,
    Layout,
    Mark,
    Verdict,
    count_width,
    default_bandwidth,
    pack_capacity,
    pieces_per_token,
)
from .rng import stream
from .topology import InvalidParameterError, TokenAssignment, Topology, diameter

ALGORITHMS = ("det_small", "det_large", "randomized")
KNOWLEDGE = algo_small.KNOWLEDGE
TRACE_LEVELS = ("metrics", "full")
TRACE_VERSION = 1
TIMEOUT_FACTOR = 64


class BandwidthViolation(RuntimeError):
    """A message exceeded the per-round budget in strict mode."""


class InternalInvariantError(AssertionError):
    """The scheduler observed a state the algorithms should never reach."""


class _Silence:
    __slots__ = ()

    def __repr__(self):
        return "SILENCE"


SILENCE = _Silence()
"""Delivered internally on ports whose peer has halted."""


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "det_small"
    knowledge: str = "know_n"
    bandwidth_B: int | None = None  # None picks a default from (n, L)
    pack_tokens: bool = False
    round_limit: int | None = None  # None means TIMEOUT_FACTOR * (D + k*ceil(L/B) + L)
    trace_level: str = "metrics"
    seed: int = 0
    strict: bool = True
    c_id: int = 4
    beta: float = 2.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameterError(f"unknown algorithm {self.algorithm!r}")
        if self.knowledge not in KNOWLEDGE:
            raise InvalidParameterError(f"unknown knowledge {self.knowledge!r}")
        if self.trace_level not in TRACE_LEVELS:
            raise InvalidParameterError(f"unknown trace level {self.trace_level!r}")
        if self.bandwidth_B is not None and self.bandwidth_B < 1:
            raise InvalidParameterError("bandwidth_B must be positive")
        if self.round_limit is not None and self.round_limit < 1:
            raise InvalidParameterError("round_limit must be positive")
        if self.pack_tokens and self.algorithm != "det_small":
            raise InvalidParameterError("token packing applies to det_small only")
        if self.algorithm == "randomized" and self.knowledge == "none":
            raise InvalidParameterError("randomized runs need know_n or know_k")

    def to_dict(self) -> dict:
        return asdict(self)


def default_piece_bits(n: int) -> int:
    """Default piece size for the pipelined algorithms: ``2 * ceil(log2(n+1))``, at least 8."""
    return max(8, 2 * count_width(n))


def resolve_bandwidth(cfg: RunConfig, n: int, L: int) -> int:
    if cfg.bandwidth_B is not None:
        return cfg.bandwidth_B
    if cfg.algorithm == "det_small":
        return default_bandwidth(n, L, cfg.pack_tokens)
    return default_piece_bits(n)


def default_round_limit(D: int, k: int, L: int, B: int) -> int:
    return TIMEOUT_FACTOR * (D + k * pieces_per_token(L, B) + L)


@dataclass
class RunMetrics:
    rounds: int = 0
    iterations: int = 0
    max_bits: int = 0
    total_messages: int = 0
    verdict_per_node: list = field(default_factory=list)
    halted_round: list = field(default_factory=list)
    timed_out: bool = False
    build_false_iteration: int | None = None
    build_false_round: int | None = None
    bandwidth: int = 0
    phase_rounds: dict = field(default_factory=dict)

    @property
    def verdict(self) -> Verdict | str | None:
        """Common verdict, ``None`` if nobody decided, ``"split"`` on disagreement."""
        vs = set(self.verdict_per_node)
        if vs == {None}:
            return None
        if len(vs) == 1:
            return vs.pop()
        return "split"

    @property
    def agree(self) -> bool:
        return len(set(self.verdict_per_node)) == 1


@dataclass
class RunTrace:
    """Per-iteration node snapshots; ``states[0]`` is the initial state.

    ``rounds_at[i]`` is the elapsed round count after iteration ``i``.
    """

    algorithm: str
    n: int
    L: int
    B: int
    states: list = field(default_factory=list)
    rounds_at: list = field(default_factory=list)
    complete: bool = True

    def __len__(self):
        return len(self.states)


@dataclass
class RunResult:
    trace: RunTrace
    metrics: RunMetrics
    config: RunConfig
    D: int
    k: int

    @property
    def verdict(self):
        return self.metrics.verdict


# ------------------------------------------------------------------ world


def _make_nodes(t: Topology, a: TokenAssignment, cfg: RunConfig, B: int):
    n, k, L = t.n, a.k, a.L
    common = dict(knowledge=cfg.knowledge, n=n, k=k)
    if cfg.algorithm == "det_small":
        cap = pack_capacity(n, L, B) if cfg.pack_tokens else 0
        nodes = [algo_small.SmallNode(a.lists[v], t.degree(v), pack_cap=cap, **common) for v in range(n)]
        return nodes, Layout(n, L, pack_cap=cap)
    if cfg.algorithm == "det_large":
        nodes = [algo_large.LargeNode(a.lists[v], t.degree(v), L, B, **common) for v in range(n)]
        return nodes, Layout(n, L, B, m_rid=nodes[0].M)
    nodes = [
        algo_rand.RandNode(a.lists[v], t.degree(v), L, B, stream(cfg.seed, "node", v),
                           c=cfg.c_id, beta=cfg.beta, **common)
        for v in range(n)
    ]
    return nodes, Layout(n, L, B, m_rid=nodes[0].M, k=k, m_hs=nodes[0].Mh)


class World:
    """Mutable run state; :meth:`step` advances one iteration."""

    def __init__(self, t: Topology, a: TokenAssignment, cfg: RunConfig):
        if a.n != t.n:
            raise InvalidParameterError("assignment and topology disagree on n")
        self.t = t
        self.a = a
        self.cfg = cfg
        self.B = resolve_bandwidth(cfg, t.n, a.L)
        self.nodes, self.layout = _make_nodes(t, a, cfg, self.B)
        self.halted = [False] * t.n
        self.metrics = RunMetrics(
            verdict_per_node=[None] * t.n, halted_round=[None] * t.n, bandwidth=self.B
        )
        self.full = cfg.trace_level == "full"
        self.trace = RunTrace(cfg.algorithm, t.n, a.L, self.B)
        if self.full:
            self.trace.states.append(self.snapshot())
            self.trace.rounds_at.append(0)

    @property
    def done(self) -> bool:
        return all(self.halted)

    def snapshot(self) -> list:
        return [node.snapshot(h) for node, h in zip(self.nodes, self.halted)]

    def _global_phase(self) -> str:
        live = [nd for nd, h in zip(self.nodes, self.halted) if not h]
        if any(nd.build for nd in live):
            return "elect"
        if any(nd.hash is None for nd in live):
            return "seed_broadcast"
        if any(nd.res is None for nd in live):
            return "aggregate"
        return "done"

    def step(self) -> None:
        """Advance one iteration; a no-op once every node has halted."""
        if self.done:
            return
        nodes, t, m = self.nodes, self.t, self.metrics
        phase = self._global_phase() if self.cfg.algorithm == "randomized" else None
        it = m.iterations + 1

        # compose from pre-iteration state
        outboxes: list = [None] * t.n
        leaving = []
        iter_bits = 0
        for v, node in enumerate(nodes):
            if self.halted[v]:
                continue
            if node.res is not None:
                leaving.append(v)
            out = node.outbox()
            outboxes[v] = out
            for port, msg in enumerate(out, 1):
                bits = self.layout.bits(msg)
                if self.cfg.algorithm == "det_small" and self.cfg.strict and bits > self.B:
                    raise BandwidthViolation(
                        f"round {m.rounds + 1}: node {v} port {port} sends {bits} bits > B={self.B}; "
                        f"fields {self.layout.fields(msg)}"
                    )
                iter_bits = max(iter_bits, bits)
            m.total_messages += len(out)
        m.max_bits = max(m.max_bits, iter_bits)
        cost = 1 if self.cfg.algorithm == "det_small" else max(1, math.ceil(iter_bits / self.B))
        m.iterations = it
        m.rounds += cost
        if phase is not None:
            m.phase_rounds[phase] = m.phase_rounds.get(phase, 0) + cost

        for v in leaving:
            self.halted[v] = True
            m.halted_round[v] = m.rounds
            m.verdict_per_node[v] = nodes[v].res

        # deliver and step
        for v, node in enumerate(nodes):
            if self.halted[v]:
                continue
            inbox = []
            for u, pu in t.ports[v]:
                box = outboxes[u]
                inbox.append(SILENCE if box is None else box[pu - 1])
            if any(msg is SILENCE for msg in inbox):
                raise InternalInvariantError(
                    f"iteration {it}: live node {v} reads a port whose peer halted earlier"
                )
            node.receive(inbox)

        if m.build_false_iteration is None and not any(nd.build for nd in nodes):
            m.build_false_iteration = it
            m.build_false_round = m.rounds
        if self.full:
            self.trace.states.append(self.snapshot())
            self.trace.rounds_at.append(m.rounds)


def run(t: Topology, a: TokenAssignment, cfg: RunConfig) -> RunResult:
    """Execute until every node halts or the round limit is reached."""
    world = World(t, a, cfg)
    D = diameter(t)
    limit = cfg.round_limit or default_round_limit(D, a.k, a.L, world.B)
    while not world.done and world.metrics.rounds < limit:
        world.step()
    if not world.done:
        world.metrics.timed_out = True
        world.trace.complete = False
    return RunResult(world.trace, world.metrics, cfg, D, a.k)


# ------------------------------------------------------------ trace format

TRACE_FORMAT = "tokcol-trace"


def encode_value(x):
    """JSON-safe form of a snapshot field."""
    if x is None or isinstance(x, bool):
        return x
    if x == TOP_ID and not isinstance(x, (tuple, list)):
        return "top"
    if isinstance(x, Mark):
        return x.value
    if isinstance(x, Verdict):
        return x.value
    if isinstance(x, (tuple, list)):
        return [encode_value(y) for y in x]
    return x


def decode_value(name: str, x):
    if x is None or isinstance(x, bool):
        return x
    if x == "top":
        return TOP_ID
    if name == "ele" and isinstance(x, str):
        return Mark(x)
    if name == "res":
        return Verdict(x)
    if isinstance(x, list):
        return tuple(decode_value("", y) for y in x)
    return x


def snapshot_record(s: algo_small.NodeSnapshot) -> dict:
    return {name: encode_value(val) for name, val in s._asdict().items()}


def snapshot_from_record(rec: dict) -> algo_small.NodeSnapshot:
    return algo_small.NodeSnapshot(**{k: decode_value(k, v) for k, v in rec.items()})


def serialize_state(s: algo_small.NodeSnapshot) -> str:
    """Canonical text of one node state (used for state-identity checks)."""
    return json.dumps(snapshot_record(s), sort_keys=True, separators=(",", ":"))


def write_trace(trace: RunTrace, fh: IO[str]) -> None:
    header = {
        "format": TRACE_FORMAT, "version": TRACE_VERSION, "algorithm": trace.algorithm,
        "n": trace.n, "L": trace.L, "B": trace.B, "complete": trace.complete,
    }
    fh.write(json.dumps(header) + "\n")
    for i, (states, rounds) in enumerate(zip(trace.states, trace.rounds_at)):
        rec = {"iteration": i, "round": rounds, "nodes": [snapshot_record(s) for s in states]}
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_trace(lines: Iterable[str]) -> RunTrace:
    it = iter(lines)
    header = json.loads(next(it))
    if header.get("format") != TRACE_FORMAT:
        raise ValueError("not a trace file")
    if header.get("version") != TRACE_VERSION:
        raise ValueError(f"unsupported trace version {header.get('version')}")
    trace = RunTrace(header["algorithm"], header["n"], header["L"], header["B"],
                     complete=header["complete"])
    for line in it:
        if not line.strip():
            continue
        rec = json.loads(line)
        trace.states.append([snapshot_from_record(r) for r in rec["nodes"]])
        trace.rounds_at.append(rec["round"])
    return trace
