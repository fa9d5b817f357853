"""Instance corpora, sweep configs, result records and least-squares fits."""
from __future__ import annotations

import ast
import csv
import hashlib
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Sequence

import numpy as np

from . import fastpath
from .engine import BandwidthViolation, RunConfig, run
from .messages import Verdict, clog2
from .rng import derive_seed, stream
from .topology import (
    InvalidParameterError,
    assign_tokens,
    diameter,
    make_dumbbell,
    make_path,
    make_random_connected,
    make_ring,
)
from .verify import oracle_collision

WORKERS_ENV = "TOKCOL_WORKERS"
RECORD_COLUMNS = (
    "run_id", "n", "k", "L", "D", "algorithm", "knowledge", "B", "rounds", "iterations",
    "verdict", "oracle_verdict", "max_bits", "seed",
)
EXTRA_COLUMNS = (
    "config_hash", "topology", "mode", "duplicates", "pack", "status", "build_false_iteration",
    "phase_rounds_elect", "phase_rounds_seed", "phase_rounds_aggregate",
)


# ---------------------------------------------------------------- instances


@dataclass(frozen=True)
class InstanceSpec:
    """Everything needed to rebuild one (topology, assignment) pair."""

    kind: str
    n: int
    k: int
    L: int
    mode: str = "distinct"
    duplicates: int = 1
    placement: str = "random"
    seed: int = 0
    edge_prob: float | None = None  # random graphs; None means 2/n
    bridge_len: int = 1  # dumbbells

    def build(self):
        t = make_topology(self.kind, self.n, self.seed, self.edge_prob, self.bridge_len)
        a = assign_tokens(t, self.k, self.L, self.mode, self.seed,
                          duplicates=self.duplicates, placement=self.placement)
        return t, a


def make_topology(kind: str, n: int, seed: int, edge_prob: float | None = None, bridge_len: int = 1):
    if kind == "ring":
        return make_ring(n, seed)
    if kind == "path":
        return make_path(n, seed)
    if kind == "random":
        return make_random_connected(n, min(1.0, 2.0 / n) if edge_prob is None else edge_prob, seed)
    if kind == "dumbbell":
        half = max(1, (n - bridge_len) // 2)
        return make_dumbbell(half, bridge_len, seed)
    raise InvalidParameterError(f"unknown topology kind {kind!r}")


def default_corpus(size: int = 500, B: int = 16, seed: int = 0) -> list[InstanceSpec]:
    """Seeded fuzz corpus: ``n <= 32``, ``k <= 64``, ``L in {4, B, 4B, 16B}``, 0/1/3 duplicate pairs."""
    gen = stream(seed, "corpus")
    kinds = ("ring", "path", "random", "dumbbell")
    Ls = (4, B, 4 * B, 16 * B)
    out = []
    while len(out) < size:
        i = len(out)
        kind = kinds[i % 4]
        n = int(gen.integers(3, 33))
        L = Ls[int(gen.integers(0, 4))]
        dup = (0, 1, 3)[int(gen.integers(0, 3))]
        k = int(gen.integers(max(1, 2 * dup), 65))
        if L == 4:
            k = min(k, 16)
        mode = "distinct" if dup == 0 else "with_duplicates"
        if dup == 0 and i % 7 == 3:
            mode = "adversarial_min_far"
        placement = ("random", "spread", "single")[int(gen.integers(0, 3))] if i % 5 else "random"
        bridge = int(gen.integers(0, 4))
        if kind == "dumbbell":
            n = max(2 + bridge, n)
        out.append(InstanceSpec(kind, n, k, L, mode, max(1, dup), placement,
                                derive_seed(seed, "instance", i), None, bridge))
    return out


# ------------------------------------------------------------ config files

_SECTIONS = {
    "name": str,
    "topology": dict,
    "assignment": dict,
    "run": dict,
    "seeds": (list, int),
    "repetitions": int,
    "output": str,
    "fast": bool,
}
_TOPOLOGY_KEYS = {"kind", "n", "edge_prob", "bridge_len"}
_ASSIGNMENT_KEYS = {"k", "L", "mode", "duplicates", "placement"}
_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"seed", "trace_level"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One JSON file describing a full sweep.

    Any topology/assignment/run value may be a list; the sweep is the
    cartesian product.  ``k`` and ``L`` may be formulas in ``n`` (for
    example ``"n"`` or ``"clog2(n) + 2"``).
    """

    name: str = "sweep"
    topology: dict = field(default_factory=lambda: {"kind": "ring", "n": 8})
    assignment: dict = field(default_factory=lambda: {"k": "n", "L": "clog2(n) + 2", "mode": "distinct"})
    run: dict = field(default_factory=lambda: {"algorithm": "det_small", "knowledge": "know_n"})
    seeds: Any = 1
    repetitions: int = 1
    output: str = ""
    fast: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, typ in _SECTIONS.items():
            if key in d and not isinstance(d[key], typ):
                raise ConfigError(f"config key {key!r} has the wrong type")
        for section, allowed in (("topology", _TOPOLOGY_KEYS), ("assignment", _ASSIGNMENT_KEYS),
                                 ("run", _RUN_KEYS)):
            bad = set(d.get(section, {})) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {section}: {sorted(bad)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def seed_list(self) -> list[int]:
        if isinstance(self.seeds, int):
            return list(range(self.seeds))
        return [int(s) for s in self.seeds]


_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Call,
                  ast.Add, ast.Sub, ast.Mult, ast.FloorDiv, ast.USub, ast.Load)
_FUNCS = {"clog2": clog2, "max": max, "min": min}


def eval_formula(expr, n: int) -> int:
    """Evaluate an integer formula over ``n`` (``+ - * //``, ``clog2``, ``max``, ``min``)."""
    if isinstance(expr, int):
        return expr
    tree = ast.parse(str(expr), mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"unsupported syntax in formula {expr!r}")
        if isinstance(node, ast.Name) and node.id not in ("n", *_FUNCS):
            raise ConfigError(f"unknown name {node.id!r} in formula {expr!r}")
    return int(eval(compile(tree, "<formula>", "eval"), {"__builtins__": {}}, {"n": n, **_FUNCS}))


def _grid(section: dict) -> list[dict]:
    keys = sorted(section)
    values = [section[k] if isinstance(section[k], list) else [section[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


@dataclass(frozen=True)
class Job:
    run_id: int
    spec: InstanceSpec
    cfg: RunConfig
    config_hash: str
    fast: bool


def expand(cfg: ExperimentConfig) -> list[Job]:
    jobs = []
    h = cfg.digest()
    for topo, asg, rc in itertools.product(_grid(cfg.topology), _grid(cfg.assignment), _grid(cfg.run)):
        n = int(topo["n"])
        for seed in cfg.seed_list():
            for rep in range(cfg.repetitions):
                s = derive_seed(seed, "rep", rep) if cfg.repetitions > 1 else seed
                spec = InstanceSpec(
                    topo.get("kind", "ring"), n, eval_formula(asg.get("k", "n"), n),
                    eval_formula(asg.get("L", "clog2(n) + 2"), n), asg.get("mode", "distinct"),
                    asg.get("duplicates", 1), asg.get("placement", "random"), s,
                    topo.get("edge_prob"), topo.get("bridge_len", 1),
                )
                jobs.append(Job(len(jobs), spec, RunConfig(seed=s, **rc), h, cfg.fast))
    return jobs


# ----------------------------------------------------------------- records


def execute(job: Job) -> dict:
    """Run one job; failures become records with a non-ok status."""
    spec, cfg = job.spec, job.cfg
    rec: dict = {"run_id": job.run_id, "n": spec.n, "k": spec.k, "L": spec.L, "algorithm": cfg.algorithm,
                 "knowledge": cfg.knowledge, "seed": cfg.seed, "config_hash": job.config_hash,
                 "topology": spec.kind, "mode": spec.mode,
                 "duplicates": spec.duplicates if spec.mode == "with_duplicates" else 0,
                 "pack": int(cfg.pack_tokens)}
    try:
        t, a = spec.build()
    except ValueError as exc:
        rec.update(status=f"invalid: {exc}")
        return rec
    rec["D"] = diameter(t)
    rec["oracle_verdict"] = str(oracle_collision(a))
    try:
        if job.fast and fastpath.eligible(a, cfg) and cfg.trace_level == "metrics":
            m = fastpath.run_metrics(t, a, cfg)
        else:
            m = run(t, a, cfg).metrics
    except BandwidthViolation as exc:
        rec.update(status=f"bandwidth: {exc}")
        return rec
    verdict = m.verdict
    rec.update(
        B=m.bandwidth, rounds=m.rounds, iterations=m.iterations, max_bits=m.max_bits,
        verdict="none" if verdict is None else str(verdict),
        build_false_iteration=m.build_false_iteration,
        phase_rounds_elect=m.phase_rounds.get("elect", 0),
        phase_rounds_seed=m.phase_rounds.get("seed_broadcast", 0),
        phase_rounds_aggregate=m.phase_rounds.get("aggregate", 0),
    )
    if m.timed_out:
        rec["status"] = "no_decision" if cfg.knowledge == "none" else "timeout"
    elif verdict == "split":
        rec["status"] = "disagree"
    elif rec["verdict"] != rec["oracle_verdict"]:
        # the randomized test may report a collision on distinct tokens (one-sided error)
        one_sided = cfg.algorithm == "randomized" and verdict == Verdict.COLLISION
        rec["status"] = "false_positive" if one_sided else "mismatch"
    else:
        rec["status"] = "ok"
    return rec


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """Run every job; output order is ``run_id`` order for any worker count."""
    jobs = expand(cfg)
    workers = workers or worker_count()
    if workers == 1:
        return [execute(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute, jobs, chunksize=4))


def records_to_csv(records: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RECORD_COLUMNS + EXTRA_COLUMNS, extrasaction="ignore",
                       lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in RECORD_COLUMNS + EXTRA_COLUMNS})
    return buf.getvalue()


def records_from_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    ints = {"run_id", "n", "k", "L", "D", "B", "rounds", "iterations", "max_bits", "seed", "duplicates",
            "pack", "build_false_iteration", "phase_rounds_elect", "phase_rounds_seed",
            "phase_rounds_aggregate"}
    for r in rows:
        for key in ints & set(r):
            r[key] = int(r[key]) if r[key] != "" else None
    return rows


# -------------------------------------------------------------------- fits


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    residual: float
    points: int


def fit_linear(x: Sequence[float], y: Sequence[float], intercept: bool = True) -> Fit:
    """Least squares ``y ~ slope * x (+ intercept)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise ValueError("nothing to fit")
    cols = [x, np.ones_like(x)] if intercept else [x]
    A = np.column_stack(cols)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(res[0]) if res.size else float(((A @ coef - y) ** 2).sum())
    return Fit(float(coef[0]), float(coef[1]) if intercept else 0.0, resid, int(x.size))


def fit_ratio(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares ``C`` for ``y ~ C * x`` in log space (geometric mean of ``y / x``).

    Suited to multiplicative tolerances such as "within 2x of the fit".
    """
    r = np.asarray(y, dtype=float) / np.asarray(x, dtype=float)
    return float(np.exp(np.mean(np.log(r))))


def small_bound(D: int, k: int, L: int, B: int) -> float:
    return D + k * math.ceil(L / B)


def large_iteration_bound(D: int, L: int, B: int) -> float:
    return D + L / max(1.0, math.log2(L / B))


def summarize(records: Sequence[dict]) -> dict:
    """Per-algorithm fit of ``rounds ~ C * (D + k * ceil(L / B)) + b`` over ok runs."""
    out = {}
    for algo in sorted({r["algorithm"] for r in records}):
        ok = [r for r in records if r["algorithm"] == algo and r.get("status") == "ok"]
        if not ok:
            continue
        # single-shot tokens fit one message, so the per-token cost is one round
        x = [r["D"] + r["k"] if algo == "det_small" else small_bound(r["D"], r["k"], r["L"], r["B"])
             for r in ok]
        fit = fit_linear(x, [r["rounds"] for r in ok])
        out[algo] = {"C": fit.slope, "intercept": fit.intercept, "runs": fit.points}
    return out
