"""Acceptance suite: seven end-to-end criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from tokcol import fastpath
from tokcol.algo_rand import build_hash
from tokcol.engine import RunConfig, run
from tokcol.experiments import default_corpus, fit_ratio, make_topology
from tokcol.messages import Verdict, clog2
from tokcol.rng import randbits, stream
from tokcol.topology import TokenAssignment, assign_tokens, diameter, from_edges, make_path, make_ring
from tokcol.cli import impossibility_check
from tokcol.verify import check_trace, fault_injection_selftest, oracle_collision

CORPUS_B = 16
CORPUS_SIZE = 500


def corpus_configs(L: int) -> list[tuple[str, RunConfig]]:
    out = [("det_large", RunConfig(algorithm="det_large", bandwidth_B=CORPUS_B))]
    if L <= CORPUS_B:
        out += [("det_small", RunConfig()), ("det_small+pack", RunConfig(pack_tokens=True))]
    return out


def run_metrics(t, a, cfg):
    if fastpath.eligible(a, cfg):
        return fastpath.run_metrics(t, a, cfg)
    return run(t, a, cfg).metrics


@pytest.fixture(scope="module")
def corpus():
    return [spec.build() + (spec,) for spec in default_corpus(CORPUS_SIZE, CORPUS_B, seed=0)]


@pytest.fixture(scope="module")
def corpus_runs(corpus):
    t0 = time.perf_counter()
    runs = []
    for t, a, spec in corpus:
        D = diameter(t)
        for label, cfg in corpus_configs(a.L):
            runs.append((spec, label, D, a, run_metrics(t, a, cfg)))
    return runs, time.perf_counter() - t0


def test_oracle_equivalence(corpus, corpus_runs, report):
    runs, seconds = corpus_runs
    bad = []
    for spec, label, _, a, m in runs:
        expected = oracle_collision(a)
        if m.timed_out or not m.agree or m.verdict != expected:
            bad.append((label, spec, m.verdict, expected))
    kinds = {spec.kind for _, _, spec in corpus}
    Ls = {a.L for _, a, _ in corpus}
    dups = {0 if spec.mode != "with_duplicates" else spec.duplicates for _, _, spec in corpus}
    shape_ok = (len(corpus) >= 500 and kinds == {"ring", "path", "random", "dumbbell"}
                and Ls == {4, CORPUS_B, 4 * CORPUS_B, 16 * CORPUS_B} and dups == {0, 1, 3}
                and max(t.n for t, _, _ in corpus) <= 32 and max(a.k for _, a, _ in corpus) <= 64)
    passed = not bad and shape_ok and seconds < 120
    report("oracle equivalence", passed,
           f"{len(runs)} runs over {len(corpus)} instances, {len(bad)} mismatches, {seconds:.1f}s")
    assert shape_ok
    assert not bad, bad[:5]
    assert seconds < 120


def test_invariant_suite(corpus, report):
    failures = []
    checked = 0
    for t, a, spec in corpus:
        for label, cfg in corpus_configs(a.L):
            cfg = RunConfig(**{**cfg.to_dict(), "trace_level": "full"})
            rep = check_trace(run(t, a, cfg).trace, a, t)
            checked += 1
            if not rep.ok:
                name = rep.failed()[0]
                failures.append(f"{label} {spec}: {rep.first(name)}")
    # negative controls on a small traced run of each deterministic algorithm
    t = make_path(6, 1)
    a = assign_tokens(t, 8, 8, "distinct", 3, placement="spread")
    missed = []
    controls = 0
    for algo, B in (("det_small", None), ("det_large", 4)):
        trace = run(t, a, RunConfig(algorithm=algo, bandwidth_B=B, trace_level="full")).trace
        for name, hits in fault_injection_selftest(trace, a, t).items():
            controls += len(hits)
            if len(hits) != 3 or not all(hits):
                missed.append(f"{algo}:{name} {hits}")
    passed = not failures and not missed
    report("invariant suite", passed,
           f"{checked} traced runs, {len(failures)} with violations; "
           f"{controls - sum(len(m) > 0 for m in missed)}/{controls} fault-injection mutants caught")
    assert not failures, failures[:5]
    assert not missed, missed


def test_small_token_round_bound(corpus_runs, report):
    sizes = (8, 16, 32, 64)
    seeds = range(5)
    lines = []
    over = []
    ok = True
    for kind in ("ring", "random"):
        per_size = []
        for n in sizes:
            ratios = []
            for s in seeds:
                t = make_topology(kind, n, seed=s)
                a = assign_tokens(t, n, clog2(n) + 2, "distinct", seed=s)
                D = diameter(t)
                m = run_metrics(t, a, RunConfig())
                if m.timed_out or m.verdict != Verdict.ALL_DISTINCT or m.rounds > 64 * (D + n):
                    over.append((kind, n, s, m.rounds, D))
                ratios.append(m.rounds / (D + n))
            per_size.append(float(np.mean(ratios)))
        steps = [max(x, y) / min(x, y) for x, y in zip(per_size, per_size[1:])]
        ok &= max(steps) <= 2.0
        lines.append(f"{kind} C=" + "/".join(f"{c:.2f}" for c in per_size))
    # the absolute bound also holds on every single-shot corpus run
    runs, _ = corpus_runs
    for spec, label, D, a, m in runs:
        if label.startswith("det_small") and (m.timed_out or m.rounds > 64 * (D + a.k)):
            over.append((label, spec, m.rounds, D))
    passed = ok and not over
    report("round bound, small tokens", passed,
           "; ".join(lines) + f"; {len(over)} runs over 64(D+k)")
    assert ok, lines
    assert not over, over[:5]


def test_large_token_iteration_bound(report):
    n = k = B = 16
    Ls = (16, 64, 256, 1024)
    points = []  # (bound, iterations, label)
    over = []
    for kind in ("ring", "random"):
        for L in Ls:
            its = []
            for s in range(3):
                t = make_topology(kind, n, seed=s)
                a = assign_tokens(t, k, L, "distinct", seed=s)
                D = diameter(t)
                m = run(t, a, RunConfig(algorithm="det_large", bandwidth_B=B)).metrics
                lg = max(1.0, math.log2(L / B))
                if m.timed_out or m.verdict != Verdict.ALL_DISTINCT or m.rounds > 64 * (D * lg + k * math.ceil(L / B)):
                    over.append((kind, L, s, m.rounds))
                its.append((D + L / lg, m.build_false_iteration))
            x, y = np.mean(its, axis=0)
            points.append((x, y, f"{kind}/L={L}"))
    # one C for every point of both families, fitted in log space because the tolerance is a ratio
    C = fit_ratio([p[0] for p in points], [p[1] for p in points])
    ratios = [y / (C * x) for x, y, _ in points]
    within = all(0.5 <= r <= 2.0 for r in ratios)
    passed = within and not over
    report("iteration bound, large tokens", passed,
           f"C={C:.2f}, point/fit ratios {min(ratios):.2f}..{max(ratios):.2f}; {len(over)} runs over the round cap")
    assert within, list(zip([p[2] for p in points], ratios))
    assert not over, over


def test_impossibility_replication(report):
    t0 = time.perf_counter()
    details = []
    ok = True
    for n in (3, 4, 5, 6):
        eq, small, big = impossibility_check(n, 200)
        neg, _, _ = impossibility_check(n, 200, mismatched=True)
        undecided = small.metrics.verdict is None and big.metrics.verdict is None
        good = eq.passed and eq.compared >= 200 and undecided and not neg.passed
        ok &= good
        details.append(f"n={n}:{eq.compared}it{'' if good else '!'}")
    seconds = time.perf_counter() - t0
    passed = ok and seconds < 10
    report("impossibility replication", passed,
           " ".join(details) + f", negative controls diverge, {seconds:.1f}s")
    assert ok, details
    assert seconds < 10


def test_randomized_success_rate(report):
    n = k = 8
    L = 128
    t = make_ring(n, seed=0)
    distinct_ok = 0
    planted_ok = 0
    for s in range(1000):
        a = assign_tokens(t, k, L, "distinct", seed=s)
        m = run(t, a, RunConfig(algorithm="randomized", seed=s, c_id=4, beta=2.0)).metrics
        distinct_ok += m.verdict == Verdict.ALL_DISTINCT
        b = assign_tokens(t, k, L, "with_duplicates", seed=s, duplicates=1)
        m = run(t, b, RunConfig(algorithm="randomized", seed=s, c_id=4, beta=2.0)).metrics
        planted_ok += m.verdict == Verdict.COLLISION
    # hash construction: 1000 trials of 16 distinct 64-bit tokens
    kk, trials = 16, 1000
    fails = 0
    for s in range(trials):
        gen = stream(s, "hash-mc")
        toks: set[int] = set()
        while len(toks) < kk:
            toks.add(randbits(gen, 64))
        h = build_hash(64, kk, 2.0, seed=s)
        fails += len({h(x) for x in toks}) < kk
    p = 1 / kk**2
    limit = p + 3 * math.sqrt(p * (1 - p) / trials)
    passed = distinct_ok >= 875 and planted_ok == 1000 and fails / trials <= limit
    report("randomized success rate", passed,
           f"AllDistinct {distinct_ok}/1000 (need 875), planted Collision {planted_ok}/1000, "
           f"hash failures {fails}/{trials} (limit {limit:.4f})")
    assert distinct_ok >= 875
    assert planted_ok == 1000
    assert fails / trials <= limit


def _degenerate_cases():
    ring6 = make_ring(6, seed=2)
    path5 = make_path(5, seed=1)
    single = from_edges(1, [])
    return [
        ("single node, one token", single, TokenAssignment(4, ((9,),))),
        ("single node, distinct tokens", single, TokenAssignment(4, ((1, 2, 3),))),
        ("single node, duplicate", single, TokenAssignment(4, ((5, 5),))),
        ("empty-token nodes, distinct", path5, TokenAssignment(4, ((), (7,), (), (9,), ()))),
        ("empty-token nodes, duplicate", path5, TokenAssignment(4, ((), (7,), (), (7,), ()))),
        ("all tokens at one node", ring6, TokenAssignment(4, ((), (), (3, 1, 2, 7), (), (), ()))),
        ("all tokens at one node, duplicate", ring6, TokenAssignment(4, ((), (), (3, 1, 3), (), (), ()))),
        ("all-ones token", ring6, TokenAssignment(8, ((255,), (0,), (), (17,), (), (254,)))),
        ("all-ones token, duplicate", ring6, TokenAssignment(8, ((255,), (), (), (255,), (), ()))),
        ("all-ones only", path5, TokenAssignment(8, ((), (), (255,), (), ()))),
        ("k > 2^L", ring6, assign_tokens(ring6, 6, 2, "uniform", seed=4)),
        ("k > 2^L, one node", path5, assign_tokens(path5, 3, 1, "uniform", seed=5, placement="single")),
    ]


def test_degenerate_cases(report):
    bad = []
    total = 0
    for name, t, a in _degenerate_cases():
        expected = oracle_collision(a)
        cfgs = []
        for know in ("know_n", "know_k"):
            cfgs += [RunConfig(knowledge=know), RunConfig(knowledge=know, pack_tokens=True),
                     RunConfig(algorithm="det_large", knowledge=know, bandwidth_B=2),
                     RunConfig(algorithm="det_large", knowledge=know, bandwidth_B=a.L)]
            cfgs.append(RunConfig(algorithm="randomized", knowledge=know, seed=11))
        for cfg in cfgs:
            total += 1
            result = run(t, a, RunConfig(**{**cfg.to_dict(), "trace_level": "full"}))
            m = result.metrics
            rep = check_trace(result.trace, a, t)
            if m.timed_out or not m.agree or m.verdict != expected or not rep.ok:
                bad.append((name, cfg.algorithm, cfg.knowledge, cfg.pack_tokens, m.verdict, expected))
    report("degenerate cases", not bad, f"{total - len(bad)}/{total} runs correct")
    assert not bad, bad
