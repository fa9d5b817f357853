"""Command-line front end: ``tokcol gen|run|sweep|verify|impossibility``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import experiments
from .engine import (
    BandwidthViolation,
    InternalInvariantError,
    RunConfig,
    run,
    write_trace,
)
from .topology import (
    InfeasibleAssignmentError,
    InvalidParameterError,
    emit_instance,
    make_impossibility_pair,
    parse_instance,
)
from .messages import Verdict
from .verify import (
    InvariantReport,
    check_trace,
    check_trace_equivalence,
    fault_injection_selftest,
    oracle_collision,
)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2
EXIT_TIMEOUT = 3
EXIT_BANDWIDTH = 4
EXIT_NO_DECISION = 5

EXIT_TABLE = """exit codes:
  0  success (verdict equals the oracle / all checks pass)
  1  verdict mismatch, disagreement, or invariant failure
  2  invalid parameters or input files
  3  round limit reached without a verdict
  4  bandwidth violation (message larger than B in strict mode)
  5  no-decision run (--know none never produces a verdict)"""

ALGO = {"det-small": "det_small", "det-large": "det_large", "rand": "randomized"}
KNOW = {"n": "know_n", "k": "know_k", "none": "none"}


class UsageError(Exception):
    pass


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    if args.kind == "impossibility":
        pair = make_impossibility_pair(args.n, mismatched=args.mismatched)
        out = Path(args.out or "impossibility")
        out.mkdir(parents=True, exist_ok=True)
        (out / "small.txt").write_text(emit_instance(pair.small, pair.small_tokens))
        (out / "big.txt").write_text(emit_instance(pair.big, pair.big_tokens))
        (out / "correspondence.txt").write_text(
            "# big-ring node -> small-ring node\n"
            + "".join(f"{b} {s}\n" for b, s in enumerate(pair.correspondence))
        )
        print(f"wrote {out}/small.txt, {out}/big.txt, {out}/correspondence.txt")
        return EXIT_OK
    if args.k is None or args.L is None:
        raise UsageError("gen needs --k and --L")
    spec = experiments.InstanceSpec(
        args.kind, args.n, args.k, args.L, args.mode, args.duplicates, args.placement, args.seed,
        args.edge_prob, args.bridge_len,
    )
    t, a = spec.build()
    _write(args.out, emit_instance(t, a))
    return EXIT_OK


# --------------------------------------------------------------------- run


def _load_instance(path: str):
    try:
        return parse_instance(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def cmd_run(args) -> int:
    t, a = _load_instance(args.instance)
    cfg = RunConfig(
        algorithm=ALGO[args.algo], knowledge=KNOW[args.know], bandwidth_B=args.B,
        pack_tokens=args.pack, round_limit=args.round_limit,
        trace_level="full" if args.trace else "metrics", seed=args.seed,
    )
    try:
        result = run(t, a, cfg)
    except BandwidthViolation as exc:
        print(f"bandwidth violation: {exc}", file=sys.stderr)
        return EXIT_BANDWIDTH
    except InternalInvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    m = result.metrics
    oracle = oracle_collision(a)
    verdict = m.verdict
    rec = {
        "run_id": 0, "n": t.n, "k": a.k, "L": a.L, "D": result.D, "algorithm": cfg.algorithm,
        "knowledge": cfg.knowledge, "B": m.bandwidth, "rounds": m.rounds, "iterations": m.iterations,
        "verdict": "none" if verdict is None else str(verdict), "oracle_verdict": str(oracle),
        "max_bits": m.max_bits, "seed": cfg.seed, "build_false_iteration": m.build_false_iteration,
        "phase_rounds_elect": m.phase_rounds.get("elect", 0),
        "phase_rounds_seed": m.phase_rounds.get("seed_broadcast", 0),
        "phase_rounds_aggregate": m.phase_rounds.get("aggregate", 0),
    }
    if cfg.knowledge == "none":
        rec["status"] = "no_decision"
        code = EXIT_NO_DECISION
    elif m.timed_out:
        rec["status"] = "timeout"
        code = EXIT_TIMEOUT
    elif verdict == "split":
        rec["status"] = "disagree"
        code = EXIT_MISMATCH
    elif rec["verdict"] != rec["oracle_verdict"]:
        one_sided = cfg.algorithm == "randomized" and verdict == Verdict.COLLISION
        rec["status"] = "false_positive" if one_sided else "mismatch"
        code = EXIT_MISMATCH
    else:
        rec["status"] = "ok"
        code = EXIT_OK
    _write(args.out, experiments.records_to_csv([rec]))
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace(result.trace, fh)
    print(f"verdict={rec['verdict']} oracle={rec['oracle_verdict']} rounds={m.rounds} "
          f"iterations={m.iterations} status={rec['status']}", file=sys.stderr)
    return code


# ------------------------------------------------------------------- sweep


def cmd_sweep(args) -> int:
    if not args.config:
        raise UsageError("sweep needs --config")
    cfg = experiments.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    t0 = time.perf_counter()
    records = experiments.sweep(cfg, args.workers)
    out = args.out or cfg.output or None
    _write(out, experiments.records_to_csv(records))
    summary = experiments.summarize(records)
    bad = [r for r in records if r.get("status") in ("mismatch", "disagree")]
    print(json.dumps({"config_hash": cfg.digest(), "runs": len(records), "bad": len(bad),
                      "seconds": round(time.perf_counter() - t0, 3), "fit": summary}, indent=2),
          file=sys.stderr)
    return EXIT_MISMATCH if bad else EXIT_OK


# ------------------------------------------------------------------ verify


def verify_corpus(size: int, B: int, seed: int) -> tuple[InvariantReport, list[str]]:
    """Run the fuzz corpus with full traces; return the merged report and verdict errors."""
    total = InvariantReport()
    errors = []
    for i, spec in enumerate(experiments.default_corpus(size, B, seed)):
        t, a = spec.build()
        configs = [RunConfig(algorithm="det_large", bandwidth_B=B, trace_level="full")]
        if spec.L <= B:
            configs += [RunConfig(trace_level="full"), RunConfig(pack_tokens=True, trace_level="full")]
        for cfg in configs:
            result = run(t, a, cfg)
            rep = check_trace(result.trace, a, t)
            total.merge(rep)
            if not rep.ok and len(errors) < 20:
                name = rep.failed()[0]
                errors.append(f"instance {i} {spec} {cfg.algorithm} pack={cfg.pack_tokens}: "
                              f"{name} {rep.first(name)}")
    return total, errors


def selftest(B: int = 16) -> dict[str, list[bool]]:
    from .topology import assign_tokens, make_path

    t = make_path(6, 1)
    a = assign_tokens(t, 8, 8, "distinct", 3, placement="spread")
    out = {}
    for algo in ("det_small", "det_large"):
        result = run(t, a, RunConfig(algorithm=algo, trace_level="full",
                                     bandwidth_B=None if algo == "det_small" else B // 4))
        for name, hits in fault_injection_selftest(result.trace, a, t).items():
            out[f"{algo}:{name}"] = hits
    return out


def cmd_verify(args) -> int:
    if args.trace:
        if not args.instance:
            raise UsageError("--trace needs --instance")
        from .engine import read_trace

        t, a = _load_instance(args.instance)
        with open(args.trace) as fh:
            rep = check_trace(read_trace(fh), a, t)
        _write(args.out, rep.to_text())
        return EXIT_OK if rep.ok else EXIT_MISMATCH
    if args.selftest:
        res = selftest()
        missed = {k: v for k, v in res.items() if not all(v)}
        for k, v in res.items():
            print(f"{k}: {sum(v)}/{len(v)} caught")
        return EXIT_MISMATCH if missed else EXIT_OK
    rep, errors = verify_corpus(args.corpus_size, args.B, args.seed or 0)
    _write(args.out, rep.to_text())
    for e in errors:
        print(e, file=sys.stderr)
    return EXIT_OK if rep.ok and not errors else EXIT_MISMATCH


# ----------------------------------------------------------- impossibility


def impossibility_check(n: int, rounds: int, algorithm: str = "det_small", mismatched: bool = False):
    pair = make_impossibility_pair(n, mismatched=mismatched)
    cfg = RunConfig(algorithm=algorithm, knowledge="none", round_limit=rounds, trace_level="full")
    small = run(pair.small, pair.small_tokens, cfg)
    big = run(pair.big, pair.big_tokens, cfg)
    return check_trace_equivalence(small.trace, big.trace, pair.correspondence), small, big


def cmd_impossibility(args) -> int:
    ok = True
    for n in args.n:
        eq, small, big = impossibility_check(n, args.rounds, ALGO[args.algo])
        decided = small.metrics.verdict is not None or big.metrics.verdict is not None
        line = f"n={n}: {eq}; verdicts small={small.metrics.verdict} big={big.metrics.verdict}"
        ok &= eq.passed and not decided
        if args.negative_control:
            neg, _, _ = impossibility_check(n, args.rounds, ALGO[args.algo], mismatched=True)
            line += f"; mismatched ports: {'diverges' if not neg.passed else 'DOES NOT diverge'}"
            ok &= not neg.passed
        print(line)
    return EXIT_OK if ok else EXIT_MISMATCH


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--config", default=None, help="JSON experiment config")

    p = argparse.ArgumentParser(
        prog="tokcol", description="Token collision detection in anonymous CONGEST networks.",
        epilog=EXIT_TABLE + f"\n\nenvironment: {experiments.WORKERS_ENV} sets the sweep worker count; "
        "TOKCOL_BACKEND=numba|numpy picks the kernel backend.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate instance files")
    g.add_argument("--kind", choices=["ring", "path", "random", "dumbbell", "impossibility"], required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int)
    g.add_argument("--L", type=int)
    g.add_argument("--mode", default="distinct",
                   choices=["distinct", "with_duplicates", "adversarial_min_far", "uniform"])
    g.add_argument("--duplicates", type=int, default=1)
    g.add_argument("--placement", default="random", choices=["random", "spread", "single"])
    g.add_argument("--edge-prob", type=float, default=None)
    g.add_argument("--bridge-len", type=int, default=1)
    g.add_argument("--mismatched", action="store_true", help="impossibility: flip the big ring's ports")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", parents=[common], help="run one instance",
                       epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("instance")
    r.add_argument("--algo", choices=list(ALGO), default="det-small")
    r.add_argument("--know", choices=list(KNOW), default="n")
    r.add_argument("--B", type=int, default=None, help="bandwidth (det-small) or piece size (others)")
    r.add_argument("--pack", action="store_true", help="pack several tokens per message")
    r.add_argument("--round-limit", type=int, default=None)
    r.add_argument("--trace", default=None, help="write a full trace to this path")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run a config-driven sweep")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", parents=[common], help="invariant checks over the fuzz corpus")
    v.add_argument("--corpus-size", type=int, default=500)
    v.add_argument("--B", type=int, default=16)
    v.add_argument("--selftest", action="store_true", help="fault-injection negative controls")
    v.add_argument("--trace", default=None, help="check one recorded trace")
    v.add_argument("--instance", default=None, help="instance file for --trace")
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("impossibility", parents=[common], help="indistinguishable-ring replication")
    i.add_argument("--n", type=int, nargs="+", default=[3, 4, 5, 6])
    i.add_argument("--rounds", type=int, default=200)
    i.add_argument("--algo", choices=["det-small", "det-large"], default="det-small")
    i.add_argument("--negative-control", action="store_true")
    i.set_defaults(func=cmd_impossibility)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config and args.command != "sweep":
        parser.error("--config is only used by sweep")
    if args.command in ("gen", "run") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (InvalidParameterError, InfeasibleAssignmentError, experiments.ConfigError, UsageError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
