"""Randomized property checks over small instances."""
from hypothesis import given, settings
from hypothesis import strategies as st

from tokcol.algo_large import splice, split_pieces
from tokcol.engine import RunConfig, decode_value, encode_value, run
from tokcol.messages import TOP_ID, Mark, Verdict
from tokcol.topology import TokenAssignment, emit_instance, make_path, make_random_connected, make_ring, parse_instance
from tokcol.verify import check_trace, oracle_collision


@st.composite
def instances(draw, max_n=8, max_L=10):
    kind = draw(st.sampled_from(["ring", "path", "random"]))
    n = draw(st.integers(3 if kind == "ring" else 1, max_n))
    seed = draw(st.integers(0, 2**32))
    if kind == "ring":
        t = make_ring(n, seed)
    elif kind == "path":
        t = make_path(n, seed)
    else:
        t = make_random_connected(n, draw(st.floats(0, 1)), seed)
    L = draw(st.integers(1, max_L))
    lists = draw(st.lists(st.lists(st.integers(0, (1 << L) - 1), max_size=3), min_size=n, max_size=n)
                 .filter(lambda ls: any(ls)))
    return t, TokenAssignment(L, tuple(tuple(x) for x in lists))


@settings(max_examples=150, deadline=None)
@given(instances(), st.sampled_from(["know_n", "know_k"]), st.booleans())
def test_single_shot_matches_oracle(inst, know, pack):
    t, a = inst
    result = run(t, a, RunConfig(knowledge=know, pack_tokens=pack, trace_level="full"))
    assert result.metrics.agree and result.metrics.verdict == oracle_collision(a)
    assert check_trace(result.trace, a, t).ok


@settings(max_examples=100, deadline=None)
@given(instances(max_L=24), st.integers(1, 6), st.sampled_from(["know_n", "know_k"]))
def test_pipelined_matches_oracle(inst, B, know):
    t, a = inst
    result = run(t, a, RunConfig(algorithm="det_large", knowledge=know, bandwidth_B=B, trace_level="full"))
    assert result.metrics.agree and result.metrics.verdict == oracle_collision(a)
    assert check_trace(result.trace, a, t).ok


@settings(max_examples=60, deadline=None)
@given(instances(max_L=30), st.integers(0, 2**64 - 1))
def test_randomized_never_wrongly_distinct(inst, seed):
    t, a = inst
    m = run(t, a, RunConfig(algorithm="randomized", seed=seed)).metrics
    if oracle_collision(a) == Verdict.COLLISION:
        assert m.verdict == Verdict.COLLISION


@given(st.integers(1, 8), st.integers(1, 12), st.data())
def test_split_splice_inverse(B, M, data):
    value = data.draw(st.integers(0, (1 << (M * B)) - 1))
    lo = data.draw(st.integers(1, M))
    hi = data.draw(st.integers(lo, M))
    prefix = splice(TOP_ID, M, B, 1, split_pieces(value, M, B, 1, lo - 1)) if lo > 1 else TOP_ID
    got = splice(prefix, M, B, lo, split_pieces(value, M, B, lo, hi))
    keep = (M - hi) * B
    assert got >> keep == value >> keep and got & ((1 << keep) - 1) == (1 << keep) - 1


@given(instances(max_L=40))
def test_instance_format_round_trip(inst):
    t, a = inst
    assert parse_instance(emit_instance(t, a)) == (t, a)


@given(st.one_of(st.none(), st.integers(0, 2**80), st.just(TOP_ID), st.sampled_from(list(Mark)),
                 st.sampled_from(list(Verdict)), st.tuples(st.integers(0, 99), st.integers(0, 99))))
def test_trace_value_encoding(x):
    import json

    encoded = json.loads(json.dumps(encode_value(x)))
    name = {Mark: "ele", Verdict: "res"}.get(type(x), "rid")
    assert decode_value(name, encoded) == x
