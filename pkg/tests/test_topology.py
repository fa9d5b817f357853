import pytest

from tokcol.topology import (
    InfeasibleAssignmentError,
    InvalidParameterError,
    TokenAssignment,
    assign_tokens,
    diameter,
    eccentricities,
    emit_instance,
    from_edges,
    make_dumbbell,
    make_impossibility_pair,
    make_path,
    make_random_connected,
    make_ring,
    parse_instance,
)
from tokcol.verify import oracle_collision
from tokcol.messages import Verdict


def test_ring_basic():
    t = make_ring(3, 5)
    assert t.n == 3 and len(t.edges) == 3
    assert all(t.degree(v) == 2 for v in range(3))
    assert diameter(make_ring(6, 1)) == 3


def test_ring_rejects_small_n():
    with pytest.raises(InvalidParameterError, match="n >= 3"):
        make_ring(2, 0)


def test_ports_are_consistent():
    t = make_random_connected(12, 0.3, seed=4)
    t.check()
    for v in range(t.n):
        for port in range(1, t.degree(v) + 1):
            u, pu = t.peer(v, port)
            assert t.peer(u, pu) == (v, port)


def test_random_connected_examples():
    one = make_random_connected(1, 0.5, 0)
    assert one.n == 1 and one.edges == []
    assert len(make_random_connected(5, 0.0, 3).edges) == 4
    k8 = make_random_connected(8, 1.0, 3)
    assert len(k8.edges) == 28 and diameter(k8) == 1
    for s in range(10):
        assert make_random_connected(10, 0.1, s).is_connected()


def test_random_connected_is_seeded():
    assert make_random_connected(10, 0.3, 9) == make_random_connected(10, 0.3, 9)


def test_dumbbell_examples():
    t = make_dumbbell(1, 0)
    assert t.n == 2 and len(t.edges) == 1
    t = make_dumbbell(3, 0)
    assert len(t.edges) == 7
    assert diameter(make_dumbbell(2, 2)) == 5


def test_diameter_examples():
    assert diameter(from_edges(1, [])) == 0
    assert diameter(make_path(5, 0)) == 4
    assert list(eccentricities(make_path(3, 0))) == [2, 1, 2]


def test_impossibility_pair_n3():
    pair = make_impossibility_pair(3)
    assert pair.small_tokens.lists == ((1,), (2,), (3,))
    assert pair.big_tokens.lists == ((1,), (2,), (3,), (1,), (2,), (3,))
    assert oracle_collision(pair.small_tokens) == Verdict.ALL_DISTINCT
    assert oracle_collision(pair.big_tokens) == Verdict.COLLISION


def test_impossibility_pair_correspondence():
    pair = make_impossibility_pair(4)
    assert pair.correspondence == (0, 1, 2, 3, 0, 1, 2, 3)
    with pytest.raises(InvalidParameterError):
        make_impossibility_pair(2)


def test_assign_tokens_examples():
    t = make_ring(3, 0)
    a = assign_tokens(t, 3, 8, "distinct", 1)
    assert a.k == 3 and len(set(a.tokens())) == 3
    assert oracle_collision(a) == Verdict.ALL_DISTINCT
    with pytest.raises(InfeasibleAssignmentError):
        assign_tokens(t, 3, 1, "distinct", 1)
    p = make_path(2, 0)
    b = assign_tokens(p, 2, 4, "with_duplicates", 1, duplicates=1)
    assert b.lists[0] == b.lists[1] and len(b.lists[0]) == 1


def test_assign_tokens_modes():
    t = make_path(9, 0)
    a = assign_tokens(t, 5, 10, "adversarial_min_far", 2)
    far = [v for v, e in enumerate(eccentricities(t)) if e == max(eccentricities(t))]
    assert min(a.tokens()) in a.lists[far[0]]
    s = assign_tokens(t, 6, 10, "distinct", 2, placement="single")
    assert sum(1 for x in s.lists if x) == 1
    u = assign_tokens(t, 9, 2, "uniform", 2)
    assert oracle_collision(u) == Verdict.COLLISION  # pigeonhole
    d = assign_tokens(t, 10, 12, "with_duplicates", 2, duplicates=3)
    assert len(d.tokens()) - len(set(d.tokens())) == 3


def test_assign_tokens_rejects_bad_input():
    t = make_ring(4, 0)
    with pytest.raises(InvalidParameterError):
        assign_tokens(t, 0, 4)
    with pytest.raises(InvalidParameterError):
        assign_tokens(t, 4, 4, "bogus")
    with pytest.raises(InvalidParameterError):
        assign_tokens(t, 3, 4, "with_duplicates", duplicates=2)
    with pytest.raises(InvalidParameterError):
        TokenAssignment(3, ((8,),))
    with pytest.raises(InvalidParameterError):
        TokenAssignment(3, ((), ()))


def test_instance_round_trip():
    t = make_random_connected(7, 0.4, 3)
    a = assign_tokens(t, 9, 20, "with_duplicates", 3, duplicates=2)
    text = emit_instance(t, a)
    t2, a2 = parse_instance(text)
    assert t2 == t and a2 == a
    assert emit_instance(t2, a2) == text


def test_parse_instance_errors():
    with pytest.raises(ValueError):
        parse_instance("not an instance\n")
    with pytest.raises(ValueError, match="unsupported"):
        parse_instance("# tokcol-instance v9\n1 1 4\n0: 1\n")
