from tokcol.messages import (
    TOP_ID,
    Layout,
    Mark,
    RoundMessage,
    Verdict,
    clog2,
    count_width,
    default_bandwidth,
    message_bits,
    pack_capacity,
    pieces_per_iteration,
    pieces_per_token,
)


def test_clog2():
    assert [clog2(x) for x in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]
    assert clog2(1 << 200) == 200 and clog2((1 << 200) + 1) == 201
    assert count_width(8) == 4


def test_small_message_is_22_bits():
    m = RoundMessage(None, True, 3, False, False, None, Mark.BOT)
    fields = Layout(8, 8).fields(m)
    assert fields == {"res": 2, "build": 1, "ischild": 1, "f": 1, "cnt": 5, "rid": 10, "ele": 2}
    assert message_bits(m, 8, 8) == 22


def test_top_rid_uses_tag_only():
    m = RoundMessage(None, True, TOP_ID, False, False, None, Mark.TOP)
    assert Layout(8, 8).fields(m)["rid"] == 2


def test_packed_payload():
    m = RoundMessage(Verdict.COLLISION, False, 1, True, True, 3, (1, 2, 3, 4))
    assert Layout(8, 4, pack_cap=4).fields(m)["ele"] == 2 + 3 + 16


def test_default_bandwidth_covers_largest_message():
    for n, L in ((8, 8), (3, 1), (100, 20)):
        B = default_bandwidth(n, L)
        worst = RoundMessage(Verdict.COLLISION, False, 0, True, True, n, (0,))
        assert message_bits(worst, n, L) == B


def test_pack_capacity_fits_budget():
    for n, L, B in ((16, 4, 64), (32, 2, 80), (8, 8, 30)):
        cap = pack_capacity(n, L, B)
        m = RoundMessage(Verdict.COLLISION, False, 0, True, True, n, tuple(range(cap)))
        assert message_bits(m, n, L, pack_cap=cap) <= B or cap == 1


def test_piece_arithmetic():
    assert (pieces_per_token(4096, 32), pieces_per_iteration(128, 32)) == (128, 1)
    assert (pieces_per_token(64, 32), pieces_per_iteration(2, 32)) == (2, 1)
    assert (pieces_per_token(16, 16), pieces_per_iteration(1, 16)) == (1, 1)
    assert pieces_per_iteration(1 << 20, 4) == 5


def test_verdict_text():
    assert str(Verdict.ALL_DISTINCT) == "AllDistinct" and str(Verdict.COLLISION) == "Collision"
