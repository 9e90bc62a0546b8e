import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqkd.bits import xor
from mdqkd.errors import MajorityFailure
from mdqkd.vss import (UNITS, LocalNet, ShareSet, deal, deal_public, holders, majority_vote,
                       missing_share, rbs_generate, reconstruct, share)


def random_shares(rng, n=64):
    secret = rng.integers(0, 2, n, dtype=np.uint8)
    return secret, share(secret, [rng.integers(0, 2, n, dtype=np.uint8) for _ in range(3)])


def test_holders_cover_three_units():
    for k in range(1, 5):
        assert len(holders(k)) == 3 and UNITS[k - 1] not in holders(k)
    assert missing_share("A3") == 3


@settings(max_examples=50)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=100), st.integers(0, 2 ** 32 - 1))
def test_shares_xor_to_secret(bits, seed):
    rng = np.random.default_rng(seed)
    secret = np.array(bits, dtype=np.uint8)
    s = share(secret, [rng.integers(0, 2, len(bits), dtype=np.uint8) for _ in range(3)])
    assert np.array_equal(s.secret(), secret)
    # any single unit misses one share
    for u in UNITS:
        assert len(s.held_by(u)) == 3


def test_share_rejects_bad_randomness():
    with pytest.raises(ValueError):
        share([1, 0], [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        share([1, 0], [[1, 0], [0, 1], [1]])


def test_share_map_is_linear(rng):
    secret, s = random_shares(rng)
    idx = rng.permutation(len(secret))[:20]
    assert np.array_equal(s.map(lambda a: a[idx]).secret(), secret[idx])


def test_majority_vote_whole_values():
    a, b = np.array([1, 0, 1], np.uint8), np.array([1, 1, 1], np.uint8)
    assert np.array_equal(majority_vote([a, b, a.copy()]), a)
    with pytest.raises(MajorityFailure):
        majority_vote([a, b, np.array([0, 0, 0], np.uint8)])
    with pytest.raises(ValueError):
        majority_vote([a, a])
    assert majority_vote([(1, a), (1, a), (2, a)]) == (1, a)


def test_majority_vote_logs_disagreement():
    net = LocalNet()
    a = np.zeros(16, np.uint8)
    b = a.copy()
    b[3] = 1
    majority_vote([a, a, b], net.transcript, "A4", "x")
    rec = net.transcript.records[-1]
    assert rec.kind == "mv-disagreement:x" and "1 differing bytes" in rec.note


def test_reconstruct_outvotes_one_liar(rng):
    secret, s = random_shares(rng)
    copies = {k: [s.shares[k - 1].copy() for _ in holders(k)] for k in range(1, 5)}
    copies[2][0] ^= 1
    assert np.array_equal(reconstruct(copies), secret)
    with pytest.raises(ValueError):
        reconstruct({1: copies[1]})


def tamper_from(unit, fn):
    def tamper(sender, receiver, kind, payload):
        return fn(receiver, kind, payload) if sender == unit else payload
    return tamper


def test_deal_honest(rng):
    secret, s = random_shares(rng)
    net = LocalNet()
    held = deal(s, net, "D")
    for u in UNITS:
        for k, v in held[u].items():
            assert np.array_equal(v, s.shares[k - 1])
    assert not net.transcript.unresolved_complaints()


def test_deal_corrupt_dealer_is_forced_consistent(rng):
    secret, s = random_shares(rng)
    bad = s.shares[0] ^ 1

    def tamper(sender, receiver, kind, payload):
        if sender == "D" and kind == "share1" and receiver == "A2":
            return bad
        return payload
    net = LocalNet(tamper=tamper)
    held = deal(s, net, "D")
    copies = [held[u][1] for u in holders(1)]
    assert all(np.array_equal(c, copies[0]) for c in copies)
    assert not net.transcript.unresolved_complaints()
    assert [c.kind for c in net.transcript.complaints()] == ["complaint:share1"]


def test_deal_silent_dealer_defaults_to_null(rng):
    _, s = random_shares(rng)
    net = LocalNet(tamper=lambda snd, rcv, kind, p: None if snd == "D" else p)
    held = deal(s, net, "D")
    for u in UNITS:
        assert all(not v.any() for v in held[u].values())


def test_deal_lying_holder_cannot_change_honest_copies(rng):
    secret, s = random_shares(rng)
    net = LocalNet(tamper=tamper_from("A2", lambda rcv, kind, p: p ^ 1 if kind.endswith(".check") else p))
    held = deal(s, net, "D")
    for u in ("A1", "A3", "A4"):
        for k, v in held[u].items():
            assert np.array_equal(v, s.shares[k - 1])


def test_deal_public_resolves_disagreement():
    value = (3, 4)
    net = LocalNet(tamper=lambda snd, rcv, kind, p: (9, 9) if (snd, rcv) == ("D", "A1") else p)
    held = deal_public(value, net, "D", ("A1", "A2", "A3"), "meta")
    assert set(held.values()) == {value}


# ------------------------------------------------------------------ RBS


def rngs(seed=0):
    return {"A1": np.random.default_rng(seed), "A2": np.random.default_rng(seed + 1)}


def test_rbs_honest_agrees_everywhere():
    res = rbs_generate(128, rngs(), LocalNet())
    assert res.retries == 0
    expected = res.r1 ^ res.r2
    for v in res.values.values():
        assert np.array_equal(v, expected)


def test_rbs_liar_in_step_two_is_corrected_by_broadcast():
    # A3 lies to A1 once; the cross-check exposes it and the broadcast settles it
    sent = {"n": 0}

    def tamper(sender, receiver, kind, payload):
        if sender == "A3" and receiver == "A1" and kind == "rbs.R" and sent["n"] == 0:
            sent["n"] += 1
            return payload ^ 1
        return payload
    res = rbs_generate(64, rngs(), LocalNet(tamper=tamper))
    assert res.retries == 1
    assert all(np.array_equal(v, res.values["A3"]) for v in res.values.values())


@pytest.mark.parametrize("unit", ["A1", "A2", "A3"])
def test_rbs_persistent_garbage_ends_in_majority_failure(unit):
    garbage = np.random.default_rng(9)

    def tamper(sender, receiver, kind, payload):
        if sender == unit and isinstance(payload, np.ndarray) and kind.startswith("rbs"):
            return garbage.integers(0, 2, len(payload), dtype=np.uint8)
        return payload
    with pytest.raises(MajorityFailure):
        rbs_generate(32, rngs(), LocalNet(tamper=tamper), corrupt=(unit,))


def test_rbs_silent_holder_leaves_honest_units_consistent():
    net = LocalNet(tamper=lambda snd, rcv, kind, p: None if snd == "A2" else p)
    res = rbs_generate(32, rngs(), net, corrupt=("A2",))
    # A2 contributed the null string
    assert np.array_equal(res.values["A1"], res.r1)
    assert np.array_equal(res.values["A3"], res.values["A4"])
    assert np.array_equal(res.values["A1"], res.values["A3"])


def test_rbs_retry_cap_respected():
    calls = {"n": 0}

    def tamper(sender, receiver, kind, payload):
        if kind == "rbs.check" and sender == "A1":
            calls["n"] += 1
            return payload ^ 1
        return payload
    with pytest.raises(MajorityFailure, match="3 times"):
        rbs_generate(16, rngs(), LocalNet(tamper=tamper), retry_cap=3, corrupt=("A1",))
    assert calls["n"] == 3


def test_shareset_length_and_secret_roundtrip(rng):
    shares = [rng.integers(0, 2, 10, dtype=np.uint8) for _ in range(4)]
    s = ShareSet(shares)
    assert s.length == 10 and np.array_equal(s.secret(), xor(*shares))


def test_share_examples():
    z = np.zeros(8, np.uint8)
    assert not share(z, [z, z, z]).shares[3].any()
    g = np.random.default_rng(4)
    s = g.integers(0, 2, (4, 8), dtype=np.uint8)
    assert np.array_equal(share(s[0], s[1:]).shares[3], s[0] ^ s[1] ^ s[2] ^ s[3])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sparse_linear_maps_pass_through_shares(seed):
    g = np.random.default_rng(seed)
    n, rows = 200, 30
    secret, s = random_shares(g, n)
    mat = (g.random((rows, n)) < 0.05).astype(np.int64)
    f = lambda v: (mat @ v) % 2
    assert np.array_equal(xor(*[f(x) for x in s.shares]), f(secret))


def test_single_liar_any_substitution_long_strings():
    g = np.random.default_rng(8)
    secret, s = random_shares(g, 10_000)
    for liar in UNITS:
        copies = {k: [s.shares[k - 1].copy() for _ in holders(k)] for k in range(1, 5)}
        for k in copies:
            if liar in holders(k):
                copies[k][holders(k).index(liar)] = g.integers(0, 2, 10_000, dtype=np.uint8)
        assert np.array_equal(reconstruct(copies), secret)


def test_rbs_a3_garbage_once_still_yields_xor():
    garbage = np.random.default_rng(2)
    sent = {"n": 0}

    def tamper(sender, receiver, kind, payload):
        if sender == "A3" and kind == "rbs.R" and receiver != "*" and sent["n"] < 2:
            sent["n"] += 1
            return garbage.integers(0, 2, len(payload), dtype=np.uint8)
        return payload
    res = rbs_generate(64, rngs(3), LocalNet(tamper=tamper), corrupt=("A3",))
    for u in ("A1", "A2", "A4"):
        assert np.array_equal(res.values[u], res.r1 ^ res.r2)
    assert res.retries == 1


def test_rbs_corrupt_a1_cannot_bias_output():
    """A1 commits zeros and echoes R back as its check; R stays uniform."""
    runs, length = 10_000, 16
    totals = np.zeros(length)
    for seed in range(runs):
        seen = {}

        def tamper(sender, receiver, kind, payload):
            if sender == "A3" and receiver == "A1" and kind == "rbs.R":
                seen["R"] = payload
            if sender == "A1" and kind == "rbs.R1":
                return np.zeros(length, np.uint8)
            if sender == "A1" and kind == "rbs.check":
                return seen["R"]
            return payload
        gens = {"A1": np.random.default_rng([seed, 1]), "A2": np.random.default_rng([seed, 2])}
        res = rbs_generate(length, gens, LocalNet(tamper=tamper), corrupt=("A1",))
        assert np.array_equal(res.values["A2"], res.values["A4"])
        totals += res.values["A2"]
    sigma = np.sqrt(0.25 / runs)
    assert np.all(np.abs(totals / runs - 0.5) < 4 * sigma)


def test_rbs_commitments_reach_a3_before_r_leaves():
    net = LocalNet()
    rbs_generate(32, rngs(), net)
    recs = list(net.transcript)
    commits = [r.seq for r in recs if r.receiver == "A3" and r.kind in ("rbs.R1", "rbs.R2")]
    first_out = min(r.seq for r in recs if r.sender == "A3" and r.kind == "rbs.R")
    assert len(commits) == 2 and max(commits) < first_out
