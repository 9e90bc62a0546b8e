import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqkd import ldpc, reconciliation
from mdqkd.errors import ProtocolAbort
from mdqkd.toeplitz import descriptor_from_bits, ev_tag
from mdqkd.vss import UNITS, LocalNet, share

CODE = ldpc.build(2048, 0.81)


def shares_of(z, g):
    return share(z, [g.integers(0, 2, len(z), dtype=np.uint8) for _ in range(3)])


@settings(max_examples=40)
@given(st.integers(1, 64), st.integers(0, 2 ** 32 - 1))
def test_permutation_roundtrip(n_bytes, seed):
    g = np.random.default_rng(seed)
    perm = reconciliation.byte_permutation(n_bytes, seed)
    bits = g.integers(0, 2, 8 * n_bytes * 3, dtype=np.uint8)
    assert np.array_equal(reconciliation.unpermute(reconciliation.permute(bits, perm), perm), bits)
    ident = reconciliation.identity_permutation(n_bytes)
    assert np.array_equal(reconciliation.permute(bits, ident), bits)


def test_permutation_commutes_with_sharing():
    g = np.random.default_rng(1)
    z = g.integers(0, 2, 1 << 12, dtype=np.uint8)
    s = shares_of(z, g)
    perm = reconciliation.byte_permutation(512)
    permuted = s.map(lambda v: reconciliation.permute(v, perm))
    assert np.array_equal(permuted.secret(), reconciliation.permute(z, perm))


def test_permute_rejects_partial_block():
    with pytest.raises(ValueError):
        reconciliation.permute(np.zeros(12, np.uint8), np.arange(2))


def test_padding_to_whole_blocks():
    bits = np.ones(3000, np.uint8)
    padded = reconciliation.pad_key(bits, CODE.n)
    assert len(padded) == 4096 and padded[3000:].sum() == 0
    assert reconciliation.n_blocks(3000, CODE.n) == 2
    prepared = reconciliation.prepare(bits, CODE)
    assert len(prepared) == 4096 and prepared.sum() == 3000
    with pytest.raises(ValueError):
        reconciliation.blocks(bits, CODE)


def test_central_decode_recovers_alice():
    g = np.random.default_rng(2)
    z_a = g.integers(0, 2, 4 * CODE.n, dtype=np.uint8)
    z_b = z_a ^ (g.random(z_a.size) < 0.01).astype(np.uint8)
    res = reconciliation.central_decode(z_b, reconciliation.syndromes(z_a, CODE), 0.02, CODE)
    assert res.ok and np.array_equal(res.corrected, z_a)
    with pytest.raises(ValueError):
        reconciliation.decode_blocks(z_b, reconciliation.syndromes(z_a, CODE)[:2], 0.02, CODE)


def setup_distributed(seed, p=0.01):
    g = np.random.default_rng(seed)
    z_a = g.integers(0, 2, 2 * CODE.n, dtype=np.uint8)
    z_b = z_a ^ (g.random(z_a.size) < p).astype(np.uint8)
    s = shares_of(z_a, g)
    held = {u: s.held_by(u) for u in UNITS}
    return z_a, z_b, s, held


def test_distributed_zero_errors_leave_shares_alone():
    z_a, _, _, held = setup_distributed(3)
    res = reconciliation.distributed_decode(held, reconciliation.syndromes(z_a, CODE), 0.02,
                                            CODE, LocalNet())
    for r in res.values():
        assert r.ok and not r.error_pattern.any()


def test_distributed_corrects_share_four():
    z_a, z_b, s, held = setup_distributed(4)
    sy_b = reconciliation.syndromes(z_b, CODE)
    res = reconciliation.distributed_decode(held, sy_b, 0.02, CODE, LocalNet())
    central = reconciliation.central_decode(z_b, reconciliation.syndromes(z_a, CODE), 0.02, CODE)
    for r in res.values():
        assert np.array_equal(r.error_pattern, central.error_pattern)
        fixed = s.shares[:3] + [s.shares[3] ^ r.error_pattern]
        assert np.array_equal(np.bitwise_xor.reduce(fixed), z_b)


def test_distributed_masks_a_lying_syndrome_holder():
    z_a, z_b, _, held = setup_distributed(5)
    sy_b = reconciliation.syndromes(z_b, CODE)
    honest = reconciliation.distributed_decode(held, sy_b, 0.02, CODE, LocalNet())

    def tamper(sender, receiver, kind, payload):
        return payload ^ 1 if sender == "A1" and kind.startswith("syndrome") else payload
    lied = reconciliation.distributed_decode(held, sy_b, 0.02, CODE, LocalNet(tamper=tamper))
    for u in ("A2", "A3"):
        assert np.array_equal(lied[u].error_pattern, honest[u].error_pattern)


def test_distributed_aborts_without_majority():
    _, z_b, _, held = setup_distributed(6)
    g = np.random.default_rng(0)

    def tamper(sender, receiver, kind, payload):
        if kind == "syndrome1" and sender in ("A2", "A3"):
            return g.integers(0, 2, payload.shape, dtype=np.uint8)
        return payload
    with pytest.raises(ProtocolAbort):
        reconciliation.distributed_decode(held, reconciliation.syndromes(z_b, CODE), 0.02, CODE,
                                          LocalNet(tamper=tamper))


def test_share_tags_xor_to_key_tag():
    g = np.random.default_rng(7)
    z = g.integers(0, 2, 5000, dtype=np.uint8)
    s = shares_of(z, g)
    d = descriptor_from_bits(int.from_bytes(g.bytes(16), "little"))
    tags = reconciliation.share_tags({k: s.shares[k - 1] for k in range(1, 5)}, d)
    assert tags[1] ^ tags[2] ^ tags[3] ^ tags[4] == ev_tag(z, d)


@pytest.mark.slow
def test_verification_catches_every_residual_failure():
    code = ldpc.get_code()
    g = np.random.default_rng(8)
    failures = undetected = 0
    for _ in range(1000):
        d = descriptor_from_bits(int.from_bytes(g.bytes(16), "little"))
        z_a = g.integers(0, 2, code.n, dtype=np.uint8)
        z_b = z_a ^ (g.random(code.n) < 0.023).astype(np.uint8)
        res = reconciliation.central_decode(z_b, reconciliation.syndromes(z_a, code), 0.023, code)
        wrong = not np.array_equal(res.corrected, z_a)
        failures += wrong
        undetected += wrong and ev_tag(res.corrected, d) == ev_tag(z_a, d)
    print(f"{failures} residual block failures at 2.3%, {undetected} missed by verification")
    assert undetected == 0
