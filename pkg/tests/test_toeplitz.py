import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqkd import _kernels
from mdqkd.toeplitz import (clmul, descriptor_from_bits, ev_tag, irreducibles, is_admissible,
                            is_irreducible, lfsr_tag_generic, polymod, split_descriptor, tag_bits,
                            toeplitz_hash, toeplitz_seed_size)

from oracles import toeplitz_naive

u128 = st.integers(0, 2 ** 128 - 1)


def has_factor(poly):
    """Trial division by every polynomial of degree 1..deg/2."""
    deg = poly.bit_length() - 1
    for d in range(1, deg // 2 + 1):
        for f in range(1 << d, 1 << (d + 1)):
            if polymod(poly, f) == 0:
                return True
    return False


def test_irreducibility_against_trial_division():
    for poly in range(2, 1 << 11):
        assert is_irreducible(poly) == (not has_factor(poly)), bin(poly)
    # known counts of irreducible polynomials over GF(2)
    assert [len(irreducibles(d)) for d in range(1, 9)] == [2, 1, 2, 3, 6, 9, 18, 30]


def test_known_degree_64_irreducible():
    # x^64 + x^4 + x^3 + x + 1
    assert is_irreducible((1 << 64) | 0b11011)
    assert not is_irreducible(clmul((1 << 32) | 0b10001101, (1 << 32) | 0b10001101))


@settings(max_examples=30)
@given(u128)
def test_descriptor_is_admissible(bits):
    d = descriptor_from_bits(bits)
    assert is_admissible(d)
    taps, state = split_descriptor(d)
    assert state == ((bits >> 64) or 1)


def test_inadmissible_descriptor_rejected():
    with pytest.raises(ValueError):
        ev_tag([1, 0, 1], 0)


def sequence_tag(bits, taps, state, width):
    """Tag from the Toeplitz definition tag_k = sum_j m_j a[j + width - 1 - k]."""
    n = len(bits)
    a = [(state >> t) & 1 for t in range(width)]
    while len(a) < n + width:
        i = len(a) - width
        a.append(sum(((taps >> t) & 1) & a[i + t] for t in range(width)) & 1)
    tag = 0
    for k in range(width):
        bit = sum(bits[j] & a[j + width - 1 - k] for j in range(n)) & 1
        tag |= bit << k
    return tag


@settings(max_examples=40)
@given(st.lists(st.integers(0, 1), max_size=150), u128)
def test_generic_lfsr_matches_sequence_definition(bits, raw):
    d = descriptor_from_bits(raw)
    taps, state = split_descriptor(d)
    assert lfsr_tag_generic(bits, taps, state, 64) == sequence_tag(bits, taps, state, 64)
    assert ev_tag(bits, d) == lfsr_tag_generic(bits, taps, state, 64)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_backends_match_reference(backend):
    if backend == "compiled" and _kernels.BACKEND != "compiled":
        pytest.skip("compiled core not built")
    g = np.random.default_rng(11)
    for n in (0, 1, 63, 64, 65, 1000, 5000):
        d = descriptor_from_bits(int.from_bytes(g.bytes(16), "little"))
        taps, state = split_descriptor(d)
        x = g.integers(0, 2, n, dtype=np.uint8)
        assert ev_tag(x, d, backend=backend) == lfsr_tag_generic(x, taps, state, 64)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1), u128)
def test_tag_linearity(seed, raw):
    g = np.random.default_rng(seed)
    d = descriptor_from_bits(raw)
    a = g.integers(0, 2, 3000, dtype=np.uint8)
    b = g.integers(0, 2, 3000, dtype=np.uint8)
    assert ev_tag(a ^ b, d) == ev_tag(a, d) ^ ev_tag(b, d)
    assert ev_tag(a, d) == ev_tag(a.copy(), d)


def test_tag_bits_order():
    assert tag_bits(0b101).tolist()[:4] == [1, 0, 1, 0]


def test_small_tag_collision_rate():
    """Width-8 tags of 12-bit messages, every admissible descriptor, one fixed difference."""
    width, m_len = 8, 12
    diff = 0b100100000011
    msgs = np.arange(1 << m_len)
    msg_bits = ((msgs[:, None] >> np.arange(m_len)) & 1).astype(np.int64)
    partner = msgs ^ diff
    fractions = []
    for poly in irreducibles(width):
        taps = poly ^ (1 << width)
        for state in range(1, 1 << width):
            a = [(state >> t) & 1 for t in range(width)]
            while len(a) < m_len + width:
                i = len(a) - width
                a.append(sum(((taps >> t) & 1) & a[i + t] for t in range(width)) & 1)
            a = np.array(a)
            # T[j, k] = a[j + width - 1 - k]
            mat = a[np.arange(m_len)[:, None] + width - 1 - np.arange(width)[None, :]]
            tags = (msg_bits @ mat) % 2 @ (1 << np.arange(width))
            fractions.append(np.mean(tags == tags[partner]))
    bound = m_len * 2.0 ** (-width + 1)
    assert np.mean(fractions) <= bound
    # spot-check the production routine on the same descriptors
    t = irreducibles(width)[3] ^ (1 << width)
    assert lfsr_tag_generic([1] * m_len, t, 5, width) == sequence_tag([1] * m_len, t, 5, width)


# ------------------------------------------------------------ seeded Toeplitz


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_toeplitz_hash_matches_naive(n, l, seed):
    g = np.random.default_rng(seed)
    x = g.integers(0, 2, n, dtype=np.uint8)
    s = g.integers(0, 2, n + l - 1, dtype=np.uint8)
    assert np.array_equal(toeplitz_hash(x, s, l), toeplitz_naive(x, s, l))
    assert np.array_equal(toeplitz_hash(x, s, l, block=7), toeplitz_naive(x, s, l))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.integers(1, 64), st.integers(0, 2 ** 32 - 1))
def test_toeplitz_hash_linearity(n, l, seed):
    g = np.random.default_rng(seed)
    s = g.integers(0, 2, n + l - 1, dtype=np.uint8)
    a = g.integers(0, 2, n, dtype=np.uint8)
    b = g.integers(0, 2, n, dtype=np.uint8)
    assert np.array_equal(toeplitz_hash(a ^ b, s, l), toeplitz_hash(a, s, l) ^ toeplitz_hash(b, s, l))


def test_toeplitz_seed_size():
    assert toeplitz_seed_size(10, 3) == 12
    with pytest.raises(ValueError):
        toeplitz_seed_size(0, 3)
    with pytest.raises(ValueError):
        toeplitz_hash([1, 0], [1, 0], 2)
