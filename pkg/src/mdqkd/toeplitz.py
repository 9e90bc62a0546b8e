"""GF(2) Toeplitz hashing: LFSR-generated tags and seeded Toeplitz compression.

LFSR tag conventions
--------------------
A descriptor is a 128-bit integer. Its low 64 bits hold the coefficients
``p_0..p_63`` of the feedback polynomial ``p(x) = x^64 + sum p_i x^i`` (bit
``i`` is ``p_i``); its high 64 bits hold the initial state. The descriptor is
admissible when ``p`` is irreducible and the state is nonzero.

State bit ``t`` holds sequence element ``a[i + t]`` and one step appends
``a[i + 64] = sum_t p_t a[i + t]``. The accumulator is the XOR of the states
at every set message position, and tag bit ``k`` is accumulator bit
``63 - k``, so ``tag_k = sum_j m_j a[j + 63 - k]``: a Toeplitz product.

Seeded Toeplitz compression
---------------------------
Output bit ``i`` of an ``l x n`` matrix built from ``n + l - 1`` seed bits is
``sum_j seed[i - j + n - 1] x_j``, i.e. entry ``i + n - 1`` of the linear
convolution of ``seed`` and ``x``. :func:`toeplitz_hash` evaluates it with
blocked FFT convolutions and exact integer rounding.
"""
import functools

import numpy as np

from mdqkd import _kernels
from mdqkd.bits import as_bits

TAG_BITS = 64
_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------- GF(2)[x] helpers


def clmul(a, b):
    """Carry-less product of two polynomials packed as Python ints."""
    out = 0
    while b:
        low = b & -b
        out ^= a << (low.bit_length() - 1)
        b ^= low
    return out


def polymod(a, m):
    dm = m.bit_length()
    while a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def polygcd(a, b):
    while b:
        a, b = b, polymod(a, b)
    return a


def _xpow2k_mod(k, m):
    """x^(2^k) mod m by repeated squaring."""
    r = polymod(2, m)
    for _ in range(k):
        r = polymod(clmul(r, r), m)
    return r


def _prime_factors(n):
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


@functools.lru_cache(maxsize=4096)
def is_irreducible(poly):
    """Rabin's test for a polynomial over GF(2) packed as an int (bit i = coeff of x^i)."""
    n = poly.bit_length() - 1
    if n < 1:
        return False
    if n == 1:
        return True
    if not poly & 1:
        return False
    if polymod(_xpow2k_mod(n, poly) ^ 2, poly) != 0:
        return False
    for q in _prime_factors(n):
        h = _xpow2k_mod(n // q, poly) ^ 2
        if polygcd(poly, polymod(h, poly)) != 1:
            return False
    return True


def irreducibles(degree):
    """All irreducible polynomials of a small degree, as ints including x^degree."""
    top = 1 << degree
    return [top | low for low in range(1 << degree) if is_irreducible(top | low)]


# ------------------------------------------------------------- LFSR tags


def split_descriptor(descriptor, width=TAG_BITS):
    mask = (1 << width) - 1
    return descriptor & mask, (descriptor >> width) & mask


def is_admissible(descriptor, width=TAG_BITS):
    taps, state = split_descriptor(descriptor, width)
    return state != 0 and is_irreducible((1 << width) | taps)


def descriptor_from_bits(random_int, width=TAG_BITS):
    """Turn ``2 * width`` uniform bits into an admissible descriptor.

    The polynomial part is forced to have a constant term and then advanced
    to the next irreducible polynomial (in integer order, wrapping); a zero
    state is replaced by 1.
    """
    mask = (1 << width) - 1
    taps = (random_int & mask) | 1
    state = (random_int >> width) & mask
    while not is_irreducible((1 << width) | taps):
        taps = (taps + 2) & mask | 1
    if state == 0:
        state = 1
    return taps | (state << width)


def lfsr_tag_generic(bits, taps, state, width):
    """Reference tag for any register width; returns an int whose bit k is tag bit k."""
    acc = 0
    mask = (1 << width) - 1
    for b in as_bits(bits).tolist():
        if b:
            acc ^= state
        fb = bin(state & taps).count("1") & 1
        state = (state >> 1) | (fb << (width - 1))
        state &= mask
    return sum(((acc >> (width - 1 - k)) & 1) << k for k in range(width))


def _reverse64(x):
    return int(f"{x:064b}"[::-1], 2)


def ev_tag(message, descriptor, backend=None):
    """64-bit LFSR-Toeplitz tag of a bit string, as an int (bit k = tag bit k)."""
    if not is_admissible(descriptor):
        raise ValueError("inadmissible tag descriptor")
    taps, state = split_descriptor(descriptor)
    bits = as_bits(message)
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    acc = kern.lfsr_accumulate(bits, taps, state)
    # tag bit k = accumulator bit 63 - k
    return _reverse64(int(acc))


def tag_bits(tag, width=TAG_BITS):
    return np.array([(tag >> k) & 1 for k in range(width)], dtype=np.uint8)


# ------------------------------------------------------ seeded Toeplitz


def toeplitz_seed_size(n, l):
    if n < 1 or l < 1:
        raise ValueError("sizes must be positive")
    return n + l - 1


def _conv_exact(a, b):
    """Integer linear convolution of two small-valued float arrays via rFFT."""
    size = len(a) + len(b) - 1
    nfft = 1 << (size - 1).bit_length()
    out = np.fft.irfft(np.fft.rfft(a, nfft) * np.fft.rfft(b, nfft), nfft)[:size]
    return np.rint(out).astype(np.int64)


def toeplitz_hash(x, seed, l, block=None):
    """Compress ``n`` bits to ``l`` bits with the Toeplitz matrix of ``seed``."""
    x = as_bits(x)
    seed = as_bits(seed)
    n = len(x)
    if len(seed) != toeplitz_seed_size(n, l):
        raise ValueError(f"seed must have n + l - 1 = {n + l - 1} bits, got {len(seed)}")
    block = block or max(l, 1 << 16)
    block = min(block, n)
    out = np.zeros(l, dtype=np.int64)
    xf = x.astype(np.float64)
    sf = seed.astype(np.float64)
    for j0 in range(0, n, block):
        j1 = min(j0 + block, n)
        xb = xf[j0:j1]
        if not xb.any():
            continue
        # y_i += sum_{j in [j0, j1)} seed[i - j + n - 1] x_j
        lo = n - j1  # smallest seed index touched (i = 0, j = j1 - 1)
        hi = n - 1 - j0 + l - 1  # largest (i = l - 1, j = j0)
        conv = _conv_exact(sf[lo:hi + 1], xb)
        # seed offset s = i - j + n - 1 - lo; x offset t = j - j0; s + t = i + n - 1 - lo - j0
        start = n - 1 - lo - j0
        out += conv[start:start + l]
    return (out & 1).astype(np.uint8)
