"""Irregular LDPC codes for syndrome-based reconciliation.

Construction
------------
Given a block length ``n``, a rate ``R`` and variable-node degree fractions,
the code has ``m = ceil((1 - R) n)`` checks. Degree-2 variables form a
staircase (variable ``i`` joins checks ``i`` and ``i + 1``), which keeps them
cycle-free. The remaining edge sockets are matched to check sockets at
random, with check degrees as equal as possible, then repeated
(variable, check) pairs are broken up by random swaps. All randomness comes
from ``numpy.random.default_rng(seed)``.

Fixture format
--------------
Gzipped UTF-8 text. Header lines are ``key value`` pairs (``n``, ``m``,
``rate``, ``seed``, ``distribution`` as ``deg:fraction`` tokens, ``edges``),
then a line ``checks`` followed by exactly ``m`` lines, each listing the
ascending variable indices of one check.
"""
import gzip
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

import numpy as np

from mdqkd import _kernels
from mdqkd.bits import as_bits

BLOCK_BITS = 1 << 16
CODE_RATE = 0.81
MAX_ITER = 60
DEFAULT_SEED = 20240601
FIXTURE = "ldpc_65536_r081.txt.gz"

# variable-node degree fractions of the committed code
DEGREE_DISTRIBUTION = {
    2: 0.17159, 3: 0.39681, 4: 0.0681, 5: 0.04019, 6: 0.11328, 8: 0.08271,
    10: 0.00608, 20: 0.00751, 25: 0.0833, 30: 0.01834, 40: 0.0121,
}


def n_checks(n, rate):
    r = Fraction(str(rate)) if isinstance(rate, float) else Fraction(rate)
    return math.ceil((1 - r) * n)


def syndrome_length(n, rate):
    return 8 * math.ceil(n_checks(n, rate) / 8)


@dataclass
class LdpcCode:
    n: int
    m: int
    rate: float
    chk_ptr: np.ndarray
    chk_var: np.ndarray
    var_ptr: np.ndarray
    var_edge: np.ndarray
    seed: int = -1
    distribution: dict = None

    @property
    def syndrome_len(self):
        return 8 * math.ceil(self.m / 8)

    @property
    def n_edges(self):
        return len(self.chk_var)

    def check_rows(self):
        return [self.chk_var[self.chk_ptr[c]:self.chk_ptr[c + 1]] for c in range(self.m)]

    def syndrome(self, block):
        """Byte-padded syndrome of one ``n``-bit block."""
        block = as_bits(block)
        if len(block) != self.n:
            raise ValueError(f"block must have {self.n} bits, got {len(block)}")
        out = np.zeros(self.syndrome_len, dtype=np.uint8)
        out[:self.m] = _kernels.syndrome(block, self.chk_ptr, self.chk_var)
        return out

    def equals(self, other):
        return (self.n == other.n and self.m == other.m
                and np.array_equal(self.chk_ptr, other.chk_ptr)
                and np.array_equal(self.chk_var, other.chk_var))


def from_edges(n, m, rows, cols, rate, seed=-1, distribution=None):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    order = np.lexsort((cols, rows))
    r, c = rows[order], cols[order]
    chk_ptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(chk_ptr, r + 1, 1)
    chk_ptr = np.cumsum(chk_ptr).astype(np.int32)
    chk_var = c.astype(np.int32)
    var_edge = np.argsort(chk_var, kind="stable").astype(np.int32)
    var_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(var_ptr, chk_var.astype(np.int64) + 1, 1)
    var_ptr = np.cumsum(var_ptr).astype(np.int32)
    return LdpcCode(n, m, rate, chk_ptr, chk_var, var_ptr, var_edge, seed, distribution)


def _degree_sequence(n, dist):
    degs = sorted(dist)
    frac = np.array([dist[d] for d in degs], dtype=np.float64)
    frac = frac / frac.sum()
    counts = np.floor(frac * n).astype(np.int64)
    counts[int(np.argmax(frac))] += n - counts.sum()
    return np.repeat(degs, counts)


def build(n, rate, distribution=None, seed=DEFAULT_SEED):
    """Construct a code deterministically from its parameters."""
    distribution = distribution or DEGREE_DISTRIBUTION
    rng = np.random.default_rng(seed)
    m = n_checks(n, rate)
    degs = _degree_sequence(n, distribution)
    degs = np.minimum(degs, m)
    n2 = min(int((degs == 2).sum()), m - 1)
    rest = np.sort(degs[n2:] if (degs == 2).sum() <= m - 1 else
                   np.concatenate([np.full((degs == 2).sum() - n2, 2), degs[degs != 2]]))[::-1]
    degs = np.concatenate([np.full(n2, 2), rest]).astype(np.int64)
    total = int(degs.sum())

    cap = np.full(m, total // m, dtype=np.int64)
    cap[: total % m] += 1
    rng.shuffle(cap)
    stair_rows = np.concatenate([np.arange(n2), np.arange(1, n2 + 1)])
    stair_cols = np.concatenate([np.arange(n2), np.arange(n2)])
    used = np.bincount(stair_rows, minlength=m)
    slots = np.repeat(np.arange(m), np.maximum(cap - used, 0))
    var_sockets = np.repeat(np.arange(n2, n), degs[n2:])
    if len(slots) != len(var_sockets):
        raise ValueError("degree sequence does not fit the check capacities")
    rng.shuffle(slots)
    for _ in range(100):
        key = var_sockets * m + slots
        order = np.argsort(key, kind="stable")
        ks = key[order]
        dup = order[1:][ks[1:] == ks[:-1]]
        if len(dup) == 0:
            break
        for d in dup:
            j = rng.integers(len(slots))
            slots[d], slots[j] = slots[j], slots[d]
    else:
        raise RuntimeError("could not remove repeated edges")
    rows = np.concatenate([stair_rows, slots])
    cols = np.concatenate([stair_cols, var_sockets])
    return from_edges(n, m, rows, cols, rate, seed, dict(distribution))


# ----------------------------------------------------------------- fixture


def save_code(code, path):
    dist = " ".join(f"{d}:{f!r}" for d, f in sorted((code.distribution or {}).items()))
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write(f"n {code.n}\nm {code.m}\nrate {code.rate!r}\nseed {code.seed}\n")
        fh.write(f"distribution {dist}\nedges {code.n_edges}\nchecks\n")
        for row in code.check_rows():
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def _read_code(fh):
    header = {}
    for line in fh:
        line = line.strip()
        if line == "checks":
            break
        key, _, value = line.partition(" ")
        header[key] = value
    n, m = int(header["n"]), int(header["m"])
    rows, cols = [], []
    for c in range(m):
        vs = np.array(fh.readline().split(), dtype=np.int64)
        rows.append(np.full(len(vs), c, dtype=np.int64))
        cols.append(vs)
    dist = {}
    for tok in header.get("distribution", "").split():
        d, f = tok.split(":")
        dist[int(d)] = float(f)
    code = from_edges(n, m, np.concatenate(rows), np.concatenate(cols), float(header["rate"]),
                      int(header.get("seed", -1)), dist)
    if code.n_edges != int(header["edges"]):
        raise ValueError("edge count mismatch in code fixture")
    return code


def load_code(path=None):
    if path is None:
        with resources.files("mdqkd").joinpath("data").joinpath(FIXTURE).open("rb") as raw:
            with gzip.open(raw, "rt", encoding="utf-8") as fh:
                return _read_code(fh)
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        return _read_code(fh)


_CACHE = {}


def get_code(n=BLOCK_BITS, rate=CODE_RATE):
    """The committed code for the default size, otherwise a code built from the default seed."""
    key = (n, rate)
    if key not in _CACHE:
        if n == BLOCK_BITS and rate == CODE_RATE:
            _CACHE[key] = load_code()
        else:
            _CACHE[key] = build(n, rate)
    return _CACHE[key]


# ----------------------------------------------------------------- decoding


@dataclass
class DecodeResult:
    corrected: np.ndarray
    error_pattern: np.ndarray
    success: bool
    iterations: int


def channel_llr(qber, n):
    if not 0 < qber < 0.5:
        raise ValueError("qber prior must lie in (0, 0.5)")
    return np.full(n, math.log((1 - qber) / qber))


def decode(noisy, target, qber_prior, code, max_iter=MAX_ITER, backend=None):
    """Find the block closest to ``noisy`` whose syndrome is ``target``.

    Works on the error pattern: the decoder searches a low-weight ``e`` with
    ``H e = target + H noisy`` and returns ``noisy ^ e``. Non-convergence is
    reported through ``success``; the partial estimate is still returned.
    """
    noisy = as_bits(noisy)
    target = as_bits(target)
    if len(noisy) != code.n:
        raise ValueError(f"block must have {code.n} bits")
    if len(target) != code.syndrome_len:
        raise ValueError(f"syndrome must have {code.syndrome_len} bits")
    if target[code.m:].any():
        raise ValueError("syndrome padding bits must be zero")
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    s_err = target[:code.m] ^ kern.syndrome(noisy, code.chk_ptr, code.chk_var)
    e_hat, iters, ok = kern.bp_decode(channel_llr(qber_prior, code.n), s_err, code.chk_ptr,
                                      code.chk_var, code.var_ptr, code.var_edge, max_iter)
    e_hat = np.asarray(e_hat, dtype=np.uint8)
    return DecodeResult(noisy ^ e_hat, e_hat, bool(ok), int(iters))
