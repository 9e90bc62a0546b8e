"""Synthetic MDI-QKD rounds and count tables.

Channel model
-------------
Both senders emit phase-randomised coherent pulses of mean photon number
``x * eta`` at the relay input, where ``eta = 10**(-loss_db/10) * det_eff``
(detector efficiency folded into each side's loss). Polarisation encodes the
bit: Z basis H (0) / V (1), X basis D (0) / A (1). Bob's polarisation is
rotated by ``theta`` with ``sin(theta)**2 = misalignment``.

The relay interferes the pulses on a 50:50 beam splitter (outputs c, d) and
splits each output by polarisation, giving four threshold detectors
cH, cV, dH, dV. With a relative phase ``phi`` uniform on [0, 2pi), the mean
photon number reaching detector (port, pol) is
``(A_pol**2 + B_pol**2 +/- 2 A_pol B_pol cos(phi)) / 2`` (+ for c, - for d)
where ``A_pol`` and ``B_pol`` are the real field amplitudes of each side. A
detector with mean ``m`` clicks with probability ``1 - (1 - p_dark) exp(-m)``.

A round succeeds when exactly two detectors click:
``cH & dV`` or ``cV & dH`` heralds psi-minus, ``cH & cV`` or ``dH & dV``
heralds psi-plus. Averaging over ``phi`` gives closed forms through the
modified Bessel function ``I0``; :func:`outcome_probabilities` evaluates them
and serves as the oracle for the Monte-Carlo generator.

Bit-flip convention
-------------------
To correlate Alice's bit with Bob's, Alice's side flips its bit in Z-basis
rounds for both heralded states, and in X-basis rounds only for psi-minus
(see :func:`convention_flip`).
"""
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e

from mdqkd.errors import ValidationError

LABELS = ("lambda", "mu", "nu", "omega")
X_LABELS = ("mu", "nu", "omega")
LAMBDA = 0
PSI_MINUS, PSI_PLUS = 0, 1
CHUNK = 1 << 18


@dataclass(frozen=True)
class SourceParams:
    intensity_values: dict
    q_z: float
    p_a: dict
    n_rounds: int

    def __post_init__(self):
        if set(self.intensity_values) != set(LABELS):
            raise ValueError(f"intensities must be given for {LABELS}")
        if any(v < 0 for v in self.intensity_values.values()):
            raise ValueError("intensities must be non-negative")
        if set(self.p_a) != set(X_LABELS):
            raise ValueError(f"p_a must cover {X_LABELS}")
        if any(not 0 <= p <= 1 for p in self.p_a.values()):
            raise ValueError("p_a entries must be probabilities")
        if abs(sum(self.p_a.values()) - 1) > 1e-12:
            raise ValueError("p_a must sum to 1")
        if not 0 < self.q_z < 1:
            raise ValueError("q_z must lie in (0, 1)")
        iv = self.intensity_values
        if not iv["omega"] < iv["nu"] < iv["mu"]:
            raise ValueError("need omega < nu < mu")
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be non-negative")

    @property
    def q_x(self):
        return 1.0 - self.q_z

    def label_probabilities(self):
        """Per-side probability of each label, in ``LABELS`` order."""
        return np.array([self.q_z] + [self.q_x * self.p_a[k] for k in X_LABELS])

    def values(self):
        return np.array([self.intensity_values[k] for k in LABELS])


@dataclass(frozen=True)
class ChannelParams:
    """Symmetric relay channel.

    ``calibration`` optionally pins ``(alice_label, bob_label)`` cells to a
    fixed ``(gain, error_rate)``; unlisted cells follow the physical model.
    """

    loss_db: float = 12.0
    detector_efficiency: float = 0.65
    dark_count_prob: float = 1e-8
    misalignment: float = 0.015
    calibration: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.loss_db < 0:
            raise ValueError("loss must be non-negative")
        for name in ("detector_efficiency", "dark_count_prob", "misalignment"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        for cell, (g, e) in self.calibration.items():
            if cell[0] not in LABELS or cell[1] not in LABELS:
                raise ValueError(f"unknown calibration cell {cell}")
            if not (0 <= g <= 1 and 0 <= e <= 1):
                raise ValueError(f"calibration cell {cell} is not a probability pair")

    @property
    def eta(self):
        return 10 ** (-self.loss_db / 10) * self.detector_efficiency


@dataclass
class RoundLog:
    """Successful rounds of one QKD pair; ``index`` is 1-based."""

    index: np.ndarray
    alice_label: np.ndarray
    bob_label: np.ndarray
    alice_bit: np.ndarray
    bob_bit: np.ndarray
    bsm: np.ndarray
    n_rounds: int

    def __len__(self):
        return len(self.index)

    @classmethod
    def empty(cls, n_rounds=0):
        z = np.zeros(0, dtype=np.uint8)
        return cls(np.zeros(0, dtype=np.int64), z, z.copy(), z.copy(), z.copy(), z.copy(),
                   n_rounds)

    def validate(self):
        n = len(self.index)
        for name in ("alice_label", "bob_label", "alice_bit", "bob_bit", "bsm"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} has wrong length")
        if n and (np.any(np.diff(self.index) <= 0) or self.index[0] < 1
                  or self.index[-1] > self.n_rounds):
            raise ValidationError("indices must be strictly increasing within 1..N")


@dataclass
class CountsTable:
    z_count: int
    z_errors: int
    x_counts: list
    x_errors: list
    n_rounds: int

    def __post_init__(self):
        self.x_counts = [[int(v) for v in row] for row in self.x_counts]
        self.x_errors = [[int(v) for v in row] for row in self.x_errors]
        self.z_count = int(self.z_count)
        self.z_errors = int(self.z_errors)
        self.n_rounds = int(self.n_rounds)

    def validate(self):
        if self.z_errors > self.z_count or self.z_errors < 0:
            raise ValidationError("z_errors exceeds z_count")
        for i in range(3):
            for j in range(3):
                c, e = self.x_counts[i][j], self.x_errors[i][j]
                if e > c or e < 0 or c < 0:
                    raise ValidationError(
                        f"x_errors[{X_LABELS[i]}][{X_LABELS[j]}]={e} exceeds count {c}")
                if c > self.n_rounds:
                    raise ValidationError("count exceeds n_rounds")
        if self.z_count > self.n_rounds:
            raise ValidationError("z_count exceeds n_rounds")

    def qber_z(self):
        return self.z_errors / self.z_count if self.z_count else 0.0

    def x_rate(self, a, b):
        c = self.x_counts[X_LABELS.index(a)][X_LABELS.index(b)]
        e = self.x_errors[X_LABELS.index(a)][X_LABELS.index(b)]
        return e / c if c else 0.0


# ------------------------------------------------------------ channel model


_S = 1 / math.sqrt(2)
_POL = {  # (basis, bit) -> (H, V) amplitude
    ("Z", 0): (1.0, 0.0),
    ("Z", 1): (0.0, 1.0),
    ("X", 0): (_S, _S),
    ("X", 1): (_S, -_S),
}


def basis_of(label):
    return "Z" if label == LAMBDA else "X"


def convention_flip(basis_is_z, bsm):
    """1 where Alice's side flips its bit: every Z round, X rounds heralding psi-minus."""
    basis_is_z = np.asarray(basis_is_z, dtype=bool)
    bsm = np.asarray(bsm)
    return (basis_is_z | (bsm == PSI_MINUS)).astype(np.uint8)


def _rotate(h, v, theta):
    c, s = math.cos(theta), math.sin(theta)
    return h * c - v * s, h * s + v * c


def _amplitudes(x_a, x_b, pol_a, pol_b, ch):
    eta = ch.eta
    theta = math.asin(math.sqrt(ch.misalignment))
    bh, bv = _rotate(pol_b[0], pol_b[1], theta)
    ra, rb = math.sqrt(x_a * eta), math.sqrt(x_b * eta)
    return (ra * pol_a[0], ra * pol_a[1]), (rb * bh, rb * bv)


_DETECTORS = ("cH", "cV", "dH", "dV")
_PATTERNS = {
    PSI_MINUS: (("cH", "dV"), ("cV", "dH")),
    PSI_PLUS: (("cH", "cV"), ("dH", "dV")),
}


def outcome_probabilities(x_a, x_b, pol_a, pol_b, ch):
    """Phase-averaged probability of heralding psi-minus and psi-plus.

    Exact closed form: every term of the inclusion-exclusion expansion of a
    click pattern is ``(1-pd)^k exp(-C - D cos phi)``, whose phase average is
    ``(1-pd)^k exp(-C) I0(D)``.
    """
    (ah, av), (bh, bv) = _amplitudes(x_a, x_b, pol_a, pol_b, ch)
    base = {"cH": (ah * ah + bh * bh) / 2, "dH": (ah * ah + bh * bh) / 2,
            "cV": (av * av + bv * bv) / 2, "dV": (av * av + bv * bv) / 2}
    cross = {"cH": ah * bh, "dH": -ah * bh, "cV": av * bv, "dV": -av * bv}
    keep = 1.0 - ch.dark_count_prob

    def no_click_avg(subset):
        if not subset:
            return 1.0
        c = sum(base[k] for k in subset)
        d = sum(cross[k] for k in subset)
        # exp(-c) * I0(d) computed stably as exp(|d| - c) * i0e(|d|)
        return keep ** len(subset) * math.exp(abs(d) - c) * float(i0e(abs(d)))

    def pattern(clicked):
        quiet = [k for k in _DETECTORS if k not in clicked]
        total = 0.0
        # P(clicked all fire, quiet all silent) = sum over T subset of clicked
        # of (-1)^|T| E[prod_{quiet + T} no-click]
        for mask in range(1 << len(clicked)):
            chosen = [clicked[i] for i in range(len(clicked)) if mask >> i & 1]
            total += (-1) ** len(chosen) * no_click_avg(quiet + chosen)
        return total

    return {s: sum(pattern(list(p)) for p in pats) for s, pats in _PATTERNS.items()}


def expected_cell(src, ch, a, b):
    """Closed-form (gain, error_rate) of the (a, b) label cell after the flip convention.

    Averages over all four bit combinations. A round is an error when the
    flipped Alice bit differs from Bob's bit.
    """
    if (LABELS[a], LABELS[b]) in ch.calibration:
        return ch.calibration[LABELS[a], LABELS[b]]
    vals = src.values()
    ba, bb = basis_of(a), basis_of(b)
    gain = 0.0
    err = 0.0
    for ra in (0, 1):
        for rb in (0, 1):
            probs = outcome_probabilities(vals[a], vals[b], _POL[ba, ra], _POL[bb, rb], ch)
            for s, p in probs.items():
                flip = int(convention_flip(ba == "Z", s)) if ba == bb else 0
                gain += p / 4
                if ba == bb and (ra ^ flip) != rb:
                    err += p / 4
    if ba != bb:
        return gain, 0.5
    return gain, (err / gain if gain > 0 else 0.0)


def expected_counts(src, ch):
    """Expected CountsTable (real-valued cells rounded to integers)."""
    probs = src.label_probabilities()
    n = src.n_rounds
    g_z, e_z = expected_cell(src, ch, 0, 0)
    z = n * probs[0] ** 2 * g_z
    xc = [[0] * 3 for _ in range(3)]
    xe = [[0] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            g, e = expected_cell(src, ch, i + 1, j + 1)
            c = n * probs[i + 1] * probs[j + 1] * g
            xc[i][j] = int(round(c))
            xe[i][j] = int(round(c * e))
    return CountsTable(int(round(z)), int(round(z * e_z)), xc, xe, n)


# -------------------------------------------------------------- generator


def _chunk_rng(seed, stream, chunk):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(chunk)]))


def _pol_arrays(labels, bits):
    is_z = labels == LAMBDA
    h = np.where(is_z, np.where(bits == 0, 1.0, 0.0), _S)
    v = np.where(is_z, np.where(bits == 0, 0.0, 1.0), np.where(bits == 0, _S, -_S))
    return h, v


def _generate_chunk(src, ch, seed, stream, chunk, start, size):
    rng = _chunk_rng(seed, stream, chunk)
    cdf = np.cumsum(src.label_probabilities())
    cdf[-1] = 1.0
    a = np.searchsorted(cdf, rng.random(size), side="right").astype(np.uint8)
    b = np.searchsorted(cdf, rng.random(size), side="right").astype(np.uint8)
    r = rng.integers(0, 2, size, dtype=np.uint8)
    rp = rng.integers(0, 2, size, dtype=np.uint8)
    phase = rng.random(size) * (2 * np.pi)
    u = rng.random((4, size))

    vals = src.values()
    eta = ch.eta
    theta = math.asin(math.sqrt(ch.misalignment))
    ah, av = _pol_arrays(a, r)
    bh0, bv0 = _pol_arrays(b, rp)
    bh = bh0 * math.cos(theta) - bv0 * math.sin(theta)
    bv = bh0 * math.sin(theta) + bv0 * math.cos(theta)
    ra = np.sqrt(vals[a] * eta)
    rb = np.sqrt(vals[b] * eta)
    ah, av, bh, bv = ra * ah, ra * av, rb * bh, rb * bv
    cos = np.cos(phase)
    keep = 1.0 - ch.dark_count_prob
    means = (
        (ah * ah + bh * bh + 2 * ah * bh * cos) / 2,  # cH
        (av * av + bv * bv + 2 * av * bv * cos) / 2,  # cV
        (ah * ah + bh * bh - 2 * ah * bh * cos) / 2,  # dH
        (av * av + bv * bv - 2 * av * bv * cos) / 2,  # dV
    )
    clicks = [u[k] < 1.0 - keep * np.exp(-means[k]) for k in range(4)]
    c_h, c_v, d_h, d_v = clicks
    n_clicks = c_h.astype(np.int8) + c_v + d_h + d_v
    two = n_clicks == 2
    minus = two & ((c_h & d_v) | (c_v & d_h))
    plus = two & ((c_h & c_v) | (d_h & d_v))
    success = minus | plus
    bsm = np.where(plus, PSI_PLUS, PSI_MINUS).astype(np.uint8)

    if ch.calibration:
        success, bsm, rp = _apply_calibration(src, ch, rng, a, b, r, rp, success, bsm)

    idx = np.flatnonzero(success)
    return (idx.astype(np.int64) + start + 1, a[idx], b[idx], r[idx], rp[idx], bsm[idx])


def _apply_calibration(src, ch, rng, a, b, r, rp, success, bsm):
    size = len(a)
    u_gain = rng.random(size)
    u_err = rng.random(size)
    u_state = rng.integers(0, 2, size, dtype=np.uint8)
    success = success.copy()
    bsm = bsm.copy()
    rp = rp.copy()
    for (la, lb), (g, e) in ch.calibration.items():
        ia, ib = LABELS.index(la), LABELS.index(lb)
        cell = (a == ia) & (b == ib)
        success[cell] = u_gain[cell] < g
        bsm[cell] = u_state[cell]
        if basis_of(ia) == basis_of(ib):
            flip = convention_flip(np.full(cell.sum(), ia == LAMBDA), bsm[cell])
            err = (u_err[cell] < e).astype(np.uint8)
            rp[cell] = r[cell] ^ flip ^ err
    return success, bsm, rp


def outcome_table(src, ch):
    """Per-round probability of every successful ``(a, b, r, r', s)`` combination.

    Returns ``(keys, probs)`` with ``keys`` an ``(n, 5)`` uint8 array. Cells
    in the calibration table herald either state with equal probability and
    carry the pinned error rate.
    """
    label_p = src.label_probabilities()
    vals = src.values()
    keys, probs = [], []
    for a in range(4):
        for b in range(4):
            w = label_p[a] * label_p[b]
            cal = ch.calibration.get((LABELS[a], LABELS[b]))
            same = basis_of(a) == basis_of(b)
            for r in (0, 1):
                for rp in (0, 1):
                    if cal is None:
                        out = outcome_probabilities(vals[a], vals[b], _POL[basis_of(a), r],
                                                    _POL[basis_of(b), rp], ch)
                    for s in (PSI_MINUS, PSI_PLUS):
                        if cal is None:
                            p = w * out[s] / 4
                        else:
                            g, e = cal
                            if same:
                                good = rp == r ^ int(convention_flip(a == LAMBDA, s))
                                p = w * g / 4 * ((1 - e) if good else e)
                            else:
                                p = w * g / 8
                        keys.append((a, b, r, rp, s))
                        probs.append(p)
    return np.array(keys, dtype=np.uint8), np.array(probs)


SPARSE_CHUNK = 1 << 24


def _distinct_positions(rng, size, k):
    pos = np.unique(rng.integers(0, size, k))
    while len(pos) < k:
        pos = np.unique(np.concatenate([pos, rng.integers(0, size, k - len(pos))]))
    return pos


def _sparse_chunk(keys, cdf, total, seed, stream, chunk, start, size):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(chunk), 1]))
    k = int(rng.binomial(size, total)) if total > 0 else 0
    pos = _distinct_positions(rng, size, k)
    pick = keys[np.minimum(np.searchsorted(cdf, rng.random(k), side="right"), len(keys) - 1)]
    return (pos.astype(np.int64) + start + 1, pick[:, 0], pick[:, 1], pick[:, 2], pick[:, 3],
            pick[:, 4])


def generate_rounds(src, ch, seed, stream=0, workers=1, method="pulse"):
    """Simulate ``src.n_rounds`` rounds and keep the successful ones.

    ``method="pulse"`` draws every round's photon statistics and phase.
    ``method="sparse"`` draws the same distribution directly: a binomial
    number of successes per chunk at uniform positions, each labelled from
    :func:`outcome_table`. It costs time per success rather than per round.

    Rounds are produced in fixed chunks, each with its own generator seeded
    by ``(seed, stream, chunk index)``, so the output does not depend on
    ``workers``.
    """
    n = src.n_rounds
    if n == 0:
        return RoundLog.empty()
    if method == "sparse":
        keys, probs = outcome_table(src, ch)
        total = float(probs.sum())
        cdf = np.cumsum(probs / total) if total > 0 else probs
        starts = list(range(0, n, SPARSE_CHUNK))
        jobs = [(i, s, min(SPARSE_CHUNK, n - s)) for i, s in enumerate(starts)]

        def run(job):
            i, s, size = job
            return _sparse_chunk(keys, cdf, total, seed, stream, i, s, size)
    elif method == "pulse":
        starts = list(range(0, n, CHUNK))
        jobs = [(i, s, min(CHUNK, n - s)) for i, s in enumerate(starts)]

        def run(job):
            i, s, size = job
            return _generate_chunk(src, ch, seed, stream, i, s, size)
    else:
        raise ValueError(f"unknown generation method {method!r}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    cols = [np.concatenate([p[k] for p in parts]) for k in range(6)]
    return RoundLog(*cols, n_rounds=n)


def rounds_from_counts(table, seed, stream=0):
    """A RoundLog whose sifted statistics reproduce ``table`` exactly.

    Only the counted cells are materialised (lambda/lambda and the X grid);
    positions, bits, heralded states and which rounds carry errors are
    drawn from ``(seed, stream)``.
    """
    table.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), 2]))
    cells = [(LAMBDA, LAMBDA, table.z_count, table.z_errors)]
    for i in range(3):
        for j in range(3):
            cells.append((i + 1, j + 1, table.x_counts[i][j], table.x_errors[i][j]))
    total = sum(c[2] for c in cells)
    if total > table.n_rounds:
        raise ValidationError("more sifted rounds than n_rounds")
    a = np.concatenate([np.full(c[2], c[0], np.uint8) for c in cells])
    b = np.concatenate([np.full(c[2], c[1], np.uint8) for c in cells])
    err = np.concatenate([rng.permutation(np.arange(c[2]) < c[3]).astype(np.uint8)
                          for c in cells])
    order = rng.permutation(total)
    a, b, err = a[order], b[order], err[order]
    r = rng.integers(0, 2, total, dtype=np.uint8)
    s = rng.integers(0, 2, total, dtype=np.uint8)
    rp = r ^ convention_flip(a == LAMBDA, s) ^ err
    idx = _distinct_positions(rng, table.n_rounds, total).astype(np.int64) + 1
    return RoundLog(idx, a, b, r, rp, s, table.n_rounds)


# -------------------------------------------------------------- aggregate


@dataclass
class SiftMasks:
    """Boolean masks over the rows of a RoundLog."""

    z: np.ndarray
    x: dict  # (a_label, b_label) -> mask

    def validate(self):
        n = len(self.z)
        seen = self.z.astype(np.int32)
        for m in self.x.values():
            if len(m) != n:
                raise ValidationError("sift masks differ in length")
            seen = seen + m
        if np.any(seen > 1):
            raise ValidationError("sift masks overlap")


def sift_masks(log):
    a, b = log.alice_label, log.bob_label
    z = (a == LAMBDA) & (b == LAMBDA)
    x = {}
    for i, la in enumerate(X_LABELS, start=1):
        for j, lb in enumerate(X_LABELS, start=1):
            x[la, lb] = (a == i) & (b == j)
    return SiftMasks(z, x)


def corrected_alice_bits(log):
    return log.alice_bit ^ convention_flip(log.alice_label == LAMBDA, log.bsm)


def aggregate(log, masks):
    """Count sifted rounds and errors per cell after the flip convention."""
    n = len(log)
    if len(masks.z) != n or any(len(m) != n for m in masks.x.values()):
        raise ValidationError(f"mask length does not match log length {n}")
    diff = corrected_alice_bits(log) ^ log.bob_bit
    xc = [[0] * 3 for _ in range(3)]
    xe = [[0] * 3 for _ in range(3)]
    for i, la in enumerate(X_LABELS):
        for j, lb in enumerate(X_LABELS):
            m = masks.x[la, lb]
            xc[i][j] = int(np.count_nonzero(m))
            xe[i][j] = int(np.count_nonzero(diff[m]))
    z = masks.z
    return CountsTable(int(np.count_nonzero(z)), int(np.count_nonzero(diff[z])), xc, xe,
                       log.n_rounds)


# -------------------------------------------------------- counts file I/O
#
# Grammar (UTF-8, one item per line, '#' starts a comment):
#
#   header   := "N" "=" int | "intensity." LABEL "=" real | "q_z" "=" real
#             | "q_x" "=" real | "p." XLABEL "=" real
#   section  := "[pair " ("1" | "2") "]"
#   item     := "z_count" "=" int | "z_errors" "=" int
#             | "x_counts." XLABEL "=" int int int
#             | "x_errors." XLABEL "=" int int int
#
# Grid rows are Alice's intensity, columns Bob's, both in mu, nu, omega order.


_KEY = re.compile(r"^([A-Za-z_][\w.]*)\s*=\s*(.+)$")
_SECTION = re.compile(r"^\[pair\s+(\d+)\]$")


def _parse_number(text, kind, line):
    try:
        value = kind(text)
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as {kind.__name__}", line) from None
    if kind is int and value < 0:
        raise ValidationError("counts must be non-negative", line)
    return value


def _parse_int(text, line):
    if re.fullmatch(r"\d+", text):
        return int(text)
    # accept integral scientific notation such as 2e13
    try:
        as_float = float(text)
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as int", line) from None
    if as_float != int(as_float) or as_float < 0:
        raise ValidationError(f"{text!r} is not a non-negative integer", line)
    return int(as_float)


def parse_counts(text):
    header = {}
    pairs = {}
    current = None
    where = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sec = _SECTION.match(line)
        if sec:
            current = int(sec.group(1))
            if current not in (1, 2) or current in pairs:
                raise ValidationError(f"bad or duplicate section [pair {current}]", lineno)
            pairs[current] = {}
            where[current] = {}
            continue
        kv = _KEY.match(line)
        if not kv:
            raise ValidationError(f"expected 'key = value', got {line!r}", lineno)
        key, value = kv.group(1), kv.group(2).strip()
        if current is None:
            header[key] = (value, lineno)
            continue
        if key in ("z_count", "z_errors"):
            pairs[current][key] = _parse_int(value, lineno)
        elif key.startswith(("x_counts.", "x_errors.")):
            kind, label = key.split(".", 1)
            if label not in X_LABELS:
                raise ValidationError(f"unknown intensity {label!r}", lineno)
            cells = value.split()
            if len(cells) != 3:
                raise ValidationError(f"expected 3 cells, got {len(cells)}", lineno)
            pairs[current].setdefault(kind, {})[label] = [_parse_int(c, lineno) for c in cells]
            where[current][f"{kind}.{label}"] = lineno
        else:
            raise ValidationError(f"unknown key {key!r}", lineno)
        where[current].setdefault(key, lineno)

    src = _header_to_source(header)
    tables = []
    for j in (1, 2):
        if j not in pairs:
            raise ValidationError(f"missing section [pair {j}]")
        tables.append(_section_to_table(pairs[j], where[j], src.n_rounds, j))
    return src, tables


def _header_to_source(header):
    def need(key, kind):
        if key not in header:
            raise ValidationError(f"missing header key {key!r}")
        text, line = header[key]
        return _parse_int(text, line) if kind is int else _parse_number(text, kind, line)

    n = need("N", int)
    iv = {k: need(f"intensity.{k}", float) for k in LABELS}
    pa = {k: need(f"p.{k}", float) for k in X_LABELS}
    if "q_z" in header:
        q_z = need("q_z", float)
        if "q_x" in header and abs(need("q_x", float) - (1 - q_z)) > 1e-12:
            raise ValidationError("q_z and q_x are not complementary", header["q_x"][1])
    elif "q_x" in header:
        q_z = 1.0 - need("q_x", float)
    else:
        raise ValidationError("missing header key 'q_z' (or 'q_x')")
    try:
        return SourceParams(iv, q_z, pa, n)
    except ValueError as exc:
        raise ValidationError(str(exc), header.get("N", (None, None))[1]) from None


def _section_to_table(sec, where, n, j):
    for key in ("z_count", "z_errors", "x_counts", "x_errors"):
        if key not in sec:
            raise ValidationError(f"[pair {j}] is missing {key}")
    for kind in ("x_counts", "x_errors"):
        missing = set(X_LABELS) - set(sec[kind])
        if missing:
            raise ValidationError(f"[pair {j}] is missing {kind} rows {sorted(missing)}")
    xc = [sec["x_counts"][k] for k in X_LABELS]
    xe = [sec["x_errors"][k] for k in X_LABELS]
    if sec["z_errors"] > sec["z_count"]:
        raise ValidationError("z_errors exceeds z_count", where["z_errors"])
    for i, la in enumerate(X_LABELS):
        for col in range(3):
            if xe[i][col] > xc[i][col]:
                raise ValidationError(
                    f"errors {xe[i][col]} exceed count {xc[i][col]} in cell "
                    f"({la},{X_LABELS[col]})", where[f"x_errors.{la}"], col + 1)
    table = CountsTable(sec["z_count"], sec["z_errors"], xc, xe, n)
    table.validate()
    return table


def load_counts(path):
    """Read a counts file; returns ``(SourceParams, [table_pair1, table_pair2])``."""
    with open(path, encoding="utf-8") as fh:
        return parse_counts(fh.read())


def format_counts(src, tables):
    lines = [f"N = {src.n_rounds}"]
    lines += [f"intensity.{k} = {src.intensity_values[k]!r}" for k in LABELS]
    lines.append(f"q_z = {src.q_z!r}")
    lines += [f"p.{k} = {src.p_a[k]!r}" for k in X_LABELS]
    for j, t in enumerate(tables, start=1):
        lines += ["", f"[pair {j}]", f"z_count = {t.z_count}", f"z_errors = {t.z_errors}"]
        for i, k in enumerate(X_LABELS):
            lines.append(f"x_counts.{k} = " + " ".join(str(v) for v in t.x_counts[i]))
        for i, k in enumerate(X_LABELS):
            lines.append(f"x_errors.{k} = " + " ".join(str(v) for v in t.x_errors[i]))
    return "\n".join(lines) + "\n"


def save_counts(path, src, tables):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_counts(src, tables))
