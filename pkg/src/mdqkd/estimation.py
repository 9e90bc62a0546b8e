"""Decoy-state finite-key estimation and key-length accounting.

Bounds are evaluated in 113-bit binary floating point (mpmath) and every
value that leaves this module is rounded in the pessimistic direction:
lower bounds down, upper bounds up.
"""
import math
import numbers
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from mdqkd.errors import AbortCause, ProtocolAbort

PRECISION_BITS = 113
MODES = ("chernoff_up", "chernoff_low", "inverse_up", "inverse_low", "serfling")
X_LABELS = ("mu", "nu", "omega")

def _ctx():
    ctx = mpmath.MPContext()
    ctx.prec = PRECISION_BITS
    return ctx


mp = _ctx()


def _round_up(x):
    f = float(x)
    return f if mp.mpf(f) >= x else math.nextafter(f, math.inf)


def _round_down(x):
    f = float(x)
    return f if mp.mpf(f) <= x else math.nextafter(f, -math.inf)


# ---------------------------------------------------------------- budget


@dataclass(frozen=True)
class SecurityBudget:
    """Additive split of the secrecy parameter.

    Every estimation term, the smoothing parameter and the PA error get the
    same share, so ``eps_sec_hat = 2 * n_terms * eps_per_term + delta +
    eps_pa`` with all three equal to ``eps_sec_hat / (2 * n_terms + 2)``.
    """

    eps_sec_hat: float = 1e-8
    t_ev: int = 64
    n_estimation_terms: int = 22
    eps_au: float = 0.0

    def __post_init__(self):
        if not 0 < self.eps_sec_hat < 1:
            raise ValueError("eps_sec_hat must lie in (0, 1)")
        if not 0 <= self.eps_au < 1:
            raise ValueError("eps_au must lie in [0, 1)")
        if self.t_ev < 1 or self.n_estimation_terms < 1:
            raise ValueError("t_ev and n_estimation_terms must be positive")

    @property
    def divisor(self):
        return 2 * self.n_estimation_terms + 2

    @property
    def eps_per_term(self):
        return self.eps_sec_hat / self.divisor

    @property
    def eps_pa(self):
        return self.eps_sec_hat / self.divisor

    @property
    def delta(self):
        return self.eps_sec_hat / self.divisor

    @property
    def eps_estimation(self):
        """Total parameter-estimation error, one share per term."""
        return self.n_estimation_terms * self.eps_per_term

    def closure_residual(self):
        """Relative gap between ``eps_sec_hat`` and its recomposition."""
        total = 2 * self.eps_estimation + self.delta + self.eps_pa
        return abs(total - self.eps_sec_hat) / self.eps_sec_hat

    def eps_sec(self):
        return self.eps_sec_hat + self.eps_au

    def eps_cor(self, z_total_len):
        return correctness_epsilon(z_total_len, self.t_ev) + self.eps_au


# ----------------------------------------------------------- fluctuations


def fluctuation_bound(value, n_trials, eps, mode, *, population=None):
    """One-sided concentration bound failing with probability at most ``eps``.

    ``chernoff_up`` / ``chernoff_low`` map an expectation to a bound on the
    observed count of a sum of independent Bernoulli trials.
    ``inverse_up`` / ``inverse_low`` map an observed count to a bound on
    the expectation. ``serfling`` bounds the number of marked items among the
    ``population - n_trials`` unsampled items, given ``value`` marked items
    in a uniformly drawn sample of ``n_trials`` (sampling without replacement).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if value < 0 or n_trials < 0:
        raise ValueError("counts must be non-negative")
    if value > n_trials:
        raise ValueError(f"count {value} exceeds n_trials {n_trials}")
    # numpy integers are not accepted by mpmath directly
    x = mp.mpf(int(value)) if isinstance(value, numbers.Integral) else mp.mpf(value)
    n = mp.mpf(int(n_trials))
    beta = mp.log(1 / mp.mpf(eps))
    if mode == "chernoff_up":
        return min(x + (beta + mp.sqrt(beta * beta + 8 * beta * x)) / 2, n)
    if mode == "chernoff_low":
        return max(x - mp.sqrt(2 * beta * x), mp.zero)
    if mode == "inverse_up":
        return min(x + beta + mp.sqrt(2 * beta * x + beta * beta), n)
    if mode == "inverse_low":
        return max(x + beta / 2 - mp.sqrt(2 * beta * x + beta * beta / 4), mp.zero)
    if population is None or population <= n_trials:
        raise ValueError("serfling needs population > n_trials")
    if n_trials == 0:
        return mp.mpf(population - n_trials)
    rest = mp.mpf(population) - n
    slack = mp.sqrt(mp.mpf(population) * (n + 1) * beta / (2 * n * n * rest))
    return min((x / n + slack) * rest, rest)


def binary_entropy(p):
    """Shannon entropy of a Bernoulli(p) variable in bits; h(0) = h(1) = 0."""
    p = mp.mpf(p)
    if p < 0 or p > 1:
        raise ValueError("probability out of range")
    if p == 0 or p == 1:
        return mp.zero
    return -(p * mp.log(p, 2) + (1 - p) * mp.log(1 - p, 2))


# ------------------------------------------------------------ decoy bounds


@dataclass
class DecoyBounds:
    s11_lower: int
    phi11_upper: float
    error_terms: dict
    clamped: list = field(default_factory=list)
    y11_lower: float = 0.0
    e11y11_upper: float = 0.0

    @property
    def total_error(self):
        return sum(self.error_terms.values())


def _cell(grid, a, b):
    return grid[X_LABELS.index(a)][X_LABELS.index(b)]


class AnalyticDecoyKernel:
    """Three-decoy analytic bound on the (1,1)-photon yield and phase error.

    Writing ``G(a, b) = Q(a, b) * exp(a + b)`` for the per-pulse gain of the
    X-basis cell (a, b), the combination
    ``D(a, b) = G(a, b) - G(a, w) - G(w, b) + G(w, w)`` removes every term
    with a vacuum on either side. Subtracting ``D(mu, mu)`` from ``D(nu, nu)``
    with weights that cancel the (1, 2) and (2, 1) photon terms leaves the
    (1, 1) yield plus terms of negative sign, hence a lower bound.
    The error analogue of ``D(nu, nu)`` bounds the (1, 1) error yield above.

    Uses 13 one-sided terms: 7 count cells, 4 error cells, the
    expectation-to-observation step for the single-photon count and the one
    for its phase errors.
    """

    n_terms = 13
    _yield_cells = (("nu", "nu"), ("nu", "omega"), ("omega", "nu"), ("omega", "omega"),
                    ("mu", "mu"), ("mu", "omega"), ("omega", "mu"))
    _error_cells = (("nu", "nu"), ("nu", "omega"), ("omega", "nu"), ("omega", "omega"))

    def bounds(self, counts, src, eps_per_term):
        mu, nu, om = (mp.mpf(src.intensity_values[k]) for k in X_LABELS)
        lam = mp.mpf(src.intensity_values["lambda"])
        if not om < nu < mu:
            raise ValueError("decoy estimator needs omega < nu < mu")
        if lam <= 0:
            raise ValueError("signal intensity must be positive")
        n_rounds = counts.n_rounds
        qz = mp.mpf(src.q_z)
        qx = 1 - qz
        val = {"mu": mu, "nu": nu, "omega": om}
        prob = {k: mp.mpf(src.p_a[k]) for k in X_LABELS}
        terms = {}
        clamped = []

        def pulses(a, b):
            return mp.mpf(n_rounds) * qx * qx * prob[a] * prob[b]

        def gain(grid, a, b, upper, tag):
            obs = _cell(grid, a, b)
            n_pulses = int(mp.floor(pulses(a, b)))
            if obs > n_pulses:
                raise ValueError(f"cell ({a},{b}) exceeds its pulse count")
            mode = "inverse_up" if upper else "inverse_low"
            terms[f"{tag}[{a},{b}]"] = eps_per_term
            expected = fluctuation_bound(obs, n_pulses, eps_per_term, mode)
            return expected / pulses(a, b) * mp.exp(val[a] + val[b])

        xc = counts.x_counts
        g = {
            ("nu", "nu"): gain(xc, "nu", "nu", False, "count"),
            ("nu", "omega"): gain(xc, "nu", "omega", True, "count"),
            ("omega", "nu"): gain(xc, "omega", "nu", True, "count"),
            ("omega", "omega"): gain(xc, "omega", "omega", False, "count"),
            ("mu", "mu"): gain(xc, "mu", "mu", True, "count"),
            ("mu", "omega"): gain(xc, "mu", "omega", False, "count"),
            ("omega", "mu"): gain(xc, "omega", "mu", False, "count"),
        }
        w_nu = (mu - om) * (mu * mu - om * om)
        w_mu = (nu - om) * (nu * nu - om * om)
        numer = (w_nu * (g["nu", "nu"] - g["nu", "omega"] - g["omega", "nu"])
                 - w_mu * (g["mu", "mu"] - g["mu", "omega"] - g["omega", "mu"])
                 + (w_nu - w_mu) * g["omega", "omega"])
        y11 = numer / ((mu - om) ** 2 * (mu - nu) * (nu - om) ** 2)
        if y11 < 0:
            clamped.append("y11_lower")
            y11 = mp.zero

        xe = counts.x_errors
        eg = {
            ("nu", "nu"): gain(xe, "nu", "nu", True, "errors"),
            ("nu", "omega"): gain(xe, "nu", "omega", False, "errors"),
            ("omega", "nu"): gain(xe, "omega", "nu", False, "errors"),
            ("omega", "omega"): gain(xe, "omega", "omega", True, "errors"),
        }
        ey11 = (eg["nu", "nu"] - eg["nu", "omega"] - eg["omega", "nu"]
                + eg["omega", "omega"]) / (nu - om) ** 2
        if ey11 < 0:
            clamped.append("e11y11_upper")
            ey11 = mp.zero

        z_pulses = mp.mpf(n_rounds) * qz * qz
        single = (lam * mp.exp(-lam)) ** 2
        n_z = int(mp.floor(z_pulses))
        terms["single_photon_count"] = eps_per_term
        s11 = fluctuation_bound(min(z_pulses * single * y11, n_z), n_z, eps_per_term,
                                "chernoff_low")
        s11 = min(int(mp.floor(s11)), counts.z_count)
        terms["single_photon_phase_errors"] = eps_per_term
        ph = fluctuation_bound(min(z_pulses * single * ey11, n_z), n_z, eps_per_term,
                               "chernoff_up")
        if s11 <= 0:
            phi = 1.0
        else:
            phi = min(_round_up(ph / s11), 1.0)
        return DecoyBounds(
            s11_lower=s11,
            phi11_upper=phi,
            error_terms=terms,
            clamped=clamped,
            y11_lower=_round_down(y11),
            e11y11_upper=_round_up(ey11),
        )


DEFAULT_KERNEL = AnalyticDecoyKernel()


def estimate_bounds(counts, src, eps_per_term, kernel=None, max_terms=22):
    """Lower bound on single-photon Z successes and upper bound on their phase error."""
    kernel = kernel or DEFAULT_KERNEL
    if len(counts.x_counts) != 3 or any(len(row) != 3 for row in counts.x_counts):
        raise ValueError("X grid must be 3x3")
    bounds = kernel.bounds(counts, src, eps_per_term)
    if len(bounds.error_terms) > max_terms:
        raise ValueError(f"kernel used {len(bounds.error_terms)} terms, budget is {max_terms}")
    return bounds


# --------------------------------------------------------- key accounting


def lambda_ec(z_len, code_rate, block):
    """Syndrome bits disclosed for ``z_len`` sifted bits with byte-padded blocks."""
    if block <= 0 or block & (block - 1):
        raise ValueError("block size must be a power of two")
    rate = Fraction(str(code_rate)) if isinstance(code_rate, float) else Fraction(code_rate)
    if not 0 < rate < 1:
        raise ValueError("code rate must lie in (0, 1)")
    per_block = 8 * math.ceil((1 - rate) * block / 8)
    return math.ceil(z_len / block) * per_block if z_len > 0 else 0


def syndrome_bits(code_rate, block):
    return lambda_ec(1, code_rate, block)


def padded_length(z_len, block):
    return block * math.ceil(z_len / block)


def key_length(s11_lower, phi11_upper, lam_ec, budget):
    """Extractable length for one pair; a result <= 0 means abort.

    Raises :class:`ProtocolAbort` when the phase-error bound exceeds 1/2.
    """
    if phi11_upper > 0.5:
        raise ProtocolAbort(AbortCause.ESTIMATION_NEGATIVE,
                            f"phase-error bound {phi11_upper:.4f} exceeds 1/2")
    eps_pa = mp.mpf(budget.eps_sec_hat) / budget.divisor
    delta = eps_pa
    penalty = mp.log(1 / (4 * eps_pa * eps_pa * delta), 2)
    value = (mp.mpf(s11_lower) * (1 - binary_entropy(phi11_upper))
             - lam_ec - budget.t_ev - penalty)
    return int(mp.floor(value))


def final_length(l1, l2):
    if l1 <= 0 or l2 <= 0:
        raise ProtocolAbort(AbortCause.ESTIMATION_NEGATIVE, f"pair lengths {l1}, {l2}")
    length = 32 * (min(l1, l2) // 32)
    if length <= 0:
        raise ProtocolAbort(AbortCause.ESTIMATION_NEGATIVE,
                            f"min({l1}, {l2}) is below the 32-bit granularity")
    return length


def key_rate(l, l_au, n_rounds):
    """Secret bits per pulse as an exact fraction; zero when auth eats the key."""
    if n_rounds <= 0:
        raise ValueError("n_rounds must be positive")
    if l <= l_au:
        return Fraction(0)
    return Fraction(l - l_au, 2 * n_rounds)


def correctness_epsilon(z_total_len, t_ev):
    if t_ev < 1:
        raise ValueError("t_ev must be >= 1")
    value = Fraction(z_total_len) * Fraction(2) ** (1 - t_ev)
    return float(value)


# --------------------------------------------------------------- report


@dataclass
class KeyLengthReport:
    l_pairs: list
    lambda_ec: list
    l_final: int
    l_au: int
    key_rate: Fraction
    n_rounds: int
    eps_sec: float
    eps_cor: float
    bounds: list = field(default_factory=list)
    aborted: bool = False
    abort_cause: str = ""

    def as_dict(self):
        out = {
            "aborted": self.aborted,
            "abort_cause": self.abort_cause,
            "l_final": self.l_final,
            "l_au": self.l_au,
            "key_rate": f"{float(self.key_rate):.6e}",
            "key_rate_exact": f"{self.key_rate.numerator}/{self.key_rate.denominator}",
            "n_rounds": self.n_rounds,
            "eps_sec": f"{self.eps_sec:.6e}",
            "eps_cor": f"{self.eps_cor:.6e}",
        }
        for j, (lj, lec) in enumerate(zip(self.l_pairs, self.lambda_ec), start=1):
            out[f"pair{j}.l"] = lj
            out[f"pair{j}.lambda_ec"] = lec
        for j, b in enumerate(self.bounds, start=1):
            out[f"pair{j}.s11_lower"] = b.s11_lower
            out[f"pair{j}.phi11_upper"] = f"{b.phi11_upper:.6f}"
            if b.clamped:
                out[f"pair{j}.clamped"] = ",".join(b.clamped)
        return out


def compose_report(tables, src, budget, code_rate, block, l_au, kernel=None):
    """Run estimation and accounting for both pairs.

    Never raises on abort conditions; the returned report carries the verdict.
    """
    bounds, l_pairs, lams = [], [], []
    cause = ""
    for counts in tables:
        b = estimate_bounds(counts, src, budget.eps_per_term, kernel,
                            max_terms=budget.n_estimation_terms)
        lam = lambda_ec(counts.z_count, code_rate, block)
        bounds.append(b)
        lams.append(lam)
        try:
            l_pairs.append(key_length(b.s11_lower, b.phi11_upper, lam, budget))
        except ProtocolAbort as exc:
            l_pairs.append(0)
            cause = exc.cause.value
    z_total = sum(t.z_count for t in tables)
    try:
        l_final = final_length(*l_pairs)
    except ProtocolAbort as exc:
        l_final = 0
        cause = exc.cause.value
    n_rounds = tables[0].n_rounds
    return KeyLengthReport(
        l_pairs=l_pairs,
        lambda_ec=lams,
        l_final=l_final,
        l_au=l_au,
        key_rate=key_rate(l_final, l_au, n_rounds) if l_final else Fraction(0),
        n_rounds=n_rounds,
        eps_sec=budget.eps_sec(),
        eps_cor=budget.eps_cor(z_total),
        bounds=bounds,
        aborted=bool(cause),
        abort_cause=cause,
    )
