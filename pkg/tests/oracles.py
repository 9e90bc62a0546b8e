"""Independent reference computations used only by the tests."""
import numpy as np

from mdqkd.emulator import _POL, LABELS, X_LABELS, CountsTable, convention_flip, outcome_probabilities


def _gains(xa, xb, basis, ch):
    """Per-pulse gain and error gain of one basis at intensities ``(xa, xb)``, times e^(xa+xb)."""
    g = e = 0.0
    for ra in (0, 1):
        for rb in (0, 1):
            probs = outcome_probabilities(xa, xb, _POL[basis, ra], _POL[basis, rb], ch)
            for s, p in probs.items():
                flip = int(convention_flip(basis == "Z", s))
                g += p / 4
                if (ra ^ flip) != rb:
                    e += p / 4
    w = np.exp(xa + xb)
    return g * w, e * w


def single_photon_yields(ch, basis, h=2e-3):
    """``(Y11, e11 * Y11)`` from the mixed second difference at zero, Richardson-extrapolated.

    ``G(a, b) e^(a+b) = sum_nm a^n b^m Y_nm / (n! m!)``, so the mixed
    difference over ``[0, h]^2`` equals ``h^2 Y11 + O(h^3)``.
    """
    def mixed(step):
        f = {(i, j): _gains(i * step, j * step, basis, ch) for i in (0, 1) for j in (0, 1)}
        return [(f[1, 1][k] - f[1, 0][k] - f[0, 1][k] + f[0, 0][k]) / step ** 2 for k in (0, 1)]
    a, b = mixed(h), mixed(h / 2)
    return tuple(2 * y2 - y1 for y1, y2 in zip(a, b))


def expected_single_photon_counts(src, ch):
    """Expected number of single-photon Z successes and the X-basis error rate e11."""
    lam = src.intensity_values["lambda"]
    y11_z, _ = single_photon_yields(ch, "Z")
    y11_x, ey11_x = single_photon_yields(ch, "X")
    n_z = src.n_rounds * src.q_z ** 2
    return n_z * (lam * np.exp(-lam)) ** 2 * y11_z, ey11_x / y11_x


def sample_counts(src, ch, rng):
    """Counts table drawn cell by cell from the model's exact gain and error rate."""
    from mdqkd.emulator import expected_cell
    probs = src.label_probabilities()
    n = src.n_rounds
    g, e = expected_cell(src, ch, 0, 0)
    z = rng.binomial(int(n * probs[0] ** 2), g)
    xc = [[0] * 3 for _ in range(3)]
    xe = [[0] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            g, e = expected_cell(src, ch, i + 1, j + 1)
            xc[i][j] = int(rng.binomial(int(n * probs[i + 1] * probs[j + 1]), g))
            xe[i][j] = int(rng.binomial(xc[i][j], e))
    return CountsTable(int(z), int(rng.binomial(z, expected_cell(src, ch, 0, 0)[1])), xc, xe, n)


def toeplitz_naive(x, seed, l):
    """``y_i = sum_j seed[i - j + n - 1] x_j mod 2`` evaluated row by row."""
    x = np.asarray(x, dtype=np.int64)
    seed = np.asarray(seed, dtype=np.int64)
    n = len(x)
    return np.array([int(seed[i:i + n][::-1] @ x) & 1 for i in range(l)], dtype=np.uint8)


def parity_check_dense(code):
    h = np.zeros((code.m, code.n), dtype=np.uint8)
    for c in range(code.m):
        h[c, code.chk_var[code.chk_ptr[c]:code.chk_ptr[c + 1]]] ^= 1
    return h


def _same_prepared(a, b, unit):
    pa, pb = a.views[unit]["prepared"], b.views[unit]["prepared"]
    return all(np.array_equal(pa[j][k], pb[j][k]) for j in pa for k in pa[j])


def paired_outcome(result, honest):
    """Classify a run against the same-seed honest run.

    ``identical``       same verdict and keys
    ``justified-abort`` abort with a cause, after logged adversary activity
    ``rbs-deviation``   keys agree and the key length and every honest unit's
                        reconciled data match the honest run; only values
                        drawn by the random-bit-string protocol, to which the
                        corrupt unit contributes, differ
    ``violation``       anything else, in particular S_A != S_B
    """
    acted = [r for r in result.transcript if r.kind.startswith("adversary:")]
    if result.aborted:
        return "justified-abort" if acted and result.abort_detail else "violation"
    if result.s_a is None or not np.array_equal(result.s_a, result.s_b):
        return "violation"
    if (not honest.aborted and np.array_equal(result.s_a, honest.s_a)
            and np.array_equal(result.s_b, honest.s_b)):
        return "identical"
    corrupt = set(result.config.adversary.corrupt_units())
    rbs_touched = any(r.note.startswith("rbs") for r in acted)
    honest_units = [u for u in ("A1", "A2", "A3", "A4") if u not in corrupt]
    if (rbs_touched and not honest.aborted and len(result.s_a) == len(honest.s_a)
            and all(_same_prepared(result, honest, u) for u in honest_units)):
        return "rbs-deviation"
    return "violation"
