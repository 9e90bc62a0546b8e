"""Eavesdropper view, one-time-pad demonstration and analytic rate curves."""
from dataclasses import replace

import numpy as np
from scipy import stats

from mdqkd import emulator, estimation, ldpc, reconciliation
from mdqkd.bits import xor
from mdqkd.emulator import LABELS, ChannelParams
from mdqkd.errors import ProtocolAbort
from mdqkd.privacy import PaSpec, pa_hash
from mdqkd.toeplitz import TAG_BITS
from mdqkd.vss import UNITS

AUTH_MESSAGES = 5
AUTH_REDUNDANCY = 3


def corrupt_devices(spec):
    """Device names of an AdversarySpec, e.g. ``{"QKD_A1", "CP_A2"}``."""
    out = set()
    if spec.qkd_module:
        out.add(f"QKD_{spec.qkd_module}")
    if spec.cp_unit:
        out.add(f"CP_{spec.cp_unit}")
    return out


def _split_corrupt(corrupt):
    qkd = sorted(d for d in corrupt if d.startswith("QKD_"))
    cp = sorted(d for d in corrupt if d.startswith("CP_"))
    unknown = set(corrupt) - set(qkd) - set(cp)
    if unknown:
        raise ValueError(f"unknown devices {sorted(unknown)}")
    if not corrupt:
        raise ValueError("the eavesdropper view needs at least one corrupt device")
    if len(qkd) > 1 or len(cp) > 1:
        raise ValueError("at most one QKD module and one CP unit may be corrupt")
    if qkd and qkd[0] not in ("QKD_A1", "QKD_A2"):
        raise ValueError(f"{qkd[0]} is not one of Alice's QKD modules")
    if cp and cp[0][3:] not in UNITS:
        raise ValueError(f"{cp[0]} is not one of Alice's CP units")
    return (qkd[0] if qkd else None), (cp[0][3:] if cp else None)


def eve_view(result, corrupt=None):
    """Eavesdropper's guess of the final key from the corrupt devices' data.

    For the pair of a corrupt QKD module Eve takes its sifted key; for any
    other pair she XORs the three shares the corrupt CP unit holds, which
    misses exactly one share. The result goes through the public PA hash.
    """
    if result.aborted:
        raise ValueError("an aborted run has no key to attack")
    if corrupt is None:
        corrupt = corrupt_devices(result.config.adversary)
    module, unit = _split_corrupt(set(corrupt))
    cfg = result.config
    code = ldpc.get_code(cfg.block_bits, cfg.code_rate)
    perm = reconciliation.byte_permutation(code.n // 8)
    n, l = result.public["n"], result.public["l"]
    parts = []
    reference = result.views[UNITS[0]]["prepared"]
    for j in (1, 2):
        if module == f"QKD_A{j}":
            parts.append(reconciliation.prepare(result.views[module]["sifted"], code, perm))
        elif unit is not None:
            held = result.views[unit]["prepared"][j]
            parts.append(xor(*held.values()))
        else:
            parts.append(np.zeros(len(next(iter(reference[j].values()))), dtype=np.uint8))
    z_e = np.concatenate(parts)
    if len(z_e) != n:
        raise ValueError("corrupt views do not cover the PA input")
    return pa_hash(z_e, PaSpec(n, l, result.public["pa_seed"]))


def bit_bias(s_e, s_a):
    """Fraction of ones in ``s_e ^ s_a`` and its deviation from 1/2 in standard errors."""
    d = np.asarray(s_e, dtype=np.uint8) ^ np.asarray(s_a, dtype=np.uint8)
    frac = float(d.mean()) if d.size else 0.5
    sigma = 0.5 / np.sqrt(d.size) if d.size else float("inf")
    return frac, (frac - 0.5) / sigma


# ------------------------------------------------------------------ OTP demo


def _key_bytes(key, n_bytes):
    key = np.asarray(key, dtype=np.uint8)
    if len(key) < 8 * n_bytes:
        raise ValueError(f"key has {len(key)} bits, the image needs {8 * n_bytes}")
    return np.packbits(key[:8 * n_bytes])


def byte_uniformity(data):
    """Chi-square statistic and p-value of a byte histogram against uniform."""
    hist = np.bincount(np.frombuffer(bytes(data), dtype=np.uint8), minlength=256)
    if hist.sum() == 0:
        return 0.0, 1.0
    res = stats.chisquare(hist)
    return float(res.statistic), float(res.pvalue)


def demo_otp(image, s_a, s_b, s_e=None):
    """Encrypt ``image`` with S_A, decrypt with S_B, and show what S_E yields."""
    data = np.frombuffer(bytes(image), dtype=np.uint8)
    cipher = data ^ _key_bytes(s_a, len(data))
    out = {
        "ciphertext": cipher.tobytes(),
        "bob_plain": (cipher ^ _key_bytes(s_b, len(data))).tobytes(),
        "eve_plain": None,
        "eve_chi2": None,
        "eve_p_value": None,
    }
    if s_e is not None:
        eve = (cipher ^ _key_bytes(s_e, len(data))).tobytes()
        out["eve_plain"] = eve
        out["eve_chi2"], out["eve_p_value"] = byte_uniformity(eve)
    return out


# -------------------------------------------------------------- rate curve


def auth_cost(n_messages=AUTH_MESSAGES, redundancy=AUTH_REDUNDANCY):
    return TAG_BITS * n_messages * redundancy


def calibration_from_counts(src, table):
    """Channel pinned to the gains and error rates observed in a counts table.

    The Z cell uses the observed Z gain and QBER; X cells use their own
    counts. Cross-basis cells keep the physical model, which the estimation
    never reads.
    """
    p = dict(zip(LABELS, src.label_probabilities()))
    n = src.n_rounds
    cal = {("lambda", "lambda"): (table.z_count / (n * p["lambda"] ** 2), table.qber_z())}
    for i, la in enumerate(emulator.X_LABELS):
        for j, lb in enumerate(emulator.X_LABELS):
            c, e = table.x_counts[i][j], table.x_errors[i][j]
            cal[la, lb] = (c / (n * p[la] * p[lb]), e / c if c else 0.0)
    return ChannelParams(calibration=cal)


def pair_length(src, ch, budget, code_rate, block):
    """Key length from the expected counts of one pair; <= 0 means abort."""
    t = emulator.expected_counts(src, ch)
    if t.z_count == 0:
        return 0
    b = estimation.estimate_bounds(t, src, budget.eps_per_term,
                                   max_terms=budget.n_estimation_terms)
    try:
        return estimation.key_length(b.s11_lower, b.phi11_upper,
                                     estimation.lambda_ec(t.z_count, code_rate, block), budget)
    except ProtocolAbort:
        return 0


def rate_curve(cfg, losses, l_au=None):
    """Rows of ``(loss_db, K_dishonest, K_honest)`` in bits per pulse.

    Both pairs see the same channel. The dishonest rate keeps
    ``min(l_1, l_2)`` rounded down to 32 bits; the honest baseline keeps
    ``l_1 + l_2``. Both pay the authentication cost once and count ``2N``
    pulses. A pair with ``l_j <= 0`` gives zero for the dishonest rate.
    """
    if not cfg.synthetic:
        raise ValueError("rate curves need a synthetic source")
    l_au = auth_cost() if l_au is None else l_au
    budget = estimation.SecurityBudget(cfg.eps_sec, cfg.t_ev)
    n = cfg.source.n_rounds
    rows = []
    for loss in losses:
        ch = replace(cfg.channel, loss_db=float(loss))
        l = pair_length(cfg.source, ch, budget, cfg.code_rate, cfg.block_bits)
        l1 = l2 = max(l, 0)
        try:
            k_d = float(estimation.key_rate(estimation.final_length(l1, l2), l_au, n))
        except ProtocolAbort:
            k_d = 0.0
        k_h = float(estimation.key_rate(l1 + l2, l_au, n)) if l1 + l2 > 0 else 0.0
        rows.append((float(loss), k_d, k_h))
    return rows
