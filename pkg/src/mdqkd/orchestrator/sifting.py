"""Sifting of dealt shares and public X-basis data.

Shares are dealt over Alice's Z-basis rounds (label lambda). The
coincidence mask marks successful rounds where both sides chose lambda;
restricting each share to it keeps the XOR identity. The bit-flip
convention (every Z coincidence flips, X rounds flip on psi-minus) is
applied to share 4 only, which flips the shared secret exactly once.
"""
from dataclasses import dataclass

import numpy as np

from mdqkd.emulator import LAMBDA, PSI_MINUS, X_LABELS, CountsTable, SiftMasks
from mdqkd.errors import ValidationError
from mdqkd.vss import ShareSet

FLIPPED_SHARE = 4


def coincidence_mask(a, b):
    return (np.asarray(a) == LAMBDA) & (np.asarray(b) == LAMBDA)


def grid_masks(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return {(la, lb): (a == i) & (b == j)
            for i, la in enumerate(X_LABELS, start=1) for j, lb in enumerate(X_LABELS, start=1)}


def masks(a, b):
    m = SiftMasks(coincidence_mask(a, b), grid_masks(a, b))
    m.validate()
    return m


def z_selector(a, zmask):
    """Positions of the coincidences inside Alice's Z-basis string."""
    a = np.asarray(a)
    zmask = np.asarray(zmask, dtype=bool)
    if len(a) != len(zmask):
        raise ValidationError(f"mask length {len(zmask)} differs from {len(a)} rounds")
    return zmask[a == LAMBDA]


def sift_share(share, k, a, zmask):
    """Restrict share ``k`` of Alice's Z string to the coincidences."""
    sel = z_selector(a, zmask)
    share = np.asarray(share, dtype=np.uint8)
    if len(share) != len(sel):
        raise ValidationError(f"share length {len(share)} differs from {len(sel)} Z rounds")
    out = share[sel]
    if k == FLIPPED_SHARE:
        out = out ^ 1
    return out


def bob_sifted(b, rp_z, zmask):
    """Bob's bits at the coincidences; ``rp_z`` covers his Z-basis rounds."""
    b = np.asarray(b)
    sel = np.asarray(zmask, dtype=bool)[b == LAMBDA]
    if len(rp_z) != len(sel):
        raise ValidationError("Bob's Z string does not match his labels")
    return np.asarray(rp_z, dtype=np.uint8)[sel]


def x_table(a, b, s, r_x, rp_x, zmask, n_rounds):
    """Counts table from public data; Z errors are unknown at this stage and left 0."""
    a, b, s = np.asarray(a), np.asarray(b), np.asarray(s)
    ax, bx = a != LAMBDA, b != LAMBDA
    if len(r_x) != int(ax.sum()) or len(rp_x) != int(bx.sum()):
        raise ValidationError("X strings do not match the labels")
    alice = np.zeros(len(a), dtype=np.uint8)
    bob = np.zeros(len(b), dtype=np.uint8)
    alice[ax] = np.asarray(r_x, dtype=np.uint8) ^ (s[ax] == PSI_MINUS)
    bob[bx] = rp_x
    diff = alice ^ bob
    xc = [[0] * 3 for _ in range(3)]
    xe = [[0] * 3 for _ in range(3)]
    for (la, lb), m in grid_masks(a, b).items():
        i, j = X_LABELS.index(la), X_LABELS.index(lb)
        xc[i][j] = int(m.sum())
        xe[i][j] = int(diff[m].sum())
    return CountsTable(int(np.count_nonzero(zmask)), 0, xc, xe, n_rounds)


@dataclass
class SiftResult:
    masks: SiftMasks
    shares: ShareSet
    z_b: np.ndarray
    x_alice: dict
    x_bob: dict


def sift(log, shares):
    """Sift a round log and the shares of Alice's Z string in one go.

    ``shares`` is a ShareSet over ``log.alice_bit[log.alice_label == LAMBDA]``.
    Returns the masks, sifted shares (flip convention applied), Bob's sifted
    key and the X-basis strings per grid cell with Alice's flips applied.
    """
    m = masks(log.alice_label, log.bob_label)
    sifted = ShareSet([sift_share(sh, k, log.alice_label, m.z)
                       for k, sh in enumerate(shares.shares, start=1)])
    z_b = log.bob_bit[m.z]
    corrected = log.alice_bit ^ (log.bsm == PSI_MINUS).astype(np.uint8)
    x_alice = {c: corrected[mask] for c, mask in m.x.items()}
    x_bob = {c: log.bob_bit[mask] for c, mask in m.x.items()}
    return SiftResult(m, sifted, z_b, x_alice, x_bob)
