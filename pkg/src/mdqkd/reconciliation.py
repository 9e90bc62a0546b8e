"""Error correction on XOR-shared keys and the matching error-verification tags.

The key (or every share of it) is zero-padded to whole LDPC blocks, then the
bytes inside each block are shuffled by one fixed, public permutation. The
syndrome and the tag are linear, so units can evaluate them share by share
and XOR the results.
"""
from dataclasses import dataclass

import numpy as np

from mdqkd import ldpc
from mdqkd.bits import as_bits, pad_to_multiple
from mdqkd.errors import AbortCause, MajorityFailure, ProtocolAbort
from mdqkd.toeplitz import ev_tag
from mdqkd.vss import WORKING_SET, holders, majority_vote, missing_share

PERMUTATION_SEED = 0x6D64716B


def byte_permutation(n_bytes, seed=PERMUTATION_SEED):
    return np.random.default_rng(seed).permutation(n_bytes)


def identity_permutation(n_bytes):
    return np.arange(n_bytes)


def inverse_permutation(perm):
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def permute(bits, perm):
    """Reorder the bytes of every ``8 * len(perm)``-bit block: output byte ``i`` is input byte ``perm[i]``."""
    bits = as_bits(bits)
    block = 8 * len(perm)
    if len(bits) % block:
        raise ValueError(f"length {len(bits)} is not a multiple of the {block}-bit block")
    by = bits.reshape(-1, len(perm), 8)
    return by[:, perm, :].reshape(-1)


def unpermute(bits, perm):
    return permute(bits, inverse_permutation(perm))


def pad_key(bits, block=ldpc.BLOCK_BITS):
    return pad_to_multiple(as_bits(bits), block)


def n_blocks(n_bits, block=ldpc.BLOCK_BITS):
    return -(-n_bits // block)


def prepare(bits, code, perm=None):
    """Pad to whole blocks and apply the byte permutation."""
    perm = byte_permutation(code.n // 8) if perm is None else perm
    return permute(pad_key(bits, code.n), perm)


def blocks(bits, code):
    bits = as_bits(bits)
    if len(bits) % code.n:
        raise ValueError("key is not a whole number of blocks")
    return bits.reshape(-1, code.n)


def syndromes(bits, code):
    """Per-block syndromes of a prepared key, shape ``(n_blocks, syndrome_len)``."""
    return np.array([code.syndrome(b) for b in blocks(bits, code)], dtype=np.uint8)


@dataclass
class ReconciliationResult:
    corrected: np.ndarray
    error_pattern: np.ndarray
    failures: list
    iterations: list

    @property
    def ok(self):
        return not self.failures


def decode_blocks(noisy, targets, qber_prior, code, max_iter=ldpc.MAX_ITER):
    """Decode every block of ``noisy`` against the matching target syndrome."""
    noisy_blocks = blocks(noisy, code)
    if len(targets) != len(noisy_blocks):
        raise ValueError("one target syndrome per block is required")
    out, errs, fails, iters = [], [], [], []
    for i, (b, t) in enumerate(zip(noisy_blocks, targets)):
        res = ldpc.decode(b, t, qber_prior, code, max_iter)
        out.append(res.corrected)
        errs.append(res.error_pattern)
        iters.append(res.iterations)
        if not res.success:
            fails.append(i)
    return ReconciliationResult(np.concatenate(out), np.concatenate(errs), fails, iters)


def central_decode(z_b, sy_a, qber_prior, code):
    """Bob-side correction: bring ``z_b`` onto the syndromes of Alice's key."""
    return decode_blocks(z_b, sy_a, qber_prior, code)


def distributed_decode(held, sy_zb, qber_prior, code, net, units=WORKING_SET):
    """Error pattern computed by Alice's units from shares and Bob's syndromes.

    ``held[u][k]`` is unit ``u``'s copy of prepared share ``k``. Each unit
    obtains the syndrome of its missing share by asking the other three
    holders and voting, XORs the three syndrome shares 1..3 with ``sy_zb`` and
    decodes starting from share 4, so the full key is never assembled.
    Returns ``{unit: ReconciliationResult}``; ``error_pattern`` is the
    correction each unit applies to share 4.
    """
    syn = {u: {k: syndromes(v, code) for k, v in held[u].items() if k != 4}
           for u in units}
    results = {}
    for u in units:
        k_missing = missing_share(u)
        have = dict(syn[u])
        if k_missing in (1, 2, 3):
            copies = []
            for h in holders(k_missing):
                own = syn[h][k_missing] if h in syn else syndromes(held[h][k_missing], code)
                got = net.send(h, u, f"syndrome{k_missing}", own)
                copies.append(got)
            try:
                have[k_missing] = majority_vote(copies, net.transcript, u, f"syndrome{k_missing}")
            except MajorityFailure as exc:
                raise ProtocolAbort(AbortCause.MV_FAILURE, str(exc)) from exc
        target = np.asarray(sy_zb, dtype=np.uint8).copy()
        for k in (1, 2, 3):
            target ^= np.asarray(have[k], dtype=np.uint8)
        results[u] = decode_blocks(held[u][4], target, qber_prior, code)
    return results


def share_tags(held_shares, descriptor):
    """Per-share EV tags; the tag of the key is their XOR."""
    return {k: ev_tag(v, descriptor) for k, v in held_shares.items()}

