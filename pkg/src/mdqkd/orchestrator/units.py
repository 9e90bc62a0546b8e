"""State machines of Alice's CP units and of CP_B.

Each unit keeps only what it received or computed. The driver in
:mod:`mdqkd.orchestrator.protocol` moves messages between them.
"""
import numpy as np

from mdqkd import estimation, reconciliation
from mdqkd.bits import digest
from mdqkd.errors import ProtocolAbort
from mdqkd.privacy import PaSpec, ev_descriptor_from_bits, pa_hash
from mdqkd.toeplitz import ev_tag
from mdqkd.vss import UNITS, holders, missing_share

from mdqkd.orchestrator import sifting

PAIRS = (1, 2)
DESCRIPTOR_BITS = 128


class HashService:
    """Pure-function evaluator for privacy amplification with a result cache.

    Several units hash identical share copies with the same public seed; the
    cache returns the stored output instead of recomputing it. It holds no
    unit state and cannot change any result.
    """

    def __init__(self):
        self._cache = {}
        self.evaluations = 0

    def pa(self, x, spec):
        key = (digest(x), digest(spec.seed), spec.l)
        if key not in self._cache:
            self.evaluations += 1
            self._cache[key] = pa_hash(x, spec)
        return self._cache[key].copy()


class CpUnit:
    def __init__(self, name, cfg, budget, code, hasher, n_rounds):
        self.name = name
        self.cfg = cfg
        self.n_rounds = n_rounds
        self.budget = budget
        self.code = code
        self.hasher = hasher
        self.shares = {}      # pair -> {k: dealt share}
        self.public = {}      # pair -> (index, a, s, r_x)
        self.zmask = {}
        self.sifted = {}      # pair -> {k: sifted share}
        self.table = {}
        self.bounds = {}
        self.lam = {}
        self.l = {}
        self.prepared = {}    # pair -> {k: padded and permuted share}
        self.syndrome = {}    # pair -> {k: per-block syndromes}
        self.sy_a = {}
        self.rbs = None
        self.tag = None
        self.pa_out = {}

    @property
    def held(self):
        return tuple(k for k in range(1, 5) if self.name in holders(k))

    def receive_deal(self, j, held, public):
        self.shares[j] = {k: held[k] for k in self.held}
        self.public[j] = public

    # step 5
    def sift(self, j, m_b):
        index, a, s, r_x = self.public[j]
        b, rp_x = m_b
        zmask = sifting.coincidence_mask(a, b)
        self.zmask[j] = zmask
        self.table[j] = sifting.x_table(a, b, s, r_x, rp_x, zmask, self.n_rounds)
        self.adopt_zmask(j, zmask)
        return zmask

    def adopt_zmask(self, j, zmask):
        a = self.public[j][1]
        self.zmask[j] = zmask
        self.sifted[j] = {k: sifting.sift_share(v, k, a, zmask) for k, v in self.shares[j].items()}

    # step 6
    def estimate(self, j, src):
        t = self.table[j]
        b = estimation.estimate_bounds(t, src, self.budget.eps_per_term,
                                       max_terms=self.budget.n_estimation_terms)
        lam = estimation.lambda_ec(t.z_count, self.cfg.code_rate, self.cfg.block_bits)
        try:
            l = estimation.key_length(b.s11_lower, b.phi11_upper, lam, self.budget)
        except ProtocolAbort:
            l = 0
        self.bounds[j], self.lam[j], self.l[j] = b, lam, l
        return l

    def final_length(self):
        return estimation.final_length(self.l[1], self.l[2])

    # step 7
    def prepare(self, perm):
        for j in PAIRS:
            self.prepared[j] = {k: reconciliation.prepare(v, self.code, perm)
                                for k, v in self.sifted[j].items()}

    def padded_lengths(self):
        return [len(next(iter(self.prepared[j].values()))) for j in PAIRS]

    # step 8
    def syndrome_shares(self):
        self.syndrome = {j: {k: reconciliation.syndromes(v, self.code)
                             for k, v in self.prepared[j].items()} for j in PAIRS}
        return self.syndrome

    def set_syndrome(self, j, voted_missing):
        parts = dict(self.syndrome[j])
        parts[missing_share(self.name)] = voted_missing
        out = np.zeros_like(next(iter(self.syndrome[j].values())))
        for k in range(1, 5):
            out ^= parts[k]
        self.sy_a[j] = out
        return out

    def apply_correction(self, j, error_pattern):
        """Distributed decoding moves Alice's key onto Bob's through share 4."""
        self.prepared[j][4] = self.prepared[j][4] ^ error_pattern

    def set_rbs(self, bits):
        self.rbs = np.asarray(bits, dtype=np.uint8)

    @property
    def descriptor_bits(self):
        return self.rbs[:DESCRIPTOR_BITS]

    @property
    def pa_seed(self):
        return self.rbs[DESCRIPTOR_BITS:]

    def concat(self, k):
        return np.concatenate([self.prepared[j][k] for j in PAIRS])

    def tag_shares(self):
        d = ev_descriptor_from_bits(self.descriptor_bits)
        return {k: ev_tag(self.concat(k), d) for k in self.held}

    # step 9
    def privacy_amplification(self, l):
        n = sum(self.padded_lengths())
        spec = PaSpec.for_final_key(n, l, self.pa_seed)
        self.pa_out = {k: self.hasher.pa(self.concat(k), spec) for k in self.held}
        return self.pa_out


class BobUnit:
    name = "B"

    def __init__(self, cfg, code, hasher):
        self.cfg = cfg
        self.code = code
        self.hasher = hasher
        self.raw = {}
        self.z_b = {}
        self.prepared = {}
        self.corrected = {}
        self.decode = {}
        self.key = None

    def receive_raw(self, j, b, rp):
        self.raw[j] = (np.asarray(b), np.asarray(rp, dtype=np.uint8))

    def m_b(self, j):
        b, rp = self.raw[j]
        return (b, rp[b != sifting.LAMBDA])

    def sift(self, j, zmask):
        b, rp = self.raw[j]
        self.z_b[j] = sifting.bob_sifted(b, rp[b == sifting.LAMBDA], zmask)

    def prepare(self, perm):
        for j in PAIRS:
            self.prepared[j] = reconciliation.prepare(self.z_b[j], self.code, perm)

    def own_syndromes(self):
        return tuple(reconciliation.syndromes(self.prepared[j], self.code) for j in PAIRS)

    def reconcile(self, sy_a):
        for j, sy in zip(PAIRS, sy_a):
            res = reconciliation.central_decode(self.prepared[j], sy, self.cfg.qber_prior,
                                                self.code)
            self.decode[j] = res
            self.corrected[j] = res.corrected

    def keep_own(self):
        self.corrected = dict(self.prepared)

    def ev_check(self, descriptor_bits, tag):
        d = ev_descriptor_from_bits(descriptor_bits)
        z = np.concatenate([self.corrected[j] for j in PAIRS])
        return ev_tag(z, d) == tag

    def privacy_amplification(self, seed):
        n = sum(len(self.corrected[j]) for j in PAIRS)
        l = len(seed) - n + 1
        spec = PaSpec.for_final_key(n, l, seed)
        z = np.concatenate([self.corrected[j] for j in PAIRS])
        self.key = self.hasher.pa(z, spec)
        return self.key


def make_units(cfg, budget, code, hasher, n_rounds):
    return {name: CpUnit(name, cfg, budget, code, hasher, n_rounds) for name in UNITS}
