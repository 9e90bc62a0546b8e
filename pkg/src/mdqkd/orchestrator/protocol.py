"""End-to-end run: quantum rounds, dealing, sifting, estimation, IR, EV, PA.

Local work of the units in one step goes through the scheduler; messages
are exchanged by this driver in a fixed order, so the transcript does not
depend on the scheduling mode.
"""
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from mdqkd import emulator, ldpc, reconciliation
from mdqkd.bits import digest, xor
from mdqkd.errors import AbortCause, MajorityFailure, ProtocolAbort
from mdqkd.estimation import KeyLengthReport, SecurityBudget, key_rate
from mdqkd.privacy import auth_error_budget
from mdqkd.transcript import AUTHENTICATED, Transcript
from mdqkd.vss import (UNITS, WORKING_SET, deal, deal_public, holders, majority_vote,
                       missing_share, rbs_generate, share)

from mdqkd.orchestrator import sifting
from mdqkd.orchestrator.adversary import Adversary
from mdqkd.orchestrator.network import BOB, ProtocolNet
from mdqkd.orchestrator.transport import Scheduler, make_transport
from mdqkd.orchestrator.units import DESCRIPTOR_BITS, PAIRS, BobUnit, HashService, make_units

OK = "ok"


@dataclass
class RunResult:
    config: object
    verdict: str
    report: KeyLengthReport
    transcript: Transcript
    s_a: np.ndarray = None
    s_b: np.ndarray = None
    s_a_shares: dict = field(default_factory=dict)
    views: dict = field(default_factory=dict)
    public: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    abort_detail: str = ""

    @property
    def aborted(self):
        return self.verdict != OK

    def fingerprint(self):
        """Verdict, transcript and key digests; equal for bit-identical runs."""
        return digest([self.verdict, self.transcript.fingerprint(),
                       self.s_a if self.s_a is not None else b"",
                       self.s_b if self.s_b is not None else b""])


def load_rounds(cfg):
    """Round logs of both pairs and the source description."""
    if cfg.synthetic:
        logs = [emulator.generate_rounds(cfg.source, cfg.channel, cfg.seed, stream=j,
                                         method=cfg.generation) for j in PAIRS]
        return cfg.source, logs
    src, tables = emulator.load_counts(cfg.counts_path)
    return src, [emulator.rounds_from_counts(t, cfg.seed, stream=j)
                 for j, t in zip(PAIRS, tables)]


def _vote(copies, net, actor, subject):
    value = majority_vote(copies, net.transcript, actor, subject)
    if value is None:
        raise MajorityFailure(f"{subject}: majority value is missing")
    return value


def _vote_fields(copies, width, net, actor, subject):
    cols = []
    for i in range(width):
        col = [c[i] if isinstance(c, tuple) and len(c) == width else None for c in copies]
        cols.append(majority_vote(col, net.transcript, actor, f"{subject}[{i}]"))
    return cols


class _Run:
    def __init__(self, cfg, keep_views):
        self.cfg = cfg
        self.keep_views = keep_views
        self.transcript = Transcript()
        adv = cfg.adversary
        self.adversary = Adversary(adv, cfg.seed)
        self.adversary.bind(self.transcript)
        self.transport = make_transport(cfg.transport)
        self.net = ProtocolNet(self.transport, cfg.pool_bits, cfg.seed,
                               tamper=None if adv.honest else self.adversary,
                               transcript=self.transcript)
        self.scheduler = Scheduler(cfg.scheduler, cfg.seed)
        self.budget = SecurityBudget(cfg.eps_sec, cfg.t_ev)
        self.code = ldpc.get_code(cfg.block_bits, cfg.code_rate)
        self.hasher = HashService()
        self.timings = {}
        self.views = {}
        self.public = {}

    def step(self, name):
        self.transcript.step = name
        self._t0 = time.perf_counter()
        self._name = name

    def done(self):
        self.timings[self._name] = self.timings.get(self._name, 0) + time.perf_counter() - self._t0

    def local(self, fn, names):
        return self.scheduler.run({u: (lambda u=u: fn(u)) for u in names})

    @property
    def honest_reporter(self):
        bad = self.cfg.adversary.corrupt_units()
        return next(u for u in WORKING_SET if u not in bad)

    # ------------------------------------------------------------- steps
    def quantum(self):
        self.step("1-3 quantum")
        self.src, self.logs = load_rounds(self.cfg)
        for j, log in zip(PAIRS, self.logs):
            announce = (log.index, log.bsm)
            self.net.untrusted("Charles", f"QKD_A{j}", f"pair{j}.announce", announce)
            self.net.untrusted("Charles", "QKD_B", f"pair{j}.announce", announce)
            self.adversary.leak(f"QKD_A{j}", log.alice_bit[log.alice_label == emulator.LAMBDA])
        self.done()

    def distribute_and_sift(self):
        net = self.net
        self.units = make_units(self.cfg, self.budget, self.code, self.hasher,
                                self.src.n_rounds)
        self.bob = BobUnit(self.cfg, self.code, self.hasher)
        self.dealt = {}
        for j, log in zip(PAIRS, self.logs):
            dealer = f"QKD_A{j}"
            self.step(f"4 distribution pair{j}")
            zsel = log.alice_label == emulator.LAMBDA
            rng = np.random.default_rng(np.random.SeedSequence([self.cfg.seed, 100 + j]))
            r_z = log.alice_bit[zsel]
            shares = share(r_z, [rng.integers(0, 2, len(r_z), dtype=np.uint8)
                                 for _ in range(3)])
            self.dealt[j] = shares
            held = deal(shares, net, dealer, item=f"pair{j}.share")
            public = deal_public((log.index, log.alice_label, log.bsm, log.alice_bit[~zsel]),
                                 net, dealer, UNITS, f"pair{j}.public")
            for u in UNITS:
                self.units[u].receive_deal(j, held[u], public[u])
            raw = net.send("QKD_B", BOB, f"pair{j}.raw", (log.bob_label, log.bob_bit))
            self.bob.receive_raw(j, *raw)
            self.done()

            self.step(f"5 sifting pair{j}")
            m_b = self.bob.m_b(j)
            got = {u: net.send(BOB, u, f"pair{j}.mB", m_b, AUTHENTICATED) for u in WORKING_SET}
            for u in WORKING_SET:
                if got[u] is None:
                    raise MajorityFailure(f"{u} has no authentic copy of m_B for pair {j}")
            self.local(lambda u: self.units[u].sift(j, got[u]), WORKING_SET)
            self.done()

            self.step(f"6 estimation pair{j}")
            self.estimate(j, dealer)
            self.done()

    def estimate(self, j, dealer):
        net = self.net
        ls = self.local(lambda u: self.units[u].estimate(j, self.src), WORKING_SET)
        complaints = [(u, net.complain(u, f"pair{j}.estimation")) for u in WORKING_SET
                      if ls[u] <= 0]
        abort = 2 * len(complaints) > len(WORKING_SET)
        for _u, cid in complaints:
            net.broadcast(dealer, f"pair{j}.decision", "abort" if abort else "continue",
                          resolves=cid, default="abort" if abort else "continue")
        if abort:
            raise ProtocolAbort(AbortCause.ESTIMATION_NEGATIVE,
                                f"pair {j}: l_{j} <= 0 for a majority of units")
        a4 = self.units["A4"]
        zm = [net.send(u, "A4", f"pair{j}.zmask", self.units[u].zmask[j]) for u in WORKING_SET]
        lj = [net.send(u, "A4", f"pair{j}.l", self.units[u].l[j]) for u in WORKING_SET]
        a4.adopt_zmask(j, _vote(zm, net, "A4", f"pair{j}.zmask"))
        a4.l[j] = _vote(lj, net, "A4", f"pair{j}.l")
        to_b = [net.send(u, BOB, f"pair{j}.sift", self.units[u].zmask[j], AUTHENTICATED)
                for u in WORKING_SET]
        self.bob.sift(j, _vote(to_b, net, BOB, f"pair{j}.sift"))

    def reconcile(self):
        net, units, cfg = self.net, self.units, self.cfg
        self.step("6 final length")
        lengths = self.local(lambda u: units[u].final_length(), UNITS)
        self.l = lengths[self.honest_reporter]
        for u in UNITS:
            self.transcript.event(u, "final-length", int(lengths[u]))
        self.done()

        self.step("7 permutation")
        perm = reconciliation.byte_permutation(self.code.n // 8)
        self.local(lambda u: units[u].prepare(perm), UNITS)
        self.bob.prepare(perm)
        self.n = sum(self.bob.prepared[j].size for j in PAIRS)
        self.transcript.event("protocol", "permutation", perm)
        self.done()

        self.step("8 information reconciliation")
        if cfg.decoding == "central":
            syn = self.local(lambda u: units[u].syndrome_shares(), UNITS)
            for j in PAIRS:
                for k in range(1, 5):
                    target = UNITS[k - 1]
                    copies = [net.send(h, target, f"pair{j}.syndrome{k}", syn[h][j][k])
                              for h in holders(k)]
                    units[target].set_syndrome(j, _vote(copies, net, target,
                                                        f"pair{j}.syndrome{k}"))
        else:
            sy_b = self.bob.own_syndromes()
            got = {u: net.send(BOB, u, "sybob", sy_b, AUTHENTICATED) for u in WORKING_SET}
            for j in PAIRS:
                held = {u: units[u].prepared[j] for u in UNITS}
                target = {u: got[u][j - 1] if got[u] is not None else None for u in WORKING_SET}
                results = {}
                for u in WORKING_SET:
                    if target[u] is None:
                        raise MajorityFailure(f"{u} has no authentic syndrome of Z_B")
                    results[u] = reconciliation.distributed_decode(
                        held, target[u], cfg.qber_prior, self.code, net, units=(u,))[u]
                for u in WORKING_SET:
                    units[u].apply_correction(j, results[u].error_pattern)
                self.bob.decode[j] = results[self.honest_reporter]
            self.bob.keep_own()
        self.done()

        self.step("8 random bit strings")
        length = DESCRIPTOR_BITS + self.n + self.l - 1
        rngs = {u: np.random.default_rng(np.random.SeedSequence([cfg.seed, 200 + i]))
                for i, u in enumerate(("A1", "A2"), start=1)}
        rbs = rbs_generate(length, rngs, net, kind="rbs", corrupt=cfg.adversary.corrupt_units())
        for u in UNITS:
            units[u].set_rbs(rbs.values[u])
        self.public["rbs_retries"] = rbs.retries
        self.done()

        self.step("8 error verification")
        tags = self.local(lambda u: units[u].tag_shares(), UNITS)
        for k in range(1, 5):
            target = UNITS[k - 1]
            copies = [net.send(h, target, f"evtag{k}", tags[h][k]) for h in holders(k)]
            voted = _vote(copies, net, target, f"evtag{k}")
            own = [tags[target][i] for i in range(1, 5) if i != k]
            units[target].tag = voted ^ own[0] ^ own[1] ^ own[2]
        central = cfg.decoding == "central"
        msgs = []
        for u in WORKING_SET:
            unit = units[u]
            payload = ((unit.sy_a[1], unit.sy_a[2]) if central else None, None, unit.tag,
                       unit.descriptor_bits, unit.pa_seed)
            msgs.append(net.send(u, BOB, "ir-pa", payload, AUTHENTICATED))
        sy_pair, _, tag, desc, seed = _vote_fields(msgs, 5, net, BOB, "ir-pa")
        if tag is None or desc is None or seed is None or (central and sy_pair is None):
            raise MajorityFailure("CP_B could not settle m_A^{IR,PA}")
        if central:
            self.bob.reconcile(sy_pair)
        self.public.update(pa_seed=seed, descriptor=desc, tag=tag, n=self.n, l=self.l)
        if not self.bob.ev_check(desc, tag):
            for u in WORKING_SET:
                net.untrusted(BOB, u, "abort-notice", AbortCause.EV_MISMATCH.value)
            raise ProtocolAbort(AbortCause.EV_MISMATCH, "EV tags differ")
        self.done()

        self.step("9 privacy amplification")
        self.s_b = self.bob.privacy_amplification(seed)
        pa = self.local(lambda u: units[u].privacy_amplification(self.l), UNITS)
        self.s_a_shares = pa
        # test oracle only: nothing below is sent on any channel
        voted = [majority_vote([pa[h][k] for h in holders(k)]) for k in range(1, 5)]
        self.s_a = xor(*voted)
        self.transcript.event("protocol", "pa-output", self.l, note=f"n = {self.n}")
        self.done()

    def collect_views(self):
        if not self.keep_views:
            return
        for j in PAIRS:
            if j in self.dealt and j in self.units["A1"].zmask:
                zmask = _majority_zmask(self.units, j)
                log = self.logs[j - 1]
                z = sifting.sift_share(self.dealt[j].secret(), 4, log.alice_label, zmask)
                self.views[f"QKD_A{j}"] = {"pair": j, "sifted": z}
        for u, unit in self.units.items():
            self.views[u] = {"prepared": unit.prepared, "pa_seed": unit.pa_seed
                             if unit.rbs is not None else None}

    def report(self, verdict):
        rep = self.units[self.honest_reporter] if hasattr(self, "units") else None
        l_pairs = [rep.l.get(j, 0) for j in PAIRS] if rep else [0, 0]
        lams = [rep.lam.get(j, 0) for j in PAIRS] if rep else [0, 0]
        bounds = [rep.bounds[j] for j in PAIRS if j in rep.bounds] if rep else []
        eps_au = auth_error_budget(self.net.distinct_auth_lengths(), mode=self.cfg.auth_mode)
        budget = SecurityBudget(self.cfg.eps_sec, self.cfg.t_ev, eps_au=eps_au)
        l_au = self.net.auth_cost()
        l_final = getattr(self, "l", 0) if verdict == OK else 0
        n_rounds = self.src.n_rounds if hasattr(self, "src") else 0
        z_total = sum(rep.table[j].z_count for j in PAIRS if j in rep.table) if rep else 0
        return KeyLengthReport(
            l_pairs=l_pairs, lambda_ec=lams, l_final=l_final, l_au=l_au,
            key_rate=key_rate(l_final, l_au, n_rounds) if l_final and n_rounds else Fraction(0),
            n_rounds=n_rounds, eps_sec=budget.eps_sec(), eps_cor=budget.eps_cor(z_total),
            bounds=bounds, aborted=verdict != OK, abort_cause="" if verdict == OK else verdict)


def _majority_zmask(units, j):
    copies = [units[u].zmask[j] for u in WORKING_SET if j in units[u].zmask]
    return majority_vote(copies) if len(copies) >= 3 else copies[0]


def run_protocol(cfg, keep_views=True):
    """Run steps 1 to 9 for ``cfg``; an abort is reported in the verdict, not raised."""
    run = _Run(cfg, keep_views)
    verdict, detail = OK, ""
    t0 = time.perf_counter()
    try:
        run.quantum()
        run.distribute_and_sift()
        run.reconcile()
    except ProtocolAbort as exc:
        verdict, detail = exc.cause.value, exc.detail
        run.transcript.step = "abort"
        run.transcript.event("protocol", f"abort:{verdict}", note=detail)
    finally:
        run.transport.close()
    run.collect_views()
    report = run.report(verdict)
    stats = {
        "timings": run.timings,
        "total_seconds": time.perf_counter() - t0,
        "auth_messages": len(run.net.auth_log),
        "auth_lengths": run.net.distinct_auth_lengths(),
        "pools": run.net.pool_accounting(),
        "bytes_moved": run.transport.bytes_moved,
        "pa_evaluations": run.hasher.evaluations,
        "schedule": run.scheduler.order_log,
        "leaks": dict(run.adversary.leaks),
    }
    if hasattr(run, "bob"):
        stats["decode"] = {j: {"failures": r.failures, "iterations": r.iterations,
                               "errors": int(r.error_pattern.sum())}
                           for j, r in run.bob.decode.items()}
    ok = verdict == OK
    return RunResult(
        config=cfg, verdict=verdict, report=report, transcript=run.transcript,
        s_a=run.s_a if ok else None, s_b=run.s_b if ok else None,
        s_a_shares=run.s_a_shares if ok else {}, views=run.views if ok else {},
        public=run.public, stats=stats, abort_detail=detail)


def replay(cfg, transcript_lines):
    """Re-run ``cfg`` and report whether it reproduces the recorded transcript."""
    again = run_protocol(cfg, keep_views=False)
    lines = again.transcript.lines()
    return lines == list(transcript_lines), again
