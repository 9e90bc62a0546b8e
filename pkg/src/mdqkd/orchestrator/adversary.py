"""Scripted misbehaviour of one QKD module and/or one CP unit.

Every deviation goes through the network's tamper hook, so it is applied
at the moment a corrupt device emits a message and is logged in the
transcript as an ``adversary:<behaviour>`` event.

Message kinds used by the protocol driver, grouped by the behaviour that
targets them:

    pairJ.shareK, pairJ.public           dealt by QKD_AJ (inconsistent_distribution)
    pairJ.shareK.check                   pairwise share checks (wrong_share_copies)
    pairJ.syndromeK, evtagK              reconstruction inputs (wrong_share_copies;
                                         syndromes also tampered_syndrome)
    pairJ.zmask, pairJ.l, pairJ.sift,    values feeding a majority vote
    rbs.final, ir-pa                     (wrong_mv_inputs)
    rbs.*                                random-bit-string generation (garbage_rbs)
"""
import numpy as np

from mdqkd.bits import digest

MV_KINDS = ("zmask", "l", "sift", "rbs.final", "ir-pa", "sybob")


def _kind_tail(kind):
    # "pair1.zmask" -> "zmask"; "rbs.final" stays whole
    return kind if kind.startswith("rbs.") else kind.split(".", 1)[-1]


def corrupt_payload(payload, rng):
    """A plausible-looking wrong value of the same type and shape."""
    if payload is None:
        return None
    if isinstance(payload, np.ndarray):
        out = payload.copy()
        if out.size == 0:
            return out
        flat = out.reshape(-1)
        pos = np.unique(np.concatenate([[0], rng.integers(0, flat.size, 8)]))
        if out.dtype == np.uint8 and int(flat.max(initial=0)) <= 1:
            flat[pos] ^= 1
        else:
            flat[pos] = flat[pos] + 1
        return out
    if isinstance(payload, (bool, np.bool_)):
        return not payload
    if isinstance(payload, (int, np.integer)):
        return int(payload) ^ 1
    if isinstance(payload, tuple):
        return tuple(corrupt_payload(p, rng) for p in payload)
    if isinstance(payload, bytes):
        return bytes([payload[0] ^ 1]) + payload[1:] if payload else payload
    return payload


class Adversary:
    """Tamper hook implementing an :class:`AdversarySpec`."""

    def __init__(self, spec, seed=0):
        self.spec = spec
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 666]))
        self.transcript = None
        self.leaks = {}

    def bind(self, transcript):
        self.transcript = transcript

    def _log(self, actor, behaviour, kind, out):
        if self.transcript is not None:
            self.transcript.event(actor, f"adversary:{behaviour}", out, note=kind)

    def leak(self, module, raw_key):
        """Hand the raw key of a leaking QKD module to the eavesdropper."""
        if module == f"QKD_{self.spec.qkd_module}" and self.spec.qkd_behaviour == "leak_raw_key":
            self.leaks[module] = raw_key.copy()
            self._log(module, "leak_raw_key", "raw-key", raw_key)

    def __call__(self, sender, receiver, kind, payload):
        spec = self.spec
        if spec.qkd_module and sender == f"QKD_{spec.qkd_module}":
            return self._qkd(sender, receiver, kind, payload)
        if spec.cp_unit and sender == spec.cp_unit:
            return self._cp(sender, receiver, kind, payload)
        return payload

    def _qkd(self, sender, receiver, kind, payload):
        if self.spec.qkd_behaviour != "inconsistent_distribution" or receiver == "*":
            return payload
        tail = _kind_tail(kind)
        # the first holder of every dealt item gets a different copy
        if tail.startswith("share") and "." not in tail:
            k = int(tail[len("share"):])
            first = "A2" if k == 1 else "A1"
            if receiver == first:
                out = corrupt_payload(payload, self.rng)
                self._log(sender, "inconsistent_distribution", kind, out)
                return out
        if tail == "public" and receiver == "A1":
            out = corrupt_payload(payload, self.rng)
            self._log(sender, "inconsistent_distribution", kind, out)
            return out
        return payload

    def _cp(self, sender, receiver, kind, payload):
        behaviours = self.spec.cp_behaviours
        if "silent" in behaviours:
            self._log(sender, "silent", kind, None)
            return None
        tail = _kind_tail(kind)
        hit = None
        if "garbage_rbs" in behaviours and kind.startswith("rbs.") and payload is not None:
            out = self.rng.integers(0, 2, len(payload), dtype=np.uint8)
            self._log(sender, "garbage_rbs", kind, out)
            return out
        if "wrong_share_copies" in behaviours and (
                (tail.startswith("share") and tail.endswith(".check"))
                or tail.startswith("syndrome") or kind.startswith("evtag")):
            hit = "wrong_share_copies"
        if "tampered_syndrome" in behaviours and (tail.startswith("syndrome") or
                                                 tail == "sybob"):
            hit = "tampered_syndrome"
        if "tampered_syndrome" in behaviours and tail == "ir-pa" and payload is not None:
            out = (corrupt_payload(payload[0], self.rng),) + tuple(payload[1:])
            self._log(sender, "tampered_syndrome", kind, out)
            return out
        if "wrong_mv_inputs" in behaviours and tail in MV_KINDS:
            hit = "wrong_mv_inputs"
        if hit is None:
            return payload
        out = corrupt_payload(payload, self.rng)
        self._log(sender, hit, kind, out)
        return out

    def fingerprint(self):
        return digest(self.spec.describe())
