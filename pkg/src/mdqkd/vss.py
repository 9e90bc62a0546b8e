"""Four-unit additive secret sharing tolerating one corrupted unit.

Share ``k`` (1..4) is held by every unit except ``A{k}``, so each share has
three holders and one liar is always outvoted.

Multi-party sub-protocols talk through a *net* object with ``send``,
``broadcast`` and ``complain`` methods (see :class:`LocalNet`). ``send``
returns what the receiver actually got, or ``None`` when nothing arrived.
"""
from dataclasses import dataclass

import numpy as np

from mdqkd.bits import as_bits, xor
from mdqkd.errors import MajorityFailure
from mdqkd.transcript import SHIELDED, Transcript

UNITS = ("A1", "A2", "A3", "A4")
WORKING_SET = ("A1", "A2", "A3")
RBS_RETRY_CAP = 8


def holders(k):
    """Units holding share ``k``."""
    return tuple(u for i, u in enumerate(UNITS, start=1) if i != k)


def missing_share(unit):
    return UNITS.index(unit) + 1


@dataclass
class ShareSet:
    shares: list

    @property
    def length(self):
        return len(self.shares[0])

    def secret(self):
        return xor(*self.shares)

    def held_by(self, unit):
        return {k: self.shares[k - 1] for k in range(1, 5) if unit in holders(k)}

    def map(self, fn):
        """Apply the same function to every share (e.g. sifting or a linear map)."""
        return ShareSet([fn(s) for s in self.shares])


def share(secret, randomness):
    """Split ``secret`` into four XOR shares using three dealer strings."""
    secret = as_bits(secret)
    if len(randomness) != 3:
        raise ValueError("dealer needs exactly three random strings")
    rs = [as_bits(r) for r in randomness]
    for r in rs:
        if len(r) != len(secret):
            raise ValueError("randomness length differs from secret length")
    return ShareSet(rs + [xor(rs[0], rs[1], rs[2], secret)])


# ---------------------------------------------------------- majority voting


def _same(a, b):
    if isinstance(a, tuple) or isinstance(b, tuple):
        return (isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b)
                and all(_same(x, y) for x, y in zip(a, b)))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)
                and a.shape == b.shape and np.array_equal(a, b))
    return a == b


def _differing_bytes(values):
    arrays = [v for v in values if isinstance(v, np.ndarray)]
    if len(arrays) != len(values) or len({a.shape for a in arrays}) != 1:
        return None
    packed = [np.packbits(a) if a.dtype == np.uint8 else a.view(np.uint8) for a in arrays]
    ref = packed[0]
    bad = np.zeros(len(ref), dtype=bool)
    for p in packed[1:]:
        bad |= p != ref
    return int(bad.sum())


def majority_vote(copies, transcript=None, actor="-", subject=""):
    """Value held by a strict majority of ``copies``.

    The decision compares whole values. When copies disagree and are
    equal-length arrays, the number of differing bytes is logged.
    Raises :class:`MajorityFailure` without a strict majority.
    """
    copies = list(copies)
    if len(copies) < 3:
        raise ValueError("majority voting needs at least three copies")
    groups = []
    for c in copies:
        for g in groups:
            if _same(g[0], c):
                g.append(c)
                break
        else:
            groups.append([c])
    best = max(groups, key=len)
    if transcript is not None and len(groups) > 1:
        nbytes = _differing_bytes(copies)
        note = f"{len(groups)} distinct copies"
        if nbytes is not None:
            note += f", {nbytes} differing bytes"
        transcript.event(actor, f"mv-disagreement:{subject}", note=note)
    if 2 * len(best) <= len(copies):
        raise MajorityFailure(f"no strict majority for {subject or 'value'}")
    return best[0]


def reconstruct(copies, transcript=None, actor="-", subject="secret"):
    """XOR of the majority-voted shares; ``copies[k]`` lists the claims for share k."""
    voted = []
    for k in range(1, 5):
        claims = copies.get(k, [])
        if len(claims) < 3:
            raise ValueError(f"share {k} has {len(claims)} copies, need 3")
        voted.append(majority_vote(claims, transcript, actor, f"{subject}.share{k}"))
    return xor(*voted)


# -------------------------------------------------------------------- nets


class LocalNet:
    """Direct delivery with an optional tamper hook and a transcript.

    ``tamper(sender, receiver, kind, payload)`` returns the payload actually
    emitted, or ``None`` for silence; it is consulted for every outgoing
    message and broadcast.
    """

    def __init__(self, transcript=None, tamper=None):
        self.transcript = transcript if transcript is not None else Transcript()
        self.tamper = tamper

    def _emit(self, sender, receiver, kind, payload):
        if self.tamper is None:
            return payload
        return self.tamper(sender, receiver, kind, payload)

    def send(self, sender, receiver, kind, payload, channel=SHIELDED):
        out = self._emit(sender, receiver, kind, payload)
        if out is None:
            self.transcript.event(sender, f"silent:{kind}", note=f"to {receiver}")
            return None
        self.transcript.message(sender, receiver, kind, out, channel)
        return out

    def broadcast(self, sender, kind, payload, resolves=-1, default=None):
        out = self._emit(sender, "*", kind, payload)
        if out is None:
            out = default
        self.transcript.broadcast(sender, kind, out, resolves=resolves)
        return out

    def complain(self, issuer, subject):
        return self.transcript.complaint(issuer, subject)


def _null(length):
    return np.zeros(length, dtype=np.uint8)


def _coerce(payload, length):
    """Received share payload, or the null string when it is missing or malformed."""
    if payload is None:
        return _null(length)
    arr = np.asarray(payload)
    if arr.ndim != 1 or len(arr) != length:
        return _null(length)
    return arr.astype(np.uint8) & 1


# ------------------------------------------------------------- Share protocol


def deal(shares, net, dealer, item="share", length=None):
    """Distribute a ShareSet from ``dealer`` and run the pairwise consistency check.

    Returns ``{unit: {k: share}}``. Missing deliveries default to the null
    string of the session length. A unit that sees a copy differ from its own
    complains once per share; the dealer's broadcast then replaces every
    holder's copy.
    """
    length = shares.length if length is None else length
    held = {u: {} for u in UNITS}
    for k in range(1, 5):
        for u in holders(k):
            got = net.send(dealer, u, f"{item}{k}", shares.shares[k - 1])
            held[u][k] = _coerce(got, length)
    for k in range(1, 5):
        sigma = holders(k)
        complainer = None
        for v in sigma:
            for u in sigma:
                if u == v:
                    continue
                got = net.send(u, v, f"{item}{k}.check", held[u][k])
                if complainer is None and not _same(_coerce(got, length), held[v][k]):
                    complainer = v
        if complainer is not None:
            cid = net.complain(complainer, f"{item}{k}")
            value = net.broadcast(dealer, f"{item}{k}", shares.shares[k - 1], resolves=cid,
                                  default=_null(length))
            value = _coerce(value, length)
            for u in sigma:
                held[u][k] = value.copy()
    return held


def deal_public(value, net, dealer, receivers, kind):
    """Send a public item to every receiver and settle disagreements by broadcast.

    Receivers compare their copies pairwise; the first unit that sees a
    mismatch (or a missing copy) complains and the dealer broadcasts.
    """
    held = {u: net.send(dealer, u, kind, value) for u in receivers}
    complainer = None
    for v in receivers:
        for u in receivers:
            if u == v:
                continue
            got = net.send(u, v, f"{kind}.check", held[u])
            if complainer is None and (got is None or held[v] is None
                                       or not _same(got, held[v])):
                complainer = v
    if complainer is not None:
        cid = net.complain(complainer, kind)
        out = net.broadcast(dealer, kind, value, resolves=cid, default=value)
        held = {u: out for u in receivers}
    return held


# ------------------------------------------------------------ RBS generation


@dataclass
class RbsResult:
    values: dict
    r1: np.ndarray
    r2: np.ndarray
    retries: int


def rbs_generate(length, rngs, net, retry_cap=RBS_RETRY_CAP, kind="rbs", corrupt=()):
    """Three-step random-bit-string generation among A1..A3, then MV handoff to A4.

    ``rngs`` maps A1 and A2 to their generators. ``corrupt`` only decides
    when the simulation stops: the run ends once every honest unit of A1, A2
    has finished step 3. Raises :class:`MajorityFailure` when step 3 keeps
    failing past ``retry_cap``.
    """
    r1 = rngs["A1"].integers(0, 2, length, dtype=np.uint8)
    r2 = rngs["A2"].integers(0, 2, length, dtype=np.uint8)

    # step 1: R1 and R2 are committed to A3
    got = {}
    for sender, value in (("A1", r1), ("A2", r2)):
        name = f"{kind}.R{sender[1]}"
        recv = net.send(sender, "A3", name, value)
        if recv is None:
            cid = net.complain("A3", name)
            recv = net.broadcast(sender, name, value, resolves=cid, default=_null(length))
        got[sender] = _coerce(recv, length)
    r_at_3 = got["A1"] ^ got["A2"]

    # step 2: A3 returns R
    cur = {}
    for u in ("A1", "A2"):
        recv = net.send("A3", u, f"{kind}.R", r_at_3)
        if recv is None:
            cid = net.complain(u, f"{kind}.R")
            recv = net.broadcast("A3", f"{kind}.R", r_at_3, resolves=cid, default=_null(length))
        cur[u] = _coerce(recv, length)

    # step 3: cross-check through the partner, redo after each broadcast
    own = {"A1": r1, "A2": r2}
    partner = {"A1": "A2", "A2": "A1"}
    done = {u: u in corrupt for u in ("A1", "A2")}
    retries = 0
    while not all(done.values()):
        if retries >= retry_cap:
            raise MajorityFailure(f"{kind}: step 3 failed {retry_cap} times")
        claims = {}
        for u in ("A1", "A2"):
            if not done[u] or not done[partner[u]]:
                claims[partner[u]] = net.send(u, partner[u], f"{kind}.check",
                                              cur[u] ^ own[u])
        silent = {u: u in claims and claims[u] is None for u in ("A1", "A2")}
        ok = {u: done[u] or (u in claims and claims[u] is not None
                             and _same(_coerce(claims[u], length), own[u]))
              for u in ("A1", "A2")}
        if all(ok.values()):
            break
        retries += 1
        issuer = "A1" if not ok["A1"] else "A2"
        cid = net.complain(issuer, f"{kind}.R")
        b = _coerce(net.broadcast("A3", f"{kind}.R", r_at_3, resolves=cid,
                                  default=_null(length)), length)
        for u in ("A1", "A2"):
            # a silent partner must be the corrupt unit, so A3 is honest:
            # accept the broadcast when it matches what A3 sent directly
            if silent[u] and _same(b, cur[u]):
                done[u] = True
            # everyone hears the broadcast and both redo the check with it
            cur[u] = b

    # step 4: MV handoff to A4
    copies = []
    for u, value in (("A1", cur["A1"]), ("A2", cur["A2"]), ("A3", r_at_3)):
        copies.append(_coerce(net.send(u, "A4", f"{kind}.final", value), length))
    r4 = majority_vote(copies, net.transcript, "A4", f"{kind}.final")
    values = {"A1": cur["A1"], "A2": cur["A2"], "A3": r_at_3, "A4": r4}
    return RbsResult(values, r1, r2, retries)
