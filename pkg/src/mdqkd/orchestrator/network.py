"""Device-to-device messaging with channel classes and pool-backed authentication."""
import numpy as np

from mdqkd.privacy import AuthenticatedMessage, AuthKeyPool, auth_send, auth_verify
from mdqkd.toeplitz import TAG_BITS
from mdqkd.transcript import AUTHENTICATED, SHIELDED, UNTRUSTED, Transcript
from mdqkd.vss import WORKING_SET, LocalNet

from mdqkd.orchestrator.transport import Frame, encode_payload

BOB = "B"


def link_name(unit):
    return f"{unit}-{BOB}"


class ProtocolNet(LocalNet):
    """Routes every message through a transport and logs it in the transcript.

    Authenticated messages are tagged with the sender's pool copy and
    verified against the receiver's; a message that fails verification is
    treated as not received.
    """

    def __init__(self, transport, pool_bits, seed, tamper=None, transcript=None):
        super().__init__(transcript if transcript is not None else Transcript(), tamper)
        self.transport = transport
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 300]))
        self.pools = {}
        for u in WORKING_SET:
            pool = AuthKeyPool.provision(link_name(u), pool_bits, rng)
            self.pools[u] = {u: pool, BOB: pool.copy()}
        self.auth_log = []
        self._auth_seq = {u: 0 for u in WORKING_SET}

    def send(self, sender, receiver, kind, payload, channel=SHIELDED):
        out = self._emit(sender, receiver, kind, payload)
        if out is None:
            self.transcript.event(sender, f"silent:{kind}", note=f"to {receiver}")
            return None
        if channel == AUTHENTICATED:
            return self._send_authenticated(sender, receiver, kind, out)
        got = self.transport.deliver(Frame(sender, receiver, kind, channel, out)).payload
        self.transcript.message(sender, receiver, kind, got, channel)
        return got

    def _send_authenticated(self, sender, receiver, kind, payload):
        unit = receiver if sender == BOB else sender
        if unit not in self.pools or BOB not in (sender, receiver):
            raise ValueError(f"no authenticated link between {sender} and {receiver}")
        data = encode_payload(payload)
        seq = self._auth_seq[unit]
        self._auth_seq[unit] += 1
        msg = auth_send(sender, receiver, seq, data, self.pools[unit][sender])
        frame = self.transport.deliver(Frame(sender, receiver, kind, AUTHENTICATED, payload,
                                             tag=msg.tag, pad_offset=msg.pad_offset))
        received = AuthenticatedMessage(sender, receiver, seq, encode_payload(frame.payload),
                                        frame.tag, frame.pad_offset)
        ok = auth_verify(received, self.pools[unit][receiver])
        self.auth_log.append((kind, sender, receiver, 8 * len(data)))
        self.transcript.message(sender, receiver, kind, frame.payload, AUTHENTICATED,
                                verified=ok, note="" if ok else "tag-rejected")
        return frame.payload if ok else None

    def untrusted(self, sender, receiver, kind, payload):
        got = self.transport.deliver(Frame(sender, receiver, kind, UNTRUSTED, payload)).payload
        self.transcript.message(sender, receiver, kind, got, UNTRUSTED)
        return got

    def auth_cost(self):
        """Pad bits spent on tags over all links."""
        return TAG_BITS * len(self.auth_log)

    def distinct_auth_lengths(self):
        """Bit length of each distinct authenticated message (first copy of each kind)."""
        seen = {}
        for kind, _s, _r, bits in self.auth_log:
            seen.setdefault(kind, bits)
        return list(seen.values())

    def pool_accounting(self):
        return {u: p[u].accounting() for u, p in self.pools.items()}

