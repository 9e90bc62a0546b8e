"""Ordered, attributed log of every message, complaint and broadcast in a run."""
import threading
from dataclasses import asdict, dataclass

from mdqkd.bits import digest

SHIELDED = "shielded-internal"
AUTHENTICATED = "authenticated"
UNTRUSTED = "untrusted"
BROADCAST = "*"


@dataclass
class Record:
    seq: int
    step: str
    sender: str
    receiver: str
    channel: str
    kind: str
    digest: str
    complaint_id: int = -1
    resolves: int = -1
    verified: bool = False
    note: str = ""

    def line(self):
        parts = [f"{self.seq:05d}", self.step, f"{self.sender}->{self.receiver}", self.channel,
                 self.kind, self.digest]
        if self.complaint_id >= 0:
            parts.append(f"complaint#{self.complaint_id}")
        if self.resolves >= 0:
            parts.append(f"resolves#{self.resolves}")
        if self.verified:
            parts.append("tag-ok")
        if self.note:
            parts.append(self.note)
        return " | ".join(parts)


class Transcript:
    def __init__(self):
        self.records = []
        self._complaints = 0
        self.step = "setup"
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def _add(self, **kw):
        with self._lock:
            rec = Record(seq=len(self.records), step=self.step, **kw)
            self.records.append(rec)
        return rec

    def message(self, sender, receiver, kind, payload, channel=SHIELDED, verified=False,
                note=""):
        return self._add(sender=sender, receiver=receiver, channel=channel, kind=kind,
                         digest=digest(payload), verified=verified, note=note)

    def broadcast(self, sender, kind, payload, resolves=-1, note=""):
        return self._add(sender=sender, receiver=BROADCAST, channel=SHIELDED, kind=kind,
                         digest=digest(payload), resolves=resolves, note=note)

    def complaint(self, issuer, subject, note=""):
        with self._lock:
            cid = self._complaints
            self._complaints += 1
        self._add(sender=issuer, receiver=BROADCAST, channel=SHIELDED, kind=f"complaint:{subject}",
                  digest="-", complaint_id=cid, note=note)
        return cid

    def event(self, actor, kind, payload=None, note=""):
        return self._add(sender=actor, receiver="-", channel="local", kind=kind,
                         digest=digest(payload) if payload is not None else "-", note=note)

    def complaints(self):
        return [r for r in self.records if r.complaint_id >= 0]

    def unresolved_complaints(self):
        """Complaints lacking exactly one later broadcast that resolves them."""
        bad = []
        for c in self.complaints():
            res = [r for r in self.records if r.resolves == c.complaint_id and r.seq > c.seq]
            if len(res) != 1:
                bad.append(c)
        return bad

    def lines(self):
        return [r.line() for r in self.records]

    def fingerprint(self):
        return digest([asdict(r) for r in self.records])
