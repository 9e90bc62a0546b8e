"""Privacy amplification and authenticated messaging.

Authentication is Wegman-Carter style: each link shares a 128-bit
construction key, turned once into an LFSR-Toeplitz descriptor and reused
for every message, plus a one-time-pad pool. A message's 64-bit tag covers
its header and payload and is encrypted with the next 64 unused pool bits.
Only the pad bits are consumed.
"""
from dataclasses import dataclass, field

import numpy as np

from mdqkd.bits import as_bits, bits_to_int, int_to_bits, random_bits
from mdqkd.errors import PoolExhausted
from mdqkd.toeplitz import (TAG_BITS, descriptor_from_bits, ev_tag, toeplitz_hash,
                            toeplitz_seed_size)

KEY_GRANULARITY = 32


@dataclass(frozen=True)
class PaSpec:
    n: int
    l: int
    seed: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1 or self.l < 1:
            raise ValueError("PA sizes must be positive")
        if len(self.seed) != toeplitz_seed_size(self.n, self.l):
            raise ValueError(f"PA seed must have {self.n + self.l - 1} bits")

    @classmethod
    def for_final_key(cls, n, l, seed):
        if l % KEY_GRANULARITY:
            raise ValueError(f"final key length must be a multiple of {KEY_GRANULARITY}")
        return cls(n, l, as_bits(seed))


def pa_seed_size(n, l):
    return toeplitz_seed_size(n, l)


def pa_hash(x, spec):
    x = as_bits(x)
    if len(x) != spec.n:
        raise ValueError(f"PA input must have {spec.n} bits, got {len(x)}")
    return toeplitz_hash(x, spec.seed, spec.l)


def pa_uniformity_probe(x, y, l, n_seeds, rng):
    """Fraction of uniformly drawn Toeplitz seeds under which ``x`` and ``y`` collide."""
    x, y = as_bits(x), as_bits(y)
    n = len(x)
    if len(y) != n or n > 16 or l > 8:
        raise ValueError("probe is meant for n <= 16, l <= 8 and equal-length inputs")
    seeds = rng.integers(0, 2, size=(n_seeds, n + l - 1), dtype=np.uint8)
    diff = (x ^ y).astype(np.int64)
    # row i of the matrix uses seed[i + n - 1 - j] for column j
    cols = np.arange(n)
    hits = np.ones(n_seeds, dtype=bool)
    for i in range(l):
        row = seeds[:, i + n - 1 - cols]
        hits &= (row @ diff) % 2 == 0
    count = int(hits.sum())
    p = 2.0 ** -l
    return {
        "collisions": count,
        "trials": n_seeds,
        "fraction": count / n_seeds,
        "expected": 1.0 if not diff.any() else p,
        "sigma": (p * (1 - p) / n_seeds) ** 0.5,
    }


def ev_descriptor_from_bits(bits):
    """Admissible 128-bit tag descriptor from 128 shared random bits."""
    bits = as_bits(bits)
    if len(bits) != 2 * TAG_BITS:
        raise ValueError("descriptor needs 128 bits")
    return descriptor_from_bits(bits_to_int(bits))


# ------------------------------------------------------------ authentication


def auth_error_budget(message_lengths, tag_len=TAG_BITS, mode="tight"):
    """Total forgery probability over all authenticated messages.

    Per message the LFSR hash collides with probability ``|m| 2^(1 - tag_len)``.
    ``loose`` counts three redundant copies; ``tight`` counts only messages
    between two honest units, which gives ``2^(2 - tag_len) * sum |m|``.
    """
    total = sum(int(m) for m in message_lengths)
    if mode == "tight":
        return total * 2.0 ** (2 - tag_len)
    if mode == "loose":
        return 3 * total * 2.0 ** (1 - tag_len)
    raise ValueError(f"unknown mode {mode!r}")


def auth_key_cost(n_messages, redundancy, tag_len=TAG_BITS):
    return tag_len * n_messages * redundancy


@dataclass
class AuthKeyPool:
    """One endpoint's copy of a link's pre-shared key material."""

    link: str
    construction_key: np.ndarray
    pad: np.ndarray
    consumed: int = 0
    construction_uses: int = 0
    sends: int = 0
    _descriptor: int = field(default=None, repr=False, compare=False)

    @classmethod
    def provision(cls, link, pad_bits, rng):
        return cls(link, random_bits(rng, 2 * TAG_BITS), random_bits(rng, pad_bits))

    def copy(self):
        return AuthKeyPool(self.link, self.construction_key.copy(), self.pad.copy(),
                           self.consumed, self.construction_uses, self.sends)

    @property
    def remaining(self):
        return len(self.pad) - self.consumed

    def accounting(self):
        return {
            "link": self.link,
            "capacity": len(self.pad),
            "consumed": self.consumed,
            "remaining": self.remaining,
            "construction_bits": len(self.construction_key),
            "construction_uses": self.construction_uses,
            "messages": self.sends,
        }

    def descriptor(self):
        self.construction_uses += 1
        if self._descriptor is None:
            self._descriptor = ev_descriptor_from_bits(self.construction_key)
        return self._descriptor

    def pad_at(self, position):
        if position + TAG_BITS > len(self.pad):
            raise PoolExhausted(f"link {self.link} has no pad bits at offset {position}",
                                self.accounting())
        return bits_to_int(self.pad[position:position + TAG_BITS])

    def take_pad(self):
        if self.remaining < TAG_BITS:
            raise PoolExhausted(f"link {self.link} has {self.remaining} pad bits left",
                                self.accounting())
        value = self.pad_at(self.consumed)
        self.consumed += TAG_BITS
        self.sends += 1
        return value


@dataclass
class AuthenticatedMessage:
    sender: str
    receiver: str
    seq: int
    payload: bytes
    tag: int
    pad_offset: int


def _tag_input(sender, receiver, seq, payload):
    data = f"{sender}\x00{receiver}\x00{seq}\x00".encode() + bytes(payload)
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def auth_send(sender, receiver, seq, payload, pool):
    """Tag and encrypt; consumes exactly 64 pad bits from ``pool``."""
    offset = pool.consumed
    pad = pool.take_pad()
    tag = ev_tag(_tag_input(sender, receiver, seq, payload), pool.descriptor())
    return AuthenticatedMessage(sender, receiver, seq, bytes(payload), tag ^ pad, offset)


def auth_verify(msg, pool):
    """Check a received message against the receiver's pool copy.

    The receiver consumes the same 64 pad bits as the sender, whether or not
    the message verifies, keeping both copies synchronised.
    """
    if msg.pad_offset != pool.consumed:
        return False
    pad = pool.take_pad()
    tag = ev_tag(_tag_input(msg.sender, msg.receiver, msg.seq, msg.payload), pool.descriptor())
    return (tag ^ pad) == msg.tag


def tag_to_bits(tag):
    return int_to_bits(tag, TAG_BITS)
