"""Bit-string helpers.

Bit strings are 1-D ``numpy.uint8`` arrays holding one bit (0 or 1) per
element. Packed forms use ``numpy.packbits`` order: element 0 is the most
significant bit of byte 0.
"""
import hashlib

import numpy as np


def as_bits(x):
    """Coerce array-likes to a contiguous uint8 0/1 array."""
    arr = np.ascontiguousarray(x, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit strings are one-dimensional")
    return arr


def random_bits(rng, n):
    return rng.integers(0, 2, size=int(n), dtype=np.uint8)


def xor(*strings):
    """Bitwise XOR of equal-length bit strings."""
    if not strings:
        raise ValueError("xor needs at least one operand")
    out = as_bits(strings[0]).copy()
    for s in strings[1:]:
        s = as_bits(s)
        if len(s) != len(out):
            raise ValueError(f"length mismatch: {len(out)} vs {len(s)}")
        out ^= s
    return out


def pad_to_multiple(bits, multiple):
    """Zero-pad ``bits`` at the end up to a multiple of ``multiple``."""
    bits = as_bits(bits)
    extra = (-len(bits)) % multiple
    if extra == 0:
        return bits.copy()
    return np.concatenate([bits, np.zeros(extra, dtype=np.uint8)])


def pack(bits):
    return np.packbits(as_bits(bits)).tobytes()


def unpack(data, n_bits):
    arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if n_bits > len(arr):
        raise ValueError("not enough packed data")
    return arr[:n_bits].copy()


def int_to_bits(value, width):
    """Little-endian: element ``i`` is bit ``i`` of ``value``."""
    return np.array([(value >> i) & 1 for i in range(width)], dtype=np.uint8)


def bits_to_int(bits):
    value = 0
    for i, b in enumerate(as_bits(bits).tolist()):
        if b:
            value |= 1 << i
    return value


def digest(payload):
    """Short SHA-256 fingerprint of a payload used in transcripts."""
    h = hashlib.sha256()
    _feed(h, payload)
    return h.hexdigest()[:16]


def _feed(h, obj):
    if isinstance(obj, np.ndarray):
        h.update(str(obj.dtype).encode())
        h.update(str(obj.shape).encode())
        h.update(np.ascontiguousarray(obj).tobytes())
    elif isinstance(obj, (bytes, bytearray)):
        h.update(b"b")
        h.update(bytes(obj))
    elif isinstance(obj, dict):
        h.update(b"{")
        for k in sorted(obj, key=str):
            _feed(h, str(k))
            _feed(h, obj[k])
        h.update(b"}")
    elif isinstance(obj, (list, tuple)):
        h.update(b"[")
        for item in obj:
            _feed(h, item)
        h.update(b"]")
    else:
        h.update(repr(obj).encode())
