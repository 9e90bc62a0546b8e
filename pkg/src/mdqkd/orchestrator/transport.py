"""Message transport between devices, payload framing and the step scheduler.

Frame layout (all integers big-endian)::

    magic      2 bytes  b"MQ"
    version    1 byte   1
    channel    1 byte   0 shielded-internal, 1 authenticated, 2 untrusted
    seq        4 bytes  per-transport sequence number
    sender     1-byte length + UTF-8
    receiver   1-byte length + UTF-8
    kind       2-byte length + UTF-8
    tag        8 bytes  encrypted authentication tag, 0 when unauthenticated
    pad_offset 8 bytes  pool offset of the tag pad
    payload    4-byte length + encoded payload

Payload encoding: one type byte followed by the body.

    0  none
    1  bit string     8-byte bit count + packbits bytes
    2  bit matrix     4-byte rows + 4-byte columns + packbits bytes
    3  integer        2-byte length + signed big-endian bytes
    4  raw bytes      4-byte length + bytes
    5  sequence       4-byte count + encoded items
    6  array          1-byte dtype length + numpy dtype string + 1-byte ndim +
                      4-byte dims + raw little-endian data
    7, 8             as 1 and 2 for bool arrays

Arrays of 0/1 values in uint8 use the packed bit forms 1 and 2, bool
arrays forms 7 and 8; any other array uses form 6.
"""
import random
import socket
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mdqkd.transcript import AUTHENTICATED, SHIELDED, UNTRUSTED

MAGIC = b"MQ"
VERSION = 1
CHANNEL_CODES = {SHIELDED: 0, AUTHENTICATED: 1, UNTRUSTED: 2}
CHANNEL_NAMES = {v: k for k, v in CHANNEL_CODES.items()}


def _is_bits(arr):
    return (arr.dtype in (np.uint8, np.bool_) and arr.ndim in (1, 2)
            and (arr.size == 0 or int(arr.max()) <= 1))


def encode_payload(obj):
    if obj is None:
        return b"\x00"
    if isinstance(obj, np.ndarray) and _is_bits(obj):
        bits = obj.astype(np.uint8)
        # bool masks keep their dtype so payload digests match on both ends
        flag = 6 if obj.dtype == np.bool_ else 0
        if bits.ndim == 1:
            return (bytes([1 + flag]) + struct.pack(">Q", len(bits))
                    + np.packbits(bits).tobytes())
        r, c = bits.shape
        return (bytes([2 + flag]) + struct.pack(">II", r, c)
                + np.packbits(bits.reshape(-1)).tobytes())
    if isinstance(obj, np.ndarray):
        dt = obj.dtype.newbyteorder("<").str.encode()
        return (b"\x06" + struct.pack(">B", len(dt)) + dt + struct.pack(">B", obj.ndim)
                + struct.pack(f">{obj.ndim}I", *obj.shape)
                + np.ascontiguousarray(obj, dtype=obj.dtype.newbyteorder("<")).tobytes())
    if isinstance(obj, (bool, np.bool_)):
        obj = int(obj)
    if isinstance(obj, (int, np.integer)):
        v = int(obj)
        n = max(1, (v.bit_length() + 8) // 8)
        return b"\x03" + struct.pack(">H", n) + v.to_bytes(n, "big", signed=True)
    if isinstance(obj, (bytes, bytearray)):
        return b"\x04" + struct.pack(">I", len(obj)) + bytes(obj)
    if isinstance(obj, (list, tuple)):
        return b"\x05" + struct.pack(">I", len(obj)) + b"".join(encode_payload(x) for x in obj)
    raise TypeError(f"cannot frame payload of type {type(obj).__name__}")


def _decode_bits(buf, pos, matrix):
    if matrix:
        r, c = struct.unpack_from(">II", buf, pos)
        n = r * c
    else:
        (n,) = struct.unpack_from(">Q", buf, pos)
    pos += 8
    nb = (n + 7) // 8
    bits = np.unpackbits(np.frombuffer(buf, np.uint8, nb, pos))[:n]
    return (bits.reshape(r, c) if matrix else bits).copy(), pos + nb


def _decode(buf, pos):
    t = buf[pos]
    pos += 1
    if t == 0:
        return None, pos
    if t in (1, 2, 7, 8):
        bits, pos = _decode_bits(buf, pos, t in (2, 8))
        return (bits.astype(np.bool_) if t > 6 else bits), pos
    if t == 3:
        (n,) = struct.unpack_from(">H", buf, pos)
        pos += 2
        return int.from_bytes(buf[pos:pos + n], "big", signed=True), pos + n
    if t == 4:
        (n,) = struct.unpack_from(">I", buf, pos)
        pos += 4
        return bytes(buf[pos:pos + n]), pos + n
    if t == 5:
        (n,) = struct.unpack_from(">I", buf, pos)
        pos += 4
        items = []
        for _ in range(n):
            x, pos = _decode(buf, pos)
            items.append(x)
        return tuple(items), pos
    if t == 6:
        n = buf[pos]
        dt = np.dtype(buf[pos + 1:pos + 1 + n].decode())
        pos += 1 + n
        ndim = buf[pos]
        shape = struct.unpack_from(f">{ndim}I", buf, pos + 1)
        pos += 1 + 4 * ndim
        size = int(np.prod(shape)) * dt.itemsize
        arr = np.frombuffer(buf, dt, int(np.prod(shape)), pos).reshape(shape)
        return arr.astype(dt.newbyteorder("="), copy=True), pos + size
    raise ValueError(f"unknown payload type {t}")


def decode_payload(data):
    obj, pos = _decode(memoryview(data).tobytes() if not isinstance(data, bytes) else data, 0)
    if pos != len(data):
        raise ValueError("trailing bytes after payload")
    return obj


@dataclass
class Frame:
    sender: str
    receiver: str
    kind: str
    channel: str
    payload: object
    seq: int = 0
    tag: int = 0
    pad_offset: int = 0


def encode_frame(frame):
    def s8(text):
        b = text.encode()
        return struct.pack(">B", len(b)) + b

    kind = frame.kind.encode()
    body = encode_payload(frame.payload)
    return b"".join([
        MAGIC, struct.pack(">BBI", VERSION, CHANNEL_CODES[frame.channel], frame.seq),
        s8(frame.sender), s8(frame.receiver), struct.pack(">H", len(kind)), kind,
        struct.pack(">QQ", frame.tag, frame.pad_offset), struct.pack(">I", len(body)), body,
    ])


def decode_frame(data):
    if data[:2] != MAGIC:
        raise ValueError("bad frame magic")
    version, chan, seq = struct.unpack_from(">BBI", data, 2)
    if version != VERSION:
        raise ValueError(f"unsupported frame version {version}")
    pos = 8
    fields = []
    for _ in range(2):
        n = data[pos]
        fields.append(data[pos + 1:pos + 1 + n].decode())
        pos += 1 + n
    (n,) = struct.unpack_from(">H", data, pos)
    kind = data[pos + 2:pos + 2 + n].decode()
    pos += 2 + n
    tag, pad_offset = struct.unpack_from(">QQ", data, pos)
    pos += 16
    (n,) = struct.unpack_from(">I", data, pos)
    pos += 4
    payload = decode_payload(data[pos:pos + n])
    if pos + n != len(data):
        raise ValueError("frame length mismatch")
    return Frame(fields[0], fields[1], kind, CHANNEL_NAMES[chan], payload, seq, tag, pad_offset)


class BusTransport:
    """In-process delivery: the receiver gets the sender's object unchanged."""

    name = "bus"

    def __init__(self):
        self.seq = 0
        self.bytes_moved = 0
        self._lock = threading.Lock()

    def deliver(self, frame):
        with self._lock:
            frame.seq = self.seq
            self.seq += 1
        return frame

    def close(self):
        pass


class SocketTransport(BusTransport):
    """Each frame is serialised, written to an OS socket and parsed on the far end."""

    name = "socket"

    def __init__(self):
        super().__init__()
        self._tx, self._rx = socket.socketpair()

    def _read_exact(self, n):
        chunks = []
        while n:
            part = self._rx.recv(min(n, 1 << 20))
            if not part:
                raise ConnectionError("transport closed")
            chunks.append(part)
            n -= len(part)
        return b"".join(chunks)

    def deliver(self, frame):
        frame = super().deliver(frame)
        data = encode_frame(frame)
        header = struct.pack(">Q", len(data))
        # a writer thread avoids deadlock when the frame exceeds the socket buffer
        writer = threading.Thread(target=self._tx.sendall, args=(header + data,))
        writer.start()
        (n,) = struct.unpack(">Q", self._read_exact(8))
        out = decode_frame(self._read_exact(n))
        writer.join()
        self.bytes_moved += n
        return out

    def close(self):
        self._tx.close()
        self._rx.close()


def make_transport(name):
    if name == "bus":
        return BusTransport()
    if name == "socket":
        return SocketTransport()
    raise ValueError(f"unknown transport {name!r}")


class Scheduler:
    """Runs independent per-device computations of one protocol step.

    ``seeded`` executes them one at a time in an order drawn from the
    scheduler seed; ``free`` runs them concurrently on threads. Tasks only
    touch their own device's state, so results do not depend on the mode.
    """

    def __init__(self, mode="seeded", seed=0):
        if mode not in ("seeded", "free"):
            raise ValueError("scheduler mode must be seeded or free")
        self.mode = mode
        self._rng = random.Random(seed)
        self.order_log = []

    def run(self, tasks):
        names = sorted(tasks)
        if self.mode == "seeded":
            self._rng.shuffle(names)
            self.order_log.append(tuple(names))
            return {n: tasks[n]() for n in names}
        with ThreadPoolExecutor(max_workers=max(1, len(names))) as pool:
            futures = {n: pool.submit(tasks[n]) for n in names}
            return {n: f.result() for n, f in futures.items()}
