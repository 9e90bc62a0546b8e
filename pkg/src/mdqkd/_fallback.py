"""Pure numpy twins of the compiled kernels in ``_core.pyx``."""
import numpy as np

LLR_CLIP = 30.0
T_CLIP = 1.0 - 1e-15
_MASK64 = (1 << 64) - 1


def syndrome(bits, chk_ptr, chk_var):
    """Parity of every check row of a CSR parity-check matrix."""
    gathered = np.asarray(bits, dtype=np.uint8)[chk_var]
    return np.bitwise_xor.reduceat(gathered, chk_ptr[:-1]) & 1


def _consistent(e_hat, target, chk_ptr, chk_var):
    return np.array_equal(syndrome(e_hat, chk_ptr, chk_var), target)


def bp_decode(chan_llr, target, chk_ptr, chk_var, var_ptr, var_edge, max_iter):
    """Flooding sum-product decoder in the error domain (numpy edition)."""
    chan_llr = np.asarray(chan_llr, dtype=np.float64)
    target = np.asarray(target, dtype=np.uint8)
    starts = chk_ptr[:-1]
    edge_check = np.repeat(np.arange(len(starts)), np.diff(chk_ptr))
    sign = np.where(target[edge_check] == 1, -1.0, 1.0)

    v2c = chan_llr[chk_var].copy()
    e_hat = (chan_llr < 0).astype(np.uint8)
    if _consistent(e_hat, target, chk_ptr, chk_var):
        return e_hat, 0, True

    for it in range(1, max_iter + 1):
        t = np.clip(np.tanh(0.5 * v2c), -T_CLIP, T_CLIP)
        zmask = t == 0.0
        zeros = np.add.reduceat(zmask.astype(np.int64), starts)
        prod = np.multiply.reduceat(np.where(zmask, 1.0, t), starts)
        pe = prod[edge_check]
        ze = zeros[edge_check]
        with np.errstate(divide="ignore", invalid="ignore"):
            excl = np.where(ze == 0, pe / np.where(zmask, 1.0, t),
                            np.where((ze == 1) & zmask, pe, 0.0))
        excl = np.clip(excl, -T_CLIP, T_CLIP)
        c2v = sign * np.log((1.0 + excl) / (1.0 - excl))

        total = chan_llr.copy()
        np.add.at(total, chk_var, c2v)
        e_hat = (total < 0).astype(np.uint8)
        v2c = np.clip(total[chk_var] - c2v, -LLR_CLIP, LLR_CLIP)
        if _consistent(e_hat, target, chk_ptr, chk_var):
            return e_hat, it, True
    return e_hat, max_iter, False


def _step(x, taps):
    fb = bin(x & taps).count("1") & 1
    return (x >> 1) | (fb << 63)


def _jump_tables(taps, steps):
    """Byte tables of the linear map "advance the LFSR ``steps`` times"."""
    images = []
    for t in range(64):
        x = 1 << t
        for _ in range(steps):
            x = _step(x, taps)
        images.append(x)
    tables = np.zeros((8, 256), dtype=np.uint64)
    for b in range(8):
        for v in range(1, 256):
            acc = 0
            for bit in range(8):
                if v >> bit & 1:
                    acc ^= images[8 * b + bit]
            tables[b, v] = acc
    return tables


def _apply(tables, x):
    acc = 0
    for b in range(8):
        acc ^= int(tables[b, (x >> (8 * b)) & 0xFF])
    return acc


def lfsr_accumulate(bits, taps, state, block=1024):
    """XOR of the Fibonacci-LFSR states at every set message position."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = len(bits)
    if n == 0:
        return 0
    block = min(block, n)
    states = []
    x = state & _MASK64
    for _ in range(block):
        states.append(x)
        x = _step(x, taps)
    state_bits = np.array([[s >> t & 1 for t in range(64)] for s in states],
                          dtype=np.float64)
    k = -(-n // block)
    padded = np.zeros(k * block, dtype=np.float64)
    padded[:n] = bits
    u_bits = (padded.reshape(k, block) @ state_bits).astype(np.int64) & 1
    weights = [1 << t for t in range(64)]
    u = [sum(w for w, b in zip(weights, row) if b) for row in u_bits.tolist()]

    tables = _jump_tables(taps, block)
    acc = u[-1]
    for j in range(k - 2, -1, -1):
        acc = _apply(tables, acc) ^ u[j]
    return acc
