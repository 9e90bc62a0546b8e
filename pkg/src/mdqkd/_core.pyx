# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: sparse GF(2) syndromes, LLR belief propagation, LFSR tags.

Every routine here has a numpy twin in :mod:`mdqkd._fallback` with the same
signature and bit-exact output contract.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, log, fabs
from libc.stdint cimport uint8_t, uint64_t, int32_t, int64_t

cnp.import_array()

cdef double LLR_CLIP = 30.0
cdef double T_CLIP = 1.0 - 1e-15


def syndrome(const uint8_t[::1] bits, const int32_t[::1] chk_ptr,
             const int32_t[::1] chk_var):
    """Parity of every check row of a CSR parity-check matrix."""
    cdef Py_ssize_t m = chk_ptr.shape[0] - 1
    out = np.zeros(m, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    cdef Py_ssize_t c, e
    cdef uint8_t acc
    with nogil:
        for c in range(m):
            acc = 0
            for e in range(chk_ptr[c], chk_ptr[c + 1]):
                acc ^= bits[chk_var[e]]
            o[c] = acc & 1
    return out


cdef inline double _atanh2(double t) nogil:
    # 2*atanh(t) = log((1+t)/(1-t))
    return log((1.0 + t) / (1.0 - t))


def bp_decode(const double[::1] chan_llr, const uint8_t[::1] target,
              const int32_t[::1] chk_ptr, const int32_t[::1] chk_var,
              const int32_t[::1] var_ptr, const int32_t[::1] var_edge,
              int max_iter):
    """Flooding sum-product decoder in the error domain.

    Finds a low-weight ``e`` with ``H e = target``. ``chan_llr`` holds the
    prior log-likelihood ratio ``log P(e_i=0)/P(e_i=1)`` of every bit.
    Returns ``(e_hat, iterations, converged)``.
    """
    cdef Py_ssize_t n = chan_llr.shape[0]
    cdef Py_ssize_t m = chk_ptr.shape[0] - 1
    cdef Py_ssize_t n_edges = chk_var.shape[0]
    v2c_a = np.empty(n_edges, dtype=np.float64)
    c2v_a = np.zeros(n_edges, dtype=np.float64)
    tt_a = np.empty(n_edges, dtype=np.float64)
    e_hat_a = np.zeros(n, dtype=np.uint8)
    cdef double[::1] v2c = v2c_a
    cdef double[::1] c2v = c2v_a
    cdef double[::1] tt = tt_a
    cdef uint8_t[::1] e_hat = e_hat_a
    cdef Py_ssize_t c, e, v, k, lo, hi
    cdef double prod, t, total, sgn
    cdef int zeros, it = 0, done = 0
    cdef Py_ssize_t zpos
    cdef uint8_t par

    with nogil:
        for c in range(m):
            for e in range(chk_ptr[c], chk_ptr[c + 1]):
                v2c[e] = chan_llr[chk_var[e]]
        # a zero target with an all-zero prior is already consistent
        for v in range(n):
            e_hat[v] = 1 if chan_llr[v] < 0 else 0
        done = 1
        for c in range(m):
            par = target[c]
            for e in range(chk_ptr[c], chk_ptr[c + 1]):
                par ^= e_hat[chk_var[e]]
            if par & 1:
                done = 0
                break
        while not done and it < max_iter:
            it += 1
            # check nodes
            for c in range(m):
                lo = chk_ptr[c]
                hi = chk_ptr[c + 1]
                prod = 1.0
                zeros = 0
                zpos = -1
                for e in range(lo, hi):
                    t = tanh(0.5 * v2c[e])
                    if t > T_CLIP:
                        t = T_CLIP
                    elif t < -T_CLIP:
                        t = -T_CLIP
                    tt[e] = t
                    if t == 0.0:
                        zeros += 1
                        zpos = e
                    else:
                        prod *= t
                sgn = -1.0 if target[c] else 1.0
                for e in range(lo, hi):
                    if zeros == 0:
                        t = prod / tt[e]
                    elif zeros == 1 and e == zpos:
                        t = prod
                    else:
                        t = 0.0
                    if t > T_CLIP:
                        t = T_CLIP
                    elif t < -T_CLIP:
                        t = -T_CLIP
                    c2v[e] = sgn * _atanh2(t)
            # variable nodes
            for v in range(n):
                total = chan_llr[v]
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    total = total + c2v[var_edge[k]]
                e_hat[v] = 1 if total < 0 else 0
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edge[k]
                    t = total - c2v[e]
                    if t > LLR_CLIP:
                        t = LLR_CLIP
                    elif t < -LLR_CLIP:
                        t = -LLR_CLIP
                    v2c[e] = t
            done = 1
            for c in range(m):
                par = target[c]
                for e in range(chk_ptr[c], chk_ptr[c + 1]):
                    par ^= e_hat[chk_var[e]]
                if par & 1:
                    done = 0
                    break
    return e_hat_a, it, bool(done)


cdef inline uint64_t _parity64(uint64_t x) nogil:
    x ^= x >> 32
    x ^= x >> 16
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return x & 1


def lfsr_accumulate(const uint8_t[::1] bits, uint64_t taps, uint64_t state):
    """XOR of the Fibonacci-LFSR states at every set message position.

    State bit ``t`` holds sequence element ``a[i + t]``; one step shifts in
    ``a[i + 64] = parity(state & taps)`` at bit 63.
    """
    cdef Py_ssize_t n = bits.shape[0]
    cdef Py_ssize_t i
    cdef uint64_t acc = 0
    cdef uint64_t fb
    with nogil:
        for i in range(n):
            if bits[i]:
                acc ^= state
            fb = _parity64(state & taps)
            state = (state >> 1) | (fb << 63)
    return int(acc)
