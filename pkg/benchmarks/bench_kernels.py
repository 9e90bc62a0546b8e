"""Time the compiled kernel core against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--qber 0.02]

Each row is the best of ``--repeat`` runs on the production LDPC code
(65536-bit blocks) and a 2^20-bit message for the verification tag.
"""
import argparse
import timeit

import numpy as np

from mdqkd import _kernels, ldpc
from mdqkd.toeplitz import descriptor_from_bits, ev_tag


def cases(qber, seed):
    g = np.random.default_rng(seed)
    code = ldpc.get_code()
    x = g.integers(0, 2, code.n, dtype=np.uint8)
    y = x ^ (g.random(code.n) < qber).astype(np.uint8)
    target = code.syndrome(x)
    msg = g.integers(0, 2, 1 << 20, dtype=np.uint8)
    d = descriptor_from_bits(int.from_bytes(g.bytes(16), "little"))
    return {
        "syndrome (65536 bits)":
            lambda b: _kernels.get_backend(b).syndrome(y, code.chk_ptr, code.chk_var),
        f"BP decode (65536 bits, {qber:.1%})":
            lambda b: ldpc.decode(y, target, qber, code, backend=b),
        "EV tag (2^20 bits)": lambda b: ev_tag(msg, d, backend=b),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--qber", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)
    if _kernels.BACKEND != "compiled":
        raise SystemExit("compiled core not built; run `pip install --no-build-isolation -e .`")
    print(f"{'kernel':<32} {'compiled s':>11} {'python s':>10} {'speedup':>8}")
    for name, fn in cases(args.qber, args.seed).items():
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
             for b in ("compiled", "python")}
        print(f"{name:<32} {t['compiled']:>11.4f} {t['python']:>10.4f} "
              f"{t['python'] / t['compiled']:>7.1f}x")


if __name__ == "__main__":
    main()
