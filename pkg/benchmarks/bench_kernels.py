"""Compare the compiled and NumPy kernels of the decoupling Monte-Carlo loop.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.  Prints one row per
kernel and problem size with the best time per call and the speed-up.
"""

import argparse
import timeit

import numpy as np

from qcap import _kernels_py
from qcap.linalg import haar_unitary

try:
    from qcap import _kernels as _compiled
except ImportError:
    _compiled = None

# (J, r, d_rest, d_out, n_kraus): block structure of A, size of the reference, map T
SIZES = [(2, 2, 2, 2, 2), (3, 2, 6, 3, 3), (4, 4, 16, 4, 4)]


def _inputs(nblk, r, d_rest, dout, m, rng):
    n = nblk * r * d_rest
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    us = np.stack([haar_unitary(r, rng) for _ in range(nblk)])
    kraus = rng.standard_normal((m, dout, nblk * r)) + 1j * rng.standard_normal((m, dout, nblk * r))
    return np.ascontiguousarray(x), np.ascontiguousarray(us), np.ascontiguousarray(kraus)


def _best(fn, repeat):
    number = max(1, int(0.05 / max(min(timeit.repeat(fn, number=1, repeat=3)), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if _compiled is None:
        print("compiled kernels not built; only the NumPy timings are shown")
    print(f"{'kernel':<16}{'J,r,d_rest':<14}{'numpy [us]':>12}{'cython [us]':>13}{'speed-up':>10}")
    for nblk, r, d_rest, dout, m in SIZES:
        x, us, kraus = _inputs(nblk, r, d_rest, dout, m, rng)
        y = _kernels_py.block_conjugate(x, us, d_rest)
        cases = [
            ("block_conjugate", lambda mod: mod.block_conjugate(x, us, d_rest)),
            ("kraus_apply", lambda mod: mod.kraus_apply(kraus, y, d_rest)),
        ]
        for name, call in cases:
            t_py = _best(lambda: call(_kernels_py), args.repeat)
            if _compiled is not None:
                assert np.allclose(call(_kernels_py), call(_compiled), atol=1e-10)
                t_cy = _best(lambda: call(_compiled), args.repeat)
                print(f"{name:<16}{f'{nblk},{r},{d_rest}':<14}{t_py * 1e6:>12.1f}{t_cy * 1e6:>13.1f}"
                      f"{t_py / t_cy:>10.2f}")
            else:
                print(f"{name:<16}{f'{nblk},{r},{d_rest}':<14}{t_py * 1e6:>12.1f}{'-':>13}{'-':>10}")


if __name__ == "__main__":
    main()
