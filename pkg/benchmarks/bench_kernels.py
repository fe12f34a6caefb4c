"""Compiled vs pure-Python kernels on representative problem sizes.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends are imported directly, so the environment switch is not needed.
Outputs are compared before timing: labels must be identical and min-cost
flow objectives equal to 1e-9.
"""
import argparse
import timeit

import numpy as np

from glvortex import _kernels_py

try:
    from glvortex import _kernels
except ImportError:  # extension not built
    _kernels = None


def label_case(n, seed=0):
    # a thresholded smooth field gives blob-shaped sublevel sets like |u| <= 1/2
    rng = np.random.default_rng(seed)
    k = np.fft.fftfreq(n)
    filt = np.exp(-200 * (k[:, None] ** 2 + k[None, :] ** 2))
    field = np.real(np.fft.ifft2(np.fft.fft2(rng.normal(size=(n, n))) * filt))
    return field > np.quantile(field, 0.7)


def flow_case(n, seed=0):
    """Grid graph n×n with 4-neighbour arcs both ways and a balanced supply."""
    rng = np.random.default_rng(seed)
    idx = np.arange(n * n).reshape(n, n)
    a = np.r_[idx[:-1].ravel(), idx[:, :-1].ravel()]
    b = np.r_[idx[1:].ravel(), idx[:, 1:].ravel()]
    src, dst = np.r_[a, b], np.r_[b, a]
    cost = np.ones(src.size, dtype=np.int64)  # the compiled kernel takes integer costs
    supply = np.round(rng.normal(size=n * n), 6) * (rng.random(n * n) < 0.3)
    supply -= supply.mean()
    return n * n, src, dst, cost, supply


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    opt = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension missing: pip install -e . --no-build-isolation")

    rows = []
    for n in (64, 256, 512):
        mask = label_case(n)
        lc, nc = _kernels.label4(mask)
        lp, npy = _kernels_py.label4(mask)
        assert nc == npy and np.array_equal(lc, lp)
        rows.append((f"label4 {n}x{n}", bench(_kernels.label4, (mask,), opt.repeat),
                     bench(_kernels_py.label4, (mask,), opt.repeat)))
    for n in (8, 16, 32):
        case = flow_case(n)
        fc = _kernels.network_simplex(*case)[0]
        fp = _kernels_py.network_simplex(*case)[0]
        assert abs(case[3] @ fc - case[3] @ fp) < 1e-9
        rows.append((f"network_simplex {n}x{n}", bench(_kernels.network_simplex, case, opt.repeat),
                     bench(_kernels_py.network_simplex, case, opt.repeat)))

    print(f"{'kernel':<24}{'cython [ms]':>14}{'python [ms]':>14}{'speedup':>10}")
    for name, tc, tp in rows:
        print(f"{name:<24}{1e3 * tc:>14.2f}{1e3 * tp:>14.2f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
