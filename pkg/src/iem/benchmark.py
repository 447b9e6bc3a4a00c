"""Timing comparison of the compiled and pure-numpy kernel paths.

Run as ``python -m iem.benchmark``. Each kernel is timed on random
inputs with both implementations, after checking they agree; compiled
variants are warmed up first so JIT time is excluded.
"""

import argparse
import time

import numpy as np

from . import kernels


def _best_of(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _check_agreement(rng, size, trials=20):
    for _ in range(trials):
        mask = rng.random((size, size)) < 0.3
        img = rng.random((size, size))
        prob = rng.uniform(0.01, 0.99, (size, size))
        gt = rng.random((size, size)) < 0.5
        labels_np, n_np = kernels._label_components_numpy(mask)
        labels_nb, n_nb = kernels._label_components_numba(mask)
        if n_np != n_nb or not np.array_equal(labels_np, np.asarray(labels_nb)):
            raise AssertionError("label_components backends disagree")
        mean_np, std_np = kernels._local_mean_std_numpy(img)
        mean_nb, std_nb = kernels._local_mean_std_numba(img)
        if not (np.allclose(mean_np, mean_nb, atol=1e-12)
                and np.allclose(std_np, std_nb, atol=1e-12)):
            raise AssertionError("local_mean_std backends disagree")
        ce_np = kernels._cross_entropy_sum_numpy(prob, gt, 1e-7)
        ce_nb = kernels._cross_entropy_sum_numba(prob, gt, 1e-7)
        if abs(ce_np - ce_nb) > 1e-9 * max(1.0, abs(ce_np)):
            raise AssertionError("cross_entropy_sum backends disagree")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m iem.benchmark")
    parser.add_argument("--size", type=int, default=256, help="square image side")
    parser.add_argument("--reps", type=int, default=20, help="repetitions per timing")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        print("numba is not available; only the numpy path can run")
        return 1

    rng = np.random.default_rng(args.seed)
    size = args.size
    mask = rng.random((size, size)) < 0.3
    img = rng.random((size, size))
    prob = rng.uniform(0.01, 0.99, (size, size))
    gt = rng.random((size, size)) < 0.5

    kernels.warmup()
    _check_agreement(rng, 64)
    print("agreement: all kernels identical across 20 random 64x64 inputs")
    print()

    cases = [
        ("label_components",
         lambda: kernels._label_components_numpy(mask),
         lambda: kernels._label_components_numba(mask)),
        ("local_mean_std",
         lambda: kernels._local_mean_std_numpy(img),
         lambda: kernels._local_mean_std_numba(img)),
        ("cross_entropy_sum",
         lambda: kernels._cross_entropy_sum_numpy(prob, gt, 1e-7),
         lambda: kernels._cross_entropy_sum_numba(prob, gt, 1e-7)),
    ]
    header = f"{'kernel':<20} {'size':>9} {'numpy':>12} {'numba':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, numpy_fn, numba_fn in cases:
        numba_fn()
        t_np = _best_of(numpy_fn, args.reps)
        t_nb = _best_of(numba_fn, args.reps)
        print(f"{name:<20} {size:>6}x{size:<3} {t_np * 1e3:>10.3f}ms "
              f"{t_nb * 1e3:>10.3f}ms {t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
