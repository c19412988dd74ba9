"""Timing comparison of the numba and pure-numpy kernel builds.

Run from the repo root:

    python benchmarks/bench_kernels.py

Runs each hot kernel through both builds on identical inputs and
reports per-call times and the speedup.  Another way to get the numpy
path package-wide is ``DGPAIR_NO_NUMBA=1``.
"""

import time

import numpy as np

from dgpair import kernels
from dgpair.accel import NUMBA_ENABLED
from dgpair.geometry import minimal_samples


def timeit(fn, *args, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def two_view(rng, n=200, n_out=200):
    f = 800.0
    K = np.array([[f, 0, 512.0], [0, f, 512.0], [0, 0, 1.0]])
    R = np.array([[0.9962, 0, 0.0872], [0, 1, 0], [-0.0872, 0, 0.9962]])
    t = np.array([1.0, 0.2, 0.1])
    X = np.stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(4, 9, n)], axis=1)
    xa = (X @ K.T)
    xa = xa[:, :2] / xa[:, 2:]
    Xb = X @ R.T + t
    xb = Xb @ K.T
    xb = xb[:, :2] / xb[:, 2:]
    pts_a = np.vstack([xa, rng.uniform(0, 1024, (n_out, 2))])
    pts_b = np.vstack([xb, rng.uniform(0, 1024, (n_out, 2))])
    return np.ascontiguousarray(pts_a), np.ascontiguousarray(pts_b)


def row(name, t_np, t_nb):
    speed = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{name:<34} numpy {t_np * 1e3:9.2f} ms   numba {t_nb * 1e3:9.2f} ms   "
          f"speedup {speed:6.1f}x")


def main():
    if not NUMBA_ENABLED:
        print("numba disabled (DGPAIR_NO_NUMBA set or numba missing); "
              "nothing to compare")
        return
    print("warming up JIT...")
    kernels.warm_up()
    rng = np.random.default_rng(0)

    # RANSAC fundamental: 50% outliers so the loop actually spins
    pts_a, pts_b = two_view(rng)
    samples = minimal_samples(np.random.default_rng(1), len(pts_a), 8, 4000)
    args = (pts_a, pts_b, samples, 3.0, 0.99, 4000, 0, -1)
    t_nb, out_nb = timeit(kernels.ransac_fundamental_nb, *args, np.zeros((3, 3)))
    t_np, out_np = timeit(kernels.ransac_fundamental_np, *args, np.zeros((3, 3)))
    assert out_nb[1] == out_np[1], "builds disagree on the inlier count"
    row(f"ransac_fundamental ({len(pts_a)} pts)", t_np, t_nb)

    samples3 = minimal_samples(np.random.default_rng(2), len(pts_a), 3, 2000)
    args = (pts_a, pts_b, samples3, 20.0, 0.99, 2000, 0, -1)
    t_nb, out_nb = timeit(kernels.ransac_affine_nb, *args, np.zeros(6))
    t_np, out_np = timeit(kernels.ransac_affine_np, *args, np.zeros(6))
    row(f"ransac_affine ({len(pts_a)} pts)", t_np, t_nb)

    # epipolar distances over a big match set
    F = kernels.eight_point_np(pts_a[:200], pts_b[:200])
    big_a = np.ascontiguousarray(np.tile(pts_a, (50, 1)))
    big_b = np.ascontiguousarray(np.tile(pts_b, (50, 1)))
    t_nb, _ = timeit(kernels.epipolar_distances_nb, F, big_a, big_b)
    t_np, _ = timeit(kernels.epipolar_distances_np, F, big_a, big_b)
    row(f"epipolar_distances ({len(big_a)} pts)", t_np, t_nb)

    # warps at working resolution
    img = rng.random((1024, 1024, 3)).astype(np.float32)
    mask = (rng.random((1024, 1024)) > 0.99).astype(np.uint8)
    M = np.array([[0.95, 0.05], [-0.05, 1.02]])
    m = np.array([12.0, -7.0])
    t_nb, _ = timeit(kernels.warp_bilinear_nb, img, M, m, 1024, 1024, repeat=3)
    t_np, _ = timeit(kernels.warp_bilinear_np, img, M, m, 1024, 1024, repeat=3)
    row("warp_bilinear (1024^2 rgb)", t_np, t_nb)
    t_nb, _ = timeit(kernels.warp_nearest_nb, mask, M, m, 1024, 1024)
    t_np, _ = timeit(kernels.warp_nearest_np, mask, M, m, 1024, 1024)
    row("warp_nearest (1024^2 mask)", t_np, t_nb)


if __name__ == "__main__":
    main()
