import numpy as np
import pytest
from hypothesis import settings

from dgpair import kernels
from dgpair.geometry import MatchSet

settings.register_profile("suite", max_examples=25, deadline=None)
settings.load_profile("suite")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """JIT-compile the hot kernels once so tests time the real work."""
    kernels.warm_up()


def two_view_instance(rng, n_points=200, image_size=1024.0):
    """Exact two-view correspondences from a random rigid camera pair.

    Returns (pts_a, pts_b) projected with a shared intrinsic matrix; an
    independent oracle for epipolar geometry since the generating
    cameras are known.
    """
    f = rng.uniform(600.0, 1000.0)
    K = np.array([[f, 0.0, image_size / 2], [0.0, f, image_size / 2], [0.0, 0.0, 1.0]])
    angle = rng.uniform(-0.35, 0.35)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ax, ay, az = axis
    skew = np.array([[0, -az, ay], [az, 0, -ax], [-ay, ax, 0]])
    R = np.eye(3) + np.sin(angle) * skew + (1 - np.cos(angle)) * (skew @ skew)
    t = rng.uniform(0.4, 1.5) * (rng.normal(size=3) / np.linalg.norm(rng.normal(size=3)))

    X = np.stack([rng.uniform(-2, 2, n_points), rng.uniform(-2, 2, n_points),
                  rng.uniform(4, 9, n_points)], axis=1)
    xa_h = X @ K.T
    pts_a = xa_h[:, :2] / xa_h[:, 2:]
    Xb = X @ R.T + t
    xb_h = Xb @ K.T
    pts_b = xb_h[:, :2] / xb_h[:, 2:]
    ok = (Xb[:, 2] > 0.5) & (np.abs(pts_a) < image_size).all(axis=1) & \
         (np.abs(pts_b) < image_size).all(axis=1) & (pts_a > 0).all(axis=1) & \
         (pts_b > 0).all(axis=1)
    return pts_a[ok], pts_b[ok]


def two_view_with_outliers(rng, n_inliers=100, n_outliers=100, image_size=1024.0):
    """Inlier correspondences plus uniform-random outliers, labels known."""
    pts_a = np.zeros((0, 2))
    pts_b = np.zeros((0, 2))
    while len(pts_a) < n_inliers:
        a, b = two_view_instance(rng, n_points=3 * n_inliers, image_size=image_size)
        pts_a, pts_b = a[:n_inliers], b[:n_inliers]
    out_a = rng.uniform(0, image_size, (n_outliers, 2))
    out_b = rng.uniform(0, image_size, (n_outliers, 2))
    matches = MatchSet(np.vstack([pts_a, out_a]), np.vstack([pts_b, out_b]),
                       np.ones(n_inliers + n_outliers))
    is_inlier = np.zeros(n_inliers + n_outliers, dtype=bool)
    is_inlier[:n_inliers] = True
    return matches, is_inlier
