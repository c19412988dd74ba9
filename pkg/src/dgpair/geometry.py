"""Two-view geometry: robust fundamental/affine estimation, warps, flips.

Keypoints are (N, 2) float arrays of (x, y) pixel coordinates, x along
columns and y along rows.  All estimators draw their randomness from an
explicit seed; nothing touches the global RNG.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateConfiguration, FitFailed, SingularTransform, TooFewMatches

FUNDAMENTAL_MIN_MATCHES = 8
AFFINE_MIN_MATCHES = 3
FUNDAMENTAL_MAX_ITERS = 10_000
AFFINE_MAX_ITERS = 2_000
# confidence for the affine stopping rule (the fundamental confidence is a
# caller parameter; the affine estimator has no such knob in its contract)
AFFINE_CONFIDENCE = 0.99


def as_points(pts):
    """Coerce to a contiguous (N, 2) float64 array."""
    a = np.ascontiguousarray(np.asarray(pts, dtype=np.float64))
    if a.size == 0:
        return a.reshape(0, 2)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected (N, 2) points, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class MatchSet:
    """Point correspondences between an image pair, with confidences."""

    a: np.ndarray        # (N, 2) coordinates in image A
    b: np.ndarray        # (N, 2) coordinates in image B
    scores: np.ndarray   # (N,) in [0, 1]

    def __post_init__(self):
        a = as_points(self.a)
        b = as_points(self.b)
        s = np.ascontiguousarray(np.asarray(self.scores, dtype=np.float64)).reshape(-1)
        if not (len(a) == len(b) == len(s)):
            raise ValueError("match arrays disagree in length")
        if len(s) and (not np.isfinite(a).all() or not np.isfinite(b).all()):
            raise ValueError("match coordinates must be finite")
        if len(s) and ((s < 0).any() or (s > 1).any()):
            raise ValueError("match scores must lie in [0, 1]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return self.a.shape[0]

    def take(self, index):
        """Subset by boolean mask or integer indices."""
        return MatchSet(self.a[index], self.b[index], self.scores[index])

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))


@dataclass(frozen=True)
class AffineTransform:
    """2D affine map p -> A @ p + t."""

    A: np.ndarray  # (2, 2)
    t: np.ndarray  # (2,)

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=np.float64).reshape(2, 2))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(2))

    @classmethod
    def identity(cls):
        return cls(np.eye(2), np.zeros(2))

    @property
    def is_identity(self):
        return np.array_equal(self.A, np.eye(2)) and np.array_equal(self.t, np.zeros(2))

    def apply(self, pts):
        pts = as_points(pts)
        return pts @ self.A.T + self.t

    def inverse(self):
        det = self.A[0, 0] * self.A[1, 1] - self.A[0, 1] * self.A[1, 0]
        if abs(det) < 1e-12:
            raise SingularTransform(f"affine matrix is singular (det={det:g})")
        Ai = np.linalg.inv(self.A)
        return AffineTransform(Ai, -Ai @ self.t)


@dataclass
class EpipolarModel:
    """Fundamental matrix plus per-input-match inlier flags."""

    F: np.ndarray             # (3, 3), rank 2, unit Frobenius norm
    inlier_flags: np.ndarray  # (N,) bool


def minimal_samples(rng, n, k, iters):
    """Pre-draw `iters` minimal samples of k distinct indices out of n.

    Shared by both kernel builds so they see identical candidates.
    """
    if n <= 512:
        return np.ascontiguousarray(
            np.argsort(rng.random((iters, n)), axis=1)[:, :k].astype(np.int64)
        )
    idx = rng.integers(0, n, size=(iters, k), dtype=np.int64)
    while True:
        srt = np.sort(idx, axis=1)
        bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if not bad.any():
            return np.ascontiguousarray(idx)
        idx[bad] = rng.integers(0, n, size=(int(bad.sum()), k), dtype=np.int64)


def _chunk_sizes(cap, first=256, growth=8):
    """Fixed chunk schedule for lazy sample generation; sums to `cap`."""
    sizes = []
    total = 0
    size = first
    while total < cap:
        size = min(size, cap - total)
        sizes.append(size)
        total += size
        size *= growth
    return sizes


def _run_chunked_ransac(kernel, pts_a, pts_b, k, rng, thresh, confidence, cap, empty_model):
    """Drive a chunked RANSAC kernel to completion.

    Draws minimal samples chunk by chunk (fixed schedule, so results do
    not depend on chunking) and threads the best-so-far state through.
    Returns (model, best_count, n_usable).
    """
    n = pts_a.shape[0]
    best_count = -1
    best_model = empty_model
    n_usable = 0
    offset = 0
    for size in _chunk_sizes(cap):
        samples = minimal_samples(rng, n, k, size)
        best_model, best_count, usable, trials_needed, consumed = kernel(
            pts_a, pts_b, samples, float(thresh), float(confidence), cap, offset,
            best_count, best_model,
        )
        n_usable += usable
        offset += consumed
        if offset >= min(trials_needed, cap):
            break
    return best_model, best_count, n_usable


def estimate_fundamental(matches, reproj_error=3.0, confidence=0.99, seed=0,
                         max_iters=FUNDAMENTAL_MAX_ITERS):
    """Robustly fit a fundamental matrix to a match set.

    Inliers are matches whose symmetric epipolar distance is at most
    `reproj_error` pixels.  The minimal-sample search is followed by a
    least-squares refit on the best inlier set.

    Raises TooFewMatches below 8 matches and DegenerateConfiguration
    when no usable minimal sample exists (e.g. collinear points).
    """
    n = len(matches)
    if n < FUNDAMENTAL_MIN_MATCHES:
        raise TooFewMatches(f"need >= {FUNDAMENTAL_MIN_MATCHES} matches, got {n}")
    pts_a = matches.a
    pts_b = matches.b
    rng = np.random.default_rng(seed)
    F, best_count, n_usable = _run_chunked_ransac(
        kernels.ransac_fundamental, pts_a, pts_b, FUNDAMENTAL_MIN_MATCHES, rng,
        reproj_error, confidence, max_iters, np.zeros((3, 3)),
    )
    if n_usable == 0 or best_count < 0:
        raise DegenerateConfiguration("every minimal sample was rank-deficient")
    flags = kernels.epipolar_distances(F, pts_a, pts_b) <= reproj_error
    if flags.sum() >= FUNDAMENTAL_MIN_MATCHES:
        refit = kernels.eight_point(pts_a[flags], pts_b[flags])
        if refit is not None:
            refit_flags = kernels.epipolar_distances(refit, pts_a, pts_b) <= reproj_error
            if refit_flags.sum() >= flags.sum():
                F, flags = refit, refit_flags
    return EpipolarModel(F=F, inlier_flags=np.asarray(flags, dtype=bool))


def estimate_affine(matches, inlier_error=20.0, seed=0, max_iters=AFFINE_MAX_ITERS):
    """Robustly fit an affine map from image-A to image-B coordinates.

    RANSAC over 3-point samples, then a least-squares refit on the
    winning inlier set.  Raises TooFewMatches below 3 matches and
    FitFailed when no sample reaches 3 inliers.
    """
    n = len(matches)
    if n < AFFINE_MIN_MATCHES:
        raise TooFewMatches(f"need >= {AFFINE_MIN_MATCHES} matches, got {n}")
    pts_a = matches.a
    pts_b = matches.b
    rng = np.random.default_rng(seed)
    params, best_count, n_usable = _run_chunked_ransac(
        kernels.ransac_affine, pts_a, pts_b, AFFINE_MIN_MATCHES, rng,
        inlier_error, AFFINE_CONFIDENCE, max_iters, np.zeros(6),
    )
    if n_usable == 0 or best_count < AFFINE_MIN_MATCHES:
        raise FitFailed("no affine sample reached 3 inliers")
    flags = kernels.affine_residuals_np(params, pts_a, pts_b) <= inlier_error
    if flags.sum() >= AFFINE_MIN_MATCHES:
        refit = _affine_least_squares(pts_a[flags], pts_b[flags])
        if refit is not None:
            refit_flags = kernels.affine_residuals_np(refit, pts_a, pts_b) <= inlier_error
            if refit_flags.sum() >= flags.sum():
                params = refit
    return AffineTransform(
        A=np.array([[params[0], params[1]], [params[2], params[3]]]),
        t=params[4:6].copy(),
    )


def _affine_least_squares(pts_a, pts_b):
    n = pts_a.shape[0]
    M = np.zeros((2 * n, 6))
    M[0::2, 0] = pts_a[:, 0]
    M[0::2, 1] = pts_a[:, 1]
    M[0::2, 4] = 1.0
    M[1::2, 2] = pts_a[:, 0]
    M[1::2, 3] = pts_a[:, 1]
    M[1::2, 5] = 1.0
    rhs = pts_b.reshape(-1)
    sol, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < 6 or not np.isfinite(sol).all():
        return None
    return sol


def warp(buffer, transform, out_size=None):
    """Apply an affine transform to a canvas by inverse mapping.

    3D (H, W, C) float buffers are bilinearly interpolated; 2D buffers
    are treated as binary masks and sampled nearest-neighbor, so mask
    values stay exactly {0, 1}.  Samples falling outside the source
    fill with zero.  `out_size` is (H, W); defaults to the input size.
    """
    buffer = np.asarray(buffer)
    if buffer.ndim not in (2, 3):
        raise ValueError(f"expected HxW or HxWxC buffer, got shape {buffer.shape}")
    inv = transform.inverse()  # raises SingularTransform when det == 0
    out_h, out_w = out_size if out_size is not None else buffer.shape[:2]
    M = np.ascontiguousarray(inv.A)
    m = np.ascontiguousarray(inv.t)
    if buffer.ndim == 3:
        return kernels.warp_bilinear(np.ascontiguousarray(buffer), M, m, out_h, out_w)
    return kernels.warp_nearest(np.ascontiguousarray(buffer), M, m, out_h, out_w)


def flip_horizontal(image, keypoints=None):
    """Mirror a canvas left-right and flip keypoint x coordinates with it.

    Column c maps to W-1-c, so flipping twice is exact.
    """
    image = np.asarray(image)
    w = image.shape[1]
    flipped = np.ascontiguousarray(image[:, ::-1])
    if keypoints is None:
        return flipped, None
    kps = as_points(keypoints).copy()
    if len(kps):
        kps[:, 0] = (w - 1) - kps[:, 0]
    return flipped, kps
