"""Numeric hot loops: RANSAC estimators and canvas warps.

Every kernel here has two builds with identical semantics:

* ``*_np`` -- vectorized / plain-python numpy reference implementation
* ``*_nb`` -- numba ``@njit`` loop implementation

The module-level names (``ransac_fundamental``, ``warp_bilinear``, ...)
bind to the numba build when it is enabled (see :mod:`dgpair.accel`)
and to the numpy build otherwise.  RANSAC kernels consume *pre-drawn*
minimal-sample index arrays, so the two builds walk the exact same
candidate models and return the same answer.

``benchmarks/bench_kernels.py`` times the two builds against each other.
"""

import math

import numpy as np

from .accel import NUMBA_ENABLED

if NUMBA_ENABLED:
    from numba import njit

_COLLINEAR_REL_TOL = 1e-12
_TINY = 1e-15


# ---------------------------------------------------------------------------
# pure-numpy builds
# ---------------------------------------------------------------------------

def _normalize_points_np(pts):
    """Hartley normalization: centroid to origin, mean radius sqrt(2).

    Returns (normalized points, 3x3 transform T) with p' = T @ [p, 1].
    """
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < _TINY:
        return None, None
    s = math.sqrt(2.0) / d
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def _collinear_np(pts):
    """True when a point set has (near-)zero extent along some axis."""
    c = pts - pts.mean(axis=0)
    sxx = (c[:, 0] * c[:, 0]).sum()
    syy = (c[:, 1] * c[:, 1]).sum()
    sxy = (c[:, 0] * c[:, 1]).sum()
    tr = sxx + syy
    root = math.sqrt(max((sxx - syy) ** 2 + 4.0 * sxy * sxy, 0.0))
    lam_min = 0.5 * (tr - root)
    lam_max = 0.5 * (tr + root)
    return lam_min <= _COLLINEAR_REL_TOL * max(1.0, lam_max)


def eight_point_np(pts_a, pts_b):
    """Normalized eight-point fit of F with x_b^T F x_a = 0.

    Accepts N >= 8 correspondences; returns a rank-2, unit-Frobenius
    3x3 matrix, or None when the configuration is unusable.
    """
    na, Ta = _normalize_points_np(pts_a)
    nb, Tb = _normalize_points_np(pts_b)
    if na is None or nb is None:
        return None
    xa, ya = na[:, 0], na[:, 1]
    xb, yb = nb[:, 0], nb[:, 1]
    A = np.stack(
        [xb * xa, xb * ya, xb, yb * xa, yb * ya, yb, xa, ya, np.ones_like(xa)],
        axis=1,
    )
    _, _, vt = np.linalg.svd(A)
    Fn = vt[-1].reshape(3, 3)
    u, s, vt2 = np.linalg.svd(Fn)
    s = s.copy()
    s[2] = 0.0
    Fn = (u * s) @ vt2
    F = Tb.T @ Fn @ Ta
    if not np.isfinite(F).all():
        return None
    norm = np.sqrt((F * F).sum())
    if norm < _TINY:
        return None
    return F / norm


def epipolar_distances_np(F, pts_a, pts_b):
    """Symmetric epipolar distance per correspondence.

    sqrt of the sum of the two squared point-to-epipolar-line distances.
    """
    ha = np.concatenate([pts_a, np.ones((len(pts_a), 1))], axis=1)
    hb = np.concatenate([pts_b, np.ones((len(pts_b), 1))], axis=1)
    lb = ha @ F.T          # lines in image B: F @ x_a
    la = hb @ F            # lines in image A: F^T @ x_b
    e = (hb * lb).sum(axis=1)
    den_b = lb[:, 0] ** 2 + lb[:, 1] ** 2
    den_a = la[:, 0] ** 2 + la[:, 1] ** 2
    d2 = e * e * (1.0 / np.maximum(den_b, _TINY) + 1.0 / np.maximum(den_a, _TINY))
    return np.sqrt(d2)


def _adaptive_trials(inlier_count, n, sample_size, confidence, cap):
    """Number of RANSAC draws to reach `confidence` at current inlier ratio."""
    w = inlier_count / n
    wk = w ** sample_size
    if wk >= 1.0 - 1e-12:
        return 0
    denom = math.log(1.0 - wk)
    if denom >= 0.0:
        return cap
    trials = math.log(max(1.0 - confidence, 1e-300)) / denom
    return min(cap, int(math.ceil(trials)))


def ransac_fundamental_np(pts_a, pts_b, samples, thresh, confidence, cap, offset,
                          best_count0, best_F0):
    """One chunk of RANSAC over pre-drawn 8-point samples.

    `offset` counts trials consumed by earlier chunks; the incoming best
    model is (best_count0, best_F0), best_count0 < 0 when none yet.
    Returns (best_F, best_count, n_usable, trials_needed, consumed).
    """
    n = pts_a.shape[0]
    best_count = best_count0
    best_F = best_F0.copy()
    trials_needed = cap if best_count < 0 else _adaptive_trials(best_count, n, 8, confidence, cap)
    n_usable = 0
    i = 0
    while offset + i < min(trials_needed, cap) and i < samples.shape[0]:
        idx = samples[i]
        i += 1
        sa = pts_a[idx]
        sb = pts_b[idx]
        if _collinear_np(sa) or _collinear_np(sb):
            continue
        F = eight_point_np(sa, sb)
        if F is None:
            continue
        n_usable += 1
        d = epipolar_distances_np(F, pts_a, pts_b)
        count = int((d <= thresh).sum())
        if count > best_count:
            best_count = count
            best_F = F
            trials_needed = _adaptive_trials(count, n, 8, confidence, cap)
    return best_F, best_count, n_usable, trials_needed, i


def affine_from_sample_np(src, dst):
    """Exact affine through 3 correspondences; None when collinear."""
    if _collinear_np(src):
        return None
    M = np.zeros((6, 6))
    b = np.zeros(6)
    for i in range(3):
        x, y = src[i]
        M[2 * i, 0] = x
        M[2 * i, 1] = y
        M[2 * i, 4] = 1.0
        M[2 * i + 1, 2] = x
        M[2 * i + 1, 3] = y
        M[2 * i + 1, 5] = 1.0
        b[2 * i] = dst[i, 0]
        b[2 * i + 1] = dst[i, 1]
    try:
        p = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(p).all():
        return None
    return p


def affine_residuals_np(params, pts_a, pts_b):
    A = np.array([[params[0], params[1]], [params[2], params[3]]])
    t = params[4:6]
    r = pts_a @ A.T + t - pts_b
    return np.sqrt((r * r).sum(axis=1))


def ransac_affine_np(pts_a, pts_b, samples, thresh, confidence, cap, offset,
                     best_count0, best_p0):
    """One chunk of RANSAC over pre-drawn 3-point samples.

    Same chunked contract as :func:`ransac_fundamental_np`.
    Returns (params[6], best_count, n_usable, trials_needed, consumed).
    """
    n = pts_a.shape[0]
    best_count = best_count0
    best_p = best_p0.copy()
    trials_needed = cap if best_count < 0 else _adaptive_trials(best_count, n, 3, confidence, cap)
    n_usable = 0
    i = 0
    while offset + i < min(trials_needed, cap) and i < samples.shape[0]:
        idx = samples[i]
        i += 1
        p = affine_from_sample_np(pts_a[idx], pts_b[idx])
        if p is None:
            continue
        n_usable += 1
        d = affine_residuals_np(p, pts_a, pts_b)
        count = int((d <= thresh).sum())
        if count > best_count:
            best_count = count
            best_p = p
            trials_needed = _adaptive_trials(count, n, 3, confidence, cap)
    return best_p, best_count, n_usable, trials_needed, i


def warp_bilinear_np(img, M, m, out_h, out_w):
    """Inverse-mapped bilinear warp of an HxWxC float image, zero fill."""
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    qx = M[0, 0] * xs + M[0, 1] * ys + m[0]
    qy = M[1, 0] * xs + M[1, 1] * ys + m[1]
    x0 = np.floor(qx).astype(np.int64)
    y0 = np.floor(qy).astype(np.int64)
    fx = qx - x0
    fy = qy - y0
    out = np.zeros((out_h, out_w, img.shape[2]), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xn = x0 + dx
            yn = y0 + dy
            valid = (xn >= 0) & (xn < w) & (yn >= 0) & (yn < h)
            wgt = np.where(dx == 1, fx, 1.0 - fx) * np.where(dy == 1, fy, 1.0 - fy)
            xc = np.clip(xn, 0, w - 1)
            yc = np.clip(yn, 0, h - 1)
            out += (wgt * valid)[:, :, None] * img[yc, xc].astype(np.float64)
    return out.astype(img.dtype)


def warp_nearest_np(mask, M, m, out_h, out_w):
    """Inverse-mapped nearest-neighbor warp of an HxW array, zero fill.

    Rounding is half-up (floor(q + 0.5)) to match the numba build.
    """
    h, w = mask.shape
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    qx = M[0, 0] * xs + M[0, 1] * ys + m[0]
    qy = M[1, 0] * xs + M[1, 1] * ys + m[1]
    xi = np.floor(qx + 0.5).astype(np.int64)
    yi = np.floor(qy + 0.5).astype(np.int64)
    valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.zeros((out_h, out_w), dtype=mask.dtype)
    xc = np.clip(xi, 0, w - 1)
    yc = np.clip(yi, 0, h - 1)
    out[valid] = mask[yc, xc][valid]
    return out


# ---------------------------------------------------------------------------
# numba builds
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @njit(cache=True)
    def _collinear_nb(pts):
        n = pts.shape[0]
        cx = 0.0
        cy = 0.0
        for i in range(n):
            cx += pts[i, 0]
            cy += pts[i, 1]
        cx /= n
        cy /= n
        sxx = 0.0
        syy = 0.0
        sxy = 0.0
        for i in range(n):
            dx = pts[i, 0] - cx
            dy = pts[i, 1] - cy
            sxx += dx * dx
            syy += dy * dy
            sxy += dx * dy
        tr = sxx + syy
        disc = (sxx - syy) ** 2 + 4.0 * sxy * sxy
        if disc < 0.0:
            disc = 0.0
        root = math.sqrt(disc)
        lam_min = 0.5 * (tr - root)
        lam_max = 0.5 * (tr + root)
        hi = 1.0 if lam_max < 1.0 else lam_max
        return lam_min <= _COLLINEAR_REL_TOL * hi

    @njit(cache=True)
    def _eight_point_nb(pts_a, pts_b):
        n = pts_a.shape[0]
        ok = True
        cax = 0.0
        cay = 0.0
        cbx = 0.0
        cby = 0.0
        for i in range(n):
            cax += pts_a[i, 0]
            cay += pts_a[i, 1]
            cbx += pts_b[i, 0]
            cby += pts_b[i, 1]
        cax /= n
        cay /= n
        cbx /= n
        cby /= n
        da = 0.0
        db = 0.0
        for i in range(n):
            da += math.sqrt((pts_a[i, 0] - cax) ** 2 + (pts_a[i, 1] - cay) ** 2)
            db += math.sqrt((pts_b[i, 0] - cbx) ** 2 + (pts_b[i, 1] - cby) ** 2)
        da /= n
        db /= n
        F = np.zeros((3, 3))
        if da < _TINY or db < _TINY:
            ok = False
            return F, ok
        sa = math.sqrt(2.0) / da
        sb = math.sqrt(2.0) / db
        A = np.empty((n, 9))
        for i in range(n):
            xa = (pts_a[i, 0] - cax) * sa
            ya = (pts_a[i, 1] - cay) * sa
            xb = (pts_b[i, 0] - cbx) * sb
            yb = (pts_b[i, 1] - cby) * sb
            A[i, 0] = xb * xa
            A[i, 1] = xb * ya
            A[i, 2] = xb
            A[i, 3] = yb * xa
            A[i, 4] = yb * ya
            A[i, 5] = yb
            A[i, 6] = xa
            A[i, 7] = ya
            A[i, 8] = 1.0
        _, _, vt = np.linalg.svd(A)
        Fn = vt[-1].copy().reshape(3, 3)
        u2, s2, vt2 = np.linalg.svd(Fn)
        s2[2] = 0.0
        Fn = u2 @ np.diag(s2) @ vt2
        Ta = np.array([[sa, 0.0, -sa * cax], [0.0, sa, -sa * cay], [0.0, 0.0, 1.0]])
        Tb = np.array([[sb, 0.0, -sb * cbx], [0.0, sb, -sb * cby], [0.0, 0.0, 1.0]])
        F = Tb.T @ Fn @ Ta
        norm = 0.0
        for r in range(3):
            for c in range(3):
                if not np.isfinite(F[r, c]):
                    ok = False
                norm += F[r, c] * F[r, c]
        norm = math.sqrt(norm)
        if not ok or norm < _TINY:
            return np.zeros((3, 3)), False
        return F / norm, True

    def eight_point_nb(pts_a, pts_b):
        F, ok = _eight_point_nb(np.ascontiguousarray(pts_a), np.ascontiguousarray(pts_b))
        return F if ok else None

    @njit(cache=True)
    def epipolar_distances_nb(F, pts_a, pts_b):
        n = pts_a.shape[0]
        d = np.empty(n)
        for i in range(n):
            xa = pts_a[i, 0]
            ya = pts_a[i, 1]
            xb = pts_b[i, 0]
            yb = pts_b[i, 1]
            lb0 = F[0, 0] * xa + F[0, 1] * ya + F[0, 2]
            lb1 = F[1, 0] * xa + F[1, 1] * ya + F[1, 2]
            lb2 = F[2, 0] * xa + F[2, 1] * ya + F[2, 2]
            la0 = F[0, 0] * xb + F[1, 0] * yb + F[2, 0]
            la1 = F[0, 1] * xb + F[1, 1] * yb + F[2, 1]
            e = xb * lb0 + yb * lb1 + lb2
            den_b = lb0 * lb0 + lb1 * lb1
            den_a = la0 * la0 + la1 * la1
            if den_b < _TINY:
                den_b = _TINY
            if den_a < _TINY:
                den_a = _TINY
            d[i] = math.sqrt(e * e * (1.0 / den_b + 1.0 / den_a))
        return d

    @njit(cache=True)
    def _adaptive_trials_nb(inlier_count, n, sample_size, confidence, cap):
        w = inlier_count / n
        wk = w ** sample_size
        if wk >= 1.0 - 1e-12:
            return 0
        denom = math.log(1.0 - wk)
        if denom >= 0.0:
            return cap
        num = 1.0 - confidence
        if num < 1e-300:
            num = 1e-300
        trials = math.log(num) / denom
        t = int(math.ceil(trials))
        if t > cap:
            t = cap
        return t

    @njit(cache=True)
    def ransac_fundamental_nb(pts_a, pts_b, samples, thresh, confidence, cap, offset,
                              best_count0, best_F0):
        n = pts_a.shape[0]
        best_count = best_count0
        best_F = best_F0.copy()
        if best_count < 0:
            trials_needed = cap
        else:
            trials_needed = _adaptive_trials_nb(best_count, n, 8, confidence, cap)
        n_usable = 0
        i = 0
        while offset + i < min(trials_needed, cap) and i < samples.shape[0]:
            idx = samples[i]
            i += 1
            sa = pts_a[idx]
            sb = pts_b[idx]
            if _collinear_nb(sa) or _collinear_nb(sb):
                continue
            F, ok = _eight_point_nb(sa, sb)
            if not ok:
                continue
            n_usable += 1
            d = epipolar_distances_nb(F, pts_a, pts_b)
            count = 0
            for j in range(n):
                if d[j] <= thresh:
                    count += 1
            if count > best_count:
                best_count = count
                best_F = F
                trials_needed = _adaptive_trials_nb(count, n, 8, confidence, cap)
        return best_F, best_count, n_usable, trials_needed, i

    @njit(cache=True)
    def _affine_from_sample_nb(src, dst):
        p = np.zeros(6)
        if _collinear_nb(src):
            return p, False
        M = np.zeros((6, 6))
        b = np.zeros(6)
        for i in range(3):
            x = src[i, 0]
            y = src[i, 1]
            M[2 * i, 0] = x
            M[2 * i, 1] = y
            M[2 * i, 4] = 1.0
            M[2 * i + 1, 2] = x
            M[2 * i + 1, 3] = y
            M[2 * i + 1, 5] = 1.0
            b[2 * i] = dst[i, 0]
            b[2 * i + 1] = dst[i, 1]
        p = np.linalg.solve(M, b)
        for i in range(6):
            if not np.isfinite(p[i]):
                return np.zeros(6), False
        return p, True

    @njit(cache=True)
    def ransac_affine_nb(pts_a, pts_b, samples, thresh, confidence, cap, offset,
                         best_count0, best_p0):
        n = pts_a.shape[0]
        best_count = best_count0
        best_p = best_p0.copy()
        if best_count < 0:
            trials_needed = cap
        else:
            trials_needed = _adaptive_trials_nb(best_count, n, 3, confidence, cap)
        n_usable = 0
        i = 0
        while offset + i < min(trials_needed, cap) and i < samples.shape[0]:
            idx = samples[i]
            i += 1
            p, ok = _affine_from_sample_nb(pts_a[idx], pts_b[idx])
            if not ok:
                continue
            n_usable += 1
            count = 0
            for j in range(n):
                rx = p[0] * pts_a[j, 0] + p[1] * pts_a[j, 1] + p[4] - pts_b[j, 0]
                ry = p[2] * pts_a[j, 0] + p[3] * pts_a[j, 1] + p[5] - pts_b[j, 1]
                if math.sqrt(rx * rx + ry * ry) <= thresh:
                    count += 1
            if count > best_count:
                best_count = count
                best_p = p
                trials_needed = _adaptive_trials_nb(count, n, 3, confidence, cap)
        return best_p, best_count, n_usable, trials_needed, i

    @njit(cache=True)
    def warp_bilinear_nb(img, M, m, out_h, out_w):
        h, w, nc = img.shape
        out = np.zeros((out_h, out_w, nc), dtype=img.dtype)
        for y in range(out_h):
            for x in range(out_w):
                qx = M[0, 0] * x + M[0, 1] * y + m[0]
                qy = M[1, 0] * x + M[1, 1] * y + m[1]
                x0 = int(math.floor(qx))
                y0 = int(math.floor(qy))
                fx = qx - x0
                fy = qy - y0
                for c in range(nc):
                    acc = 0.0
                    for dy in range(2):
                        yn = y0 + dy
                        if yn < 0 or yn >= h:
                            continue
                        wy = fy if dy == 1 else 1.0 - fy
                        for dx in range(2):
                            xn = x0 + dx
                            if xn < 0 or xn >= w:
                                continue
                            wx = fx if dx == 1 else 1.0 - fx
                            acc += wx * wy * img[yn, xn, c]
                    out[y, x, c] = acc
        return out

    @njit(cache=True)
    def warp_nearest_nb(mask, M, m, out_h, out_w):
        h, w = mask.shape
        out = np.zeros((out_h, out_w), dtype=mask.dtype)
        for y in range(out_h):
            for x in range(out_w):
                qx = M[0, 0] * x + M[0, 1] * y + m[0]
                qy = M[1, 0] * x + M[1, 1] * y + m[1]
                xi = int(math.floor(qx + 0.5))
                yi = int(math.floor(qy + 0.5))
                if 0 <= xi < w and 0 <= yi < h:
                    out[y, x] = mask[yi, xi]
        return out


# ---------------------------------------------------------------------------
# active bindings
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    eight_point = eight_point_nb
    epipolar_distances = epipolar_distances_nb
    ransac_fundamental = ransac_fundamental_nb
    ransac_affine = ransac_affine_nb
    warp_bilinear = warp_bilinear_nb
    warp_nearest = warp_nearest_nb
else:
    eight_point = eight_point_np
    epipolar_distances = epipolar_distances_np
    ransac_fundamental = ransac_fundamental_np
    ransac_affine = ransac_affine_np
    warp_bilinear = warp_bilinear_np
    warp_nearest = warp_nearest_np


def warm_up():
    """Trigger JIT compilation of the active kernels (no-op on numpy path)."""
    pts_a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0],
                      [2.0, 1.0], [1.0, 2.0], [2.0, 3.0], [3.0, 2.0], [4.0, 5.0]])
    pts_b = pts_a + 0.5
    samples = np.arange(8, dtype=np.int64).reshape(1, 8)
    ransac_fundamental(pts_a, pts_b, samples, 3.0, 0.99, 1, 0, -1, np.zeros((3, 3)))
    ransac_affine(pts_a, pts_b, samples[:, :3], 20.0, 0.99, 1, 0, -1, np.zeros(6))
    img = np.zeros((4, 4, 3), dtype=np.float32)
    eye = np.eye(2)
    zero = np.zeros(2)
    warp_bilinear(img, eye, zero, 4, 4)
    warp_nearest(np.zeros((4, 4), dtype=np.uint8), eye, zero, 4, 4)
