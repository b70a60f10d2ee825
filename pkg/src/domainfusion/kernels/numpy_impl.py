"""Pure-numpy kernel implementations.

Reference backend for the jitted kernels in ``numba_impl``. Both modules
expose the same three functions with identical signatures and policies;
only the execution strategy differs (vectorized here, loops there).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "numpy"


def _filter_valid(batch: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of (P,H,W) planes with a 1-D kernel."""
    n = kernel.shape[0]
    rows = sliding_window_view(batch, n, axis=1)
    tmp = np.einsum("phwn,n->phw", rows, kernel)
    cols = sliding_window_view(tmp, n, axis=2)
    return np.einsum("phwn,n->phw", cols, kernel)


def _downsample2(batch: np.ndarray) -> np.ndarray:
    """2x2 mean pooling; odd trailing rows/columns are dropped."""
    p, h, w = batch.shape
    h2, w2 = h // 2, w // 2
    trimmed = batch[:, : h2 * 2, : w2 * 2]
    return trimmed.reshape(p, h2, 2, w2, 2).mean(axis=(2, 4))


def msssim_components(xs, ys, kernel1d, c1, c2, c3, n_scales):
    """Per-pair multi-scale similarity statistics.

    xs, ys: (P, H, W) float64 luma planes in [0, 255].
    Returns (P, 2*n_scales + 1) rows laid out as
    [luminance at coarsest scale, contrast per scale, structure per scale].
    Scales below the window size fall back to whole-image statistics.
    """
    p = xs.shape[0]
    win = kernel1d.shape[0]
    out = np.empty((p, 2 * n_scales + 1), dtype=np.float64)
    cur_x = np.ascontiguousarray(xs, dtype=np.float64)
    cur_y = np.ascontiguousarray(ys, dtype=np.float64)
    for scale in range(n_scales):
        h, w = cur_x.shape[1], cur_x.shape[2]
        last = scale == n_scales - 1
        if h >= win and w >= win:
            mu_x = _filter_valid(cur_x, kernel1d)
            mu_y = _filter_valid(cur_y, kernel1d)
            var_x = np.maximum(_filter_valid(cur_x * cur_x, kernel1d) - mu_x * mu_x, 0.0)
            var_y = np.maximum(_filter_valid(cur_y * cur_y, kernel1d) - mu_y * mu_y, 0.0)
            cov = _filter_valid(cur_x * cur_y, kernel1d) - mu_x * mu_y
            sd_x = np.sqrt(var_x)
            sd_y = np.sqrt(var_y)
            c_map = (2.0 * sd_x * sd_y + c2) / (var_x + var_y + c2)
            s_map = (cov + c3) / (sd_x * sd_y + c3)
            out[:, 1 + scale] = c_map.mean(axis=(1, 2))
            out[:, 1 + n_scales + scale] = s_map.mean(axis=(1, 2))
            if last:
                l_map = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
                out[:, 0] = l_map.mean(axis=(1, 2))
        else:
            mu_x = cur_x.mean(axis=(1, 2))
            mu_y = cur_y.mean(axis=(1, 2))
            var_x = np.maximum((cur_x * cur_x).mean(axis=(1, 2)) - mu_x * mu_x, 0.0)
            var_y = np.maximum((cur_y * cur_y).mean(axis=(1, 2)) - mu_y * mu_y, 0.0)
            cov = (cur_x * cur_y).mean(axis=(1, 2)) - mu_x * mu_y
            sd_x = np.sqrt(var_x)
            sd_y = np.sqrt(var_y)
            out[:, 1 + scale] = (2.0 * sd_x * sd_y + c2) / (var_x + var_y + c2)
            out[:, 1 + n_scales + scale] = (cov + c3) / (sd_x * sd_y + c3)
            if last:
                out[:, 0] = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
        if not last:
            cur_x = _downsample2(cur_x)
            cur_y = _downsample2(cur_y)
    return out


def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvector columns, final max off-diagonal
    magnitude). The caller decides what to do when the residual is still
    above ``tol`` after ``max_sweeps`` sweeps.
    """
    d = a.shape[0]
    mat = np.array(a, dtype=np.float64, copy=True)
    vec = np.eye(d, dtype=np.float64)
    if d < 2:
        return np.diag(mat).copy(), vec, 0.0
    off = _max_offdiag(mat)
    for _ in range(max_sweeps):
        if off <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = mat[p, q]
                if apq == 0.0:
                    continue
                theta = (mat[q, q] - mat[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = mat[:, p].copy()
                col_q = mat[:, q].copy()
                mat[:, p] = c * col_p - s * col_q
                mat[:, q] = s * col_p + c * col_q
                row_p = mat[p, :].copy()
                row_q = mat[q, :].copy()
                mat[p, :] = c * row_p - s * row_q
                mat[q, :] = s * row_p + c * row_q
                mat[p, q] = 0.0
                mat[q, p] = 0.0
                vcol_p = vec[:, p].copy()
                vcol_q = vec[:, q].copy()
                vec[:, p] = c * vcol_p - s * vcol_q
                vec[:, q] = s * vcol_p + c * vcol_q
        off = _max_offdiag(mat)
    return np.diag(mat).copy(), vec, off


def _max_offdiag(mat: np.ndarray) -> float:
    d = mat.shape[0]
    masked = np.abs(mat.copy())
    masked[np.arange(d), np.arange(d)] = 0.0
    return float(masked.max())


def resize_bilinear(planes, out_h, out_w):
    """Half-pixel-center bilinear resize of (P,H,W) float64 planes.

    Source coordinates are edge-clamped, so output values never leave the
    range spanned by the four nearest source pixels.
    """
    p, h, w = planes.shape
    sy = h / out_h
    sx = w / out_w
    src_y = (np.arange(out_h, dtype=np.float64) + 0.5) * sy - 0.5
    src_x = (np.arange(out_w, dtype=np.float64) + 0.5) * sx - 0.5
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = src_y - y0
    fx = src_x - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    p00 = planes[:, y0c[:, None], x0c[None, :]]
    p01 = planes[:, y0c[:, None], x1c[None, :]]
    p10 = planes[:, y1c[:, None], x0c[None, :]]
    p11 = planes[:, y1c[:, None], x1c[None, :]]
    fy2 = fy[None, :, None]
    fx2 = fx[None, None, :]
    top = (1.0 - fx2) * p00 + fx2 * p01
    bot = (1.0 - fx2) * p10 + fx2 * p11
    return (1.0 - fy2) * top + fy2 * bot
