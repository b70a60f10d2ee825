"""Jitted kernel implementations (numba nopython mode, cached)."""

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def _filter_valid_one(img, kernel):
    n = kernel.shape[0]
    h, w = img.shape
    tmp = np.empty((h, w - n + 1), dtype=np.float64)
    for i in range(h):
        for j in range(w - n + 1):
            acc = 0.0
            for t in range(n):
                acc += img[i, j + t] * kernel[t]
            tmp[i, j] = acc
    out = np.empty((h - n + 1, w - n + 1), dtype=np.float64)
    for i in range(h - n + 1):
        for j in range(w - n + 1):
            acc = 0.0
            for t in range(n):
                acc += tmp[i + t, j] * kernel[t]
            out[i, j] = acc
    return out


@njit(cache=True)
def _downsample2_one(img):
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    out = np.empty((h2, w2), dtype=np.float64)
    for i in range(h2):
        for j in range(w2):
            out[i, j] = 0.25 * (
                img[2 * i, 2 * j]
                + img[2 * i, 2 * j + 1]
                + img[2 * i + 1, 2 * j]
                + img[2 * i + 1, 2 * j + 1]
            )
    return out


@njit(cache=True)
def msssim_components(xs, ys, kernel1d, c1, c2, c3, n_scales):
    p = xs.shape[0]
    win = kernel1d.shape[0]
    out = np.empty((p, 2 * n_scales + 1), dtype=np.float64)
    for k in range(p):
        cur_x = xs[k].astype(np.float64)
        cur_y = ys[k].astype(np.float64)
        for scale in range(n_scales):
            h, w = cur_x.shape
            last = scale == n_scales - 1
            if h >= win and w >= win:
                mu_x = _filter_valid_one(cur_x, kernel1d)
                mu_y = _filter_valid_one(cur_y, kernel1d)
                m_xx = _filter_valid_one(cur_x * cur_x, kernel1d)
                m_yy = _filter_valid_one(cur_y * cur_y, kernel1d)
                m_xy = _filter_valid_one(cur_x * cur_y, kernel1d)
                oh, ow = mu_x.shape
                c_sum = 0.0
                s_sum = 0.0
                l_sum = 0.0
                for i in range(oh):
                    for j in range(ow):
                        mx = mu_x[i, j]
                        my = mu_y[i, j]
                        vx = m_xx[i, j] - mx * mx
                        if vx < 0.0:
                            vx = 0.0
                        vy = m_yy[i, j] - my * my
                        if vy < 0.0:
                            vy = 0.0
                        cov = m_xy[i, j] - mx * my
                        sdx = np.sqrt(vx)
                        sdy = np.sqrt(vy)
                        c_sum += (2.0 * sdx * sdy + c2) / (vx + vy + c2)
                        s_sum += (cov + c3) / (sdx * sdy + c3)
                        if last:
                            l_sum += (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
                npos = oh * ow
                out[k, 1 + scale] = c_sum / npos
                out[k, 1 + n_scales + scale] = s_sum / npos
                if last:
                    out[k, 0] = l_sum / npos
            else:
                npix = h * w
                sx = 0.0
                sy = 0.0
                sxx = 0.0
                syy = 0.0
                sxy = 0.0
                for i in range(h):
                    for j in range(w):
                        xv = cur_x[i, j]
                        yv = cur_y[i, j]
                        sx += xv
                        sy += yv
                        sxx += xv * xv
                        syy += yv * yv
                        sxy += xv * yv
                mx = sx / npix
                my = sy / npix
                vx = sxx / npix - mx * mx
                if vx < 0.0:
                    vx = 0.0
                vy = syy / npix - my * my
                if vy < 0.0:
                    vy = 0.0
                cov = sxy / npix - mx * my
                sdx = np.sqrt(vx)
                sdy = np.sqrt(vy)
                out[k, 1 + scale] = (2.0 * sdx * sdy + c2) / (vx + vy + c2)
                out[k, 1 + n_scales + scale] = (cov + c3) / (sdx * sdy + c3)
                if last:
                    out[k, 0] = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
            if not last:
                cur_x = _downsample2_one(cur_x)
                cur_y = _downsample2_one(cur_y)
    return out


@njit(cache=True)
def _max_offdiag(mat):
    d = mat.shape[0]
    best = 0.0
    for i in range(d):
        for j in range(d):
            if i != j:
                v = abs(mat[i, j])
                if v > best:
                    best = v
    return best


@njit(cache=True)
def jacobi_eigh(a, tol, max_sweeps):
    d = a.shape[0]
    mat = a.astype(np.float64).copy()
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
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for i in range(d):
                    ap = mat[i, p]
                    aq = mat[i, q]
                    mat[i, p] = c * ap - s * aq
                    mat[i, q] = s * ap + c * aq
                for j in range(d):
                    ap = mat[p, j]
                    aq = mat[q, j]
                    mat[p, j] = c * ap - s * aq
                    mat[q, j] = s * ap + c * aq
                mat[p, q] = 0.0
                mat[q, p] = 0.0
                for i in range(d):
                    vp = vec[i, p]
                    vq = vec[i, q]
                    vec[i, p] = c * vp - s * vq
                    vec[i, q] = s * vp + c * vq
        off = _max_offdiag(mat)
    return np.diag(mat).copy(), vec, off


@njit(cache=True)
def resize_bilinear(planes, out_h, out_w):
    p, h, w = planes.shape
    sy = h / out_h
    sx = w / out_w
    out = np.empty((p, out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        src_y = (i + 0.5) * sy - 0.5
        y0 = int(np.floor(src_y))
        fy = src_y - y0
        y0c = min(max(y0, 0), h - 1)
        y1c = min(max(y0 + 1, 0), h - 1)
        for j in range(out_w):
            src_x = (j + 0.5) * sx - 0.5
            x0 = int(np.floor(src_x))
            fx = src_x - x0
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            for k in range(p):
                top = (1.0 - fx) * planes[k, y0c, x0c] + fx * planes[k, y0c, x1c]
                bot = (1.0 - fx) * planes[k, y1c, x0c] + fx * planes[k, y1c, x1c]
                out[k, i, j] = (1.0 - fy) * top + fy * bot
    return out
