"""Independent reference implementations used to check the main code paths.

Everything here is deliberately written the slow, obvious way (enumeration,
coordinate descent, finite differences, double loops) and shares no code
with the package internals it validates.
"""

import itertools
import struct

import numpy as np


def brute_force_sparse_fit(y, d, sparsity):
    """Best support of size <= sparsity by exhaustive least squares.

    Returns (support frozenset, squared residual) of the winning subset.
    """
    n = d.shape[1]
    best_support, best_obj = frozenset(), float(y @ y)
    for size in range(1, sparsity + 1):
        for support in itertools.combinations(range(n), size):
            sub = d[:, support]
            coeff, *_ = np.linalg.lstsq(sub, y, rcond=None)
            resid = y - sub @ coeff
            obj = float(resid @ resid)
            if obj < best_obj - 1e-12:
                best_support, best_obj = frozenset(support), obj
    return best_support, best_obj


def cd_lasso(y, d, lam, n_iter=20000, tol=1e-12):
    """Coordinate descent for 0.5 ||y - D s||^2 + lam ||s||_1."""
    n = d.shape[1]
    col_sq = (d * d).sum(axis=0)
    s = np.zeros(n)
    r = y - d @ s
    for _ in range(n_iter):
        max_delta = 0.0
        for i in range(n):
            if col_sq[i] == 0.0:
                continue
            old = s[i]
            rho = d[:, i] @ (r + d[:, i] * old)
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[i]
            if new != old:
                r += d[:, i] * (old - new)
                s[i] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta <= tol:
            break
    return s


def lasso_objective(y, d, s, lam):
    r = y - d @ s
    return 0.5 * float(r @ r) + lam * float(np.abs(s).sum())


def central_difference_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function of a vector."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def central_difference_jacobian(f, x, h=1e-5):
    """Central finite differences of a vector function: rows are outputs."""
    cols = []
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((f(xp) - f(xm)) / (2 * h))
    return np.stack(cols, axis=1)


def windowed_ssim(x, y, window=8, c1=1e-4, c2=9e-4):
    """Mean SSIM over all stride-1 windows, straight from the formula."""
    if x.ndim == 3:
        x = x.mean(axis=2) if x.shape[2] > 1 else x[:, :, 0]
        y = y.mean(axis=2) if y.shape[2] > 1 else y[:, :, 0]
    h, w = x.shape
    scores = []
    for r in range(h - window + 1):
        for c in range(w - window + 1):
            wx = x[r : r + window, c : c + window]
            wy = y[r : r + window, c : c + window]
            mx, my = wx.mean(), wy.mean()
            vx = (wx * wx).mean() - mx * mx
            vy = (wy * wy).mean() - my * my
            cov = (wx * wy).mean() - mx * my
            scores.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(scores))


def read_idx_images(path):
    """Minimal standalone IDX image reader (uncompressed files only)."""
    with open(path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", f.read(16))
        assert magic == 0x00000803
        return np.frombuffer(f.read(count * rows * cols), dtype=np.uint8).reshape(
            count, rows, cols
        )


def read_idx_labels(path):
    with open(path, "rb") as f:
        magic, count = struct.unpack(">II", f.read(8))
        assert magic == 0x00000801
        return np.frombuffer(f.read(count), dtype=np.uint8)


def mutual_coherence(d):
    """Max absolute inner product between distinct unit-norm columns."""
    gram = np.abs(d.T @ d)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())
