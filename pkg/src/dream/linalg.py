"""Small dense symmetric linear algebra used by the ridge arms and the clipping rule."""

import math

import numpy as np

SYMMETRY_TOL = 1e-12


def _check_pair(m, x):
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if x.shape != (m.shape[0],):
        raise ValueError(
            f"dimension mismatch: matrix is {m.shape[0]}x{m.shape[1]}, vector has shape {x.shape}"
        )
    return m, x


def rank1_update(m, x):
    """Return ``m + x x^T``."""
    m, x = _check_pair(m, x)
    return m + np.outer(x, x)


def sherman_morrison_inverse_update(minv, x):
    """Inverse of ``M + x x^T`` given ``minv = M^{-1}``.

    Raises ``FloatingPointError`` when ``1 + x^T minv x <= 0``, which means
    ``minv`` was not the inverse of a positive definite matrix.
    """
    minv, x = _check_pair(minv, x)
    u = minv @ x
    denom = 1.0 + x @ u
    if not denom > 0.0:
        raise FloatingPointError(f"rank-1 inverse update lost positive definiteness (1 + x'Ax = {denom})")
    out = minv - np.outer(u, u) / denom
    # keep exact symmetry; the outer product is symmetric but minv may carry drift
    return 0.5 * (out + out.T)


def quadratic_form(m, x):
    m, x = _check_pair(m, x)
    return float(x @ m @ x)


def is_symmetric(m, tol=SYMMETRY_TOL):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    return bool(np.all(np.abs(m - m.T) <= tol * scale))


def jacobi_eigenvalues(m, tol=1e-15, max_sweeps=64):
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Works on plain Python floats: for the 2x2 and 3x3 matrices produced per
    bandit step this is several times faster than round-tripping numpy.
    Returns the eigenvalues in ascending order.
    """
    a = np.asarray(m, dtype=float)
    if not is_symmetric(a):
        raise ValueError("jacobi_eigenvalues requires a symmetric matrix")
    n = a.shape[0]
    a = [list(map(float, row)) for row in a]
    if n == 0:
        return []
    frob = math.sqrt(sum(v * v for row in a for v in row))
    if frob == 0.0:
        return [0.0] * n
    thresh = (tol * frob) ** 2

    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            row = a[p]
            for q in range(p + 1, n):
                off += row[q] * row[q]
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                app = a[p][p]
                aqq = a[q][q]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                a[p][p] = app - t * apq
                a[q][q] = aqq + t * apq
                a[p][q] = a[q][p] = 0.0
                for r in range(n):
                    if r == p or r == q:
                        continue
                    g = a[r][p]
                    h = a[r][q]
                    a[r][p] = a[p][r] = g - s * (h + g * tau)
                    a[r][q] = a[q][r] = h + s * (g - h * tau)
    return sorted(a[i][i] for i in range(n))


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix (cyclic Jacobi, full spectrum)."""
    return jacobi_eigenvalues(m)[0]
