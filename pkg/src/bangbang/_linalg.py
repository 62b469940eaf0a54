"""Small dense linear-algebra helpers shared by the MPS engines."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la

X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
ZVALS = np.array([1.0, -1.0])

# smallest singular value ever inverted
LAMBDA_FLOOR = 1e-14


def x_rotation(theta: float) -> np.ndarray:
    """exp(+i theta X)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 1j * s], [1j * s, c]])


def zz_phase(beta: float) -> np.ndarray:
    """Diagonal of exp(+i beta Z Z) as a (2, 2) array over (s1, s2)."""
    return np.exp(1j * beta * np.outer(ZVALS, ZVALS))


def svd(m: np.ndarray):
    try:
        return la.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except la.LinAlgError:
        return la.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def svd_truncate(m: np.ndarray, dmax: int, tol: float):
    """SVD keeping at most ``dmax`` values and discarding relative weight <= ``tol``.

    Returns ``U, S, Vh, discarded`` with ``S`` normalised to unit 2-norm and
    ``discarded`` the relative squared weight that was dropped.
    """
    u, s, vh = svd(m)
    w = s * s
    total = w.sum()
    if total == 0:
        raise FloatingPointError("zero-norm tensor in truncation")
    # tail[k] = weight of values k, k+1, ...
    tail = np.cumsum(w[::-1])[::-1] / total
    keep = int(np.count_nonzero(tail > tol))
    keep = max(1, min(keep, dmax))
    keep = min(keep, int(np.count_nonzero(s > LAMBDA_FLOOR * s[0])))
    discarded = float(tail[keep]) if keep < s.size else 0.0
    s = s[:keep]
    s = s / np.linalg.norm(s)
    return u[:, :keep], s, vh[:keep], discarded


def inverse_floor(lam: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(lam, LAMBDA_FLOOR)
