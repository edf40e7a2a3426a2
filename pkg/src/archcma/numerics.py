"""Dense symmetric linear algebra and normal order statistics."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

SYMMETRY_RTOL = 1e-12
JACOBI_RTOL = 1e-14
JACOBI_MAX_SWEEPS = 100
ORDER_STAT_LIMIT = 10.0


class NumericalError(ArithmeticError):
    """Raised when a matrix routine cannot produce a trustworthy result."""


def _check_square(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    return M


def is_symmetric(M: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    M = np.asarray(M, dtype=float)
    scale = np.max(np.abs(M)) if M.size else 0.0
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= rtol * scale)


def sym_eig(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(w, V)`` with ``w`` ascending and orthonormal eigenvectors in the
    columns of ``V`` so that ``M @ V == V * w``.
    """
    M = _check_square(M)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return w, V


def jacobi_eig(
    M: np.ndarray, rtol: float = JACOBI_RTOL, max_sweeps: int = JACOBI_MAX_SWEEPS
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition.

    Slow but simple; kept as an independent reference for :func:`sym_eig`.
    """
    A = _check_square(M).copy()
    n = A.shape[0]
    V = np.eye(n)
    threshold = rtol * max(np.linalg.norm(A), np.finfo(float).tiny)
    off = math.inf
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NumericalError(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {off:.3e})"
        )
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric positive-definite square root ``R`` with ``R @ R == M``."""
    w, V = sym_eig(M)
    if w[0] <= 0.0:
        raise NumericalError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e})")
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def solve_spd(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    M = _check_square(M)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("matrix is singular or indefinite") from exc
    y = np.linalg.solve(L, np.asarray(v, dtype=float))
    return np.linalg.solve(L.T, y)


def mahalanobis_sq(x: np.ndarray, y: np.ndarray, apply_inverse) -> float:
    """Squared distance ``(x - y)^T S^{-1} (x - y)``.

    ``apply_inverse`` maps a vector ``d`` to ``S^{-1} d``; pass a matrix to have
    it treated as ``S`` itself.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    if not callable(apply_inverse):
        S = np.asarray(apply_inverse, dtype=float)
        return max(float(d @ solve_spd(S, d)), 0.0)
    return max(float(d @ apply_inverse(d)), 0.0)


def _order_stat_integrand(x: float, i: int, lam: int, log_coef: float) -> float:
    log_pdf = (
        log_coef
        + (i - 1) * special.log_ndtr(x)
        + (lam - i) * special.log_ndtr(-x)
        - 0.5 * x * x
        - 0.5 * math.log(2.0 * math.pi)
    )
    return x * math.exp(log_pdf)


@lru_cache(maxsize=4096)
def normal_order_statistic_mean(i: int, lam: int) -> float:
    """Expected value of the ``i``-th smallest of ``lam`` standard normals."""
    if lam < 1 or not 1 <= i <= lam:
        raise ValueError(f"rank {i} out of range for population size {lam}")
    log_coef = special.gammaln(lam + 1) - special.gammaln(i) - special.gammaln(lam - i + 1)
    # split at 0 keeps the integrand smooth on each half for large lam
    lo, _ = integrate.quad(
        _order_stat_integrand, -ORDER_STAT_LIMIT, 0.0, args=(i, lam, log_coef),
        epsabs=1e-11, epsrel=1e-11, limit=200,
    )
    hi, _ = integrate.quad(
        _order_stat_integrand, 0.0, ORDER_STAT_LIMIT, args=(i, lam, log_coef),
        epsabs=1e-11, epsrel=1e-11, limit=200,
    )
    return lo + hi
