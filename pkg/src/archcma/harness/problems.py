"""Benchmark problems: box-constrained quadratics under linear changes of basis."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..constraints import LinearConstraintSet, box_to_linear, transform

FUNCTIONS = ("sphere", "ellipsoid", "rotellipsoid")
COORDINATES = ("box", "rotbox", "illrotbox")
THETA = math.pi / 6
THETA_BASIS = math.pi / 4
KKT_TOL = 1e-8


def rotation_matrix(n: int, theta: float) -> np.ndarray:
    """Block diagonal matrix of counter-clockwise 2x2 rotations."""
    if n % 2:
        raise ValueError(f"rotation matrix needs an even dimension, got {n}")
    c, s = math.cos(theta), math.sin(theta)
    Q = np.zeros((n, n))
    for i in range(0, n, 2):
        Q[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
    return Q


def ellipsoid_scales(n: int) -> np.ndarray:
    return 10.0 ** (6.0 * np.arange(n) / (n - 1))


def objective_eval(fid: str, x: np.ndarray, theta: float = THETA) -> float:
    x = np.asarray(x, dtype=float)
    if fid == "sphere":
        return float(x @ x)
    if fid == "ellipsoid":
        return float(ellipsoid_scales(x.size) @ (x * x))
    if fid == "rotellipsoid":
        # the transpose places the box optimum at [+0.365, 1, ...]
        u = rotation_matrix(x.size, theta).T @ x
        return float(ellipsoid_scales(x.size) @ (u * u))
    raise ValueError(f"unknown function {fid!r}")


def hessian(fid: str, n: int, theta: float = THETA) -> np.ndarray:
    if fid == "sphere":
        return 2.0 * np.eye(n)
    if fid == "ellipsoid":
        return 2.0 * np.diag(ellipsoid_scales(n))
    if fid == "rotellipsoid":
        Q = rotation_matrix(n, theta)
        return Q @ (2.0 * np.diag(ellipsoid_scales(n))) @ Q.T
    raise ValueError(f"unknown function {fid!r}")


def basis_matrix(coords: str, n: int) -> np.ndarray:
    if coords == "box":
        return np.eye(n)
    Q = rotation_matrix(n, THETA_BASIS)
    if coords == "rotbox":
        return Q
    if coords == "illrotbox":
        D = np.diag(np.tile([1.0, 10.0], n // 2))
        return Q.T @ D @ Q
    raise ValueError(f"unknown coordinate system {coords!r}")


def default_bounds(n: int) -> tuple[np.ndarray, np.ndarray]:
    lb = np.tile([-1.0, 1.0], n // 2)
    return lb, lb + 5.0


def _kkt_check(H, x, lb, ub, tol=KKT_TOL) -> bool:
    grad = H @ x
    scale = 1.0 + np.max(np.abs(grad))
    at_lb = np.isclose(x, lb, rtol=0, atol=1e-12)
    at_ub = np.isclose(x, ub, rtol=0, atol=1e-12)
    free = ~(at_lb | at_ub)
    return bool(
        np.all(x >= lb - 1e-12)
        and np.all(x <= ub + 1e-12)
        and np.all(np.abs(grad[free]) <= tol * scale)
        and np.all(grad[at_lb] >= -tol * scale)  # multiplier of -x <= -lb
        and np.all(grad[at_ub] <= tol * scale)
    )


def _solve_face(H, lb, ub, fixed: dict[int, float]) -> np.ndarray:
    n = H.shape[0]
    x = np.zeros(n)
    idx_fixed = np.array(sorted(fixed), dtype=int)
    for i in idx_fixed:
        x[i] = fixed[i]
    free = np.setdiff1d(np.arange(n), idx_fixed)
    if free.size:
        # grad_free = H_ff x_f + H_fF x_F = 0
        rhs = -H[np.ix_(free, idx_fixed)] @ x[idx_fixed] if idx_fixed.size else np.zeros(free.size)
        x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
    return x


def kkt_optimum_box(H: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Minimizer of ``x^T H x / 2`` on the box with even (1-based) coordinates at ``lb``."""
    n = H.shape[0]
    x = _solve_face(H, lb, ub, {i: lb[i] for i in range(1, n, 2)})
    if not _kkt_check(H, x, lb, ub):
        raise ArithmeticError("KKT conditions fail for the assumed active set")
    return x


def enumerate_box_optimum(H: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Brute-force search over all faces of the box; small ``n`` only."""
    n = H.shape[0]
    best, best_val = None, math.inf
    for choice in itertools.product((None, "lb", "ub"), repeat=n):
        fixed = {i: (lb[i] if c == "lb" else ub[i]) for i, c in enumerate(choice) if c}
        x = _solve_face(H, lb, ub, fixed)
        if np.all(x >= lb - 1e-12) and np.all(x <= ub + 1e-12):
            val = 0.5 * x @ H @ x
            if val < best_val - 1e-14:
                best, best_val = x, val
    return best


class CenteredQuadratic:
    """``f(y) - f(y*)`` for a quadratic ``f(y) = y^T H y / 2``.

    Evaluated as ``d^T (H d / 2 + H y*)`` with ``d = y - y*`` so that values
    near the optimum keep full relative precision; a constant shift of the
    objective leaves every ranking unchanged.
    """

    def __init__(self, H: np.ndarray, y_star: np.ndarray):
        self.H = H
        self.y_star = y_star
        self.grad_star = H @ y_star

    def __call__(self, y: np.ndarray) -> float:
        d = np.asarray(y, dtype=float) - self.y_star
        return float(d @ (0.5 * (self.H @ d) + self.grad_star))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    n: int
    function: str
    coords: str
    P: np.ndarray
    g: LinearConstraintSet
    H: np.ndarray
    x_star: np.ndarray
    mean0: np.ndarray
    sigma0: float
    C0: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    objective: Callable[[np.ndarray], float]

    @property
    def name(self) -> str:
        return f"{self.function}{self.n}_{self.coords}"

    def to_box(self, y: np.ndarray) -> np.ndarray:
        return y @ self.P.T


def kkt_optimum(problem: ProblemInstance) -> np.ndarray:
    """Constrained optimum in the problem's working coordinates."""
    H_box = hessian(problem.function, problem.n)
    x = kkt_optimum_box(H_box, problem.lb, problem.ub)
    return np.linalg.solve(problem.P, x)


def make_problem(function: str, n: int, coords: str, trial_seed: int) -> ProblemInstance:
    if function not in FUNCTIONS:
        raise ValueError(f"unknown function {function!r}")
    if coords not in COORDINATES:
        raise ValueError(f"unknown coordinate system {coords!r}")
    if n < 2 or n % 2:
        raise ValueError(f"dimension must be even and at least 2, got {n}")
    lb, ub = default_bounds(n)
    g_box = box_to_linear(lb, ub)
    H_box = hessian(function, n)
    x_box = kkt_optimum_box(H_box, lb, ub)

    rng = np.random.default_rng([trial_seed, 0])
    m_box = (ub + lb) / 2 + rng.uniform(-1.0, 1.0, n)

    P = basis_matrix(coords, n)
    P_inv = np.linalg.inv(P)
    H = P.T @ H_box @ P
    x_star = P_inv @ x_box
    return ProblemInstance(
        n=n,
        function=function,
        coords=coords,
        P=P,
        g=transform(g_box, P),
        H=H,
        x_star=x_star,
        mean0=P_inv @ m_box,
        sigma0=float((ub - lb)[0] / 4),
        C0=P_inv @ P_inv.T,
        lb=lb,
        ub=ub,
        objective=CenteredQuadratic(H, x_star),
    )


def d_crit(m: np.ndarray, x_star: np.ndarray, H: np.ndarray) -> float:
    d = np.asarray(m, dtype=float) - x_star
    return float(d @ H @ d)


def r_feas(m: np.ndarray, problem: ProblemInstance) -> float:
    x = problem.P @ np.asarray(m, dtype=float)
    return float(np.mean((problem.lb <= x) & (x <= problem.ub)))
