"""Nearest-feasible-point repair in the metric of the search distribution.

A candidate ``x`` violating the constraints in ``J`` is mapped to the point
minimizing ``(x - y)^T Sigma^{-1} (x - y)``, first on the intersection of the
violated boundaries (inside the feasible set), then over the whole feasible
set. All right-hand sides are tightened by a margin ``eps`` so that rounding
errors still leave the repaired point feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from .constraints import LinearConstraintSet, intersection_nonempty
from .numerics import NumericalError

EPS_MIN = 1e-13
EPS_MAX = 1e-4
PINV_RTOL = 1e-12


class InfeasibleProblem(ValueError):
    """The constraint system of a projection problem has no solution."""


class QPIterationLimit(NumericalError):
    def __init__(self, message: str, best: np.ndarray):
        super().__init__(message)
        self.best = best


class Metric:
    """Covariance ``Sigma`` with a cached Cholesky factor for ``Sigma^{-1}`` products."""

    def __init__(self, Sigma: np.ndarray):
        self.Sigma = np.asarray(Sigma, dtype=float)
        try:
            self._L = np.linalg.cholesky(self.Sigma)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("metric is not positive definite") from exc
        self._L_inv = linalg.solve_triangular(self._L, np.eye(len(self._L)), lower=True)

    @classmethod
    def coerce(cls, S) -> "Metric":
        return S if isinstance(S, Metric) else cls(S)

    def whiten(self, d: np.ndarray) -> np.ndarray:
        return self._L_inv @ d

    def inverse_apply(self, d: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self._L, True), d, check_finite=False)

    def dist_sq(self, x: np.ndarray, y: np.ndarray) -> float:
        u = self.whiten(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return float(u @ u)


@dataclass(frozen=True)
class RepairConfig:
    eps_min: float = EPS_MIN
    eps_max: float = EPS_MAX
    qp_iteration_cap: int | None = None  # default 50 * m
    feasibility_rtol: float = 1e-11
    active_rtol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.eps_min <= self.eps_max:
            raise ValueError("need 0 < eps_min <= eps_max")


@dataclass(frozen=True)
class RepairState:
    eps: float = EPS_MIN


@dataclass(frozen=True)
class RepairOutcome:
    x: np.ndarray
    x_feas: np.ndarray
    success: bool
    g_sigma: float
    active_at_repair: tuple[int, ...]
    violated: tuple[int, ...] = ()
    stage: str = "feasible"


@dataclass
class QPResult:
    y: np.ndarray
    multipliers: np.ndarray  # one per constraint row, zero off the working set
    iterations: int
    stationarity: float = 0.0
    complementarity: float = 0.0
    primal_violation: float = 0.0
    min_multiplier: float = 0.0
    working_set: list[int] = field(default_factory=list)


def _bscale(g: LinearConstraintSet) -> float:
    return 1.0 + (float(np.max(np.abs(g.b))) if g.m else 0.0)


def _project_rank(x, A_W, b_W, Sigma) -> tuple[np.ndarray, np.ndarray, bool]:
    """Metric projection of ``x`` onto ``{A_W y = b_W}``, multipliers, full-rank flag."""
    if A_W.shape[0] == 0:
        return x.copy(), np.zeros(0), True
    SAt = Sigma @ A_W.T
    G = A_W @ SAt
    r = A_W @ x - b_W
    try:
        L = np.linalg.cholesky(G)
        d = np.diag(L)
        if d.min() ** 2 <= PINV_RTOL * np.max(np.diag(G)):
            raise np.linalg.LinAlgError
        mu = linalg.cho_solve((L, True), r, check_finite=False)
        y = x - SAt @ mu
        # one refinement step puts y on the hyperplanes to working precision
        dmu = linalg.cho_solve((L, True), A_W @ y - b_W, check_finite=False)
        return y - SAt @ dmu, mu + dmu, True
    except np.linalg.LinAlgError:
        mu = np.linalg.pinv(G, rcond=PINV_RTOL, hermitian=True) @ r
        return x - SAt @ mu, mu, False


def _project(x, A_W, b_W, Sigma) -> tuple[np.ndarray, np.ndarray]:
    y, mu, _ = _project_rank(x, A_W, b_W, Sigma)
    return y, mu


def project_to_intersection(
    x: np.ndarray,
    g: LinearConstraintSet,
    J: Sequence[int],
    Sigma,
    shift: float = 0.0,
) -> np.ndarray:
    """Closest point to ``x`` (in ``Sigma^{-1}``) with ``A_J y = b_J - shift``."""
    J = list(J)
    S = Metric.coerce(Sigma).Sigma
    y, _ = _project(np.asarray(x, dtype=float), g.A[J], g.b[J] - shift, S)
    return y


def _phase_one(A_E, b_E, A_I, b_I, n: int) -> np.ndarray:
    """A point satisfying the equalities with maximal uniform slack on the inequalities."""
    norms = np.linalg.norm(A_I, axis=1) if A_I.shape[0] else np.zeros(0)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A_I, norms[:, None]]) if A_I.shape[0] else None
    A_eq = np.hstack([A_E, np.zeros((A_E.shape[0], 1))]) if A_E.shape[0] else None
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = optimize.linprog(
        c, A_ub=A_ub, b_ub=b_I if A_ub is not None else None,
        A_eq=A_eq, b_eq=b_E if A_eq is not None else None,
        bounds=bounds, method="highs",
    )
    if res.status == 2 or (res.status == 0 and res.x[-1] < -1e-9 * (1.0 + np.max(np.abs(b_I), initial=0.0))):
        raise InfeasibleProblem("constraint system is infeasible")
    if res.status != 0:
        raise NumericalError(f"phase-one linear program failed: {res.message}")
    return res.x[:n]


def _active_set(A, r, S, E, I, max_iter):
    """Primal active-set for ``min v^T S^{-1} v / 2`` with ``A_E v = r_E, A_I v <= r_I``.

    Returns ``(working rows, v, multipliers, iterations)``; ``iterations`` is
    negative when the cap was hit (``v`` is then the last iterate).
    """
    n = A.shape[1]
    zero = np.zeros(n)
    v, mu = _project(zero, A[E], r[E], S)
    working: list[int] = []
    if not I or np.all(A[I] @ v - r[I] <= 1e-12 * (1.0 + np.max(np.abs(r[E]), initial=0.0))):
        return E, v, mu, 0
    v = _phase_one(A[E], r[E], A[I], r[I], n)
    if E:
        v, _ = _project(v, A[E], r[E], S)
    I_arr = np.array(I)
    for iterations in range(1, max_iter + 1):
        W = E + working
        v_star, mu = _project(zero, A[W], r[W], S)
        p = v_star - v
        if np.linalg.norm(p) <= 1e-13 * (1.0 + np.linalg.norm(v_star)):
            mu_I = mu[len(E):]
            if mu_I.size == 0 or mu_I.min() >= -1e-12 * (1.0 + np.max(np.abs(mu))):
                return W, v_star, mu, iterations
            working.pop(int(np.argmin(mu_I)))
            continue
        rest = np.setdiff1d(I_arr, working, assume_unique=True)
        step, block = 1.0, None
        if rest.size:
            Ap = A[rest] @ p
            moving = Ap > 0.0
            if np.any(moving):
                slack = r[rest[moving]] - A[rest[moving]] @ v
                ratios = np.maximum(slack, 0.0) / Ap[moving]
                k = int(np.argmin(ratios))
                if ratios[k] < 1.0:
                    step, block = float(ratios[k]), int(rest[moving][k])
        v = v + step * p
        if block is not None:
            working.append(block)
    return E + working, v, mu, -max_iter


def solve_metric_qp(
    x: np.ndarray,
    g: LinearConstraintSet,
    Sigma,
    equality_rows: Sequence[int],
    inequality_rows: Sequence[int],
    shift: float = 0.0,
    max_iter: int | None = None,
) -> QPResult:
    """Minimize ``||x - y||^2`` in the ``Sigma^{-1}`` metric over a polyhedron.

    Constraints are ``A_E y = b_E - shift`` and ``A_I y <= b_I - shift``.
    Primal active-set method: the projection onto the equality rows is tried
    first; if it violates an inequality, a strictly feasible start is found by
    a phase-one LP and the working set is grown/shrunk from there.
    """
    x = np.asarray(x, dtype=float)
    metric = Metric.coerce(Sigma)
    E = list(equality_rows)
    I = list(inequality_rows)
    A = g.A
    if max_iter is None:
        max_iter = 50 * max(g.m, 1)

    # solve for the displacement v = y - x, scaled by the size of the violation
    # so tolerances are relative to the step, not to |x|
    r = (g.b - shift) - A @ x
    viol = np.concatenate([np.abs(r[E]), np.maximum(-r[I], 0.0)])
    r_scale = float(np.max(viol, initial=0.0))
    if r_scale == 0.0:
        W, v, mu_W, iterations = E, np.zeros(g.n), np.zeros(len(E)), 0
    else:
        s_scale = float(np.max(np.diag(metric.Sigma)))
        W, v, mu_W, iterations = _active_set(
            A, r / r_scale, metric.Sigma / s_scale, E, I, max_iter
        )
        v = v * r_scale
        mu_W = mu_W * (r_scale / s_scale)
        if iterations < 0:
            raise QPIterationLimit(f"active-set QP exceeded {max_iter} iterations", x + v)
    y = x + v

    lam = np.zeros(g.m)
    if W:
        np.add.at(lam, W, mu_W)
    res = QPResult(y=y, multipliers=lam, iterations=iterations, working_set=list(W))
    _fill_kkt(res, v, r, A, metric, E, I)
    return res


def _fill_kkt(res: QPResult, v, r, A, metric: Metric, E, I) -> None:
    """KKT residuals from the displacement ``v = y - x`` and ``r = b - shift - A x``."""
    grad = metric.inverse_apply(v)
    At_lam = A.T @ res.multipliers
    scale = np.linalg.norm(grad) + np.linalg.norm(At_lam) + np.finfo(float).tiny
    res.stationarity = float(np.linalg.norm(grad + At_lam) / scale)
    slack = A @ v - r
    r_scale = float(np.max(np.abs(r), initial=0.0)) + np.finfo(float).tiny
    lam_scale = float(np.max(np.abs(res.multipliers), initial=0.0)) + np.finfo(float).tiny
    res.complementarity = float(
        np.max(np.abs(res.multipliers[I] * slack[I]), initial=0.0) / (lam_scale * r_scale)
    )
    viol = np.concatenate([np.abs(slack[E]), np.maximum(slack[I], 0.0)])
    res.primal_violation = float(np.max(viol, initial=0.0))
    res.min_multiplier = float(np.min(res.multipliers[I], initial=0.0) / lam_scale)


def _outcome(x, y, g, metric, eps, cfg: RepairConfig, violated, stage) -> RepairOutcome:
    gy = g(y)
    active_tol = cfg.active_rtol * _bscale(g)
    active = tuple(int(j) for j in np.flatnonzero(gy >= -(eps + active_tol)))
    return RepairOutcome(
        x=x,
        x_feas=y,
        success=bool(np.all(gy <= 0.0)),
        g_sigma=metric.dist_sq(x, y),
        active_at_repair=active,
        violated=violated,
        stage=stage,
    )


def repair(
    x: np.ndarray,
    g: LinearConstraintSet,
    Sigma,
    state: RepairState = RepairState(),
    config: RepairConfig = RepairConfig(),
) -> RepairOutcome:
    x = np.asarray(x, dtype=float)
    metric = Metric.coerce(Sigma)
    gx = g(x)
    if np.all(gx <= 0.0):
        tol = config.active_rtol * _bscale(g)
        active = tuple(int(j) for j in np.flatnonzero(np.abs(gx) <= tol))
        return RepairOutcome(x, x, True, 0.0, active)

    eps = state.eps
    J = [int(j) for j in np.flatnonzero(gx > 0.0)]
    others = [j for j in range(g.m) if gx[j] <= 0.0]
    feas_tol = config.feasibility_rtol * _bscale(g)
    cap = config.qp_iteration_cap

    y, _, full_rank = _project_rank(x, g.A[J], g.b[J] - eps, metric.Sigma)
    # independent boundary normals always intersect
    if full_rank or intersection_nonempty(g, J):
        stage = "projection"
        if np.any(g(y) > feas_tol):
            try:
                y = solve_metric_qp(x, g, metric, J, others, eps, cap).y
                stage = "intersection"
            except (InfeasibleProblem, QPIterationLimit):
                y = None
        if y is not None:
            out = _outcome(x, y, g, metric, eps, config, tuple(J), stage)
            if out.success:
                return out
    try:
        y = solve_metric_qp(x, g, metric, [], range(g.m), eps, cap).y
    except InfeasibleProblem as exc:
        raise InfeasibleProblem("feasible set is empty; repair impossible") from exc
    except QPIterationLimit as exc:
        # reported as an unsuccessful repair unless the last iterate happens to be feasible
        y = exc.best
    return _outcome(x, y, g, metric, eps, config, tuple(J), "nearest")


def update_epsilon(
    state: RepairState, unsuccessful_count: int, lam: int, config: RepairConfig = RepairConfig()
) -> RepairState:
    factor = 0.5 if unsuccessful_count <= math.ceil(0.1 * lam) else 10.0
    eps = min(max(state.eps * factor, config.eps_min), config.eps_max)
    return RepairState(eps)
