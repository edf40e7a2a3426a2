"""Adaptive ranking constraint handling for CMA-ES.

Candidates are ranked by ``Rf + alpha * Rg`` where ``Rf`` ranks objective
values at the repaired points and ``Rg`` ranks the Mahalanobis distances from
each candidate to its repaired point. ``alpha`` is adapted so that the
normalized distance of the mean to its repaired point stays near one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import cmaes
from .cmaes import CmaParameters, CmaState, Population
from .constraints import LinearConstraintSet
from .numerics import normal_order_statistic_mean
from .repair import Metric, RepairConfig, RepairOutcome, RepairState, repair, update_epsilon


@dataclass(frozen=True)
class ArchState:
    alpha: float
    d_m_prev: float
    sigma_hat: float
    repair_state: RepairState = RepairState()

    @classmethod
    def initial(cls, params: CmaParameters, config: RepairConfig = RepairConfig()) -> "ArchState":
        return cls(1.0, 0.0, sigma_hat(params.n, params), RepairState(config.eps_min))


@dataclass(frozen=True)
class RankedPopulation:
    Rf: np.ndarray
    Rg: np.ndarray
    RT: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class IterationLog:
    t: int
    evaluations: int
    alpha: float
    d_m: float
    eps: float
    c_act: int
    unsuccessful: int


def _tie_ranks(less: np.ndarray, equal: np.ndarray) -> np.ndarray:
    # less[k, l]: candidate l strictly better than k
    return less.sum(axis=1) + 0.5 * (equal.sum(axis=1) - 1)


def f_ranking(values: Sequence[float], infeasible: Sequence[bool] | None = None) -> np.ndarray:
    """Number of better candidates plus half the number of other tied ones.

    Entries flagged ``infeasible`` carry no value: they are worse than every
    unflagged entry and tie with each other.
    """
    v = np.asarray(values, dtype=float)
    flag = np.zeros(v.shape, dtype=bool) if infeasible is None else np.asarray(infeasible, dtype=bool)
    v = np.where(flag, 0.0, v)
    fk, fl = flag[:, None], flag[None, :]
    vk, vl = v[:, None], v[None, :]
    less = (~fl & fk) | ((fl == fk) & ~fk & (vl < vk))
    equal = (fl & fk) | (~fl & ~fk & (vl == vk))
    return _tie_ranks(less, equal)


def g_ranking(distances: Sequence[float]) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    return _tie_ranks(d[None, :] < d[:, None], d[None, :] == d[:, None])


def total_ranking(Rf: np.ndarray, Rg: np.ndarray, alpha: float) -> RankedPopulation:
    Rf = np.asarray(Rf, dtype=float)
    Rg = np.asarray(Rg, dtype=float)
    RT = Rf + alpha * Rg
    order = np.lexsort((np.arange(RT.size), Rf, RT))
    return RankedPopulation(Rf, Rg, RT, order)


def weighted_order_statistic(params: CmaParameters) -> float:
    """``c = -sum_i w_i E[N_{i:lam}]``, positive for the default weights."""
    return -sum(
        w * normal_order_statistic_mean(i, params.lam) for i, w in enumerate(params.weights, 1)
    )


def sigma_hat(n: int, params: CmaParameters) -> float:
    """Approximate optimal normalized step-size of weighted recombination."""
    if n < 2:
        raise ValueError("dimension must be at least 2")
    c = weighted_order_statistic(params)
    mu_w = params.mu_w
    return c * n * mu_w / (n - 1 + c * c * mu_w)


def normalized_distance(dist_sq: float, sigma_hat: float, n: int, c_act: int) -> float:
    return dist_sq * sigma_hat**2 / (n * (n / 2 + c_act))


def compute_dm(
    mean: np.ndarray,
    g: LinearConstraintSet,
    Sigma,
    sigma_hat: float,
    n: int,
    repair_state: RepairState = RepairState(),
    config: RepairConfig = RepairConfig(),
) -> tuple[float, int, np.ndarray, RepairOutcome]:
    out = repair(mean, g, Sigma, repair_state, config)
    c_act = len(out.active_at_repair)
    return normalized_distance(out.g_sigma, sigma_hat, n, c_act), c_act, out.x_feas, out


def update_alpha(state: ArchState, d_m_new: float, n: int, lam: int) -> ArchState:
    s = float(np.sign(d_m_new - 1.0))
    alpha = state.alpha
    if d_m_new == 0.0 or s == np.sign(d_m_new - state.d_m_prev):
        alpha *= math.exp(s / n)
    alpha = min(max(alpha, 1.0 / lam), float(lam))
    return replace(state, alpha=alpha, d_m_prev=d_m_new)


def arch_generation(
    cma: CmaState,
    params: CmaParameters,
    g: LinearConstraintSet,
    arch: ArchState,
    f: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    config: RepairConfig = RepairConfig(),
    evaluations: int = 0,
    population: Population | None = None,
) -> tuple[CmaState, ArchState, IterationLog]:
    """One iteration of CMA-ES with adaptive ranking constraint handling."""
    n, lam = params.n, params.lam
    metric = Metric(cma.Sigma)
    pop = cmaes.sample(cma, params, rng) if population is None else population

    outcomes = [repair(x, g, metric, arch.repair_state, config) for x in pop.x]
    ok = np.array([o.success for o in outcomes])
    fvals = np.zeros(lam)
    for k, o in enumerate(outcomes):
        if o.success:
            fvals[k] = f(o.x_feas)
    evaluations += int(ok.sum())

    d_m, c_act, _, mean_out = compute_dm(
        cma.mean, g, metric, arch.sigma_hat, n, arch.repair_state, config
    )
    arch = update_alpha(arch, d_m, n, lam)

    ranked = total_ranking(
        f_ranking(fvals, ~ok), g_ranking([o.g_sigma for o in outcomes]), arch.alpha
    )
    cma = cmaes.update(cma, params, pop, ranked.order)

    unsuccessful = int((~ok).sum()) + (0 if mean_out.success else 1)
    eps = arch.repair_state.eps
    arch = replace(arch, repair_state=update_epsilon(arch.repair_state, unsuccessful, lam, config))
    log = IterationLog(cma.t, evaluations, arch.alpha, d_m, eps, c_act, unsuccessful)
    return cma, arch, log
