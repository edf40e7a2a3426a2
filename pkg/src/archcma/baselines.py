"""Baseline constraint handlers: resampling and an adaptive box penalty.

The adaptive penalty follows the penalized-fitness form of AP-BCH, but its
coefficient adaptation is a simplified stand-in for the published rule and is
labelled ``apbch-approx`` wherever it is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cmaes
from .cmaes import CmaParameters, CmaState, Population
from .constraints import LinearConstraintSet

APBCH_LABEL = "apbch-approx"


@dataclass(frozen=True)
class ResamplingConfig:
    max_resamples: int = 500

    def __post_init__(self):
        if self.max_resamples < 1:
            raise ValueError("max_resamples must be at least 1")


@dataclass(frozen=True)
class Resampled:
    z: np.ndarray
    feasible: bool
    draws: int


def resample_candidate(
    cma: CmaState,
    g: LinearConstraintSet,
    cfg: ResamplingConfig,
    rng: np.random.Generator,
) -> Resampled:
    """Draw until a feasible candidate appears or ``max_resamples`` are spent.

    Draws are generated in growing blocks so the generator may advance past
    the accepted draw; ``draws`` counts candidates up to and including the
    accepted (or last rejected) one. A rejection carries the last draw.
    """
    n = cma.n
    spent = 0
    block = 4
    while spent < cfg.max_resamples:
        k = min(block, cfg.max_resamples - spent)
        z = rng.standard_normal((k, n))
        x = cma.mean + cma.sigma * (z @ cma.sqrt_C)
        ok = np.all(g(x) <= 0.0, axis=1) if g.m else np.ones(k, dtype=bool)
        if ok.any():
            i = int(np.argmax(ok))
            return Resampled(z[i], True, spent + i + 1)
        spent += k
        block *= 2
    return Resampled(z[-1], False, spent)


def resampling_generation(
    cma: CmaState,
    params: CmaParameters,
    g: LinearConstraintSet,
    f: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    cfg: ResamplingConfig = ResamplingConfig(),
) -> tuple[CmaState, int, int]:
    """One CMA-ES iteration with resampling; returns ``(state, evals, draws)``."""
    draws = [resample_candidate(cma, g, cfg, rng) for _ in range(params.lam)]
    pop = cmaes.population_from_z(cma, np.array([d.z for d in draws]))
    values = np.full(params.lam, math.inf)
    for k, d in enumerate(draws):
        if d.feasible:
            values[k] = f(pop.x[k])
    order = cmaes.rank_by_values(values)
    evals = sum(d.feasible for d in draws)
    return cmaes.update(cma, params, pop, order), evals, sum(d.draws for d in draws)


@dataclass
class ApBchState:
    gamma: np.ndarray | None = None
    dispersions: list[float] = field(default_factory=list)


def clamp(x: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Euclidean-nearest point of the box ``[lb, ub]``."""
    return np.minimum(np.maximum(x, lb), ub)


def apbch_fitness(x, lb, ub, state: ApBchState, f: Callable[[np.ndarray], float]) -> float:
    x = np.asarray(x, dtype=float)
    xf = clamp(x, lb, ub)
    fx = f(xf)
    if state.gamma is None:
        return fx
    return fx + float(state.gamma @ (x - xf) ** 2) / x.size


def _iqr(values: np.ndarray) -> float:
    q75, q25 = np.percentile(values, [75, 25])
    return float(q75 - q25)


def apbch_generation(
    cma: CmaState,
    params: CmaParameters,
    lb: np.ndarray,
    ub: np.ndarray,
    state: ApBchState,
    f: Callable[[np.ndarray], float],
    rng: np.random.Generator,
) -> tuple[CmaState, ApBchState, Population]:
    pop = cmaes.sample(cma, params, rng)
    xf = clamp(pop.x, lb, ub)
    fvals = np.array([f(x) for x in xf])
    spread = _iqr(fvals)
    state.dispersions.append(spread)
    del state.dispersions[:-20]
    if state.gamma is None:
        # unit dispersion when the first population is degenerate
        state.gamma = (spread if spread > 0 else 1.0) / (cma.sigma**2 * np.diag(cma.C))
    penalty = ((pop.x - xf) ** 2) @ state.gamma / params.n
    order = cmaes.rank_by_values(fvals + penalty)
    new = cmaes.update(cma, params, pop, order)
    outside = (new.mean < lb) | (new.mean > ub)
    state.gamma = np.where(outside, state.gamma * 1.1 ** (1.0 / params.n), state.gamma)
    return new, state, pop
