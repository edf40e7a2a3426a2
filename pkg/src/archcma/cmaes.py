"""Ranking-based CMA-ES engine (sampling and parameter update).

Random draws come from a :class:`numpy.random.Generator` (PCG64 bit stream,
ziggurat normals), which produces identical streams on every platform for a
given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numerics import NumericalError, sym_eig


@dataclass(frozen=True)
class CmaParameters:
    n: int
    lam: int
    mu: int
    weights: np.ndarray
    mu_w: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi: float


def default_parameters(n: int, lam: int | None = None) -> CmaParameters:
    if n < 2:
        raise ValueError(f"dimension must be at least 2, got {n}")
    if lam is None:
        lam = 4 + int(math.floor(3 * math.log(n)))
    if lam < 2:
        raise ValueError("population size must be at least 2")
    mu = lam // 2
    raw = math.log((lam + 1) / 2) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    weights.setflags(write=False)
    mu_w = 1.0 / float(np.sum(weights**2))
    c_sigma = (mu_w + 2) / (n + mu_w + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_w - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_w / n) / (n + 4 + 2 * mu_w / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_w)
    c_mu = min(1 - c_1, 2 * (mu_w - 2 + 1 / mu_w) / ((n + 2) ** 2 + mu_w))
    chi = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    return CmaParameters(n, lam, mu, weights, mu_w, c_sigma, d_sigma, c_c, c_1, c_mu, chi)


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    gamma_sigma: float = 0.0
    gamma_c: float = 0.0
    t: int = 0

    @classmethod
    def initial(cls, mean, sigma: float, C=None) -> "CmaState":
        mean = np.array(mean, dtype=float)
        n = mean.size
        C = np.eye(n) if C is None else np.array(C, dtype=float)
        if sigma <= 0:
            raise ValueError("step-size must be positive")
        return cls(mean, float(sigma), C, np.zeros(n), np.zeros(n))

    @property
    def n(self) -> int:
        return self.mean.size

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        w, V = sym_eig(self.C)
        if w[0] <= 0.0:
            raise NumericalError(
                f"covariance matrix lost positive definiteness (smallest eigenvalue {w[0]:.3e})"
            )
        return w, V

    @cached_property
    def sqrt_C(self) -> np.ndarray:
        w, V = self.eig
        R = (V * np.sqrt(w)) @ V.T
        return 0.5 * (R + R.T)

    @property
    def Sigma(self) -> np.ndarray:
        return self.sigma**2 * self.C

    def condition_number(self) -> float:
        w, _ = self.eig
        return float(w[-1] / w[0])


@dataclass(frozen=True)
class Population:
    z: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __len__(self) -> int:
        return self.z.shape[0]


def population_from_z(state: CmaState, z: np.ndarray) -> Population:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = z @ state.sqrt_C  # sqrt_C is symmetric: rows are sqrt_C @ z_k
    return Population(z, y, state.mean + state.sigma * y)


def sample(state: CmaState, params: CmaParameters, rng: np.random.Generator) -> Population:
    return population_from_z(state, rng.standard_normal((params.lam, state.n)))


def update(
    state: CmaState, params: CmaParameters, pop: Population, order
) -> CmaState:
    """Move the distribution toward the ``mu`` best candidates in ``order``."""
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(len(pop))):
        raise ValueError("order must be a permutation of the population indices")
    p = params
    sel = order[: p.mu]
    w = p.weights
    dy = w @ pop.y[sel]
    # C^{-1/2} <y>_w equals <z>_w since y_k = C^{1/2} z_k
    dz = w @ pop.z[sel]

    mean = state.mean + state.sigma * dy
    p_sigma = (1 - p.c_sigma) * state.p_sigma + math.sqrt(
        p.c_sigma * (2 - p.c_sigma) * p.mu_w
    ) * dz
    gamma_sigma = (1 - p.c_sigma) ** 2 * state.gamma_sigma + p.c_sigma * (2 - p.c_sigma)
    norm_ps = float(np.linalg.norm(p_sigma))
    h_sigma = 1.0 if norm_ps < (1.4 + 2 / (p.n + 1)) * math.sqrt(gamma_sigma) * p.chi else 0.0
    p_c = (1 - p.c_c) * state.p_c + h_sigma * math.sqrt(p.c_c * (2 - p.c_c) * p.mu_w) * dy
    gamma_c = (1 - p.c_c) ** 2 * state.gamma_c + h_sigma * p.c_c * (2 - p.c_c)

    sigma = state.sigma * math.exp(
        (p.c_sigma / p.d_sigma) * (norm_ps / p.chi - math.sqrt(gamma_sigma))
    )
    C = state.C
    Ysel = pop.y[sel]
    rank_mu = (Ysel.T * w) @ Ysel - C  # sum_i w_i (y y^T - C), weights sum to one
    C_new = C + p.c_1 * (np.outer(p_c, p_c) - gamma_c * C) + p.c_mu * rank_mu
    C_new = 0.5 * (C_new + C_new.T)

    new = CmaState(mean, sigma, C_new, p_sigma, p_c, gamma_sigma, gamma_c, state.t + 1)
    new.eig  # validates positive definiteness eagerly
    return new


def rank_by_values(values) -> np.ndarray:
    """Best-first order of candidates by value, ties broken by index."""
    return np.argsort(np.asarray(values, dtype=float), kind="stable")
