"""Trial runner and CSV log emission."""

from __future__ import annotations

import csv
import logging
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .. import cmaes
from ..arch import ArchState, arch_generation
from ..baselines import APBCH_LABEL, ApBchState, ResamplingConfig, apbch_generation, resampling_generation
from ..cmaes import CmaState
from ..repair import RepairConfig
from .problems import ProblemInstance, d_crit, r_feas

log = logging.getLogger(__name__)

HANDLERS = ("arch", "resampling", "apbch", "none")
DEFAULT_MAX_ITERATIONS = 20_000
DEFAULT_TARGET = 1e-10


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RunLogRecord:
    t: int
    evals: int
    d_crit: float
    sigma: float
    eig_min: float
    eig_max: float
    alpha: float | None = None
    d_m: float | None = None
    eps: float | None = None
    r_feas: float | None = None
    c_act: int | None = None


CSV_HEADER = [f.name for f in fields(RunLogRecord)]


def handler_label(cht: str) -> str:
    return APBCH_LABEL if cht == "apbch" else cht


def validate(problem: ProblemInstance, cht: str) -> None:
    if cht not in HANDLERS:
        raise ConfigurationError(f"unknown constraint handler {cht!r}")
    if cht == "apbch" and problem.coords != "box":
        raise ConfigurationError("apbch handles box constraints only; use --coords box")


def _unconstrained_objective(problem: ProblemInstance):
    # shifted so the unconstrained minimizer coincides with the constrained optimum
    H, x_star = problem.H, problem.x_star

    def f(y):
        d = y - x_star
        return float(0.5 * d @ H @ d)

    return f


def run_trial(
    problem: ProblemInstance,
    cht: str,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    target_d_crit: float = DEFAULT_TARGET,
    seed: int = 0,
    repair_config: RepairConfig = RepairConfig(),
    resampling: ResamplingConfig = ResamplingConfig(),
) -> list[RunLogRecord]:
    """Run one optimization trial and return one record per iteration."""
    validate(problem, cht)
    rng = np.random.default_rng([seed, 1])
    params = cmaes.default_parameters(problem.n)
    cma = CmaState.initial(problem.mean0, problem.sigma0, problem.C0)
    arch = ArchState.initial(params, repair_config) if cht == "arch" else None
    apbch = ApBchState() if cht == "apbch" else None
    f = _unconstrained_objective(problem) if cht == "none" else problem.objective

    records: list[RunLogRecord] = []
    evals = 0
    for _ in range(max_iterations):
        extra = {}
        if cht == "arch":
            cma, arch, it = arch_generation(
                cma, params, problem.g, arch, f, rng, repair_config, evals
            )
            evals = it.evaluations
            extra = dict(alpha=it.alpha, d_m=it.d_m, eps=it.eps, c_act=it.c_act)
        elif cht == "resampling":
            cma, n_eval, _ = resampling_generation(cma, params, problem.g, f, rng, resampling)
            evals += n_eval
        elif cht == "apbch":
            cma, apbch, _ = apbch_generation(cma, params, problem.lb, problem.ub, apbch, f, rng)
            evals += params.lam
        else:
            pop = cmaes.sample(cma, params, rng)
            values = [f(x) for x in pop.x]
            cma = cmaes.update(cma, params, pop, cmaes.rank_by_values(values))
            evals += params.lam
        w, _ = cma.eig
        rec = RunLogRecord(
            t=cma.t,
            evals=evals,
            d_crit=d_crit(cma.mean, problem.x_star, problem.H),
            sigma=cma.sigma,
            eig_min=float(np.sqrt(w[0])),
            eig_max=float(np.sqrt(w[-1])),
            r_feas=None if cht == "none" else r_feas(cma.mean, problem),
            **extra,
        )
        records.append(rec)
        if rec.d_crit <= target_d_crit:
            break
    return records


def trial_filename(problem: ProblemInstance, cht: str, seed: int) -> str:
    return f"{problem.function}{problem.n}_{problem.coords}_{cht}_seed{seed}.csv"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_log(path: str | Path, records: Iterable[RunLogRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow([_fmt(v) for v in astuple(rec)])


def read_log(path: str | Path) -> list[RunLogRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            vals = []
            for f, cell in zip(fields(RunLogRecord), row):
                if cell == "":
                    vals.append(None)
                elif f.name in ("t", "evals", "c_act"):
                    vals.append(int(cell))
                else:
                    vals.append(float(cell))
            out.append(RunLogRecord(*vals))
    return out
