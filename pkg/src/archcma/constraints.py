"""Linear inequality constraint systems ``A x - b <= 0``."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LSTSQ_RTOL = 1e-10


def default_active_tol(b: np.ndarray) -> float:
    return 1e-9 * (1.0 + (np.max(np.abs(b)) if b.size else 0.0))


@dataclass(frozen=True)
class FeasibilityReport:
    violations: np.ndarray
    violated: tuple[int, ...]
    active: tuple[int, ...]

    @property
    def feasible(self) -> bool:
        return not self.violated


@dataclass(frozen=True, eq=False)
class LinearConstraintSet:
    """``m`` constraints ``A[j] @ x <= b[j]`` in ``n`` variables."""

    A: np.ndarray
    b: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2:
            raise ValueError("A must be a matrix")
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("constraint data must be finite")
        if A.shape[0] and np.any(np.all(A == 0.0, axis=1)):
            raise ValueError("constraint normals must be non-zero")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", A.shape[1])

    @classmethod
    def empty(cls, n: int) -> "LinearConstraintSet":
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Constraint values ``g(x)``; accepts a point or a stack of points."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected dimension {self.n}, got {x.shape[-1]}")
        return x @ self.A.T - self.b

    def is_feasible(self, x: np.ndarray) -> bool:
        return bool(np.all(self(x) <= 0.0))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(dumps(self))

    @classmethod
    def load(cls, path: str | Path) -> "LinearConstraintSet":
        return loads(Path(path).read_text())


def evaluate(g: LinearConstraintSet, x: np.ndarray, tol: float | None = None) -> FeasibilityReport:
    viol = g(x)
    if viol.ndim != 1:
        raise ValueError("evaluate expects a single point")
    if tol is None:
        tol = default_active_tol(g.b)
    return FeasibilityReport(
        violations=viol,
        violated=tuple(int(j) for j in np.flatnonzero(viol > 0.0)),
        active=tuple(int(j) for j in np.flatnonzero(np.abs(viol) <= tol)),
    )


def box_to_linear(lb: Sequence[float], ub: Sequence[float]) -> LinearConstraintSet:
    lb = np.asarray(lb, dtype=float).reshape(-1)
    ub = np.asarray(ub, dtype=float).reshape(-1)
    if lb.shape != ub.shape:
        raise ValueError("lb and ub must have the same length")
    if np.any(lb > ub):
        bad = int(np.flatnonzero(lb > ub)[0])
        raise ValueError(f"lower bound exceeds upper bound at coordinate {bad}")
    eye = np.eye(lb.size)
    return LinearConstraintSet(np.vstack([-eye, eye]), np.concatenate([-lb, ub]))


def transform(g: LinearConstraintSet, P: np.ndarray) -> LinearConstraintSet:
    """Constraints in coordinates ``y`` where the original point is ``P @ y``."""
    P = np.asarray(P, dtype=float)
    if P.shape != (g.n, g.n):
        raise ValueError(f"expected a {g.n}x{g.n} matrix, got {P.shape}")
    if np.linalg.matrix_rank(P) < g.n:
        raise ValueError("basis-change matrix is singular")
    return LinearConstraintSet(g.A @ P, g.b.copy())


def intersection_nonempty(g: LinearConstraintSet, J: Iterable[int]) -> bool:
    """Whether the boundaries ``A_J y = b_J`` share a common point."""
    J = list(J)
    if len(J) <= 1:
        return True
    AJ, bJ = g.A[J], g.b[J]
    y, *_ = np.linalg.lstsq(AJ, bJ, rcond=None)
    return bool(np.linalg.norm(AJ @ y - bJ) <= LSTSQ_RTOL * (1.0 + np.linalg.norm(bJ)))


def dumps(g: LinearConstraintSet) -> str:
    lines = [f"{g.m} {g.n}"]
    for row, bj in zip(g.A, g.b):
        lines.append(" ".join(repr(float(v)) for v in (*row, bj)))
    return "\n".join(lines) + "\n"


def loads(text: str) -> LinearConstraintSet:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError("first line must be 'm n'")
    m, n = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m or any(len(r) != n + 1 for r in body):
        raise ValueError(f"expected {m} lines of {n + 1} numbers")
    data = np.array(body, dtype=float).reshape(m, n + 1)
    return LinearConstraintSet(data[:, :n], data[:, n])
