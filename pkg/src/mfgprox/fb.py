"""Generic forward-backward iteration engine.

Minimizes a smooth convex term plus a prox-friendly convex term by
alternating a gradient step and a proximal step at a fixed step size.
Points are flat float arrays; the problem enters only through a gradient
callable and a prox callable, so the engine is reusable across the dual
formulations in this package. Step-size and linear-rate helpers for the
ball-restricted curvature setting live here as well.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "SmoothOracle",
    "ProxOracle",
    "LocalConstants",
    "SuccessiveRelative",
    "ExactError",
    "SolverConfig",
    "HistoryRow",
    "Termination",
    "SolveReport",
    "DivergedError",
    "fbs_iterate",
    "fbs_solve",
    "contraction_factor",
    "optimal_step",
    "near_limit_step",
    "theoretical_error_bound",
]


@dataclass(frozen=True)
class SmoothOracle:
    """Gradient oracle of the smooth term: a deterministic map on R^dim."""

    grad: Callable[[np.ndarray], np.ndarray]
    dim: int


@dataclass(frozen=True)
class ProxOracle:
    """Prox oracle of the nonsmooth term: ``prox(gamma, x)`` is firmly nonexpansive."""

    prox: Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LocalConstants:
    """Curvature constants of the smooth term on the ball B(center, radius):
    mu-strong convexity below, lip-Lipschitz gradient above."""

    mu: float
    lip: float
    radius: float
    center: np.ndarray

    def __post_init__(self):
        if not 0 <= self.mu <= self.lip:
            raise ValueError(f"need 0 <= mu <= lip, got mu={self.mu}, lip={self.lip}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class SuccessiveRelative:
    """Stop when ||x_{n+1} - x_n|| / ||x_n|| drops to the tolerance."""


@dataclass(frozen=True)
class ExactError:
    """Stop when ||x_n - target|| drops to the tolerance (target = known solution)."""

    target: np.ndarray


StoppingRule = Union[SuccessiveRelative, ExactError]


@dataclass(frozen=True)
class SolverConfig:
    gamma: float
    tol: float
    max_iter: int
    stopping: StoppingRule = field(default_factory=SuccessiveRelative)
    # optional linear rate; enables the per-iteration bound column when the
    # stopping rule is ExactError
    rate: Optional[float] = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.rate is not None and not 0 < self.rate < 1:
            raise ValueError(f"rate must lie in (0, 1), got {self.rate}")


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    error: float
    bound: Optional[float] = None
    exact_error: Optional[float] = None
    relative_change: Optional[float] = None
    elapsed: float = 0.0


class Termination(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass
class SolveReport:
    final_point: np.ndarray
    iterations: int
    history: list[HistoryRow]
    elapsed: float
    termination: Termination


class DivergedError(RuntimeError):
    """Raised when an iterate stops being finite."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration


def _check_point(x, dim: int, what: str):
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"{what} has shape {x.shape}, expected ({dim},)")
    return x


def fbs_iterate(x, smooth: SmoothOracle, prox: ProxOracle, gamma: float):
    """One forward-backward step: prox(gamma, x - gamma * grad(x))."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = _check_point(x, smooth.dim, "point")
    g = _check_point(smooth.grad(x), smooth.dim, "gradient")
    out = prox.prox(gamma, x - gamma * g)
    return _check_point(out, smooth.dim, "prox output")


def fbs_solve(x0, smooth: SmoothOracle, prox: ProxOracle, cfg: SolverConfig) -> SolveReport:
    """Run the forward-backward iteration until the stopping rule fires.

    Records one history row per iterate (including the start point). The
    ``error`` field holds the stopping metric; exact error and relative
    change are filled in whenever they are defined. Raises
    :class:`DivergedError` as soon as an iterate is not finite.
    """
    x = _check_point(x0, smooth.dim, "start point")
    exact = isinstance(cfg.stopping, ExactError)
    target = _check_point(cfg.stopping.target, smooth.dim, "target") if exact else None

    history: list[HistoryRow] = []
    start = time.perf_counter()

    def record(n, x, rel):
        err_exact = float(np.linalg.norm(x - target)) if exact else None
        err = err_exact if exact else (rel if rel is not None else np.inf)
        bound = None
        if cfg.rate is not None and exact and history:
            bound = cfg.rate**n * history[0].error
        elif cfg.rate is not None and exact:
            bound = err_exact
        history.append(
            HistoryRow(
                iteration=n,
                error=float(err),
                bound=bound,
                exact_error=err_exact,
                relative_change=rel,
                elapsed=time.perf_counter() - start,
            )
        )
        return history[-1]

    row = record(0, x, None)
    if exact and row.error <= cfg.tol:
        return SolveReport(x, 0, history, time.perf_counter() - start, Termination.CONVERGED)

    for n in range(1, cfg.max_iter + 1):
        x_new = fbs_iterate(x, smooth, prox, cfg.gamma)
        if not np.all(np.isfinite(x_new)):
            raise DivergedError(n)
        denom = np.linalg.norm(x)
        rel = float(np.linalg.norm(x_new - x) / denom) if denom > 0 else np.inf
        row = record(n, x_new, rel)
        x = x_new
        if row.error <= cfg.tol:
            return SolveReport(x, n, history, time.perf_counter() - start, Termination.CONVERGED)
    return SolveReport(x, cfg.max_iter, history, time.perf_counter() - start, Termination.MAX_ITER)


def contraction_factor(mu: float, lip: float, gamma: float) -> float:
    """Linear rate max{|1 - gamma*mu|, |1 - gamma*lip|} of the ball-restricted
    iteration map; defined for 0 < mu <= lip and 0 < gamma < 2/lip."""
    if mu <= 0:
        raise ValueError(f"mu must be positive for a contraction, got {mu}")
    if lip < mu:
        raise ValueError(f"need mu <= lip, got mu={mu}, lip={lip}")
    if not 0 < gamma < 2.0 / lip:
        raise ValueError(f"gamma must lie in (0, 2/lip) = (0, {2.0 / lip}), got {gamma}")
    return max(abs(1.0 - gamma * mu), abs(1.0 - gamma * lip))


def optimal_step(mu: float, lip: float) -> tuple[float, float]:
    """Step size minimizing the linear rate, and that rate.

    Returns ``(2/(lip+mu), (lip-mu)/(lip+mu))``.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if lip < mu:
        raise ValueError(f"need mu <= lip, got mu={mu}, lip={lip}")
    return 2.0 / (lip + mu), (lip - mu) / (lip + mu)


def near_limit_step(lip: float, fraction: float = 1.99) -> float:
    """Step size ``fraction / lip`` just under the 2/lip stability limit.

    This is the step rule behind the reference benchmark settings (fraction
    1.99); it requires no strong-convexity modulus.
    """
    if lip <= 0:
        raise ValueError(f"lip must be positive, got {lip}")
    if not 0 < fraction < 2:
        raise ValueError(f"fraction must lie in (0, 2), got {fraction}")
    return fraction / lip


def theoretical_error_bound(rho: float, n: int, e0: float) -> float:
    """Linear-rate error bound rho**n * e0."""
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if e0 < 0:
        raise ValueError(f"e0 must be nonnegative, got {e0}")
    return rho**n * e0
