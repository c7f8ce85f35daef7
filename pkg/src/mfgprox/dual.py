"""Dual formulation of the discrete equilibrium problem.

The dual variable is a pair (theta, v) of a grid function and a vector
field. The smooth part of the dual objective sums, per node, the coupling
conjugate evaluated at ``theta + |P_C v|^2 / 2`` where C is the cone slot of
the chosen splitting; its gradient is evaluated here. The nonsmooth part is
the support function of the feasibility set composed with the sign flip,
whose prox comes from the projections module via Moreau decomposition.
This module also provides the explicit solution of the first-order
log-coupling problem and its ball-restricted curvature constants, plus a
driver wiring everything into the forward-backward engine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .convex import Cone, project_cone
from .coupling import coupling_field
from .fb import (
    LocalConstants,
    ProxOracle,
    SmoothOracle,
    SolveReport,
    SolverConfig,
    fbs_solve,
)
from .grid import pack_pair, unpack_pair
from .projections import AffineProjector, DykstraConfig, DykstraState, project_DK

__all__ = [
    "ConeSite",
    "DualPoint",
    "DualProblem",
    "grad_phi",
    "smooth_oracle",
    "feasible_projection",
    "support_prox_oracle",
    "explicit_solution_log",
    "g_function",
    "local_constants_log",
    "solve_dual_fbs",
]


class ConeSite(Enum):
    """Where the sign cone sits in the splitting.

    CONSTRAINT: the cone is part of the feasibility set (prox side), and the
    smooth term sees the full space. SMOOTH: the feasibility set is purely
    affine, and the cone enters the smooth term through its projection.
    """

    CONSTRAINT = "constraint"
    SMOOTH = "smooth"

    @property
    def c1(self) -> Cone:
        return Cone.K if self is ConeSite.CONSTRAINT else Cone.FULL

    @property
    def c2(self) -> Cone:
        return Cone.FULL if self is ConeSite.CONSTRAINT else Cone.K


@dataclass(frozen=True)
class DualPoint:
    """Dual iterate: scalar part theta (N, N) and vector part v (N, N, 4)."""

    theta: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        n = self.theta.shape[0]
        if self.theta.shape != (n, n) or self.v.shape != (n, n, 4):
            raise ValueError(
                f"inconsistent dual point shapes {self.theta.shape}, {self.v.shape}"
            )

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def pack(self) -> np.ndarray:
        return pack_pair(self.theta, self.v)

    @classmethod
    def unpack(cls, vec, n: int) -> "DualPoint":
        theta, v = unpack_pair(vec, n)
        return cls(theta=theta, v=v)

    @classmethod
    def zero(cls, n: int) -> "DualPoint":
        return cls(theta=np.zeros((n, n)), v=np.zeros((n, n, 4)))


@dataclass(frozen=True)
class DualProblem:
    """A coupling model plus splitting choice, viscosity and grid size."""

    coupling: object
    cone_site: ConeSite
    nu: float
    n: int

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"viscosity must be nonnegative, got {self.nu}")
        if getattr(self.coupling, "n", self.n) != self.n:
            raise ValueError(
                f"coupling grid size {self.coupling.n} != problem grid size {self.n}"
            )

    @property
    def dim(self) -> int:
        return 5 * self.n * self.n

    def with_site(self, site: ConeSite) -> "DualProblem":
        return replace(self, cone_site=site)


def grad_phi(x: DualPoint, problem: DualProblem) -> DualPoint:
    """Gradient of the smooth dual term at x.

    Per node, with s = (F*)'(theta + |P_C v|^2 / 2) for the cone slot C of
    the splitting: the theta-component is s and the v-component is s * P_C v.
    """
    pv = project_cone(problem.cone_site.c2, x.v)
    arg = x.theta + 0.5 * np.sum(pv * pv, axis=-1)
    s = problem.coupling.fstar_prime(arg)
    return DualPoint(theta=s, v=s[..., None] * pv)


def smooth_oracle(problem: DualProblem) -> SmoothOracle:
    """Packed-vector gradient oracle of the smooth dual term."""

    n = problem.n

    def grad(vec):
        g = grad_phi(DualPoint.unpack(vec, n), problem)
        return g.pack()

    return SmoothOracle(grad=grad, dim=problem.dim)


def feasible_projection(
    problem: DualProblem,
    projector: Optional[AffineProjector] = None,
    dykstra: Optional[DykstraConfig] = None,
    warm_start: bool = True,
):
    """Projection onto the feasibility set selected by the splitting.

    Returns a callable on stacked vectors. For the cone-in-constraint
    splitting this is the Dykstra projection (with per-instance warm-started
    correction terms when ``warm_start`` is set); otherwise the exact affine
    projection.
    """
    if projector is None:
        projector = AffineProjector.build(problem.n, problem.nu)
    if problem.cone_site is ConeSite.SMOOTH:
        return projector.project
    cfg = dykstra if dykstra is not None else DykstraConfig()
    state = DykstraState() if warm_start else None

    def project(z):
        return project_DK(z, projector, cfg, state)

    return project


def support_prox_oracle(
    problem: DualProblem,
    projector: Optional[AffineProjector] = None,
    dykstra: Optional[DykstraConfig] = None,
    warm_start: bool = True,
) -> ProxOracle:
    """Prox oracle of the nonsmooth dual term.

    The nonsmooth term is the support function of the feasibility set
    composed with the sign flip, so by Moreau decomposition
    ``prox(gamma, y) = y + gamma * P(-y / gamma)`` with P the feasibility
    projection.
    """
    project = feasible_projection(problem, projector, dykstra, warm_start)

    def prox(gamma, y):
        return y + gamma * project(-y / gamma)

    return ProxOracle(prox=prox)


def explicit_solution_log(n: int) -> DualPoint:
    """Closed-form dual solution of the first-order log-coupling problem.

    theta is the constant normalizing the density exp(theta + c) to unit
    mass; v vanishes.
    """
    c = coupling_field("log", n)
    h = 1.0 / n
    tstar = -np.log(h * h * np.exp(c).sum())
    return DualPoint(theta=np.full((n, n), tstar), v=np.zeros((n, n, 4)))


def g_function(M: float) -> float:
    """Curvature envelope max over x in [0, M] of
    ``exp(sqrt(M-x)) * (1 + x/2 + (2 + x/2) * sqrt(x / (4 + x)))``.

    Coarse scan plus golden-section refinement to interval width 1e-12;
    g(0) = 1 and g is nondecreasing.
    """
    if M < 0:
        raise ValueError(f"argument must be nonnegative, got {M}")
    if M == 0:
        return 1.0

    def q(x):
        x = np.asarray(x, dtype=float)
        return np.exp(np.sqrt(np.maximum(M - x, 0.0))) * (
            1.0 + x / 2.0 + (2.0 + x / 2.0) * np.sqrt(x / (4.0 + x))
        )

    xs = np.linspace(0.0, M, 4097)
    vals = q(xs)
    k = int(np.argmax(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, len(xs) - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    while b - a > 1e-12:
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        if q(c) >= q(d):
            b = d
        else:
            a = c
    return float(max(q(0.5 * (a + b)), vals[k]))


def local_constants_log(n: int, M0: float) -> LocalConstants:
    """Curvature constants of the log-coupling smooth term on the ball of
    radius M0 around the explicit solution (cone-in-constraint splitting)."""
    if M0 <= 0:
        raise ValueError(f"M0 must be positive, got {M0}")
    c = coupling_field("log", n)
    x_star = explicit_solution_log(n)
    tstar = float(x_star.theta[0, 0])
    lip = float(np.exp(tstar + c.max()) * g_function(M0 * M0))
    mu = float(np.exp(tstar + c.min() - M0))
    return LocalConstants(mu=mu, lip=lip, radius=M0, center=x_star.pack())


def solve_dual_fbs(
    problem: DualProblem,
    cfg: SolverConfig,
    start: Optional[DualPoint] = None,
    projector: Optional[AffineProjector] = None,
    dykstra: Optional[DykstraConfig] = None,
    warm_start: bool = True,
) -> SolveReport:
    """Forward-backward solve of the dual problem.

    Builds the gradient and prox oracles for the problem's splitting and
    runs the generic engine from ``start`` (zero by default).
    """
    smooth = smooth_oracle(problem)
    prox = support_prox_oracle(problem, projector, dykstra, warm_start)
    x0 = (start if start is not None else DualPoint.zero(problem.n)).pack()
    return fbs_solve(x0, smooth, prox, cfg)
