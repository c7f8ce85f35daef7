"""Recovery of the primal equilibrium from a solved dual point.

The density/flow pair follows from the conjugate derivative of the coupling
and the scaled cone projection; the value function and ergodic constant then
solve a linear periodic Poisson problem on the zero-mean subspace. The
primal objective evaluator lives here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .convex import project_cone
from .dual import DualPoint, DualProblem
from .grid import grid_to_vec, laplacian_h, vec_to_grid

__all__ = ["PrimalPoint", "HjbSolution", "recover_primal", "recover_hjb", "primal_objective"]


@dataclass(frozen=True)
class PrimalPoint:
    """Density m (N, N) and flow w (N, N, 4)."""

    m: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class HjbSolution:
    """Zero-mean value function u and ergodic constant lam."""

    u: np.ndarray
    lam: float


def recover_primal(x: DualPoint, problem: DualProblem) -> PrimalPoint:
    """Density and flow induced by a dual point.

    Per node: m = (F*)'(theta + |P_C v|^2 / 2) and w = m * P_C v, with C the
    cone slot of the problem's splitting.
    """
    pv = project_cone(problem.cone_site.c2, x.v)
    arg = x.theta + 0.5 * np.sum(pv * pv, axis=-1)
    m = np.asarray(problem.coupling.fstar_prime(arg), dtype=float)
    return PrimalPoint(m=m, w=m[..., None] * pv)


def recover_hjb(p: PrimalPoint, nu: float, coupling, rtol: float = 1e-12) -> HjbSolution:
    """Value function and ergodic constant from a recovered primal point.

    Writes the stationary cost equation as ``-nu * lap(u) = r - lam`` with
    ``r = f(x, m) - (|w|/m)^2 / 2`` (the nonlinear term expressed through the
    flow/density ratio; zero where m and w both vanish). Summing over nodes
    forces lam to be the mean of r, and u solves the periodic Poisson
    problem on the zero-mean subspace by conjugate gradients.

    Only the second-order (nu > 0) recovery is provided; the first-order
    problem determines lam alone.
    """
    if nu <= 0:
        raise ValueError("value-function recovery needs positive viscosity")
    m = np.asarray(p.m, dtype=float)
    w = np.asarray(p.w, dtype=float)
    wnorm = np.linalg.norm(w, axis=-1)
    ratio = np.zeros_like(m)
    pos = m > 0
    if np.any(~pos & (wnorm > 0)):
        raise ValueError("flow does not vanish where the density is zero")
    ratio[pos] = wnorm[pos] / m[pos]
    r = np.asarray(coupling.fprime(m), dtype=float) - 0.5 * ratio**2
    lam = float(r.mean())
    rhs = grid_to_vec(r - lam)
    rhs -= rhs.mean()

    n = m.shape[0]
    nn = n * n

    def matvec(vec):
        return grid_to_vec(-nu * laplacian_h(vec_to_grid(vec, n)))

    op = LinearOperator((nn, nn), matvec=matvec)
    sol, info = cg(op, rhs, rtol=rtol, atol=0.0, maxiter=50 * nn)
    if info != 0:
        raise RuntimeError(f"Poisson solve did not converge (info={info})")
    u = vec_to_grid(sol, n)
    u = u - u.mean()
    return HjbSolution(u=u, lam=lam)


def primal_objective(p: PrimalPoint, coupling) -> float:
    """Sum over nodes of the flow cost plus the congestion cost.

    The flow cost is ``|w|^2 / (2 m)`` for m > 0 and 0 at (m, w) = (0, 0);
    any node with m < 0, or with m = 0 but nonzero flow, makes the value
    +inf (domain violation, not an error).
    """
    m = np.asarray(p.m, dtype=float)
    w = np.asarray(p.w, dtype=float)
    wsq = np.sum(w * w, axis=-1)
    if np.any(m < 0) or np.any((m == 0) & (wsq > 0)):
        return float("inf")
    flow = np.zeros_like(m)
    pos = m > 0
    flow[pos] = wsq[pos] / (2.0 * m[pos])
    total = flow + np.asarray(coupling.fvalue(m), dtype=float)
    return float(total.sum())
