"""Douglas-Rachford and Chambolle-Pock baselines on the dual problem.

Both methods split the dual objective into the support-function term
(proxed through the feasibility projection) and the smooth coupling term,
whose prox is computed nodewise by a safeguarded Newton iteration on a
single scalar unknown per node. Chambolle-Pock runs at critical step sizes
(dual step = 1 / primal step); with the documented initialization its
iterate sequence coincides with Douglas-Rachford's, index for index. The
sweep harness behind the timing tables lives here as well.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .convex import Cone, project_cone
from .dual import ConeSite, DualPoint, DualProblem, feasible_projection, solve_dual_fbs
from .fb import SolverConfig, SuccessiveRelative, Termination
from .projections import AffineProjector, DykstraConfig
from .recover import recover_primal

__all__ = [
    "BaselineConfig",
    "RunRecord",
    "prox_phi_pointwise",
    "prox_phi_field",
    "dr_solve",
    "cp_solve",
    "harness_run",
    "records_to_csv",
    "ALGORITHMS",
]

ALGORITHMS = ("CP", "DR", "DFB0", "DFB1")


@dataclass(frozen=True)
class BaselineConfig:
    algorithm: str
    gamma: float
    tol: float
    max_iter: int
    inner_tol: float = 1e-11

    def __post_init__(self):
        if self.algorithm not in ("CP", "DR"):
            raise ValueError(f"algorithm must be 'CP' or 'DR', got {self.algorithm!r}")
        if self.gamma <= 0 or self.tol <= 0 or self.inner_tol <= 0:
            raise ValueError("gamma, tol and inner_tol must be positive")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")

    @property
    def sigma(self) -> float:
        """Dual step of Chambolle-Pock; pinned to the critical choice 1/gamma."""
        return 1.0 / self.gamma


@dataclass(frozen=True)
class RunRecord:
    """One benchmark run: what ran, how long, and on which problem."""

    algorithm: str
    time_s: float
    iterations: int
    gamma: float
    nu: float
    epsilon: Optional[float]
    alpha: Optional[float]
    n: int
    final_residual: float
    converged: bool = True


class ProxNewtonError(RuntimeError):
    """Raised when the nodewise prox Newton iteration hits its step cap."""

    def __init__(self, node):
        super().__init__(f"nodewise prox solve did not converge at node {node}")
        self.node = node


def prox_phi_field(theta, v, gamma: float, coupling, cone: Cone, inner_tol: float = 1e-11,
                   c=None, max_newton: int = 200):
    """Prox of the smooth dual term, nodewise and vectorized.

    Per node the minimizer of ``F*(t + |P_C omega|^2/2) + (|t - theta|^2 +
    |omega - v|^2) / (2 gamma)`` has its cone part collinear with P_C v and
    its polar part untouched, which reduces the optimality system to one
    scalar unknown s >= 0 (the conjugate derivative at the output) solving

        s = (F*)'(theta - gamma*s + |P_C v|^2 / (2 (1 + gamma*s)^2)).

    The left side grows with slope 1 and the right side is nonincreasing in
    s, so a bracketed Newton iteration on [0, (F*)'(theta + |P_C v|^2/2)]
    converges; the output is then ``t = theta - gamma*s`` and
    ``omega = (v - P_C v) + P_C v / (1 + gamma*s)``.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    pv = project_cone(cone, v)
    polar = v - pv
    beta_sq = np.sum(pv * pv, axis=-1)

    def argument(s):
        return theta - gamma * s + beta_sq / (2.0 * (1.0 + gamma * s) ** 2)

    hi = np.asarray(coupling.fstar_prime(argument(np.zeros_like(theta)), c), dtype=float)
    lo = np.zeros_like(hi)
    s = 0.5 * hi
    converged = False
    for _ in range(max_newton):
        a = argument(s)
        g = s - np.asarray(coupling.fstar_prime(a, c), dtype=float)
        tol = inner_tol * np.maximum(1.0, s)
        if np.all(np.abs(g) <= tol):
            converged = True
            break
        lo = np.where(g < 0, s, lo)
        hi = np.where(g > 0, s, hi)
        slope = np.asarray(coupling.fstar_prime_slope(a, c), dtype=float)
        gp = 1.0 + slope * gamma * (1.0 + beta_sq / (1.0 + gamma * s) ** 3)
        s_new = s - g / gp
        bad = ~np.isfinite(s_new) | (s_new < lo) | (s_new > hi)
        s_new = np.where(bad, 0.5 * (lo + hi), s_new)
        s = np.where(np.abs(g) <= tol, s, s_new)
    if not converged:
        g = s - np.asarray(coupling.fstar_prime(argument(s), c), dtype=float)
        bad = np.abs(g) > inner_tol * np.maximum(1.0, s)
        node = np.unravel_index(int(np.argmax(bad)), np.shape(bad)) if np.ndim(bad) else ()
        raise ProxNewtonError(node)
    t = theta - gamma * s
    omega = polar + pv / np.expand_dims(1.0 + gamma * s, -1) if v.ndim > 1 else polar + pv / (1.0 + gamma * s)
    return t, omega


def prox_phi_pointwise(theta: float, vbar, gamma: float, coupling, c: float,
                       cone: Cone, inner_tol: float = 1e-11):
    """Single-node version of :func:`prox_phi_field`; returns (t, omega)."""
    t, omega = prox_phi_field(
        np.float64(theta), np.asarray(vbar, dtype=float), gamma, coupling, cone,
        inner_tol=inner_tol, c=np.float64(c),
    )
    return float(t), np.asarray(omega, dtype=float)


def _prox_phi_packed(problem: DualProblem, gamma: float, vec, inner_tol: float):
    x = DualPoint.unpack(vec, problem.n)
    t, omega = prox_phi_field(
        x.theta, x.v, gamma, problem.coupling, problem.cone_site.c2, inner_tol
    )
    return DualPoint(theta=t, v=omega).pack()


def _relative_change(x_new, x) -> float:
    denom = np.linalg.norm(x)
    return float(np.linalg.norm(x_new - x) / denom) if denom > 0 else math.inf


def _make_record(problem, algorithm, cfg_gamma, iterations, elapsed, residual, converged):
    coupling = problem.coupling
    return RunRecord(
        algorithm=algorithm,
        time_s=elapsed,
        iterations=iterations,
        gamma=cfg_gamma,
        nu=problem.nu,
        epsilon=getattr(coupling, "epsilon", None),
        alpha=getattr(coupling, "alpha", None),
        n=problem.n,
        final_residual=residual,
        converged=converged,
    )


def dr_solve(
    problem: DualProblem,
    cfg: BaselineConfig,
    start: Optional[DualPoint] = None,
    projector: Optional[AffineProjector] = None,
    dykstra: Optional[DykstraConfig] = None,
    callback=None,
):
    """Douglas-Rachford on the (smooth term, support term) pair.

    Driving sequence s; per iteration one smooth-term prox and one
    support-term prox (the latter through the feasibility projection with
    the sign flip composed: ``prox(y) = y + gamma * P(-y / gamma)``).
    Stops when the relative successive change of the smooth-prox output
    drops to ``cfg.tol``. ``callback(k, x, rel, elapsed)``, when given, sees
    every smooth-prox iterate.
    """
    if cfg.algorithm != "DR":
        raise ValueError(f"dr_solve got algorithm {cfg.algorithm!r}")
    project = feasible_projection(problem, projector, dykstra)
    gamma = cfg.gamma
    s = (start if start is not None else DualPoint.zero(problem.n)).pack()

    t0 = time.perf_counter()
    x = _prox_phi_packed(problem, gamma, s, cfg.inner_tol)
    if callback is not None:
        callback(0, x, None, time.perf_counter() - t0)
    iterations = 0
    residual = math.inf
    converged = False
    for iterations in range(1, cfg.max_iter + 1):
        refl = 2.0 * x - s
        u = refl + gamma * project(-refl / gamma)
        s = s + u - x
        x_new = _prox_phi_packed(problem, gamma, s, cfg.inner_tol)
        residual = _relative_change(x_new, x)
        x = x_new
        if callback is not None:
            callback(iterations, x, residual, time.perf_counter() - t0)
        if residual <= cfg.tol:
            converged = True
            break
    elapsed = time.perf_counter() - t0
    record = _make_record(problem, "DR", gamma, iterations, elapsed, residual, converged)
    return DualPoint.unpack(x, problem.n), record


def cp_solve(
    problem: DualProblem,
    cfg: BaselineConfig,
    start: Optional[DualPoint] = None,
    projector: Optional[AffineProjector] = None,
    dykstra: Optional[DykstraConfig] = None,
    callback=None,
):
    """Chambolle-Pock at critical step sizes on the same splitting.

    Primal step gamma, dual step 1/gamma. The dual prox is the projection
    onto the sign-flipped feasibility set, ``y -> -P(-y)``. Initialization:
    the primal iterate starts at the smooth prox of ``start`` and the
    extrapolation is seeded against ``start``, which makes the primal
    sequence coincide with the Douglas-Rachford sequence started at the
    same point (no index shift).
    """
    if cfg.algorithm != "CP":
        raise ValueError(f"cp_solve got algorithm {cfg.algorithm!r}")
    project = feasible_projection(problem, projector, dykstra)
    gamma = cfg.gamma

    s0 = (start if start is not None else DualPoint.zero(problem.n)).pack()
    t0 = time.perf_counter()
    x = _prox_phi_packed(problem, gamma, s0, cfg.inner_tol)
    if callback is not None:
        callback(0, x, None, time.perf_counter() - t0)
    xbar = 2.0 * x - s0
    y = np.zeros_like(x)
    iterations = 0
    residual = math.inf
    converged = False
    for iterations in range(1, cfg.max_iter + 1):
        y = -project(-(y + cfg.sigma * xbar))
        x_new = _prox_phi_packed(problem, gamma, x - gamma * y, cfg.inner_tol)
        xbar = 2.0 * x_new - x
        residual = _relative_change(x_new, x)
        x = x_new
        if callback is not None:
            callback(iterations, x, residual, time.perf_counter() - t0)
        if residual <= cfg.tol:
            converged = True
            break
    elapsed = time.perf_counter() - t0
    record = _make_record(problem, "CP", gamma, iterations, elapsed, residual, converged)
    return DualPoint.unpack(x, problem.n), record


def _unit_mass(pt: DualPoint, problem: DualProblem, slack: float = 1e-2) -> bool:
    """Whether the recovered density of a dual point carries unit total mass.

    A correct limit point always does; an iteration that blew up and then
    stalled (tiny relative change at an absurd scale) does not.
    """
    m = recover_primal(pt, problem).m
    mass = (1.0 / problem.n) ** 2 * float(m.sum())
    return bool(np.isfinite(mass) and abs(mass - 1.0) <= slack)


def _site_for(algorithm: str, problem: DualProblem) -> DualProblem:
    if algorithm == "DFB0":
        return problem.with_site(ConeSite.CONSTRAINT)
    if algorithm == "DFB1":
        return problem.with_site(ConeSite.SMOOTH)
    return problem


def run_algorithm(
    problem: DualProblem,
    algorithm: str,
    gamma: float,
    tol: float,
    max_iter: int,
    inner_tol: float = 1e-11,
    projector: Optional[AffineProjector] = None,
    start: Optional[DualPoint] = None,
):
    """Run one named algorithm with the relative successive-change rule.

    Returns (DualPoint, RunRecord). DFB0/DFB1 select their splitting
    themselves; CP/DR keep the problem's splitting.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    prob = _site_for(algorithm, problem)
    if projector is None:
        projector = AffineProjector.build(prob.n, prob.nu)
    if algorithm in ("CP", "DR"):
        cfg = BaselineConfig(algorithm=algorithm, gamma=gamma, tol=tol,
                             max_iter=max_iter, inner_tol=inner_tol)
        solver = cp_solve if algorithm == "CP" else dr_solve
        return solver(prob, cfg, start=start, projector=projector)
    cfg = SolverConfig(gamma=gamma, tol=tol, max_iter=max_iter,
                       stopping=SuccessiveRelative())
    report = solve_dual_fbs(prob, cfg, start=start, projector=projector)
    record = _make_record(
        prob, algorithm, gamma, report.iterations, report.elapsed,
        report.history[-1].error, report.termination is Termination.CONVERGED,
    )
    return DualPoint.unpack(report.final_point, prob.n), record


def harness_run(
    problems: Sequence[DualProblem],
    algorithms: Sequence[str],
    gammas: Mapping[str, Sequence[float]],
    tol: Optional[float] = None,
    max_iter: int = 2000,
    inner_tol: float = 1e-11,
    timing_repeats: int = 3,
) -> list[RunRecord]:
    """Sweep (problem, algorithm, gamma) combinations; keep the best row each.

    The stopping rule is the relative successive change at tolerance ``tol``
    (default h^3 per problem). For each problem/algorithm pair the gamma
    with the fewest iterations wins; that run is then re-timed and its wall
    time replaced by the median of ``timing_repeats`` repeat solves. Failed
    runs are skipped and the sweep continues; a run counts as failed when it
    raises (divergence, overflow, stalled projections), hits the iteration
    cap, or lands on a spurious stall point, which is detected by the
    recovered density missing unit mass by more than 1%.
    """
    if not problems or not algorithms:
        raise ValueError("problems and algorithms must be nonempty")
    for alg in algorithms:
        if alg not in gammas or len(gammas[alg]) == 0:
            raise ValueError(f"empty gamma sweep for algorithm {alg!r}")

    records: list[RunRecord] = []
    for problem in problems:
        tol_p = tol if tol is not None else (1.0 / problem.n) ** 3
        projector = AffineProjector.build(problem.n, problem.nu)
        for alg in algorithms:
            best: Optional[RunRecord] = None
            for gamma in gammas[alg]:
                try:
                    pt, rec = run_algorithm(
                        problem, alg, gamma, tol_p, max_iter, inner_tol, projector
                    )
                    sane = rec.converged and _unit_mass(pt, _site_for(alg, problem))
                except (OverflowError, RuntimeError):
                    continue
                if not sane:
                    continue
                if best is None or rec.iterations < best.iterations:
                    best = rec
            if best is None:
                continue
            times = []
            for _ in range(max(1, timing_repeats)):
                _, rec = run_algorithm(
                    problem, alg, best.gamma, tol_p, max_iter, inner_tol, projector
                )
                times.append(rec.time_s)
            records.append(
                RunRecord(
                    algorithm=best.algorithm,
                    time_s=float(np.median(times)),
                    iterations=best.iterations,
                    gamma=best.gamma,
                    nu=best.nu,
                    epsilon=best.epsilon,
                    alpha=best.alpha,
                    n=best.n,
                    final_residual=best.final_residual,
                )
            )
    return records


def records_to_csv(records: Sequence[RunRecord], path) -> None:
    """Write run records with the fixed column order of the timing tables."""
    with open(path, "w") as fh:
        fh.write("algorithm,time_s,iterations,gamma,nu,epsilon,alpha,n\n")
        for r in records:
            eps = "" if r.epsilon is None else f"{r.epsilon:.17g}"
            alpha = "" if r.alpha is None else f"{r.alpha:.17g}"
            fh.write(
                f"{r.algorithm},{r.time_s:.17g},{r.iterations},{r.gamma:.17g},"
                f"{r.nu:.17g},{eps},{alpha},{r.n}\n"
            )
