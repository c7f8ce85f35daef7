"""Experiment runner.

Three subcommands. ``run`` solves one configured problem, recovers the
primal quantities and writes the convergence history, summary and grid
dumps. ``sweep`` runs step-size grids for several algorithms and writes the
best-row records table. ``check`` replays the fast reference-value
verifications and prints one PASS/FAIL line each.

Configuration comes from ``key=value`` lines in an optional ``--config``
file, overridden by command-line flags of the same names. Outputs are
deterministic for a fixed configuration and seed (timing columns aside).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import ALGORITHMS, BaselineConfig, cp_solve, dr_solve, harness_run, records_to_csv
from .convex import lambert_w0_of_log
from .coupling import LogCoupling, PowerEntropyCoupling
from .dual import (
    ConeSite,
    DualPoint,
    DualProblem,
    explicit_solution_log,
    g_function,
    local_constants_log,
    solve_dual_fbs,
)
from .fb import (
    ExactError,
    SolverConfig,
    SuccessiveRelative,
    Termination,
    contraction_factor,
    near_limit_step,
)
from .grid import write_field, write_grid
from .projections import AffineProjector, THREADS_ENV_VAR
from .recover import recover_hjb, recover_primal

__all__ = [
    "ExperimentConfig",
    "ConvergenceRow",
    "random_init",
    "emit_history",
    "run_experiment",
    "main",
]

PROBLEMS = ("GomesLog", "PowerEntropy")
TOL_KINDS = ("exact_error", "relative_successive")

_SITE_BY_ALGORITHM = {
    "DFB0": ConeSite.CONSTRAINT,
    "DFB1": ConeSite.SMOOTH,
    "CP": ConeSite.SMOOTH,
    "DR": ConeSite.SMOOTH,
}


@dataclass
class ExperimentConfig:
    problem: str = "GomesLog"
    n: int = 60
    nu: float = 0.0
    epsilon: float = 0.0
    alpha: float = 1.5
    algorithm: str = "DFB1"
    gamma: object = "auto"  # float, or "auto" for the near-limit step rule
    tol: Optional[float] = None  # default: 7e-5 exact, h^3 relative
    tol_kind: str = "exact_error"
    max_iter: int = 5000
    seed: int = 0
    init_radius: Optional[float] = None
    output_dir: str = "mfgprox-out"

    def validate(self) -> list[str]:
        """Collect every configuration problem instead of stopping at the first."""
        errors = []
        if self.problem not in PROBLEMS:
            errors.append(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.algorithm not in ALGORITHMS:
            errors.append(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.n < 2:
            errors.append(f"n must be at least 2, got {self.n}")
        if self.nu < 0:
            errors.append(f"nu must be nonnegative, got {self.nu}")
        if self.problem == "PowerEntropy":
            if not 1.0 < self.alpha <= 2.0:
                errors.append(f"alpha must be in (1, 2], got {self.alpha}")
            if self.epsilon < 0:
                errors.append(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.tol_kind not in TOL_KINDS:
            errors.append(f"tol_kind must be one of {TOL_KINDS}, got {self.tol_kind!r}")
        has_solution = self.problem == "GomesLog" and self.nu == 0.0
        if self.tol_kind == "exact_error" and not has_solution:
            errors.append("tol_kind=exact_error needs the closed-form solution "
                          "(problem=GomesLog with nu=0)")
        if self.gamma == "auto":
            if not has_solution:
                errors.append("gamma=auto needs the closed-form solution "
                              "(problem=GomesLog with nu=0)")
            if self.init_radius is None:
                errors.append("gamma=auto needs init_radius (the curvature ball radius)")
        else:
            try:
                if float(self.gamma) <= 0:
                    errors.append(f"gamma must be positive, got {self.gamma}")
            except (TypeError, ValueError):
                errors.append(f"gamma must be a positive number or 'auto', got {self.gamma!r}")
        if self.init_radius is not None and self.init_radius <= 0:
            errors.append(f"init_radius must be positive, got {self.init_radius}")
        if self.init_radius is not None and not has_solution:
            errors.append("init_radius perturbs the closed-form solution "
                          "(problem=GomesLog with nu=0)")
        if self.tol is not None and self.tol <= 0:
            errors.append(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            errors.append(f"max_iter must be at least 1, got {self.max_iter}")
        if self.algorithm in ("CP", "DR") and self.tol_kind != "relative_successive":
            errors.append("CP/DR stop on the relative successive change; "
                          "use tol_kind=relative_successive")
        return errors

    def resolved_tol(self) -> float:
        if self.tol is not None:
            return self.tol
        return 7e-5 if self.tol_kind == "exact_error" else (1.0 / self.n) ** 3

    def coupling(self):
        if self.problem == "GomesLog":
            return LogCoupling(self.n)
        return PowerEntropyCoupling(self.n, alpha=self.alpha, epsilon=self.epsilon)

    def dual_problem(self) -> DualProblem:
        return DualProblem(
            coupling=self.coupling(),
            cone_site=_SITE_BY_ALGORITHM[self.algorithm],
            nu=self.nu,
            n=self.n,
        )


@dataclass
class ConvergenceRow:
    iteration: int
    exact_error: Optional[float] = None
    relative_change: Optional[float] = None
    bound: Optional[float] = None
    elapsed_s: float = 0.0


def random_init(x_star: DualPoint, radius: float, seed: int) -> DualPoint:
    """Seeded start point at exact distance ``radius`` from ``x_star``.

    The direction is an isotropic Gaussian draw over all coordinates,
    normalized onto the sphere.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(x_star.pack().shape)
    u *= radius / np.linalg.norm(u)
    return DualPoint.unpack(x_star.pack() + u, x_star.n)


def emit_history(rows: list[ConvergenceRow], path) -> None:
    """Write convergence rows as CSV; absent fields become empty cells."""
    if not rows:
        raise ValueError("no convergence rows to write")

    def cell(v):
        return "" if v is None else f"{v:.17g}"

    with open(path, "w") as fh:
        fh.write("iteration,exact_error,relative_change,bound,elapsed_s\n")
        for r in rows:
            fh.write(
                f"{r.iteration},{cell(r.exact_error)},{cell(r.relative_change)},"
                f"{cell(r.bound)},{r.elapsed_s:.17g}\n"
            )


def run_experiment(cfg: ExperimentConfig):
    """Solve one configured experiment and write its artifacts.

    Returns ``(report, primal, hjb_or_None, files)`` where ``report`` is the
    engine report for the forward-backward algorithms or the run record for
    the baselines, and ``files`` lists everything written under
    ``cfg.output_dir``.
    """
    errors = cfg.validate()
    if errors:
        raise ValueError("invalid configuration:\n  " + "\n  ".join(errors))

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.dual_problem()
    projector = AffineProjector.build(cfg.n, cfg.nu)
    tol = cfg.resolved_tol()

    has_solution = cfg.problem == "GomesLog" and cfg.nu == 0.0
    x_star = explicit_solution_log(cfg.n) if has_solution else None
    target = x_star.pack() if x_star is not None else None

    start = None
    radius = None
    if cfg.init_radius is not None:
        radius = cfg.init_radius
        start = random_init(x_star, radius, cfg.seed)

    if cfg.gamma == "auto":
        consts = local_constants_log(cfg.n, radius)
        gamma = near_limit_step(consts.lip)
    else:
        gamma = float(cfg.gamma)

    # linear-rate bound column: strongly convex splitting with known solution
    rate = None
    if cfg.algorithm == "DFB0" and has_solution and radius is not None:
        consts = local_constants_log(cfg.n, radius)
        if gamma < 2.0 / consts.lip:
            rate = contraction_factor(consts.mu, consts.lip, gamma)

    rows: list[ConvergenceRow] = []
    if cfg.algorithm in ("DFB0", "DFB1"):
        stopping = ExactError(target) if cfg.tol_kind == "exact_error" else SuccessiveRelative()
        solver_cfg = SolverConfig(gamma=gamma, tol=tol, max_iter=cfg.max_iter,
                                  stopping=stopping, rate=rate)
        report = solve_dual_fbs(problem, solver_cfg, start=start, projector=projector)
        final = DualPoint.unpack(report.final_point, cfg.n)
        converged = report.termination is Termination.CONVERGED
        iterations = report.iterations
        final_error = report.history[-1].error
        for row in report.history:
            rows.append(ConvergenceRow(
                iteration=row.iteration,
                exact_error=row.exact_error,
                relative_change=row.relative_change,
                bound=row.bound,
                elapsed_s=row.elapsed,
            ))
    else:
        base_cfg = BaselineConfig(algorithm=cfg.algorithm, gamma=gamma, tol=tol,
                                  max_iter=cfg.max_iter)

        def on_iterate(k, vec, rel, elapsed):
            exact = float(np.linalg.norm(vec - target)) if target is not None else None
            rows.append(ConvergenceRow(iteration=k, exact_error=exact,
                                       relative_change=rel, elapsed_s=elapsed))

        solver = cp_solve if cfg.algorithm == "CP" else dr_solve
        final, record = solver(problem, base_cfg, start=start, projector=projector,
                               callback=on_iterate)
        report = record
        converged = record.converged
        iterations = record.iterations
        final_error = record.final_residual

    primal = recover_primal(final, problem)
    hjb = recover_hjb(primal, cfg.nu, problem.coupling) if cfg.nu > 0 else None

    files = []
    history_path = out / "history.csv"
    emit_history(rows, history_path)
    files.append(history_path)

    m_path = out / "m.grid"
    write_grid(m_path, primal.m)
    files.append(m_path)
    w_path = out / "w.grid"
    write_field(w_path, primal.w)
    files.append(w_path)
    if hjb is not None:
        u_path = out / "u.grid"
        write_grid(u_path, hjb.u)
        files.append(u_path)

    summary = {
        "config": {k: (v if not isinstance(v, Path) else str(v))
                   for k, v in asdict(cfg).items()},
        "gamma_used": gamma,
        "rate": rate,
        "iterations": iterations,
        "converged": converged,
        "final_error": final_error,
        "recovered_mass": (1.0 / cfg.n) ** 2 * float(primal.m.sum()),
        "ergodic_constant": None if hjb is None else hjb.lam,
        "elapsed_s": getattr(report, "elapsed", getattr(report, "time_s", None)),
        "files": [str(f) for f in files],
    }
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(summary_path)

    return report, primal, hjb, files


# ---------------------------------------------------------------------------
# reference-value checks


def _check_lines(full: bool = False):
    """Yield (name, passed, detail) for the reference verifications."""
    consts01 = local_constants_log(60, 0.1)
    consts05 = local_constants_log(60, 0.5)
    g01 = round(near_limit_step(consts01.lip), 4)
    g05 = round(near_limit_step(consts05.lip), 4)
    yield ("near-limit step, ball 0.1", g01 == 0.3748, f"{g01} vs 0.3748")
    yield ("near-limit step, ball 0.5", g05 == 0.2132, f"{g05} vs 0.2132")

    xs = np.linspace(0.0, 0.25, 100_001)
    dense = float(np.max(np.exp(np.sqrt(0.25 - xs))
                         * (1 + xs / 2 + (2 + xs / 2) * np.sqrt(xs / (4 + xs)))))
    gval = g_function(0.25)
    yield ("curvature envelope vs dense scan", abs(gval - dense) <= 1e-7,
           f"|{gval:.10f} - {dense:.10f}|")

    y = np.linspace(-30, 700, 2001)
    w = lambert_w0_of_log(y)
    resid = float(np.max(np.abs(w + np.log(w) - y) / np.maximum(1.0, np.abs(y))))
    yield ("log-argument Lambert residual", resid <= 1e-12, f"max residual {resid:.2e}")

    x2 = explicit_solution_log(2)
    yield ("closed-form solution at n=2", float(np.abs(x2.pack()).max()) <= 1e-14,
           "theta and v vanish")

    n = 16
    prob = DualProblem(coupling=LogCoupling(n), cone_site=ConeSite.CONSTRAINT, nu=0.0, n=n)
    x_star = explicit_solution_log(n)
    consts = local_constants_log(n, 0.5)
    gamma = near_limit_step(consts.lip)
    rho = contraction_factor(consts.mu, consts.lip, gamma)
    start = random_init(x_star, 0.5, seed=1)
    scfg = SolverConfig(gamma=gamma, tol=7e-5, max_iter=3000,
                        stopping=ExactError(x_star.pack()), rate=rho)
    rep = solve_dual_fbs(prob, scfg, start=start)
    errs = np.array([r.error for r in rep.history])
    bounds = rho ** np.arange(len(errs)) * errs[0]
    yield ("strongly convex run converges", rep.termination is Termination.CONVERGED,
           f"{rep.iterations} iterations to 7e-5")
    yield ("errors never cross the rate bound", bool(np.all(errs <= bounds + 1e-10)),
           f"max excess {float(np.max(errs - bounds)):.2e}")
    yield ("errors nonincreasing", bool(np.all(np.diff(errs) <= 1e-12)),
           f"max step increase {float(np.max(np.diff(errs))):.2e}")

    prob2 = DualProblem(coupling=PowerEntropyCoupling(12, alpha=1.5, epsilon=0.1),
                        cone_site=ConeSite.SMOOTH, nu=0.5, n=12)
    _, rec_dr = dr_solve(prob2, BaselineConfig("DR", 0.9, 1e-8, 200))
    _, rec_cp = cp_solve(prob2, BaselineConfig("CP", 0.9, 1e-8, 200))
    yield ("critical-step baselines coincide", rec_dr.iterations == rec_cp.iterations,
           f"DR {rec_dr.iterations} vs CP {rec_cp.iterations} iterations")

    if full:
        cfg1 = ExperimentConfig(problem="GomesLog", n=60, algorithm="DFB1",
                                gamma=0.2132, tol=7e-5, tol_kind="exact_error",
                                seed=0, init_radius=0.5, output_dir="mfgprox-check")
        t0 = time.perf_counter()
        report, _, _, _ = run_experiment(cfg1)
        ok = (report.termination is Termination.CONVERGED
              and 404 <= report.iterations <= 750)
        yield ("reference run, cone-in-smooth at n=60",
               ok, f"{report.iterations} iterations in {time.perf_counter() - t0:.1f}s "
                   "(band 577 +/- 30%)")


def _cmd_check(args) -> int:
    failures = 0
    for name, passed, detail in _check_lines(full=args.full):
        status = "PASS" if passed else "FAIL"
        if not passed:
            failures += 1
        print(f"{status}  {name}: {detail}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument handling


def _read_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_CONFIG_TYPES = {
    "problem": str,
    "n": int,
    "nu": float,
    "epsilon": float,
    "alpha": float,
    "algorithm": str,
    "gamma": lambda v: v if v == "auto" else float(v),
    "tol": float,
    "tol_kind": str,
    "max_iter": int,
    "seed": int,
    "init_radius": float,
    "output_dir": str,
}


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value configuration file; flags override it")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--n", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--gamma", type=float)
    p.add_argument("--gamma-auto", action="store_true",
                   help="derive the step from the curvature constants "
                        "(GomesLog with init-radius only)")
    p.add_argument("--tol", type=float)
    p.add_argument("--tol-kind", choices=TOL_KINDS, dest="tol_kind")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--seed", type=int)
    p.add_argument("--init-radius", type=float, dest="init_radius")
    p.add_argument("--output-dir", dest="output_dir")


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        for key, raw in _read_config_file(args.config).items():
            if key not in _CONFIG_TYPES:
                raise ValueError(f"unknown configuration key {key!r}")
            setattr(cfg, key, _CONFIG_TYPES[key](raw))
    for key in _CONFIG_TYPES:
        if key == "gamma":
            continue
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "gamma_auto", False):
        cfg.gamma = "auto"
    elif getattr(args, "gamma", None) is not None:
        cfg.gamma = args.gamma
    return cfg


def _cmd_run(args) -> int:
    try:
        cfg = _config_from_args(args)
        report, primal, hjb, files = run_experiment(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    converged = (report.termination is Termination.CONVERGED
                 if hasattr(report, "termination") else report.converged)
    iterations = getattr(report, "iterations")
    print(f"{cfg.algorithm} on {cfg.problem} (n={cfg.n}): "
          f"{'converged' if converged else 'NOT converged'} "
          f"after {iterations} iterations")
    for f in files:
        print(f"  wrote {f}")
    return 0 if converged else 1


def _parse_gammas(raw: str) -> list[float]:
    vals = [float(v) for v in raw.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty gamma list")
    return vals


def _cmd_sweep(args) -> int:
    try:
        cfg = _config_from_args(args)
        cfg.tol_kind = "relative_successive"
        errors = [e for e in cfg.validate() if "gamma" not in e]
        if errors:
            raise ValueError("invalid configuration:\n  " + "\n  ".join(errors))
        algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
        fb_gammas = _parse_gammas(args.fb_gammas)
        pd_gammas = _parse_gammas(args.pd_gammas)
        gammas = {a: (pd_gammas if a in ("CP", "DR") else fb_gammas) for a in algorithms}
        problem = DualProblem(coupling=cfg.coupling(), cone_site=ConeSite.SMOOTH,
                              nu=cfg.nu, n=cfg.n)
        records = harness_run([problem], algorithms, gammas, tol=cfg.tol,
                              max_iter=cfg.max_iter, timing_repeats=args.timing_repeats)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "records.csv"
    records_to_csv(records, path)
    for r in records:
        print(f"{r.algorithm}: best gamma {r.gamma} -> {r.iterations} iterations, "
              f"{r.time_s:.3f}s")
    print(f"  wrote {path}")
    return 0 if len(records) == len(set(a for a in algorithms)) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfgprox",
        description="Proximal-splitting solvers for discrete ergodic "
                    "mean-field equilibria on the torus.",
        epilog=f"The {THREADS_ENV_VAR} environment variable sets the thread "
               "count of the transform-based node loops.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve one experiment and write its artifacts")
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="step-size sweep over several algorithms")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--algorithms", default="CP,DR,DFB0,DFB1",
                         help="comma-separated algorithm names")
    p_sweep.add_argument("--fb-gammas", default="0.45,0.55,0.65",
                         dest="fb_gammas",
                         help="gamma grid for the forward-backward variants")
    p_sweep.add_argument("--pd-gammas", default="0.85,0.95,1.05,1.15",
                         dest="pd_gammas",
                         help="gamma grid for the primal-dual baselines")
    p_sweep.add_argument("--timing-repeats", type=int, default=3, dest="timing_repeats")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_check = sub.add_parser("check", help="verify reference values; print PASS/FAIL")
    p_check.add_argument("--full", action="store_true",
                         help="include the n=60 reference run (slower)")
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
