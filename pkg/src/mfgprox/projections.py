"""Euclidean projections onto the feasibility sets of the discrete problem.

The affine set (PDE rows plus unit total mass) is translation invariant on
the torus, so the KKT correction ``x - A^T (A A^T)^+ (A x - b)`` diagonalizes
per spatial frequency; the projector applies it exactly through batched 2-D
real FFTs with cached symbols. The intersection with the per-node sign cone
is handled by Dykstra's algorithm in its dual (alternating minimization)
form, which admits safe warm starting of the correction terms.

Stacked points travel through the public API as flat vectors (see
:mod:`mfgprox.grid` for the layout); internally the loops work on (5, N, N)
component blocks to keep the FFTs batched.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .grid import ConstraintOperator, assemble_constraint

# thread count for the batched transforms behind the node-parallel loops
THREADS_ENV_VAR = "MFGPROX_THREADS"


def _fft_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1

__all__ = [
    "AffineProjector",
    "project_affine",
    "DykstraConfig",
    "DykstraState",
    "DykstraStalledError",
    "project_cone_product",
    "project_DK",
]


def _to_components(vec, n: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (5 * n * n,):
        raise ValueError(f"expected flat vector of length {5 * n * n}, got {vec.shape}")
    comps = np.empty((5, n, n))
    for k in range(5):
        comps[k] = vec[k * n * n : (k + 1) * n * n].reshape((n, n), order="F")
    return comps


def _from_components(comps: np.ndarray) -> np.ndarray:
    n = comps.shape[-1]
    return np.concatenate([comps[k].ravel(order="F") for k in range(5)])


def _clamp_cone(comps: np.ndarray) -> np.ndarray:
    """Clamp the four field blocks into the sign cone; the scalar block is free."""
    out = comps.copy()
    np.maximum(comps[1], 0.0, out=out[1])
    np.minimum(comps[2], 0.0, out=out[2])
    np.maximum(comps[3], 0.0, out=out[3])
    np.minimum(comps[4], 0.0, out=out[4])
    return out


@dataclass
class AffineProjector:
    """Exact projector onto {(m, w): -nu*lap(m) + div(w) = 0, h^2 sum m = 1}.

    Holds the assembled sparse constraint (for residual checks) and the
    cached per-frequency symbols that diagonalize the normal system. The
    object is immutable after construction and safe to share across solves.
    """

    constraint: ConstraintOperator
    _symbols: tuple = field(init=False, repr=False)

    @classmethod
    def build(cls, n: int, nu: float) -> "AffineProjector":
        return cls(assemble_constraint(n, nu))

    def __post_init__(self):
        n = self.constraint.n
        nu = self.constraint.nu
        h = 1.0 / n
        k1 = np.arange(n)[:, None]
        k2 = np.arange(n // 2 + 1)[None, :]
        e1 = np.exp(2j * np.pi * k1 / n) + np.zeros_like(k2, dtype=complex)
        e2 = np.exp(2j * np.pi * k2 / n) + np.zeros_like(k1, dtype=complex)
        d1 = (e1 - 1.0) / h
        d2 = (e2 - 1.0) / h
        lam = (
            2.0 * np.cos(2.0 * np.pi * k1 / n)
            + 2.0 * np.cos(2.0 * np.pi * k2 / n)
            - 4.0
        ) / h**2
        lam = lam + np.zeros((n, n // 2 + 1))
        # row symbols of the PDE constraint per frequency, one per component
        r = np.stack(
            [
                -nu * lam.astype(complex),
                np.conj(e1) * d1,
                d1,
                np.conj(e2) * d2,
                d2,
            ]
        )
        denom = np.sum(np.abs(r) ** 2, axis=0)
        denom[0, 0] = 1.0  # PDE row vanishes at frequency zero; avoid 0/0
        object.__setattr__(self, "_symbols", (r, np.conj(r), denom))
        object.__setattr__(self, "_workers", _fft_workers())

    @property
    def n(self) -> int:
        return self.constraint.n

    def project_components(self, comps: np.ndarray) -> np.ndarray:
        """Affine projection on a (5, N, N) component block."""
        n = self.constraint.n
        r, rbar, denom = self._symbols
        hats = sfft.rfft2(comps, axes=(-2, -1), workers=self._workers)
        coef = np.sum(r * hats, axis=0) / denom
        coef[0, 0] = 0.0
        hats -= rbar * coef
        hats[0, 0, 0] = n * n  # unit total mass: mean of m times N^2
        return sfft.irfft2(hats, s=(n, n), axes=(-2, -1), workers=self._workers)

    def project(self, x) -> np.ndarray:
        """Project a stacked (m, w) vector onto the affine set."""
        return _from_components(self.project_components(_to_components(x, self.n)))

    def residual(self, x) -> float:
        return self.constraint.residual(x)


def project_affine(x, p: AffineProjector) -> np.ndarray:
    """Euclidean projection of a stacked point onto the affine constraint set."""
    return p.project(x)


def project_cone_product(x, n: int) -> np.ndarray:
    """Projection onto {(m, w): every w node in the sign cone}; m is free."""
    return _from_components(_clamp_cone(_to_components(x, n)))


@dataclass
class DykstraConfig:
    """Inner-loop controls for the cone-intersection projection."""

    tol: float = 1e-10
    max_inner: int = 10000

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_inner < 1:
            raise ValueError(f"max_inner must be at least 1, got {self.max_inner}")


@dataclass
class DykstraState:
    """Correction terms carried across projections for warm starting (opaque)."""

    p: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None


class DykstraStalledError(RuntimeError):
    """Raised when the inner loop hits its iteration cap."""

    def __init__(self, iterations: int, change: float, affine_residual: float):
        super().__init__(
            f"cone-intersection projection did not converge in {iterations} "
            f"iterations (last change {change:.3e}, affine residual {affine_residual:.3e})"
        )
        self.iterations = iterations
        self.change = change
        self.affine_residual = affine_residual


def project_DK(
    x,
    p: AffineProjector,
    cfg: DykstraConfig = DykstraConfig(),
    state: Optional[DykstraState] = None,
) -> np.ndarray:
    """Project a stacked point onto the affine set intersected with the cone.

    Dykstra's alternating projections, written in the dual form

        y = P_aff(z - q);  u = z - q - y;  out = P_cone(z - u);  q = z - u - out

    so the correction terms (u, q) may be warm started from a previous call
    without changing the limit. When ``state`` is supplied it is read for
    the start and updated in place.

    The returned point lies exactly in the cone (the cone projection is
    applied last); its affine residual is required to be below 1e-8 before
    the successive-change test may stop the loop.
    """
    n = p.n
    z = _to_components(x, n)
    if state is not None and state.q is not None:
        u = state.p.copy()
        q = state.q.copy()
    else:
        u = np.zeros_like(z)
        q = np.zeros_like(z)

    out = _clamp_cone(z - u)
    res_scale = 1.0 + np.linalg.norm(p.constraint.b)
    change = np.inf
    for it in range(1, cfg.max_inner + 1):
        y = p.project_components(z - q)
        u = z - q - y
        prev = out
        out = _clamp_cone(z - u)
        q = z - u - out
        change = float(np.sqrt(np.sum((out - prev) ** 2)))
        if change <= cfg.tol:
            flat = _from_components(out)
            if p.residual(flat) <= 1e-8 * res_scale:
                if state is not None:
                    state.p = u
                    state.q = q
                return flat
    raise DykstraStalledError(cfg.max_inner, change, p.residual(_from_components(out)))
