"""Convex toolbox: sign-cone projections, the quadratic conjugate kernel,
support-function proximity via Moreau decomposition, and a log-argument
Lambert W solver.

Everything here is pure and vectorized: cone operations accept a single
4-vector or any array whose last axis has length 4, scalar kernels accept
floats or arrays.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

__all__ = [
    "Cone",
    "project_K",
    "project_polar_K",
    "project_cone",
    "ell_star_quad",
    "ell_star_quad_prime",
    "zeta",
    "prox_support_from_projection",
    "lambert_w0_of_log",
]


class Cone(Enum):
    """The set attached to the vector variable: the sign cone K or all of R^4."""

    K = "K"
    FULL = "full"


def project_K(xi):
    """Euclidean projection onto K = R+ x R- x R+ x R-.

    Componentwise clamp: components 0 and 2 to [0, inf), components 1 and 3
    to (-inf, 0]. Accepts shape (4,) or (..., 4).
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 4:
        raise ValueError(f"last axis must have length 4, got shape {xi.shape}")
    out = xi.copy()
    out[..., 0] = np.maximum(xi[..., 0], 0.0)
    out[..., 1] = np.minimum(xi[..., 1], 0.0)
    out[..., 2] = np.maximum(xi[..., 2], 0.0)
    out[..., 3] = np.minimum(xi[..., 3], 0.0)
    return out


def project_polar_K(xi):
    """Projection onto the polar cone K^- = R- x R+ x R- x R+, as Id - P_K."""
    xi = np.asarray(xi, dtype=float)
    return xi - project_K(xi)


def project_cone(cone: Cone, xi):
    """Projection onto ``cone`` (clamp for K, identity for the full space)."""
    if cone is Cone.K:
        return project_K(xi)
    return np.asarray(xi, dtype=float)


def ell_star_quad(s):
    """Conjugate of the quadratic running cost on [0, inf): max(s, 0)^2 / 2."""
    return np.square(np.maximum(s, 0.0)) / 2.0


def ell_star_quad_prime(s):
    """Derivative of :func:`ell_star_quad`: max(s, 0)."""
    return np.maximum(s, 0.0)


def zeta(cone: Cone, xi, lstar_prime=ell_star_quad_prime):
    """Scaled cone projection ``lstar_prime(|P_C xi|) * P_C xi / |P_C xi|``.

    Returns 0 where ``P_C xi = 0`` (no division takes place there), which is
    the correct gradient branch because ``lstar_prime(0) = 0``.

    Parameters
    ----------
    cone : Cone
        The set C defining the projection.
    xi : array, shape (..., 4)
        Input vector(s).
    lstar_prime : callable
        Derivative of the Hamiltonian kernel conjugate, defined on [0, inf)
        with ``lstar_prime(0) = 0``. Defaults to the quadratic kernel.
    """
    p = project_cone(cone, xi)
    nrm = np.linalg.norm(p, axis=-1)
    scale = np.zeros_like(nrm)
    mask = nrm > 0
    if np.any(mask):
        vals = np.asarray(lstar_prime(nrm[mask] if nrm.ndim else nrm), dtype=float)
        if nrm.ndim:
            scale[mask] = vals / nrm[mask]
        else:
            scale = vals / nrm
    return p * np.expand_dims(scale, -1) if nrm.ndim else p * scale


def prox_support_from_projection(gamma: float, projector, x):
    """Proximity operator of ``gamma * sigma_D`` given the projection onto D.

    By Moreau decomposition with the conjugate pair (support, indicator),
    ``prox_{gamma sigma_D}(x) = x - gamma * P_D(x / gamma)``.

    Parameters
    ----------
    gamma : float
        Positive prox parameter.
    projector : callable
        Exact (or tolerance-controlled) Euclidean projection onto a nonempty
        closed convex set D.
    x : array
        Point at which the prox is evaluated.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = np.asarray(x, dtype=float)
    return x - gamma * np.asarray(projector(x / gamma))


def lambert_w0_of_log(y, max_iter: int = 100):
    """Solve ``w + log(w) = y`` for w > 0, elementwise.

    The solution is the principal Lambert branch evaluated at ``exp(y)``,
    but the equation is solved in this log form so large exponents never
    have to be formed: ``y`` up to ~700 and beyond is fine.

    Uses a bracketed Newton iteration. The bracket is
    ``[exp(y-1), exp(y)]`` for y <= 1 (the residual is <= 0 and > 0 at the
    ends respectively) and ``[y - log(y), y]`` for y >= 1.

    Raises
    ------
    RuntimeError
        If the defining residual is not below ``1e-12 * max(1, |y|)`` after
        ``max_iter`` safeguarded Newton steps (does not occur for finite y).
    """
    y_in = np.asarray(y, dtype=float)
    scalar = y_in.ndim == 0
    y = np.atleast_1d(y_in).astype(float)
    if not np.all(np.isfinite(y)):
        raise ValueError("argument must be finite")

    w = np.empty_like(y)
    # For very negative y the root is exp(y) to beyond double precision.
    tiny = y <= -690.0
    if np.any(tiny):
        w[tiny] = np.exp(y[tiny])
    main = ~tiny
    if np.any(main):
        ym = y[main]
        lo = np.where(ym <= 1.0, np.exp(np.minimum(ym, 1.0) - 1.0),
                      np.maximum(ym - np.log(np.maximum(ym, 1.0)), 1.0))
        hi = np.where(ym <= 1.0, np.exp(np.minimum(ym, 1.0)), np.maximum(ym, 1.0))
        wm = 0.5 * (lo + hi)
        # absolute target: a 1e-12-relative defining residual in w*exp(w)
        # form needs the log-form residual this small even for large y
        tol = np.full_like(ym, 3e-13)
        for _ in range(max_iter):
            g = wm + np.log(wm) - ym
            if np.all(np.abs(g) <= tol):
                break
            lo = np.where(g < 0, wm, lo)
            hi = np.where(g > 0, wm, hi)
            # Newton step on g, slope 1 + 1/w, clipped into the bracket.
            step = g * wm / (wm + 1.0)
            wn = wm - step
            bad = ~np.isfinite(wn) | (wn < lo) | (wn > hi)
            wn = np.where(bad, 0.5 * (lo + hi), wn)
            wm = np.where(np.abs(g) <= tol, wm, wn)
        w[main] = wm

    resid = np.abs(w + np.where(w > 0, np.log(np.maximum(w, np.finfo(float).tiny)), -np.inf) - y)
    ok = (resid <= 1e-12 * np.maximum(1.0, np.abs(y))) | tiny
    if not np.all(ok):
        worst = int(np.argmax(np.where(ok, -np.inf, resid)))
        raise RuntimeError(
            f"Lambert solve did not converge at y={y[worst]!r} (residual {resid[worst]:.3e})"
        )
    return float(w[0]) if scalar else w
