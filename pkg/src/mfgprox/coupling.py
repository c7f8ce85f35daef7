"""Per-node convex coupling models.

A coupling bundles, for every grid node, the congestion cost F (a strictly
convex function of the density value), its derivative f = F', and the
derivative of its Fenchel conjugate (F*)' which is what the dual solvers
evaluate. Two models ship: the logarithmic coupling of the first-order
benchmark problem, and the power + entropy coupling of the second-order one.
All evaluations are vectorized over grid arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex import lambert_w0_of_log

__all__ = [
    "OVERFLOW_LIMIT",
    "coupling_field",
    "fstar_prime_log",
    "fstar_prime_power_entropy",
    "LogCoupling",
    "PowerEntropyCoupling",
]

# exp() beyond this loses the run silently, so the evaluation aborts instead
OVERFLOW_LIMIT = 700.0


def coupling_field(kind: str, n: int):
    """Per-node constant c for the named model on the n x n grid.

    ``"log"``: sin(2 pi i h) + sin(2 pi j h).
    ``"power_entropy"``: -(sin(2 pi i h) + sin(2 pi j h) + cos(4 pi i h)) / 2.
    """
    if n < 2:
        raise ValueError(f"grid size must be at least 2, got {n}")
    h = 1.0 / n
    x = 2.0 * np.pi * h * np.arange(n)
    if kind == "log":
        return np.sin(x)[:, None] + np.sin(x)[None, :]
    if kind == "power_entropy":
        return -(np.sin(x)[:, None] + np.sin(x)[None, :] + np.cos(2.0 * x)[:, None]) / 2.0
    raise ValueError(f"unknown coupling kind {kind!r}")


def _guard_overflow(arg):
    arg = np.asarray(arg, dtype=float)
    if np.any(arg > OVERFLOW_LIMIT) or not np.all(np.isfinite(arg)):
        flat = np.atleast_1d(arg)
        node = int(np.argmax(np.where(np.isfinite(flat), flat, np.inf)))
        idx = tuple(int(k) for k in np.unravel_index(node, flat.shape)) if flat.ndim > 1 else (node,)
        raise OverflowError(
            f"exponential argument {float(flat.reshape(-1)[node])} exceeds {OVERFLOW_LIMIT} "
            f"at node {idx}"
        )
    return arg


def fstar_prime_log(rho, c):
    """Conjugate derivative of the log coupling: exp(rho + c).

    Aborts with :class:`OverflowError` (naming the offending node) instead of
    returning a saturated value when the exponent passes ``OVERFLOW_LIMIT``.
    """
    return np.exp(_guard_overflow(np.asarray(rho, dtype=float) + c))


def fstar_prime_power_entropy(rho, c, alpha: float, epsilon: float):
    """Conjugate derivative of the power + entropy coupling.

    For epsilon = 0 this is ``max(rho - c, 0) ** (1/(alpha-1))``. For
    epsilon > 0 the defining relation ``y**(alpha-1) + c + eps*log(y) = rho``
    is inverted through the log-argument Lambert solver, so no intermediate
    exponential is formed.
    """
    if not 1.0 < alpha <= 2.0:
        raise ValueError(f"alpha must be in (1, 2], got {alpha}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    rho = np.asarray(rho, dtype=float)
    expo = 1.0 / (alpha - 1.0)
    if epsilon == 0.0:
        return np.maximum(rho - c, 0.0) ** expo
    k = (alpha - 1.0) / epsilon
    w = lambert_w0_of_log(k * (rho - c) + np.log(k))
    return np.asarray(w / k) ** expo


@dataclass(frozen=True)
class LogCoupling:
    """Logarithmic coupling: F(rho) = rho (log rho - 1) - c rho, f = log rho - c."""

    n: int
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "c", coupling_field("log", self.n))

    kind = "log"
    alpha = None
    epsilon = None

    def fstar_prime(self, rho, c=None):
        return fstar_prime_log(rho, self.c if c is None else c)

    def fstar_prime_slope(self, rho, c=None):
        """d/drho of fstar_prime (equals fstar_prime for this model)."""
        return self.fstar_prime(rho, c)

    def fprime(self, m):
        m = np.asarray(m, dtype=float)
        if np.any(m <= 0):
            raise ValueError("log coupling marginal cost needs a positive density")
        return np.log(m) - self.c

    def fvalue(self, m):
        """F per node; +inf where the density is negative."""
        m = np.asarray(m, dtype=float)
        out = np.full(m.shape, np.inf)
        pos = m > 0
        out[pos] = m[pos] * (np.log(m[pos]) - 1.0) - (self.c * m)[pos]
        out[m == 0] = 0.0
        return out


@dataclass(frozen=True)
class PowerEntropyCoupling:
    """Power + entropy coupling.

    F(rho) = rho^alpha / alpha + c rho + eps rho (log rho - 1), with
    f = rho^(alpha-1) + c + eps log rho, for alpha in (1, 2] and eps >= 0.
    """

    n: int
    alpha: float = 1.5
    epsilon: float = 0.0
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must be in (1, 2], got {self.alpha}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        object.__setattr__(self, "c", coupling_field("power_entropy", self.n))

    kind = "power_entropy"

    def fstar_prime(self, rho, c=None):
        return fstar_prime_power_entropy(
            rho, self.c if c is None else c, self.alpha, self.epsilon
        )

    def fstar_prime_slope(self, rho, c=None):
        """d/drho of fstar_prime, via 1 / F''(y) at y = fstar_prime(rho)."""
        y = np.asarray(self.fstar_prime(rho, c), dtype=float)
        out = np.zeros_like(y)
        pos = y > 0
        # F''(y) = (alpha-1) y^(alpha-2) + eps / y
        out[pos] = y[pos] / ((self.alpha - 1.0) * y[pos] ** (self.alpha - 1.0) + self.epsilon)
        return out

    def fprime(self, m):
        m = np.asarray(m, dtype=float)
        if self.epsilon > 0 and np.any(m <= 0):
            raise ValueError("entropy marginal cost needs a positive density")
        if np.any(m < 0):
            raise ValueError("marginal cost undefined for negative density")
        ent = self.epsilon * np.log(m) if self.epsilon > 0 else 0.0
        return m ** (self.alpha - 1.0) + self.c + ent

    def fvalue(self, m):
        m = np.asarray(m, dtype=float)
        out = np.full(m.shape, np.inf)
        pos = m > 0
        ent = m[pos] * (np.log(m[pos]) - 1.0) if self.epsilon > 0 else 0.0
        out[pos] = m[pos] ** self.alpha / self.alpha + (self.c * m)[pos] + self.epsilon * ent
        out[m == 0] = 0.0
        return out
