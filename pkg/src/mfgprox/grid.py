"""Periodic N x N grid machinery.

Grid functions are (N, N) float arrays indexed ``z[i, j]`` for the node
``(i*h, j*h)`` with ``h = 1/N``; vector fields are (N, N, 4) arrays. All
difference operators wrap around periodically. Stacked vectors use the
fixed layout (scalar block, then the four field components), each block
flattened with i fastest, so file dumps and assembled matrices are
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "step",
    "d1",
    "d2",
    "dh",
    "laplacian_h",
    "div_h",
    "grid_to_vec",
    "vec_to_grid",
    "field_to_vec",
    "vec_to_field",
    "pack_pair",
    "unpack_pair",
    "ConstraintOperator",
    "assemble_constraint",
    "apply_constraint",
    "write_grid",
    "read_grid",
    "write_field",
    "read_field",
]


def step(z) -> float:
    """Mesh size h = 1/N for a square (N, N) or (N, N, 4) array."""
    n = z.shape[0]
    return 1.0 / n


def _check_grid(z):
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError(f"grid function must be square (N, N), got {z.shape}")
    return z


def _check_field(w):
    w = np.asarray(w, dtype=float)
    if w.ndim != 3 or w.shape[0] != w.shape[1] or w.shape[2] != 4:
        raise ValueError(f"vector field must be (N, N, 4), got {w.shape}")
    return w


def d1(z):
    """Forward difference in the first index: (z[i+1,j] - z[i,j]) / h."""
    z = _check_grid(z)
    return (np.roll(z, -1, axis=0) - z) / step(z)


def d2(z):
    """Forward difference in the second index: (z[i,j+1] - z[i,j]) / h."""
    z = _check_grid(z)
    return (np.roll(z, -1, axis=1) - z) / step(z)


def dh(z):
    """Four-component staggered gradient.

    Component order per node (i, j): the forward i-difference at (i, j) and
    at (i-1, j), then the forward j-difference at (i, j) and at (i, j-1).
    """
    z = _check_grid(z)
    a = d1(z)
    b = d2(z)
    return np.stack([a, np.roll(a, 1, axis=0), b, np.roll(b, 1, axis=1)], axis=-1)


def laplacian_h(z):
    """Five-point periodic Laplacian divided by h^2."""
    z = _check_grid(z)
    total = (
        np.roll(z, 1, axis=0)
        + np.roll(z, -1, axis=0)
        + np.roll(z, 1, axis=1)
        + np.roll(z, -1, axis=1)
        - 4.0 * z
    )
    return total / step(z) ** 2


def div_h(w):
    """Staggered divergence, the (negative) adjoint of :func:`dh`.

    Per node: the i-difference of component 0 taken at (i-1, j), of
    component 1 at (i, j), the j-difference of component 2 at (i, j-1) and
    of component 3 at (i, j).
    """
    w = _check_field(w)
    a0 = d1(w[..., 0])
    a1 = d1(w[..., 1])
    b2 = d2(w[..., 2])
    b3 = d2(w[..., 3])
    return np.roll(a0, 1, axis=0) + a1 + np.roll(b2, 1, axis=1) + b3


# ---------------------------------------------------------------------------
# stacked-vector layout


def grid_to_vec(z):
    """Flatten an (N, N) grid with the first index fastest."""
    return _check_grid(z).ravel(order="F")


def vec_to_grid(vec, n: int):
    vec = np.asarray(vec, dtype=float)
    return vec.reshape((n, n), order="F")


def field_to_vec(w):
    """Flatten an (N, N, 4) field as four consecutive grid blocks."""
    w = _check_field(w)
    return np.concatenate([grid_to_vec(w[..., k]) for k in range(4)])


def vec_to_field(vec, n: int):
    vec = np.asarray(vec, dtype=float)
    blocks = vec.reshape((4, n * n))
    return np.stack([vec_to_grid(blocks[k], n) for k in range(4)], axis=-1)


def pack_pair(z, w):
    """Stack (grid function, vector field) into one flat vector of length 5 N^2."""
    return np.concatenate([grid_to_vec(z), field_to_vec(w)])


def unpack_pair(vec, n: int):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (5 * n * n,):
        raise ValueError(f"expected flat vector of length {5 * n * n}, got {vec.shape}")
    return vec_to_grid(vec[: n * n], n), vec_to_field(vec[n * n :], n)


# ---------------------------------------------------------------------------
# constraint assembly


@dataclass(frozen=True)
class ConstraintOperator:
    """Sparse linear map defining the affine feasibility constraints.

    ``A`` maps a stacked (m, w) vector to the N^2 values of
    ``-nu * laplacian(m) + div(w)`` followed by the total mass ``h^2 sum m``;
    the right-hand side ``b`` is zero except for the final mass entry 1.
    """

    n: int
    nu: float
    A: sp.csr_matrix
    b: np.ndarray

    def residual(self, vec) -> float:
        return float(np.linalg.norm(self.A @ np.asarray(vec, dtype=float) - self.b))


def _shift_i(n: int) -> sp.csr_matrix:
    """Matrix of z[i, j] -> z[i+1, j] in the i-fastest flat layout."""
    c = sp.eye(n, k=1, format="lil")
    c[n - 1, 0] = 1.0
    return sp.kron(sp.eye(n), c.tocsr(), format="csr")


def _shift_j(n: int) -> sp.csr_matrix:
    c = sp.eye(n, k=1, format="lil")
    c[n - 1, 0] = 1.0
    return sp.kron(c.tocsr(), sp.eye(n), format="csr")


def assemble_constraint(n: int, nu: float) -> ConstraintOperator:
    """Assemble the sparse constraint matrix for grid size n and viscosity nu."""
    if n < 2:
        raise ValueError(f"grid size must be at least 2, got {n}")
    if nu < 0:
        raise ValueError(f"viscosity must be nonnegative, got {nu}")
    h = 1.0 / n
    nn = n * n
    eye = sp.eye(nn, format="csr")
    si = _shift_i(n)
    sj = _shift_j(n)
    d1m = (si - eye) / h
    d2m = (sj - eye) / h
    lap = (si + si.T + sj + sj.T - 4.0 * eye) / h**2
    # Divergence blocks in the component order of dh.
    b0 = (eye - si.T) / h
    b1 = d1m
    b2 = (eye - sj.T) / h
    b3 = d2m
    pde = sp.hstack([-nu * lap, b0, b1, b2, b3], format="csr")
    mass = sp.hstack(
        [sp.csr_matrix(np.full((1, nn), h * h)), sp.csr_matrix((1, 4 * nn))],
        format="csr",
    )
    A = sp.vstack([pde, mass], format="csr")
    b = np.zeros(nn + 1)
    b[-1] = 1.0
    return ConstraintOperator(n=n, nu=float(nu), A=A, b=b)


def apply_constraint(m, w, nu: float):
    """Matrix-free application of the constraint map: (PDE residual grid, mass)."""
    m = _check_grid(m)
    y = -nu * laplacian_h(m) + div_h(w)
    mass = step(m) ** 2 * m.sum()
    return y, mass


# ---------------------------------------------------------------------------
# plain-text dumps (17 significant digits, bit-exact round trip)


def _write_rows(fh, arr):
    for i in range(arr.shape[0]):
        fh.write(" ".join(f"{v:.17g}" for v in arr[i]) + "\n")


def write_grid(path, z) -> None:
    """Dump a grid function: header ``N=<n>`` then N rows of N values."""
    z = _check_grid(z)
    with open(path, "w") as fh:
        fh.write(f"N={z.shape[0]}\n")
        _write_rows(fh, z)


def _read_header(fh) -> int:
    header = fh.readline().strip()
    if not header.startswith("N="):
        raise ValueError(f"malformed grid file header: {header!r}")
    return int(header[2:])


def read_grid(path):
    with open(path) as fh:
        n = _read_header(fh)
        data = [[float(v) for v in fh.readline().split()] for _ in range(n)]
    arr = np.array(data)
    if arr.shape != (n, n):
        raise ValueError(f"grid file body has shape {arr.shape}, expected ({n}, {n})")
    return arr


def write_field(path, w) -> None:
    """Dump a vector field: header then four consecutive N-row blocks."""
    w = _check_field(w)
    with open(path, "w") as fh:
        fh.write(f"N={w.shape[0]}\n")
        for k in range(4):
            _write_rows(fh, w[..., k])


def read_field(path):
    with open(path) as fh:
        n = _read_header(fh)
        comps = []
        for _ in range(4):
            comps.append([[float(v) for v in fh.readline().split()] for _ in range(n)])
    return np.stack([np.array(c) for c in comps], axis=-1)
