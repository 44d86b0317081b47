"""Flow-map geometry: A = (grad eta)^{-T}, J, N and the covariant operators.

Maps are passed as full vector fields eta (identity included). Derivatives
are taken of the periodic displacement eta - id, so the spectral tangential
derivative never sees the non-periodic coordinate x_1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateTangent, SingularMap
from .grid import SlabGrid, gradient, partial

#: Thickness of the near-boundary strip used by boundary-localized diagnostics.
DEFAULT_IOTA = 0.25


def map_gradient(grid: SlabGrid, eta: np.ndarray) -> np.ndarray:
    """F[:, i, j] = d_j eta_i for a full map eta."""
    F = gradient(grid, eta - grid.identity)
    for i in range(grid.dim):
        F[:, i, i] += 1.0
    return F


def cofactor(F: np.ndarray) -> np.ndarray:
    """Cofactor matrix cof(F) = det(F) F^{-T}, matrix axes at 1 and 2."""
    d = F.shape[1]
    if d == 2:
        a, b = F[:, 0, 0], F[:, 0, 1]
        c, e = F[:, 1, 0], F[:, 1, 1]
        return np.stack([np.stack([e, -c], axis=1), np.stack([-b, a], axis=1)], axis=1)
    cols = [F[:, :, j] for j in range(3)]
    cof_cols = [np.cross(cols[1], cols[2], axis=1),
                np.cross(cols[2], cols[0], axis=1),
                np.cross(cols[0], cols[1], axis=1)]
    return np.stack(cof_cols, axis=2)


def determinant(F: np.ndarray) -> np.ndarray:
    d = F.shape[1]
    if d == 2:
        return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    return np.einsum("pi...,pi...->p...", F[:, :, 0], np.cross(F[:, :, 1], F[:, :, 2], axis=1))


def _mat_vec(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("pij...,pj...->pi...", M, u)


def _mat_t_vec(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("pji...,pj...->pi...", M, u)


def dot(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pointwise dot product of two vector fields (component axis 1)."""
    return np.einsum("pi...,pi...->p...", u, w)


@dataclass(frozen=True)
class Geometry:
    """Geometric quantities of one flow map, computed once and shared.

    Attributes:
        grid: The slab grid.
        eta: The full map (identity included).
        F: grad eta, ``F[:, i, j] = d_j eta_i``.
        cof: Cofactor matrix J A.
        J: det grad eta.
        A: (grad eta)^{-T}.
    """

    grid: SlabGrid
    eta: np.ndarray
    F: np.ndarray
    cof: np.ndarray
    J: np.ndarray
    A: np.ndarray

    @property
    def dim(self) -> int:
        return self.grid.dim

    @cached_property
    def N(self) -> np.ndarray:
        """J A e_d, i.e. the last column of the cofactor matrix."""
        return self.cof[:, :, -1]

    @cached_property
    def N_cross(self) -> np.ndarray:
        """N computed directly from tangent vectors (d_1 eta x d_2 eta in 3D)."""
        F = self.F
        if self.dim == 2:
            return np.stack([-F[:, 1, 0], F[:, 0, 0]], axis=1)
        return np.cross(F[:, :, 0], F[:, :, 1], axis=1)

    @cached_property
    def frame(self) -> tuple[np.ndarray, ...]:
        return interface_frame(self)

    # covariant operators ------------------------------------------------------
    def grad_A(self, f: np.ndarray) -> np.ndarray:
        """Covariant gradient.

        Scalar f -> (2, d, ...); vector u -> (2, d_comp, d, ...) with
        ``out[:, k, i] = A_ij d_j u_k``.
        """
        g = gradient(self.grid, f)
        if f.ndim == self.grid.dim + 1:
            return np.einsum("pij...,pj...->pi...", self.A, g)
        return np.einsum("pij...,pkj...->pki...", self.A, g)

    def div_A(self, u: np.ndarray) -> np.ndarray:
        g = gradient(self.grid, u)
        return np.einsum("pij...,pij...->p...", self.A, g)

    def laplace_A(self, u: np.ndarray) -> np.ndarray:
        """div_A grad_A applied componentwise (scalar or vector)."""
        if u.ndim == self.grid.dim + 1:
            return self.div_A(self.grad_A(u))
        return np.stack([self.div_A(self.grad_A(u[:, k])) for k in range(u.shape[1])], axis=1)

    def directional(self, w: np.ndarray, f: np.ndarray) -> np.ndarray:
        """(w . grad) f with ordinary derivatives; f scalar or vector."""
        g = gradient(self.grid, f)
        if f.ndim == self.grid.dim + 1:
            return dot(w, g)
        return np.einsum("pj...,pkj...->pk...", w, g)

    def piola_residual(self) -> np.ndarray:
        """d_j (J A_ij) for each i; zero in the continuum."""
        out = np.zeros((2, self.dim) + self.J.shape[1:])
        for j in range(self.dim):
            out += partial(self.grid, self.cof[:, :, j], j)
        return out

    def A_transpose_times(self, u: np.ndarray) -> np.ndarray:
        """A^T u."""
        return _mat_t_vec(self.A, u)

    def F_times(self, u: np.ndarray) -> np.ndarray:
        return _mat_vec(self.F, u)


def build_geometry(grid: SlabGrid, eta: np.ndarray, j_min: float = 1e-8,
                   F: np.ndarray | None = None) -> Geometry:
    """Compute A, J, N for the map eta.

    A is the explicit inverse-transpose (cofactor over determinant).

    Raises:
        SingularMap: if |J| < j_min at any node.
    """
    if eta.shape != grid.vector_shape:
        raise ValueError(f"eta has shape {eta.shape}, expected {grid.vector_shape}")
    if F is None:
        F = map_gradient(grid, eta)
    cof = cofactor(F)
    J = determinant(F)
    jmin = float(np.min(np.abs(J)))
    if not np.isfinite(jmin) or jmin < j_min:
        raise SingularMap(f"min |J| = {jmin:.3e} below threshold {j_min:.3e}")
    A = cof / J[:, None, None]
    return Geometry(grid=grid, eta=eta, F=F, cof=cof, J=J, A=A)


def interface_frame(geom: Geometry, tol: float = 1e-10) -> tuple[np.ndarray, ...]:
    """Orthonormal frame built from the tangents d_1 eta (, d_2 eta) and N.

    Returns (tau1, n) in 2D and (tau1, tau2, n) in 3D, defined at every node.

    Raises:
        DegenerateTangent: if |d_1 eta| < tol somewhere.
    """
    t1 = geom.F[:, :, 0]
    norm1 = np.sqrt(dot(t1, t1))
    if float(norm1.min()) < tol:
        raise DegenerateTangent(f"|d_1 eta| = {norm1.min():.3e}")
    tau1 = t1 / norm1[:, None]
    N = geom.N
    n = N / np.sqrt(dot(N, N))[:, None]
    if geom.dim == 2:
        return tau1, n
    t2 = geom.F[:, :, 1]
    t2 = t2 - dot(t2, tau1)[:, None] * tau1
    tau2 = t2 / np.sqrt(dot(t2, t2))[:, None]
    return tau1, tau2, n


def near_boundary_mask(grid: SlabGrid, iota: float = DEFAULT_IOTA) -> np.ndarray:
    """Boolean mask of nodes within distance iota of Sigma or the walls."""
    z = grid.coords[-1]
    return (np.abs(z) <= iota + 1e-14) | (np.abs(z) >= 1.0 - iota - 1e-14)
