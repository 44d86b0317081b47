"""Discrete Sobolev-type norms on the two-phase slab.

H^k is the sum over both phases of L^2 norms of all mixed derivatives of
order <= k (spectral tangential, nested one-sided FD normal). The
anisotropic norm counts Z^alpha = d_1^a1 [d_2^a2] Z_3^a3 on top of that,
following ||f||_{k,l} = sum_{|alpha|<=l} ||Z^alpha f||_k.

Full flow maps carry the non-periodic identity; :func:`map_derivative`
differentiates it analytically and the periodic remainder numerically.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np

from .errors import DerivativeBudgetExceeded
from .grid import SlabGrid, _spectral, l2_norm_sq, surface_norm_sq, z3_derivative


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int, exact: bool = False) -> tuple[tuple[int, ...], ...]:
    """All multi-indices in N^dim with |beta| <= order (== order if exact)."""
    out = [b for b in product(range(order + 1), repeat=dim)
           if (sum(b) == order if exact else sum(b) <= order)]
    return tuple(sorted(out, key=lambda b: (sum(b), b)))


def derivative_budget(grid: SlabGrid) -> int:
    """Largest total derivative count the grid resolves cleanly."""
    return max(1, min(grid.n_normal, grid.n_tangential) // 4)


def check_budget(grid: SlabGrid, order: int) -> None:
    if order > derivative_budget(grid):
        raise DerivativeBudgetExceeded(
            f"{order} derivatives requested, grid resolves at most {derivative_budget(grid)}")


def derivative(grid: SlabGrid, f: np.ndarray, beta) -> np.ndarray:
    """Ordinary mixed derivative d^beta f (normal part applied first)."""
    out = f
    for _ in range(beta[-1]):
        out = out @ grid.D1T
    for j in range(grid.dim - 1):
        if beta[j]:
            out = _spectral(grid, out, j - grid.dim, beta[j])
    return out


def z_derivative(grid: SlabGrid, f: np.ndarray, alpha) -> np.ndarray:
    """Z^alpha f with Z_3 applied first."""
    out = f
    for _ in range(alpha[-1]):
        out = z3_derivative(grid, out)
    for j in range(grid.dim - 1):
        if alpha[j]:
            out = _spectral(grid, out, j - grid.dim, alpha[j])
    return out


def _identity_part(grid: SlabGrid, ops: list[tuple[str, tuple[int, ...]]]) -> np.ndarray:
    """Apply a sequence of ('z', alpha) / ('d', beta) operators to the identity map."""
    comps = []
    for i in range(grid.dim):
        if i == grid.dim - 1:
            out = grid.coords[i]
            for kind, idx in ops:
                out = z_derivative(grid, out, idx) if kind == "z" else derivative(grid, out, idx)
        else:
            total = np.zeros(grid.dim, dtype=int)
            for _, idx in ops:
                total += np.asarray(idx)
            has_z = any(kind == "z" and idx[-1] > 0 for kind, idx in ops)
            if total.sum() == 0:
                out = grid.coords[i]
            elif total.sum() == 1 and total[i] == 1 and not has_z:
                out = np.ones(grid.scalar_shape)
            else:
                out = np.zeros(grid.scalar_shape)
        comps.append(out)
    return np.stack(comps, axis=1)


def map_derivative(grid: SlabGrid, eta: np.ndarray, ops) -> np.ndarray:
    """Apply ``ops`` (list of ('z'|'d', multi-index), innermost first) to a full map."""
    out = eta - grid.identity
    for kind, idx in ops:
        out = z_derivative(grid, out, idx) if kind == "z" else derivative(grid, out, idx)
    return out + _identity_part(grid, ops)


def hk_norm_sq(grid: SlabGrid, f: np.ndarray, k: int, is_map: bool = False) -> float:
    """||f||_k^2 summed over phases (and components)."""
    total = 0.0
    for beta in multi_indices(grid.dim, k):
        if is_map:
            g = map_derivative(grid, f, [("d", beta)])
        else:
            g = derivative(grid, f, beta)
        total += l2_norm_sq(grid, g)
    return total


def anisotropic_norm(grid: SlabGrid, f: np.ndarray, k: int, l: int, is_map: bool = False) -> float:
    """||f||_{k,l} = sum over |alpha| <= l of ||Z^alpha f||_k.

    Raises:
        DerivativeBudgetExceeded: if k + l exceeds the grid budget.
    """
    check_budget(grid, k + l)
    total = 0.0
    for alpha in multi_indices(grid.dim, l):
        if is_map:
            sq = 0.0
            for beta in multi_indices(grid.dim, k):
                g = map_derivative(grid, f, [("z", alpha), ("d", beta)])
                sq += l2_norm_sq(grid, g)
        else:
            sq = hk_norm_sq(grid, z_derivative(grid, f, alpha), k)
        total += np.sqrt(sq)
    return float(total)


def boundary_norm_sq(grid: SlabGrid, trace: np.ndarray, m: int) -> float:
    """|g|_m^2 on Sigma: sum of L^2(Sigma) norms of tangential derivatives <= m.

    ``trace`` has shape ([C,] *tangential) and must be periodic; use
    :func:`map_boundary_norm_sq` for traces of full maps.
    """
    nt = grid.dim - 1
    total = 0.0
    for gamma in multi_indices(nt, m):
        out = trace
        for j in range(nt):
            if gamma[j]:
                out = _spectral(grid, out, j - nt, gamma[j])
        total += surface_norm_sq(grid, out)
    return total


def map_boundary_norm_sq(grid: SlabGrid, eta_trace: np.ndarray, m: int) -> float:
    """|eta|_m^2 on Sigma for the trace of a full map, shape (d, *tangential)."""
    nt = grid.dim - 1
    xs = np.meshgrid(*([grid.x_t] * nt), indexing="ij")
    disp = eta_trace.copy()
    for i in range(nt):
        disp[i] = disp[i] - xs[i]
    total = 0.0
    for gamma in multi_indices(nt, m):
        out = disp
        for j in range(nt):
            if gamma[j]:
                out = _spectral(grid, out, j - nt, gamma[j])
        out = out.copy()
        for i in range(nt):
            if sum(gamma) == 0:
                out[i] = out[i] + xs[i]
            elif sum(gamma) == 1 and gamma[i] == 1:
                out[i] = out[i] + 1.0
        total += surface_norm_sq(grid, out)
    return total
