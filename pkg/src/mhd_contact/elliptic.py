"""Per-phase harmonic and biharmonic lifts of boundary data.

The tangential directions are diagonalized by the FFT; every Fourier mode
then needs one small dense solve in x_d with the fourth-order normal
stencils. Both phases are solved independently.
"""

from __future__ import annotations

import numpy as np

from .errors import EllipticSolveFailure
from .grid import SlabGrid


def _k2(grid: SlabGrid) -> np.ndarray:
    """|k|^2 of every rfft mode, shape = rfft output shape of a trace."""
    n = grid.n_tangential
    kr = np.fft.rfftfreq(n, d=1.0 / n)
    if grid.dim == 2:
        return kr ** 2
    kf = np.fft.fftfreq(n, d=1.0 / n)
    return kf[:, None] ** 2 + kr[None, :] ** 2


def _tan_axes(grid: SlabGrid) -> tuple[int, ...]:
    return tuple(range(-(grid.dim - 1), 0))


def _solve(grid: SlabGrid, mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve mats[mode] x = rhs[..., mode, :] for all leading batch entries."""
    try:
        lu_sol = np.linalg.solve(mats, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise EllipticSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(lu_sol)):
        raise EllipticSolveFailure("non-finite values in elliptic solve")
    return lu_sol


def _to_field(grid: SlabGrid, modes: np.ndarray, batch_shape) -> np.ndarray:
    # modes: (*batch, *kshape, nz) -> physical (*batch, *tan, nz)
    nt = grid.dim - 1
    axes = tuple(range(len(batch_shape), len(batch_shape) + nt))
    return np.fft.irfftn(modes, s=grid.tangential_shape, axes=axes)


def _mode_traces(grid: SlabGrid, g: np.ndarray) -> np.ndarray:
    return np.fft.rfftn(g, axes=_tan_axes(grid))


def harmonic_lift(grid: SlabGrid, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Per-phase solution of Delta w = 0 with w = lower / upper at the ends.

    Args:
        lower, upper: Traces at the low-x_d and high-x_d end of each phase,
            shape (2, [C,] *tangential).

    Returns:
        Field of shape (2, [C,] *tangential, nz).
    """
    nz = grid.nz
    k2 = _k2(grid).ravel()
    M = grid.D2[None, :, :] - k2[:, None, None] * np.eye(nz)[None]
    M[:, 0, :] = 0.0
    M[:, 0, 0] = 1.0
    M[:, -1, :] = 0.0
    M[:, -1, -1] = 1.0
    lo, hi = _mode_traces(grid, lower), _mode_traces(grid, upper)
    batch = lo.shape[: lo.ndim - (grid.dim - 1)]
    kshape = lo.shape[lo.ndim - (grid.dim - 1):]
    rhs = np.zeros(batch + (k2.size, nz), dtype=complex)
    rhs[..., 0] = lo.reshape(batch + (-1,))
    rhs[..., -1] = hi.reshape(batch + (-1,))
    sol = _solve(grid, M, rhs)
    return _to_field(grid, sol.reshape(batch + kshape + (nz,)), batch)


def biharmonic_lift(grid: SlabGrid, lower: np.ndarray, upper: np.ndarray,
                    lower_d: np.ndarray, upper_d: np.ndarray) -> np.ndarray:
    """Per-phase solution of Delta^2 w = 0 with value and d_d-derivative data.

    The derivative conditions use the one-sided end rows of the normal
    first-derivative matrix, so the discrete d_d w at the ends equals the
    data exactly.
    """
    nz = grid.nz
    k2 = _k2(grid).ravel()
    I = np.eye(nz)[None]
    L = grid.D2[None] - k2[:, None, None] * I
    M = np.einsum("kij,kjl->kil", L, L)
    for r, row in ((0, I[0, 0]), (1, grid.D1[0]), (nz - 2, grid.D1[-1]), (nz - 1, I[0, -1])):
        M[:, r, :] = row
    lo, hi = _mode_traces(grid, lower), _mode_traces(grid, upper)
    dlo, dhi = _mode_traces(grid, lower_d), _mode_traces(grid, upper_d)
    batch = lo.shape[: lo.ndim - (grid.dim - 1)]
    kshape = lo.shape[lo.ndim - (grid.dim - 1):]
    rhs = np.zeros(batch + (k2.size, nz), dtype=complex)
    rhs[..., 0] = lo.reshape(batch + (-1,))
    rhs[..., 1] = dlo.reshape(batch + (-1,))
    rhs[..., -2] = dhi.reshape(batch + (-1,))
    rhs[..., -1] = hi.reshape(batch + (-1,))
    sol = _solve(grid, M, rhs)
    return _to_field(grid, sol.reshape(batch + kshape + (nz,)), batch)
