"""Canonical initial data for runs, studies and tests.

Every builder takes a :class:`SlabGrid` and returns :class:`ReferenceData`.
Densities differ between the phases (an entropy jump) while pressure,
velocity and magnetic field are continuous, so each case is a genuine
contact discontinuity with b transversal to the interface.
"""

from __future__ import annotations

import numpy as np

from .constitutive import DEFAULT_GAMMA, ReferenceData
from .grid import SlabGrid
from .initial_data import enforce_compatibility, smooth_step

CASES = ("equilibrium", "wave", "rough", "manufactured", "contact")


def interface_bump(z: np.ndarray) -> np.ndarray:
    """chi(x_d) = (1 - x_d^2)^2: one at Sigma, zero with its slope at the walls."""
    return (1.0 - z ** 2) ** 2


def core_profile(z: np.ndarray, flat: float = 0.3, width: float = 0.4) -> np.ndarray:
    """Smooth profile equal to 1 for |x_d| <= flat and 0 beyond flat + width."""
    return 1.0 - smooth_step((np.abs(z) - flat) / width)


def phase_constant(grid: SlabGrid, minus: float, plus: float) -> np.ndarray:
    out = np.empty(grid.scalar_shape)
    out[0] = minus
    out[1] = plus
    return out


def graph_map(grid: SlabGrid, h0: np.ndarray) -> np.ndarray:
    """eta0 = (x', x_d + chi(x_d) h0(x')) for a graph interface x_d = h0."""
    eta = grid.identity.copy()
    eta[:, -1] = eta[:, -1] + interface_bump(grid.coords[-1]) * h0
    return eta


def _constant_vector(grid: SlabGrid, vec) -> np.ndarray:
    return np.stack([np.full(grid.scalar_shape, float(c)) for c in vec], axis=1)


def default_field(dim: int, tilt: float = 0.3) -> tuple[float, ...]:
    return (tilt, 1.0) if dim == 2 else (tilt, 0.5 * tilt, 1.0)


def equilibrium(grid: SlabGrid, rho=(1.0, 2.0), p: float = 1.0, b=None, amplitude: float = 0.0,
                gamma: float = DEFAULT_GAMMA, c0: float = 0.1) -> ReferenceData:
    """Static contact: constant p, b, zero v, density jump.

    With ``amplitude`` > 0 the labels are deformed by a smooth graph map;
    the Eulerian state is unchanged, so the data is still an exact
    equilibrium of the continuous problem.
    """
    b = default_field(grid.dim) if b is None else b
    h0 = amplitude * np.cos(grid.coords[0])
    eta = graph_map(grid, h0)
    return ReferenceData.from_density(grid, eta, np.full(grid.scalar_shape, p), np.zeros(grid.vector_shape),
                                      _constant_vector(grid, b), phase_constant(grid, *rho), gamma, c0=c0)


def wave(grid: SlabGrid, amplitude: float = 0.05, velocity: float = 0.05, rho=(1.0, 2.0), b=None,
         profile: tuple[float, float] = (0.1, 0.8), mode: int = 1,
         m: int = 3, compatible: bool = True, gamma: float = DEFAULT_GAMMA, c0: float = 0.1) -> ReferenceData:
    """Small-amplitude interface wave.

    The interface is the graph x_d = amplitude cos(mode x_1) and the
    velocity is a smooth shear of the same wavenumber localized around Sigma. With ``compatible`` the
    corrector sweeps make the data compatible to order m-1.
    """
    b = default_field(grid.dim) if b is None else b
    x, z = grid.coords[0], grid.coords[-1]
    eta = graph_map(grid, amplitude * np.cos(mode * x))
    prof = core_profile(z, *profile)
    v = np.zeros(grid.vector_shape)
    v[:, 0] = velocity * np.sin(mode * x) * prof
    v[:, -1] = 0.5 * velocity * np.cos(mode * x) * prof
    ref = ReferenceData.from_density(grid, eta, np.ones(grid.scalar_shape), v, _constant_vector(grid, b),
                                     phase_constant(grid, *rho), gamma, c0=c0)
    if compatible:
        ref = enforce_compatibility(ref, m).ref
    return ref


def rough_height(grid: SlabGrid, amplitude: float, decay: float, seed: int, kmax: int | None = None) -> np.ndarray:
    """Random tangential field with Fourier amplitudes ~ k^-decay (no mean)."""
    rng = np.random.default_rng(seed)
    nt = grid.dim - 1
    kmax = grid.n_tangential // 3 if kmax is None else kmax
    xs = grid.coords[:nt]
    out = np.zeros(grid.scalar_shape)
    for k in range(1, kmax + 1):
        for direction in range(nt):
            a, ph = rng.normal(), rng.uniform(0, 2 * np.pi)
            out += a * k ** (-decay) * np.cos(k * xs[direction] + ph)
    return amplitude * out / max(1e-300, np.abs(out).max())


def rough(grid: SlabGrid, amplitude: float = 0.05, velocity: float = 0.05, decay: float = 2.5,
          seed: int = 7, rho=(1.0, 2.0), b=None, gamma: float = DEFAULT_GAMMA, c0: float = 0.1) -> ReferenceData:
    """Rough but compatible data for the smoothing pipeline.

    The interface height and the velocity are rough in the tangential
    directions; v is C^1 across Sigma and vanishes near the walls, p and b
    are constant. Compatibility holds to first order in the continuum.
    """
    b = default_field(grid.dim) if b is None else b
    z = grid.coords[-1]
    eta = graph_map(grid, rough_height(grid, amplitude, decay, seed))
    v = np.zeros(grid.vector_shape)
    v[:, 0] = rough_height(grid, velocity, decay, seed + 1) * core_profile(z)
    v[:, -1] = rough_height(grid, velocity, decay, seed + 2) * core_profile(z)
    return ReferenceData.from_density(grid, eta, np.ones(grid.scalar_shape), v, _constant_vector(grid, b),
                                      phase_constant(grid, *rho), gamma, c0=c0)


def manufactured(grid: SlabGrid, seed: int = 0, amplitude: float = 0.05, modes: int = 2,
                 gamma: float = DEFAULT_GAMMA, c0: float = 0.1) -> ReferenceData:
    """Random smooth band-limited state (not a solution; for identity checks).

    Every field is a low-mode trigonometric polynomial in x' times a
    polynomial in x_d, so all derivatives are resolved.
    """
    rng = np.random.default_rng(seed)
    coords = grid.coords
    z = coords[-1]

    def smooth_scalar(scale: float) -> np.ndarray:
        out = np.zeros(grid.scalar_shape)
        for _ in range(modes):
            ks = rng.integers(0, 3, size=grid.dim - 1)
            ph = rng.uniform(0, 2 * np.pi)
            arg = sum(k * c for k, c in zip(ks, coords[:-1])) + ph
            poly = rng.normal() + rng.normal() * z + rng.normal() * z ** 2
            out += np.cos(arg) * poly
        return scale * out

    eta = grid.identity.copy()
    bump = interface_bump(z)
    for i in range(grid.dim):
        eta[:, i] = eta[:, i] + amplitude * bump * smooth_scalar(1.0)
    p = 1.0 + amplitude * smooth_scalar(1.0)
    rho = phase_constant(grid, 1.0, 1.5) + amplitude * smooth_scalar(1.0)
    v = np.stack([amplitude * smooth_scalar(1.0) for _ in range(grid.dim)], axis=1)
    b = _constant_vector(grid, default_field(grid.dim)) + np.stack(
        [amplitude * smooth_scalar(1.0) for _ in range(grid.dim)], axis=1)
    return ReferenceData.from_density(grid, eta, p, v, b, rho, gamma, c0=c0)


def fourier_graph(grid: SlabGrid, modes) -> np.ndarray:
    """Sum of a_cos cos(k . x') + a_sin sin(k . x') over ``modes``.

    Each mode is (k_1, [k_2,] a_cos, a_sin) with integer wavenumbers.
    """
    nt = grid.dim - 1
    out = np.zeros(grid.scalar_shape)
    for mode in modes:
        if len(mode) != nt + 2:
            raise ValueError(f"mode {mode!r} needs {nt} wavenumbers and two amplitudes")
        arg = sum(float(k) * x for k, x in zip(mode[:nt], grid.coords[:nt]))
        out += mode[nt] * np.cos(arg) + mode[nt + 1] * np.sin(arg)
    return out


def contact(grid: SlabGrid, interface=(), p: float = 1.0, rho=(1.0, 2.0), entropy=None, b=None,
            velocity=(), profile: tuple[float, float] = (0.1, 0.8), m: int = 3, compatible: bool = False,
            gamma: float = DEFAULT_GAMMA, c0: float = 0.1) -> ReferenceData:
    """General contact from Fourier data.

    Args:
        interface: Modes of the interface graph h0, see :func:`fourier_graph`.
        p: Common pressure (continuous by construction).
        rho: Phase densities (minus, plus); ignored when ``entropy`` is given.
        entropy: Optional phase entropies (minus, plus).
        b: Constant field; its jump vanishes, so [b].N = 0 holds.
        velocity: Modes of a scalar amplitude g; v = (g, ..., g/2) times a
            profile localized around Sigma.
    """
    b = default_field(grid.dim) if b is None else b
    if len(b) != grid.dim:
        raise ValueError(f"b needs {grid.dim} components")
    eta = graph_map(grid, fourier_graph(grid, interface))
    amp = fourier_graph(grid, velocity) * core_profile(grid.coords[-1], *profile)
    v = np.zeros(grid.vector_shape)
    for i in range(grid.dim - 1):
        v[:, i] = amp
    v[:, -1] = 0.5 * amp
    p0 = np.full(grid.scalar_shape, float(p))
    if entropy is not None:
        ref = ReferenceData.from_entropy(grid, eta, p0, v, _constant_vector(grid, b),
                                         phase_constant(grid, *entropy), gamma, c0=c0)
    else:
        ref = ReferenceData.from_density(grid, eta, p0, v, _constant_vector(grid, b),
                                         phase_constant(grid, *rho), gamma, c0=c0)
    if compatible:
        ref = enforce_compatibility(ref, m).ref
    return ref


def build_case(name: str, grid: SlabGrid, **params) -> ReferenceData:
    builders = {"equilibrium": equilibrium, "wave": wave, "rough": rough, "manufactured": manufactured,
                "contact": contact}
    if name not in builders:
        raise KeyError(f"unknown case {name!r}; choose from {CASES}")
    return builders[name](grid, **params)
