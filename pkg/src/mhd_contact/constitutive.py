"""Reference data and the closed-form reconstructions of rho, p, b from eta.

Mass and magnetic flux are carried by the Lagrangian map:

    rho = rho0 J0 / J,    p = p0 (J0 / J)^gamma,    b = J^{-1} (w . grad) eta

with w = J0 A0^T b0 frozen at t = 0. The module also reports how well the
two transported invariants (J div_A b and b . N) and the interface jumps
hold along a computed trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import ConfigError, NonPositivePressure
from .geometry import Geometry, build_geometry, dot, map_gradient
from .grid import Phase, SlabGrid, gradient, jump, partial, wall_trace

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 5.0 / 3.0


def density_from_entropy(p0: np.ndarray, s0: np.ndarray, gamma: float, a_const: float) -> np.ndarray:
    """rho0 = A^{-1/gamma} exp(-s0/gamma) p0^{1/gamma}, from p = A rho^gamma e^s."""
    return a_const ** (-1.0 / gamma) * np.exp(-s0 / gamma) * p0 ** (1.0 / gamma)


@dataclass
class ReferenceData:
    """Frozen t = 0 data of both phases.

    ``eta0`` is the full initial map; ``p0``, ``rho0``, ``s0`` are scalar
    fields and ``v0``, ``b0`` vector fields in the grid layout.
    """

    grid: SlabGrid
    eta0: np.ndarray
    p0: np.ndarray
    v0: np.ndarray
    b0: np.ndarray
    rho0: np.ndarray
    s0: np.ndarray
    gamma: float = DEFAULT_GAMMA
    a_const: float = 1.0
    c0: float = 0.1
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_entropy(cls, grid: SlabGrid, eta0, p0, v0, b0, s0, gamma=DEFAULT_GAMMA,
                     a_const=1.0, c0=0.1) -> "ReferenceData":
        rho0 = density_from_entropy(p0, s0, gamma, a_const)
        return cls(grid, eta0, p0, v0, b0, rho0, s0, gamma, a_const, c0)

    @classmethod
    def from_density(cls, grid: SlabGrid, eta0, p0, v0, b0, rho0, gamma=DEFAULT_GAMMA,
                     a_const=1.0, c0=0.1) -> "ReferenceData":
        with np.errstate(invalid="ignore", divide="ignore"):  # inadmissible p0 is reported by validate()
            s0 = -gamma * np.log(rho0 * a_const ** (1.0 / gamma) / p0 ** (1.0 / gamma))
        return cls(grid, eta0, p0, v0, b0, rho0, s0, gamma, a_const, c0)

    def replace(self, **changes) -> "ReferenceData":
        kw = dict(grid=self.grid, eta0=self.eta0, p0=self.p0, v0=self.v0, b0=self.b0,
                  rho0=self.rho0, s0=self.s0, gamma=self.gamma, a_const=self.a_const,
                  c0=self.c0, extra=dict(self.extra))
        kw.update(changes)
        return ReferenceData(**kw)

    @cached_property
    def geometry0(self) -> Geometry:
        return build_geometry(self.grid, self.eta0, j_min=self.c0 / 4)

    @cached_property
    def w(self) -> np.ndarray:
        """The frozen Lagrangian flux field J0 A0^T b0."""
        g = self.geometry0
        return g.J[:, None] * g.A_transpose_times(self.b0)

    @cached_property
    def rho0_J0(self) -> np.ndarray:
        return self.rho0 * self.geometry0.J

    @cached_property
    def p0_J0_gamma(self) -> np.ndarray:
        return self.p0 * self.geometry0.J ** self.gamma

    @cached_property
    def J0_div_b0(self) -> np.ndarray:
        """J0 div_{A0} b0 in Piola (conservative) form, d_j (J0 A0^T b0)_j."""
        w = self.w
        return sum(partial(self.grid, w[:, j], j) for j in range(self.grid.dim))

    def hypothesis_residuals(self) -> dict[str, float]:
        """Residuals of the standing assumptions on the data.

        Lower bounds are reported as margins (min value - c0), everything
        else as max-abs residuals.
        """
        g = self.geometry0
        N0 = g.N
        bN = dot(self.b0, N0)
        traces = np.concatenate([np.ravel(bN[Phase.PLUS, ..., 0]), np.ravel(bN[Phase.MINUS, ..., -1]),
                                 np.ravel(wall_trace(bN, Phase.PLUS)), np.ravel(wall_trace(bN, Phase.MINUS))])
        d3eta = partial(self.grid, self.eta0 - self.grid.identity, self.grid.dim - 1)
        d = self.grid.dim
        rho_from_s = density_from_entropy(self.p0, self.s0, self.gamma, self.a_const)
        return {
            "rho0_margin": float(self.rho0.min() - self.c0),
            "p0_margin": float(self.p0.min() - self.c0),
            "J0_margin": float(np.abs(g.J).min() - self.c0),
            "bN_margin": float(np.abs(traces).min() - self.c0),
            "jump_eta0": float(np.abs(jump(self.eta0)).max()),
            "jump_d3eta0": float(np.abs(jump(d3eta)).max()),
            "jump_b0_dot_N0": float(np.abs(dot_trace(jump(self.b0), N0[Phase.PLUS, ..., 0])).max()),
            "wall_eta0_normal": float(max(np.abs(wall_trace(self.eta0[:, d - 1], Phase.PLUS) - 1.0).max(),
                                          np.abs(wall_trace(self.eta0[:, d - 1], Phase.MINUS) + 1.0).max())),
            "entropy_consistency": float(np.abs(rho_from_s - self.rho0).max()),
        }

    def validate(self, jump_tol: float = 1e-8) -> None:
        """Raise ConfigError if a standing assumption fails."""
        r = self.hypothesis_residuals()
        bad = [k for k in ("rho0_margin", "p0_margin", "J0_margin", "bN_margin") if r[k] < 0]
        bad += [k for k in ("jump_eta0", "jump_d3eta0", "jump_b0_dot_N0", "wall_eta0_normal")
                if r[k] > jump_tol]
        if bad:
            raise ConfigError("reference data violates " + ", ".join(f"{k}={r[k]:.3e}" for k in bad))


def dot_trace(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Dot product for trace arrays with the component axis first."""
    return np.einsum("i...,i...->...", u, w)


@dataclass
class PhaseFields:
    """Reconstructed physical fields at one instant."""

    rho: np.ndarray
    p: np.ndarray
    v: np.ndarray
    b: np.ndarray

    @property
    def q(self) -> np.ndarray:
        """Total pressure p + |b|^2/2."""
        return self.p + 0.5 * np.einsum("pi...,pi...->p...", self.b, self.b)


def reconstruct_thermo(geom: Geometry, ref: ReferenceData, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """rho = rho0 J0 / J and p = p0 (J0/J)^gamma.

    Raises:
        NonPositivePressure: if rho or p falls below c0/4 and ``check`` is set.
    """
    rho = ref.rho0_J0 / geom.J
    p = ref.p0_J0_gamma * geom.J ** (-ref.gamma)
    if check:
        floor = ref.c0 / 4
        if rho.min() < floor or p.min() < floor:
            raise NonPositivePressure(f"min rho={rho.min():.3e}, min p={p.min():.3e} below {floor:.3e}")
    return rho, p


def reconstruct_b(geom: Geometry, ref: ReferenceData) -> np.ndarray:
    """Cauchy's formula b = J^{-1} (J0 A0^T b0 . grad) eta = F w / J."""
    return geom.F_times(ref.w) / geom.J[:, None]


def reconstruct(grid: SlabGrid, eta: np.ndarray, v: np.ndarray, ref: ReferenceData,
                geom: Geometry | None = None, check: bool = True) -> PhaseFields:
    if geom is None:
        geom = build_geometry(grid, eta, j_min=ref.c0 / 4)
    rho, p = reconstruct_thermo(geom, ref, check=check)
    return PhaseFields(rho=rho, p=p, v=v, b=reconstruct_b(geom, ref))


# -- invariant monitors --------------------------------------------------------------
def flux_divergence(grid: SlabGrid, geom: Geometry, b: np.ndarray) -> np.ndarray:
    """J div_A b in Piola form d_j (J A^T b)_j."""
    flux = np.einsum("pij...,pi...->pj...", geom.cof, b)
    return sum(partial(grid, flux[:, j], j) for j in range(grid.dim))


def normal_flux_traces(geom: Geometry, b: np.ndarray) -> np.ndarray:
    """b . N on Sigma (both sides) and on the two walls, stacked."""
    bN = dot(b, geom.N)
    return np.stack([bN[Phase.MINUS, ..., -1], bN[Phase.PLUS, ..., 0],
                     bN[Phase.MINUS, ..., 0], bN[Phase.PLUS, ..., -1]])


@dataclass
class Prop1Drift:
    """Max-over-time drifts of the two transported invariants."""

    div_drift: float
    normal_flux_drift: float
    per_state: list = field(default_factory=list)


def check_prop1(states: Iterable[tuple[np.ndarray, np.ndarray]], ref: ReferenceData) -> Prop1Drift:
    """Drift of J div_A b and of b . N along a trajectory.

    Args:
        states: Pairs (eta, b); b may be the Cauchy reconstruction or an
            independently time-stepped field.
        ref: Reference data.
    """
    grid = ref.grid
    g0 = ref.geometry0
    div0 = flux_divergence(grid, g0, ref.b0)
    bn0 = normal_flux_traces(g0, ref.b0)
    worst_div = worst_bn = 0.0
    rows = []
    for eta, b in states:
        g = build_geometry(grid, eta, j_min=ref.c0 / 4)
        dd = float(np.abs(flux_divergence(grid, g, b) - div0).max())
        dn = float(np.abs(normal_flux_traces(g, b) - bn0).max())
        rows.append((dd, dn))
        worst_div, worst_bn = max(worst_div, dd), max(worst_bn, dn)
    return Prop1Drift(worst_div, worst_bn, rows)


@dataclass
class JumpReport:
    p: float
    v: float
    b: float
    d3v: float
    eta: float
    d3eta: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def check_prop2_jumps(grid: SlabGrid, eta: np.ndarray, v: np.ndarray, ref: ReferenceData,
                      geom: Geometry | None = None) -> JumpReport:
    """Max interface jumps of p, v, b, d_3 v, eta, d_3 eta."""
    fields = reconstruct(grid, eta, v, ref, geom=geom, check=False)
    n = grid.dim - 1
    d3v = partial(grid, v, n)
    d3eta = partial(grid, eta - grid.identity, n)

    def mx(a):
        return float(np.abs(jump(a)).max())

    return JumpReport(p=mx(fields.p), v=mx(v), b=mx(fields.b), d3v=mx(d3v), eta=mx(eta), d3eta=mx(d3eta))


def mass_density(geom: Geometry, ref: ReferenceData) -> np.ndarray:
    """rho J as reconstructed; equals rho0 J0 up to one rounding per node."""
    rho, _ = reconstruct_thermo(geom, ref, check=False)
    return rho * geom.J
