"""Time stepping of the reduced viscous system for (eta, v).

Only the flow map and the velocity are evolved; rho, p and b are rebuilt
from eta at every stage by the closed-form reconstructions. The momentum
equation in Lagrangian form reads

    v_t = J / (rho0 J0) * ( J^{-1} w_j d_j b - grad_A Q + Psi + eps Delta_A v ),
    Q   = p0 J0^gamma J^{-gamma} + |b|^2 / 2,

with w = J0 A0^T b0. The interface nodes of eta and v are not free: their
common value is the one that makes the six-point one-sided normal
derivatives agree from both sides (discrete C^1 matching). Accelerations at
Sigma follow by the same linear map, so the closure holds at every stage.
Walls carry v = 0.

Two schemes are offered. ``explicit`` is classical RK4 on the full right
hand side. ``imex`` Strang-splits the viscous term: a Crank-Nicolson half
step (frozen geometry, matrix-free GMRES), an RK4 step of the ideal part,
and a second Crank-Nicolson half step.
"""

from __future__ import annotations

import logging
from collections import deque
from math import comb
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .constitutive import ReferenceData
from .errors import CflViolation, ConfigError, EllipticSolveFailure, NonPositivePressure, TransversalityLost
from .geometry import Geometry, build_geometry
from .grid import Phase, SlabGrid, _spectral, wall_trace

log = logging.getLogger(__name__)

SCHEMES = ("imex", "explicit")


# -- interface / wall closure --------------------------------------------------------------
def closure_value(grid: SlabGrid, f: np.ndarray) -> np.ndarray:
    """Shared Sigma value making the one-sided d_d f agree from both sides."""
    c = grid.closure_weights
    n = grid.nz - 1
    acc = 0.0
    for k in range(1, len(c)):
        acc = acc + c[k] * (f[Phase.PLUS, ..., k] + f[Phase.MINUS, ..., n - k])
    return -acc / (2.0 * c[0])


def apply_closure(grid: SlabGrid, f: np.ndarray, zero_walls: bool, wall_values=None) -> np.ndarray:
    """Overwrite the Sigma nodes (and optionally the wall nodes) in place."""
    val = closure_value(grid, f)
    f[Phase.PLUS, ..., 0] = val
    f[Phase.MINUS, ..., -1] = val
    if zero_walls:
        f[Phase.MINUS, ..., 0] = 0.0
        f[Phase.PLUS, ..., -1] = 0.0
    elif wall_values is not None:
        f[Phase.MINUS, ..., 0] = wall_values[0]
        f[Phase.PLUS, ..., -1] = wall_values[1]
    return f


def close_map(grid: SlabGrid, eta: np.ndarray, wall_values=None) -> np.ndarray:
    """Closure applied to the displacement eta - id (the identity is already C^1)."""
    xi = eta - grid.identity
    apply_closure(grid, xi, zero_walls=False, wall_values=wall_values)
    return grid.identity + xi


def one_sided_jump(grid: SlabGrid, f: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Difference of one-sided d_d f at Sigma computed with ``weights`` (plus side form)."""
    n = grid.nz - 1
    k = len(weights)
    plus = sum(weights[i] * f[Phase.PLUS, ..., i] for i in range(k))
    minus = -sum(weights[i] * f[Phase.MINUS, ..., n - i] for i in range(k))
    return plus - minus


def local_truncation_scale(grid: SlabGrid, f: np.ndarray) -> float:
    """Size of the one-sided normal-derivative truncation error at Sigma.

    Per side this is |(D1 end row - six-point closure row) f|; the jump of
    D1-based normal derivatives of a closed field is bounded by the sum of
    the two sides.
    """
    c = grid.closure_weights
    diff = grid.D1[0, : len(c)] - c
    n = grid.nz - 1
    plus = sum(diff[i] * f[Phase.PLUS, ..., i] for i in range(len(c)))
    minus = sum(diff[i] * f[Phase.MINUS, ..., n - i] for i in range(len(c)))
    return float(np.abs(plus).max() + np.abs(minus).max())


def dissipation_matrix(nz: int, h: float, sigma: float, order: int = 3) -> np.ndarray:
    """-(sigma/h) P^T P with P the undivided ``order``-th forward difference.

    Symmetric negative semidefinite; O(h^(2 order - 1)) on smooth interior
    data and O(h^(order - 1)) at the few rows touching a phase end.
    """
    P = np.zeros((nz - order, nz))
    for k in range(order + 1):
        P[np.arange(nz - order), np.arange(nz - order) + k] = (-1) ** (order - k) * comb(order, k)
    return -(sigma / h) * (P.T @ P)


# -- configuration and state ------------------------------------------------------------------
@dataclass
class StepConfig:
    """Integrator settings.

    Attributes:
        dt: Fixed step; ``None`` picks ``cfl`` times the stable step at t = 0.
        scheme: ``"imex"`` or ``"explicit"``.
        eps: Artificial viscosity.
        cfl: Safety factor on the advective (and, explicit, diffusive) limit.
        co_evolve_b: Also time-step b by its induction equation, for the
            invariant monitors.
        gmres_tol: Relative tolerance of the Crank-Nicolson solves, with an
            absolute floor of ``gmres_tol`` per node (velocities are O(1)).
        history: Length of the ring of past (t, eta, v) snapshots.
        check_cfl: Re-check the step limit every ``check_cfl`` steps (0 = never).
        dissipation: Strength sigma of the normal high-order dissipation
            -(sigma / h) P^T P v, P the undivided third difference. It
            suppresses a grid-scale instability of the one-sided stencils;
            zero disables it.
    """

    dt: float | None = None
    scheme: str = "imex"
    eps: float = 0.0
    cfl: float = 0.4
    co_evolve_b: bool = False
    gmres_tol: float = 1e-12
    history: int = 8
    check_cfl: int = 10
    dissipation: float = 0.05

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.eps < 0:
            raise ConfigError("eps must be non-negative")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl safety factor must lie in (0, 1]")
        if self.history < 1:
            raise ConfigError("history ring needs at least one slot")
        if self.dissipation < 0:
            raise ConfigError("dissipation must be non-negative")


@dataclass
class SolverState:
    """Evolved unknowns plus a ring of past snapshots for time differences."""

    t: float
    eta: np.ndarray
    v: np.ndarray
    b: np.ndarray | None = None
    step: int = 0
    history: deque = field(default_factory=deque, repr=False)

    def push_history(self, maxlen: int) -> None:
        self.history.append((self.t, self.eta.copy(), self.v.copy()))
        while len(self.history) > maxlen:
            self.history.popleft()


# -- right-hand side ---------------------------------------------------------------------------
class ViscousIntegrator:
    """RK4 / IMEX stepping of the flow map with constitutive closures.

    Args:
        ref: Reference data; must satisfy the standing assumptions.
        config: Step settings.
        psi: Optional corrector with a ``value(t)`` method.
    """

    def __init__(self, ref: ReferenceData, config: StepConfig, psi=None):
        self.ref = ref
        self.grid = ref.grid
        self.config = config
        self.psi = psi
        g = self.grid
        xi0 = ref.eta0 - g.identity
        self._xi_walls = (xi0[Phase.MINUS, ..., 0].copy(), xi0[Phase.PLUS, ..., -1].copy())
        self._inv_rho0J0 = 1.0 / ref.rho0_J0
        self._w = ref.w
        self._pJg = ref.p0_J0_gamma
        self.dt = config.dt
        self._diss_T = None
        if config.dissipation > 0:
            self._diss_T = np.ascontiguousarray(dissipation_matrix(g.nz, g.h_n, config.dissipation).T)

    # geometry / derivatives ----------------------------------------------------------------
    def _grad(self, f: np.ndarray) -> np.ndarray:
        """Gradient with the derivative axis right after the phase/component axes."""
        g = self.grid
        parts = [_spectral(g, f, j - g.dim, 1) for j in range(g.dim - 1)]
        parts.append(f @ g.D1T)
        return np.stack(parts, axis=f.ndim - g.dim)

    def geometry(self, eta: np.ndarray) -> Geometry:
        return build_geometry(self.grid, eta, j_min=self.ref.c0 / 4)

    def fields(self, geom: Geometry):
        """(J, p, b) reconstructed from the map."""
        J = geom.J
        p = self._pJg * J ** (-self.ref.gamma)
        b = np.einsum("pij...,pj...->pi...", geom.F, self._w) / J[:, None]
        return J, p, b

    def viscous_term(self, geom: Geometry, v: np.ndarray) -> np.ndarray:
        """Delta_A v = A_ij d_j (A_il d_l v) componentwise."""
        A = geom.A
        gv = self._grad(v)                                   # (2, k, l, ...)
        flux = np.einsum("pil...,pkl...->pki...", A, gv)     # (grad_A v)_{k i}
        gflux = self._grad(flux)                             # (2, k, i, j, ...)
        return np.einsum("pij...,pkij...->pk...", A, gflux)

    def acceleration(self, eta: np.ndarray, v: np.ndarray, t: float, viscous: bool = True,
                     geom: Geometry | None = None) -> np.ndarray:
        """v_t at every node before closure."""
        d = self.grid.dim
        if geom is None:
            geom = self.geometry(eta)
        J, p, b = self.fields(geom)
        if p.min() < self.ref.c0 / 4:
            raise NonPositivePressure(f"pressure {p.min():.3e} below c0/4")
        Q = p + 0.5 * np.einsum("pi...,pi...->p...", b, b)
        stack = np.concatenate([b, Q[:, None]], axis=1)
        gs = self._grad(stack)                               # (2, d+1, d, ...)
        tension = np.einsum("pj...,pkj...->pk...", self._w, gs[:, :d]) / J[:, None]
        gradQ = np.einsum("pij...,pj...->pi...", geom.A, gs[:, d])
        force = tension - gradQ
        if self.psi is not None:
            force = force + self.psi.value(t)
        if viscous and self.config.eps > 0:
            force = force + self.config.eps * self.viscous_term(geom, v)
        acc = force * (J * self._inv_rho0J0)[:, None]
        if self._diss_T is not None:
            acc = acc + v @ self._diss_T
        return acc

    def induction(self, geom: Geometry, v: np.ndarray, b: np.ndarray) -> np.ndarray:
        """b_t = b . grad_A v - b div_A v for the co-evolved field."""
        gv = np.einsum("pil...,pkl...->pki...", geom.A, self._grad(v))  # (grad_A v)_{k i}
        div = np.einsum("pkk...->p...", gv)
        return np.einsum("pi...,pki...->pk...", b, gv) - b * div[:, None]

    def _close_acc(self, a: np.ndarray) -> np.ndarray:
        return apply_closure(self.grid, a, zero_walls=True)

    def rhs(self, t: float, eta: np.ndarray, v: np.ndarray, b: np.ndarray | None, viscous: bool):
        geom = self.geometry(eta)
        a = self._close_acc(self.acceleration(eta, v, t, viscous=viscous, geom=geom))
        db = self.induction(geom, v, b) if b is not None else None
        return v, a, db

    # stability -------------------------------------------------------------------------------
    def wave_speed(self, eta: np.ndarray) -> float:
        geom = self.geometry(eta)
        J, p, b = self.fields(geom)
        rho = self.ref.rho0_J0 / J
        bb = np.sqrt(np.einsum("pi...,pi...->p...", b, b))
        c = np.sqrt(self.ref.gamma * p / rho) + bb / np.sqrt(rho)
        # metric stretching: physical speeds map to label speeds through |A|
        a_norm = np.sqrt(np.einsum("pij...,pij...->p...", geom.A, geom.A))
        return float((c * a_norm).max())

    def stable_dt(self, eta: np.ndarray) -> float:
        g = self.grid
        h = min(g.h_n, g.h_t)
        dt = self.config.cfl * h / self.wave_speed(eta)
        if self.config.scheme == "explicit" and self.config.eps > 0:
            rho_min = float((self.ref.rho0_J0 / self.geometry(eta).J).min())
            dt = min(dt, self.config.cfl * rho_min * g.h_n ** 2 / self.config.eps)
        return dt

    def check_cfl(self, state: SolverState, dt: float) -> None:
        limit = self.stable_dt(state.eta) / self.config.cfl
        if dt > limit:
            raise CflViolation(f"dt={dt:.3e} exceeds stability limit {limit:.3e} at t={state.t:.4f}")

    # state ------------------------------------------------------------------------------------
    def initial_state(self, v0: np.ndarray | None = None) -> SolverState:
        ref = self.ref
        eta = close_map(self.grid, ref.eta0)
        v = apply_closure(self.grid, (ref.v0 if v0 is None else v0).copy(), zero_walls=True)
        b = ref.b0.copy() if self.config.co_evolve_b else None
        st = SolverState(t=0.0, eta=eta, v=v, b=b)
        st.push_history(self.config.history)
        if self.dt is None:
            self.dt = self.stable_dt(eta)
        return st

    # stepping ----------------------------------------------------------------------------------
    def _rk4(self, state: SolverState, dt: float, viscous: bool) -> tuple:
        t, eta, v, b = state.t, state.eta, state.v, state.b
        k1 = self.rhs(t, eta, v, b, viscous)

        def shift(c, stage):
            e = eta + c * stage[0]
            w = v + c * stage[1]
            bb = None if b is None else b + c * stage[2]
            return e, w, bb

        k2 = self.rhs(t + dt / 2, *shift(dt / 2, k1), viscous)
        k3 = self.rhs(t + dt / 2, *shift(dt / 2, k2), viscous)
        k4 = self.rhs(t + dt, *shift(dt, k3), viscous)
        eta_n = eta + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v_n = v + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        b_n = None if b is None else b + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        return eta_n, v_n, b_n

    def _cn_half(self, eta: np.ndarray, v: np.ndarray, dt_half: float) -> np.ndarray:
        """Crank-Nicolson step of v_t = eps J/(rho0 J0) Delta_A v with frozen geometry."""
        geom = self.geometry(eta)
        scale = (geom.J * self._inv_rho0J0)[:, None] * self.config.eps
        grid = self.grid
        shape = v.shape

        def lop(x: np.ndarray) -> np.ndarray:
            y = apply_closure(grid, x.reshape(shape).copy(), zero_walls=True)
            return self._close_acc(scale * self.viscous_term(geom, y))

        theta = 0.5 * dt_half
        rhs = v + theta * lop(v.ravel())

        def matvec(x):
            return x - theta * lop(x).ravel()

        op = LinearOperator((v.size, v.size), matvec=matvec, dtype=float)
        # absolute floor at the unit velocity scale: a resting state has rhs ~ round-off
        tol = self.config.gmres_tol
        sol, info = gmres(op, rhs.ravel(), x0=v.ravel(), rtol=tol, atol=tol * np.sqrt(v.size),
                          restart=60, maxiter=200)
        if info != 0:
            raise EllipticSolveFailure(f"GMRES did not converge (info={info})")
        return apply_closure(grid, sol.reshape(shape), zero_walls=True)

    def step(self, state: SolverState, dt: float | None = None) -> SolverState:
        dt = self.dt if dt is None else dt
        cfg = self.config
        if cfg.check_cfl and state.step % cfg.check_cfl == 0:
            self.check_cfl(state, dt)
        if cfg.scheme == "explicit" or cfg.eps == 0.0:
            eta_n, v_n, b_n = self._rk4(state, dt, viscous=True)
        else:
            v_half = self._cn_half(state.eta, state.v, dt / 2)
            mid = SolverState(t=state.t, eta=state.eta, v=v_half, b=state.b)
            eta_n, v_n, b_n = self._rk4(mid, dt, viscous=False)
            v_n = self._cn_half(eta_n, v_n, dt / 2)
        eta_n = close_map(self.grid, eta_n, wall_values=self._xi_walls)
        apply_closure(self.grid, v_n, zero_walls=True)
        new = SolverState(t=state.t + dt, eta=eta_n, v=v_n, b=b_n, step=state.step + 1,
                          history=state.history)
        new.push_history(cfg.history)
        return new

    def check_transversality(self, state: SolverState) -> float:
        """min |b.N| on Sigma and the walls; raises below c0/4."""
        geom = self.geometry(state.eta)
        _, _, b = self.fields(geom)
        bN = np.einsum("pi...,pi...->p...", b, geom.N)
        vals = np.concatenate([np.ravel(bN[Phase.PLUS, ..., 0]), np.ravel(bN[Phase.MINUS, ..., -1]),
                               np.ravel(wall_trace(bN, Phase.PLUS)), np.ravel(wall_trace(bN, Phase.MINUS))])
        mn = float(np.abs(vals).min())
        if mn < self.ref.c0 / 4:
            raise TransversalityLost(f"min |b.N| = {mn:.3e} at t={state.t:.4f}")
        return mn

    def run(self, t_end: float, state: SolverState | None = None,
            callback: Callable[[SolverState], None] | None = None, every: int = 1) -> SolverState:
        """Advance to ``t_end``; the last step is shortened to land exactly."""
        if state is None:
            state = self.initial_state()
        if callback is not None:
            callback(state)
        while state.t < t_end - 1e-12 * max(1.0, t_end):
            dt = min(self.dt, t_end - state.t)
            state = self.step(state, dt)
            if callback is not None and (state.step % every == 0 or state.t >= t_end - 1e-12):
                callback(state)
        return state
