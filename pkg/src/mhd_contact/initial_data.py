"""Time-derivative seeding, compatibility ledger, data smoothing and correctors.

The seeding recursion computes d_t^j (p, v, b, eta) at t = 0 by applying
the bulk equations repeatedly. Instead of nesting symbolic expressions we
propagate truncated Taylor series in t (see :mod:`series`): every product
and the matrix inverse A = (grad eta)^{-T} are expanded order by order,
while spatial derivatives act coefficient-wise.

The smoothing pipeline mollifies the data, restores the boundary traces by
harmonic / biharmonic lifts in each phase, and then repairs higher-order
compatibility by adding normal-trace correctors to the plus phase only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import series as S
from .constitutive import ReferenceData
from .elliptic import biharmonic_lift, harmonic_lift
from .errors import EllipticSolveFailure, SingularBoundaryMatrix
from .geometry import cofactor, determinant, map_gradient
from .grid import (Phase, SlabGrid, gradient, interface_trace, jump, mollify_tangential,
                   mollify_volume, partial, wall_trace)
from .norms import hk_norm_sq

log = logging.getLogger(__name__)

DEFAULT_COMPAT_TOL = 1e-9


# -- pointwise contractions -------------------------------------------------------------
def _a_grad_scalar(A, g):
    return np.einsum("pij...,pj...->pi...", A, g)


def _a_grad_vector(A, g):
    return np.einsum("pij...,pkj...->pki...", A, g)


def _a_div(A, g):
    return np.einsum("pij...,pij...->p...", A, g)


def _a_div_tensor(A, g):
    # g[:, k, i, j] = d_j (grad_A u)_{k i}
    return np.einsum("pij...,pkij...->pk...", A, g)


def _b_dot_grad(b, G):
    # G[:, l, i] = (grad_A u_l)_i
    return np.einsum("pi...,pli...->pl...", b, G)


def _scalar_times_vector(s, u):
    return s[:, None] * u


def _vector_times_scalar(u, s):
    return u * s[:, None]


@dataclass
class SeededData:
    """Stacks of d_t^j (p, v, b, eta, rho) at t = 0, j = 0..m.

    ``eta[j]`` for j >= 1 equals ``v[j-1]``; ``coeffs`` keeps the
    normalized Taylor coefficients the stacks were computed from.
    """

    m: int
    p: list
    v: list
    b: list
    eta: list
    rho: list
    eps: float = 0.0
    coeffs: dict = field(default_factory=dict, repr=False)


def _series_A(grid: SlabGrid, eta_c: list, order: int, F0=None):
    F = [map_gradient(grid, eta_c[0]) if F0 is None else F0]
    for k in range(1, order + 1):
        F.append(gradient(grid, eta_c[k]))
    inv0 = np.swapaxes(cofactor(F[0]), 1, 2) / determinant(F[0])[:, None, None]
    G = S.inverse(F, inv0, order)
    return [np.swapaxes(g, 1, 2) for g in G]


def seed_time_derivatives(ref: ReferenceData, m: int, eps: float = 0.0, psi=None) -> SeededData:
    """Recursive construction of d_t^j (p, v, b) for j <= m and d_t^j eta.

    Args:
        ref: Reference data (eta0, p0, v0, b0, rho0).
        m: Highest order produced.
        eps: Viscosity; adds eps Delta_A v to the momentum slot.
        psi: Optional :class:`PsiCorrector` (or list of normalized Taylor
            coefficients) added to the momentum slot.

    With ``eps == 0`` and ``psi is None`` this is the ideal recursion.
    """
    grid = ref.grid
    gamma = ref.gamma
    psi_c = None
    if psi is not None:
        psi_c = psi.coeffs if hasattr(psi, "coeffs") else list(psi)
    eta = [ref.eta0.copy()]
    p = [ref.p0.copy()]
    v = [ref.v0.copy()]
    b = [ref.b0.copy()]
    gp, gv, gb, gq = [], [], [], []
    q = []
    rinv_scale = ref.p0 ** (1.0 / gamma) / ref.rho0
    F0 = map_gradient(grid, ref.eta0)
    for k in range(m):
        A = _series_A(grid, eta, k, F0=F0)
        gp.append(gradient(grid, p[k]))
        gv.append(gradient(grid, v[k]))
        gb.append(gradient(grid, b[k]))
        q = S.add(p, S.scale(S.cauchy(b, b, S.vdot), 0.5))
        gq.append(gradient(grid, q[k]))
        div_v = S.cauchy(A, gv, _a_div)
        grad_q = S.cauchy(A, gq, _a_grad_scalar)
        grad_b = S.cauchy(A, gb, _a_grad_vector)
        grad_v = S.cauchy(A, gv, _a_grad_vector)
        rinv = S.scale(S.power(p, -1.0 / gamma), rinv_scale)
        force = S.add(S.cauchy(b, grad_b, _b_dot_grad), S.scale(grad_q, -1.0))
        if eps != 0.0:
            ggv = [gradient(grid, c) for c in grad_v]
            lap = S.cauchy(A, ggv, _a_div_tensor)
            force = S.add(force, S.scale(lap, eps))
        if psi_c is not None:
            pad = [psi_c[i] if i < len(psi_c) else np.zeros_like(force[0]) for i in range(k + 1)]
            force = S.add(force, pad)
        dp = S.scale(S.cauchy(p, div_v), -gamma)
        dv = S.cauchy(rinv, force, _scalar_times_vector)
        db = S.add(S.cauchy(b, grad_v, _b_dot_grad),
                   S.scale(S.cauchy(b, div_v, _vector_times_scalar), -1.0))
        p.append(dp[k] / (k + 1))
        v.append(dv[k] / (k + 1))
        b.append(db[k] / (k + 1))
        eta.append(v[k] / (k + 1))
    rho_c = S.scale(S.power(p, 1.0 / gamma), ref.rho0 / ref.p0 ** (1.0 / gamma))
    coeffs = dict(p=p, v=v, b=b, eta=eta, rho=rho_c)
    return SeededData(m=m, p=S.to_derivatives(p), v=S.to_derivatives(v), b=S.to_derivatives(b),
                      eta=S.to_derivatives(eta), rho=S.to_derivatives(rho_c), eps=eps, coeffs=coeffs)


# -- compatibility ledger -----------------------------------------------------------------
def _sup(a) -> float:
    return float(np.abs(a).max()) if np.size(a) else 0.0


@dataclass
class CompatibilityLedger:
    """Interface and wall residuals of the seeded data, per time order j.

    Primary entries are the compatibility conditions themselves; derived
    entries must vanish as a consequence of the primary ones.
    """

    m: int
    jump_p: list
    jump_v: list
    jump_b_tangential: list
    wall_v: list
    jump_b_normal: list
    jump_d3v: list

    def max_primary(self, upto: int | None = None) -> float:
        n = self.m if upto is None else upto + 1
        vals = [x for lst in (self.jump_p, self.jump_v, self.jump_b_tangential, self.wall_v) for x in lst[:n]]
        return max(vals) if vals else 0.0

    def max_derived(self) -> float:
        vals = list(self.jump_b_normal) + list(self.jump_d3v)
        return max(vals) if vals else 0.0

    def order_residual(self, j: int) -> float:
        return max(self.jump_p[j], self.jump_v[j], self.jump_b_tangential[j], self.wall_v[j])

    def passes(self, tol: float = DEFAULT_COMPAT_TOL) -> bool:
        return self.max_primary() < tol

    def as_dict(self) -> dict:
        return {k: list(map(float, getattr(self, k))) for k in
                ("jump_p", "jump_v", "jump_b_tangential", "wall_v", "jump_b_normal", "jump_d3v")} | {"m": self.m}


def evaluate_compatibility(seeded: SeededData, ref: ReferenceData, m: int | None = None,
                           include_top_d3v: bool = False) -> CompatibilityLedger:
    """Residuals of the order-j conditions for j = 0..m-1 (sup norms on Sigma).

    ``jump_d3v`` runs over j <= m-2, or j <= m-1 with ``include_top_d3v``
    (the extra condition the viscous problem needs).
    """
    grid = ref.grid
    m = seeded.m if m is None else m
    N0 = interface_trace(ref.geometry0.N, Phase.PLUS)
    N0sq = np.einsum("i...,i...->...", N0, N0)
    out = dict(jump_p=[], jump_v=[], jump_b_tangential=[], wall_v=[], jump_b_normal=[], jump_d3v=[])
    top = m if include_top_d3v else m - 1
    for j in range(m):
        out["jump_p"].append(_sup(jump(seeded.p[j])))
        out["jump_v"].append(_sup(jump(seeded.v[j])))
        jb = jump(seeded.b[j])
        jbn = np.einsum("i...,i...->...", jb, N0)
        out["jump_b_tangential"].append(_sup(jb - jbn[None] * N0 / N0sq[None]))
        vj = seeded.v[j]
        out["wall_v"].append(max(_sup(vj[Phase.MINUS, ..., 0]), _sup(vj[Phase.PLUS, ..., -1])))
        out["jump_b_normal"].append(_sup(jbn))
        if j < top:
            out["jump_d3v"].append(_sup(jump(partial(grid, vj, grid.dim - 1))))
    return CompatibilityLedger(m=m, **out)


# -- boundary system -------------------------------------------------------------------------
def frame_components(frame, u: np.ndarray) -> list[np.ndarray]:
    return [np.einsum("i...,i...->...", t, u) for t in frame]


def _interface_frame_trace(ref: ReferenceData):
    fr = ref.geometry0.frame
    return [interface_trace(t, Phase.PLUS) for t in fr]


def boundary_matrix(p, rho, b, J, N, frame, gamma) -> np.ndarray:
    """The principal boundary matrix in frame coordinates, shape (*pts, 2d, 2d).

    Unknown ordering: (p, v.tau_1..tau_{d-1}, v.n, b.tau_1..tau_{d-1}).
    All inputs are traces on Sigma with components first for vectors.
    """
    d = N.shape[0]
    nt = d - 1
    absN = np.sqrt(np.einsum("i...,i...->...", N, N))
    bN = np.einsum("i...,i...->...", b, N)
    btau = [np.einsum("i...,i...->...", t, b) for t in frame[:nt]]
    n = 2 * d
    E = np.zeros(p.shape + (n, n))
    iv = lambda a: 1 + a        # noqa: E731
    ivn = d
    ib = lambda a: d + 1 + a    # noqa: E731
    E[..., 0, ivn] = -gamma * p * absN / J
    for a in range(nt):
        E[..., iv(a), ib(a)] = bN / (rho * J)
        E[..., ivn, ib(a)] = -absN * btau[a] / (rho * J)
        E[..., ib(a), iv(a)] = bN / J
        E[..., ib(a), ivn] = -absN * btau[a] / J
    E[..., ivn, 0] = -absN / (rho * J)
    return E


def boundary_matrix_det(p, rho, b, J, N, gamma, dim) -> np.ndarray:
    """Closed form (-1)^d gamma p |N|^2 rho^{-d} J^{-2d} |b.N|^{2(d-1)}.

    The (p, v.n) pair contributes a negative factor and the tangential
    (v.tau, b.tau) block the sign (-1)^{(d-1)^2}, so det E is positive in 2D
    and negative in 3D; only its modulus matters for invertibility.
    """
    absN2 = np.einsum("i...,i...->...", N, N)
    bN = np.einsum("i...,i...->...", b, N)
    mag = gamma * p * absN2 * rho ** (-dim) * J ** (-2 * dim) * np.abs(bN) ** (2 * (dim - 1))
    return (-1) ** dim * mag


def v_vector(frame, p_j, v_j, b_j) -> np.ndarray:
    """Stack (p, v.tau.., v.n, b.tau..) along a new first axis (traces)."""
    nt = len(frame) - 1
    comps = [p_j] + frame_components(frame, v_j) + frame_components(frame[:nt], b_j)
    return np.stack(comps)


@dataclass
class BoundarySystem:
    """V^j, W^j, E and F^j = V^j - E^j W^j at the plus-side trace of Sigma."""

    V: np.ndarray
    W: np.ndarray
    E: np.ndarray
    F: np.ndarray
    det: np.ndarray


def boundary_system(ref: ReferenceData, seeded: SeededData, j: int, phase: Phase = Phase.PLUS) -> BoundarySystem:
    grid = ref.grid
    frame = _interface_frame_trace(ref)
    tr = lambda f: interface_trace(f, phase)  # noqa: E731
    V = v_vector(frame, tr(seeded.p[j]), tr(seeded.v[j]), tr(seeded.b[j]))
    dp, dv, db = ref.p0, ref.v0, ref.b0
    for _ in range(j):
        dp, dv, db = (partial(grid, x, grid.dim - 1) for x in (dp, dv, db))
    W = v_vector(frame, tr(dp), tr(dv), tr(db))
    g0 = ref.geometry0
    N = tr(g0.N)
    args = (tr(ref.p0), tr(ref.rho0), tr(ref.b0), tr(g0.J), N)
    E = boundary_matrix(*args, frame, ref.gamma)
    Ej = np.linalg.matrix_power(E, j)
    F = V - np.einsum("...ab,b...->a...", Ej, W)
    det = boundary_matrix_det(*args, ref.gamma, grid.dim)
    return BoundarySystem(V=V, W=W, E=E, F=F, det=det)


# -- smoothing pipeline --------------------------------------------------------------------
def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


def lift_profile(z: np.ndarray, order: int, flat: float = 0.25, cutoff: float = 0.75) -> np.ndarray:
    """x^order / order! times a cutoff equal to 1 on [0, flat] and 0 past cutoff."""
    chi = 1.0 - smooth_step((np.abs(z) - flat) / (cutoff - flat))
    return z ** order / factorial(order) * chi


@dataclass
class SmoothingResult:
    ref: ReferenceData
    ledger: CompatibilityLedger
    passes: int
    history: list = field(default_factory=list)


def _trace_average(f: np.ndarray) -> np.ndarray:
    return 0.5 * (f[Phase.MINUS, ..., -1] + f[Phase.PLUS, ..., 0])


def _ends(grid: SlabGrid, sigma_val, wall_lo, wall_hi):
    """Pack per-phase (lower, upper) traces: minus phase [wall_lo, Sigma], plus [Sigma, wall_hi]."""
    lower = np.stack([wall_lo, sigma_val])
    upper = np.stack([sigma_val, wall_hi])
    return lower, upper


def _smooth_dirichlet(grid: SlabGrid, f: np.ndarray, delta: float) -> np.ndarray:
    """Mollify per phase, then restore mollified traces by a harmonic lift."""
    base = mollify_volume(grid, f, delta)
    sig = mollify_tangential(grid, _trace_average(f), delta)
    lo = mollify_tangential(grid, f[Phase.MINUS, ..., 0], delta)
    hi = mollify_tangential(grid, f[Phase.PLUS, ..., -1], delta)
    lower, upper = _ends(grid, sig, lo, hi)
    base_lower = np.stack([base[Phase.MINUS, ..., 0], base[Phase.PLUS, ..., 0]])
    base_upper = np.stack([base[Phase.MINUS, ..., -1], base[Phase.PLUS, ..., -1]])
    return base + harmonic_lift(grid, lower - base_lower, upper - base_upper)


def _smooth_map(grid: SlabGrid, eta: np.ndarray, delta: float) -> np.ndarray:
    """Mollified map whose value and d_d traces are the mollified traces."""
    xi = eta - grid.identity
    base = mollify_volume(grid, xi, delta)
    d3 = partial(grid, xi, grid.dim - 1)
    d3b = partial(grid, base, grid.dim - 1)

    def packed(f, g):
        sig = mollify_tangential(grid, _trace_average(f), delta)
        lo = mollify_tangential(grid, f[Phase.MINUS, ..., 0], delta)
        hi = mollify_tangential(grid, f[Phase.PLUS, ..., -1], delta)
        lower, upper = _ends(grid, sig, lo, hi)
        bl = np.stack([g[Phase.MINUS, ..., 0], g[Phase.PLUS, ..., 0]])
        bu = np.stack([g[Phase.MINUS, ..., -1], g[Phase.PLUS, ..., -1]])
        return lower - bl, upper - bu

    lo_v, hi_v = packed(xi, base)
    lo_d, hi_d = packed(d3, d3b)
    return grid.identity + base + biharmonic_lift(grid, lo_v, hi_v, lo_d, hi_d)


def apply_corrector(ref: ReferenceData, order: int, *, flat: float = 0.25, cutoff: float = 0.75,
                    det_floor: float | None = None) -> tuple[ReferenceData, float]:
    """One corrector pass at time order ``order`` (>= 1) on the plus phase.

    Solves E_+^order Phi~ = -[[V^order]] on Sigma, assembles Phi in the
    Cartesian basis and adds Phi * x_d^order/order! * chi(x_d) to (p, v, b)
    in the plus phase. Lower normal traces at Sigma are untouched.

    Returns:
        The corrected reference data and max |Phi~|.

    Raises:
        SingularBoundaryMatrix: if |b.N| < c0/2 somewhere on Sigma.
    """
    grid = ref.grid
    seeded = seed_time_derivatives(ref, order)
    plus = boundary_system(ref, seeded, order, Phase.PLUS)
    minus_V = v_vector(_interface_frame_trace(ref), *(interface_trace(x[order], Phase.MINUS)
                                                      for x in (seeded.p, seeded.v, seeded.b)))
    jumpV = plus.V - minus_V
    g0 = ref.geometry0
    bN = np.einsum("i...,i...->...", interface_trace(ref.b0, Phase.PLUS), interface_trace(g0.N, Phase.PLUS))
    if np.abs(bN).min() < ref.c0 / 2 or (det_floor is not None and np.abs(plus.det).min() < det_floor):
        raise SingularBoundaryMatrix(f"min |b.N| = {np.abs(bN).min():.3e}, min |det E| = {np.abs(plus.det).min():.3e}")
    Ej = np.linalg.matrix_power(plus.E, order)
    rhs = np.moveaxis(jumpV, 0, -1)
    phi = -np.linalg.solve(Ej, rhs[..., None])[..., 0]
    phi = np.moveaxis(phi, -1, 0)
    frame = _interface_frame_trace(ref)
    d = grid.dim
    phi_p = phi[0]
    comps_v = list(phi[1:d]) + [phi[d]]
    comps_b = list(phi[d + 1:])
    v_add = sum(c[None] * t for c, t in zip(comps_v, frame))
    b_add = sum(c[None] * t for c, t in zip(comps_b, frame[:-1]))
    prof = lift_profile(grid.z[Phase.PLUS], order, flat, cutoff)
    p0, v0, b0 = ref.p0.copy(), ref.v0.copy(), ref.b0.copy()
    p0[Phase.PLUS] += phi_p[..., None] * prof
    v0[Phase.PLUS] += v_add[..., None] * prof
    b0[Phase.PLUS] += b_add[..., None] * prof
    new = ReferenceData.from_density(grid, ref.eta0, p0, v0, b0, ref.rho0, ref.gamma, ref.a_const, ref.c0)
    return new, float(np.abs(phi).max())


def apply_wall_corrector(ref: ReferenceData, order: int, phase: Phase, *,
                         flat: float = 0.25, cutoff: float = 0.75) -> tuple[ReferenceData, float]:
    """Order-``order`` corrector at the wall of ``phase`` so that d_t^order v = 0 there.

    Only the velocity rows of V^order are constrained, so the update solves
    the d x 2d block of E^order in the minimum-norm sense.
    """
    grid = ref.grid
    seeded = seed_time_derivatives(ref, order)
    g0 = ref.geometry0
    tr = lambda f: wall_trace(f, phase)  # noqa: E731
    frame = [tr(t) for t in g0.frame]
    bN = np.einsum("i...,i...->...", tr(ref.b0), tr(g0.N))
    if np.abs(bN).min() < ref.c0 / 2:
        raise SingularBoundaryMatrix(f"min |b.N| on the wall = {np.abs(bN).min():.3e}")
    V = v_vector(frame, tr(seeded.p[order]), tr(seeded.v[order]), tr(seeded.b[order]))
    E = boundary_matrix(tr(ref.p0), tr(ref.rho0), tr(ref.b0), tr(g0.J), tr(g0.N), frame, ref.gamma)
    d = grid.dim
    block = np.linalg.matrix_power(E, order)[..., 1:d + 1, :]
    rhs = -np.moveaxis(V[1:d + 1], 0, -1)
    phi = np.einsum("...ab,...b->...a", np.linalg.pinv(block), rhs)
    phi = np.moveaxis(phi, -1, 0)
    v_add = sum(c[None] * t for c, t in zip(phi[1:d + 1], frame))
    b_add = sum(c[None] * t for c, t in zip(phi[d + 1:], frame[:-1]))
    wall = 1.0 if phase == Phase.PLUS else -1.0
    prof = lift_profile(grid.z[phase] - wall, order, flat, cutoff)
    p0, v0, b0 = ref.p0.copy(), ref.v0.copy(), ref.b0.copy()
    p0[phase] += phi[0][..., None] * prof
    v0[phase] += v_add[..., None] * prof
    b0[phase] += b_add[..., None] * prof
    new = ReferenceData.from_density(grid, ref.eta0, p0, v0, b0, ref.rho0, ref.gamma, ref.a_const, ref.c0)
    return new, float(np.abs(phi).max())


def smooth_data(ref: ReferenceData, delta: float, m: int, tol: float = DEFAULT_COMPAT_TOL,
                max_sweeps: int = 12, correct: bool = True) -> SmoothingResult:
    """Smoothing pipeline with compatibility correctors.

    1. mollify rho0 in each phase;
    2. biharmonic lift for eta0 with mollified value and d_d traces;
    3. harmonic lifts for p0, v0, b0 with mollified Dirichlet traces;
    4. corrector passes for orders 1..m-1 on the plus phase at Sigma and on
       each phase at its wall, repeated until
       every order-j residual is below ``tol`` (or ``max_sweeps`` is hit);
    5. re-seed and evaluate the ledger.
    """
    grid = ref.grid
    rho = mollify_volume(grid, ref.rho0, delta)
    eta = _smooth_map(grid, ref.eta0, delta)
    p = _smooth_dirichlet(grid, ref.p0, delta)
    v = _smooth_dirichlet(grid, ref.v0, delta)
    b = _smooth_dirichlet(grid, ref.b0, delta)
    cur = ReferenceData.from_density(grid, eta, p, v, b, rho, ref.gamma, ref.a_const, ref.c0)
    if correct:
        return enforce_compatibility(cur, m, tol=tol, max_sweeps=max_sweeps)
    ledger = evaluate_compatibility(seed_time_derivatives(cur, m), cur, m)
    return SmoothingResult(ref=cur, ledger=ledger, passes=0)


def _check_corrected(ref: ReferenceData, order: int) -> None:
    """Abort when a corrector leaves the admissible set (too coarse a grid for the order)."""
    fields = (ref.p0, ref.v0, ref.b0)
    if not all(np.isfinite(f).all() for f in fields):
        raise EllipticSolveFailure(f"order-{order} corrector produced non-finite data; refine the grid")
    if ref.p0.min() < ref.c0 / 4:
        raise EllipticSolveFailure(f"order-{order} corrector drove p0 to {ref.p0.min():.3e} < c0/4; "
                                   "refine the grid or lower the compatibility order")


def enforce_compatibility(ref: ReferenceData, m: int, tol: float = DEFAULT_COMPAT_TOL,
                          max_sweeps: int = 12) -> SmoothingResult:
    """Corrector sweeps (orders 1..m-1, Sigma then walls) until the ledger passes.

    Each sweep applies one corrector per order; a corrector leaves the lower
    normal traces untouched, so order j is fixed up to the truncation error
    of the nested one-sided stencils and repeated sweeps converge
    geometrically.
    """
    cur = ref
    history = []
    passes = 0
    if m >= 2:
        for sweep in range(max_sweeps):
            ledger = evaluate_compatibility(seed_time_derivatives(cur, m - 1), cur, m)
            if ledger.max_primary() < tol:
                break
            for order in range(1, m):
                cur, size = apply_corrector(cur, order)
                _check_corrected(cur, order)
                for wall in (Phase.MINUS, Phase.PLUS):
                    cur, wsize = apply_wall_corrector(cur, order, wall)
                    _check_corrected(cur, order)
                    size = max(size, wsize)
                passes += 1
                led = evaluate_compatibility(seed_time_derivatives(cur, m - 1), cur, m)
                history.append(dict(sweep=sweep, order=order, phi_max=size,
                                    residual=led.order_residual(order)))
                log.debug("corrector sweep %d order %d |phi|=%.3e residual=%.3e",
                          sweep, order, size, led.order_residual(order))
        else:
            log.warning("corrector sweeps stopped at max_sweeps=%d", max_sweeps)
    ledger = evaluate_compatibility(seed_time_derivatives(cur, m), cur, m)
    return SmoothingResult(ref=cur, ledger=ledger, passes=passes, history=history)


def data_distance(a: ReferenceData, b: ReferenceData, m: int) -> float:
    """sqrt of sum over (eta0, p0, v0, b0, rho0) of ||a - b||_m^2."""
    grid = a.grid
    tot = 0.0
    for name in ("eta0", "p0", "v0", "b0", "rho0"):
        tot += hk_norm_sq(grid, getattr(a, name) - getattr(b, name), m)
    return float(np.sqrt(tot))


# -- Psi corrector ----------------------------------------------------------------------------
def restore_wall_zero(grid: SlabGrid, f: np.ndarray, width: float = 0.25) -> np.ndarray:
    """Subtract wall traces times a smooth profile equal to 1 at x_d = +-1."""
    prof = smooth_step((np.abs(grid.coords[-1]) - (1.0 - width)) / width)
    if f.ndim > prof.ndim:
        prof = prof[:, None]
    out = f.copy()
    out[Phase.MINUS] -= f[Phase.MINUS, ..., :1] * prof[Phase.MINUS]
    out[Phase.PLUS] -= f[Phase.PLUS, ..., -1:] * prof[Phase.PLUS]
    return out


def mollify_velocity(grid: SlabGrid, f: np.ndarray, eps: float) -> np.ndarray:
    """(f)^eps: whole-domain mollification (across Sigma) keeping f = 0 on the walls.

    Returns f unchanged when eps is below the normal grid spacing (the
    kernel then covers a single node).
    """
    if eps < grid.h_n and eps < grid.h_t:
        return f.copy()
    g = mollify_volume(grid, f, eps, across_interface=True)
    return restore_wall_zero(grid, g)


@dataclass
class PsiCorrector:
    """Time polynomial Psi(t) = sum_k coeffs[k] t^k (degree m-1)."""

    coeffs: list
    eps: float
    m: int

    def value(self, t: float) -> np.ndarray:
        return S.evaluate(self.coeffs, t)

    def derivative(self, t: float, j: int) -> np.ndarray:
        if j >= len(self.coeffs):
            return np.zeros_like(self.coeffs[0])
        return S.evaluate(self.coeffs, t, j)

    def scaling_functional(self, grid: SlabGrid, t_max: float = 1.0, n_samples: int = 11) -> float:
        """sum_j sup_{[0, t_max]} ||d_t^j Psi||_{m-j}^2, sup over sample times."""
        total = 0.0
        for j in range(self.m + 1):
            best = 0.0
            for t in np.linspace(0.0, t_max, n_samples):
                best = max(best, hk_norm_sq(grid, self.derivative(t, j), self.m - j))
            total += best
        return total


def build_psi_corrector(ref: ReferenceData, eps: float, m: int, ideal: SeededData | None = None) -> PsiCorrector:
    """Corrector making the viscous seeding match the ideal one.

    d_t^j(rho^{-1} Psi)(0) = -d_t^j(rho^{-1} eps Delta_A v)(0) for j != m-2,
    and at j = m-2 the difference (d_t^{m-1} v)^eps - d_t^{m-1} v is added.
    """
    grid = ref.grid
    if ideal is None:
        ideal = seed_time_derivatives(ref, m)
    c = ideal.coeffs
    K = m - 1
    A = _series_A(grid, c["eta"], K)
    gv = [gradient(grid, x) for x in c["v"][: K + 1]]
    grad_v = S.cauchy(A, gv, _a_grad_vector, order=K)
    ggv = [gradient(grid, x) for x in grad_v]
    lap = S.cauchy(A, ggv, _a_div_tensor, order=K)
    rinv = S.scale(S.power(c["p"][: K + 1], -1.0 / ref.gamma), ref.p0 ** (1.0 / ref.gamma) / ref.rho0)
    target = S.scale(S.cauchy(rinv, lap, _scalar_times_vector, order=K), -eps)
    if m >= 2 and eps > 0:
        top = ideal.v[m - 1]
        diff = mollify_velocity(grid, top, eps) - top
        target[m - 2] = target[m - 2] + diff / factorial(m - 2)
    rho = c["rho"][: K + 1]
    coeffs = S.cauchy(rho, target, _scalar_times_vector, order=K)
    return PsiCorrector(coeffs=coeffs, eps=eps, m=m)
