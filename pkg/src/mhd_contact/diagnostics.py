"""Energy functionals, good unknowns and normal-derivative reconstructions.

Time derivatives are never taken from the model equations: they come from
one-sided backward differences over the solver's history ring, so every
check here is independent of the right-hand side it is meant to test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constitutive import ReferenceData, check_prop1, reconstruct
from .errors import InsufficientHistory, TransversalityLost
from .geometry import Geometry, build_geometry, dot, map_gradient, near_boundary_mask
from .grid import Phase, SlabGrid, fd_weights, interface_trace, partial, wall_trace
from .norms import anisotropic_norm, hk_norm_sq, map_boundary_norm_sq, map_derivative, z_derivative

log = logging.getLogger(__name__)


# -- time differences ------------------------------------------------------------------------
def backward_weights(times, order: int) -> np.ndarray:
    """Weights of d^order/dt^order at the last of ``times``."""
    times = np.asarray(times, dtype=float)
    return fd_weights(times[-1], times, order)


def time_derivatives(times, values, max_order: int, extra: int = 1) -> list[np.ndarray]:
    """Backward-difference stack [f, d_t f, ..., d_t^max_order f] at the last time.

    Uses the newest ``max_order + 1 + extra`` snapshots (or all, if fewer
    are available but still enough).

    Raises:
        InsufficientHistory: if fewer than ``max_order + 1`` snapshots exist.
    """
    need = max_order + 1
    if len(times) < need:
        raise InsufficientHistory(f"need {need} snapshots for d_t^{max_order}, have {len(times)}")
    npts = min(len(times), need + extra)
    ts, vs = list(times)[-npts:], list(values)[-npts:]
    out = [np.asarray(vs[-1])]
    for j in range(1, max_order + 1):
        w = backward_weights(ts, j)
        out.append(sum(c * v for c, v in zip(w, vs)))
    return out


@dataclass
class HistoryStack:
    """d_t^j of eta, v, p, b, rho at the newest snapshot."""

    t: float
    eta: np.ndarray
    geom: Geometry
    v: list
    p: list
    b: list
    rho: np.ndarray

    @property
    def order(self) -> int:
        return len(self.v) - 1


def history_stack(history, ref: ReferenceData, order: int, extra: int = 1) -> HistoryStack:
    """Reconstruct p, b on every snapshot and difference them in time.

    Args:
        history: Sequence of (t, eta, v) snapshots, oldest first.
        ref: Reference data.
        order: Highest time derivative required.
    """
    history = list(history)
    need = order + 1
    if len(history) < need:
        raise InsufficientHistory(f"need {need} snapshots, have {len(history)}")
    history = history[-(need + extra):]
    grid = ref.grid
    times, ps, bs, vs = [], [], [], []
    for t, eta, v in history:
        fields = reconstruct(grid, eta, v, ref, check=False)
        times.append(t)
        ps.append(fields.p)
        bs.append(fields.b)
        vs.append(v)
    t, eta, _ = history[-1]
    geom = build_geometry(grid, eta, j_min=ref.c0 / 4)
    last = reconstruct(grid, eta, history[-1][2], ref, geom=geom, check=False)
    return HistoryStack(t=t, eta=eta, geom=geom,
                        v=time_derivatives(times, vs, order, extra),
                        p=time_derivatives(times, ps, order, extra),
                        b=time_derivatives(times, bs, order, extra),
                        rho=last.rho)


# -- energy functionals ----------------------------------------------------------------------
def _aniso_sq(grid: SlabGrid, f: np.ndarray, k: int, l: int, is_map: bool = False) -> float:
    return anisotropic_norm(grid, f, k, l, is_map=is_map) ** 2


def _triple_hk(grid: SlabGrid, p, v, b, k: int) -> float:
    return hk_norm_sq(grid, p, k) + hk_norm_sq(grid, v, k) + hk_norm_sq(grid, b, k)


def _triple_aniso(grid: SlabGrid, p, v, b, k: int, l: int) -> float:
    return _aniso_sq(grid, p, k, l) + _aniso_sq(grid, v, k, l) + _aniso_sq(grid, b, k, l)


def interface_map_norm_sq(grid: SlabGrid, eta: np.ndarray, m: int) -> float:
    """|eta|_m^2 on Sigma, from the plus-side trace."""
    return map_boundary_norm_sq(grid, interface_trace(eta, Phase.PLUS), m)


def data_functional(ref: ReferenceData, m: int) -> float:
    """||(eta0, p0, v0, b0, rho0)||_m^2 + |eta0|_m^2 (the generic polynomial taken as the identity)."""
    grid = ref.grid
    return (hk_norm_sq(grid, ref.eta0, m, is_map=True) + hk_norm_sq(grid, ref.p0, m)
            + hk_norm_sq(grid, ref.v0, m) + hk_norm_sq(grid, ref.b0, m) + hk_norm_sq(grid, ref.rho0, m)
            + interface_map_norm_sq(grid, ref.eta0, m))


@dataclass
class EnergyReport:
    """One evaluation of the energy functionals.

    ``G_m`` is only meaningful when the report came from an
    :class:`EnergyMonitor`; a standalone report sets it to ``frak_E_m``.
    """

    t: float
    m: int
    eps: float
    E_m: float
    frak_E_m: float
    frak_Dbar_m: float
    frak_D_m: float
    frak_F_m: float
    G_m: float
    boundary_norm: float
    M0_m: float
    eps_eta_terms: float
    div_drift: float = 0.0
    normal_flux_drift: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)

    @staticmethod
    def columns() -> list[str]:
        return list(EnergyReport.__dataclass_fields__)


def energy_report(history, ref: ReferenceData, m: int = 2, eps: float = 0.0,
                  b_evolved: np.ndarray | None = None) -> EnergyReport:
    """Evaluate every energy functional at the newest snapshot of ``history``.

    Args:
        history: (t, eta, v) snapshots, oldest first; at least m + 1 of them
            unless m = 0.
        ref: Reference data.
        m: Regularity index.
        eps: Viscosity weighting the eps-dependent terms.
        b_evolved: Optional co-evolved b used for the invariant drifts.

    Raises:
        InsufficientHistory: if the ring is too short for d_t^m.
    """
    grid = ref.grid
    st = history_stack(history, ref, m)
    p, v, b, eta = st.p, st.v, st.b, st.eta
    geom = st.geom

    E = sum(_triple_hk(grid, p[j], v[j], b[j], m - j) for j in range(m + 1))
    eta_m = hk_norm_sq(grid, eta, m, is_map=True)
    bnd = interface_map_norm_sq(grid, eta, m)
    E += eta_m + bnd

    eps_eta = 0.0
    if eps > 0:
        eps_eta = eps * _aniso_sq(grid, eta, 1, m, is_map=True) + eps ** 2 * hk_norm_sq(grid, eta, m + 1, is_map=True)

    # d_t^j (d_3 b . N) uses the normal flux of every snapshot, differenced in time
    hist = list(history)[-(m + 2):]
    flux = []
    for t, e, vv in hist:
        g = build_geometry(grid, e, j_min=ref.c0 / 4)
        bb = reconstruct(grid, e, vv, ref, geom=g, check=False).b
        flux.append(dot(partial(grid, bb, grid.dim - 1), g.N))
    d3bN = time_derivatives([h[0] for h in hist], flux, max(m - 1, 0), extra=len(hist) - m)

    frak_E = sum(_triple_aniso(grid, p[j], v[j], b[j], 0, m - j) for j in range(m + 1))
    frak_E += sum(_aniso_sq(grid, v[j], 1, m - j - 1) for j in range(m))
    frak_E += sum(_aniso_sq(grid, d3bN[j], 0, m - j - 1) for j in range(m))
    frak_E += bnd + eta_m + eps_eta

    Dbar = eps * sum(_aniso_sq(grid, v[j], 1, m - j) for j in range(m + 1))
    D = sum(hk_norm_sq(grid, p[j], m - j) + hk_norm_sq(grid, b[j], m - j) for j in range(m))
    D += sum(hk_norm_sq(grid, v[j], m - j) for j in range(m - 1))
    D += eps ** 2 * sum(hk_norm_sq(grid, v[j], m - j + 1) for j in range(m))

    F = sum(_triple_hk(grid, p[j], v[j], b[j], m - j - 1) for j in range(m)) + eta_m + eps_eta

    drift = check_prop1([(eta, b[0] if b_evolved is None else b_evolved)], ref)
    return EnergyReport(t=st.t, m=m, eps=eps, E_m=E, frak_E_m=frak_E, frak_Dbar_m=Dbar, frak_D_m=D,
                        frak_F_m=F, G_m=frak_E, boundary_norm=bnd, M0_m=data_functional(ref, m),
                        eps_eta_terms=eps_eta, div_drift=drift.div_drift,
                        normal_flux_drift=drift.normal_flux_drift)


@dataclass
class EnergyMonitor:
    """Accumulates G_m = sup frak_E + int (frak_Dbar + frak_D) along a run.

    The time integral uses the trapezoid rule over the reported instants.
    """

    ref: ReferenceData
    m: int = 2
    eps: float = 0.0
    reports: list = field(default_factory=list)
    _sup_E: float = 0.0
    _integral: float = 0.0

    def update(self, history, b_evolved: np.ndarray | None = None) -> EnergyReport:
        rep = energy_report(history, self.ref, self.m, self.eps, b_evolved=b_evolved)
        if self.reports:
            prev = self.reports[-1]
            dt = rep.t - prev.t
            self._integral += 0.5 * dt * (prev.frak_Dbar_m + prev.frak_D_m + rep.frak_Dbar_m + rep.frak_D_m)
        self._sup_E = max(self._sup_E, rep.frak_E_m)
        rep.G_m = self._sup_E + self._integral
        self.reports.append(rep)
        return rep


# -- good unknowns -----------------------------------------------------------------------------
def _covariant_along(geom: Geometry, w: np.ndarray, f: np.ndarray) -> np.ndarray:
    """(w . grad_A) f for scalar or vector f."""
    g = geom.grad_A(f)
    if f.ndim == geom.grid.dim + 1:
        return dot(w, g)
    return np.einsum("pi...,pki...->pk...", w, g)


def _map_covariant_along(geom_A: Geometry, w: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """(w . grad_A) eta for a full map: A_ij d_j eta_k w_i."""
    F = map_gradient(geom_A.grid, eta)
    return np.einsum("pi...,pij...,pkj...->pk...", w, geom_A.A, F)


@dataclass
class GoodUnknowns:
    """Good unknowns for one multi-index and their interface checks.

    Attributes:
        V_m, Q_m, B_m, Xi_m: The fields.
        q_jump_residual: max |[Q] + J^{-1} Z eta . N [d_3 q]| on Sigma.
        b_jump_residual: max |[B] + J0^{-1} Z eta0 . N0 [d_3 b]| on Sigma.
        v_jump: max |[V]| on Sigma.
        wall_V: max |V| on the walls.
    """

    alpha: tuple
    V_m: np.ndarray
    Q_m: np.ndarray
    B_m: np.ndarray
    Xi_m: np.ndarray
    q_jump_residual: float
    b_jump_residual: float
    v_jump: float
    wall_V: float


def _sigma_value(f: np.ndarray) -> np.ndarray:
    """Average of the two one-sided traces on Sigma."""
    return 0.5 * (interface_trace(f, Phase.MINUS) + interface_trace(f, Phase.PLUS))


def _trace_jump(f: np.ndarray) -> np.ndarray:
    return interface_trace(f, Phase.PLUS) - interface_trace(f, Phase.MINUS)


def good_unknowns(grid: SlabGrid, eta: np.ndarray, q: np.ndarray, v: np.ndarray, b: np.ndarray,
                  ref: ReferenceData, alpha) -> GoodUnknowns:
    """V, Q, B, Xi for Z^alpha, with the interface identities evaluated."""
    alpha = tuple(alpha)
    geom = build_geometry(grid, eta, j_min=ref.c0 / 4)
    g0 = ref.geometry0
    z_eta = map_derivative(grid, eta, [("z", alpha)])
    z_eta0 = map_derivative(grid, ref.eta0, [("z", alpha)])

    V = z_derivative(grid, v, alpha) - _covariant_along(geom, z_eta, v)
    Q = z_derivative(grid, q, alpha) - _covariant_along(geom, z_eta, q)
    B = z_derivative(grid, b, alpha) - _covariant_along(g0, z_eta0, b)
    Xi = map_derivative(grid, eta, [("z", alpha)]) - _map_covariant_along(g0, z_eta0, eta)

    n = grid.dim - 1
    zN = _sigma_value(dot(z_eta, geom.N) / geom.J)
    zN0 = _sigma_value(dot(z_eta0, g0.N) / g0.J)
    q_res = _trace_jump(Q) + zN * _trace_jump(partial(grid, q, n))
    b_res = _trace_jump(B) + zN0[None] * _trace_jump(partial(grid, b, n))
    walls = max(float(np.abs(wall_trace(V, Phase.MINUS)).max()), float(np.abs(wall_trace(V, Phase.PLUS)).max()))
    return GoodUnknowns(alpha=alpha, V_m=V, Q_m=Q, B_m=B, Xi_m=Xi,
                        q_jump_residual=float(np.abs(q_res).max()),
                        b_jump_residual=float(np.abs(b_res).max()),
                        v_jump=float(np.abs(_trace_jump(V)).max()), wall_V=walls)


# -- commutator identity -------------------------------------------------------------------------
def _split_alpha(alpha) -> tuple[tuple, tuple]:
    """alpha = rest + e_s with s the first nonzero slot."""
    alpha = list(alpha)
    s = next(i for i, a in enumerate(alpha) if a)
    single = [0] * len(alpha)
    single[s] = 1
    alpha[s] -= 1
    return tuple(alpha), tuple(single)


def _z_commutator_d3(grid: SlabGrid, f: np.ndarray, alpha) -> np.ndarray:
    """[Z^alpha, d_3] f = Z^alpha d_3 f - d_3 Z^alpha f."""
    n = grid.dim - 1
    return z_derivative(grid, partial(grid, f, n), alpha) - partial(grid, z_derivative(grid, f, alpha), n)


@dataclass
class CommutatorCheck:
    """Both sides of the covariant commutator identity for one component i."""

    lhs: np.ndarray
    rhs_expanded: np.ndarray
    rhs_full: np.ndarray
    scale: float = 1.0

    @property
    def expanded_residual(self) -> float:
        """Residual of the direct expansion relative to its largest term (round-off class)."""
        return float(np.abs(self.lhs - self.rhs_expanded).max() / self.scale)

    @property
    def full_residual(self) -> float:
        """Residual of the good-unknown form relative to its largest term (derivative class)."""
        return float(np.abs(self.lhs - self.rhs_full).max() / self.scale)


def commutator_check(grid: SlabGrid, eta: np.ndarray, f: np.ndarray, alpha, i: int) -> CommutatorCheck:
    """Assemble Z^alpha (d^A_i f) and both right-hand sides independently.

    The expanded form uses Z^alpha A_ij computed directly; the full form
    replaces it by the flow-map expression, which only agrees up to the
    discrete product rule.
    """
    alpha = tuple(alpha)
    geom = build_geometry(grid, eta)
    A, n = geom.A, grid.dim - 1
    df = [partial(grid, f, j) for j in range(grid.dim)]
    dA = lambda u: geom.grad_A(u)  # noqa: E731
    lhs = z_derivative(grid, dA(f)[:, i], alpha)

    comm_f = _z_commutator_d3(grid, f, alpha)
    zf = z_derivative(grid, f, alpha)
    ZA_df = sum(z_derivative(grid, A[:, i, j], alpha) * df[j] for j in range(grid.dim))
    trilinear = (z_derivative(grid, sum(A[:, i, j] * df[j] for j in range(grid.dim)), alpha)
                 - ZA_df - sum(A[:, i, j] * z_derivative(grid, df[j], alpha) for j in range(grid.dim)))
    expanded = dA(zf)[:, i] + A[:, i, n] * comm_f + ZA_df + trilinear

    z_eta = map_derivative(grid, eta, [("z", alpha)])
    grad_f = dA(f)
    good = zf - dot(z_eta, grad_f)
    term2 = dot(z_eta, np.stack([dA(grad_f[:, i])[:, k] for k in range(grid.dim)], axis=1))
    comm_eta = (map_derivative(grid, eta, [("d", _unit(grid.dim, n)), ("z", alpha)])
                - map_derivative(grid, eta, [("z", alpha), ("d", _unit(grid.dim, n))]))
    term3 = -A[:, i, n] * dot(comm_eta, grad_f)
    rest, single = _split_alpha(alpha)
    term4 = np.zeros_like(f)
    for l in range(grid.dim):
        z_dl_eta = map_derivative(grid, eta, [("d", _unit(grid.dim, l)), ("z", single)])
        for k in range(grid.dim):
            for j in range(grid.dim):
                coef = A[:, i, l] * A[:, k, j]
                comm = z_derivative(grid, coef * z_dl_eta[:, k], rest) - coef * z_derivative(grid, z_dl_eta[:, k], rest)
                term4 -= comm * df[j]
    C = A[:, i, n] * comm_f + term2 + term3 + term4 + trilinear
    good_term = dA(good)[:, i]
    # the identity can hold with every side zero (e.g. f independent of x_1)
    terms = (f, grad_f, lhs, dA(zf)[:, i], ZA_df, good_term, term2, term3, term4)
    scale = max(max(float(np.abs(x).max()) for x in terms), 1e-300)
    return CommutatorCheck(lhs=lhs, rhs_expanded=expanded, rhs_full=good_term + C, scale=scale)


def _unit(dim: int, j: int) -> tuple:
    e = [0] * dim
    e[j] = 1
    return tuple(e)


# -- normal-derivative reconstructions ------------------------------------------------------------
@dataclass
class NormalReconstruction:
    """Max differences on the near-boundary strip between reconstructed and
    directly differenced normal derivatives.

    Attributes:
        d3bN: Flux-divergence reconstruction of d_3 b . N.
        d3v: Reconstruction of d_3 v from tangential data and time derivatives.
        induction: |b . grad_A v - (d_t b - b d_t p / (gamma p))|.
        tangential_projection: residual of the projected momentum balance along tau.
        normal_projection: residual of the projected momentum balance along n.
        min_transversality: min |(A^T b)_d| on the strip.
    """

    d3bN: float
    d3v: float
    induction: float
    tangential_projection: float
    normal_projection: float
    min_transversality: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def reconstruct_normals(history, ref: ReferenceData, eps: float = 0.0, psi=None,
                        iota: float = 0.25, threshold: float | None = None,
                        stack: HistoryStack | None = None) -> NormalReconstruction:
    """Recover d_3 b . N and d_3 v near Sigma and the walls from tangential data.

    Args:
        history: (t, eta, v) snapshots; two are enough for the d_t terms.
        ref: Reference data.
        eps: Viscosity of the run that produced ``history``.
        psi: Optional corrector with ``value(t)``.
        iota: Strip thickness.
        threshold: Minimum allowed |(A^T b)_d|; defaults to c0/4.

    Raises:
        TransversalityLost: if |(A^T b)_d| drops below the threshold on the strip.
    """
    grid = ref.grid
    st = stack if stack is not None else history_stack(history, ref, 1, extra=3)
    geom, A, J = st.geom, st.geom.A, st.geom.J
    n = grid.dim - 1
    mask = np.broadcast_to(near_boundary_mask(grid, iota), grid.scalar_shape)
    b, p, v = st.b[0], st.p[0], st.v[0]
    db, dp, dv = st.b[1], st.p[1], st.v[1]
    gamma = ref.gamma

    Atb = geom.A_transpose_times(b)
    trans = np.abs(Atb[:, n])
    min_trans = float(trans[mask].min())
    threshold = ref.c0 / 4 if threshold is None else threshold
    if min_trans < threshold:
        raise TransversalityLost(f"|(A^T b)_d| = {min_trans:.3e} below {threshold:.3e} near the boundary")

    def strip_max(x: np.ndarray) -> float:
        x = np.abs(x)
        if x.ndim > grid.dim + 1:
            x = x.max(axis=1)
        return float(x[mask].max())

    d3b = partial(grid, b, n)
    tang = [partial(grid, b, beta) for beta in range(n)]
    rec_bN = -sum(geom.cof[:, i, beta] * tang[beta][:, i] for beta in range(n) for i in range(grid.dim))
    rec_bN = rec_bN + ref.J0_div_b0
    res_bN = strip_max(rec_bN - dot(d3b, geom.N))

    induction_rhs = db - b * (dp / (gamma * p))[:, None]
    b_grad_v = _covariant_along(geom, b, v)
    res_ind = strip_max(b_grad_v - induction_rhs)
    tang_v = sum(Atb[:, beta][:, None] * partial(grid, v, beta) for beta in range(n))
    rec_d3v = (induction_rhs - tang_v) / Atb[:, n][:, None]
    res_d3v = strip_max(rec_d3v - partial(grid, v, n))

    # projected momentum balances
    fields_q = p + 0.5 * dot(b, b)
    grad_q = geom.grad_A(fields_q)
    psi_val = np.zeros_like(v) if psi is None else psi.value(st.t)
    A3sq = sum(A[:, k, n] ** 2 for k in range(grid.dim))
    a3b = Atb[:, n]
    d3v = partial(grid, v, n)
    taus = geom.frame[:-1]

    lower = np.zeros_like(v)
    for i in range(grid.dim):
        for j in range(grid.dim):
            if i == n and j == n:
                continue
            lower += np.stack([A[:, k, i][:, None] * partial(grid, A[:, k, j][:, None] * partial(grid, v, j), i)
                               for k in range(grid.dim)], axis=0).sum(axis=0)
    dA3 = sum(A[:, k, n] * partial(grid, A[:, k, n], n) for k in range(grid.dim))
    frak_f = (-sum(Atb[:, beta][:, None] * partial(grid, b, beta) for beta in range(n)) + st.rho[:, None] * dv
              - eps * lower - eps * dA3[:, None] * d3v
              - eps * A3sq[:, None] * (partial(grid, 1.0 / a3b, n)[:, None] * b_grad_v
                                       - partial(grid, tang_v / a3b[:, None], n))
              - psi_val)
    lhs_vec = d3b + eps * (A3sq / a3b ** 2)[:, None] * partial(grid, b_grad_v, n)
    G_vec = (grad_q + frak_f) / a3b[:, None]
    res_tau = max(strip_max(dot(lhs_vec - G_vec, tau)) for tau in taus)

    div_v = geom.div_A(v)
    grad_v = geom.grad_A(v)  # [:, k, i] = d^A_i v_k
    frak_g = np.zeros_like(v)
    for i in range(grid.dim):
        visc = sum(A[:, j, beta] * partial(grid, grad_v[:, i, j], beta) for j in range(grid.dim) for beta in range(n))
        frak_g[:, i] = (eps * visc
                        + sum(b[:, k] * A[:, k, beta] * partial(grid, b[:, i], beta)
                              for k in range(grid.dim) for beta in range(n))
                        - sum(A[:, i, beta] * partial(grid, p, beta) for beta in range(n))
                        - sum(A[:, i, beta] * partial(grid, b[:, j], beta) * b[:, j]
                              for beta in range(n) for j in range(grid.dim))
                        - st.rho * dv[:, i] + psi_val[:, i])
    cross = sum(A[:, j, n] * A[:, i, beta] * partial(grid, grad_v[:, i, j], beta)
                for j in range(grid.dim) for i in range(grid.dim) for beta in range(n))
    tan_div = sum(A[:, j, n] * A[:, j, beta] * partial(grid, div_v, beta) for j in range(grid.dim) for beta in range(n))
    G_n = (dot(frak_g, A[:, :, n]) + eps * tan_div - eps * cross) / A3sq
    lhs_n = (partial(grid, p, n) + sum(dot(d3b, tau) * dot(b, tau) for tau in taus)
             - eps * partial(grid, div_v, n))
    res_n = strip_max(lhs_n - G_n)
    return NormalReconstruction(d3bN=res_bN, d3v=res_d3v, induction=res_ind,
                                tangential_projection=res_tau, normal_projection=res_n,
                                min_transversality=min_trans)
