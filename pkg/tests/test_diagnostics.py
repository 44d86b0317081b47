from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from conftest import phase_pair
from mhd_contact.cases import equilibrium, manufactured
from mhd_contact.constitutive import ReferenceData, reconstruct
from mhd_contact.diagnostics import (
    EnergyMonitor,
    backward_weights,
    commutator_check,
    energy_report,
    good_unknowns,
    reconstruct_normals,
    time_derivatives,
)
from mhd_contact.errors import DerivativeBudgetExceeded, InsufficientHistory, TransversalityLost
from mhd_contact.grid import SlabGrid, z3_derivative
from mhd_contact.integrator import StepConfig, ViscousIntegrator
from mhd_contact.norms import anisotropic_norm, hk_norm_sq, multi_indices


# -- norms -----------------------------------------------------------------------------------
def test_multi_indices_counts():
    assert len(multi_indices(3, 2)) == 10 and len(multi_indices(2, 2, exact=True)) == 3


def test_anisotropic_norm_of_zero_and_constant(grid3):
    assert anisotropic_norm(grid3, grid3.zeros(), 1, 1) == 0.0
    vol = 2 * (2 * math.pi) ** 2
    assert anisotropic_norm(grid3, np.full(grid3.scalar_shape, 1.7), 0, 0) == pytest.approx(1.7 * math.sqrt(vol))


def test_anisotropic_norm_tangential_mode(grid3):
    f = np.sin(grid3.coords[0])
    assert np.abs(z3_derivative(grid3, f)).max() < 1e-14
    # alpha = 0 and alpha = e_1 contribute; Z_3 and d_2 give nothing
    expected = math.sqrt(2 * math.pi ** 2 * 2) * 2  # ||sin x_1|| + ||cos x_1||
    assert anisotropic_norm(grid3, f, 0, 1) == pytest.approx(expected, rel=1e-12)


def test_budget_guard():
    with pytest.raises(DerivativeBudgetExceeded):
        anisotropic_norm(SlabGrid(2, 8, 8), np.zeros((2, 8, 9)), 2, 2)


# -- time differences --------------------------------------------------------------------------
@given(st.integers(1, 3), st.lists(st.floats(0.01, 0.2), min_size=5, max_size=5))
def test_backward_weights_exact_on_polynomials(order, gaps):
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    w = backward_weights(t, order)
    for deg in range(order, 5):
        exact = math.perm(deg, order) * t[-1] ** (deg - order)
        assert float(w @ t ** deg) == pytest.approx(exact, rel=1e-6, abs=1e-6)


def test_time_derivatives_need_enough_history():
    with pytest.raises(InsufficientHistory):
        time_derivatives([0.0, 0.1], [np.zeros(2)] * 2, 2)


# -- energy report ----------------------------------------------------------------------------
def test_static_state_has_only_map_norms():
    g = SlabGrid(2, 16, 12)
    b0 = np.zeros(g.vector_shape)
    b0[:, 1] = 1.0
    ref = ReferenceData.from_density(g, g.identity.copy(), np.ones(g.scalar_shape), np.zeros(g.vector_shape),
                                     b0, np.ones(g.scalar_shape))
    hist = [(t, g.identity.copy(), np.zeros(g.vector_shape)) for t in (0.0, 0.1, 0.2, 0.3)]
    rep = energy_report(hist, ref, m=2)
    vol = 4 * math.pi
    assert rep.frak_D_m == pytest.approx(2 * vol)  # ||p||_2^2 + ||b||_2^2 of the constants
    assert rep.frak_Dbar_m == 0.0
    assert rep.E_m - rep.boundary_norm - hk_norm_sq(g, g.identity, 2, is_map=True) == pytest.approx(2 * vol)


def shear_trajectory(n: int, s: float = 0.2, t_end: float = 0.3):
    g = SlabGrid(2, n, n)
    x, z = g.coords
    gz = s * (1 - z ** 2) ** 2
    b0 = np.zeros(g.vector_shape)
    b0[:, 1] = 1.0
    v = np.stack([gz, 0 * z], axis=1)
    ref = ReferenceData.from_density(g, g.identity.copy(), np.ones(g.scalar_shape), v, b0,
                                     phase_pair(g, 1.0, 2.0))
    hist = []
    for t in np.linspace(0.0, t_end, 4):
        eta = g.identity.copy()
        eta[:, 0] += t * gz
        hist.append((t, eta, v.copy()))
    return g, ref, hist


def hand_energy(g: SlabGrid, s: float, t: float) -> float:
    """E_2 of the shear trajectory; x_1 integrals as grid sums, x_d integrals exact."""
    gp = np.array([1.0, 0.0, -2.0, 0.0, 1.0]) * s  # g(z) = s (1 - z^2)^2
    d = [gp, P.polyder(gp), P.polyder(gp, 2), P.polyder(gp, 3)]

    def iz(c):  # integral over (-1, 1)
        anti = P.polyint(c)
        return P.polyval(1.0, anti) - P.polyval(-1.0, anti)

    sq = [iz(P.polymul(c, c)) for c in d]
    L = 2 * math.pi
    vol = 2 * L
    R1 = g.h_t * g.x_t.sum()
    R2 = g.h_t * (g.x_t ** 2).sum()
    E = vol + L * (sq[0] + sq[1] + sq[2])  # p = 1 and v = (g, 0)
    E += t ** 2 * L * (sq[1] + sq[2] + sq[3]) + vol  # b = (t g', 1)
    E += L * (sq[1] + sq[2])  # d_t b = (g', 0)
    # flow map: (x_1 + t g, z) and its derivatives
    E += 2 * R2 + 2 * t * R1 * iz(gp) + t ** 2 * L * sq[0] + L * iz(np.array([0, 0, 1.0]))
    E += vol + t ** 2 * L * sq[1] + vol + t ** 2 * L * sq[2]
    # trace on Sigma: (x_1 + t g(0), 0)
    g0 = gp[0]
    E += (R2 + 2 * t * g0 * R1 + t ** 2 * g0 ** 2 * L) + L
    return E


def test_energy_matches_hand_computation_to_quadrature_order():
    errs = []
    for n in (16, 32, 64):
        g, ref, hist = shear_trajectory(n)
        rep = energy_report(hist, ref, m=2)
        errs.append(abs(rep.E_m - hand_energy(g, 0.2, hist[-1][0])) / rep.E_m)
    assert errs[-1] < 1e-4
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_equilibrium_energy_is_constant():
    ref = equilibrium(SlabGrid(2, 16, 12))
    integ = ViscousIntegrator(ref, StepConfig(eps=1e-3))
    state = integ.initial_state()
    mon = EnergyMonitor(ref, m=2, eps=1e-3)
    values = []
    for _ in range(100):
        state = integ.step(state)
        if len(state.history) > 2:
            values.append(mon.update(state.history).E_m)
    assert max(values) - min(values) <= 1e-10 * max(values)


# -- good unknowns and commutators ----------------------------------------------------------------
def wavy_map(g: SlabGrid, a: float = 0.05):
    eta = g.identity.copy()
    eta[:, -1] += a * np.sin(g.coords[0]) * (1 - g.coords[-1] ** 2) ** 2
    return eta


def test_uniform_velocity_good_unknown():
    g = SlabGrid(2, 32, 16)
    ref = equilibrium(g)
    v = np.ones(g.vector_shape) * np.array([0.3, -0.2])[None, :, None, None]
    gu = good_unknowns(g, wavy_map(g), ref.p0, v, ref.b0, ref, (1, 1))
    assert np.abs(gu.V_m).max() < 1e-12 and gu.v_jump < 1e-12


def test_total_pressure_jump_identity_with_kink():
    # q with a kink across Sigma: [Q] balances -J^{-1} Z eta . N [d_3 q]; both sides use the
    # same one-sided derivatives, so the balance is at round-off on every level
    res = []
    for n in (16, 32, 64):
        g = SlabGrid(2, 2 * n, n)
        ref = equilibrium(g)
        q = 1.0 + np.cos(g.coords[0]) * np.sin(g.coords[1]) * phase_pair(g, -0.3, 0.5)
        gu = good_unknowns(g, wavy_map(g), q, ref.v0, ref.b0, ref, (1, 0))
        res.append(gu.q_jump_residual)
    assert max(res) < 1e-12


def test_continuous_total_pressure_has_no_jump_residual():
    g = SlabGrid(2, 32, 16)
    ref = equilibrium(g)
    q = 1.0 + 0.1 * np.cos(g.coords[0]) * (1 - g.coords[1] ** 2)
    assert good_unknowns(g, wavy_map(g), q, ref.v0, ref.b0, ref, (1, 0)).q_jump_residual < 1e-10


@given(st.integers(0, 10_000), st.sampled_from([(2, 0), (1, 1), (0, 2)]), st.integers(0, 1))
def test_expanded_commutator_is_roundoff(seed, alpha, i):
    g = SlabGrid(2, 16, 16)
    ref = manufactured(g, seed=seed)
    assert commutator_check(g, ref.eta0, ref.p0, alpha, i).expanded_residual < 1e-9


# -- normal reconstructions ----------------------------------------------------------------------
def test_reconstructions_vanish_on_equilibrium():
    ref = equilibrium(SlabGrid(2, 16, 12))
    hist = [(t, ref.eta0.copy(), ref.v0.copy()) for t in (0.0, 0.01, 0.02, 0.03, 0.04)]
    rec = reconstruct_normals(hist, ref)
    worst = max(v for k, v in rec.as_dict().items() if k != "min_transversality")
    assert worst <= 1e-10


def test_loss_of_transversality_is_reported():
    g = SlabGrid(2, 16, 12)
    ref = equilibrium(g, b=(1.0, 0.02), c0=0.01)
    hist = [(t, ref.eta0.copy(), ref.v0.copy()) for t in (0.0, 0.01, 0.02, 0.03, 0.04)]
    with pytest.raises(TransversalityLost):
        reconstruct_normals(hist, ref, threshold=0.05)


def test_flux_reconstruction_of_d3b_is_stencil_accurate():
    errs = []
    for n in (16, 32, 64):
        g = SlabGrid(2, 2 * n, n)
        ref = equilibrium(g)
        eta = wavy_map(g, 0.08)
        b = reconstruct(g, eta, ref.v0, ref).b
        hist = [(t, eta, ref.v0) for t in (0.0, 0.01, 0.02, 0.03, 0.04)]
        errs.append(reconstruct_normals(hist, ref).d3bN)
        assert np.isfinite(b).all()
    assert errs[0] / errs[1] > 8 and errs[1] / errs[2] > 8
