from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mhd_contact.cases import equilibrium, interface_bump, wave
from mhd_contact.errors import CflViolation, ConfigError
from mhd_contact.grid import Phase, SlabGrid, l2_norm
from mhd_contact.integrator import (
    StepConfig,
    ViscousIntegrator,
    apply_closure,
    closure_value,
    dissipation_matrix,
    one_sided_jump,
)


def sup(f):
    return float(np.abs(f).max())


def vertical_equilibrium(grid, beta):
    b = (0.0,) * (grid.dim - 1) + (beta,)
    return equilibrium(grid, rho=(1.0, 2.0), p=1.0, b=b)


class ConstantForce:
    def __init__(self, value):
        self._value = value

    def value(self, t):
        return self._value


@pytest.mark.parametrize("amplitude", [0.0, 0.05])
def test_equilibrium_acceleration_vanishes(amplitude):
    g = SlabGrid(2, 32, 24)
    ref = equilibrium(g, amplitude=amplitude)
    integ = ViscousIntegrator(ref, StepConfig(dt=1e-3, dissipation=0.0))
    st0 = integ.initial_state()
    acc = integ.acceleration(st0.eta, st0.v, 0.0)
    tol = 1e-12 if amplitude == 0 else 1e-6
    assert sup(acc) < tol


def test_tension_is_second_normal_derivative_to_second_order():
    """Shear x_1 -> x_1 + a chi(x_d): rho0 v_t = beta^2 d_d^2 eta + O(a^2)."""
    g = SlabGrid(2, 16, 64)
    beta = 0.8
    ref = vertical_equilibrium(g, beta)
    integ = ViscousIntegrator(ref, StepConfig(dt=1e-3, dissipation=0.0))
    z = g.coords[-1]
    d2chi = 12 * z ** 2 - 4
    errs = []
    for a in (0.02, 0.01, 0.005):
        eta = g.identity.copy()
        eta[:, 0] = eta[:, 0] + a * interface_bump(z)
        force = integ.acceleration(eta, np.zeros(g.vector_shape), 0.0) * ref.rho0[:, None]
        expect = np.zeros(g.vector_shape)
        expect[:, 0] = beta ** 2 * a * d2chi
        errs.append(sup(force - expect))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_corrector_forcing_enters_as_force_over_density():
    g = SlabGrid(2, 16, 12)
    ref = equilibrium(g)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=g.vector_shape)
    integ = ViscousIntegrator(ref, StepConfig(dt=1e-3, dissipation=0.0), psi=ConstantForce(psi))
    st0 = integ.initial_state()
    acc = integ.acceleration(st0.eta, st0.v, 0.3)
    assert np.allclose(acc, psi / ref.rho0[:, None], atol=1e-12)


def test_equilibrium_is_a_fixed_point_over_1000_steps():
    g = SlabGrid(2, 16, 16)
    ref = equilibrium(g)
    integ = ViscousIntegrator(ref, StepConfig(dt=2e-3, eps=1e-3))
    state = integ.run(2.0)
    assert state.step == 1000
    assert sup(state.eta - g.identity) <= 1e-12
    assert sup(state.v) <= 1e-12


def test_explicit_scheme_is_fourth_order_in_time():
    g = SlabGrid(2, 32, 16)
    ref = wave(g, amplitude=0.05, velocity=0.1)
    finals = []
    for dt in (0.02, 0.01, 0.005, 0.0025):
        integ = ViscousIntegrator(ref, StepConfig(dt=dt, scheme="explicit", check_cfl=0))
        finals.append(integ.run(0.2).v)
    errs = [l2_norm(g, f - finals[-1]) for f in finals[:-1]]
    # Richardson against the finest run: the first two ratios are clean
    assert np.log2(errs[0] / errs[1]) >= 3.5


def test_imex_with_zero_viscosity_matches_explicit():
    g = SlabGrid(2, 16, 12)
    ref = wave(g, amplitude=0.05, velocity=0.1)
    out = []
    for scheme in ("imex", "explicit"):
        integ = ViscousIntegrator(ref, StepConfig(dt=0.01, scheme=scheme, eps=0.0))
        out.append(integ.run(0.1))
    assert np.array_equal(out[0].v, out[1].v)
    assert np.array_equal(out[0].eta, out[1].eta)


def test_small_viscosity_perturbs_weakly():
    g = SlabGrid(2, 16, 12)
    ref = wave(g, amplitude=0.05, velocity=0.1)
    runs = {eps: ViscousIntegrator(ref, StepConfig(dt=0.01, eps=eps)).run(0.1) for eps in (0.0, 1e-3, 1e-4)}
    d3 = l2_norm(g, runs[1e-3].v - runs[0.0].v)
    d4 = l2_norm(g, runs[1e-4].v - runs[0.0].v)
    assert d4 < d3
    assert d3 / d4 == pytest.approx(10.0, rel=0.2)


@given(n=st.integers(8, 30), sigma=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_dissipation_is_negative_semidefinite(n, sigma, seed):
    M = dissipation_matrix(n, 1.0 / (n - 1), sigma)
    assert np.allclose(M, M.T)
    x = np.random.default_rng(seed).normal(size=n)
    assert x @ M @ x <= 1e-12 * max(1.0, np.abs(M).max()) * (x @ x)


def test_dissipation_annihilates_quadratics():
    n = 20
    z = np.linspace(0, 1, n)
    M = dissipation_matrix(n, 1.0 / (n - 1), 0.3)
    for q in (np.ones(n), z, z ** 2):
        assert sup(M @ q) < 1e-10


@given(seed=st.integers(0, 10_000))
def test_closure_matches_one_sided_derivatives(seed):
    g = SlabGrid(2, 8, 12)
    f = np.random.default_rng(seed).normal(size=g.vector_shape)
    apply_closure(g, f, zero_walls=True)
    assert sup(f[Phase.PLUS, ..., 0] - f[Phase.MINUS, ..., -1]) == 0.0
    assert sup(one_sided_jump(g, f, g.closure_weights)) < 1e-10 * max(1.0, sup(f) / g.h_n)
    assert sup(f[Phase.MINUS, ..., 0]) == 0.0 and sup(f[Phase.PLUS, ..., -1]) == 0.0


def test_closure_reproduces_smooth_profiles():
    g = SlabGrid(2, 8, 24)
    f = np.stack([np.sin(1.3 * g.coords[-1] + 0.2) * np.ones(g.scalar_shape)] * 2, axis=1)
    exact = np.sin(0.2)
    assert sup(closure_value(g, f) - exact) < 1e-6


def test_cfl_violation_is_raised():
    g = SlabGrid(2, 16, 12)
    ref = wave(g)
    integ = ViscousIntegrator(ref, StepConfig(dt=1.0, check_cfl=1))
    with pytest.raises(CflViolation):
        integ.run(2.0)


def test_default_step_respects_the_limit():
    g = SlabGrid(2, 16, 12)
    integ = ViscousIntegrator(wave(g), StepConfig())
    st0 = integ.initial_state()
    integ.check_cfl(st0, integ.dt)
    assert integ.dt == pytest.approx(integ.stable_dt(st0.eta))


@pytest.mark.parametrize("kwargs", [dict(scheme="leapfrog"), dict(eps=-1.0), dict(dt=0.0),
                                    dict(cfl=1.5), dict(history=0), dict(dissipation=-0.1)])
def test_step_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        StepConfig(**kwargs)


def test_history_ring_is_bounded():
    g = SlabGrid(2, 8, 8)
    integ = ViscousIntegrator(equilibrium(g), StepConfig(dt=0.01, history=4))
    state = integ.run(0.2)
    assert len(state.history) == 4
    assert state.history[-1][0] == pytest.approx(state.t)
