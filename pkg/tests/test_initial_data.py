from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import phase_pair
from mhd_contact.cases import equilibrium, rough
from mhd_contact.constitutive import ReferenceData
from mhd_contact.errors import ConfigError
from mhd_contact.grid import SlabGrid
from mhd_contact.initial_data import (
    boundary_matrix,
    boundary_matrix_det,
    boundary_system,
    build_psi_corrector,
    data_distance,
    enforce_compatibility,
    evaluate_compatibility,
    seed_time_derivatives,
    smooth_data,
)


def smooth_case(n: int) -> ReferenceData:
    """Smooth data compatible at order 0 but not at order 1."""
    g = SlabGrid(2, 2 * n, n)
    x, z = g.coords
    chi = (1 - z ** 2) ** 2
    eta = np.stack([x, z + 0.05 * chi * np.sin(x)], axis=1)
    p0 = 1.0 + 0.1 * np.cos(x) * chi
    v0 = np.stack([0.1 * np.sin(x) * chi, 0.05 * np.cos(x) * chi], axis=1)
    b0 = np.stack([0.2 + 0 * x, 1.0 + 0 * x], axis=1)
    return ReferenceData.from_density(g, eta, p0, v0, b0, phase_pair(g, 1.0, 2.0))


def test_equilibrium_has_zero_time_derivatives():
    ref = equilibrium(SlabGrid(2, 16, 12))
    s = seed_time_derivatives(ref, 3)
    for j in range(1, 4):
        assert max(np.abs(s.p[j]).max(), np.abs(s.v[j]).max(), np.abs(s.b[j]).max()) < 1e-10


def test_pressure_rate_from_compression():
    # d_t p(0) = -gamma p0 div v0 = -(5/3) pi cos(pi x_d); -5 pi / 3 at Sigma
    g = SlabGrid(2, 8, 64)
    z = g.coords[1]
    v0 = np.zeros(g.vector_shape)
    v0[:, 1] = np.sin(np.pi * z)
    b0 = np.zeros(g.vector_shape)
    b0[:, 1] = 1.0
    ref = ReferenceData.from_density(g, g.identity.copy(), np.ones(g.scalar_shape), v0, b0,
                                     np.ones(g.scalar_shape))
    s = seed_time_derivatives(ref, 1)
    assert np.abs(s.p[1] + 5 / 3 * np.pi * np.cos(np.pi * z)).max() < 1e-5
    assert s.p[1][1, 0, 0] == pytest.approx(-5 * math.pi / 3, abs=1e-5)
    assert -5 * math.pi / 3 == pytest.approx(-5.23599, abs=1e-5)


def test_zero_viscosity_reproduces_ideal_seeding():
    ref = smooth_case(16)
    a = seed_time_derivatives(ref, 3)
    b = seed_time_derivatives(ref, 3, eps=0.0, psi=None)
    for j in range(4):
        assert np.array_equal(a.v[j], b.v[j]) and np.array_equal(a.p[j], b.p[j])


def test_ledger_of_equilibrium():
    ref = equilibrium(SlabGrid(2, 16, 12))
    led = evaluate_compatibility(seed_time_derivatives(ref, 3), ref)
    assert led.max_primary() <= 1e-12 and led.max_derived() <= 1e-12


@given(st.floats(min_value=0.01, max_value=0.5))
def test_order_zero_residual_is_the_imposed_pressure_jump(dp):
    ref = equilibrium(SlabGrid(2, 16, 12))
    bad = ref.replace(p0=phase_pair(ref.grid, 1.0, 1.0 + dp))
    led = evaluate_compatibility(seed_time_derivatives(bad, 1), bad)
    assert led.jump_p[0] == (1.0 + dp) - 1.0  # exactly the imposed jump as stored


def test_compatible_data_satisfies_derived_conditions():
    res = enforce_compatibility(smooth_case(32), 3)
    assert res.ledger.max_primary() < 1e-9
    assert res.ledger.max_derived() < 1e-8


def test_targeted_order_one_defect_is_removed():
    ref = smooth_case(32)
    before = evaluate_compatibility(seed_time_derivatives(ref, 2), ref)
    assert before.order_residual(1) > 1e-2  # the defect
    res = enforce_compatibility(ref, 2)
    after = res.ledger
    assert after.order_residual(1) < 1e-9
    assert after.order_residual(0) == pytest.approx(before.order_residual(0), abs=1e-14)


def test_pipeline_is_identity_on_constant_equilibrium():
    ref = equilibrium(SlabGrid(2, 32, 16))
    res = smooth_data(ref, 0.2, 3)
    assert data_distance(res.ref, ref, 3) < 1e-10
    assert res.ledger.max_primary() < 1e-12


def test_smoothing_converges_on_smooth_compatible_data():
    ref = enforce_compatibility(smooth_case(32), 2).ref
    dist = [data_distance(smooth_data(ref, d, 2).ref, ref, 2) for d in (0.3, 0.15, 0.075)]
    assert dist[0] > dist[1] > dist[2]


def test_rough_pipeline_ledger_and_distance():
    ref = rough(SlabGrid(2, 64, 32), seed=7)
    rows = [smooth_data(ref, d, 2) for d in (0.2, 0.1, 0.05)]
    assert all(r.ledger.max_primary() < 1e-9 for r in rows)
    dist = [data_distance(r.ref, ref, 2) for r in rows]
    assert dist[0] > dist[1] > dist[2]


@given(st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.2, 2), st.floats(-1, 1), st.floats(0.3, 2),
       st.floats(-0.5, 0.5), st.sampled_from([2, 3]))
def test_boundary_det_closed_form(p, rho, J, bt, bn, tilt, dim):
    N = np.zeros(dim)
    N[0], N[-1] = tilt, 1.0
    n = N / np.linalg.norm(N)
    tau1 = np.zeros(dim)
    tau1[0], tau1[-1] = 1.0, -tilt
    tau1 /= np.linalg.norm(tau1)
    frame = [tau1]
    if dim == 3:
        frame.append(np.cross(n, tau1))
    frame.append(n)
    b = bt * tau1 + bn * n
    E = boundary_matrix(np.array(p), np.array(rho), b, np.array(J), N, frame, 5 / 3)
    closed = boundary_matrix_det(np.array(p), np.array(rho), b, np.array(J), N, 5 / 3, dim)
    brute = np.linalg.det(E)
    assert brute == pytest.approx(float(closed), rel=1e-9)
    assert np.sign(brute) == (-1) ** dim


def test_boundary_system_at_order_zero_is_trivial():
    ref = smooth_case(16)
    bs = boundary_system(ref, seed_time_derivatives(ref, 1), 0)
    assert np.abs(bs.F).max() < 1e-14
    assert np.abs(bs.det).min() > 0


def test_psi_vanishes_without_viscosity():
    psi = build_psi_corrector(enforce_compatibility(smooth_case(16), 3).ref, 0.0, 3)
    assert all(np.abs(c).max() == 0 for c in psi.coeffs)


def test_psi_makes_viscous_seeding_compatible():
    tops = []
    for n in (32, 64):
        sm = enforce_compatibility(smooth_case(n), 3).ref
        ideal = evaluate_compatibility(seed_time_derivatives(sm, 3), sm, 3, include_top_d3v=True)
        psi = build_psi_corrector(sm, 0.1, 3)
        led = evaluate_compatibility(seed_time_derivatives(sm, 3, eps=0.1, psi=psi), sm, 3, include_top_d3v=True)
        assert led.max_primary() < 1e-9
        assert led.jump_d3v[-1] < 0.2 * ideal.jump_d3v[-1]
        tops.append(led.jump_d3v[-1])
    assert tops[1] < 0.5 * tops[0]


def test_data_validation_rejects_tangential_field():
    g = SlabGrid(2, 16, 12)
    with pytest.raises(ConfigError):
        equilibrium(g, b=(1.0, 0.0)).validate()
