from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import phase_pair
from mhd_contact.cases import equilibrium, manufactured
from mhd_contact.constitutive import (
    ReferenceData,
    check_prop1,
    check_prop2_jumps,
    mass_density,
    reconstruct,
    reconstruct_b,
    reconstruct_thermo,
)
from mhd_contact.errors import ConfigError, NonPositivePressure
from mhd_contact.geometry import build_geometry
from mhd_contact.grid import SlabGrid


def flat_ref(grid, b, p=1.0, rho=(1.0, 2.0)):
    b0 = np.zeros(grid.vector_shape)
    for i, c in enumerate(b):
        b0[:, i] = c
    return ReferenceData.from_density(grid, grid.identity.copy(), np.full(grid.scalar_shape, p),
                                      np.zeros(grid.vector_shape), b0, phase_pair(grid, *rho))


def test_reference_map_returns_reference_fields():
    ref = manufactured(SlabGrid(2, 16, 12), seed=3)
    rho, p = reconstruct_thermo(ref.geometry0, ref)
    assert np.abs(rho - ref.rho0).max() < 1e-13 and np.abs(p - ref.p0).max() < 1e-13
    assert np.abs(reconstruct_b(ref.geometry0, ref) - ref.b0).max() < 1e-13


def test_vertical_stretch_thermo(grid3):
    ref = flat_ref(grid3, (0, 0, 1))
    eta = grid3.identity.copy()
    eta[:, 2] *= 1.5
    rho, p = reconstruct_thermo(build_geometry(grid3, eta), ref)
    assert np.abs(p - math.exp(-5.0 / 3.0 * math.log(1.5))).max() < 1e-13
    assert p.max() == pytest.approx(0.50876, abs=1e-5)
    assert np.abs(rho - ref.rho0 / 1.5).max() < 1e-13


def test_volume_preserving_map_keeps_thermo(grid3):
    ref = flat_ref(grid3, (0, 0, 1))
    eta = grid3.identity.copy()
    eta[:, 0] += 0.1 * grid3.coords[2]
    rho, p = reconstruct_thermo(build_geometry(grid3, eta), ref)
    assert np.abs(rho - ref.rho0).max() < 1e-13 and np.abs(p - 1).max() < 1e-13


@pytest.mark.parametrize("b0, expected", [((0, 0, 1), (0.1, 0, 1)), ((1, 0, 0), (1, 0, 0))])
def test_cauchy_formula_on_shear(grid3, b0, expected):
    ref = flat_ref(grid3, b0)
    eta = grid3.identity.copy()
    eta[:, 0] += 0.1 * grid3.coords[2]
    b = reconstruct_b(build_geometry(grid3, eta), ref)
    assert np.abs(b - np.array(expected, dtype=float)[None, :, None, None, None]).max() < 1e-13


def test_low_pressure_raises(grid2):
    ref = flat_ref(grid2, (0, 1), p=0.1)  # 0.1 * 3^(-5/3) is below c0 / 4
    eta = grid2.identity.copy()
    eta[:, 1] *= 3.0
    with pytest.raises(NonPositivePressure):
        reconstruct_thermo(build_geometry(grid2, eta), ref)


def test_mass_conservation_is_pointwise(grid2):
    ref = flat_ref(grid2, (0.3, 1))
    eta = grid2.identity.copy()
    eta[:, 1] += 0.05 * np.sin(grid2.coords[0]) * (1 - grid2.coords[1] ** 2) ** 2
    assert np.abs(mass_density(build_geometry(grid2, eta), ref) - ref.rho0_J0).max() < 1e-14


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_cauchy_invariants_hold_for_any_map(seed, dim):
    # J A^T b = J0 A0^T b0 pointwise for the reconstructed b, whatever eta is
    grid = SlabGrid(dim, 8, 8)
    ref = manufactured(grid, seed=seed)
    rng = np.random.default_rng(seed)
    eta = ref.eta0.copy()
    for i in range(dim):
        eta[:, i] += 0.03 * np.cos(grid.coords[0] + rng.uniform(0, 6)) * (1 - grid.coords[-1] ** 2)
    g = build_geometry(grid, eta)
    b = reconstruct_b(g, ref)
    flux = g.J[:, None] * g.A_transpose_times(b)
    assert np.abs(flux - ref.w).max() < 1e-12


def test_prop1_drift_zero_at_equilibrium():
    ref = equilibrium(SlabGrid(2, 16, 12))
    d = check_prop1([(ref.eta0, ref.b0)] * 3, ref)
    assert d.div_drift == 0.0 and d.normal_flux_drift == 0.0


def test_jumps_vanish_on_equilibrium():
    ref = equilibrium(SlabGrid(2, 16, 12))
    rep = check_prop2_jumps(ref.grid, ref.eta0, ref.v0, ref)
    assert max(rep.as_dict().values()) <= 1e-12


def test_reconstruct_bundles_fields():
    ref = equilibrium(SlabGrid(2, 16, 12))
    f = reconstruct(ref.grid, ref.eta0, ref.v0, ref)
    assert np.abs(f.q - (f.p + 0.5 * (f.b ** 2).sum(axis=1))).max() == 0


def test_validation_rejects_pressure_jump(grid2):
    ref = flat_ref(grid2, (0.3, 1))
    bad = ref.replace(p0=phase_pair(grid2, 1.0, 1.2), rho0=ref.rho0)
    with pytest.raises(ConfigError):
        bad.replace(b0=np.zeros(grid2.vector_shape)).validate()


def test_entropy_and_density_constructors_agree(grid2):
    a = flat_ref(grid2, (0.3, 1))
    b = ReferenceData.from_entropy(grid2, a.eta0, a.p0, a.v0, a.b0, a.s0)
    assert np.abs(b.rho0 - a.rho0).max() < 1e-14
