from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhd_contact.grid import (
    Phase,
    SlabGrid,
    extend_normal,
    fd_weights,
    integrate,
    jump,
    l2_norm,
    mollify_tangential,
    mollify_volume,
    normal_derivative,
    read_field,
    reflection_coefficients,
    tangential_derivative,
    write_field,
    z3_derivative,
    z_alpha,
)


def test_tangential_derivative_of_resolved_mode_is_exact():
    g = SlabGrid(2, 8, 6)
    x = g.coords[0]
    assert np.abs(tangential_derivative(g, np.sin(x), 1) - np.cos(x)).max() < 1e-14


def test_tangential_derivative_of_constant_vanishes(grid3):
    assert np.abs(tangential_derivative(grid3, np.full(grid3.scalar_shape, 3.2), 2)).max() < 1e-14


def test_tangential_derivative_against_centered_differences():
    # independent oracle: second-order centred differences on a refining grid
    errs = []
    for n in (32, 64, 128):
        g = SlabGrid(3, n, 6)
        x, y, _ = g.coords
        f = np.sin(3 * x) * np.cos(2 * y)
        fd = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2 * g.h_t)
        spec = tangential_derivative(g, f, 1)
        assert np.abs(spec - 3 * np.cos(3 * x) * np.cos(2 * y)).max() < 1e-12
        errs.append(np.abs(spec - fd).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_tangential_axis_validation(grid2):
    with pytest.raises(ValueError):
        tangential_derivative(grid2, grid2.zeros(), 2)


def test_z3_weight_vanishes_at_interface_and_walls(grid2):
    f = np.exp(grid2.coords[1])
    z3 = z3_derivative(grid2, f)
    assert np.abs(z3[Phase.PLUS, :, 0]).max() == 0.0
    assert np.abs(z3[Phase.MINUS, :, -1]).max() == 0.0
    assert np.abs(z3[Phase.PLUS, :, -1]).max() == 0.0


def test_z3_of_linear_profile_at_half():
    g = SlabGrid(2, 8, 8)  # x_d = 0.5 is node 4 of the plus phase
    z3 = z3_derivative(g, g.coords[1].copy())
    assert z3[Phase.PLUS, 0, 4] == pytest.approx(0.5 * (0.25 - 1.0), abs=1e-13)


def test_z3_on_vector_fields_matches_componentwise(grid3):
    v = np.stack([np.sin(c) for c in grid3.coords], axis=1)
    whole = z3_derivative(grid3, v)
    for i in range(3):
        assert np.allclose(whole[:, i], z3_derivative(grid3, v[:, i]), atol=0, rtol=0)


def test_z_alpha_commutes(grid2):
    x, z = grid2.coords
    f = np.sin(2 * x) * np.exp(z)
    a = z_alpha(grid2, f, (1, 1))
    b = tangential_derivative(grid2, z3_derivative(grid2, f), 1)
    assert np.abs(a - b).max() < 1e-12


def test_normal_derivative_of_square_converges_at_stencil_order():
    errs = []
    for n in (8, 16, 32):
        g = SlabGrid(2, 4, n)
        z = g.coords[1]
        errs.append(np.abs(normal_derivative(g, np.sin(3 * z)) - 3 * np.cos(3 * z)).max())
        # quadratics are inside the stencil space
        assert np.abs(normal_derivative(g, z ** 2) - 2 * z).max() < 1e-11
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() > 3.5


def test_normal_derivative_of_constant(grid2):
    assert np.abs(normal_derivative(grid2, np.full(grid2.scalar_shape, 2.0))).max() < 1e-12


def test_one_sided_traces_see_a_derivative_jump(grid2):
    z = grid2.coords[1]
    f = np.concatenate([-z[:1], 2.0 * z[1:]])  # slope -1 below Sigma, 2 above
    d = normal_derivative(grid2, f)
    assert jump(f).max() == 0.0
    assert jump(d) == pytest.approx(np.full(grid2.n_tangential, 3.0), abs=1e-10)


@given(st.integers(min_value=0, max_value=6), st.floats(min_value=-2, max_value=2))
def test_fd_weights_exact_on_polynomials(deg, x0):
    x = np.linspace(-1, 1, 8)
    w = fd_weights(x0, x, 1)
    exact = deg * x0 ** (deg - 1) if deg else 0.0
    assert float(w @ x ** deg) == pytest.approx(exact, abs=1e-8 * max(1.0, abs(x0)) ** 6)


@given(st.integers(min_value=1, max_value=5))
def test_reflection_matches_derivatives(k_terms):
    c = reflection_coefficients(k_terms)
    for n in range(k_terms):
        assert float(np.sum(c * np.arange(1, k_terms + 1) ** n)) == pytest.approx((-1) ** n, abs=1e-9)


def test_extend_normal_reproduces_polynomials():
    z = np.linspace(0, 1, 33)
    f = 1 + z - 2 * z ** 2
    ext = extend_normal(f[None], 4, 3)[0]
    zz = np.concatenate([-np.arange(4, 0, -1) / 32, z, 1 + np.arange(1, 5) / 32])
    assert np.abs(ext - (1 + zz - 2 * zz ** 2)).max() < 1e-12


@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=0.05, max_value=0.5))
def test_mollifiers_reproduce_constants(c, delta):
    g = SlabGrid(2, 32, 16)
    f = np.full(g.scalar_shape, c)
    assert np.abs(mollify_volume(g, f, delta) - c).max() < 1e-12
    assert np.abs(mollify_tangential(g, f, delta) - c).max() < 1e-12


def test_mollify_converges_as_delta_shrinks():
    g = SlabGrid(2, 128, 32)
    f = np.sin(g.coords[0])
    grad = l2_norm(g, np.cos(g.coords[0]))
    errs = [l2_norm(g, mollify_volume(g, f, d) - f) for d in (0.4, 0.2, 0.1)]
    assert errs[0] > errs[1] > errs[2]
    for d, e in zip((0.4, 0.2, 0.1), errs):
        assert e <= d * grad


def test_mollify_rejects_bad_delta(grid2):
    with pytest.raises(ValueError):
        mollify_volume(grid2, grid2.zeros(), 0.0)
    with pytest.raises(ValueError):
        mollify_tangential(grid2, grid2.zeros(), 4.0)


def test_integrate_constant_gives_slab_volume(grid3):
    assert integrate(grid3, np.ones(grid3.scalar_shape)) == pytest.approx(2 * (2 * np.pi) ** 2, rel=1e-13)


def test_field_snapshot_roundtrip(tmp_path, grid3):
    v = np.random.default_rng(0).normal(size=grid3.vector_shape)
    write_field(tmp_path / "v.bin", grid3, v)
    g, back = read_field(tmp_path / "v.bin")
    assert g == grid3 and np.array_equal(back, v)


def test_grid_validation():
    with pytest.raises(ValueError):
        SlabGrid(4, 8, 8)
    with pytest.raises(ValueError):
        SlabGrid(2, 7, 8)
    with pytest.raises(ValueError):
        SlabGrid(2, 8, 4)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_matrix_spectral_path_matches_fft(order):
    from mhd_contact.grid import _spectral, _spectral_fft

    g = SlabGrid(3, 16, 8)
    f = np.random.default_rng(order).normal(size=(2, 3) + g.scalar_shape[1:])
    for axis in (-3, -2):
        fast = _spectral(g, f, axis, order)
        ref = _spectral_fft(g.n_tangential, g.wavenumbers, f, axis, order)
        assert np.abs(fast - ref).max() < 1e-11 * np.abs(ref).max()


def test_large_grids_use_fft_derivatives():
    g = SlabGrid(2, 300, 6)
    f = np.sin(3 * g.coords[0]) * np.ones(g.scalar_shape)
    assert np.abs(tangential_derivative(g, f, 1) - 3 * np.cos(3 * g.coords[0])).max() < 1e-10
