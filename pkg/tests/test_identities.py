from __future__ import annotations

import pytest

from mhd_contact.identities import (
    ROUNDOFF_TOL,
    boundary_det_suite,
    commutator_suite,
    fitted_order,
    normal_suite,
    piola_suite,
    piola_suite_3d,
    run_identity_suites,
)

SEEDS = [11, 12, 13, 14, 15, 16]


def test_fitted_order_recovers_power_law():
    levels = [8, 16, 32]
    assert fitted_order(levels, [n ** -4.0 for n in levels]) == pytest.approx(4.0)


@pytest.mark.parametrize("suite", [piola_suite, normal_suite, boundary_det_suite])
def test_roundoff_suites_2d(suite):
    res = suite(SEEDS, 32)
    assert res.passed and res.worst <= ROUNDOFF_TOL


@pytest.mark.parametrize("suite", [normal_suite, boundary_det_suite])
def test_roundoff_suites_3d(suite):
    res = suite(SEEDS[:3], 8, 3)
    assert res.passed


def test_piola_3d_converges():
    res = piola_suite_3d(SEEDS[:3], levels=(8, 16, 32))
    assert res.passed and res.order >= 3.0


def test_commutator_suites():
    expanded, good = commutator_suite(SEEDS, levels=(16, 32, 64))
    assert expanded.passed
    assert good.passed and good.order >= 3.0


def test_report_lines_and_dict():
    rep = run_identity_suites(seed=1, count=3, n=16, levels=(16, 32), include_3d=False)
    assert rep.passed
    d = rep.as_dict()
    assert set(d) == {s.name for s in rep.suites}
    assert all("PASS" in s.line() for s in rep.suites)
