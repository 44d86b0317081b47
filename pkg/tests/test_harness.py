from __future__ import annotations

import json

import pytest

from mhd_contact.errors import ConfigError
from mhd_contact.harness import (
    INVARIANT_COLUMNS,
    CaseSpec,
    delta_study,
    execute,
    inviscid_limit_study,
    load_spec,
    prepare_reference,
    read_csv,
    spec_from_dict,
    write_csv,
)


def test_defaults_validate():
    spec = CaseSpec()
    assert spec.n_tangential == 2 * spec.resolution
    assert spec.grid().dim == 2


@pytest.mark.parametrize("changes", [dict(name="vortex"), dict(dim=4), dict(resolution=4), dict(tangential=7),
                                     dict(scheme="euler"), dict(t_max=0.0), dict(eps=-1.0), dict(delta=0.0),
                                     dict(sweep={"gamma": [1.4]}), dict(sweep={"eps": []})])
def test_invalid_specs_rejected(changes):
    with pytest.raises(ConfigError):
        CaseSpec().replace(**changes)


def test_unknown_keys_and_versions_rejected():
    with pytest.raises(ConfigError):
        spec_from_dict({"version": 99, "case": {}})
    with pytest.raises(ConfigError):
        spec_from_dict({"version": 1, "case": {"colour": "red"}})
    with pytest.raises(ConfigError):
        spec_from_dict({"version": 1, "physics": {}})


def test_load_spec_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("version = 1\n[case\n")
    with pytest.raises(ConfigError):
        load_spec(bad)


@pytest.mark.parametrize("name", ["equilibrium", "wave", "contact"])
def test_shipped_configs_load(name):
    spec = load_spec(f"configs/{name}.cfg")
    assert spec.name == name


def test_hash_is_deterministic_and_sensitive():
    a = CaseSpec(name="wave", seed=1)
    assert a.content_hash() == CaseSpec(name="wave", seed=1).content_hash()
    assert a.content_hash() != a.replace(seed=2).content_hash()
    assert a.content_hash() != a.replace(eps=1e-3).content_hash()


def test_unresolved_energy_monitor_is_config_error():
    with pytest.raises(ConfigError):
        execute(CaseSpec(resolution=8, m=2))


def test_bad_case_parameters_become_config_errors():
    with pytest.raises(ConfigError):
        prepare_reference(CaseSpec(name="wave", params={"wavelength": 3}))


def test_csv_roundtrip_is_exact(tmp_path):
    rows = [{"t": 0.1, "x": 1 / 3}, {"t": 0.2, "x": 2e-17}]
    write_csv(tmp_path / "a.csv", rows, ["t", "x"])
    assert read_csv(tmp_path / "a.csv") == rows


def test_runs_are_byte_reproducible(tmp_path):
    spec = CaseSpec(name="wave", resolution=12, t_max=0.05, eps=1e-3)
    for sub in ("a", "b"):
        execute(spec, out_dir=tmp_path / sub)
    for name in ("energy.csv", "invariants.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["hash"] == spec.content_hash() and man["abort"] is None


def test_equilibrium_run_keeps_invariants():
    res = execute(CaseSpec(resolution=12, t_max=0.2))
    assert res.ok
    last = res.invariants[-1]
    assert set(INVARIANT_COLUMNS) <= set(last)
    for key in ("div_drift", "normal_flux_drift", "mass_drift", "jump_p", "jump_b", "wall_v"):
        assert last[key] <= 1e-12


def test_abort_is_recorded_not_raised():
    res = execute(CaseSpec(resolution=12, t_max=10.0, dt=2.0))
    assert not res.ok and "CflViolation" in res.abort


def test_equilibrium_eps_sweep_is_flat():
    table = inviscid_limit_study(CaseSpec(resolution=12, t_max=0.1), [1e-2, 1e-3, 1e-4])
    assert all(r["difference"] <= 1e-12 for r in table.rows)


def test_wave_eps_sweep_is_monotone(tmp_path):
    spec = CaseSpec(name="wave", resolution=12, t_max=0.1, params={"amplitude": 0.05, "velocity": 0.05})
    table = inviscid_limit_study(spec, [1e-2, 1e-3, 1e-4], out_dir=tmp_path)
    assert table.summary["monotone"] and not table.summary["aborts"]
    assert (tmp_path / "sweep_eps.csv").exists()
    with pytest.raises(ConfigError):
        inviscid_limit_study(spec, [1e-2, 1e-3])


def test_delta_study_reports_ledger():
    spec = CaseSpec(name="rough", resolution=32, compat_m=2, t_max=0.1)
    table = delta_study(spec, [0.2, 0.1])
    assert table.summary["max_primary"] < 1e-9
    by_delta = {r["delta"]: r["distance"] for r in table.rows}
    assert by_delta[0.1] < by_delta[0.2]
