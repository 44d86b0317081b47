"""Experiment driver: case specs, runs, sweeps and persisted outputs.

A run directory holds ``manifest.json``, ``energy.csv``, ``invariants.csv``,
``snapshots/*.bin``, ``report.md`` and a gnuplot script. CSV floats are
written with ``repr`` so identical inputs give byte-identical files; wall
times only go into the manifest, outside the hashed inputs.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cases import CASES, build_case
from .constitutive import ReferenceData, check_prop1, check_prop2_jumps, mass_density, reconstruct
from .diagnostics import EnergyMonitor
from .errors import ConfigError, MHDContactError, PhysicsAbort
from .geometry import build_geometry
from .grid import SlabGrid, l2_norm, write_field
from .norms import derivative_budget
from .initial_data import build_psi_corrector, data_distance, smooth_data
from .integrator import SCHEMES, SolverState, StepConfig, ViscousIntegrator

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
SEEDED_CASES = ("rough", "manufactured")


# -- configuration ---------------------------------------------------------------------------------
@dataclass
class CaseSpec:
    """Resolved description of one case and its sweeps.

    Attributes:
        name: Case builder (see :data:`CASES`).
        dim: 2 or 3.
        resolution: Intervals per phase in x_d.
        tangential: Points per periodic direction (default 2 * resolution).
        params: Keyword arguments forwarded to the builder.
        m: Index of the monitored energy functionals.
        compat_m: Compatibility order used for smoothing and the corrector.
        gamma: Adiabatic exponent.
        t_max: Final time.
        dt: Fixed step, or None for the CFL step of the initial data.
        scheme: ``"imex"`` or ``"explicit"``.
        eps: Artificial viscosity.
        delta: Smoothing scale; None skips the smoothing pipeline.
        psi: Add the vanishing corrector to the momentum equation.
        co_evolve_b: Time-step b alongside the Cauchy reconstruction.
        cfl, dissipation: Integrator settings.
        energy_every, snapshot_every, sample_every: Output cadences in steps
            (0 disables).
        seed: Seed for random cases and ensembles.
        sweep: Lists for ``eps``, ``delta``, ``resolution``, ``dt``.
    """

    name: str = "equilibrium"
    dim: int = 2
    resolution: int = 16
    tangential: int | None = None
    params: dict = field(default_factory=dict)
    m: int = 2
    compat_m: int = 3
    gamma: float = 5.0 / 3.0
    t_max: float = 0.5
    dt: float | None = None
    scheme: str = "imex"
    eps: float = 0.0
    delta: float | None = None
    psi: bool = False
    co_evolve_b: bool = False
    cfl: float = 0.4
    dissipation: float = 0.05
    energy_every: int = 10
    snapshot_every: int = 0
    sample_every: int = 5
    seed: int = 0
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.name not in CASES:
            raise ConfigError(f"unknown case {self.name!r}; choose from {CASES}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.resolution < 6:
            raise ConfigError("resolution must be at least 6")
        if self.tangential is not None and (self.tangential < 4 or self.tangential % 2):
            raise ConfigError("tangential must be even and at least 4")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        if self.eps < 0 or (self.delta is not None and self.delta <= 0):
            raise ConfigError("eps must be >= 0 and delta > 0")
        if self.m < 0 or self.compat_m < 1:
            raise ConfigError("m must be >= 0 and compat_m >= 1")
        for key, vals in self.sweep.items():
            if key not in ("eps", "delta", "resolution", "dt"):
                raise ConfigError(f"unknown sweep key {key!r}")
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"sweep.{key} must be a non-empty list")

    @property
    def n_tangential(self) -> int:
        return self.tangential if self.tangential is not None else 2 * self.resolution

    def grid(self) -> SlabGrid:
        return SlabGrid(dim=self.dim, n_tangential=self.n_tangential, n_normal=self.resolution)

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        """sha256 of the canonical JSON of every input (seed included)."""
        blob = json.dumps({"version": CONFIG_VERSION, "spec": self.to_dict()}, sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "CaseSpec":
        d = copy.deepcopy(self.to_dict())
        d.update(changes)
        return CaseSpec(**d)


_SECTIONS = {"case": ("name", "dim", "resolution", "tangential", "m", "compat_m", "gamma", "params"),
             "run": ("t_max", "dt", "scheme", "eps", "delta", "psi", "co_evolve_b", "cfl", "dissipation",
                     "energy_every", "snapshot_every", "sample_every", "seed")}


def spec_from_dict(data: dict) -> CaseSpec:
    """Build a spec from the nested config layout (``[case]``, ``[run]``, ``[sweep]``)."""
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version} not supported (expected {CONFIG_VERSION})")
    unknown = set(data) - {"version", "case", "run", "sweep"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kw = {}
    for section, keys in _SECTIONS.items():
        body = data.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        extra = set(body) - set(keys)
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
        kw.update(body)
    kw["sweep"] = dict(data.get("sweep", {}))
    try:
        return CaseSpec(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path: str | Path) -> CaseSpec:
    """Read a TOML config file.

    Raises:
        ConfigError: unreadable file, bad syntax or invalid values.
    """
    import tomli

    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return spec_from_dict(data)


# -- data preparation ------------------------------------------------------------------------------
def prepare_reference(spec: CaseSpec) -> tuple[ReferenceData, dict]:
    """Build the case data, optionally smooth it, and check the standing assumptions.

    Returns:
        The reference data and a summary with the hypothesis residuals and,
        if smoothing ran, the compatibility ledger.
    """
    grid = spec.grid()
    params = dict(spec.params)
    params.setdefault("gamma", spec.gamma)
    if spec.name in SEEDED_CASES:
        params.setdefault("seed", spec.seed)
    try:
        ref = build_case(spec.name, grid, **params)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot build case {spec.name!r}: {exc}") from exc
    summary: dict = {}
    if spec.delta is not None:
        res = smooth_data(ref, spec.delta, spec.compat_m)
        summary["ledger"] = res.ledger.as_dict()
        summary["corrector_sweeps"] = res.passes
        summary["distance_to_input"] = data_distance(res.ref, ref, spec.compat_m)
        ref = res.ref
    summary["hypotheses"] = ref.hypothesis_residuals()
    ref.validate()
    return ref, summary


# -- runs ------------------------------------------------------------------------------------------
@dataclass
class RunResult:
    """Everything a run produced; ``abort`` holds the cause of a physics abort."""

    spec: CaseSpec
    manifest: dict
    energy: list = field(default_factory=list)
    invariants: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    state: SolverState | None = None
    abort: str | None = None

    @property
    def ok(self) -> bool:
        return self.abort is None


INVARIANT_COLUMNS = ("t", "step", "div_drift", "normal_flux_drift", "mass_drift", "jump_p", "jump_b",
                     "jump_d3v", "wall_v", "min_bN")


def invariant_row(ref: ReferenceData, state: SolverState, integrator: ViscousIntegrator) -> dict:
    grid = ref.grid
    geom = build_geometry(grid, state.eta, j_min=ref.c0 / 4)
    b = state.b if state.b is not None else reconstruct(grid, state.eta, state.v, ref, geom=geom, check=False).b
    drift = check_prop1([(state.eta, b)], ref)
    jumps = check_prop2_jumps(grid, state.eta, state.v, ref, geom=geom)
    wall_v = max(float(np.abs(state.v[0, ..., 0]).max()), float(np.abs(state.v[1, ..., -1]).max()))
    return {"t": state.t, "step": state.step, "div_drift": drift.div_drift,
            "normal_flux_drift": drift.normal_flux_drift,
            "mass_drift": float(np.abs(mass_density(geom, ref) - ref.rho0_J0).max()),
            "jump_p": jumps.p, "jump_b": jumps.b, "jump_d3v": jumps.d3v, "wall_v": wall_v,
            "min_bN": integrator.check_transversality(state)}


def step_config(spec: CaseSpec, dt: float | None = None) -> StepConfig:
    return StepConfig(dt=spec.dt if dt is None else dt, scheme=spec.scheme, eps=spec.eps, cfl=spec.cfl,
                      co_evolve_b=spec.co_evolve_b, dissipation=spec.dissipation,
                      history=max(8, spec.m + 3))


def execute(spec: CaseSpec, ref: ReferenceData | None = None, dt: float | None = None,
            out_dir: str | Path | None = None) -> RunResult:
    """Run one case; physics aborts are recorded, not raised.

    Args:
        spec: The case.
        ref: Prepared data (built from ``spec`` when None).
        dt: Step override (sweeps share one step across members).
        out_dir: Where to write outputs; nothing is written when None.
    """
    t_start = time.perf_counter()
    if spec.energy_every and spec.m + 1 > derivative_budget(spec.grid()):
        raise ConfigError(f"energy monitor with m={spec.m} needs {spec.m + 1} derivatives; "
                          f"resolution {spec.resolution} resolves {derivative_budget(spec.grid())}")
    prep: dict = {}
    if ref is None:
        ref, prep = prepare_reference(spec)
    psi = build_psi_corrector(ref, spec.eps, spec.compat_m) if (spec.psi and spec.eps > 0) else None
    integ = ViscousIntegrator(ref, step_config(spec, dt), psi=psi)
    monitor = EnergyMonitor(ref, m=spec.m, eps=spec.eps)
    result = RunResult(spec=spec, manifest={})
    snaps: list[tuple[int, np.ndarray, np.ndarray]] = []

    def callback(state: SolverState) -> None:
        k = state.step
        if k == 0 or (spec.sample_every and k % spec.sample_every == 0):
            result.samples.append((state.t, state.eta.copy(), state.v.copy()))
        if spec.energy_every and k % spec.energy_every == 0 and len(state.history) > spec.m:
            result.energy.append(monitor.update(state.history, b_evolved=state.b).as_dict())
        if k == 0 or (spec.energy_every and k % spec.energy_every == 0):
            result.invariants.append(invariant_row(ref, state, integ))
        if spec.snapshot_every and k % spec.snapshot_every == 0:
            snaps.append((k, state.eta.copy(), state.v.copy()))

    state = None
    try:
        state = integ.initial_state()
        callback(state)
        while state.t < spec.t_max - 1e-12 * max(1.0, spec.t_max):
            state = integ.step(state, min(integ.dt, spec.t_max - state.t))
            callback(state)
        if not result.invariants or result.invariants[-1]["step"] != state.step:
            result.invariants.append(invariant_row(ref, state, integ))
        if spec.sample_every and result.samples[-1][0] != state.t:
            result.samples.append((state.t, state.eta.copy(), state.v.copy()))
    except PhysicsAbort as exc:
        result.abort = f"{type(exc).__name__}: {exc}"
        log.warning("run aborted at t=%.4g: %s", state.t if state else 0.0, result.abort)
    result.state = state
    result.manifest = {
        "version": CONFIG_VERSION,
        "package_version": __version__,
        "hash": spec.content_hash(),
        "config": spec.to_dict(),
        "dt": integ.dt,
        "steps": state.step if state else 0,
        "t_final": state.t if state else 0.0,
        "abort": result.abort,
        "preparation": prep,
        "seconds": time.perf_counter() - t_start,
        "outputs": {},
    }
    if out_dir is not None:
        write_run(result, ref, Path(out_dir), snaps)
    return result


# -- persistence ------------------------------------------------------------------------------------
def write_csv(path: Path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c] for c in columns])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


GNUPLOT_TEMPLATE = """# gnuplot -persist {name}
set datafile separator ","
set key autotitle columnhead
set logscale y
set xlabel "t"
set multiplot layout 2,1
plot "energy.csv" using "t":"E_m" with lines, "" using "t":"G_m" with lines
plot "invariants.csv" using "t":"div_drift" with lines, "" using "t":"normal_flux_drift" with lines, \\
     "" using "t":"jump_d3v" with lines
unset multiplot
"""


def write_run(result: RunResult, ref: ReferenceData, out: Path, snaps) -> None:
    out.mkdir(parents=True, exist_ok=True)
    outputs = result.manifest["outputs"]
    from .diagnostics import EnergyReport

    write_csv(out / "energy.csv", result.energy, EnergyReport.columns())
    write_csv(out / "invariants.csv", result.invariants, INVARIANT_COLUMNS)
    outputs.update(energy="energy.csv", invariants="invariants.csv")
    if snaps:
        sdir = out / "snapshots"
        sdir.mkdir(exist_ok=True)
        for k, eta, v in snaps:
            write_field(sdir / f"eta_{k:06d}.bin", ref.grid, eta)
            write_field(sdir / f"v_{k:06d}.bin", ref.grid, v)
        outputs["snapshots"] = sorted(p.name for p in sdir.glob("*.bin"))
    (out / "plot.gp").write_text(GNUPLOT_TEMPLATE.format(name="plot.gp"))
    outputs["plot"] = "plot.gp"
    outputs["report"] = "report.md"
    (out / "manifest.json").write_text(json.dumps(result.manifest, indent=2, sort_keys=True, default=float))
    (out / "report.md").write_text(render_report(result.manifest, result.energy, result.invariants))


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.3e}"
    return str(x)


def render_report(manifest: dict, energy: list[dict], invariants: list[dict]) -> str:
    cfg = manifest["config"]
    lines = [f"# Run report: {cfg['name']}", "",
             f"- hash: `{manifest['hash']}`",
             f"- dim {cfg['dim']}, resolution {cfg['resolution']} x {cfg['tangential'] or 2 * cfg['resolution']}",
             f"- eps {cfg['eps']}, delta {cfg['delta']}, scheme {cfg['scheme']}, dt {_fmt(manifest['dt'])}",
             f"- reached t = {_fmt(manifest['t_final'])} in {manifest['steps']} steps",
             f"- abort: {manifest['abort'] or 'none'}", ""]
    if invariants:
        lines += ["## Invariant drifts (max over recorded steps)", "", "| quantity | max |", "|---|---|"]
        for c in INVARIANT_COLUMNS[2:]:
            vals = [r[c] for r in invariants]
            agg = min(vals) if c == "min_bN" else max(vals)
            lines.append(f"| {c} | {agg:.3e} |")
        lines.append("")
    if energy:
        e0, e1 = energy[0], energy[-1]
        lines += [f"## Energy functionals (m = {cfg['m']})", "", "| entry | first | last |", "|---|---|---|"]
        for c in ("E_m", "frak_E_m", "frak_D_m", "frak_Dbar_m", "frak_F_m", "G_m", "boundary_norm", "M0_m"):
            lines.append(f"| {c} | {e0[c]:.6e} | {e1[c]:.6e} |")
        lines += ["", "The eps-weighted flow-map terms are reported but are not an acceptance quantity."]
    return "\n".join(lines) + "\n"


# -- studies ------------------------------------------------------------------------------------------
def _traj_difference(a: RunResult, b: RunResult) -> float:
    """sup over shared sample times of the L2 distance of (eta, v)."""
    if not a.ok or not b.ok:
        return math.nan
    grid = a.spec.grid()
    worst = 0.0
    for (ta, ea, va), (tb, eb, vb) in zip(a.samples, b.samples):
        if abs(ta - tb) > 1e-12:
            raise MHDContactError("sample times differ between sweep members")
        worst = max(worst, math.hypot(l2_norm(grid, ea - eb), l2_norm(grid, va - vb)))
    return worst


@dataclass
class StudyTable:
    """Rows of a sweep plus the derived summary."""

    kind: str
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def write(self, out: Path, name: str) -> None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{name}.csv", self.rows, self.columns)
        (out / f"{name}.json").write_text(json.dumps({"kind": self.kind, "summary": self.summary},
                                                     indent=2, sort_keys=True, default=float))

    def markdown(self) -> str:
        head = "| " + " | ".join(self.columns) + " |\n|" + "---|" * len(self.columns) + "\n"
        body = "".join("| " + " | ".join(_fmt(r[c]) for c in self.columns) + " |\n" for r in self.rows)
        return head + body


def shared_dt(spec: CaseSpec, ref: ReferenceData) -> float:
    """Step used by every sweep member: the spec's dt or the inviscid CFL step."""
    if spec.dt is not None:
        return spec.dt
    probe = ViscousIntegrator(ref, step_config(spec.replace(eps=0.0, scheme="imex")))
    return probe.stable_dt(ref.eta0)


def inviscid_limit_study(spec: CaseSpec, eps_list, out_dir: str | Path | None = None) -> StudyTable:
    """Successive trajectory differences over a geometric eps ladder.

    Every member shares the data, the step and the sample times. The
    empirical order is reported, but only monotone decrease is a pass
    criterion.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_list) < 3:
        raise ConfigError("the inviscid-limit study needs at least three eps values")
    ref, _ = prepare_reference(spec)
    dt = shared_dt(spec, ref)
    runs = [execute(spec.replace(eps=e), ref=ref, dt=dt) for e in eps_list]
    table = StudyTable("sweep-eps", ["eps_a", "eps_b", "difference", "order", "G_ratio_max"])
    diffs = []
    for a, b, ra, rb in zip(eps_list, eps_list[1:], runs, runs[1:]):
        diffs.append(_traj_difference(ra, rb))
    for i, (a, b) in enumerate(zip(eps_list, eps_list[1:])):
        order = math.nan
        if i > 0 and diffs[i] > 0 and diffs[i - 1] > 0:
            order = math.log(diffs[i - 1] / diffs[i]) / math.log(eps_list[i - 1] / eps_list[i])
        g_ratio = max(_g_ratio(runs[i]), _g_ratio(runs[i + 1]))
        table.rows.append({"eps_a": a, "eps_b": b, "difference": diffs[i], "order": order, "G_ratio_max": g_ratio})
    finite = [d for d in diffs if not math.isnan(d)]
    table.summary = {
        "dt": dt,
        "monotone": len(finite) == len(diffs) and all(x > y for x, y in zip(diffs, diffs[1:])),
        "aborts": {str(e): r.abort for e, r in zip(eps_list, runs) if r.abort},
        "G_ratio_max": max(r["G_ratio_max"] for r in table.rows),
    }
    if out_dir is not None:
        table.write(Path(out_dir), "sweep_eps")
    return table


def _g_ratio(run: RunResult) -> float:
    if not run.energy:
        return math.nan
    g0 = run.energy[0]["G_m"]
    return max(r["G_m"] for r in run.energy) / g0 if g0 > 0 else math.nan


def delta_study(spec: CaseSpec, delta_list, out_dir: str | Path | None = None) -> StudyTable:
    """Compatibility ledger and H^m distance to the input for each delta."""
    base = spec.replace(delta=None)
    ref, _ = prepare_reference(base)
    table = StudyTable("sweep-delta", ["delta", "distance", "max_primary", "max_derived", "sweeps"])
    for d in sorted(float(x) for x in delta_list):
        res = smooth_data(ref, d, spec.compat_m)
        table.rows.append({"delta": d, "distance": data_distance(res.ref, ref, spec.compat_m),
                           "max_primary": res.ledger.max_primary(), "max_derived": res.ledger.max_derived(),
                           "sweeps": res.passes})
    ds = np.log([r["delta"] for r in table.rows])
    dist = np.log([max(r["distance"], 1e-300) for r in table.rows])
    table.summary = {"slope": float(np.polyfit(ds, dist, 1)[0]) if len(ds) > 1 else math.nan,
                     "max_primary": max(r["max_primary"] for r in table.rows),
                     "max_derived": max(r["max_derived"] for r in table.rows)}
    if out_dir is not None:
        table.write(Path(out_dir), "sweep_delta")
    return table


def dt_study(spec: CaseSpec, dt_list=None, out_dir: str | Path | None = None) -> StudyTable:
    """Final-state differences against the finest step; observed temporal order."""
    ref, _ = prepare_reference(spec)
    if dt_list is None:
        base = shared_dt(spec, ref)
        dt_list = [base, base / 2, base / 4]
    dt_list = sorted((float(x) for x in dt_list), reverse=True)
    runs = [execute(spec.replace(sample_every=0, energy_every=0), ref=ref, dt=d) for d in dt_list]
    grid = spec.grid()
    finest = runs[-1]
    table = StudyTable("converge-dt", ["dt", "difference", "order"])
    diffs = []
    for d, r in zip(dt_list[:-1], runs[:-1]):
        if r.ok and finest.ok:
            diffs.append(math.hypot(l2_norm(grid, r.state.eta - finest.state.eta),
                                    l2_norm(grid, r.state.v - finest.state.v)))
        else:
            diffs.append(math.nan)
    for i, d in enumerate(dt_list[:-1]):
        order = math.nan
        if i > 0 and diffs[i] > 0 and diffs[i - 1] > 0:
            order = math.log2(diffs[i - 1] / diffs[i]) / math.log2(dt_list[i - 1] / dt_list[i])
        table.rows.append({"dt": d, "difference": diffs[i], "order": order})
    table.summary = {"aborts": {str(d): r.abort for d, r in zip(dt_list, runs) if r.abort}}
    if out_dir is not None:
        table.write(Path(out_dir), "converge_dt")
    return table


def resolution_study(spec: CaseSpec, levels, out_dir: str | Path | None = None) -> StudyTable:
    """Interface jump residuals against refinement; the step scales with h."""
    table = StudyTable("resolution", ["resolution", "jump_p", "jump_b", "jump_d3v", "abort"])
    for n in sorted(int(x) for x in levels):
        s = spec.replace(resolution=n, tangential=None if spec.tangential is None else 2 * n,
                         sample_every=0, energy_every=0)
        r = execute(s, dt=None if spec.dt is None else spec.dt * spec.resolution / n)
        last = r.invariants[-1] if r.invariants else {}
        table.rows.append({"resolution": n, "jump_p": last.get("jump_p", math.nan),
                           "jump_b": last.get("jump_b", math.nan), "jump_d3v": last.get("jump_d3v", math.nan),
                           "abort": r.abort or ""})
    if out_dir is not None:
        table.write(Path(out_dir), "resolution")
    return table
