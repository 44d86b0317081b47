"""Command line entry point.

Exit codes: 0 success, 1 physics abort (or a failed verification), 2 bad
configuration. On a non-zero exit an ``error.json`` is written to the output
directory and echoed to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, PhysicsAbort
from .grid import write_field

log = logging.getLogger("mhd_contact")

EXIT_OK, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2
DEFAULT_EPS = [1e-2, 1e-3, 1e-4]
DEFAULT_DELTA = [0.4, 0.2, 0.1, 0.05]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhd-contact", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "prepare-data": "build, smooth and validate initial data; write the ledger and snapshots",
        "run": "run one case",
        "sweep-eps": "inviscid-limit study over an eps ladder",
        "sweep-delta": "smoothing distance and ledger over delta",
        "converge-dt": "temporal convergence against the finest step",
        "verify-identities": "algebraic identity suites on random states",
        "verify-trace": "empirical trace-inequality constants",
        "report": "regenerate report.md from a run directory",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="TOML case file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
        p.add_argument("--resolution", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--tmax", type=float)
        p.add_argument("--dim", type=int, choices=(2, 3))
        p.add_argument("--seed", type=int)
    return parser


def resolve_spec(args):
    from .harness import CaseSpec, load_spec

    spec = load_spec(args.config) if args.config else CaseSpec()
    changes = {k: v for k, v in (("resolution", args.resolution), ("eps", args.eps), ("delta", args.delta),
                                 ("t_max", args.tmax), ("dim", args.dim), ("seed", args.seed)) if v is not None}
    return spec.replace(**changes) if changes else spec


def _dump(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float))


def cmd_prepare(args) -> int:
    from .harness import prepare_reference

    spec = resolve_spec(args)
    ref, summary = prepare_reference(spec)
    out = args.out
    snap = out / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    for name in ("eta0", "p0", "v0", "b0", "rho0"):
        write_field(snap / f"{name}.bin", ref.grid, getattr(ref, name))
    _dump(out / "ledger.json", {"hash": spec.content_hash(), "config": spec.to_dict(), **summary})
    ledger = summary.get("ledger")
    print(f"prepared {spec.name}: hypotheses {json.dumps(summary['hypotheses'], default=float)}")
    if ledger is not None:
        primary = [x for k in ("jump_p", "jump_v", "jump_b_tangential", "wall_v") for x in ledger[k]]
        print(f"ledger max primary {max(primary, default=0.0):.3e}, "
              f"{summary['corrector_sweeps']} corrector sweeps")
    return EXIT_OK


def cmd_run(args) -> int:
    from .harness import execute

    spec = resolve_spec(args)
    res = execute(spec, out_dir=args.out)
    print((args.out / "report.md").read_text())
    if res.abort:
        _dump(args.out / "error.json", {"exit_code": EXIT_ABORT, "type": "PhysicsAbort", "message": res.abort})
        return EXIT_ABORT
    return EXIT_OK


def _study_exit(table, out: Path) -> int:
    aborts = table.summary.get("aborts")
    if aborts:
        _dump(out / "error.json", {"exit_code": EXIT_ABORT, "type": "PhysicsAbort", "message": aborts})
        return EXIT_ABORT
    return EXIT_OK


def _write_study_report(out: Path, title: str, table) -> None:
    text = f"# {title}\n\n{table.markdown()}\n```\n{json.dumps(table.summary, indent=2, default=float)}\n```\n"
    (out / "report.md").write_text(text)
    print(text)


def cmd_sweep_eps(args) -> int:
    from .harness import inviscid_limit_study

    spec = resolve_spec(args)
    table = inviscid_limit_study(spec, spec.sweep.get("eps", DEFAULT_EPS), out_dir=args.out)
    _write_study_report(args.out, f"Inviscid-limit study: {spec.name}", table)
    return _study_exit(table, args.out)


def cmd_sweep_delta(args) -> int:
    from .harness import delta_study

    spec = resolve_spec(args)
    table = delta_study(spec, spec.sweep.get("delta", DEFAULT_DELTA), out_dir=args.out)
    _write_study_report(args.out, f"Smoothing study: {spec.name}", table)
    return EXIT_OK


def cmd_converge_dt(args) -> int:
    from .harness import dt_study

    spec = resolve_spec(args)
    table = dt_study(spec, spec.sweep.get("dt"), out_dir=args.out)
    _write_study_report(args.out, f"Time-step convergence: {spec.name}", table)
    return _study_exit(table, args.out)


def cmd_verify_identities(args) -> int:
    from .identities import run_identity_suites

    n = args.resolution or 64
    rep = run_identity_suites(seed=7 if args.seed is None else args.seed, n=n)
    for s in rep.suites:
        print(s.line())
    _dump(args.out / "identities.json", {"passed": rep.passed, "suites": rep.as_dict()})
    return EXIT_OK if rep.passed else EXIT_ABORT


def cmd_verify_trace(args) -> int:
    from .trace_estimate import field_ensemble, standard_fields, verify_trace_inequality

    dim = args.dim or 3
    n = args.resolution or 32
    fields = field_ensemble(0 if args.seed is None else args.seed, 100, dim=dim)
    rows = {}
    ok = True
    for name, B in standard_fields(dim).items():
        est = verify_trace_inequality(B, fields, theta=0.5, iota=0.25, n=n)
        rows[name] = {"max_ratio": est.max_ratio, "jacobian_bound": est.jacobian_bound,
                      "all_hold": est.all_hold, "max_transport_residual": est.max_transport_residual}
        ok = ok and est.all_hold
        print(f"{name}: max ratio {est.max_ratio:.5f}, bound holds {est.all_hold}, "
              f"transport residual {est.max_transport_residual:.2e}")
    _dump(args.out / "trace.json", {"dim": dim, "resolution": n, "fields": rows, "passed": ok})
    return EXIT_OK if ok else EXIT_ABORT


def cmd_report(args) -> int:
    from .harness import read_csv, render_report

    manifest_path = args.out / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json in {args.out}")
    manifest = json.loads(manifest_path.read_text())
    energy = read_csv(args.out / "energy.csv") if (args.out / "energy.csv").exists() else []
    inv = read_csv(args.out / "invariants.csv") if (args.out / "invariants.csv").exists() else []
    text = render_report(manifest, energy, inv)
    (args.out / "report.md").write_text(text)
    print(text)
    return EXIT_OK


COMMANDS = {"prepare-data": cmd_prepare, "run": cmd_run, "sweep-eps": cmd_sweep_eps,
            "sweep-delta": cmd_sweep_delta, "converge-dt": cmd_converge_dt,
            "verify-identities": cmd_verify_identities, "verify-trace": cmd_verify_trace, "report": cmd_report}


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        code, kind, message = EXIT_CONFIG, "ConfigError", str(exc)
    except PhysicsAbort as exc:
        code, kind, message = EXIT_ABORT, type(exc).__name__, str(exc)
    payload = {"exit_code": code, "type": kind, "message": message}
    try:
        _dump(args.out / "error.json", payload)
    except OSError:
        pass
    print(json.dumps(payload), file=sys.stderr)
    return code


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
