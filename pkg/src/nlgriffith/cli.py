"""Command line entry point ``nlg``.

Commands
--------
``energy``    print the energy breakdown of a field as JSON
``sweep``     run the experiment of a spec along its ladder
``certify``   build truncation sets for a field and check every bound
``minimize``  minimise the spec's energy from a field (or from zero)

Exit codes: 0 pass, 1 experiment failure, 2 parse error, 3 precondition error.
``NLG_LOG`` (``error``, ``info`` or ``debug``) sets the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from .errors import DomainError, NLGError, SpecError, UsageError

EXIT_PASS, EXIT_FAIL, EXIT_PARSE, EXIT_PRECONDITION = 0, 1, 2, 3

log = logging.getLogger("nlgriffith")


def _setup_logging() -> None:
    level = os.environ.get("NLG_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(spec_path: str, seed: Optional[int] = None):
    from .spec import load_spec

    spec = load_spec(spec_path)
    if seed is not None:
        spec.raw["seed"] = int(seed)
    return spec


def _field(args, spec):
    from .fieldio import read_field

    path = args.field if args.field else spec.field_path()
    if path is None:
        raise UsageError("no field given (use --field or the spec's 'field' entry)")
    if isinstance(path, str) and path.startswith("bundled:"):
        from importlib import resources

        path = str(resources.files("nlgriffith") / "data" / "fields" / path[8:])
    return read_field(path)


def cmd_energy(args) -> int:
    from .energy import energy_breakdown

    spec = _load(args.spec, args.seed)
    u = _field(args, spec)
    br = energy_breakdown(u, spec.params)
    d = br.to_dict()
    print(json.dumps({k: _num(v) for k, v in d.items()}, indent=2, sort_keys=True))
    return EXIT_PASS


def _num(v):
    if isinstance(v, float):
        return float(format(v, ".12g"))
    return v


def cmd_sweep(args) -> int:
    from .gammalab.sweep import run_sweep
    from .spec import check_writable

    spec = _load(args.spec, args.seed)
    if "experiment" not in spec.raw:
        raise UsageError("spec names no experiment")
    plan = spec.plan()
    outs = spec.output_paths(args.out)
    check_writable(outs.values())
    report = run_sweep(plan, threads=args.threads,
                       provenance={"spec_sha256": spec.sha256})
    report.write(outs.get("csv_path"), outs.get("json_path"), outs.get("svg_path"))
    print(report.verdict.line())
    if not report.complete:
        return EXIT_PRECONDITION
    return EXIT_PASS if report.verdict.passed else EXIT_FAIL


def cmd_certify(args) -> int:
    from .spec import check_writable
    from .truncation import audit_truncation

    spec = _load(args.spec, args.seed)
    comp = spec.raw.get("compactness")
    if comp is None:
        raise UsageError("spec has no 'compactness' block")
    u = _field(args, spec)
    params = spec.params.replace(delta=float(comp.get("delta", spec.params.delta)))
    outs = spec.output_paths(args.out)
    cert_path = outs.get("json_path", Path(args.out or ".") / "certificate.json")
    check_writable([cert_path])
    audit = audit_truncation(u, params, a=comp.get("a"), b=comp.get("b"),
                             tol=float(comp.get("tol", 0.05)))
    Path(cert_path).write_text(audit.to_json() + "\n")
    print(f"{'certificate':<18} {'lhs':>16} {'rhs':>16} {'slack':>12}  status")
    for c in audit.certificates:
        print(f"{c.name:<18} {c.lhs:>16.12g} {c.rhs:>16.12g} {c.slack:>12.6g}  "
              f"{'ok' if c.passed else 'VIOLATED'}")
    print(f"claim constant N = {audit.claim_N:.12g}")
    return EXIT_PASS if audit.passed else EXIT_FAIL


def cmd_minimize(args) -> int:
    from .fieldio import write_field
    from .gammalab.minimize import DirichletBC, minimize_energy
    from .grid import DisplacementField
    from .spec import check_writable

    spec = _load(args.spec, args.seed)
    objective = spec.raw.get("options", {}).get(
        "objective", "G_eps" if spec.experiment == "minimize_G" else "F_eps")
    u0 = _field(args, spec)
    bc = None
    if spec.raw.get("bc"):
        b = spec.raw["bc"]
        bc = DirichletBC.side_strips(u0, b["left"], b["right"],
                                     int(spec.raw.get("options", {}).get("strip", 1)))
    res = minimize_energy(objective, u0, spec.params, bc,
                          max_iter=int(spec.raw.get("options", {}).get("max_iter", 50_000)))
    outs = spec.output_paths(args.out)
    fpath = outs.get("field_path")
    if fpath:
        check_writable([fpath])
        write_field(res.field, fpath)
    print(json.dumps({"objective": objective, "energy": _num(res.energy),
                      "iterations": res.iterations, "converged": res.converged,
                      "start": res.start}, indent=2, sort_keys=True))
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlg", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True,
                        help="experiment spec (JSON path or bundled:NAME)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for ladder entries")
    common.add_argument("--seed", type=int, default=None, help="override the spec seed")
    fieldopt = argparse.ArgumentParser(add_help=False)
    fieldopt.add_argument("--field", default=None, help="field file (CSV or .nlgf)")
    sub.add_parser("energy", parents=[common, fieldopt], help="print the energy breakdown of a field")
    sub.add_parser("sweep", parents=[common], help="run a sweep")
    sub.add_parser("certify", parents=[common, fieldopt], help="certify truncation bounds")
    sub.add_parser("minimize", parents=[common, fieldopt], help="minimise an energy")
    return ap


_COMMANDS = {"energy": cmd_energy, "sweep": cmd_sweep, "certify": cmd_certify,
             "minimize": cmd_minimize}


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_PASS
    if args.seed is not None and not (0 <= args.seed < 2 ** 64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_PARSE
    try:
        return _COMMANDS[args.command](args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (UsageError, DomainError, NLGError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
