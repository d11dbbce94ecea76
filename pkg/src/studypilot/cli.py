"""Command-line surface: one subcommand per analysis step.

Exit codes: 0 success (for ``identify``: effect identified), 2 for a
not-identified effect or a usage error, 1 for any other failure.  Every
run is reproducible: all randomness flows from ``--seed`` (a fixed
default, never the clock), and ``--out`` runs write a manifest with input
hashes alongside the result files.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys

from . import __version__
from .defaults import DEFAULT_SEED
from .workflows import (
    dag_payload,
    identify_text,
    load_bundle,
    match_text,
    monitor_text,
    positivity_text,
    run_identify,
    run_match,
    run_monitor,
    run_positivity,
    run_simulate,
    simulate_text,
    to_json_bytes,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_IDENTIFIED = 2


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(
            f"must be a positive integer, got {value}")
    return value


def _name_list(text: str) -> list:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return names


def _do_assignments(text: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"expected NODE=LEVEL, got {part!r}")
        node, _, level = part.partition("=")
        out[node.strip()] = level.strip()
    if not out:
        raise argparse.ArgumentTypeError("expected NODE=LEVEL assignments")
    return out


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="patient CSV file")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--treatment", help="treatment column "
                   "(default: schema role)")
    p.add_argument("--covariates", type=_name_list,
                   help="comma-separated covariate columns "
                   "(default: schema covariate roles)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="studypilot",
        description="Feasibility toolkit for observational effect studies.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify",
                       help="search for back-door adjustment sets")
    p.add_argument("--dag", required=True, help="graph DSL file")
    p.add_argument("--x", required=True, help="exposure node")
    p.add_argument("--y", required=True, help="outcome node")
    p.add_argument("--forced", type=_name_list, default=[],
                   help="nodes every adjustment set must contain")
    p.add_argument("--latent", type=_name_list, default=[],
                   help="unobserved nodes (never adjustable)")
    p.add_argument("--max-candidates", type=_positive_int, default=20)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("positivity",
                       help="propensity overlap diagnosis")
    _add_data_args(p)
    p.add_argument("--filter", help="stratum filter expression")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("match", help="stochastic caliper matching")
    _add_data_args(p)
    p.add_argument("--filter", help="stratum filter expression")
    p.add_argument("--rct-n", type=_positive_int,
                   help="reference trial size for cohort planning")
    p.add_argument("--caliper", type=float,
                   help="logit-scale caliper (default 0.2 sd)")
    p.add_argument("--ratio", type=_positive_int, default=1,
                   help="controls per treated")
    p.add_argument("--with-replacement", action="store_true")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("monitor",
                       help="centre effects and the Egger IV line")
    _add_data_args(p)
    p.add_argument("--centre", help="centre column (default: schema role)")
    p.add_argument("--outcome", help="outcome column "
                   "(default: schema role)")
    p.add_argument("--reference", help="reference centre "
                   "(default: first level)")
    p.add_argument("--weighting", choices=("beta", "alpha", "equal"),
                   default="beta")
    p.add_argument("--anonymize", action="store_true",
                   help="hash centre labels in plot data")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="draw data from a stored model")
    p.add_argument("--scm", required=True, help="model JSON file")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--do", type=_do_assignments,
                   help="interventions, e.g. EVD=1,Centre=c03")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("serve", help="run the local analysis service")
    p.add_argument("--data", help="patient CSV file")
    p.add_argument("--schema", help="schema JSON file")
    p.add_argument("--dag", help="graph DSL file")
    p.add_argument("--scm", help="model JSON file for /simulate")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    return parser


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_run(out_dir: str, command: str, payload: dict, artifacts: dict,
               inputs: dict, options: dict, seed=None) -> None:
    """Write result files plus a manifest that pins the whole run."""
    os.makedirs(out_dir, exist_ok=True)
    files = {f"{command}.json": to_json_bytes(payload)}
    for name, text in artifacts.items():
        files[name] = text.encode("utf-8")
    for name, blob in files.items():
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(blob)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "inputs": {flag: {"path": path, "sha256": _sha256(path)}
                   for flag, path in inputs.items() if path is not None},
        "options": options,
        "outputs": sorted(files),
    }
    with open(os.path.join(out_dir, "manifest.json"), "wb") as fh:
        fh.write(to_json_bytes(manifest))


def _run(args: argparse.Namespace) -> int:
    if args.command == "identify":
        bundle = load_bundle(dag=args.dag)
        payload, artifacts = run_identify(
            bundle.require_dag(), args.x, args.y, forced=args.forced,
            latent=args.latent, max_candidates=args.max_candidates)
        print(identify_text(payload))
        if args.out:
            _write_run(args.out, "identify", payload, artifacts,
                       {"dag": args.dag},
                       {"x": args.x, "y": args.y, "forced": args.forced,
                        "latent": args.latent,
                        "max_candidates": args.max_candidates})
        return (EXIT_OK if payload["status"] == "Identified"
                else EXIT_NOT_IDENTIFIED)

    if args.command == "positivity":
        bundle = load_bundle(data=args.data, schema=args.schema)
        payload, artifacts = run_positivity(
            bundle.require_table(), filter_text=args.filter,
            treatment=args.treatment, covariates=args.covariates)
        print(positivity_text(payload))
        if args.out:
            _write_run(args.out, "positivity", payload, artifacts,
                       {"data": args.data, "schema": args.schema},
                       {"filter": args.filter,
                        "treatment": args.treatment,
                        "covariates": args.covariates})
        return EXIT_OK

    if args.command == "match":
        bundle = load_bundle(data=args.data, schema=args.schema)
        payload, artifacts = run_match(
            bundle.require_table(), filter_text=args.filter,
            treatment=args.treatment, covariates=args.covariates,
            rct_n=args.rct_n, caliper=args.caliper, ratio=args.ratio,
            with_replacement=args.with_replacement, seed=args.seed)
        print(match_text(payload))
        if args.out:
            _write_run(args.out, "match", payload, artifacts,
                       {"data": args.data, "schema": args.schema},
                       {"filter": args.filter, "rct_n": args.rct_n,
                        "caliper": args.caliper, "ratio": args.ratio,
                        "with_replacement": args.with_replacement,
                        "treatment": args.treatment,
                        "covariates": args.covariates},
                       seed=args.seed)
        return EXIT_OK

    if args.command == "monitor":
        bundle = load_bundle(data=args.data, schema=args.schema)
        payload, artifacts = run_monitor(
            bundle.require_table(), covariates=args.covariates,
            centre=args.centre, treatment=args.treatment,
            outcome=args.outcome, reference=args.reference,
            weighting=args.weighting, anonymize=args.anonymize)
        print(monitor_text(payload))
        if args.out:
            _write_run(args.out, "monitor", payload, artifacts,
                       {"data": args.data, "schema": args.schema},
                       {"reference": args.reference,
                        "weighting": args.weighting,
                        "anonymize": args.anonymize,
                        "treatment": args.treatment,
                        "outcome": args.outcome,
                        "centre": args.centre,
                        "covariates": args.covariates})
        return EXIT_OK

    if args.command == "simulate":
        bundle = load_bundle(scm=args.scm)
        payload, artifacts = run_simulate(
            bundle.require_scm(), args.n, seed=args.seed, do=args.do)
        print(simulate_text(payload))
        if args.out:
            _write_run(args.out, "simulate", payload, artifacts,
                       {"scm": args.scm},
                       {"n": args.n, "do": args.do}, seed=args.seed)
        return EXIT_OK

    if args.command == "serve":
        bundle = load_bundle(data=args.data, schema=args.schema,
                             dag=args.dag, scm=args.scm)
        from .service import create_app
        import uvicorn
        uvicorn.run(create_app(bundle), host=args.host, port=args.port)
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
