"""Command-line harness.

Subcommands:

    generate   cavity manifest -> problem directory (matrix container files)
    run        experiment spec -> trace CSVs + summary + manifest
    sweep      like run, but insists the spec actually sweeps something
    bounds     problem directory -> TauBoundReport CSV
    certify    problem directory + (tau, alpha, k) -> certificate CSV

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .bounds import CaseParameters, bound_report_for, report_csv_header, report_csv_row
from .cavity import (CavityConfig, export_cavity, generate, load_problem,
                     parse_manifest)
from .errors import (EigensolverError, OneShotError, ProblemAssumptionError,
                     SingularSystemError, SizeGuardError, SpecParseError,
                     SpecValidationError)
from .experiments import load_spec, run_experiment
from .matrixio import MatrixFormatError
from .spectral import (SIZE_GUARD, certificate_csv_header,
                       certificate_csv_row, certify, spectrum_csv)

USAGE_ERROR, VALIDATION_ERROR, NUMERICAL_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="oneshot",
                     description="Multi-step one-shot inversion toolbox")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a cavity problem directory")
    gen.add_argument("--spec", help="cavity manifest (defaults to the built-in configuration)")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, help="override the manifest rng seed")
    gen.add_argument("--quiet", action="store_true")

    for name, description in (("run", "run an experiment spec"),
                              ("sweep", "run a spec that sweeps parameter lists")):
        cmd = sub.add_parser(name, help=description)
        cmd.add_argument("--spec", required=True, help="experiment document")
        cmd.add_argument("--out", help="override the spec output_dir")
        cmd.add_argument("--seed", type=int, help="override the cavity rng seed")
        cmd.add_argument("--quiet", action="store_true")

    bounds = sub.add_parser("bounds", help="sufficient descent-step bounds for a problem")
    bounds.add_argument("--problem", required=True, help="problem directory (from generate)")
    bounds.add_argument("--alpha", type=float, default=0.0)
    bounds.add_argument("--k", type=int, default=1)
    bounds.add_argument("--theta0", type=float)
    bounds.add_argument("--delta0", type=float)
    bounds.add_argument("--out", help="write CSV here instead of stdout")
    bounds.add_argument("--quiet", action="store_true")

    cert = sub.add_parser("certify", help="spectral certificate for (tau, alpha, k)")
    cert.add_argument("--problem", required=True)
    cert.add_argument("--tau", type=float, required=True)
    cert.add_argument("--alpha", type=float, default=0.0)
    cert.add_argument("--k", type=int, default=1)
    cert.add_argument("--size-guard", type=int, default=SIZE_GUARD,
                      help="largest dense block dimension to eigensolve "
                           f"(default {SIZE_GUARD})")
    cert.add_argument("--out", help="write CSV here instead of stdout")
    cert.add_argument("--spectrum", help="also dump the full spectrum as re,im CSV")
    cert.add_argument("--quiet", action="store_true")
    return parser


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_generate(args) -> int:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            config = parse_manifest(fh.read())
    else:
        config = CavityConfig()
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    cavity = generate(config)
    export_cavity(cavity, args.out)
    if not args.quiet:
        ms = cavity.mesh_summary
        print(f"generated cavity: n_u={ms.n_u} n_sigma={ms.n_sigma} n_g={ms.n_g} "
              f"(single-source n_u={ms.n_u_single}) -> {args.out}")
    return 0


def _cmd_run(args, require_lists: bool) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, cavity=replace(spec.cavity, rng_seed=args.seed))
    if require_lists:
        lists = (spec.schemes, spec.taus, spec.ks, spec.alphas,
                 spec.noise_levels, spec.mesh_hs, spec.deltas)
        if not any(len(values) > 1 for values in lists):
            raise SpecValidationError(
                "sweep requires a spec with at least one multi-entry list; use 'run'")
    written = run_experiment(spec, output_dir=args.out, quiet=args.quiet)
    if not args.quiet:
        print(f"wrote {len(written)} files to {args.out or spec.output_dir}")
    return 0


def _cmd_bounds(args) -> int:
    problem, _, _ = load_problem(args.problem)
    params = None
    if args.theta0 is not None or args.delta0 is not None:
        params = CaseParameters(theta0=args.theta0 if args.theta0 is not None else CaseParameters().theta0,
                                delta0=args.delta0 if args.delta0 is not None else CaseParameters().delta0)
    report = bound_report_for(problem, alpha=args.alpha, k=args.k, params=params)
    _emit(report_csv_header() + "\n" + report_csv_row(report) + "\n", args.out)
    return 0


def _cmd_certify(args) -> int:
    problem, _, _ = load_problem(args.problem)
    certificate = certify(problem, args.tau, args.alpha, args.k,
                          size_guard=args.size_guard)
    _emit(certificate_csv_header() + "\n" + certificate_csv_row(certificate) + "\n",
          args.out)
    if args.spectrum:
        with open(args.spectrum, "w", encoding="utf-8") as fh:
            fh.write(spectrum_csv(certificate))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command in ("run", "sweep"):
            return _cmd_run(args, require_lists=args.command == "sweep")
        if args.command == "bounds":
            return _cmd_bounds(args)
        if args.command == "certify":
            return _cmd_certify(args)
        raise AssertionError(f"unhandled command {args.command}")
    except FileNotFoundError as exc:
        print(f"oneshot: file not found: {exc.filename or exc}", file=sys.stderr)
        return USAGE_ERROR
    except (SpecParseError, SpecValidationError, MatrixFormatError, ValueError) as exc:
        print(f"oneshot: validation error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    except (ProblemAssumptionError, SingularSystemError, SizeGuardError,
            EigensolverError) as exc:
        print(f"oneshot: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except OneShotError as exc:
        print(f"oneshot: error: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
