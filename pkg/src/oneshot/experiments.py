"""Experiment harness: parse sweep documents, run them, emit CSV.

An experiment document is plain text with ``[section]`` headers and
``key = value`` pairs (``#`` starts a comment).  Sections:

    [experiment]   kind, output_dir
    [cavity]       any CavityConfig key (see the cavity manifest format)
    [sweep]        schemes, taus, ks, alphas, noise_levels, mesh_hs, deltas
                   (comma-separated lists)
    [run]          max_outer, tol_cost, tol_step

Unknown sections or keys are hard errors carrying the line number.  The
seven experiment kinds cover the standard study families: TauSweep and
KComparison on one fixed cavity, NoiseStudy across noise levels,
MeshRobustness across mesh sizes, DeltaDependence across contrast
scalings, plus BoundReport and CertifySweep which tabulate step bounds
and spectral certificates instead of running iterations.

Outputs per invocation: one trace CSV per run cell (``cell0000.csv``,
...), a ``summary.csv`` with one row per cell, and a reproduction
``manifest.txt`` holding the canonical serialized spec plus the package
version.  Given equal specs, outputs are byte-identical across runs:
seeds are fixed, wall-clock columns are zeroed, and floats are written in
shortest round-trip form (summary) or with 17 significant digits
(traces).
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field, replace

from . import __version__
from .bounds import bound_report_for, report_csv_header, report_csv_row
from .cavity import (CavityConfig, cavity_config_lines, generate,
                     multi_source_objective, parse_cavity_value)
from .descent import RunConfig, SchemeKind, format_trace_csv, run
from .errors import SpecParseError, SpecValidationError
from .spectral import certificate_csv_header, certificate_csv_row, certify


class ExperimentKind(str, enum.Enum):
    TauSweep = "TauSweep"
    KComparison = "KComparison"
    NoiseStudy = "NoiseStudy"
    MeshRobustness = "MeshRobustness"
    DeltaDependence = "DeltaDependence"
    BoundReport = "BoundReport"
    CertifySweep = "CertifySweep"


_RUN_KINDS = (ExperimentKind.TauSweep, ExperimentKind.KComparison,
              ExperimentKind.NoiseStudy, ExperimentKind.MeshRobustness,
              ExperimentKind.DeltaDependence)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    cavity: CavityConfig = field(default_factory=CavityConfig)
    schemes: tuple = ()
    taus: tuple = ()
    ks: tuple = (1,)
    alphas: tuple = (0.0,)
    noise_levels: tuple = (0.0,)
    mesh_hs: tuple = ()
    deltas: tuple = ()
    max_outer: int = 200
    tol_cost: float = 0.0
    tol_step: float = 0.0
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "schemes",
                           tuple(SchemeKind(s) for s in self.schemes))
        for name in ("taus", "ks", "alphas", "noise_levels", "mesh_hs", "deltas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self._validate()

    def _validate(self):
        def require(name):
            if not getattr(self, name):
                raise SpecValidationError(
                    f"experiment kind {self.kind.value} requires a non-empty {name!r}")

        if self.kind in _RUN_KINDS:
            require("schemes")
            require("taus")
            require("ks")
            require("alphas")
        if self.kind is ExperimentKind.NoiseStudy:
            require("noise_levels")
        if self.kind is ExperimentKind.MeshRobustness:
            require("mesh_hs")
        if self.kind is ExperimentKind.DeltaDependence:
            require("deltas")
        if self.kind is ExperimentKind.BoundReport:
            require("ks")
            require("alphas")
        if self.kind is ExperimentKind.CertifySweep:
            require("taus")
            require("ks")
            require("alphas")
        for name in ("taus", "alphas", "noise_levels", "mesh_hs", "deltas"):
            values = getattr(self, name)
            if any(not math.isfinite(v) for v in values):
                raise SpecValidationError(f"{name} contains a non-finite value")
        if any(t <= 0 for t in self.taus):
            raise SpecValidationError("taus must be positive")
        if any(k < 1 for k in self.ks):
            raise SpecValidationError("ks must be >= 1")
        if any(a < 0 for a in self.alphas):
            raise SpecValidationError("alphas must be non-negative")
        if any(e < 0 for e in self.noise_levels):
            raise SpecValidationError("noise_levels must be non-negative")
        if self.max_outer < 1:
            raise SpecValidationError("max_outer must be >= 1")


# ----------------------------------------------------------------------
# document parsing / serialization
# ----------------------------------------------------------------------

_EXPERIMENT_KEYS = ("kind", "output_dir")
_SWEEP_KEYS = ("schemes", "taus", "ks", "alphas", "noise_levels", "mesh_hs", "deltas")
_RUN_KEYS = ("max_outer", "tol_cost", "tol_step")


def _split_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_spec(text: str) -> ExperimentSpec:
    """Parse an experiment document; unknown keys and sections are errors."""
    section = None
    experiment, cavity_kwargs, sweep, runcfg = {}, {}, {}, {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("experiment", "cavity", "sweep", "run"):
                raise SpecParseError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise SpecParseError(f"expected 'key = value', got {line!r}", line=lineno)
        if section is None:
            raise SpecParseError("entry before any [section] header", line=lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if section == "experiment":
                if key not in _EXPERIMENT_KEYS:
                    raise SpecParseError(f"unknown key {key!r} in [experiment]", line=lineno)
                experiment[key] = value
            elif section == "cavity":
                try:
                    cavity_kwargs[key] = parse_cavity_value(key, value)
                except KeyError:
                    raise SpecParseError(f"unknown key {key!r} in [cavity]",
                                         line=lineno) from None
            elif section == "sweep":
                if key not in _SWEEP_KEYS:
                    raise SpecParseError(f"unknown key {key!r} in [sweep]", line=lineno)
                if key == "schemes":
                    sweep[key] = tuple(_split_list(value))
                elif key == "ks":
                    sweep[key] = tuple(int(v) for v in _split_list(value))
                else:
                    sweep[key] = tuple(float(v) for v in _split_list(value))
            elif section == "run":
                if key not in _RUN_KEYS:
                    raise SpecParseError(f"unknown key {key!r} in [run]", line=lineno)
                runcfg[key] = int(value) if key == "max_outer" else float(value)
        except SpecParseError:
            raise
        except ValueError as exc:
            raise SpecParseError(f"bad value for {key!r}: {exc}", line=lineno) from exc
    if "kind" not in experiment:
        raise SpecValidationError("missing required key 'kind' in [experiment]")
    try:
        kind = ExperimentKind(experiment["kind"])
    except ValueError:
        raise SpecValidationError(
            f"unknown experiment kind {experiment['kind']!r}") from None
    try:
        cavity = CavityConfig(**cavity_kwargs)
        schemes = sweep.pop("schemes", ())
        return ExperimentSpec(kind=kind, cavity=cavity, schemes=schemes,
                              output_dir=experiment.get("output_dir", "out"),
                              **sweep, **runcfg)
    except (ValueError, TypeError) as exc:
        raise SpecValidationError(str(exc)) from exc


def serialize_spec(spec: ExperimentSpec) -> str:
    """Canonical document form; parse(serialize(spec)) == spec."""
    def numbers(values):
        return ",".join(repr(float(v)) for v in values)

    lines = ["[experiment]",
             f"kind = {spec.kind.value}",
             f"output_dir = {spec.output_dir}",
             "",
             "[cavity]"]
    lines += cavity_config_lines(spec.cavity)
    lines += ["",
              "[sweep]",
              "schemes = " + ",".join(s.value for s in spec.schemes),
              f"taus = {numbers(spec.taus)}",
              "ks = " + ",".join(str(k) for k in spec.ks),
              f"alphas = {numbers(spec.alphas)}",
              f"noise_levels = {numbers(spec.noise_levels)}",
              f"mesh_hs = {numbers(spec.mesh_hs)}",
              f"deltas = {numbers(spec.deltas)}",
              "",
              "[run]",
              f"max_outer = {spec.max_outer}",
              f"tol_cost = {spec.tol_cost!r}",
              f"tol_step = {spec.tol_step!r}"]
    return "\n".join(lines) + "\n"


def load_spec(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())


# ----------------------------------------------------------------------
# execution
# ----------------------------------------------------------------------

_SUMMARY_HEADER = ("cell,kind,scheme,tau,k,alpha,noise_level,mesh_h,delta,"
                   "n_u,n_sigma,status,n_outer,acc_inner,final_cost,"
                   "final_grad_norm,final_rel_err_sigma,iters_to_cost_1e-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cells(spec: ExperimentSpec):
    """Enumerate (cavity_variant, scheme, tau, k, alpha) run cells.

    Cavity variants regenerate the cavity with one field swapped (noise
    level, mesh size or contrast scaling); the gradient-descent schemes
    ignore k, so their cells collapse to a single k.
    """
    if spec.kind is ExperimentKind.NoiseStudy:
        variants = [replace(spec.cavity, noise_level=e) for e in spec.noise_levels]
    elif spec.kind is ExperimentKind.MeshRobustness:
        variants = [replace(spec.cavity, mesh_h=h) for h in spec.mesh_hs]
    elif spec.kind is ExperimentKind.DeltaDependence:
        variants = [replace(spec.cavity, delta=d) for d in spec.deltas]
    else:
        variants = [spec.cavity]
    for variant in variants:
        for scheme in spec.schemes:
            ks = spec.ks if SchemeKind(scheme).is_one_shot else (spec.ks[0],)
            for tau in spec.taus:
                for k in ks:
                    for alpha in spec.alphas:
                        yield variant, scheme, tau, k, alpha


def run_experiment(spec: ExperimentSpec, output_dir=None, quiet: bool = True):
    """Execute a spec; returns the list of files written (absolute paths).

    ``output_dir`` overrides the spec's own output directory.
    """
    out = output_dir or spec.output_dir
    os.makedirs(out, exist_ok=True)
    written = []

    def emit(name, content):
        path = os.path.join(out, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
        written.append(path)
        return path

    manifest = (f"# oneshot-inversion {__version__}\n"
                f"# reproduction manifest: run `oneshot run --spec` on the spec below\n"
                + serialize_spec(spec))
    emit("manifest.txt", manifest)

    if spec.kind in _RUN_KINDS:
        summary_rows = [_SUMMARY_HEADER]
        cavity_cache = {}
        for index, (variant, scheme, tau, k, alpha) in enumerate(_cells(spec)):
            key = (variant.noise_level, variant.mesh_h, variant.delta)
            if key not in cavity_cache:
                cavity_cache[key] = generate(variant)
            cavity = cavity_cache[key]
            objective = multi_source_objective(
                cavity, alpha=alpha, use_noisy=variant.noise_level > 0)
            config = RunConfig(scheme=scheme, tau=tau, k=k,
                               max_outer=spec.max_outer, tol_cost=spec.tol_cost,
                               tol_step=spec.tol_step, sigma0=cavity.init_sigma)
            trace = run(objective, config)
            if not quiet:
                print(f"cell {index:04d}: {SchemeKind(scheme).value} tau={tau} k={k} "
                      f"alpha={alpha} -> {trace.status.value} "
                      f"(n={trace.records[-1].n}, J={trace.final_cost:.3e})")
            emit(f"cell{index:04d}.csv", format_trace_csv(trace))
            last = trace.records[-1]
            summary_rows.append(",".join([
                f"{index:04d}", spec.kind.value, SchemeKind(scheme).value,
                _fmt(float(tau)), str(k), _fmt(float(alpha)),
                _fmt(float(variant.noise_level)), _fmt(float(variant.mesh_h)),
                _fmt(float(variant.delta)), str(cavity.mesh_summary.n_u),
                str(cavity.mesh_summary.n_sigma), trace.status.value,
                str(last.n), str(last.acc_inner), _fmt(last.cost),
                _fmt(last.grad_norm), _fmt(last.rel_err_sigma),
                _fmt(trace.iterations_to_cost(1e-8)),
            ]))
        emit("summary.csv", "\n".join(summary_rows) + "\n")
    elif spec.kind is ExperimentKind.BoundReport:
        cavity = generate(spec.cavity)
        rows = [report_csv_header()]
        for k in spec.ks:
            for alpha in spec.alphas:
                rows.append(report_csv_row(bound_report_for(cavity.problem, alpha, k)))
        emit("bounds.csv", "\n".join(rows) + "\n")
    elif spec.kind is ExperimentKind.CertifySweep:
        cavity = generate(spec.cavity)
        rows = [certificate_csv_header()]
        for tau in spec.taus:
            for k in spec.ks:
                for alpha in spec.alphas:
                    rows.append(certificate_csv_row(
                        certify(cavity.problem, tau, alpha, k)))
        emit("certify.csv", "\n".join(rows) + "\n")
    return written
