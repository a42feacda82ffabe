"""Command-line front end.

Subcommands: ``simulate`` (one path), ``estimate`` (full estimator run),
``pilot`` (per-level cost/variance preview), ``compare`` (exact CMC vs
unbiased MLMC at equal accuracy), ``sweep`` (speedup curve over a model
parameter), and ``validate-model`` (parse, summarize, scaling diagnostics).

Reports are written as canonical JSON (volatile fields like wall time stay
out, so a rerun with the same seed is byte-identical) plus a human-readable
table on stdout; ``--csv`` exports the per-level breakdown.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import dataclass

from . import models as bundled
from .mlmc import (
    EstimateReport,
    LevelPlan,
    _quantile,
    allocate,
    cmc_exact,
    cmc_tau,
    control_variate,
    mlmc_biased,
    mlmc_unbiased,
    pilot,
)
from .model import ModelError, Observable, compute_scaling
from .modelfile import ModelFile, ParseError, parse_model, serialize_model
from .paths import BudgetExceededError, exact_path, tau_leap_path
from .stochastics import RandomStream

__all__ = ["JobConfig", "main", "run"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_BUDGET = 4
EXIT_MODEL = 5

METHODS = ("exact-cmc", "tau-cmc", "biased-mlmc", "unbiased-mlmc", "control-variate")

_INDICATOR_RE = re.compile(
    r"^indicator\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*,\s*([^,]+)\s*,\s*([^)]+?)\s*\)$"
)


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"environment variable {name} must be an integer")


def load_model(spec: str) -> ModelFile:
    """Resolve a model spec: a file path first, then a bundled name."""
    if os.path.exists(spec):
        with open(spec, "r", encoding="utf-8") as fh:
            return parse_model(fh.read())
    try:
        return bundled.get_model(spec)
    except KeyError:
        names = ", ".join(sorted(bundled.bundled_models()))
        raise ParseError(
            f"no such model file or bundled model: {spec!r} "
            f"(bundled models: {names})"
        ) from None


def parse_observable(text: str, network) -> Observable:
    """Parse the observable grammar: NAME, NAME*NAME, indicator(NAME, a, b)."""
    text = text.strip()
    m = _INDICATOR_RE.match(text)
    if m:
        return Observable.indicator(
            network.species_index(m.group(1)),
            float(m.group(2)),
            float(m.group(3)),
        )
    if "*" in text:
        left, _, right = text.partition("*")
        return Observable.product(
            network.species_index(left.strip()),
            network.species_index(right.strip()),
        )
    return Observable.component(network.species_index(text))


@dataclass
class JobConfig:
    """One estimator run as requested on the command line."""

    model: str
    observable: str
    time: float
    method: str
    epsilon: float
    confidence: float = 0.95
    M: int = 3
    ell0: int = 2
    L: int = 5
    h: float | None = None
    exact_method: str = "next-reaction"
    seed: int = 0
    workers: int = 1
    n_pilot: int = 100
    batch_size: int = 1000
    max_events: int = 1_000_000_000
    max_total_updates: int | None = None
    output: str | None = None
    csv: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "tau-cmc" and self.h is None:
            raise ValueError("method tau-cmc requires --h")
        if self.exact_method not in ("next-reaction", "direct"):
            raise ValueError(f"unknown exact method {self.exact_method!r}")


def run(job: JobConfig) -> EstimateReport:
    """Dispatch a job to the estimator it names."""
    model = load_model(job.model)
    net = model.network
    obs = parse_observable(job.observable, net)
    common = dict(
        confidence=job.confidence,
        stream=job.seed,
        workers=job.workers,
        batch_size=job.batch_size,
        max_events=job.max_events,
        max_total_updates=job.max_total_updates,
    )
    if job.method == "exact-cmc":
        return cmc_exact(net, None, job.time, obs, job.epsilon,
                         method=job.exact_method, **common)
    if job.method == "tau-cmc":
        return cmc_tau(net, None, job.time, obs, job.h, job.epsilon, **common)
    if job.method == "biased-mlmc":
        return mlmc_biased(
            net, None, job.time, obs, job.M, job.ell0, job.L, job.epsilon,
            n_pilot=job.n_pilot, **common,
        )
    if job.method == "unbiased-mlmc":
        return mlmc_unbiased(
            net, None, job.time, obs, job.M, job.ell0, job.L, job.epsilon,
            n_pilot=job.n_pilot, **common,
        )
    # control-variate
    if model.reduced is None:
        raise ModelError(
            f"model {job.model!r} has no reduced companion; method "
            "control-variate needs one"
        )
    obs_reduced = parse_observable(job.observable, model.reduced)
    return control_variate(
        net, model.reduced, None, None, job.time, obs, obs_reduced,
        model.channel_map, job.epsilon, n_pilot=job.n_pilot,
        exact_method=job.exact_method, **common,
    )


def report_document(report: EstimateReport, job: JobConfig) -> dict:
    """Canonical machine-readable report (no volatile fields)."""
    doc = {
        "format_version": 1,
        "tool": "rxnmc",
        "model": job.model,
        "observable": job.observable,
        "time": job.time,
    }
    doc.update(report.to_dict())
    return doc


def render_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def render_csv(report: EstimateReport) -> str:
    cols = (
        "kind,level,h,h_coarse,n,mean,variance,estimator_variance,"
        "updates,rng_draws,K,target_variance"
    )
    rows = [cols]
    for s in report.levels:
        rows.append(
            ",".join(
                "" if v is None else repr(v) if isinstance(v, float) else str(v)
                for v in (
                    s.kind, s.level, s.h, s.h_coarse, s.n, s.mean, s.variance,
                    s.estimator_variance, s.updates, s.rng_draws, s.K,
                    s.target_variance,
                )
            )
        )
    return "\n".join(rows) + "\n"


def render_table(report: EstimateReport, job: JobConfig) -> str:
    lines = [
        f"method: {report.method}   model: {job.model}   "
        f"observable: {job.observable}   T={job.time:g}",
        f"estimate: {report.estimate:.6g}  +/- {report.half_width:.4g}  "
        f"({report.confidence:.0%} CI, epsilon {report.epsilon:g})",
        f"seed: {report.seed}   updates: {report.total_updates:,} "
        f"(pilot {report.pilot_updates:,})   wall: {report.wall_time_s:.1f}s",
    ]
    if report.bias_note:
        lines.append(f"note: {report.bias_note}")
    for note in report.notes:
        lines.append(f"note: {note}")
    header = (
        f"{'kind':<14} {'lvl':>4} {'h':>12} {'n':>10} {'mean':>14} "
        f"{'var(est)':>12} {'updates':>14}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for s in report.levels:
        lines.append(
            f"{s.kind:<14} {('' if s.level is None else s.level):>4} "
            f"{('' if s.h is None else format(s.h, '.4g')):>12} "
            f"{s.n:>10} {s.mean:>14.6g} {s.estimator_variance:>12.4g} "
            f"{s.updates:>14,}"
        )
    return "\n".join(lines) + "\n"


def _write_outputs(report: EstimateReport, job: JobConfig) -> None:
    sys.stdout.write(render_table(report, job))
    if job.output:
        with open(job.output, "w", encoding="utf-8") as fh:
            fh.write(render_json(report_document(report, job)))
    if job.csv:
        with open(job.csv, "w", encoding="utf-8") as fh:
            fh.write(render_csv(report))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True,
                   help="model file path or bundled name (e.g. dimer, "
                        "isomerization:theta=10)")
    p.add_argument("--seed", type=int,
                   default=_env_int("RXNMC_SEED", 0),
                   help="base seed (env RXNMC_SEED)")
    p.add_argument("--workers", type=int,
                   default=_env_int("RXNMC_WORKERS", 1),
                   help="worker threads; results are identical at any count "
                        "(env RXNMC_WORKERS)")


def _add_estimate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--observable", required=True,
                   help='"NAME", "NAME*NAME", or "indicator(NAME, a, b)"')
    p.add_argument("--time", type=float, required=True, help="horizon T")
    p.add_argument("--epsilon", type=float, required=True,
                   help="target CI half-width")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--M", type=int, default=3, help="refinement factor")
    p.add_argument("--l0", type=int, default=2, dest="ell0",
                   help="coarsest level")
    p.add_argument("--L", type=int, default=5, help="finest level")
    p.add_argument("--h", type=float, default=None,
                   help="step size (tau-cmc only)")
    p.add_argument("--exact-method", default="next-reaction",
                   choices=("next-reaction", "direct"),
                   help="exact-path algorithm for exact-cmc and the "
                        "control-variate base level")
    p.add_argument("--n-pilot", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--max-events", type=int, default=1_000_000_000,
                   help="per-path event budget")
    p.add_argument("--max-total-updates", type=int, default=None,
                   help="abort past this many total updates")


def _job_from_args(args, method: str | None = None) -> JobConfig:
    return JobConfig(
        model=args.model,
        observable=args.observable,
        time=args.time,
        method=method or args.method,
        epsilon=args.epsilon,
        confidence=args.confidence,
        M=args.M,
        ell0=args.ell0,
        L=args.L,
        h=args.h,
        exact_method=getattr(args, "exact_method", "next-reaction"),
        seed=args.seed,
        workers=args.workers,
        n_pilot=args.n_pilot,
        batch_size=args.batch_size,
        max_events=args.max_events,
        max_total_updates=args.max_total_updates,
        output=getattr(args, "output", None),
        csv=getattr(args, "csv", None),
    )


def cmd_estimate(args) -> int:
    job = _job_from_args(args)
    report = run(job)
    _write_outputs(report, job)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    net = model.network
    stream = RandomStream(args.seed, args.path_index)
    if args.method == "tau":
        if args.h is None:
            raise ValueError("simulate --method tau requires --h")
        res = tau_leap_path(net, net.initial_state(), args.time, args.h,
                            stream, max_events=args.max_events)
    else:
        res = exact_path(net, net.initial_state(), args.time, stream,
                         method=args.method, max_events=args.max_events)
    names = net.species_names
    state = ", ".join(
        f"{n}={c}" for n, c in zip(names, res.final_state.counts)
    )
    sys.stdout.write(
        f"final state at T={args.time:g}: {state}\n"
        f"updates: {res.updates}   rng draws: {res.rng_draws}\n"
    )
    return EXIT_OK


def cmd_pilot(args) -> int:
    model = load_model(args.model)
    net = model.network
    obs = parse_observable(args.observable, net)
    plan = LevelPlan(args.M, args.ell0, args.L,
                     include_exact_level=not args.biased)
    stats = pilot(net, None, args.time, obs, plan, n_pilot=args.n_pilot,
                  stream=args.seed, workers=args.workers)
    targets = allocate([s.K for s in stats], args.epsilon,
                       z=_quantile(args.confidence))
    header = (
        f"{'kind':<14} {'lvl':>4} {'h':>12} {'n':>6} {'mean':>12} "
        f"{'var/path':>12} {'cost/path':>12} {'K':>12} {'target V':>12}"
    )
    lines = [header, "-" * len(header)]
    predicted = 0.0
    for s, v in zip(stats, targets):
        cost = s.updates / s.n if s.n else 0.0
        if v > 0:
            predicted += s.K / v
        lines.append(
            f"{s.kind:<14} {('' if s.level is None else s.level):>4} "
            f"{('' if s.h is None else format(s.h, '.4g')):>12} "
            f"{s.n:>6} {s.mean:>12.5g} {s.variance:>12.4g} "
            f"{cost:>12.4g} {s.K:>12.4g} {v:>12.4g}"
        )
    lines.append(
        f"predicted main-stage updates at epsilon={args.epsilon:g}: "
        f"{predicted:,.0f}"
    )
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    job_exact = _job_from_args(args, method="exact-cmc")
    job_mlmc = _job_from_args(args, method="unbiased-mlmc")
    report_exact = run(job_exact)
    report_mlmc = run(job_mlmc)
    sys.stdout.write(render_table(report_exact, job_exact))
    sys.stdout.write("\n")
    sys.stdout.write(render_table(report_mlmc, job_mlmc))
    speedup = report_exact.total_updates / max(report_mlmc.total_updates, 1)
    sys.stdout.write(
        f"\nupdate-count speedup (exact-cmc / unbiased-mlmc): {speedup:.2f}x\n"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    rows = ["value,exact_updates,mlmc_updates,speedup,exact_estimate,mlmc_estimate"]
    for raw in args.values.split(","):
        value = raw.strip()
        model_spec = f"{args.model}:{args.param}={value}"
        job_exact = _job_from_args(args, method="exact-cmc")
        job_exact.model = model_spec
        job_mlmc = _job_from_args(args, method="unbiased-mlmc")
        job_mlmc.model = model_spec
        report_exact = run(job_exact)
        report_mlmc = run(job_mlmc)
        speedup = report_exact.total_updates / max(report_mlmc.total_updates, 1)
        sys.stdout.write(
            f"{args.param}={value}: exact updates "
            f"{report_exact.total_updates:,}, mlmc updates "
            f"{report_mlmc.total_updates:,}, speedup {speedup:.2f}x\n"
        )
        rows.append(
            f"{value},{report_exact.total_updates},{report_mlmc.total_updates},"
            f"{speedup!r},{report_exact.estimate!r},{report_mlmc.estimate!r}"
        )
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
    return EXIT_OK


def cmd_validate_model(args) -> int:
    model = load_model(args.model)
    net = model.network
    sys.stdout.write(
        f"model {model.name or args.model!r}: {net.num_species} species, "
        f"{net.num_reactions} reactions\n"
    )
    for i, (name, count) in enumerate(net.species):
        sys.stdout.write(f"  species {i}: {name} = {count}\n")
    if model.reduced is not None:
        sys.stdout.write(
            f"reduced companion: {model.reduced.num_species} species, "
            f"{model.reduced.num_reactions} reactions, coupled channels "
            f"{[(a + 1, b + 1) for a, b in model.channel_map.pairs]}\n"
        )
    if net.num_reactions:
        prof = compute_scaling(net)
        sys.stdout.write(
            f"scaling diagnostics: N={prof.N:g} gamma={prof.gamma:.3g} "
            f"rho={prof.rho:.3g} nbar={prof.nbar:.4g}\n"
        )
    if args.canonical:
        sys.stdout.write(serialize_model(model))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxnmc",
        description="Monte Carlo expectation estimates for stochastic "
                    "reaction networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run one estimator to a target accuracy")
    _add_common(p)
    _add_estimate_args(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--output", help="write canonical JSON report here")
    p.add_argument("--csv", help="write per-level CSV here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="simulate one path and print X(T)")
    _add_common(p)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--method", default="next-reaction",
                   choices=("next-reaction", "direct", "tau"))
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--path-index", type=int, default=0)
    p.add_argument("--max-events", type=int, default=1_000_000_000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pilot", help="pilot the levels and preview allocation")
    _add_common(p)
    _add_estimate_args(p)
    p.add_argument("--biased", action="store_true",
                   help="plan without the exact top level")
    p.set_defaults(func=cmd_pilot)

    p = sub.add_parser(
        "compare",
        help="run exact-cmc and unbiased-mlmc at equal epsilon; print speedup",
    )
    _add_common(p)
    _add_estimate_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="speedup curve over a model parameter")
    _add_common(p)
    _add_estimate_args(p)
    p.add_argument("--param", required=True, help="model parameter name")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--csv", help="write the sweep table here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate-model", help="parse and summarize a model file")
    _add_common(p)
    p.add_argument("--canonical", action="store_true",
                   help="print the canonical serialized form")
    p.set_defaults(func=cmd_validate_model)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
