"""Command-line entry point: ``cosmosfl <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 endpoint
failure budget exceeded.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from cosmosfl import de, harness
from cosmosfl.agent import DEFAULT_MAX_STEPS, EndpointClient, ModelEndpoint
from cosmosfl.cost import PowerDataError, ingest_power_csv
from cosmosfl.fixtures import FixtureError, desk_d4j_path, ground_truth, load_fixture_set
from cosmosfl.mock import DeskD4JPolicy, MockBackend
from cosmosfl.scoring import ScoringError, score_run

log = logging.getLogger("cosmosfl")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_ENDPOINT = 0, 1, 2, 3
MOCK_SCHEME = "mock://"
DEFAULT_MODELS = ("A", "B", "C", "D")

# Config keys accepted in the --config file (``key = value`` lines).
CONFIG_KEYS = {
    "models": "comma-separated model names",
    "bugs": "comma-separated bug ids (default: every fixture)",
    "fixtures": "fixture file or directory",
    "endpoint_file": "JSON endpoint list",
    "out": "output directory",
    "seed": "integer RNG seed",
    "runs_per_model_pool": "runs collected per (model, bug)",
    "r_values": "comma-separated ensemble R values",
    "single_r_values": "comma-separated single-model R values",
    "samples_per_r": "samples drawn per R",
    "ensemble_modes": "comma-separated subset of equal,de-optimized",
    "overlap_runs": "runs per model used for the overlap table",
    "k_folds": "cross-validation folds",
    "pop": "DE population size",
    "gens": "DE generations",
    "diff_weight": "DE differential weight",
    "cx_prob": "DE crossover probability",
    "max_steps": "tool calls before the forced answer",
    "max_in_flight": "concurrent runs during collect",
    "temperature": "sampling temperature",
    "power_csv": "timestamp_ms,power_w samples to attach during collect",
    "failure_budget": "endpoint-error runs tolerated before exit code 3",
    "power_collector_cmd": "command a separate collector polls (informational)",
    "power_collector_cadence_ms": "collector cadence (informational)",
}


class EndpointBudgetExceeded(RuntimeError):
    pass


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _csv_strs(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def read_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string("[cosmosfl]\n" + Path(path).read_text(encoding="utf-8"), source=path)
    values = dict(parser["cosmosfl"])
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ValueError(f"{path}: unknown config key(s): {', '.join(unknown)}")
    return values


class Settings:
    """Command-line flags layered over the config file over defaults."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.config = read_config(args.config)

    def get(self, key: str, default: Any = None, convert: Any = str) -> Any:
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.config:
            return convert(self.config[key])
        return default


def build_plan(s: Settings, fixtures: dict, models: Sequence[str]) -> harness.ExperimentPlan:
    bugs = s.get("bugs", None, _csv_strs) or tuple(sorted(fixtures))
    pool_size = s.get("runs_per_model_pool", 30, int)
    return harness.ExperimentPlan(
        models=tuple(models),
        bugs=tuple(bugs),
        runs_per_model_pool=pool_size,
        R_values=s.get("r_values", (4, 8, 12, 16, 20, 24), _csv_ints),
        single_R_values=s.get("single_r_values", None, _csv_ints),
        samples_per_R=s.get("samples_per_r", 20, int),
        ensemble_modes=s.get("ensemble_modes", harness.ENSEMBLE_MODES, _csv_strs),
        rng_seed=s.get("seed", 0, int),
        overlap_runs=s.get("overlap_runs", min(5, pool_size), int),
        k_folds=s.get("k_folds", 10, int),
        population_size=s.get("pop", 40, int),
        generations=s.get("gens", 30, int),
        differential_weight=s.get("diff_weight", 1.5, float),
        crossover_probability=s.get("cx_prob", 0.8, float),
    )


def load_endpoints(path: str | None, models: Sequence[str]) -> dict[str, ModelEndpoint]:
    """Endpoints by name; without a file every model is a desk-d4j mock."""
    if not path:
        return {m: ModelEndpoint(m, f"{MOCK_SCHEME}desk-d4j", m) for m in models}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = doc["endpoints"] if isinstance(doc, dict) else doc
    endpoints = {}
    for e in entries:
        ep = ModelEndpoint(
            name=e["name"],
            base_url=e["base_url"],
            model_id=e.get("model_id", e["name"]),
            request_timeout=float(e.get("request_timeout", 120.0)),
            max_retries=int(e.get("max_retries", 2)),
        )
        if ep.name in endpoints:
            raise ValueError(f"duplicate endpoint name {ep.name!r}")
        endpoints[ep.name] = ep
    missing = [m for m in models if m not in endpoints]
    if missing:
        raise ValueError(f"no endpoint configured for model(s): {missing}")
    return {m: endpoints[m] for m in models}


def make_clients(endpoints: dict[str, ModelEndpoint]) -> tuple[dict[str, EndpointClient], bool]:
    clients = {}
    all_mock = True
    backend = None
    for name, ep in endpoints.items():
        if ep.base_url.startswith(MOCK_SCHEME):
            if ep.base_url != f"{MOCK_SCHEME}desk-d4j":
                raise ValueError(f"unknown mock backend {ep.base_url!r}")
            backend = backend or MockBackend(DeskD4JPolicy())
            clients[name] = EndpointClient(
                ModelEndpoint(ep.name, "http://mock.invalid/v1", ep.model_id, ep.request_timeout, ep.max_retries),
                transport=backend.transport(),
                retry_backoff=0.0,
            )
        else:
            all_mock = False
            clients[name] = EndpointClient(ep)
    return clients, all_mock


def _context(args: argparse.Namespace) -> tuple[Settings, dict, list[str], Path]:
    s = Settings(args)
    fixtures = load_fixture_set(s.get("fixtures", None) or desk_d4j_path())
    models = list(s.get("models", None, _csv_strs) or DEFAULT_MODELS)
    out = Path(s.get("out", "cosmos-out"))
    return s, fixtures, models, out


def _strata(fixtures: dict) -> dict[str, str]:
    return {b: fx.project for b, fx in fixtures.items()}


# ---------------------------------------------------------------------------
# Commands


def cmd_collect(args: argparse.Namespace) -> int:
    s, fixtures, models, out = _context(args)
    plan = build_plan(s, fixtures, models)
    endpoints = load_endpoints(s.get("endpoint_file"), models)
    clients, all_mock = make_clients(endpoints)
    power_csv = s.get("power_csv")
    samples = ingest_power_csv(power_csv) if power_csv else None
    store = harness.RunStore(out / "runs")
    try:
        summary = harness.collect(
            plan,
            clients,
            fixtures,
            store,
            max_in_flight=s.get("max_in_flight", 4, int),
            max_steps=s.get("max_steps", DEFAULT_MAX_STEPS, int),
            simulated_time=all_mock,
            power_samples=samples,
            temperature=s.get("temperature", 0.8, float),
        )
    finally:
        for c in clients.values():
            c.close()
    counts = ", ".join(f"{k}={v}" for k, v in sorted(summary.status_counts.items())) or "none"
    print(f"collected {summary.written} run(s), skipped {summary.skipped} already stored; status: {counts}")
    budget = s.get("failure_budget", None, int)
    if budget is not None and harness.failure_count(summary) > budget:
        raise EndpointBudgetExceeded(
            f"{harness.failure_count(summary)} endpoint failures exceed the budget of {budget}"
        )
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    s, fixtures, models, out = _context(args)
    plan = build_plan(s, fixtures, models)
    chosen = [args.model] if args.model else models
    subsets = harness.sample_runs(plan.runs_per_model_pool, chosen, args.r, plan.samples_per_R, plan.rng_seed)
    path = out / "samples" / f"{'+'.join(chosen)}_R{args.r}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(harness.canonical_json([{m: list(v) for m, v in sub.items()} for sub in subsets]), encoding="utf-8")
    print(f"wrote {len(subsets)} sample(s) to {path}")
    return EXIT_OK


def _sample_dataset(plan: harness.ExperimentPlan, pool: dict, R: int, sample: int) -> dict:
    subsets = harness.sample_runs(plan.runs_per_model_pool, plan.models, R, plan.samples_per_R, plan.rng_seed)
    if not 0 <= sample < len(subsets):
        raise ValueError(f"sample index {sample} out of range")
    subset = subsets[sample]
    return {
        bug: {m: [score_run(pool[(bug, m, i)].predicted_methods) for i in subset[m]] for m in plan.models}
        for bug in plan.bugs
    }


def cmd_optimize(args: argparse.Namespace) -> int:
    s, fixtures, models, out = _context(args)
    plan = build_plan(s, fixtures, models)
    pool = harness.RunStore(out / "runs").load_pool(plan)
    R = args.r or max(plan.R_values)
    dataset = _sample_dataset(plan, pool, R, args.sample)
    cfg = plan.de_config(plan.rng_seed)
    cv = de.cross_validate(dataset, ground_truth(fixtures), cfg, plan.k_folds, plan.models, _strata(fixtures))
    traces = []
    for fold in cv.folds:
        path = out / "traces" / f"optimize_R{R:02d}_fold{fold.fold:02d}.jsonl"
        de.write_trace(path, fold.trace)
        traces.append(str(path.relative_to(out)))
    doc = {
        "models": list(plan.models),
        "R": R,
        "sample": args.sample,
        "mean_weights": cv.mean_weights,
        "folds": [
            {
                "fold": f.fold,
                "validation_bugs": f.validation_bugs,
                "weights": f.weights,
                "train_acc1": f.train_fitness.acc1,
                "train_wasted_effort": f.train_fitness.total_wasted_effort,
                "validation_acc1": f.validation_fitness.acc1,
                "validation_wasted_effort": f.validation_fitness.total_wasted_effort,
            }
            for f in cv.folds
        ],
        "traces": traces,
    }
    (out / "weights.json").write_text(harness.canonical_json(doc), encoding="utf-8")
    weights = ", ".join(f"{m}={w:.3f}" for m, w in cv.mean_weights.items())
    val = sum(f.validation_fitness.acc1 for f in cv.folds)
    print(f"mean weights: {weights}; validation acc@1 summed over folds: {val}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    s, fixtures, models, out = _context(args)
    plan = build_plan(s, fixtures, models)
    pool = harness.RunStore(out / "runs").load_pool(plan)
    weights = None
    if args.weights:
        weights = json.loads(Path(args.weights).read_text(encoding="utf-8"))["mean_weights"]
    report = harness.evaluate(plan, pool, ground_truth(fixtures), weights=weights, strata=_strata(fixtures))
    files = harness.report_emit(report, out / "report")
    print(f"wrote {len(files)} report file(s) to {out / 'report'}")
    for a in report.aggregates:
        print(f"  {a['config']:<16} R={a['R']:<3} acc@1 {a['acc@1_mean']:.2f} +- {a['acc@1_std']:.2f}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    s, _, _, out = _context(args)
    src = Path(args.report_dir) if args.report_dir else out / "report"
    report = harness.load_report(src / "report.json")
    dest = Path(args.to) if args.to else src
    files = harness.report_emit(report, dest)
    print(f"validated {src / 'report.json'}; wrote {len(files)} file(s) to {dest}")
    return EXIT_OK


def cmd_overlap(args: argparse.Namespace) -> int:
    s, fixtures, models, out = _context(args)
    plan = build_plan(s, fixtures, models)
    store = harness.RunStore(out / "runs")
    n = args.runs or plan.overlap_runs
    pool = {(b, m, i): store.load(m, b, i) for m in models for b in plan.bugs for i in range(n)}
    top = harness.top_ranked_sets(pool, models, sorted(plan.bugs), ground_truth(fixtures), n)
    table = harness.overlap_table(top)
    for m in models:
        print(f"{m}: {len(top[m])} bug(s) ranked first")
    for row in table:
        if row["count"]:
            print(f"  {row['region']:<12} {row['count']}")
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(out / "overlap.csv", ["region", "count"], ([r["region"], r["count"]] for r in table))
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    s, fixtures, models, out = _context(args)
    a, b = _csv_strs(args.pair)
    plan = build_plan(s, fixtures, models)
    store = harness.RunStore(out / "runs")
    dataset = {
        bug: {m: [score_run(store.load(m, bug, i).predicted_methods) for i in range(args.runs_per_model)] for m in (a, b)}
        for bug in plan.bugs
    }
    landscape = de.grid_search_pairwise(a, b, args.runs_per_model, args.step, dataset, ground_truth(fixtures))
    path = out / f"grid_{a}_{b}_r{args.runs_per_model}.csv"
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(path, [f"w_{a}", f"w_{b}", "acc@1"], ([wa, wb, acc] for (wa, wb), acc in landscape.items()))
    best = max(landscape.values())
    print(f"{len(landscape)} grid point(s); best acc@1 {best}; wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--fixtures", help="fixture file or directory (default: bundled desk-d4j)")
    common.add_argument("--out", help="output directory (default: cosmos-out)")
    common.add_argument("--models", type=_csv_strs, help="comma-separated model names (default: A,B,C,D)")
    common.add_argument("--endpoint-file", dest="endpoint_file", help="JSON list of model endpoints")
    common.add_argument("--bugs", type=_csv_strs)
    common.add_argument("--runs-per-model-pool", dest="runs_per_model_pool", type=int)
    common.add_argument("--r-values", dest="r_values", type=_csv_ints)
    common.add_argument("--single-r-values", dest="single_r_values", type=_csv_ints)
    common.add_argument("--samples-per-r", dest="samples_per_r", type=int)
    common.add_argument("--ensemble-modes", dest="ensemble_modes", type=_csv_strs)
    common.add_argument("-v", "--verbose", action="store_true")

    de_flags = argparse.ArgumentParser(add_help=False)
    de_flags.add_argument("--k-folds", dest="k_folds", type=int, help="default 10")
    de_flags.add_argument("--pop", type=int, help="default 40")
    de_flags.add_argument("--gens", type=int, help="default 30")
    de_flags.add_argument("--diff-weight", dest="diff_weight", type=float, help="default 1.5")
    de_flags.add_argument("--cx-prob", dest="cx_prob", type=float, help="default 0.8")

    parser = argparse.ArgumentParser(prog="cosmosfl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common], help="run every (model, bug, run index) not yet stored")
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--power-csv", dest="power_csv")
    p.add_argument("--failure-budget", dest="failure_budget", type=int)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("sample", parents=[common], help="draw run-index subsets for one R")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--model", help="sample a single model instead of the ensemble")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("optimize", parents=[common, de_flags], help="cross-validated DE voting weights")
    p.add_argument("--r", type=int)
    p.add_argument("--sample", type=int, default=0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", parents=[common, de_flags], help="score all configurations and write the report")
    p.add_argument("--weights", help="weights.json from `optimize` (skips per-sample cross-validation)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="validate report.json and re-emit CSV/plot files")
    p.add_argument("--report-dir")
    p.add_argument("--to", help="emit into this directory instead")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("overlap", parents=[common], help="Venn counts of bugs each model ranks first")
    p.add_argument("--runs", type=int)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("grid", parents=[common], help="pairwise weight landscape")
    p.add_argument("--pair", required=True, help="two model names, e.g. A,B")
    p.add_argument("--runs-per-model", dest="runs_per_model", type=int, default=5)
    p.add_argument("--step", type=float, default=0.05)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except EndpointBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (
        harness.PlanError,
        harness.StoreError,
        de.ConfigError,
        FixtureError,
        ScoringError,
        PowerDataError,
        configparser.Error,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
