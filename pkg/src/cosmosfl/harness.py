"""Experiment orchestration: collect a run pool, resample it, evaluate, report.

Storage layout under a run directory::

    runs/<model>/<bug_id>__<run_index>.json   one RunRecord per file
    runs/index.jsonl                          one {"key", "status"} line per write

Evaluation resamples ``R`` runs from the pool ``samples_per_R`` times per
configuration (each single model, and the ensembles), scores every sample
and summarises mean and standard deviation per (configuration, R).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import statistics
import threading
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from cosmosfl import scoring
from cosmosfl.agent import (
    DEFAULT_MAX_STEPS,
    STATUS_ENDPOINT_ERROR,
    EndpointClient,
    RunRecord,
    SimulatedClock,
    WallClock,
    run_inference,
)
from cosmosfl.cost import PowerSample, attach_costs, windows_overlap
from cosmosfl.de import DEConfig, cross_validate
from cosmosfl.fixtures import BugFixture, ToolSpec, default_tools
from cosmosfl.scoring import GroundTruth

log = logging.getLogger(__name__)

REPORT_FORMAT = "cosmos-report/1"
FORMAT_REL_ERROR = 1e-8
MAX_K = 5
ACC_COLUMNS = [f"acc@{k}" for k in range(1, MAX_K + 1)]
METRIC_COLUMNS = ACC_COLUMNS + ["wasted_effort", "confidence_mean", "tokens_total", "wall_time_ms", "energy_j"]
ROW_COLUMNS = ["config", "R", "sample"] + METRIC_COLUMNS
EQUAL = "equal"
DE_OPTIMIZED = "de-optimized"
ENSEMBLE_MODES = (EQUAL, DE_OPTIMIZED)
# Virtual time reserved for each run when endpoints are simulated.
SIMULATED_SLOT_MS = 5_000.0


class PlanError(ValueError):
    pass


class StoreError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    models: tuple[str, ...]
    bugs: tuple[str, ...]
    runs_per_model_pool: int = 30
    R_values: tuple[int, ...] = (4, 8, 12, 16, 20, 24)
    single_R_values: tuple[int, ...] | None = None
    samples_per_R: int = 20
    ensemble_modes: tuple[str, ...] = ENSEMBLE_MODES
    rng_seed: int = 0
    overlap_runs: int = 5
    k_folds: int = 10
    population_size: int = 40
    generations: int = 30
    differential_weight: float = 1.5
    crossover_probability: float = 0.8

    def __post_init__(self) -> None:
        for name in ("models", "bugs", "R_values", "ensemble_modes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.single_R_values is not None:
            object.__setattr__(self, "single_R_values", tuple(self.single_R_values))
        self.validate()

    @property
    def singles_R(self) -> tuple[int, ...]:
        return self.R_values if self.single_R_values is None else self.single_R_values

    def validate(self) -> None:
        if not self.models:
            raise PlanError("plan needs at least one model")
        if len(set(self.models)) != len(self.models):
            raise PlanError("model names must be unique")
        if not self.bugs:
            raise PlanError("plan needs at least one bug")
        if self.samples_per_R < 1:
            raise PlanError("samples_per_R must be >= 1")
        unknown = set(self.ensemble_modes) - set(ENSEMBLE_MODES)
        if unknown:
            raise PlanError(f"unknown ensemble mode(s): {sorted(unknown)}")
        all_R = set(self.singles_R)
        if self.ensemble_modes:
            all_R |= set(self.R_values)
            m = len(self.models)
            for r in self.R_values:
                if r % m:
                    raise PlanError(
                        f"R={r} is not divisible by the {m} ensemble models: "
                        f"each model contributes R_M runs with R_M x M = R"
                    )
        if any(r < 1 for r in all_R):
            raise PlanError("R values must be positive")
        if all_R and self.runs_per_model_pool < max(all_R):
            raise PlanError(f"runs_per_model_pool={self.runs_per_model_pool} is smaller than max R={max(all_R)}")
        if self.overlap_runs > self.runs_per_model_pool:
            raise PlanError("overlap_runs exceeds the pool size")

    def de_config(self, seed: int) -> DEConfig:
        return DEConfig(
            dimension=len(self.models),
            population_size=self.population_size,
            generations=self.generations,
            crossover_probability=self.crossover_probability,
            differential_weight=self.differential_weight,
            rng_seed=seed,
        )

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Run storage


class RunStore:
    """Directory of RunRecords; writes go through one lock."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._lock = threading.Lock()
        self._index: dict[str, str] | None = None

    def path_for(self, model: str, bug_id: str, run_index: int) -> Path:
        return self.root / model / f"{bug_id}__{run_index}.json"

    @staticmethod
    def _key(model: str, bug_id: str, run_index: int) -> str:
        return f"{model}/{bug_id}/{run_index}"

    @property
    def index_path(self) -> Path:
        return self.root / "index.jsonl"

    def index(self) -> dict[str, str]:
        if self._index is None:
            if self.index_path.exists():
                self._index = {}
                for line in self.index_path.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        entry = json.loads(line)
                        self._index[entry["key"]] = entry["status"]
            else:
                self._index = {}
                for p in sorted(self.root.glob("*/*.json")):
                    rec = RunRecord.from_json(json.loads(p.read_text(encoding="utf-8")))
                    self._index[self._key(rec.model, rec.bug_id, rec.run_index)] = rec.status
        return self._index

    def has(self, model: str, bug_id: str, run_index: int) -> bool:
        with self._lock:
            return self._key(model, bug_id, run_index) in self.index() and self.path_for(
                model, bug_id, run_index
            ).exists()

    def write(self, record: RunRecord) -> None:
        with self._lock:
            path = self.path_for(record.model, record.bug_id, record.run_index)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(canonical_json(record.to_json()), encoding="utf-8")
            key = self._key(record.model, record.bug_id, record.run_index)
            self.index()[key] = record.status
            with self.index_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "status": record.status}, sort_keys=True) + "\n")

    def load(self, model: str, bug_id: str, run_index: int) -> RunRecord:
        path = self.path_for(model, bug_id, run_index)
        if not path.exists():
            raise StoreError(f"missing run (bug={bug_id}, model={model}, index={run_index})")
        return RunRecord.from_json(json.loads(path.read_text(encoding="utf-8")))

    def load_pool(self, plan: ExperimentPlan) -> dict[tuple[str, str, int], RunRecord]:
        """Every run the plan needs; a gap is an error naming the triple."""
        pool = {}
        for model in plan.models:
            for bug in plan.bugs:
                for i in range(plan.runs_per_model_pool):
                    pool[(bug, model, i)] = self.load(model, bug, i)
        return pool


# ---------------------------------------------------------------------------
# Collection


@dataclass
class CollectSummary:
    written: int = 0
    skipped: int = 0
    status_counts: Counter = field(default_factory=Counter)

    @property
    def failures(self) -> int:
        return self.written - self.status_counts["ok"]


def collect(
    plan: ExperimentPlan,
    clients: Mapping[str, EndpointClient],
    fixtures: Mapping[str, BugFixture],
    store: RunStore,
    tools: Sequence[ToolSpec] | None = None,
    max_in_flight: int = 4,
    max_steps: int = DEFAULT_MAX_STEPS,
    simulated_time: bool = False,
    power_samples: Sequence[PowerSample] | None = None,
    temperature: float = 0.8,
) -> CollectSummary:
    """Fill the pool: ``runs_per_model_pool`` runs per (model, bug).

    Already stored (bug, model, index) triples are skipped, so an
    interrupted collection can simply be restarted. Run ``i`` uses seed
    ``plan.rng_seed + i``. With ``simulated_time`` every run gets its own
    virtual clock starting at a fixed slot on a sequential timeline, which
    keeps timings and energy windows reproducible under concurrency.
    """
    tools = list(tools) if tools is not None else default_tools()
    missing = [m for m in plan.models if m not in clients]
    if missing:
        raise PlanError(f"no endpoint for model(s): {missing}")
    unknown = [b for b in plan.bugs if b not in fixtures]
    if unknown:
        raise PlanError(f"bug(s) not in fixture set: {unknown}")
    summary = CollectSummary()
    wall = WallClock()
    jobs = []
    ordinal = 0
    for model in plan.models:
        for bug in plan.bugs:
            for i in range(plan.runs_per_model_pool):
                if store.has(model, bug, i):
                    summary.skipped += 1
                else:
                    jobs.append((ordinal, model, bug, i))
                ordinal += 1
    lock = threading.Lock()

    def work(job: tuple[int, str, str, int]) -> None:
        slot, model, bug, i = job
        clock = SimulatedClock(slot * SIMULATED_SLOT_MS) if simulated_time else wall
        record = run_inference(
            fixtures[bug],
            clients[model],
            tools,
            max_steps=max_steps,
            rng_seed=plan.rng_seed + i,
            run_index=i,
            clock=clock,
            temperature=temperature,
        )
        if power_samples and record.window_end_ms > record.window_start_ms:
            record = attach_costs(record, power_samples)
        store.write(record)
        with lock:
            summary.written += 1
            summary.status_counts[record.status] += 1

    if max_in_flight <= 1:
        for job in jobs:
            work(job)
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            list(pool.map(work, jobs))
    return summary


# ---------------------------------------------------------------------------
# Sampling


def sample_runs(
    pool_size: int | Mapping[str, int],
    models: Sequence[str],
    R: int,
    samples_per_R: int,
    seed: int | str,
) -> list[dict[str, tuple[int, ...]]]:
    """``samples_per_R`` subsets of run indices, R/M per model, drawn without replacement."""
    models = list(models)
    sizes = {m: pool_size for m in models} if isinstance(pool_size, int) else dict(pool_size)
    if R % len(models):
        raise PlanError(f"R={R} is not divisible by {len(models)} models (R_M x M = R)")
    per_model = R // len(models)
    for m in models:
        if per_model > sizes[m]:
            raise PlanError(f"R={R} needs {per_model} runs of {m}, pool has {sizes[m]}")
    rng = random.Random(f"{seed}|{'+'.join(models)}|{R}")
    subsets = []
    for _ in range(samples_per_R):
        subsets.append({m: tuple(sorted(rng.sample(range(sizes[m]), per_model))) for m in models})
    return subsets


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class Report:
    plan: dict[str, Any]
    rows: list[dict[str, Any]]
    aggregates: list[dict[str, Any]]
    overlap: list[dict[str, Any]]
    overlapping_windows: int = 0
    de_weights: list[dict[str, Any]] = field(default_factory=list)
    traces: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    external_baselines: dict[str, Any] = field(default_factory=dict)

    def configurations(self) -> list[str]:
        return sorted({r["config"] for r in self.rows})


def single_config(model: str) -> str:
    return f"single:{model}"


def _sum_or_none(values: Iterable[float | None]) -> float | None:
    values = list(values)
    if not values or any(v is None for v in values):
        return None
    return math.fsum(values)


def score_sample(
    subset: Mapping[str, Sequence[int]],
    pool: Mapping[tuple[str, str, int], RunRecord],
    bugs: Sequence[str],
    truth: Mapping[str, GroundTruth],
    weights_for: Callable[[str], Mapping[str, float]] | None = None,
) -> dict[str, Any]:
    """Metrics and summed costs of one sampled run subset.

    With ``weights_for`` the per-model votes are combined with the weights
    it returns for each bug; otherwise all selected runs are pooled.
    """
    rankings = {}
    confidences = []
    runs_used = []
    for bug in bugs:
        per_model = {}
        for model, indices in subset.items():
            recs = []
            for i in indices:
                if (bug, model, i) not in pool:
                    raise StoreError(f"missing run (bug={bug}, model={model}, index={i})")
                recs.append(pool[(bug, model, i)])
            runs_used.extend(recs)
            per_model[model] = [scoring.score_run(r.predicted_methods) for r in recs]
        if weights_for is None:
            scores = scoring.aggregate_runs([s for model in subset for s in per_model[model]])
        else:
            scores = scoring.aggregate_weighted(per_model, weights_for(bug))
        rankings[bug] = scoring.rank(scores)
        confidences.append(scoring.confidence(scores))
    row: dict[str, Any] = {f"acc@{k}": scoring.acc_at_k(rankings, truth, k) for k in range(1, MAX_K + 1)}
    row["wasted_effort"] = sum(scoring.wasted_effort(rankings[b], truth[b]) for b in bugs)
    row["confidence_mean"] = statistics.fmean(confidences)
    row["tokens_total"] = sum(r.tokens_total for r in runs_used)
    row["wall_time_ms"] = math.fsum(r.wall_time_ms for r in runs_used)
    row["energy_j"] = _sum_or_none(r.energy_j for r in runs_used)
    return row


def summarise(rows: Sequence[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Mean and population standard deviation of every metric per (config, R)."""
    groups: dict[tuple[str, int], list[Mapping[str, Any]]] = {}
    for row in rows:
        groups.setdefault((row["config"], row["R"]), []).append(row)
    out = []
    for (config, R), members in sorted(groups.items()):
        agg: dict[str, Any] = {"config": config, "R": R, "n_samples": len(members)}
        for col in METRIC_COLUMNS:
            vals = [m[col] for m in members]
            if any(v is None for v in vals):
                agg[f"{col}_mean"] = agg[f"{col}_std"] = None
            else:
                agg[f"{col}_mean"] = statistics.fmean(vals)
                agg[f"{col}_std"] = statistics.pstdev(vals)
        out.append(agg)
    return out


def top_ranked_sets(
    pool: Mapping[tuple[str, str, int], RunRecord],
    models: Sequence[str],
    bugs: Sequence[str],
    truth: Mapping[str, GroundTruth],
    n_runs: int,
) -> dict[str, set[str]]:
    """Bugs each model ranks a faulty method first for, using runs 0..n_runs-1."""
    out = {}
    for model in models:
        hits = set()
        for bug in bugs:
            runs = [scoring.score_run(pool[(bug, model, i)].predicted_methods) for i in range(n_runs)]
            ranking = scoring.rank(scoring.aggregate_runs(runs))
            if scoring.acc_at_k({bug: ranking}, truth, 1):
                hits.add(bug)
        out[model] = hits
    return out


def overlap_table(top: Mapping[str, set[str]]) -> list[dict[str, Any]]:
    if len(top) < 2:
        return []
    return [
        {"region": scoring.region_label(region), "models": list(region), "count": count}
        for region, count in scoring.overlap_regions(top).items()
    ]


def evaluate(
    plan: ExperimentPlan,
    pool: Mapping[tuple[str, str, int], RunRecord],
    truth: Mapping[str, GroundTruth],
    weights: Mapping[str, float] | None = None,
    strata: Mapping[str, str] | None = None,
) -> Report:
    """Score every configuration, R and sample of the plan.

    The DE ensemble uses ``weights`` when given. Otherwise each sample is
    cross-validated: every bug is ranked with the weights learnt on the
    folds that exclude it.
    """
    bugs = sorted(plan.bugs)
    missing = [b for b in bugs if b not in truth]
    if missing:
        raise StoreError(f"missing ground truth for bug(s): {missing}")
    for model in plan.models:
        for bug in bugs:
            for i in range(plan.runs_per_model_pool):
                if (bug, model, i) not in pool:
                    raise StoreError(f"missing run (bug={bug}, model={model}, index={i})")
    rows: list[dict[str, Any]] = []
    de_weights: list[dict[str, Any]] = []
    traces: dict[str, list[dict[str, Any]]] = {}

    for model in plan.models:
        config = single_config(model)
        for R in plan.singles_R:
            for s, subset in enumerate(sample_runs(plan.runs_per_model_pool, [model], R, plan.samples_per_R, plan.rng_seed)):
                rows.append({"config": config, "R": R, "sample": s, **score_sample(subset, pool, bugs, truth)})

    models = list(plan.models)
    uniform = {m: 1.0 for m in models}
    for mode in plan.ensemble_modes:
        for R in plan.R_values:
            subsets = sample_runs(plan.runs_per_model_pool, models, R, plan.samples_per_R, plan.rng_seed)
            for s, subset in enumerate(subsets):
                if mode == EQUAL:
                    row = score_sample(subset, pool, bugs, truth, weights_for=lambda _b: uniform)
                else:
                    per_bug = _de_weights(plan, subset, pool, bugs, truth, weights, strata, R, s, de_weights, traces)
                    row = score_sample(subset, pool, bugs, truth, weights_for=per_bug.__getitem__)
                rows.append({"config": mode, "R": R, "sample": s, **row})

    top = top_ranked_sets(pool, models, bugs, truth, plan.overlap_runs)
    return Report(
        plan=plan.to_json(),
        rows=rows,
        aggregates=summarise(rows),
        overlap=overlap_table(top),
        overlapping_windows=windows_overlap(
            [r for r in pool.values() if r.window_end_ms > r.window_start_ms]
        ),
        de_weights=de_weights,
        traces=traces,
    )


def _de_weights(
    plan: ExperimentPlan,
    subset: Mapping[str, Sequence[int]],
    pool: Mapping[tuple[str, str, int], RunRecord],
    bugs: Sequence[str],
    truth: Mapping[str, GroundTruth],
    weights: Mapping[str, float] | None,
    strata: Mapping[str, str] | None,
    R: int,
    s: int,
    log_weights: list[dict[str, Any]],
    traces: dict[str, list[dict[str, Any]]],
) -> dict[str, Mapping[str, float]]:
    models = list(plan.models)
    if weights is not None:
        if s == 0:
            log_weights.append({"R": R, "sample": None, "source": "provided", "weights": dict(weights)})
        return {b: weights for b in bugs}
    dataset = {
        bug: {m: [scoring.score_run(pool[(bug, m, i)].predicted_methods) for i in subset[m]] for m in models}
        for bug in bugs
    }
    cfg = plan.de_config(seed=plan.rng_seed + 1000 * R + s)
    k = min(plan.k_folds, len(bugs))
    cv = cross_validate(dataset, truth, cfg, k_folds=k, models=models, strata=strata)
    log_weights.append({"R": R, "sample": s, "source": "cross-validated", "weights": cv.mean_weights})
    per_bug = {}
    for fold in cv.folds:
        traces[f"R{R:02d}_s{s:02d}_fold{fold.fold:02d}"] = fold.trace
        for b in fold.validation_bugs:
            per_bug[b] = fold.weights
    return per_bug


# ---------------------------------------------------------------------------
# Emission


def _fmt(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise ValueError("non-finite value in report")
        return float(f"{value:.9g}")
    if isinstance(value, dict):
        return {str(k): _fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    return value


def canonical_json(obj: Any) -> str:
    """Sorted keys, floats at 9 significant digits, trailing newline."""
    return json.dumps(_fmt(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def report_to_json(report: Report) -> dict[str, Any]:
    return {
        "format": REPORT_FORMAT,
        "plan": report.plan,
        "rows": report.rows,
        "aggregates": report.aggregates,
        "overlap": report.overlap,
        "overlapping_windows": report.overlapping_windows,
        "de_weights": report.de_weights,
        "traces": [f"traces/{name}.jsonl" for name in sorted(report.traces)],
        "external_baselines": report.external_baselines,
    }


def report_emit(report: Report, out_dir: str | Path) -> list[Path]:
    """Write report.json, rows.csv, overlap.csv, plot data and DE traces."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "report.json"
    p.write_text(canonical_json(report_to_json(report)), encoding="utf-8")
    written.append(p)

    p = out / "rows.csv"
    write_csv(p, ROW_COLUMNS, ([r[c] for c in ROW_COLUMNS] for r in report.rows))
    written.append(p)

    p = out / "aggregates.csv"
    agg_cols = ["config", "R", "n_samples"] + [f"{c}_{s}" for c in METRIC_COLUMNS for s in ("mean", "std")]
    write_csv(p, agg_cols, ([a[c] for c in agg_cols] for a in report.aggregates))
    written.append(p)

    p = out / "overlap.csv"
    write_csv(p, ["region", "count"], ([o["region"], o["count"]] for o in report.overlap))
    written.append(p)

    p = out / "plot_scatter.csv"
    scatter_cols = ["config", "R", "sample", "acc@1", "energy_j", "wall_time_ms", "tokens_total"]
    write_csv(p, scatter_cols, ([r[c] for c in scatter_cols] for r in report.rows))
    written.append(p)

    p = out / "plot_acck.csv"
    bars = []
    for a in report.aggregates:
        for k in range(1, MAX_K + 1):
            bars.append([a["config"], a["R"], k, a[f"acc@{k}_mean"], a[f"acc@{k}_std"]])
    write_csv(p, ["config", "R", "k", "mean", "std"], bars)
    written.append(p)

    for name in sorted(report.traces):
        p = out / "traces" / f"{name}.jsonl"
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w", encoding="utf-8", newline="\n") as fh:
            for rec in report.traces[name]:
                fh.write(json.dumps(_fmt(rec), sort_keys=True) + "\n")
        written.append(p)
    return written


def load_report(path: str | Path, tolerance: float = 1e-9) -> Report:
    """Read report.json and check its aggregates against its sample rows."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != REPORT_FORMAT:
        raise StoreError(f"{path}: not a {REPORT_FORMAT} document")
    rows = doc["rows"]
    recomputed = {(a["config"], a["R"]): a for a in summarise(rows)}
    stored = {(a["config"], a["R"]): a for a in doc["aggregates"]}
    if recomputed.keys() != stored.keys():
        raise StoreError(f"{path}: aggregate groups do not match sample rows")
    # Stored values carry 9 significant digits (up to 5e-9 relative error), so
    # allow that on top of ``tolerance``, relative to the sample magnitudes.
    scale = {}
    for key in stored:
        members = [r for r in rows if (r["config"], r["R"]) == key]
        for col in METRIC_COLUMNS:
            vals = [abs(r[col]) for r in members if r[col] is not None]
            scale[key, col] = max([1.0, *vals])
    for key, agg in stored.items():
        for col, value in agg.items():
            again = recomputed[key][col]
            if value is None or again is None or isinstance(value, str):
                if value != again:
                    raise StoreError(f"{path}: aggregate {key} {col} mismatch ({value} vs {again})")
                continue
            metric = col.rsplit("_", 1)[0]
            if abs(value - again) > tolerance + FORMAT_REL_ERROR * scale.get((key, metric), 1.0):
                raise StoreError(f"{path}: aggregate {key} {col} is {value}, rows give {again}")
    traces = {}
    for ref in doc.get("traces", []):
        tp = path.parent / ref
        if tp.exists():
            traces[Path(ref).stem] = [json.loads(line) for line in tp.read_text(encoding="utf-8").splitlines()]
    return Report(
        plan=doc["plan"],
        rows=rows,
        aggregates=doc["aggregates"],
        overlap=doc["overlap"],
        overlapping_windows=doc.get("overlapping_windows", 0),
        de_weights=doc.get("de_weights", []),
        traces=traces,
        external_baselines=doc.get("external_baselines", {}),
    )


def failure_count(summary: CollectSummary) -> int:
    return summary.status_counts[STATUS_ENDPOINT_ERROR]

