"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``-m acceptance``).
The lines are printed with output capture disabled, so they also appear in
a plain ``pytest -v`` run.
"""

from __future__ import annotations

import random
import time
from itertools import combinations

import pytest

from cosmosfl import cli
from cosmosfl.cost import PowerSample, integrate_energy
from cosmosfl.de import DEConfig, FLObjective, Fitness, cross_validate, de_optimize, grid_best, initialize_population, make_trial
from cosmosfl.harness import EQUAL, ExperimentPlan, RunStore, collect, evaluate, report_emit
from cosmosfl.mock import MockBackend, load_desk_profiles
from cosmosfl.scoring import (
    GroundTruth,
    acc_at_k,
    aggregate_runs,
    aggregate_weighted,
    confidence,
    overlap_regions,
    score_run,
)

from conftest import desk_dataset, mock_clients

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(request, capsys):
    """Call ``verdict(number, ok, detail)`` once; prints the line and asserts."""

    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number}: {detail}"

    return emit


def random_run_set(rng: random.Random, methods: list[str], n_runs: int) -> list[set[str]]:
    return [set(rng.sample(methods, rng.randint(1, len(methods)))) for _ in range(n_runs)]


# 1 -------------------------------------------------------------------------


def test_c01_worked_example(verdict):
    runs = [{"m1", "m2"}, {"m2"}, {"m2"}, {"m2"}, {"m3"}]
    maps = [score_run(r) for r in runs]
    t0 = time.perf_counter()
    scores = aggregate_runs(maps)
    conf = confidence(scores)
    elapsed_ms = (time.perf_counter() - t0) * 1000
    expected = {"m2": 0.7, "m1": 0.1, "m3": 0.2}
    exact = scores.keys() == expected.keys() and all(abs(scores[m] - v) <= 1e-12 for m, v in expected.items())
    ok = exact and abs(conf - 0.7) <= 1e-12 and elapsed_ms < 1.0
    verdict(1, ok, f"scores={scores} confidence={conf} in {elapsed_ms:.3f} ms")


# 2 -------------------------------------------------------------------------


def test_c02_normalisation(verdict):
    rng = random.Random(2)
    methods = [f"m{i}" for i in range(12)]
    worst = 0.0
    for _ in range(1000):
        runs = random_run_set(rng, methods, rng.randint(1, 30))
        worst = max(worst, abs(sum(aggregate_runs([score_run(r) for r in runs]).values()) - 1))
    verdict(2, worst <= 1e-9, f"1000 run sets, max |sum - 1| = {worst:.2e}")


# 3 -------------------------------------------------------------------------


def test_c03_pooling_equivalence(verdict):
    rng = random.Random(3)
    methods = [f"m{i}" for i in range(8)]
    worst_pool = worst_scale = 0.0
    for _ in range(200):
        models = [f"M{i}" for i in range(rng.randint(2, 4))]
        n_runs = rng.randint(1, 6)
        per_model = {m: [score_run(r) for r in random_run_set(rng, methods, n_runs)] for m in models}
        pooled = aggregate_runs([s for m in models for s in per_model[m]])
        weighted = aggregate_weighted(per_model, {m: 1.0 for m in models})
        keys = pooled.keys() | weighted.keys()
        worst_pool = max(worst_pool, max(abs(pooled.get(k, 0) - weighted.get(k, 0)) for k in keys))

        weights = {m: rng.uniform(0.01, 1) for m in models}
        c = rng.uniform(1e-9, 10)
        base = aggregate_weighted(per_model, weights)
        scaled = aggregate_weighted(per_model, {m: c * w for m, w in weights.items()})
        keys = base.keys() | scaled.keys()
        worst_scale = max(worst_scale, max(abs(base.get(k, 0) - scaled.get(k, 0)) for k in keys))
    ok = worst_pool <= 1e-9 and worst_scale <= 1e-12
    verdict(3, ok, f"200 ensembles, pooled diff {worst_pool:.2e}, scaling diff {worst_scale:.2e}")


# 4 -------------------------------------------------------------------------


def hand_trial(target, a, b, c, f, cr, bounds, rng):
    """Line-by-line restatement of the trial construction (oracle)."""
    n = len(target)
    R = rng.randint(1, n)
    y = list(target)
    for i in range(1, n + 1):
        if i == R or rng.random() < cr:
            lo, hi = bounds[i - 1]
            y[i - 1] = min(hi, max(lo, a[i - 1] + f * (b[i - 1] - c[i - 1])))
    return y


def test_c04_de_fidelity(verdict):
    exact = 0
    for seed in range(50):
        rng = random.Random(seed)
        n = rng.randint(1, 6)
        f, cr = rng.uniform(0, 2), rng.random()
        bounds = ((0.0, 1.0),) * n
        target, a, b, c = ([rng.random() for _ in range(n)] for _ in range(4))
        cfg = DEConfig(dimension=n, population_size=4, crossover_probability=cr, differential_weight=f)
        got = make_trial(target, a, b, c, cfg, random.Random(1000 + seed))
        want = hand_trial(target, a, b, c, f, cr, bounds, random.Random(1000 + seed))
        exact += got == want

    monotone = True
    for seed in range(10):
        r = random.Random(seed)
        table = [r.random() for _ in range(50)]
        cfg = DEConfig(dimension=3, population_size=10, generations=15, rng_seed=seed)
        result = de_optimize(lambda g: Fitness(int(10 * g[0] * g[1]), int(100 * table[int(g[2] * 49)])), cfg)
        monotone &= all(x <= y for x, y in zip(result.history, result.history[1:]))

    cfg = DEConfig(dimension=4, population_size=12, generations=8, rng_seed=4)
    invariant = de_optimize(lambda g: Fitness(3, 3), cfg).population == initialize_population(cfg)
    ok = exact == 50 and monotone and invariant
    verdict(4, ok, f"make_trial exact {exact}/50, history monotone={monotone}, constant-fitness invariant={invariant}")


# 5 -------------------------------------------------------------------------


def test_c05_de_vs_grid(verdict, desk_policy, desk_fixtures, desk_truth):
    models = ["A", "B", "C"]
    objective = FLObjective(desk_dataset(desk_policy, sorted(desk_fixtures), models), desk_truth, models)
    _, grid_fit = grid_best(objective, 0.05)
    t0 = time.perf_counter()
    hits = 0
    for seed in range(20):
        cfg = DEConfig(dimension=3, population_size=40, generations=30, differential_weight=1.5, crossover_probability=0.8, rng_seed=seed)
        hits += de_optimize(objective, cfg).best_fitness.acc1 == grid_fit.acc1
    elapsed = time.perf_counter() - t0
    verdict(5, hits >= 18 and elapsed < 60, f"DE matched grid acc@1={grid_fit.acc1} in {hits}/20 seeds, {elapsed:.1f} s")


# 6 -------------------------------------------------------------------------


def test_c06_cross_validation(verdict, desk_policy, desk_fixtures, desk_truth):
    models = ["A", "B", "C", "D"]
    dataset = desk_dataset(desk_policy, sorted(desk_fixtures), models)
    strata = {b: fx.project for b, fx in desk_fixtures.items()}
    cv = cross_validate(dataset, desk_truth, DEConfig(dimension=4, rng_seed=6), k_folds=10, strata=strata)
    disjoint = all(not set(f.validation_bugs) & set(f.train_bugs) for f in cv.folds)
    covered = sorted(b for f in cv.folds for b in f.validation_bugs) == sorted(dataset)
    total = sum(cv.mean_weights.values())
    ok = len(cv.folds) == 10 and disjoint and covered and abs(total - 1) <= 1e-9
    verdict(6, ok, f"10 folds, disjoint={disjoint}, every bug validated once={covered}, sum(mean weights)={total!r}")


# 7 -------------------------------------------------------------------------

DESIGNED_REGIONS = {
    ("A",): 2, ("B",): 1, ("C",): 1, ("D",): 1,
    ("A", "B"): 1, ("A", "C"): 1, ("B", "D"): 1,
    ("A", "B", "C"): 1, ("A", "B", "C", "D"): 1,
}


def oracle_regions(models, n_runs):
    """Regions derived from the profile letters alone.

    S always ranks the faulty method first; N does so when even seeds are
    the majority of runs 0..n-1; H ties it with a decoy that sorts first;
    M never names it.
    """
    table = load_desk_profiles()
    evens = (n_runs + 1) // 2
    top = {
        m: {b for b, p in table["models"][m]["profiles"].items() if p == "S" or (p == "N" and evens > n_runs - evens)}
        for m in models
    }
    regions = {s: 0 for k in range(1, len(models) + 1) for s in combinations(models, k)}
    for bug in set().union(*top.values()):
        regions[tuple(m for m in models if bug in top[m])] += 1
    return regions


@pytest.fixture(scope="module")
def desk_report(tmp_path_factory, desk_fixtures, desk_policy, desk_truth):
    """Evaluated 4-model report; the run pool itself is not kept alive."""
    plan = ExperimentPlan(
        models=("A", "B", "C", "D"), bugs=tuple(sorted(desk_fixtures)), runs_per_model_pool=30,
        R_values=(20,), single_R_values=(5,), samples_per_R=20, ensemble_modes=(EQUAL,),
    )
    backend = MockBackend(desk_policy)
    store = RunStore(tmp_path_factory.mktemp("desk") / "runs")
    collect(plan, mock_clients(backend, plan.models), desk_fixtures, store, simulated_time=True, max_in_flight=8)
    return plan, evaluate(plan, store.load_pool(plan), desk_truth)


def test_c07_overlap(verdict, desk_report):
    plan, report = desk_report
    got = {tuple(r["models"]): r["count"] for r in report.overlap}
    expected = {s: DESIGNED_REGIONS.get(s, 0) for s in oracle_regions(list(plan.models), plan.overlap_runs)}
    ok = got == expected == oracle_regions(list(plan.models), plan.overlap_runs)
    nonzero = {"&".join(k): v for k, v in got.items() if v}
    verdict(7, ok, f"regions {nonzero}")


# 8 -------------------------------------------------------------------------


def test_c08_ensemble_benefit(verdict, desk_report):
    plan, report = desk_report
    means = {(a["config"], a["R"]): a["acc@1_mean"] for a in report.aggregates}
    ensemble = means[(EQUAL, 20)]
    singles = {m: means[(f"single:{m}", 5)] for m in plan.models}
    ok = all(ensemble > v for v in singles.values())
    detail = ", ".join(f"{m}@5={v:.2f}" for m, v in singles.items())
    verdict(8, ok, f"equal@20={ensemble:.2f} vs {detail}")


# 9 -------------------------------------------------------------------------


def test_c09_agent_loop_pipeline(verdict, tmp_path, desk_fixtures, desk_policy, desk_truth):
    bugs = ("Chart-2", "Lang-3", "Time-3")
    backend = MockBackend(desk_policy)
    plan = ExperimentPlan(models=("A", "B", "C", "D"), bugs=bugs, R_values=(4, 8, 12, 16, 20, 24))
    t0 = time.perf_counter()
    store = RunStore(tmp_path / "runs")
    summary = collect(plan, mock_clients(backend, plan.models), desk_fixtures, store, simulated_time=True)
    pool = store.load_pool(plan)
    report = evaluate(plan, pool, desk_truth)
    report_emit(report, tmp_path / "report")
    elapsed = time.perf_counter() - t0
    parseable = summary.status_counts["ok"] == len(pool) == 4 * 3 * 30
    declared = backend.declared_total()
    recorded = sum(r.tokens_total for r in pool.values())
    consistent = all(
        r.tokens_total == r.tokens_in + r.tokens_out
        and r.tokens_in == sum(s.tokens_in for s in r.steps)
        and r.tokens_out == sum(s.tokens_out for s in r.steps)
        for r in pool.values()
    )
    ok = elapsed < 10 and parseable and recorded == declared and consistent
    verdict(9, ok, f"{len(pool)} runs, ok={summary.status_counts['ok']}, tokens {recorded} vs declared {declared}, {elapsed:.2f} s")


# 10 ------------------------------------------------------------------------


def test_c10_energy(verdict):
    const = integrate_energy([PowerSample(t, 100.0) for t in range(0, 10_001, 1000)], 0, 10_000)
    ramp = integrate_energy([PowerSample(t, t / 100.0) for t in range(0, 10_001, 1000)], 0, 10_000)
    closed = abs(const - 1000.0) <= 1e-9 and abs(ramp - 500.0) <= 1e-9
    rng = random.Random(10)
    worst = 0.0
    for _ in range(100):
        t, samples = 0.0, []
        for _ in range(rng.randint(3, 60)):
            t += rng.uniform(1, 300)
            samples.append(PowerSample(t, rng.uniform(0, 400)))
        cut = rng.choice(samples[1:-1]).timestamp_ms
        first, last = samples[0].timestamp_ms, samples[-1].timestamp_ms
        whole = integrate_energy(samples, first, last)
        parts = integrate_energy(samples, first, cut) + integrate_energy(samples, cut, last)
        worst = max(worst, abs(whole - parts))
    ok = closed and worst <= 1e-9
    verdict(10, ok, f"constant={const!r} J, ramp={ramp!r} J, additivity max error {worst:.2e} J over 100 sets")


# 11 ------------------------------------------------------------------------


def test_c11_replay_determinism(verdict, tmp_path, capsys):
    argv = ["--bugs", "Chart-2,Lang-3,Math-1", "--runs-per-model-pool", "12", "--r-values", "4,8,12",
            "--samples-per-r", "5", "--seed", "11"]
    de_flags = ["--k-folds", "3", "--pop", "10", "--gens", "5"]
    for name in ("a", "b"):
        out = ["--out", str(tmp_path / name)]
        assert cli.main(["collect", *out, *argv, "--max-in-flight", "6"]) == 0
        assert cli.main(["evaluate", *out, *argv, *de_flags]) == 0
    capsys.readouterr()
    names = ["report.json", "rows.csv", "aggregates.csv", "overlap.csv", "plot_scatter.csv", "plot_acck.csv"]
    traces = sorted(p.name for p in (tmp_path / "a" / "report" / "traces").glob("*.jsonl"))
    files = names + [f"traces/{t}" for t in traces]
    same = [(tmp_path / "a" / "report" / f).read_bytes() == (tmp_path / "b" / "report" / f).read_bytes() for f in files]
    ok = all(same) and bool(traces)
    verdict(11, ok, f"{sum(same)}/{len(files)} files byte-identical (report.json, CSVs, plot data, {len(traces)} traces)")


# 12 ------------------------------------------------------------------------


def test_c12_acck_monotone_bounded(verdict):
    rng = random.Random(12)
    methods = [f"m{i}" for i in range(10)]
    violations = 0
    for _ in range(1000):
        bugs = [f"b{i}" for i in range(rng.randint(1, 15))]
        truth = {b: GroundTruth(b, frozenset(rng.sample(methods, rng.randint(1, 3)))) for b in bugs}
        rankings = {}
        for b in bugs:
            if rng.random() < 0.9:
                ranked = rng.sample(methods, rng.randint(0, len(methods)))
                rankings[b] = [(m, 1.0 / (i + 1)) for i, m in enumerate(ranked)]
        accs = [acc_at_k(rankings, truth, k) for k in range(1, 12)]
        if any(x > y for x, y in zip(accs, accs[1:])) or accs[0] < 0 or accs[-1] > len(bugs):
            violations += 1
    verdict(12, violations == 0, f"1000 random result sets, {violations} violations")
