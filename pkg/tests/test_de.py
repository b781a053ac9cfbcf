import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosmosfl.de import (
    ConfigError,
    DEConfig,
    FLObjective,
    Fitness,
    assign_folds,
    cross_validate,
    de_optimize,
    fl_fitness,
    grid_best,
    grid_search_pairwise,
    initialize_population,
    make_trial,
    sample_donors,
    simplex_grid,
)
from cosmosfl.scoring import GroundTruth, score_run

from conftest import desk_dataset


def truth_of(mapping):
    return {b: GroundTruth(b, frozenset(ms)) for b, ms in mapping.items()}


def runs(*sets):
    return [score_run(s) for s in sets]


def test_config_validation():
    with pytest.raises(ConfigError):
        DEConfig(dimension=2, population_size=3)
    with pytest.raises(ConfigError):
        DEConfig(dimension=2, bounds=((0, 1), (1, 1)))
    with pytest.raises(ConfigError):
        DEConfig(dimension=2, bounds=((0, 1),))
    assert DEConfig(dimension=3).bounds == ((0.0, 1.0),) * 3


def test_fitness_is_lexicographic():
    assert Fitness(2, 100) > Fitness(1, 0)
    assert Fitness(2, 3) > Fitness(2, 4)
    assert not Fitness(2, 3) < Fitness(2, 3)
    assert max([Fitness(1, 0), Fitness(3, 9), Fitness(3, 2)]) == Fitness(3, 2)


def test_initialize_population_bounds_and_determinism():
    cfg = DEConfig(dimension=2, population_size=4, rng_seed=42)
    pop = initialize_population(cfg)
    assert len(pop) == 4 and all(len(a) == 2 for a in pop)
    assert all(0.0 <= x <= 1.0 for a in pop for x in a)
    assert initialize_population(cfg) == pop
    other = initialize_population(DEConfig(dimension=2, population_size=4, rng_seed=43))
    assert other != pop


def test_make_trial_hand_example():
    cfg = DEConfig(dimension=2, population_size=4, crossover_probability=0.0, differential_weight=1.5)
    trial = make_trial((0.9, 0.9), (0.2, 0.4), (0.5, 0.1), (0.1, 0.3), cfg, random.Random(0), forced_index=0)
    assert trial == pytest.approx([0.8, 0.9], abs=1e-15)
    assert trial[1] == 0.9


def test_make_trial_zero_difference_and_clamp():
    cfg = DEConfig(dimension=3, population_size=4, crossover_probability=1.0, differential_weight=7.3)
    a = (0.1, 0.5, 0.9)
    assert make_trial((0, 0, 0), a, (0.3, 0.3, 0.3), (0.3, 0.3, 0.3), cfg, random.Random(1)) == list(a)
    cfg = DEConfig(dimension=1, population_size=4, crossover_probability=0.0, differential_weight=1.0)
    assert make_trial((0.5,), (0.9,), (0.9,), (0.1,), cfg, random.Random(1)) == [1.0]
    assert make_trial((0.5,), (0.1,), (0.1,), (0.9,), cfg, random.Random(1)) == [0.0]


@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(0, 1))
def test_make_trial_always_writes_forced_index(seed, n, p_cx):
    rng = random.Random(seed)
    cfg = DEConfig(dimension=n, population_size=4, crossover_probability=p_cx, bounds=((-100, 100),) * n)
    target, a, b, c = ([rng.uniform(-1, 1) for _ in range(n)] for _ in range(4))
    forced = rng.randrange(n)
    trial = make_trial(target, a, b, c, cfg, random.Random(seed), forced_index=forced)
    assert trial[forced] == a[forced] + cfg.differential_weight * (b[forced] - c[forced])
    for i in range(n):
        assert trial[i] in (target[i], a[i] + cfg.differential_weight * (b[i] - c[i]))


def test_sphere_beats_random_search():
    # F/CR are not the FL defaults: F=1.5 is deliberately exploratory and
    # does not settle on a smooth bowl in 30 generations.
    within, beat = 0, 0
    for seed in range(20):
        cfg = DEConfig(
            dimension=4, bounds=((-5, 5),) * 4, rng_seed=seed, differential_weight=0.8, crossover_probability=0.8
        )
        result = de_optimize(lambda g: -sum(x * x for x in g), cfg)
        oracle_rng = random.Random(10_000 + seed)
        oracle = max(-sum(oracle_rng.uniform(-5, 5) ** 2 for _ in range(4)) for _ in range(1200))
        within += (-result.best_fitness) ** 0.5 < 0.5
        beat += result.best_fitness >= oracle
        assert all(x <= y for x, y in zip(result.history, result.history[1:]))
    assert within >= 18
    assert beat >= 15


def test_constant_fitness_keeps_population():
    cfg = DEConfig(dimension=3, population_size=8, generations=5, rng_seed=3)
    result = de_optimize(lambda g: Fitness(1, 1), cfg)
    assert result.population == initialize_population(cfg)
    assert result.history == [Fitness(1, 1)] * 5


def test_de_is_reproducible():
    cfg = DEConfig(dimension=3, population_size=10, generations=6, rng_seed=11)
    f = lambda g: -abs(g[0] - 0.3) - abs(g[1] - g[2])  # noqa: E731
    r1, r2 = de_optimize(f, cfg), de_optimize(f, cfg)
    assert r1.best == r2.best and r1.history == r2.history and r1.population == r2.population


# ---------------------------------------------------------------------------
# FL fitness


def test_fl_fitness_single_bug_top_ranked():
    dataset = {"b1": {"A": runs({"f"})}}
    assert fl_fitness({"A": 1.0}, dataset, truth_of({"b1": {"f"}})) == Fitness(1, 0)


def test_fl_fitness_worked_example_equal_weights():
    dataset = {"b1": {"A": runs({"m1", "m2"}, {"m2"}, {"m2"}, {"m2"}, {"m3"})}}
    assert fl_fitness({"A": 1.0}, dataset, truth_of({"b1": {"m2"}})) == Fitness(1, 0)


def test_fl_fitness_zeroing_the_right_model():
    # A finds f on both bugs; B names decoys that sort before f.
    dataset = {
        "b1": {"A": runs({"f1"}), "B": runs({"a1"})},
        "b2": {"A": runs({"f2"}), "B": runs({"a2", "f2"})},
    }
    truth = truth_of({"b1": {"f1"}, "b2": {"f2"}})
    # hand aggregation:
    # (1, 0): b1 f1=1 -> hit; b2 f2=1 -> hit                       => (2, 0)
    # (1, 1): b1 f1=.5 a1=.5 tie -> a1 first (we 1); b2 f2=.75 hit => (1, 1)
    # (0, 1): b1 a1 only (we 1); b2 a2=.5 f2=.5 tie -> a2 (we 1)   => (0, 2)
    assert fl_fitness({"A": 1, "B": 0}, dataset, truth) == Fitness(2, 0)
    assert fl_fitness({"A": 1, "B": 1}, dataset, truth) == Fitness(1, 1)
    assert fl_fitness({"A": 0, "B": 1}, dataset, truth) == Fitness(0, 2)


def test_fl_objective_zero_genome_is_worst():
    dataset = {"b1": {"A": runs({"f"}), "B": runs({"f"})}}
    obj = FLObjective(dataset, truth_of({"b1": {"f"}}), ["A", "B"])
    assert obj([0.0, 0.0]) < obj([0.0, 0.1])


def test_de_matches_grid_on_desk_corpus(desk_policy, desk_fixtures, desk_truth):
    models = ["A", "B", "C"]
    obj = FLObjective(desk_dataset(desk_policy, desk_fixtures, models), desk_truth, models)
    _, grid_fit = grid_best(obj, 0.05)
    # equal weights are not optimal on this corpus, so the search has work to do
    assert obj([1, 1, 1]).acc1 < grid_fit.acc1
    result = de_optimize(obj, DEConfig(dimension=3, rng_seed=0))
    assert result.best_fitness.acc1 >= grid_fit.acc1


def test_simplex_grid_size():
    assert len(simplex_grid(3, 0.05)) == 231
    assert all(abs(sum(p) - 1) < 1e-12 for p in simplex_grid(3, 0.25))
    with pytest.raises(ConfigError):
        simplex_grid(2, 0.3)


# ---------------------------------------------------------------------------
# cross-validation


def test_assign_folds_stratified():
    bugs = [f"{p}-{i}" for p in "PQRS" for i in range(7)]
    strata = {b: b[0] for b in bugs}
    folds = assign_folds(bugs, 5, seed=1, strata=strata)
    assert set(folds) == set(bugs)
    sizes = [list(folds.values()).count(f) for f in range(5)]
    assert max(sizes) - min(sizes) <= 1
    for p in "PQRS":
        per = [sum(1 for b in bugs if b[0] == p and folds[b] == f) for f in range(5)]
        assert max(per) - min(per) <= 1
    with pytest.raises(ConfigError):
        assign_folds(bugs[:3], 5, seed=0)


def test_cross_validate_two_folds_partition():
    dataset = {f"b{i}": {"A": runs({f"f{i}"}), "B": runs({f"a{i}"})} for i in range(4)}
    truth = truth_of({f"b{i}": {f"f{i}"} for i in range(4)})
    cfg = DEConfig(dimension=2, population_size=8, generations=4, rng_seed=5)
    cv = cross_validate(dataset, truth, cfg, k_folds=2)
    assert len(cv.folds) == 2
    v0, v1 = (set(f.validation_bugs) for f in cv.folds)
    assert not v0 & v1 and v0 | v1 == set(dataset)
    for f in cv.folds:
        assert not set(f.train_bugs) & set(f.validation_bugs)
    assert abs(sum(cv.mean_weights.values()) - 1) <= 1e-9


def test_cross_validate_prefers_the_model_that_localises():
    # A names the faulty method everywhere; B and C name distinct decoys.
    bugs = [f"b{i}" for i in range(6)]
    dataset = {b: {"A": runs({f"z{b}"}), "B": runs({f"a{b}"}), "C": runs({f"c{b}"})} for b in bugs}
    truth = truth_of({b: {f"z{b}"} for b in bugs})
    obj = FLObjective(dataset, truth, ["A", "B", "C"])
    best_point, best_fit = grid_best(obj, 0.05)
    assert best_fit.acc1 == 6
    # brute force: every grid optimum gives A the strictly largest weight
    for point in simplex_grid(3, 0.05):
        if obj(point).acc1 == 6:
            assert point[0] > max(point[1], point[2])
    cv = cross_validate(dataset, truth, DEConfig(dimension=3, population_size=12, generations=10, rng_seed=2), k_folds=3)
    assert cv.mean_weights["A"] > max(cv.mean_weights["B"], cv.mean_weights["C"])


# ---------------------------------------------------------------------------
# pairwise grid


def test_grid_points():
    dataset = {"b1": {"A": runs({"f"}), "B": runs({"g"})}}
    land = grid_search_pairwise("A", "B", 1, 0.5, dataset, truth_of({"b1": {"f"}}))
    assert list(land) == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]
    with pytest.raises(ConfigError):
        grid_search_pairwise("A", "B", 6, 0.5, dataset, truth_of({"b1": {"f"}}))
    with pytest.raises(ConfigError):
        grid_search_pairwise("A", "B", 1, 0.3, dataset, truth_of({"b1": {"f"}}))


def test_grid_orthogonal_models_beat_endpoints():
    # A is right on b1, b2 and hedges on b3, b4; B mirrors that.
    dataset = {
        "b1": {"A": runs({"f1"}), "B": runs({"a1", "f1"})},
        "b2": {"A": runs({"f2"}), "B": runs({"a2", "f2"})},
        "b3": {"A": runs({"a3", "f3"}), "B": runs({"f3"})},
        "b4": {"A": runs({"a4", "f4"}), "B": runs({"f4"})},
    }
    truth = truth_of({f"b{i}": {f"f{i}"} for i in range(1, 5)})
    land = grid_search_pairwise("A", "B", 1, 0.25, dataset, truth)
    # hand: endpoints solve 2 each (hedges lose the tie to a*); at 0.5/0.5 the
    # faulty method collects 0.75 on every bug.
    assert land[(1.0, 0.0)] == 2 and land[(0.0, 1.0)] == 2
    assert land[(0.5, 0.5)] == 4
    assert max(land.values()) > max(land[(1.0, 0.0)], land[(0.0, 1.0)])


def test_grid_symmetric_dataset():
    dataset = {
        "b1": {"A": runs({"f1"}), "B": runs({"a1", "f1"})},
        "b2": {"A": runs({"a2", "f2"}), "B": runs({"f2"})},
        "b3": {"A": runs({"a3"}, {"f3"}), "B": runs({"a3"}, {"f3"})},
    }
    truth = truth_of({f"b{i}": {f"f{i}"} for i in range(1, 4)})
    land = grid_search_pairwise("A", "B", 2, 0.1, dataset, truth)
    for (wa, wb), acc in land.items():
        assert land[(wb, wa)] == acc


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000))
def test_history_non_decreasing(seed):
    rng = random.Random(seed)
    bugs = [f"b{i}" for i in range(4)]
    dataset = {
        b: {m: runs(*[{rng.choice(["f", "x", "y"])} for _ in range(3)]) for m in "AB"}
        for b in bugs
    }
    obj = FLObjective(dataset, truth_of({b: {"f"} for b in bugs}), ["A", "B"])
    result = de_optimize(obj, DEConfig(dimension=2, population_size=6, generations=5, rng_seed=seed))
    assert all(x <= y for x, y in zip(result.history, result.history[1:]))


@settings(max_examples=200)
@given(st.integers(0, 100_000), st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_fast_fitness_matches_full_ranking(seed, genome):
    rng = random.Random(seed)
    methods = ["f", "g", "a", "z", "f2"]
    bugs = [f"b{i}" for i in range(5)]
    dataset = {
        b: {m: runs(*[set(rng.sample(methods, rng.randint(0, 3))) for _ in range(rng.randint(1, 4))]) for m in "ABC"}
        for b in bugs
    }
    truth = truth_of({b: set(rng.sample(["f", "f2", "a"], rng.randint(1, 2))) for b in bugs})
    obj = FLObjective(dataset, truth, ["A", "B", "C"])
    if sum(genome) > 0:
        weights = dict(zip("ABC", genome))
        assert obj.evaluate(weights) == obj.evaluate_by_ranking(weights) == obj(genome)


@given(st.integers(4, 60), st.data())
def test_donors_are_distinct_and_exclude_target(pop_size, data):
    target = data.draw(st.integers(0, pop_size - 1))
    rng = random.Random(data.draw(st.integers(0, 10_000)))
    for _ in range(20):
        picks = sample_donors(pop_size, target, rng)
        assert len(set(picks)) == 3 and target not in picks
        assert all(0 <= j < pop_size for j in picks)


def test_donors_are_uniform():
    rng = random.Random(8)
    counts = [0] * 10
    for _ in range(9000):
        for j in sample_donors(10, 4, rng):
            counts[j] += 1
    assert counts[4] == 0
    # 27000 picks over 9 agents: 3000 each
    assert all(abs(c - 3000) < 200 for i, c in enumerate(counts) if i != 4)
    with pytest.raises(ConfigError):
        sample_donors(3, 0, rng)
