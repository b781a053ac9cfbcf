"""Differential Evolution over ensemble voting weights.

The optimiser follows the classic DE/rand/1/bin loop with in-place,
strict-improvement replacement. Fitness for fault localisation is the
lexicographic pair (acc@1 up, total wasted effort down).
"""

from __future__ import annotations

import json
import random
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import total_ordering
from pathlib import Path
from typing import Any, TypeVar

from cosmosfl.scoring import (
    GroundTruth,
    ScoreMap,
    ScoringError,
    acc_at_k,
    aggregate_runs,
    normalise_weights,
    rank,
    wasted_effort,
)

# bug id -> model name -> list of per-run ScoreMaps
Dataset = Mapping[str, Mapping[str, Sequence[Mapping[str, float]]]]
Agent = list[float]
F = TypeVar("F")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DEConfig:
    dimension: int
    population_size: int = 40
    generations: int = 30
    crossover_probability: float = 0.8
    differential_weight: float = 1.5
    bounds: tuple[tuple[float, float], ...] | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ConfigError("dimension must be positive")
        if self.population_size < 4:
            raise ConfigError("population_size must be >= 4 (target plus three donors)")
        if self.generations < 1:
            raise ConfigError("generations must be positive")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ConfigError("crossover_probability must lie in [0, 1]")
        if not self.differential_weight > 0:
            raise ConfigError("differential_weight must be positive")
        bounds = self.bounds
        if bounds is None:
            bounds = ((0.0, 1.0),) * self.dimension
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bounds) != self.dimension:
            raise ConfigError("one (lo, hi) pair per dimension required")
        if any(not lo < hi for lo, hi in bounds):
            raise ConfigError("every bound needs lo < hi")
        object.__setattr__(self, "bounds", bounds)


@total_ordering
@dataclass(frozen=True)
class Fitness:
    """Lexicographic FL fitness; greater is better."""

    acc1: int
    total_wasted_effort: int

    def _key(self) -> tuple[int, int]:
        return (self.acc1, -self.total_wasted_effort)

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, Fitness):
            return NotImplemented
        # same as self._key() < other._key(), without building tuples (hot path)
        if self.acc1 != other.acc1:
            return self.acc1 < other.acc1
        return self.total_wasted_effort > other.total_wasted_effort


# Assigned to degenerate genomes (every weight clamped to zero).
WORST_FITNESS = Fitness(0, 2**62)


@dataclass
class DEResult:
    best: Agent
    best_fitness: Any
    history: list[Any]
    population: list[Agent]


def initialize_population(cfg: DEConfig, rng: random.Random | None = None) -> list[Agent]:
    rng = rng if rng is not None else random.Random(cfg.rng_seed)
    return [[rng.uniform(lo, hi) for lo, hi in cfg.bounds] for _ in range(cfg.population_size)]


def _clamp(value: float, lo: float, hi: float) -> float:
    return hi if value > hi else lo if value < lo else value


def make_trial(
    target: Sequence[float],
    a: Sequence[float],
    b: Sequence[float],
    c: Sequence[float],
    cfg: DEConfig,
    rng: random.Random,
    forced_index: int | None = None,
) -> Agent:
    """Mutate-and-cross ``target`` against donors ``a, b, c``.

    ``forced_index`` is 0-based; when omitted it is drawn from ``rng``.
    The crossover coin is only tossed for indices other than the forced one.
    """
    n = cfg.dimension
    if forced_index is None:
        forced_index = rng.randint(1, n) - 1
    trial = list(target)
    w_d = cfg.differential_weight
    p_cx = cfg.crossover_probability
    bounds = cfg.bounds
    coin = rng.random
    for i in range(n):
        if i == forced_index or coin() < p_cx:
            lo, hi = bounds[i]
            trial[i] = _clamp(a[i] + w_d * (b[i] - c[i]), lo, hi)
    return trial


def sample_donors(pop_size: int, target: int, rng: random.Random) -> tuple[int, int, int]:
    """Three distinct population indices, none equal to ``target``."""
    if pop_size < 4:
        raise ConfigError("need at least 4 agents to pick 3 donors besides the target")
    # rejection sampling; random.sample costs several times more per call
    draw = rng.random
    picks: list[int] = []
    while len(picks) < 3:
        j = int(draw() * pop_size)
        if j != target and j not in picks:
            picks.append(j)
    return picks[0], picks[1], picks[2]


def de_optimize(
    fitness: Callable[[Agent], F],
    cfg: DEConfig,
    on_generation: Callable[[int, Agent, F], None] | None = None,
) -> DEResult:
    """Run DE and return the best agent plus per-generation best fitness.

    ``fitness`` may return any totally ordered value (``Fitness`` or a
    float); larger is better. The population is updated in place, so a
    replacement made earlier in a generation is visible to later donors.
    """
    rng = random.Random(cfg.rng_seed)
    pop = initialize_population(cfg, rng)
    scores = [fitness(agent) for agent in pop]

    def select_best() -> int:
        best_i = 0
        for i in range(1, len(pop)):
            if scores[best_i] < scores[i]:
                best_i = i
        return best_i

    i0 = select_best()
    best, best_fit = list(pop[i0]), scores[i0]
    history: list[F] = []
    for gen in range(cfg.generations):
        for k in range(len(pop)):
            ia, ib, ic = sample_donors(len(pop), k, rng)
            trial = make_trial(pop[k], pop[ia], pop[ib], pop[ic], cfg, rng)
            trial_fit = fitness(trial)
            if scores[k] < trial_fit:
                pop[k], scores[k] = trial, trial_fit
        ig = select_best()
        if best_fit < scores[ig]:
            best, best_fit = list(pop[ig]), scores[ig]
        history.append(best_fit)
        if on_generation is not None:
            on_generation(gen, best, best_fit)
    return DEResult(best=best, best_fitness=best_fit, history=history, population=pop)


# ---------------------------------------------------------------------------
# FL fitness


def fl_fitness(
    weights: Mapping[str, float],
    dataset: Dataset,
    truth: Mapping[str, GroundTruth],
) -> Fitness:
    """acc@1 and summed wasted effort of the weighted ensemble ranking."""
    return FLObjective(dataset, truth, list(weights)).evaluate(weights)


class FLObjective:
    """Cached FL fitness over a fixed dataset.

    Per-model run averages are computed once; each evaluation is then a
    weighted sum plus a ranking per bug. Calling the instance with a genome
    maps it onto ``models`` in order.
    """

    def __init__(
        self,
        dataset: Dataset,
        truth: Mapping[str, GroundTruth],
        models: Sequence[str],
        bugs: Iterable[str] | None = None,
    ) -> None:
        if not dataset:
            raise ScoringError("dataset is empty")
        self.models = list(models)
        self.bugs = sorted(dataset) if bugs is None else list(bugs)
        if not self.bugs:
            raise ScoringError("no bugs to evaluate")
        self.truth = truth
        self._model_scores: dict[str, dict[str, ScoreMap]] = {}
        for bug in self.bugs:
            if bug not in truth:
                raise ScoringError(f"missing ground truth for bug {bug!r}")
            per_model = dataset[bug]
            extra = [m for m in per_model if m not in self.models]
            if extra:
                raise ScoringError(f"no weight for model(s): {', '.join(sorted(extra))}")
            self._model_scores[bug] = {m: aggregate_runs(per_model[m]) for m in self.models if m in per_model}
            for m in self.models:
                if m not in per_model or not per_model[m]:
                    raise ScoringError(f"model {m!r} has no runs for bug {bug!r}")
        # Per bug: methods sorted by name, each with its (model position, score)
        # contributions in model order (the accumulation order of ``rankings``),
        # plus the positions of the faulty methods in that list.
        self._terms: list[tuple[list[list[tuple[int, float]]], list[int]]] = []
        for bug in self.bugs:
            faulty = truth[bug].faulty_methods
            contrib: dict[str, list[tuple[int, float]]] = {}
            for j, m in enumerate(self.models):
                for method, sc in self._model_scores[bug].get(m, {}).items():
                    contrib.setdefault(method, []).append((j, sc))
            names = sorted(contrib)
            self._terms.append(([contrib[n] for n in names], [i for i, n in enumerate(names) if n in faulty]))

    def rankings(self, weights: Mapping[str, float]) -> dict[str, list[tuple[str, float]]]:
        norm = normalise_weights(weights)
        out = {}
        for bug in self.bugs:
            combined: dict[str, float] = {}
            for m, scores in self._model_scores[bug].items():
                w = norm[m]
                if w == 0.0:
                    continue
                for method, s in scores.items():
                    combined[method] = combined.get(method, 0.0) + w * s
            out[bug] = rank(combined)
        return out

    def evaluate(self, weights: Mapping[str, float]) -> Fitness:
        norm = normalise_weights(weights)
        return self._fitness([norm.get(m, 0.0) for m in self.models])

    def _fitness(self, norm: Sequence[float]) -> Fitness:
        """Same value as ranking every bug, without sorting.

        Only the first faulty position matters: the number of methods whose
        (score desc, name asc) key beats the best faulty key. Methods are
        pre-sorted by name, so the name tie-break is an index comparison. A
        method named only by zero-weight models is absent, as in ``rankings``.
        """
        dense = all(norm)
        acc1 = wasted = 0
        for contribs, faulty_idx in self._terms:
            totals: list[float | None] = []
            for contrib in contribs:
                total = 0.0
                if dense:
                    for j, sc in contrib:
                        total += norm[j] * sc
                else:
                    present = False
                    for j, sc in contrib:
                        w = norm[j]
                        if w:
                            total += w * sc
                            present = True
                    if not present:
                        totals.append(None)
                        continue
                totals.append(total)
            best_i, best = -1, 0.0
            for i in faulty_idx:
                t = totals[i]
                if t is not None and (best_i < 0 or t > best):
                    best_i, best = i, t
            if best_i < 0:
                wasted += sum(1 for t in totals if t is not None)
                continue
            pos = 0
            for i, t in enumerate(totals):
                if t is not None and (t > best or (t == best and i < best_i)):
                    pos += 1
            if pos == 0:
                acc1 += 1
            wasted += pos
        return Fitness(acc1, wasted)

    def evaluate_by_ranking(self, weights: Mapping[str, float]) -> Fitness:
        results = self.rankings(weights)
        acc1 = acc_at_k(results, self.truth, 1)
        wasted = sum(wasted_effort(results[b], self.truth[b]) for b in self.bugs)
        return Fitness(acc1, wasted)

    def __call__(self, genome: Sequence[float]) -> Fitness:
        total = sum(genome)
        if not total > 0:
            return WORST_FITNESS
        return self._fitness([w / total for w in genome])


# ---------------------------------------------------------------------------
# Cross-validation


def assign_folds(
    bugs: Sequence[str],
    k_folds: int,
    seed: int,
    strata: Mapping[str, str] | None = None,
) -> dict[str, int]:
    """Stratified fold assignment.

    Bugs are shuffled within each stratum and dealt round-robin; the deal
    continues across strata so overall fold sizes stay balanced too.
    """
    if k_folds < 2:
        raise ConfigError("k_folds must be >= 2")
    if len(bugs) < k_folds:
        raise ConfigError(f"dataset has {len(bugs)} bugs, fewer than k_folds={k_folds}")
    rng = random.Random(seed)
    groups: dict[str, list[str]] = {}
    for bug in sorted(bugs):
        key = strata.get(bug, "") if strata else ""
        groups.setdefault(key, []).append(bug)
    folds: dict[str, int] = {}
    cursor = 0
    for key in sorted(groups):
        members = groups[key]
        rng.shuffle(members)
        for bug in members:
            folds[bug] = cursor % k_folds
            cursor += 1
    return folds


@dataclass
class FoldResult:
    fold: int
    train_bugs: list[str]
    validation_bugs: list[str]
    weights: dict[str, float]
    train_fitness: Fitness
    validation_fitness: Fitness
    trace: list[dict[str, Any]]


@dataclass
class CVResult:
    folds: list[FoldResult]
    mean_weights: dict[str, float]
    assignment: dict[str, int]

    @property
    def fold_weights(self) -> list[dict[str, float]]:
        return [f.weights for f in self.folds]

    @property
    def validation_fitness(self) -> list[Fitness]:
        return [f.validation_fitness for f in self.folds]


def trace_record(gen: int, genome: Sequence[float], fit: Fitness) -> dict[str, Any]:
    return {
        "generation": gen,
        "best_acc1": fit.acc1,
        "best_wasted_effort": fit.total_wasted_effort,
        "best_genome": list(genome),
    }


def cross_validate(
    dataset: Dataset,
    truth: Mapping[str, GroundTruth],
    cfg: DEConfig,
    k_folds: int = 10,
    models: Sequence[str] | None = None,
    strata: Mapping[str, str] | None = None,
) -> CVResult:
    """k-fold CV of DE-optimised weights.

    Fold ``f`` trains on every bug outside ``f`` with seed
    ``cfg.rng_seed + f`` and is scored on the bugs inside ``f``.
    """
    if models is None:
        models = sorted({m for per_model in dataset.values() for m in per_model})
    models = list(models)
    if cfg.dimension != len(models):
        raise ConfigError(f"DE dimension {cfg.dimension} does not match {len(models)} models")
    assignment = assign_folds(list(dataset), k_folds, cfg.rng_seed, strata)
    folds = []
    for f in range(k_folds):
        val = sorted(b for b, fold in assignment.items() if fold == f)
        train = sorted(b for b, fold in assignment.items() if fold != f)
        assert not set(val) & set(train), "validation bug leaked into training"
        objective = FLObjective(dataset, truth, models, bugs=train)
        trace: list[dict[str, Any]] = []
        fold_cfg = DEConfig(
            dimension=cfg.dimension,
            population_size=cfg.population_size,
            generations=cfg.generations,
            crossover_probability=cfg.crossover_probability,
            differential_weight=cfg.differential_weight,
            bounds=cfg.bounds,
            rng_seed=cfg.rng_seed + f,
        )
        result = de_optimize(
            objective,
            fold_cfg,
            on_generation=lambda g, genome, fit: trace.append(trace_record(g, genome, fit)),
        )
        weights = genome_to_weights(result.best, models)
        validation = FLObjective(dataset, truth, models, bugs=val).evaluate(weights)
        folds.append(
            FoldResult(
                fold=f,
                train_bugs=train,
                validation_bugs=val,
                weights=weights,
                train_fitness=result.best_fitness,
                validation_fitness=validation,
                trace=trace,
            )
        )
    mean = {m: sum(fr.weights[m] for fr in folds) / k_folds for m in models}
    return CVResult(folds=folds, mean_weights=normalise_weights(mean), assignment=assignment)


def genome_to_weights(genome: Sequence[float], models: Sequence[str]) -> dict[str, float]:
    """Normalised weights for a genome; an all-zero genome maps to uniform."""
    if not sum(genome) > 0:
        return {m: 1.0 / len(models) for m in models}
    return normalise_weights(dict(zip(models, genome)))


def write_trace(path: Path, records: Iterable[Mapping[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Pairwise landscapes


def grid_search_pairwise(
    model_a: str,
    model_b: str,
    runs_per_model: int,
    step: float,
    dataset: Dataset,
    truth: Mapping[str, GroundTruth],
) -> dict[tuple[float, float], int]:
    """acc@1 at every (w_a, w_b) on the line w_a + w_b = 1.

    Each model contributes its first ``runs_per_model`` runs per bug.
    """
    if not 1 <= runs_per_model <= 5:
        raise ConfigError("runs_per_model must lie in [1, 5]")
    n_steps = round(1.0 / step)
    if n_steps < 1 or abs(n_steps * step - 1.0) > 1e-9:
        raise ConfigError(f"step {step} does not divide 1 evenly")
    subset = {
        bug: {m: list(per_model[m][:runs_per_model]) for m in (model_a, model_b)}
        for bug, per_model in dataset.items()
    }
    objective = FLObjective(subset, truth, [model_a, model_b])
    landscape = {}
    for i in range(n_steps + 1):
        w_a, w_b = i / n_steps, (n_steps - i) / n_steps
        landscape[(w_a, w_b)] = objective.evaluate({model_a: w_a, model_b: w_b}).acc1
    return landscape


def simplex_grid(dimension: int, step: float) -> list[tuple[float, ...]]:
    """All weight vectors on the probability simplex with the given step."""
    n_steps = round(1.0 / step)
    if abs(n_steps * step - 1.0) > 1e-9:
        raise ConfigError(f"step {step} does not divide 1 evenly")
    points: list[tuple[float, ...]] = []

    def rec(prefix: list[int], remaining: int, left: int) -> None:
        if left == 1:
            points.append(tuple(x / n_steps for x in prefix + [remaining]))
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, left - 1)

    rec([], n_steps, dimension)
    return points


def grid_best(objective: FLObjective, step: float = 0.05) -> tuple[tuple[float, ...], Fitness]:
    """Exhaustive simplex-grid optimum of an FL objective."""
    best_point, best_fit = None, None
    for point in simplex_grid(len(objective.models), step):
        fit = objective(point)
        if best_fit is None or best_fit < fit:
            best_point, best_fit = point, fit
    return best_point, best_fit
