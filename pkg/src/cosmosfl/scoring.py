"""Voting-based aggregation of fault-localisation runs and the FL metrics.

Every function here is pure. Method identifiers are plain strings; a
``ScoreMap`` is a ``dict[str, float]`` and a ``RankedList`` is a list of
``(method, score)`` pairs ordered by score descending, method ascending.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from itertools import combinations

ScoreMap = dict[str, float]
RankedList = list[tuple[str, float]]


class ScoringError(ValueError):
    """Raised for inputs the aggregation functions cannot score."""


@dataclass(frozen=True)
class GroundTruth:
    bug_id: str
    faulty_methods: frozenset[str]

    def __post_init__(self) -> None:
        if not self.faulty_methods:
            raise ScoringError(f"ground truth for {self.bug_id!r} has no faulty methods")
        object.__setattr__(self, "faulty_methods", frozenset(self.faulty_methods))


def score_run(run: Iterable[str]) -> ScoreMap:
    """Give each predicted method 1/|run|; an empty run scores nothing."""
    methods = set(run)
    if not methods:
        return {}
    share = 1.0 / len(methods)
    return {m: share for m in methods}


def aggregate_runs(runs: Sequence[Mapping[str, float]]) -> ScoreMap:
    """Average per-run scores, counting empty runs in the denominator."""
    if not runs:
        raise ScoringError("no runs to aggregate")
    totals: dict[str, float] = {}
    for run in runs:
        for method, score in run.items():
            totals[method] = totals.get(method, 0.0) + score
    n = len(runs)
    return {m: s / n for m, s in totals.items()}


def normalise_weights(weights: Mapping[str, float]) -> dict[str, float]:
    total = sum(weights.values())
    if any(w < 0 for w in weights.values()):
        raise ScoringError("weights must be non-negative")
    if not total > 0:
        raise ScoringError("total weight must be positive")
    return {name: w / total for name, w in weights.items()}


def aggregate_weighted(
    per_model_runs: Mapping[str, Sequence[Mapping[str, float]]],
    weights: Mapping[str, float],
) -> ScoreMap:
    """Weighted ensemble vote.

    Runs are averaged per model first, then combined with the normalised
    weights, so a model contributing more runs does not get more say.
    """
    missing = [name for name in per_model_runs if name not in weights]
    if missing:
        raise ScoringError(f"no weight for model(s): {', '.join(sorted(missing))}")
    norm = normalise_weights(weights)
    combined: dict[str, float] = {}
    for name in weights:
        runs = per_model_runs.get(name)
        if not runs:
            raise ScoringError(f"model {name!r} has no runs")
        w = norm[name]
        if w == 0.0:
            continue
        for method, score in aggregate_runs(runs).items():
            combined[method] = combined.get(method, 0.0) + w * score
    return combined


def confidence(scores: Mapping[str, float]) -> float:
    return max(scores.values(), default=0.0)


def rank(scores: Mapping[str, float]) -> RankedList:
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def first_faulty_position(ranking: Sequence[tuple[str, float]], faulty: frozenset[str]) -> int | None:
    for pos, (method, _) in enumerate(ranking):
        if method in faulty:
            return pos
    return None


def acc_at_k(
    results: Mapping[str, Sequence[tuple[str, float]]],
    truth: Mapping[str, GroundTruth],
    k: int,
) -> int:
    """Number of bugs with a faulty method in the top ``k`` places."""
    if k < 1:
        raise ScoringError("k must be a positive integer")
    hits = 0
    for bug_id, ranking in results.items():
        if bug_id not in truth:
            raise ScoringError(f"missing ground truth for bug {bug_id!r}")
        pos = first_faulty_position(ranking, truth[bug_id].faulty_methods)
        if pos is not None and pos < k:
            hits += 1
    return hits


def wasted_effort(ranking: Sequence[tuple[str, float]], truth: GroundTruth) -> int:
    """Non-faulty methods inspected before the first faulty one.

    When no faulty method is listed the whole list counts as wasted.
    """
    pos = first_faulty_position(ranking, truth.faulty_methods)
    return len(ranking) if pos is None else pos


def overlap_regions(top_ranked: Mapping[str, Iterable[str]]) -> dict[tuple[str, ...], int]:
    """Venn-region counts: bugs top-ranked by exactly each subset of models.

    Keys are tuples of model names in the input order; every non-empty
    subset is present, zero-count regions included.
    """
    models = list(top_ranked)
    if len(models) < 2:
        raise ScoringError("overlap analysis needs at least two models")
    sets = {m: set(top_ranked[m]) for m in models}
    regions: dict[tuple[str, ...], int] = {}
    for size in range(1, len(models) + 1):
        for subset in combinations(models, size):
            regions[subset] = 0
    for bug in set().union(*sets.values()):
        owners = tuple(m for m in models if bug in sets[m])
        regions[owners] += 1
    return regions


def region_label(region: Sequence[str]) -> str:
    return "&".join(region)
