"""Ensembles of small language models for LLM-based fault localisation."""

from cosmosfl.scoring import (
    GroundTruth,
    acc_at_k,
    aggregate_runs,
    aggregate_weighted,
    confidence,
    overlap_regions,
    rank,
    score_run,
    wasted_effort,
)

__version__ = "0.1.0"

__all__ = [
    "GroundTruth",
    "acc_at_k",
    "aggregate_runs",
    "aggregate_weighted",
    "confidence",
    "overlap_regions",
    "rank",
    "score_run",
    "wasted_effort",
]
