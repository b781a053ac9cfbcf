"""Token, wall-time and energy accounting for inference runs.

Power is not measured here. An external collector (for instance a loop
around ``nvidia-smi --query-gpu=power.draw``) writes ``timestamp_ms,power_w``
CSV rows; this module ingests them and integrates each run's window with
the trapezoidal rule.
"""

from __future__ import annotations

import csv
import dataclasses
from bisect import bisect_left, bisect_right
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from cosmosfl.agent import RunRecord

CSV_HEADER = ["timestamp_ms", "power_w"]


class PowerDataError(ValueError):
    pass


@dataclass(frozen=True)
class PowerSample:
    timestamp_ms: float
    power_w: float


@dataclass(frozen=True)
class CostRecord:
    tokens_in: int
    tokens_out: int
    tokens_total: int
    wall_time_ms: float
    energy_j: float | None = None
    power_mean_w: float | None = None

    def __post_init__(self) -> None:
        if self.tokens_in < 0 or self.tokens_out < 0:
            raise ValueError("token counts must be non-negative")
        if self.tokens_total != self.tokens_in + self.tokens_out:
            raise ValueError("tokens_total must equal tokens_in + tokens_out")

    @classmethod
    def of(cls, run: RunRecord) -> CostRecord:
        return cls(run.tokens_in, run.tokens_out, run.tokens_total, run.wall_time_ms, run.energy_j, run.power_mean_w)


def check_monotone(samples: Sequence[PowerSample]) -> None:
    for i in range(1, len(samples)):
        if not samples[i].timestamp_ms > samples[i - 1].timestamp_ms:
            raise PowerDataError(
                f"timestamps must be strictly increasing (sample {i}: "
                f"{samples[i].timestamp_ms} after {samples[i - 1].timestamp_ms})"
            )


def _interp(t: float, s0: PowerSample, s1: PowerSample) -> float:
    frac = (t - s0.timestamp_ms) / (s1.timestamp_ms - s0.timestamp_ms)
    return s0.power_w + frac * (s1.power_w - s0.power_w)


def integrate_energy(samples: Sequence[PowerSample], start_ms: float, end_ms: float) -> float | None:
    """Joules drawn in ``[start_ms, end_ms]``.

    The piecewise-linear power curve through the samples is clipped to the
    window (interpolating at the edges where a sample straddles them) and
    integrated exactly. Nothing is extrapolated beyond the first or last
    sample. Returns ``None`` when no sample lies inside the window.
    """
    if not start_ms < end_ms:
        raise PowerDataError(f"window [{start_ms}, {end_ms}] is empty")
    check_monotone(samples)
    times = [s.timestamp_ms for s in samples]
    lo = bisect_left(times, start_ms)
    hi = bisect_right(times, end_ms)
    if lo >= hi:
        return None
    points = [(s.timestamp_ms, s.power_w) for s in samples[lo:hi]]
    if lo > 0 and points[0][0] > start_ms:
        points.insert(0, (start_ms, _interp(start_ms, samples[lo - 1], samples[lo])))
    if hi < len(samples) and points[-1][0] < end_ms:
        points.append((end_ms, _interp(end_ms, samples[hi - 1], samples[hi])))
    joules = 0.0
    for (t0, p0), (t1, p1) in zip(points, points[1:]):
        joules += (t1 - t0) * (p0 + p1) / 2.0
    return joules / 1000.0


def attach_costs(run: RunRecord, samples: Sequence[PowerSample]) -> RunRecord:
    """Copy of ``run`` with energy and mean power filled in from ``samples``."""
    start, end = run.window_start_ms, run.window_end_ms
    if not start < end:
        raise PowerDataError(f"run {run.key} has a degenerate window [{start}, {end}]")
    energy = integrate_energy(samples, start, end)
    power = None if energy is None else energy / ((end - start) / 1000.0)
    return dataclasses.replace(run, energy_j=energy, power_mean_w=power)


def ingest_power_csv(path: str | Path) -> list[PowerSample]:
    path = Path(path)
    samples: list[PowerSample] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise PowerDataError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise PowerDataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                t, p = float(row[0]), float(row[1])
            except ValueError:
                raise PowerDataError(f"{path}:{line}: non-numeric value in {row!r}") from None
            if p < 0:
                raise PowerDataError(f"{path}:{line}: negative power {p}")
            if samples and not t > samples[-1].timestamp_ms:
                raise PowerDataError(f"{path}:{line}: timestamp {t} does not increase")
            samples.append(PowerSample(t, p))
    return samples


def write_power_csv(path: str | Path, samples: Sequence[PowerSample]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow([repr(s.timestamp_ms), repr(s.power_w)])


def windows_overlap(runs: Sequence[RunRecord]) -> int:
    """Number of runs whose window intersects another run's window."""
    ordered = sorted(runs, key=lambda r: (r.window_start_ms, r.window_end_ms))
    flagged = set()
    latest_end, latest_i = float("-inf"), -1
    for i, r in enumerate(ordered):
        if r.window_start_ms < latest_end:
            flagged.update((i, latest_i))
        if r.window_end_ms > latest_end:
            latest_end, latest_i = r.window_end_ms, i
    return len(flagged)
