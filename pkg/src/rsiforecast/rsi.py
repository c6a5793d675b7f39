"""Residual Supply Index and the pivotal/competitive hour summary.

RSI_i = 100 * (total available capacity - capacity_i) / demand. The hourly
market index is the minimum over generators, i.e. the index of the largest
unit. No contract-obligation adjustment is made.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PIVOTAL_THRESHOLD = 100.0
COMPETITIVE_THRESHOLD = 110.0


def rsi_per_generator(capacities: Sequence[float], demand: float, i: int) -> float:
    if not demand > 0:
        raise ValueError(f"demand must be positive, got {demand}")
    if not 0 <= i < len(capacities):
        raise IndexError(f"generator index {i} out of range for {len(capacities)} generators")
    return 100.0 * (sum(capacities) - capacities[i]) / demand


def market_rsi(capacities: Sequence[float], demand: float) -> float:
    if len(capacities) == 0:
        raise ValueError("market_rsi needs at least one generator")
    if not demand > 0:
        raise ValueError(f"demand must be positive, got {demand}")
    return 100.0 * (sum(capacities) - max(capacities)) / demand


def market_rsi_array(capacity_matrix: np.ndarray, demand: np.ndarray) -> np.ndarray:
    """Vectorised market_rsi over rows of an (hours x generators) matrix."""
    caps = np.asarray(capacity_matrix, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if caps.ndim != 2 or caps.shape[1] == 0:
        raise ValueError("capacity matrix must be 2-D with at least one generator")
    if np.any(demand <= 0):
        raise ValueError("demand must be positive")
    return 100.0 * (caps.sum(axis=1) - caps.max(axis=1)) / demand


@dataclass(frozen=True)
class RsiPoint:
    date: dt.date
    hour: int
    rsi: float

    @property
    def pivotal(self) -> bool:
        return self.rsi < PIVOTAL_THRESHOLD

    @property
    def competitive(self) -> bool:
        return self.rsi > COMPETITIVE_THRESHOLD

    @property
    def key(self) -> tuple[dt.date, int]:
        return self.date, self.hour


@dataclass(frozen=True)
class RsiSeries:
    points: tuple[RsiPoint, ...]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.rsi for p in self.points], dtype=float)

    @property
    def keys(self) -> list[tuple[dt.date, int]]:
        return [p.key for p in self.points]

    def filter_hours(self, hours: Iterable[int]) -> "RsiSeries":
        hours = set(hours)
        return RsiSeries(tuple(p for p in self.points if p.hour in hours))


def compute_rsi_series(dataset) -> RsiSeries:
    """Hourly market RSI for every record of a MarketDataset."""
    values = market_rsi_array(dataset.capacity_matrix, dataset.loads)
    return RsiSeries(
        tuple(RsiPoint(r.date, r.hour, float(v)) for r, v in zip(dataset.records, values))
    )


@dataclass(frozen=True)
class MarketConditionReport:
    regime: str
    share_le_110: float
    share_gt_110: float
    share_lt_100: float
    hours_counted: int

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "share_le_110": self.share_le_110,
            "share_gt_110": self.share_gt_110,
            "share_lt_100": self.share_lt_100,
            "hours_counted": self.hours_counted,
        }


def condition_report(series: RsiSeries, regime_hours: Iterable[int], regime: str = "custom") -> MarketConditionReport:
    filtered = series.filter_hours(regime_hours)
    n = len(filtered)
    if n == 0:
        raise ValueError(f"no RSI values fall in regime '{regime}'")
    values = filtered.values
    n_le = int(np.count_nonzero(values <= COMPETITIVE_THRESHOLD))
    n_lt = int(np.count_nonzero(values < PIVOTAL_THRESHOLD))
    return MarketConditionReport(
        regime=regime,
        share_le_110=n_le / n,
        share_gt_110=(n - n_le) / n,
        share_lt_100=n_lt / n,
        hours_counted=n,
    )


def format_condition_table(reports: Sequence[MarketConditionReport]) -> str:
    lines = [f"{'Daily hours':<16}{'RSI <= 110':>12}{'RSI > 110':>12}{'RSI < 100':>12}{'hours':>8}"]
    for rep in reports:
        lines.append(
            f"{rep.regime + ' hours':<16}{100 * rep.share_le_110:>11.1f}%"
            f"{100 * rep.share_gt_110:>11.1f}%{100 * rep.share_lt_100:>11.1f}%{rep.hours_counted:>8d}"
        )
    return "\n".join(lines)


def write_rsi_csv(series: RsiSeries, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "hour", "rsi", "pivotal", "competitive"])
        for p in series:
            writer.writerow([p.date.isoformat(), p.hour, repr(p.rsi), int(p.pivotal), int(p.competitive)])
    return path
