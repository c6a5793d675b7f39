"""Lagged load/price/RSI features, the four day-pattern calendar, and min-max scaling."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError

HOURS_PER_DAY = 24

PEAK_HOURS = frozenset(range(18, 24))
OFFPEAK_HOURS = frozenset(set(range(1, 25)) - PEAK_HOURS)


class DayPattern(enum.IntEnum):
    SATURDAY = 0
    SUNDAY_TO_WEDNESDAY = 1
    THURSDAY = 2
    FRIDAY = 3


# date.weekday(): Monday = 0 ... Sunday = 6
_WEEKDAY_TO_PATTERN = {
    0: DayPattern.SUNDAY_TO_WEDNESDAY,
    1: DayPattern.SUNDAY_TO_WEDNESDAY,
    2: DayPattern.SUNDAY_TO_WEDNESDAY,
    3: DayPattern.THURSDAY,
    4: DayPattern.FRIDAY,
    5: DayPattern.SATURDAY,
    6: DayPattern.SUNDAY_TO_WEDNESDAY,
}


def day_pattern(date: dt.date) -> DayPattern:
    return _WEEKDAY_TO_PATTERN[date.weekday()]


def parse_regime(text: str) -> tuple[str, frozenset[int]]:
    """``peak``, ``offpeak`` or ``custom:<h1,h2,...>`` (hours 1..24)."""
    text = text.strip()
    if text == "peak":
        return "peak", PEAK_HOURS
    if text in ("offpeak", "off-peak"):
        return "offpeak", OFFPEAK_HOURS
    if text.startswith("custom:"):
        body = text[len("custom:"):]
        try:
            hours = frozenset(int(h) for h in body.split(",") if h.strip())
        except ValueError:
            raise ConfigError(f"bad hour list in regime '{text}'")
        if not hours:
            raise ConfigError("custom regime needs at least one hour")
        if any(not 1 <= h <= HOURS_PER_DAY for h in hours):
            raise ConfigError(f"regime hours must lie in 1..24: '{text}'")
        return "custom", hours
    raise ConfigError(f"unknown regime '{text}' (expected peak, offpeak or custom:<hours>)")


DAY_ENCODINGS = ("pattern-code", "pattern-onehot")


@dataclass(frozen=True)
class FeatureSpec:
    include_rsi: bool = True
    day_encoding: str = "pattern-code"
    load_t_lags: tuple[int, ...] = (0, 1)
    load_d_lags: tuple[int, ...] = (1, 2, 3, 7, 14, 21, 28)
    price_t_lags: tuple[int, ...] = (1,)
    price_d_lags: tuple[int, ...] = (1, 2, 3, 7, 14, 21, 28)
    rsi_t_lags: tuple[int, ...] = (1,)
    rsi_d_lags: tuple[int, ...] = (1, 7)
    # Relative sd of Gaussian noise on the D(t) forecast-load slot; 0 = perfect forecast.
    load_forecast_sd: float = 0.0
    forecast_seed: int = 0

    def __post_init__(self):
        if self.day_encoding not in DAY_ENCODINGS:
            raise ConfigError(f"day_encoding must be one of {DAY_ENCODINGS}, got {self.day_encoding!r}")
        for name in ("load_t_lags", "load_d_lags", "price_t_lags", "price_d_lags", "rsi_t_lags", "rsi_d_lags"):
            lags = tuple(int(x) for x in getattr(self, name))
            object.__setattr__(self, name, lags)
            if any(x < 0 for x in lags):
                raise ConfigError(f"{name} must be non-negative")
        if any(x < 1 for x in self.load_d_lags + self.price_d_lags + self.rsi_d_lags):
            raise ConfigError("day lags start at 1")
        if any(x < 1 for x in self.price_t_lags + self.rsi_t_lags):
            raise ConfigError("price and RSI hour lags start at 1 (no same-hour leakage)")
        if self.load_forecast_sd < 0:
            raise ConfigError("load_forecast_sd must be non-negative")

    def with_rsi(self, include: bool) -> "FeatureSpec":
        return FeatureSpec(**{**self.to_dict(), "include_rsi": include})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown feature settings: {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class FeatureSource:
    """Where a feature is read from: variable at ``offset`` hours before the target."""

    name: str
    variable: str  # "pattern", "load", "price" or "rsi"
    offset: int


def feature_sources(spec: FeatureSpec) -> list[FeatureSource]:
    """Canonical feature order with provenance of every column."""
    out = []
    if spec.day_encoding == "pattern-code":
        out.append(FeatureSource("pattern", "pattern", 0))
    else:
        out.extend(FeatureSource(f"pattern_{p}", "pattern", 0) for p in range(4))
    blocks = [("D", "load", spec.load_t_lags, spec.load_d_lags),
              ("P", "price", spec.price_t_lags, spec.price_d_lags)]
    if spec.include_rsi:
        blocks.append(("RSI", "rsi", spec.rsi_t_lags, spec.rsi_d_lags))
    for prefix, var, t_lags, d_lags in blocks:
        out.extend(FeatureSource(f"{prefix}_t{i}", var, i) for i in t_lags)
        out.extend(FeatureSource(f"{prefix}_d{i}", var, HOURS_PER_DAY * i) for i in d_lags)
    return out


def feature_names(spec: FeatureSpec) -> tuple[str, ...]:
    return tuple(s.name for s in feature_sources(spec))


def fingerprint(names: Sequence[str]) -> str:
    return hashlib.sha256(",".join(names).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Sample:
    key: tuple[dt.date, int]
    features: np.ndarray
    target: float


@dataclass(frozen=True)
class SampleSet:
    """Supervised rows in chronological order; X is (n_samples, n_features)."""

    keys: tuple[tuple[dt.date, int], ...]
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    patterns: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.patterns is None:
            object.__setattr__(self, "patterns", np.array([day_pattern(d) for d, _ in self.keys], dtype=int))

    def __len__(self):
        return len(self.keys)

    def __iter__(self) -> Iterator[Sample]:
        for k, x, t in zip(self.keys, self.X, self.y):
            yield Sample(k, x, float(t))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return SampleSet(
            tuple(self.keys[i] for i in idx), self.X[idx], self.y[idx], self.feature_names, self.patterns[idx]
        )

    def filter_patterns(self, patterns: Iterable[int]) -> "SampleSet":
        return self.subset(np.isin(self.patterns, list(patterns)))

    def split_chronological(self, train_fraction: float) -> tuple["SampleSet", "SampleSet"]:
        if not 0 < train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        n_train = int(round(train_fraction * len(self)))
        n_train = min(max(n_train, 1), len(self) - 1)
        return self.subset(np.arange(n_train)), self.subset(np.arange(n_train, len(self)))

    def with_X(self, X: np.ndarray, y: np.ndarray) -> "SampleSet":
        return SampleSet(self.keys, X, y, self.feature_names, self.patterns)


def build_dataset(records, rsi, spec: FeatureSpec, regime_hours: Iterable[int], patterns=None) -> SampleSet:
    """One sample per in-regime hour whose every lag lies inside the data span.

    ``D_t0`` is the load at the target hour itself, standing in for the load
    forecast; every other feature is read strictly before the target hour.
    ``patterns`` optionally keeps only days of the given pattern codes.
    """
    regime_hours = frozenset(regime_hours)
    if not regime_hours:
        raise ConfigError("regime_hours must not be empty")
    keys = [r.key for r in records.records]
    rsi_values = None
    if spec.include_rsi:
        if [p.key for p in rsi.points] != keys:
            raise ValueError("RSI series does not cover the same hours as the records")
        rsi_values = rsi.values
    series = {"load": records.loads, "price": records.prices, "rsi": rsi_values}
    sources = feature_sources(spec)
    max_offset = max(s.offset for s in sources)

    n_total = len(keys)
    candidates = [
        k for k in range(max_offset, n_total)
        if keys[k][1] in regime_hours and (patterns is None or day_pattern(keys[k][0]) in patterns)
    ]
    if not candidates:
        days = records.n_days
        raise InsufficientDataError(
            f"no samples: {days} days of data, lags reach back {max_offset} hours "
            f"(at least {max_offset // HOURS_PER_DAY + 1} days needed) and the regime/pattern filter must match"
        )
    idx = np.array(candidates)
    pats = np.array([day_pattern(keys[k][0]) for k in candidates], dtype=int)
    cols = []
    for src in sources:
        if src.variable == "pattern":
            if src.name == "pattern":
                cols.append(pats.astype(float))
            else:
                cols.append((pats == int(src.name.split("_")[1])).astype(float))
        else:
            cols.append(series[src.variable][idx - src.offset])
    X = np.column_stack(cols)
    if spec.load_forecast_sd > 0 and "D_t0" in (s.name for s in sources):
        j = [s.name for s in sources].index("D_t0")
        rng = np.random.default_rng(spec.forecast_seed)
        X[:, j] *= 1.0 + spec.load_forecast_sd * rng.standard_normal(len(idx))
    y = records.prices[idx]
    return SampleSet(tuple(keys[k] for k in candidates), X, y, feature_names(spec), pats)


def write_feature_csv(samples: SampleSet, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "hour", *samples.feature_names, "target"])
        for (date, hour), x, t in zip(samples.keys, samples.X, samples.y):
            writer.writerow([date.isoformat(), hour, *(repr(float(v)) for v in x), repr(float(t))])
    return path


# --------------------------------------------------------------------------
# Min-max scaling


@dataclass(frozen=True)
class ScalingParams:
    feature_names: tuple[str, ...]
    x_min: np.ndarray
    x_max: np.ndarray
    y_min: float
    y_max: float
    fitted_on_training: bool = True

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "x_min": [format(float(v), ".17g") for v in self.x_min],
            "x_max": [format(float(v), ".17g") for v in self.x_max],
            "y_min": format(self.y_min, ".17g"),
            "y_max": format(self.y_max, ".17g"),
            "fitted_on_training": self.fitted_on_training,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        return cls(
            tuple(d["feature_names"]),
            np.array([float(v) for v in d["x_min"]]),
            np.array([float(v) for v in d["x_max"]]),
            float(d["y_min"]),
            float(d["y_max"]),
            bool(d["fitted_on_training"]),
        )


def _range(col_min, col_max):
    # constant columns get width 1 so they scale to exactly 0
    return np.where(col_max > col_min, col_max, col_min + 1.0)


def fit_scaling(samples: SampleSet) -> ScalingParams:
    if len(samples) < 2:
        raise InsufficientDataError(f"scaling needs at least 2 training samples, got {len(samples)}")
    x_min = samples.X.min(axis=0)
    x_max = _range(x_min, samples.X.max(axis=0))
    y_min = float(samples.y.min())
    y_max = float(_range(np.float64(y_min), np.float64(samples.y.max())))
    return ScalingParams(samples.feature_names, x_min, x_max, y_min, y_max)


def scale_features(params: ScalingParams, X: np.ndarray) -> np.ndarray:
    return (X - params.x_min) / (params.x_max - params.x_min)


def scale_target(params: ScalingParams, y):
    return (np.asarray(y, dtype=float) - params.y_min) / (params.y_max - params.y_min)


def invert_target(params: ScalingParams, y_scaled):
    return np.asarray(y_scaled, dtype=float) * (params.y_max - params.y_min) + params.y_min


def unscale_features(params: ScalingParams, X_scaled: np.ndarray) -> np.ndarray:
    return X_scaled * (params.x_max - params.x_min) + params.x_min


def apply_scaling(params: ScalingParams, samples: SampleSet) -> SampleSet:
    """Map features and target to [0, 1] by the training ranges; no clamping."""
    if tuple(samples.feature_names) != tuple(params.feature_names):
        raise ValueError("feature ordering does not match the fitted scaling parameters")
    return samples.with_X(scale_features(params, samples.X), scale_target(params, samples.y))
