"""Accuracy metrics, correlation sensitivity analysis and the with/without-RSI ablation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, CorrelationError, InsufficientDataError, RsiForecastError
from .features import (
    OFFPEAK_HOURS,
    PEAK_HOURS,
    FeatureSpec,
    SampleSet,
    apply_scaling,
    build_dataset,
    fingerprint,
    fit_scaling,
    invert_target,
)
from .mlp import MlpModel, TrainConfig, TrainingTrace, forward, select_hidden_size

DEFAULT_REGIMES = {"peak": PEAK_HOURS, "offpeak": OFFPEAK_HOURS}
PATTERN_LABELS = {"all": "All days", "0": "Sat.", "1": "Sun. to Wed.", "2": "Thu.", "3": "Fri."}


def _pair(y_true, y_pred):
    a = np.asarray(y_true, dtype=float).reshape(-1)
    b = np.asarray(y_pred, dtype=float).reshape(-1)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty series")
    return a, b


def mse(y_true, y_pred) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.mean((a - b) ** 2))


def rmse(y_true, y_pred) -> float:
    return math.sqrt(mse(y_true, y_pred))


def pearson(x, y) -> float:
    a = np.asarray(x, dtype=float).reshape(-1)
    b = np.asarray(y, dtype=float).reshape(-1)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise CorrelationError("need at least 2 points for a correlation")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if sa == 0 or sb == 0:
        raise CorrelationError("correlation undefined for a constant series")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def improvement_pct(rmse_with: float, rmse_without: float) -> float:
    """Relative RMSE reduction from adding RSI features, in percent of the no-RSI error."""
    if rmse_without <= 0:
        return math.nan
    return 100.0 * (rmse_without - rmse_with) / rmse_without


def sign_test(values: Iterable[float]) -> float:
    """Two-sided sign test p-value for a zero median; exact zeros are dropped."""
    v = np.asarray(list(values), dtype=float)
    v = v[v != 0]
    if len(v) == 0:
        return 1.0
    k = int(np.count_nonzero(v > 0))
    return float(stats.binomtest(k, len(v), 0.5, alternative="two-sided").pvalue)


# --------------------------------------------------------------------------
# Sensitivity analysis

PAIRS = (("price", "load"), ("price", "rsi"), ("load", "rsi"))


@dataclass(frozen=True)
class SensitivityReport:
    correlations: dict  # regime -> {"price~load": r, ...}
    n_points: dict  # regime -> count

    def rows(self) -> list[dict]:
        out = []
        for regime, corr in self.correlations.items():
            for pair, r in corr.items():
                out.append({"regime": regime, "pair": pair, "pearson_r": r, "n": self.n_points[regime]})
        return out


def sensitivity_report(records, rsi, regimes: Mapping[str, Iterable[int]] = DEFAULT_REGIMES, daily: bool = False) -> SensitivityReport:
    """Pearson r of (price, load), (price, rsi), (load, rsi) within each regime.

    With ``daily=True`` every series is first averaged over the regime hours of each day.
    """
    if [p.key for p in rsi.points] != [r.key for r in records.records]:
        raise ValueError("RSI series is not aligned with the records")
    hours = records.hours
    dates = np.array([r.date.toordinal() for r in records.records])
    base = {"price": records.prices, "load": records.loads, "rsi": rsi.values}
    correlations, counts = {}, {}
    for name, regime_hours in regimes.items():
        mask = np.isin(hours, list(regime_hours))
        if mask.sum() < 2:
            raise CorrelationError(f"regime '{name}' has fewer than 2 hours")
        series = {k: v[mask] for k, v in base.items()}
        if daily:
            days, inverse = np.unique(dates[mask], return_inverse=True)
            counts_per_day = np.bincount(inverse)
            series = {k: np.bincount(inverse, weights=v) / counts_per_day for k, v in series.items()}
        correlations[name] = {f"{a}~{b}": pearson(series[a], series[b]) for a, b in PAIRS}
        counts[name] = int(len(series["price"]))
    return SensitivityReport(correlations, counts)


# --------------------------------------------------------------------------
# Training + evaluation of one feature set


@dataclass
class FitResult:
    model: MlpModel
    trace: TrainingTrace
    n_hidden: int
    hidden_report: list
    test_keys: tuple
    y_test: np.ndarray  # scaled
    y_pred: np.ndarray  # scaled
    rmse_scaled: float
    rmse_price: float
    n_train: int
    n_test: int


def fit_and_evaluate(samples: SampleSet, train_config: TrainConfig, train_fraction: float = 0.8) -> FitResult:
    """Chronological split, scaling fitted on the training rows, hidden-size search, test RMSE."""
    if len(samples) < 4:
        raise InsufficientDataError(f"only {len(samples)} samples; cannot split into train and test")
    train, test = samples.split_chronological(train_fraction)
    params = fit_scaling(train)
    train_s, test_s = apply_scaling(params, train), apply_scaling(params, test)
    n_hidden, report = select_hidden_size(train_s.X, train_s.y, train_config)
    best = next(r for r in report if r.n_hidden == n_hidden)
    model = best.model
    model.scaling = params
    model.feature_names = tuple(samples.feature_names)
    model.fingerprint = fingerprint(samples.feature_names)
    model.seed = train_config.seed
    pred = forward(model, test_s.X)
    return FitResult(
        model=model,
        trace=best.trace,
        n_hidden=n_hidden,
        hidden_report=[(r.n_hidden, r.val_mse) for r in report],
        test_keys=test_s.keys,
        y_test=test_s.y,
        y_pred=pred,
        rmse_scaled=rmse(test_s.y, pred),
        rmse_price=rmse(invert_target(params, test_s.y), invert_target(params, pred)),
        n_train=len(train),
        n_test=len(test),
    )


# --------------------------------------------------------------------------
# Ablation


def parse_pattern(text) -> str:
    text = str(text).strip()
    if text not in PATTERN_LABELS:
        raise ConfigError(f"pattern must be one of all, 0, 1, 2, 3; got {text!r}")
    return text


def pattern_filter(pattern: str):
    return None if pattern == "all" else {int(pattern)}


@dataclass(frozen=True)
class AblationConfig:
    patterns: tuple[str, ...] = ("all", "0", "1", "2", "3")
    regimes: tuple[str, ...] = ("peak", "offpeak")
    seeds: tuple[int, ...] = tuple(range(10))
    train_fraction: float = 0.8
    report_price_units: bool = False

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(parse_pattern(p) for p in self.patterns))
        object.__setattr__(self, "regimes", tuple(self.regimes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "patterns": list(self.patterns),
            "regimes": list(self.regimes),
            "seeds": list(self.seeds),
            "train_fraction": self.train_fraction,
            "report_price_units": self.report_price_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown ablation settings: {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class AblationRow:
    pattern: str
    regime: str
    rmse_with_rsi: float = math.nan
    rmse_without_rsi: float = math.nan
    improvement_pct: float = math.nan
    n_seeds: int = 0
    per_seed_with: list = field(default_factory=list)
    per_seed_without: list = field(default_factory=list)
    per_seed_improvement: list = field(default_factory=list)
    rmse_price_with: list = field(default_factory=list)
    rmse_price_without: list = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    available: bool = True
    note: str = ""

    @property
    def sign_test_p(self) -> float:
        return sign_test(self.per_seed_improvement)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["sign_test_p"] = self.sign_test_p if self.available else None
        return d


@dataclass
class AblationReport:
    rows: list[AblationRow]
    config: dict = field(default_factory=dict)

    def cell(self, pattern, regime) -> AblationRow:
        for row in self.rows:
            if row.pattern == str(pattern) and row.regime == regime:
                return row
        raise KeyError((pattern, regime))

    def mean_improvement(self, regime: str, patterns: Sequence[str] = ("0", "1", "2", "3")) -> float:
        vals = [r.improvement_pct for r in self.rows if r.regime == regime and r.pattern in patterns and r.available]
        return float(np.mean(vals)) if vals else math.nan

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": [_jsonable(r.to_dict()) for r in self.rows]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def ablation_pair(records, rsi, spec: FeatureSpec, regime_hours, pattern: str):
    """The with-RSI and without-RSI sample sets of one cell; only the RSI columns differ."""
    pats = pattern_filter(pattern)
    with_rsi = build_dataset(records, rsi, spec.with_rsi(True), regime_hours, patterns=pats)
    without = build_dataset(records, rsi, spec.with_rsi(False), regime_hours, patterns=pats)
    if with_rsi.keys != without.keys or not np.array_equal(with_rsi.y, without.y):
        raise AssertionError("ablation datasets differ in keys or targets")
    shared = [with_rsi.feature_names.index(n) for n in without.feature_names]
    if not np.array_equal(with_rsi.X[:, shared], without.X):
        raise AssertionError("ablation datasets differ outside the RSI columns")
    return with_rsi, without


def run_ablation(
    records,
    rsi,
    config: AblationConfig = AblationConfig(),
    spec: FeatureSpec = FeatureSpec(),
    train_config: TrainConfig = TrainConfig(),
    regimes: Mapping[str, Iterable[int]] | None = None,
    on_fit=None,
) -> AblationReport:
    """Test RMSE with and without RSI features for every (pattern, regime) cell and seed.

    Cells without enough samples are marked unavailable. ``on_fit`` is called as
    ``on_fit(pattern, regime, seed, variant, FitResult)`` after every training run.
    """
    regimes = dict(regimes) if regimes is not None else {r: DEFAULT_REGIMES[r] for r in config.regimes}
    rows = []
    for pattern in config.patterns:
        for regime in config.regimes:
            row = AblationRow(pattern, regime)
            rows.append(row)
            try:
                with_rsi, without = ablation_pair(records, rsi, spec, regimes[regime], pattern)
                for seed in config.seeds:
                    tc = replace(train_config, seed=seed)
                    fit_w = fit_and_evaluate(with_rsi, tc, config.train_fraction)
                    fit_wo = fit_and_evaluate(without, tc, config.train_fraction)
                    if on_fit is not None:
                        on_fit(pattern, regime, seed, "with_rsi", fit_w)
                        on_fit(pattern, regime, seed, "without_rsi", fit_wo)
                    row.per_seed_with.append(fit_w.rmse_scaled)
                    row.per_seed_without.append(fit_wo.rmse_scaled)
                    row.per_seed_improvement.append(improvement_pct(fit_w.rmse_scaled, fit_wo.rmse_scaled))
                    row.rmse_price_with.append(fit_w.rmse_price)
                    row.rmse_price_without.append(fit_wo.rmse_price)
                    row.n_train, row.n_test = fit_w.n_train, fit_w.n_test
            except RsiForecastError as exc:
                row.available = False
                row.note = str(exc)
                row.per_seed_with.clear()
                row.per_seed_without.clear()
                row.per_seed_improvement.clear()
                row.rmse_price_with.clear()
                row.rmse_price_without.clear()
                continue
            row.n_seeds = len(config.seeds)
            row.rmse_with_rsi = float(np.mean(row.per_seed_with))
            row.rmse_without_rsi = float(np.mean(row.per_seed_without))
            row.improvement_pct = improvement_pct(row.rmse_with_rsi, row.rmse_without_rsi)
    return AblationReport(rows, {"ablation": config.to_dict(), "features": spec.to_dict(), "train": train_config.to_dict()})


def format_ablation_table(report: AblationReport, price_units: bool = False) -> str:
    """Text table of mean test RMSE (with / without RSI) and improvement per cell."""
    patterns = list(dict.fromkeys(r.pattern for r in report.rows))
    regimes = list(dict.fromkeys(r.regime for r in report.rows))
    width = max([11] + [len(g) + 6 for g in regimes])
    head = f"{'Patterns':<22}" + "".join(f"{g + ' with':>{width}}{g + ' w/o':>{width}}" for g in regimes)
    lines = [head]
    for p in patterns:
        cells = []
        for regime in regimes:
            try:
                row = report.cell(p, regime)
            except KeyError:
                cells += ["", ""]
                continue
            if not row.available:
                cells += ["n/a", "n/a"]
            elif price_units:
                cells += [f"{np.mean(row.rmse_price_with):.3f}", f"{np.mean(row.rmse_price_without):.3f}"]
            else:
                cells += [f"{row.rmse_with_rsi:.4f}", f"{row.rmse_without_rsi:.4f}"]
        lines.append(f"{PATTERN_LABELS[p]:<22}" + "".join(f"{c:>{width}}" for c in cells))
    lines.append("")
    lines.append(f"{'Improvement %':<22}" + "".join(f"{g:>{width}}" for g in regimes))
    for p in patterns:
        vals = []
        for regime in regimes:
            try:
                row = report.cell(p, regime)
                vals.append(f"{row.improvement_pct:.1f}" if row.available else "n/a")
            except KeyError:
                vals.append("")
        lines.append(f"{PATTERN_LABELS[p]:<22}" + "".join(f"{v:>{width}}" for v in vals))
    return "\n".join(lines)


ABLATION_CSV_COLUMNS = (
    "pattern", "regime", "available", "n_seeds", "rmse_with_rsi", "rmse_without_rsi",
    "improvement_pct", "sign_test_p", "n_train", "n_test",
)


def write_ablation_csv(report: AblationReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ABLATION_CSV_COLUMNS)
        for row in report.rows:
            d = row.to_dict()
            writer.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c])
                             for c in ABLATION_CSV_COLUMNS])
    return path


def write_ablation_json(report: AblationReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_ablation_json(path) -> AblationReport:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = []
    for rd in d["rows"]:
        rd = dict(rd)
        rd.pop("sign_test_p", None)
        for k in ("rmse_with_rsi", "rmse_without_rsi", "improvement_pct"):
            if rd.get(k) is None:
                rd[k] = math.nan
        rows.append(AblationRow(**rd))
    return AblationReport(rows, d.get("config", {}))


def write_trace_csv(trace: TrainingTrace, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "val_mse", "mu"])
        for e in trace.epochs:
            writer.writerow([e["epoch"], repr(e["train_mse"]), "" if e["val_mse"] is None else repr(e["val_mse"]), repr(e["mu"])])
    return path


def write_prediction_csv(fit: FitResult, path) -> Path:
    path = Path(path)
    params = fit.model.scaling
    actual = invert_target(params, fit.y_test)
    predicted = invert_target(params, fit.y_pred)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "hour", "actual_scaled", "predicted_scaled", "actual_price", "predicted_price"])
        for (date, hour), a, p, ap, pp in zip(fit.test_keys, fit.y_test, fit.y_pred, actual, predicted):
            writer.writerow([date.isoformat(), hour, repr(float(a)), repr(float(p)), repr(float(ap)), repr(float(pp))])
    return path
