"""Hourly market records: CSV ingestion and a seeded pay-as-bid market simulator."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, GapError, ShortageError
from .rsi import rsi_per_generator

HOURS_PER_DAY = 24
MIN_SIM_DAYS = 35


def saturday_first_weekday(date: dt.date) -> int:
    """Weekday index with Saturday = 0 ... Friday = 6."""
    return (date.weekday() + 2) % 7


@dataclass(frozen=True)
class HourlyRecord:
    date: dt.date
    hour: int
    load: float
    wavg_price: float
    capacities: tuple[float, ...]

    def __post_init__(self):
        if not 1 <= self.hour <= HOURS_PER_DAY:
            raise DataError(f"hour must lie in 1..24, got {self.hour}")
        if not self.load > 0:
            raise DataError(f"load must be positive, got {self.load}")
        if not self.wavg_price >= 0:
            raise DataError(f"wavg_price must be non-negative, got {self.wavg_price}")
        if not self.capacities:
            raise DataError("at least one generator capacity is required")
        if any(not c >= 0 for c in self.capacities):
            raise DataError("capacities must be non-negative")

    @property
    def key(self) -> tuple[dt.date, int]:
        return self.date, self.hour


def _hour_after(key: tuple[dt.date, int]) -> tuple[dt.date, int]:
    date, hour = key
    if hour == HOURS_PER_DAY:
        return date + dt.timedelta(days=1), 1
    return date, hour + 1


@dataclass(frozen=True)
class MarketDataset:
    """Chronologically ordered, gap-free hourly records with a fixed fleet size."""

    records: tuple[HourlyRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise DataError("dataset is empty")
        n_gen = len(self.records[0].capacities)
        seen = set()
        for rec in self.records:
            if len(rec.capacities) != n_gen:
                raise DataError(
                    f"{rec.date.isoformat()} hour {rec.hour}: {len(rec.capacities)} "
                    f"capacities, expected {n_gen}"
                )
            if rec.key in seen:
                raise GapError(f"duplicate record for {rec.date.isoformat()} hour {rec.hour}")
            seen.add(rec.key)
        for prev, cur in zip(self.records, self.records[1:]):
            expected = _hour_after(prev.key)
            if cur.key != expected:
                if cur.key < prev.key:
                    raise DataError("records are not in chronological order")
                raise GapError(f"missing record for {expected[0].isoformat()} hour {expected[1]}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def n_generators(self) -> int:
        return len(self.records[0].capacities)

    @property
    def dates(self) -> list[dt.date]:
        return [r.date for r in self.records]

    @property
    def hours(self) -> np.ndarray:
        return np.array([r.hour for r in self.records], dtype=int)

    @property
    def loads(self) -> np.ndarray:
        return np.array([r.load for r in self.records], dtype=float)

    @property
    def prices(self) -> np.ndarray:
        return np.array([r.wavg_price for r in self.records], dtype=float)

    @property
    def capacity_matrix(self) -> np.ndarray:
        return np.array([r.capacities for r in self.records], dtype=float)

    @property
    def n_days(self) -> int:
        return (self.records[-1].date - self.records[0].date).days + 1


# --------------------------------------------------------------------------
# CSV I/O

BASE_COLUMNS = ("date", "hour", "load", "wavg_price")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(dataset: MarketDataset, path) -> Path:
    path = Path(path)
    caps = [f"cap_{g + 1}" for g in range(dataset.n_generators)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(BASE_COLUMNS) + caps)
        for r in dataset:
            writer.writerow(
                [r.date.isoformat(), str(r.hour), _fmt(r.load), _fmt(r.wavg_price)]
                + [_fmt(c) for c in r.capacities]
            )
    return path


def _parse_row(row: list[str], header: list[str], lineno: int) -> HourlyRecord:
    if len(row) != len(header):
        raise DataError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
    values = dict(zip(header, row))
    try:
        date = dt.date.fromisoformat(values["date"].strip())
    except ValueError:
        raise DataError(f"row {lineno}: field 'date' is not an ISO-8601 date: {values['date']!r}")
    try:
        hour = int(values["hour"])
    except ValueError:
        raise DataError(f"row {lineno}: field 'hour' is not an integer: {values['hour']!r}")
    if not 1 <= hour <= HOURS_PER_DAY:
        raise DataError(f"row {lineno}: field 'hour' out of range 1..24: {hour}")

    def number(name):
        try:
            x = float(values[name])
        except ValueError:
            raise DataError(f"row {lineno}: field '{name}' is not a number: {values[name]!r}")
        if not math.isfinite(x):
            raise DataError(f"row {lineno}: field '{name}' is not finite")
        return x

    load = number("load")
    price = number("wavg_price")
    caps = tuple(number(h) for h in header[len(BASE_COLUMNS):])
    if load <= 0:
        raise DataError(f"row {lineno}: field 'load' must be positive: {load}")
    if price < 0:
        raise DataError(f"row {lineno}: field 'wavg_price' must be non-negative: {price}")
    for name, c in zip(header[len(BASE_COLUMNS):], caps):
        if c < 0:
            raise DataError(f"row {lineno}: field '{name}' must be non-negative: {c}")
    return HourlyRecord(date, hour, load, price, caps)


def load_csv(path) -> MarketDataset:
    """Read ``date,hour,load,wavg_price,cap_1,...,cap_G`` into a validated dataset.

    Rows may appear in any order; they are sorted by (date, hour) and must then
    cover a contiguous hourly span without duplicates.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file")
        if tuple(header[:4]) != BASE_COLUMNS or len(header) < 5:
            raise DataError(
                f"{path}: header must be date,hour,load,wavg_price,cap_1,...; got {','.join(header)}"
            )
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            records.append(_parse_row(row, header, lineno))
    if not records:
        raise DataError(f"{path}: no data rows")
    records.sort(key=lambda r: r.key)
    return MarketDataset(tuple(records))


# --------------------------------------------------------------------------
# Pay-as-bid clearing


@dataclass(frozen=True)
class ClearingResult:
    wavg_price: float
    accepted: tuple[float, ...]  # in input bid order
    clearing_price: float  # price of the marginal accepted bid


def clear_pay_as_bid(bids: Sequence[tuple[float, float]], demand: float) -> ClearingResult:
    """Accept bids cheapest first until demand is met; every winner is paid its own bid.

    The marginal bid is partially accepted. Equal prices keep input order.
    Raises ShortageError (carrying the deficit) if total quantity < demand.
    """
    if not demand > 0:
        raise ValueError(f"demand must be positive, got {demand}")
    for price, qty in bids:
        if not qty > 0 or not price >= 0:
            raise ValueError(f"invalid bid (price={price}, quantity={qty})")
    total = math.fsum(q for _, q in bids)
    if total < demand:
        raise ShortageError(demand - total)

    order = sorted(range(len(bids)), key=lambda k: bids[k][0])
    accepted = [0.0] * len(bids)
    remaining = demand
    marginal = bids[order[0]][0]
    for k in order:
        if remaining <= 0:
            break
        price, qty = bids[k]
        take = qty if qty < remaining else remaining
        accepted[k] = take
        remaining -= take
        marginal = price
    revenue = math.fsum(accepted[k] * bids[k][0] for k in range(len(bids)))
    return ClearingResult(revenue / demand, tuple(accepted), marginal)


# --------------------------------------------------------------------------
# Simulator


@dataclass(frozen=True)
class GeneratorSpec:
    capacity: float
    marginal_cost: float
    outage_prob: float = 0.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise ConfigError(f"generator capacity must be positive, got {self.capacity}")
        if not self.marginal_cost >= 0:
            raise ConfigError(f"marginal_cost must be non-negative, got {self.marginal_cost}")
        if not 0 <= self.outage_prob <= 1:
            raise ConfigError(f"outage_prob must lie in [0, 1], got {self.outage_prob}")


DEFAULT_DAILY_SHAPE = (
    0.78, 0.74, 0.72, 0.71, 0.72, 0.76, 0.82, 0.88, 0.92, 0.94, 0.95, 0.96,
    0.96, 0.95, 0.94, 0.93, 0.94, 0.98, 1.00, 1.00, 0.99, 0.96, 0.90, 0.84,
)
# Saturday-first: Sat, Sun, Mon, Tue, Wed, Thu, Fri
DEFAULT_WEEKLY_SHAPE = (0.97, 1.0, 1.0, 1.0, 1.0, 0.93, 0.86)


def default_generators() -> list[GeneratorSpec]:
    """A fleet with one dominant unit, a cheap mid-merit tier and unreliable peakers."""
    return [
        GeneratorSpec(3000.0, 40.0, 0.0),
        GeneratorSpec(900.0, 30.0, 0.0),
        GeneratorSpec(900.0, 34.0, 0.0),
        GeneratorSpec(900.0, 38.0, 0.0),
        GeneratorSpec(900.0, 44.0, 0.0),
        GeneratorSpec(900.0, 48.0, 0.0),
        GeneratorSpec(700.0, 70.0, 0.2),
        GeneratorSpec(700.0, 72.0, 0.2),
        GeneratorSpec(700.0, 74.0, 0.2),
        GeneratorSpec(700.0, 76.0, 0.2),
    ]


@dataclass(frozen=True)
class SimConfig:
    generators: tuple[GeneratorSpec, ...] = field(default_factory=lambda: tuple(default_generators()))
    days: int = 140
    base_load: float = 7000.0
    daily_shape: tuple[float, ...] = DEFAULT_DAILY_SHAPE
    weekly_shape: tuple[float, ...] = DEFAULT_WEEKLY_SHAPE
    load_noise_sd: float = 0.02
    pivotal_markup: float = 2.0
    price_cap: float = 150.0
    seed: int = 42
    # Probability that a unit's availability state carries over to the next hour
    # beyond chance; 0 gives independent hourly outages.
    outage_persistence: float = 0.97
    start_date: dt.date = dt.date(2013, 1, 5)

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "daily_shape", tuple(float(x) for x in self.daily_shape))
        object.__setattr__(self, "weekly_shape", tuple(float(x) for x in self.weekly_shape))
        if not self.generators:
            raise ConfigError("at least one generator is required")
        if self.days < MIN_SIM_DAYS:
            raise ConfigError(f"days must be >= {MIN_SIM_DAYS} (28-day lags plus a test span), got {self.days}")
        if not self.base_load > 0:
            raise ConfigError("base_load must be positive")
        if len(self.daily_shape) != HOURS_PER_DAY:
            raise ConfigError(f"daily_shape needs 24 multipliers, got {len(self.daily_shape)}")
        if len(self.weekly_shape) != 7:
            raise ConfigError(f"weekly_shape needs 7 multipliers, got {len(self.weekly_shape)}")
        if any(not m > 0 for m in self.daily_shape + self.weekly_shape):
            raise ConfigError("load shape multipliers must be positive")
        if not self.load_noise_sd >= 0:
            raise ConfigError("load_noise_sd must be non-negative")
        if not self.pivotal_markup >= 1:
            raise ConfigError(f"pivotal_markup must be >= 1, got {self.pivotal_markup}")
        if not self.price_cap > 0:
            raise ConfigError("price_cap must be positive")
        if not 0 <= self.outage_persistence < 1:
            raise ConfigError("outage_persistence must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "generators": [
                {"capacity": g.capacity, "marginal_cost": g.marginal_cost, "outage_prob": g.outage_prob}
                for g in self.generators
            ],
            "days": self.days,
            "base_load": self.base_load,
            "daily_shape": list(self.daily_shape),
            "weekly_shape": list(self.weekly_shape),
            "load_noise_sd": self.load_noise_sd,
            "pivotal_markup": self.pivotal_markup,
            "price_cap": self.price_cap,
            "seed": self.seed,
            "outage_persistence": self.outage_persistence,
            "start_date": self.start_date.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown simulator settings: {', '.join(sorted(unknown))}")
        if "generators" in d:
            try:
                d["generators"] = tuple(GeneratorSpec(**g) for g in d["generators"])
            except TypeError as exc:
                raise ConfigError(f"bad generator entry: {exc}")
        if "start_date" in d and isinstance(d["start_date"], str):
            d["start_date"] = dt.date.fromisoformat(d["start_date"])
        return cls(**d)


def _truncated_normal(rng: np.random.Generator, n: int, limit: float = 3.0) -> np.ndarray:
    z = rng.standard_normal(n)
    bad = np.abs(z) > limit
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > limit
    return z


def _outage_states(rng: np.random.Generator, n_hours: int, probs: np.ndarray, persistence: float) -> np.ndarray:
    """Two-state availability chain per unit with stationary outage probability ``probs``."""
    u = rng.random((n_hours, len(probs)))
    stay_out = probs + persistence * (1.0 - probs)
    go_out = probs * (1.0 - persistence)
    out = np.empty((n_hours, len(probs)), dtype=bool)
    out[0] = u[0] < probs
    for t in range(1, n_hours):
        out[t] = np.where(out[t - 1], u[t] < stay_out, u[t] < go_out)
    return out


def hourly_bids(
    capacities: Sequence[float],
    costs: Sequence[float],
    demand: float,
    pivotal_markup: float,
    price_cap: float,
) -> list[tuple[float, float]]:
    """Bids of the available units for one hour; pivotal units mark up their cost."""
    bids = []
    for i, (cap, cost) in enumerate(zip(capacities, costs)):
        if cap <= 0:
            continue
        if rsi_per_generator(capacities, demand, i) < 100.0:
            price = min(cost * pivotal_markup, price_cap)
        else:
            price = cost
        bids.append((price, cap))
    return bids


def synthesize(config: SimConfig) -> MarketDataset:
    """Generate ``config.days`` of hourly records, deterministic in ``config.seed``.

    Shortage hours buy the deficit at ``price_cap`` instead of failing.
    """
    rng = np.random.default_rng(config.seed)
    n_hours = config.days * HOURS_PER_DAY
    noise = _truncated_normal(rng, n_hours) * config.load_noise_sd
    probs = np.array([g.outage_prob for g in config.generators], dtype=float)
    out = _outage_states(rng, n_hours, probs, config.outage_persistence)
    nameplate = np.array([g.capacity for g in config.generators], dtype=float)
    costs = [g.marginal_cost for g in config.generators]

    records = []
    for k in range(n_hours):
        day, hour_idx = divmod(k, HOURS_PER_DAY)
        date = config.start_date + dt.timedelta(days=day)
        load = (
            config.base_load
            * config.daily_shape[hour_idx]
            * config.weekly_shape[saturday_first_weekday(date)]
            * (1.0 + noise[k])
        )
        caps = tuple(float(c) for c in np.where(out[k], 0.0, nameplate))
        bids = hourly_bids(caps, costs, load, config.pivotal_markup, config.price_cap)
        offered = math.fsum(q for _, q in bids)
        if offered < load:
            bids.append((config.price_cap, load - offered))
        price = clear_pay_as_bid(bids, load).wavg_price
        records.append(HourlyRecord(date, hour_idx + 1, float(load), float(price), caps))
    return MarketDataset(tuple(records))


def from_records(records: Iterable[HourlyRecord]) -> MarketDataset:
    return MarketDataset(tuple(sorted(records, key=lambda r: r.key)))
