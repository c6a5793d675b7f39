import datetime as dt
import itertools

import pytest

from rsiforecast.market_data import SimConfig, synthesize
from rsiforecast.rsi import compute_rsi_series

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_force_wavg(bids, demand):
    """Cheapest way to buy ``demand`` by enumerating every fully-accepted subset plus one marginal bid.

    Price-ordered acceptance is the minimum-cost dispatch, so its weighted
    average price equals min cost / demand. Returns None when infeasible.
    """
    n = len(bids)
    best = None
    for size in range(n + 1):
        for full in itertools.combinations(range(n), size):
            qty = sum(bids[k][1] for k in full)
            cost = sum(bids[k][0] * bids[k][1] for k in full)
            if qty == demand:
                best = cost if best is None else min(best, cost)
            for m in range(n):
                if m in full:
                    continue
                if qty < demand <= qty + bids[m][1]:
                    c = cost + (demand - qty) * bids[m][0]
                    best = c if best is None else min(best, c)
    return None if best is None else best / demand


@pytest.fixture(scope="session")
def small_market():
    """Fifty simulated days with the default fleet."""
    records = synthesize(SimConfig(days=50, seed=7))
    return records, compute_rsi_series(records)


@pytest.fixture(scope="session")
def default_market():
    records = synthesize(SimConfig())
    return records, compute_rsi_series(records)


def day_range(start, n):
    return [start + dt.timedelta(days=i) for i in range(n)]
