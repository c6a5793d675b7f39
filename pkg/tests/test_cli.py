import csv
import datetime as dt
import json

import pytest

from conftest import day_range
from rsiforecast.cli import main, sha256
from rsiforecast.features import PEAK_HOURS
from rsiforecast.market_data import HourlyRecord, MarketDataset, load_csv, write_csv

FAST = ["--hidden", "3", "--max-epochs", "10"]


@pytest.fixture(scope="module")
def market_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--days", "42", "--seed", "5", "--out-dir", str(out)]) == 0
    return out / "market.csv"


def _manifest(out, command):
    return json.loads((out / f"manifest_{command}.json").read_text())


def test_synth_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--days", "35", "--seed", "3", "--out-dir", str(out)]) == 0
    assert sha256(a / "market.csv") == sha256(b / "market.csv")
    man = _manifest(a, "synth")
    assert man["seeds"] == [3] and man["config"]["sim"]["days"] == 35
    assert list(man["outputs"].values()) == [sha256(a / "market.csv")]


def test_synth_rejects_short_span(tmp_path, capsys):
    assert main(["synth", "--days", "10", "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ConfigError:") and "\n" not in err


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"solver": {}}))
    assert main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "unknown config sections" in capsys.readouterr().err


def test_missing_data_file(tmp_path, capsys):
    assert main(["rsi", "--data", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error: ")


def _engineered_csv(path, scarce_every=None):
    """Ten 100 MW units under a 500 MW load (RSI 180) with optional scarce hours."""
    recs = []
    for d in day_range(dt.date(2013, 1, 5), 2):
        for h in range(1, 25):
            caps = (100.0,) * 10
            if scarce_every and h % scarce_every == 0:
                caps = (600.0,) + (100.0,) * 4 + (0.0,) * 5  # 400 MW without the big unit: RSI 80
            recs.append(HourlyRecord(d, h, 500.0, 40.0, caps))
    return write_csv(MarketDataset(tuple(recs)), path)


def test_rsi_competitive_fleet(tmp_path):
    data = _engineered_csv(tmp_path / "m.csv")
    assert main(["rsi", "--data", str(data), "--out-dir", str(tmp_path)]) == 0
    reports = json.loads((tmp_path / "rsi_report.json").read_text())
    assert {r["regime"] for r in reports} == {"peak", "offpeak"}
    assert all(r["share_gt_110"] == 1.0 for r in reports)


def test_rsi_flags_scarce_hours(tmp_path):
    data = _engineered_csv(tmp_path / "m.csv", scarce_every=6)
    assert main(["rsi", "--data", str(data), "--regime", "custom:6,12", "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "rsi.csv")))
    scarce = [r for r in rows if int(r["hour"]) % 6 == 0]
    assert all(r["pivotal"] == "1" and float(r["rsi"]) == pytest.approx(80.0) for r in scarce)
    report = json.loads((tmp_path / "rsi_report.json").read_text())[0]
    assert report["share_lt_100"] == 1.0


def test_empty_custom_regime_is_config_error(tmp_path, market_csv):
    assert main(["rsi", "--data", str(market_csv), "--regime", "custom:", "--out-dir", str(tmp_path)]) == 2


def test_train_without_rsi(tmp_path, market_csv):
    assert main(["train", "--data", str(market_csv), "--no-rsi", *FAST, "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "train_summary.json").read_text())
    assert not summary["include_rsi"]
    assert not any(n.startswith("RSI") for n in summary["feature_names"])
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["feature_names"] == summary["feature_names"]
    header = (tmp_path / "features.csv").read_text().splitlines()[0]
    assert "RSI" not in header


def test_train_is_deterministic(tmp_path, market_csv):
    digests = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--data", str(market_csv), "--seed", "4", *FAST, "--out-dir", str(out)]) == 0
        digests.append(sha256(out / "model.json"))
    assert digests[0] == digests[1]


def test_train_pattern_and_regime_sample_count(tmp_path, market_csv):
    assert main(["train", "--data", str(market_csv), "--pattern", "3", "--regime", "peak", *FAST,
                 "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "train_summary.json").read_text())
    records = load_csv(market_csv)
    first = records[0].date + dt.timedelta(days=28)
    expected = sum(1 for r in records if r.date >= first and r.date.weekday() == 4 and r.hour in PEAK_HOURS)
    assert summary["n_samples"] == expected > 0
    assert summary["n_train"] + summary["n_test"] == expected


def test_ablate_grid_and_consistency_with_train(tmp_path, market_csv):
    ab, tr = tmp_path / "ab", tmp_path / "tr"
    assert main(["ablate", "--data", str(market_csv), "--seeds", "1", "--pattern", "all",
                 "--regime", "peak", "--regime", "offpeak", *FAST, "--out-dir", str(ab)]) == 0
    report = json.loads((ab / "ablation.json").read_text())
    assert [(r["pattern"], r["regime"]) for r in report["rows"]] == [("all", "peak"), ("all", "offpeak")]
    assert (ab / "plot_data" / "trace_all_peak_with_rsi.csv").exists()
    assert main(["train", "--data", str(market_csv), "--seed", "0", *FAST, "--out-dir", str(tr)]) == 0
    summary = json.loads((tr / "train_summary.json").read_text())
    assert report["rows"][0]["per_seed_with"][0] == summary["test_rmse_scaled"]


def test_correlate_outputs(tmp_path, market_csv):
    assert main(["correlate", "--data", str(market_csv), "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "correlations.csv")))
    assert len(rows) == 6
    assert all(-1 <= float(r["pearson_r"]) <= 1 for r in rows)
    assert main(["correlate", "--data", str(market_csv), "--daily", "--out-dir", str(tmp_path)]) == 0
    daily = json.loads((tmp_path / "correlations.json").read_text())
    assert daily["daily"] and daily["n"]["peak"] == 42


def test_report_renders_figures(tmp_path, market_csv):
    data = str(market_csv)
    for cmd in (["rsi"], ["correlate"], ["train", *FAST]):
        assert main([cmd[0], "--data", data, *cmd[1:], "--out-dir", str(tmp_path)]) == 0
    assert main(["report", "--out-dir", str(tmp_path)]) == 0
    pngs = sorted(p.name for p in (tmp_path / "figures").glob("*.png"))
    assert {"rsi_series.png", "correlations.png", "trace.png", "predictions.png"} <= set(pngs)
    for p in (tmp_path / "figures").glob("*.png"):
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_report_with_nothing_to_do(tmp_path):
    assert main(["report", "--out-dir", str(tmp_path)]) == 1


def test_replay_reproduces_outputs(tmp_path, market_csv):
    assert main(["train", "--data", str(market_csv), *FAST, "--out-dir", str(tmp_path)]) == 0
    before = _manifest(tmp_path, "train")["outputs"]
    (tmp_path / "model.json").unlink()
    assert main(["replay", str(tmp_path / "manifest_train.json")]) == 0
    assert _manifest(tmp_path, "train")["outputs"] == before
