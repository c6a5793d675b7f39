"""Command-line entry point: ``rsiforecast {synth,rsi,train,ablate,correlate,report,replay}``.

Every command writes ``manifest_<command>.json`` into ``--out-dir`` listing its
argv, configuration snapshot, input and output SHA-256 digests and seeds.
Failures print one line ``error: <ErrorClass>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, RsiForecastError
from .evaluation import (
    AblationConfig,
    DEFAULT_REGIMES,
    fit_and_evaluate,
    format_ablation_table,
    parse_pattern,
    pattern_filter,
    read_ablation_json,
    run_ablation,
    sensitivity_report,
    write_ablation_csv,
    write_ablation_json,
    write_prediction_csv,
    write_trace_csv,
)
from .features import FeatureSpec, build_dataset, parse_regime, write_feature_csv
from .market_data import SimConfig, load_csv, synthesize, write_csv
from .mlp import TrainConfig, save_model
from .rsi import compute_rsi_series, condition_report, format_condition_table, write_rsi_csv

log = logging.getLogger("rsiforecast")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(cfg) - {"sim", "features", "train", "ablation"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    return cfg


def write_manifest(out_dir: Path, command: str, argv, config: dict, inputs, outputs, seeds) -> Path:
    manifest = {
        "tool": "rsiforecast",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "seeds": list(seeds),
        "outputs": {str(p): sha256(p) for p in outputs},
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _regimes(values) -> dict:
    if not values:
        return dict(DEFAULT_REGIMES)
    out = {}
    for text in values:
        name, hours = parse_regime(text)
        if name == "custom":
            name = "custom:" + ",".join(str(h) for h in sorted(hours))
        out[name] = hours
    return out


def _feature_spec(cfg: dict, args) -> FeatureSpec:
    d = dict(cfg.get("features", {}))
    if getattr(args, "with_rsi", None) is not None:
        d["include_rsi"] = args.with_rsi
    if getattr(args, "day_encoding", None):
        d["day_encoding"] = args.day_encoding
    return FeatureSpec.from_dict(d)


def _train_config(cfg: dict, args) -> TrainConfig:
    d = dict(cfg.get("train", {}))
    if getattr(args, "hidden", None):
        d["hidden_candidates"] = args.hidden
    if getattr(args, "max_epochs", None):
        d["max_epochs"] = args.max_epochs
    return TrainConfig.from_dict(d)


def _load_market(path):
    records = load_csv(path)
    return records, compute_rsi_series(records)


# --------------------------------------------------------------------------
# Commands


def cmd_synth(args, cfg, out_dir: Path):
    d = dict(cfg.get("sim", {}))
    for flag, key in (("seed", "seed"), ("days", "days"), ("pivotal_markup", "pivotal_markup")):
        if getattr(args, flag) is not None:
            d[key] = getattr(args, flag)
    sim = SimConfig.from_dict(d)
    out = write_csv(synthesize(sim), out_dir / "market.csv")
    print(f"wrote {out} ({sim.days} days, {len(sim.generators)} generators, seed {sim.seed})")
    return {"sim": sim.to_dict()}, [], [out], [sim.seed]


def cmd_rsi(args, cfg, out_dir: Path):
    records, series = _load_market(args.data)
    regimes = _regimes(args.regime)
    reports = [condition_report(series, hours, name) for name, hours in regimes.items()]
    csv_path = write_rsi_csv(series, out_dir / "rsi.csv")
    json_path = out_dir / "rsi_report.json"
    json_path.write_text(json.dumps([r.to_dict() for r in reports], indent=1) + "\n", encoding="utf-8")
    table = format_condition_table(reports)
    table_path = out_dir / "rsi_table.txt"
    table_path.write_text(table + "\n", encoding="utf-8")
    print(table)
    regimes_cfg = {k: sorted(v) for k, v in regimes.items()}
    return {"regimes": regimes_cfg}, [args.data], [csv_path, json_path, table_path], []


def cmd_train(args, cfg, out_dir: Path):
    records, series = _load_market(args.data)
    spec = _feature_spec(cfg, args)
    tc = _train_config(cfg, args)
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    ab = AblationConfig.from_dict(cfg.get("ablation", {}))
    train_fraction = args.train_fraction if args.train_fraction is not None else ab.train_fraction
    (regime_name, hours), = _regimes([args.regime]).items()
    pattern = parse_pattern(args.pattern)
    samples = build_dataset(records, series, spec, hours, patterns=pattern_filter(pattern))
    fit = fit_and_evaluate(samples, tc, train_fraction)
    outputs = [
        save_model(fit.model, out_dir / "model.json"),
        write_trace_csv(fit.trace, out_dir / "trace.csv"),
        write_prediction_csv(fit, out_dir / "predictions.csv"),
        write_feature_csv(samples, out_dir / "features.csv"),
    ]
    summary = {
        "pattern": pattern,
        "regime": regime_name,
        "include_rsi": spec.include_rsi,
        "feature_names": list(samples.feature_names),
        "n_samples": len(samples),
        "n_train": fit.n_train,
        "n_test": fit.n_test,
        "n_hidden": fit.n_hidden,
        "hidden_search": [{"n_hidden": h, "val_mse": v} for h, v in fit.hidden_report],
        "stop_reason": fit.trace.stop_reason,
        "test_rmse_scaled": fit.rmse_scaled,
        "test_rmse_price": fit.rmse_price,
        "seed": tc.seed,
    }
    summary_path = out_dir / "train_summary.json"
    summary_path.write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    outputs.append(summary_path)
    print(
        f"{'with' if spec.include_rsi else 'without'} RSI, pattern {pattern}, {regime_name}: "
        f"{len(samples)} samples, {fit.n_hidden} hidden, test RMSE {fit.rmse_scaled:.4f} (scaled)"
    )
    config = {"features": spec.to_dict(), "train": tc.to_dict(), "train_fraction": train_fraction,
              "pattern": pattern, "regime": sorted(hours)}
    return config, [args.data], outputs, [tc.seed]


def cmd_ablate(args, cfg, out_dir: Path):
    records, series = _load_market(args.data)
    spec = _feature_spec(cfg, args)
    tc = _train_config(cfg, args)
    d = dict(cfg.get("ablation", {}))
    if args.seeds is not None:
        d["seeds"] = list(range(args.seeds))
    if args.pattern:
        d["patterns"] = args.pattern
    regimes = _regimes(args.regime) if args.regime else {r: DEFAULT_REGIMES[r] for r in d.get("regimes", ("peak", "offpeak"))}
    d["regimes"] = list(regimes)
    ab = AblationConfig.from_dict(d)

    plot_dir = out_dir / "plot_data"
    plot_dir.mkdir(exist_ok=True)
    outputs = []
    first_seed = ab.seeds[0]

    def on_fit(pattern, regime, seed, variant, fit):
        if seed == first_seed:
            stem = f"{pattern}_{regime.replace(':', '-').replace(',', '-')}_{variant}"
            outputs.append(write_trace_csv(fit.trace, plot_dir / f"trace_{stem}.csv"))
            outputs.append(write_prediction_csv(fit, plot_dir / f"predictions_{stem}.csv"))

    report = run_ablation(records, series, ab, spec, tc, regimes=regimes, on_fit=on_fit)
    table = format_ablation_table(report, price_units=ab.report_price_units)
    table_path = out_dir / "ablation_table.txt"
    table_path.write_text(table + "\n", encoding="utf-8")
    outputs = [write_ablation_json(report, out_dir / "ablation.json"),
               write_ablation_csv(report, out_dir / "ablation.csv"), table_path] + outputs
    print(table)
    return report.config, [args.data], outputs, list(ab.seeds)


def cmd_correlate(args, cfg, out_dir: Path):
    records, series = _load_market(args.data)
    regimes = _regimes(args.regime)
    rep = sensitivity_report(records, series, regimes, daily=args.daily)
    corr_path = out_dir / "correlations.csv"
    with open(corr_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "pair", "pearson_r", "n"])
        for row in rep.rows():
            w.writerow([row["regime"], row["pair"], repr(row["pearson_r"]), row["n"]])
    json_path = out_dir / "correlations.json"
    json_path.write_text(json.dumps({"correlations": rep.correlations, "n": rep.n_points, "daily": args.daily},
                                    indent=1) + "\n", encoding="utf-8")
    points_path = out_dir / "correlation_points.csv"
    with open(points_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "hour", "regime", "price", "load", "rsi"])
        for rec, p in zip(records, series):
            for name, hours in regimes.items():
                if rec.hour in hours:
                    w.writerow([rec.date.isoformat(), rec.hour, name, repr(rec.wavg_price), repr(rec.load), repr(p.rsi)])
    for regime, corr in rep.correlations.items():
        print(f"{regime:<10}" + "  ".join(f"{pair} {r:+.3f}" for pair, r in corr.items()))
    return {"regimes": {k: sorted(v) for k, v in regimes.items()}, "daily": args.daily}, [args.data], \
        [corr_path, json_path, points_path], []


def cmd_report(args, cfg, out_dir: Path):
    from . import plotting

    src = Path(args.from_dir) if args.from_dir else out_dir
    fig_dir = out_dir / "figures"
    inputs, outputs = [], []
    if (src / "rsi.csv").exists():
        inputs.append(src / "rsi.csv")
        outputs.append(plotting.plot_rsi_series(src / "rsi.csv", fig_dir / "rsi_series.png"))
    if (src / "correlations.csv").exists():
        inputs.append(src / "correlations.csv")
        outputs.append(plotting.plot_correlations(src / "correlations.csv", fig_dir / "correlations.png"))
    if (src / "ablation.json").exists():
        inputs.append(src / "ablation.json")
        report = read_ablation_json(src / "ablation.json")
        outputs.append(plotting.plot_ablation(report, fig_dir / "ablation.png"))
        text = format_ablation_table(report)
        table_path = out_dir / "report_ablation.txt"
        table_path.write_text(text + "\n", encoding="utf-8")
        outputs.append(table_path)
    traces = sorted(src.glob("trace*.csv")) + sorted((src / "plot_data").glob("trace_*.csv"))
    for t in traces:
        inputs.append(t)
        outputs.append(plotting.plot_trace(t, fig_dir / (t.stem + ".png")))
    preds = sorted(src.glob("predictions*.csv")) + sorted((src / "plot_data").glob("predictions_*.csv"))
    for p in preds:
        inputs.append(p)
        outputs.append(plotting.plot_predictions(p, fig_dir / (p.stem + ".png")))
    if not outputs:
        raise RsiForecastError(f"nothing to report in {src}: run rsi, correlate, train or ablate first")
    for o in outputs:
        print(f"wrote {o}")
    return {"from_dir": str(src)}, inputs, outputs, []


COMMANDS = {
    "synth": cmd_synth,
    "rsi": cmd_rsi,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "correlate": cmd_correlate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsiforecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON config with optional sim/features/train/ablation sections")
        p.add_argument("--out-dir", default="out", help="output directory (default: out)")
        if data:
            p.add_argument("--data", required=True, help="market CSV: date,hour,load,wavg_price,cap_1,...")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("synth", help="simulate a pay-as-bid market and write its CSV")
    common(p, data=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--pivotal-markup", type=float)

    p = sub.add_parser("rsi", help="hourly RSI series and competitiveness summary")
    common(p)
    p.add_argument("--regime", action="append", help="peak | offpeak | custom:<hours>; repeatable")

    def model_flags(p):
        p.add_argument("--with-rsi", dest="with_rsi", action="store_true", default=None)
        p.add_argument("--no-rsi", dest="with_rsi", action="store_false")
        p.add_argument("--day-encoding", choices=["pattern-code", "pattern-onehot"])
        p.add_argument("--hidden", type=int, nargs="+", help="hidden-layer sizes to search")
        p.add_argument("--max-epochs", type=int)

    p = sub.add_parser("train", help="train one network and evaluate it on the chronological test tail")
    common(p)
    model_flags(p)
    p.add_argument("--pattern", default="all", help="all | 0 | 1 | 2 | 3")
    p.add_argument("--regime", default="peak")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", type=float)

    p = sub.add_parser("ablate", help="test RMSE with vs without RSI features per pattern and regime")
    common(p)
    model_flags(p)
    p.add_argument("--seeds", type=int, help="run seeds 0..N-1 (default 10)")
    p.add_argument("--pattern", action="append", help="all | 0 | 1 | 2 | 3; repeatable")
    p.add_argument("--regime", action="append", help="peak | offpeak | custom:<hours>; repeatable")

    p = sub.add_parser("correlate", help="per-regime Pearson correlations of price, load and RSI")
    common(p)
    p.add_argument("--regime", action="append")
    p.add_argument("--daily", action="store_true", help="correlate daily regime averages")

    p = sub.add_parser("report", help="render figures from the outputs of the other commands")
    common(p, data=False)
    p.add_argument("--from-dir", help="directory holding the CSV/JSON outputs (default: --out-dir)")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        return run(manifest["argv"])
    cfg = read_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config, inputs, outputs, seeds = COMMANDS[args.command](args, cfg, out_dir)
    write_manifest(out_dir, args.command, argv, config, inputs, outputs, seeds)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (RsiForecastError, ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
