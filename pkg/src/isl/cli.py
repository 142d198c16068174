"""Command-line front end.

Subcommands
-----------
train1d    fit a 1-D generator to an analytic target and write metrics
synth-ar   simulate AR(p) series to a wide CSV
train-ts   fit the temporal model to series from a CSV
forecast   sample forecast paths from a temporal checkpoint
eval       recompute metrics from stored artifacts
verify     run the distribution-theory property suite

Every run writes a ``manifest.json`` recording the fully resolved
configuration, seed, version, timestamps, and artifact paths. Numeric
artifacts (run logs, checkpoints, metrics, CSV dumps) contain no
timestamps, so re-running a command with the same seed reproduces them
byte-for-byte.

Exit codes: 0 ok; 2 usage or input error; 3 training diverged;
4 property-suite failure.

Flags may be preloaded from ``--config FILE`` (JSON object or flat
``key=value`` lines, keys matching the long flag names with dashes or
underscores); explicit flags override the file. The ``ISL_OUTPUT_DIR``
environment variable sets the default parent of output directories.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from . import __version__
from . import rng as rng_mod
from . import timeseries as ts
from .core import IslConfig, RankHistogram, chi_square_uniformity, rank_statistics
from .distributions import (
    NoiseSource,
    TargetDistribution,
    parse_noise,
    parse_target,
)
from .metrics import MetricConfig, forecast_metrics, ksd, transform_error
from .nets import MlpSpec, load_checkpoint, mlp_forward, save_checkpoint
from .theory import mismatch_bound_report, rank_pmf
from .trainer import TrainConfig, TrainingDiverged, evaluate_generator, train_1d

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_PROPERTY = 4


# ---------------------------------------------------------------------------
# Shared plumbing


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ValueError("config JSON must be an object")
        return {str(k).replace("-", "_"): v for k, v in obj.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse argv with defaults preloaded from --config, flags winning."""
    probe, _ = parser.parse_known_args(argv)
    if getattr(probe, "config", None):
        try:
            overrides = _load_config_file(probe.config)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config file: {exc}")
        valid = {a.dest for a in parser._actions}
        unknown = sorted(set(overrides) - valid)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        for key, value in overrides.items():
            action = next(a for a in parser._actions if a.dest == key)
            if isinstance(value, str) and action.type is not None:
                try:
                    value = action.type(value)
                except (TypeError, ValueError) as exc:
                    parser.error(f"config key {key}: {exc}")
            if isinstance(value, str) and isinstance(action, argparse._StoreTrueAction):
                value = value.lower() in ("1", "true", "yes", "on")
            parser.set_defaults(**{key: value})
    return parser.parse_args(argv)


def _out_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get("ISL_OUTPUT_DIR", "runs"))
        out = root / f"{command}-seed{args.seed}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _manifest(
    out: Path, command: str, argv: list[str], config: dict,
    seed: int, started: str, artifacts: dict,
) -> None:
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "argv": list(argv),
            "config": config,
            "seed": seed,
            "version": __version__,
            "started": started,
            "finished": _now(),
            "artifacts": {k: str(v) for k, v in artifacts.items()},
        },
    )


def _resolved(args, skip=("config", "out")) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}


def _csv_floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.split(","))


def _csv_ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(x) for x in text.split(","))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="JSON or key=value file supplying flag defaults")
    p.add_argument("--out", default=None,
                   help="output directory (default $ISL_OUTPUT_DIR/<command>-seed<seed>)")
    p.add_argument("--seed", type=int, default=0, help="master seed")


# ---------------------------------------------------------------------------
# train1d


def _cdf_grid_csv(path: Path, target: TargetDistribution, samples: np.ndarray, points: int = 512):
    """x grid with analytic target cdf and the model's empirical cdf."""
    u = np.linspace(1e-4, 1 - 1e-4, points)
    xs = np.unique(target.quantile(u))
    sorted_s = np.sort(samples)
    ecdf = np.searchsorted(sorted_s, xs, side="right") / sorted_s.size
    cdf = target.cdf(xs)
    import pandas as pd

    pd.DataFrame({"x": xs, "target_cdf": cdf, "model_ecdf": ecdf}).to_csv(path, index=False)


def cmd_train1d(argv: list[str], parser: argparse.ArgumentParser) -> int:
    args = _apply_config_file(parser, argv)
    if args.epochs < 1:
        parser.error("epochs must be >= 1")
    if args.n < 1:
        parser.error("n must be >= 1")
    try:
        target = parse_target(args.target)
        noise = parse_noise(args.noise, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    started = _now()
    out = _out_dir(args, "train1d")

    hidden = _csv_ints(args.hidden)
    widths = (1,) + hidden + (1,)
    acts = (args.activation,) * len(hidden) + ("identity",)
    spec = MlpSpec(widths, acts)
    cfg = TrainConfig.standard(
        k_max=args.kmax, epochs=args.epochs, learning_rate=args.lr,
        batch_size=args.batch_size, seed=args.seed, alpha=args.alpha,
        nu=args.nu, norm_order=args.norm, test_period=args.test_period,
        significance=args.significance,
    )
    cfg = dataclasses.replace(cfg, select_repeats=args.select_repeats,
                              select_best=not args.no_select_best)
    data = target.sample(args.n, rng_mod.stream(args.seed, "data"))

    try:
        result = train_1d(spec, noise, data, cfg)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    result.runlog.to_jsonl(out / "runlog.jsonl")
    save_checkpoint(
        out / "checkpoint.json", "generator-1d", {"generator": spec},
        result.params,
        meta={"target": target.spec_string(), "noise": noise.spec_string(),
              "final_k": result.final_k, "seed": args.seed},
    )

    mrng = rng_mod.stream(args.seed, "metrics")
    samples = evaluate_generator(result.params, spec, noise, args.eval_samples, mrng)
    ksd_value = ksd(samples, target)
    mcfg = MetricConfig(n_monte_carlo=args.eval_samples, seed=args.seed)
    pieces = result.params.layout.extract(result.params.values)

    def gen_fn(z):
        return np.asarray(mlp_forward(spec, pieces, z.reshape(-1, 1))).reshape(-1)

    terr = transform_error(gen_fn, target, noise, mcfg)
    last = result.runlog.records[-1]
    metrics = {
        "ksd": float(ksd_value),
        "mae": float(terr.mae),
        "mse": float(terr.mse),
        "transform_branch": terr.branch,
        "final_k": int(result.final_k),
        "iterations": int(result.iterations),
        "clip_events": int(result.clip_events),
        "final_theoretical_loss": float(last.theoretical_loss),
        "final_chi_square": float(last.chi_square_statistic),
        "selected_epoch": result.runlog.metadata.get("selected_epoch"),
        "eval_samples": int(args.eval_samples),
    }
    _write_json(out / "metrics.json", metrics)
    import pandas as pd

    pd.DataFrame({"sample": samples[: args.dump_samples]}).to_csv(
        out / "samples.csv", index=False
    )
    _cdf_grid_csv(out / "cdf_grid.csv", target, samples)
    _manifest(out, "train1d", argv, _resolved(args), args.seed, started, {
        "runlog": "runlog.jsonl", "checkpoint": "checkpoint.json",
        "metrics": "metrics.json", "samples": "samples.csv",
        "cdf_grid": "cdf_grid.csv",
    })
    print(f"train1d done: final_k={result.final_k} ksd={ksd_value:.4f} "
          f"mae={terr.mae:.4f} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth-ar


def cmd_synth_ar(argv: list[str], parser: argparse.ArgumentParser) -> int:
    args = _apply_config_file(parser, argv)
    if args.t < 1 or args.series < 1:
        parser.error("t and series must be >= 1")
    if args.noise_var is not None and args.noise_std is not None:
        parser.error("give only one of --noise-var / --noise-std")
    if args.noise_var is not None and args.noise_var < 0:
        parser.error("noise variance must be >= 0")
    noise_std = args.noise_std if args.noise_std is not None else float(
        np.sqrt(args.noise_var if args.noise_var is not None else 0.01)
    )
    started = _now()
    out = _out_dir(args, "synth-ar")
    phi = _csv_floats(args.phi)
    init = _csv_floats(args.init) if args.init else None
    batch = ts.ar_generate(phi, noise_std, args.t, args.series,
                           rng_mod.stream(args.seed, "data"), init=init)
    ts.save_series_csv(batch, out / "series.csv")
    _manifest(out, "synth-ar", argv, {**_resolved(args), "noise_std_resolved": noise_std},
              args.seed, started, {"series": "series.csv"})
    print(f"synth-ar done: {args.series} series x {args.t} steps -> {out / 'series.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train-ts


def _csv_layout(args) -> ts.CsvLayout:
    cols = tuple(c for c in args.value_columns.split(",") if c) if args.value_columns else None
    return ts.CsvLayout(
        time_column=args.time_column or None,
        series_column=args.series_column or None,
        value_columns=cols,
        standardize=not args.no_standardize,
    )


def cmd_train_ts(argv: list[str], parser: argparse.ArgumentParser) -> int:
    args = _apply_config_file(parser, argv)
    if args.epochs < 1:
        parser.error("epochs must be >= 1")
    if not Path(args.data).exists():
        parser.error(f"data file not found: {args.data}")
    layout = _csv_layout(args)
    try:
        batch, report = ts.ingest_csv(args.data, layout)
    except (ValueError, OSError) as exc:
        parser.error(f"ingestion failed: {exc}")
    try:
        noise = parse_noise(args.noise, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    started = _now()
    out = _out_dir(args, "train-ts")

    model = ts.TemporalModel.build(
        d=batch.d, hidden_width=args.hidden_width, rnn_layers=args.rnn_layers,
        rnn_activation=args.rnn_activation, gen_hidden=_csv_ints(args.gen_hidden),
        gen_activation=args.gen_activation,
        gen_dropout=_csv_floats(args.gen_dropout), seed=args.seed,
    )
    cfg = ts.TemporalTrainConfig.standard(
        k_max=args.kmax, epochs=args.epochs, window=args.window,
        batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed,
        alpha=args.alpha, nu=args.nu, norm_order=args.norm,
        test_period=args.test_period, significance=args.significance,
        warmup=args.warmup,
    )
    cfg = dataclasses.replace(cfg, gate_points=args.gate_points,
                              select_repeats=args.select_repeats)
    try:
        result = ts.train_temporal(model, batch, noise, cfg)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    result.runlog.to_jsonl(out / "runlog.jsonl")
    save_checkpoint(
        out / "checkpoint.json", "temporal",
        {"rnn": result.model.rnn, "generator": result.model.generator},
        result.model.params,
        meta={
            "noise": noise.spec_string(), "final_k": result.final_k,
            "seed": args.seed, "window": cfg.window, "d": batch.d,
            "ingest": {
                "time_column": layout.time_column,
                "series_column": layout.series_column,
                "value_columns": list(layout.value_columns) if layout.value_columns else None,
                "standardize": layout.standardize,
            },
        },
    )
    last = result.runlog.records[-1]
    _write_json(out / "metrics.json", {
        "final_k": int(result.final_k),
        "iterations": int(result.iterations),
        "clip_events": int(result.clip_events),
        "final_theoretical_loss": float(last.theoretical_loss),
        "final_chi_square": float(last.chi_square_statistic),
        "final_accepted": bool(last.accepted),
        "n_series": int(report.n_series),
        "dropped_rows": int(report.dropped_rows),
        "d": int(report.d),
    })
    _manifest(out, "train-ts", argv, _resolved(args), args.seed, started, {
        "runlog": "runlog.jsonl", "checkpoint": "checkpoint.json",
        "metrics": "metrics.json",
    })
    print(f"train-ts done: final_k={result.final_k} "
          f"theo={last.theoretical_loss:.4f} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast


def _load_temporal(path: str) -> tuple[ts.TemporalModel, dict]:
    kind, specs, params, meta = load_checkpoint(path)
    if kind != "temporal":
        raise ValueError(f"checkpoint kind {kind!r} is not 'temporal'")
    return ts.TemporalModel(rnn=specs["rnn"], generator=specs["generator"],
                            params=params), meta


def cmd_forecast(argv: list[str], parser: argparse.ArgumentParser) -> int:
    args = _apply_config_file(parser, argv)
    if not Path(args.checkpoint).exists():
        parser.error(f"checkpoint not found: {args.checkpoint}")
    if not Path(args.data).exists():
        parser.error(f"data file not found: {args.data}")
    try:
        model, meta = _load_temporal(args.checkpoint)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        parser.error(f"bad checkpoint: {exc}")
    ingest = meta.get("ingest", {})
    layout = ts.CsvLayout(
        time_column=ingest.get("time_column"),
        series_column=ingest.get("series_column"),
        value_columns=tuple(ingest["value_columns"]) if ingest.get("value_columns") else None,
        standardize=ingest.get("standardize", True),
    )
    try:
        batch, _ = ts.ingest_csv(args.data, layout)
    except (ValueError, OSError) as exc:
        parser.error(f"ingestion failed: {exc}")
    if args.series not in batch.ids:
        parser.error(f"series {args.series!r} not in data (have {batch.ids[:8]}...)")
    idx = batch.ids.index(args.series)
    seq = batch.sequences[idx]
    if args.tau0 < 1 or args.tau0 > seq.shape[0]:
        parser.error(f"tau0 must be in [1, {seq.shape[0]}]")
    started = _now()
    out = _out_dir(args, "forecast")
    noise = parse_noise(meta.get("noise", "standard_normal"), seed=args.seed)
    levels = _csv_floats(args.quantiles)
    fr = ts.forecast(model, seq[: args.tau0], args.horizon, args.trajectories,
                     noise, rng_mod.stream(args.seed, "metrics"),
                     quantile_levels=levels)
    if batch.scalers is not None:
        mean, std = batch.scalers[idx]
        fr = ts.ForecastResult(
            horizon=fr.horizon,
            trajectories=fr.trajectories * std + mean,
            quantiles={q: v * std + mean for q, v in fr.quantiles.items()},
            history_length=fr.history_length,
        )
    _write_json(out / "forecast.json", fr.to_json())
    fr.to_csv(out / "forecast.csv")
    artifacts = {"forecast": "forecast.json", "forecast_csv": "forecast.csv"}
    if args.save_trajectories:
        import pandas as pd

        s, tau, d = fr.trajectories.shape
        frame = pd.DataFrame(
            fr.trajectories.reshape(s, tau * d),
            columns=[f"t{t+1}_d{j}" for t in range(tau) for j in range(d)],
        )
        frame.to_csv(out / "trajectories.csv", index=False)
        artifacts["trajectories"] = "trajectories.csv"
    _manifest(out, "forecast", argv, _resolved(args), args.seed, started, artifacts)
    print(f"forecast done: horizon={args.horizon} x {args.trajectories} paths -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(argv: list[str], parser: argparse.ArgumentParser) -> int:
    args = _apply_config_file(parser, argv)
    dist_mode = args.checkpoint is not None
    fc_mode = args.forecast is not None
    if dist_mode == fc_mode:
        parser.error("give exactly one of --checkpoint (with --target) or "
                     "--forecast (with --actual)")
    started = _now()
    out = _out_dir(args, "eval")
    if dist_mode:
        if not args.target:
            parser.error("--checkpoint mode needs --target")
        if not Path(args.checkpoint).exists():
            parser.error(f"checkpoint not found: {args.checkpoint}")
        try:
            target = parse_target(args.target)
            kind, specs, params, meta = load_checkpoint(args.checkpoint)
        except (ValueError, json.JSONDecodeError) as exc:
            parser.error(str(exc))
        if kind != "generator-1d":
            parser.error(f"checkpoint kind {kind!r} is not 'generator-1d'")
        spec = specs["generator"]
        noise = parse_noise(meta.get("noise", "standard_normal"), seed=args.seed)
        samples = evaluate_generator(params, spec, noise, args.eval_samples,
                                     rng_mod.stream(args.seed, "metrics"))

        def gen_fn(z):
            pieces = params.layout.extract(params.values)
            return np.asarray(mlp_forward(spec, pieces, z.reshape(-1, 1))).reshape(-1)

        terr = transform_error(gen_fn, target, noise,
                               MetricConfig(n_monte_carlo=args.eval_samples, seed=args.seed))
        metrics = {
            "ksd": float(ksd(samples, target)),
            "mae": float(terr.mae),
            "mse": float(terr.mse),
            "transform_branch": terr.branch,
            "eval_samples": int(args.eval_samples),
        }
    else:
        if not args.actual:
            parser.error("--forecast mode needs --actual")
        for p in (args.forecast, args.actual):
            if not Path(p).exists():
                parser.error(f"file not found: {p}")
        import pandas as pd

        traj_frame = pd.read_csv(args.forecast)
        actual_frame = pd.read_csv(args.actual)
        actual = actual_frame.to_numpy(dtype=np.float64)
        if actual.ndim == 1:
            actual = actual[:, None]
        tau, d = actual.shape
        flat = traj_frame.to_numpy(dtype=np.float64)
        if flat.shape[1] != tau * d:
            parser.error(
                f"forecast CSV has {flat.shape[1]} columns, expected horizon*dims = {tau * d}"
            )
        traj = flat.reshape(flat.shape[0], tau, d)
        levels = _csv_floats(args.quantiles)
        try:
            score = forecast_metrics(traj, actual, rho_levels=levels)
        except ValueError as exc:
            parser.error(str(exc))
        metrics = {
            "nd": float(score.nd),
            "rmse": float(score.rmse),
            "ql": {f"{q:g}": float(v) for q, v in score.ql.items()},
        }
    _write_json(out / "metrics.json", metrics)
    _manifest(out, "eval", argv, _resolved(args), args.seed, started,
              {"metrics": "metrics.json"})
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


_VERIFY_TARGETS = ("normal:0,1", "uniform:-1,1", "cauchy:0,1", "pareto:1,2")
_ORACLE_PAIRS = (
    ("uniform:0,1", "uniform:0,2", 1),
    ("normal:0,1", "normal:0.5,1", 5),
    ("normal:4,2", "normal:4,2", 7),
    ("uniform:-1,1", "normal:0,1", 4),
    ("pareto:1,2", "pareto:1,3", 10),
)
_BOUND_PAIRS = (
    ("normal:0,1", "normal:0.3,1", 5),
    ("normal:4,2", "normal:4,2.5", 7),
    ("uniform:0,1", "uniform:0,2", 3),
    ("cauchy:0,1", "cauchy:0.5,1", 5),
    ("pareto:1,2", "pareto:1.2,2", 4),
)


def _verify_calibration(k: int, trials: int, significance: float, seed: int) -> list[dict]:
    rows = []
    for spec_str in _VERIFY_TARGETS:
        target = parse_target(spec_str)
        data_rng = rng_mod.stream(seed, f"verify-data-{spec_str}")
        model_rng = rng_mod.stream(seed, f"verify-model-{spec_str}")
        y = target.sample(trials, data_rng)
        gen = target.sample(trials * k, model_rng).reshape(trials, k)
        stats = rank_statistics(y, gen)
        hist = RankHistogram.from_ranks(stats, k)
        rep = chi_square_uniformity(hist, significance)
        rows.append({
            "check": f"rank-uniformity {spec_str} K={k}",
            "statistic": float(rep.statistic),
            "critical": float(rep.critical_value),
            "passed": bool(rep.accepted),
        })
    return rows


def _verify_oracle(trials: int, seed: int) -> list[dict]:
    # 4 Monte Carlo standard errors at the worst-case bin probability:
    # 0.002 at one million trials, wider for quicker runs
    tol = 2.0 / np.sqrt(trials)
    rows = []
    for p_str, q_str, k in _ORACLE_PAIRS:
        p, q = parse_target(p_str), parse_target(q_str)
        pmf = rank_pmf(p, q, k)
        y = p.sample(trials, rng_mod.stream(seed, f"verify-oracle-y-{p_str}-{q_str}"))
        gen = q.sample(trials * k, rng_mod.stream(seed, f"verify-oracle-g-{p_str}-{q_str}"))
        stats = rank_statistics(y, gen.reshape(trials, k))
        mc = np.bincount(stats, minlength=k + 1) / trials
        err = float(np.max(np.abs(mc - pmf)))
        rows.append({
            "check": f"rank-pmf oracle {p_str} vs {q_str} K={k}",
            "max_bin_error": err,
            "tolerance": tol,
            "passed": bool(err <= tol),
        })
    return rows


def _verify_bound(seed: int) -> list[dict]:
    rows = []
    for p_str, q_str, k in _BOUND_PAIRS:
        p, q = parse_target(p_str), parse_target(q_str)
        rep = mismatch_bound_report(p, q, k)
        rows.append({
            "check": f"mismatch bound {p_str} vs {q_str} K={k}",
            "max_deviation": float(rep.max_deviation),
            "epsilon": float(rep.epsilon),
            "violation": float(rep.violation),
            "passed": bool(rep.holds),
        })
    return rows


def cmd_verify(argv: list[str], parser: argparse.ArgumentParser) -> int:
    args = _apply_config_file(parser, argv)
    if args.trials < 1000:
        parser.error("trials must be >= 1000")
    started = _now()
    out = _out_dir(args, "verify")
    rows: list[dict] = []
    if args.suite in ("calibration", "all"):
        rows += _verify_calibration(args.k, args.trials, args.significance, args.seed)
    if args.suite in ("oracle", "all"):
        rows += _verify_oracle(args.trials, args.seed)
    if args.suite in ("bound", "all"):
        rows += _verify_bound(args.seed)
    all_pass = all(r["passed"] for r in rows)
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        detail = {k: v for k, v in r.items() if k not in ("check", "passed")}
        print(f"[{status}] {r['check']}  {json.dumps(detail, sort_keys=True)}")
    _write_json(out / "verify.json", {"checks": rows, "all_passed": all_pass})
    _manifest(out, "verify", argv, _resolved(args), args.seed, started,
              {"report": "verify.json"})
    print(f"verify: {sum(r['passed'] for r in rows)}/{len(rows)} checks passed")
    return EXIT_OK if all_pass else EXIT_PROPERTY


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isl",
        description="Rank-statistic training for implicit generative models.",
    )
    parser.add_argument("--version", action="version", version=f"isl {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("train1d", help="fit a 1-D generator to an analytic target")
    _add_common(p)
    p.add_argument("--target", default="normal:4,2",
                   help="target spec, e.g. normal:4,2 | mix:[normal:5,2;normal:-1,1]")
    p.add_argument("--noise", default="standard_normal",
                   help="noise spec: standard_normal | uniform:low,high")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--n", type=int, default=1000, help="training observations")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--alpha", type=float, default=15.0)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--norm", type=int, default=2, choices=(1, 2))
    p.add_argument("--test-period", type=int, default=100)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--select-repeats", type=int, default=8)
    p.add_argument("--no-select-best", action="store_true")
    p.add_argument("--hidden", default="7,13,7", help="hidden widths, e.g. 7,13,7")
    p.add_argument("--activation", default="elu")
    p.add_argument("--eval-samples", type=int, default=100_000)
    p.add_argument("--dump-samples", type=int, default=10_000)

    p = sub.add_parser("synth-ar", help="simulate AR(p) series to CSV")
    _add_common(p)
    p.add_argument("--phi", default="0.5,0.2", help="AR coefficients, comma separated")
    p.add_argument("--noise-var", type=float, default=None,
                   help="innovation variance (default 0.01)")
    p.add_argument("--noise-std", type=float, default=None,
                   help="innovation standard deviation (overrides --noise-var)")
    p.add_argument("--t", type=int, default=1000, help="steps per series")
    p.add_argument("--series", type=int, default=200)
    p.add_argument("--init", default="", help="pinned initial values, comma separated")

    p = sub.add_parser("train-ts", help="fit the temporal model to CSV series")
    _add_common(p)
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--time-column", default="")
    p.add_argument("--series-column", default="")
    p.add_argument("--value-columns", default="",
                   help="comma-separated columns (default: all numeric)")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--noise", default="standard_normal")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--warmup", type=int, default=0,
                   help="teacher-forced context steps before each scored window")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=15.0)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--norm", type=int, default=2, choices=(1, 2))
    p.add_argument("--test-period", type=int, default=100)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--gate-points", type=int, default=1000)
    p.add_argument("--select-repeats", type=int, default=4)
    p.add_argument("--hidden-width", type=int, default=10)
    p.add_argument("--rnn-layers", type=int, default=2)
    p.add_argument("--rnn-activation", default="relu")
    p.add_argument("--gen-hidden", default="16,16")
    p.add_argument("--gen-activation", default="relu")
    p.add_argument("--gen-dropout", default="", help="per-hidden-layer dropout rates")

    p = sub.add_parser("forecast", help="sample forecasts from a temporal checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV with the conditioning series")
    p.add_argument("--series", default="0", help="series id to forecast")
    p.add_argument("--tau0", type=int, default=20, help="observed prefix length")
    p.add_argument("--horizon", type=int, default=5)
    p.add_argument("--trajectories", type=int, default=200)
    p.add_argument("--quantiles", default="0.1,0.5,0.9")
    p.add_argument("--save-trajectories", action="store_true")

    p = sub.add_parser("eval", help="recompute metrics from stored artifacts")
    _add_common(p)
    p.add_argument("--checkpoint", default=None, help="generator-1d checkpoint")
    p.add_argument("--target", default=None, help="target spec for --checkpoint mode")
    p.add_argument("--eval-samples", type=int, default=100_000)
    p.add_argument("--forecast", default=None, help="trajectories CSV (S rows x horizon cols)")
    p.add_argument("--actual", default=None, help="actual values CSV (horizon rows)")
    p.add_argument("--quantiles", default="0.5,0.9")

    p = sub.add_parser("verify", help="run the distribution-theory property suite")
    _add_common(p)
    p.add_argument("--suite", default="all",
                   choices=("calibration", "oracle", "bound", "all"))
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--significance", type=float, default=0.01)

    return parser


_HANDLERS = {
    "train1d": cmd_train1d,
    "synth-ar": cmd_synth_ar,
    "train-ts": cmd_train_ts,
    "forecast": cmd_forecast,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help()
        return EXIT_USAGE
    if argv[0] in ("-h", "--help", "--version"):
        parser.parse_args(argv)
        return EXIT_OK
    command = argv[0]
    if command not in _HANDLERS:
        parser.parse_args(argv)  # produces the usage error (exit 2)
        return EXIT_USAGE
    sub_parser = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    ).choices[command]
    return _HANDLERS[command](argv[1:], sub_parser)


if __name__ == "__main__":
    sys.exit(main())
