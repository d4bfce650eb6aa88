"""Command-line entry point: simulate, estimate, analyze, reproduce-paper.

Configuration is a strict JSON document; unknown keys fail loudly.  Exit
codes: 0 success, 1 usage or schema error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import estimator, experiments, observability, solvers, stability
from .costs import EstimatorConfig
from .estimator import EstimatorError, init, run, write_estimates_csv
from .linsys import NoiseBounds, load_model, rng_stream, simulate
from .sensing import (BinarySensorBank, binarize_outputs, read_measurement_csv,
                      write_measurement_csv)

OUT_DIR_ENV = "BINMHE_OUT"


class SchemaError(ValueError):
    pass


_TOP_KEYS = {"scenario", "model_file", "thresholds", "rho_v", "seed",
             "duration_s", "trials", "variants", "out_dir", "workers",
             "N", "tau", "epsilon", "prior", "constraints", "sweep",
             "warmup", "measurements", "armse_window"}
_CONSTRAINT_KEYS = {"thresholds", "disturbance"}
_SWEEP_KEYS = {"variable", "grid"}


@dataclass
class RunConfig:
    scenario: str = "example1"
    model_file: str | None = None
    thresholds: list | None = None
    rho_v: float | list | None = None
    seed: int = 0
    duration_s: float = 40.0
    trials: int = 20
    variants: tuple = ("lsmhe",)
    out_dir: str = "out"
    workers: int = 1
    N: int | None = None
    tau: float | None = None
    epsilon: float | None = None
    prior: list | None = None
    use_threshold_constraints: bool = False
    use_disturbance_constraints: bool = False
    sweep_variable: str | None = None
    sweep_grid: tuple = ()
    warmup: bool = True
    measurements: str | None = None
    armse_window: tuple = (25.0, 40.0)


def _reject_unknown(doc: dict, allowed: set, where: str):
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) {sorted(unknown)} in {where}")


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    cfg = RunConfig()
    if "scenario" in doc:
        if doc["scenario"] not in ("example1", "example2", "custom"):
            raise SchemaError(f"unknown scenario {doc['scenario']!r}")
        cfg.scenario = doc["scenario"]
    for key in ("model_file", "measurements"):
        if key in doc:
            if not isinstance(doc[key], str):
                raise SchemaError(f"{key} must be a path string")
            if not Path(doc[key]).exists():
                raise SchemaError(f"{key} {doc[key]!r} does not exist")
            setattr(cfg, key, doc[key])
    if "variants" in doc:
        v = doc["variants"]
        v = [v] if isinstance(v, str) else list(v)
        for item in v:
            if item not in estimator.VARIANTS:
                raise SchemaError(f"unknown variant {item!r}")
        cfg.variants = tuple(v)
    for key, typ in (("seed", int), ("trials", int), ("workers", int),
                     ("N", int)):
        if key in doc:
            if not isinstance(doc[key], int) or isinstance(doc[key], bool):
                raise SchemaError(f"{key} must be an integer")
            setattr(cfg, key, doc[key])
    for key in ("duration_s", "tau", "epsilon"):
        if key in doc:
            if not isinstance(doc[key], (int, float)) or isinstance(doc[key], bool):
                raise SchemaError(f"{key} must be a number")
            setattr(cfg, key, float(doc[key]))
    if cfg.duration_s <= 0:
        raise SchemaError("duration_s must be positive")
    if cfg.trials < 1:
        raise SchemaError("trials must be at least 1")
    if "rho_v" in doc:
        cfg.rho_v = doc["rho_v"]
    if "thresholds" in doc:
        if not isinstance(doc["thresholds"], list):
            raise SchemaError("thresholds must be a list")
        cfg.thresholds = doc["thresholds"]
    if "prior" in doc:
        if not isinstance(doc["prior"], list):
            raise SchemaError("prior must be a list of numbers")
        cfg.prior = [float(v) for v in doc["prior"]]
    if "out_dir" in doc:
        cfg.out_dir = str(doc["out_dir"])
    if "warmup" in doc:
        if not isinstance(doc["warmup"], bool):
            raise SchemaError("warmup must be a boolean")
        cfg.warmup = doc["warmup"]
    if "constraints" in doc:
        sub = doc["constraints"]
        if not isinstance(sub, dict):
            raise SchemaError("constraints must be an object")
        _reject_unknown(sub, _CONSTRAINT_KEYS, "constraints")
        cfg.use_threshold_constraints = bool(sub.get("thresholds", False))
        cfg.use_disturbance_constraints = bool(sub.get("disturbance", False))
    if "sweep" in doc:
        sub = doc["sweep"]
        if not isinstance(sub, dict):
            raise SchemaError("sweep must be an object")
        _reject_unknown(sub, _SWEEP_KEYS, "sweep")
        if "variable" not in sub or "grid" not in sub:
            raise SchemaError("sweep needs both 'variable' and 'grid'")
        if sub["variable"] not in ("N", "tau", "rho_v"):
            raise SchemaError("sweep variable must be 'N', 'tau' or 'rho_v'")
        cfg.sweep_variable = sub["variable"]
        cfg.sweep_grid = tuple(float(v) for v in sub["grid"])
    if "armse_window" in doc:
        win = doc["armse_window"]
        if not (isinstance(win, list) and len(win) == 2):
            raise SchemaError("armse_window must be [lo, hi]")
        cfg.armse_window = (float(win[0]), float(win[1]))
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise SchemaError(f"config file {path!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc)


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = override or os.environ.get(OUT_DIR_ENV) or cfg.out_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _scenario(cfg: RunConfig):
    if cfg.scenario == "custom":
        if cfg.model_file is None or cfg.thresholds is None:
            raise SchemaError("custom scenario needs model_file and thresholds")
        model, _ = load_model(cfg.model_file)
        rho = cfg.rho_v if cfg.rho_v is not None else 0.0
        rho = np.full(model.p, rho) if np.isscalar(rho) else np.asarray(rho)
        sensors = BinarySensorBank(thresholds=cfg.thresholds, noise_bounds=rho)
        N = cfg.N if cfg.N is not None else 10
        eps = cfg.epsilon if cfg.epsilon is not None else 1e-5
        config = EstimatorConfig(P=eps * np.eye(model.n), Q=np.eye(model.n),
                                 R=np.ones(model.p), N=N)
        noise = NoiseBounds(rho_W=0.0, rho_V=rho, rho_X=0.0, rho_U=0.0)
        return experiments.Scenario(name="custom", model=model, sensors=sensors,
                                    config=config, noise=noise,
                                    Ts=experiments.SAMPLING_INTERVAL)
    kw = {}
    if cfg.N is not None:
        kw["N"] = cfg.N
    if cfg.epsilon is not None:
        kw["epsilon"] = cfg.epsilon
    if cfg.rho_v is not None and np.isscalar(cfg.rho_v):
        kw["rho_v"] = float(cfg.rho_v)
    if cfg.scenario == "example1":
        if cfg.tau is not None:
            kw["tau"] = cfg.tau
        return experiments.example1_setup(**kw)
    return experiments.example2_setup(**kw)


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    scenario = _scenario(cfg)
    traj, _ = experiments.simulate_trial(scenario, cfg.duration_s, cfg.seed, 0)
    experiments.write_trajectory_csv(out / "trajectory.csv", traj, scenario.Ts)
    Y = binarize_outputs(traj.linear_outputs, scenario.sensors.thresholds)
    write_measurement_csv(out / "measurements.csv", Y)
    print(f"wrote {out / 'trajectory.csv'} and {out / 'measurements.csv'}")
    return 0


def cmd_estimate(cfg: RunConfig, out: Path) -> int:
    scenario = _scenario(cfg)
    if cfg.measurements is None:
        raise SchemaError("estimate needs a 'measurements' CSV path")
    Y, start = read_measurement_csv(cfg.measurements)
    if Y.shape[1] != scenario.model.p:
        raise SchemaError("measurement log sensor count does not match model")
    if cfg.prior is not None:
        prior = np.asarray(cfg.prior, dtype=float)
    else:
        prior = experiments.sample_prior(scenario, rng_stream(cfg.seed, 0, 0))
    T = Y.shape[0] - 1
    diag_rows = []
    for variant in cfg.variants:
        dist = scenario.noise.rho_W if cfg.use_disturbance_constraints else None
        if variant in ("lsmhe-c", "pwmhe-c") and not cfg.use_threshold_constraints:
            pass  # the -c variants imply threshold rows
        st = init(scenario.model, scenario.sensors, scenario.config, variant,
                  prior, shrinking_warmup=cfg.warmup, disturbance_rho=dist)
        records = []
        import time as _time
        for t in range(T + 1):
            u_t = np.zeros(scenario.model.m)
            tic = _time.perf_counter()
            st, est = estimator.step(st, u_t, Y[t])
            wall = _time.perf_counter() - tic
            if est is None:
                continue
            t_start = t - (est.estimates.shape[0] - 1)
            records.append(estimator.EstimateRecord(
                t=t + start, variant=variant, window_start_time=t_start + start,
                window_start_estimate=est.window_start,
                current_estimate=est.current, cost=est.cost,
                iterations=est.iterations, wall_time_s=wall))
        if not records:
            raise EstimatorError("no estimates produced; run longer than N")
        write_estimates_csv(out / f"estimates_{variant}.csv", records)
        for k, rec in enumerate(records):
            diag_rows.append([k, variant, rec.iterations, "", rec.wall_time_s])
        print(f"wrote {out / f'estimates_{variant}.csv'}")
    solvers.write_diagnostics_csv(out / "diagnostics.csv", diag_rows)
    return 0


def cmd_analyze(cfg: RunConfig, kind: str, out: Path) -> int:
    scenario = _scenario(cfg)
    if kind == "stability":
        traj, _ = experiments.simulate_trial(scenario, cfg.duration_s, cfg.seed, 0)
        windows = experiments.collect_windows(scenario.model, scenario.sensors,
                                              traj, scenario.config.N)
        delta = observability.uniform_observability(scenario.model, windows)
        phi = stability.empirical_response_bound(scenario.model, windows)
        consts = stability.compute_constants(scenario.config, scenario.model,
                                             scenario.sensors, scenario.noise,
                                             delta, phi)
        eps = None
        if delta > 0:
            eps = stability.find_epsilon(scenario.config, scenario.model,
                                         scenario.sensors, scenario.noise,
                                         delta, phi, np.eye(scenario.model.n))
        stability.write_stability_report(out / "stability.json", consts, eps)
        print(f"observability measure (run) = {delta:.6g}")
        print(f"a1 at configured weights    = {consts.a1:.6g}")
        if eps is not None:
            print(f"certified epsilon bracket   = [{eps:.6g}, {2 * eps:.6g})")
        print(f"wrote {out / 'stability.json'}")
        return 0
    if kind == "observability":
        if cfg.sweep_variable not in ("N", "tau"):
            raise SchemaError("observability analysis needs sweep over N or tau")
        spec = experiments.ExperimentSpec(
            scenario=cfg.scenario, trials=cfg.trials, duration_s=cfg.duration_s,
            seed=cfg.seed, sweep_variable=cfg.sweep_variable,
            sweep_grid=cfg.sweep_grid, N=cfg.N, tau=cfg.tau,
            rho_v=cfg.rho_v if np.isscalar(cfg.rho_v) else None)
        rows = experiments.sweep_observability(spec)
        name = "fig2a.csv" if cfg.sweep_variable == "N" else "fig2b.csv"
        experiments.write_sweep_csv(out / name, rows)
        print(f"wrote {out / name}")
        return 0
    if kind == "timing":
        rows = experiments.timing_table(seed=cfg.seed)
        experiments.write_timing_csv(out / "table1.csv", rows)
        print(f"wrote {out / 'table1.csv'}")
        return 0
    if kind == "rmse":
        spec = experiments.ExperimentSpec(
            scenario=cfg.scenario, trials=cfg.trials, duration_s=cfg.duration_s,
            seed=cfg.seed, variants=cfg.variants, workers=cfg.workers,
            shrinking_warmup=cfg.warmup, armse_window=cfg.armse_window,
            N=cfg.N, tau=cfg.tau,
            rho_v=cfg.rho_v if np.isscalar(cfg.rho_v) else None,
            epsilon=cfg.epsilon)
        if cfg.sweep_variable in ("tau", "rho_v"):
            spec = replace(spec, sweep_variable=cfg.sweep_variable,
                           sweep_grid=cfg.sweep_grid)
            rows = experiments.sweep_armse(spec)
            experiments.write_armse_csv(out / "armse_sweep.csv", rows)
            print(f"wrote {out / 'armse_sweep.csv'}")
        else:
            result = experiments.monte_carlo(spec)
            experiments.write_rmse_csv(out / "rmse.csv", result)
            print(f"excluded trials: {result.excluded}")
            print(f"wrote {out / 'rmse.csv'}")
        return 0
    raise SchemaError(f"unknown analyze kind {kind!r}")


_PLOT_TEMPLATE = """\
#!/usr/bin/env python3
# Plot {title} from {csv_name} (written by the binmhe CLI).
import csv
import matplotlib.pyplot as plt

xs, ys = [], {{}}
with open({csv_name!r}) as f:
    reader = csv.DictReader(f)
    fields = [c for c in reader.fieldnames if c != {xcol!r}]
    for row in reader:
        xs.append(float(row[{xcol!r}]))
        for c in fields:
            try:
                ys.setdefault(c, []).append(float(row[c]))
            except ValueError:
                pass
for label, series in ys.items():
    if len(series) == len(xs):
        plt.plot(xs, series, label=label)
plt.xlabel({xcol!r})
plt.ylabel({ylabel!r})
plt.title({title!r})
plt.legend()
plt.grid(True)
plt.savefig({png_name!r}, dpi=150)
print("saved", {png_name!r})
"""


def _emit_plot_script(out: Path, stem: str, csv_name: str, xcol: str,
                      ylabel: str, title: str) -> None:
    script = _PLOT_TEMPLATE.format(title=title, csv_name=csv_name, xcol=xcol,
                                   ylabel=ylabel, png_name=f"{stem}.png")
    (out / f"{stem}_plot.py").write_text(script, encoding="utf-8")


def cmd_reproduce(cfg: RunConfig, out: Path, full: bool) -> int:
    trials1 = 100 if full else cfg.trials
    trials2 = 100 if full else max(1, cfg.trials // 2)
    seed = cfg.seed
    print(f"[1/7] observability sweep over N (trials={trials1})")
    specN = experiments.ExperimentSpec(scenario="example1", trials=trials1,
                                       duration_s=50.0, seed=seed,
                                       sweep_variable="N",
                                       sweep_grid=(10, 20, 40, 60, 80, 100, 130, 160))
    experiments.write_sweep_csv(out / "fig2a.csv",
                                experiments.sweep_observability(specN))
    _emit_plot_script(out, "fig2a", "fig2a.csv", "value",
                      "observability measure", "observability vs window length")
    print(f"[2/7] observability sweep over tau")
    specT = experiments.ExperimentSpec(scenario="example1", trials=trials1,
                                       duration_s=50.0, seed=seed,
                                       sweep_variable="tau",
                                       sweep_grid=(-1.5, -1.0, -0.5, -0.2, 0.0,
                                                   0.2, 0.5, 1.0, 1.5))
    experiments.write_sweep_csv(out / "fig2b.csv",
                                experiments.sweep_observability(specT))
    _emit_plot_script(out, "fig2b", "fig2b.csv", "value",
                      "observability measure", "observability vs threshold")
    print(f"[3/7] single-run state tracking, both estimators")
    scenario = experiments.example1_setup()
    traj, prior = experiments.simulate_trial(scenario, 40.0, seed, 0)
    for variant, name in (("lsmhe", "fig3"), ("pwmhe", "fig4")):
        st = init(scenario.model, scenario.sensors, scenario.config, variant,
                  prior, shrinking_warmup=True)
        records = run(st, traj)
        write_estimates_csv(out / f"{name}_estimates.csv", records)
    experiments.write_trajectory_csv(out / "fig34_truth.csv", traj, scenario.Ts)
    print(f"[4/7] RMSE Monte Carlo, single oscillator (trials={trials1})")
    spec5 = experiments.ExperimentSpec(scenario="example1", trials=trials1,
                                       duration_s=40.0, seed=seed,
                                       variants=("lsmhe", "pwmhe"),
                                       workers=cfg.workers)
    experiments.write_rmse_csv(out / "fig5.csv", experiments.monte_carlo(spec5))
    _emit_plot_script(out, "fig5", "fig5.csv", "time_s", "normalized RMSE",
                      "single-oscillator RMSE")
    print(f"[5/7] ARMSE sweeps (trials={trials2})")
    spec6a = experiments.ExperimentSpec(scenario="example1", trials=trials2,
                                        duration_s=40.0, seed=seed,
                                        variants=("lsmhe",), workers=cfg.workers,
                                        sweep_variable="tau",
                                        sweep_grid=(-0.9, -0.5, -0.2, 0.0, 0.2,
                                                    0.5, 0.9))
    experiments.write_armse_csv(out / "fig6a.csv", experiments.sweep_armse(spec6a))
    _emit_plot_script(out, "fig6a", "fig6a.csv", "value", "ARMSE",
                      "ARMSE vs threshold")
    spec6b = experiments.ExperimentSpec(scenario="example1", trials=trials2,
                                        duration_s=40.0, seed=seed,
                                        variants=("lsmhe",), workers=cfg.workers,
                                        sweep_variable="rho_v",
                                        sweep_grid=(0.0, 0.025, 0.05, 0.1, 0.2))
    experiments.write_armse_csv(out / "fig6b.csv", experiments.sweep_armse(spec6b))
    _emit_plot_script(out, "fig6b", "fig6b.csv", "value", "ARMSE",
                      "ARMSE vs noise level")
    print(f"[6/7] network RMSE (trials={trials2})")
    spec8 = experiments.ExperimentSpec(scenario="example2", trials=trials2,
                                       duration_s=35.0, seed=seed,
                                       variants=("lsmhe", "pwmhe"),
                                       workers=cfg.workers,
                                       armse_window=(20.0, 35.0))
    experiments.write_rmse_csv(out / "fig8.csv", experiments.monte_carlo(spec8))
    _emit_plot_script(out, "fig8", "fig8.csv", "time_s", "normalized RMSE",
                      "network RMSE")
    print(f"[7/7] timing table")
    experiments.write_timing_csv(out / "table1.csv",
                                 experiments.timing_table(seed=seed))
    print(f"all outputs in {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="binmhe",
        description="moving-horizon estimation with binary threshold sensors")
    parser.add_argument("--config", type=str, default=None,
                        help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None,
                        help=f"output directory (or ${OUT_DIR_ENV})")
    parser.add_argument("--variant", type=str, default=None,
                        choices=list(estimator.VARIANTS))
    parser.add_argument("--workers", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="write trajectory and measurement CSVs")
    sub.add_parser("estimate", help="run estimators over a measurement CSV")
    p_an = sub.add_parser("analyze", help="stability / observability / timing / rmse")
    p_an.add_argument("kind", choices=["stability", "observability", "timing",
                                       "rmse"])
    p_rep = sub.add_parser("reproduce-paper",
                           help="chain all figure and table analogs")
    p_rep.add_argument("--full", action="store_true",
                       help="paper-scale trial counts (slow)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.variant is not None:
            cfg.variants = (args.variant,)
        if args.workers is not None:
            cfg.workers = args.workers
        out = _out_dir(cfg, args.out)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "estimate":
            return cmd_estimate(cfg, out)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.kind, out)
        if args.command == "reproduce-paper":
            return cmd_reproduce(cfg, out, args.full)
        raise SchemaError(f"unknown command {args.command!r}")
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (EstimatorError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
