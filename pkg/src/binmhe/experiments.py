"""Case-study scenarios, Monte Carlo harnesses, observability and accuracy sweeps.

Scenario 1 is a 2-mass 2-spring oscillator whose third state component
(the second mass displacement) feeds a single binary sensor.  Scenario 2
couples six such oscillators through a graph Laplacian, one binary sensor
per node.  Trials randomize the oscillation phase, the measurement noise
and the prior; every random draw is keyed by (seed, trial) so results are
reproducible and independent of execution order.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .costs import EstimatorConfig
from .estimator import EstimatorError, init, run
from .linsys import (LtiModel, NoiseBounds, Trajectory, build_network,
                     discretize, rng_stream, simulate)
from .observability import matrix_powers, observability_matrix
from .sensing import BinarySensorBank, MeasurementWindow, binarize_outputs

OSCILLATOR_MASSES = (1.0, 1.0)
OSCILLATOR_STIFFNESS = (10.0, 10.0)
SAMPLING_INTERVAL = 0.1
HARMONIC_STATE = np.array([0.618, 0.0, 1.0, 0.0])
NETWORK_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3), (1, 4))
NETWORK_COUPLING = 0.02
NETWORK_THRESHOLDS = np.array([0.5, 0.2, -0.5, -0.8, -0.2, 0.3])
PRIOR_RADIUS = 5.0


def oscillator_matrices() -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time 2-mass 2-spring plant (autonomous, no input)."""
    m1, m2 = OSCILLATOR_MASSES
    k1, k2 = OSCILLATOR_STIFFNESS
    Ac = np.array([[0.0, 1.0, 0.0, 0.0],
                   [-(k1 + k2) / m1, 0.0, k2 / m1, 0.0],
                   [0.0, 0.0, 0.0, 1.0],
                   [k2 / m2, 0.0, -k2 / m2, 0.0]])
    return Ac, np.zeros((4, 0))


def slow_mode_frequency() -> float:
    k, m = OSCILLATOR_STIFFNESS[0], OSCILLATOR_MASSES[0]
    return math.sqrt(k / m * (3.0 - math.sqrt(5.0)) / 2.0)


def network_laplacian() -> np.ndarray:
    L = np.zeros((6, 6))
    for a, b in NETWORK_EDGES:
        L[a, a] += 1.0
        L[b, b] += 1.0
        L[a, b] -= 1.0
        L[b, a] -= 1.0
    return L


def synchronization_coupling_bound() -> float:
    """Largest coupling gain keeping every disagreement block Schur stable."""
    Ac, _ = oscillator_matrices()
    Ad, _ = discretize(Ac, np.zeros((4, 0)), SAMPLING_INTERVAL)
    lams = np.linalg.eigvalsh(network_laplacian())
    lam_max = float(lams[-1])
    angles = np.abs(np.angle(np.linalg.eigvals(Ad)))
    return float(2.0 * math.cos(np.max(angles)) / lam_max)


@dataclass(frozen=True)
class Scenario:
    """A ready-to-run case study: plant, sensors, weights and noise radii."""

    name: str
    model: LtiModel
    sensors: BinarySensorBank
    config: EstimatorConfig
    noise: NoiseBounds
    Ts: float


def example1_setup(N: int = 100, tau: float = 0.5, rho_v: float = 0.05,
                   epsilon: float = 1e-5, with_state_box: bool = True) -> Scenario:
    """Single oscillator with one binary sensor on the second mass position."""
    Ac, Bc = oscillator_matrices()
    Ad, Bd = discretize(Ac, Bc, SAMPLING_INTERVAL)
    model = LtiModel(A=Ad, B=Bd, C=np.array([[0.0, 0.0, 1.0, 0.0]]))
    sensors = BinarySensorBank(thresholds=[tau], noise_bounds=[rho_v])
    box = (np.full(4, -PRIOR_RADIUS), np.full(4, PRIOR_RADIUS)) \
        if with_state_box else None
    config = EstimatorConfig(P=epsilon * np.eye(4), Q=np.eye(4), R=np.ones(1),
                             N=N, state_box=box)
    noise = NoiseBounds(rho_W=0.0, rho_V=np.full(1, rho_v),
                        rho_X=PRIOR_RADIUS, rho_U=0.0)
    return Scenario(name="example1", model=model, sensors=sensors,
                    config=config, noise=noise, Ts=SAMPLING_INTERVAL)


def example2_setup(N: int = 100, rho_v: float = 0.05,
                   epsilon: float = 1e-5) -> Scenario:
    """Six coupled oscillators, one binary sensor per node."""
    Ac, Bc = oscillator_matrices()
    Ad, Bd = discretize(Ac, Bc, SAMPLING_INTERVAL)
    node = LtiModel(A=Ad, B=Bd, C=np.array([[0.0, 0.0, 1.0, 0.0]]))
    model = build_network(node, network_laplacian(), NETWORK_COUPLING,
                          np.array([0.0, 0.0, 1.0, 0.0]))
    sensors = BinarySensorBank(thresholds=NETWORK_THRESHOLDS,
                               noise_bounds=np.full(6, rho_v))
    config = EstimatorConfig(P=epsilon * np.eye(24), Q=np.eye(24), R=np.ones(6),
                             N=N, state_box=None)
    # true node states start up to 5 per component away from the harmonic
    # orbit, so the state-norm radius is far above the single-node case
    noise = NoiseBounds(rho_W=0.0, rho_V=np.full(6, rho_v),
                        rho_X=25.0, rho_U=0.0)
    return Scenario(name="example2", model=model, sensors=sensors,
                    config=config, noise=noise, Ts=SAMPLING_INTERVAL)


def sample_initial_state(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    if scenario.name == "example1":
        w1 = slow_mode_frequency()
        phase = rng.uniform(0.0, 2.0 * math.pi)
        c, s = math.cos(phase), math.sin(phase)
        return np.array([0.618 * c, -0.618 * w1 * s, c, -w1 * s])
    if scenario.name == "example2":
        return np.tile(HARMONIC_STATE, 6) + rng.uniform(-5.0, 5.0, 24)
    raise ValueError(f"unknown scenario {scenario.name!r}")


def sample_prior(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-PRIOR_RADIUS, PRIOR_RADIUS, scenario.model.n)


@dataclass(frozen=True)
class ExperimentSpec:
    """Which scenario to run, how many trials, and what to sweep."""

    scenario: str = "example1"
    trials: int = 20
    duration_s: float = 40.0
    seed: int = 0
    variants: tuple = ("lsmhe", "pwmhe")
    workers: int = 1
    shrinking_warmup: bool = True
    normalized: bool = True
    armse_window: tuple = (25.0, 40.0)
    sweep_variable: str | None = None
    sweep_grid: tuple = ()
    N: int | None = None
    tau: float | None = None
    rho_v: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        steps = self.duration_s / SAMPLING_INTERVAL
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("duration must be a multiple of the sampling interval")


def build_scenario(spec: ExperimentSpec, *, tau=None, rho_v=None, N=None) -> Scenario:
    tau = spec.tau if tau is None else tau
    rho_v = spec.rho_v if rho_v is None else rho_v
    N = spec.N if N is None else N
    kw = {}
    if N is not None:
        kw["N"] = int(N)
    if rho_v is not None:
        kw["rho_v"] = float(rho_v)
    if spec.epsilon is not None:
        kw["epsilon"] = float(spec.epsilon)
    if spec.scenario == "example1":
        if tau is not None:
            kw["tau"] = float(tau)
        return example1_setup(**kw)
    if spec.scenario == "example2":
        return example2_setup(**kw)
    raise ValueError(f"unknown scenario {spec.scenario!r}")


def simulate_trial(scenario: Scenario, duration_s: float, seed: int,
                   trial: int) -> tuple[Trajectory, np.ndarray]:
    """One simulated run plus the prior drawn for the trial."""
    T = int(round(duration_s / scenario.Ts))
    rng = rng_stream(seed, trial, 0)
    x0 = sample_initial_state(scenario, rng)
    prior = sample_prior(scenario, rng)
    traj = simulate(scenario.model, x0, np.zeros((T, scenario.model.m)),
                    scenario.noise, rng_seed=(seed, trial, 1))
    return traj, prior


@dataclass(frozen=True)
class RmseSeries:
    """Root-mean-square error across trials, one value per time instant."""

    times: np.ndarray
    rmse: np.ndarray
    normalized: bool
    armse_window: tuple
    variant: str


def armse(series: RmseSeries) -> float:
    """Mean RMSE over the post-transient window; rejects too-short runs."""
    lo, hi = series.armse_window
    if series.times[-1] < hi - 1e-9:
        raise ValueError(
            f"ARMSE window [{lo}, {hi}] s needs a run of at least {hi} s, "
            f"run ends at {series.times[-1]:.1f} s")
    mask = (series.times >= lo) & (series.times <= hi)
    return float(np.mean(series.rmse[mask]))


def mean_rmse_between(series: RmseSeries, lo: float, hi: float) -> float:
    mask = (series.times >= lo) & (series.times <= hi)
    if not mask.any():
        raise ValueError(f"no samples inside [{lo}, {hi}] s")
    return float(np.mean(series.rmse[mask]))


def _run_trial(spec: ExperimentSpec, trial: int):
    scenario = build_scenario(spec)
    traj, prior = simulate_trial(scenario, spec.duration_s, spec.seed, trial)
    T = traj.length
    out = {}
    for variant in spec.variants:
        st = init(scenario.model, scenario.sensors, scenario.config, variant,
                  prior, shrinking_warmup=spec.shrinking_warmup)
        records = run(st, traj)
        err = np.full(T + 1, np.nan)
        ratio = np.full(T + 1, np.nan)
        walls = []
        for rec in records:
            e = float(np.linalg.norm(rec.error_current))
            err[rec.t] = e
            ratio[rec.t] = e / float(np.linalg.norm(traj.states[rec.t]))
            walls.append(rec.wall_time_s)
        out[variant] = (err, ratio, float(np.mean(walls)) if walls else np.nan)
    return out


@dataclass(frozen=True)
class MonteCarloResult:
    times: np.ndarray
    series: dict
    step_seconds: dict
    excluded: int
    trials_used: int


def monte_carlo(spec: ExperimentSpec) -> MonteCarloResult:
    """RMSE(t) across trials per estimator variant, plus per-step timings.

    A trial whose solver fails is excluded and counted; the RMSE at each
    instant averages the squared error norms of the surviving trials,
    normalized per trial by the true state norm when requested.
    """
    scenario = build_scenario(spec)
    T = int(round(spec.duration_s / scenario.Ts))
    per_variant = {v: [] for v in spec.variants}
    timings = {v: [] for v in spec.variants}
    excluded = 0
    results = []
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(_run_trial, spec, l) for l in range(spec.trials)]
            for fut in futures:
                try:
                    results.append(fut.result())
                except EstimatorError:
                    excluded += 1
    else:
        for l in range(spec.trials):
            try:
                results.append(_run_trial(spec, l))
            except EstimatorError:
                excluded += 1
    for res in results:
        for v in spec.variants:
            err, ratio, wall = res[v]
            per_variant[v].append(ratio if spec.normalized else err)
            if not math.isnan(wall):
                timings[v].append(wall)
    times = np.arange(T + 1) * scenario.Ts
    series = {}
    for v in spec.variants:
        stack = np.asarray(per_variant[v])
        rmse = np.sqrt(np.nanmean(stack ** 2, axis=0)) if stack.size else \
            np.full(T + 1, np.nan)
        series[v] = RmseSeries(times=times, rmse=rmse, normalized=spec.normalized,
                               armse_window=spec.armse_window, variant=v)
    step_seconds = {v: (float(np.mean(t)) if t else math.nan)
                    for v, t in timings.items()}
    return MonteCarloResult(times=times, series=series, step_seconds=step_seconds,
                            excluded=excluded, trials_used=len(results))


def collect_windows(model: LtiModel, sensors: BinarySensorBank,
                    traj: Trajectory, N: int) -> list[MeasurementWindow]:
    """All full measurement windows of a run, in time order."""
    from .sensing import slide
    Y = binarize_outputs(traj.linear_outputs, sensors.thresholds)
    T = traj.length
    if T < N:
        return []
    windows = []
    w = MeasurementWindow.build(0, traj.inputs[:N], Y[:N + 1], sensors.thresholds)
    windows.append(w)
    for t in range(N + 1, T + 1):
        u_new = traj.inputs[t - 1] if model.m > 0 else np.zeros(0)
        w = slide(w, u_new, Y[t])
        windows.append(w)
    return windows


def run_observability(scenario: Scenario, duration_s: float, seed: int,
                      trial: int) -> tuple[float, float]:
    """Run-level observability measure and full-rank window fraction."""
    traj, _ = simulate_trial(scenario, duration_s, seed, trial)
    windows = collect_windows(scenario.model, scenario.sensors, traj,
                              scenario.config.N)
    powers = matrix_powers(scenario.model.A, max(scenario.config.N, 1))
    n = scenario.model.n
    delta = math.inf
    full = 0
    for w in windows:
        rep = observability_matrix(scenario.model, w, powers)
        delta = min(delta, rep.min_singular_value)
        full += int(rep.rank == n)
    return float(delta), full / len(windows)


@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    delta_mean: float
    delta_min: float
    rank_fraction: float


def sweep_observability(spec: ExperimentSpec) -> list[SweepRow]:
    """Mean-over-trials run-level observability measure along a grid.

    Sweeping the window length keeps the threshold fixed and vice versa;
    trials share their random draws across grid points, which pairs the
    comparisons and sharpens the contrast between grid values.
    """
    if spec.sweep_variable not in ("N", "tau"):
        raise ValueError("sweep_variable must be 'N' or 'tau'")
    if not spec.sweep_grid:
        raise ValueError("sweep grid must be nonempty")
    rows = []
    for value in spec.sweep_grid:
        kw = {"N": int(value)} if spec.sweep_variable == "N" else {"tau": value}
        scenario = build_scenario(spec, **kw)
        deltas, fracs = [], []
        for l in range(spec.trials):
            d, f = run_observability(scenario, spec.duration_s, spec.seed, l)
            deltas.append(d)
            fracs.append(f)
        rows.append(SweepRow(variable=spec.sweep_variable, value=float(value),
                             delta_mean=float(np.mean(deltas)),
                             delta_min=float(np.min(deltas)),
                             rank_fraction=float(np.mean(fracs))))
    return rows


def sweep_armse(spec: ExperimentSpec) -> list[tuple]:
    """ARMSE along a threshold or noise-level grid, per estimator variant."""
    if spec.sweep_variable not in ("tau", "rho_v"):
        raise ValueError("sweep_variable must be 'tau' or 'rho_v'")
    if not spec.sweep_grid:
        raise ValueError("sweep grid must be nonempty")
    rows = []
    for value in spec.sweep_grid:
        if spec.sweep_variable == "tau":
            point = replace(spec, tau=float(value), sweep_variable=None,
                            sweep_grid=())
        else:
            point = replace(spec, rho_v=float(value), sweep_variable=None,
                            sweep_grid=())
        result = monte_carlo(point)
        for v in spec.variants:
            rows.append((spec.sweep_variable, float(value), v,
                         armse(result.series[v])))
    return rows


def timing_table(N_grid=(1, 5, 20, 35, 50, 100, 150), *, steps: int = 40,
                 seed: int = 0) -> list[tuple]:
    """Median per-step solver wall time for both estimators at each horizon.

    Warm-started solvers on the single-oscillator scenario; absolute
    numbers are hardware-dependent and reported, not asserted.
    """
    rows = []
    for N in N_grid:
        scenario = example1_setup(N=int(N))
        duration = (int(N) + steps) * scenario.Ts
        traj, prior = simulate_trial(scenario, duration, seed, 0)
        entry = {"N": int(N)}
        for variant in ("lsmhe", "pwmhe"):
            st = init(scenario.model, scenario.sensors, scenario.config,
                      variant, prior)
            records = run(st, traj)
            walls = [r.wall_time_s for r in records[2:]]
            entry[variant] = float(np.median(walls)) if walls else math.nan
        rows.append((entry["N"], entry["lsmhe"], entry["pwmhe"]))
    return rows


def write_rmse_csv(path, result: MonteCarloResult) -> None:
    variants = sorted(result.series)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["time_s"] + [f"rmse_{v}" for v in variants])
        for k, t in enumerate(result.times):
            w.writerow([repr(float(t))]
                       + [repr(float(result.series[v].rmse[k])) for v in variants])


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sweep_variable", "value", "delta_mean", "delta_min",
                    "rank_fraction"])
        for r in rows:
            w.writerow([r.variable, repr(r.value), repr(r.delta_mean),
                        repr(r.delta_min), repr(r.rank_fraction)])


def write_armse_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sweep_variable", "value", "variant", "armse"])
        for var, value, variant, a in rows:
            w.writerow([var, repr(value), variant, repr(a)])


def write_timing_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["N", "lsmhe_step_s", "pwmhe_step_s"])
        for N, a, b in rows:
            w.writerow([N, repr(a), repr(b)])


def write_trajectory_csv(path, traj: Trajectory, Ts: float) -> None:
    n = traj.states.shape[1]
    p = traj.linear_outputs.shape[1]
    m = traj.inputs.shape[1]
    header = (["t", "time_s"] + [f"x_{j}" for j in range(n)]
              + [f"z_{i}" for i in range(p)] + [f"u_{j}" for j in range(m)])
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for t in range(traj.states.shape[0]):
            row = [t, repr(t * Ts)]
            row += [repr(float(v)) for v in traj.states[t]]
            row += [repr(float(v)) for v in traj.linear_outputs[t]]
            if t < traj.inputs.shape[0]:
                row += [repr(float(v)) for v in traj.inputs[t]]
            else:
                row += [""] * m
            w.writerow(row)
