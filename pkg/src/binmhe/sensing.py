"""Binary threshold sensors and sliding measurement windows.

A sensor emits +1 when its linear output reaches the threshold and -1
below it.  The estimators consume windows of N+1 consecutive binary
output vectors together with the N inputs applied inside the window and,
per sensor, the set of switching instants k where y_k * y_{k+1} < 0.
Switching instants are stored as absolute times so the exponent
bookkeeping k - t + N of the observability matrices stays explicit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class InvalidMeasurementError(ValueError):
    """A supposed binary measurement is not in {-1, +1}."""


def binarize(z: float, tau: float) -> int:
    """Threshold a scalar output: +1 iff z >= tau (boundary maps to +1)."""
    return 1 if z >= tau else -1


def binarize_outputs(Z, thresholds) -> np.ndarray:
    """Vectorized thresholding of an output array against per-sensor thresholds."""
    Z = np.asarray(Z, dtype=float)
    return np.where(Z >= np.asarray(thresholds, dtype=float), 1.0, -1.0)


def sign_mismatch(z_hat: float, tau: float, y) -> int:
    """1 iff the expected output z_hat contradicts the binary measurement y.

    The mismatch indicator is 1 when (z_hat - tau) * y < 0 and 0 otherwise;
    in particular it is 0 on the boundary z_hat = tau, which makes the
    penalty term it gates continuously differentiable.
    """
    return 1 if (z_hat - tau) * y < 0 else 0


def _check_binary(y: np.ndarray):
    if not np.all(np.abs(y) == 1.0):
        bad = y[np.abs(y) != 1.0]
        raise InvalidMeasurementError(f"binary outputs must be +-1, got {bad[:5]}")


def switching_set(y, start: int) -> list[int]:
    """Absolute instants k with y_k * y_{k+1} < 0, in ascending order."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] < 2:
        raise InvalidMeasurementError("switching_set needs at least two samples")
    _check_binary(y)
    idx = np.nonzero(y[:-1] * y[1:] < 0)[0]
    return [start + int(k) for k in idx]


@dataclass(frozen=True)
class BinarySensorBank:
    """Per-sensor thresholds tau^i and measurement-noise amplitude bounds."""

    thresholds: np.ndarray
    noise_bounds: np.ndarray

    def __post_init__(self):
        tau = np.atleast_1d(np.asarray(self.thresholds, dtype=float))
        rho = np.atleast_1d(np.asarray(self.noise_bounds, dtype=float))
        if not np.all(np.isfinite(tau)):
            raise InvalidMeasurementError("thresholds must be finite")
        if rho.shape != tau.shape:
            raise InvalidMeasurementError("noise_bounds must match thresholds in length")
        if np.any(rho < 0):
            raise InvalidMeasurementError("noise bounds must be nonnegative")
        object.__setattr__(self, "thresholds", tau)
        object.__setattr__(self, "noise_bounds", rho)

    @property
    def p(self) -> int:
        return self.thresholds.shape[0]


@dataclass(frozen=True)
class MeasurementWindow:
    """Sliding window covering instants start .. start+horizon.

    binary_outputs holds horizon+1 rows of +-1 values, inputs the horizon
    input vectors applied inside the window, and switching_sets one tuple
    of absolute switching instants per sensor.  The thresholds used to
    binarize ride along so cost evaluation needs no extra plumbing.
    """

    start: int
    horizon: int
    inputs: np.ndarray
    binary_outputs: np.ndarray
    switching_sets: tuple[tuple[int, ...], ...]
    thresholds: np.ndarray | None = None

    @classmethod
    def build(cls, start: int, inputs, binary_outputs,
              thresholds=None) -> "MeasurementWindow":
        Y = np.asarray(binary_outputs, dtype=float)
        if Y.ndim != 2:
            raise InvalidMeasurementError("binary_outputs must be (horizon+1) x p")
        _check_binary(Y)
        N = Y.shape[0] - 1
        U = np.asarray(inputs, dtype=float)
        if U.shape[0] != N:
            raise InvalidMeasurementError(
                f"window with horizon {N} needs {N} inputs, got {U.shape[0]}")
        if N == 0:
            sets = tuple(() for _ in range(Y.shape[1]))
        else:
            sets = tuple(tuple(switching_set(Y[:, i], start))
                         for i in range(Y.shape[1]))
        if thresholds is not None:
            thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
            if thresholds.shape[0] != Y.shape[1]:
                raise InvalidMeasurementError("threshold count must match sensor count")
        return cls(start=start, horizon=N, inputs=U, binary_outputs=Y,
                   switching_sets=sets, thresholds=thresholds)

    @property
    def t_end(self) -> int:
        return self.start + self.horizon

    @property
    def p(self) -> int:
        return self.binary_outputs.shape[1]

    def output_at(self, k: int, i: int) -> float:
        """Binary output of sensor i at absolute time k."""
        return self.binary_outputs[k - self.start, i]


def slide(window: MeasurementWindow, new_input, new_binary) -> MeasurementWindow:
    """Advance the window one step: drop the oldest instant, append a new one."""
    new_binary = np.asarray(new_binary, dtype=float).reshape(1, -1)
    _check_binary(new_binary)
    if new_binary.shape[1] != window.p:
        raise InvalidMeasurementError("new_binary has wrong sensor count")
    Y = np.vstack([window.binary_outputs[1:], new_binary])
    new_input = np.asarray(new_input, dtype=float).reshape(1, -1)
    U = np.vstack([window.inputs[1:], new_input]) if window.horizon > 0 else window.inputs
    return MeasurementWindow.build(window.start + 1, U, Y, window.thresholds)


def write_measurement_csv(path, binary_outputs, start: int = 0) -> None:
    """Log binary measurements, one row per (time, sensor) pair."""
    Y = np.asarray(binary_outputs)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["time", "sensor_index", "y"])
        for t in range(Y.shape[0]):
            for i in range(Y.shape[1]):
                w.writerow([start + t, i, int(Y[t, i])])


def read_measurement_csv(path) -> tuple[np.ndarray, int]:
    """Read a measurement log back into a (T+1) x p array of +-1 values."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        r = csv.DictReader(f)
        for rec in r:
            rows.append((int(rec["time"]), int(rec["sensor_index"]), float(rec["y"])))
    if not rows:
        raise InvalidMeasurementError(f"empty measurement log {path}")
    times = sorted({t for t, _, _ in rows})
    sensors = sorted({i for _, i, _ in rows})
    start = times[0]
    if times != list(range(start, start + len(times))):
        raise InvalidMeasurementError("measurement log has time gaps")
    Y = np.zeros((len(times), len(sensors)))
    for t, i, y in rows:
        Y[t - start, i] = y
    _check_binary(Y)
    return Y, start
