"""Observability analysis over switching instants.

Every output switching carries an (uncertain) linear measurement of the
state, so the rows C^i A^(k - t + N), one per switching instant k of
sensor i, form the observability matrix of a window.  Its smallest
singular value is the window's observability measure; the infimum over
windows underwrites the stability certificate of :mod:`binmhe.stability`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linsys import LtiModel
from .sensing import MeasurementWindow


def matrix_powers(A: np.ndarray, kmax: int) -> np.ndarray:
    """Stack A^0 .. A^kmax along the first axis."""
    n = A.shape[0]
    out = np.empty((kmax + 1, n, n))
    out[0] = np.eye(n)
    for e in range(1, kmax + 1):
        out[e] = out[e - 1] @ A
    return out


@dataclass(frozen=True)
class ObservabilityReport:
    """Stacked switching-instant observability matrix and its conditioning.

    min_singular_value is zero whenever the row count is below the state
    dimension or the rows are rank deficient; it is positive iff the
    window uniquely pins down the window-start state.
    """

    theta: np.ndarray
    rank: int
    min_singular_value: float
    per_sensor_rows: tuple[tuple[int, int], ...]


def observability_matrix(model: LtiModel, window: MeasurementWindow,
                         powers: np.ndarray | None = None) -> ObservabilityReport:
    """Stack rows C^i A^(k - t + N) over each sensor's switching instants."""
    n = model.n
    N = window.horizon
    if powers is None:
        powers = matrix_powers(model.A, max(N, 1))
    rows = []
    labels = []
    for i, ks in enumerate(window.switching_sets):
        Ci = model.C[i]
        for k in ks:
            e = k - window.start
            if not 0 <= e <= N:
                raise ValueError(f"switching instant {k} outside window")
            rows.append(Ci @ powers[e])
            labels.append((i, k))
    theta = np.array(rows) if rows else np.zeros((0, n))
    if theta.shape[0] == 0:
        return ObservabilityReport(theta=theta, rank=0, min_singular_value=0.0,
                                   per_sensor_rows=())
    s = np.linalg.svd(theta, compute_uv=False)
    tol = max(theta.shape[0], n) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    delta = float(s[-1]) if theta.shape[0] >= n else 0.0
    if rank < n:
        delta = float(s[-1]) if theta.shape[0] >= n else 0.0
    return ObservabilityReport(theta=theta, rank=rank, min_singular_value=delta,
                               per_sensor_rows=tuple(labels))


def uniform_observability(model: LtiModel, windows) -> float:
    """Infimum of the per-window observability measure over the given windows."""
    windows = list(windows)
    if not windows:
        raise ValueError("at least one window is required")
    kmax = max(w.horizon for w in windows)
    powers = matrix_powers(model.A, max(kmax, 1))
    return min(observability_matrix(model, w, powers).min_singular_value
               for w in windows)


def check_uniform_observability(report: ObservabilityReport, n: int) -> bool:
    """True iff the window's switching rows span the full state space."""
    return report.rank == n


def switching_density_condition(model: LtiModel, nu_t: int, N: int) -> bool:
    """Sufficient switching-count test for full observability rank.

    Requires the per-window density of switchings nu_t / N to reach
    2(n-1)/N plus the ratio of the largest eigenvalue angle of A to pi
    (the system-bandwidth to Nyquist-bandwidth ratio).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    eigs = np.linalg.eigvals(model.A)
    omega_max = float(np.max(np.abs(np.angle(eigs))))
    return nu_t / N >= 2 * (model.n - 1) / N + omega_max / np.pi
