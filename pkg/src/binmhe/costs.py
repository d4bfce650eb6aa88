"""Window cost functions for the two moving-horizon estimators.

Both costs share an arrival term ||x_hat_{t-N} - x_bar||^2_P and a
dynamics-mismatch term sum_k ||x_hat_{k+1} - A x_hat_k - B u_k||^2_Q.
They differ in how binary measurements enter:

* the least-squares (LSMHE) cost charges R^i ||C^i x_hat_k - tau^i||^2
  only at each sensor's switching instants, which keeps the whole cost a
  strictly convex quadratic with a block-tridiagonal Hessian;
* the piecewise (PWMHE) cost charges the same term at every instant of
  the window, gated by a sign-mismatch indicator, yielding a strictly
  convex, continuously differentiable, piecewise-quadratic cost.

Candidates are the N+1 stacked state estimates of a window, handled as
(N+1, n) arrays (flat vectors are accepted and reshaped).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .linsys import LtiModel
from .sensing import MeasurementWindow


class ConfigurationError(ValueError):
    """Estimator weights or options violate their contracts."""


def _check_spd(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError(f"{name} must be square")
    if not np.allclose(M, M.T, atol=1e-12 * (1 + np.abs(M).max())):
        raise ConfigurationError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ConfigurationError(f"{name} must be positive definite") from None
    return M


@dataclass(frozen=True)
class EstimatorConfig:
    """Weights, horizon and solver options shared by all estimator variants.

    state_box, when present, is a (lower, upper) pair of n-vectors applied
    to every instant of the window by the piecewise solver.  The midpoint
    flag moves the LSMHE switching penalty from the crossing's left
    endpoint to the average of the two straddling estimates.
    """

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    N: int
    state_box: tuple[np.ndarray, np.ndarray] | None = None
    grad_tol: float = 1e-8
    max_iter: int = 500
    switch_cost_at_midpoint: bool = False

    def __post_init__(self):
        P = _check_spd(self.P, "P")
        Q = _check_spd(self.Q, "Q")
        R = np.atleast_1d(np.asarray(self.R, dtype=float))
        if np.any(R <= 0):
            raise ConfigurationError("every output weight R^i must be positive")
        if self.N < 1:
            raise ConfigurationError("horizon N must be at least 1")
        box = self.state_box
        if box is not None:
            lo = np.asarray(box[0], dtype=float)
            hi = np.asarray(box[1], dtype=float)
            if lo.shape != hi.shape or np.any(lo >= hi):
                raise ConfigurationError("state_box lower bounds must be below uppers")
            box = (lo, hi)
        if self.grad_tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("solver tolerances must be positive")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "state_box", box)


@dataclass(frozen=True)
class WindowEstimate:
    """Optimal window estimates with the achieved cost and solver diagnostics."""

    estimates: np.ndarray
    cost: float
    iterations: int
    grad_norm: float

    @property
    def window_start(self) -> np.ndarray:
        return self.estimates[0]

    @property
    def current(self) -> np.ndarray:
        return self.estimates[-1]


@dataclass(frozen=True)
class QuadraticForm:
    """Quadratic chi' H chi + 2 chi' g + r in block-tridiagonal storage.

    diag_blocks[k] is the n x n diagonal block of instant k and
    upper_blocks[k] the coupling block between instants k and k+1; H is
    symmetric so the sub-diagonal blocks are the transposes.
    """

    diag_blocks: np.ndarray
    upper_blocks: np.ndarray
    g: np.ndarray
    r: float

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag_blocks.shape[1]

    @property
    def H(self) -> sparse.csr_matrix:
        n = self.block_size
        K = self.diag_blocks.shape[0]
        blocks = [[None] * K for _ in range(K)]
        for k in range(K):
            blocks[k][k] = sparse.csr_matrix(self.diag_blocks[k])
            if k + 1 < K:
                blocks[k][k + 1] = sparse.csr_matrix(self.upper_blocks[k])
                blocks[k + 1][k] = sparse.csr_matrix(self.upper_blocks[k].T)
        return sparse.bmat(blocks, format="csr")

    def value(self, chi) -> float:
        chi = np.asarray(chi, dtype=float).ravel()
        return float(chi @ self.matvec(chi) + 2.0 * chi @ self.g + self.r)

    def matvec(self, chi) -> np.ndarray:
        n = self.block_size
        K = self.diag_blocks.shape[0]
        X = np.asarray(chi, dtype=float).reshape(K, n)
        out = np.einsum("kij,kj->ki", self.diag_blocks, X)
        if K > 1:
            out[:-1] += np.einsum("kij,kj->ki", self.upper_blocks, X[1:])
            out[1:] += np.einsum("kji,kj->ki", self.upper_blocks, X[:-1])
        return out.ravel()

    def to_banded(self) -> np.ndarray:
        """Upper symmetric banded storage for scipy.linalg.solveh_banded."""
        return banded_from_blocks(self.diag_blocks, self.upper_blocks)


def banded_from_blocks(diag_blocks: np.ndarray, upper_blocks: np.ndarray) -> np.ndarray:
    n = diag_blocks.shape[1]
    K = diag_blocks.shape[0]
    dim = K * n
    u = 2 * n - 1 if K > 1 else n - 1
    ab = np.zeros((u + 1, dim))
    for k in range(K):
        off = k * n
        for a in range(n):
            i = off + a
            for b in range(a, n):
                j = off + b
                ab[u + i - j, j] = diag_blocks[k, a, b]
        if k + 1 < K:
            for a in range(n):
                i = off + a
                for b in range(n):
                    j = off + n + b
                    ab[u + i - j, j] = upper_blocks[k, a, b]
    return ab


def _candidate(window: MeasurementWindow, model: LtiModel, candidate) -> np.ndarray:
    X = np.asarray(candidate, dtype=float).reshape(window.horizon + 1, model.n)
    return X


def _sensor_weights(config: EstimatorConfig, p: int) -> np.ndarray:
    R = np.broadcast_to(config.R, (p,))
    return R


def _quad_terms(config, model, window, prediction, X):
    """Arrival and dynamics contributions shared by both costs."""
    d0 = X[0] - np.asarray(prediction, dtype=float)
    arrival = float(d0 @ config.P @ d0)
    if window.horizon == 0:
        return arrival, 0.0
    W = X[1:] - X[:-1] @ model.A.T - window.inputs @ model.B.T
    dyn = float(np.einsum("ki,ij,kj->", W, config.Q, W))
    return arrival, dyn


def window_thresholds(window: MeasurementWindow) -> np.ndarray:
    if window.thresholds is None:
        raise ConfigurationError("window carries no sensor thresholds")
    return window.thresholds


def lsmhe_cost(config: EstimatorConfig, model: LtiModel, window: MeasurementWindow,
               prediction, candidate) -> float:
    """Least-squares window cost: threshold distance charged at switching instants."""
    X = _candidate(window, model, candidate)
    arrival, dyn = _quad_terms(config, model, window, prediction, X)
    taus = window_thresholds(window)
    R = _sensor_weights(config, model.p)
    out = 0.0
    for i, ks in enumerate(window.switching_sets):
        Ci = model.C[i]
        for k in ks:
            e = k - window.start
            if config.switch_cost_at_midpoint:
                z = 0.5 * (Ci @ (X[e] + X[e + 1]))
            else:
                z = Ci @ X[e]
            out += R[i] * (z - taus[i]) ** 2
    return arrival + dyn + out


def pwmhe_cost(config: EstimatorConfig, model: LtiModel, window: MeasurementWindow,
               prediction, candidate) -> float:
    """Piecewise window cost: sign-inconsistency penalty at every instant."""
    X = _candidate(window, model, candidate)
    arrival, dyn = _quad_terms(config, model, window, prediction, X)
    taus = window_thresholds(window)
    R = _sensor_weights(config, model.p)
    Zhat = X @ model.C.T
    resid = Zhat - taus
    active = (resid * window.binary_outputs) < 0
    out = float(np.sum(active * (resid ** 2) * R))
    return arrival + dyn + out


def pwmhe_grad(config: EstimatorConfig, model: LtiModel, window: MeasurementWindow,
               prediction, candidate) -> np.ndarray:
    """Exact gradient of the piecewise cost, continuous across the thresholds."""
    X = _candidate(window, model, candidate)
    taus = window_thresholds(window)
    R = _sensor_weights(config, model.p)
    G = np.zeros_like(X)
    G[0] += 2.0 * config.P @ (X[0] - np.asarray(prediction, dtype=float))
    if window.horizon > 0:
        W = X[1:] - X[:-1] @ model.A.T - window.inputs @ model.B.T
        QW = W @ config.Q
        G[1:] += 2.0 * QW
        G[:-1] -= 2.0 * QW @ model.A
    Zhat = X @ model.C.T
    resid = Zhat - taus
    active = (resid * window.binary_outputs) < 0
    G += 2.0 * ((active * resid) * R) @ model.C
    return G.ravel()


def pwmhe_active_set(model: LtiModel, window: MeasurementWindow, candidate) -> np.ndarray:
    """Boolean (N+1, p) mask of instants whose mismatch penalty is active."""
    X = np.asarray(candidate, dtype=float).reshape(window.horizon + 1, model.n)
    taus = window_thresholds(window)
    resid = X @ model.C.T - taus
    return (resid * window.binary_outputs) < 0


def base_blocks(config: EstimatorConfig, model: LtiModel, horizon: int):
    """Block-tridiagonal pieces of the arrival + dynamics quadratic."""
    n = model.n
    A, Q, P = model.A, config.Q, config.P
    AQ = A.T @ Q
    AQA = AQ @ A
    diag = np.zeros((horizon + 1, n, n))
    diag[0] = P
    if horizon > 0:
        diag[:-1] += AQA
        diag[1:] += Q
    upper = np.tile(-AQ, (max(horizon, 0), 1, 1)) if horizon > 0 else np.zeros((0, n, n))
    return diag, upper


def lsmhe_quadratic(config: EstimatorConfig, model: LtiModel,
                    window: MeasurementWindow, prediction) -> QuadraticForm:
    """Explicit quadratic-form data (H, g, r) of the least-squares cost.

    Built in (N+1)n variables directly from the cost definition; the
    evaluation identity lsmhe_cost(chi) == chi'H chi + 2 chi'g + r holds
    for every candidate and is enforced by the test suite.
    """
    n = model.n
    N = window.horizon
    taus = window_thresholds(window)
    R = _sensor_weights(config, model.p)
    xbar = np.asarray(prediction, dtype=float)
    diag, upper = base_blocks(config, model, N)
    diag = diag.copy()
    upper = upper.copy()
    g = np.zeros((N + 1, n))
    g[0] -= config.P @ xbar
    r = float(xbar @ config.P @ xbar)
    if N > 0 and model.m > 0:
        BU = window.inputs @ model.B.T
        QBU = BU @ config.Q
        g[1:] -= QBU
        g[:-1] += QBU @ model.A
        r += float(np.einsum("ki,ik->", QBU, BU.T))
    for i, ks in enumerate(window.switching_sets):
        Ci = model.C[i]
        CC = np.outer(Ci, Ci)
        for k in ks:
            e = k - window.start
            if config.switch_cost_at_midpoint:
                diag[e] += 0.25 * R[i] * CC
                diag[e + 1] += 0.25 * R[i] * CC
                upper[e] += 0.25 * R[i] * CC
                g[e] -= 0.5 * R[i] * taus[i] * Ci
                g[e + 1] -= 0.5 * R[i] * taus[i] * Ci
            else:
                diag[e] += R[i] * CC
                g[e] -= R[i] * taus[i] * Ci
            r += R[i] * taus[i] ** 2
    return QuadraticForm(diag_blocks=diag, upper_blocks=upper, g=g.ravel(), r=r)
