"""Window solvers: closed-form least squares, projected Newton, and barrier paths.

solve_lsmhe factors the block-tridiagonal quadratic of the least-squares
cost with a banded Cholesky solve.  solve_pwmhe minimizes the piecewise
cost with damped projected Newton steps: at each iterate the active
sign-mismatch set defines a local quadratic whose Newton direction is
computed by the same banded factorization and damped by an Armijo line
search.  Linear inequality constraints (threshold consistency rows and
disturbance boxes) are handled by a log-barrier path with an exact
KKT polish for the quadratic cost.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .costs import (ConfigurationError, EstimatorConfig, QuadraticForm,
                    WindowEstimate, banded_from_blocks, base_blocks,
                    lsmhe_cost, lsmhe_quadratic, pwmhe_cost, pwmhe_grad,
                    window_thresholds)
from .linsys import LtiModel
from .sensing import BinarySensorBank, MeasurementWindow

ARMIJO_BACKTRACK = 0.5
ARMIJO_SLOPE = 1e-4


@dataclass(frozen=True)
class ConstraintSet:
    """Linear inequality rows a'x_k (+ b'x_{k+1}) <= bound over a window.

    Threshold-consistency rows have one nonzero state block each;
    disturbance rows couple two adjacent blocks.  The solver enforces the
    rows with a small strictness margin since the originals are strict
    inequalities.
    """

    num_instants: int
    row_blocks: np.ndarray
    row_coeffs: np.ndarray
    row_coeffs_next: np.ndarray | None
    bounds: np.ndarray
    margin: float

    @property
    def n_rows(self) -> int:
        return self.bounds.shape[0]

    @property
    def Gamma(self) -> sparse.csr_matrix:
        n = self.row_coeffs.shape[1]
        dim = self.num_instants * n
        data, indices, indptr = [], [], [0]
        for r in range(self.n_rows):
            k = int(self.row_blocks[r])
            data.extend(self.row_coeffs[r])
            indices.extend(range(k * n, (k + 1) * n))
            if self.row_coeffs_next is not None and np.any(self.row_coeffs_next[r]):
                data.extend(self.row_coeffs_next[r])
                indices.extend(range((k + 1) * n, (k + 2) * n))
            indptr.append(len(data))
        return sparse.csr_matrix((data, indices, indptr),
                                 shape=(self.n_rows, dim))

    @property
    def gamma(self) -> np.ndarray:
        return self.bounds

    def values(self, X: np.ndarray) -> np.ndarray:
        """Row activations a'x_k (+ b'x_{k+1}) for a (K, n) candidate."""
        out = np.einsum("rj,rj->r", self.row_coeffs, X[self.row_blocks])
        if self.row_coeffs_next is not None:
            out = out + np.einsum("rj,rj->r", self.row_coeffs_next,
                                  X[self.row_blocks + 1])
        return out

    def max_violation(self, X: np.ndarray, margin: float = 0.0) -> float:
        """Largest amount by which any row exceeds bound - margin."""
        return float(np.max(self.values(X) - (self.bounds - margin), initial=-np.inf))


@dataclass(frozen=True)
class SolveReport:
    estimate: WindowEstimate
    status: str
    iterations: int
    residual: float


def build_threshold_constraints(window: MeasurementWindow,
                                sensors: BinarySensorBank,
                                model: LtiModel) -> ConstraintSet:
    """Half-spaces consistent with every binary measurement in the window.

    A reading y at instant k means y (C^i x_k - tau^i) + rho_V^i > 0, i.e.
    the expected output cannot sit further than the noise amplitude on the
    wrong side of the threshold.  Rows are packed as -y C^i x_k <= -y tau^i
    + rho_V^i for every instant and sensor.
    """
    p = sensors.p
    N = window.horizon
    blocks, coeffs, bounds = [], [], []
    for k_rel in range(N + 1):
        for i in range(p):
            y = window.binary_outputs[k_rel, i]
            blocks.append(k_rel)
            coeffs.append(-y * model.C[i])
            bounds.append(-y * sensors.thresholds[i] + sensors.noise_bounds[i])
    scale = max(1.0, float(np.max(np.abs(sensors.thresholds) + sensors.noise_bounds)))
    return ConstraintSet(num_instants=N + 1,
                         row_blocks=np.asarray(blocks, dtype=int),
                         row_coeffs=np.asarray(coeffs, dtype=float),
                         row_coeffs_next=None,
                         bounds=np.asarray(bounds, dtype=float),
                         margin=1e-9 * scale)


def disturbance_rows(window: MeasurementWindow, model: LtiModel,
                     rho_W: float) -> ConstraintSet:
    """Component-wise box |x_{k+1} - A x_k - B u_k| <= rho_W for every step."""
    n = model.n
    N = window.horizon
    blocks, coeffs, coeffs_next, bounds = [], [], [], []
    for k in range(N):
        bu = model.B @ window.inputs[k] if model.m > 0 else np.zeros(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            blocks.append(k)
            coeffs.append(-model.A[j])
            coeffs_next.append(e)
            bounds.append(rho_W + bu[j])
            blocks.append(k)
            coeffs.append(model.A[j])
            coeffs_next.append(-e)
            bounds.append(rho_W - bu[j])
    return ConstraintSet(num_instants=N + 1,
                         row_blocks=np.asarray(blocks, dtype=int),
                         row_coeffs=np.asarray(coeffs, dtype=float),
                         row_coeffs_next=np.asarray(coeffs_next, dtype=float),
                         bounds=np.asarray(bounds, dtype=float),
                         margin=0.0)


def merge_constraints(a: ConstraintSet, b: ConstraintSet) -> ConstraintSet:
    if a.num_instants != b.num_instants:
        raise ConfigurationError("constraint sets cover different windows")
    nxt_a = a.row_coeffs_next
    nxt_b = b.row_coeffs_next
    if nxt_a is None and nxt_b is None:
        nxt = None
    else:
        n = a.row_coeffs.shape[1]
        nxt_a = np.zeros_like(a.row_coeffs) if nxt_a is None else nxt_a
        nxt_b = np.zeros_like(b.row_coeffs) if nxt_b is None else nxt_b
        nxt = np.vstack([nxt_a, nxt_b])
    return ConstraintSet(num_instants=a.num_instants,
                         row_blocks=np.concatenate([a.row_blocks, b.row_blocks]),
                         row_coeffs=np.vstack([a.row_coeffs, b.row_coeffs]),
                         row_coeffs_next=nxt,
                         bounds=np.concatenate([a.bounds, b.bounds]),
                         margin=max(a.margin, b.margin))


def _named_spd_failure(config) -> ConfigurationError:
    for name, M in (("P", config.P), ("Q", config.Q)):
        if np.min(np.linalg.eigvalsh(M)) <= 0:
            return ConfigurationError(f"weight {name} is not positive definite")
    return ConfigurationError("quadratic form is numerically indefinite")


def _solve_banded(ab: np.ndarray, rhs: np.ndarray, config) -> np.ndarray:
    try:
        return sla.solveh_banded(ab, rhs)
    except np.linalg.LinAlgError:
        raise _named_spd_failure(config) from None


def solve_lsmhe(config: EstimatorConfig, model: LtiModel,
                window: MeasurementWindow, prediction) -> SolveReport:
    """Closed-form global minimizer of the least-squares cost.

    Solves H chi = -g by a banded symmetric factorization, with one step
    of iterative refinement to push the stationarity residual below
    1e-9 * (1 + ||g||).
    """
    qf = lsmhe_quadratic(config, model, window, prediction)
    ab = qf.to_banded()
    chi = _solve_banded(ab, -qf.g, config)
    tol = 1e-9 * (1.0 + np.linalg.norm(qf.g))
    resid = qf.matvec(chi) + qf.g
    if np.linalg.norm(resid) > 0.25 * tol:
        chi = chi - _solve_banded(ab, resid, config)
        resid = qf.matvec(chi) + qf.g
    X = chi.reshape(window.horizon + 1, model.n)
    cost = lsmhe_cost(config, model, window, prediction, X)
    grad_norm = 2.0 * float(np.linalg.norm(resid))
    est = WindowEstimate(estimates=X, cost=cost, iterations=1, grad_norm=grad_norm)
    return SolveReport(estimate=est, status="optimal", iterations=1,
                       residual=float(np.linalg.norm(resid)) / (1.0 + np.linalg.norm(qf.g)))


def _pwmhe_hessian_blocks(config, model, window, X, diag_base, upper_base):
    """H-convention blocks of the local quadratic at the current active set."""
    taus = window_thresholds(window)
    R = np.broadcast_to(config.R, (model.p,))
    resid = X @ model.C.T - taus
    active = (resid * window.binary_outputs) < 0
    diag = diag_base.copy()
    if np.any(active):
        CC = np.einsum("pi,pj->pij", model.C, model.C)
        diag += np.einsum("kp,pij->kij", active * R, CC)
    return diag, upper_base


def _eliminate(diag, upper, g, mask):
    """Pin masked variables by zeroing their rows/columns and unit diagonal."""
    K, n, _ = diag.shape
    M = mask.reshape(K, n)
    for k in range(K):
        m = M[k]
        if not m.any():
            continue
        diag[k][m, :] = 0.0
        diag[k][:, m] = 0.0
        diag[k][np.ix_(m, m)] = np.eye(int(m.sum()))
        if k + 1 < K:
            upper[k][m, :] = 0.0
        if k > 0:
            upper[k - 1][:, m] = 0.0
    g = g.copy()
    g[mask] = 0.0
    return diag, upper, g


def _project(x, lo, hi):
    return np.clip(x, lo, hi) if lo is not None else x


def _box_arrays(config, K, n):
    if config.state_box is None:
        return None, None
    lo = np.tile(config.state_box[0], K)
    hi = np.tile(config.state_box[1], K)
    return lo, hi


def solve_pwmhe(config: EstimatorConfig, model: LtiModel,
                window: MeasurementWindow, prediction,
                constraints: ConstraintSet | None = None,
                x0=None) -> SolveReport:
    """Minimize the piecewise cost over the state box (and optional rows).

    Without linear rows this runs damped projected Newton; with rows it
    switches to the barrier path.  Terminates when the projected-gradient
    norm drops below config.grad_tol.
    """
    if constraints is not None and constraints.n_rows > 0:
        return _solve_with_rows(config, model, window, prediction, constraints,
                                quadratic=False, x0=x0)
    K = window.horizon + 1
    n = model.n
    lo, hi = _box_arrays(config, K, n)
    if x0 is None:
        x0 = _propagate(model, window, prediction)
    x = np.asarray(x0, dtype=float).ravel().copy()
    if lo is not None:
        x = np.clip(x, lo, hi)
    diag_base, upper_base = base_blocks(config, model, window.horizon)
    f = lambda v: pwmhe_cost(config, model, window, prediction, v)
    fx = f(x)
    costs_seen = [fx]
    for it in range(1, config.max_iter + 1):
        g = pwmhe_grad(config, model, window, prediction, x)
        if lo is None:
            pg = g
        else:
            pg = x - np.clip(x - g, lo, hi)
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm <= config.grad_tol:
            X = x.reshape(K, n)
            est = WindowEstimate(estimates=X, cost=fx, iterations=it,
                                 grad_norm=pg_norm)
            return SolveReport(estimate=est, status="optimal", iterations=it,
                               residual=pg_norm)
        X = x.reshape(K, n)
        diag, upper = _pwmhe_hessian_blocks(config, model, window, X,
                                            diag_base, upper_base)
        rhs = -0.5 * g
        if lo is not None:
            eps_b = 1e-12 * (1.0 + np.abs(x))
            at_bound = ((x <= lo + eps_b) & (g > 0)) | ((x >= hi - eps_b) & (g < 0))
            if at_bound.any():
                diag, upper, rhs = _eliminate(diag.copy(), upper.copy(), rhs,
                                              at_bound)
        ab = banded_from_blocks(diag, upper)
        d = _solve_banded(ab, rhs, config)
        if g @ d > -1e-16 * (1.0 + abs(fx)):
            d = -g
        alpha = 1.0
        while True:
            x_new = x + alpha * d
            if lo is not None:
                x_new = np.clip(x_new, lo, hi)
            f_new = f(x_new)
            if f_new <= fx + ARMIJO_SLOPE * (g @ (x_new - x)) or alpha < 2.0 ** -50:
                break
            alpha *= ARMIJO_BACKTRACK
        x, fx = x_new, f_new
        costs_seen.append(fx)
    X = x.reshape(K, n)
    g = pwmhe_grad(config, model, window, prediction, x)
    pg = g if lo is None else x - np.clip(x - g, lo, hi)
    est = WindowEstimate(estimates=X, cost=fx, iterations=config.max_iter,
                         grad_norm=float(np.linalg.norm(pg)))
    return SolveReport(estimate=est, status="max-iterations",
                       iterations=config.max_iter,
                       residual=float(np.linalg.norm(pg)))


def _propagate(model: LtiModel, window: MeasurementWindow, prediction) -> np.ndarray:
    X = np.empty((window.horizon + 1, model.n))
    X[0] = np.asarray(prediction, dtype=float)
    for k in range(window.horizon):
        X[k + 1] = model.A @ X[k] + model.B @ window.inputs[k]
    return X.ravel()


def solve_constrained_lsmhe(config: EstimatorConfig, model: LtiModel,
                            window: MeasurementWindow, prediction,
                            constraints: ConstraintSet) -> SolveReport:
    """Least-squares cost under threshold/box/disturbance rows.

    Follows a log-barrier path and finishes with an exact KKT polish on
    the identified active set; falls back to the unconstrained closed form
    when no row exists.
    """
    if constraints is None or constraints.n_rows == 0:
        if config.state_box is None:
            return solve_lsmhe(config, model, window, prediction)
    return _solve_with_rows(config, model, window, prediction, constraints,
                            quadratic=True)


def _all_rows(config, model, window, constraints):
    """Collect inequality rows: explicit set plus state-box coordinates."""
    K = window.horizon + 1
    n = model.n
    rows_b, rows_c, rows_cn, rows_bd = [], [], [], []
    margin = 0.0
    if constraints is not None and constraints.n_rows > 0:
        rows_b.append(constraints.row_blocks)
        rows_c.append(constraints.row_coeffs)
        nxt = constraints.row_coeffs_next
        rows_cn.append(np.zeros_like(constraints.row_coeffs) if nxt is None else nxt)
        rows_bd.append(constraints.bounds - constraints.margin)
        margin = constraints.margin
    if config.state_box is not None:
        lo, hi = config.state_box
        eye = np.eye(n)
        for k in range(K):
            rows_b.append(np.full(n, k))
            rows_c.append(eye)
            rows_cn.append(np.zeros((n, n)))
            rows_bd.append(hi)
            rows_b.append(np.full(n, k))
            rows_c.append(-eye)
            rows_cn.append(np.zeros((n, n)))
            rows_bd.append(-lo)
    if not rows_b:
        return None
    blocks = np.concatenate(rows_b).astype(int)
    coeffs = np.vstack(rows_c)
    coeffs_next = np.vstack(rows_cn)
    if not np.any(coeffs_next):
        coeffs_next = None
    return (blocks, coeffs, coeffs_next, np.concatenate(rows_bd), margin)


def _row_values(rows, X):
    blocks, coeffs, coeffs_next, bounds, _ = rows
    v = np.einsum("rj,rj->r", coeffs, X[blocks])
    if coeffs_next is not None:
        v = v + np.einsum("rj,rj->r", coeffs_next, X[blocks + 1])
    return v


def _row_grad_accum(rows, weights, K, n):
    """Sum_r weights[r] * row_r as a (K, n) array."""
    blocks, coeffs, coeffs_next, _, _ = rows
    G = np.zeros((K, n))
    np.add.at(G, blocks, weights[:, None] * coeffs)
    if coeffs_next is not None:
        np.add.at(G, blocks + 1, weights[:, None] * coeffs_next)
    return G


def _row_hessian_blocks(rows, weights, diag, upper):
    """Add sum_r weights[r] * row_r row_r' into block-tridiagonal storage."""
    blocks, coeffs, coeffs_next, _, _ = rows
    for r in range(blocks.shape[0]):
        w = weights[r]
        if w == 0.0:
            continue
        k = blocks[r]
        a = coeffs[r]
        diag[k] += w * np.outer(a, a)
        if coeffs_next is not None and np.any(coeffs_next[r]):
            b = coeffs_next[r]
            diag[k + 1] += w * np.outer(b, b)
            upper[k] += w * np.outer(a, b)
    return diag, upper


def _phase_one(rows, x_init, K, n, config, model, window):
    """Squared-hinge feasibility search; returns a strictly feasible point or None."""
    blocks, coeffs, coeffs_next, bounds, _ = rows
    scale = 1.0 + float(np.max(np.abs(bounds)))
    pad = 1e-6 * scale
    target = bounds - pad
    x = x_init.copy()
    reg = 1e-9
    for _ in range(200):
        X = x.reshape(K, n)
        v = _row_values(rows, X)
        viol = v - target
        act = viol > 0
        if not act.any():
            return x
        g = 2.0 * _row_grad_accum(rows, np.where(act, viol, 0.0), K, n).ravel()
        g += 2.0 * reg * (x - x_init)
        diag = np.tile(reg * np.eye(n), (K, 1, 1))
        upper = np.zeros((max(K - 1, 0), n, n))
        diag, upper = _row_hessian_blocks(rows, act.astype(float), diag, upper)
        ab = banded_from_blocks(diag, upper)
        try:
            d = sla.solveh_banded(ab, -0.5 * g)
        except np.linalg.LinAlgError:
            d = -g
        f0 = float(np.sum(np.where(act, viol, 0.0) ** 2)) + reg * float(
            np.sum((x - x_init) ** 2))
        alpha = 1.0
        for _ in range(60):
            x_new = x + alpha * d
            Xn = x_new.reshape(K, n)
            vn = _row_values(rows, Xn) - target
            fn = float(np.sum(np.maximum(vn, 0.0) ** 2)) + reg * float(
                np.sum((x_new - x_init) ** 2))
            if fn <= f0 - 1e-12 * abs(f0) or fn < f0:
                break
            alpha *= 0.5
        if fn >= f0 - 1e-16 * (1 + abs(f0)):
            x = x_new
            break
        x = x_new
    X = x.reshape(K, n)
    if np.max(_row_values(rows, X) - bounds) < -0.25 * pad:
        return x
    return None


def _solve_with_rows(config, model, window, prediction, constraints,
                     quadratic: bool, x0=None) -> SolveReport:
    K = window.horizon + 1
    n = model.n
    rows = _all_rows(config, model, window, constraints)
    if rows is None:
        return (solve_lsmhe if quadratic else solve_pwmhe)(
            config, model, window, prediction)
    blocks, coeffs, coeffs_next, bounds, margin = rows
    qf = lsmhe_quadratic(config, model, window, prediction)
    diag_base, upper_base = base_blocks(config, model, window.horizon)

    def f_grad(x):
        if quadratic:
            return qf.value(x), 2.0 * (qf.matvec(x) + qf.g)
        return (pwmhe_cost(config, model, window, prediction, x),
                pwmhe_grad(config, model, window, prediction, x))

    def hess_blocks(x):
        if quadratic:
            return qf.diag_blocks.copy(), qf.upper_blocks.copy()
        X = x.reshape(K, n)
        d, u = _pwmhe_hessian_blocks(config, model, window, X,
                                     diag_base, upper_base)
        return d.copy(), u.copy()

    x_start = _propagate(model, window, prediction) if x0 is None else \
        np.asarray(x0, dtype=float).ravel().copy()
    v = _row_values(rows, x_start.reshape(K, n))
    if np.max(v - bounds) >= -1e-12:
        found = _phase_one(rows, x_start, K, n, config, model, window)
        if found is None:
            est = WindowEstimate(estimates=x_start.reshape(K, n),
                                 cost=f_grad(x_start)[0], iterations=0,
                                 grad_norm=np.inf)
            return SolveReport(estimate=est, status="infeasible",
                               iterations=0, residual=np.inf)
        x_start = found

    x = x_start
    fx, gx = f_grad(x)
    n_rows = bounds.shape[0]
    mu = max(1e-3, 1e-3 * abs(fx)) / n_rows
    total_it = 0
    gap_tol = config.grad_tol * (1.0 + abs(fx))
    while True:
        for _ in range(80):
            total_it += 1
            X = x.reshape(K, n)
            s = bounds - _row_values(rows, X)
            fx, gx = f_grad(x)
            grad = gx + _row_grad_accum(rows, mu / s, K, n).ravel()
            diag, upper = hess_blocks(x)
            diag *= 2.0
            upper *= 2.0
            diag, upper = _row_hessian_blocks(rows, mu / s ** 2, diag, upper)
            ab = banded_from_blocks(diag, upper)
            try:
                d = sla.solveh_banded(ab, -grad)
            except np.linalg.LinAlgError:
                d = -grad
            rv_d = _row_values(
                (blocks, coeffs, coeffs_next, np.zeros_like(bounds), margin),
                d.reshape(K, n))
            increasing = rv_d > 0
            alpha_max = 1.0
            if increasing.any():
                alpha_max = min(1.0, float(np.min(0.99 * s[increasing]
                                                  / rv_d[increasing])))
            phi0 = fx - mu * float(np.sum(np.log(s)))
            slope = float(grad @ d)
            alpha = alpha_max
            while True:
                x_new = x + alpha * d
                s_new = bounds - _row_values(rows, x_new.reshape(K, n))
                if np.all(s_new > 0):
                    f_new = f_grad(x_new)[0]
                    phi_new = f_new - mu * float(np.sum(np.log(s_new)))
                    if phi_new <= phi0 + ARMIJO_SLOPE * alpha * slope:
                        break
                alpha *= ARMIJO_BACKTRACK
                if alpha < 2.0 ** -50:
                    break
            x = x + alpha * d
            if float(np.linalg.norm(grad)) <= max(mu * 0.5, 1e-13 * (1 + abs(fx))):
                break
        if mu * n_rows <= min(1e-10 * (1.0 + abs(fx)), gap_tol):
            break
        mu *= 0.1
    X = x.reshape(K, n)
    s = bounds - _row_values(rows, X)
    lam = mu / s
    polished = None
    if quadratic:
        polished = _kkt_polish(qf, rows, x, lam, K, n)
        if polished is not None:
            x, lam = polished
            X = x.reshape(K, n)
    fx, gx = f_grad(x)
    kkt = gx + _row_grad_accum(rows, lam, K, n).ravel()
    resid = float(np.linalg.norm(kkt)) / (1.0 + abs(fx))
    est = WindowEstimate(estimates=X, cost=fx, iterations=total_it,
                         grad_norm=float(np.linalg.norm(kkt)))
    return SolveReport(estimate=est, status="optimal", iterations=total_it,
                       residual=resid)


def _kkt_polish(qf: QuadraticForm, rows, x, lam, K, n):
    """Solve the equality-constrained QP on the near-active rows exactly."""
    blocks, coeffs, coeffs_next, bounds, _ = rows
    s = bounds - _row_values(rows, x.reshape(K, n))
    scale = 1.0 + np.abs(bounds)
    active = (s < 1e-5 * scale) & (lam > 1e-9 * np.max(lam, initial=0.0))
    idx = np.nonzero(active)[0]
    H = qf.H
    dim = H.shape[0]
    if idx.size == 0:
        try:
            sol = spla.spsolve((2.0 * H).tocsc(), -2.0 * qf.g)
        except Exception:
            return None
        if np.max(_row_values(rows, sol.reshape(K, n)) - bounds) <= 1e-9 * np.max(scale):
            return sol, np.zeros_like(bounds)
        return None
    rows_mat = sparse.lil_matrix((idx.size, dim))
    for out_r, r in enumerate(idx):
        k = int(blocks[r])
        rows_mat[out_r, k * n:(k + 1) * n] = coeffs[r]
        if coeffs_next is not None and np.any(coeffs_next[r]):
            rows_mat[out_r, (k + 1) * n:(k + 2) * n] = coeffs_next[r]
    Gm = rows_mat.tocsr()
    kkt = sparse.bmat([[2.0 * H, Gm.T], [Gm, None]], format="csc")
    rhs = np.concatenate([-2.0 * qf.g, bounds[idx]])
    try:
        sol = spla.spsolve(kkt, rhs)
    except Exception:
        return None
    x_new = sol[:dim]
    multipliers = sol[dim:]
    if np.any(multipliers < -1e-8 * (1.0 + np.max(np.abs(multipliers), initial=0.0))):
        return None
    viol = _row_values(rows, x_new.reshape(K, n)) - bounds
    if np.max(viol, initial=-np.inf) > 1e-9 * np.max(scale):
        return None
    lam_full = np.zeros_like(bounds)
    lam_full[idx] = np.maximum(multipliers, 0.0)
    return x_new, lam_full


def write_diagnostics_csv(path, records) -> None:
    """Solver diagnostics log: one row per solved window."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["window_index", "solver", "iterations", "residual",
                    "wall_time_s"])
        for rec in records:
            w.writerow(rec)
