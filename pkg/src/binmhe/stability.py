"""Stability certificate: error-recursion constants and the arrival-weight search.

The window-start estimation error obeys a recursion
||e_{t-N}||^2_P <= a1 ||e_{t-N-1}||^2_P + a2 whose constants are assembled
from the plant norms, the weight spectra, the noise radii, the uniform
observability measure of the switching instants, and the worst-case gain
of the disturbance-to-switching-output response.  When a1 < 1 the error
norm is asymptotically bounded by sqrt(a2 / (1 - a1)); shrinking the
arrival weight P = eps * P_bar always achieves a1 < 1 provided the
observability measure is positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .costs import EstimatorConfig
from .linsys import LtiModel, NoiseBounds
from .observability import matrix_powers
from .sensing import BinarySensorBank, MeasurementWindow


class NoStabilizingEpsilonError(ValueError):
    """The observability measure is zero, so no arrival weight certifies a1 < 1."""


def switching_response_matrices(model: LtiModel, window: MeasurementWindow,
                                powers: np.ndarray | None = None):
    """Input and disturbance response matrices of the switching outputs.

    For each sensor i, row k of the returned pair (H_i, D_i) holds the
    blocks C^i A^(k-1-j) B and C^i A^(k-1-j) for j < k inside the window,
    so that the noise-free outputs at the switching instants equal
    Theta_i x_{t-N} + H_i u_tilde + D_i w_tilde identically.
    """
    n, m = model.n, model.m
    N = window.horizon
    if powers is None:
        powers = matrix_powers(model.A, max(N, 1))
    out = []
    for i, ks in enumerate(window.switching_sets):
        Ci = model.C[i]
        Hi = np.zeros((len(ks), N * m))
        Di = np.zeros((len(ks), N * n))
        for r, k in enumerate(ks):
            for j in range(window.start, k):
                e = k - 1 - j
                col = j - window.start
                if m > 0:
                    Hi[r, col * m:(col + 1) * m] = Ci @ powers[e] @ model.B
                Di[r, col * n:(col + 1) * n] = Ci @ powers[e]
        out.append((Hi, Di))
    return out


def empirical_response_bound(model: LtiModel, windows) -> float:
    """Running max of ||D_t^i|| over the supplied windows (empirical phi_bar)."""
    windows = list(windows)
    if not windows:
        raise ValueError("at least one window is required")
    kmax = max(w.horizon for w in windows)
    powers = matrix_powers(model.A, max(kmax, 1))
    phi = 0.0
    for w in windows:
        for _, Di in switching_response_matrices(model, w, powers):
            if Di.shape[0]:
                phi = max(phi, float(np.linalg.norm(Di, 2)))
    return phi


@dataclass(frozen=True)
class StabilityConstants:
    """Every constant of the error-recursion bound, as displayed in the proof."""

    delta: float
    phi_bar: float
    L_bar: float
    C_bar: float
    R_max: float
    R_min: float
    lam_min_P: float
    lam_max_P: float
    lam_min_Q: float
    lam_max_Q: float
    A_norm: float
    A_shift_norm: float
    B_norm: float
    rho_chi: float
    rho_U: float
    rho_W: float
    rho_V_max: float
    p: int
    N: int
    n: int
    b1: float
    b2: float
    d1: float
    d2: float
    c1: float
    c2: float
    c3: float
    c4: float
    a1: float
    a2: float
    e_inf: float | None

    @property
    def contractive(self) -> bool:
        return self.a1 < 1.0


def _box_radius(box) -> float:
    lo, hi = box
    return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))


def compute_constants(config: EstimatorConfig, model: LtiModel,
                      sensors: BinarySensorBank, radii: NoiseBounds,
                      delta: float, phi_bar: float, *,
                      use_state_set: bool = True) -> StabilityConstants:
    """Evaluate the recursion constants exactly as displayed.

    delta and phi_bar are supplied by the caller (empirical over a run;
    the true suprema are not computable).  With use_state_set the
    constraint-set radius of config.state_box enters the noise term; the
    unconstrained variant substitutes the state-norm bound radii.rho_X.
    """
    if delta < 0 or phi_bar <= 0:
        raise ValueError("delta must be nonnegative and phi_bar positive")
    p = model.p
    N = config.N
    row_norms = np.linalg.norm(model.C, axis=1)
    L_bar = float(np.max(row_norms))
    C_bar = L_bar
    R = np.broadcast_to(config.R, (p,))
    R_max, R_min = float(np.max(R)), float(np.min(R))
    eP = np.linalg.eigvalsh(config.P)
    eQ = np.linalg.eigvalsh(config.Q)
    lam_min_P, lam_max_P = float(eP[0]), float(eP[-1])
    lam_min_Q, lam_max_Q = float(eQ[0]), float(eQ[-1])
    A_norm = float(np.linalg.norm(model.A, 2))
    A_shift = float(np.linalg.norm(model.A - np.eye(model.n), 2))
    B_norm = float(np.linalg.norm(model.B, 2)) if model.m > 0 else 0.0
    if use_state_set and config.state_box is not None:
        rho_chi = _box_radius(config.state_box)
    else:
        rho_chi = float(radii.rho_X)
    rho_V_max = float(np.max(np.broadcast_to(radii.rho_V, (p,))))

    d1 = 2.0 * p * phi_bar ** 2
    d2 = 3.0 * L_bar ** 2 / phi_bar ** 2
    b1 = (lam_max_P / lam_min_P) * (4.0 + d1 / lam_min_Q * (d2 + R_max))
    b2 = 0.5 + delta ** 2 * R_min / (4.0 * lam_max_P)
    a1 = b1 * A_norm ** 2 / b2
    c1 = p * (N + 1) * (4.0 * R_max * C_bar ** 2 + 3.0 * L_bar ** 2)
    c2 = c1
    c3 = (b1 + N * lam_max_Q * (b1 / (2.0 * lam_max_P) - 1.0)
          + p * R_max * (4.0 * (N + 1) * C_bar ** 2 + phi_bar ** 2))
    c4 = (p * (N + 1) * R_max * (b1 / (2.0 * lam_max_P) - 1.0)
          + p * R_max * (4.0 * N + 5.0))
    a2 = (c1 * A_shift ** 2 * rho_chi ** 2 + c2 * B_norm ** 2 * radii.rho_U ** 2
          + c3 * radii.rho_W ** 2 + c4 * rho_V_max ** 2) / b2
    e_inf = math.sqrt(a2 / (1.0 - a1)) if a1 < 1.0 else None
    return StabilityConstants(
        delta=delta, phi_bar=phi_bar, L_bar=L_bar, C_bar=C_bar,
        R_max=R_max, R_min=R_min,
        lam_min_P=lam_min_P, lam_max_P=lam_max_P,
        lam_min_Q=lam_min_Q, lam_max_Q=lam_max_Q,
        A_norm=A_norm, A_shift_norm=A_shift, B_norm=B_norm,
        rho_chi=rho_chi, rho_U=float(radii.rho_U), rho_W=float(radii.rho_W),
        rho_V_max=rho_V_max, p=p, N=N, n=model.n,
        b1=b1, b2=b2, d1=d1, d2=d2, c1=c1, c2=c2, c3=c3, c4=c4,
        a1=a1, a2=a2, e_inf=e_inf)


def _config_with_P(config: EstimatorConfig, P: np.ndarray) -> EstimatorConfig:
    return EstimatorConfig(P=P, Q=config.Q, R=config.R, N=config.N,
                           state_box=config.state_box, grad_tol=config.grad_tol,
                           max_iter=config.max_iter,
                           switch_cost_at_midpoint=config.switch_cost_at_midpoint)


def find_epsilon(config: EstimatorConfig, model: LtiModel,
                 sensors: BinarySensorBank, radii: NoiseBounds,
                 delta: float, phi_bar: float, P_bar,
                 *, use_state_set: bool = True) -> float:
    """Largest eps (bisection, 1e-12 relative) with a1 < 1 for P = eps * P_bar.

    The returned eps satisfies a1(eps) < 1 while a1(2 eps) >= 1, which
    certifies the bracket.  Raises when the observability measure is zero,
    in which case no arrival weight can satisfy the condition.
    """
    if delta <= 0.0:
        raise NoStabilizingEpsilonError(
            "uniform observability measure is zero; the stability condition "
            "a1 < 1 cannot be met by shrinking the arrival weight")
    P_bar = np.asarray(P_bar, dtype=float)

    def a1_at(eps: float) -> float:
        cfg = _config_with_P(config, eps * P_bar)
        return compute_constants(cfg, model, sensors, radii, delta, phi_bar,
                                 use_state_set=use_state_set).a1

    hi = 1.0
    for _ in range(200):
        if a1_at(hi) >= 1.0:
            break
        hi *= 2.0
    else:
        raise NoStabilizingEpsilonError("a1 stays below 1 for every tested eps; "
                                        "no finite bracket exists")
    lo = hi
    for _ in range(400):
        lo *= 0.5
        if a1_at(lo) < 1.0:
            break
    else:
        raise NoStabilizingEpsilonError("could not find eps with a1 < 1")
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if a1_at(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class RecursionReport:
    """Outcome of checking the error recursion along a run."""

    violations: tuple[int, ...]
    checked: int
    tail_max_error: float
    e_inf: float | None
    tail_within_bound: bool

    @property
    def passed(self) -> bool:
        return not self.violations and self.tail_within_bound


def check_error_recursion(errors, constants: StabilityConstants, P,
                          tail_fraction: float = 0.5) -> RecursionReport:
    """Verify ||e_k||^2_P <= a1 ||e_{k-1}||^2_P + a2 for consecutive errors.

    Also compares the tail maximum of the plain error norm, taken over the
    last tail_fraction of the run, against the asymptotic bound.
    """
    E = np.asarray(errors, dtype=float)
    P = np.asarray(P, dtype=float)
    if E.ndim != 2:
        raise ValueError("errors must be a sequence of error vectors")
    wnorm = np.einsum("ki,ij,kj->k", E, P, E)
    bad = []
    for k in range(1, E.shape[0]):
        if wnorm[k] > constants.a1 * wnorm[k - 1] + constants.a2 + 1e-12:
            bad.append(k)
    tail_start = int(E.shape[0] * (1.0 - tail_fraction))
    tail_max = float(np.max(np.linalg.norm(E[tail_start:], axis=1))) \
        if tail_start < E.shape[0] else 0.0
    within = constants.e_inf is not None and tail_max <= constants.e_inf
    return RecursionReport(violations=tuple(bad), checked=E.shape[0] - 1,
                           tail_max_error=tail_max, e_inf=constants.e_inf,
                           tail_within_bound=within)


def write_stability_report(path, constants: StabilityConstants,
                           epsilon: float | None = None,
                           recursion: RecursionReport | None = None) -> None:
    """Structured report: all constants, the certifying bracket, recursion summary."""
    doc = {"constants": asdict(constants)}
    if epsilon is not None:
        doc["certified_epsilon"] = epsilon
        doc["bracket"] = [epsilon, 2.0 * epsilon]
    if recursion is not None:
        doc["recursion_check"] = {
            "violations": list(recursion.violations),
            "checked": recursion.checked,
            "tail_max_error": recursion.tail_max_error,
            "e_inf": recursion.e_inf,
            "tail_within_bound": recursion.tail_within_bound,
        }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
