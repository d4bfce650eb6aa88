"""Linear time-invariant plant models, discretization and bounded-noise simulation.

The plant is x_{t+1} = A x_t + B u_t + w_t with linear outputs
z_t^i = C^i x_t + v_t^i observed only through binary threshold sensors
(see :mod:`binmhe.sensing`).  Disturbance and measurement noise are
unknown-but-bounded; simulation draws them component-wise uniform from
axis-aligned boxes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


class ModelError(ValueError):
    """Invalid model data (dimensions, non-finite entries)."""


class InvalidLaplacianError(ModelError):
    """Coupling matrix is not a symmetric zero-row-sum Laplacian."""


def _as_matrix(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ModelError(f"{name} contains non-finite entries")
    return M


@dataclass(frozen=True)
class LtiModel:
    """Discrete-time LTI plant (A, B, C) with C stored as p stacked sensor rows."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ModelError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n or C.shape[0] < 1:
            raise ModelError(f"C must be p x {n} with p >= 1, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def output_row(self, i: int) -> np.ndarray:
        """Row C^i of the output matrix."""
        return self.C[i]


@dataclass(frozen=True)
class NoiseBounds:
    """Radii of the compact sets bounding disturbance, noise, state and input.

    rho_W bounds each component of the process disturbance, rho_V[i] the
    amplitude of sensor i's measurement noise.  rho_X and rho_U bound the
    norms of the state and input trajectories; they enter only the
    stability analysis, never the simulation.
    """

    rho_W: float = 0.0
    rho_V: np.ndarray = field(default_factory=lambda: np.zeros(1))
    rho_X: float = 0.0
    rho_U: float = 0.0

    def __post_init__(self):
        rv = np.atleast_1d(np.asarray(self.rho_V, dtype=float))
        if np.any(rv < 0) or self.rho_W < 0 or self.rho_X < 0 or self.rho_U < 0:
            raise ModelError("noise bounds must be nonnegative")
        object.__setattr__(self, "rho_V", rv)


@dataclass(frozen=True)
class Trajectory:
    """Simulated run: states has one more entry than inputs; outputs align with states."""

    states: np.ndarray
    inputs: np.ndarray
    linear_outputs: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        inputs = np.asarray(self.inputs, dtype=float)
        outputs = np.asarray(self.linear_outputs, dtype=float)
        if states.shape[0] != inputs.shape[0] + 1:
            raise ModelError("states must have exactly one more entry than inputs")
        if outputs.shape[0] != states.shape[0]:
            raise ModelError("linear_outputs must align with states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "linear_outputs", outputs)

    @property
    def length(self) -> int:
        return self.inputs.shape[0]


def rng_stream(seed, *indices) -> np.random.Generator:
    """Counter-based generator keyed by (seed, indices).

    Streams for different key tuples are statistically independent, so
    Monte Carlo trials are reproducible regardless of execution order.
    """
    if isinstance(seed, (tuple, list)):
        entropy = tuple(seed) + tuple(indices)
    else:
        entropy = (int(seed),) + tuple(indices)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def discretize(Ac, Bc, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of (Ac, Bc) with sampling interval Ts.

    Returns Ad = exp(Ac*Ts) and Bd = int_0^Ts exp(Ac*s) Bc ds, the latter
    obtained by exponentiating the augmented block matrix [[Ac, Bc], [0, 0]]
    so no separate quadrature is needed.
    """
    Ac = _as_matrix(Ac, "Ac")
    Bc = _as_matrix(Bc, "Bc")
    if Ts <= 0:
        raise ModelError("Ts must be positive")
    n = Ac.shape[0]
    m = Bc.shape[1]
    if Ac.shape != (n, n) or Bc.shape[0] != n:
        raise ModelError("Ac must be square and Bc must have matching rows")
    if m == 0:
        return expm(Ac * Ts), np.zeros((n, 0))
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = expm(aug * Ts)
    return E[:n, :n], E[:n, n:]


def build_network(node_model: LtiModel, laplacian, gamma: float,
                  node_output_row) -> LtiModel:
    """Couple q copies of a node plant through a graph Laplacian.

    The network transition matrix is I_q (x) Ad - gamma * L (x) I_d and each
    node contributes one sensor row, C = I_q (x) node_output_row.
    """
    L = _as_matrix(laplacian, "laplacian")
    q = L.shape[0]
    if L.shape != (q, q) or q < 1:
        raise InvalidLaplacianError("laplacian must be square")
    if not np.allclose(L, L.T, atol=1e-9):
        raise InvalidLaplacianError("laplacian must be symmetric")
    row_sums = L.sum(axis=1)
    if np.max(np.abs(row_sums)) > 1e-9:
        raise InvalidLaplacianError(
            f"laplacian row sums must vanish, max |sum| = {np.max(np.abs(row_sums)):.3e}")
    row = np.atleast_2d(np.asarray(node_output_row, dtype=float))
    d = node_model.n
    if row.shape != (1, d):
        raise ModelError(f"node_output_row must be 1 x {d}")
    A = np.kron(np.eye(q), node_model.A) - gamma * np.kron(L, np.eye(d))
    C = np.kron(np.eye(q), row)
    B = np.zeros((q * d, 0)) if node_model.m == 0 else np.kron(np.eye(q), node_model.B)
    return LtiModel(A=A, B=B, C=C)


def simulate(model: LtiModel, x0, inputs, noise: NoiseBounds, rng_seed) -> Trajectory:
    """Simulate the plant under box-bounded uniform noise.

    Deterministic for a fixed rng_seed (an int or a tuple key accepted by
    :func:`rng_stream`).
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)) or x0.shape != (model.n,):
        raise ModelError(f"x0 must be a finite {model.n}-vector")
    U = np.asarray(inputs, dtype=float)
    if model.m == 0:
        U = U.reshape(len(U), 0)
    else:
        U = U.reshape(-1, model.m)
    T = U.shape[0]
    if T < 1:
        raise ModelError("horizon must be at least 1")
    rv = np.broadcast_to(noise.rho_V, (model.p,))
    rng = rng_stream(rng_seed)
    V = rng.uniform(-1.0, 1.0, size=(T + 1, model.p)) * rv
    W = rng.uniform(-1.0, 1.0, size=(T, model.n)) * noise.rho_W
    X = np.empty((T + 1, model.n))
    X[0] = x0
    for t in range(T):
        X[t + 1] = model.A @ X[t] + model.B @ U[t] + W[t]
    Z = X @ model.C.T + V
    return Trajectory(states=X, inputs=U, linear_outputs=Z)


def save_model(model: LtiModel, path, Ts: float | None = None) -> None:
    """Write the model as a JSON document with exact float round-trip."""
    doc = {
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "C": model.C.tolist(),
        "n": model.n,
        "m": model.m,
        "p": model.p,
        "Ts": Ts,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)


def load_model(path) -> tuple[LtiModel, float | None]:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    model = LtiModel(
        A=np.asarray(doc["A"], dtype=float).reshape(doc["n"], doc["n"]),
        B=np.asarray(doc["B"], dtype=float).reshape(doc["n"], doc["m"]),
        C=np.asarray(doc["C"], dtype=float).reshape(doc["p"], doc["n"]),
    )
    return model, doc.get("Ts")
