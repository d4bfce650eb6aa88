import json

import numpy as np
import pytest

from binmhe.linsys import (InvalidLaplacianError, LtiModel, ModelError,
                           NoiseBounds, build_network, discretize, load_model,
                           rng_stream, save_model, simulate)


def series_expm(M, terms=60):
    # independent oracle: plain truncated power series
    out = np.eye(M.shape[0])
    acc = np.eye(M.shape[0])
    for k in range(1, terms):
        acc = acc @ M / k
        out = out + acc
    return out


def oscillator_Ac():
    k1 = k2 = 10.0
    return np.array([[0, 1, 0, 0],
                     [-(k1 + k2), 0, k2, 0],
                     [0, 0, 0, 1],
                     [k2, 0, -k2, 0]], dtype=float)


def test_discretize_zero_dynamics():
    Ad, Bd = discretize(np.zeros((2, 2)), np.eye(2), 0.1)
    assert np.allclose(Ad, np.eye(2))
    assert np.allclose(Bd, 0.1 * np.eye(2))


def test_discretize_double_integrator_closed_form():
    Ad, Bd = discretize([[0, 1], [0, 0]], [[0], [1]], 1.0)
    assert np.allclose(Ad, [[1, 1], [0, 1]], atol=1e-12)
    assert np.allclose(Bd, [[0.5], [1.0]], atol=1e-12)
    aug = np.zeros((3, 3))
    aug[:2, :2] = [[0, 1], [0, 0]]
    aug[:2, 2:] = [[0], [1]]
    E = series_expm(aug)
    assert np.allclose(Ad, E[:2, :2], atol=1e-12)
    assert np.allclose(Bd, E[:2, 2:], atol=1e-12)


def test_oscillator_eigenvalues_on_unit_circle():
    Ad, _ = discretize(oscillator_Ac(), np.zeros((4, 0)), 0.1)
    eigs = np.linalg.eigvals(Ad)
    assert np.max(np.abs(np.abs(eigs) - 1.0)) < 1e-10


def test_discretize_semigroup_property():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = rng.integers(2, 9)
        Ac = rng.normal(size=(n, n))
        Ac -= (np.max(np.real(np.linalg.eigvals(Ac))) + 0.5) * np.eye(n)
        Bc = rng.normal(size=(n, 2))
        Ts = rng.uniform(0.01, 0.3)
        Ad1, _ = discretize(Ac, Bc, Ts)
        Ad2, _ = discretize(Ac, Bc, 2 * Ts)
        assert np.linalg.norm(Ad2 - Ad1 @ Ad1) <= 1e-9 * (1 + np.linalg.norm(Ad2))


def test_discretize_rejects_bad_input():
    with pytest.raises(ModelError):
        discretize(np.full((2, 2), np.nan), np.zeros((2, 1)), 0.1)
    with pytest.raises(ModelError):
        discretize(np.zeros((2, 2)), np.zeros((2, 1)), 0.0)


def test_model_dimension_checks():
    with pytest.raises(ModelError):
        LtiModel(A=np.zeros((2, 3)), B=np.zeros((2, 1)), C=np.zeros((1, 2)))
    with pytest.raises(ModelError):
        LtiModel(A=np.eye(2), B=np.zeros((3, 1)), C=np.zeros((1, 2)))
    with pytest.raises(ModelError):
        LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.zeros((1, 3)))


def ring_laplacian(q):
    L = np.zeros((q, q))
    for a in range(q):
        b = (a + 1) % q
        L[a, a] += 1
        L[b, b] += 1
        L[a, b] -= 1
        L[b, a] -= 1
    return L


def test_build_network_single_node_is_identity_composition():
    Ad, _ = discretize(oscillator_Ac(), np.zeros((4, 0)), 0.1)
    node = LtiModel(A=Ad, B=np.zeros((4, 0)), C=[[0, 0, 1, 0]])
    net = build_network(node, [[0.0]], 0.5, [0, 0, 1, 0])
    assert np.allclose(net.A, Ad)
    assert np.allclose(net.C, [[0, 0, 1, 0]])


def test_build_network_shapes_and_zero_coupling():
    Ad, _ = discretize(oscillator_Ac(), np.zeros((4, 0)), 0.1)
    node = LtiModel(A=Ad, B=np.zeros((4, 0)), C=[[0, 0, 1, 0]])
    L = ring_laplacian(6)
    L[0, 3] -= 1
    L[3, 0] -= 1
    L[0, 0] += 1
    L[3, 3] += 1
    net = build_network(node, L, 0.02, [0, 0, 1, 0])
    assert net.A.shape == (24, 24)
    assert net.C.shape == (6, 24)
    net0 = build_network(node, L, 0.0, [0, 0, 1, 0])
    assert np.array_equal(net0.A, np.kron(np.eye(6), Ad))


def test_build_network_rejects_bad_laplacian():
    Ad, _ = discretize(oscillator_Ac(), np.zeros((4, 0)), 0.1)
    node = LtiModel(A=Ad, B=np.zeros((4, 0)), C=[[0, 0, 1, 0]])
    bad = ring_laplacian(4)
    bad[0, 0] += 1e-6
    with pytest.raises(InvalidLaplacianError):
        build_network(node, bad, 0.1, [0, 0, 1, 0])


def test_simulate_fixed_point_zero_noise():
    model = LtiModel(A=np.eye(2), B=np.zeros((2, 0)), C=[[1.0, 0.0]])
    traj = simulate(model, [1.0, 2.0], np.zeros((10, 0)),
                    NoiseBounds(rho_V=np.zeros(1)), rng_seed=3)
    assert np.allclose(traj.states, np.tile([1.0, 2.0], (11, 1)))
    assert np.allclose(traj.linear_outputs, 1.0)


def test_simulate_matches_direct_power_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        n, m, T = 3, 2, 50
        A = rng.normal(size=(n, n)) * 0.4
        B = rng.normal(size=(n, m))
        C = rng.normal(size=(2, n))
        model = LtiModel(A=A, B=B, C=C)
        x0 = rng.normal(size=n)
        U = rng.normal(size=(T, m))
        traj = simulate(model, x0, U, NoiseBounds(rho_V=np.zeros(2)), rng_seed=1)
        # oracle: x_t = A^t x0 + sum A^(t-1-j) B u_j
        for t in (1, 7, 25, 50):
            xt = np.linalg.matrix_power(A, t) @ x0
            for j in range(t):
                xt = xt + np.linalg.matrix_power(A, t - 1 - j) @ B @ U[j]
            assert np.linalg.norm(traj.states[t] - xt) <= 1e-9 * (1 + np.linalg.norm(xt))


def test_simulate_oscillator_output_stays_in_band():
    Ad, _ = discretize(oscillator_Ac(), np.zeros((4, 0)), 0.1)
    model = LtiModel(A=Ad, B=np.zeros((4, 0)), C=[[0, 0, 1, 0]])
    traj = simulate(model, [0.618, 0, 1.0, 0], np.zeros((400, 0)),
                    NoiseBounds(rho_V=np.zeros(1)), rng_seed=0)
    assert np.max(np.abs(traj.states[:, 2])) <= 1.0 + 1e-9
    assert np.max(np.abs(traj.states[:, 2])) >= 0.99


def test_simulate_deterministic_and_noise_within_bounds():
    model = LtiModel(A=0.5 * np.eye(2), B=np.zeros((2, 0)), C=np.eye(2))
    noise = NoiseBounds(rho_W=0.3, rho_V=np.array([0.1, 0.2]))
    t1 = simulate(model, [1.0, -1.0], np.zeros((30, 0)), noise, rng_seed=42)
    t2 = simulate(model, [1.0, -1.0], np.zeros((30, 0)), noise, rng_seed=42)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.linear_outputs, t2.linear_outputs)
    w = t1.states[1:] - t1.states[:-1] @ model.A.T
    assert np.max(np.abs(w)) <= 0.3 + 1e-12
    v = t1.linear_outputs - t1.states @ model.C.T
    assert np.max(np.abs(v[:, 0])) <= 0.1 + 1e-12
    assert np.max(np.abs(v[:, 1])) <= 0.2 + 1e-12


def test_rng_stream_order_independence():
    a = rng_stream(7, 3).normal(size=4)
    _ = rng_stream(7, 5).normal(size=100)
    b = rng_stream(7, 3).normal(size=4)
    assert np.array_equal(a, b)


def test_model_json_round_trip_exact(tmp_path):
    rng = np.random.default_rng(2)
    model = LtiModel(A=rng.normal(size=(3, 3)), B=rng.normal(size=(3, 2)),
                     C=rng.normal(size=(2, 3)))
    path = tmp_path / "model.json"
    save_model(model, path, Ts=0.1)
    loaded, Ts = load_model(path)
    assert Ts == 0.1
    assert np.array_equal(loaded.A, model.A)
    assert np.array_equal(loaded.B, model.B)
    assert np.array_equal(loaded.C, model.C)
    doc = json.loads(path.read_text())
    assert set(doc) == {"A", "B", "C", "n", "m", "p", "Ts"}
