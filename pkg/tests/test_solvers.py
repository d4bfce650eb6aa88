import itertools

import numpy as np
import pytest

from binmhe.costs import EstimatorConfig, lsmhe_cost, lsmhe_quadratic, pwmhe_cost
from binmhe.linsys import LtiModel, NoiseBounds, simulate
from binmhe.sensing import BinarySensorBank, MeasurementWindow, binarize_outputs
from binmhe.solvers import (build_threshold_constraints, disturbance_rows,
                            merge_constraints, solve_constrained_lsmhe,
                            solve_lsmhe, solve_pwmhe)
from tests.test_costs import random_instance


def propagate(model, window, xbar):
    X = np.empty((window.horizon + 1, model.n))
    X[0] = xbar
    for k in range(window.horizon):
        X[k + 1] = model.A @ X[k] + model.B @ window.inputs[k]
    return X


def nested_grid_minimum(fun, dim, lo=-2.0, hi=2.0, points=13, rounds=14):
    """Derivative-free oracle: refine a full grid around the incumbent."""
    center = np.zeros(dim)
    width = hi - lo
    best_x, best_f = None, np.inf
    for _ in range(rounds):
        axes = [np.linspace(c - width / 2, c + width / 2, points) for c in center]
        for combo in itertools.product(*axes):
            f = fun(np.asarray(combo))
            if f < best_f:
                best_f, best_x = f, np.asarray(combo)
        center = best_x
        width *= 2.5 / (points - 1)
    return best_x, best_f


def test_lsmhe_no_switchings_returns_propagation():
    rng = np.random.default_rng(0)
    model = LtiModel(A=rng.normal(size=(2, 2)) * 0.5, B=rng.normal(size=(2, 1)),
                     C=[[1.0, 0.0]])
    config = EstimatorConfig(P=np.eye(2), Q=np.eye(2), R=[1.0], N=5)
    window = MeasurementWindow.build(0, rng.normal(size=(5, 1)),
                                     np.ones((6, 1)), [0.5])
    xbar = rng.normal(size=2)
    rep = solve_lsmhe(config, model, window, xbar)
    assert rep.status == "optimal"
    assert np.allclose(rep.estimate.estimates, propagate(model, window, xbar),
                       atol=1e-9)
    assert rep.estimate.cost == pytest.approx(0.0, abs=1e-12)


def test_lsmhe_1d_matches_nested_grid():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    config = EstimatorConfig(P=np.eye(1), Q=np.eye(1), R=[1.0], N=2)
    window = MeasurementWindow.build(0, np.zeros((2, 0)),
                                     [[1.0], [-1.0], [-1.0]], [1.0])
    assert window.switching_sets == ((0,),)
    rep = solve_lsmhe(config, model, window, [0.0])
    fun = lambda x: lsmhe_cost(config, model, window, [0.0], x)
    x_grid, f_grid = nested_grid_minimum(fun, 3)
    assert np.max(np.abs(rep.estimate.estimates.ravel() - x_grid)) < 1e-6
    assert rep.estimate.cost == pytest.approx(f_grid, rel=1e-6, abs=1e-9)


def test_lsmhe_beats_random_probes_and_is_stationary():
    rng = np.random.default_rng(1)
    for _ in range(15):
        config, model, window, pred = random_instance(rng)
        rep = solve_lsmhe(config, model, window, pred)
        qf = lsmhe_quadratic(config, model, window, pred)
        x = rep.estimate.estimates.ravel()
        assert np.linalg.norm(qf.matvec(x) + qf.g) <= 1e-9 * (1 + np.linalg.norm(qf.g))
        probes = rng.normal(size=(1000, qf.dim))
        for probe in probes[:50]:
            assert rep.estimate.cost <= lsmhe_cost(config, model, window, pred,
                                                   probe) + 1e-9


def test_lsmhe_nonpd_weight_names_culprit():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    config = EstimatorConfig(P=np.eye(1), Q=np.eye(1), R=[1.0], N=1)
    # bypass the config validator to exercise the solver-side diagnosis
    object.__setattr__(config, "P", np.array([[-1.0]]))
    window = MeasurementWindow.build(0, np.zeros((1, 0)), np.ones((2, 1)), [0.5])
    from binmhe.costs import ConfigurationError
    with pytest.raises(ConfigurationError, match="P"):
        solve_lsmhe(config, model, window, [0.0])


def test_pwmhe_consistent_window_returns_truth():
    rng = np.random.default_rng(2)
    model = LtiModel(A=rng.normal(size=(2, 2)) * 0.5, B=np.zeros((2, 0)),
                     C=[[1.0, 0.3]])
    config = EstimatorConfig(P=np.eye(2), Q=np.eye(2), R=[1.0], N=6,
                             state_box=(np.full(2, -10.0), np.full(2, 10.0)))
    xbar = rng.normal(size=2) * 0.5
    X = propagate(model, MeasurementWindow.build(0, np.zeros((6, 0)),
                                                 np.ones((7, 1)), [0.2]), xbar)
    Y = np.where(X @ model.C[0] >= 0.2, 1.0, -1.0)[:, None]
    window = MeasurementWindow.build(0, np.zeros((6, 0)), Y, [0.2])
    rep = solve_pwmhe(config, model, window, xbar)
    assert rep.status == "optimal"
    assert rep.estimate.cost == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(rep.estimate.estimates, X, atol=1e-6)


def test_pwmhe_1d_matches_dense_grid():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    config = EstimatorConfig(P=np.eye(1), Q=np.eye(1), R=[1.0], N=1,
                             state_box=(np.array([-10.0]), np.array([10.0])))
    window = MeasurementWindow.build(0, np.zeros((1, 0)),
                                     [[1.0], [1.0]], [0.5])
    rep = solve_pwmhe(config, model, window, [0.0])
    fun = lambda x: pwmhe_cost(config, model, window, [0.0], x)
    x_grid, f_grid = nested_grid_minimum(fun, 2, points=41, rounds=10)
    assert np.max(np.abs(rep.estimate.estimates.ravel() - x_grid)) < 1e-5
    assert rep.estimate.cost <= f_grid + 1e-9


def test_pwmhe_unconstrained_gradient_tolerance():
    rng = np.random.default_rng(3)
    for _ in range(15):
        config, model, window, pred = random_instance(rng)
        rep = solve_pwmhe(config, model, window, pred)
        assert rep.status == "optimal"
        assert rep.residual <= config.grad_tol


def test_pwmhe_two_starts_agree():
    rng = np.random.default_rng(4)
    for _ in range(10):
        config, model, window, pred = random_instance(rng)
        dim = (window.horizon + 1) * model.n
        r1 = solve_pwmhe(config, model, window, pred, x0=rng.normal(size=dim))
        r2 = solve_pwmhe(config, model, window, pred, x0=rng.normal(size=dim))
        assert np.max(np.abs(r1.estimate.estimates - r2.estimate.estimates)) < 1e-6


def test_pwmhe_beats_feasible_probes():
    rng = np.random.default_rng(5)
    for _ in range(10):
        config, model, window, pred = random_instance(rng)
        lo, hi = -3.0, 3.0
        config = EstimatorConfig(P=config.P, Q=config.Q, R=config.R, N=config.N,
                                 state_box=(np.full(model.n, lo),
                                            np.full(model.n, hi)))
        rep = solve_pwmhe(config, model, window, pred)
        dim = (window.horizon + 1) * model.n
        probes = rng.uniform(lo, hi, size=(200, dim))
        best = min(pwmhe_cost(config, model, window, pred, x) for x in probes)
        assert rep.estimate.cost <= best + 1e-9


def test_threshold_constraint_rows_by_hand():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    sensors = BinarySensorBank(thresholds=[0.5], noise_bounds=[0.1])
    wp = MeasurementWindow.build(0, np.zeros((1, 0)), [[1.0], [-1.0]], [0.5])
    cs = build_threshold_constraints(wp, sensors, model)
    # y=+1 at k=0: -x_0 <= -0.4  (x_0 >= 0.4);  y=-1 at k=1: x_1 <= 0.6
    G = cs.Gamma.toarray()
    assert np.allclose(G, [[-1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(cs.gamma, [-0.4, 0.6])
    assert cs.margin > 0


def test_true_trajectory_satisfies_threshold_rows():
    rng = np.random.default_rng(6)
    for trial in range(20):
        n, p, T = 3, 2, 30
        A = rng.normal(size=(n, n)) * 0.5
        model = LtiModel(A=A, B=np.zeros((n, 0)), C=rng.normal(size=(p, n)))
        taus = rng.normal(size=p) * 0.5
        rho = rng.uniform(0.02, 0.2, size=p)
        sensors = BinarySensorBank(thresholds=taus, noise_bounds=rho)
        noise = NoiseBounds(rho_W=0.05, rho_V=rho)
        traj = simulate(model, rng.normal(size=n), np.zeros((T, 0)), noise,
                        rng_seed=trial)
        Y = binarize_outputs(traj.linear_outputs, taus)
        N = 8
        window = MeasurementWindow.build(0, np.zeros((N, 0)), Y[:N + 1], taus)
        cs = build_threshold_constraints(window, sensors, model)
        assert cs.max_violation(traj.states[:N + 1]) <= 0.0


def test_constrained_lsmhe_inactive_matches_unconstrained():
    rng = np.random.default_rng(7)
    for _ in range(8):
        config, model, window, pred = random_instance(rng, p=1)
        rep_u = solve_lsmhe(config, model, window, pred)
        # rows placed far away stay inactive at the unconstrained optimum
        z = rep_u.estimate.estimates @ model.C[0]
        taus = np.array([np.min(z) - 5.0])
        Y = np.ones((window.horizon + 1, 1))
        win = MeasurementWindow.build(window.start, window.inputs, Y, taus)
        sensors = BinarySensorBank(thresholds=taus, noise_bounds=[0.5])
        cs = build_threshold_constraints(win, sensors, model)
        win_same = MeasurementWindow.build(window.start, window.inputs,
                                           window.binary_outputs,
                                           window.thresholds)
        rep_c = solve_constrained_lsmhe(config, model, win_same, pred, cs)
        assert rep_c.status == "optimal"
        assert np.max(np.abs(rep_c.estimate.estimates
                             - rep_u.estimate.estimates)) < 1e-8


def test_constrained_lsmhe_single_active_halfspace_analytic():
    # minimize (x0 - xbar)^2 + (x1 - x0)^2 subject to x0 >= 0.4, x1 <= 0.6
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    config = EstimatorConfig(P=np.eye(1), Q=np.eye(1), R=[1.0], N=1)
    sensors = BinarySensorBank(thresholds=[0.5], noise_bounds=[0.1])
    window = MeasurementWindow.build(0, np.zeros((1, 0)), [[1.0], [-1.0]], [0.5])
    cs = build_threshold_constraints(window, sensors, model)
    xbar = -1.0
    rep = solve_constrained_lsmhe(config, model, window, xbar * np.ones(1), cs)
    # hand KKT: x0 = 0.4 active (multiplier positive), then x1 = x0 feasible
    assert rep.status == "optimal"
    x = rep.estimate.estimates.ravel()
    assert abs(x[0] - (0.4 + cs.margin)) < 1e-9
    assert abs(x[1] - x[0]) < 1e-9


def test_constrained_lsmhe_beats_feasible_probes():
    rng = np.random.default_rng(8)
    successes = 0
    for _ in range(12):
        config, model, window, pred = random_instance(rng, n=2, p=1)
        sensors = BinarySensorBank(thresholds=window.thresholds,
                                   noise_bounds=[0.3])
        cs = build_threshold_constraints(window, sensors, model)
        rep = solve_constrained_lsmhe(config, model, window, pred, cs)
        if rep.status != "optimal":
            continue
        dim = (window.horizon + 1) * model.n
        X = rep.estimate.estimates
        assert cs.max_violation(X) <= 1e-9
        count = 0
        attempts = 0
        while count < 200 and attempts < 20000:
            attempts += 1
            probe = rng.normal(size=(window.horizon + 1, model.n)) * 1.5
            if cs.max_violation(probe, cs.margin) <= 0:
                count += 1
                assert rep.estimate.cost <= lsmhe_cost(
                    config, model, window, pred, probe) + 1e-7
        successes += 1
    assert successes >= 6


def test_pwmhe_with_threshold_rows_stays_feasible():
    rng = np.random.default_rng(9)
    for _ in range(8):
        config, model, window, pred = random_instance(rng, n=2, p=1)
        sensors = BinarySensorBank(thresholds=window.thresholds,
                                   noise_bounds=[0.3])
        cs = build_threshold_constraints(window, sensors, model)
        rep = solve_pwmhe(config, model, window, pred, constraints=cs)
        if rep.status != "optimal":
            continue
        assert cs.max_violation(rep.estimate.estimates) <= 1e-9


def test_disturbance_rows_hold_for_true_noise():
    rng = np.random.default_rng(10)
    n, T = 2, 12
    model = LtiModel(A=rng.normal(size=(n, n)) * 0.5, B=rng.normal(size=(n, 1)),
                     C=[[1.0, 0.0]])
    noise = NoiseBounds(rho_W=0.1, rho_V=np.zeros(1))
    U = rng.normal(size=(T, 1))
    traj = simulate(model, rng.normal(size=n), U, noise, rng_seed=0)
    Y = binarize_outputs(traj.linear_outputs, [0.0])
    N = 6
    window = MeasurementWindow.build(0, U[:N], Y[:N + 1], [0.0])
    cs = disturbance_rows(window, model, rho_W=0.1)
    assert cs.max_violation(traj.states[:N + 1]) <= 1e-12
    tight = disturbance_rows(window, model, rho_W=1e-6)
    assert tight.max_violation(traj.states[:N + 1]) > 0


def test_merge_constraints_counts_rows():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    sensors = BinarySensorBank(thresholds=[0.0], noise_bounds=[0.1])
    window = MeasurementWindow.build(0, np.zeros((2, 0)),
                                     [[1.0], [-1.0], [1.0]], [0.0])
    a = build_threshold_constraints(window, sensors, model)
    b = disturbance_rows(window, model, rho_W=0.2)
    merged = merge_constraints(a, b)
    assert merged.n_rows == a.n_rows + b.n_rows
