from fractions import Fraction

import numpy as np
import pytest

from binmhe.linsys import LtiModel
from binmhe.observability import (check_uniform_observability,
                                  observability_matrix,
                                  switching_density_condition,
                                  uniform_observability)
from binmhe.sensing import MeasurementWindow


def window_from_binary(Y, start=0, m=0):
    Y = np.asarray(Y, dtype=float)
    return MeasurementWindow.build(start, np.zeros((Y.shape[0] - 1, m)), Y)


def exact_rank(M):
    # row-reduction oracle over exact rationals
    rows = [[Fraction(int(v)) for v in row] for row in M]
    rank = 0
    col = 0
    n_rows = len(rows)
    n_cols = len(rows[0]) if rows else 0
    while rank < n_rows and col < n_cols:
        pivot = next((r for r in range(rank, n_rows) if rows[r][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        pv = rows[rank][col]
        for r in range(n_rows):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / pv
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        col += 1
    return rank


def test_scalar_two_switchings():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    Y = np.array([[1.0], [-1.0], [1.0], [1.0]])
    w = window_from_binary(Y)
    rep = observability_matrix(model, w)
    assert rep.theta.shape == (2, 1)
    assert np.allclose(rep.theta, [[1.0], [1.0]])
    assert rep.min_singular_value == pytest.approx(np.sqrt(2.0))
    assert rep.per_sensor_rows == ((0, 0), (0, 1))
    assert check_uniform_observability(rep, 1)


def test_empty_switching_sets():
    model = LtiModel(A=[[1.0, 0.1], [0, 1.0]], B=np.zeros((2, 0)),
                     C=[[1.0, 0.0]])
    w = window_from_binary(np.ones((5, 1)))
    rep = observability_matrix(model, w)
    assert rep.theta.shape == (0, 2)
    assert rep.rank == 0
    assert rep.min_singular_value == 0.0
    assert not check_uniform_observability(rep, 2)


def test_exponent_bookkeeping():
    A = np.array([[2.0]])
    model = LtiModel(A=A, B=np.zeros((1, 0)), C=[[1.0]])
    Y = np.array([[1.0], [1.0], [-1.0], [-1.0]])  # switch at k = start+1
    w = window_from_binary(Y, start=100)
    rep = observability_matrix(model, w)
    assert rep.per_sensor_rows == ((0, 101),)
    assert rep.theta[0, 0] == pytest.approx(2.0)  # C A^(k - start) with k-start = 1


def test_rank_matches_row_reduction_oracle():
    rng = np.random.default_rng(10)
    for _ in range(30):
        rows = rng.integers(1, 13)
        cols = rng.integers(1, 13)
        M = rng.integers(-3, 4, size=(rows, cols)).astype(float)
        s = np.linalg.svd(M, compute_uv=False)
        tol = max(rows, cols) * np.finfo(float).eps * (s[0] if s.size else 0)
        svd_rank = int(np.sum(s > tol))
        assert svd_rank == exact_rank(M)


def test_min_singular_monotone_under_row_append():
    rng = np.random.default_rng(11)
    model_A = rng.normal(size=(3, 3))
    C = rng.normal(size=(1, 3))
    model = LtiModel(A=model_A, B=np.zeros((3, 0)), C=C)
    # grow the switching set by flipping more outputs
    N = 8
    y = np.ones(N + 1)
    deltas = []
    for flips in range(1, 5):
        yy = y.copy()
        for j in range(flips):
            yy[2 * j + 1] *= -1  # creates switches around each flipped sample
        w = window_from_binary(yy[:, None])
        rep = observability_matrix(model, w)
        prev_rows = rep.theta.shape[0]
        deltas.append((prev_rows, rep.min_singular_value))
    rows_count = [d[0] for d in deltas]
    vals = [d[1] for d in deltas]
    assert rows_count == sorted(rows_count)
    for a, b in zip(vals, vals[1:]):
        assert b >= a - 1e-12


def test_mirror_invariance_of_measure():
    rng = np.random.default_rng(12)
    A = rng.normal(size=(2, 2)) * 0.7
    model = LtiModel(A=A, B=np.zeros((2, 0)), C=[[1.0, 0.5]])
    z = np.cumsum(rng.normal(size=12))
    tau = 0.2
    y = np.where(z >= tau, 1.0, -1.0)
    y_m = np.where(-z >= -tau, 1.0, -1.0)
    w = window_from_binary(y[:, None])
    w_m = window_from_binary(y_m[:, None])
    r1 = observability_matrix(model, w)
    r2 = observability_matrix(model, w_m)
    assert r1.min_singular_value == pytest.approx(r2.min_singular_value)


def test_uniform_observability_is_infimum():
    model = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    w_good = window_from_binary(np.array([[1.0], [-1.0], [1.0]]))
    w_empty = window_from_binary(np.ones((3, 1)))
    assert uniform_observability(model, [w_good]) > 0
    assert uniform_observability(model, [w_good, w_empty]) == 0.0
    with pytest.raises(ValueError):
        uniform_observability(model, [])


def test_switching_density_condition_trivial_cases():
    eye = LtiModel(A=[[1.0]], B=np.zeros((1, 0)), C=[[1.0]])
    assert switching_density_condition(eye, nu_t=0, N=10)
    neg = LtiModel(A=-np.eye(2), B=np.zeros((2, 0)), C=[[1.0, 0.0]])
    for nu in range(0, 11):
        assert not switching_density_condition(neg, nu_t=nu, N=10)


def test_switching_density_threshold_oscillator():
    from binmhe.experiments import example1_setup
    model = example1_setup().model
    # oracle: largest eigenvalue angle from an independent eigensolver
    import scipy.linalg as sla
    eigs = sla.eigvals(model.A)
    omega_max = max(abs(np.angle(v)) for v in eigs)
    N = 100
    threshold = 2 * (model.n - 1) + N * omega_max / np.pi
    nu_lo = int(np.floor(threshold))
    assert not switching_density_condition(model, nu_lo, N)
    assert switching_density_condition(model, nu_lo + 1, N)
