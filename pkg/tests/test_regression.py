import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from foxnas import regression as rg
from foxnas.regression import (
    CollinearFeatures, InsufficientData, RegressionModel, fit, predict, predict_many, qq_pairs,
    r_stats, residual_report, t_values,
)


def normal_equations(X, y):
    # independent oracle: solve (A^T A) b = A^T y directly
    A = np.column_stack([np.ones(len(y)), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    e = y - A @ beta
    sigma2 = e @ e / (len(y) - A.shape[1])
    se = np.sqrt(sigma2 * np.diag(np.linalg.inv(A.T @ A)))
    return beta, se


def planted(rng, n=300, p=38, sigma=0.1):
    X = rng.integers(1, 8, size=(n, p)).astype(float)
    beta = rng.uniform(-1, 1, size=p + 1)
    y = beta[0] + X @ beta[1:] + sigma * rng.standard_normal(n)
    return X, y, beta


def test_exact_line():
    x = np.arange(10.0)
    m = fit(x[:, None], 3.0 + 0.5 * x)
    assert m.intercept == pytest.approx(3.0, abs=1e-10)
    assert m.coefficients[1] == pytest.approx(0.5, abs=1e-10)
    assert m.r_squared == pytest.approx(1.0) and m.sse == pytest.approx(0.0, abs=1e-20)


def test_constant_target():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    m = fit(X, np.full(20, 4.2))
    assert m.degenerate
    assert m.intercept == pytest.approx(4.2)
    assert np.allclose(m.coefficients[1:], 0, atol=1e-12)
    assert m.r_squared == 0.0


def test_matches_normal_equations():
    rng = np.random.default_rng(1)
    X, y, _ = planted(rng)
    m = fit(X, y)
    beta, se = normal_equations(X, y)
    assert np.allclose(m.coefficients, beta, rtol=1e-8, atol=1e-10)
    assert np.allclose(m.standard_errors, se, rtol=1e-6)


def test_coverage_of_planted_coefficients():
    rng = np.random.default_rng(2)
    inside = total = 0
    for _ in range(100):
        X, y, beta = planted(rng)
        m = fit(X, y)
        err = np.abs(np.array(m.coefficients) - beta)
        inside += int(np.sum(err <= 3 * np.array(m.standard_errors)))
        total += beta.size
    assert inside / total >= 0.95


def test_null_coefficient_t_coverage():
    rng = np.random.default_rng(3)
    small = 0
    for _ in range(100):
        X = rng.normal(size=(300, 3))
        y = 1.0 + 2.0 * X[:, 0] - X[:, 1] + rng.standard_normal(300)
        small += abs(t_values(fit(X, y))[3]) < 2
    assert 90 <= small <= 99


def test_insufficient_and_collinear():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(39, 38))
    with pytest.raises(InsufficientData):
        fit(X, rng.normal(size=39))
    X = rng.normal(size=(50, 3))
    X = np.column_stack([X, X[:, 0] + 2 * X[:, 1]])
    with pytest.raises(CollinearFeatures) as info:
        fit(X, rng.normal(size=50), ["a", "b", "c", "d"])
    assert info.value.column == "d"


def test_predict_cases():
    rng = np.random.default_rng(5)
    X, y, _ = planted(rng, n=80, p=4)
    m = fit(X, y)
    assert predict(m, np.zeros(4)) == pytest.approx(m.intercept)
    assert predict(m, np.eye(4)[2]) == pytest.approx(m.intercept + m.coefficients[3])
    diag = residual_report(m, X, y)
    assert np.allclose(predict_many(m, X), y - diag.residuals, atol=1e-12)
    with pytest.raises(ValueError):
        predict(m, np.zeros(3))


def test_t_values():
    m = RegressionModel((0.4, 0.0, 1.0), (0.1, 0.5, 0.0), 10, ("a", "b"), 0.5, 0.4, 1.0, 0.5)
    t = t_values(m)
    assert t[0] == pytest.approx(4.0) and t[1] == 0.0 and t[2] == math.inf


def test_r_stats():
    y = np.array([1.0, 2.0, 4.0, 7.0])
    perfect = r_stats(y, y, 2)
    assert perfect.sse == 0 and perfect.r_squared == 1 and perfect.adjusted_r_squared == 1
    assert r_stats(y, np.full(4, y.mean()), 2).r_squared == pytest.approx(0.0)
    # tss = 1 and sse = 0.05 give R^2 = 0.95
    rs = r_stats(np.r_[np.ones(150), -np.ones(150)] / math.sqrt(300),
                 np.r_[np.ones(150), -np.ones(150)] / math.sqrt(300) * math.sqrt(0.95) + 0, 39)
    assert rs.tss == pytest.approx(1.0)
    expected = 1 - (rs.sse / rs.tss) * 299 / 261
    assert rs.adjusted_r_squared == pytest.approx(expected)
    assert 1 - 0.05 * 299 / 261 == pytest.approx(0.9427, abs=1e-4)


def test_residuals_sum_to_zero_and_zero_noise():
    rng = np.random.default_rng(6)
    X, y, _ = planted(rng, n=100, p=5)
    diag = residual_report(fit(X, y), X, y)
    assert abs(diag.residuals.sum()) < 1e-8
    X, y, _ = planted(rng, n=100, p=5, sigma=0.0)
    q = qq_pairs(np.zeros(100))
    assert np.all(q[:, 1] == 0)
    assert np.allclose(residual_report(fit(X, y), X, y).residuals, 0, atol=1e-9)


def test_qq_central_band():
    # the extreme order statistics wander far; the central 90% stays tight
    ok = 0
    for s in range(200):
        e = np.random.default_rng(100 + s).standard_normal(300)
        q = qq_pairs(e, ddof=0)
        ok += np.max(np.abs(q[15:285, 0] - q[15:285, 1])) < 0.3
    assert ok >= 190


def test_qq_quantile_points():
    q = qq_pairs(np.array([3.0, -1.0, 0.5]))
    assert q[1, 0] == 0.0
    assert list(q[:, 1]) == sorted(q[:, 1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.01, 100), perm_seed=st.integers(0, 1000))
def test_equivariance(seed, scale, perm_seed):
    rng = np.random.default_rng(seed)
    X, y, _ = planted(rng, n=60, p=4, sigma=0.5)
    base = fit(X, y)
    # rescaling a column rescales its coefficient and leaves t unchanged
    Xs = X.copy()
    Xs[:, 2] *= scale
    scaled = fit(Xs, y)
    assert scaled.coefficients[3] * scale == pytest.approx(base.coefficients[3], rel=1e-6, abs=1e-9)
    assert np.allclose(t_values(scaled), t_values(base), rtol=1e-6, atol=1e-8)
    # row order is irrelevant
    perm = np.random.default_rng(perm_seed).permutation(60)
    permuted = fit(X[perm], y[perm])
    assert np.allclose(permuted.coefficients, base.coefficients, rtol=1e-9, atol=1e-9)
    assert permuted.r_squared == pytest.approx(base.r_squared, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(y=arrays(np.float64, 30, elements=st.floats(-1e3, 1e3)))
def test_r_squared_range(y):
    X = np.linspace(0.0, 1.0, 30)[:, None] ** np.arange(1, 3)
    m = fit(X, y)
    assert 0.0 <= m.r_squared <= 1.0 + 1e-12
    assert m.adjusted_r_squared <= m.r_squared + 1e-12


def test_model_roundtrip():
    rng = np.random.default_rng(7)
    X, y, _ = planted(rng, n=50, p=3)
    m = fit(X, y, ["a", "b", "c"], target_label="latency")
    assert RegressionModel.from_dict(m.to_dict()) == m
    assert m.coefficient("b") == m.coefficients[2]


def test_csv_writers(tmp_path):
    rng = np.random.default_rng(8)
    X, y, _ = planted(rng, n=40, p=2)
    m = fit(X, y, ["a", "b"])
    d = residual_report(m, X, y)
    rg.write_coefficient_csv(tmp_path / "c.csv", m)
    rg.write_residual_csv(tmp_path / "r.csv", d)
    rg.write_qq_csv(tmp_path / "q.csv", d)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "term,coefficient,std_error,t_value,p_value"
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 41
    assert len((tmp_path / "q.csv").read_text().splitlines()) == 41
