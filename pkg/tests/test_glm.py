import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from exactlogit.data import load_dataset
from exactlogit.glm import (
    FiberLR,
    ModelSpec,
    NonConvergenceError,
    chisq_upper_tail,
    degrees_of_freedom,
    fit_logit,
    kernel_log_likelihood,
    lr_over_fiber,
    lr_statistic,
    regularized_upper_gamma,
    score,
    split_table,
)
from exactlogit.tables import Table


def _table(s, n):
    s, n = np.asarray(s), np.asarray(n)
    return Table(np.stack([s, n - s]))


def test_parameter_counts():
    assert ModelSpec("linear_bivariate", 7, 8).n_params == 3
    assert ModelSpec("anova", 7, 8).n_params == 14
    assert ModelSpec("linear_j_only", 7, 8).n_params == 2
    assert ModelSpec("linear_k_only", 7, 8).n_params == 2
    assert ModelSpec("intercept_only", 7, 8).n_params == 1
    with pytest.raises(ValueError):
        ModelSpec("quadratic", 2, 2)


def test_anova_design_is_sum_to_zero():
    X = ModelSpec("anova", 3, 4).design
    assert X.shape == (12, 6)
    assert np.allclose(X[:, 1:].reshape(3, 4, 5).sum(axis=(0, 1)), 0)


def test_degrees_of_freedom():
    assert degrees_of_freedom(ModelSpec("linear_bivariate", 7, 8), ModelSpec("anova", 7, 8)) == 11
    assert degrees_of_freedom(ModelSpec("linear_bivariate", 6, 2), ModelSpec("anova", 6, 2)) == 4
    assert degrees_of_freedom(ModelSpec("linear_k_only", 7, 8), ModelSpec("linear_bivariate", 7, 8)) == 1


def test_half_success_everywhere_fits_zero():
    res = fit_logit(_table(np.full((3, 4), 2), np.full((3, 4), 4)), ModelSpec("linear_bivariate", 3, 4))
    assert res.converged
    assert np.allclose(res.coefficients, 0, atol=1e-10)


def test_fit_preconditions():
    with pytest.raises(ValueError):
        fit_logit(_table([[1, 0]], [[2, 0]]), ModelSpec("linear_bivariate", 1, 2))
    with pytest.raises(ValueError):
        fit_logit(_table([[1, 0]], [[2, 2]]), ModelSpec("linear_bivariate", 2, 2))


def test_separation_raises_with_best_iterate():
    t = _table([[0, 0], [0, 0], [5, 5]], [[5, 5], [5, 5], [5, 5]])
    with pytest.raises(NonConvergenceError) as err:
        fit_logit(t, ModelSpec("linear_bivariate", 3, 2))
    best = err.value.best
    assert not best.converged
    assert np.abs(best.coefficients).max() > 30


def test_converged_fit_has_small_gradient():
    t = load_dataset("table2").to_table()
    for kind in ("linear_bivariate", "anova", "linear_j_only", "linear_k_only", "intercept_only"):
        res = fit_logit(t, ModelSpec(kind, 2, 6))
        assert res.converged and res.max_gradient <= 1e-8


def _fd_gradient(X, s, n, beta, h=1e-5):
    g = np.empty_like(beta)
    for i in range(beta.size):
        e = np.zeros_like(beta)
        e[i] = h
        g[i] = (kernel_log_likelihood(X, s, n, beta + e) - kernel_log_likelihood(X, s, n, beta - e)) / (2 * h)
    return g


@pytest.mark.parametrize("name", ["table1", "table2"])
@pytest.mark.parametrize("kind", ["linear_bivariate", "anova"])
def test_score_matches_finite_differences_away_from_optimum(name, kind):
    data = load_dataset(name)
    spec = ModelSpec(kind, data.J, data.K)
    s, n = split_table(data.to_table())
    rng = np.random.default_rng(0)
    beta = fit_logit(data.to_table(), spec).coefficients + rng.normal(0, 0.2, spec.n_params)
    a = score(spec.design, s, n, beta)
    f = _fd_gradient(spec.design, s, n, beta)
    assert np.all(np.abs(a - f) <= 1e-4 * np.abs(a))


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_nesting_monotonicity(data):
    J = data.draw(st.integers(2, 4))
    K = data.draw(st.integers(2, 4))
    n = np.array(data.draw(st.lists(st.integers(3, 9), min_size=J * K, max_size=J * K))).reshape(J, K)
    frac = np.array(data.draw(st.lists(st.floats(0.2, 0.8), min_size=J * K, max_size=J * K))).reshape(J, K)
    s = np.clip(np.round(frac * n).astype(int), 1, n - 1)
    t = _table(s, n)
    ll = {k: fit_logit(t, ModelSpec(k, J, K)).log_likelihood
          for k in ("anova", "linear_bivariate", "linear_j_only", "linear_k_only", "intercept_only")}
    slack = 1e-8
    assert ll["anova"] >= ll["linear_bivariate"] - slack
    assert ll["linear_bivariate"] >= ll["linear_j_only"] - slack
    assert ll["linear_bivariate"] >= ll["linear_k_only"] - slack
    assert ll["linear_j_only"] >= ll["intercept_only"] - slack


def test_lr_statistic_rules():
    t = load_dataset("table2").to_table()
    fit = fit_logit(t, ModelSpec("linear_bivariate", 2, 6))
    assert lr_statistic(fit, fit) == 0.0
    anova = fit_logit(t, ModelSpec("anova", 2, 6))
    assert lr_statistic(fit, anova) == pytest.approx(20.89, abs=0.01)
    with pytest.raises(ValueError):
        lr_statistic(anova, fit)
    j_only = fit_logit(t, ModelSpec("linear_j_only", 2, 6))
    k_only = fit_logit(t, ModelSpec("linear_k_only", 2, 6))
    with pytest.raises(ValueError):
        lr_statistic(j_only, k_only)


def test_paper_statistics_table1():
    t = load_dataset("table1").to_table()
    J, K = 8, 7
    full = fit_logit(t, ModelSpec("linear_bivariate", J, K))
    assert lr_statistic(fit_logit(t, ModelSpec("linear_k_only", J, K)), full) == pytest.approx(18.09, abs=0.01)
    assert lr_statistic(fit_logit(t, ModelSpec("linear_j_only", J, K)), full) == pytest.approx(22.56, abs=0.01)
    assert lr_over_fiber(ModelSpec("linear_bivariate", J, K), ModelSpec("anova", J, K), t) == pytest.approx(
        13.07587, abs=5e-4
    )


def test_near_null_table_has_small_statistic():
    J, K = 4, 5
    n = np.full((J, K), 200)
    jj, kk = np.meshgrid(np.arange(1, J + 1), np.arange(1, K + 1), indexing="ij")
    p = 1 / (1 + np.exp(-(-1.0 + 0.3 * jj - 0.2 * kk)))
    t = _table(np.round(n * p).astype(int), n)
    stat = lr_over_fiber(ModelSpec("linear_bivariate", J, K), ModelSpec("anova", J, K), t)
    assert 0 <= stat < 0.1


def test_layer_relabeling_leaves_statistic_unchanged():
    t = load_dataset("table1").to_table()
    swapped = Table(t.counts[::-1])
    null, alt = ModelSpec("linear_bivariate", 8, 7), ModelSpec("anova", 8, 7)
    assert lr_over_fiber(null, alt, swapped) == pytest.approx(lr_over_fiber(null, alt, t), abs=1e-8)
    a, b = fit_logit(t, null), fit_logit(swapped, null)
    assert np.allclose(a.coefficients, -b.coefficients, atol=1e-7)


def test_fiber_lr_matches_fresh_fits():
    data = load_dataset("table2")
    x = data.to_table()
    null, alt = ModelSpec("linear_bivariate", 2, 6), ModelSpec("anova", 2, 6)
    fast = FiberLR(null, alt, x)
    slow = FiberLR(null, alt, x, fixed_null=False)
    # a table in the same fiber: apply the basic 2x2 move on layer one
    c = x.counts.copy()
    c[0, 0, 1] += 1
    c[0, 1, 1] -= 1
    c[0, 0, 2] -= 1
    c[0, 1, 2] += 1
    c[1] = x.counts.sum(axis=0) - c[0]
    y = Table(c)
    ref = lr_statistic(fit_logit(y, null), fit_logit(y, alt))
    assert fast(y) == pytest.approx(ref, abs=1e-8)
    assert slow(y) == pytest.approx(ref, abs=1e-8)
    assert fast.flagged == 0


def test_fiber_lr_separated_tables():
    x = _table([[1, 2], [1, 1], [2, 1]], [[3, 3], [3, 3], [3, 3]])
    # anova reaches its limiting fit inside the coefficient bound: no flag
    stat = FiberLR(ModelSpec("linear_bivariate", 3, 2), ModelSpec("anova", 3, 2), x)
    value = stat(_table([[0, 0], [0, 0], [3, 3]], [[3, 3], [3, 3], [3, 3]]))
    assert math.isfinite(value) and value >= 0 and stat.flagged == 0
    # the linear alternative runs past the bound and is flagged, not fatal
    stat = FiberLR(ModelSpec("linear_k_only", 3, 2), ModelSpec("linear_bivariate", 3, 2), x)
    value = stat(_table([[0, 0], [0, 0], [3, 3]], [[3, 3], [3, 3], [3, 3]]))
    assert math.isfinite(value) and value >= 0
    assert stat.flagged == 1


# -- chi-square tails --------------------------------------------------------

def test_chisq_examples():
    assert chisq_upper_tail(0.0, 3) == 1.0
    assert f"{chisq_upper_tail(18.09, 1):.3e}" == "2.107e-05"
    assert f"{chisq_upper_tail(22.56, 1):.3e}" == "2.037e-06"
    assert chisq_upper_tail(13.07587, 11) == pytest.approx(0.2884, abs=1e-4)
    assert chisq_upper_tail(20.89, 4) == pytest.approx(0.0003330, abs=1e-6)
    with pytest.raises(ValueError):
        chisq_upper_tail(-1.0, 2)
    with pytest.raises(ValueError):
        chisq_upper_tail(1.0, 0)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 200), st.integers(1, 60))
def test_chisq_matches_scipy(x, df):
    assert abs(chisq_upper_tail(x, df) - stats.chi2.sf(x, df)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 30), st.floats(0, 30), st.floats(0.01, 5))
def test_upper_gamma_monotone(a, x, dx):
    assert regularized_upper_gamma(a, 0.0) == 1.0
    assert regularized_upper_gamma(a, x + dx) <= regularized_upper_gamma(a, x) + 1e-15
