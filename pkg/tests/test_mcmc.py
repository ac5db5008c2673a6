import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactlogit.fiber import enumerate_fiber
from exactlogit.mcmc import (
    ALPHA_ZERO,
    BETA_ZERO,
    BINOMIAL,
    POISSON,
    ChainConfig,
    FiberWalk,
    estimate_pvalue,
    histogram,
    iter_chain,
    iter_submodel_null,
    log_weight,
    metropolis_step,
    run_chain,
    sample_submodel_null,
)
from exactlogit.movesets import (
    MoveSet,
    bivariate_logit_config,
    bivariate_unit_moves,
    poisson_moves,
    univariate_poisson_config,
)
from exactlogit.tables import Table, sufficient_statistic

TWO_POINT = Table([1, 0, 1])


def test_chain_config_validation():
    for bad in (dict(burn_in=-1), dict(samples=0), dict(thin=0), dict(seed=-1), dict(seed=2**64)):
        with pytest.raises(ValueError):
            ChainConfig(**bad)


def test_log_weight_examples():
    assert log_weight(Table([[0, 0], [0, 0]]), POISSON) == 0.0
    assert log_weight(Table([[2], [1]]), BINOMIAL) == pytest.approx(math.log(3))
    x = Table([[3, 1, 4], [2, 5, 0]])
    swapped = Table(x.counts[::-1])
    assert log_weight(swapped, BINOMIAL) == pytest.approx(log_weight(x, BINOMIAL))
    with pytest.raises(ValueError):
        log_weight(Table([1, 2, 3]), BINOMIAL)
    with pytest.raises(ValueError):
        log_weight(x, "uniform")


def test_empty_move_set_is_an_error():
    empty = MoveSet((), univariate_poisson_config(3), "empty")
    with pytest.raises(ValueError):
        metropolis_step(TWO_POINT, empty, POISSON, np.random.default_rng(0))
    with pytest.raises(ValueError):
        FiberWalk(TWO_POINT, empty, POISSON, np.random.default_rng(0))


def test_stuck_when_every_proposal_is_infeasible():
    x = Table([0, 1, 0])  # both signs of e1 - 2e2 + e3 go negative
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert metropolis_step(x, poisson_moves(3), POISSON, rng) == x


def test_metropolis_step_stays_in_fiber():
    A = univariate_poisson_config(5)
    M = poisson_moves(5)
    x = Table([2, 0, 3, 1, 1])
    t = sufficient_statistic(A, x).tolist()
    rng = np.random.default_rng(2)
    for _ in range(300):
        x = metropolis_step(x, M, POISSON, rng)
        assert sufficient_statistic(A, x).tolist() == t


def _accept(x, y, kind):
    return min(1.0, math.exp(log_weight(y, kind) - log_weight(x, kind)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=8, max_size=8), st.integers(0, 200))
def test_detailed_balance_on_two_cycles(counts, idx):
    M = bivariate_unit_moves(2, 2) if idx % 2 else poisson_moves(4)
    if len(M[0].axes) == 3:
        x = Table(np.array(counts).reshape(2, 2, 2))
        kind = BINOMIAL
    else:
        x = Table(counts[:4])
        kind = POISSON
    z = M[idx % len(M)]
    y_flat = x.flat + z.dense().ravel()
    if (y_flat < 0).any():
        return
    y = Table(y_flat.reshape(x.axes))
    lhs = math.exp(log_weight(x, kind)) * _accept(x, y, kind)
    rhs = math.exp(log_weight(y, kind)) * _accept(y, x, kind)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_binomial_and_poisson_ratios_agree_on_lifted_fibers():
    x = Table([[[2, 1], [1, 3]], [[1, 2], [2, 1]]])
    M = bivariate_unit_moves(2, 2)
    y = Table(x.flat.reshape(x.axes) + M[0].dense())
    dp = log_weight(y, POISSON) - log_weight(x, POISSON)
    db = log_weight(y, BINOMIAL) - log_weight(x, BINOMIAL)
    assert dp == pytest.approx(db, abs=1e-12)


def test_two_point_fiber_frequencies():
    cfg = ChainConfig(burn_in=1000, samples=100_000, seed=11)
    ind = run_chain(TWO_POINT, poisson_moves(3), POISSON, lambda t: float(t.counts[0] == 1), cfg)
    p = 2 / 3
    # the chain flips with probability 1/4 from (1,0,1) and 1/2 from (0,2,0); lag-1 correlation 1 - 3/4
    rho = 0.25
    se = math.sqrt(p * (1 - p) / ind.size * (1 + rho) / (1 - rho))
    assert abs(ind.mean() - p) < 3 * se


def test_run_chain_schedule_edges_and_determinism():
    M = poisson_moves(3)
    cfg = ChainConfig(burn_in=0, samples=1, seed=4)
    a = run_chain(TWO_POINT, M, POISSON, lambda t: float(t.counts[1]), cfg)
    b = run_chain(TWO_POINT, M, POISSON, lambda t: float(t.counts[1]), cfg)
    assert a.tolist() == b.tolist() and a[0] in (0.0, 2.0)
    cfg = ChainConfig(burn_in=10, samples=500, seed=9, thin=3)
    a = run_chain(TWO_POINT, M, POISSON, lambda t: float(t.counts[1]), cfg)
    b = run_chain(TWO_POINT, M, POISSON, lambda t: float(t.counts[1]), cfg)
    assert np.array_equal(a, b)
    c = run_chain(TWO_POINT, M, POISSON, lambda t: float(t.counts[1]), ChainConfig(10, 500, 10, 3))
    assert not np.array_equal(a, c)


def test_iter_chain_retained_states_stay_in_fiber():
    J, K = 3, 2
    A = bivariate_logit_config(J, K)
    x0 = Table([[[1, 0], [2, 1], [0, 3]], [[1, 2], [0, 1], [2, 0]]])
    t = sufficient_statistic(A, x0).tolist()
    walk = None
    current = x0
    for table, walk in iter_chain(x0, bivariate_unit_moves(J, K), BINOMIAL, ChainConfig(50, 2000, 3)):
        if table is not None:
            current = table
        assert sufficient_statistic(A, current).tolist() == t
    assert walk.steps == 2050
    assert 0 < walk.accepted <= walk.steps


def test_walk_visits_whole_small_fiber():
    A = bivariate_logit_config(2, 2)
    x0 = Table([[[1, 0], [0, 1]], [[1, 2], [2, 1]]])
    F = enumerate_fiber(A, sufficient_statistic(A, x0))
    seen = set()
    for table, _ in iter_chain(x0, bivariate_unit_moves(2, 2), BINOMIAL, ChainConfig(0, 2000, 5)):
        if table is not None:
            seen.add(table.key())
    assert seen == set(F.keys)


def test_estimate_pvalue_examples():
    assert estimate_pvalue([1, 2, 3], 10) == 0.0
    assert estimate_pvalue([1, 2, 3], -math.inf) == 1.0
    assert estimate_pvalue([1, 2, 3, 4], 2.5) == 0.5
    assert estimate_pvalue([2.0 - 5e-10], 2.0) == 1.0
    with pytest.raises(ValueError):
        estimate_pvalue([], 1.0)


def test_histogram():
    bins = histogram([0.1, 0.2, 0.7, 2.6], 0.5)
    assert bins == [(0.0, 2), (0.5, 1), (1.0, 0), (1.5, 0), (2.0, 0), (2.5, 1)]
    assert sum(c for _, c in bins) == 4
    with pytest.raises(ValueError):
        histogram([1.0], 0)


# -- submodel nulls ----------------------------------------------------------

def _table(successes, trials):
    s, n = np.array(successes), np.array(trials)
    return Table(np.stack([s, n - s]))


def test_submodel_null_preserves_margins():
    x = _table([[1, 0, 2], [0, 3, 1], [2, 2, 0], [1, 0, 1]], [[2, 1, 3], [4, 3, 2], [2, 5, 1], [3, 2, 2]])
    trials = x.counts.sum(axis=0)
    s = x.counts[0]
    J, K = s.shape
    jw, kw = np.arange(1, J + 1), np.arange(1, K + 1)
    for which in (BETA_ZERO, ALPHA_ZERO):
        for moveset in ("unit", "full"):
            for y in iter_submodel_null(x, which, ChainConfig(20, 300, 7), moveset):
                y1 = y.counts[0]
                assert np.array_equal(y.counts.sum(axis=0), trials)
                assert (y.counts >= 0).all()
                assert y1.sum() == s.sum()
                if which == BETA_ZERO:
                    assert jw @ y1.sum(axis=1) == jw @ s.sum(axis=1)
                else:
                    assert kw @ y1.sum(axis=0) == kw @ s.sum(axis=0)


def test_submodel_null_single_row_is_pure_allocation():
    x = _table([[1, 0]], [[1, 1]])
    draws = [y.counts[0, 0, 0] for y in iter_submodel_null(x, BETA_ZERO, ChainConfig(0, 20_000, 3))]
    p = np.mean(draws)
    assert abs(p - 0.5) < 3 * math.sqrt(0.25 / len(draws))


def test_submodel_null_errors():
    with pytest.raises(ValueError):
        sample_submodel_null(_table([[1, 0]], [[1, 0]]), BETA_ZERO, ChainConfig(0, 1))
    with pytest.raises(ValueError):
        sample_submodel_null(_table([[1, 0]], [[1, 1]]), "gamma_zero", ChainConfig(0, 1))
    with pytest.raises(ValueError):
        sample_submodel_null(Table([[1, 0], [0, 1]]), BETA_ZERO, ChainConfig(0, 1))
    with pytest.raises(ValueError):
        sample_submodel_null(_table([[1], [0], [1]], [[1], [1], [1]]), BETA_ZERO, ChainConfig(0, 1), "half")


def test_submodel_null_deterministic():
    x = _table([[1, 0], [0, 3], [2, 2]], [[2, 1], [4, 3], [2, 5]])
    a = sample_submodel_null(x, ALPHA_ZERO, ChainConfig(10, 50, 21))
    b = sample_submodel_null(x, ALPHA_ZERO, ChainConfig(10, 50, 21))
    assert a == b
