from fractions import Fraction

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy import stats

from msdclass.selection import SelectionMask, anova_f, anova_f_matrix, select_top


def exact_f(values, groups) -> float:
    """One-way F of the given float64 values in exact rational arithmetic."""
    x = [Fraction(float(v)) for v in values]
    g = [bool(k) for k in groups]
    a = [v for v, k in zip(x, g) if k]
    b = [v for v, k in zip(x, g) if not k]
    ma, mb, grand = sum(a) / len(a), sum(b) / len(b), sum(x) / len(x)
    ssb = len(a) * (ma - grand) ** 2 + len(b) * (mb - grand) ** 2
    ssw = sum((v - ma) ** 2 for v in a) + sum((v - mb) ** 2 for v in b)
    return float(ssb * (len(x) - 2) / ssw)


def test_anova_hand_oracle():
    # means 2 and 3, grand mean 2.5: SSB = 1.5 on 1 df; SSW = 2 + 2 = 4 on 4 df
    assert anova_f([1, 2, 3, 2, 3, 4], [0, 0, 0, 1, 1, 1]) == pytest.approx(1.5, abs=1e-9)


def test_anova_equal_means_is_zero():
    assert anova_f([1, 2, 3, 3, 2, 1], [0, 0, 0, 1, 1, 1]) == 0.0


def test_anova_sentinels():
    assert anova_f([1, 1, 1, 2, 2], [0, 0, 0, 1, 1]) == np.inf
    assert anova_f([4, 4, 4, 4], [0, 0, 1, 1]) == 0.0


def test_anova_preconditions():
    with pytest.raises(ValueError, match="non-empty"):
        anova_f([1, 2, 3], [1, 1, 1])
    with pytest.raises(ValueError, match="at least 3"):
        anova_f([1, 2], [0, 1])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n0=st.integers(2, 40), n1=st.integers(2, 40))
def test_anova_matches_scipy(seed, n0, n1):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n0 + n1) + np.r_[np.zeros(n0), np.full(n1, rng.uniform(-2, 2))]
    g = np.r_[np.zeros(n0), np.ones(n1)]
    expected = stats.f_oneway(x[g == 0], x[g == 1]).statistic
    assert anova_f(x, g) == pytest.approx(expected, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31),
       a=st.floats(1e-3, 1e3).flatmap(lambda m: st.sampled_from([m, -m])),
       b=st.floats(-1e3, 1e3))
@example(seed=161, a=0.001, b=683.0)
def test_anova_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(30) + np.r_[np.zeros(15), np.full(15, 0.8)]
    g = np.r_[np.zeros(15), np.ones(15)]
    y = a * x + b
    # storing a*x+b in float64 already moves the true F; only that shift is excused
    unavoidable = abs(exact_f(y, g) - exact_f(x, g))
    assert abs(anova_f(y, g) - anova_f(x, g)) <= 1e-9 * anova_f(x, g) + unavoidable


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n0=st.integers(2, 30), n1=st.integers(2, 30),
       offset=st.floats(-1e4, 1e4), spread=st.floats(1e-4, 1e4))
@example(seed=161, n0=15, n1=15, offset=683.0, spread=0.001)
def test_anova_matches_exact_arithmetic(seed, n0, n1, offset, spread):
    rng = np.random.default_rng(seed)
    x = offset + spread * (rng.standard_normal(n0 + n1) + np.r_[np.zeros(n0), np.full(n1, 0.8)])
    g = np.r_[np.zeros(n0), np.ones(n1)]
    assert anova_f(x, g) == pytest.approx(exact_f(x, g), rel=1e-12)


def test_anova_matrix_columnwise():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((25, 6))
    g = rng.integers(0, 2, 25)
    g[:2] = (0, 1)
    np.testing.assert_allclose(anova_f_matrix(X, g), [anova_f(X[:, j], g) for j in range(6)], rtol=1e-12)


def signal_matrix(seed=0, n=200, p=28, informative=(3, 7)):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((2 * n, p))
    g = np.r_[np.zeros(n), np.ones(n)].astype(bool)
    for j in informative:
        X[g, j] += 1.5
    return X, g


def test_select_top_finds_signal():
    X, g = signal_matrix()
    m = select_top(X, g, 2)
    assert set(m.indices) == {3, 7} and m.n_f == 2


def test_select_all_features():
    X, g = signal_matrix(1)
    m = select_top(X, g, 28)
    assert sorted(m.indices) == list(range(28))
    assert list(m.scores) == list(anova_f_matrix(X, g))


def test_select_ties_to_lower_index():
    X, g = signal_matrix(2)
    X[:, 20] = X[:, 5]
    m = select_top(X, g, 28)
    assert m.indices.index(5) == m.indices.index(20) - 1


def test_select_infinite_ranks_first():
    X, g = signal_matrix(3)
    X[:, 11] = g.astype(float)
    assert select_top(X, g, 1).indices == (11,)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n_f=st.integers(1, 28))
def test_selected_scores_dominate(seed, n_f):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 28)) + rng.uniform(0, 1, 28) * np.r_[np.zeros(20), np.ones(20)][:, None]
    g = np.r_[np.zeros(20), np.ones(20)]
    m = select_top(X, g, n_f)
    chosen = np.array(m.scores)[list(m.indices)]
    rest = np.delete(np.array(m.scores), list(m.indices))
    assert len(set(m.indices)) == n_f
    assert np.all(np.diff(chosen) <= 0)
    assert rest.size == 0 or chosen.min() >= rest.max()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_selection_invariant_to_feature_affine_maps(seed):
    rng = np.random.default_rng(seed)
    X, g = signal_matrix(seed % 1000, n=30, informative=(0, 5, 9, 14, 22))
    a = rng.uniform(0.1, 10, 28) * rng.choice([-1, 1], 28)
    b = rng.uniform(-50, 50, 28)
    assert select_top(X, g, 10).indices == select_top(a * X + b, g, 10).indices


def test_select_top_bounds():
    X, g = signal_matrix(4, n=10)
    for bad in (0, 29):
        with pytest.raises(ValueError):
            select_top(X, g, bad)
    X[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        select_top(X, g, 3)


def test_mask_dict_round_trip():
    m = SelectionMask((2, 0), (1.5, np.inf, 3.0))
    d = m.to_dict(names=["a", "b", "c"])
    assert d["scores"][1] == "inf" and d["names"] == ["c", "a"]
    assert SelectionMask.from_dict(d) == m
