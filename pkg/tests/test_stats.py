import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from voxtex.stats import wilcoxon_signed_rank


def brute_force_p(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    ranks = stats.rankdata(np.abs(d))
    w_obs = ranks[d > 0].sum()
    total = ranks.sum()
    obs = min(w_obs, total - w_obs)
    hits = 0
    n = len(d)
    for signs in itertools.product((0, 1), repeat=n):
        w = np.dot(signs, ranks)
        hits += min(w, total - w) <= obs + 1e-9
    return min(1.0, hits / 2**n)


def test_all_equal_rejected():
    with pytest.raises(ValueError, match="no nonzero differences"):
        wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])


def test_all_one_sided():
    b = np.arange(10.0)
    stat, p = wilcoxon_signed_rank(b + 1, b)
    assert stat == 0.0
    assert p == pytest.approx(2 / 2**10, abs=1e-15)


def test_textbook_n8():
    a = [125, 115, 130, 140, 140, 115, 140, 125]
    b = [110, 122, 125, 120, 140, 124, 123, 137]
    stat, p = wilcoxon_signed_rank(a, b)
    assert p == pytest.approx(brute_force_p(a, b), abs=1e-12)
    # one zero difference dropped: 7 pairs remain
    assert stat == 9.0


FIXTURES = [
    ([1.2, 3.4, 2.2, 5.0, 0.3, 2.8], [1.0, 3.0, 2.5, 4.0, 0.1, 2.0]),
    ([1, 2, 3, 4, 5, 6, 7], [2, 1, 4, 3, 6, 5, 9]),  # tied magnitudes
    ([0.5, 0.7, 0.6, 0.9, 0.8, 0.3, 0.4, 0.2, 0.1, 0.05], [0.45, 0.8, 0.5, 0.95, 0.6, 0.35, 0.1, 0.25, 0.3, 0.0]),
    ([3, 3, 3, 3, 3, 3, 3, 3, 3], [1, 2, 4, 5, 1, 5, 2, 4, 3]),
]


@pytest.mark.parametrize("a, b", FIXTURES)
def test_exact_matches_enumeration(a, b):
    assert wilcoxon_signed_rank(a, b)[1] == pytest.approx(brute_force_p(a, b), abs=1e-12)


@settings(max_examples=40)
@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=1, max_size=10))
def test_exact_matches_enumeration_property(pairs):
    a, b = (np.array(x, float) for x in zip(*pairs))
    if np.all(a == b):
        return
    assert wilcoxon_signed_rank(a, b)[1] == pytest.approx(brute_force_p(a, b), abs=1e-12)


@pytest.mark.parametrize("n", [6, 12, 25])
def test_scipy_exact_agreement(n):
    r = np.random.default_rng(n)
    a = r.normal(size=n)
    b = a + r.normal(0.4, 1, size=n)
    ref = stats.wilcoxon(a, b, method="exact")
    stat, p = wilcoxon_signed_rank(a, b)
    assert stat == ref.statistic
    assert p == pytest.approx(ref.pvalue, rel=1e-12)


def test_normal_approximation_large_n():
    r = np.random.default_rng(7)
    a = r.normal(size=40)
    b = a + r.normal(0.3, 1, size=40)
    ref = stats.wilcoxon(a, b, method="approx", correction=True)
    stat, p = wilcoxon_signed_rank(a, b)
    assert stat == ref.statistic
    assert p == pytest.approx(ref.pvalue, rel=1e-10)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1, 2, 3])
