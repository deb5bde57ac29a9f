import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from voxtex.classify import (
    compute_metrics,
    cross_validate,
    descriptor_matrix,
    parse_scheme,
    read_labels,
    roc_auc,
    stratified_folds,
    train_nbc,
)
from voxtex.mnf import Feature, MnfDescriptor


def test_separated_classes_posterior():
    r = np.random.default_rng(0)
    X = np.concatenate([r.normal(0, 1, 200), r.normal(10, 1, 200)])[:, None]
    y = ["A"] * 200 + ["B"] * 200
    m = train_nbc(X, y)
    p = m.predict_proba([[1.0]])[0]
    assert m.predict([[1.0]])[0] == "A"
    assert p[m.classes.index("A")] > 0.99
    # closed-form check against the fitted Gaussians
    la = stats.norm.logpdf(1.0, m.means[0, 0], np.sqrt(m.variances[0, 0]))
    lb = stats.norm.logpdf(1.0, m.means[1, 0], np.sqrt(m.variances[1, 0]))
    assert p[0] == pytest.approx(1 / (1 + np.exp(lb - la)), rel=1e-12)


def test_identical_classes_posterior_equals_prior():
    X = np.array([[0.0], [1.0], [0.0], [1.0], [0.0], [1.0]])
    y = ["a", "a", "b", "b", "b", "b"]
    m = train_nbc(X, y)
    assert np.allclose(m.predict_proba([[0.3]])[0], [1 / 3, 2 / 3])


def test_zero_variance_feature_floored():
    X = np.array([[1.0, 0.0], [1.0, 0.1], [1.0, 2.0], [1.0, 2.1]])
    m = train_nbc(X, ["a", "a", "b", "b"])
    assert np.all(m.variances > 0)
    assert np.all(np.isfinite(m.predict_proba([[1.0, 0.05], [2.0, 2.0]])))


@pytest.mark.parametrize("y", [["a", "a", "a"], ["a", "a", "b"]])
def test_training_preconditions(y):
    with pytest.raises(ValueError):
        train_nbc(np.zeros((3, 1)), y)


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-50, 50))
def test_affine_feature_invariance(seed, a, b):
    r = np.random.default_rng(seed)
    X = r.normal(size=(12, 3))
    y = ["p"] * 6 + ["n"] * 6
    T = r.normal(size=(5, 3))
    p1 = train_nbc(X, y).predict_proba(T)
    p2 = train_nbc(a * X + b, y).predict_proba(a * T + b)
    assert np.allclose(p1, p2, atol=1e-8)


def test_hand_metrics():
    m = compute_metrics(9, 1, 9, 1)
    assert (m.recall, m.precision, m.accuracy, m.dice) == pytest.approx((0.9, 0.9, 0.9, 0.9))
    assert m.fp_rate == pytest.approx(0.1)
    assert m.j_index == pytest.approx(0.8)
    assert m.f_measure == pytest.approx(0.9)


def test_undefined_ratios_absent():
    m = compute_metrics(0, 0, 5, 0)
    assert m.recall is None and m.precision is None and m.f_measure is None and m.j_index is None
    assert m.dice is None
    assert m.accuracy == 1.0
    with pytest.raises(ValueError):
        compute_metrics(0, 0, 0, 0)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_metric_identities(tp, fp, tn, fn):
    if tp + fp + tn + fn == 0:
        return
    m = compute_metrics(tp, fp, tn, fn)
    m.check_identities()
    for name in ("recall", "fp_rate", "accuracy", "precision", "f_measure", "dice"):
        v = getattr(m, name)
        assert v is None or 0 <= v <= 1


def test_auc_perfect_and_ties():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5
    assert roc_auc([0.1, 0.2], [1, 1]) is None


def test_auc_brute_force(rng):
    s = rng.integers(0, 5, 30).astype(float)
    pos = rng.random(30) > 0.5
    pairs = [(a > b) + 0.5 * (a == b) for a in s[pos] for b in s[~pos]]
    assert roc_auc(s, pos) == pytest.approx(np.mean(pairs), abs=1e-12)


@given(st.integers(0, 10_000))
def test_auc_monotone_invariance(seed):
    r = np.random.default_rng(seed)
    s = r.normal(size=20)
    pos = np.arange(20) % 2 == 0
    assert roc_auc(s, pos) == pytest.approx(roc_auc(np.exp(3 * s) + 1, pos), abs=1e-12)


def test_random_scores_auc_null():
    aucs = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        aucs.append(roc_auc(r.random(200), np.arange(200) < 100))
    assert all(0.4 <= a <= 0.6 for a in aucs)


def _separable(n=20):
    r = np.random.default_rng(1)
    X = np.vstack([r.normal(0, 1, (n, 2)), r.normal(8, 1, (n, 2))])
    y = ["non_progressive"] * n + ["progressive"] * n
    return X, y


@pytest.mark.parametrize("scheme", ["loo", "k5", "k10"])
def test_separable_perfect(scheme):
    X, y = _separable()
    rep = cross_validate(X, y, scheme=scheme, runs=3, seed=0)
    assert rep.metrics.accuracy == 1.0
    assert rep.metrics.roc_area == 1.0


def test_loo_episode_count_and_determinism():
    X, y = _separable(7)
    a = cross_validate(X, y, "loo")
    b = cross_validate(X, y, "loo")
    assert a.episodes == 14 and a.runs == 1
    assert a.to_dict() == b.to_dict()


def test_kfold_mean_sd_and_seeding():
    r = np.random.default_rng(2)
    X = r.normal(size=(30, 3))
    X[:15] += 0.8
    y = ["progressive"] * 15 + ["non_progressive"] * 15
    a = cross_validate(X, y, "k5", runs=10, seed=4)
    b = cross_validate(X, y, "k5", runs=10, seed=4)
    c = cross_validate(X, y, "k5", runs=10, seed=5)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()
    accs = [m.accuracy for m in a.run_metrics]
    assert a.mean["accuracy"] == pytest.approx(np.mean(accs))
    assert a.sd["accuracy"] == pytest.approx(np.std(accs, ddof=1))
    assert a.episodes == 50
    pooled = a.metrics
    assert pooled.tp + pooled.fp + pooled.tn + pooled.fn == 300


def test_shuffled_labels_null():
    r = np.random.default_rng(3)
    X = r.normal(size=(40, 4))
    y = np.array(["progressive"] * 20 + ["non_progressive"] * 20)
    r.shuffle(y)
    rep = cross_validate(X, y, "k5", runs=60, seed=0)
    assert 0.4 <= rep.mean["accuracy"] <= 0.6


def test_stratified_folds_balanced(rng):
    y = np.array(["a"] * 10 + ["b"] * 7)
    folds = stratified_folds(y, 5, rng)
    for f in range(5):
        assert 2 <= np.sum((folds == f) & (y == "a")) <= 2
        assert 1 <= np.sum((folds == f) & (y == "b")) <= 2


def test_kfold_preconditions():
    X, y = _separable(2)
    with pytest.raises(ValueError, match="at least 10"):
        cross_validate(X, y, "k10")
    with pytest.raises(ValueError):
        cross_validate(X[:5], ["a", "a", "a", "a", "b"], "k5")


@pytest.mark.parametrize("text, k", [("loo", None), ("k5", 5), ("kfold10", 10), ("kfold(5)", 5), ("10", 10)])
def test_parse_scheme(text, k):
    assert parse_scheme(text) == k


def test_parse_scheme_bad():
    for s in ("k1", "abc"):
        with pytest.raises(ValueError):
            parse_scheme(s)


def _desc(case_id, items):
    return MnfDescriptor(case_id, [Feature(s, lv, p, fd) for s, lv, p, fd in items])


def test_descriptor_alignment():
    a = _desc("a", [("mu", 1, "LLL", 2.1), ("mu", 1, "HHH", 2.2), ("mu", 2, "HHH/LLL", 2.3), ("omega", 1, "LLL", 2.4)])
    b = _desc("b", [("mu", 1, "LLL", 2.5), ("mu", 1, "HHH", 2.6), ("mu", 2, "LLH/LLL", 2.7), ("omega", 1, "LLL", 2.8)])
    c = _desc("c", [("mu", 1, "LLL", 2.9), ("mu", 1, "HHH", 3.0), ("omega", 1, "LLL", 2.0)])
    X, keys = descriptor_matrix([a, b])
    assert keys == [("mu", 1, "HHH"), ("mu", 1, "LLL"), ("mu", 2, "LLL"), ("omega", 1, "LLL")]
    assert X[1].tolist() == [2.6, 2.5, 2.7, 2.8]
    X, keys = descriptor_matrix([a, b, c])
    assert ("mu", 2, "LLL") not in keys and X.shape == (3, 3)


def test_read_labels(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("case_id,label\nc1,progressive\nc2,non_progressive\n")
    assert read_labels(p) == {"c1": "progressive", "c2": "non_progressive"}
    p.write_text("id,y\nc1,a\n")
    with pytest.raises(ValueError, match="case_id,label"):
        read_labels(p)
