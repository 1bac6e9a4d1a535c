import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaitlab.classify import (PER_CLASS, SHARED, MgBayesModel, claim_log_posterior, knn_fit, knn_predict,
                              majority_vote, mgbayes_fit, mgbayes_log_posterior, mgbayes_posterior,
                              mgbayes_predict)
from gaitlab.subspace import SingularScatterWarning

from oracles import direct_posterior, linear_scan_knn


def _clusters(rng, k=3, n=30, d=2, spread=6.0):
    mu = rng.normal(size=(k, d)) * spread
    X = np.vstack([rng.normal(m, 1.0, (n, d)) for m in mu])
    return X, np.repeat(np.arange(k), n), mu


# --- fit ---

def test_balanced_priors(rng):
    X, y, _ = _clusters(rng, 2)
    assert np.allclose(mgbayes_fit(X, y).priors, [0.5, 0.5])


def test_shared_covariance_is_pooled_residual(rng):
    X, y, _ = _clusters(rng, 3, 12, 3)
    S = np.zeros((3, 3))
    for c in range(3):
        for x in X[y == c]:
            r = x - X[y == c].mean(0)
            S += np.outer(r, r)
    assert np.allclose(mgbayes_fit(X, y).covariances, S / (len(X) - 3))


def test_one_sample_per_class_gets_regularized(rng):
    X = rng.normal(size=(3, 2))
    with pytest.warns(SingularScatterWarning):
        m = mgbayes_fit(X, [0, 1, 2])
    assert np.all(np.linalg.eigvalsh(m.covariances) > 0)


def test_means_recovered(rng):
    n = 400
    X, y, mu = _clusters(rng, 3, n, 4)
    m = mgbayes_fit(X, y)
    assert np.all(np.abs(m.means - mu) < 3 / np.sqrt(n))


def test_per_class_mode(rng):
    X, y, _ = _clusters(rng, 2, 40, 2)
    m = mgbayes_fit(X, y, PER_CLASS)
    assert m.covariances.shape == (2, 2, 2)
    with pytest.raises(ValueError):
        mgbayes_fit(X[:3], [0, 1, 1], PER_CLASS)
    with pytest.raises(ValueError):
        mgbayes_fit(X, y, "diagonal")


# --- posterior ---

def _symmetric_model(mu=2.0):
    return MgBayesModel(np.array([0, 1]), np.array([[-mu, 0.0], [mu, 0.0]]), np.eye(2), np.array([0.5, 0.5]))


def test_symmetric_midpoint():
    assert np.allclose(mgbayes_posterior(_symmetric_model(), [0.0, 0.0]), [0.5, 0.5])


def test_symmetric_tie_goes_to_lower_index():
    assert mgbayes_predict(_symmetric_model(), np.array([0.0, 0.0])) == 0


def test_at_class_mean(rng):
    X, y, mu = _clusters(rng, 4, 50, 3, spread=10)
    m = mgbayes_fit(X, y)
    for k in range(4):
        p = mgbayes_posterior(m, m.means[k])
        assert p[k] > 0.99
        assert mgbayes_predict(m, m.means[k]) == k


@pytest.mark.parametrize("mode", [SHARED, PER_CLASS])
def test_direct_density_oracle(rng, mode):
    for _ in range(20):
        X, y, _ = _clusters(rng, 3, 15, 3, spread=1.5)
        m = mgbayes_fit(X, y, mode)
        for x in rng.normal(size=(5, 3)):
            assert np.max(np.abs(mgbayes_posterior(m, x) - direct_posterior(m, x))) < 1e-9


def test_predict_is_posterior_argmax(rng):
    X, y, _ = _clusters(rng, 5, 10, 4, spread=1.0)
    m = mgbayes_fit(X, y)
    Q = rng.normal(size=(200, 4)) * 3
    assert np.array_equal(mgbayes_predict(m, Q), m.classes[np.argmax(mgbayes_posterior(m, Q), axis=1)])


def test_posteriors_sum_to_one_far_away(rng):
    X, y, _ = _clusters(rng)
    lp = mgbayes_log_posterior(mgbayes_fit(X, y), np.full((1, 2), 1e4))
    assert np.isfinite(lp).all()
    assert np.exp(lp).sum() == pytest.approx(1.0)


def test_claim_log_posterior(rng):
    X, y, _ = _clusters(rng, 3, 20, 2, spread=1.0)
    m = mgbayes_fit(X, y)
    Q = rng.normal(size=(10, 2))
    claimed = rng.integers(0, 3, 10)
    lp = mgbayes_log_posterior(m, Q)
    assert np.allclose(claim_log_posterior(m, Q, claimed), lp[np.arange(10), claimed])
    assert claim_log_posterior(m, Q[:1], [7])[0] == -np.inf


def test_claim_log_posterior_resolves_near_one():
    m = _symmetric_model(10.0)
    lp = claim_log_posterior(m, np.array([[10.0, 0.0]]), [1])[0]
    # the posterior itself rounds to 1, its log keeps the competing mass exp(-200)
    assert np.exp(lp) == 1.0
    assert lp == pytest.approx(-np.exp(-200.0), rel=1e-9)


def test_model_dict_round_trip(rng):
    X, y, _ = _clusters(rng)
    m = mgbayes_fit(X, y)
    back = MgBayesModel.from_dict(m.to_dict())
    assert np.array_equal(mgbayes_posterior(back, X), mgbayes_posterior(m, X))


# --- kNN ---

def test_knn_exact_point(rng):
    P = rng.normal(size=(20, 3))
    m = knn_fit(P, np.arange(20))
    assert knn_predict(m, P[13]) == 13


def test_knn_equidistant_tie():
    m = knn_fit([[1.0, 0.0], [-1.0, 0.0]], ["late", "early"][::-1])
    assert knn_predict(m, np.array([0.0, 0.0])) == "early"


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_linear_scan(rng, k):
    P = rng.integers(-3, 4, (60, 3)).astype(float)  # integer grid forces distance ties
    labels = rng.integers(0, 4, 60)
    m = knn_fit(P, labels, k)
    Q = rng.integers(-3, 4, (200, 3)).astype(float)
    got = knn_predict(m, Q)
    assert [int(g) for g in got] == [int(linear_scan_knn(P, labels, q, k)) for q in Q]


def test_knn_bad_k():
    with pytest.raises(ValueError):
        knn_fit(np.zeros((3, 2)), [0, 1, 2], k=4)


# --- majority vote ---

def test_vote_simple():
    assert majority_vote(["M", "M", "F"]) == "M"


def test_vote_tie_by_confidence():
    assert majority_vote(["M", "F"], [0.9, 0.6]) == "M"
    assert majority_vote(["M", "F"], [0.6, 0.9]) == "F"


def test_vote_empty():
    with pytest.raises(ValueError):
        majority_vote([])


def test_vote_counting_oracle(rng):
    for _ in range(1000):
        labels = rng.choice(list("abc"), int(rng.integers(1, 12))).tolist()
        counts = Counter(labels)
        top = max(counts.values())
        assert majority_vote(labels) == min(l for l, c in counts.items() if c == top)


@given(st.lists(st.sampled_from(["F", "M"]), min_size=1, max_size=30),
       st.lists(st.floats(0, 1), min_size=30, max_size=30))
def test_vote_returns_a_modal_label(labels, conf):
    out = majority_vote(labels, conf[:len(labels)])
    counts = Counter(labels)
    assert counts[out] == max(counts.values())
