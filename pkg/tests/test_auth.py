import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaitlab.auth import (BT2P, MSM2P, UNKNOWN_IDENTITY, Claim, NnGallery, auth_bt, auth_bt_2p, auth_msm,
                          auth_msm_2p, auth_threshold_nn, binomial_sigma, bt_accepts, compute_error_rates,
                          equal_error_rate, min_aer, msm_accepts, sweep_thresholds, theoretical_msm_rates,
                          theoretical_type2_far, tune_theta_p, tune_threshold_for_far)
from gaitlab.core import GENUINE, TYPE1, TYPE2
from gaitlab.recognition import fit_recognizer
from gaitlab.subspace import SingularScatterWarning


@pytest.fixture(scope="module")
def clusters():
    rng = np.random.default_rng(4)
    centers = {"a": [0, 0, 0], "b": [10, 0, 0], "c": [0, 10, 0]}
    X = np.vstack([np.array(c) + rng.normal(0, 0.5, (6, 3)) for c in centers.values()])
    y = np.repeat(list(centers), 6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        rec = fit_recognizer(X, y)
    return X, y, rec


# --- nearest-neighbour threshold ---

def test_nn_zero_distance_accepts():
    g = NnGallery([[0, 0], [3, 4]], ["a", "b"])
    d = auth_threshold_nn(Claim(np.array([3.0, 4.0]), "b"), g, theta_d=0.5)
    assert d.accept and d.score == 0.0


def test_nn_zero_threshold_rejects_everything():
    g = NnGallery([[0, 0], [3, 4]], ["a", "b"])
    for p, c in [([0, 0], "a"), ([3, 4], "b"), ([1, 1], "a")]:
        assert not auth_threshold_nn(Claim(np.array(p, float), c), g, 0.0).accept


def test_nn_distance_is_to_claimed_id():
    g = NnGallery([[0, 0], [3, 4]], ["a", "b"])
    d = auth_threshold_nn(Claim(np.array([0.0, 0.0]), "b"), g, 10.0)
    assert d.score == pytest.approx(5.0) and d.accept


def test_nn_unknown_identity():
    g = NnGallery([[0, 0]], ["a"])
    d = auth_threshold_nn(Claim(np.zeros(2), "zz"), g, 1e9)
    assert not d.accept and d.reason == UNKNOWN_IDENTITY


@given(st.lists(st.floats(0, 10), min_size=1, max_size=20), st.floats(0, 10), st.floats(0, 10))
def test_nn_acceptance_monotone_in_threshold(dists, t1, t2):
    lo, hi = sorted((t1, t2))
    d = np.array(dists)
    assert np.all((d < lo) <= (d < hi))


# --- MSM / BT ---

def test_msm_accepts_correct_claim(clusters):
    X, y, rec = clusters
    assert auth_msm(Claim(X[0], "a"), rec).accept
    assert not auth_msm(Claim(X[0], "b", TYPE2), rec).accept


def test_msm_unknown_id(clusters):
    X, _, rec = clusters
    d = auth_msm(Claim(X[0], "nobody", TYPE1), rec)
    assert not d.accept and d.reason == UNKNOWN_IDENTITY


def test_msm_frr_equals_one_minus_ccr(clusters):
    X, y, rec = clusters
    rng = np.random.default_rng(0)
    P = X + rng.normal(0, 4.0, X.shape)
    acc = msm_accepts(rec, P, y)
    rates = compute_error_rates(acc, [GENUINE] * len(y))
    correct = int(np.sum(rec.predict(P) == y))
    assert rates.counts["accepted_genuine"] == correct
    assert rates.frr == pytest.approx(1 - correct / len(y), abs=1e-15)


def test_bt_threshold_on_posterior(clusters):
    X, _, rec = clusters
    lp = float(rec.claim_log_posterior(X[:1], ["a"])[0])
    assert auth_bt(Claim(X[0], "a"), rec, 0.5).accept
    assert not auth_bt(Claim(X[0], "b"), rec, 0.5).accept
    assert auth_bt(Claim(X[0], "a"), rec, math.exp(lp) * 0.999 if lp < 0 else 0.999).accept


def test_bt_rejects_invalid_theta():
    with pytest.raises(ValueError):
        bt_accepts([0.0], 1.0)
    with pytest.raises(ValueError):
        bt_accepts([0.0], 0.0)


@given(st.lists(st.floats(-50, 0), min_size=1, max_size=30), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_bt_acceptances_shrink_as_theta_grows(scores, a, b):
    lo, hi = sorted((a, b))
    assert np.all(bt_accepts(scores, hi) <= bt_accepts(scores, lo))


def test_two_pass_is_union(clusters):
    X, y, rec = clusters
    # second recognizer sees a shuffled labelling so the passes disagree
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        rec2 = fit_recognizer(X, np.roll(y, 6))
    for claimed in "abc":
        c = Claim(X[0], claimed)
        a, b = auth_msm(c, rec), auth_msm(c, rec2)
        d = auth_msm_2p(c, rec, rec2)
        assert d.accept == (a.accept or b.accept) and d.paradigm == MSM2P
        e = auth_bt_2p(c, rec, 0.5, rec2, 0.5)
        assert e.accept == (auth_bt(c, rec, 0.5).accept or auth_bt(c, rec2, 0.5).accept)
        assert e.paradigm == BT2P


# --- metrology ---

def test_error_rate_example():
    truths = [GENUINE] * 200 + [TYPE1] * 100 + [TYPE2] * 100
    acc = np.r_[np.ones(190), np.zeros(10), np.r_[np.ones(1), np.zeros(99)], np.r_[np.ones(1), np.zeros(99)]]
    r = compute_error_rates(acc.astype(bool), truths)
    assert r.frr == pytest.approx(0.05)
    assert r.far_mean == pytest.approx(0.01)
    assert r.aer == pytest.approx(0.03)


@given(st.lists(st.tuples(st.booleans(), st.sampled_from([GENUINE, TYPE1, TYPE2])), min_size=1, max_size=60))
def test_error_rates_match_tally(pairs):
    acc = [a for a, _ in pairs]
    tr = [t for _, t in pairs]
    r = compute_error_rates(acc, tr)
    tally = {t: [a for a, u in pairs if u == t] for t in (GENUINE, TYPE1, TYPE2)}
    if tally[GENUINE]:
        assert r.frr == pytest.approx(sum(not a for a in tally[GENUINE]) / len(tally[GENUINE]))
    else:
        assert r.frr is None and r.aer is None
    for t, got in ((TYPE1, r.far_type1), (TYPE2, r.far_type2)):
        assert got == (sum(tally[t]) / len(tally[t]) if tally[t] else None)


def test_error_rates_validation():
    with pytest.raises(ValueError):
        compute_error_rates([True], [GENUINE, TYPE1])
    with pytest.raises(ValueError):
        compute_error_rates([True], ["bogus"])


def test_eer_zero_when_separated():
    s = np.r_[np.full(20, 5.0), np.full(20, -5.0)]
    t = [GENUINE] * 20 + [TYPE1] * 20
    assert equal_error_rate(sweep_thresholds(s, t)) == pytest.approx(0.0)


def test_eer_half_when_identical(rng):
    s = rng.normal(size=4000)
    t = np.where(np.arange(4000) % 2 == 0, GENUINE, TYPE1)
    assert equal_error_rate(sweep_thresholds(s, t)) == pytest.approx(0.5, abs=0.03)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=40), st.data())
def test_min_aer_not_above_eer(scores, data):
    n = len(scores)
    truths = data.draw(st.lists(st.sampled_from([GENUINE, TYPE1]), min_size=n, max_size=n))
    if GENUINE not in truths or TYPE1 not in truths:
        truths[0], truths[1] = GENUINE, TYPE1
    sw = sweep_thresholds(scores, truths)
    assert min_aer(sw)[0] <= equal_error_rate(sw) + 1e-12


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.data())
def test_sweep_is_monotone(scores, data):
    n = len(scores)
    truths = data.draw(st.lists(st.sampled_from([GENUINE, TYPE1, TYPE2]), min_size=n, max_size=n))
    truths[0] = GENUINE
    if all(t == GENUINE for t in truths):
        truths[1] = TYPE2
    sw = sweep_thresholds(scores, truths)
    assert np.all(np.diff(sw.frr) >= 0) and np.all(np.diff(sw.far) <= 0)
    assert sw.frr[0] == 0 and sw.far[-1] == 0


def test_distance_sweep_direction():
    d = np.r_[np.full(5, 0.5), np.full(5, 3.0)]
    t = [GENUINE] * 5 + [TYPE1] * 5
    th = tune_threshold_for_far(d, t, 0.0, lower_is_better=True)
    assert 0.5 < th <= 3.0
    assert np.all((d < th) == (np.array(t) == GENUINE))


def test_tune_theta_p_meets_far(rng):
    g = rng.uniform(-0.5, 0, 100)
    i = rng.uniform(-20, -1, 100)
    t = [GENUINE] * 100 + [TYPE1] * 100
    th = tune_theta_p(np.r_[g, i], t, 0.05)
    assert 0 < th < 1
    r = compute_error_rates(bt_accepts(np.r_[g, i], th), t)
    assert r.far_mean <= 0.05


# --- closed forms ---

def test_theoretical_msm_far():
    assert theoretical_msm_rates(1.0, 100)[1] == pytest.approx(0.01)


def test_theoretical_msm_rates_example():
    frr, far, aer = theoretical_msm_rates(0.9, 10)
    assert frr == pytest.approx(0.1) and far == pytest.approx(0.1) and aer == pytest.approx(0.1)


def test_theoretical_type2():
    assert theoretical_type2_far(0.95, 100) == pytest.approx(0.0005)


def test_binomial_sigma():
    assert binomial_sigma(0.01, 500) == pytest.approx(math.sqrt(0.01 * 0.99 / 500))


@pytest.mark.parametrize("args", [(1.5, 10), (0.5, 0)])
def test_theoretical_validation(args):
    with pytest.raises(ValueError):
        theoretical_msm_rates(*args)
