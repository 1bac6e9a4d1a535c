"""Gait authentication: nearest-neighbour thresholding, MSM and Bayesian thresholding.

A claim pairs a probe with a claimed identity.  MSM accepts when the
recognizer's prediction equals the claim; BT accepts when the posterior of
the claimed identity exceeds a probability threshold; the NN method accepts
when the probe lies within a distance of the claimed identity's nearest
gallery instance.  Scores are kept so thresholds can be swept afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GENUINE, TRUTHS, TYPE1, TYPE2

NN, MSM, MSM2P, BT, BT2P = "nn", "msm", "msm2p", "bt", "bt2p"
PARADIGMS = (NN, MSM, MSM2P, BT, BT2P)
UNKNOWN_IDENTITY = "unknown-identity"


@dataclass(frozen=True)
class Claim:
    probe: np.ndarray
    claimed: str
    truth: str = GENUINE

    def __post_init__(self):
        if self.truth not in TRUTHS:
            raise ValueError(f"truth must be one of {TRUTHS}")


@dataclass(frozen=True)
class AuthDecision:
    accept: bool
    score: float
    paradigm: str
    reason: str | None = None


# --- nearest-neighbour threshold --------------------------------------------

@dataclass(frozen=True)
class NnGallery:
    features: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.atleast_2d(np.asarray(self.features, dtype=float)))
        object.__setattr__(self, "ids", np.asarray(self.ids).astype(str))

    def knows(self, claimed) -> bool:
        return str(claimed) in set(self.ids.tolist())

    def claim_distances(self, X, claimed) -> np.ndarray:
        """Distance from each probe to the nearest gallery instance of its claimed id (inf if unknown)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        claimed = np.atleast_1d(np.asarray(claimed).astype(str))
        out = np.full(len(X), np.inf)
        for c in np.unique(claimed):
            rows = claimed == c
            G = self.features[self.ids == c]
            if len(G) == 0:
                continue
            d2 = ((X[rows, None, :] - G[None, :, :]) ** 2).sum(axis=2)
            out[rows] = np.sqrt(d2.min(axis=1))
        return out


def auth_threshold_nn(claim: Claim, gallery: NnGallery, theta_d: float) -> AuthDecision:
    d = float(gallery.claim_distances(claim.probe, [claim.claimed])[0])
    if not np.isfinite(d):
        return AuthDecision(False, d, NN, UNKNOWN_IDENTITY)
    return AuthDecision(d < theta_d, d, NN)


# --- recognizer-based paradigms ----------------------------------------------

def _known(recognizer, claimed) -> bool:
    return claimed in set(recognizer.classes.tolist())


def msm_accepts(recognizer, X, claimed) -> np.ndarray:
    """Vectorized MSM: prediction equals claim."""
    pred = recognizer.predict(X)
    return pred == np.asarray(claimed, dtype=pred.dtype)


def bt_scores(recognizer, X, claimed) -> np.ndarray:
    """log Pr(claimed | probe); -inf for ids the recognizer does not know."""
    return recognizer.claim_log_posterior(X, claimed)


def bt_accepts(scores, theta_p: float) -> np.ndarray:
    if not 0 < theta_p < 1:
        raise ValueError("theta_p must lie strictly between 0 and 1")
    return np.asarray(scores) > math.log(theta_p)


def auth_msm(claim: Claim, recognizer) -> AuthDecision:
    if not _known(recognizer, claim.claimed):
        return AuthDecision(False, 0.0, MSM, UNKNOWN_IDENTITY)
    ok = bool(msm_accepts(recognizer, claim.probe, [claim.claimed])[0])
    return AuthDecision(ok, float(ok), MSM)


def auth_msm_2p(claim: Claim, recognizer1, recognizer2, probe2=None) -> AuthDecision:
    """Accept when either recognizer predicts the claimed id.

    ``probe2`` is the probe in the second recognizer's feature space when the
    two passes use different features.
    """
    second = claim if probe2 is None else Claim(probe2, claim.claimed, claim.truth)
    a, b = auth_msm(claim, recognizer1), auth_msm(second, recognizer2)
    ok = a.accept or b.accept
    reason = UNKNOWN_IDENTITY if a.reason and b.reason else None
    return AuthDecision(ok, float(ok), MSM2P, reason)


def auth_bt(claim: Claim, recognizer, theta_p: float) -> AuthDecision:
    s = float(bt_scores(recognizer, claim.probe, [claim.claimed])[0])
    reason = None if _known(recognizer, claim.claimed) else UNKNOWN_IDENTITY
    return AuthDecision(bool(bt_accepts([s], theta_p)[0]), s, BT, reason)


def auth_bt_2p(claim: Claim, recognizer1, theta_p: float, recognizer2, theta_q: float,
               probe2=None) -> AuthDecision:
    second = claim if probe2 is None else Claim(probe2, claim.claimed, claim.truth)
    a, b = auth_bt(claim, recognizer1, theta_p), auth_bt(second, recognizer2, theta_q)
    reason = UNKNOWN_IDENTITY if a.reason and b.reason else None
    return AuthDecision(a.accept or b.accept, max(a.score, b.score), BT2P, reason)


# --- metrology ---------------------------------------------------------------

@dataclass(frozen=True)
class ErrorRates:
    """Rates are None when their claim category is empty."""

    frr: float | None
    far_type1: float | None
    far_type2: float | None
    far_mean: float | None
    aer: float | None
    eer: float | None = None
    roc: list[tuple[float, float]] = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def to_dict(self, with_roc: bool = False) -> dict:
        d = {"frr": self.frr, "far_type1": self.far_type1, "far_type2": self.far_type2,
             "far_mean": self.far_mean, "aer": self.aer, "eer": self.eer, **self.counts}
        if with_roc:
            d["roc"] = [list(p) for p in self.roc]
        return d


def _rate(x: int, n: int) -> float | None:
    return x / n if n else None


def _mean_far(f1, f2):
    vals = [f for f in (f1, f2) if f is not None]
    return sum(vals) / len(vals) if vals else None


def compute_error_rates(accepts, truths, eer: float | None = None, roc=()) -> ErrorRates:
    """FRR over genuine claims, FAR per impostor type, their mean, and AER = (FRR + mean FAR) / 2."""
    accepts = np.asarray(accepts, dtype=bool)
    truths = np.asarray(truths)
    if accepts.shape != truths.shape:
        raise ValueError("one decision per claim")
    bad = set(truths.tolist()) - set(TRUTHS)
    if bad:
        raise ValueError(f"unknown truth labels {sorted(bad)}")
    n = {t: int(np.sum(truths == t)) for t in TRUTHS}
    acc = {t: int(np.sum(accepts & (truths == t))) for t in TRUTHS}
    frr = _rate(n[GENUINE] - acc[GENUINE], n[GENUINE])
    f1, f2 = _rate(acc[TYPE1], n[TYPE1]), _rate(acc[TYPE2], n[TYPE2])
    fm = _mean_far(f1, f2)
    aer = (frr + fm) / 2 if frr is not None and fm is not None else None
    counts = {f"n_{t}": n[t] for t in TRUTHS} | {f"accepted_{t}": acc[t] for t in TRUTHS}
    return ErrorRates(frr, f1, f2, fm, aer, eer, list(roc), counts)


@dataclass(frozen=True)
class Sweep:
    """Error rates at every distinct threshold of a score set (accept iff score > threshold)."""

    thresholds: np.ndarray
    frr: np.ndarray
    far_type1: np.ndarray | None
    far_type2: np.ndarray | None
    far: np.ndarray

    @property
    def aer(self) -> np.ndarray:
        return (self.frr + self.far) / 2

    @property
    def roc(self) -> list[tuple[float, float]]:
        return [(float(a), float(1 - r)) for a, r in zip(self.far, self.frr)]


def _accept_rate(sorted_scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return (len(sorted_scores) - np.searchsorted(sorted_scores, thresholds, side="right")) / len(sorted_scores)


def sweep_thresholds(scores, truths, lower_is_better: bool = False) -> Sweep:
    """Sweep over all score midpoints plus one threshold beyond each end.

    ``lower_is_better`` handles distances (accept iff d < threshold); the
    returned thresholds are then in distance units too.
    """
    s = np.asarray(scores, dtype=float)
    truths = np.asarray(truths)
    if lower_is_better:
        s = -s
    g = np.sort(s[truths == GENUINE])
    if g.size == 0 or not np.any(truths != GENUINE):
        raise ValueError("need at least one genuine and one impostor claim")
    finite = np.unique(s[np.isfinite(s)])
    if finite.size == 0:
        finite = np.array([0.0])
    mids = (finite[:-1] + finite[1:]) / 2
    th = np.concatenate([[finite[0] - 1.0], mids, [finite[-1] + 1.0]])
    frr = 1 - _accept_rate(g, th)
    fars = {}
    for t in (TYPE1, TYPE2):
        imp = np.sort(s[truths == t])
        fars[t] = _accept_rate(imp, th) if imp.size else None
    present = [f for f in fars.values() if f is not None]
    far = np.mean(present, axis=0)
    if lower_is_better:
        th = -th
    return Sweep(th, frr, fars[TYPE1], fars[TYPE2], far)


def equal_error_rate(sw: Sweep) -> float:
    """FAR/FRR crossing, linearly interpolated between adjacent thresholds."""
    diff = sw.far - sw.frr
    # far decreases and frr increases along the (ascending) sweep
    for i in range(len(diff) - 1):
        a, b = diff[i], diff[i + 1]
        if a == 0:
            return float(sw.far[i])
        if a > 0 > b or b == 0:
            t = a / (a - b)
            return float(sw.far[i] + t * (sw.far[i + 1] - sw.far[i]))
    i = int(np.argmin(np.abs(diff)))
    return float((sw.far[i] + sw.frr[i]) / 2)


def roc_and_eer(scores, truths, lower_is_better: bool = False) -> tuple[list[tuple[float, float]], float, Sweep]:
    sw = sweep_thresholds(scores, truths, lower_is_better)
    return sw.roc, equal_error_rate(sw), sw


def min_aer(sw: Sweep) -> tuple[float, float]:
    """(minimum AER, threshold achieving it); the first such threshold wins."""
    i = int(np.argmin(sw.aer))
    return float(sw.aer[i]), float(sw.thresholds[i])


def tune_threshold_for_far(scores, truths, target: float, lower_is_better: bool = False) -> float:
    """Most permissive swept threshold whose mean FAR does not exceed ``target``."""
    sw = sweep_thresholds(scores, truths, lower_is_better)
    ok = np.flatnonzero(sw.far <= target + 1e-12)
    # thresholds ascend in score space, so the first admissible one is the most permissive
    return float(sw.thresholds[ok[0]])


def tune_theta_p(log_posteriors, truths, target: float) -> float:
    """Probability threshold for BT at a target mean FAR, clipped into (0, 1)."""
    t = tune_threshold_for_far(log_posteriors, truths, target)
    return float(np.clip(math.exp(min(t, 0.0)), np.nextafter(0, 1), np.nextafter(1, 0)))


def theoretical_msm_rates(ccr: float, n: int) -> tuple[float, float, float]:
    """(FRR, FAR, AER) of MSM with a recognizer of the given CCR over n identities."""
    if not 0 <= ccr <= 1 or n < 1:
        raise ValueError("need 0 <= ccr <= 1 and n >= 1")
    frr, far = 1 - ccr, 1 / n
    return frr, far, (frr + far) / 2


def theoretical_type2_far(ccr: float, n: int) -> float:
    if not 0 <= ccr <= 1 or n < 1:
        raise ValueError("need 0 <= ccr <= 1 and n >= 1")
    return (1 - ccr) / n


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)
