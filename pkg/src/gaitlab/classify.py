"""Multivariate Gaussian Bayes, k-nearest-neighbour and majority voting."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .subspace import DEFAULT_SHRINKAGE, pooled_covariance, regularize

SHARED, PER_CLASS = "shared", "per-class"
_LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class MgBayesModel:
    classes: np.ndarray
    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (d, d) shared or (K, d, d)
    priors: np.ndarray
    mode: str = SHARED

    def __post_init__(self):
        chol = np.linalg.cholesky(self.covariances)
        if self.mode == SHARED:
            logdet = 2 * np.log(np.diag(chol)).sum()
        else:
            logdet = 2 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_logdet", logdet)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_likelihoods(self, X) -> np.ndarray:
        """Joint log densities log p(x | k) + log Pr(k), shape (n, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        d = self.dim
        out = np.empty((len(X), len(self.classes)))
        for k in range(len(self.classes)):
            L = self._chol if self.mode == SHARED else self._chol[k]
            logdet = self._logdet if self.mode == SHARED else self._logdet[k]
            z = np.linalg.solve(L, (X - self.means[k]).T)
            out[:, k] = -0.5 * (d * _LOG_2PI + logdet + (z * z).sum(axis=0))
        return out + np.log(self.priors)

    def to_dict(self) -> dict:
        return {"classes": self.classes.tolist(), "means": self.means.tolist(),
                "covariances": self.covariances.tolist(), "priors": self.priors.tolist(), "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "MgBayesModel":
        return cls(np.asarray(d["classes"]), np.asarray(d["means"], float), np.asarray(d["covariances"], float),
                   np.asarray(d["priors"], float), d["mode"])


def mgbayes_fit(X, y, mode: str = SHARED, shrinkage: float = DEFAULT_SHRINKAGE) -> MgBayesModel:
    """Empirical means, priors and covariance(s); singular covariances get shrinkage."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    means = np.array([X[y == c].mean(axis=0) for c in classes])
    priors = counts / counts.sum()
    if mode == SHARED:
        cov = regularize(pooled_covariance(X, y, classes), shrinkage, "shared covariance")
    elif mode == PER_CLASS:
        if counts.min() < 2:
            raise ValueError("per-class covariances need at least two samples per class")
        cov = np.array([regularize(np.cov(X[y == c], rowvar=False).reshape(X.shape[1], X.shape[1]),
                                   shrinkage, f"covariance of class {c}") for c in classes])
    else:
        raise ValueError(f"unknown covariance mode {mode!r}")
    return MgBayesModel(classes, means, cov, priors, mode)


def mgbayes_log_posterior(model: MgBayesModel, X) -> np.ndarray:
    ll = model.log_likelihoods(X)
    return ll - logsumexp(ll, axis=1, keepdims=True)


def mgbayes_posterior(model: MgBayesModel, x) -> np.ndarray:
    """Posterior over classes; a single vector for a single sample."""
    x = np.asarray(x, dtype=float)
    p = np.exp(mgbayes_log_posterior(model, x))
    return p[0] if x.ndim == 1 else p


def claim_log_posterior(model: MgBayesModel, X, claimed) -> np.ndarray:
    """log Pr(claimed | x), accurate near 1 (log1p of the competing mass).

    Unknown claimed labels give -inf.
    """
    ll = model.log_likelihoods(X)
    index = {c: i for i, c in enumerate(model.classes.tolist())}
    out = np.full(len(ll), -np.inf)
    for row, c in enumerate(np.atleast_1d(claimed).tolist()):
        k = index.get(c)
        if k is None:
            continue
        diff = np.delete(ll[row], k) - ll[row, k]
        if diff.size == 0:
            out[row] = 0.0
            continue
        m = diff.max()
        if m > 0:
            out[row] = -logsumexp(np.append(diff, 0.0))
        else:
            out[row] = -np.log1p(np.exp(logsumexp(diff)))
    return out


def mgbayes_predict(model: MgBayesModel, X) -> np.ndarray:
    """Arg-max posterior; ties go to the lowest class index."""
    X = np.asarray(X, dtype=float)
    idx = np.argmax(model.log_likelihoods(X), axis=1)
    labels = model.classes[idx]
    return labels[0] if X.ndim == 1 else labels


@dataclass(frozen=True)
class KnnModel:
    points: np.ndarray
    labels: np.ndarray
    k: int = 1

    def __post_init__(self):
        if not 1 <= self.k <= len(self.points):
            raise ValueError("k must be between 1 and the gallery size")


def knn_fit(X, y, k: int = 1) -> KnnModel:
    return KnnModel(np.atleast_2d(np.asarray(X, dtype=float)), np.asarray(y), k)


def knn_predict(model: KnnModel, X) -> np.ndarray:
    """Majority label of the k nearest gallery points (Euclidean).

    Distance ties keep gallery insertion order; vote ties go to the label
    whose nearest member comes first.
    """
    X = np.asarray(X, dtype=float)
    Q = np.atleast_2d(X)
    d2 = ((Q ** 2).sum(1)[:, None] - 2 * Q @ model.points.T + (model.points ** 2).sum(1)[None, :])
    order = np.argsort(d2, axis=1, kind="stable")[:, :model.k]
    out = []
    for row in order:
        labs = model.labels[row].tolist()
        counts = Counter(labs)
        best = max(counts.values())
        out.append(next(l for l in labs if counts[l] == best))
    out = np.asarray(out)
    return out[0] if X.ndim == 1 else out


def majority_vote(labels, confidences=None):
    """Statistical mode of per-frame predictions.

    Frequency ties go to the label with the higher mean confidence, then to
    the lowest label in sort order.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("cannot vote on an empty list")
    counts = Counter(labels)
    best = max(counts.values())
    tied = sorted(l for l, c in counts.items() if c == best)
    if len(tied) == 1 or confidences is None:
        return tied[0]
    conf = np.asarray(confidences, dtype=float)
    means = {l: conf[[i for i, x in enumerate(labels) if x == l]].mean() for l in tied}
    top = max(means.values())
    return next(l for l in tied if means[l] == top)
