"""Template recognizer: CDA projection followed by Bayes or 1-NN."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import (KnnModel, MgBayesModel, claim_log_posterior, knn_fit, knn_predict, mgbayes_fit,
                       mgbayes_log_posterior, mgbayes_predict)
from .subspace import DEFAULT_SHRINKAGE, CdaModel, cda_fit, cda_transform

BAYES, KNN = "bayes", "knn"


@dataclass(frozen=True)
class Recognizer:
    cda: CdaModel
    bayes: MgBayesModel
    knn: KnnModel | None = None
    classifier: str = BAYES

    @property
    def classes(self) -> np.ndarray:
        return self.bayes.classes

    def project(self, X) -> np.ndarray:
        return cda_transform(self.cda, np.atleast_2d(np.asarray(X, dtype=float)))

    def predict(self, X) -> np.ndarray:
        Z = self.project(X)
        if self.classifier == KNN:
            return np.atleast_1d(knn_predict(self.knn, Z))
        return np.atleast_1d(mgbayes_predict(self.bayes, Z))

    def log_posterior(self, X) -> np.ndarray:
        return mgbayes_log_posterior(self.bayes, self.project(X))

    def claim_log_posterior(self, X, claimed) -> np.ndarray:
        return claim_log_posterior(self.bayes, self.project(X), claimed)

    def to_dict(self) -> dict:
        return {"cda": self.cda.to_dict(), "bayes": self.bayes.to_dict(), "classifier": self.classifier,
                "knn": None if self.knn is None else {"points": self.knn.points.tolist(),
                                                      "labels": self.knn.labels.tolist(), "k": self.knn.k}}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Recognizer":
        d = json.loads(Path(path).read_text())
        cda = CdaModel.from_dict(d["cda"])
        bayes = MgBayesModel.from_dict(d["bayes"])
        kd = d.get("knn")
        knn = None if kd is None else KnnModel(np.asarray(kd["points"], float), np.asarray(kd["labels"]), kd["k"])
        return cls(cda, bayes, knn, d.get("classifier", BAYES))


def fit_recognizer(X, y, retention: float = 0.99, classifier: str = BAYES, k: int = 1,
                   shrinkage: float = DEFAULT_SHRINKAGE) -> Recognizer:
    """CDA on the gallery, then shared-covariance Bayes (and optionally kNN) in the projected space."""
    if classifier not in (BAYES, KNN):
        raise ValueError(f"unknown classifier {classifier!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    cda = cda_fit(X, y, retention, shrinkage)
    Z = cda_transform(cda, X)
    bayes = mgbayes_fit(Z, y, shrinkage=shrinkage)
    knn = knn_fit(Z, y, k) if classifier == KNN else None
    return Recognizer(cda, bayes, knn, classifier)


def ccr(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.size == 0:
        raise ValueError("no predictions")
    return float(np.mean(predicted == truth))
