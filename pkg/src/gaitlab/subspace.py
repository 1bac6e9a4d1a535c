"""PCA, multi-class LDA and their composition (CDA)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import GaitError

MODEL_FORMAT_VERSION = 1
DEFAULT_SHRINKAGE = 1e-4
_RANK_TOL = 1e-10


class SubspaceError(GaitError):
    pass


class SingularScatterWarning(RuntimeWarning):
    """Within-class scatter was singular and got shrunk towards its diagonal."""


def fix_signs(rows: np.ndarray) -> np.ndarray:
    """Flip each row so its first non-negligible entry is positive."""
    rows = np.array(rows, dtype=float, copy=True)
    for r in rows:
        nz = np.flatnonzero(np.abs(r) > 1e-12 * max(1.0, np.abs(r).max(initial=0)))
        if nz.size and r[nz[0]] < 0:
            r *= -1
    return rows


def _thin_svd(Xc: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD of a centered matrix.

    Wide matrices (many more columns than rows, e.g. 57600-pixel templates)
    go through the eigendecomposition of the row Gram matrix, followed by a
    symmetric re-orthonormalization of the right singular vectors.
    """
    n, d = Xc.shape
    if d <= 4 * n:
        U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
        return U, s, Vt
    K = Xc @ Xc.T
    w, U = np.linalg.eigh(K)
    order = np.argsort(w)[::-1]
    w, U = np.clip(w[order], 0, None), U[:, order]
    s = np.sqrt(w)
    keep = s > _RANK_TOL * max(s[0] if s.size else 0.0, 1e-300) * 1e3
    U, s = U[:, keep], s[keep]
    Vt = (U.T @ Xc) / s[:, None]
    # one symmetric orthonormalization pass: Vt <- (Vt Vt^T)^(-1/2) Vt
    G = Vt @ Vt.T
    gw, gv = np.linalg.eigh(G)
    Vt = (gv * (1 / np.sqrt(gw))) @ gv.T @ Vt
    return U, s, Vt


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    retention: float

    @property
    def n_components(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist(),
                "explained_ratio": self.explained_ratio.tolist(), "retention": self.retention}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(np.asarray(d["mean"], float), np.asarray(d["components"], float).reshape(-1, len(d["mean"])),
                   np.asarray(d["explained_variance"], float), np.asarray(d["explained_ratio"], float),
                   float(d["retention"]))


def pca_fit(X, retention: float = 0.99) -> PcaModel:
    """Smallest set of principal axes whose cumulative variance ratio reaches ``retention``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise SubspaceError("PCA needs at least two samples")
    if not 0 < retention <= 1:
        raise SubspaceError("retention must be in (0, 1]")
    mean = X.mean(axis=0)
    _, s, Vt = _thin_svd(X - mean)
    var = s ** 2 / (len(X) - 1)
    total = var.sum()
    if s.size == 0 or total <= 0 or s[0] <= 0:
        raise SubspaceError("data is constant: no informative principal component")
    rank = int(np.sum(s > s[0] * max(X.shape) * np.finfo(float).eps))
    ratio = var / total
    if retention >= 1.0:
        k = rank
    else:
        k = int(np.searchsorted(np.cumsum(ratio), retention - 1e-12) + 1)
        k = min(k, rank)
    return PcaModel(mean, fix_signs(Vt[:k]), var[:k], ratio[:k], float(retention))


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != len(model.mean):
        raise SubspaceError(f"expected {len(model.mean)} features, got {X2.shape[1]}")
    out = (X2 - model.mean) @ model.components.T
    return out[0] if single else out


def shrink(S: np.ndarray, lam: float = DEFAULT_SHRINKAGE) -> np.ndarray:
    return (1 - lam) * S + lam * np.diag(np.diag(S))


def _is_singular(S: np.ndarray) -> bool:
    if S.size == 0:
        return False
    w = np.linalg.eigvalsh(S)
    return w[0] <= max(w[-1], 0) * 1e-10


def regularize(S: np.ndarray, lam: float = DEFAULT_SHRINKAGE, what: str = "scatter") -> np.ndarray:
    """Diagonal shrinkage for singular matrices (warns); adds a tiny ridge if still singular."""
    if not _is_singular(S):
        return S
    warnings.warn(f"singular {what}; shrinking towards its diagonal (lambda={lam})",
                  SingularScatterWarning, stacklevel=3)
    R = shrink(S, lam)
    if _is_singular(R):
        scale = np.trace(S) / max(len(S), 1)
        R = R + (1e-6 * scale if scale > 0 else 1e-6) * np.eye(len(S))
    return R


def pooled_covariance(X: np.ndarray, y: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """Within-class covariance with all classes sharing one matrix (n - K denominator)."""
    d = X.shape[1]
    S = np.zeros((d, d))
    for c in classes:
        R = X[y == c] - X[y == c].mean(axis=0)
        S += R.T @ R
    return S / max(len(X) - len(classes), 1)


@dataclass(frozen=True)
class LdaModel:
    mean: np.ndarray
    scalings: np.ndarray  # (d_in, m)
    classes: np.ndarray
    class_means: np.ndarray  # (K, m) in projected space
    covariance: np.ndarray  # (m, m) pooled within-class covariance of projected training data
    eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return self.scalings.shape[1]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scalings": self.scalings.tolist(),
                "classes": self.classes.tolist(), "class_means": self.class_means.tolist(),
                "covariance": self.covariance.tolist(), "eigenvalues": self.eigenvalues.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LdaModel":
        m = len(d["eigenvalues"])
        return cls(np.asarray(d["mean"], float), np.asarray(d["scalings"], float).reshape(len(d["mean"]), m),
                   np.asarray(d["classes"]), np.asarray(d["class_means"], float).reshape(-1, m),
                   np.asarray(d["covariance"], float).reshape(m, m), np.asarray(d["eigenvalues"], float))


def lda_fit(X, y, shrinkage: float = DEFAULT_SHRINKAGE) -> LdaModel:
    """Fisher discriminant projection with at most K - 1 axes.

    Axes are scaled to unit within-class scatter.  The problem is solved in
    the span of the centered data so constant features cannot make the
    scatter matrices singular.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise SubspaceError("LDA needs at least two classes")
    if counts.min() < 2:
        warnings.warn("some classes have a single sample; their within-class scatter is zero",
                      SingularScatterWarning, stacklevel=2)
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = _thin_svd(Xc)
    basis = Vt[s > s[0] * max(X.shape) * np.finfo(float).eps] if s.size else Vt
    Z = Xc @ basis.T
    k = Z.shape[1]

    Sw = np.zeros((k, k))
    Sb = np.zeros((k, k))
    for c, n_c in zip(classes, counts):
        Zc = Z[y == c]
        mu = Zc.mean(axis=0)
        R = Zc - mu
        Sw += R.T @ R
        Sb += n_c * np.outer(mu, mu)
    Sw = regularize(Sw, shrinkage, "within-class scatter")
    w, V = linalg.eigh(Sb, Sw)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    m = min(len(classes) - 1, int(np.sum(w > max(w[0], 0) * 1e-10)) if w.size else 0)
    if m == 0:
        raise SubspaceError("class means coincide: no discriminant direction")
    scalings = fix_signs((basis.T @ V[:, :m]).T).T
    proj = Xc @ scalings
    class_means = np.array([proj[y == c].mean(axis=0) for c in classes])
    cov = pooled_covariance(proj, y, classes)
    return LdaModel(mean, scalings, classes, class_means, cov, w[:m])


def lda_transform(model: LdaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != len(model.mean):
        raise SubspaceError(f"expected {len(model.mean)} features, got {X2.shape[1]}")
    out = (X2 - model.mean) @ model.scalings
    return out[0] if single else out


@dataclass(frozen=True)
class CdaModel:
    pca: PcaModel
    lda: LdaModel

    def to_dict(self) -> dict:
        return {"format_version": MODEL_FORMAT_VERSION, "pca": self.pca.to_dict(), "lda": self.lda.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CdaModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise SubspaceError(f"unsupported model format {d.get('format_version')!r}")
        return cls(PcaModel.from_dict(d["pca"]), LdaModel.from_dict(d["lda"]))


def cda_fit(X, y, retention: float = 0.99, shrinkage: float = DEFAULT_SHRINKAGE) -> CdaModel:
    pca = pca_fit(X, retention)
    lda = lda_fit(pca_transform(pca, X), y, shrinkage)
    return CdaModel(pca, lda)


def cda_transform(model: CdaModel, X) -> np.ndarray:
    return lda_transform(model.lda, pca_transform(model.pca, X))
