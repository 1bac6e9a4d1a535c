"""View-angle estimation from the drift of the top and bottom silhouette points."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import MgBayesModel, mgbayes_fit, mgbayes_predict
from .core import VIEW_ANGLES, EmptySilhouette, GaitError, GaitSequence
from .subspace import DEFAULT_SHRINKAGE, LdaModel, SingularScatterWarning, lda_fit, lda_transform

SLOPE_CAP = 1e3
CORONAL_IOU = 0.5
APPROACH, RECEDE = 0, 180
NON_CORONAL = tuple(a for a in VIEW_ANGLES if a not in (APPROACH, RECEDE))


class UnknownView(GaitError):
    pass


@dataclass(frozen=True)
class SlopePair:
    mP: float
    mQ: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mP, self.mQ])


def _frames(sequence) -> np.ndarray:
    fr = sequence.frames if isinstance(sequence, GaitSequence) else np.asarray(sequence)
    if fr.ndim != 3 or len(fr) < 2:
        raise ValueError("need at least two frames")
    return fr


def extreme_points(frame) -> tuple[tuple[int, int], tuple[int, int]]:
    """(x, y) of the topmost and bottom-most foreground pixels; ties go to the leftmost."""
    rows, cols = np.nonzero(np.asarray(frame))
    if rows.size == 0:
        raise EmptySilhouette("frame has no foreground")
    top = rows.min()
    bot = rows.max()
    return (int(cols[rows == top].min()), int(top)), (int(cols[rows == bot].min()), int(bot))


def _slope(p0, p1) -> float:
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    if dx == 0:
        return 0.0 if dy == 0 else float(np.sign(dy) * SLOPE_CAP)
    return float(np.clip(dy / dx, -SLOPE_CAP, SLOPE_CAP))


def _first_last(fr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nonempty = [i for i in range(len(fr)) if fr[i].any()]
    if len(nonempty) < 2:
        raise EmptySilhouette("need two frames with foreground")
    return fr[nonempty[0]], fr[nonempty[-1]]


def slope_features(sequence) -> SlopePair:
    """Slopes of the lines through the top points and through the bottom points
    of the first and last silhouettes, in raw image coordinates (x = column,
    y = row).  Vertical lines map to +-SLOPE_CAP.
    """
    first, last = _first_last(_frames(sequence))
    (p1, q1), (pn, qn) = extreme_points(first), extreme_points(last)
    return SlopePair(_slope(p1, pn), _slope(q1, qn))


def _bbox(frame) -> tuple[int, int, int, int]:
    rows, cols = np.nonzero(frame)
    return rows.min(), cols.min(), rows.max() + 1, cols.max() + 1


def bbox_iou(a, b) -> float:
    r0, c0 = max(a[0], b[0]), max(a[1], b[1])
    r1, c1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0, r1 - r0) * max(0, c1 - c0)
    area = lambda x: (x[2] - x[0]) * (x[3] - x[1])
    union = area(a) + area(b) - inter
    return inter / union if union else 0.0


def coronal_check(sequence, iou: float = CORONAL_IOU) -> int | None:
    """0 for an approaching walk, 180 for a receding one, None when not coronal."""
    first, last = _first_last(_frames(sequence))
    a, b = _bbox(first), _bbox(last)
    if bbox_iou(a, b) < iou:
        return None
    return APPROACH if (b[2] - b[0]) > (a[2] - a[0]) else RECEDE


@dataclass(frozen=True)
class ViewModel:
    lda: LdaModel
    bayes: MgBayesModel
    iou: float = CORONAL_IOU

    @property
    def angles(self) -> np.ndarray:
        return self.bayes.classes

    def to_dict(self) -> dict:
        return {"lda": self.lda.to_dict(), "bayes": self.bayes.to_dict(), "iou": self.iou}

    @classmethod
    def from_dict(cls, d: dict) -> "ViewModel":
        return cls(LdaModel.from_dict(d["lda"]), MgBayesModel.from_dict(d["bayes"]), float(d.get("iou", CORONAL_IOU)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ViewModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def view_fit(features, angles, iou: float = CORONAL_IOU, shrinkage: float = DEFAULT_SHRINKAGE) -> ViewModel:
    """LDA + shared-covariance Bayes over slope pairs (one row per sequence)."""
    X = np.asarray([f.as_array() if isinstance(f, SlopePair) else f for f in features], dtype=float)
    y = np.asarray(angles, dtype=int)
    bad = sorted(set(y.tolist()) - set(NON_CORONAL))
    if bad:
        raise UnknownView(f"angles {bad} are not non-coronal view angles")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        lda = lda_fit(X, y, shrinkage)
        bayes = mgbayes_fit(lda_transform(lda, X), y, shrinkage=shrinkage)
    return ViewModel(lda, bayes, iou)


def view_predict_slopes(model: ViewModel, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray([f.as_array() if isinstance(f, SlopePair) else f for f in features], float))
    return np.atleast_1d(mgbayes_predict(model.bayes, lda_transform(model.lda, X))).astype(int)


def view_predict(model: ViewModel, sequence) -> int:
    """Coronal short-circuit first, otherwise the slope classifier."""
    cor = coronal_check(sequence, model.iou)
    if cor is not None:
        return cor
    return int(view_predict_slopes(model, [slope_features(sequence)])[0])


def boundary_grid(model: ViewModel, mp_range, mq_range, steps: int = 101) -> list[tuple[float, float, int]]:
    """Predicted angle over a regular slope grid, for decision-boundary plots."""
    mp = np.linspace(*mp_range, steps)
    mq = np.linspace(*mq_range, steps)
    P, Q = np.meshgrid(mp, mq, indexing="ij")
    pts = np.column_stack([P.ravel(), Q.ravel()])
    labels = view_predict_slopes(model, pts)
    return [(float(a), float(b), int(c)) for (a, b), c in zip(pts, labels)]
