"""Pose-based voting: classify every frame, then vote per sequence."""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import MgBayesModel, majority_vote, mgbayes_fit, mgbayes_log_posterior
from .core import GaitError, GaitSequence
from .features import DEFAULT_HARMONICS, DegenerateContour, efd_features, rcs_features
from .preprocess import cycle_frames
from .recognition import fit_recognizer
from .subspace import DEFAULT_SHRINKAGE, LdaModel, SingularScatterWarning, lda_fit, lda_transform
from .templates import compute_gei, flatten

DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 11))


class FeatureKind(str, enum.Enum):
    EFD = "efd"
    RCS = "rcs"


class NoUsableFrames(GaitError):
    pass


def frame_features(frames, kind, harmonics: int = DEFAULT_HARMONICS) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for usable frames plus the indices of the frames they came from."""
    kind = FeatureKind(kind)
    rows, used = [], []
    for i, fr in enumerate(np.asarray(frames)):
        if kind is FeatureKind.RCS:
            if not fr.any():
                continue
            rows.append(rcs_features(fr))
        else:
            try:
                rows.append(efd_features(fr, harmonics))
            except DegenerateContour:
                continue
        used.append(i)
    width = 4 * harmonics + 2 if kind is FeatureKind.EFD else 2 * np.asarray(frames).shape[-1]
    return (np.asarray(rows, dtype=float).reshape(-1, width), np.asarray(used, dtype=int))


@dataclass(frozen=True)
class PbvModel:
    kind: FeatureKind
    harmonics: int
    lda: LdaModel
    bayes: MgBayesModel
    skipped: int = 0
    n_samples: int = 0

    @property
    def labels(self) -> np.ndarray:
        return self.bayes.classes

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "harmonics": self.harmonics, "lda": self.lda.to_dict(),
                "bayes": self.bayes.to_dict(), "skipped": self.skipped, "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "PbvModel":
        return cls(FeatureKind(d["kind"]), int(d["harmonics"]), LdaModel.from_dict(d["lda"]),
                   MgBayesModel.from_dict(d["bayes"]), int(d.get("skipped", 0)), int(d.get("n_samples", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PbvModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pbv_train(sequences, genders, kind=FeatureKind.RCS, harmonics: int = DEFAULT_HARMONICS,
              shrinkage: float = DEFAULT_SHRINKAGE) -> PbvModel:
    """Every usable frame becomes one labelled sample; LDA on raw features, then Bayes."""
    sequences = list(sequences)
    genders = list(genders)
    if len(sequences) != len(genders):
        raise ValueError("need one gender label per sequence")
    if len(set(genders)) < 2:
        raise GaitError("training needs sequences of at least two genders")
    X, y, skipped = [], [], 0
    for seq, g in zip(sequences, genders):
        frames = seq.frames if isinstance(seq, GaitSequence) else np.asarray(seq)
        F, used = frame_features(frames, kind, harmonics)
        skipped += len(frames) - len(used)
        X.append(F)
        y.extend([g] * len(F))
    X = np.vstack(X)
    lda = lda_fit(X, np.asarray(y), shrinkage)
    bayes = mgbayes_fit(lda_transform(lda, X), np.asarray(y), shrinkage=shrinkage)
    return PbvModel(FeatureKind(kind), harmonics, lda, bayes, skipped, len(X))


def pbv_frame_predictions(model: PbvModel, frames) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame labels and the posterior of each chosen label."""
    F, _ = frame_features(frames, model.kind, model.harmonics)
    if len(F) == 0:
        raise NoUsableFrames("no frame yields a usable feature vector")
    lp = mgbayes_log_posterior(model.bayes, lda_transform(model.lda, F))
    idx = np.argmax(lp, axis=1)
    return model.labels[idx], np.exp(lp[np.arange(len(lp)), idx])


def pbv_predict(sequence, model: PbvModel):
    frames = sequence.frames if isinstance(sequence, GaitSequence) else np.asarray(sequence)
    labels, conf = pbv_frame_predictions(model, frames)
    return majority_vote(labels.tolist(), conf)


def n_partial(fraction: float, cycle_length: int) -> int:
    """Frame count for a fraction of a cycle, at least one."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    return max(1, math.ceil(round(fraction * cycle_length, 9)))


@dataclass(frozen=True)
class PartialResult:
    fraction: float
    n_frames: int
    predicted: str
    correct: bool


def _cycle(sequence) -> np.ndarray:
    frames = sequence.frames if isinstance(sequence, GaitSequence) else np.asarray(sequence)
    cyc, _ = cycle_frames(frames)
    return cyc


def pbv_partial_eval(model: PbvModel, sequence, truth, fractions=DEFAULT_FRACTIONS) -> list[PartialResult]:
    """Vote on the first ceil(f * cycle) frames of the detected cycle for each fraction f.

    Sequences without three troughs fall back to the whole sequence.
    """
    cyc = _cycle(sequence)
    out = []
    for f in fractions:
        n = n_partial(f, len(cyc))
        pred = pbv_predict(cyc[:n], model)
        out.append(PartialResult(float(f), n, str(pred), pred == truth))
    return out


def gei_baseline_train(sequences, genders, retention: float = 0.99, shrinkage: float = DEFAULT_SHRINKAGE):
    """CDA + Bayes over one GEI per sequence (full cycle)."""
    X = np.array([flatten(compute_gei(_cycle(s))) for s in sequences])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        return fit_recognizer(X, np.asarray(genders), retention, shrinkage=shrinkage)


def gei_baseline_partial_eval(recognizer, sequence, truth, fractions=DEFAULT_FRACTIONS) -> list[PartialResult]:
    cyc = _cycle(sequence)
    out = []
    for f in fractions:
        n = n_partial(f, len(cyc))
        pred = recognizer.predict(flatten(compute_gei(cyc[:n])))[0]
        out.append(PartialResult(float(f), n, str(pred), pred == truth))
    return out


def subject_folds(subjects, n_folds: int, seed: int) -> list[list[str]]:
    """Shuffle subjects and deal them into ``n_folds`` disjoint groups."""
    subjects = sorted(set(subjects))
    if not 2 <= n_folds <= len(subjects):
        raise ValueError("fold count must be between 2 and the number of subjects")
    order = np.random.default_rng(seed).permutation(len(subjects))
    return [[subjects[i] for i in order[k::n_folds]] for k in range(n_folds)]


PBV_METHOD, GEI_METHOD = "pbv", "gei"


def partial_sweep(sequences, genders, n_folds: int = 5, seed: int = 0, kind=FeatureKind.RCS,
                  harmonics: int = DEFAULT_HARMONICS, fractions=DEFAULT_FRACTIONS,
                  baseline: bool = True) -> list[dict]:
    """Subject-disjoint cross-validated accuracy-vs-fraction rows.

    ``genders`` maps subject id to label.  One row per (test sequence,
    fraction, method).
    """
    sequences = list(sequences)
    rows = []
    for k, test in enumerate(subject_folds([s.subject for s in sequences], n_folds, seed)):
        test = set(test)
        train = [s for s in sequences if s.subject not in test]
        labels = [genders[s.subject] for s in train]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularScatterWarning)
            model = pbv_train(train, labels, kind, harmonics)
        base = gei_baseline_train(train, labels) if baseline else None
        for s in sequences:
            if s.subject not in test:
                continue
            truth = genders[s.subject]
            for method, res in ((PBV_METHOD, pbv_partial_eval(model, s, truth, fractions)),
                                (GEI_METHOD, gei_baseline_partial_eval(base, s, truth, fractions) if base else [])):
                for r in res:
                    rows.append({"fold": k, "subject": s.subject, "run": s.run, "method": method,
                                 "fraction": r.fraction, "n_frames": r.n_frames, "predicted": r.predicted,
                                 "truth": truth, "correct": int(r.correct)})
    return rows


def accuracy_by_fraction(rows, method: str = PBV_METHOD) -> dict[float, float]:
    acc: dict[float, list[int]] = {}
    for r in rows:
        if r["method"] == method:
            acc.setdefault(r["fraction"], []).append(r["correct"])
    return {f: float(np.mean(v)) for f, v in sorted(acc.items())}
