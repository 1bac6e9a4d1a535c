"""Config-driven experiment runs: one pipeline per run directory, CSV + figures + report.json."""
from __future__ import annotations

import csv
import json
import math
import sys
import time
import traceback
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .auth import (BT, BT2P, MSM, MSM2P, NN, NnGallery, binomial_sigma, bt_accepts, bt_scores, compute_error_rates,
                   equal_error_rate, min_aer, msm_accepts, sweep_thresholds, theoretical_msm_rates,
                   theoretical_type2_far, tune_theta_p, tune_threshold_for_far)
from .core import (GALLERY_RUNS, GENUINE, Covariate, DatasetIndex, GaitError, GaitSequence, SampleKey,
                   load_dataset, load_sequence, split_gallery_probe, subject_id)
from .gts import (FitnessCache, FitnessWeights, GaParams, MaskSpec, TuningSet, bits_to_str, ga_optimize,
                  render_mask, sequential_refine)
from .pbv import GEI_METHOD, PBV_METHOD, accuracy_by_fraction, partial_sweep
from .preprocess import cycle_frames
from .recognition import fit_recognizer
from .subspace import SingularScatterWarning
from .synth import (SynthSpec, generate_coronal_corpus, generate_gender_corpus, generate_identity_features,
                    generate_planted_templates, generate_synthetic_dataset, generate_view_corpus)
from .templates import TemplateKind, compute_template
from .viewest import boundary_grid, coronal_check, slope_features, view_fit, view_predict_slopes

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PIPELINES = ("pbv", "gts", "gts-recognition", "auth-nn", "auth-msm", "auth-bt", "auth-msm2p", "auth-bt2p", "view")
AUTH_PARADIGMS = {"auth-nn": NN, "auth-msm": MSM, "auth-bt": BT, "auth-msm2p": MSM2P, "auth-bt2p": BT2P}

_AUTH_PARAMS = {"n_authorized": [10, 20, 50, 100], "n_type1": 500, "far_target": 0.01, "theta_p": None,
                "theta_q": None, "theta_d": None, "template": "gei"}
PARAM_DEFAULTS = {
    "pbv": {"features": "rcs", "harmonics": 12, "folds": 5, "fractions": [round(0.1 * i, 1) for i in range(1, 11)],
            "baseline": True},
    "gts": {"template": "gei", "weights": "equal", "population": 20, "generations": 15, "crossover": 0.6,
            "mutation": 0.03, "elitism": 1, "refine": True, "retention": 0.99},
    "gts-recognition": {"template": "gei", "mask": None, "classifier": "bayes", "retention": 0.99},
    "view": {"per_angle": 30, "n_frames": 6, "slope_noise": 0.05, "camera_jitter": 0.0,
             "coronal_per_direction": 50, "grid_steps": 101},
    **{p: dict(_AUTH_PARAMS) for p in AUTH_PARADIGMS},
}
DATASET_DEFAULTS = {
    "pbv": {"subjects": 150, "sequences_per_subject": 1, "frames": 60, "period": 30.0},
    "gts": {"subjects": 20, "gallery": 4, "probes": 3},
    "gts-recognition": {"subjects": 10, "frames": 40, "period": 30.0},
    "view": {},
    **{p: {"subjects": 150, "dim": 16} for p in AUTH_PARADIGMS},
}


class ConfigError(GaitError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    pipeline: str
    seed: int
    dataset: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; choose from {', '.join(PIPELINES)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        unknown = set(self.params) - set(PARAM_DEFAULTS[self.pipeline])
        if unknown:
            raise ConfigError(f"unknown {self.pipeline} parameters: {sorted(unknown)}")
        src = self.dataset.get("source", "synthetic")
        if src != "synthetic" and not Path(src).is_dir():
            raise ConfigError(f"dataset directory {src!r} does not exist")
        mask = self.params.get("mask")
        if mask and not Path(mask).exists():
            raise ConfigError(f"mask file {mask!r} does not exist")

    @property
    def resolved_params(self) -> dict:
        return {**PARAM_DEFAULTS[self.pipeline], **self.params}

    @property
    def resolved_dataset(self) -> dict:
        return {"source": "synthetic", **DATASET_DEFAULTS[self.pipeline], **self.dataset}

    @property
    def synthetic(self) -> bool:
        return self.resolved_dataset["source"] == "synthetic"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        missing = {"pipeline", "seed"} - set(d)
        if missing:
            raise ConfigError(f"config is missing {sorted(missing)}")
        extra = set(d) - {"name", "pipeline", "seed", "dataset", "params"}
        if extra:
            raise ConfigError(f"unknown top-level config keys: {sorted(extra)}")
        return cls(str(d.get("name", d["pipeline"])), d["pipeline"], d["seed"], dict(d.get("dataset", {})),
                   dict(d.get("params", {})))

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None

    def to_dict(self) -> dict:
        return {"name": self.name, "pipeline": self.pipeline, "seed": self.seed,
                "dataset": self.resolved_dataset, "params": self.resolved_params}


@dataclass
class RunReport:
    config: dict
    run_dir: str
    status: str = "ok"
    timings: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {"config": self.config, "run_dir": self.run_dir, "status": self.status, "timings": self.timings,
                "metrics": self.metrics, "warnings": self.warnings, "artifacts": self.artifacts,
                "failure": self.failure}


# --- small IO helpers ----------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return "" if v is None else v


def write_csv(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def read_genders(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        return {subject_id(r["subject"]): r["gender"].strip() for r in csv.DictReader(fh)}


# --- data sources ----------------------------------------------------------------

def dataset_sequences(ds_cfg: dict) -> tuple[list[GaitSequence], dict[str, str]]:
    root = Path(ds_cfg["source"])
    index = load_dataset(root)
    seqs = [load_sequence(index, k) for k in index.keys]
    gpath = Path(ds_cfg.get("genders", root / "genders.csv"))
    genders = read_genders(gpath) if gpath.exists() else {}
    return seqs, genders


def sequence_templates(sequences, kind) -> dict[SampleKey, np.ndarray]:
    """One template per sequence, collated over its first detected cycle (whole sequence if none)."""
    out = {}
    for s in sequences:
        frames, _ = cycle_frames(s.frames)
        out[s.key] = compute_template(frames, kind).values
    return out


def _is_gallery(k: SampleKey) -> bool:
    return k.covariate is Covariate.NORMAL and k.run in GALLERY_RUNS


def tuning_set_from_templates(templates: dict[SampleKey, np.ndarray], retention: float = 0.99) -> TuningSet:
    """Gallery = Normal runs 1-4; probes grouped by covariate (later Normal runs, Bag, Coat)."""
    gal = sorted(k for k in templates if _is_gallery(k))
    if not gal:
        raise GaitError("no gallery sequences (Normal runs 1-4)")
    probes, probe_ids = {}, {}
    for cov in Covariate:
        keys = sorted(k for k in templates if k.covariate is cov and not _is_gallery(k))
        if keys:
            probes[cov] = np.array([templates[k] for k in keys])
            probe_ids[cov] = np.array([k.subject for k in keys])
    return TuningSet(np.array([templates[k] for k in gal]), np.array([k.subject for k in gal]), probes,
                     probe_ids, retention)


def synthetic_recognition_sequences(ds_cfg: dict, seed: int) -> list[GaitSequence]:
    spec = SynthSpec(subjects=int(ds_cfg["subjects"]), frames=int(ds_cfg["frames"]),
                     period=float(ds_cfg["period"]), runs=ds_cfg.get("runs", {"nm": 6, "bg": 2, "cl": 2}))
    return list(generate_synthetic_dataset(spec, seed).sequences.values())


# --- authentication -----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureStore:
    """Feature vectors per sample key, with an optional second feature set for two-pass methods."""

    index: DatasetIndex
    features: dict
    features2: dict | None = None


def identity_store(n_subjects: int, seed: int, dim: int = 16, two_pass: bool = False, **kw) -> FeatureStore:
    """Synthetic identity features; two-pass stores split each vector into two halves."""
    corp = generate_identity_features(n_subjects, dim=dim, seed=seed, **kw)
    f = corp.lookup()
    if not two_pass:
        return FeatureStore(corp.index, f)
    half = dim // 2
    return FeatureStore(corp.index, {k: v[:half] for k, v in f.items()}, {k: v[half:] for k, v in f.items()})


def template_store(sequences, kind=TemplateKind.GEI, kind2=TemplateKind.GENI) -> FeatureStore:
    t1 = sequence_templates(sequences, kind)
    t2 = sequence_templates(sequences, kind2)
    from .core import SampleRecord

    index = DatasetIndex([SampleRecord(k, None, None) for k in sorted(t1)])
    return FeatureStore(index, {k: v.reshape(-1) for k, v in t1.items()},
                        {k: v.reshape(-1) for k, v in t2.items()})


@dataclass
class ClaimBatch:
    n: int
    recognizer: object
    recognizer2: object | None
    X: np.ndarray
    X2: np.ndarray | None
    claimed: np.ndarray
    truths: np.ndarray
    true_ids: np.ndarray
    covariates: np.ndarray
    gallery: np.ndarray
    gallery_ids: np.ndarray


def claim_batch(store: FeatureStore, n: int, seed: int, n_type1: int, two_pass: bool = False) -> ClaimBatch:
    split = split_gallery_probe(store.index, n, seed, n_type1=n_type1)
    return batch_from_claims(store, split.gallery, split.claims, two_pass)


def batch_from_claims(store: FeatureStore, gallery_keys, claims, two_pass: bool = False) -> ClaimBatch:
    """Fit recognizer(s) on the gallery keys and stack the claim probes."""
    missing = [str(k) for k in list(gallery_keys) + [c.probe for c in claims] if k not in store.features]
    if missing:
        raise GaitError(f"no features for {missing[:3]}{' ...' if len(missing) > 3 else ''}")
    gy = np.array([k.subject for k in gallery_keys])
    n = len(set(gy.tolist()))
    G = np.array([store.features[k] for k in gallery_keys])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        rec = fit_recognizer(G, gy)
        rec2 = None
        if two_pass:
            if store.features2 is None:
                raise GaitError("two-pass authentication needs a second feature set")
            rec2 = fit_recognizer(np.array([store.features2[k] for k in gallery_keys]), gy)
    X = np.array([store.features[c.probe] for c in claims])
    X2 = np.array([store.features2[c.probe] for c in claims]) if two_pass else None
    return ClaimBatch(n, rec, rec2, X, X2, np.array([c.claimed for c in claims]),
                      np.array([c.truth for c in claims]), np.array([c.probe.subject for c in claims]),
                      np.array([c.probe.covariate.value for c in claims]), G, gy)


def paradigm_scores(paradigm: str, b: ClaimBatch) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Raw scores for threshold paradigms: (pass-1, pass-2).  NN scores are distances."""
    if paradigm == NN:
        gal = NnGallery(b.recognizer.project(b.gallery), b.gallery_ids)
        return gal.claim_distances(b.recognizer.project(b.X), b.claimed), None
    if paradigm == BT:
        return bt_scores(b.recognizer, b.X, b.claimed), None
    if paradigm == BT2P:
        return bt_scores(b.recognizer, b.X, b.claimed), bt_scores(b.recognizer2, b.X2, b.claimed)
    return None, None


def tune_thresholds(paradigm: str, b: ClaimBatch, far_target: float) -> dict:
    s1, s2 = paradigm_scores(paradigm, b)
    if paradigm == NN:
        return {"theta_d": tune_threshold_for_far(s1, b.truths, far_target, lower_is_better=True)}
    if paradigm == BT:
        return {"theta_p": tune_theta_p(s1, b.truths, far_target)}
    if paradigm == BT2P:
        return {"theta_p": tune_theta_p(s1, b.truths, far_target), "theta_q": tune_theta_p(s2, b.truths, far_target)}
    return {}


def evaluate_claims(paradigm: str, b: ClaimBatch, thresholds: dict) -> tuple[dict, list[tuple[float, float]]]:
    """Error-rate row for one claim batch plus the ROC (empty for MSM variants)."""
    genuine = b.truths == GENUINE
    pred = b.recognizer.predict(b.X)
    ccr = float(np.mean(pred[genuine] == b.true_ids[genuine]))
    normal = genuine & (b.covariates == Covariate.NORMAL.value)
    ccr_nm = float(np.mean(pred[normal] == b.true_ids[normal])) if normal.any() else None
    roc, eer, aer_min = [], None, None
    s1, s2 = paradigm_scores(paradigm, b)
    if paradigm == MSM:
        accepts = msm_accepts(b.recognizer, b.X, b.claimed)
    elif paradigm == MSM2P:
        accepts = msm_accepts(b.recognizer, b.X, b.claimed) | msm_accepts(b.recognizer2, b.X2, b.claimed)
    elif paradigm == NN:
        accepts = s1 < thresholds["theta_d"]
        sw = sweep_thresholds(s1, b.truths, lower_is_better=True)
    elif paradigm == BT:
        accepts = bt_accepts(s1, thresholds["theta_p"])
        sw = sweep_thresholds(s1, b.truths)
    else:
        accepts = bt_accepts(s1, thresholds["theta_p"]) | bt_accepts(s2, thresholds["theta_q"])
        sw = None
    if paradigm in (NN, BT):
        roc, eer, aer_min = sw.roc, equal_error_rate(sw), min_aer(sw)[0]
    er = compute_error_rates(accepts, b.truths, eer, roc)
    frr_t, far_t, aer_t = theoretical_msm_rates(ccr, b.n)
    row = {"n": b.n, "paradigm": paradigm, "ccr": ccr, "ccr_normal": ccr_nm, **er.to_dict(),
           "aer_min": aer_min, "theory_frr": frr_t, "theory_far": far_t, "theory_aer": aer_t,
           "theory_far_type2": theoretical_type2_far(ccr_nm if ccr_nm is not None else ccr, b.n),
           "sigma_type1": binomial_sigma(1 / b.n, max(er.counts["n_type1"], 1)), **thresholds}
    return row, roc


def population_sweep(store: FeatureStore, paradigm: str, ns, seed: int, n_type1: int = 500,
                     far_target: float = 0.01, thresholds: dict | None = None) -> tuple[list[dict], dict]:
    """Error rates for each gallery size n.

    Posterior thresholds not given are tuned once, at the largest n, to
    ``far_target`` mean FAR and then held fixed across the sweep.  Distance
    thresholds live in a gallery-specific CDA space, so they are tuned per n.
    """
    ns = sorted(int(n) for n in ns)
    two = paradigm in (MSM2P, BT2P)
    batches = {n: claim_batch(store, n, seed + n, max(n_type1, n), two) for n in ns}
    given = {k: v for k, v in (thresholds or {}).items() if v is not None}
    fixed = {} if paradigm == NN else {**tune_thresholds(paradigm, batches[ns[-1]], far_target), **given}
    rows, rocs = [], {}
    for n in ns:
        th = {**tune_thresholds(paradigm, batches[n], far_target), **given} if paradigm == NN else fixed
        row, roc = evaluate_claims(paradigm, batches[n], th)
        rows.append(row)
        rocs[n] = roc
    return rows, rocs


# --- pipelines ------------------------------------------------------------------

class _Run:
    def __init__(self, report: RunReport, out: Path):
        self.report = report
        self.out = out

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.report.timings[name] = round(time.perf_counter() - t, 4)

    def artifact(self, path) -> Path:
        p = Path(path)
        self.report.artifacts.append(str(p.relative_to(self.out)))
        return p


def _run_pbv(cfg: ExperimentConfig, run: _Run) -> None:
    p, d = cfg.resolved_params, cfg.resolved_dataset
    with run.stage("data"):
        if cfg.synthetic:
            ds = generate_gender_corpus(int(d["subjects"]), int(d["sequences_per_subject"]), int(d["frames"]),
                                        float(d["period"]), cfg.seed)
            seqs, genders = list(ds.sequences.values()), ds.genders
        else:
            seqs, genders = dataset_sequences(d)
            if not genders:
                raise GaitError("pbv on a directory needs a genders.csv (subject,gender)")
            seqs = [s for s in seqs if s.subject in genders]
    with run.stage("cross-validation"):
        rows = partial_sweep(seqs, genders, int(p["folds"]), cfg.seed, p["features"], int(p["harmonics"]),
                             [float(f) for f in p["fractions"]], bool(p["baseline"]))
    write_csv(run.artifact(run.out / "pbv_predictions.csv"), rows)
    curves = {"RCS-PBV" if p["features"] == "rcs" else "EFD-PBV": accuracy_by_fraction(rows, PBV_METHOD)}
    if p["baseline"]:
        curves["GEI baseline"] = accuracy_by_fraction(rows, GEI_METHOD)
    table = [{"fraction": f, **{m: acc.get(f) for m, acc in curves.items()}} for f in next(iter(curves.values()))]
    write_csv(run.artifact(run.out / "accuracy_by_fraction.csv"), table)
    plotting.accuracy_vs_fraction(curves, run.artifact(run.out / "accuracy_by_fraction.png"))
    run.report.metrics["accuracy_by_fraction"] = {m: {str(f): a for f, a in acc.items()} for m, acc in curves.items()}
    run.report.metrics["sequences"] = len(seqs)


def _run_gts(cfg: ExperimentConfig, run: _Run) -> None:
    p, d = cfg.resolved_params, cfg.resolved_dataset
    with run.stage("data"):
        if cfg.synthetic:
            pl = generate_planted_templates(int(d["subjects"]), int(d["gallery"]), int(d["probes"]), cfg.seed)
            ts = TuningSet.from_planted(pl, retention=float(p["retention"]))
            run.report.metrics["planted_boundaries"] = [pl.head_boundary, pl.foot_boundary]
        else:
            seqs, _ = dataset_sequences(d)
            ts = tuning_set_from_templates(sequence_templates(seqs, p["template"]), float(p["retention"]))
    weights = FitnessWeights.parse(p["weights"])
    cache = FitnessCache(lambda s: ts.fitness(s, weights))
    params = GaParams(int(p["population"]), int(p["generations"]), float(p["crossover"]), float(p["mutation"]),
                      int(p["elitism"]), cfg.seed)
    with run.stage("ga"):
        res = ga_optimize(cache, params)
    spec = res.spec
    if p["refine"]:
        with run.stage("refine"):
            spec = sequential_refine(spec, cache)
    write_csv(run.artifact(run.out / "fitness_trace.csv"),
              [{"generation": i + 1, "best_so_far": a, "generation_best": b}
               for i, (a, b) in enumerate(zip(res.trace, res.generation_best))])
    mask = render_mask(spec)
    from PIL import Image

    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(run.artifact(run.out / "mask.png"))
    rates = ts.ccr(spec)
    info = {"spec": spec.to_dict(), "ga_spec": res.spec.to_dict(), "chromosome": bits_to_str(res.best),
            "fitness": cache(spec), "ga_fitness": res.fitness, "ccr": {c.value: v for c, v in rates.items()},
            "lookups": res.lookups, "computed": cache.computed}
    run.artifact(run.out / "mask.json").write_text(json.dumps(info, indent=1))
    plotting.fitness_trace(res.trace, res.generation_best, run.artifact(run.out / "fitness_trace.png"))
    plotting.mask_overlay(mask, run.artifact(run.out / "mask_overlay.png"), ts.data[0])
    run.report.metrics.update(info)


def _run_gts_recognition(cfg: ExperimentConfig, run: _Run) -> None:
    p, d = cfg.resolved_params, cfg.resolved_dataset
    with run.stage("data"):
        seqs = synthetic_recognition_sequences(d, cfg.seed) if cfg.synthetic else dataset_sequences(d)[0]
        templates = sequence_templates(seqs, p["template"])
    mask = np.ones((240, 240))
    if p["mask"]:
        mask = render_mask(MaskSpec.from_dict(json.loads(Path(p["mask"]).read_text())["spec"]))
    with run.stage("recognition"):
        rows, ccr = recognize_templates(templates, mask, p["classifier"], float(p["retention"]))
    write_csv(run.artifact(run.out / "recognition.csv"), rows)
    write_csv(run.artifact(run.out / "ccr.csv"), [{"covariate": c, "ccr": v} for c, v in ccr.items()])
    plotting.ccr_bars(ccr, run.artifact(run.out / "ccr.png"))
    run.report.metrics["ccr"] = ccr


def recognize_templates(templates: dict, mask, classifier: str = "bayes", retention: float = 0.99):
    """Masked CDA recognizer on Normal runs 1-4; per-probe predictions and CCR per covariate."""
    m = np.asarray(mask, dtype=float).reshape(-1)
    gal = sorted(k for k in templates if _is_gallery(k))
    probes = sorted(k for k in templates if not _is_gallery(k))
    if not gal or not probes:
        raise GaitError("need gallery (Normal runs 1-4) and probe sequences")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        rec = fit_recognizer(np.array([templates[k].reshape(-1) * m for k in gal]),
                             np.array([k.subject for k in gal]), retention, classifier)
    pred = rec.predict(np.array([templates[k].reshape(-1) * m for k in probes]))
    rows = [{"probe": str(k), "covariate": k.covariate.value, "truth": k.subject, "predicted": str(p),
             "correct": int(p == k.subject)} for k, p in zip(probes, pred)]
    ccr = {}
    for cov in Covariate:
        r = [x["correct"] for x in rows if x["covariate"] == cov.value]
        if r:
            ccr[cov.value] = float(np.mean(r))
    return rows, ccr


def _run_auth(cfg: ExperimentConfig, run: _Run) -> None:
    p, d = cfg.resolved_params, cfg.resolved_dataset
    paradigm = AUTH_PARADIGMS[cfg.pipeline]
    with run.stage("data"):
        if cfg.synthetic:
            store = identity_store(int(d["subjects"]), cfg.seed, int(d["dim"]), paradigm in (MSM2P, BT2P))
        else:
            store = template_store(dataset_sequences(d)[0], p["template"])
    with run.stage("sweep"):
        rows, rocs = population_sweep(store, paradigm, p["n_authorized"], cfg.seed, int(p["n_type1"]),
                                      float(p["far_target"]),
                                      {k: p[k] for k in ("theta_p", "theta_q", "theta_d")})
    write_csv(run.artifact(run.out / "error_rates.csv"), rows)
    if any(rocs.values()):
        write_csv(run.artifact(run.out / "roc.csv"),
                  [{"n": n, "far": a, "verification_rate": v} for n, pts in rocs.items() for a, v in pts])
        plotting.roc_curves({f"n={n}": pts for n, pts in rocs.items()}, run.artifact(run.out / "roc.png"))
    plotting.rates_vs_population(rows, run.artifact(run.out / "rates_vs_n.png"))
    run.report.metrics["error_rates"] = rows


def _run_view(cfg: ExperimentConfig, run: _Run) -> None:
    p = cfg.resolved_params
    if not cfg.synthetic:
        raise GaitError("the view pipeline runs on synthetic camera renders only")
    rng = np.random.default_rng([cfg.seed, 99])

    def feats(corpus):
        F = np.array([slope_features(s).as_array() for s in corpus.sequences])
        return F * (1 + float(p["slope_noise"]) * rng.standard_normal(F.shape))

    with run.stage("data"):
        kw = dict(per_angle=int(p["per_angle"]), n_frames=int(p["n_frames"]), jitter=float(p["camera_jitter"]))
        train = generate_view_corpus(seed=2 * cfg.seed, **kw)
        test = generate_view_corpus(seed=2 * cfg.seed + 1, **kw)
        coronal = generate_coronal_corpus(int(p["coronal_per_direction"]), int(p["n_frames"]), cfg.seed)
        Ftr, Fte = feats(train), feats(test)
    with run.stage("fit"):
        model = view_fit(Ftr, train.angles)
        pred = view_predict_slopes(model, Fte)
    err = pred != test.angles
    adjacent = float(np.mean(np.abs(pred - test.angles)[err] == 18)) if err.any() else 1.0
    non_coronal_hits = sum(coronal_check(s) is not None for s in test.sequences)
    cor = [coronal_check(s) for s in coronal.sequences]
    cor_ok = float(np.mean([c == a for c, a in zip(cor, coronal.angles)]))
    rows = [{"true": int(t), "predicted": int(q), "mP": float(f[0]), "mQ": float(f[1])}
            for t, q, f in zip(test.angles, pred, Fte)]
    write_csv(run.artifact(run.out / "view_predictions.csv"), rows)
    lo, hi = Ftr.min(axis=0), Ftr.max(axis=0)
    pad = 0.1 * (hi - lo)
    grid = boundary_grid(model, (lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]),
                         int(p["grid_steps"]))
    write_csv(run.artifact(run.out / "boundary_grid.csv"), [{"mP": a, "mQ": b, "angle": c} for a, b, c in grid])
    plotting.view_boundaries(grid, Ftr, train.angles, run.artifact(run.out / "boundary_grid.png"))
    model.save(run.artifact(run.out / "view_model.json"))
    run.report.metrics.update({"accuracy": float(1 - err.mean()), "adjacent_error_fraction": adjacent,
                               "coronal_accuracy": cor_ok, "non_coronal_flagged": int(non_coronal_hits)})


_RUNNERS = {"pbv": _run_pbv, "gts": _run_gts, "gts-recognition": _run_gts_recognition, "view": _run_view,
            **{p: _run_auth for p in AUTH_PARADIGMS}}


def run_experiment(config: ExperimentConfig, out_dir, nest: bool = True) -> RunReport:
    """Run one pipeline into ``out_dir/<name>`` (or ``out_dir`` itself when ``nest`` is false).

    Failures yield a partial report with status 'failed'.
    """
    out = Path(out_dir) / config.name if nest else Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(config.to_dict(), str(out))
    run = _Run(report, out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            _RUNNERS[config.pipeline](config, run)
        except Exception as e:  # noqa: BLE001 - any stage failure is reported, not raised
            report.status = "failed"
            report.failure = f"{type(e).__name__}: {e}"
            report.metrics["traceback"] = traceback.format_exc(limit=3)
    report.warnings = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    (out / "report.json").write_text(json.dumps(_jsonable(report.to_dict()), indent=1))
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x
