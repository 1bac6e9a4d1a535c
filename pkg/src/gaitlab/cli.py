"""gaitlab command line.

Exit codes: 0 success, 1 domain failure (structured JSON error on stderr),
2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .auth import PARADIGMS
from .core import (GaitError, SampleKey, load_dataset, load_sequence, read_claims, split_gallery_probe,
                   write_dataset)
from .features import DEFAULT_HARMONICS
from .gts import WEIGHT_PRESETS, MaskSpec, render_mask
from .harness import (ExperimentConfig, FeatureStore, _jsonable, batch_from_claims, evaluate_claims,
                      identity_store, read_genders, recognize_templates, run_experiment, sequence_templates,
                      tune_thresholds, write_csv)
from .pbv import DEFAULT_FRACTIONS, FeatureKind, PbvModel, pbv_predict, pbv_train
from .preprocess import cycle_frames, lower_limb_signal, smooth_signal
from .recognition import BAYES, KNN
from .subspace import SingularScatterWarning
from .synth import SynthSpec, generate_synthetic_dataset, generate_view_corpus
from .templates import TemplateKind, compute_template, export_template
from .viewest import ViewModel, boundary_grid, slope_features, view_fit, view_predict

FORMATS = ("json", "csv")


# --- output -----------------------------------------------------------------------

def _emit(obj, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(_jsonable(obj), indent=1) + "\n")
        return
    rows = obj if isinstance(obj, list) else [obj]
    rows = [{k: v for k, v in r.items() if not isinstance(v, (list, dict))} for r in rows]
    cols = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    w.writerows(_jsonable(rows))
    out.write(buf.getvalue())


def parse_fractions(text: str) -> list[float]:
    """'0.1..1.0' (tenths), '0.2..0.6:0.2' or a comma list."""
    text = text.strip()
    try:
        if ".." in text:
            rng, _, step = text.partition(":")
            lo, hi = (float(x) for x in rng.split(".."))
            step = float(step) if step else 0.1
            n = int(round((hi - lo) / step))
            vals = [round(lo + i * step, 9) for i in range(n + 1)]
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("fractions must lie in (0, 1]")
    return vals


def _runs(text: str) -> dict:
    try:
        return {k.strip(): int(v) for k, v in (p.split("=") for p in text.split(","))}
    except ValueError:
        raise argparse.ArgumentTypeError(f"runs must look like nm=6,bg=2,cl=2, got {text!r}") from None


def _sequences(data: str):
    index = load_dataset(data)
    if not len(index):
        raise GaitError(f"no sequences under {data}")
    return [load_sequence(index, k) for k in index.keys]


def _genders(args) -> dict[str, str]:
    path = Path(args.genders) if args.genders else Path(args.data) / "genders.csv"
    if not path.exists():
        raise GaitError(f"gender labels not found at {path}")
    return read_genders(path)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --- subcommands ---------------------------------------------------------------------

def cmd_synth(args) -> dict:
    spec = SynthSpec(subjects=args.subjects, frames=args.frames, views=tuple(args.views), runs=args.runs)
    ds = generate_synthetic_dataset(spec, args.seed)
    out = _out_dir(args.out)
    index = write_dataset(out, ds.sequences.values())
    write_csv(out / "genders.csv", [{"subject": s, "gender": g} for s, g in sorted(ds.genders.items())])
    return {"out": str(out), "subjects": len(ds.genders), "sequences": len(index), "seed": args.seed}


def cmd_preprocess(args) -> list[dict]:
    rows = []
    dump = _out_dir(args.dump_signals) if args.dump_signals else None
    for seq in _sequences(args.data):
        frames, cyc = cycle_frames(seq.frames, args.window, args.polyorder)
        rows.append({"sequence": str(seq.key), "frames": len(seq), "cycle_found": int(cyc is not None),
                     "start": cyc.start if cyc else None, "mid": cyc.mid if cyc else None,
                     "end": cyc.end if cyc else None, "cycle_frames": len(frames)})
        if dump is not None:
            raw = lower_limb_signal(seq.frames)
            w = min(args.window, len(raw) if len(raw) % 2 else len(raw) - 1)
            sm = smooth_signal(raw, w, args.polyorder) if w > args.polyorder else raw
            name = str(seq.key).replace("/", "_") + ".csv"
            write_csv(dump / name, [{"frame": i, "value": float(v), "smoothed": float(s)}
                                    for i, (v, s) in enumerate(zip(raw, sm))])
    return rows


def cmd_template(args) -> list[dict]:
    out = _out_dir(args.out)
    rows = []
    for seq in _sequences(args.data):
        frames, cyc = cycle_frames(seq.frames)
        t = compute_template(frames, args.kind)
        path = out / (str(seq.key).replace("/", "_") + f"_{args.kind}.png")
        export_template(t, path)
        rows.append({"sequence": str(seq.key), "kind": args.kind, "frames": len(frames),
                     "cycle_found": int(cyc is not None), "path": str(path)})
    return rows


def cmd_pbv_train(args) -> dict:
    genders = _genders(args)
    seqs = [s for s in _sequences(args.data) if s.subject in genders]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        model = pbv_train(seqs, [genders[s.subject] for s in seqs], args.features, args.harmonics)
    model.save(args.out)
    return {"model": args.out, "features": model.kind.value, "harmonics": model.harmonics,
            "sequences": len(seqs), "skipped_frames": model.skipped, "labels": model.labels.tolist()}


def cmd_pbv_predict(args) -> list[dict]:
    model = PbvModel.load(args.model)
    genders = {}
    if args.genders or (Path(args.data) / "genders.csv").exists():
        genders = _genders(args)
    rows = []
    for seq in _sequences(args.data):
        pred = str(pbv_predict(seq, model))
        truth = genders.get(seq.subject)
        rows.append({"sequence": str(seq.key), "predicted": pred, "truth": truth,
                     "correct": None if truth is None else int(pred == truth)})
    return rows


def _run_config(args, pipeline: str, params: dict, dataset: dict) -> dict:
    cfg = ExperimentConfig(pipeline, pipeline, args.seed, dataset, params)
    report = run_experiment(cfg, args.out, nest=False)
    if not report.ok:
        raise GaitError(report.failure)
    return report.to_dict()


def cmd_pbv_sweep(args) -> dict:
    dataset = {"source": args.data}
    if args.genders:
        dataset["genders"] = args.genders
    params = {"features": args.features, "harmonics": args.harmonics, "folds": args.folds,
              "fractions": args.fractions, "baseline": not args.no_baseline}
    return _run_config(args, "pbv", params, dataset)


def cmd_gts_optimize(args) -> dict:
    params = {"template": args.template, "weights": args.weights, "population": args.population,
              "generations": args.generations, "refine": not args.no_refine}
    return _run_config(args, "gts", params, {"source": args.data} if args.data else {})


def cmd_recognize(args) -> list[dict] | dict:
    templates = sequence_templates(_sequences(args.data), args.template)
    mask = np.ones((240, 240))
    if args.mask:
        d = json.loads(Path(args.mask).read_text())
        mask = render_mask(MaskSpec.from_dict(d.get("spec", d)))
    rows, ccr = recognize_templates(templates, mask, args.classifier, args.retention)
    return [{"covariate": c, "ccr": v, "probes": sum(r["covariate"] == c for r in rows)} for c, v in ccr.items()]


def _view_training(args):
    if args.data:
        seqs = _sequences(args.data)
        return [s.frames for s in seqs], np.array([s.view for s in seqs])
    corp = generate_view_corpus(per_angle=args.per_angle, n_frames=args.frames, seed=args.seed,
                                jitter=args.camera_jitter)
    return corp.sequences, corp.angles


def cmd_view_fit(args) -> dict:
    seqs, angles = _view_training(args)
    model = view_fit([slope_features(s) for s in seqs], angles)
    model.save(args.out)
    return {"model": args.out, "sequences": len(seqs), "angles": sorted(set(angles.tolist()))}


def cmd_view_predict(args) -> list[dict]:
    model = ViewModel.load(args.model)
    rows = []
    for seq in _sequences(args.data):
        rows.append({"sequence": str(seq.key), "predicted": view_predict(model, seq), "recorded_view": seq.view})
    return rows


def cmd_view_grid(args) -> list[dict]:
    model = ViewModel.load(args.model)
    grid = boundary_grid(model, tuple(args.mp), tuple(args.mq), args.steps)
    return [{"mP": a, "mQ": b, "angle": c} for a, b, c in grid]


def cmd_auth_make(args) -> dict:
    two = args.two_pass
    store = identity_store(args.subjects, args.seed, args.dim, two)
    split = split_gallery_probe(store.index, args.n_authorized, args.seed, n_type1=args.n_type1)
    out = _out_dir(args.out)
    doc = {"gallery": [str(k) for k in split.gallery],
           "features": {str(k): v.tolist() for k, v in store.features.items()}}
    if two:
        doc["features2"] = {str(k): v.tolist() for k, v in store.features2.items()}
    (out / "gallery.json").write_text(json.dumps(doc))
    split.write_claims(out / "claims.csv")
    return {"gallery": str(out / "gallery.json"), "claims": str(out / "claims.csv"),
            "authorized": len(split.authorized), "n_claims": len(split.claims)}


def _load_gallery(path) -> tuple[FeatureStore, list[SampleKey]]:
    try:
        doc = json.loads(Path(path).read_text())
        feats = {SampleKey.parse(k): np.asarray(v, float) for k, v in doc["features"].items()}
        f2 = doc.get("features2")
        f2 = None if f2 is None else {SampleKey.parse(k): np.asarray(v, float) for k, v in f2.items()}
        gallery = [SampleKey.parse(k) for k in doc["gallery"]]
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise GaitError(f"{path}: malformed gallery file ({type(e).__name__}: {e})") from None
    return FeatureStore(None, feats, f2), gallery


def cmd_auth(args) -> dict:
    store, gallery = _load_gallery(args.gallery)
    claims = read_claims(args.claims)
    two = args.paradigm in ("msm2p", "bt2p")
    batch = batch_from_claims(store, gallery, claims, two)
    given = {k: v for k, v in (("theta_p", args.theta_p), ("theta_q", args.theta_q), ("theta_d", args.theta_d))
             if v is not None}
    thresholds = {**tune_thresholds(args.paradigm, batch, args.far_target), **given}
    row, _ = evaluate_claims(args.paradigm, batch, thresholds)
    return row


def cmd_report(args) -> dict:
    cfg = ExperimentConfig.from_toml(args.config)
    report = run_experiment(cfg, args.out)
    if not report.ok:
        raise GaitError(f"run {cfg.name} failed: {report.failure}")
    return {"status": report.status, "run_dir": report.run_dir, "artifacts": report.artifacts,
            "timings": report.timings}


# --- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=FORMATS, default="json", help="output format on stdout")

    p = argparse.ArgumentParser(prog="gaitlab", description="Gait biometrics toolkit.")
    p.add_argument("--version", action="version", version=f"gaitlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", parents=[fmt], help="write a synthetic silhouette dataset")
    s.add_argument("--subjects", type=int, default=4)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=60)
    s.add_argument("--views", type=int, nargs="+", default=[90])
    s.add_argument("--runs", type=_runs, default={"nm": 6, "bg": 2, "cl": 2}, help="e.g. nm=6,bg=2,cl=2")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", parents=[fmt], help="detect gait cycles")
    s.add_argument("--data", required=True)
    s.add_argument("--window", type=int, default=11)
    s.add_argument("--polyorder", type=int, default=3)
    s.add_argument("--dump-signals", metavar="DIR", help="write frame,value CSVs of the lower-limb signal")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("template", parents=[fmt], help="compute one template PNG per sequence")
    s.add_argument("--data", required=True)
    s.add_argument("--kind", choices=[k.value for k in TemplateKind], default="gei")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_template)

    pbv = sub.add_parser("pbv", help="pose-based-voting gender classification")
    psub = pbv.add_subparsers(dest="action", required=True, metavar="ACTION")
    feat = argparse.ArgumentParser(add_help=False)
    feat.add_argument("--features", choices=[k.value for k in FeatureKind], default="rcs")
    feat.add_argument("--harmonics", type=int, default=DEFAULT_HARMONICS)
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True)
    data.add_argument("--genders", help="subject,gender CSV (default DATA/genders.csv)")
    s = psub.add_parser("train", parents=[fmt, feat, data])
    s.add_argument("--out", required=True, help="model JSON path")
    s.set_defaults(func=cmd_pbv_train)
    s = psub.add_parser("predict", parents=[fmt, data])
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_pbv_predict)
    s = psub.add_parser("partial-sweep", parents=[fmt, feat, data])
    s.add_argument("--fractions", type=parse_fractions, default=list(DEFAULT_FRACTIONS))
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--no-baseline", action="store_true")
    s.add_argument("--out", required=True, help="run directory")
    s.set_defaults(func=cmd_pbv_sweep)

    gts = sub.add_parser("gts", help="genetic template segmentation")
    gsub = gts.add_subparsers(dest="action", required=True, metavar="ACTION")
    s = gsub.add_parser("optimize", parents=[fmt])
    s.add_argument("--data", help="dataset directory (default: synthetic planted templates)")
    s.add_argument("--template", choices=[k.value for k in TemplateKind], default="gei")
    s.add_argument("--weights", choices=list(WEIGHT_PRESETS), default="equal")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--population", type=int, default=20)
    s.add_argument("--generations", type=int, default=15)
    s.add_argument("--no-refine", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gts_optimize)

    view = sub.add_parser("view", help="view-angle estimation")
    vsub = view.add_subparsers(dest="action", required=True, metavar="ACTION")
    s = vsub.add_parser("fit", parents=[fmt])
    s.add_argument("--data", help="raw-frame dataset; view angles come from the directory names")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--per-angle", type=int, default=30)
    s.add_argument("--frames", type=int, default=6)
    s.add_argument("--camera-jitter", type=float, default=0.05)
    s.add_argument("--out", required=True, help="model JSON path")
    s.set_defaults(func=cmd_view_fit)
    s = vsub.add_parser("predict", parents=[fmt])
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_view_predict)
    s = vsub.add_parser("grid", parents=[fmt], help="predicted angle over a slope grid")
    s.add_argument("--model", required=True)
    s.add_argument("--mp", type=float, nargs=2, default=[-0.5, 0.5], metavar=("LO", "HI"))
    s.add_argument("--mq", type=float, nargs=2, default=[-0.5, 0.5], metavar=("LO", "HI"))
    s.add_argument("--steps", type=int, default=101)
    s.set_defaults(func=cmd_view_grid)

    s = sub.add_parser("recognize", parents=[fmt], help="masked template recognition, CCR per covariate")
    s.add_argument("--data", required=True)
    s.add_argument("--template", choices=[k.value for k in TemplateKind], default="gei")
    s.add_argument("--mask", help="mask JSON written by gts optimize")
    s.add_argument("--classifier", choices=[BAYES, KNN], default=BAYES)
    s.add_argument("--retention", type=float, default=0.99)
    s.set_defaults(func=cmd_recognize)

    auth = sub.add_parser("auth", help="authentication error rates")
    asub = auth.add_subparsers(dest="paradigm", required=True, metavar="PARADIGM")
    s = asub.add_parser("make", parents=[fmt], help="write a synthetic gallery.json + claims.csv")
    s.add_argument("--subjects", type=int, default=150)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--n-authorized", type=int, default=50)
    s.add_argument("--n-type1", type=int, default=500)
    s.add_argument("--two-pass", action="store_true")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_auth_make)
    for name in PARADIGMS:
        s = asub.add_parser(name, parents=[fmt])
        s.add_argument("--gallery", required=True)
        s.add_argument("--claims", required=True)
        s.add_argument("--far-target", type=float, default=0.01, help="used when a threshold is not given")
        s.add_argument("--theta-p", type=float)
        s.add_argument("--theta-q", type=float)
        s.add_argument("--theta-d", type=float)
        s.set_defaults(func=cmd_auth)

    s = sub.add_parser("report", parents=[fmt], help="run a TOML experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        result = args.func(args)
    except (GaitError, ValueError, OSError, KeyError) as e:
        err = {"error": type(e).__name__, "message": str(e).strip("'\""), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    _emit(result, args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
