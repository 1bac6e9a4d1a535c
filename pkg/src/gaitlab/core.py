"""Core domain types, dataset indexing and gallery/probe splitting.

Datasets follow the CASIA-B silhouette layout::

    <root>/<sid>/<cov>-<run>/<angle>/<frame>.png

with ``sid`` zero-padded to 3, ``cov`` in {nm, bg, cl}, ``run`` zero-padded to 2,
``angle`` zero-padded to 3 and ``frame`` zero-padded to 4.  PNGs are 8-bit
grayscale; any value >= 128 is foreground.
"""
from __future__ import annotations

import enum
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

FRAME_SIZE = 240
VIEW_ANGLES = tuple(range(0, 181, 18))
GALLERY_RUNS = (1, 2, 3, 4)
INDEX_FORMAT_VERSION = 1


def thread_count() -> int:
    """Worker cap from GAITLAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("GAITLAB_THREADS", "1")))
    except ValueError:
        return 1


class GaitError(Exception):
    """Base class for domain failures (CLI exit code 1)."""


class EmptySilhouette(GaitError):
    pass


class DatasetError(GaitError):
    pass


class Covariate(str, enum.Enum):
    NORMAL = "nm"
    BAG = "bg"
    COAT = "cl"

    @classmethod
    def parse(cls, value: "str | Covariate") -> "Covariate":
        if isinstance(value, Covariate):
            return value
        v = str(value).lower()
        for c in cls:
            if v in (c.value, c.name.lower()):
                return c
        raise ValueError(f"unknown covariate {value!r}")


def check_view(degrees: int) -> int:
    d = int(degrees)
    if d not in VIEW_ANGLES:
        raise ValueError(f"view angle must be a multiple of 18 in [0, 180], got {degrees}")
    return d


def subject_id(value) -> str:
    """Canonical zero-padded subject id ("7" -> "007")."""
    s = str(value)
    return s.zfill(3) if s.isdigit() else s


class SampleKey(NamedTuple):
    subject: str
    covariate: Covariate
    run: int
    view: int

    def __str__(self) -> str:
        return f"{self.subject}/{self.covariate.value}-{self.run:02d}/{self.view:03d}"

    @classmethod
    def parse(cls, text: str) -> "SampleKey":
        m = re.fullmatch(r"([^/]+)/(nm|bg|cl)-(\d+)/(\d+)", text.strip())
        if not m:
            raise ValueError(f"malformed sample key {text!r}")
        return cls(m.group(1), Covariate(m.group(2)), int(m.group(3)), int(m.group(4)))

    def relpath(self) -> Path:
        return Path(self.subject) / f"{self.covariate.value}-{self.run:02d}" / f"{self.view:03d}"


@dataclass(frozen=True)
class SilhouetteFrame:
    """A binarized, size-normalized 240x240 silhouette."""

    pixels: np.ndarray
    empty: bool = False

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (FRAME_SIZE, FRAME_SIZE):
            raise ValueError(f"silhouette must be {FRAME_SIZE}x{FRAME_SIZE}, got {px.shape}")
        if px.dtype != np.uint8 or px.max(initial=0) > 1:
            if not np.isin(px, (0, 1)).all():
                raise ValueError("silhouette pixels must be 0 or 1")
            px = px.astype(np.uint8)
        if not self.empty and not px.any():
            raise EmptySilhouette("silhouette has no foreground pixels")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def __array__(self, dtype=None, copy=None):
        return self.pixels if dtype is None else self.pixels.astype(dtype)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class GaitSequence:
    """Temporally ordered binary frames of one walk.

    ``frames`` is a (N, H, W) uint8 stack.  Frames may be raw camera-sized
    silhouettes or normalized 240x240 ones.
    """

    frames: np.ndarray
    subject: str
    covariate: Covariate = Covariate.NORMAL
    view: int = 90
    run: int = 1

    def __post_init__(self):
        fr = np.asarray(self.frames)
        if fr.ndim == 2:
            fr = fr[None]
        if fr.ndim != 3 or len(fr) == 0:
            raise ValueError("a gait sequence needs a non-empty (N, H, W) frame stack")
        if fr.dtype != np.uint8:
            fr = (fr > 0).astype(np.uint8)
        fr.setflags(write=False)
        object.__setattr__(self, "frames", fr)
        object.__setattr__(self, "subject", subject_id(self.subject))
        object.__setattr__(self, "covariate", Covariate.parse(self.covariate))
        object.__setattr__(self, "view", check_view(self.view))

    @property
    def key(self) -> SampleKey:
        return SampleKey(self.subject, self.covariate, self.run, self.view)

    def __len__(self) -> int:
        return len(self.frames)

    def with_frames(self, frames: np.ndarray) -> "GaitSequence":
        return GaitSequence(frames, self.subject, self.covariate, self.view, self.run)


@dataclass(frozen=True)
class SampleRecord:
    key: SampleKey
    path: str | None = None
    n_frames: int | None = None


@dataclass
class DatasetIndex:
    samples: list[SampleRecord] = field(default_factory=list)
    root: str | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rec in self.samples:
            if rec.key in seen:
                raise DatasetError(f"duplicate sample key {rec.key}")
            seen.add(rec.key)
        self.samples.sort(key=lambda r: (r.key.subject, r.key.covariate.value, r.key.run, r.key.view))

    @property
    def subjects(self) -> set[str]:
        return {r.key.subject for r in self.samples}

    @property
    def keys(self) -> list[SampleKey]:
        return [r.key for r in self.samples]

    def __len__(self) -> int:
        return len(self.samples)

    def record(self, key: SampleKey) -> SampleRecord:
        for r in self.samples:
            if r.key == key:
                return r
        raise KeyError(str(key))

    def filter(self, *, view: int | None = None, covariate: Covariate | None = None) -> "DatasetIndex":
        keep = [r for r in self.samples
                if (view is None or r.key.view == view) and (covariate is None or r.key.covariate == covariate)]
        return DatasetIndex(keep, root=self.root, warnings=list(self.warnings))

    def to_dict(self) -> dict:
        return {
            "format_version": INDEX_FORMAT_VERSION,
            "root": self.root,
            "samples": [
                {"subject": r.key.subject, "covariate": r.key.covariate.value, "run": r.key.run,
                 "view": r.key.view, "path": r.path, "n_frames": r.n_frames}
                for r in self.samples
            ],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetIndex":
        if d.get("format_version") != INDEX_FORMAT_VERSION:
            raise DatasetError(f"unsupported index format {d.get('format_version')!r}")
        samples = [
            SampleRecord(SampleKey(s["subject"], Covariate(s["covariate"]), int(s["run"]), int(s["view"])),
                         s.get("path"), s.get("n_frames"))
            for s in d["samples"]
        ]
        return cls(samples, root=d.get("root"), warnings=list(d.get("warnings", [])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "DatasetIndex":
        return cls.from_dict(json.loads(Path(path).read_text()))


_SEQ_DIR = re.compile(r"(nm|bg|cl)-(\d{2})")


def load_dataset(root) -> DatasetIndex:
    """Index a CASIA-B style silhouette tree.

    Malformed directory names and unreadable frames are recorded in
    ``index.warnings``; they never abort the scan.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    samples, warnings = [], []
    for sdir in sorted(p for p in root.iterdir() if p.is_dir()):
        if not sdir.name.isdigit() or len(sdir.name) != 3:
            warnings.append(f"{sdir.name}: not a zero-padded subject directory")
            continue
        for cdir in sorted(p for p in sdir.iterdir() if p.is_dir()):
            m = _SEQ_DIR.fullmatch(cdir.name)
            if not m:
                warnings.append(f"{sdir.name}/{cdir.name}: not a <cov>-<run> directory")
                continue
            for adir in sorted(p for p in cdir.iterdir() if p.is_dir()):
                if not (adir.name.isdigit() and len(adir.name) == 3 and int(adir.name) in VIEW_ANGLES):
                    warnings.append(f"{sdir.name}/{cdir.name}/{adir.name}: bad view angle")
                    continue
                key = SampleKey(sdir.name, Covariate(m.group(1)), int(m.group(2)), int(adir.name))
                frames, bad = _scan_frames(adir)
                warnings.extend(f"{key}: {b}" for b in bad)
                if not frames:
                    warnings.append(f"{key}: no readable frames")
                    continue
                samples.append(SampleRecord(key, str(adir.relative_to(root)), len(frames)))
    for w in warnings:
        log.warning(w)
    return DatasetIndex(samples, root=str(root), warnings=warnings)


def _scan_frames(seq_dir: Path) -> tuple[list[Path], list[str]]:
    good, bad = [], []
    for f in sorted(seq_dir.glob("*.png")):
        if not (f.stem.isdigit() and len(f.stem) == 4):
            bad.append(f"{f.name}: frame name is not zero-padded to 4")
            continue
        try:
            with Image.open(f) as im:
                im.verify()
        except Exception as exc:  # PIL raises a zoo of types here
            bad.append(f"{f.name}: unreadable ({exc.__class__.__name__})")
            continue
        good.append(f)
    return good, bad


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.uint8)


def load_sequence(index: DatasetIndex, key: SampleKey) -> GaitSequence:
    rec = index.record(key)
    seq_dir = Path(index.root or ".") / (rec.path or key.relpath())
    frames, _ = _scan_frames(seq_dir)
    if not frames:
        raise DatasetError(f"{key}: no readable frames")
    stack = np.stack([read_frame(f) for f in frames])
    return GaitSequence(stack, key.subject, key.covariate, key.view, key.run)


def write_sequence(root, seq: GaitSequence) -> Path:
    out = Path(root) / seq.key.relpath()
    out.mkdir(parents=True, exist_ok=True)
    for i, fr in enumerate(seq.frames, start=1):
        Image.fromarray((fr * 255).astype(np.uint8), mode="L").save(out / f"{i:04d}.png")
    return out


def write_dataset(root, sequences: Iterable[GaitSequence]) -> DatasetIndex:
    """Write sequences as a PNG tree plus ``index.json``; returns the index."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for seq in sequences:
        d = write_sequence(root, seq)
        records.append(SampleRecord(seq.key, str(d.relative_to(root)), len(seq)))
    index = DatasetIndex(records, root=str(root))
    index.save(root / "index.json")
    return index


# --- gallery / probe protocol -------------------------------------------------

GENUINE, TYPE1, TYPE2 = "genuine", "type1", "type2"
TRUTHS = (GENUINE, TYPE1, TYPE2)


class ClaimSpec(NamedTuple):
    probe: SampleKey
    claimed: str
    truth: str


@dataclass(frozen=True)
class GalleryProbeSplit:
    gallery: tuple[SampleKey, ...]
    probes: tuple[SampleKey, ...]
    authorized: frozenset[str]
    outsiders: frozenset[str]
    claims: tuple[ClaimSpec, ...]
    seed: int | None = None

    def __post_init__(self):
        if set(self.gallery) & set(self.probes):
            raise ValueError("gallery and probes overlap")
        if self.authorized & self.outsiders:
            raise ValueError("authorized and outsider sets overlap")

    def claims_by_truth(self, truth: str) -> list[ClaimSpec]:
        return [c for c in self.claims if c.truth == truth]

    def write_claims(self, path) -> None:
        lines = ["probe_key,claimed_id,truth"]
        lines += [f"{c.probe},{c.claimed},{c.truth}" for c in self.claims]
        Path(path).write_text("\n".join(lines) + "\n")


def read_claims(path) -> list[ClaimSpec]:
    import csv

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            truth = row["truth"].strip()
            if truth not in TRUTHS:
                raise ValueError(f"bad truth label {truth!r}")
            out.append(ClaimSpec(SampleKey.parse(row["probe_key"]), subject_id(row["claimed_id"].strip()), truth))
    return out


def derangement(items, rng: np.random.Generator) -> list:
    """Random permutation of ``items`` with no fixed point (needs >= 2 items)."""
    items = list(items)
    if len(items) < 2:
        raise ValueError("a derangement needs at least two items")
    while True:
        perm = [items[i] for i in rng.permutation(len(items))]
        if all(a != b for a, b in zip(items, perm)):
            return perm


def split_gallery_probe(index: DatasetIndex, n_authorized: int, seed: int,
                        n_type1: int | None = None) -> GalleryProbeSplit:
    """Gallery/probe split with genuine, type-1 and type-2 claims.

    Gallery is Normal runs 1-4 of the authorized subjects.  Probes are the
    remaining Normal runs plus every Bag and Coat run, for all subjects.

    Type-1 claims (``n_type1``, default ``n_authorized``) pair outsider probes
    with authorized ids round-robin over both shuffled lists, so ids are
    claimed evenly.  Type-2 claims re-label each authorized subject's
    remaining Normal probes with a deranged authorized id.
    """
    rng = np.random.default_rng(seed)
    normal_runs: dict[str, set[int]] = {}
    for k in index.keys:
        if k.covariate is Covariate.NORMAL:
            normal_runs.setdefault(k.subject, set()).add(k.run)
    eligible = sorted(s for s, runs in normal_runs.items() if set(GALLERY_RUNS) <= runs)
    if n_authorized > len(eligible):
        raise DatasetError(f"n_authorized={n_authorized} exceeds the {len(eligible)} subjects "
                           f"with >= {len(GALLERY_RUNS)} normal runs")
    if n_authorized < 1:
        raise DatasetError("n_authorized must be >= 1")
    authorized = sorted(eligible[i] for i in rng.permutation(len(eligible))[:n_authorized])
    auth_set = set(authorized)
    outsiders = sorted(index.subjects - auth_set)

    def is_gallery_run(k: SampleKey) -> bool:
        return k.covariate is Covariate.NORMAL and k.run in GALLERY_RUNS

    gallery = [k for k in index.keys if k.subject in auth_set and is_gallery_run(k)]
    probes = [k for k in index.keys if not is_gallery_run(k)]

    claims = [ClaimSpec(k, k.subject, GENUINE) for k in probes if k.subject in auth_set]

    if len(authorized) >= 2:
        mapping = dict(zip(authorized, derangement(authorized, rng)))
        claims += [ClaimSpec(k, mapping[k.subject], TYPE2) for k in probes
                   if k.subject in auth_set and k.covariate is Covariate.NORMAL]

    outsider_probes = {s: [k for k in probes if k.subject == s] for s in outsiders}
    outsiders_with_probes = [s for s in outsiders if outsider_probes[s]]
    if outsiders_with_probes:
        n1 = n_authorized if n_type1 is None else int(n_type1)
        ids = [authorized[i] for i in rng.permutation(len(authorized))]
        outs = [outsiders_with_probes[i] for i in rng.permutation(len(outsiders_with_probes))]
        for j in range(n1):
            o = outs[j % len(outs)]
            pk = outsider_probes[o]
            claims.append(ClaimSpec(pk[(j // len(outs)) % len(pk)], ids[j % len(ids)], TYPE1))

    return GalleryProbeSplit(tuple(gallery), tuple(probes), frozenset(authorized),
                             frozenset(outsiders), tuple(claims), seed=seed)
