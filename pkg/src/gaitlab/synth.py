"""Synthetic walkers: articulated stick bodies rasterized into silhouettes.

Identity lives in head geometry and the leg-swing pattern (amplitude, knee
bend, inter-leg phase), gender shifts torso/hip widths, head size and
stride, and covariates only touch the mid-body rows (a coat widens and
lengthens the torso, a bag adds a blob at the hip).

Besides rendered silhouettes this module builds two template/feature level
corpora used for desk-scale checks: a planted-signal tuning set for template
segmentation and Gaussian identity features for authentication.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image, ImageDraw

from .core import (FRAME_SIZE, Covariate, DatasetError, DatasetIndex, GaitSequence, SampleKey, SampleRecord,
                   check_view, subject_id)
from .preprocess import normalize_sequence

MALE, FEMALE = "male", "female"
GENDERS = (MALE, FEMALE)

# camera model for raw (un-normalized) renders
FOCAL = 800.0
CANVAS = (480, 640)  # rows, cols
CAMERA_DISTANCE = 6.0
CAMERA_HEIGHT = 1.0
BODY_HEIGHT = 1.7
PATH_HALF_LENGTH = 0.9
THIGH_RATIO = 2.4
KNEE_RATIO = 1.6


@dataclass(frozen=True)
class BodyParams:
    """Stick-body shape in body-height units (1.0 = head top to sole)."""
    gender: str
    head_rx: float
    head_ry: float
    head_dx: float
    torso_w: float
    hip_w: float
    leg_w: float
    far_leg_w: float
    arm_w: float
    thigh: float
    shin: float
    amp: float  # hip swing amplitude (radians)
    knee: float  # peak knee flexion (radians)
    leg_offset: float  # far-leg phase lag beyond pi
    far_knee: float  # far-leg knee flexion relative to the near leg
    arm_amp: float
    lean: float


def sample_body(rng: np.random.Generator, gender: str) -> BodyParams:
    male = gender == MALE
    if gender not in GENDERS:
        raise ValueError(f"gender must be one of {GENDERS}")
    u = rng.uniform
    return BodyParams(
        gender=gender,
        head_rx=u(0.050, 0.066) + (0.004 if male else 0.0),
        head_ry=u(0.058, 0.074) + (0.003 if male else 0.0),
        head_dx=u(-0.018, 0.018),
        torso_w=u(0.17, 0.21) if male else u(0.13, 0.17),
        hip_w=u(0.13, 0.16) if male else u(0.16, 0.19),
        leg_w=u(0.045, 0.060),
        far_leg_w=u(0.050, 0.075),
        arm_w=u(0.035, 0.045) if male else u(0.028, 0.036),
        thigh=u(0.235, 0.255),
        shin=u(0.225, 0.245),
        amp=u(0.36, 0.46) if male else u(0.28, 0.37),
        knee=u(0.45, 0.85),
        leg_offset=u(-0.45, 0.45),
        far_knee=u(0.5, 0.8),
        arm_amp=u(0.20, 0.45),
        lean=u(-0.03, 0.06),
    )


def jitter_body(body: BodyParams, rng: np.random.Generator, scale: float = 1.0) -> BodyParams:
    """Run-to-run variation of one subject's gait."""
    n = rng.normal
    return replace(body, amp=body.amp * (1 + n(0, 0.04 * scale)), knee=body.knee * (1 + n(0, 0.05 * scale)),
                   leg_offset=body.leg_offset + n(0, 0.03 * scale), arm_amp=body.arm_amp * (1 + n(0, 0.1 * scale)),
                   lean=body.lean + n(0, 0.005 * scale))


def _limb(draw, pts, width, scale):
    pts = [(float(x), float(y)) for x, y in pts]
    w = max(1, int(round(width * scale)))
    draw.line(pts, fill=255, width=w, joint="curve")
    r = w / 2
    for x, y in pts:
        draw.ellipse([x - r, y - r, x + r, y + r], fill=255)


def _taper(draw, p0, p1, w0, w1, scale):
    """Filled trapezoid from p0 (width w0) to p1 (width w1), with round ends."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    norm = math.hypot(dx, dy) or 1.0
    nx, ny = -dy / norm, dx / norm
    h0, h1 = w0 * scale / 2, w1 * scale / 2
    draw.polygon([(p0[0] + nx * h0, p0[1] + ny * h0), (p1[0] + nx * h1, p1[1] + ny * h1),
                  (p1[0] - nx * h1, p1[1] - ny * h1), (p0[0] - nx * h0, p0[1] - ny * h0)], fill=255)
    for (x, y), r in ((p0, h0), (p1, h1)):
        draw.ellipse([x - r, y - r, x + r, y + r], fill=255)


def _leg_points(hip, phase, body: BodyParams):
    """Hip, knee, ankle and toe in body units (x forward, y up)."""
    a = body.amp * math.sin(phase)
    b = body.knee * max(0.0, math.cos(phase)) ** 1.5
    knee = (hip[0] + body.thigh * math.sin(a), hip[1] - body.thigh * math.cos(a))
    ankle = (knee[0] + body.shin * math.sin(a - b), knee[1] - body.shin * math.cos(a - b))
    toe = (ankle[0] + 0.06, ankle[1] - 0.01)
    return [hip, knee, ankle, toe]


def render_pose(body: BodyParams, phase: float, covariate: Covariate = Covariate.NORMAL,
                height_px: float = 240.0, hscale: float = 1.0, jitter=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Rasterize one pose; the lowest point of the body sits on the bottom row.

    ``hscale`` squeezes the figure horizontally (oblique views) and
    ``jitter`` perturbs (hip angle, knee angle, arm angle) for frame noise.
    """
    covariate = Covariate.parse(covariate)
    s = float(height_px)
    hip_h = body.thigh + body.shin + 0.02
    top = 1.0
    shoulder_h = top - 2 * body.head_ry - 0.03
    jb = replace(body, amp=body.amp + jitter[0], knee=max(0.0, body.knee + jitter[1]))
    near = _leg_points((0.0, hip_h), phase, jb)
    far = _leg_points((0.0, hip_h), phase + math.pi + body.leg_offset, replace(jb, knee=jb.knee * body.far_knee))
    low = min(p[1] for p in near + far) - 0.012
    # every y below is measured from the lowest point, in body units
    margin = 0.12
    width_units = 1.3
    W = int(math.ceil(width_units * s * max(hscale, 0.05))) + 8
    H = int(math.ceil((top - low + 2 * margin) * s))
    img = Image.new("L", (W, H), 0)
    draw = ImageDraw.Draw(img)
    cx = W / 2

    def px(p):
        return cx + p[0] * s * hscale, (top + margin - p[1]) * s

    sw, hw = body.torso_w, body.hip_w
    hem = hip_h
    if covariate is Covariate.COAT:
        sw, hw, hem = sw + 0.05, hw + 0.07, hip_h - 0.13
    lean = body.lean
    torso = [(-sw / 2 + lean, shoulder_h), (sw / 2 + lean, shoulder_h), (hw / 2, hem), (-hw / 2, hem)]

    arm_len = 0.27
    sh = (lean, shoulder_h - 0.02)
    arm_w = body.arm_w + (0.015 if covariate is Covariate.COAT else 0.0)
    for sign, leg, lw in ((-1, far, body.far_leg_w), (1, near, body.leg_w)):
        ang = sign * -(body.arm_amp + jitter[2]) * math.sin(phase)
        elbow = (sh[0] + 0.5 * arm_len * math.sin(ang), sh[1] - 0.5 * arm_len * math.cos(ang))
        hand = (elbow[0] + 0.5 * arm_len * math.sin(ang + 0.25), elbow[1] - 0.5 * arm_len * math.cos(ang + 0.25))
        _limb(draw, [px(sh), px(elbow), px(hand)], arm_w * hscale ** 0.5, s)
        w = lw * max(hscale, 0.5)
        _taper(draw, px(leg[0]), px(leg[1]), THIGH_RATIO * w, KNEE_RATIO * w, s)
        _limb(draw, [px(p) for p in leg[1:]], w, s)
    draw.polygon([px(p) for p in torso], fill=255)
    _limb(draw, [px((lean * 0.8, shoulder_h + 0.01)), px((lean * 0.9, top - 2 * body.head_ry))], 0.05 * hscale, s)
    hc = (body.head_dx + lean, top - body.head_ry)
    x0, y0 = px((hc[0] - body.head_rx, hc[1] + body.head_ry))
    x1, y1 = px((hc[0] + body.head_rx, hc[1] - body.head_ry))
    draw.ellipse([x0, y0, x1, y1], fill=255)
    if covariate is Covariate.BAG:
        bx, by = hw / 2 + 0.03, hip_h + 0.05
        x0, y0 = px((bx - 0.06, by + 0.085))
        x1, y1 = px((bx + 0.06, by - 0.085))
        draw.ellipse([x0, y0, x1, y1], fill=255)
        _limb(draw, [px((sw / 2 - 0.02, shoulder_h)), px((bx, by + 0.08))], 0.015, s)

    arr = (np.asarray(img) > 127).astype(np.uint8)
    # drop the margin rows so the sole sits on the last row
    bottom = int(round((top + margin - low) * s))
    return arr[: bottom + 1]


def render_frontal_pose(body: BodyParams, phase: float, height_px: float = 240.0) -> np.ndarray:
    """Rasterize one pose seen from the front or back; legs swing in depth, so
    they only foreshorten.  The sole sits on the bottom row.
    """
    s = float(height_px)
    hip_h = body.thigh + body.shin + 0.02
    top = 1.0
    shoulder_h = top - 2 * body.head_ry - 0.03
    margin = 0.12
    W = int(math.ceil(0.8 * s)) + 8
    H = int(math.ceil((top + 2 * margin) * s))
    img = Image.new("L", (W, H), 0)
    draw = ImageDraw.Draw(img)
    cx = W / 2
    heights = []
    for p in (phase, phase + math.pi + body.leg_offset):
        a = body.amp * math.sin(p)
        b = body.knee * max(0.0, math.cos(p)) ** 1.5
        heights.append(body.thigh * math.cos(a) + body.shin * math.cos(a - b))
    low = hip_h - max(heights) - 0.012

    def px(x, y):
        return cx + x * s, (top + margin - y) * s

    sw, hw = body.torso_w, body.hip_w
    for side, h in zip((-1, 1), heights):
        x = side * hw / 4
        _limb(draw, [px(x, hip_h), px(x, hip_h - h)], body.leg_w * 1.4, s)
        ax = side * (sw / 2 + body.arm_w / 2)
        _limb(draw, [px(ax, shoulder_h - 0.02), px(ax * 1.05, shoulder_h - 0.29)], body.arm_w, s)
    draw.polygon([px(-sw / 2, shoulder_h), px(sw / 2, shoulder_h), px(hw / 2, hip_h), px(-hw / 2, hip_h)],
                 fill=255)
    _limb(draw, [px(0, shoulder_h + 0.01), px(0, top - 2 * body.head_ry)], 0.05, s)
    x0, y0 = px(-body.head_rx, top)
    x1, y1 = px(body.head_rx, top - 2 * body.head_ry)
    draw.ellipse([x0, y0, x1, y1], fill=255)
    arr = (np.asarray(img) > 127).astype(np.uint8)
    return arr[: int(round((top + margin - low) * s)) + 1]


def render_walk(body: BodyParams, n_frames: int, period: float, covariate=Covariate.NORMAL,
                phase0: float = 0.0, hscale: float = 1.0, noise: float = 0.0,
                rng: np.random.Generator | None = None) -> list[np.ndarray]:
    out = []
    for i in range(n_frames):
        phase = phase0 + 2 * math.pi * i / period
        j = (0.0, 0.0, 0.0)
        if noise and rng is not None:
            j = tuple(rng.normal(0, noise, 3))
        out.append(render_pose(body, phase, covariate, 260.0, hscale, j))
    return out


def view_hscale(view: int) -> float:
    return max(abs(math.sin(math.radians(view))), 0.3)


@dataclass(frozen=True)
class SynthSpec:
    subjects: int = 4
    frames: int = 60
    period: float = 30.0
    views: tuple[int, ...] = (90,)
    runs: int | dict = field(default_factory=lambda: {"nm": 6, "bg": 2, "cl": 2})
    noise: float = 0.02
    female_fraction: float = 0.5
    bodies: tuple[BodyParams, ...] | None = None  # explicit per-subject shapes override sampling

    def runs_per_covariate(self) -> dict[Covariate, int]:
        if isinstance(self.runs, int):
            return {c: self.runs for c in Covariate}
        return {Covariate.parse(k): int(v) for k, v in self.runs.items()}


@dataclass
class SyntheticDataset:
    index: DatasetIndex
    sequences: dict[SampleKey, GaitSequence]
    genders: dict[str, str]
    bodies: dict[str, BodyParams]

    def sequence(self, key: SampleKey) -> GaitSequence:
        return self.sequences[key]


def _child(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng([seed, *path])


def generate_synthetic_dataset(spec: SynthSpec, seed: int) -> SyntheticDataset:
    """Normalized synthetic sequences for every (subject, covariate, run, view).

    Each sequence draws from its own child RNG stream, so the output is a
    pure function of (spec, seed).
    """
    if spec.subjects < 1:
        raise DatasetError("synthetic dataset needs at least one subject")
    if spec.frames < 1 or spec.period <= 0:
        raise DatasetError("frames and period must be positive")
    views = [check_view(v) for v in spec.views]
    runs = spec.runs_per_covariate()
    n_female = int(round(spec.female_fraction * spec.subjects))
    genders_order = [FEMALE if i < n_female else MALE for i in range(spec.subjects)]
    perm = _child(seed, 0).permutation(spec.subjects)
    sequences: dict[SampleKey, GaitSequence] = {}
    genders: dict[str, str] = {}
    bodies: dict[str, BodyParams] = {}
    for i in range(spec.subjects):
        sid = subject_id(i + 1)
        if spec.bodies is not None:
            body = spec.bodies[i]
        else:
            body = sample_body(_child(seed, 1, i), genders_order[perm[i]])
        genders[sid] = body.gender
        bodies[sid] = body
        for ci, cov in enumerate(Covariate):
            for run in range(1, runs.get(cov, 0) + 1):
                for view in views:
                    rng = _child(seed, 2, i, ci, run, view)
                    b = jitter_body(body, rng)
                    raw = render_walk(b, spec.frames, spec.period, cov, rng.uniform(0, 2 * math.pi),
                                      view_hscale(view), spec.noise, rng)
                    if view > 90:
                        raw = [r[:, ::-1] for r in raw]
                    frames = normalize_sequence(raw)
                    key = SampleKey(sid, cov, run, view)
                    sequences[key] = GaitSequence(frames, sid, cov, view, run)
    records = tuple(SampleRecord(k, None, len(sequences[k])) for k in sorted(sequences))
    return SyntheticDataset(DatasetIndex(list(records)), sequences, genders, bodies)


def generate_gender_corpus(n_subjects: int = 40, sequences_per_subject: int = 2, frames: int = 60,
                           period: float = 30.0, seed: int = 0) -> SyntheticDataset:
    spec = SynthSpec(subjects=n_subjects, frames=frames, period=period,
                     runs={"nm": sequences_per_subject}, noise=0.03)
    return generate_synthetic_dataset(spec, seed)


# raw camera renders for view estimation

@dataclass(frozen=True)
class CameraJitter:
    distance: float = CAMERA_DISTANCE
    height: float = CAMERA_HEIGHT
    half_length: float = PATH_HALF_LENGTH


def sample_camera_jitter(rng: np.random.Generator, rel: float = 0.05) -> CameraJitter:
    return CameraJitter(CAMERA_DISTANCE * (1 + rng.uniform(-rel, rel)),
                        CAMERA_HEIGHT * (1 + rng.uniform(-rel, rel)),
                        PATH_HALF_LENGTH * (1 + rng.uniform(-rel, rel)))


def render_camera_walk(body: BodyParams, view: int, n_frames: int = 8, period: float = 30.0,
                       cam: CameraJitter = CameraJitter(), phase0: float = 0.0) -> np.ndarray:
    """Raw (un-normalized) frames of a walker crossing a pinhole camera's view.

    The walker moves along a straight line at ``view`` degrees to the optical
    axis: 0 heads straight at the camera, 90 crosses it side-on and 180 walks
    straight away.  Returns an (n, 480, 640) binary stack.
    """
    view = check_view(view)
    th = math.radians(view)
    rows, cols = CANVAS
    cy, cx = rows / 2, cols / 2
    out = np.zeros((n_frames, rows, cols), dtype=np.uint8)
    hs = view_hscale(view)
    for i in range(n_frames):
        s = -cam.half_length + 2 * cam.half_length * i / max(n_frames - 1, 1)
        X = s * math.sin(th)
        Z = cam.distance - s * math.cos(th)
        height_px = FOCAL * BODY_HEIGHT / Z
        foot_y = cy + FOCAL * cam.height / Z
        x_c = cx + FOCAL * X / Z
        phase = phase0 + 2 * math.pi * i / period
        if view in (0, 180):
            fig = render_frontal_pose(body, phase, height_px)
        else:
            fig = render_pose(body, phase, Covariate.NORMAL, height_px, hs)
        h, w = fig.shape
        r1 = int(round(foot_y)) + 1
        r0 = r1 - h
        c0 = int(round(x_c - w / 2))
        rr0, cc0 = max(r0, 0), max(c0, 0)
        rr1, cc1 = min(r1, rows), min(c0 + w, cols)
        if rr1 > rr0 and cc1 > cc0:
            out[i, rr0:rr1, cc0:cc1] |= fig[rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0]
    return out


@dataclass
class ViewCorpus:
    sequences: list[np.ndarray]  # raw (n, 480, 640) stacks
    angles: np.ndarray


def generate_view_corpus(angles=tuple(range(18, 163, 18)), per_angle: int = 30,
                         n_frames: int = 6, seed: int = 0, jitter: float = 0.05) -> ViewCorpus:
    seqs, labels = [], []
    for ai, angle in enumerate(angles):
        for j in range(per_angle):
            rng = _child(seed, 3, ai, j)
            body = sample_body(rng, GENDERS[j % 2])
            cam = sample_camera_jitter(rng, jitter)
            seqs.append(render_camera_walk(body, angle, n_frames, 30.0, cam, rng.uniform(0, 2 * math.pi)))
            labels.append(angle)
    return ViewCorpus(seqs, np.asarray(labels))


CORONAL_HALF_LENGTH = 0.55  # about 20% growth over the pass at the default distance


def generate_coronal_corpus(per_direction: int = 50, n_frames: int = 6, seed: int = 0,
                            jitter: float = 0.05) -> ViewCorpus:
    """Straight approach (0) and recede (180) walks."""
    seqs, labels = [], []
    for ai, angle in enumerate((0, 180)):
        for j in range(per_direction):
            rng = _child(seed, 4, ai, j)
            body = sample_body(rng, GENDERS[j % 2])
            cam = sample_camera_jitter(rng, jitter)
            cam = replace(cam, half_length=CORONAL_HALF_LENGTH * cam.half_length / PATH_HALF_LENGTH)
            seqs.append(render_camera_walk(body, angle, n_frames, 30.0, cam, rng.uniform(0, 2 * math.pi)))
            labels.append(angle)
    return ViewCorpus(seqs, np.asarray(labels))


# planted-signal templates for template segmentation

PLANTED_HEAD = 48
PLANTED_FOOT = 176


@dataclass(frozen=True)
class PlantedTemplates:
    gallery: np.ndarray  # (n_g, 240, 240)
    gallery_ids: np.ndarray
    probes: dict[Covariate, np.ndarray]
    probe_ids: dict[Covariate, np.ndarray]
    head_boundary: int
    foot_boundary: int


def _smooth_fields(rng, count, sigma):
    from scipy import ndimage

    out = np.empty((count, FRAME_SIZE, FRAME_SIZE))
    for i in range(count):
        f = ndimage.gaussian_filter(rng.normal(size=(FRAME_SIZE, FRAME_SIZE)), sigma, mode="wrap")
        out[i] = f / (f.std() + 1e-12)
    return out


def generate_planted_templates(n_subjects: int = 20, n_gallery: int = 4, n_probes: int = 3, seed: int = 0,
                               head: int = PLANTED_HEAD, foot: int = PLANTED_FOOT,
                               identity: float = 0.0045, within: float = 0.02, covariate_noise: float = 0.12,
                               n_identity: int = 16, n_within: int = 24, pixel_noise: float = 0.003,
                               band: int = 16) -> PlantedTemplates:
    """GEI-like templates whose identity signal sits just inside the head and foot bands.

    Identity occupies rows [head - band, head) and [foot, foot + band).

    Every sample varies along a shared set of smooth within-class fields.
    Bag and Coat probes add a much larger excursion along the same fields,
    restricted to the mid rows, so mid-row pixels look stable in the gallery
    but move under a covariate change.
    """
    rng = _child(seed, 4)
    n = FRAME_SIZE
    rows = np.arange(n)[:, None]
    cols = np.arange(n)[None, :]
    body = 0.15 + 0.7 * np.clip(1.2 - np.abs(cols - 120) / 40.0, 0, 1) * np.ones((n, 1))
    id_rows = (((rows >= head - band) & (rows < head)) | ((rows >= foot) & (rows < foot + band))).astype(float)
    mid = ((rows >= head) & (rows < foot)).astype(float)
    id_basis = _smooth_fields(rng, n_identity, 4.0) * id_rows
    w_basis = _smooth_fields(rng, n_within, 4.0)
    codes = rng.normal(size=(n_subjects, n_identity))
    means = body + identity * np.tensordot(codes, id_basis, axes=1)

    def sample(s: int, cov_scale: float):
        x = means[s] + within * np.tensordot(rng.normal(size=n_within), w_basis, axes=1)
        x = x + pixel_noise * rng.normal(size=(n, n))
        if cov_scale:
            x = x + cov_scale * np.tensordot(rng.normal(size=n_within), w_basis, axes=1) * mid
        return np.clip(x, 0, 1)

    gal, gal_ids = [], []
    for s in range(n_subjects):
        for _ in range(n_gallery):
            gal.append(sample(s, 0.0))
            gal_ids.append(s)
    probes, probe_ids = {}, {}
    for cov, scale in ((Covariate.NORMAL, 0.0), (Covariate.BAG, covariate_noise), (Covariate.COAT, covariate_noise)):
        probes[cov] = np.array([sample(s, scale) for s in range(n_subjects) for _ in range(n_probes)])
        probe_ids[cov] = np.repeat(np.arange(n_subjects), n_probes)
    return PlantedTemplates(np.array(gal), np.array(gal_ids), probes, probe_ids, head, foot)


# Gaussian identity features for authentication experiments

@dataclass(frozen=True)
class IdentityCorpus:
    features: np.ndarray
    subjects: list[str]
    keys: list[SampleKey]

    @property
    def index(self) -> DatasetIndex:
        return DatasetIndex([SampleRecord(k, None, 1) for k in self.keys])

    def lookup(self) -> dict[SampleKey, np.ndarray]:
        return dict(zip(self.keys, self.features))


def generate_identity_features(n_subjects: int, dim: int = 16, seed: int = 0, separation: float = 1.0,
                               within: float = 0.7, covariate_shift: float = 0.35,
                               runs=None) -> IdentityCorpus:
    """Feature vectors drawn around per-subject means, with covariate offsets.

    Bag and Coat samples get an extra per-sample shift along a shared random
    direction set, so they are harder to recognize than Normal probes.
    """
    if n_subjects < 1:
        raise DatasetError("need at least one subject")
    rng = _child(seed, 5)
    runs = runs or {Covariate.NORMAL: 6, Covariate.BAG: 2, Covariate.COAT: 2}
    means = separation * rng.normal(size=(n_subjects, dim))
    cov_dirs = {c: rng.normal(size=(4, dim)) for c in (Covariate.BAG, Covariate.COAT)}
    feats, keys = [], []
    for i in range(n_subjects):
        sid = subject_id(i + 1)
        for cov in Covariate:
            for run in range(1, runs.get(cov, 0) + 1):
                x = means[i] + within * rng.normal(size=dim)
                if cov in cov_dirs:
                    x = x + covariate_shift * (rng.normal(size=4) @ cov_dirs[cov]) / 2
                feats.append(x)
                keys.append(SampleKey(sid, cov, run, 90))
    return IdentityCorpus(np.array(feats), [subject_id(i + 1) for i in range(n_subjects)], keys)
