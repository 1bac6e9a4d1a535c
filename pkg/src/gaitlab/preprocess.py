"""Background subtraction, silhouette normalization and gait-cycle detection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage, signal

from .core import FRAME_SIZE, EmptySilhouette, GaitError, SilhouetteFrame

KNEE_ROW = FRAME_SIZE // 2


class IncompleteCycle(GaitError):
    """Fewer than three troughs in the oscillation signal."""


@dataclass(frozen=True)
class CycleRange:
    start: int
    mid: int
    end: int

    def __post_init__(self):
        if not self.start < self.mid < self.end:
            raise ValueError(f"cycle troughs out of order: {self}")

    @property
    def length(self) -> int:
        return self.end - self.start

    def slice(self) -> slice:
        return slice(self.start, self.end)


def background_subtract(frame, background, blur_sigma: float = 1.0, threshold: float = 30) -> np.ndarray:
    """Binary foreground mask: ``|blur(frame) - blur(background)| > threshold``."""
    f = np.asarray(frame, dtype=float)
    b = np.asarray(background, dtype=float)
    if f.shape != b.shape:
        raise ValueError(f"frame {f.shape} and background {b.shape} differ in size")
    if f.size == 0:
        raise ValueError("empty frame")
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be >= 0")
    if blur_sigma > 0:
        f = ndimage.gaussian_filter(f, blur_sigma, mode="nearest")
        b = ndimage.gaussian_filter(b, blur_sigma, mode="nearest")
    return (np.abs(f - b) > threshold).astype(np.uint8)


def normalize_silhouette(image) -> SilhouetteFrame:
    """Crop to the foreground box, scale its height to 240 and center the centroid column.

    Aspect ratio is preserved; anything wider than the canvas after centering
    is clipped.
    """
    img = np.asarray(image) > 0
    rows = np.flatnonzero(img.any(axis=1))
    if rows.size == 0:
        raise EmptySilhouette("cannot normalize an empty silhouette")
    cols = np.flatnonzero(img.any(axis=0))
    crop = img[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    h, w = crop.shape
    if h == FRAME_SIZE:
        scaled = crop
    else:
        s = FRAME_SIZE / h
        new_w = max(1, int(round(w * s)))
        im = Image.fromarray(crop.astype(np.uint8) * 255, mode="L")
        scaled = np.asarray(im.resize((new_w, FRAME_SIZE), Image.BILINEAR)) >= 128
        if not scaled.any():
            scaled = np.asarray(im.resize((new_w, FRAME_SIZE), Image.NEAREST)) >= 128
    cx = np.nonzero(scaled)[1].mean()
    offset = int(round(FRAME_SIZE / 2 - cx))
    out = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=np.uint8)
    src0 = max(0, -offset)
    dst0 = max(0, offset)
    n = min(scaled.shape[1] - src0, FRAME_SIZE - dst0)
    if n > 0:
        out[:, dst0:dst0 + n] = scaled[:, src0:src0 + n]
    if not out.any():
        raise EmptySilhouette("silhouette vanished during normalization")
    return SilhouetteFrame(out)


def normalize_sequence(frames) -> np.ndarray:
    """Normalize each frame; empty frames are dropped."""
    out = []
    for fr in frames:
        try:
            out.append(normalize_silhouette(fr).pixels)
        except EmptySilhouette:
            continue
    if not out:
        raise EmptySilhouette("every frame of the sequence is empty")
    return np.stack(out)


def lower_limb_signal(frames) -> np.ndarray:
    """Foreground count below the knee row (rows 120..239) for each frame."""
    stack = np.asarray(frames)
    if stack.ndim == 2:
        stack = stack[None]
    if len(stack) == 0:
        raise ValueError("no frames")
    return stack[:, KNEE_ROW:, :].reshape(len(stack), -1).sum(axis=1).astype(float)


def smooth_signal(values, window: int = 11, polyorder: int = 3) -> np.ndarray:
    """Savitzky-Golay smoothing with mirror boundaries."""
    v = np.asarray(values, dtype=float)
    if window % 2 != 1 or window < 1:
        raise ValueError("window must be a positive odd count")
    if polyorder >= window:
        raise ValueError("polyorder must be less than window")
    if window > len(v):
        raise ValueError(f"window {window} longer than signal ({len(v)})")
    return signal.savgol_filter(v, window, polyorder, mode="mirror")


def _local_minima(v: np.ndarray, endpoint_tol: float = 0.1) -> np.ndarray:
    """Strict minima of the mirror-extended signal.

    Mirror smoothing flattens every endpoint, so an endpoint minimum is kept
    only if it lies within ``endpoint_tol`` of the value range above the
    lowest interior minimum; otherwise it is just the start of a rise.
    """
    padded = np.concatenate([[v[1]], v, [v[-2]]])
    inner = padded[1:-1]
    mins = np.flatnonzero((inner < padded[:-2]) & (inner < padded[2:]))
    interior = mins[(mins > 0) & (mins < len(v) - 1)]
    if interior.size == 0:
        return mins
    level = v[interior].min() + endpoint_tol * (v.max() - v.min())
    return np.asarray([m for m in mins if 0 < m < len(v) - 1 or v[m] <= level], dtype=int)


def find_troughs(smoothed, gap_fraction: float = 0.4, depth: float = 0.5) -> np.ndarray:
    """Observable troughs: strict local minima in the lower part of the signal range.

    Minima above ``min + depth * range`` are ripples on a crest and are
    ignored.  Minima closer than ``gap_fraction`` times the median
    inter-minimum distance are merged, keeping the lower one.
    """
    v = np.asarray(smoothed, dtype=float)
    if len(v) < 3:
        return np.array([], dtype=int)
    mins = _local_minima(v)
    mins = mins[v[mins] <= v.min() + depth * (v.max() - v.min())]
    if len(mins) < 2:
        return mins
    gap = gap_fraction * np.median(np.diff(mins))
    kept = [int(mins[0])]
    for m in mins[1:]:
        if m - kept[-1] >= gap:
            kept.append(int(m))
        elif v[m] < v[kept[-1]]:
            kept[-1] = int(m)
    return np.asarray(kept, dtype=int)


def detect_gait_cycle(smoothed, gap_fraction: float = 0.4) -> CycleRange:
    troughs = find_troughs(smoothed, gap_fraction)
    if len(troughs) < 3:
        raise IncompleteCycle(f"found {len(troughs)} troughs, need 3")
    return CycleRange(*map(int, troughs[:3]))


def cycle_frames(frames, window: int = 11, polyorder: int = 3, fallback: bool = True):
    """Frames of the first detected cycle of a normalized stack.

    Returns ``(frames, cycle)``; ``cycle`` is None when the whole sequence was
    used because no complete cycle was found (and ``fallback`` allows it).
    """
    stack = np.asarray(frames)
    sig = lower_limb_signal(stack)
    try:
        w = min(window, len(sig) if len(sig) % 2 else len(sig) - 1)
        if w <= polyorder:
            raise IncompleteCycle("sequence too short to smooth")
        cyc = detect_gait_cycle(smooth_signal(sig, w, polyorder))
    except IncompleteCycle:
        if not fallback:
            raise
        return stack, None
    return stack[cyc.slice()], cyc
