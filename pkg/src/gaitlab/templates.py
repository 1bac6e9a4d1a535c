"""Gait template collation (GEI, GEnI, AEI) and masking."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FRAME_SIZE

N_FEATURES = FRAME_SIZE * FRAME_SIZE


class TemplateKind(str, enum.Enum):
    GEI = "gei"
    GENI = "geni"
    AEI = "aei"

    @classmethod
    def parse(cls, value) -> "TemplateKind":
        if isinstance(value, TemplateKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown template kind {value!r}; choose gei, geni or aei") from None


@dataclass(frozen=True)
class GaitTemplate:
    kind: TemplateKind
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (FRAME_SIZE, FRAME_SIZE):
            raise ValueError(f"template must be {FRAME_SIZE}x{FRAME_SIZE}, got {v.shape}")
        if v.min() < 0 or v.max() > 1:
            raise ValueError("template values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", TemplateKind.parse(self.kind))


def _stack(frames) -> np.ndarray:
    stack = np.asarray([np.asarray(f) for f in frames]) if not isinstance(frames, np.ndarray) else frames
    if stack.ndim == 2:
        stack = stack[None]
    if len(stack) == 0:
        raise ValueError("cannot collate an empty cycle")
    return stack


def compute_gei(frames) -> GaitTemplate:
    stack = _stack(frames)
    return GaitTemplate(TemplateKind.GEI, stack.mean(axis=0, dtype=float))


def compute_aei(frames) -> GaitTemplate:
    """Mean absolute frame difference, with an all-black frame before the first."""
    stack = _stack(frames).astype(np.int16)
    prev = np.concatenate([np.zeros_like(stack[:1]), stack[:-1]])
    return GaitTemplate(TemplateKind.AEI, np.abs(stack - prev).mean(axis=0, dtype=float))


def compute_geni(frames) -> GaitTemplate:
    """Per-pixel binary entropy (base 2) of the foreground frequency."""
    z = _stack(frames).mean(axis=0, dtype=float)
    out = np.zeros_like(z)
    m = (z > 0) & (z < 1)
    zm = z[m]
    out[m] = -zm * np.log2(zm) - (1 - zm) * np.log2(1 - zm)
    return GaitTemplate(TemplateKind.GENI, np.clip(out, 0.0, 1.0))


COLLATORS = {TemplateKind.GEI: compute_gei, TemplateKind.GENI: compute_geni, TemplateKind.AEI: compute_aei}


def compute_template(frames, kind) -> GaitTemplate:
    return COLLATORS[TemplateKind.parse(kind)](frames)


def apply_mask(template: GaitTemplate, mask) -> GaitTemplate:
    m = np.asarray(mask)
    if m.shape != template.values.shape:
        raise ValueError(f"mask {m.shape} does not match template {template.values.shape}")
    return GaitTemplate(template.kind, template.values * m)


def flatten(template) -> np.ndarray:
    values = template.values if isinstance(template, GaitTemplate) else np.asarray(template, dtype=float)
    return values.reshape(-1).copy()


def unflatten(vector, kind=TemplateKind.GEI) -> GaitTemplate:
    return GaitTemplate(kind, np.asarray(vector, dtype=float).reshape(FRAME_SIZE, FRAME_SIZE))


def export_template(template: GaitTemplate, path) -> None:
    """8-bit grayscale PNG (round(255 v)) plus a ``.json`` sidecar with the kind."""
    path = Path(path)
    img = np.round(template.values * 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)
    path.with_suffix(".json").write_text(json.dumps({"kind": template.kind.value}))


def import_template(path) -> GaitTemplate:
    path = Path(path)
    with Image.open(path) as im:
        values = np.asarray(im.convert("L"), dtype=float) / 255.0
    sidecar = path.with_suffix(".json")
    kind = json.loads(sidecar.read_text())["kind"] if sidecar.exists() else TemplateKind.GEI
    return GaitTemplate(kind, values)
