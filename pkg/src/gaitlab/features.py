"""Per-silhouette pose features: chain codes, elliptic Fourier descriptors, RCS.

Chain-code geometry uses x = column and y = -row (y grows upwards), so
direction 0 is east, 2 north, 4 west and 6 south.  Boundary traversal is
clockwise on screen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import GaitError

DEFAULT_HARMONICS = 12

# (dx, dy) per direction code, y up
DIRECTIONS = np.array([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)])
_CODE = {tuple(d): i for i, d in enumerate(DIRECTIONS)}

# Moore neighbourhood in (drow, dcol), clockwise on screen starting west
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}

_EIGHT = np.ones((3, 3), dtype=int)


class DegenerateContour(GaitError):
    pass


@dataclass(frozen=True)
class ChainCode:
    start: tuple[int, int]  # (row, col) of the first boundary pixel
    links: np.ndarray

    def __post_init__(self):
        links = np.asarray(self.links, dtype=np.int64).reshape(-1)
        if links.size and (links.min() < 0 or links.max() > 7):
            raise ValueError("chain links must be in 0..7")
        links.setflags(write=False)
        object.__setattr__(self, "links", links)

    def __len__(self) -> int:
        return len(self.links)

    @property
    def deltas(self) -> np.ndarray:
        return DIRECTIONS[self.links]

    @property
    def is_closed(self) -> bool:
        return len(self.links) > 0 and not self.deltas.sum(axis=0).any()

    def points(self) -> np.ndarray:
        """Vertex (x, y) coordinates, starting at the start pixel (K points)."""
        x0, y0 = self.start[1], -self.start[0]
        steps = np.vstack([[0, 0], np.cumsum(self.deltas, axis=0)[:-1]])
        return steps + [x0, y0]

    def rotated(self, k: int) -> "ChainCode":
        """Same contour traversed from link ``k``."""
        k %= len(self.links)
        new_start = self.points()[k]
        return ChainCode((int(-new_start[1]), int(new_start[0])), np.roll(self.links, -k))


def to_pixels(points) -> np.ndarray:
    """(x, y) chain coordinates back to (row, col)."""
    p = np.asarray(points, dtype=float)
    return np.column_stack([-p[:, 1], p[:, 0]])


def largest_component(img) -> np.ndarray:
    mask = np.asarray(img) > 0
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n <= 1:
        return mask
    sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, n + 1))
    return labels == (int(np.argmax(sizes)) + 1)


def moore_trace(mask) -> list[tuple[int, int]]:
    """Clockwise Moore-neighbour boundary of the component containing the first raster pixel.

    Stops when the (pixel, backtrack) state repeats; the initial state is
    entry from the west, so this includes Jacob's criterion.
    """
    m = np.pad(np.asarray(mask, dtype=bool), 1)
    fg = np.argwhere(m)
    if len(fg) == 0:
        raise DegenerateContour("empty frame")
    start = (int(fg[0][0]), int(fg[0][1]))
    p, b = start, (start[0], start[1] - 1)
    contour = [p]
    seen = {(p, b)}
    limit = 8 * int(m.sum()) + 16
    for _ in range(limit):
        idx = _MOORE_INDEX[(b[0] - p[0], b[1] - p[1])]
        for k in range(1, 9):
            dr, dc = _MOORE[(idx + k) % 8]
            cand = (p[0] + dr, p[1] + dc)
            if m[cand]:
                pr, pc = _MOORE[(idx + k - 1) % 8]
                b = (p[0] + pr, p[1] + pc)
                p = cand
                break
        else:
            raise DegenerateContour("isolated pixel has no boundary to trace")
        if (p, b) in seen:
            break
        seen.add((p, b))
        contour.append(p)
    else:  # pragma: no cover - the state space is finite
        raise DegenerateContour("boundary trace did not close")
    if contour[-1] == start and len(contour) > 1:
        contour.pop()
    return [(r - 1, c - 1) for r, c in contour]


def trace_contour(frame) -> ChainCode:
    """Freeman chain code of the largest 8-connected component's outer boundary."""
    img = np.asarray(frame)
    if not img.any():
        raise DegenerateContour("empty frame")
    comp = largest_component(img)
    pts = moore_trace(comp)
    if len(pts) < 2:
        raise DegenerateContour("contour has fewer than two boundary pixels")
    arr = np.asarray(pts)
    nxt = np.roll(arr, -1, axis=0)
    dxdy = np.column_stack([nxt[:, 1] - arr[:, 1], -(nxt[:, 0] - arr[:, 0])])
    links = [_CODE[(int(dx), int(dy))] for dx, dy in dxdy]
    return ChainCode(pts[0], np.asarray(links))


def link_time(a) -> np.ndarray | float:
    """Traversal time of a link: 1 for even codes, sqrt(2) for odd ones."""
    a = np.asarray(a)
    t = 1 + ((math.sqrt(2) - 1) / 2) * (1 - (-1.0) ** a)
    return float(t) if t.ndim == 0 else t


@dataclass(frozen=True)
class EfdDescriptor:
    harmonics: int
    A0: float
    C0: float
    coeffs: np.ndarray  # (N, 4): a_n, b_n, c_n, d_n
    T: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1, 4)
        if len(c) != self.harmonics:
            raise ValueError("coefficient rows must equal the harmonic count")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def features(self) -> np.ndarray:
        """Flat (4N + 2)-vector: A0, C0, then a_n, b_n, c_n, d_n per harmonic."""
        return np.concatenate([[self.A0, self.C0], self.coeffs.reshape(-1)])

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = np.arange(1, self.harmonics + 1)
        ang = 2 * np.pi * np.outer(t, n) / self.T
        cos, sin = np.cos(ang), np.sin(ang)
        a, b, c, d = self.coeffs.T
        x = self.A0 + cos @ a + sin @ b
        y = self.C0 + cos @ c + sin @ d
        return np.column_stack([x, y])

    def to_dict(self) -> dict:
        return {"harmonics": self.harmonics, "A0": self.A0, "C0": self.C0, "T": self.T,
                "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "EfdDescriptor":
        return cls(int(d["harmonics"]), float(d["A0"]), float(d["C0"]), np.asarray(d["coeffs"]), float(d["T"]))


def efd_coefficients(chain: ChainCode, harmonics: int = DEFAULT_HARMONICS) -> EfdDescriptor:
    """Elliptic Fourier coefficients from the closed-form sums over chain links.

    A0/C0 are returned in absolute chain coordinates (start point added).
    """
    if harmonics < 1:
        raise ValueError("need at least one harmonic")
    if not chain.is_closed:
        raise ValueError("EFD requires a closed chain")
    dxy = chain.deltas.astype(float)
    dt = link_time(chain.links)
    t = np.concatenate([[0.0], np.cumsum(dt)])
    T = t[-1]
    tp, tp1 = t[1:], t[:-1]

    n = np.arange(1, harmonics + 1)[:, None]
    ang_p = 2 * np.pi * n * tp / T
    ang_p1 = 2 * np.pi * n * tp1 / T
    dcos = np.cos(ang_p) - np.cos(ang_p1)
    dsin = np.sin(ang_p) - np.sin(ang_p1)
    scale = T / (2 * n[:, 0] ** 2 * np.pi ** 2)
    rx = dxy[:, 0] / dt
    ry = dxy[:, 1] / dt
    a = scale * (dcos @ rx)
    b = scale * (dsin @ rx)
    c = scale * (dcos @ ry)
    d = scale * (dsin @ ry)

    cum_x = np.concatenate([[0.0], np.cumsum(dxy[:, 0])[:-1]])
    cum_y = np.concatenate([[0.0], np.cumsum(dxy[:, 1])[:-1]])
    xi = cum_x - rx * tp1
    delta = cum_y - ry * tp1
    A0 = np.sum(rx / 2 * (tp ** 2 - tp1 ** 2) + xi * (tp - tp1)) / T
    C0 = np.sum(ry / 2 * (tp ** 2 - tp1 ** 2) + delta * (tp - tp1)) / T
    x0, y0 = chain.start[1], -chain.start[0]
    return EfdDescriptor(harmonics, float(A0 + x0), float(C0 + y0), np.column_stack([a, b, c, d]), float(T))


def efd_reconstruct(desc: EfdDescriptor, samples: int = 300) -> np.ndarray:
    """(samples, 2) points of the truncated series at t uniform in [0, T)."""
    if samples < 3:
        raise ValueError("need at least 3 samples")
    t = np.arange(samples) * desc.T / samples
    return desc.evaluate(t)


def normalize_efd(desc: EfdDescriptor) -> EfdDescriptor:
    """Rotation-, scale- and start-point-normalized coefficients (DC terms zeroed)."""
    a1, b1, c1, d1 = desc.coeffs[0]
    theta = 0.5 * math.atan2(2 * (a1 * b1 + c1 * d1), a1 ** 2 - b1 ** 2 + c1 ** 2 - d1 ** 2)
    out = np.empty_like(desc.coeffs)
    for i, (a, b, c, d) in enumerate(desc.coeffs):
        n = i + 1
        ct, st = math.cos(n * theta), math.sin(n * theta)
        out[i] = [a * ct + b * st, -a * st + b * ct, c * ct + d * st, -c * st + d * ct]
    psi = math.atan2(out[0, 2], out[0, 0])
    scale = math.hypot(out[0, 0], out[0, 2])
    cp, sp = math.cos(psi), math.sin(psi)
    rot = np.array([[cp, sp], [-sp, cp]])
    for i in range(len(out)):
        m = rot @ np.array([[out[i, 0], out[i, 1]], [out[i, 2], out[i, 3]]])
        out[i] = m.reshape(-1)
    if scale > 0:
        out /= scale
    return EfdDescriptor(desc.harmonics, 0.0, 0.0, out, desc.T)


def efd_features(frame, harmonics: int = DEFAULT_HARMONICS, normalize: bool = False) -> np.ndarray:
    desc = efd_coefficients(trace_contour(frame), harmonics)
    if normalize:
        desc = normalize_efd(desc)
    return desc.features()


def rcs_features(frame) -> np.ndarray:
    """Row sums followed by column sums of a binary frame."""
    img = np.asarray(frame)
    return np.concatenate([img.sum(axis=1), img.sum(axis=0)]).astype(float)
