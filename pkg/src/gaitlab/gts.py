"""Genetic template segmentation: GA search over template masks.

A 28-bit chromosome encodes three 8-bit split points and four inclusion
bits.  Rows [0, sH) form the head band H, rows [sF, 240) the foot band F,
and the rows in between are split at column sM into L (left) and R (right).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .classify import mgbayes_fit, mgbayes_predict
from .core import FRAME_SIZE, Covariate, thread_count
from .subspace import DEFAULT_SHRINKAGE, SingularScatterWarning, SubspaceError, lda_fit, lda_transform

CHROMOSOME_BITS = 28
_EPS = 1e-9


@dataclass(frozen=True)
class Bounds:
    sH: tuple[int, int] = (0, 120)
    sM: tuple[int, int] = (0, 240)
    sF: tuple[int, int] = (120, 240)

    def __post_init__(self):
        for name in ("sH", "sM", "sF"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi <= FRAME_SIZE:
                raise ValueError(f"bad bounds for {name}: {(lo, hi)}")


DEFAULT_BOUNDS = Bounds()


@dataclass(frozen=True, order=True)
class MaskSpec:
    sH: int
    sM: int
    sF: int
    wH: int = 1
    wL: int = 1
    wR: int = 1
    wF: int = 1

    def __post_init__(self):
        if not 0 <= self.sH <= self.sF <= FRAME_SIZE:
            raise ValueError(f"need 0 <= sH <= sF <= {FRAME_SIZE}, got sH={self.sH}, sF={self.sF}")
        if not 0 <= self.sM <= FRAME_SIZE:
            raise ValueError(f"sM out of range: {self.sM}")
        for w in self.weights:
            if w not in (0, 1):
                raise ValueError("inclusion bits must be 0 or 1")

    @property
    def weights(self) -> tuple[int, int, int, int]:
        return (self.wH, self.wL, self.wR, self.wF)

    @property
    def area(self) -> int:
        n = FRAME_SIZE
        mid = self.sF - self.sH
        return (self.wH * self.sH * n + self.wF * (n - self.sF) * n
                + self.wL * mid * self.sM + self.wR * mid * (n - self.sM))

    def to_dict(self) -> dict:
        return {"sH": self.sH, "sM": self.sM, "sF": self.sF, "wH": self.wH, "wL": self.wL,
                "wR": self.wR, "wF": self.wF}

    @classmethod
    def from_dict(cls, d: dict) -> "MaskSpec":
        return cls(*(int(d[k]) for k in ("sH", "sM", "sF", "wH", "wL", "wR", "wF")))


def decode_value(d: int, lo: int, hi: int) -> int:
    """Row/column for an 8-bit value: floor(lo + (hi - lo) * d / 255)."""
    return int(math.floor(lo + (hi - lo) * d / 255 + _EPS))


def encode_value(s: int, lo: int, hi: int) -> int:
    """Smallest 8-bit value decoding to ``s`` (or to the closest reachable value)."""
    decoded = np.array([decode_value(d, lo, hi) for d in range(256)])
    hits = np.flatnonzero(decoded == s)
    if hits.size:
        return int(hits[0])
    return int(np.argmin(np.abs(decoded - s)))


def _bits_to_int(bits) -> int:
    return int("".join(str(int(b)) for b in bits), 2)


def _int_to_bits(value: int, n: int = 8) -> list[int]:
    return [int(c) for c in format(value, f"0{n}b")]


def as_bits(chromosome) -> np.ndarray:
    if isinstance(chromosome, str):
        chromosome = [int(c) for c in chromosome.strip()]
    bits = np.asarray(chromosome, dtype=np.uint8).reshape(-1)
    if bits.size != CHROMOSOME_BITS or bits.max(initial=0) > 1:
        raise ValueError(f"a chromosome is exactly {CHROMOSOME_BITS} bits")
    return bits


def decode_chromosome(chromosome, bounds: Bounds = DEFAULT_BOUNDS) -> MaskSpec:
    bits = as_bits(chromosome)
    sH = decode_value(_bits_to_int(bits[0:8]), *bounds.sH)
    sM = decode_value(_bits_to_int(bits[8:16]), *bounds.sM)
    sF = decode_value(_bits_to_int(bits[16:24]), *bounds.sF)
    sH = min(sH, sF)
    return MaskSpec(sH, sM, sF, *(int(b) for b in bits[24:28]))


def encode_chromosome(spec: MaskSpec, bounds: Bounds = DEFAULT_BOUNDS) -> np.ndarray:
    bits = (_int_to_bits(encode_value(spec.sH, *bounds.sH)) + _int_to_bits(encode_value(spec.sM, *bounds.sM))
            + _int_to_bits(encode_value(spec.sF, *bounds.sF)) + list(spec.weights))
    return np.asarray(bits, dtype=np.uint8)


def bits_to_str(bits) -> str:
    return "".join(str(int(b)) for b in as_bits(bits))


# region labels for render_mask / region_map
H, L, R, F = 0, 1, 2, 3


def region_map(spec: MaskSpec) -> np.ndarray:
    """Region label (H=0, L=1, R=2, F=3) of every pixel."""
    n = FRAME_SIZE
    out = np.empty((n, n), dtype=np.uint8)
    out[: spec.sH] = H
    out[spec.sF:] = F
    out[spec.sH:spec.sF, : spec.sM] = L
    out[spec.sH:spec.sF, spec.sM:] = R
    return out


def render_mask(spec: MaskSpec) -> np.ndarray:
    return np.asarray(spec.weights, dtype=np.uint8)[region_map(spec)]


@dataclass(frozen=True)
class FitnessWeights:
    normal: float
    bag: float
    coat: float

    def __post_init__(self):
        if min(self.normal, self.bag, self.coat) < 0:
            raise ValueError("fitness weights must be >= 0")

    @classmethod
    def parse(cls, name: str) -> "FitnessWeights":
        try:
            return WEIGHT_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown weight preset {name!r}; choose {', '.join(WEIGHT_PRESETS)}") from None

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.normal, self.bag, self.coat)


WEIGHT_PRESETS = {
    "half-sixth-third": FitnessWeights(1 / 2, 1 / 6, 1 / 3),
    "equal": FitnessWeights(1.0, 1.0, 1.0),
}


def fitness_from_ccr(ccr_normal: float, ccr_bag: float, ccr_coat: float, weights: FitnessWeights) -> float:
    """F = (wA * CCR_A + wB * CCR_B + wC * CCR_C) ** 2."""
    return float((weights.normal * ccr_normal + weights.bag * ccr_bag + weights.coat * ccr_coat) ** 2)


class TuningSet:
    """Gallery and per-covariate probe templates with a fast masked-recognition evaluator.

    Masked inner products are assembled from per-row Gram prefix sums, so a
    mask only costs one explicit product (its smaller mid-band region).  PCA
    is then done on the centered gallery Gram matrix, which gives the same
    subspace as PCA on the masked pixels.
    """

    def __init__(self, gallery, gallery_ids, probes: dict, probe_ids: dict, retention: float = 0.99,
                 shrinkage: float = DEFAULT_SHRINKAGE):
        gallery = np.asarray(gallery, dtype=float)
        if gallery.ndim != 3 or gallery.shape[1:] != (FRAME_SIZE, FRAME_SIZE):
            raise ValueError("gallery must be a stack of 240x240 templates")
        self.covariates = [Covariate.parse(c) for c in probes]
        self.gallery_ids = np.asarray(gallery_ids)
        self.probe_ids = {Covariate.parse(c): np.asarray(v) for c, v in probe_ids.items()}
        self.retention = retention
        self.shrinkage = shrinkage
        stacks = [gallery] + [np.asarray(probes[c], dtype=float) for c in probes]
        self.data = np.concatenate(stacks)
        self.n_gallery = len(gallery)
        self.slices = {}
        start = self.n_gallery
        for c, s in zip(self.covariates, stacks[1:]):
            self.slices[c] = slice(start, start + len(s))
            start += len(s)
        n, g = len(self.data), self.n_gallery
        # only inner products against gallery samples are ever needed
        rows = np.einsum("irc,jrc->rij", self.data, self.data[:g], optimize=True)
        self._prefix = np.concatenate([np.zeros((1, n, g)), np.cumsum(rows, axis=0)])

    @classmethod
    def from_planted(cls, planted, **kw) -> "TuningSet":
        return cls(planted.gallery, planted.gallery_ids, planted.probes, planted.probe_ids, **kw)

    def _band(self, r0: int, r1: int) -> np.ndarray:
        return self._prefix[r1] - self._prefix[r0]

    def gram(self, spec: MaskSpec) -> np.ndarray:
        """Masked inner products of every sample with every gallery sample, (n, n_gallery)."""
        n = FRAME_SIZE
        K = np.zeros_like(self._prefix[0])
        if spec.wH and spec.sH:
            K += self._band(0, spec.sH)
        if spec.wF and spec.sF < n:
            K += self._band(spec.sF, n)
        if (spec.wL or spec.wR) and spec.sF > spec.sH:
            mid = self._band(spec.sH, spec.sF)
            if spec.wL and spec.wR:
                K += mid
            else:
                left_small = spec.sM <= n - spec.sM
                block = (self.data[:, spec.sH:spec.sF, : spec.sM] if left_small
                         else self.data[:, spec.sH:spec.sF, spec.sM:])
                flat = block.reshape(len(block), -1)
                part = flat @ flat[: self.n_gallery].T
                if spec.wL:
                    K += part if left_small else mid - part
                else:
                    K += mid - part if left_small else part
        return K

    def project(self, K: np.ndarray) -> np.ndarray | None:
        """Kernel-PCA coordinates of every sample at the configured retention (None if degenerate)."""
        g = self.n_gallery
        Kgg = K[:g, :g]
        col = Kgg.mean(axis=0)
        tot = col.mean()
        Kc = Kgg - col[None, :] - col[:, None] + tot
        w, U = np.linalg.eigh(Kc)
        w, U = w[::-1], U[:, ::-1]
        if w[0] <= 0:
            return None
        rank = int(np.sum(w > w[0] * max(g, FRAME_SIZE * FRAME_SIZE) * np.finfo(float).eps))
        ratio = np.clip(w[:rank], 0, None) / np.clip(w[:rank], 0, None).sum()
        if self.retention >= 1:
            k = rank
        else:
            k = min(int(np.searchsorted(np.cumsum(ratio), self.retention - 1e-12) + 1), rank)
        Kx = K[:, :g]
        Kxc = Kx - Kx.mean(axis=1, keepdims=True) - col[None, :] + tot
        return Kxc @ (U[:, :k] / np.sqrt(w[:k]))

    def ccr(self, spec: MaskSpec) -> dict[Covariate, float]:
        """Correct classification rate per probe covariate for a masked CDA + Bayes recognizer."""
        if not any(spec.weights) or spec.area == 0:
            return {c: 0.0 for c in self.covariates}
        Z = self.project(self.gram(spec))
        if Z is None:
            return {c: 0.0 for c in self.covariates}
        g = self.n_gallery
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularScatterWarning)
            try:
                lda = lda_fit(Z[:g], self.gallery_ids, self.shrinkage)
                P = lda_transform(lda, Z)
                bayes = mgbayes_fit(P[:g], self.gallery_ids, shrinkage=self.shrinkage)
            except SubspaceError:
                return {c: 0.0 for c in self.covariates}
            pred = mgbayes_predict(bayes, P[g:])
        out = {}
        for c in self.covariates:
            sl = self.slices[c]
            out[c] = float(np.mean(pred[sl.start - g:sl.stop - g] == self.probe_ids[c]))
        return out

    def fitness(self, spec: MaskSpec, weights: FitnessWeights) -> float:
        rates = self.ccr(spec)
        return fitness_from_ccr(rates.get(Covariate.NORMAL, 0.0), rates.get(Covariate.BAG, 0.0),
                                rates.get(Covariate.COAT, 0.0), weights)


def gts_fitness(chromosome, tuning_set: TuningSet, weights: FitnessWeights,
                bounds: Bounds = DEFAULT_BOUNDS) -> float:
    spec = chromosome if isinstance(chromosome, MaskSpec) else decode_chromosome(chromosome, bounds)
    return tuning_set.fitness(spec, weights)


@dataclass(frozen=True)
class GaParams:
    population: int = 20
    generations: int = 15
    crossover: float = 0.6
    mutation: float = 0.03
    elitism: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("need at least one generation")
        if not (0 <= self.crossover <= 1 and 0 <= self.mutation <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be smaller than the population")


@dataclass
class GaResult:
    best: np.ndarray
    spec: MaskSpec
    fitness: float
    trace: list[float]  # best fitness seen up to each generation
    generation_best: list[float]
    lookups: int
    computed: int
    history: list[list[tuple[str, float]]] = field(default_factory=list)


class FitnessCache:
    """Memoized fitness keyed by decoded mask; counts lookups and real evaluations."""

    def __init__(self, fn: Callable[[MaskSpec], float]):
        self.fn = fn
        self.values: dict[MaskSpec, float] = {}
        self.lookups = 0
        self.computed = 0

    def fill(self, specs, workers: int = 1) -> None:
        todo = list(dict.fromkeys(s for s in specs if s not in self.values))
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(self.fn, todo))
        else:
            results = [self.fn(s) for s in todo]
        self.values.update(zip(todo, results))
        self.computed += len(todo)

    def __call__(self, spec: MaskSpec) -> float:
        self.lookups += 1
        if spec not in self.values:
            self.fill([spec])
        return self.values[spec]


def _rank_key(fitness: float, spec: MaskSpec):
    # higher fitness first, then smaller masked-in area
    return (-fitness, spec.area)


def _roulette(rng: np.random.Generator, fitness: np.ndarray) -> int:
    total = fitness.sum()
    if total <= 0:
        return int(rng.integers(len(fitness)))
    return int(np.searchsorted(np.cumsum(fitness), rng.uniform(0, total), side="right").clip(0, len(fitness) - 1))


def ga_optimize(fitness: Callable[[MaskSpec], float], params: GaParams = GaParams(),
                bounds: Bounds = DEFAULT_BOUNDS, workers: int | None = None) -> GaResult:
    """Elitist generational GA with roulette selection, uniform crossover and bit-flip mutation.

    ``fitness`` maps a decoded MaskSpec to a score; evaluations are cached
    by MaskSpec.  Each generation draws from its own child RNG stream.
    """
    workers = thread_count() if workers is None else workers
    cache = fitness if isinstance(fitness, FitnessCache) else FitnessCache(fitness)
    rng0 = np.random.default_rng([params.seed, 0])
    pop = rng0.integers(0, 2, size=(params.population, CHROMOSOME_BITS), dtype=np.uint8)
    best_bits, best_spec, best_fit = None, None, -np.inf
    trace, gen_best, history = [], [], []
    for gen in range(params.generations):
        specs = [decode_chromosome(b, bounds) for b in pop]
        cache.fill(specs, workers)
        fit = np.array([cache(s) for s in specs])
        order = sorted(range(len(pop)), key=lambda i: (_rank_key(fit[i], specs[i]), i))
        top = order[0]
        gen_best.append(float(fit[top]))
        if best_spec is None or _rank_key(fit[top], specs[top]) < _rank_key(best_fit, best_spec):
            best_bits, best_spec, best_fit = pop[top].copy(), specs[top], float(fit[top])
        trace.append(best_fit)
        history.append([(bits_to_str(pop[i]), float(fit[i])) for i in range(len(pop))])
        if gen == params.generations - 1:
            break
        rng = np.random.default_rng([params.seed, gen + 1])
        children = [pop[i].copy() for i in order[: params.elitism]]
        while len(children) < params.population:
            a = pop[_roulette(rng, fit)]
            b = pop[_roulette(rng, fit)]
            if rng.random() < params.crossover:
                swap = rng.random(CHROMOSOME_BITS) < 0.5
                c1, c2 = np.where(swap, b, a), np.where(swap, a, b)
            else:
                c1, c2 = a.copy(), b.copy()
            for c in (c1, c2):
                flip = rng.random(CHROMOSOME_BITS) < params.mutation
                c[flip] ^= 1
                if len(children) < params.population:
                    children.append(c.astype(np.uint8))
        pop = np.array(children)
    return GaResult(best_bits, best_spec, best_fit, trace, gen_best, cache.lookups, cache.computed, history)


def boundary_grid(lo: int, hi: int) -> list[int]:
    """Every row/column reachable by the 8-bit decode of ``(lo, hi)``."""
    return sorted({decode_value(d, lo, hi) for d in range(256)})


def sequential_refine(spec: MaskSpec, fitness: Callable[[MaskSpec], float],
                      bounds: Bounds = DEFAULT_BOUNDS) -> MaskSpec:
    """Coordinate ascent: line-search sF with sH fixed, then sH with the new sF.

    A candidate replaces the current spec only if it ranks strictly better
    (higher fitness, or equal fitness with a smaller masked-in area).
    """
    best, best_fit = spec, fitness(spec)
    for name in ("sF", "sH"):
        for value in boundary_grid(*getattr(bounds, name)):
            if name == "sF" and value < best.sH or name == "sH" and value > best.sF:
                continue
            cand = replace(best, **{name: value})
            f = fitness(cand)
            if _rank_key(f, cand) < _rank_key(best_fit, best):
                best, best_fit = cand, f
    return best

