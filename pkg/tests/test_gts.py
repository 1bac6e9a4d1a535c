import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaitlab.core import Covariate
from gaitlab.gts import (CHROMOSOME_BITS, DEFAULT_BOUNDS, WEIGHT_PRESETS, Bounds, FitnessCache, FitnessWeights,
                         GaParams, MaskSpec, TuningSet, as_bits, decode_chromosome, decode_value,
                         encode_chromosome, encode_value, fitness_from_ccr, ga_optimize, gts_fitness,
                         region_map, render_mask, sequential_refine)
from gaitlab.recognition import fit_recognizer
from gaitlab.subspace import SingularScatterWarning
from gaitlab.synth import generate_planted_templates

HST = WEIGHT_PRESETS["half-sixth-third"]


@pytest.fixture(scope="module")
def planted():
    return generate_planted_templates(n_subjects=8, n_gallery=3, n_probes=2, seed=1)


@pytest.fixture(scope="module")
def tuning(planted):
    return TuningSet.from_planted(planted)


# --- decoding ---

def test_decode_endpoints():
    assert decode_value(0, 0, 240) == 0
    assert decode_value(255, 0, 240) == 240
    assert decode_value(0, 120, 240) == 120
    assert decode_value(255, 120, 240) == 240


def test_decode_midpoint_floors():
    # 240 * 128 / 255 = 120.47
    assert decode_value(128, 0, 240) == 120


def test_chromosome_layout():
    bits = [0] * 8 + [1] * 8 + [0] * 8 + [1, 0, 0, 1]
    spec = decode_chromosome(bits)
    assert spec == MaskSpec(0, 240, 120, 1, 0, 0, 1)


def test_chromosome_length_checked():
    with pytest.raises(ValueError):
        as_bits([0] * 27)
    assert as_bits("0" * CHROMOSOME_BITS).sum() == 0


def test_head_never_below_foot():
    bits = [1] * 8 + [0] * 8 + [0] * 8 + [1] * 4
    spec = decode_chromosome(bits)  # sH decodes to 120, sF to 120
    assert spec.sH <= spec.sF


reachable = st.builds(lambda h, m, f, w: MaskSpec(min(decode_value(h, 0, 120), decode_value(f, 120, 240)),
                                                  decode_value(m, 0, 240), decode_value(f, 120, 240), *w),
                      st.integers(0, 255), st.integers(0, 255), st.integers(0, 255),
                      st.tuples(*[st.integers(0, 1)] * 4))


@given(reachable)
def test_encode_decode_round_trip(spec):
    assert decode_chromosome(encode_chromosome(spec)) == spec


@given(st.integers(0, 255), st.integers(0, 120), st.integers(120, 240))
def test_encode_value_inverts_decode(d, lo, hi):
    s = decode_value(d, lo, hi)
    assert decode_value(encode_value(s, lo, hi), lo, hi) == s


def test_bad_bounds():
    with pytest.raises(ValueError):
        Bounds(sH=(10, 5))


# --- masks ---

def test_all_weights_one_gives_full_mask():
    assert render_mask(MaskSpec(40, 100, 200)).all()


def test_head_and_feet_only():
    spec = MaskSpec(40, 100, 200, 1, 0, 0, 1)
    m = render_mask(spec)
    assert m[:40].all() and m[200:].all()
    assert not m[40:200].any()


@given(reachable)
def test_mask_area_arithmetic(spec):
    n = 240
    expected = (spec.wH * spec.sH * n + spec.wF * (n - spec.sF) * n
                + (spec.sF - spec.sH) * (spec.wL * spec.sM + spec.wR * (n - spec.sM)))
    assert render_mask(spec).sum() == expected == spec.area


@given(reachable)
def test_regions_partition_the_frame(spec):
    counts = np.bincount(region_map(spec).ravel(), minlength=4)
    assert counts.sum() == 240 * 240
    mid = spec.sF - spec.sH
    assert counts.tolist() == [spec.sH * 240, mid * spec.sM, mid * (240 - spec.sM), (240 - spec.sF) * 240]


def test_mask_spec_validation():
    with pytest.raises(ValueError):
        MaskSpec(150, 10, 100)
    with pytest.raises(ValueError):
        MaskSpec(10, 10, 100, 2)


# --- fitness ---

def test_perfect_rates_give_one():
    assert fitness_from_ccr(1, 1, 1, HST) == pytest.approx(1.0)


def test_table_row_fitness():
    assert fitness_from_ccr(0.98, 0.955, 0.93, HST) == pytest.approx(0.9200, abs=1e-4)


def test_equal_preset_and_validation():
    assert WEIGHT_PRESETS["equal"].as_tuple() == (1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        FitnessWeights.parse("thirds")
    with pytest.raises(ValueError):
        FitnessWeights(-1, 0, 0)


def test_zero_mask_zero_fitness(tuning):
    assert gts_fitness(MaskSpec(60, 100, 180, 0, 0, 0, 0), tuning, HST) == 0.0
    assert gts_fitness(MaskSpec(0, 100, 240, 1, 0, 0, 1), tuning, HST) == 0.0


def test_fast_path_matches_pixel_pipeline(planted, tuning):
    rng = np.random.default_rng(8)
    specs = [MaskSpec(48, 120, 176, 1, 0, 0, 1), MaskSpec(0, 0, 240), MaskSpec(30, 90, 200, 1, 1, 0, 0)]
    specs += [decode_chromosome(rng.integers(0, 2, CHROMOSOME_BITS)) for _ in range(4)]
    for spec in specs:
        if spec.area == 0:
            continue
        m = render_mask(spec).reshape(-1).astype(float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularScatterWarning)
            rec = fit_recognizer(planted.gallery.reshape(len(planted.gallery), -1) * m, planted.gallery_ids)
        fast = tuning.ccr(spec)
        for cov in Covariate:
            X = planted.probes[cov].reshape(len(planted.probes[cov]), -1) * m
            slow = float(np.mean(rec.predict(X) == planted.probe_ids[cov]))
            assert fast[cov] == pytest.approx(slow, abs=1.0 / len(X) + 1e-12), (spec, cov)


# --- GA ---

def _toy_fitness(spec):
    # smooth landscape with a known optimum at sH=48, sF=176, head+feet only
    score = 1.0 - ((spec.sH - 48) ** 2 + (spec.sF - 176) ** 2) / 30000
    return max(score, 0.0) * (1.0 if spec.weights == (1, 0, 0, 1) else 0.8)


def test_trace_is_monotone():
    res = ga_optimize(_toy_fitness, GaParams(population=12, generations=10, seed=3))
    assert all(b >= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.trace[-1] == res.fitness


def test_same_seed_same_result():
    a = ga_optimize(_toy_fitness, GaParams(population=10, generations=6, seed=5))
    b = ga_optimize(_toy_fitness, GaParams(population=10, generations=6, seed=5))
    assert np.array_equal(a.best, b.best) and a.trace == b.trace


def test_cache_counts():
    cache = FitnessCache(_toy_fitness)
    res = ga_optimize(cache, GaParams(population=10, generations=5, seed=0))
    assert res.lookups == 50
    assert cache.computed == len(cache.values) <= 50


@pytest.mark.parametrize("kw", [dict(population=1), dict(generations=0), dict(crossover=1.5),
                                dict(elitism=10, population=10)])
def test_ga_params_validation(kw):
    with pytest.raises(ValueError):
        GaParams(**kw)


# --- refinement ---

def test_refine_fixed_point():
    once = sequential_refine(MaskSpec(10, 100, 220, 1, 0, 0, 1), _toy_fitness)
    assert sequential_refine(once, _toy_fitness) == once


def test_refine_never_worse():
    rng = np.random.default_rng(2)
    for _ in range(10):
        start = decode_chromosome(rng.integers(0, 2, CHROMOSOME_BITS))
        assert _toy_fitness(sequential_refine(start, _toy_fitness)) >= _toy_fitness(start)


def test_refine_on_real_fitness(tuning):
    f = FitnessCache(lambda s: tuning.fitness(s, HST))
    start = MaskSpec(20, 120, 220, 1, 0, 0, 1)
    out = sequential_refine(start, f, DEFAULT_BOUNDS)
    assert f(out) >= f(start)
