import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaitlab.gts import MaskSpec, render_mask
from gaitlab.templates import (GaitTemplate, TemplateKind, apply_mask, compute_aei, compute_gei, compute_geni,
                               compute_template, export_template, flatten, import_template, unflatten)

from oracles import brute_aei, brute_gei, brute_geni


def _frames(rng, n=10):
    return rng.integers(0, 2, (n, 240, 240)).astype(np.uint8)


# --- GEI ---

def test_gei_identical_frames(rng):
    f = _frames(rng, 1)[0]
    assert np.array_equal(compute_gei([f] * 6).values, f)


def test_gei_ones_and_zeros():
    assert np.all(compute_gei([np.ones((240, 240)), np.zeros((240, 240))]).values == 0.5)


def test_gei_matches_accumulation(rng):
    fr = _frames(rng)
    assert np.array_equal(compute_gei(fr).values, brute_gei(fr))


# --- AEI ---

def test_aei_two_identical_frames(rng):
    f = _frames(rng, 1)[0]
    assert np.array_equal(compute_aei([f, f]).values, f / 2)


def test_aei_all_zero():
    assert not compute_aei(np.zeros((5, 240, 240), np.uint8)).values.any()


def test_aei_checkerboard():
    r, c = np.indices((240, 240))
    a = ((r + c) % 2).astype(np.uint8)
    fr = np.array([a, 1 - a, a, 1 - a, a])
    assert np.array_equal(compute_aei(fr).values, brute_aei(fr))


# --- GEnI ---

def test_geni_always_white_is_zero():
    assert not compute_geni(np.ones((4, 240, 240), np.uint8)).values.any()


def test_geni_half_is_exactly_one():
    fr = np.zeros((2, 240, 240), np.uint8)
    fr[0] = 1
    assert np.all(compute_geni(fr).values == 1.0)


def test_geni_quarter():
    fr = np.zeros((4, 240, 240), np.uint8)
    fr[0] = 1
    expected = -0.25 * math.log2(0.25) - 0.75 * math.log2(0.75)
    assert compute_geni(fr).values[0, 0] == pytest.approx(0.811278, abs=1e-6)
    assert compute_geni(fr).values[0, 0] == pytest.approx(expected, abs=1e-15)


def test_geni_matches_brute_force(rng):
    fr = _frames(rng, 7)
    assert np.max(np.abs(compute_geni(fr).values - brute_geni(fr))) <= 1e-12


# --- masks, flatten, io ---

def test_all_ones_mask_is_identity(rng):
    t = compute_gei(_frames(rng, 3))
    assert np.array_equal(apply_mask(t, np.ones((240, 240))).values, t.values)


def test_all_zeros_mask(rng):
    t = compute_gei(_frames(rng, 3))
    assert not apply_mask(t, np.zeros((240, 240))).values.any()


def test_head_feet_mask_bands(rng):
    t = compute_gei(_frames(rng, 4))
    spec = MaskSpec(50, 100, 180, 1, 0, 0, 1)
    out = apply_mask(t, render_mask(spec)).values
    assert not out[50:180].any()
    assert np.array_equal(out[:50], t.values[:50])
    assert np.array_equal(out[180:], t.values[180:])


def test_mask_shape_mismatch(rng):
    with pytest.raises(ValueError):
        apply_mask(compute_gei(_frames(rng, 2)), np.ones((10, 10)))


def test_flatten_zero():
    assert not flatten(GaitTemplate("gei", np.zeros((240, 240)))).any()


def test_flatten_row_major():
    v = np.zeros((240, 240))
    v[0, 1] = 1
    f = flatten(GaitTemplate("gei", v))
    assert f.shape == (57600,) and f[1] == 1 and f.sum() == 1


@given(arrays(np.float64, (240, 240), elements=st.floats(0, 1)))
def test_flatten_round_trip(v):
    t = GaitTemplate(TemplateKind.AEI, v)
    back = unflatten(flatten(t), TemplateKind.AEI)
    assert np.array_equal(back.values, t.values)


def test_template_value_range():
    with pytest.raises(ValueError):
        GaitTemplate("gei", np.full((240, 240), 1.5))


def test_unknown_kind():
    with pytest.raises(ValueError):
        compute_template(np.zeros((2, 240, 240)), "mei")


def test_empty_cycle():
    with pytest.raises(ValueError):
        compute_gei(np.zeros((0, 240, 240)))


def test_png_round_trip(tmp_path, rng):
    t = compute_geni(_frames(rng, 5))
    export_template(t, tmp_path / "t.png")
    back = import_template(tmp_path / "t.png")
    assert back.kind is TemplateKind.GENI
    assert np.max(np.abs(back.values - t.values)) <= 0.5 / 255 + 1e-12


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_template_ranges(n, seed):
    fr = np.random.default_rng(seed).integers(0, 2, (n, 240, 240)).astype(np.uint8)
    for kind in TemplateKind:
        v = compute_template(fr, kind).values
        assert v.min() >= 0 and v.max() <= 1
