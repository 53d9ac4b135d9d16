"""
Tests for the DCT high-pass and wavelet coring residue filters
"""

import math

import numpy as np
import pytest
import pywt
from pydantic import ValidationError

import config
from models import DctFilterSpec, FilterKind, Frame
from services.errors import InvalidParam
from services.filters import (
    build_hp_mask,
    dct2,
    dct_lowpass,
    dct_residue,
    extract_residue,
    idct2,
    wavelet_residue,
)


def _naive_dct2(x):
    rows, cols = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for k in range(rows):
        for l in range(cols):
            ak = math.sqrt((1 if k == 0 else 2) / rows)
            al = math.sqrt((1 if l == 0 else 2) / cols)
            total = 0.0
            for m in range(rows):
                for n in range(cols):
                    total += (x[m, n]
                              * math.cos(math.pi * (2 * m + 1) * k / (2 * rows))
                              * math.cos(math.pi * (2 * n + 1) * l / (2 * cols)))
            out[k, l] = ak * al * total
    return out


def _frame(data, bit_depth=10):
    return Frame(bit_depth=bit_depth, data=np.asarray(data, dtype=np.int64))


# ==================== TRANSFORMS ====================

def test_one_point_dct_is_identity():
    assert dct2(np.array([[7.25]]))[0, 0] == pytest.approx(7.25, abs=1e-12)


def test_constant_plane_has_only_dc():
    coeffs = dct2(np.full((8, 8), 3.0))
    assert coeffs[0, 0] == pytest.approx(3.0 * 8, abs=1e-9)
    rest = coeffs.copy()
    rest[0, 0] = 0.0
    assert np.max(np.abs(rest)) < 1e-9


@pytest.mark.parametrize("shape", [(4, 4), (5, 7), (8, 3)])
def test_dct_matches_naive_evaluation(shape):
    x = np.random.default_rng(sum(shape)).uniform(0, 1000, size=shape)
    assert np.max(np.abs(dct2(x) - _naive_dct2(x))) < 1e-9


@pytest.mark.parametrize("shape", [(1, 1), (3, 17), (64, 64), (256, 256)])
def test_idct_inverts_dct(shape):
    x = np.random.default_rng(shape[0]).uniform(0, 2 ** 16, size=shape)
    assert np.max(np.abs(idct2(dct2(x)) - x)) < 1e-9


def test_parseval():
    x = np.random.default_rng(5).normal(size=(48, 40))
    assert np.sum(dct2(x) ** 2) == pytest.approx(np.sum(x ** 2), rel=1e-6)


# ==================== GAIN MASK ====================

def test_gain_is_zero_at_dc():
    assert build_hp_mask(DctFilterSpec(), 16, 9)[0, 0] == 0.0


def test_gain_shape_is_height_by_width():
    assert build_hp_mask(DctFilterSpec(), 5, 3).shape == (3, 5)


def test_half_gain_at_cutoff():
    # bin u=150 of a 1136-wide plane sits exactly on the default cutoff
    gain = build_hp_mask(DctFilterSpec(), 1136, 1136)
    assert gain[0, 150] == pytest.approx(0.5, abs=1e-12)
    assert gain[150, 0] == pytest.approx(0.5, abs=1e-12)


def test_gain_at_twice_cutoff():
    gain = build_hp_mask(DctFilterSpec(), 1136, 1136)
    assert gain[0, 300] == pytest.approx(1 - 2 ** -4, abs=1e-12)


def test_gain_monotone_in_radius():
    width, height = 40, 24
    gain = build_hp_mask(DctFilterSpec(cutoff_radians=0.3), width, height)
    u = np.arange(width) * math.pi / width
    v = np.arange(height) * math.pi / height
    radius = np.sqrt(v[:, None] ** 2 + u[None, :] ** 2).ravel()
    ordered = gain.ravel()[np.argsort(radius, kind="stable")]
    assert np.all(np.diff(ordered) >= -1e-15)
    assert np.all((gain >= 0) & (gain <= 1))


def test_gain_mask_is_read_only():
    gain = build_hp_mask(DctFilterSpec(), 8, 8)
    with pytest.raises(ValueError):
        gain[0, 0] = 1.0


@pytest.mark.parametrize("cutoff", [0.0, -0.1, math.pi, 4.0])
def test_cutoff_must_lie_inside_band(cutoff):
    with pytest.raises(ValidationError):
        DctFilterSpec(cutoff_radians=cutoff)


def test_mask_rejects_empty_plane():
    with pytest.raises(InvalidParam):
        build_hp_mask(DctFilterSpec(), 0, 4)


# ==================== DCT RESIDUE ====================

def test_dct_residue_annihilates_constants():
    residue = dct_residue(_frame(np.full((32, 24), 500)))
    assert np.max(np.abs(residue.data)) < 1e-9


def test_dct_residue_is_linear():
    rng = np.random.default_rng(11)
    a = rng.integers(0, 500, size=(32, 32))
    b = rng.integers(0, 500, size=(32, 32))
    combined = dct_residue(_frame(a + b)).data
    separate = dct_residue(_frame(a)).data + dct_residue(_frame(b)).data
    assert np.max(np.abs(combined - separate)) < 1e-9


def test_dct_residue_is_image_minus_lowpass():
    frame = _frame(np.random.default_rng(12).integers(0, 1024, size=(32, 32)))
    expected = frame.as_float() - dct_lowpass(frame)
    assert np.max(np.abs(dct_residue(frame).data - expected)) < 1e-9


def test_dct_residue_is_deterministic():
    frame = _frame(np.random.default_rng(13).integers(0, 1024, size=(20, 30)))
    assert np.array_equal(dct_residue(frame).data, dct_residue(frame).data)


# ==================== WAVELET RESIDUE ====================

def test_wavelet_residue_annihilates_constants():
    residue = wavelet_residue(_frame(np.full((64, 64), 100), bit_depth=8))
    assert np.max(np.abs(residue.data)) < 1e-9


def test_wavelet_residue_keeps_input_shape_when_padding():
    frame = _frame(np.random.default_rng(3).integers(0, 1024, size=(37, 50)))
    assert wavelet_residue(frame).data.shape == (37, 50)


def test_huge_noise_variance_passes_all_detail():
    image = np.random.default_rng(4).integers(0, 1024, size=(64, 64))
    frame = _frame(image)
    coeffs = pywt.wavedec2(frame.as_float(), config.WAVELET_NAME, mode="periodization", level=4)
    smooth = [coeffs[0]] + [tuple(np.zeros_like(c) for c in level) for level in coeffs[1:]]
    expected = frame.as_float() - pywt.waverec2(smooth, config.WAVELET_NAME, mode="periodization")

    residue = wavelet_residue(frame, sigma0_sq=1e30)

    assert np.max(np.abs(residue.data - expected)) < 1e-6


def test_wavelet_default_variance_scales_with_bit_depth():
    assert config.default_sigma0_sq(8) == 9.0
    assert config.default_sigma0_sq(10) == 9.0 * 16
    frame = _frame(np.random.default_rng(6).integers(0, 1024, size=(32, 32)))
    assert np.array_equal(wavelet_residue(frame).data, wavelet_residue(frame, sigma0_sq=144.0).data)


@pytest.mark.parametrize("sigma0_sq", [0.0, -1.0, float("nan")])
def test_wavelet_rejects_bad_variance(sigma0_sq):
    with pytest.raises(InvalidParam):
        wavelet_residue(_frame(np.zeros((16, 16))), sigma0_sq=sigma0_sq)


def test_wavelet_rejects_zero_levels():
    with pytest.raises(InvalidParam):
        wavelet_residue(_frame(np.zeros((16, 16))), levels=0)


def test_filters_agree_on_white_noise_energy():
    rng = np.random.default_rng(21)
    frame = _frame(500 + np.rint(rng.normal(0.0, 3.0, size=(64, 64))).astype(np.int64))
    e_dct = float(np.sum(dct_residue(frame).data ** 2))
    e_wav = float(np.sum(wavelet_residue(frame, sigma0_sq=9.0).data ** 2))
    assert 0.25 < e_wav / e_dct < 4.0


def test_extract_residue_dispatch():
    frame = _frame(np.random.default_rng(8).integers(0, 1024, size=(32, 32)))
    assert np.array_equal(extract_residue(frame, FilterKind.DCT).data, dct_residue(frame).data)
    assert np.array_equal(extract_residue(frame, "wavelet").data, wavelet_residue(frame).data)
