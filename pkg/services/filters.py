"""
Residue extraction, Y = I - f(I)
DCT-domain Gaussian high-pass (the fast path) and wavelet Wiener coring (the baseline)
"""

import math
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import pywt
from scipy import fft as sp_fft
from scipy import ndimage

import config
from models import DctFilterSpec, FilterKind, Frame, ResiduePlane
from services.errors import InvalidParam


# ==================== DCT PATH ====================

def dct2(plane: np.ndarray) -> np.ndarray:
    """Orthonormal 2D DCT-II"""
    return sp_fft.dctn(np.asarray(plane, dtype=np.float64), type=2, norm="ortho")


def idct2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of dct2 (orthonormal DCT-III)"""
    return sp_fft.idctn(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho")


@lru_cache(maxsize=32)
def _hp_gain(cutoff_radians: float, width: int, height: int) -> np.ndarray:
    sigma_sq = cutoff_radians ** 2 / (2.0 * math.log(2.0))
    u = np.arange(width, dtype=np.float64) * (math.pi / width)
    v = np.arange(height, dtype=np.float64) * (math.pi / height)
    r_sq = v[:, None] ** 2 + u[None, :] ** 2
    gain = -np.expm1(-r_sq / (2.0 * sigma_sq))
    gain.setflags(write=False)
    return gain


def build_hp_mask(spec: DctFilterSpec, width: int, height: int) -> np.ndarray:
    """
    Gain plane G(v, u) = 1 - exp(-r^2 / (2 sigma^2)), shape (height, width)

    Bin (u, v) sits at radial frequency r = sqrt((u pi / W)^2 + (v pi / H)^2);
    sigma is chosen so that G = 0.5 at r = spec.cutoff_radians. The returned
    array is shared and read-only.
    """
    if width < 1 or height < 1:
        raise InvalidParam(f"mask dimensions must be positive, got {width}x{height}")
    return _hp_gain(float(spec.cutoff_radians), int(width), int(height))


def dct_residue(frame: Frame, spec: Optional[DctFilterSpec] = None) -> ResiduePlane:
    spec = spec or DctFilterSpec()
    gain = build_hp_mask(spec, frame.width, frame.height)
    return ResiduePlane(data=idct2(gain * dct2(frame.as_float())))


def dct_lowpass(frame: Frame, spec: Optional[DctFilterSpec] = None) -> np.ndarray:
    """f(I): the smooth component removed by dct_residue"""
    spec = spec or DctFilterSpec()
    gain = build_hp_mask(spec, frame.width, frame.height)
    return idct2((1.0 - gain) * dct2(frame.as_float()))


# ==================== WAVELET PATH ====================

def _local_variance(coeffs: np.ndarray, sigma0_sq: float, windows: Sequence[int]) -> np.ndarray:
    energy = coeffs * coeffs
    moment = np.min(
        [ndimage.uniform_filter(energy, size=w, mode="reflect") for w in windows],
        axis=0,
    )
    return np.maximum(moment - sigma0_sq, 0.0)


def wavelet_residue(
    frame: Frame,
    sigma0_sq: Optional[float] = None,
    levels: int = config.WAVELET_LEVELS,
    wavelet: str = config.WAVELET_NAME,
    windows: Sequence[int] = config.WIENER_WINDOW_SIZES,
) -> ResiduePlane:
    """
    Wavelet coring residue

    Each detail coefficient c keeps the fraction sigma0^2 / (v + sigma0^2) that the
    Wiener estimate c * v / (v + sigma0^2) strips away; the approximation band
    belongs entirely to the denoised image, so the residue is the inverse
    transform of the attenuated details alone.

    Args:
        frame: input raster
        sigma0_sq: noise variance in DN^2 (default 9 at 8 bit, scaled by 4^(bit_depth-8))
        levels: decomposition depth
        wavelet: PyWavelets name
        windows: square window sizes for the local variance estimate

    Raises:
        InvalidParam: nonpositive sigma0_sq or levels < 1
    """
    if sigma0_sq is None:
        sigma0_sq = config.default_sigma0_sq(frame.bit_depth)
    if not (math.isfinite(sigma0_sq) and sigma0_sq > 0):
        raise InvalidParam(f"sigma0_sq must be positive, got {sigma0_sq}")
    if levels < 1:
        raise InvalidParam(f"levels must be >= 1, got {levels}")

    image = frame.as_float()
    height, width = image.shape
    block = 1 << levels
    padded = np.pad(image, ((0, (-height) % block), (0, (-width) % block)), mode="symmetric")

    coeffs = pywt.wavedec2(padded, wavelet, mode="periodization", level=levels)
    kept = [np.zeros_like(coeffs[0])]
    for details in coeffs[1:]:
        kept.append(tuple(
            c * (sigma0_sq / (_local_variance(c, sigma0_sq, windows) + sigma0_sq))
            for c in details
        ))
    residue = pywt.waverec2(kept, wavelet, mode="periodization")
    return ResiduePlane(data=residue[:height, :width])


# ==================== DISPATCH ====================

def extract_residue(
    frame: Frame,
    kind: FilterKind = FilterKind.DCT,
    spec: Optional[DctFilterSpec] = None,
    sigma0_sq: Optional[float] = None,
    levels: int = config.WAVELET_LEVELS,
) -> ResiduePlane:
    kind = FilterKind(kind)
    if kind is FilterKind.DCT:
        return dct_residue(frame, spec)
    return wavelet_residue(frame, sigma0_sq=sigma0_sq, levels=levels)
