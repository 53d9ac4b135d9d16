"""
Saturation masks and per-temperature reference patterns
"""

from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

import config
from models import DctFilterSpec, FilterKind, Frame, ReferencePattern, ResiduePlane, SaturationMask
from services.errors import DegenerateInput, DimensionMismatch, EmptySet, InvalidParam
from services.filters import extract_residue
from services.logger import get_logger
from services.workers import parallel_map

logger = get_logger("services.fingerprint")


def saturation_mask(
    frames: Sequence[Frame],
    threshold_fraction: float = config.SATURATION_THRESHOLD,
) -> SaturationMask:
    """
    Union rule: a pixel is excluded if it exceeds threshold_fraction * full scale
    in at least one frame (strictly greater)
    """
    if not frames:
        raise EmptySet("saturation mask needs at least one frame")
    if not (0.0 < threshold_fraction < 1.0):
        raise InvalidParam(f"threshold_fraction must lie in (0, 1), got {threshold_fraction}")

    first = frames[0]
    threshold = threshold_fraction * first.max_value
    bits = np.zeros(first.data.shape, dtype=bool)
    for index, frame in enumerate(frames):
        if frame.data.shape != first.data.shape or frame.bit_depth != first.bit_depth:
            raise DimensionMismatch(
                f"frame {index} is {frame.width}x{frame.height}@{frame.bit_depth}bit, "
                f"expected {first.width}x{first.height}@{first.bit_depth}bit"
            )
        bits |= frame.data > threshold
    return SaturationMask(bits=bits, threshold_fraction=threshold_fraction)


def fill_saturated(frame: Frame, mask: SaturationMask, window: int = config.SATURATION_FILL_WINDOW) -> Frame:
    """
    Copy of frame with every masked pixel replaced by the mean of the unmasked
    pixels in its window

    Unfilled, a full-scale spike leaks into its neighbours through the
    high-pass filter, identically in every frame of the sensor. Pixels with no
    unmasked neighbour take the mean of all unmasked pixels.
    """
    bits = mask.bits
    if bits.shape != frame.data.shape:
        raise DimensionMismatch(
            f"mask {mask.width}x{mask.height} vs frame {frame.width}x{frame.height}"
        )
    keep = ~bits
    if not bits.any() or not keep.any():
        return frame
    if window < 1:
        raise InvalidParam(f"fill window must be >= 1, got {window}")

    data = frame.as_float()
    weight = ndimage.uniform_filter(keep.astype(np.float64), size=window, mode="reflect")
    total = ndimage.uniform_filter(np.where(keep, data, 0.0), size=window, mode="reflect")
    covered = weight > 0.5 / (window * window)
    local = np.where(covered, total / np.where(covered, weight, 1.0), float(data[keep].mean()))
    filled = np.where(bits, np.clip(np.rint(local), 0, frame.max_value), data)
    return Frame(bit_depth=frame.bit_depth, data=filled.astype(np.uint16), meta=frame.meta)


def masked_residue(
    frame: Frame,
    mask: SaturationMask,
    kind: FilterKind = FilterKind.DCT,
    spec: Optional[DctFilterSpec] = None,
    sigma0_sq: Optional[float] = None,
    levels: int = config.WAVELET_LEVELS,
) -> ResiduePlane:
    """Residue of the frame after its masked pixels are filled"""
    return extract_residue(fill_saturated(frame, mask), kind, spec=spec, sigma0_sq=sigma0_sq, levels=levels)


def dark_level(frames: Sequence[Frame], mask: SaturationMask) -> float:
    """Mean DN over the unmasked pixels of every frame"""
    if not frames:
        raise EmptySet("dark level needs at least one frame")
    keep = ~mask.bits
    if not keep.any():
        raise DegenerateInput("every pixel is masked")
    total = 0.0
    for index, frame in enumerate(frames):
        if frame.data.shape != keep.shape:
            raise DimensionMismatch(f"frame {index} is {frame.width}x{frame.height}, mask is {mask.width}x{mask.height}")
        total += float(frame.data[keep].mean(dtype=np.float64))
    return total / len(frames)


def build_reference(
    residues: Sequence[ResiduePlane],
    mask: SaturationMask,
    temperature_c: float,
) -> ReferencePattern:
    """
    Average residues into a reference pattern

    Accumulation runs in list order. Masked pixels are forced to 0, then the
    unmasked pixels are shifted to zero mean.
    """
    if not residues:
        raise EmptySet("reference pattern needs at least one residue")
    shape = mask.bits.shape
    total = np.zeros(shape, dtype=np.float64)
    for index, residue in enumerate(residues):
        if residue.data.shape != shape:
            raise DimensionMismatch(
                f"residue {index} has shape {residue.data.shape}, mask has {shape}"
            )
        total += residue.data

    mean = total / len(residues)
    mean[mask.bits] = 0.0
    keep = ~mask.bits
    if keep.any():
        mean[keep] -= mean[keep].mean()
    else:
        logger.warning("pattern_fully_masked", extra={
            "component": "services.fingerprint",
            "temperature_c": temperature_c,
        })

    return ReferencePattern(
        data=mean,
        mask=mask.bits,
        frame_count=len(residues),
        temperature_c=temperature_c,
    )


def reference_from_frames(
    frames: Sequence[Frame],
    temperature_c: float,
    kind: FilterKind = FilterKind.DCT,
    spec: Optional[DctFilterSpec] = None,
    sigma0_sq: Optional[float] = None,
    levels: int = config.WAVELET_LEVELS,
    threshold_fraction: float = config.SATURATION_THRESHOLD,
    threads: int = config.DEFAULT_THREADS,
) -> ReferencePattern:
    """Mask, filled residues and average in one call"""
    mask = saturation_mask(frames, threshold_fraction)
    residues = parallel_map(
        lambda frame: masked_residue(frame, mask, kind, spec=spec, sigma0_sq=sigma0_sq, levels=levels),
        frames,
        threads,
    )
    pattern = build_reference(residues, mask, temperature_c)
    logger.info("pattern_built", extra={
        "component": "services.fingerprint",
        "temperature_c": temperature_c,
        "frames": pattern.frame_count,
        "masked_pixels": int(mask.bits.sum()),
        "filter": FilterKind(kind).value,
    })
    return pattern
