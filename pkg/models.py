"""
Pydantic models for the darksignal toolkit
Domain types with their invariants enforced at construction time
"""

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import config


def _frozen_copy(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


def _as_plane(v: Any, dtype, what: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{what} must be a non-empty 2D array, got shape {arr.shape}")
    return _frozen_copy(arr, dtype)


# ==================== ENUMS ====================

class FilterKind(str, Enum):
    """Residue extraction filters"""
    DCT = "dct"
    WAVELET = "wavelet"


class PipelineCommand(str, Enum):
    """CLI subcommands"""
    SIMULATE = "simulate"
    RESIDUE = "residue"
    FINGERPRINT = "fingerprint"
    CORRELATE = "correlate"
    FIT = "fit"
    ESTIMATE_TEMP = "estimate-temp"
    BENCHMARK = "benchmark"


# ==================== RASTERS ====================

class FrameMeta(BaseModel):
    """Capture metadata carried in the `.meta` sidecar"""
    model_config = ConfigDict(frozen=True)

    temperature_c: Optional[float] = None
    exposure_s: Optional[float] = None
    camera_id: Optional[str] = None
    lens_id: Optional[str] = None


class Frame(BaseModel):
    """Integer raster, row-major (height, width)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bit_depth: int = Field(..., ge=8, le=16)
    data: np.ndarray
    meta: FrameMeta = Field(default_factory=FrameMeta)

    @field_validator("data", mode="before")
    @classmethod
    def _integer_plane(cls, v):
        arr = np.asarray(v)
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"frame samples must be integers, got {arr.dtype}")
        if arr.size and int(arr.min()) < 0:
            raise ValueError("frame samples must be non-negative")
        return _as_plane(arr, np.uint16, "frame data")

    @model_validator(mode="after")
    def _samples_in_range(self):
        if int(self.data.max()) > self.max_value:
            raise ValueError(
                f"sample {int(self.data.max())} exceeds {self.max_value} for bit depth {self.bit_depth}"
            )
        return self

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)


class ResiduePlane(BaseModel):
    """Signed noise residue Y = I - f(I)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _finite_plane(cls, v):
        arr = _as_plane(v, np.float64, "residue data")
        if not np.all(np.isfinite(arr)):
            raise ValueError("residue contains NaN or Inf")
        return arr

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])


class ReferencePattern(BaseModel):
    """Averaged residue with its exclusion mask and temperature label"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    mask: np.ndarray
    frame_count: int = Field(..., ge=1)
    temperature_c: float

    @field_validator("data", mode="before")
    @classmethod
    def _data_plane(cls, v):
        arr = _as_plane(v, np.float64, "pattern data")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pattern contains NaN or Inf")
        return arr

    @field_validator("mask", mode="before")
    @classmethod
    def _mask_plane(cls, v):
        return _as_plane(v, np.bool_, "pattern mask")

    @model_validator(mode="after")
    def _mask_matches(self):
        if self.mask.shape != self.data.shape:
            raise ValueError(f"mask shape {self.mask.shape} != data shape {self.data.shape}")
        if np.any(self.data[self.mask] != 0.0):
            raise ValueError("masked positions must carry value 0")
        return self

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])


class SaturationMask(BaseModel):
    """True marks a saturated (excluded) pixel"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bits: np.ndarray
    threshold_fraction: float = Field(config.SATURATION_THRESHOLD, gt=0.0, lt=1.0)

    @field_validator("bits", mode="before")
    @classmethod
    def _bits_plane(cls, v):
        return _as_plane(v, np.bool_, "mask bits")

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @classmethod
    def empty(cls, width: int, height: int) -> "SaturationMask":
        return cls(bits=np.zeros((height, width), dtype=bool))


class DctFilterSpec(BaseModel):
    """Gaussian high-pass in the DCT domain, half gain at the cutoff"""
    model_config = ConfigDict(frozen=True)

    cutoff_radians: float = config.DCT_CUTOFF_RADIANS
    half_gain_at_cutoff: Literal[0.5] = config.DCT_HALF_GAIN

    @field_validator("cutoff_radians")
    @classmethod
    def _cutoff_in_band(cls, v):
        if not (0.0 < v < math.pi):
            raise ValueError(f"cutoff must lie in (0, pi), got {v}")
        return v

    @property
    def sigma_sq(self) -> float:
        return self.cutoff_radians ** 2 / (2.0 * math.log(2.0))


# ==================== CORRELATION ====================

class CorrelationRecord(BaseModel):
    """One query-vs-pattern correlation"""
    model_config = ConfigDict(frozen=True)

    camera_id: str
    lens_id: str
    pattern_temperature_c: float
    rho: float = Field(..., ge=-1.0, le=1.0)
    n_pixels: int = Field(..., ge=2)


class SeriesPoint(BaseModel):
    temperature_c: float
    mean_rho: float
    count: int


class CorrelationSummary(BaseModel):
    """Box statistics of rho at one pattern temperature"""
    temperature_c: float
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float


class Separation(BaseModel):
    mean_diff: float
    std_error: float
    z: float
    n_matched: int
    n_unmatched: int


# ==================== THERMAL MODEL ====================

class ExponentialFit(BaseModel):
    """Least-squares fit of y = a * exp(b * t)"""
    a: float
    b: float
    r2: float
    adj_r2: float = Field(..., le=1.0)
    sse: float
    n_points: int
    dropped_t: List[float] = Field(default_factory=list)
    converged: bool = True
    evaluations: int = 0

    def predict(self, t) -> np.ndarray:
        return self.a * np.exp(self.b * np.asarray(t, dtype=np.float64))


class ThermalFit(BaseModel):
    """Saturating exponential fit with the identified capture temperature"""
    camera_id: Optional[str] = None
    a: float = Field(..., gt=0.0)
    b: float
    adj_r2: float = Field(..., le=1.0)
    t_star_c: float
    forensic_range_c: Tuple[float, float]
    forensic_halfwidth_c: float = config.FORENSIC_HALFWIDTH_C
    delta_e_ev: float
    t_ref_k: float = config.T_REF_K
    plateau_rho: float
    sse: float
    n_rising: int

    @model_validator(mode="after")
    def _range_is_symmetric(self):
        low, high = self.forensic_range_c
        hw = self.forensic_halfwidth_c
        if abs(low - (self.t_star_c - hw)) > 1e-9 or abs(high - (self.t_star_c + hw)) > 1e-9:
            raise ValueError("forensic range must be t_star +/- forensic half-width")
        return self


# ==================== SIMULATOR ====================

class SensorProfile(BaseModel):
    """Ground truth of a simulated sensor"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    bit_depth: int = Field(config.SIM_BIT_DEPTH, ge=8, le=16)
    n_max: float = Field(config.SIM_N_MAX_E, gt=0.0)
    dark_rate_map: np.ndarray
    j0: float = Field(..., gt=0.0)
    delta_e_ev: float = config.SIM_DELTA_E_EV
    prnu_map: np.ndarray
    hot_pixel_map: np.ndarray
    hot_pixel_fraction: float = Field(config.SIM_HOT_PIXEL_FRACTION, ge=0.0, le=0.05)
    read_noise_e: float = Field(config.SIM_READ_NOISE_E, ge=0.0)
    dark_sigma_ln: float = Field(config.SIM_DARK_SIGMA_LN, ge=0.0)
    prnu_sigma: float = Field(config.SIM_PRNU_SIGMA, ge=0.0)
    seed: int = Field(..., ge=0, lt=2 ** 64)

    @field_validator("dark_rate_map", "prnu_map", mode="before")
    @classmethod
    def _positive_map(cls, v):
        arr = _as_plane(v, np.float64, "sensor map")
        if not np.all(arr > 0):
            raise ValueError("sensor maps must be strictly positive")
        return arr

    @field_validator("hot_pixel_map", mode="before")
    @classmethod
    def _hot_map(cls, v):
        return _as_plane(v, np.bool_, "hot pixel map")

    @model_validator(mode="after")
    def _map_shapes(self):
        shape = (self.height, self.width)
        for name in ("dark_rate_map", "prnu_map", "hot_pixel_map"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {shape}")
        return self

    @property
    def full_scale(self) -> int:
        return (1 << self.bit_depth) - 1


# ==================== CLI / PIPELINE ====================

class RunManifest(BaseModel):
    """One CLI invocation, resolved to explicit inputs and parameters"""
    command: PipelineCommand
    inputs: List[Path] = Field(default_factory=list)
    params: Dict[str, Any] = Field(default_factory=dict)
    output_dir: Path

    @field_validator("inputs")
    @classmethod
    def _inputs_exist(cls, v):
        missing = [str(p) for p in v if not Path(p).exists()]
        if missing:
            raise ValueError(f"input paths do not exist: {', '.join(missing)}")
        return v


class BenchmarkRow(BaseModel):
    filter: str
    frames: int
    total_s: float
    delta_s: float
    delta_pct: float


class BenchmarkSet(BaseModel):
    """One timed pass over the frame set (a row of the run-time table)"""
    label: str
    wavelet_s: float
    dct_s: float
    delta_s: float
    delta_pct: float


class BenchmarkReport(BaseModel):
    frames: int
    repetitions: int
    threads: int = 1
    rows: List[BenchmarkRow]
    sets: List[BenchmarkSet]
