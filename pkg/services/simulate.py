"""
Synthetic CMOS sensor
Dark current follows d(x,y) * j0 * T^2 * exp(-dE / kT) * t; photo-electrons
K(x,y) * L * t share the well of n_max electrons with it. Every frame draws its
noise from its own seeded stream, so output never depends on scheduling.
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from models import Frame, FrameMeta, SensorProfile
from services.errors import InvalidParam, MalformedHeader, TruncatedData
from services.logger import get_logger
from services.workers import parallel_map

logger = get_logger("services.simulate")

PathLike = Union[str, Path]

_MAPS_TAG = 0x6D617073
_NOISE_TAG = 0x6E6F6973
# keeps the centi-degree key non-negative down to -50 C
_TEMPERATURE_KEY_OFFSET = 100_000

DARK_MAP_SUFFIX = ".dark.f32"
PRNU_MAP_SUFFIX = ".prnu.f32"


def kelvin(temperature_c: float) -> float:
    return temperature_c + config.KELVIN_OFFSET


def dark_generation_factor(j0: float, delta_e_ev: float, temperature_c: float, exposure_s: float) -> float:
    """Mean dark electrons for a unit multiplier: j0 * T^2 * exp(-dE / kT) * t"""
    t_k = kelvin(temperature_c)
    return j0 * t_k * t_k * math.exp(-delta_e_ev / (config.BOLTZMANN_EV_PER_K * t_k)) * exposure_s


def calibrate_j0(
    delta_e_ev: float,
    electrons: float = config.SIM_DARK_E_AT_REF,
    temperature_c: float = config.SIM_QUERY_TEMPERATURE_C,
    exposure_s: float = config.SIM_EXPOSURE_S,
) -> float:
    """j0 that yields `electrons` mean dark electrons (unit multiplier) at the given point"""
    if not electrons > 0 or not exposure_s > 0:
        raise InvalidParam("electrons and exposure_s must be positive")
    return electrons / dark_generation_factor(1.0, delta_e_ev, temperature_c, exposure_s)


# ==================== PROFILE ====================

def _draw_maps(
    seed: int,
    width: int,
    height: int,
    dark_sigma_ln: float,
    prnu_sigma: float,
    hot_pixel_fraction: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _MAPS_TAG])))
    shape = (height, width)
    # float32-representable so the .f32 map files round-trip exactly
    dark = rng.lognormal(mean=0.0, sigma=dark_sigma_ln, size=shape).astype(np.float32).astype(np.float64)
    prnu = 1.0 + prnu_sigma * rng.standard_normal(shape)
    prnu = np.maximum(prnu, 1e-6).astype(np.float32).astype(np.float64)
    n_hot = int(round(hot_pixel_fraction * width * height))
    hot = np.zeros(width * height, dtype=bool)
    if n_hot:
        hot[rng.choice(width * height, size=n_hot, replace=False)] = True
    return dark, prnu, hot.reshape(shape)


def make_profile(
    width: int,
    height: int,
    seed: int,
    bit_depth: int = config.SIM_BIT_DEPTH,
    n_max: float = config.SIM_N_MAX_E,
    delta_e_ev: float = config.SIM_DELTA_E_EV,
    j0: Optional[float] = None,
    dark_sigma_ln: float = config.SIM_DARK_SIGMA_LN,
    prnu_sigma: float = config.SIM_PRNU_SIGMA,
    hot_pixel_fraction: float = config.SIM_HOT_PIXEL_FRACTION,
    read_noise_e: float = config.SIM_READ_NOISE_E,
) -> SensorProfile:
    """
    Draw a sensor from its seed

    Dark multipliers are lognormal with median 1, PRNU gains are 1 + N(0, prnu_sigma)
    floored just above 0, and the hot pixel set is a uniform draw without
    replacement. j0 defaults to the value giving config.SIM_DARK_E_AT_REF
    electrons at 30 C and the default exposure.
    """
    if width < 1 or height < 1:
        raise InvalidParam(f"sensor dimensions must be positive, got {width}x{height}")
    if j0 is None:
        j0 = calibrate_j0(delta_e_ev)
    dark, prnu, hot = _draw_maps(seed, width, height, dark_sigma_ln, prnu_sigma, hot_pixel_fraction)
    return SensorProfile(
        width=width,
        height=height,
        bit_depth=bit_depth,
        n_max=n_max,
        dark_rate_map=dark,
        j0=j0,
        delta_e_ev=delta_e_ev,
        prnu_map=prnu,
        hot_pixel_map=hot,
        hot_pixel_fraction=hot_pixel_fraction,
        read_noise_e=read_noise_e,
        dark_sigma_ln=dark_sigma_ln,
        prnu_sigma=prnu_sigma,
        seed=seed,
    )


# ==================== CAPTURE ====================

def _check_capture(temperature_c: float, exposure_s: float, illuminance: float = 0.0) -> None:
    low, high = config.SIM_TEMPERATURE_RANGE_C
    if not (low <= temperature_c <= high):
        raise InvalidParam(f"temperature {temperature_c} C outside [{low}, {high}]")
    if not (math.isfinite(exposure_s) and exposure_s > 0):
        raise InvalidParam(f"exposure_s must be positive, got {exposure_s}")
    if not (math.isfinite(illuminance) and illuminance >= 0):
        raise InvalidParam(f"illuminance must be >= 0, got {illuminance}")


def expected_dark_electrons(p: SensorProfile, temperature_c: float, exposure_s: float) -> np.ndarray:
    _check_capture(temperature_c, exposure_s)
    return p.dark_rate_map * dark_generation_factor(p.j0, p.delta_e_ev, temperature_c, exposure_s)


def expected_flat_electrons(
    p: SensorProfile,
    temperature_c: float,
    exposure_s: float,
    illuminance: float,
) -> np.ndarray:
    """Pre-noise, pre-clipping expectation: photo + dark"""
    _check_capture(temperature_c, exposure_s, illuminance)
    photo = p.prnu_map * (illuminance * exposure_s)
    return photo + expected_dark_electrons(p, temperature_c, exposure_s)


def noise_stream(seed: int, frame_index: int, temperature_c: float) -> np.random.Generator:
    key = int(round(temperature_c * 100)) + _TEMPERATURE_KEY_OFFSET
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _NOISE_TAG, frame_index, key])))


def _expose(
    p: SensorProfile,
    mean_electrons: np.ndarray,
    temperature_c: float,
    frame_index: int,
    meta: FrameMeta,
) -> Frame:
    if frame_index < 0:
        raise InvalidParam(f"frame_index must be >= 0, got {frame_index}")
    rng = noise_stream(p.seed, frame_index, temperature_c)

    gaussian = mean_electrons > config.SIM_GAUSSIAN_CUTOVER_E
    electrons = rng.poisson(np.where(gaussian, 0.0, mean_electrons)).astype(np.float64)
    if gaussian.any():
        lam = mean_electrons[gaussian]
        electrons[gaussian] = np.rint(lam + np.sqrt(lam) * rng.standard_normal(lam.size))
    if p.read_noise_e > 0:
        electrons += rng.normal(0.0, p.read_noise_e, size=electrons.shape)

    electrons = np.clip(electrons, 0.0, p.n_max)
    electrons[p.hot_pixel_map] = p.n_max

    full = p.full_scale
    dn = np.clip(np.rint(electrons / p.n_max * full), 0, full).astype(np.uint16)
    return Frame(bit_depth=p.bit_depth, data=dn, meta=meta)


def capture_dark(
    p: SensorProfile,
    temperature_c: float,
    exposure_s: float = config.SIM_EXPOSURE_S,
    frame_index: int = 0,
    camera_id: Optional[str] = None,
) -> Frame:
    """One dark frame; identical arguments give a bit-identical frame"""
    mean = expected_dark_electrons(p, temperature_c, exposure_s)
    meta = FrameMeta(temperature_c=temperature_c, exposure_s=exposure_s, camera_id=camera_id)
    return _expose(p, mean, temperature_c, frame_index, meta)


def capture_flat(
    p: SensorProfile,
    temperature_c: float,
    exposure_s: float = config.SIM_EXPOSURE_S,
    illuminance: float = config.SIM_ILLUMINANCE,
    frame_index: int = 0,
    camera_id: Optional[str] = None,
    lens_id: Optional[str] = None,
) -> Frame:
    """
    One flat field

    Total electrons are drawn in a single pass from the same stream as
    capture_dark, so illuminance 0 reproduces the dark frame exactly.
    """
    mean = expected_flat_electrons(p, temperature_c, exposure_s, illuminance)
    meta = FrameMeta(temperature_c=temperature_c, exposure_s=exposure_s, camera_id=camera_id, lens_id=lens_id)
    return _expose(p, mean, temperature_c, frame_index, meta)


def capture_dark_set(
    p: SensorProfile,
    temperature_c: float,
    count: int = config.SIM_FRAMES_PER_SET,
    exposure_s: float = config.SIM_EXPOSURE_S,
    start_index: int = 0,
    camera_id: Optional[str] = None,
    threads: int = config.DEFAULT_THREADS,
) -> List[Frame]:
    frames = parallel_map(
        lambda i: capture_dark(p, temperature_c, exposure_s, start_index + i, camera_id),
        range(count),
        threads,
    )
    logger.info("dark_set_simulated", extra={
        "component": "services.simulate",
        "camera_id": camera_id,
        "temperature_c": temperature_c,
        "frames": count,
    })
    return frames


def capture_flat_set(
    p: SensorProfile,
    temperature_c: float,
    count: int,
    exposure_s: float = config.SIM_EXPOSURE_S,
    illuminance: float = config.SIM_ILLUMINANCE,
    start_index: int = 0,
    camera_id: Optional[str] = None,
    lens_id: Optional[str] = None,
    threads: int = config.DEFAULT_THREADS,
) -> List[Frame]:
    frames = parallel_map(
        lambda i: capture_flat(p, temperature_c, exposure_s, illuminance, start_index + i, camera_id, lens_id),
        range(count),
        threads,
    )
    logger.info("flat_set_simulated", extra={
        "component": "services.simulate",
        "camera_id": camera_id,
        "lens_id": lens_id,
        "temperature_c": temperature_c,
        "illuminance": illuminance,
        "frames": count,
    })
    return frames


# ==================== PERSISTENCE ====================

_PROFILE_INTS = ("width", "height", "bit_depth", "seed")
_PROFILE_FLOATS = (
    "n_max", "j0", "delta_e_ev", "hot_pixel_fraction", "read_noise_e", "dark_sigma_ln", "prnu_sigma",
)


def _map_path(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def save_profile(p: SensorProfile, path: PathLike) -> None:
    """key=value text plus raw little-endian float32 dark and PRNU maps beside it"""
    path = Path(path)
    lines = [f"{key}={getattr(p, key)}" for key in _PROFILE_INTS]
    lines += [f"{key}={getattr(p, key)!r}" for key in _PROFILE_FLOATS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _map_path(path, DARK_MAP_SUFFIX).write_bytes(p.dark_rate_map.astype("<f4").tobytes())
    _map_path(path, PRNU_MAP_SUFFIX).write_bytes(p.prnu_map.astype("<f4").tobytes())


def _read_map(path: Path, width: int, height: int) -> np.ndarray:
    raw = path.read_bytes()
    need = 4 * width * height
    if len(raw) != need:
        raise TruncatedData(f"expected {need} bytes for a {width}x{height} map, found {len(raw)}", path)
    return np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(np.float64)


def load_profile(path: PathLike) -> SensorProfile:
    """Inverse of save_profile; the hot pixel set is redrawn from the seed"""
    path = Path(path)
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedHeader(f"expected key=value, got {line!r}", path, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value

    fields = {}
    for key in _PROFILE_INTS + _PROFILE_FLOATS:
        if key not in values:
            raise MalformedHeader(f"profile is missing {key}", path)
        try:
            fields[key] = int(values[key]) if key in _PROFILE_INTS else float(values[key])
        except ValueError:
            raise MalformedHeader(f"{key} is not a number: {values[key]!r}", path)

    width, height = fields["width"], fields["height"]
    _, _, hot = _draw_maps(
        fields["seed"], width, height,
        fields["dark_sigma_ln"], fields["prnu_sigma"], fields["hot_pixel_fraction"],
    )
    return SensorProfile(
        dark_rate_map=_read_map(_map_path(path, DARK_MAP_SUFFIX), width, height),
        prnu_map=_read_map(_map_path(path, PRNU_MAP_SUFFIX), width, height),
        hot_pixel_map=hot,
        **fields,
    )
