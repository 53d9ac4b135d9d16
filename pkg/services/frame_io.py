"""
Raster and pattern persistence
Binary PGM (P5) frames with `key=value` sidecars, and the little-endian DSNF
reference-pattern format
"""

import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from models import Frame, FrameMeta, ReferencePattern, ResiduePlane
from services.errors import (
    BadMagic,
    FormatError,
    MalformedHeader,
    TruncatedData,
    UnsupportedMaxval,
    VersionMismatch,
)
from services.logger import get_logger

logger = get_logger("services.frame_io")

PathLike = Union[str, Path]

PGM_MAGIC = b"P5"
PGM_SUFFIX = ".pgm"
META_SUFFIX = ".meta"

PATTERN_MAGIC = b"DSNF"
PATTERN_VERSION = 1
PATTERN_SUFFIX = ".dsnf"
PATTERN_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("width", "<u4"),
    ("height", "<u4"),
    ("frame_count", "<u4"),
    ("temperature_centi_c", "<i4"),
])

_WHITESPACE = b" \t\r\n\v\f"
_META_KEYS = ("temperature_c", "exposure_s", "camera_id", "lens_id")
_META_FLOATS = {"temperature_c", "exposure_s"}


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + META_SUFFIX)


# ==================== PGM ====================

def _line_of(buf: bytes, pos: int) -> int:
    return buf.count(b"\n", 0, pos) + 1


def _pgm_header(buf: bytes, path: PathLike) -> Tuple[int, int, int, int]:
    """Returns (width, height, maxval, data_offset)"""
    tokens = []
    pos, n = 0, len(buf)
    while len(tokens) < 4:
        while pos < n:
            if buf[pos] in _WHITESPACE:
                pos += 1
            elif buf[pos:pos + 1] == b"#":
                eol = buf.find(b"\n", pos)
                pos = n if eol < 0 else eol + 1
            else:
                break
        if pos >= n:
            raise MalformedHeader("header ended before maxval", path, _line_of(buf, pos))
        start = pos
        while pos < n and buf[pos] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append((buf[start:pos], _line_of(buf, start)))
        if len(tokens) == 1 and tokens[0][0] != PGM_MAGIC:
            raise MalformedHeader(f"not a binary PGM (magic {tokens[0][0]!r})", path, 1)

    values = []
    for name, (token, line) in zip(("width", "height", "maxval"), tokens[1:]):
        try:
            value = int(token.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise MalformedHeader(f"bad {name} token {token!r}", path, line)
        if value <= 0:
            raise MalformedHeader(f"{name} must be positive, got {value}", path, line)
        values.append(value)
    width, height, maxval = values

    if pos >= n or buf[pos] not in _WHITESPACE:
        raise MalformedHeader("missing whitespace after maxval", path, _line_of(buf, pos))
    return width, height, maxval, pos + 1


def bit_depth_for_maxval(maxval: int) -> Optional[int]:
    """255 -> 8, 1023 -> 10, 65535 -> 16; None unless maxval is 2^k - 1 with 8 <= k <= 16"""
    k = (maxval + 1).bit_length() - 1
    if 8 <= k <= 16 and (1 << k) - 1 == maxval:
        return k
    return None


def _read_sidecar(path: Path) -> FrameMeta:
    fields = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MalformedHeader(f"expected key=value, got {line!r}", path, lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _META_KEYS:
                logger.debug("sidecar_unknown_key", extra={
                    "component": "services.frame_io",
                    "path": str(path),
                    "key": key,
                })
                continue
            if key in _META_FLOATS:
                try:
                    fields[key] = float(value)
                except ValueError:
                    raise MalformedHeader(f"{key} is not a number: {value!r}", path, lineno)
            else:
                fields[key] = value
    return FrameMeta(**fields)


def _write_sidecar(meta: FrameMeta, path: Path) -> None:
    side = sidecar_path(path)
    lines = []
    for key in _META_KEYS:
        value = getattr(meta, key)
        if value is not None:
            lines.append(f"{key}={value!r}" if key in _META_FLOATS else f"{key}={value}")
    if lines:
        side.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif side.exists():
        side.unlink()


def load_frame(path: PathLike) -> Frame:
    """
    Load a P5 raster plus its optional `<path>.meta` sidecar

    Args:
        path: PGM file; maxval must be 2^k - 1 for 8 <= k <= 16

    Returns:
        Frame with bit_depth inferred from maxval

    Raises:
        MalformedHeader, TruncatedData, UnsupportedMaxval
    """
    path = Path(path)
    buf = path.read_bytes()
    width, height, maxval, offset = _pgm_header(buf, path)

    bit_depth = bit_depth_for_maxval(maxval)
    if bit_depth is None:
        raise UnsupportedMaxval(f"maxval {maxval} is not 2^k-1 for 8<=k<=16", path)

    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    have = len(buf) - offset
    if have < need:
        raise TruncatedData(f"expected {need} data bytes for {width}x{height}, found {have}", path)
    if have > need:
        logger.debug("pgm_trailing_bytes", extra={
            "component": "services.frame_io",
            "path": str(path),
            "extra_bytes": have - need,
        })

    data = np.frombuffer(buf, dtype=dtype, count=width * height, offset=offset).reshape(height, width)
    if int(data.max()) > maxval:
        raise FormatError(f"sample {int(data.max())} exceeds maxval {maxval}", path)

    side = sidecar_path(path)
    meta = _read_sidecar(side) if side.exists() else FrameMeta()
    return Frame(bit_depth=bit_depth, data=data, meta=meta)


def save_frame(frame: Frame, path: PathLike) -> None:
    """Write P5 with maxval 2^bit_depth - 1; the sidecar only when metadata is present"""
    path = Path(path)
    maxval = frame.max_value
    header = f"P5\n{frame.width} {frame.height}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    path.write_bytes(header + frame.data.astype(dtype).tobytes())
    _write_sidecar(frame.meta, path)


def list_frames(directory: PathLike) -> List[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == PGM_SUFFIX)


def list_patterns(directory: PathLike) -> List[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == PATTERN_SUFFIX)


# ==================== DSNF PATTERNS ====================

def pattern_nbytes(width: int, height: int) -> int:
    n = width * height
    return PATTERN_HEADER.itemsize + 4 * n + math.ceil(n / 8)


def encode_pattern(p: ReferencePattern) -> bytes:
    header = np.zeros(1, dtype=PATTERN_HEADER)
    header["magic"] = PATTERN_MAGIC
    header["version"] = PATTERN_VERSION
    header["width"] = p.width
    header["height"] = p.height
    header["frame_count"] = p.frame_count
    header["temperature_centi_c"] = int(round(p.temperature_c * 100))

    values = p.data.astype("<f4")
    if not np.all(np.isfinite(values)):
        raise FormatError("pattern values overflow float32")
    bits = np.packbits(p.mask.ravel(), bitorder="little")
    return header.tobytes() + values.tobytes() + bits.tobytes()


def decode_pattern(buf: bytes, path: Optional[PathLike] = None) -> ReferencePattern:
    if len(buf) < 4:
        raise TruncatedData(f"{len(buf)} bytes is shorter than the magic", path)
    if buf[:4] != PATTERN_MAGIC:
        raise BadMagic(f"magic {buf[:4]!r}, expected {PATTERN_MAGIC!r}", path)
    if len(buf) < PATTERN_HEADER.itemsize:
        raise TruncatedData(f"{len(buf)} bytes is shorter than the header", path)

    header = np.frombuffer(buf, dtype=PATTERN_HEADER, count=1)[0]
    if int(header["version"]) != PATTERN_VERSION:
        raise VersionMismatch(f"version {int(header['version'])}, expected {PATTERN_VERSION}", path)

    width, height = int(header["width"]), int(header["height"])
    if width == 0 or height == 0:
        raise MalformedHeader(f"empty pattern {width}x{height}", path)
    need = pattern_nbytes(width, height)
    if len(buf) < need:
        raise TruncatedData(f"expected {need} bytes for {width}x{height}, found {len(buf)}", path)
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after mask", path)

    n = width * height
    offset = PATTERN_HEADER.itemsize
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=offset).astype(np.float64)
    packed = np.frombuffer(buf, dtype=np.uint8, count=math.ceil(n / 8), offset=offset + 4 * n)
    mask = np.unpackbits(packed, count=n, bitorder="little").astype(bool)

    try:
        return ReferencePattern(
            data=data.reshape(height, width),
            mask=mask.reshape(height, width),
            frame_count=int(header["frame_count"]),
            temperature_c=int(header["temperature_centi_c"]) / 100.0,
        )
    except ValidationError as e:
        raise FormatError(f"invalid pattern contents: {e.errors()[0]['msg']}", path)


def save_pattern(p: ReferencePattern, path: PathLike) -> None:
    """
    Persist a pattern as DSNF v1

    Values are stored as float32 and the temperature in centi-degrees, so the
    round trip is exact for float32-representable data and two-decimal temperatures
    """
    Path(path).write_bytes(encode_pattern(p))


def load_pattern(path: PathLike) -> ReferencePattern:
    path = Path(path)
    return decode_pattern(path.read_bytes(), path)


# ==================== RESIDUE FILES ====================

def save_residue(residue: ResiduePlane, path: PathLike, meta: Optional[FrameMeta] = None) -> None:
    """A residue is stored as a DSNF pattern with frame_count 1 and an empty mask"""
    meta = meta or FrameMeta()
    pattern = ReferencePattern(
        data=residue.data,
        mask=np.zeros(residue.data.shape, dtype=bool),
        frame_count=1,
        temperature_c=meta.temperature_c if meta.temperature_c is not None else 0.0,
    )
    path = Path(path)
    save_pattern(pattern, path)
    _write_sidecar(meta, path)


def load_residue(path: PathLike) -> Tuple[ResiduePlane, FrameMeta]:
    path = Path(path)
    pattern = load_pattern(path)
    side = sidecar_path(path)
    meta = _read_sidecar(side) if side.exists() else FrameMeta(temperature_c=pattern.temperature_c)
    return ResiduePlane(data=pattern.data), meta
