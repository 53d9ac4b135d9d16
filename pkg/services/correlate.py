"""
Query-vs-pattern correlation and per-temperature aggregation
"""

import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from models import (
    CorrelationRecord,
    CorrelationSummary,
    ReferencePattern,
    ResiduePlane,
    SaturationMask,
    Separation,
    SeriesPoint,
)
from services.errors import DegenerateInput, DimensionMismatch, EmptySet, FormatError
from services.logger import get_logger

logger = get_logger("services.correlate")

RECORD_COLUMNS = ["camera_id", "lens_id", "pattern_temp_c", "rho", "n_pixels"]
SERIES_COLUMNS = ["temperature_c", "mean_rho", "count"]
SUMMARY_COLUMNS = ["temperature_c", "count", "min", "q1", "median", "q3", "max"]


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    if n < 2:
        raise DegenerateInput(f"need at least 2 jointly unmasked pixels, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("zero variance over the included pixels")
    rho = float(np.dot(dx, dy)) / (math.sqrt(sxx) * math.sqrt(syy))
    # ulp overshoot from rounding
    return min(1.0, max(-1.0, rho))


def _included(
    residue: ResiduePlane,
    pattern: ReferencePattern,
    extra_mask: Optional[SaturationMask],
) -> np.ndarray:
    if residue.data.shape != pattern.data.shape:
        raise DimensionMismatch(
            f"residue {residue.width}x{residue.height} vs pattern {pattern.width}x{pattern.height}"
        )
    excluded = pattern.mask
    if extra_mask is not None:
        if extra_mask.bits.shape != pattern.mask.shape:
            raise DimensionMismatch(
                f"extra mask {extra_mask.width}x{extra_mask.height} vs pattern {pattern.width}x{pattern.height}"
            )
        excluded = excluded | extra_mask.bits
    return ~excluded


def masked_corr_with_count(
    residue: ResiduePlane,
    pattern: ReferencePattern,
    extra_mask: Optional[SaturationMask] = None,
) -> Tuple[float, int]:
    keep = _included(residue, pattern, extra_mask)
    return _pearson(residue.data[keep], pattern.data[keep]), int(keep.sum())


def masked_corr(
    residue: ResiduePlane,
    pattern: ReferencePattern,
    extra_mask: Optional[SaturationMask] = None,
) -> float:
    """
    Pearson correlation over pixels unmasked in both the pattern and extra_mask

    Raises:
        DimensionMismatch: shapes differ
        DegenerateInput: fewer than 2 pixels, or either side has zero variance
    """
    return masked_corr_with_count(residue, pattern, extra_mask)[0]


def correlate_record(
    residue: ResiduePlane,
    pattern: ReferencePattern,
    camera_id: str,
    lens_id: str,
    extra_mask: Optional[SaturationMask] = None,
) -> CorrelationRecord:
    rho, n = masked_corr_with_count(residue, pattern, extra_mask)
    return CorrelationRecord(
        camera_id=camera_id,
        lens_id=lens_id,
        pattern_temperature_c=pattern.temperature_c,
        rho=rho,
        n_pixels=n,
    )


# ==================== AGGREGATION ====================

def records_to_frame(records: Iterable[CorrelationRecord]) -> pd.DataFrame:
    rows = [
        (r.camera_id, r.lens_id, r.pattern_temperature_c, r.rho, r.n_pixels)
        for r in records
    ]
    df = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    return df.astype({"pattern_temp_c": "float64", "rho": "float64", "n_pixels": "int64"})


def frame_to_records(df: pd.DataFrame, path: Optional[Union[str, Path]] = None) -> List[CorrelationRecord]:
    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise FormatError(f"missing columns: {', '.join(missing)}", path)
    records = []
    for offset, row in enumerate(df[RECORD_COLUMNS].itertuples(index=False)):
        try:
            records.append(CorrelationRecord(
                camera_id=str(row.camera_id),
                lens_id=str(row.lens_id),
                pattern_temperature_c=float(row.pattern_temp_c),
                rho=float(row.rho),
                n_pixels=int(row.n_pixels),
            ))
        except (ValidationError, ValueError) as e:
            # header is line 1
            raise FormatError(f"bad correlation row: {e}", path, offset + 2)
    return records


def write_records_csv(records: Iterable[CorrelationRecord], path: Union[str, Path]) -> None:
    records_to_frame(records).to_csv(path, index=False, lineterminator="\n")


def read_records_csv(path: Union[str, Path]) -> List[CorrelationRecord]:
    df = pd.read_csv(path, dtype={"camera_id": str, "lens_id": str}, keep_default_na=False)
    return frame_to_records(df, path)


def _select(
    records: Sequence[CorrelationRecord],
    camera_id: Optional[str],
    lens_id: Optional[str],
) -> pd.DataFrame:
    df = records_to_frame(records)
    if camera_id is not None:
        df = df[df["camera_id"] == camera_id]
    if lens_id is not None:
        df = df[df["lens_id"] == lens_id]
    if df.empty:
        raise EmptySet(f"no correlation records (camera_id={camera_id}, lens_id={lens_id})")
    return df


def correlation_series(
    records: Sequence[CorrelationRecord],
    camera_id: Optional[str] = None,
    lens_id: Optional[str] = None,
) -> List[SeriesPoint]:
    """
    Mean rho per exact pattern temperature, ascending

    All lenses are pooled unless lens_id narrows the set.
    """
    df = _select(records, camera_id, lens_id)
    grouped = df.groupby("pattern_temp_c", sort=True)["rho"]
    return [
        SeriesPoint(temperature_c=float(t), mean_rho=math.fsum(rhos) / len(rhos), count=len(rhos))
        for t, rhos in grouped
    ]


def correlation_summary(
    records: Sequence[CorrelationRecord],
    camera_id: Optional[str] = None,
    lens_id: Optional[str] = None,
) -> List[CorrelationSummary]:
    """Box statistics of rho per pattern temperature (linear-interpolated quartiles)"""
    df = _select(records, camera_id, lens_id)
    rows = []
    for t, rhos in df.groupby("pattern_temp_c", sort=True)["rho"]:
        q1, median, q3 = rhos.quantile([0.25, 0.5, 0.75]).tolist()
        rows.append(CorrelationSummary(
            temperature_c=float(t),
            count=int(rhos.size),
            min=float(rhos.min()),
            q1=q1,
            median=median,
            q3=q3,
            max=float(rhos.max()),
        ))
    return rows


def series_to_frame(points: Iterable[SeriesPoint]) -> pd.DataFrame:
    return pd.DataFrame(
        [(p.temperature_c, p.mean_rho, p.count) for p in points],
        columns=SERIES_COLUMNS,
    )


def summary_to_frame(rows: Iterable[CorrelationSummary]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in rows], columns=SUMMARY_COLUMNS)


def separation(matched: Sequence[float], unmatched: Sequence[float]) -> Separation:
    """
    Matched minus unmatched mean rho in units of its standard error,
    SE = sqrt(var_m / n_m + var_u / n_u) with sample variances
    """
    m = np.asarray(matched, dtype=np.float64)
    u = np.asarray(unmatched, dtype=np.float64)
    if m.size < 2 or u.size < 2:
        raise EmptySet(f"need >= 2 correlations per side, got {m.size} and {u.size}")
    diff = float(m.mean() - u.mean())
    se = math.sqrt(m.var(ddof=1) / m.size + u.var(ddof=1) / u.size)
    if se == 0.0:
        raise DegenerateInput("both correlation sets have zero spread")
    return Separation(mean_diff=diff, std_error=se, z=diff / se, n_matched=int(m.size), n_unmatched=int(u.size))
