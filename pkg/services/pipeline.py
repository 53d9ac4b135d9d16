"""
Pipeline dispatcher
Runs one RunManifest end to end: resolves inputs, calls the services in stage
order and writes deterministic artifacts under output_dir
"""

import json
import math
import sys
import uuid
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

import config
from models import (
    CorrelationRecord,
    DctFilterSpec,
    FilterKind,
    PipelineCommand,
    ReferencePattern,
    RunManifest,
    SaturationMask,
)
from services import correlate, fingerprint, frame_io, simulate, thermal
from services.benchmark import run_benchmark
from services.errors import DarkSignalError, DimensionMismatch, EmptySet, FormatError, InvalidParam
from services.logger import get_logger, reset_run_id, set_run_id
from services.workers import parallel_map

logger = get_logger("services.pipeline")

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2

CORRELATIONS_CSV = "correlations.csv"
SERIES_CSV = "series.csv"
DARK_LEVELS_CSV = "dark_levels.csv"
# y column of a (temperature_c, y) series, in lookup order
SERIES_VALUE_COLUMNS = ("mean_rho", "mean_dn")
SUMMARY_CSV = "summary.csv"
EXP_FIT_JSON = "exp_fit.json"
THERMAL_FIT_JSON = "thermal_fit.json"
BENCHMARK_CSV = "benchmark.csv"
BENCHMARK_SETS_CSV = "benchmark_sets.csv"
PROFILE_TXT = "profile.txt"

# keeps query noise streams disjoint from the dark sets
QUERY_INDEX_BASE = 1_000_000
QUERY_INDEX_PER_LENS = 100_000


class PipelineStage(Enum):
    """Stages a manifest moves through"""
    RESOLVE = "resolve"
    SIMULATE = "simulate"
    RESIDUE = "residue"
    FINGERPRINT = "fingerprint"
    CORRELATE = "correlate"
    FIT = "fit"
    BENCHMARK = "benchmark"
    WRITE = "write"
    COMPLETED = "completed"


class PipelineStatus(Enum):
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


# ==================== OUTPUT HELPERS ====================

def dark_dir_name(temperature_c: float) -> str:
    return f"t{temperature_c:.2f}"


def frame_name(index: int) -> str:
    return f"frame_{index:04d}{frame_io.PGM_SUFFIX}"


def pattern_name(temperature_c: float) -> str:
    return f"pattern_{dark_dir_name(temperature_c)}{frame_io.PATTERN_SUFFIX}"


def write_json(payload: Any, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def _expand(paths: Sequence[Path], lister: Callable[[Path], List[Path]]) -> List[Path]:
    out: List[Path] = []
    for path in paths:
        out.extend(lister(path) if path.is_dir() else [path])
    return out


def load_series_csv(path: Path) -> Dict[str, List[Tuple[float, float]]]:
    """
    Per-camera (t, y) series from a correlations CSV (grouped and averaged
    here), a series CSV (temperature_c, mean_rho) or a dark-level CSV
    (temperature_c, mean_dn)
    """
    df = pd.read_csv(path, dtype={"camera_id": str, "lens_id": str}, keep_default_na=False)
    if "rho" in df.columns:
        records = correlate.frame_to_records(df, path)
        cameras = sorted({r.camera_id for r in records})
        return {
            cam: [(p.temperature_c, p.mean_rho) for p in correlate.correlation_series(records, camera_id=cam)]
            for cam in cameras
        }
    value = next((c for c in SERIES_VALUE_COLUMNS if c in df.columns), None)
    if "temperature_c" in df.columns and value is not None:
        if "camera_id" not in df.columns:
            df = df.assign(camera_id="all")
        try:
            return {
                str(cam): sorted(zip(group["temperature_c"].astype(float), group[value].astype(float)))
                for cam, group in df.groupby("camera_id", sort=True)
            }
        except ValueError as e:
            raise FormatError(f"non-numeric series value: {e}", path)
    raise FormatError(
        "expected a correlations CSV (rho) or a series CSV (temperature_c with mean_rho or mean_dn)", path,
    )


# ==================== PIPELINE ====================

class Pipeline:
    """
    Executes one manifest; status and completed stages are kept on the instance
    so callers (and tests) can inspect how far a failed run got
    """

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.params = dict(manifest.params)
        self.output_dir = Path(manifest.output_dir)
        self.status = PipelineStatus.PENDING
        self.stage = PipelineStage.RESOLVE
        self.stages_completed: List[PipelineStage] = []
        self.artifacts: List[Path] = []
        self.errors: List[str] = []

    # ---------- parameters ----------

    def _param(self, key: str, default: Any = None) -> Any:
        value = self.params.get(key)
        return default if value is None else value

    @property
    def threads(self) -> int:
        return int(self._param("threads", config.DEFAULT_THREADS))

    @property
    def filter_kind(self) -> FilterKind:
        return FilterKind(self._param("filter", FilterKind.DCT.value))

    @property
    def dct_spec(self) -> DctFilterSpec:
        fraction = float(self._param("cutoff", config.DCT_CUTOFF_FRACTION))
        try:
            return DctFilterSpec(cutoff_radians=fraction * math.pi)
        except ValueError as e:
            raise InvalidParam(f"--cutoff {fraction}: {e}")

    def _residue_kwargs(self) -> Dict[str, Any]:
        return {
            "kind": self.filter_kind,
            "spec": self.dct_spec,
            "sigma0_sq": self._param("sigma0_sq"),
            "levels": int(self._param("levels", config.WAVELET_LEVELS)),
        }

    def _enter(self, stage: PipelineStage) -> None:
        self.stage = stage
        logger.info("pipeline_stage", extra={
            "component": "services.pipeline",
            "command": self.manifest.command.value,
            "stage": stage.value,
        })

    def _done(self, stage: PipelineStage) -> None:
        self.stages_completed.append(stage)

    def _emit(self, path: Path) -> Path:
        self.artifacts.append(path)
        return path

    # ---------- entry ----------

    def run(self) -> int:
        self.status = PipelineStatus.IN_PROGRESS
        handlers = {
            PipelineCommand.SIMULATE: self._simulate,
            PipelineCommand.RESIDUE: self._residue,
            PipelineCommand.FINGERPRINT: self._fingerprint,
            PipelineCommand.CORRELATE: self._correlate,
            PipelineCommand.FIT: self._fit,
            PipelineCommand.ESTIMATE_TEMP: self._estimate_temp,
            PipelineCommand.BENCHMARK: self._benchmark,
        }
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            self._done(PipelineStage.RESOLVE)
            handlers[self.manifest.command]()
        except DarkSignalError as e:
            self.status = PipelineStatus.FAILED
            self.errors.append(str(e))
            logger.error("pipeline_failed", extra={
                "component": "services.pipeline",
                "command": self.manifest.command.value,
                "stage": self.stage.value,
                "error_type": type(e).__name__,
                "error": str(e),
            })
            sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
            return EXIT_DATA_ERROR

        self.status = PipelineStatus.COMPLETED
        self.stage = PipelineStage.COMPLETED
        logger.info("pipeline_completed", extra={
            "component": "services.pipeline",
            "command": self.manifest.command.value,
            "artifacts": len(self.artifacts),
        })
        return EXIT_OK

    # ---------- simulate ----------

    def _simulate(self) -> None:
        self._enter(PipelineStage.SIMULATE)
        camera_id = str(self._param("camera_id", "cam0"))
        width = int(self._param("width", 256))
        height = int(self._param("height", 256))
        delta_e = float(self._param("delta_e", config.SIM_DELTA_E_EV))
        exposure = float(self._param("exposure_s", config.SIM_EXPOSURE_S))
        profile = simulate.make_profile(
            width, height,
            seed=int(self._param("seed", 0)),
            bit_depth=int(self._param("bit_depth", config.SIM_BIT_DEPTH)),
            delta_e_ev=delta_e,
            j0=simulate.calibrate_j0(
                delta_e, float(self._param("dark_electrons", config.SIM_DARK_E_AT_REF)), exposure_s=exposure,
            ),
        )

        root = self.output_dir / camera_id
        root.mkdir(parents=True, exist_ok=True)
        simulate.save_profile(profile, self._emit(root / PROFILE_TXT))

        frames_per_set = int(self._param("frames", config.SIM_FRAMES_PER_SET))
        for temperature in self._param("temps", list(config.SIM_TEMPERATURES_C)):
            frames = simulate.capture_dark_set(
                profile, float(temperature), frames_per_set, exposure,
                camera_id=camera_id, threads=self.threads,
            )
            self._write_frames(frames, root / "dark" / dark_dir_name(float(temperature)))

        query_temp = float(self._param("query_temp", config.SIM_QUERY_TEMPERATURE_C))
        query_frames = int(self._param("query_frames", config.SIM_QUERY_FRAMES))
        illuminance = float(self._param("illuminance", config.SIM_ILLUMINANCE))
        for lens_index, lens_id in enumerate(self._param("lenses", ["lens0"])):
            frames = simulate.capture_flat_set(
                profile, query_temp, query_frames, exposure, illuminance,
                start_index=QUERY_INDEX_BASE + lens_index * QUERY_INDEX_PER_LENS,
                camera_id=camera_id, lens_id=str(lens_id), threads=self.threads,
            )
            self._write_frames(frames, root / "query" / str(lens_id))
        self._done(PipelineStage.SIMULATE)

    def _write_frames(self, frames, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        for index, frame in enumerate(frames):
            frame_io.save_frame(frame, self._emit(directory / frame_name(index)))

    # ---------- residue ----------

    def _residue(self) -> None:
        self._enter(PipelineStage.RESIDUE)
        paths = _expand(self.manifest.inputs, frame_io.list_frames)
        if not paths:
            raise EmptySet("no PGM frames among the inputs")
        targets = [self.output_dir / (p.stem + frame_io.PATTERN_SUFFIX) for p in paths]
        if len(set(targets)) != len(targets):
            raise InvalidParam("two inputs map to the same residue file name")
        kwargs = self._residue_kwargs()
        threshold = float(self._param("sat_threshold", config.SATURATION_THRESHOLD))

        def work(pair):
            source, target = pair
            frame = frame_io.load_frame(source)
            mask = fingerprint.saturation_mask([frame], threshold)
            frame_io.save_residue(fingerprint.masked_residue(frame, mask, **kwargs), target, frame.meta)
            return target

        for target in parallel_map(work, list(zip(paths, targets)), self.threads):
            self._emit(target)
        self._done(PipelineStage.RESIDUE)

    # ---------- fingerprint ----------

    def _fingerprint(self) -> None:
        self._enter(PipelineStage.FINGERPRINT)
        threshold = float(self._param("sat_threshold", config.SATURATION_THRESHOLD))
        levels = []
        for directory in self.manifest.inputs:
            paths = frame_io.list_frames(directory) if directory.is_dir() else [directory]
            if not paths:
                raise EmptySet("no PGM frames", directory)
            frames = parallel_map(frame_io.load_frame, paths, self.threads)
            temperature = self._set_temperature(frames, directory)
            try:
                pattern = fingerprint.reference_from_frames(
                    frames, temperature, threshold_fraction=threshold, threads=self.threads,
                    **self._residue_kwargs(),
                )
            except DimensionMismatch as e:
                raise DimensionMismatch(e.message, directory)
            frame_io.save_pattern(pattern, self._emit(self.output_dir / pattern_name(temperature)))
            mask = SaturationMask(bits=pattern.mask, threshold_fraction=threshold)
            levels.append({
                "camera_id": frames[0].meta.camera_id or str(self._param("camera_id", "unknown")),
                "temperature_c": temperature,
                "mean_dn": fingerprint.dark_level(frames, mask),
                "frames": len(frames),
            })
        self._enter(PipelineStage.WRITE)
        write_csv(
            pd.DataFrame(levels, columns=["camera_id", "temperature_c", "mean_dn", "frames"])
            .sort_values(["camera_id", "temperature_c"], kind="stable"),
            self._emit(self.output_dir / DARK_LEVELS_CSV),
        )
        self._done(PipelineStage.FINGERPRINT)

    def _set_temperature(self, frames, source: Path) -> float:
        override = self._param("temperature_c")
        if override is not None:
            return float(override)
        temps = {f.meta.temperature_c for f in frames}
        if None in temps:
            raise FormatError("frame without temperature_c in its sidecar", source)
        if len(temps) != 1:
            raise FormatError(f"frames disagree on temperature: {sorted(temps)}", source)
        return temps.pop()

    # ---------- correlate ----------

    def _load_query(self, path: Path):
        if path.suffix.lower() == frame_io.PATTERN_SUFFIX:
            residue, meta = frame_io.load_residue(path)
            return residue, meta, None
        frame = frame_io.load_frame(path)
        threshold = float(self._param("sat_threshold", config.SATURATION_THRESHOLD))
        mask = fingerprint.saturation_mask([frame], threshold)
        return fingerprint.masked_residue(frame, mask, **self._residue_kwargs()), frame.meta, mask

    def _correlate(self) -> None:
        self._enter(PipelineStage.CORRELATE)
        pattern_paths = _expand([Path(p) for p in self._param("patterns", [])], frame_io.list_patterns)
        if not pattern_paths:
            raise EmptySet("no reference patterns given")
        patterns: List[Tuple[Path, ReferencePattern]] = sorted(
            ((p, frame_io.load_pattern(p)) for p in pattern_paths),
            key=lambda item: (item[1].temperature_c, str(item[0])),
        )

        pattern_set = {str(Path(p)) for p in self._param("patterns", [])}
        query_inputs = [p for p in self.manifest.inputs if str(p) not in pattern_set]
        query_paths = _expand(query_inputs, frame_io.list_frames)
        if not query_paths:
            raise EmptySet("no query frames given")

        default_camera = str(self._param("camera_id", "unknown"))

        def work(query_path: Path) -> List[CorrelationRecord]:
            residue, meta, mask = self._load_query(query_path)
            camera_id = meta.camera_id or default_camera
            lens_id = meta.lens_id or "default"
            out = []
            for pattern_path, pattern in patterns:
                try:
                    out.append(correlate.correlate_record(residue, pattern, camera_id, lens_id, mask))
                except DimensionMismatch as e:
                    raise DimensionMismatch(f"{query_path} vs {pattern_path}: {e.message}")
            return out

        records = [r for batch in parallel_map(work, query_paths, self.threads) for r in batch]
        self._write_correlations(records)
        self._done(PipelineStage.CORRELATE)

    def _write_correlations(self, records: List[CorrelationRecord]) -> None:
        self._enter(PipelineStage.WRITE)
        correlate.write_records_csv(records, self._emit(self.output_dir / CORRELATIONS_CSV))
        series_frames, summary_frames = [], []
        for camera_id in sorted({r.camera_id for r in records}):
            series = correlate.series_to_frame(correlate.correlation_series(records, camera_id=camera_id))
            summary = correlate.summary_to_frame(correlate.correlation_summary(records, camera_id=camera_id))
            series_frames.append(series.assign(camera_id=camera_id))
            summary_frames.append(summary.assign(camera_id=camera_id))
        series_df = pd.concat(series_frames, ignore_index=True)
        summary_df = pd.concat(summary_frames, ignore_index=True)
        write_csv(series_df[["camera_id"] + correlate.SERIES_COLUMNS], self._emit(self.output_dir / SERIES_CSV))
        write_csv(summary_df[["camera_id"] + correlate.SUMMARY_COLUMNS], self._emit(self.output_dir / SUMMARY_CSV))

    # ---------- fit / estimate-temp ----------

    def _series_input(self) -> Dict[str, List[Tuple[float, float]]]:
        if len(self.manifest.inputs) != 1:
            raise InvalidParam(f"expected exactly one CSV input, got {len(self.manifest.inputs)}")
        return load_series_csv(self.manifest.inputs[0])

    def _fit(self) -> None:
        self._enter(PipelineStage.FIT)
        t_ref_k = float(self._param("t_ref_k", config.T_REF_K))
        t_min = self._param("t_min")
        t_max = self._param("t_max")
        payload = {}
        for camera_id, points in self._series_input().items():
            window = [
                (t, y) for t, y in points
                if (t_min is None or t >= float(t_min)) and (t_max is None or t <= float(t_max))
            ]
            fit = thermal.fit_exponential(window)
            payload[camera_id] = dict(
                fit.model_dump(),
                delta_e_ev=thermal.activation_energy(fit.b, t_ref_k),
                t_ref_k=t_ref_k,
            )
        write_json(payload, self._emit(self.output_dir / EXP_FIT_JSON))
        self._done(PipelineStage.FIT)

    def _estimate_temp(self) -> None:
        self._enter(PipelineStage.FIT)
        payload = {}
        for camera_id, points in self._series_input().items():
            fit = thermal.identify_temperature(
                points,
                grid_step=float(self._param("grid_step", config.GRID_STEP_C)),
                t_ref_k=float(self._param("t_ref_k", config.T_REF_K)),
                forensic_halfwidth_c=float(self._param("forensic_halfwidth", config.FORENSIC_HALFWIDTH_C)),
                camera_id=camera_id,
            )
            payload[camera_id] = fit.model_dump(mode="json")
        write_json(payload, self._emit(self.output_dir / THERMAL_FIT_JSON))
        self._done(PipelineStage.FIT)

    # ---------- benchmark ----------

    def _benchmark(self) -> None:
        self._enter(PipelineStage.BENCHMARK)
        paths = _expand(self.manifest.inputs, frame_io.list_frames)
        frames = [frame_io.load_frame(p) for p in paths]
        report = run_benchmark(
            frames,
            repetitions=int(self._param("repetitions", config.DEFAULT_BENCHMARK_REPETITIONS)),
            spec=self.dct_spec,
            sigma0_sq=self._param("sigma0_sq"),
            levels=int(self._param("levels", config.WAVELET_LEVELS)),
            parallel_threads=self._param("parallel"),
        )
        self._enter(PipelineStage.WRITE)
        write_csv(
            pd.DataFrame([r.model_dump() for r in report.rows],
                         columns=["filter", "frames", "total_s", "delta_s", "delta_pct"]),
            self._emit(self.output_dir / BENCHMARK_CSV),
        )
        write_csv(
            pd.DataFrame([s.model_dump() for s in report.sets],
                         columns=["label", "wavelet_s", "dct_s", "delta_s", "delta_pct"]),
            self._emit(self.output_dir / BENCHMARK_SETS_CSV),
        )
        self._done(PipelineStage.BENCHMARK)


def dispatch(manifest: RunManifest, run_id: Optional[str] = None) -> int:
    """
    Execute a manifest

    Returns:
        0 on success, 1 when a DarkSignalError surfaced (message on stderr)
    """
    token = set_run_id(run_id or uuid.uuid4().hex[:12])
    try:
        logger.info("pipeline_started", extra={
            "component": "services.pipeline",
            "command": manifest.command.value,
            "inputs": len(manifest.inputs),
            "config": config.get_config_summary(),
        })
        return Pipeline(manifest).run()
    finally:
        reset_run_id(token)
