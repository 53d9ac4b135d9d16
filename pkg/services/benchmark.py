"""
Filter run-time comparison
Times the wavelet baseline and the DCT filter over the same preloaded frames
"""

import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import config
from models import BenchmarkReport, BenchmarkRow, BenchmarkSet, DctFilterSpec, FilterKind, Frame
from services.errors import EmptySet, InvalidParam
from services.filters import dct_residue, wavelet_residue
from services.frame_io import list_frames, load_frame
from services.logger import get_logger
from services.workers import parallel_map

logger = get_logger("services.benchmark")


def _timed(fn: Callable[[Frame], object], frames: Sequence[Frame], threads: int) -> float:
    start = time.perf_counter()
    parallel_map(fn, frames, threads)
    return time.perf_counter() - start


def _delta(wavelet_s: float, dct_s: float) -> Tuple[float, float]:
    delta = dct_s - wavelet_s
    return delta, (100.0 * delta / wavelet_s if wavelet_s > 0 else 0.0)


def _totals(label_suffix: str, frames: int, wavelet_s: float, dct_s: float) -> List[BenchmarkRow]:
    delta, pct = _delta(wavelet_s, dct_s)
    return [
        BenchmarkRow(filter=FilterKind.WAVELET.value + label_suffix, frames=frames,
                     total_s=wavelet_s, delta_s=0.0, delta_pct=0.0),
        BenchmarkRow(filter=FilterKind.DCT.value + label_suffix, frames=frames,
                     total_s=dct_s, delta_s=delta, delta_pct=pct),
    ]


def run_benchmark(
    frames: Union[str, Path, Sequence[Frame]],
    repetitions: int = config.DEFAULT_BENCHMARK_REPETITIONS,
    spec: Optional[DctFilterSpec] = None,
    sigma0_sq: Optional[float] = None,
    levels: int = config.WAVELET_LEVELS,
    parallel_threads: Optional[int] = None,
) -> BenchmarkReport:
    """
    Time both residue filters over identical inputs

    Frames are loaded before the clock starts. Each repetition is one "Set NN"
    row; the per-filter rows carry totals over all repetitions with
    delta = dct - wavelet. The headline rows are single-threaded; when
    parallel_threads > 1 a separately labelled pair of thread-pool rows follows.

    Raises:
        EmptySet: no frames
        InvalidParam: repetitions < 1
    """
    if isinstance(frames, (str, Path)):
        frames = [load_frame(path) for path in list_frames(frames)]
    frames = list(frames)
    if not frames:
        raise EmptySet("benchmark needs at least one frame")
    if repetitions < 1:
        raise InvalidParam(f"repetitions must be >= 1, got {repetitions}")

    spec = spec or DctFilterSpec()

    def run_wavelet(frame):
        return wavelet_residue(frame, sigma0_sq=sigma0_sq, levels=levels)

    def run_dct(frame):
        return dct_residue(frame, spec)

    sets = []
    for rep in range(repetitions):
        wavelet_s = _timed(run_wavelet, frames, 1)
        dct_s = _timed(run_dct, frames, 1)
        delta, pct = _delta(wavelet_s, dct_s)
        sets.append(BenchmarkSet(
            label=f"Set {rep + 1:02d}", wavelet_s=wavelet_s, dct_s=dct_s, delta_s=delta, delta_pct=pct,
        ))

    rows = _totals("", len(frames), sum(s.wavelet_s for s in sets), sum(s.dct_s for s in sets))
    threads = 1
    if parallel_threads and parallel_threads > 1:
        threads = parallel_threads
        wavelet_s = sum(_timed(run_wavelet, frames, threads) for _ in range(repetitions))
        dct_s = sum(_timed(run_dct, frames, threads) for _ in range(repetitions))
        rows += _totals(f"-parallel{threads}", len(frames), wavelet_s, dct_s)

    report = BenchmarkReport(frames=len(frames), repetitions=repetitions, threads=threads, rows=rows, sets=sets)
    logger.info("benchmark_done", extra={
        "component": "services.benchmark",
        "frames": len(frames),
        "repetitions": repetitions,
        "wavelet_s": rows[0].total_s,
        "dct_s": rows[1].total_s,
        "delta_pct": rows[1].delta_pct,
    })
    return report
