"""
darksignal command line
Every pipeline parameter is an explicit flag; exit status 0 on success,
1 on data errors, 2 on usage errors
"""

import argparse
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from models import FilterKind, PipelineCommand, RunManifest
from services.logger import get_logger, set_log_level
from services.pipeline import EXIT_USAGE_ERROR, dispatch

logger = get_logger("cli")

_TEMPS_EPS = 1e-9
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


# ==================== ARGUMENT TYPES ====================

def _existing(value: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"path does not exist: {value}")
    return path


def _int_at_least(low: int, high: Optional[int] = None) -> Callable[[str], int]:
    def parse(value: str) -> int:
        try:
            number = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
        if number < low or (high is not None and number > high):
            bounds = f">= {low}" if high is None else f"in [{low}, {high}]"
            raise argparse.ArgumentTypeError(f"must be {bounds}, got {number}")
        return number
    return parse


def _float(value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {value!r}")


def _positive(value: str) -> float:
    number = _float(value)
    if not number > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {number}")
    return number


def _non_negative(value: str) -> float:
    number = _float(value)
    if not number >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {number}")
    return number


def _open_unit(value: str) -> float:
    number = _float(value)
    if not 0 < number < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {number}")
    return number


def _temps(value: str) -> List[float]:
    """START:STOP:STEP, inclusive of STOP"""
    try:
        start, stop, step = (float(part) for part in value.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected START:STOP:STEP, e.g. 10:50:5")
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("need STEP > 0 and STOP >= START")
    count = int(math.floor((stop - start) / step + _TEMPS_EPS))
    return [round(start + i * step, 6) for i in range(count + 1)]


def _csv_list(value: str) -> List[str]:
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


# ==================== SHARED OPTIONS ====================

def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", dest="output_dir", required=True, type=Path,
                        help="Directory for the output artifacts")


def _add_threads(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threads", type=_int_at_least(1),
                        help="Worker threads for batch stages (outputs do not depend on it)")


def _add_dct_wavelet(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cutoff", type=_open_unit,
                        help="DCT cutoff as a multiple of pi rad/sample (default 150/1136)")
    parser.add_argument("--sigma0-sq", type=_positive,
                        help="Wavelet noise variance in DN^2 (default 9 at 8 bit, scaled with bit depth)")
    parser.add_argument("--levels", type=_int_at_least(1), help="Wavelet decomposition levels (default 4)")


def _add_filter(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--filter", dest="filter_kind", choices=[k.value for k in FilterKind],
                        help="Residue filter (default dct)")
    _add_dct_wavelet(parser)


def _add_sat_threshold(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sat-threshold", type=_open_unit,
                        help="Saturation threshold as a fraction of full scale (default 0.95)")


def _filter_params(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "filter": args.filter_kind, "cutoff": args.cutoff,
        "sigma0_sq": args.sigma0_sq, "levels": args.levels,
    }


# ==================== PARSER ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darksignal",
        description="Dark-current sensor fingerprinting: residues, patterns, correlations and thermal fits.",
    )
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS,
                        help="Level of the JSON log written to stderr (default INFO)")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = commands.add_parser("simulate", help="Emit a simulated sensor: profile, dark sets and flat-field queries")
    _add_output(p)
    p.add_argument("--camera-id", help="Sensor name; also the output sub-directory (default cam0)")
    p.add_argument("--width", type=_int_at_least(1))
    p.add_argument("--height", type=_int_at_least(1))
    p.add_argument("--bit-depth", type=_int_at_least(8, 16))
    p.add_argument("--frames", type=_int_at_least(1), help="Dark frames per temperature (default 100)")
    p.add_argument("--temps", type=_temps, help="Dark-set temperatures START:STOP:STEP in C")
    p.add_argument("--query-temp", type=_float, help="Flat-field capture temperature (default 30)")
    p.add_argument("--query-frames", type=_int_at_least(0))
    p.add_argument("--lenses", type=_csv_list, help="Comma-separated lens ids for the query sets")
    p.add_argument("--illuminance", type=_non_negative, help="Photons/pixel/s on the flat fields")
    p.add_argument("--delta-e", type=_float, help="Activation energy in eV (default 0.19)")
    p.add_argument("--dark-electrons", type=_positive,
                   help="Mean dark electrons per pixel at 30 C and the default exposure (default 0.4)")
    p.add_argument("--seed", type=_int_at_least(0, 2 ** 64 - 1))
    _add_threads(p)

    p = commands.add_parser("residue", help="PGM frames (or directories of them) to residue files")
    p.add_argument("inputs", nargs="+", type=_existing)
    _add_output(p)
    _add_filter(p)
    _add_sat_threshold(p)
    _add_threads(p)

    p = commands.add_parser("fingerprint", help="One reference pattern per dark-set directory")
    p.add_argument("inputs", nargs="+", type=_existing, metavar="DARK_SET")
    _add_output(p)
    _add_filter(p)
    _add_sat_threshold(p)
    p.add_argument("--temperature", dest="temperature_c", type=_float,
                   help="Label for the pattern when the sidecars carry no temperature")
    _add_threads(p)

    p = commands.add_parser("correlate", help="Correlate query frames or residues against every pattern")
    p.add_argument("inputs", nargs="+", type=_existing, metavar="QUERY")
    p.add_argument("--patterns", action="append", required=True, type=_existing,
                   help="Pattern file or directory of patterns (repeatable)")
    _add_output(p)
    _add_filter(p)
    _add_sat_threshold(p)
    p.add_argument("--camera-id", help="Camera id for queries whose sidecar has none")
    _add_threads(p)

    p = commands.add_parser("fit", help="Plain exponential fit per camera, with the derived activation energy")
    p.add_argument("series_csv", type=_existing)
    _add_output(p)
    p.add_argument("--t-min", type=_float, help="Lowest temperature included in the fit")
    p.add_argument("--t-max", type=_float, help="Highest temperature included in the fit")
    p.add_argument("--t-ref-k", type=_positive)

    p = commands.add_parser("estimate-temp", help="Identify the capture temperature from the correlation plateau")
    p.add_argument("series_csv", type=_existing)
    _add_output(p)
    p.add_argument("--grid-step", type=_positive)
    p.add_argument("--t-ref-k", type=_positive)
    p.add_argument("--forensic-halfwidth", type=_non_negative)

    p = commands.add_parser("benchmark", help="Time the wavelet baseline against the DCT filter")
    p.add_argument("inputs", nargs="+", type=_existing, metavar="FRAMES")
    _add_output(p)
    p.add_argument("--repetitions", type=_int_at_least(1))
    p.add_argument("--parallel", type=_int_at_least(2),
                   help="Also time a thread pool of this size, reported on separate rows")
    _add_dct_wavelet(p)

    return parser


# ==================== MANIFEST ====================

def _manifest_parts(args: argparse.Namespace):
    command = PipelineCommand(args.command)
    if command is PipelineCommand.SIMULATE:
        return command, [], {
            "camera_id": args.camera_id, "width": args.width, "height": args.height,
            "bit_depth": args.bit_depth, "frames": args.frames, "temps": args.temps,
            "query_temp": args.query_temp, "query_frames": args.query_frames, "lenses": args.lenses,
            "illuminance": args.illuminance, "delta_e": args.delta_e,
            "dark_electrons": args.dark_electrons, "seed": args.seed, "threads": args.threads,
        }
    if command is PipelineCommand.RESIDUE:
        return command, args.inputs, dict(_filter_params(args), sat_threshold=args.sat_threshold, threads=args.threads)
    if command is PipelineCommand.FINGERPRINT:
        return command, args.inputs, dict(
            _filter_params(args), sat_threshold=args.sat_threshold,
            temperature_c=args.temperature_c, threads=args.threads,
        )
    if command is PipelineCommand.CORRELATE:
        return command, args.inputs + args.patterns, dict(
            _filter_params(args), patterns=[str(p) for p in args.patterns],
            sat_threshold=args.sat_threshold, camera_id=args.camera_id, threads=args.threads,
        )
    if command is PipelineCommand.FIT:
        return command, [args.series_csv], {"t_min": args.t_min, "t_max": args.t_max, "t_ref_k": args.t_ref_k}
    if command is PipelineCommand.ESTIMATE_TEMP:
        return command, [args.series_csv], {
            "grid_step": args.grid_step, "t_ref_k": args.t_ref_k,
            "forensic_halfwidth": args.forensic_halfwidth,
        }
    return command, args.inputs, {
        "repetitions": args.repetitions, "parallel": args.parallel, "cutoff": args.cutoff,
        "sigma0_sq": args.sigma0_sq, "levels": args.levels,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the pipeline and return the exit status; argparse exits 2 on bad flags"""
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_log_level(args.log_level)
    command, inputs, params = _manifest_parts(args)
    try:
        manifest = RunManifest(
            command=command,
            inputs=list(inputs),
            params={k: v for k, v in params.items() if v is not None},
            output_dir=args.output_dir,
        )
    except ValidationError as e:
        logger.error("manifest_invalid", extra={"component": "cli", "command": command.value, "error": str(e)})
        sys.stderr.write(f"usage error: {e.errors()[0]['msg']}\n")
        return EXIT_USAGE_ERROR
    return dispatch(manifest)


if __name__ == "__main__":
    sys.exit(main())
