"""
Exponential thermal model
Fits y = a * exp(b * t) to correlation-vs-temperature series, locates the plateau
onset t* of y = a * exp(b * min(t, t*)), and converts the slope b into an
activation energy
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

import config
from models import ExponentialFit, ThermalFit
from services.errors import (
    AllNonPositive,
    FitError,
    InsufficientData,
    InvalidParam,
    MonotoneDecreasing,
    NoConvergence,
)
from services.logger import get_logger

logger = get_logger("services.thermal")

Point = Tuple[float, float]

_GRID_EPS = 1e-9


def _as_arrays(points: Sequence[Point]) -> Tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise InvalidParam("series contains NaN or Inf")
    return arr[:, 0], arr[:, 1]


def _r_squared(y: np.ndarray, sse: float) -> float:
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        # constant data: a perfect fit explains everything there is
        return 1.0 if sse <= 1e-20 * max(float(np.dot(y, y)), 1e-300) else 0.0
    return 1.0 - sse / sst


def adjusted_r2(r2: float, n: int, p: int = 2) -> float:
    dof = n - p - 1
    if dof <= 0:
        return r2
    return 1.0 - (1.0 - r2) * (n - 1) / dof


def fit_exponential(points: Sequence[Point], strict: bool = False) -> ExponentialFit:
    """
    Least-squares fit of y = a * exp(b * t) in the linear domain

    Non-positive y are left out of the log-domain initialization but kept for
    the refinement. Refinement is Levenberg-Marquardt on the centred form
    A * exp(b * (t - mean t)), stopping at a relative SSE change of 1e-12 or
    200 evaluations.

    Args:
        points: (t_c, y) pairs, at least 3 distinct temperatures
        strict: raise NoConvergence instead of returning a flagged fit

    Raises:
        InsufficientData, AllNonPositive, NoConvergence (strict only)
    """
    t, y = _as_arrays(points)
    if t.size < 3 or np.unique(t).size < 3:
        raise InsufficientData(f"need >= 3 points with distinct t, got {t.size} ({np.unique(t).size} distinct)")

    positive = y > 0
    if not positive.any():
        raise AllNonPositive("every y is <= 0; log-domain initialization impossible")
    dropped = [float(v) for v in t[~positive]]
    if np.unique(t[positive]).size < 2:
        raise InsufficientData("fewer than 2 distinct temperatures with positive y")

    b0, ln_a0 = np.polyfit(t[positive], np.log(y[positive]), 1)
    t_mid = float(t.mean())
    dt = t - t_mid
    x0 = np.array([math.exp(ln_a0 + b0 * t_mid), b0])

    def residuals(x):
        return x[0] * np.exp(x[1] * dt) - y

    def jacobian(x):
        e = np.exp(x[1] * dt)
        return np.column_stack([e, x[0] * dt * e])

    try:
        result = least_squares(
            residuals, x0, jac=jacobian, method="lm",
            ftol=config.FIT_REL_TOL, xtol=config.FIT_REL_TOL, gtol=config.FIT_REL_TOL,
            max_nfev=config.FIT_MAX_EVALS,
        )
        x, status, nfev = result.x, result.status, int(result.nfev)
    except ValueError as e:
        raise NoConvergence(f"refinement failed: {e}")

    big_a, b = float(x[0]), float(x[1])
    a = big_a * math.exp(-b * t_mid)
    sse = float(np.sum((a * np.exp(b * t) - y) ** 2))
    r2 = _r_squared(y, sse)
    fit = ExponentialFit(
        a=a,
        b=b,
        r2=r2,
        adj_r2=adjusted_r2(r2, int(t.size)),
        sse=sse,
        n_points=int(t.size),
        dropped_t=dropped,
        converged=status > 0,
        evaluations=nfev,
    )

    if not fit.converged:
        if strict:
            raise NoConvergence(f"no convergence within {config.FIT_MAX_EVALS} evaluations", best=fit)
        logger.warning("fit_no_convergence", extra={
            "component": "services.thermal",
            "evaluations": nfev,
            "a": a,
            "b": b,
        })
    return fit


# ==================== ENERGY ====================

def activation_energy(b: float, t_ref_k: float = config.T_REF_K) -> float:
    """
    Delta E in eV from the per-degree slope

    Matches d ln(T^2 exp(-dE / kT)) / dT = 2/T + dE / (k T^2) to b at T = t_ref_k.
    """
    if not t_ref_k > 0:
        raise InvalidParam(f"t_ref_k must be positive, got {t_ref_k}")
    k = config.BOLTZMANN_EV_PER_K
    return k * t_ref_k * t_ref_k * b - 2.0 * k * t_ref_k


def slope_from_energy(delta_e_ev: float, t_ref_k: float = config.T_REF_K) -> float:
    if not t_ref_k > 0:
        raise InvalidParam(f"t_ref_k must be positive, got {t_ref_k}")
    k = config.BOLTZMANN_EV_PER_K
    return delta_e_ev / (k * t_ref_k * t_ref_k) + 2.0 / t_ref_k


def estimate_activation_energy(
    points: Sequence[Point],
    t_ref_k: float = config.T_REF_K,
    halfwidth_c: Optional[float] = None,
) -> Tuple[ExponentialFit, float]:
    """Fit a dark-level series (optionally only within t_ref +/- halfwidth) and convert its slope"""
    if halfwidth_c is not None:
        t_ref_c = t_ref_k - config.KELVIN_OFFSET
        points = [(t, y) for t, y in points if abs(t - t_ref_c) <= halfwidth_c + _GRID_EPS]
    fit = fit_exponential(points)
    return fit, activation_energy(fit.b, t_ref_k)


# ==================== PLATEAU SEARCH ====================

def temperature_grid(t_min: float, t_max: float, step: float = config.GRID_STEP_C) -> List[float]:
    if not step > 0:
        raise InvalidParam(f"grid step must be positive, got {step}")
    count = int(math.floor((t_max - t_min) / step + _GRID_EPS))
    return [round(t_min + k * step, 10) for k in range(count + 1)]


def identify_temperature(
    points: Sequence[Point],
    grid_step: float = config.GRID_STEP_C,
    t_ref_k: float = config.T_REF_K,
    forensic_halfwidth_c: float = config.FORENSIC_HALFWIDTH_C,
    camera_id: Optional[str] = None,
) -> ThermalFit:
    """
    Grid search for the plateau onset t*

    For each candidate t* the rising points (t <= t*) get an exponential fit and
    the remaining points are scored against the constant a * exp(b * t*). The
    lowest total SSE wins; ties go to the lowest t*.

    Raises:
        InsufficientData: fewer than 4 points / 3 temperatures, or no candidate
            leaves a fittable rising segment
        MonotoneDecreasing: the best rising segment does not rise
    """
    t, y = _as_arrays(points)
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    if t.size < 4 or np.unique(t).size < 3:
        raise InsufficientData(f"need >= 4 points spanning >= 3 temperatures, got {t.size}")

    fits: Dict[int, Optional[ExponentialFit]] = {}
    best = None
    for t_star in temperature_grid(float(t[0]), float(t[-1]), grid_step):
        n_left = int(np.searchsorted(t, t_star + _GRID_EPS, side="right"))
        if n_left not in fits:
            fits[n_left] = None
            if np.unique(t[:n_left]).size >= 3:
                try:
                    fits[n_left] = fit_exponential(list(zip(t[:n_left], y[:n_left])))
                except FitError as e:
                    logger.debug("plateau_candidate_skipped", extra={
                        "component": "services.thermal",
                        "n_left": n_left,
                        "reason": str(e),
                    })
        fit = fits[n_left]
        if fit is None:
            continue
        plateau = fit.a * math.exp(fit.b * t_star)
        total = fit.sse + float(np.sum((y[n_left:] - plateau) ** 2))
        if best is None or total < best[0]:
            best = (total, t_star, n_left, fit, plateau)

    if best is None:
        raise InsufficientData("no candidate t* leaves 3 rising temperatures to fit")
    total, t_star, n_left, fit, plateau = best
    if fit.b <= 0 or fit.a <= 0:
        raise MonotoneDecreasing(f"no rising segment (a={fit.a:.6g}, b={fit.b:.6g})")

    result = ThermalFit(
        camera_id=camera_id,
        a=fit.a,
        b=fit.b,
        adj_r2=fit.adj_r2,
        t_star_c=t_star,
        forensic_range_c=(t_star - forensic_halfwidth_c, t_star + forensic_halfwidth_c),
        forensic_halfwidth_c=forensic_halfwidth_c,
        delta_e_ev=activation_energy(fit.b, t_ref_k),
        t_ref_k=t_ref_k,
        plateau_rho=plateau,
        sse=total,
        n_rising=n_left,
    )
    logger.info("temperature_identified", extra={
        "component": "services.thermal",
        "camera_id": camera_id,
        "t_star_c": t_star,
        "adj_r2": fit.adj_r2,
        "delta_e_ev": result.delta_e_ev,
    })
    return result


def model_curve(fit: ThermalFit, temperatures: Sequence[float]) -> np.ndarray:
    """a * exp(b * min(t, t*))"""
    t = np.minimum(np.asarray(temperatures, dtype=np.float64), fit.t_star_c)
    return fit.a * np.exp(fit.b * t)
