"""
Configuration module for the darksignal toolkit
Pipeline defaults live here as constants; only logging reads the environment
"""

import math
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# ==================== LOGGING CONFIGURATION ====================

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('LOG_FILE')

# ==================== FILTER CONFIGURATION ====================

# Cutoff as a multiple of pi radians/sample
DCT_CUTOFF_FRACTION = 150 / 1136
DCT_CUTOFF_RADIANS = DCT_CUTOFF_FRACTION * math.pi
DCT_HALF_GAIN = 0.5

WAVELET_NAME = 'db8'
WAVELET_LEVELS = 4
WAVELET_SIGMA0_SQ_8BIT = 9.0
WIENER_WINDOW_SIZES = (3, 5, 7, 9)

# ==================== FINGERPRINT CONFIGURATION ====================

SATURATION_THRESHOLD = 0.95
# Square window for the local mean written over saturated pixels before filtering
SATURATION_FILL_WINDOW = 5

# ==================== THERMAL MODEL CONFIGURATION ====================

BOLTZMANN_EV_PER_K = 8.617333e-5
KELVIN_OFFSET = 273.15
T_REF_K = 303.15
GRID_STEP_C = 0.05
FORENSIC_HALFWIDTH_C = 4.5
FIT_REL_TOL = 1e-12
FIT_MAX_EVALS = 200

# ==================== SIMULATOR CONFIGURATION ====================

SIM_BIT_DEPTH = 10
SIM_N_MAX_E = 4000.0
SIM_DELTA_E_EV = 0.19
SIM_DARK_SIGMA_LN = 0.4
SIM_PRNU_SIGMA = 0.01
SIM_HOT_PIXEL_FRACTION = 5e-4
SIM_READ_NOISE_E = 3.0
# Mean dark electrons at the reference point, used to calibrate j0
SIM_DARK_E_AT_REF = 0.4
SIM_EXPOSURE_S = 1 / 1008
SIM_TEMPERATURES_C = tuple(float(t) for t in range(10, 51, 5))
SIM_FRAMES_PER_SET = 100
SIM_QUERY_TEMPERATURE_C = 30.0
SIM_QUERY_FRAMES = 50
# photons/pixel/s; about one photo-electron per frame at the default exposure
SIM_ILLUMINANCE = 1008.0
SIM_GAUSSIAN_CUTOVER_E = 1000.0
SIM_TEMPERATURE_RANGE_C = (-50.0, 120.0)

# ==================== EXECUTION ====================

DEFAULT_THREADS = 1
DEFAULT_BENCHMARK_REPETITIONS = 1

# ==================== UTILITY FUNCTIONS ====================

def default_sigma0_sq(bit_depth: int) -> float:
    """Wavelet noise variance scaled from the 8-bit default to deeper rasters"""
    return WAVELET_SIGMA0_SQ_8BIT * float(2 ** (bit_depth - 8)) ** 2


def get_config_summary() -> dict:
    """
    Get configuration summary for debugging

    Returns:
        Dictionary with the effective pipeline defaults
    """
    return {
        'log_level': LOG_LEVEL,
        'log_file': bool(LOG_FILE),
        'dct_cutoff_radians': DCT_CUTOFF_RADIANS,
        'wavelet': {'name': WAVELET_NAME, 'levels': WAVELET_LEVELS},
        'saturation_threshold': SATURATION_THRESHOLD,
        'thermal': {
            'grid_step_c': GRID_STEP_C,
            't_ref_k': T_REF_K,
            'forensic_halfwidth_c': FORENSIC_HALFWIDTH_C,
        },
        'simulator': {
            'bit_depth': SIM_BIT_DEPTH,
            'delta_e_ev': SIM_DELTA_E_EV,
            'exposure_s': SIM_EXPOSURE_S,
            'frames_per_set': SIM_FRAMES_PER_SET,
        },
        'threads': DEFAULT_THREADS,
    }
