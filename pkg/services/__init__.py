"""
Services package for the darksignal toolkit
Frame I/O, residue filters, fingerprints, correlation, thermal fits, the sensor
simulator and the pipeline dispatcher
"""

from .errors import DarkSignalError
from .logger import get_logger

__all__ = [
    'DarkSignalError',
    'get_logger',
]
