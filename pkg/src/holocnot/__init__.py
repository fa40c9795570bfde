"""Simulator and analysis library for a holonomic CNOT gate on two
superconducting qutrits coupled to a bus resonator."""

__version__ = "0.1.0"

from .hilbert import HilbertSpace
from .model import DeviceParams, default_device, load_device_config

__all__ = [
    "HilbertSpace",
    "DeviceParams",
    "default_device",
    "load_device_config",
    "__version__",
]
