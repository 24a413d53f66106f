"""Time-frequency PPM quantum key distribution: security bounds, simulation, key rates."""
__version__ = "0.1.0"

from .channel_model import ChannelParams, SourceParams
from .decoy import DecoyConfig, DecoyObservables, decoy_estimate
from .frame import DetectorModel, FrameConfig
from .holevo import BiphotonParams, holevo_sup
from .keyrate import KeyRateReport, PointConfig, SecurityParams, evaluate_point, sweep

__all__ = [
    "__version__", "ChannelParams", "SourceParams", "DecoyConfig", "DecoyObservables",
    "decoy_estimate", "DetectorModel", "FrameConfig", "BiphotonParams", "holevo_sup",
    "KeyRateReport", "PointConfig", "SecurityParams", "evaluate_point", "sweep",
]
