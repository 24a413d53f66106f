"""Monte Carlo simulation of the PPM protocol (source, channel, detection, sifting)."""
from .core import (ASE, CHUNK_FRAMES, NO_CLICK, PATH_FRANSON, PATH_KEY, SPDC, BobRecords,
                   EmpiricalStats, FrameBatch, FrameRecord, detect, estimate_car, frame_records,
                   generate_frames, sift, transmit, visibility_from_car)
from .kernels import BACKEND
from .run import SimSetup, dump_ledger, read_ledger, simulate

__all__ = [
    "ASE", "SPDC", "PATH_KEY", "PATH_FRANSON", "NO_CLICK", "CHUNK_FRAMES", "BACKEND",
    "FrameBatch", "BobRecords", "FrameRecord", "EmpiricalStats", "SimSetup",
    "generate_frames", "transmit", "detect", "sift", "frame_records",
    "visibility_from_car", "estimate_car", "simulate", "dump_ledger", "read_ledger",
]
