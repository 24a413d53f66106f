"""Frame geometry and detector description shared by the analytic and Monte Carlo paths."""
from __future__ import annotations

import math
from dataclasses import dataclass

GATE_FREQUENCY = 1.26e9  # Hz, self-differencing SPAD gating
BIN_DURATION = 1.0 / GATE_FREQUENCY  # ~794 ps


@dataclass(frozen=True)
class FrameConfig:
    """PPM frame of ``N`` bins of duration ``tau``; ``R_f`` defaults to back-to-back frames."""

    N: int = 8
    tau: float = BIN_DURATION
    R_f: float | None = None

    def __post_init__(self):
        if self.N < 2 or self.N > 1024 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two in [2, 1024], got {self.N}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.R_f is None:
            object.__setattr__(self, "R_f", 1.0 / self.T_f)
        if self.R_f <= 0 or self.R_f > 1.0 / self.T_f * (1 + 1e-12):
            raise ValueError(f"frame rate R_f={self.R_f} exceeds 1/T_f={1.0 / self.T_f}")

    @property
    def T_f(self) -> float:
        return self.N * self.tau

    @property
    def k(self) -> int:
        return int(math.log2(self.N))


@dataclass(frozen=True)
class DetectorModel:
    """Gated InGaAs SPAD.

    ``afterpulse_prob`` is the total probability that a click spawns one afterpulse;
    its delay (in gates) is geometric with mean ``afterpulse_time / tau``.
    """

    efficiency: float = 0.18
    dark_prob_per_gate: float = 8e3 / GATE_FREQUENCY
    gate_width: float = 100e-12
    afterpulse_prob: float = 0.0
    afterpulse_time: float = 10e-9
    jitter_rms: float = 30e-12
    max_record_rate: float = math.inf

    def __post_init__(self):
        for name in ("efficiency", "dark_prob_per_gate", "afterpulse_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.gate_width <= 0:
            raise ValueError("gate_width must be positive")
        if self.afterpulse_time <= 0:
            raise ValueError("afterpulse_time must be positive")
        if self.jitter_rms <= 0:
            raise ValueError("jitter_rms must be positive")
        if self.max_record_rate <= 0:
            raise ValueError("max_record_rate must be positive")

    def gate_acceptance(self, tau: float) -> float:
        """Fraction of a cw photon's bin that falls inside the detection gate."""
        return min(1.0, self.gate_width / tau)
