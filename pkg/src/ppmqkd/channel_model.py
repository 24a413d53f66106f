"""Closed-form channel and detector statistics for the PPM link.

Bob's side is modelled as a beam splitter of transmissivity ``eta`` followed by a
threshold detector.  Yields and gains are per *frame*: ``mu`` is the mean photon
number per frame and ``Y0`` the background click probability per frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

# Poisson tail mass beyond this index is < 1e-15 for every mu the model uses (mu <= a few).
POISSON_CUTOFF = 60


@dataclass(frozen=True)
class ChannelParams:
    eta_B: float = 0.18
    alpha: float = 0.2
    length_km: float = 0.0
    Y0: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.eta_B <= 1.0:
            raise ValueError(f"eta_B must lie in (0, 1], got {self.eta_B}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.length_km < 0.0:
            raise ValueError(f"length_km must be >= 0, got {self.length_km}")
        if not 0.0 <= self.Y0 < 1.0:
            raise ValueError(f"Y0 must lie in [0, 1), got {self.Y0}")


@dataclass(frozen=True)
class SourceParams:
    mu_ppm: float = 0.5
    nu_bin: float = 0.005
    p_os: float = 0.7

    def __post_init__(self):
        if self.mu_ppm <= 0.0:
            raise ValueError(f"mu_ppm must be > 0, got {self.mu_ppm}")
        if self.nu_bin <= 0.0:
            raise ValueError(f"nu_bin must be > 0, got {self.nu_bin}")
        if not 0.0 < self.p_os < 1.0:
            raise ValueError(f"p_os must lie in (0, 1), got {self.p_os}")


def system_transmissivity(p: ChannelParams) -> float:
    """eta = eta_B * 10**(-alpha * l / 10)."""
    return p.eta_B * 10.0 ** (-p.alpha * p.length_km / 10.0)


def i_photon_efficiency(eta: float, i: int) -> float:
    """Probability that at least one of ``i`` photons survives a channel of transmissivity ``eta``."""
    if i == 0:
        return 0.0
    # 1 - (1-eta)^i without cancellation for small eta
    return -math.expm1(i * math.log1p(-eta)) if eta < 1.0 else 1.0


def yield_i(p: ChannelParams, eta: float, i: int, exact: bool = True) -> float:
    """Yield of an ``i``-photon state.

    The exact form treats background and signal clicks as independent events;
    ``exact=False`` drops the ``Y0 * eta_i`` cross term (valid for small Y0, eta).
    """
    eta_i = i_photon_efficiency(eta, i)
    if exact:
        return p.Y0 + eta_i - p.Y0 * eta_i
    return p.Y0 + eta_i


def poisson_weight(mu: float, i: int) -> float:
    return math.exp(i * math.log(mu) - mu - math.lgamma(i + 1)) if mu > 0 else float(i == 0)


def gain_i(Y_i: float, mu: float, i: int) -> float:
    """Q_i = Y_i * mu^i e^-mu / i!"""
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    return Y_i * poisson_weight(mu, i)


def overall_gain(p: ChannelParams, eta: float, mu: float) -> float:
    """Honest-channel gain Q_mu = Y0 + 1 - exp(-eta*mu), clipped to 1."""
    return min(1.0, p.Y0 - math.expm1(-eta * mu))


def overall_gain_series(p: ChannelParams, eta: float, mu: float, exact: bool = True,
                        cutoff: int = POISSON_CUTOFF) -> float:
    """Poisson sum of ``gain_i`` over i = 0..cutoff (the unsimplified gain)."""
    return sum(gain_i(yield_i(p, eta, i, exact), mu, i) for i in range(cutoff + 1))


def poisson_mass(mu: float, cutoff: int = POISSON_CUTOFF) -> float:
    return float(sum(poisson_weight(mu, i) for i in range(cutoff + 1)))


def background_yield(dark_prob_per_gate: float, gates: int) -> float:
    """Per-frame background from independent per-gate dark counts."""
    return -math.expm1(gates * math.log1p(-dark_prob_per_gate)) if dark_prob_per_gate < 1 else 1.0


def expected_count_rate(frame, p_os: float, Q_mu: float) -> float:
    """ASE detection rate N_c = P_os * Q_mu / T_f in counts per second.

    ``frame`` is a :class:`~ppmqkd.frame.FrameConfig` or a frame duration in seconds.
    """
    T_f = getattr(frame, "T_f", frame)
    if T_f <= 0:
        raise ValueError("frame duration must be positive")
    return p_os * Q_mu / T_f
