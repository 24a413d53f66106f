"""Passive decoy-state estimation from SPDC-frame subgroups.

Bob groups the first ``F1`` (``F2``) bins of each SPDC frame into a subgroup of
mean pair number ``nu1`` (``nu2``).  With the ASE signal intensity ``mu`` these
give lower bounds on the background and single-photon yields and an upper bound
on the single-photon frequency-difference statistic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .holevo import inverse_erf_tail


class DecoyConfigError(ValueError):
    pass


class DecoyFailure(RuntimeError):
    """Single-photon yield bound collapsed to zero; no key can be certified."""


class FluctuationWarning(UserWarning):
    pass


def n_alpha_from_eps(eps_decoy: float) -> float:
    """Gaussian two-sided tail: number of standard deviations for failure probability ``eps``."""
    if not 0.0 < eps_decoy < 1.0:
        raise ValueError("eps_decoy must lie in (0, 1)")
    return math.sqrt(2.0) * inverse_erf_tail(eps_decoy)


@dataclass(frozen=True)
class DecoyConfig:
    """Subgroup sizes in bins.  ``acceptance`` scales ``nu_bin`` to the pair number
    that can actually reach a gated detector (1 for gate-aligned light)."""

    F1_bins: int
    F2_bins: int
    nu_bin: float
    N: int
    n_alpha: float | None = None
    eps_decoy: float = 1e-6
    acceptance: float = 1.0

    def __post_init__(self):
        if self.F2_bins < 1:
            raise DecoyConfigError("F2_bins must be >= 1: an empty subgroup has no observable gain")
        if not self.F2_bins < self.F1_bins <= self.N:
            raise DecoyConfigError(
                f"need 1 <= F2_bins < F1_bins <= N, got F1={self.F1_bins}, F2={self.F2_bins}, N={self.N}")
        if self.nu_bin <= 0:
            raise DecoyConfigError("nu_bin must be positive")
        if not 0.0 < self.acceptance <= 1.0:
            raise DecoyConfigError("acceptance must lie in (0, 1]")
        if self.n_alpha is None:
            object.__setattr__(self, "n_alpha", n_alpha_from_eps(self.eps_decoy))
        if self.n_alpha < 0:
            raise DecoyConfigError("n_alpha must be >= 0")

    @classmethod
    def halves(cls, N: int, nu_bin: float, **kw) -> "DecoyConfig":
        """The N/2, N/4 split, widened to (2, 1) bins for the smallest frames."""
        return cls(F1_bins=max(N // 2, 2), F2_bins=max(N // 4, 1), nu_bin=nu_bin, N=N, **kw)

    @property
    def nu(self) -> float:
        """Detectable pairs per whole SPDC frame."""
        return self.N * self.nu_bin * self.acceptance


@dataclass(frozen=True)
class DecoyObservables:
    """Measured gains per frame and frame counts.

    ``Q_nu`` is the whole-SPDC-frame gain (mean ``N * nu_bin`` pairs) used to
    rescale the frequency statistic; ``omega_diff_sq`` is that statistic.
    """

    Q_mu: float
    Q_nu1: float
    Q_nu2: float
    N_mu: float = math.inf
    N_nu1: float = math.inf
    N_nu2: float = math.inf
    Q_nu: float | None = None
    N_nu: float = math.inf
    omega_diff_sq: float = 0.0

    def __post_init__(self):
        for name in ("Q_mu", "Q_nu1", "Q_nu2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("N_mu", "N_nu1", "N_nu2", "N_nu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class DecoyEstimate:
    Y0_low: float
    Y1_low: float
    Q1_low: float
    freq_bound: float | None
    nu1: float
    nu2: float
    envelopes: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def check_decoy_conditions(nu1: float, nu2: float, mu: float) -> None:
    if not 0.0 <= nu2 < nu1:
        raise DecoyConfigError(f"decoy intensities need 0 <= nu2 < nu1 (nu1={nu1}, nu2={nu2})")
    if not nu1 + nu2 < mu:
        raise DecoyConfigError(f"decoy intensities need nu1 + nu2 < mu ({nu1} + {nu2} >= {mu})")


def partition_decoys(cfg: DecoyConfig, mu: float | None = None) -> tuple[float, float]:
    nu1 = cfg.F1_bins * cfg.nu_bin * cfg.acceptance
    nu2 = cfg.F2_bins * cfg.nu_bin * cfg.acceptance
    if mu is not None:
        check_decoy_conditions(nu1, nu2, mu)
    return nu1, nu2


def y0_lower(Q_nu1: float, Q_nu2: float, nu1: float, nu2: float) -> float:
    if not nu1 > nu2 >= 0:
        raise DecoyConfigError("need nu1 > nu2 >= 0")
    raw = (nu1 * Q_nu2 * math.exp(nu2) - nu2 * Q_nu1 * math.exp(nu1)) / (nu1 - nu2)
    return _clip01(raw)


def y1_lower(Q_mu: float, Q_nu1: float, Q_nu2: float, mu: float, nu1: float, nu2: float,
             y0_low: float) -> float:
    denom = mu * nu1 - mu * nu2 - nu1 ** 2 + nu2 ** 2
    if denom <= 0:
        raise DecoyConfigError("decoy conditions violated: nonpositive Y1 denominator")
    bracket = (Q_nu1 * math.exp(nu1) - Q_nu2 * math.exp(nu2)
               - (nu1 ** 2 - nu2 ** 2) / mu ** 2 * (Q_mu * math.exp(mu) - y0_low))
    return _clip01(mu / denom * bracket)


def q1_lower(mu: float, y1_low: float) -> float:
    return mu * math.exp(-mu) * y1_low


def single_photon_freq_bound(Q_nu: float, omega_diff_sq: float, y1_low: float, nu: float) -> float:
    """Upper bound on the single-pair frequency statistic from the whole-frame one."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if y1_low <= 0:
        raise DecoyFailure("decoy estimation failed: Y1 lower bound is zero")
    return Q_nu * omega_diff_sq / (y1_low * nu * math.exp(-nu))


def gain_fluctuation_bounds(Q: float, N_frames: float, n_alpha: float) -> tuple[float, float]:
    """Q (1 -/+ n_alpha / sqrt(N Q)), lower clamped at 0 and upper at 1."""
    if math.isinf(N_frames) or n_alpha == 0:
        return Q, Q
    if N_frames * Q < 1:
        warnings.warn(f"fewer than one expected click (N*Q = {N_frames * Q:.3g}); "
                      "fluctuation bound is not meaningful", FluctuationWarning, stacklevel=2)
    half = n_alpha * math.sqrt(Q / N_frames)
    return max(0.0, Q - half), min(1.0, Q + half)


def decoy_estimate(obs: DecoyObservables, cfg: DecoyConfig, mu: float) -> DecoyEstimate:
    """Finite-data decoy bounds, each gain pushed to the side that weakens the bound."""
    nu1, nu2 = partition_decoys(cfg, mu)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FluctuationWarning)
        env = {
            "Q_mu": gain_fluctuation_bounds(obs.Q_mu, obs.N_mu, cfg.n_alpha),
            "Q_nu1": gain_fluctuation_bounds(obs.Q_nu1, obs.N_nu1, cfg.n_alpha),
            "Q_nu2": gain_fluctuation_bounds(obs.Q_nu2, obs.N_nu2, cfg.n_alpha),
        }
        if obs.Q_nu is not None:
            env["Q_nu"] = gain_fluctuation_bounds(obs.Q_nu, obs.N_nu, cfg.n_alpha)
    notes = [str(w.message) for w in caught]

    y0 = y0_lower(env["Q_nu1"][1], env["Q_nu2"][0], nu1, nu2)
    y1 = y1_lower(env["Q_mu"][1], env["Q_nu1"][0], env["Q_nu2"][1], mu, nu1, nu2, y0)
    q1 = q1_lower(mu, y1)
    freq = None
    if obs.Q_nu is not None:
        freq = single_photon_freq_bound(env["Q_nu"][1], obs.omega_diff_sq, y1, cfg.nu)
    return DecoyEstimate(Y0_low=y0, Y1_low=y1, Q1_low=q1, freq_bound=freq, nu1=nu1, nu2=nu2,
                         envelopes=env, warnings=notes)
