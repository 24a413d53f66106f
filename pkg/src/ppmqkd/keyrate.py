"""Photon information efficiency and secret-key rate of the PPM protocol.

The point evaluation chains the pieces together:

channel gains (analytic or simulated) -> decoy bounds -> Franson visibility at
this distance -> finite-key disturbance budget -> Holevo supremum for the whole
signal (``chi_E``) and for single photons (``chi1_upper``) -> mutual information
-> PIE and key rate.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel_model import ChannelParams, SourceParams, background_yield, overall_gain
from .decoy import (DecoyConfig, DecoyConfigError, DecoyFailure, DecoyObservables,
                    decoy_estimate)
from .frame import DetectorModel, FrameConfig
from .holevo import (BiphotonParams, VisibilityMeasurement, disturbance_budget,
                     finite_key_inflation, franson_visibility, holevo_sup, security_baseline,
                     time_assumptions_for)
from .ppm_sim import SimSetup, estimate_car, simulate, visibility_from_car

IDENTITY_RTOL = 1e-9


class InconsistentBounds(ValueError):
    """A single-photon gain bound exceeds the total gain."""


@dataclass(frozen=True)
class SecurityParams:
    """Knobs of the security and post-processing model.

    ``visibility_ratio`` is the measured V / V^th at zero distance; away from it the
    visibility follows the coincidence-to-accidental ratio.  ``delta_T_mode`` picks
    the Franson delay: ``"fixed"`` uses the biphoton ``delta_T``, ``"frame"`` uses the
    frame duration.  ``finite_key=False`` switches off every statistical inflation.
    """

    beta: float = 0.90
    visibility_ratio: float = 0.997
    m_visibility: int = 100
    eps_pe: float = 1e-5
    delta_T_mode: str = "fixed"
    n_R: float | None = None
    intrinsic_symbol_error: float = 0.005
    car_degradation: bool = True
    finite_key: bool = True
    uniform_factor: float = 1.0 / 12.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 <= self.visibility_ratio <= 1.0:
            raise ValueError("visibility_ratio must lie in [0, 1]")
        if self.m_visibility < 2:
            raise ValueError("m_visibility must be >= 2")
        if not 0.0 < self.eps_pe < 1.0:
            raise ValueError("eps_pe must lie in (0, 1)")
        if self.delta_T_mode not in ("fixed", "frame"):
            raise ValueError("delta_T_mode must be 'fixed' or 'frame'")
        if not 0.0 <= self.intrinsic_symbol_error < 1.0:
            raise ValueError("intrinsic_symbol_error must lie in [0, 1)")


@dataclass(frozen=True)
class PointConfig:
    """Everything one operating point depends on.

    Analytic points take their decoy sample sizes from ``acquisition_time_s`` of
    frames; Monte Carlo points simulate ``mc_frames`` frames.
    """

    frame: FrameConfig = field(default_factory=FrameConfig)
    source: SourceParams = field(default_factory=SourceParams)
    detector: DetectorModel = field(default_factory=DetectorModel)
    biphoton: BiphotonParams = field(default_factory=BiphotonParams)
    security: SecurityParams = field(default_factory=SecurityParams)
    alpha_db_km: float = 0.2
    length_km: float = 0.0
    internal_transmission: float = 1.0
    split: float = 0.5
    eps_decoy: float = 1e-6
    decoy_bins: tuple[int, int] | None = None
    mode: str = "analytic"
    acquisition_time_s: float = 60.0
    mc_frames: int = 2_000_000
    seed: int = 0

    def with_(self, **kw) -> "PointConfig":
        if "N" in kw:
            n = kw.pop("N")
            kw["frame"] = FrameConfig(N=n, tau=self.frame.tau)
        return replace(self, **kw)

    @property
    def N(self) -> int:
        return self.frame.N

    @property
    def eta(self) -> float:
        """Bob's total transmissivity including the detector efficiency."""
        return (self.detector.efficiency * self.internal_transmission
                * 10.0 ** (-self.alpha_db_km * self.length_km / 10.0))

    def decoy_config(self, acceptance: float = 1.0) -> DecoyConfig:
        if self.decoy_bins is None:
            return DecoyConfig.halves(self.N, self.source.nu_bin, eps_decoy=self.eps_decoy,
                                      acceptance=acceptance)
        F1, F2 = self.decoy_bins
        return DecoyConfig(F1, F2, self.source.nu_bin, self.N, eps_decoy=self.eps_decoy,
                           acceptance=acceptance)


@dataclass
class KeyRateReport:
    N: int
    distance_km: float
    Q_mu: float
    Q1_low: float
    chi_E: float
    chi1_upper: float
    I_AB: float
    pie: float
    pie_raw: float
    R: float
    R_raw: float
    photon_reception_rate: float
    key_frame_rate: float
    n_R: float
    beta: float
    eps: dict
    mode: str = "analytic"
    seed: int = 0
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def rate_identity_residual(self) -> float:
        """Relative mismatch between the two algebraic forms of the rate formula."""
        if self.error is not None and self.Q1_low == 0 and self.R_raw == 0:
            return 0.0
        direct = self.key_frame_rate * (self.Q1_low * (self.n_R - self.chi1_upper)
                                        - self.Q_mu * (self.n_R - self.beta * self.I_AB))
        scale = self.key_frame_rate * self.Q_mu * max(self.n_R, 1.0)
        return abs(direct - self.R_raw) / scale if scale > 0 else abs(direct - self.R_raw)

    def as_dict(self) -> dict:
        return asdict(self)


# --- information measures -------------------------------------------------------------

def _xlog2x(p: float) -> float:
    return p * math.log2(p) if p > 0 else 0.0


def mutual_information_analytic(N: int, e: float) -> float:
    """I(A;B) of the N-ary symmetric channel with symbol error probability ``e``."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if not 0.0 <= e <= 1.0 - 1.0 / N + 1e-15:
        raise ValueError(f"symbol error must lie in [0, 1 - 1/N], got {e}")
    e = min(e, 1.0 - 1.0 / N)
    off = e * (math.log2(e) - math.log2(N - 1)) if e > 0 else 0.0
    return max(0.0, math.log2(N) + _xlog2x(1.0 - e) + off)


def mutual_information_empirical(confusion) -> float:
    """Plug-in mutual information of a (sent, decoded) count matrix, in bits."""
    c = np.asarray(confusion, dtype=float)
    total = c.sum()
    if total <= 0:
        raise ValueError("confusion matrix has no counts")
    p = c / total
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max(0.0, (p[nz] * np.log2(p[nz] / (pa @ pb)[nz])).sum()))


def pie_raw(beta: float, I_AB: float, chi_E: float) -> float:
    if beta < 0 or I_AB < 0 or chi_E < 0:
        raise ValueError("pie inputs must be nonnegative")
    return beta * I_AB - chi_E


def pie(beta: float, I_AB: float, chi_E: float) -> float:
    return max(0.0, pie_raw(beta, I_AB, chi_E))


def secret_key_rate_raw(R_f: float, Q1_low: float, n_R: float, chi1_up: float, Q_mu: float,
                        beta: float, I_AB: float) -> float:
    if Q1_low > Q_mu * (1 + 1e-12):
        raise InconsistentBounds(f"Q1_low={Q1_low} exceeds Q_mu={Q_mu}")
    if beta * I_AB > n_R * (1 + 1e-12):
        raise ValueError(f"beta*I_AB={beta * I_AB} exceeds n_R={n_R}")
    return R_f * (Q1_low * (n_R - chi1_up) - Q_mu * (n_R - beta * I_AB))


def secret_key_rate(R_f: float, Q1_low: float, n_R: float, chi1_up: float, Q_mu: float,
                    beta: float, I_AB: float) -> float:
    """R_f [Q1 (n_R - chi1) - Q_mu (n_R - beta I_AB)], clamped at zero."""
    return max(0.0, secret_key_rate_raw(R_f, Q1_low, n_R, chi1_up, Q_mu, beta, I_AB))


# --- analytic model pieces --------------------------------------------------------------

def symbol_error_model(N: int, Y0: float, p_signal: float, intrinsic: float) -> float:
    """First-order error rate of sifted symbols.

    Signal clicks carry the intrinsic (afterpulse and timing) error; background
    clicks land on a uniformly random bin.
    """
    Q = Y0 + p_signal - Y0 * p_signal
    if Q <= 0:
        return 1.0 - 1.0 / N
    e = (intrinsic * p_signal + Y0 * (N - 1) / N) / Q
    return min(e, 1.0 - 1.0 / N)


def franson_visibility_at(cfg: PointConfig, v_theory: float) -> tuple[float, float]:
    """Measured visibility at ``cfg.length_km`` and the CAR that produced it."""
    v0 = cfg.security.visibility_ratio * v_theory
    if not cfg.security.car_degradation:
        return v0, math.inf
    fr_share = 1.0 - cfg.split
    car = estimate_car(cfg.frame, cfg.source, cfg.eta * fr_share, cfg.detector)
    car0 = estimate_car(cfg.frame, cfg.source, cfg.with_(length_km=0.0).eta * fr_share,
                        cfg.detector)
    ref = visibility_from_car(1.0, car0)
    if ref <= 0:
        return 0.0, car
    return v0 * visibility_from_car(1.0, car) / ref, car


@dataclass(frozen=True)
class _Security:
    chi_E: float
    budget: float
    v_theory: float
    v_measured: float
    car: float
    delta_T: float
    inflation: float


def _security_for(cfg: PointConfig) -> tuple[object, _Security]:
    sec = cfg.security
    T_f = cfg.frame.T_f
    ta = time_assumptions_for(T_f, cfg.detector.jitter_rms, cfg.biphoton.sigma_coh,
                              cfg.biphoton.sigma_cor, sec.uniform_factor)
    dT = T_f if sec.delta_T_mode == "frame" else cfg.biphoton.delta_T
    bip = replace(cfg.biphoton, delta_T=dT)
    t0 = security_baseline(bip, ta)
    v_th = franson_visibility(t0, dT)
    v, car = franson_visibility_at(cfg, v_th)
    excess = disturbance_budget(VisibilityMeasurement(v, v_th, sec.m_visibility, sec.eps_pe), dT)
    infl = finite_key_inflation(sec.m_visibility, sec.eps_pe) if sec.finite_key else 1.0
    budget = excess * infl
    chi = holevo_sup(t0, budget)
    return t0, _Security(chi, budget, v_th, v, car, dT, infl)


def analytic_gains(cfg: PointConfig, dc: DecoyConfig) -> dict:
    """Key-path gains per frame for the ASE signal and the SPDC decoy subgroups."""
    eta_key = cfg.eta * cfg.split
    Y0 = background_yield(cfg.detector.dark_prob_per_gate, cfg.N)
    ch = ChannelParams(eta_B=max(cfg.eta, 1e-300), Y0=Y0)
    nu1, nu2 = dc.F1_bins * dc.nu_bin * dc.acceptance, dc.F2_bins * dc.nu_bin * dc.acceptance
    return {
        "Y0": Y0,
        "eta_key": eta_key,
        "Q_mu": overall_gain(ch, eta_key, cfg.source.mu_ppm),
        "Q_nu1": overall_gain(ch, eta_key, nu1),
        "Q_nu2": overall_gain(ch, eta_key, nu2),
        "Q_nu": overall_gain(ch, eta_key, dc.nu),
        "p_signal": -math.expm1(-eta_key * cfg.source.mu_ppm),
    }


def _zero_report(cfg, sec, I_AB, Q_mu, photon_rate, key_rate, n_R, eps, msg, diag):
    pr = pie_raw(cfg.security.beta, I_AB, sec.chi_E)
    return KeyRateReport(N=cfg.N, distance_km=cfg.length_km, Q_mu=Q_mu, Q1_low=0.0,
                         chi_E=sec.chi_E, chi1_upper=math.nan, I_AB=I_AB, pie=max(0.0, pr),
                         pie_raw=pr, R=0.0, R_raw=0.0, photon_reception_rate=photon_rate,
                         key_frame_rate=key_rate, n_R=n_R, beta=cfg.security.beta, eps=eps,
                         mode=cfg.mode, seed=cfg.seed, error=msg, diagnostics=diag)


def evaluate_point(cfg: PointConfig) -> KeyRateReport:
    """Full pipeline for one operating point.

    Decoy failures (conditions violated or a vanishing single-photon yield) give a
    zero-rate report whose ``error`` names the cause; PIE is still reported.
    """
    if cfg.mode not in ("analytic", "montecarlo"):
        raise ValueError(f"mode must be 'analytic' or 'montecarlo', got {cfg.mode!r}")
    sec_p = cfg.security
    N = cfg.N
    n_R = sec_p.n_R if sec_p.n_R is not None else math.log2(N)
    key_rate = cfg.frame.R_f * cfg.source.p_os
    t0, sec = _security_for(cfg)
    eps = {"eps_pe": sec_p.eps_pe, "eps_decoy": cfg.eps_decoy, "m_visibility": sec_p.m_visibility}

    if cfg.mode == "analytic":
        dc = cfg.decoy_config()
        g = analytic_gains(cfg, dc)
        e = symbol_error_model(N, g["Y0"], g["p_signal"], sec_p.intrinsic_symbol_error)
        I_AB = mutual_information_analytic(N, e)
        n_fr = cfg.frame.R_f * cfg.acquisition_time_s if sec_p.finite_key else math.inf
        counts = {"N_mu": n_fr * cfg.source.p_os, "N_nu": n_fr * (1 - cfg.source.p_os)}
        obs_kw = dict(Q_mu=g["Q_mu"], Q_nu1=g["Q_nu1"], Q_nu2=g["Q_nu2"], Q_nu=g["Q_nu"])
    else:
        dc = cfg.decoy_config(acceptance=cfg.detector.gate_acceptance(cfg.frame.tau))
        eta_ch = cfg.eta / cfg.detector.efficiency
        st = simulate(SimSetup(cfg.frame, cfg.source, cfg.detector, min(eta_ch, 1.0), cfg.split, dc),
                      cfg.seed, cfg.mc_frames)
        g = {"Y0": math.nan}
        I_AB = mutual_information_empirical(st.confusion) if st.n_sifted else 0.0
        e = st.symbol_error_rate
        counts = {"N_mu": max(st.n_ase, 1), "N_nu": max(st.n_spdc, 1)}
        obs_kw = dict(Q_mu=st.Q_mu_hat, Q_nu1=st.Q_nu1_hat, Q_nu2=st.Q_nu2_hat, Q_nu=st.Q_nu_hat)

    Q_mu = obs_kw["Q_mu"]
    photon_rate = key_rate * Q_mu
    diag = {"symbol_error": e, "V_th": sec.v_theory, "V": sec.v_measured, "car": sec.car,
            "budget": sec.budget, "delta_T": sec.delta_T, "Y0": g["Y0"]}
    bI = min(sec_p.beta * I_AB, n_R)
    try:
        obs = DecoyObservables(N_mu=counts["N_mu"], N_nu1=counts["N_nu"], N_nu2=counts["N_nu"],
                               N_nu=counts["N_nu"], omega_diff_sq=1.0, **obs_kw)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = decoy_estimate(obs, dc, cfg.source.mu_ppm)
    except (DecoyConfigError, DecoyFailure) as exc:
        msg = str(exc) if isinstance(exc, DecoyFailure) else f"decoy estimation failed: {exc}"
        return _zero_report(cfg, sec, I_AB, Q_mu, photon_rate, key_rate, n_R, eps, msg, diag)
    # freq_bound with a unit statistic is the single-photon rescaling factor
    scale = est.freq_bound
    chi1 = holevo_sup(t0, sec.budget * scale)
    Q1 = min(est.Q1_low, Q_mu)
    diag.update({"Y0_low": est.Y0_low, "Y1_low": est.Y1_low, "freq_scale": scale})
    r_raw = key_rate * (Q1 * (n_R - chi1) - Q_mu * (n_R - bI))
    pr = pie_raw(sec_p.beta, I_AB, sec.chi_E)
    return KeyRateReport(N=N, distance_km=cfg.length_km, Q_mu=Q_mu, Q1_low=Q1, chi_E=sec.chi_E,
                         chi1_upper=chi1, I_AB=bI / sec_p.beta, pie=max(0.0, pr), pie_raw=pr,
                         R=max(0.0, r_raw), R_raw=r_raw, photon_reception_rate=photon_rate,
                         key_frame_rate=key_rate, n_R=n_R, beta=sec_p.beta, eps=eps,
                         mode=cfg.mode, seed=cfg.seed, diagnostics=diag)


# --- sweeps and optimisation ----------------------------------------------------------------

def _safe_eval(cfg: PointConfig) -> KeyRateReport:
    try:
        return evaluate_point(cfg)
    except Exception as exc:  # per-point failure is data, not a crash
        nan = math.nan
        return KeyRateReport(N=cfg.N, distance_km=cfg.length_km, Q_mu=nan, Q1_low=nan, chi_E=nan,
                             chi1_upper=nan, I_AB=nan, pie=nan, pie_raw=nan, R=nan, R_raw=nan,
                             photon_reception_rate=nan, key_frame_rate=nan, n_R=nan,
                             beta=cfg.security.beta, eps={}, mode=cfg.mode, seed=cfg.seed,
                             error=f"{type(exc).__name__}: {exc}")


def sweep(configs, workers: int = 1) -> list[KeyRateReport]:
    """Evaluate independent points; output order follows input order for any ``workers``."""
    configs = list(configs)
    if not configs:
        raise ValueError("sweep needs at least one point")
    if workers <= 1 or len(configs) == 1:
        return [_safe_eval(c) for c in configs]
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
        return list(pool.map(_safe_eval, configs))


def distance_axis(base: PointConfig, distances, Ns=None) -> list[PointConfig]:
    Ns = [base.N] if Ns is None else Ns
    return [base.with_(N=n, length_km=float(l)) for n in Ns for l in distances]


def frame_axis(base: PointConfig, Ns) -> list[PointConfig]:
    return [base.with_(N=n) for n in Ns]


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class MuOptimum:
    mu: float
    value: float
    bracket: tuple[float, float]
    report: KeyRateReport | None = None
    flat: bool = False


def golden_section_max(fun, lo: float, hi: float, tol: float = 1e-6, grid: int = 41):
    """Grid scan to locate the best cell, golden-section refinement inside it."""
    xs = np.linspace(lo, hi, grid)
    ys = np.array([fun(x) for x in xs])
    k = int(np.argmax(ys))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    x, y = (c, fc) if fc >= fd else (d, fd)
    if ys[k] > y:
        x, y = float(xs[k]), float(ys[k])
    return float(x), float(y), xs, ys


def optimize_mu(cfg_or_fun, bounds=(0.05, 1.5), objective: str = "R", tol: float = 1e-6,
                grid: int = 41, near_optimal: float = 0.9) -> MuOptimum:
    """Maximise the key rate (or ``objective="pie"``) over the signal intensity.

    ``cfg_or_fun`` is a :class:`PointConfig` or any callable mu -> value.  The returned
    ``bracket`` spans the grid points whose value is within ``near_optimal`` of the
    optimum.  A flat objective returns the lower bound with a warning.
    """
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValueError("need 0 < lower < upper")
    if callable(cfg_or_fun):
        fun, cfg = cfg_or_fun, None
    else:
        cfg = cfg_or_fun

        def fun(mu):
            rep = _safe_eval(cfg.with_(source=replace(cfg.source, mu_ppm=float(mu))))
            v = getattr(rep, "R" if objective == "R" else "pie")
            return v if math.isfinite(v) else -math.inf

    x, y, xs, ys = golden_section_max(fun, lo, hi, tol, grid)
    finite = ys[np.isfinite(ys)]
    if finite.size == 0 or np.ptp(finite) <= 1e-15 * max(1.0, abs(float(finite.max()))):
        warnings.warn("objective is flat over the bounds; returning the lower bound", stacklevel=2)
        x, y, flat = lo, float(ys[0]), True
    else:
        flat = False
    good = xs[ys >= near_optimal * y] if y > 0 else np.array([x])
    bracket = (float(good.min()), float(good.max())) if good.size else (x, x)
    report = None
    if cfg is not None:
        report = _safe_eval(cfg.with_(source=replace(cfg.source, mu_ppm=x)))
    return MuOptimum(mu=x, value=y, bracket=bracket, report=report, flat=flat)
