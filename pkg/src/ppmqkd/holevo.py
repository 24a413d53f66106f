"""Gaussian time-frequency security engine.

Eve's Holevo information is bounded from the time-frequency covariance matrix
(TFCM) of the biphoton.  Units: seconds and rad/s, hbar = 1, so a pure mode has
symplectic eigenvalue 1/2.

Frequencies follow the correlated-detuning convention: Bob's detuning is measured
downward from half the pump frequency, so the entangled pair has *positive*
frequency covariance.  Under that convention the conjugate pairs are
``(t_A + t_B, w_A - w_B)`` and ``(t_A - t_B, w_A + w_B)``.

A TFCM is stored through its two variances per quadrature and the variance of the
difference, ``<(t_A - t_B)^2>`` and ``<(w_A - w_B)^2>``.  For narrowband states
the covariances are within a few ulps of the variances, and recovering the
difference statistics from raw moments would destroy them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import erfcinv, erfinv

LN2 = math.log(2.0)
PHYS_TOL = 1e-9


class UnphysicalTfcm(ValueError):
    """Covariance matrix violates the time-frequency uncertainty relation."""


@dataclass(frozen=True)
class BiphotonParams:
    """cw-SPDC biphoton: pump coherence time, correlation time, Franson delay.

    ``omega_p`` only fixes a phase convention of the two-photon state and is never
    used numerically.
    """

    sigma_coh: float = 1e-6
    sigma_cor: float = 2e-12
    delta_T: float = 794e-12
    omega_p: float | None = None

    def __post_init__(self):
        if not self.sigma_cor > 0:
            raise ValueError(f"sigma_cor must be positive, got {self.sigma_cor}")
        if not self.sigma_coh > self.sigma_cor:
            raise ValueError("sigma_coh must exceed sigma_cor")
        if not self.delta_T > 0:
            raise ValueError(f"delta_T must be positive, got {self.delta_T}")


@dataclass(frozen=True)
class Tfcm:
    """Two-party TFCM with diagonal 2x2 blocks (no time-frequency cross terms).

    Fields: ``t_A = <t_A^2>``, ``t_B = <t_B^2>``, ``t_dd = <(t_A - t_B)^2>`` and the
    frequency analogues ``w_A``, ``w_B``, ``w_dd``.
    """

    t_A: float
    t_B: float
    t_dd: float
    w_A: float
    w_B: float
    w_dd: float

    @classmethod
    def from_moments(cls, t_A, t_B, t_AB, w_A, w_B, w_AB) -> "Tfcm":
        return cls(t_A, t_B, t_A + t_B - 2 * t_AB, w_A, w_B, w_A + w_B - 2 * w_AB)

    @property
    def t_AB(self) -> float:
        return 0.5 * (self.t_A + self.t_B - self.t_dd)

    @property
    def w_AB(self) -> float:
        return 0.5 * (self.w_A + self.w_B - self.w_dd)

    def blocks(self):
        """(gamma_AA, gamma_AB, gamma_BA, gamma_BB), each diag(time, frequency)."""
        g_AA = np.diag([self.t_A, self.w_A])
        g_AB = np.diag([self.t_AB, self.w_AB])
        g_BB = np.diag([self.t_B, self.w_B])
        return g_AA, g_AB, g_AB.T.copy(), g_BB

    def matrix(self) -> np.ndarray:
        """4x4 matrix ordered (t_A, w_A, t_B, w_B)."""
        g_AA, g_AB, g_BA, g_BB = self.blocks()
        return np.block([[g_AA, g_AB], [g_BA, g_BB]])

    @property
    def is_physical(self) -> bool:
        try:
            symplectic_quantities(self)
        except UnphysicalTfcm:
            return False
        return True


@dataclass(frozen=True)
class Disturbance:
    eta_t: float = 0.0
    eta_w: float = 0.0
    eps_t: float = 0.0
    eps_w: float = 0.0

    def __post_init__(self):
        for name in ("eta_t", "eta_w"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("eps_t", "eps_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class TimeAssumptions:
    """Worst-case time statistics imposed before bounding Eve.

    ``<(t_A - t_B)^2>`` is pinned to the detector jitter squared and both parties'
    arrival-time variance to the frame-integrated variance.
    """

    jitter_rms: float
    frame_time_variance: float

    def __post_init__(self):
        if self.jitter_rms <= 0 or self.frame_time_variance <= 0:
            raise ValueError("time assumptions must be positive")
        if self.jitter_rms ** 2 >= 4 * self.frame_time_variance:
            raise ValueError("jitter too large for the frame variance")


@dataclass(frozen=True)
class VisibilityMeasurement:
    v_measured: float
    v_theory: float
    m_samples: int = 100
    eps_pe: float = 1e-5

    def __post_init__(self):
        if not 0.0 <= self.v_measured <= 1.0:
            raise ValueError(f"v_measured must lie in [0, 1], got {self.v_measured}")
        if not 0.0 < self.v_theory <= 1.0:
            raise ValueError(f"v_theory must lie in (0, 1], got {self.v_theory}")
        if self.m_samples < 1:
            raise ValueError("m_samples must be positive")
        if not 0.0 < self.eps_pe < 1.0:
            raise ValueError("eps_pe must lie in (0, 1)")


class SymplecticQuantities(NamedTuple):
    I1: float
    I2: float
    I3: float
    I4: float
    d_plus: float
    d_minus: float


# --- baseline and disturbance ---------------------------------------------------------

def baseline_tfcm(p: BiphotonParams) -> Tfcm:
    """Pure cw-SPDC TFCM (Gaussian biphoton with pump and correlation envelopes)."""
    coh2, cor2 = p.sigma_coh ** 2, p.sigma_cor ** 2
    if p.sigma_cor >= 2 * p.sigma_coh:
        raise ValueError("sigma_cor >= 2 sigma_coh: covariance signs degenerate")
    t = cor2 / 4 + coh2
    w = 1 / (4 * cor2) + 1 / (16 * coh2)
    return Tfcm(t_A=t, t_B=t, t_dd=cor2, w_A=w, w_B=w, w_dd=1 / (4 * coh2))


def apply_disturbance(t0: Tfcm, d: Disturbance, check: bool = True) -> Tfcm:
    """Scale Bob's variances by (1+eps) and the A-B covariances by (1-eta).

    The difference variances are updated by their increments so that a small
    disturbance of a narrowband state is not lost to rounding.
    """
    t_B = t0.t_B * (1 + d.eps_t)
    w_B = t0.w_B * (1 + d.eps_w)
    t_dd = t0.t_dd + d.eps_t * t0.t_B + 2 * d.eta_t * t0.t_AB
    w_dd = t0.w_dd + d.eps_w * t0.w_B + 2 * d.eta_w * t0.w_AB
    out = Tfcm(t0.t_A, t_B, t_dd, t0.w_A, w_B, w_dd)
    if check:
        symplectic_quantities(out)
    return out


def apply_time_overrides(t0: Tfcm, ta: TimeAssumptions) -> Tfcm:
    s = ta.frame_time_variance
    return replace(t0, t_A=s, t_B=s, t_dd=ta.jitter_rms ** 2)


def frame_time_variance(frame_duration: float, sigma_coh: float = math.inf,
                        uniform_factor: float = 1.0 / 12.0) -> float:
    """Arrival-time variance of a biphoton gated to one frame.

    A uniform arrival over the frame has variance ``T_f**2 / 12``.  A finite pump
    coherence narrows the sum-time envelope further; the two Gaussian envelopes
    combine harmonically, so the result never exceeds ``sigma_coh**2``.
    """
    s_frame = uniform_factor * frame_duration ** 2
    if math.isinf(sigma_coh):
        return s_frame
    return 1.0 / (1.0 / s_frame + 1.0 / sigma_coh ** 2)


def security_baseline(p: BiphotonParams, ta: TimeAssumptions) -> Tfcm:
    """Pure TFCM whose time statistics already satisfy ``ta``.

    Time correlation is limited by the jitter (never tighter than ``sigma_cor``) and
    the sum-time extent by the frame-integrated variance.  The frequency block is
    the one of the pure state with those time statistics, so the unperturbed state
    is physical and the time overrides act as the identity on it.
    """
    cor = max(ta.jitter_rms, p.sigma_cor)
    coh2 = ta.frame_time_variance - cor ** 2 / 4
    if coh2 <= cor ** 2 / 4:
        raise ValueError("frame variance too small for the time correlation")
    return baseline_tfcm(BiphotonParams(sigma_coh=math.sqrt(coh2), sigma_cor=cor,
                                        delta_T=p.delta_T))


def time_assumptions_for(frame_duration: float, jitter_rms: float, sigma_coh: float,
                         sigma_cor: float = 0.0, uniform_factor: float = 1.0 / 12.0
                         ) -> TimeAssumptions:
    jitter = max(jitter_rms, sigma_cor)
    return TimeAssumptions(jitter_rms=jitter,
                           frame_time_variance=frame_time_variance(
                               frame_duration, sigma_coh, uniform_factor))


# --- visibility ---------------------------------------------------------------------

def franson_visibility(t: Tfcm, delta_T: float) -> float:
    """<cos[(w_A - w_B) dT]> for zero-mean Gaussian statistics."""
    return math.exp(-0.5 * t.w_dd * delta_T ** 2)


def disturbance_budget(v: VisibilityMeasurement, delta_T: float) -> float:
    """Largest allowed growth of <(w_A - w_B)^2>, in rad^2/s^2 (clamped at 0)."""
    return max(0.0, 2.0 * (v.v_theory - v.v_measured) / delta_T ** 2)


# --- entropies ------------------------------------------------------------------------

def _excess_stats(t_A, t_B, t_dd, w_A, w_B, w_dd):
    """Return (I1, I2, I3, I4, x_plus, x_minus) with x = d**2 - 1/4.

    Works elementwise on arrays.  With P = <(t_A+t_B)^2>, M = <(t_A-t_B)^2>,
    G = <(w_A+w_B)^2>, D = <(w_A-w_B)^2>, a = t_A - t_B, b = w_A - w_B:

        I1 + I2 - 2 I3 = (P D + M G)/4 + a b/2
        16 I4          = (P M - a^2)(G D - b^2)

    and the excesses x+ + x- and x+ x- follow without subtracting O(1) terms.
    """
    P = 2 * (t_A + t_B) - t_dd
    M = t_dd
    G = 2 * (w_A + w_B) - w_dd
    D = w_dd
    a = t_A - t_B
    b = w_A - w_B
    t_AB = 0.5 * (t_A + t_B - t_dd)
    w_AB = 0.5 * (w_A + w_B - w_dd)
    I1 = t_A * w_A
    I2 = t_B * w_B
    I3 = t_AB * w_AB
    I4 = (P * M - a * a) * (G * D - b * b) / 16.0
    pd1 = P * D - 1.0
    mg1 = M * G - 1.0
    s = 0.25 * (pd1 + mg1) + 0.5 * a * b
    p = (pd1 * mg1 - a * a * G * D - b * b * P * M + a * a * b * b - 2 * a * b) / 16.0
    disc = np.maximum(s * s - 4.0 * p, 0.0)
    root = np.sqrt(disc)
    x_plus = 0.5 * (s + root)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_minus = np.where(x_plus > 0, p / np.where(x_plus > 0, x_plus, 1.0), 0.5 * (s - root))
    return I1, I2, I3, I4, x_plus, x_minus


def _f_from_excess(x):
    """entropy_f evaluated at d = sqrt(1/4 + x), accurate as x -> 0."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    d = np.sqrt(0.25 + x)
    delta = x / (d + 0.5)  # d - 1/2
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(delta > 0, delta * np.log2(np.where(delta > 0, delta, 1.0)), 0.0)
    return (1.0 + delta) * np.log1p(delta) / LN2 - tail


def symplectic_quantities(t: Tfcm) -> SymplecticQuantities:
    I1, I2, I3, I4, xp, xm = _excess_stats(t.t_A, t.t_B, t.t_dd, t.w_A, t.w_B, t.w_dd)
    if min(t.t_A, t.t_B, t.w_A, t.w_B) <= 0 or xm < -PHYS_TOL:
        raise UnphysicalTfcm(f"smallest symplectic eigenvalue below 1/2 (d^2 - 1/4 = {float(xm):.3e})")
    return SymplecticQuantities(float(I1), float(I2), float(I3), float(I4),
                                math.sqrt(0.25 + max(float(xp), 0.0)),
                                math.sqrt(0.25 + max(float(xm), 0.0)))


def entropy_f(d: float) -> float:
    """Von Neumann entropy in bits of a thermal mode with symplectic eigenvalue ``d``."""
    if d < 0.5 - PHYS_TOL:
        raise ValueError(f"symplectic eigenvalue {d} below 1/2")
    x = (d - 0.5) * (d + 0.5)
    return float(_f_from_excess(x))


def joint_entropy(t: Tfcm) -> float:
    """S(rho_AB) = f(d+) + f(d-)."""
    _, _, _, _, xp, xm = _excess_stats(t.t_A, t.t_B, t.t_dd, t.w_A, t.w_B, t.w_dd)
    if xm < -PHYS_TOL:
        raise UnphysicalTfcm("joint state is unphysical")
    return float(_f_from_excess(xp) + _f_from_excess(xm))


def _conditional_excess(t_A, t_B, t_dd, w_B):
    """det(gamma_B|t_A) - 1/4 for Bob conditioned on Alice's arrival time."""
    P = 2 * (t_A + t_B) - t_dd
    a = t_A - t_B
    cond_t = (P * t_dd - a * a) / (4 * t_A)  # <t_B^2> - <t_A t_B>^2 / <t_A^2>
    return cond_t * w_B - 0.25


def conditional_entropy_given_tA(t: Tfcm) -> float:
    if t.t_A <= 0:
        raise ValueError("Alice's time variance must be positive")
    x = _conditional_excess(t.t_A, t.t_B, t.t_dd, t.w_B)
    if x < -PHYS_TOL:
        raise UnphysicalTfcm("conditional state is unphysical")
    return float(_f_from_excess(x))


def holevo_chi_raw(t: Tfcm) -> float:
    return joint_entropy(t) - conditional_entropy_given_tA(t)


def holevo_chi(t: Tfcm) -> float:
    """chi = S(AB) - S(B|t_A), clamped at zero."""
    return max(0.0, holevo_chi_raw(t))


def chi_grid(t: Tfcm, eta_w, eps_w):
    """Vectorised chi over frequency disturbances; NaN where unphysical."""
    eta_w = np.asarray(eta_w, dtype=float)
    eps_w = np.asarray(eps_w, dtype=float)
    w_B = t.w_B * (1 + eps_w)
    w_dd = t.w_dd + eps_w * t.w_B + 2 * eta_w * t.w_AB
    _, _, _, _, xp, xm = _excess_stats(t.t_A, t.t_B, t.t_dd, t.w_A, w_B, w_dd)
    xc = _conditional_excess(t.t_A, t.t_B, t.t_dd, w_B)
    chi = _f_from_excess(xp) + _f_from_excess(xm) - _f_from_excess(xc)
    ok = (xm >= -PHYS_TOL) & (xc >= -PHYS_TOL)
    return np.where(ok, np.maximum(chi, 0.0), np.nan)


# --- supremum -------------------------------------------------------------------------

class SupResult(NamedTuple):
    chi: float
    eta_w: float
    eps_w: float
    boundary_chi: float
    grid_chi: float


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(fun, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    x = c if fc >= fd else d
    return x, max(fc, fd)


def _boundary_point(theta, budget, b, e, eta_cap):
    """Point on the constraint line eps*b + 2*eta*e = budget, theta in [0, 1]."""
    theta = np.asarray(theta, dtype=float)
    eta = np.minimum(theta * budget / (2 * e), eta_cap) if e > 0 else np.zeros_like(theta)
    eps = (budget - 2 * eta * e) / b
    return eta, eps


def maximize_holevo(t0: Tfcm, budget: float, time_overrides: TimeAssumptions | None = None,
                    grid_size: int = 200, boundary_samples: int = 64) -> SupResult:
    """Supremum of chi over frequency disturbances with eps*<w_B^2> + 2*eta*<w_A w_B> <= budget.

    Golden-section search along the constraint boundary, cross-checked by a
    ``grid_size``^2 sweep of the feasible triangle; the larger value wins.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    t = apply_time_overrides(t0, time_overrides) if time_overrides is not None else t0
    b, e = t.w_B, t.w_AB
    if budget == 0:
        chi = float(chi_grid(t, 0.0, 0.0))
        if math.isnan(chi):
            raise UnphysicalTfcm("undisturbed TFCM is unphysical under the time assumptions")
        return SupResult(chi, 0.0, 0.0, chi, chi)

    eta_cap = 1.0 if e > 0 else 0.0
    eta_max = min(eta_cap, budget / (2 * e)) if e > 0 else 0.0
    eps_max = budget / b

    def on_boundary(theta):
        eta, eps = _boundary_point(theta, budget, b, e, eta_cap)
        v = chi_grid(t, eta, eps)
        return np.where(np.isnan(v), -np.inf, v)

    thetas = np.linspace(0.0, 1.0, boundary_samples + 1)
    vals = on_boundary(thetas)
    best_b, best_theta = -np.inf, 0.0
    if np.isfinite(vals).any():
        k = int(np.argmax(vals))
        lo, hi = thetas[max(k - 1, 0)], thetas[min(k + 1, boundary_samples)]
        theta, val = _golden_max(lambda th: float(on_boundary(th)), lo, hi)
        if val < vals[k]:
            theta, val = thetas[k], float(vals[k])
        best_b, best_theta = val, theta

    etas = np.linspace(0.0, eta_max, grid_size)
    epss = np.linspace(0.0, eps_max, grid_size)
    E, S = np.meshgrid(etas, epss, indexing="ij")
    feasible = S * b + 2 * E * e <= budget * (1 + 1e-12)
    grid = np.where(feasible, chi_grid(t, E, S), np.nan)
    best_g = -np.inf
    if np.isfinite(grid).any():
        idx = np.unravel_index(np.nanargmax(grid), grid.shape)
        best_g = float(grid[idx])

    if not (np.isfinite(best_b) or np.isfinite(best_g)):
        raise UnphysicalTfcm("no physical TFCM satisfies the constraint")
    if best_b >= best_g:
        eta, eps = _boundary_point(best_theta, budget, b, e, eta_cap)
        return SupResult(float(best_b), float(eta), float(eps), float(best_b), float(best_g))
    return SupResult(best_g, float(E[idx]), float(S[idx]), float(best_b), best_g)


def holevo_sup(t0: Tfcm, budget: float, time_overrides: TimeAssumptions | None = None) -> float:
    return maximize_holevo(t0, budget, time_overrides).chi


# --- finite statistics ----------------------------------------------------------------

def inverse_erf(y: float) -> float:
    if not 0.0 <= y < 1.0:
        raise ValueError(f"inverse_erf needs 0 <= y < 1, got {y}")
    return float(erfinv(y))


def inverse_erf_tail(eps: float) -> float:
    """``erfinv(1 - eps)`` evaluated as ``erfcinv(eps)``, accurate for small ``eps``."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"inverse_erf_tail needs 0 < eps <= 1, got {eps}")
    return float(erfcinv(eps))


def finite_key_inflation(m: int, eps_pe: float) -> float:
    if m < 2:
        raise ValueError("need at least two visibility measurements")
    if not 0.0 < eps_pe <= 1.0:
        raise ValueError("eps_pe must lie in (0, 1]")
    return 1.0 + 2.0 / math.sqrt(m) * inverse_erf_tail(eps_pe)


def finite_key_frequency_bound(omega_diff_sq: float, m: int, eps_pe: float) -> float:
    """Upper confidence bound on a frequency-difference statistic from ``m`` visibility runs."""
    return omega_diff_sq * finite_key_inflation(m, eps_pe)
