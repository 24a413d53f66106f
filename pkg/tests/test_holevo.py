import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppmqkd.holevo import (BiphotonParams, Disturbance, TimeAssumptions, Tfcm, UnphysicalTfcm,
                           VisibilityMeasurement, apply_disturbance, apply_time_overrides,
                           baseline_tfcm, chi_grid, conditional_entropy_given_tA,
                           disturbance_budget, entropy_f, finite_key_frequency_bound,
                           finite_key_inflation, frame_time_variance, franson_visibility,
                           holevo_chi, holevo_sup, inverse_erf, joint_entropy, maximize_holevo,
                           security_baseline, symplectic_quantities, time_assumptions_for)

K_M100 = 1.624682654868175  # 1 + 0.2 erfinv(1 - 1e-5), mpmath


def _mp_symplectic(t: Tfcm, dps=60):
    """Symplectic spectrum from |eig(i Omega gamma)| in high precision.

    Bob's frequency sign is flipped so the pair carries the usual anti-correlation.
    """
    mpmath.mp.dps = dps
    m = mpmath.mpf
    tAB = (m(t.t_A) + m(t.t_B) - m(t.t_dd)) / 2
    wAB = -(m(t.w_A) + m(t.w_B) - m(t.w_dd)) / 2
    g = mpmath.matrix([[t.t_A, 0, tAB, 0], [0, t.w_A, 0, wAB],
                       [tAB, 0, t.t_B, 0], [0, wAB, 0, t.w_B]])
    om = mpmath.matrix([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]])
    ev = mpmath.eig(mpmath.mpc(0, 1) * om * g, left=False, right=False)
    d = sorted({round(float(abs(e)), 12) for e in ev})
    return max(d), min(d)


def _f_direct(d):
    if d <= 0.5:
        return 0.0
    return (d + 0.5) * math.log2(d + 0.5) - (d - 0.5) * math.log2(d - 0.5)


def test_entropy_f_reference_values():
    assert entropy_f(0.5) == 0.0
    assert entropy_f(1.5) == pytest.approx(2.0, abs=1e-15)
    assert entropy_f(1.0) == pytest.approx(1.5 * math.log2(1.5) + 0.5, rel=1e-14)
    assert entropy_f(0.5 + 1e-15) < 1e-12
    with pytest.raises(ValueError):
        entropy_f(0.3)


@given(st.floats(0.5, 50.0))
def test_entropy_f_matches_direct_formula(d):
    assert entropy_f(d) == pytest.approx(_f_direct(d), abs=1e-11)


def test_baseline_is_pure_over_parameter_sweep():
    for coh in (1e-9, 2e-8, 1e-6, 1e-4):
        for cor in (1e-12, 2e-12, 3e-11):
            t = baseline_tfcm(BiphotonParams(sigma_coh=coh, sigma_cor=cor))
            q = symplectic_quantities(t)
            assert q.d_plus == pytest.approx(0.5, abs=1e-12)
            assert q.d_minus == pytest.approx(0.5, abs=1e-12)
            assert abs(joint_entropy(t)) <= 1e-9


def test_baseline_rejects_degenerate_correlation():
    with pytest.raises(ValueError):
        baseline_tfcm(BiphotonParams(sigma_coh=1e-12, sigma_cor=3e-12, delta_T=1e-9))


@pytest.mark.parametrize("scale", [(1.0, 1.0), (1e-9, 1e9), (1e-6, 1e6)])
def test_symplectic_eigenvalues_match_high_precision_eig(scale):
    ts, ws = scale
    rng = np.random.default_rng(11)
    for _ in range(25):
        t0 = baseline_tfcm(BiphotonParams(sigma_coh=rng.uniform(2, 20) * ts,
                                          sigma_cor=rng.uniform(0.05, 0.5) * ts, delta_T=ts))
        d = Disturbance(eta_t=rng.uniform(0, 0.5), eta_w=rng.uniform(0, 0.5),
                        eps_t=rng.uniform(0, 2), eps_w=rng.uniform(0, 2))
        t = apply_disturbance(t0, d)
        q = symplectic_quantities(t)
        dp, dm = _mp_symplectic(t)
        assert q.d_plus == pytest.approx(dp, rel=1e-8)
        assert q.d_minus == pytest.approx(dm, rel=1e-8)


def test_conditional_entropy_matches_schur_complement():
    t = apply_disturbance(baseline_tfcm(BiphotonParams(sigma_coh=5.0, sigma_cor=0.3, delta_T=1.0)),
                          Disturbance(eta_w=0.2, eps_w=0.4, eps_t=0.1))
    g = t.matrix()
    # condition on Alice's time: Schur complement of the t_A entry
    cond = g[2:, 2:] - np.outer(g[2:, 0], g[0, 2:]) / g[0, 0]
    d = math.sqrt(np.linalg.det(cond))
    assert conditional_entropy_given_tA(t) == pytest.approx(_f_direct(d), rel=1e-10)


def test_undisturbed_baseline_has_zero_chi():
    t = baseline_tfcm(BiphotonParams())
    assert holevo_chi(t) == pytest.approx(0.0, abs=1e-9)


def test_unphysical_tfcm_detected():
    t = baseline_tfcm(BiphotonParams())
    squeezed = Tfcm(t.t_A, t.t_B, t.t_dd, t.w_A, t.w_B, t.w_dd * 0.5)
    assert not squeezed.is_physical
    with pytest.raises(UnphysicalTfcm):
        symplectic_quantities(squeezed)


def test_franson_visibility_of_baseline():
    p = BiphotonParams(sigma_coh=1e-6, delta_T=794e-12)
    t = baseline_tfcm(p)
    expected = math.exp(-0.5 * 794e-12 ** 2 / (4 * 1e-12))
    assert franson_visibility(t, p.delta_T) == pytest.approx(expected, rel=1e-12)


def test_disturbance_budget_linearised_and_clamped():
    v = VisibilityMeasurement(0.95, 0.97)
    assert disturbance_budget(v, 1e-9) == pytest.approx(2 * 0.02 / 1e-18)
    assert disturbance_budget(VisibilityMeasurement(0.98, 0.97), 1e-9) == 0.0


def test_frame_time_variance_combines_envelopes():
    T = 8 / 1.26e9
    assert frame_time_variance(T) == pytest.approx(T ** 2 / 12)
    s = frame_time_variance(T, 2e-8)
    assert s == pytest.approx(1 / (12 / T ** 2 + 1 / 4e-16))
    assert s < min(T ** 2 / 12, 4e-16)


def test_security_baseline_is_pure_and_honours_time_assumptions():
    ta = time_assumptions_for(8 / 1.26e9, 30e-12, 2e-8)
    t = security_baseline(BiphotonParams(), ta)
    assert t.t_A == pytest.approx(ta.frame_time_variance, rel=1e-12)
    assert t.t_dd == pytest.approx(ta.jitter_rms ** 2, rel=1e-12)
    assert joint_entropy(t) == pytest.approx(0.0, abs=1e-9)
    # the overrides leave it unchanged
    t2 = apply_time_overrides(t, ta)
    assert t2.t_A == pytest.approx(t.t_A) and t2.t_dd == pytest.approx(t.t_dd)


def test_time_assumptions_validation():
    with pytest.raises(ValueError):
        TimeAssumptions(jitter_rms=1.0, frame_time_variance=0.1)


def _sec_state(N=8):
    ta = time_assumptions_for(N / 1.26e9, 30e-12, 2e-8)
    return security_baseline(BiphotonParams(), ta)


def test_holevo_sup_zero_budget_is_singleton():
    t = _sec_state()
    res = maximize_holevo(t, 0.0)
    assert res.chi == pytest.approx(holevo_chi(t), abs=1e-12)
    assert res.eta_w == 0.0 and res.eps_w == 0.0


def test_holevo_sup_nondecreasing_in_budget():
    t = _sec_state()
    budgets = np.linspace(0.0, 3e16, 20)
    chis = [holevo_sup(t, b) for b in budgets]
    assert all(b >= a - 1e-12 for a, b in zip(chis, chis[1:]))
    assert chis[-1] > 0.1


def test_holevo_sup_dominates_random_feasible_points():
    t = _sec_state()
    budget = 1.5e16
    res = maximize_holevo(t, budget)
    rng = np.random.default_rng(5)
    eta = rng.uniform(0, 1, 2000) * min(1.0, budget / (2 * t.w_AB))
    eps = rng.uniform(0, 1, 2000) * budget / t.w_B
    ok = eps * t.w_B + 2 * eta * t.w_AB <= budget
    vals = chi_grid(t, eta[ok], eps[ok])
    assert np.nanmax(vals) <= res.chi + 1e-9


def test_inverse_erf_and_finite_key_inflation():
    assert inverse_erf(0.0) == 0.0
    assert math.erf(inverse_erf(0.7)) == pytest.approx(0.7, rel=1e-14)
    with pytest.raises(ValueError):
        inverse_erf(1.0)
    assert finite_key_inflation(100, 1e-5) == pytest.approx(K_M100, rel=1e-12)


def test_finite_key_bound_vanishes_with_more_runs():
    excess = [finite_key_frequency_bound(1.0, m, 1e-5) - 1.0 for m in (10 ** 2, 10 ** 4, 10 ** 6)]
    assert excess[0] > excess[1] > excess[2] > 0
    assert excess[2] < 1e-2


@given(st.floats(0.0, 1.0), st.floats(0.0, 3.0))
def test_disturbed_state_physical_or_rejected(eta, eps):
    t = apply_disturbance(baseline_tfcm(BiphotonParams(sigma_coh=2e-8)),
                          Disturbance(eta_w=eta, eps_w=eps), check=False)
    if t.is_physical:
        q = symplectic_quantities(t)
        assert q.d_minus >= 0.5 - 1e-9
        assert joint_entropy(t) >= -1e-9
    else:
        with pytest.raises(UnphysicalTfcm):
            symplectic_quantities(t)


def test_correlation_loss_without_noise_is_rejected():
    with pytest.raises(UnphysicalTfcm):
        apply_disturbance(baseline_tfcm(BiphotonParams(sigma_coh=2e-8)), Disturbance(eta_w=1.0))
