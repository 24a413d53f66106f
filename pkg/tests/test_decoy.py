import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppmqkd.channel_model import ChannelParams, overall_gain, yield_i
from ppmqkd.decoy import (DecoyConfig, DecoyConfigError, DecoyFailure, DecoyObservables,
                          FluctuationWarning, check_decoy_conditions, decoy_estimate,
                          gain_fluctuation_bounds, n_alpha_from_eps, partition_decoys,
                          q1_lower, single_photon_freq_bound, y0_lower, y1_lower)

N_ALPHA_1E6 = 4.8916384756985904  # sqrt(2) erfinv(1 - 1e-6), mpmath
# mpmath, 40 digits, eta=0.09, Y0=5e-5, mu=0.5, nu1=0.02, nu2=0.01, closed-form gains
Y0_LOW_REF = 3.255667814327524e-5
Y1_LOW_REF = 0.089304756649007328


def _gains(eta, y0, mu, nu1, nu2):
    p = ChannelParams(Y0=y0)
    return tuple(overall_gain(p, eta, x) for x in (mu, nu1, nu2))


def test_n_alpha_reference():
    assert n_alpha_from_eps(1e-6) == pytest.approx(N_ALPHA_1E6, rel=1e-13)
    with pytest.raises(ValueError):
        n_alpha_from_eps(0.0)


def test_frozen_decoy_example():
    qm, q1, q2 = _gains(0.09, 5e-5, 0.5, 0.02, 0.01)
    y0 = y0_lower(q1, q2, 0.02, 0.01)
    y1 = y1_lower(qm, q1, q2, 0.5, 0.02, 0.01, y0)
    assert y0 == pytest.approx(Y0_LOW_REF, rel=1e-9)
    assert y1 == pytest.approx(Y1_LOW_REF, rel=1e-9)
    assert q1_lower(0.5, y1) == pytest.approx(0.5 * math.exp(-0.5) * Y1_LOW_REF, rel=1e-9)


def test_partition_and_halves():
    cfg = DecoyConfig.halves(8, 0.005)
    assert (cfg.F1_bins, cfg.F2_bins) == (4, 2)
    assert partition_decoys(cfg, 0.5) == pytest.approx((0.02, 0.01))
    assert cfg.nu == pytest.approx(0.04)
    small = DecoyConfig.halves(2, 0.005)
    assert (small.F1_bins, small.F2_bins) == (2, 1)
    scaled = DecoyConfig.halves(8, 0.005, acceptance=0.5)
    assert partition_decoys(scaled) == pytest.approx((0.01, 0.005))


@pytest.mark.parametrize("F1,F2,N", [(4, 0, 8), (4, 4, 8), (16, 2, 8)])
def test_bad_subgroups_rejected(F1, F2, N):
    with pytest.raises(DecoyConfigError):
        DecoyConfig(F1, F2, 0.005, N)


def test_decoy_conditions():
    check_decoy_conditions(0.2, 0.1, 0.5)
    with pytest.raises(DecoyConfigError):
        check_decoy_conditions(0.3, 0.25, 0.5)
    with pytest.raises(DecoyConfigError):
        check_decoy_conditions(0.1, 0.1, 0.5)
    cfg = DecoyConfig(512, 256, 0.005, 1024)
    with pytest.raises(DecoyConfigError):
        partition_decoys(cfg, 0.5)


def test_fluctuation_bounds_and_warning():
    lo, hi = gain_fluctuation_bounds(0.01, 1e6, N_ALPHA_1E6)
    half = N_ALPHA_1E6 * math.sqrt(0.01 / 1e6)
    assert (lo, hi) == pytest.approx((0.01 - half, 0.01 + half))
    assert gain_fluctuation_bounds(0.01, math.inf, N_ALPHA_1E6) == (0.01, 0.01)
    with pytest.warns(FluctuationWarning):
        lo, hi = gain_fluctuation_bounds(1e-4, 100, N_ALPHA_1E6)
    assert lo == 0.0


def test_envelopes_collapse_with_infinite_counts():
    qm, q1, q2 = _gains(0.09, 5e-5, 0.5, 0.02, 0.01)
    cfg = DecoyConfig(4, 2, 0.005, 8)
    est = decoy_estimate(DecoyObservables(qm, q1, q2), cfg, 0.5)
    for lo, hi in est.envelopes.values():
        assert lo == hi
    assert est.Y0_low == pytest.approx(Y0_LOW_REF, rel=1e-9)
    assert est.Y1_low == pytest.approx(Y1_LOW_REF, rel=1e-9)
    assert est.freq_bound is None


def test_finite_counts_push_bounds_down():
    qm, q1, q2 = _gains(0.09, 5e-5, 0.5, 0.02, 0.01)
    cfg = DecoyConfig(4, 2, 0.005, 8)
    inf = decoy_estimate(DecoyObservables(qm, q1, q2), cfg, 0.5)
    fin = decoy_estimate(DecoyObservables(qm, q1, q2, 1e10, 1e10, 1e10), cfg, 0.5)
    assert fin.Y1_low < inf.Y1_low
    assert fin.Y0_low <= inf.Y0_low


def test_q1_monotone_in_n_alpha():
    qm, q1, q2 = _gains(0.09, 5e-5, 0.5, 0.02, 0.01)
    obs = DecoyObservables(qm, q1, q2, 1e10, 1e10, 1e10)
    vals = [decoy_estimate(obs, DecoyConfig(4, 2, 0.005, 8, n_alpha=a), 0.5).Q1_low
            for a in (0.0, 1.0, 2.0, 4.0, 6.0)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_freq_bound_rescaling_and_failure():
    assert single_photon_freq_bound(0.01, 2.0, 0.05, 0.04) == pytest.approx(
        0.01 * 2.0 / (0.05 * 0.04 * math.exp(-0.04)))
    with pytest.raises(DecoyFailure):
        single_photon_freq_bound(0.01, 2.0, 0.0, 0.04)


def test_decoy_failure_when_y1_collapses():
    cfg = DecoyConfig(4, 2, 0.005, 8)
    obs = DecoyObservables(Q_mu=1e-3, Q_nu1=1e-5, Q_nu2=1e-5, Q_nu=1e-5)
    with pytest.raises(DecoyFailure, match="Y1 lower bound is zero"):
        decoy_estimate(obs, cfg, 0.5)


def test_soundness_over_sampled_channels():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(500):
        eta = 10 ** rng.uniform(-4, 0)
        y0 = 10 ** rng.uniform(-7, -2)
        mu = rng.uniform(0.2, 1.5)
        nu1 = rng.uniform(0.01, 0.45) * mu
        nu2 = rng.uniform(0.0, 0.9) * nu1
        try:
            check_decoy_conditions(nu1, nu2, mu)
        except DecoyConfigError:
            continue
        qm, q1, q2 = _gains(eta, y0, mu, nu1, nu2)
        y0l = y0_lower(q1, q2, nu1, nu2)
        y1l = y1_lower(qm, q1, q2, mu, nu1, nu2, y0l)
        y1_true = yield_i(ChannelParams(Y0=y0), eta, 1, exact=False)
        assert y0l <= y0 * (1 + 1e-9) + 1e-15
        assert y1l <= y1_true * (1 + 1e-9) + 1e-15
        checked += 1
    assert checked > 400


@given(st.floats(1e-3, 1.0), st.floats(0.0, 1e-3), st.floats(0.3, 1.2),
       st.floats(0.05, 0.3), st.floats(0.0, 0.9))
def test_bounds_never_exceed_truth(eta, y0, mu, f1, f2):
    nu1 = f1 * mu
    nu2 = f2 * nu1
    qm, q1, q2 = _gains(eta, y0, mu, nu1, nu2)
    y0l = y0_lower(q1, q2, nu1, nu2)
    y1l = y1_lower(qm, q1, q2, mu, nu1, nu2, y0l)
    assert 0.0 <= y0l <= y0 + 1e-12
    assert 0.0 <= y1l <= eta + y0 + 1e-12


def test_observables_validation():
    with pytest.raises(ValueError):
        DecoyObservables(1.5, 0.1, 0.1)
    with pytest.raises(ValueError):
        DecoyObservables(0.5, 0.1, 0.1, N_mu=0)


def test_no_warning_for_large_counts():
    qm, q1, q2 = _gains(0.09, 5e-5, 0.5, 0.02, 0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        decoy_estimate(DecoyObservables(qm, q1, q2, 1e9, 1e9, 1e9),
                       DecoyConfig(4, 2, 0.005, 8), 0.5)
