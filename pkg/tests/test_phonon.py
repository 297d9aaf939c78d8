import math

import numpy as np
import pytest
from scipy import stats

from graphene_dsmc.material import DEFAULT_MATERIAL, HBAR, bose_einstein
from graphene_dsmc.phonon import (
    ACOUSTIC,
    CHANNELS,
    K_ABS,
    K_EM,
    OPT_ABS,
    OPT_EM,
    BelowThresholdError,
    Direction,
    Kind,
    PhononChannel,
    PhononRateTable,
    ScalarPhononRates,
    acoustic_rate,
    channel_rate,
    final_state,
    k_phonon_rate,
    optical_rate,
    sample_phonon_final_state,
    scattering_angle,
)

P = DEFAULT_MATERIAL


def _broadened_rate(channel, eps, width=4e-3, h=8e-4):
    """Brute-force 2D Cartesian quadrature of the transition rate over k'.

    The squared matrix elements are written out directly and the energy
    delta is replaced by a narrow normalized Gaussian.
    """
    g = P.gamma
    k = np.array([eps / g, 0.0])
    if channel.kind is Kind.ACOUSTIC:
        hw, n_occ = 0.0, None
    elif channel.kind is Kind.OPTICAL:
        hw = P.hbar_omega_O
    else:
        hw = P.hbar_omega_K
    sign = {Direction.ABSORPTION: 1.0, Direction.EMISSION: -1.0, Direction.ELASTIC: 0.0}[channel.direction]
    eps_target = eps + sign * hw
    r = eps_target / g
    half = r + 8 * width / g
    axis = np.arange(-half, half + h, h)
    kx, ky = np.meshgrid(axis, axis, indexing="ij")
    kp = np.hypot(kx, ky)
    cos_t = np.where(kp > 0, (kx * k[0] + ky * k[1]) / (np.maximum(kp, 1e-300) * eps / g), 1.0)
    delta = np.exp(-0.5 * ((g * kp - eps_target) / width) ** 2) / (width * math.sqrt(2 * math.pi))
    four_pi2 = (2 * math.pi) ** 2
    if channel.kind is Kind.ACOUSTIC:
        # elastic form of 2 n |G|^2 (absorption + emission merged)
        G2 = math.pi * P.D_ac**2 * P.kT / (2 * HBAR * P.sigma_m * P.v_p**2) * (1 + cos_t) / four_pi2
        occ = 1.0
    elif channel.kind is Kind.OPTICAL:
        G2 = 2 * math.pi * P.D_O**2 / (P.sigma_m * P.omega_O) / four_pi2 * np.ones_like(kp)
        n = bose_einstein(hw, P.T)
        occ = n if sign > 0 else n + 1
    else:
        G2 = 2 * math.pi * P.D_K**2 / (P.sigma_m * P.omega_K) * (1 - cos_t) / four_pi2
        n = bose_einstein(hw, P.T)
        occ = n if sign > 0 else n + 1
    return float(np.sum(G2 * occ * delta) * h * h)


@pytest.mark.parametrize("channel, eps", [
    (ACOUSTIC, 0.15),
    (OPT_ABS, 0.30),
    (OPT_EM, 0.30),
    (K_ABS, 0.25),
    (K_EM, 0.25),
])
def test_rates_match_broadened_quadrature(channel, eps):
    oracle = _broadened_rate(channel, eps)
    assert channel_rate(channel, eps) == pytest.approx(oracle, rel=1e-2)


def test_acoustic_examples():
    assert acoustic_rate(0.0) == 0.0
    e = np.array([0.01, 0.1, 0.37])
    np.testing.assert_allclose(acoustic_rate(2 * e) / acoustic_rate(e), 2.0, rtol=1e-14)


def test_emission_thresholds():
    assert optical_rate(0.10, Direction.EMISSION) == 0.0
    assert k_phonon_rate(0.10, Direction.EMISSION) == 0.0
    assert optical_rate(0.17, Direction.EMISSION) > 0.0
    assert k_phonon_rate(0.13, Direction.EMISSION) > 0.0


def test_absorption_factorizes_bose_occupation():
    eps = 0.2
    ratios = []
    for T in (77.0, 300.0, 500.0):
        p = P.with_temperature(T)
        ratios.append(optical_rate(eps, Direction.ABSORPTION, p) / bose_einstein(p.hbar_omega_O, T))
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-13)


def test_k_angular_factor_averages_to_isotropic():
    t = np.linspace(0, 2 * math.pi, 100001)
    assert np.trapezoid(1 - np.cos(t), t) == pytest.approx(2 * math.pi, rel=1e-12)


def test_rates_nonnegative_and_continuous_off_threshold():
    e = np.linspace(0.0, 1.5, 15001)
    for ch in CHANNELS:
        r = channel_rate(ch, e)
        assert np.all(r >= 0)
        jumps = np.abs(np.diff(r))
        assert jumps.max() < 1e-2 * max(r.max(), 1e-30) + 1e-12


def test_scalar_rates_match_vector_rates():
    scalar = ScalarPhononRates(P)
    for eps in (0.0, 0.05, 0.124, 0.1646, 0.2, 0.9):
        expected = [float(channel_rate(ch, eps)) for ch in CHANNELS]
        np.testing.assert_allclose(scalar(eps), expected, rtol=1e-14, atol=0)


def test_rate_table_interpolation():
    table = PhononRateTable.build(P, max_energy=1.0, spacing=1e-2)
    e = np.random.default_rng(3).uniform(0, 1.0, 500)
    exact = np.vstack([channel_rate(ch, e) for ch in CHANNELS])
    approx = table(e)
    np.testing.assert_allclose(approx, exact, rtol=5e-3, atol=1e-9)
    assert table.max_total == pytest.approx(exact.sum(axis=0).max(), rel=5e-2)
    with pytest.raises(ValueError):
        table(1.5)


def test_acoustic_final_state_is_elastic():
    rng = np.random.default_rng(4)
    k = rng.normal(scale=0.3, size=(100_000, 2))
    kp = sample_phonon_final_state(k, ACOUSTIC, rng)
    np.testing.assert_allclose(np.hypot(*kp.T), np.hypot(*k.T), rtol=1e-13)


def test_optical_absorption_energy():
    k = np.array([0.10 / P.gamma, 0.0])
    kp = final_state(k, OPT_ABS, 0.3)
    assert P.gamma * np.hypot(*kp) == pytest.approx(0.2646, abs=1e-12)
    kp = final_state(np.array([0.3 / P.gamma, 0.0]), K_EM, 0.7)
    assert P.gamma * np.hypot(*kp) == pytest.approx(0.3 - 0.124, abs=1e-12)


def test_emission_below_threshold_raises():
    with pytest.raises(BelowThresholdError):
        final_state(np.array([0.1 / P.gamma, 0.0]), OPT_EM, 0.5)


def _angle_chi2(channel, density, n=1_000_000, bins=40, seed=5):
    u = np.random.default_rng(seed).random(n)
    theta = scattering_angle(channel, u)
    edges = np.linspace(-math.pi, math.pi, bins + 1)
    observed, _ = np.histogram(theta, edges)
    fine = np.linspace(-math.pi, math.pi, 200 * bins + 1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density(fine[1:]) + density(fine[:-1])) * np.diff(fine))])
    expected = np.diff(np.interp(edges, fine, cdf)) * n
    expected *= n / expected.sum()
    return stats.chisquare(observed, expected).pvalue


def test_acoustic_angle_histogram():
    assert _angle_chi2(ACOUSTIC, lambda t: (1 + np.cos(t)) / (2 * math.pi)) > 0.01


def test_k_phonon_angle_histogram():
    assert _angle_chi2(K_ABS, lambda t: (1 - np.cos(t)) / (2 * math.pi)) > 0.01


def test_optical_angle_histogram():
    assert _angle_chi2(OPT_ABS, lambda t: np.full_like(t, 1 / (2 * math.pi))) > 0.01


def test_channel_validation():
    with pytest.raises(ValueError):
        PhononChannel(Kind.OPTICAL, Direction.ELASTIC)
    assert [c.label for c in CHANNELS] == ["ac", "opt_abs", "opt_em", "K_abs", "K_em"]
