import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from graphene_dsmc._kernels import intra_rate_sum, intra_rate_sum_many
from graphene_dsmc.ee import (
    DegenerateGeometryError,
    EeRateParams,
    c_ee,
    c_ee_direct,
    ellipse_from_pair,
    ellipse_parameter_of,
    hyperbola_from_pair,
    hyperbola_parameter_of,
    inter_final_states,
    inter_rate_cells,
    intra_final_states,
    intra_rate_cells,
    matrix_element_sq,
    matrix_element_sq_vectors,
    sample_beta,
    sample_inter_final,
    sample_intra_final,
)
from graphene_dsmc.material import DEFAULT_MATERIAL, E_SQUARED, HBAR
from graphene_dsmc.screening import ScreeningParams

S = ScreeningParams(k_F=0.2279, r_s=DEFAULT_MATERIAL.r_s)
R2 = math.sqrt(2.0) / 2.0


def _norm(v):
    return np.hypot(v[..., 0], v[..., 1])


def test_prefactor_two_forms_agree():
    for dk, db in ((0.03, 0.1), (0.0364, 2 * math.pi / 64)):
        assert c_ee(dk, db) == pytest.approx(c_ee_direct(dk, db), rel=1e-13)
    by_hand = 0.03**2 * 0.1 * E_SQUARED**2 / (128 * math.pi * HBAR**2 * 1000.0)
    assert c_ee_direct(0.03, 0.1) == pytest.approx(by_hand, rel=1e-14)


def test_matrix_element_examples():
    # equal screened interactions: x^2 + x^2 - x^2 = x^2
    q = 0.3
    v = 4.0 / (q + S.C_eps)
    assert matrix_element_sq(q, q, 0, 0, 0, 0, S) == pytest.approx(v * v, rel=1e-14)
    assert matrix_element_sq(0.2, 0.5, math.pi, math.pi, math.pi, math.pi, S) == 0.0


def test_matrix_element_nonnegative_and_symmetric():
    rng = np.random.default_rng(0)
    n = 10_000
    q, qp = rng.uniform(0, 2, (2, n))
    phis = rng.uniform(0, 2 * math.pi, (4, n))
    m = matrix_element_sq(q, qp, *phis, S)
    assert np.all(m >= 0)
    swapped = matrix_element_sq(qp, q, phis[2], phis[3], phis[0], phis[1], S)
    np.testing.assert_allclose(m, swapped, rtol=1e-14)


def test_matrix_element_incoming_outgoing_symmetry():
    rng = np.random.default_rng(1)
    k1, k2 = rng.normal(scale=0.3, size=(2, 5000, 2))
    beta = rng.uniform(0, 2 * math.pi, 5000)
    k1p, k2p = intra_final_states(k1, k2, beta)
    forward = matrix_element_sq_vectors(k1, k2, k1p, k2p, S)
    backward = matrix_element_sq_vectors(k1p, k2p, k1, k2, S)
    np.testing.assert_allclose(forward, backward, rtol=1e-9)


def test_ellipse_examples():
    g = ellipse_from_pair((1, 0), (-1, 0))
    assert (g.a, g.b, g.c) == pytest.approx((1.0, 1.0, 0.0))
    g = ellipse_from_pair((1, 0), (0, 1))
    assert (g.a, g.c, g.b, g.theta) == pytest.approx((1.0, R2, R2, math.pi / 4), rel=1e-14)
    g = ellipse_from_pair((1, 0), (2, 0))
    assert (g.a, g.c, g.b) == pytest.approx((1.5, 1.5, 0.0))
    assert g.degenerate
    with pytest.raises(DegenerateGeometryError):
        ellipse_from_pair((0, 0), (0, 0))


def test_sample_intra_examples():
    k1p, k2p = sample_intra_final(ellipse_from_pair((1, 0), (-1, 0)), math.pi / 2)
    np.testing.assert_allclose(k1p, [0, 1], atol=1e-15)
    np.testing.assert_allclose(k2p, [0, -1], atol=1e-15)
    k1p, k2p = sample_intra_final(ellipse_from_pair((1, 0), (0, 1)), 0.0)
    np.testing.assert_allclose(k1p, [0.5 + R2, 0.5 + R2], rtol=1e-15)
    np.testing.assert_allclose(k1p + k2p, [1, 1], rtol=1e-15)
    assert _norm(k1p) + _norm(k2p) == pytest.approx(2.0, rel=1e-14)


def test_intra_conservation_sweep():
    rng = np.random.default_rng(2)
    n = 100_000
    k1, k2 = rng.normal(scale=0.4, size=(2, n, 2))
    beta = rng.uniform(0, 2 * math.pi, n)
    k1p, k2p = intra_final_states(k1, k2, beta)
    scale = _norm(k1) + _norm(k2)
    assert np.max(_norm(k1 + k2 - k1p - k2p) / scale) <= 1e-10
    assert np.max(np.abs(_norm(k1) + _norm(k2) - _norm(k1p) - _norm(k2p)) / scale) <= 1e-10


coord = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(coord, coord, coord, coord, st.floats(0.0, 2 * math.pi))
def test_intra_conservation_property(x1, y1, x2, y2, beta):
    k1, k2 = np.array([x1, y1]), np.array([x2, y2])
    scale = _norm(k1) + _norm(k2)
    if scale < 1e-6:
        return
    k1p, k2p = intra_final_states(k1, k2, beta)
    assert _norm(k1 + k2 - k1p - k2p) <= 1e-10 * scale
    assert abs(scale - _norm(k1p) - _norm(k2p)) <= 1e-10 * scale


@settings(max_examples=300, deadline=None)
@given(coord, coord, coord, coord, st.floats(-4.0, 4.0))
def test_inter_conservation_property(x1, y1, x2, y2, beta):
    k1, k2 = np.array([x1, y1]), np.array([x2, y2])
    if _norm(k1 + k2) < 1e-6:
        return
    k1p, k2p = inter_final_states(k1, k2, beta)
    scale = _norm(k1) + _norm(k2) + _norm(k1p) + _norm(k2p)
    assert _norm(k1 + k2 - k1p - k2p) <= 1e-10 * scale
    assert abs((_norm(k1) - _norm(k2)) - (_norm(k1p) - _norm(k2p))) <= 1e-10 * scale


def test_ellipse_apsides():
    g = ellipse_from_pair((0.3, 0.1), (-0.05, 0.2))
    k1p, _ = sample_intra_final(g, np.linspace(0, 2 * math.pi, 200001))
    r = _norm(k1p)
    assert r.max() == pytest.approx(g.a + g.c, rel=1e-9)
    assert r.min() == pytest.approx(g.a - g.c, rel=1e-8)


def test_ellipse_parameter_round_trip():
    g = ellipse_from_pair((0.3, 0.1), (-0.05, 0.2))
    beta0 = ellipse_parameter_of(g, g.k1)
    k1p, k2p = sample_intra_final(g, beta0)
    np.testing.assert_allclose(k1p, g.k1, atol=1e-14)
    np.testing.assert_allclose(k2p, g.k2, atol=1e-14)


def _single_cell_oracle(k1, k2, dk):
    """Adaptive quadrature of |M~|^2 ds over the ellipse in focal polar form."""
    k1, k2 = np.asarray(k1, float), np.asarray(k2, float)
    K = k1 + k2
    a = 0.5 * (_norm(k1) + _norm(k2))
    c = 0.5 * _norm(K)
    theta = math.atan2(K[1], K[0])
    p = (a * a - c * c) / a
    e = c / a

    def integrand(phi):
        denom = 1.0 - e * math.cos(phi - theta)
        r = p / denom
        dr = -p * e * math.sin(phi - theta) / denom**2
        point = np.array([r * math.cos(phi), r * math.sin(phi)])
        m2 = matrix_element_sq_vectors(k1, k2, point, K - point, S)
        return float(m2) * math.hypot(r, dr)

    val, _ = integrate.quad(integrand, theta - math.pi, theta + math.pi, limit=500,
                            epsabs=0.0, epsrel=1e-10)
    # rate = C_ee(d_beta = 1) * f * 2 * line integral
    return c_ee(dk, 1.0) * 2.0 * val


@pytest.mark.parametrize("k1, k2", [
    ((0.25, 0.0), (-0.1, 0.18)),
    ((0.4, 0.1), (0.2, -0.3)),
    ((0.15, -0.05), (0.22, 0.02)),
])
def test_intra_rate_m512_matches_line_integral(k1, k2):
    dk = 0.0364
    p = EeRateParams(m=512)
    rate = intra_rate_cells(np.array(k1), np.array([k2]), np.array([1.0]), dk, S, p)
    assert rate == pytest.approx(_single_cell_oracle(k1, k2, dk), rel=5e-3)


def test_intra_rate_properties():
    rng = np.random.default_rng(3)
    centers = rng.uniform(-0.4, 0.4, (50, 2))
    f = rng.uniform(0, 1, 50)
    p = EeRateParams()
    k1 = np.array([0.2, 0.05])
    assert intra_rate_cells(k1, centers, np.zeros(50), 0.03, S, p) == 0.0
    assert intra_rate_cells(k1, centers[:0], f[:0], 0.03, S, p) == 0.0
    r = intra_rate_cells(k1, centers, f, 0.03, S, p)
    assert r > 0
    assert intra_rate_cells(k1, centers, 3.0 * f, 0.03, S, p) == pytest.approx(3.0 * r, rel=1e-14)


def test_compiled_kernel_matches_numpy_reference():
    rng = np.random.default_rng(4)
    centers = rng.uniform(-0.5, 0.5, (200, 2))
    f = rng.uniform(0, 1, 200)
    p = EeRateParams(m=64)
    dk = 0.0364
    ks = rng.uniform(-0.5, 0.5, (5, 2))
    many = intra_rate_sum_many(ks, centers, f, p.m, S.C_eps, S.k_F)
    for k1, s_many in zip(ks, many):
        ref = intra_rate_cells(k1, centers, f, dk, S, p)
        fast = c_ee(dk, 2 * math.pi / p.m) * intra_rate_sum(k1[0], k1[1], centers, f, p.m, S.C_eps, S.k_F)
        assert fast == pytest.approx(ref, rel=1e-10)
        assert c_ee(dk, 2 * math.pi / p.m) * s_many == pytest.approx(ref, rel=1e-10)


def test_hyperbola_examples():
    g = hyperbola_from_pair((2, 0), (1, 0))
    assert (g.a, g.c, g.b) == pytest.approx((0.5, 1.5, math.sqrt(2)), rel=1e-14)
    g = hyperbola_from_pair((1, 0), (0, 1))
    assert g.a == 0.0
    g = hyperbola_from_pair((1, 0), (-2, 0))
    assert g.a == pytest.approx(g.c) and g.b == 0.0
    with pytest.raises(DegenerateGeometryError):
        hyperbola_from_pair((1, 0), (-1, 0))


def test_hyperbola_c_at_least_a():
    rng = np.random.default_rng(5)
    for k1, k2 in rng.normal(size=(1000, 2, 2)):
        g = hyperbola_from_pair(k1, k2)
        assert g.c >= g.a


def test_inter_branch_conservation_sweep():
    rng = np.random.default_rng(6)
    n = 100_000
    k1, k2 = rng.normal(scale=0.4, size=(2, n, 2))
    beta = rng.uniform(-3, 3, n)
    k1p, k2p = inter_final_states(k1, k2, beta)
    scale = _norm(k1) + _norm(k2) + _norm(k1p) + _norm(k2p)
    assert np.max(_norm(k1 + k2 - k1p - k2p) / scale) <= 1e-10
    signed = (_norm(k1) - _norm(k2)) - (_norm(k1p) - _norm(k2p))
    assert np.max(np.abs(signed) / scale) <= 1e-10


def test_hyperbola_parameter_round_trip():
    g = hyperbola_from_pair((0.3, 0.1), (0.1, -0.2))
    beta0 = hyperbola_parameter_of(g, g.k1)
    k1p, k2p = sample_inter_final(g, beta0)
    np.testing.assert_allclose(k1p, g.k1, atol=1e-13)
    np.testing.assert_allclose(k2p, g.k2, atol=1e-13)


def test_inter_rate_zero_without_valence_occupation():
    centers = np.array([[0.1, 0.1], [-0.2, 0.0]])
    p = EeRateParams()
    assert inter_rate_cells(np.array([0.2, 0.0]), centers, np.zeros(2), 0.03, S, p) == 0.0


def test_inter_rate_truncation_convergence():
    centers = np.array([[0.1, 0.1], [-0.2, 0.05], [0.05, -0.15]])
    f = np.array([0.9, 0.5, 0.7])
    k1 = np.array([0.25, 0.05])
    k_max = 1.2 / DEFAULT_MATERIAL.gamma
    r6 = inter_rate_cells(k1, centers, f, 0.03, S, EeRateParams(m=4096, beta_max=6.0, k_max=k_max))
    r12 = inter_rate_cells(k1, centers, f, 0.03, S, EeRateParams(m=8192, beta_max=12.0, k_max=k_max))
    assert r6 > 0
    assert r12 == pytest.approx(r6, rel=1e-3)


def test_sample_beta_modes():
    k1, k2 = np.array([0.2, 0.0]), np.array([-0.1, 0.15])
    assert sample_beta(k1, k2, 0.25, EeRateParams(), S) == pytest.approx(math.pi / 2)
    p = EeRateParams(beta_weighted=True)
    betas = [sample_beta(k1, k2, u, p, S, 0.5) for u in np.linspace(0, 0.999, 50)]
    assert all(0 <= b < 2 * math.pi for b in betas)


def test_rate_params_validation():
    with pytest.raises(ValueError):
        EeRateParams(m=7)
    with pytest.raises(ValueError):
        EeRateParams(beta_max=0.0)
