"""Electron-electron scattering: matrix element, conic geometry, rates.

Given incoming wave-vectors ``k1, k2`` the final states allowed by momentum
and energy conservation lie on a conic with one focus at the Dirac point and
the other at ``K = k1 + k2``:

* intra-band (same band): ellipse with ``2a = |k1| + |k2|``, ``2c = |K|``;
* inter-band (k1 conduction, k2 valence): hyperbola with
  ``2a = ||k1| - |k2||``, ``2c = |K|``.

A point ``P`` on the conic gives ``k1' = P`` and ``k2' = K - P``.

Rate prefactor.  Replacing both state sums by ``(2 pi)^-2`` integrals, using
``|M|^2 = (pi^2 e^4 / 8) |M~|^2`` (the chirality factors ``(1 + cos)/2`` are
written without the halves in ``M~``), the energy delta as
``delta(gamma * (...)) / gamma`` and the cell midpoint rule for the partner
integral, the trapezoidal rule on the curve parameter gives

    lambda = C_ee * sum_ij f_ij * sum_k [g(beta_{k-1}) + g(beta_k)]
    C_ee   = dk^2 dbeta e^4 / (128 pi hbar^2 v_F)
           = r_s^2 kappa^2 v_F g_s g_v (hbar dk)^2 dbeta / (512 pi hbar^2)

with ``g = |M~|^2 * |dP/dbeta|``.  Units: e^4 [eV^2 nm^2] / (hbar^2 v_F)
[eV^2 ps nm] times dk^2 [nm^-2] times g [nm] is 1/ps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .material import DEFAULT_MATERIAL, E_SQUARED, HBAR, MaterialParams
from .screening import ScreeningParams, pi_tilde

TWO_PI = 2.0 * math.pi
_DEGENERATE_B = 1e-9


class DegenerateGeometryError(ValueError):
    """Both incoming wave-vectors vanish; no conic is defined."""


class InfeasibleGeometryError(ValueError):
    """Inter-band pair with zero total momentum and unequal |k|: no final states."""


@dataclass(frozen=True)
class EllipseGeom:
    a: float
    b: float
    c: float
    theta: float
    center: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.b < _DEGENERATE_B * self.a


@dataclass(frozen=True)
class HyperbolaGeom:
    a: float
    b: float
    c: float
    theta: float
    center: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    @property
    def branch(self) -> int:
        """+1 for the branch around the K focus, where |k1'| - |k2'| = 2a."""
        return 1 if np.hypot(*self.k1) >= np.hypot(*self.k2) else -1


@dataclass(frozen=True)
class EeRateParams:
    m: int = 64
    beta_max: float = 6.0
    k_max: float = 1.2 / DEFAULT_MATERIAL.gamma
    both_branches: bool = False
    beta_weighted: bool = False

    def __post_init__(self):
        if self.m < 8 or self.m % 2:
            raise ValueError(f"m must be even and >= 8, got {self.m}")
        if not self.beta_max > 0:
            raise ValueError("beta_max must be positive")
        if not self.k_max > 0:
            raise ValueError("k_max must be positive")


def c_ee(delta_k: float, delta_beta: float, params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """Rate prefactor in 1/ps per unit of sum_ij f_ij sum_k [g + g]."""
    return (params.r_s**2 * params.kappa**2 * params.v_F * params.degeneracy
            * (HBAR * delta_k) ** 2 * delta_beta / (512.0 * math.pi * HBAR**2))


def c_ee_direct(delta_k: float, delta_beta: float, params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """Same prefactor written with e^2 directly; kappa and g_s g_v cancel through r_s."""
    return delta_k**2 * delta_beta * E_SQUARED**2 / (128.0 * math.pi * HBAR**2 * params.v_F)


# -- matrix element -----------------------------------------------------------

def _screened(q, s: ScreeningParams):
    return q + s.C_eps * pi_tilde(q, s.k_F)


def matrix_element_sq(q, qp, phi11, phi22, phi12, phi21, s: ScreeningParams):
    """Symmetrized |M~|^2 from momentum transfers and chirality angles.

    ``phi11`` is the angle between k1 and k1', ``phi22`` between k2 and k2',
    ``phi12`` between k1 and k2', ``phi21`` between k2 and k1'.
    """
    v = (1.0 + np.cos(phi11)) * (1.0 + np.cos(phi22)) / _screened(np.asarray(q, float), s)
    vp = (1.0 + np.cos(phi12)) * (1.0 + np.cos(phi21)) / _screened(np.asarray(qp, float), s)
    return v * v + vp * vp - v * vp


def _cos_between(a, b):
    """Cosine of the unsigned angle between vectors (last axis); 1 if either is zero."""
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    norm = np.hypot(a[..., 0], a[..., 1]) * np.hypot(b[..., 0], b[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norm > 0.0, dot / norm, 1.0)
    return np.clip(cos, -1.0, 1.0)


def matrix_element_sq_vectors(k1, k2, k1p, k2p, s: ScreeningParams):
    """|M~|^2 evaluated from the four wave-vectors directly (broadcasting)."""
    q = np.hypot(k1[..., 0] - k1p[..., 0], k1[..., 1] - k1p[..., 1])
    qp = np.hypot(k1[..., 0] - k2p[..., 0], k1[..., 1] - k2p[..., 1])
    v = (1.0 + _cos_between(k1, k1p)) * (1.0 + _cos_between(k2, k2p)) / _screened(q, s)
    vp = (1.0 + _cos_between(k1, k2p)) * (1.0 + _cos_between(k2, k1p)) / _screened(qp, s)
    return v * v + vp * vp - v * vp


# -- ellipse ------------------------------------------------------------------

def ellipse_from_pair(k1, k2) -> EllipseGeom:
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    n1, n2 = math.hypot(*k1), math.hypot(*k2)
    if n1 + n2 == 0.0:
        raise DegenerateGeometryError("k1 = k2 = 0")
    total = k1 + k2
    a = 0.5 * (n1 + n2)
    c = min(0.5 * math.hypot(*total), a)
    b = math.sqrt(max(a * a - c * c, 0.0))
    theta = math.atan2(total[1], total[0]) if 2.0 * c >= 1e-12 * (n1 + n2) else 0.0
    return EllipseGeom(a=a, b=b, c=c, theta=theta, center=0.5 * total, k1=k1, k2=k2)


def _ellipse_arrays(k1, k2):
    """Vectorized ellipse parameters for paired arrays of shape (..., 2)."""
    n1 = np.hypot(k1[..., 0], k1[..., 1])
    n2 = np.hypot(k2[..., 0], k2[..., 1])
    total = k1 + k2
    a = 0.5 * (n1 + n2)
    c = np.minimum(0.5 * np.hypot(total[..., 0], total[..., 1]), a)
    b = np.sqrt(np.maximum(a * a - c * c, 0.0))
    small = 2.0 * c < 1e-12 * (n1 + n2)
    theta = np.where(small, 0.0, np.arctan2(total[..., 1], total[..., 0]))
    return a, b, theta, total


def intra_final_states(k1, k2, beta):
    """Final pairs on the ellipse of (k1, k2) at parameter beta (broadcasting)."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a, b, theta, total = _ellipse_arrays(k1, k2)
    x = a * np.cos(beta)
    y = b * np.sin(beta)
    ct, st = np.cos(theta), np.sin(theta)
    p = np.stack([0.5 * total[..., 0] + x * ct - y * st,
                  0.5 * total[..., 1] + x * st + y * ct], axis=-1)
    return p, total - p


def sample_intra_final(geom: EllipseGeom, beta):
    """Point on the ellipse at angle beta: returns (k1', k2')."""
    return intra_final_states(geom.k1, geom.k2, beta)


def ellipse_parameter_of(geom: EllipseGeom, point) -> float:
    """Inverse of :func:`sample_intra_final` for a point lying on the ellipse."""
    d = np.asarray(point, dtype=float) - geom.center
    ct, st = math.cos(geom.theta), math.sin(geom.theta)
    x = d[0] * ct + d[1] * st
    y = -d[0] * st + d[1] * ct
    return math.atan2(y / geom.b, x / geom.a) % TWO_PI


def intra_integrand(k1, k2, beta, s: ScreeningParams):
    """g(beta) = |M~|^2 * sqrt(a^2 sin^2 beta + b^2 cos^2 beta) (broadcasting)."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a, b, _, _ = _ellipse_arrays(k1, k2)
    k1p, k2p = intra_final_states(k1, k2, beta)
    m2 = matrix_element_sq_vectors(k1, k2, k1p, k2p, s)
    return m2 * np.sqrt((a * np.sin(beta)) ** 2 + (b * np.cos(beta)) ** 2)


def beta_nodes(m: int) -> np.ndarray:
    return np.arange(m) * (TWO_PI / m)


def intra_rate_cells(k1, centers, f, delta_k: float, s: ScreeningParams, p: EeRateParams,
                     params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """Intra-band rate of k1 against partners at cell ``centers`` with occupations ``f``."""
    if len(f) == 0:
        return 0.0
    k1 = np.asarray(k1, dtype=float)
    betas = beta_nodes(p.m)
    g = intra_integrand(k1[None, None, :], centers[:, None, :], betas[None, :], s)
    # periodic trapezoid: sum_k [g(beta_{k-1}) + g(beta_k)] = 2 sum_k g(beta_k)
    per_cell = 2.0 * g.sum(axis=1)
    return float(c_ee(delta_k, TWO_PI / p.m, params) * np.dot(f, per_cell))


def intra_rate(k1, grid, p: EeRateParams, s: ScreeningParams,
               params: MaterialParams = DEFAULT_MATERIAL, band: int = 1) -> float:
    """Intra-band e-e out-scattering rate (1/ps) of a particle at k1."""
    centers, f = grid.occupied(band)
    return intra_rate_cells(k1, centers, f, grid.delta_k, s, p, params)


# -- hyperbola ----------------------------------------------------------------

def hyperbola_from_pair(k1, k2) -> HyperbolaGeom:
    """Hyperbola for conduction-band k1 colliding with valence-band k2."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    n1, n2 = math.hypot(*k1), math.hypot(*k2)
    total = k1 + k2
    c = 0.5 * math.hypot(*total)
    a = 0.5 * abs(n1 - n2)
    if c == 0.0:
        if a > 0.0:
            raise InfeasibleGeometryError("zero total momentum with unequal |k1|, |k2|")
        raise DegenerateGeometryError("k1 = -k2: every pair with k1' = -k2' is allowed")
    a = min(a, c)
    b = math.sqrt(max(c * c - a * a, 0.0))
    theta = math.atan2(total[1], total[0])
    return HyperbolaGeom(a=a, b=b, c=c, theta=theta, center=0.5 * total, k1=k1, k2=k2)


def _hyperbola_arrays(k1, k2):
    n1 = np.hypot(k1[..., 0], k1[..., 1])
    n2 = np.hypot(k2[..., 0], k2[..., 1])
    total = k1 + k2
    c = 0.5 * np.hypot(total[..., 0], total[..., 1])
    a = np.minimum(0.5 * np.abs(n1 - n2), c)
    b = np.sqrt(np.maximum(c * c - a * a, 0.0))
    theta = np.arctan2(total[..., 1], total[..., 0])
    branch = np.where(n1 >= n2, 1.0, -1.0)
    return a, b, theta, total, branch


def inter_final_states(k1, k2, beta, branch=None):
    """Final (conduction, valence) pair on the hyperbola at parameter beta.

    ``branch`` defaults to the one satisfying |k1'| - |k2'| = |k1| - |k2|.
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a, b, theta, total, own = _hyperbola_arrays(k1, k2)
    sign = own if branch is None else np.asarray(branch, dtype=float)
    x = sign * a * np.cosh(beta)
    y = b * np.sinh(beta)
    ct, st = np.cos(theta), np.sin(theta)
    p = np.stack([0.5 * total[..., 0] + x * ct - y * st,
                  0.5 * total[..., 1] + x * st + y * ct], axis=-1)
    return p, total - p


def sample_inter_final(geom: HyperbolaGeom, beta, branch: int | None = None):
    return inter_final_states(geom.k1, geom.k2, beta, branch)


def hyperbola_parameter_of(geom: HyperbolaGeom, point) -> float:
    d = np.asarray(point, dtype=float) - geom.center
    ct, st = math.cos(geom.theta), math.sin(geom.theta)
    y = -d[0] * st + d[1] * ct
    return math.asinh(y / geom.b)


def inter_integrand(k1, k2, beta, s: ScreeningParams, k_max: float, branch=None):
    """|M~|^2 * sqrt(a^2 sinh^2 + b^2 cosh^2), zero where a final state leaves |k| <= k_max."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a, b, _, _, _ = _hyperbola_arrays(k1, k2)
    k1p, k2p = inter_final_states(k1, k2, beta, branch)
    inside = ((np.hypot(k1p[..., 0], k1p[..., 1]) <= k_max)
              & (np.hypot(k2p[..., 0], k2p[..., 1]) <= k_max))
    m2 = matrix_element_sq_vectors(k1, k2, k1p, k2p, s)
    arc = np.sqrt((a * np.sinh(beta)) ** 2 + (b * np.cosh(beta)) ** 2)
    return np.where(inside, m2 * arc, 0.0)


def inter_rate_cells(k1, centers, f, delta_k: float, s: ScreeningParams, p: EeRateParams,
                     params: MaterialParams = DEFAULT_MATERIAL) -> float:
    if len(f) == 0:
        return 0.0
    k1 = np.asarray(k1, dtype=float)
    betas = np.linspace(-p.beta_max, p.beta_max, p.m + 1)
    d_beta = betas[1] - betas[0]
    weights = np.full(p.m + 1, 2.0)
    weights[0] = weights[-1] = 1.0  # sum_k [g_{k-1} + g_k]
    k1b = k1[None, None, :]
    c2 = centers[:, None, :]
    g = inter_integrand(k1b, c2, betas[None, :], s, p.k_max)
    if p.both_branches:
        _, _, _, _, own = _hyperbola_arrays(k1b, c2)
        g = g + inter_integrand(k1b, c2, betas[None, :], s, p.k_max, branch=-own)
    per_cell = g @ weights
    return float(c_ee(delta_k, d_beta, params) * np.dot(f, per_cell))


def inter_rate(k1, grid, p: EeRateParams, s: ScreeningParams,
               params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """Inter-band rate of a conduction electron at k1 against valence-band occupation."""
    centers, f = grid.occupied(-1)
    return inter_rate_cells(k1, centers, f, grid.delta_k, s, p, params)


def sample_beta(k1, k2, u, p: EeRateParams, s: ScreeningParams, u_jitter=None) -> float:
    """Curve parameter for an intra-band event.

    Uniform on [0, 2 pi) by default; with ``p.beta_weighted`` the node is
    drawn proportionally to g(beta) on the rate grid and jittered within it.
    """
    if not p.beta_weighted:
        return TWO_PI * float(u)
    betas = beta_nodes(p.m)
    g = intra_integrand(np.asarray(k1)[None, :], np.asarray(k2)[None, :], betas, s)
    cum = np.cumsum(g)
    if cum[-1] <= 0.0:
        return TWO_PI * float(u)
    idx = int(np.searchsorted(cum, float(u) * cum[-1], side="right"))
    idx = min(idx, p.m - 1)
    jitter = 0.5 if u_jitter is None else float(u_jitter)
    return float((betas[idx] + (jitter - 0.5) * TWO_PI / p.m) % TWO_PI)
