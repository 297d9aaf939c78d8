"""Static RPA screening for doped graphene.

The screened interaction enters every e-e matrix element through the
denominator ``eps(q) * q = q + C_eps * Pi(q)`` where ``Pi`` is the static
polarizability normalized by the density of states at the Fermi level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .material import DEFAULT_MATERIAL, MaterialParams, fermi_momentum

# q within this fraction of k_F from 2 k_F is evaluated on the inner branch
_BRANCH_TOL = 1e-9


@dataclass(frozen=True)
class ScreeningParams:
    k_F: float
    r_s: float
    g_s: int = 2
    g_v: int = 2

    def __post_init__(self):
        if not self.k_F > 0:
            raise ValueError("k_F must be positive")

    @property
    def C_eps(self) -> float:
        """Screening wave-vector (r_s k_F / 2) (g_s g_v)^(3/2), in 1/nm."""
        return 0.5 * self.r_s * self.k_F * (self.g_s * self.g_v) ** 1.5

    @classmethod
    def from_density(cls, n: float, params: MaterialParams = DEFAULT_MATERIAL) -> "ScreeningParams":
        return cls(k_F=fermi_momentum(n, params), r_s=params.r_s, g_s=params.g_s, g_v=params.g_v)


def pi_tilde(q, k_F: float):
    """Normalized static polarizability: 1 below 2 k_F, growing above."""
    q = np.asarray(q, dtype=float)
    out = np.ones_like(q)
    outer = q > 2.0 * k_F * (1.0 + _BRANCH_TOL)
    if np.any(outer):
        qo = q[outer]
        x = 2.0 * k_F / qo
        out[outer] = (1.0 + math.pi * qo / (8.0 * k_F)
                      - np.sqrt(qo * qo - 4.0 * k_F * k_F) / (2.0 * qo)
                      - qo / (4.0 * k_F) * np.arcsin(x))
    return out if out.ndim else float(out)


def pi_tilde_interband(q, k_F: float):
    """Interband part pi q / (8 k_F) of the polarizability."""
    return math.pi * np.asarray(q, dtype=float) / (8.0 * k_F)


def pi_tilde_intraband(q, k_F: float):
    """Intraband part; adding the interband part gives :func:`pi_tilde`."""
    q = np.asarray(q, dtype=float)
    inner = q < 2.0 * k_F
    out = np.empty_like(q)
    out[inner] = 1.0 - math.pi * q[inner] / (8.0 * k_F)
    qo = q[~inner]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~inner] = (1.0 - np.sqrt(qo * qo - 4.0 * k_F * k_F) / (2.0 * qo)
                       - qo / (4.0 * k_F) * np.arcsin(np.minimum(2.0 * k_F / qo, 1.0)))
    return out


def screened_denominator(q, s: ScreeningParams):
    """eps(q) q = q + C_eps * pi_tilde(q), strictly positive (-> C_eps as q -> 0)."""
    q = np.asarray(q, dtype=float)
    out = q + s.C_eps * pi_tilde(q, s.k_F)
    return out if np.ndim(out) else float(out)
