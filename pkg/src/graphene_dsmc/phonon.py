"""Electron-phonon scattering in the conduction band.

Out-scattering rates are ``lambda(k) = integral S(k, k') dk'`` over the plane,
with the squared matrix elements carrying their own ``1/(2 pi)^2`` factor.
Integrating the energy delta over the final circle ``|k'| = eps'/gamma`` gives

* acoustic (elastic, LA+TA):  D_ac^2 kT eps / (4 hbar sigma_m v_p^2 gamma^2)
* optical (LO+TO):            N D_O^2 eps' / (sigma_m omega_O gamma^2)
* K phonon:                   N D_K^2 eps' / (sigma_m omega_K gamma^2)

where ``N`` is the Bose occupation (absorption) or ``N + 1`` (emission) and
``eps' = eps +/- hbar omega``.  Emission below threshold would land in the
valence band and is forbidden in unipolar mode.  Pauli blocking is not part
of the rates; it is applied by rejection when an event is executed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .material import DEFAULT_MATERIAL, HBAR, MaterialParams, bose_einstein


class Kind(enum.Enum):
    ACOUSTIC = "acoustic"
    OPTICAL = "optical"
    K_PHONON = "K"


class Direction(enum.Enum):
    ABSORPTION = "abs"
    EMISSION = "em"
    ELASTIC = "elastic"


@dataclass(frozen=True)
class PhononChannel:
    kind: Kind
    direction: Direction

    def __post_init__(self):
        if (self.kind is Kind.ACOUSTIC) != (self.direction is Direction.ELASTIC):
            raise ValueError("only the acoustic channel is elastic")

    @property
    def label(self) -> str:
        if self.kind is Kind.ACOUSTIC:
            return "ac"
        prefix = "opt" if self.kind is Kind.OPTICAL else "K"
        return f"{prefix}_{self.direction.value}"


ACOUSTIC = PhononChannel(Kind.ACOUSTIC, Direction.ELASTIC)
OPT_ABS = PhononChannel(Kind.OPTICAL, Direction.ABSORPTION)
OPT_EM = PhononChannel(Kind.OPTICAL, Direction.EMISSION)
K_ABS = PhononChannel(Kind.K_PHONON, Direction.ABSORPTION)
K_EM = PhononChannel(Kind.K_PHONON, Direction.EMISSION)

CHANNELS = (ACOUSTIC, OPT_ABS, OPT_EM, K_ABS, K_EM)


class BelowThresholdError(ValueError):
    """Emission requested from a state below the phonon energy."""


def acoustic_rate(eps, params: MaterialParams = DEFAULT_MATERIAL):
    eps = np.maximum(np.asarray(eps, dtype=float), 0.0)
    pref = params.D_ac**2 * params.kT / (4.0 * HBAR * params.sigma_m * params.v_p**2 * params.gamma**2)
    return pref * eps


def _inelastic_rate(eps, direction: Direction, hbar_omega, D, params):
    eps = np.asarray(eps, dtype=float)
    n = bose_einstein(hbar_omega, params.T)
    omega = hbar_omega / HBAR
    pref = D**2 / (params.sigma_m * omega * params.gamma**2)
    if direction is Direction.ABSORPTION:
        return pref * n * (np.maximum(eps, 0.0) + hbar_omega)
    if direction is Direction.EMISSION:
        return pref * (n + 1.0) * np.maximum(eps - hbar_omega, 0.0)
    raise ValueError("inelastic channels need ABSORPTION or EMISSION")


def optical_rate(eps, direction: Direction, params: MaterialParams = DEFAULT_MATERIAL):
    return _inelastic_rate(eps, direction, params.hbar_omega_O, params.D_O, params)


def k_phonon_rate(eps, direction: Direction, params: MaterialParams = DEFAULT_MATERIAL):
    return _inelastic_rate(eps, direction, params.hbar_omega_K, params.D_K, params)


def channel_rate(channel: PhononChannel, eps, params: MaterialParams = DEFAULT_MATERIAL):
    if channel.kind is Kind.ACOUSTIC:
        return acoustic_rate(eps, params)
    if channel.kind is Kind.OPTICAL:
        return optical_rate(eps, channel.direction, params)
    return k_phonon_rate(eps, channel.direction, params)


def phonon_energy(channel: PhononChannel, params: MaterialParams = DEFAULT_MATERIAL) -> float:
    if channel.kind is Kind.ACOUSTIC:
        return 0.0
    return params.hbar_omega_O if channel.kind is Kind.OPTICAL else params.hbar_omega_K


def final_energy(channel: PhononChannel, eps, params: MaterialParams = DEFAULT_MATERIAL):
    hw = phonon_energy(channel, params)
    if channel.direction is Direction.EMISSION:
        return np.asarray(eps) - hw
    return np.asarray(eps) + hw


@dataclass
class PhononRateTable:
    """Per-channel rates on an energy grid, linearly interpolated.

    All rates are piecewise linear in energy, so placing the emission
    thresholds on the grid makes the interpolation exact up to rounding.
    """

    energies: np.ndarray
    rates: np.ndarray  # (len(CHANNELS), len(energies))
    spacing: float
    max_energy: float

    @classmethod
    def build(cls, params: MaterialParams = DEFAULT_MATERIAL, max_energy: float = 1.5,
              spacing: float = 1e-3) -> "PhononRateTable":
        grid = np.arange(0.0, max_energy + 0.5 * spacing, spacing)
        extra = [hw for hw in (params.hbar_omega_O, params.hbar_omega_K) if hw < max_energy]
        grid = np.unique(np.concatenate([grid, extra]))
        rates = np.vstack([channel_rate(ch, grid, params) for ch in CHANNELS])
        return cls(energies=grid, rates=rates, spacing=spacing, max_energy=float(grid[-1]))

    def __call__(self, eps) -> np.ndarray:
        """Rates at energies ``eps``; shape (len(CHANNELS),) + eps.shape."""
        eps = np.asarray(eps, dtype=float)
        if np.any(eps > self.max_energy):
            raise ValueError(f"energy {eps.max():.4g} eV beyond rate table ({self.max_energy} eV)")
        flat = eps.ravel()
        out = np.vstack([np.interp(flat, self.energies, row) for row in self.rates])
        return out.reshape((len(CHANNELS),) + eps.shape)

    def total(self, eps) -> np.ndarray:
        return self(eps).sum(axis=0)

    @property
    def max_total(self) -> float:
        return float(self.rates.sum(axis=0).max())


class ScalarPhononRates:
    """Per-channel rates for one energy using plain floats (hot loop helper).

    Same closed forms as :func:`channel_rate`, with the prefactors precomputed.
    """

    def __init__(self, params: MaterialParams = DEFAULT_MATERIAL):
        self.a_ac = params.D_ac**2 * params.kT / (4.0 * HBAR * params.sigma_m * params.v_p**2 * params.gamma**2)
        self.hw_O = params.hbar_omega_O
        self.hw_K = params.hbar_omega_K
        p_O = params.D_O**2 / (params.sigma_m * params.omega_O * params.gamma**2)
        p_K = params.D_K**2 / (params.sigma_m * params.omega_K * params.gamma**2)
        n_O = bose_einstein(params.hbar_omega_O, params.T)
        n_K = bose_einstein(params.hbar_omega_K, params.T)
        self.abs_O, self.em_O = p_O * n_O, p_O * (n_O + 1.0)
        self.abs_K, self.em_K = p_K * n_K, p_K * (n_K + 1.0)

    def __call__(self, eps: float) -> tuple[float, float, float, float, float]:
        """Rates in CHANNELS order."""
        return (self.a_ac * eps,
                self.abs_O * (eps + self.hw_O),
                self.em_O * (eps - self.hw_O) if eps > self.hw_O else 0.0,
                self.abs_K * (eps + self.hw_K),
                self.em_K * (eps - self.hw_K) if eps > self.hw_K else 0.0)


def _cardioid_angle(u):
    """Angle in (-pi, pi] with density (1 + cos t)/(2 pi), by inverting the CDF."""
    y = 2.0 * math.pi * (np.asarray(u, dtype=float) - 0.5)  # t + sin t = y
    lo = np.full_like(y, -math.pi)
    hi = np.full_like(y, math.pi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = mid + np.sin(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def scattering_angle(channel: PhononChannel, u):
    """Map uniforms ``u`` in [0, 1) to the channel's angular distribution."""
    u = np.asarray(u, dtype=float)
    if channel.kind is Kind.ACOUSTIC:
        return _cardioid_angle(u)
    if channel.kind is Kind.K_PHONON:
        t = _cardioid_angle(u) + math.pi
        return np.where(t > math.pi, t - 2.0 * math.pi, t)
    return 2.0 * math.pi * u - math.pi


def final_state(k, channel: PhononChannel, u_angle, params: MaterialParams = DEFAULT_MATERIAL):
    """Final wave-vector for a phonon event given one uniform for the angle."""
    k = np.asarray(k, dtype=float)
    kmag = np.hypot(k[..., 0], k[..., 1])
    eps_new = final_energy(channel, params.gamma * kmag, params)
    if np.any(eps_new < 0):
        raise BelowThresholdError(f"{channel.label} below threshold")
    phi = np.arctan2(k[..., 1], k[..., 0]) + scattering_angle(channel, u_angle)
    r = eps_new / params.gamma
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def sample_phonon_final_state(k, channel: PhononChannel, rng: np.random.Generator,
                              params: MaterialParams = DEFAULT_MATERIAL):
    k = np.asarray(k, dtype=float)
    u = rng.random(k.shape[:-1])
    return final_state(k, channel, u, params)
