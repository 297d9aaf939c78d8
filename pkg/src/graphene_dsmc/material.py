"""Material constants, unit system and band structure of suspended graphene.

Internal units: energy in eV, length in nm, time in ps.  Wave-vectors are
in 1/nm and measured from the Dirac point, so ``energy = band * gamma * |k|``
with ``gamma = hbar * v_F``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import integrate
from scipy.special import expit

HBAR = 6.582119569e-4  # eV ps
K_B = 8.617333262e-5  # eV / K
E_SQUARED = 1.439964548  # eV nm, Gaussian units (e^2 / (4 pi eps0) in SI)

# table unit -> internal unit factors
CM_PER_S = 1e-5  # cm/s -> nm/ps
G_PER_CM2 = 1e-3 / 1.602176634e-19 * 1e24 / 1e18 / 1e14  # g/cm^2 -> eV ps^2 / nm^4
EV_PER_CM = 1e-7  # eV/cm -> eV/nm
MEV = 1e-3  # meV -> eV

CONDUCTION = 1
VALENCE = -1

# Table values in the units they are usually quoted in.
TABLE_DEFAULTS = {
    "v_F": (1e8, "cm/s"),
    "v_p": (2e6, "cm/s"),
    "sigma_m": (7.6e-8, "g/cm^2"),
    "D_ac": (6.8, "eV"),
    "hbar_omega_O": (164.6, "meV"),
    "D_O": (1e9, "eV/cm"),
    "hbar_omega_K": (124.0, "meV"),
    "D_K": (3.5e8, "eV/cm"),
}

_UNIT_FACTORS = {"cm/s": CM_PER_S, "g/cm^2": G_PER_CM2, "eV": 1.0, "meV": MEV, "eV/cm": EV_PER_CM}


class UndefinedDirectionError(ValueError):
    """Velocity requested at k = 0, where the direction is undefined."""


@dataclass(frozen=True)
class MaterialParams:
    """Physical parameters in internal units (eV, nm, ps, K)."""

    v_F: float = 1e8 * CM_PER_S
    v_p: float = 2e6 * CM_PER_S
    sigma_m: float = 7.6e-8 * G_PER_CM2
    D_ac: float = 6.8
    hbar_omega_O: float = 164.6 * MEV
    D_O: float = 1e9 * EV_PER_CM
    hbar_omega_K: float = 124.0 * MEV
    D_K: float = 3.5e8 * EV_PER_CM
    T: float = 300.0
    g_s: int = 2
    g_v: int = 2
    kappa: float = 1.0
    r_s_override: float | None = None

    def __post_init__(self):
        for name in ("v_F", "v_p", "sigma_m", "D_ac", "hbar_omega_O", "D_O",
                     "hbar_omega_K", "D_K", "T", "kappa"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.g_s < 1 or self.g_v < 1:
            raise ValueError("degeneracies must be >= 1")
        if self.r_s_override is not None and not self.r_s_override > 0:
            raise ValueError("r_s_override must be positive")

    @property
    def gamma(self) -> float:
        """hbar * v_F in eV nm."""
        return HBAR * self.v_F

    @property
    def kT(self) -> float:
        return K_B * self.T

    @property
    def degeneracy(self) -> int:
        return self.g_s * self.g_v

    @property
    def r_s(self) -> float:
        """Dimensionless Wigner-Seitz radius e^2/(kappa gamma) * sqrt(4/(g_s g_v))."""
        if self.r_s_override is not None:
            return self.r_s_override
        return E_SQUARED / (self.kappa * self.gamma) * math.sqrt(4.0 / self.degeneracy)

    @property
    def omega_O(self) -> float:
        return self.hbar_omega_O / HBAR

    @property
    def omega_K(self) -> float:
        return self.hbar_omega_K / HBAR

    def with_temperature(self, T: float) -> "MaterialParams":
        return replace(self, T=T)

    def to_table_units(self) -> dict[str, float]:
        """Tabulated constants converted back to their customary units."""
        return {name: getattr(self, name) / _UNIT_FACTORS[unit]
                for name, (_, unit) in TABLE_DEFAULTS.items()}

    @classmethod
    def from_table_units(cls, table: dict[str, float] | None = None, **extra) -> "MaterialParams":
        table = dict(table or {})
        kwargs = {}
        for name, (default, unit) in TABLE_DEFAULTS.items():
            kwargs[name] = table.pop(name, default) * _UNIT_FACTORS[unit]
        if table:
            raise ValueError(f"unknown table constants: {sorted(table)}")
        kwargs.update(extra)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MaterialParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown material keys: {sorted(unknown)}")
        return cls(**data)


DEFAULT_MATERIAL = MaterialParams()


@dataclass(frozen=True)
class Particle:
    """One simulated electron: wave-vector (1/nm) and band index (+1 or -1)."""

    k: tuple[float, float]
    band: int = CONDUCTION

    def __post_init__(self):
        if self.band not in (CONDUCTION, VALENCE):
            raise ValueError(f"band must be +1 or -1, got {self.band}")


def energy(k, band=CONDUCTION, params: MaterialParams = DEFAULT_MATERIAL):
    """Band energy band * gamma * |k| (eV); k has shape (..., 2)."""
    k = np.asarray(k, dtype=float)
    return np.asarray(band) * params.gamma * np.hypot(k[..., 0], k[..., 1])


def velocity(k, band=CONDUCTION, params: MaterialParams = DEFAULT_MATERIAL):
    """Group velocity band * v_F * k/|k| in nm/ps."""
    k = np.asarray(k, dtype=float)
    norm = np.hypot(k[..., 0], k[..., 1])
    if np.any(norm == 0.0):
        raise UndefinedDirectionError("velocity is undefined at the Dirac point (k = 0)")
    scale = np.asarray(band) * params.v_F / norm
    return k * scale[..., None]


def fermi_dirac(eps, eps_F: float, T: float):
    """Fermi-Dirac occupation; saturates cleanly for huge exponents."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    x = (np.asarray(eps, dtype=float) - eps_F) / (K_B * T)
    out = expit(-x)  # 1/(1+exp(x)), overflow-free and accurate in both tails
    return out if out.ndim else float(out)


def bose_einstein(hbar_omega: float, T: float) -> float:
    if not (hbar_omega > 0 and T > 0):
        raise ValueError("phonon energy and temperature must be positive")
    return 1.0 / math.expm1(hbar_omega / (K_B * T))


def density_of_states(eps, params: MaterialParams = DEFAULT_MATERIAL):
    """States per unit area per unit energy, g_s g_v |eps| / (2 pi gamma^2)."""
    return params.degeneracy * np.abs(eps) / (2.0 * math.pi * params.gamma**2)


def fermi_momentum(n: float, params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """k_F = sqrt(4 pi n / (g_s g_v)) for an areal density n in 1/nm^2."""
    if not n > 0:
        raise ValueError(f"density must be positive, got {n!r}")
    return math.sqrt(4.0 * math.pi * n / params.degeneracy)


def equilibrium_density(eps_F: float, params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """Conduction-band density (1/nm^2) of a Fermi-Dirac gas at params.T.

    Radial form of g_s g_v / (2 pi)^2 * integral of f over the plane.
    """
    g, kT = params.gamma, params.kT
    k_top = max(eps_F, 0.0) / g + 60.0 * kT / g

    def integrand(k):
        return k * fermi_dirac(g * k, eps_F, params.T)

    kf = max(eps_F, 0.0) / g
    points = [kf] if 0 < kf < k_top else None
    val, _ = integrate.quad(integrand, 0.0, k_top, points=points, limit=200,
                            epsabs=0.0, epsrel=1e-12)
    return params.degeneracy / (2.0 * math.pi) * val


def mean_equilibrium_energy(eps_F: float, params: MaterialParams = DEFAULT_MATERIAL) -> float:
    """Mean conduction-band energy of the Fermi-Dirac gas, by 1D quadrature in energy."""
    top = max(eps_F, 0.0) + 60.0 * params.kT
    num, _ = integrate.quad(lambda e: e * e * fermi_dirac(e, eps_F, params.T), 0.0, top, limit=200)
    den, _ = integrate.quad(lambda e: e * fermi_dirac(e, eps_F, params.T), 0.0, top, limit=200)
    return num / den
