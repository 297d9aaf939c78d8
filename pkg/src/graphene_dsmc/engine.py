"""Ensemble Monte Carlo for electrons in the conduction band of graphene.

Time is advanced in sub-steps of ``tau_sync``.  Inside a sub-step every
particle carries its own majorant ``Gamma_p`` and a sequence of candidate
event times drawn from Exp(Gamma_p); at each candidate the real rates
(five phonon channels plus the e-e rate) are compared with ``u * Gamma_p``
and the leftover probability is self-scattering.  Real events are then
subjected to Pauli rejection against the occupancy grid.

The field acts identically on all electrons, so positions are stored as of
the start of the current sub-step and shifted by ``a * (t - t0)`` when read;
the occupancy mesh is translated along with them (see :mod:`.grid`).

Serial mode processes candidates in global time order from a single numpy
``Generator``.  Draw order, per sub-step:

1. one Exp(1) per particle, in particle order (first candidate times);
2. per candidate, in time order: ``u_select``; then for a phonon event
   ``u_angle, eta``; for an e-e event ``partner, u_beta, eta1, eta2`` (plus
   ``u_jitter`` when ``beta_weighted``); then one Exp(1) for the next
   candidate.  A majorant violation draws only the Exp(1).

Parallel mode evaluates the next candidate of every pending particle at
once against the current state, then commits the proposals in
``(t, pid)`` order.  An e-e proposal whose partner (or itself) was changed
earlier in the same round is a conflict and counts as rejected.  All
randomness is counter based (:mod:`.rng`) so the outcome does not depend on
the number of workers.  E-e rates are frozen within a sub-step and
refreshed at the barrier.
"""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import rng as crng
from ._kernels import intra_rate_sum, intra_rate_sum_many
from .ee import TWO_PI, EeRateParams, c_ee, sample_beta
from .grid import BookkeepingError, GridSpec, OccupancyGrid, OutOfBoxError
from .material import (CONDUCTION, DEFAULT_MATERIAL, HBAR, MaterialParams, Particle,
                       equilibrium_density, fermi_dirac)
from .phonon import CHANNELS, Direction, Kind, PhononRateTable, ScalarPhononRates
from .screening import ScreeningParams

FIELD_UNIT = 1e-4  # 1 kV/cm acting on charge e, in eV/nm
UNIPOLAR_MIN_EPS_F = 0.15
N_PH = len(CHANNELS)
EE_INDEX = N_PH
SELF_SCATTERING = N_PH + 1
THREADS_ENV = "GRAPHENE_DSMC_THREADS"


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class MajorantViolation(ValueError):
    """Total real rate exceeded the majorant."""


class RunAborted(RuntimeError):
    """Fatal condition during a run; carries the diagnostics gathered so far."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SimConfig:
    eps_F: float = 0.15
    E: tuple[float, float] = (1.0, 0.0)  # kV/cm
    T: float = 300.0
    N_p: int = 5000
    t_end: float = 5.0
    dt_obs: float = 0.05
    seed: int = 1
    ee_enabled: bool = True
    mode: str = "serial"
    tau_sync: float = 0.005
    init: str = "stratified"
    headroom: float = 0.8
    grid: GridSpec = field(default_factory=GridSpec)
    ee: EeRateParams = field(default_factory=EeRateParams)
    material: MaterialParams = DEFAULT_MATERIAL

    def __post_init__(self):
        object.__setattr__(self, "E", tuple(float(x) for x in self.E))
        if len(self.E) != 2:
            raise ConfigError("E must have two components")
        if self.N_p < 100:
            raise ConfigError(f"N_p must be at least 100, got {self.N_p}")
        for name in ("t_end", "dt_obs", "tau_sync", "T"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.mode not in ("serial", "parallel"):
            raise ConfigError(f"mode must be 'serial' or 'parallel', got {self.mode!r}")
        if self.init not in ("stratified", "rejection"):
            raise ConfigError(f"init must be 'stratified' or 'rejection', got {self.init!r}")
        if not 0.0 < self.headroom < 0.9:
            raise ConfigError("headroom must lie in (0, 0.9)")
        ratio = self.dt_obs / self.tau_sync
        if abs(ratio - round(ratio)) > 1e-6 * ratio or round(ratio) < 1:
            raise ConfigError("dt_obs must be a whole multiple of tau_sync")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.eps_F < UNIPOLAR_MIN_EPS_F:
            warnings.warn(f"eps_F = {self.eps_F} eV is below {UNIPOLAR_MIN_EPS_F} eV; "
                          "the unipolar approximation may not hold", stacklevel=3)

    @property
    def params(self) -> MaterialParams:
        return self.material.with_temperature(self.T)

    @property
    def drift(self) -> np.ndarray:
        """dk/dt = -e E / hbar in 1/(nm ps)."""
        return -np.asarray(self.E) * FIELD_UNIT / HBAR

    @property
    def steps_per_obs(self) -> int:
        return int(round(self.dt_obs / self.tau_sync))

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.tau_sync - 1e-9))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["E"] = list(self.E)
        d["grid"] = dataclasses.asdict(self.grid)
        d["ee"] = dataclasses.asdict(self.ee)
        d["material"] = self.material.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        if "grid" in data:
            data["grid"] = GridSpec(**data["grid"])
        if "ee" in data:
            data["ee"] = EeRateParams(**data["ee"])
        if "material" in data:
            data["material"] = MaterialParams.from_dict(data["material"])
        return cls(**data)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Ensemble:
    """Wave-vectors (n, 2) in 1/nm and band indices of the simulated electrons."""

    k: np.ndarray
    band: np.ndarray

    def __len__(self) -> int:
        return len(self.k)

    def particles(self) -> list[Particle]:
        return [Particle(k=(float(x), float(y)), band=int(b)) for (x, y), b in zip(self.k, self.band)]

    @classmethod
    def from_particles(cls, particles) -> "Ensemble":
        k = np.array([p.k for p in particles], dtype=float).reshape(-1, 2)
        band = np.array([p.band for p in particles], dtype=np.int64)
        return cls(k=k, band=band)


@dataclass
class TimeSeries:
    t: list = field(default_factory=list)
    Vx: list = field(default_factory=list)
    Vy: list = field(default_factory=list)
    W: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    f_max: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, t, V, W, rho, f_max):
        self.t.append(float(t))
        self.Vx.append(float(V[0]))
        self.Vy.append(float(V[1]))
        self.W.append(float(W))
        self.rho.append(float(rho))
        self.f_max.append(float(f_max))

    def __len__(self) -> int:
        return len(self.t)

    def as_array(self) -> np.ndarray:
        """Columns t, Vx, Vy, W, rho."""
        return np.column_stack([self.t, self.Vx, self.Vy, self.W, self.rho])

    def steady_velocity(self, direction=None, fraction: float = 0.25) -> float:
        """Mean velocity over the final ``fraction`` of samples.

        Projected on ``direction`` (unit-normalized) when given, otherwise |V|.
        """
        n = len(self.t)
        if n == 0:
            raise ValueError("empty time series")
        start = n - max(1, int(math.ceil(fraction * n)))
        vx = float(np.mean(self.Vx[start:]))
        vy = float(np.mean(self.Vy[start:]))
        if direction is None:
            return math.hypot(vx, vy)
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return vx * d[0] + vy * d[1]


@dataclass
class RunResult:
    timeseries: TimeSeries
    grid: OccupancyGrid
    ensemble: Ensemble
    diagnostics: dict
    config: SimConfig


# -- elementary operations ----------------------------------------------------

def free_flight(k, E, dt: float):
    """k - (e E / hbar) dt with E in kV/cm; works on (..., 2) arrays."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return np.asarray(k, dtype=float) - np.asarray(E, dtype=float) * (FIELD_UNIT / HBAR) * dt


def select_event(rates, gamma_max: float, u: float) -> int:
    """Index of the channel hit by ``u * gamma_max``; ``len(rates)`` means self-scattering."""
    rates = np.asarray(rates, dtype=float)
    total = float(rates.sum())
    if total > gamma_max:
        raise MajorantViolation(f"total rate {total} exceeds majorant {gamma_max}")
    r = u * gamma_max
    acc = 0.0
    for i, rate in enumerate(rates):
        acc += rate
        if r < acc:
            return i
    return len(rates)


def pauli_accept(f_finals, etas) -> bool:
    """Accept iff every eta exceeds the (clamped) occupation of its final state."""
    return all(eta > min(max(f, 0.0), 1.0) for f, eta in zip(f_finals, etas))


def select_ee_partner(n: int, self_index: int, rng: np.random.Generator) -> int:
    """Uniform index in range(n) other than ``self_index``."""
    if n < 2:
        raise ValueError("e-e scattering needs at least two particles")
    j = int(rng.integers(n - 1))
    return j + 1 if j >= self_index else j


def observables(k, grid: OccupancyGrid | None = None, params: MaterialParams = DEFAULT_MATERIAL):
    """Mean velocity (nm/ps), mean energy (eV) and density (1/nm^2)."""
    k = np.asarray(k, dtype=float).reshape(-1, 2)
    if len(k) == 0:
        raise ValueError("empty ensemble")
    norm = np.hypot(k[:, 0], k[:, 1])
    safe = np.where(norm > 0.0, norm, 1.0)
    v = params.v_F * k / safe[:, None] * (norm > 0.0)[:, None]
    V = v.mean(axis=0)
    W = params.gamma * norm.mean()
    rho = grid.density() if grid is not None else float("nan")
    return V, float(W), rho


def cardioid_angle(u: float) -> float:
    """Scalar inverse CDF of (1 + cos t)/(2 pi) on (-pi, pi] (safeguarded Newton)."""
    y = TWO_PI * (u - 0.5)
    lo, hi = -math.pi, math.pi
    t = 0.5 * y
    for _ in range(100):
        g = t + math.sin(t) - y
        if g < 0.0:
            lo = t
        else:
            hi = t
        d = 1.0 + math.cos(t)
        nt = t - g / d if d > 1e-300 else 0.5 * (lo + hi)
        if not lo < nt < hi:
            nt = 0.5 * (lo + hi)
        if abs(nt - t) < 1e-15 or hi - lo < 1e-15:
            return nt
        t = nt
    return t


def _scalar_angle(kind: Kind, u: float) -> float:
    if kind is Kind.ACOUSTIC:
        return cardioid_angle(u)
    if kind is Kind.K_PHONON:
        return cardioid_angle(u) + math.pi
    return TWO_PI * u - math.pi


# -- initial condition --------------------------------------------------------

def _cell_masses(spec: GridSpec, eps_F: float, params: MaterialParams, order: int = 4) -> np.ndarray:
    """Integral of the Fermi-Dirac occupation over each cell (Gauss-Legendre)."""
    x, w = np.polynomial.legendre.leggauss(order)
    dk = spec.delta_k
    edges = -spec.k_max + dk * np.arange(spec.N)
    pts = (edges[:, None] + 0.5 * dk * (x[None, :] + 1.0)).ravel()  # (N*order,)
    kx, ky = np.meshgrid(pts, pts, indexing="ij")
    f = fermi_dirac(params.gamma * np.hypot(kx, ky), eps_F, params.T)
    ww = np.tile(w, spec.N) * 0.5 * dk
    weighted = f * ww[:, None] * ww[None, :]
    return weighted.reshape(spec.N, order, spec.N, order).sum(axis=(1, 3))


def _tail_density(k_max: float, eps_F: float, params: MaterialParams) -> float:
    """Density of the Fermi-Dirac gas beyond |k| = k_max (bounds the mass outside the box)."""
    g = params.gamma
    top = max(k_max, eps_F / g) + 60.0 * params.kT / g
    val, _ = integrate.quad(lambda k: k * fermi_dirac(g * k, eps_F, params.T), k_max, top, limit=200)
    return params.degeneracy / (2.0 * math.pi) * val


def _largest_remainder(expected: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(expected).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        rem = (expected - base).ravel()
        order = np.lexsort((np.arange(rem.size), -rem))[:short]
        flat = base.ravel()
        flat[order] += 1
        base = flat.reshape(expected.shape)
    return base


def init_ensemble(cfg: SimConfig, rng: np.random.Generator):
    """Sample the Fermi-Dirac initial state; returns (ensemble, grid, cell indices).

    ``cfg.init == "stratified"`` fixes each cell's count to the nearest
    integer of its expected Fermi-Dirac share (largest remainder) and draws
    positions inside the cell by rejection.  ``"rejection"`` draws every
    particle independently by rejection on the whole box.
    """
    params = cfg.params
    spec = cfg.grid
    rho = equilibrium_density(cfg.eps_F, params)
    masses = _cell_masses(spec, cfg.eps_F, params)
    lost = _tail_density(spec.k_max, cfg.eps_F, params) / rho
    if lost > 1e-3:
        raise ConfigError(f"k-box too small: {lost:.2%} of the Fermi-Dirac mass lies outside "
                          f"(k_max = {spec.k_max} 1/nm)")
    dk, kmax = spec.delta_k, spec.k_max
    n = cfg.N_p
    if cfg.init == "stratified":
        counts = _largest_remainder(masses * (n / masses.sum()), n)
        cells = np.repeat(np.argwhere(np.ones_like(counts, dtype=bool)), counts.ravel(), axis=0)
        lo = -kmax + cells * dk
        # largest occupation in the cell sits at its point nearest the origin
        near = np.clip(0.0, lo, lo + dk)
        f_top = fermi_dirac(params.gamma * np.hypot(near[:, 0], near[:, 1]), cfg.eps_F, params.T)
        k = np.empty((n, 2))
        todo = np.arange(n)
        for _ in range(10_000):
            if todo.size == 0:
                break
            trial = lo[todo] + dk * rng.random((todo.size, 2))
            f = fermi_dirac(params.gamma * np.hypot(trial[:, 0], trial[:, 1]), cfg.eps_F, params.T)
            ok = rng.random(todo.size) * f_top[todo] < f
            k[todo[ok]] = trial[ok]
            todo = todo[~ok]
        if todo.size:
            raise ConfigError("initial-state rejection sampling did not converge")
    else:
        chunks = []
        have = 0
        while have < n:
            trial = kmax * (2.0 * rng.random((4 * (n - have) + 1000, 2)) - 1.0)
            f = fermi_dirac(params.gamma * np.hypot(trial[:, 0], trial[:, 1]), cfg.eps_F, params.T)
            keep = trial[rng.random(len(trial)) < f]
            chunks.append(keep)
            have += len(keep)
        k = np.concatenate(chunks)[:n]
    ensemble = Ensemble(k=k, band=np.full(n, CONDUCTION, dtype=np.int64))
    grid = OccupancyGrid(spec, rho, n, params)
    idx = grid.fill(k)
    return ensemble, grid, idx


# -- simulation ---------------------------------------------------------------

def _thread_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    return os.cpu_count() or 1


def _new_diagnostics() -> dict:
    d = {"candidates": 0, "self_scattering": 0, "ee_proposed": 0, "ee_accepted": 0,
         "ee_pauli_rejected": 0, "ee_null": 0, "ph_pauli_rejected": 0,
         "out_of_box_rejections": 0, "conflicts": 0, "majorant_violations": 0,
         "majorant_refreshes": 0, "rate_evaluations": 0, "pauli_hard_violations": 0,
         "max_occupancy": 0.0, "max_momentum_residual": 0.0, "max_energy_residual": 0.0,
         "gamma_max": 0.0}
    for ch in CHANNELS:
        d[f"{ch.label}_proposed"] = 0
        d[f"{ch.label}_accepted"] = 0
    return d


class Simulation:
    """One run; ``run()`` advances it to ``cfg.t_end``."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.params = params = cfg.params
        self.rng = np.random.default_rng(cfg.seed)
        self.ensemble, self.grid, self.cells = init_ensemble(cfg, self.rng)
        self.k = self.ensemble.k
        self.n = len(self.k)
        self.table = PhononRateTable.build(params, max_energy=max(1.5, 1.5 * params.gamma * cfg.grid.k_max))
        self.ph = ScalarPhononRates(params)
        self.screening = ScreeningParams.from_density(self.grid.rho, params)
        self.c_ee = c_ee(self.grid.delta_k, TWO_PI / cfg.ee.m, params)
        self.drift = cfg.drift
        self.t = 0.0
        self.diag = _new_diagnostics()
        self.ee_on = cfg.ee_enabled and self.n >= 2
        self.lam_ee = np.zeros(self.n)
        self.counters = np.zeros(self.n, dtype=np.uint64)
        self.threads = _thread_count()
        if self.ee_on:
            self.lam_ee = self.ee_rates(self.k)
        self.gamma_max = self._global_majorant()

    # -- rates ------------------------------------------------------------
    def _occupied_now(self, shift):
        centers, f = self.grid.occupied()
        return np.ascontiguousarray(centers + shift), f

    def ee_rate(self, k1x: float, k1y: float, shift) -> float:
        """E-e rate of a particle at absolute k1 with the mesh shifted by ``shift``."""
        centers, f = self._occupied_now(shift)
        self.diag["rate_evaluations"] += 1
        s = self.screening
        return self.c_ee * intra_rate_sum(k1x, k1y, centers, f, self.cfg.ee.m, s.C_eps, s.k_F)

    def ee_rates(self, k1, shift=(0.0, 0.0)) -> np.ndarray:
        k1 = np.ascontiguousarray(np.asarray(k1, dtype=float).reshape(-1, 2))
        centers, f = self._occupied_now(np.asarray(shift, dtype=float))
        s, m = self.screening, self.cfg.ee.m
        self.diag["rate_evaluations"] += len(k1)
        workers = min(self.threads, max(1, len(k1) // 64))
        if workers <= 1:
            return self.c_ee * intra_rate_sum_many(k1, centers, f, m, s.C_eps, s.k_F)
        parts = np.array_split(k1, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda part: intra_rate_sum_many(part, centers, f, m, s.C_eps, s.k_F), parts))
        return self.c_ee * np.concatenate(out)

    def _global_majorant(self) -> float:
        eps = self.params.gamma * np.hypot(self.k[:, 0], self.k[:, 1])
        total = self.table.total(eps) + (self.lam_ee if self.ee_on else 0.0)
        return float(total.max()) / self.cfg.headroom

    # -- observables ------------------------------------------------------
    def _record(self, ts: TimeSeries):
        V, W, rho = observables(self.k, self.grid, self.params)
        fmax = self.grid.max_occupancy()
        if fmax > self.grid.pauli_bound():
            self.diag["pauli_hard_violations"] += 1
        self.diag["max_occupancy"] = max(self.diag["max_occupancy"], fmax)
        ts.append(self.t, V, W, rho, fmax)

    # -- driver -------------------------------------------------------------
    def run(self) -> RunResult:
        cfg = self.cfg
        ts = TimeSeries()
        self._record(ts)
        step = self._serial_substep if cfg.mode == "serial" else self._parallel_substep
        tau = cfg.tau_sync
        try:
            for i in range(cfg.n_steps):
                t0 = i * tau
                t1 = min((i + 1) * tau, cfg.t_end)
                self.gamma_max = self._global_majorant()
                self.diag["gamma_max"] = max(self.diag["gamma_max"], self.gamma_max)
                step(t0, t1)
                self._advance(t1 - t0)
                self.t = t1
                if (i + 1) % cfg.steps_per_obs == 0 or i + 1 == cfg.n_steps:
                    self._record(ts)
        except (OutOfBoxError, BookkeepingError) as exc:
            raise RunAborted(f"run aborted at t = {self.t:.4f} ps: {exc}", dict(self.diag)) from exc
        self.ensemble.k = self.k
        ts.metadata = {"config_hash": cfg.hash(), "seed": cfg.seed}
        return RunResult(timeseries=ts, grid=self.grid, ensemble=self.ensemble,
                         diagnostics=dict(self.diag), config=cfg)

    def _advance(self, dt: float):
        shift = self.drift * dt
        if not np.any(shift):
            return
        self.k += shift
        self.cells += self.grid.translate(shift)

    # -- shared event helpers ---------------------------------------------------
    def _cell_of(self, kx: float, ky: float):
        """Cell of a sub-step-frame point, or None outside the box."""
        g = self.grid
        i = math.floor((kx - g.origin[0]) / g.delta_k)
        j = math.floor((ky - g.origin[1]) / g.delta_k)
        if 0 <= i < g.N and 0 <= j < g.N:
            return i, j
        return None

    def _occ(self, cell) -> float:
        return min(self.grid.counts[0, cell[0], cell[1]] * self.grid.quantum, 1.0)

    def _move(self, p: int, kx: float, ky: float, cell):
        ci, cj = self.cells[p]
        self.grid.add(int(ci), int(cj), CONDUCTION, -1)
        self.grid.add(cell[0], cell[1], CONDUCTION, +1)
        self.k[p, 0] = kx
        self.k[p, 1] = ky
        self.cells[p, 0] = cell[0]
        self.cells[p, 1] = cell[1]

    def _phonon_final(self, ch_index: int, kx: float, ky: float, eps: float, u: float):
        ch = CHANNELS[ch_index]
        if ch.kind is Kind.ACOUSTIC:
            eps_new = eps
        else:
            hw = self.params.hbar_omega_O if ch.kind is Kind.OPTICAL else self.params.hbar_omega_K
            eps_new = eps + hw if ch.direction is Direction.ABSORPTION else eps - hw
        phi = math.atan2(ky, kx) + _scalar_angle(ch.kind, u)
        r = eps_new / self.params.gamma
        return r * math.cos(phi), r * math.sin(phi)

    def _ee_final(self, k1x, k1y, k2x, k2y, beta):
        """Final pair on the ellipse, or None for a degenerate (collinear) pair."""
        n1 = math.sqrt(k1x * k1x + k1y * k1y)
        n2 = math.sqrt(k2x * k2x + k2y * k2y)
        Kx, Ky = k1x + k2x, k1y + k2y
        a = 0.5 * (n1 + n2)
        if a == 0.0:
            return None
        c = min(0.5 * math.sqrt(Kx * Kx + Ky * Ky), a)
        b = math.sqrt(max(a * a - c * c, 0.0))
        if b < 1e-9 * a:
            return None
        if 2.0 * c < 1e-12 * (n1 + n2):
            ct, st = 1.0, 0.0
        else:
            th = math.atan2(Ky, Kx)
            ct, st = math.cos(th), math.sin(th)
        x = a * math.cos(beta)
        y = b * math.sin(beta)
        px = 0.5 * Kx + x * ct - y * st
        py = 0.5 * Ky + x * st + y * ct
        return px, py, Kx - px, Ky - py

    def _check_conservation(self, k1, k2, k1p, k2p):
        scale = math.hypot(*k1) + math.hypot(*k2)
        if scale == 0.0:
            return
        dm = math.hypot(k1[0] + k2[0] - k1p[0] - k2p[0], k1[1] + k2[1] - k1p[1] - k2p[1]) / scale
        de = abs(scale - math.hypot(*k1p) - math.hypot(*k2p)) / scale
        d = self.diag
        d["max_momentum_residual"] = max(d["max_momentum_residual"], dm)
        d["max_energy_residual"] = max(d["max_energy_residual"], de)

    # -- serial ---------------------------------------------------------------
    def _serial_substep(self, t0: float, t1: float):
        rng, diag = self.rng, self.diag
        ax, ay = float(self.drift[0]), float(self.drift[1])
        gamma_p = np.full(self.n, self.gamma_max)
        first = t0 + rng.exponential(1.0, size=self.n) / gamma_p
        heap = [(t, p) for p, t in enumerate(first.tolist()) if t < t1]
        heapq.heapify(heap)
        gamma = self.params.gamma
        headroom = self.cfg.headroom
        while heap:
            t, p = heapq.heappop(heap)
            dt = t - t0
            kx = self.k[p, 0] + ax * dt
            ky = self.k[p, 1] + ay * dt
            eps = gamma * math.sqrt(kx * kx + ky * ky)
            rates = self.ph(eps)
            lam = float(self.lam_ee[p]) if self.ee_on else 0.0
            total = sum(rates) + lam
            g_p = gamma_p[p]
            diag["candidates"] += 1
            if total > g_p:
                diag["majorant_violations"] += 1
                gamma_p[p] = total / headroom
                nt = t + rng.exponential(1.0) / gamma_p[p]
                if nt < t1:
                    heapq.heappush(heap, (nt, p))
                continue
            r = rng.random() * g_p
            acc = 0.0
            chosen = SELF_SCATTERING
            for i, rate in enumerate(rates):
                acc += rate
                if r < acc:
                    chosen = i
                    break
            else:
                if r < acc + lam:
                    chosen = EE_INDEX
            if chosen < N_PH:
                self._serial_phonon(p, chosen, kx, ky, eps, dt)
            elif chosen == EE_INDEX:
                self._serial_ee(p, kx, ky, dt)
            else:
                diag["self_scattering"] += 1
            if total > 0.9 * g_p:
                diag["majorant_refreshes"] += 1
                gamma_p[p] = total / headroom
            nt = t + rng.exponential(1.0) / gamma_p[p]
            if nt < t1:
                heapq.heappush(heap, (nt, p))

    def _serial_phonon(self, p, ch_index, kx, ky, eps, dt):
        diag = self.diag
        label = CHANNELS[ch_index].label
        diag[f"{label}_proposed"] += 1
        u_angle = self.rng.random()
        eta = self.rng.random()
        nkx, nky = self._phonon_final(ch_index, kx, ky, eps, u_angle)
        bx, by = nkx - self.drift[0] * dt, nky - self.drift[1] * dt
        cell = self._cell_of(bx, by)
        if cell is None:
            diag["out_of_box_rejections"] += 1
            return
        if not eta > self._occ(cell):
            diag["ph_pauli_rejected"] += 1
            return
        self._move(p, bx, by, cell)
        diag[f"{label}_accepted"] += 1
        if self.ee_on:
            self.lam_ee[p] = self.ee_rate(nkx, nky, self.drift * dt)

    def _serial_ee(self, p, k1x, k1y, dt):
        diag, rng = self.diag, self.rng
        diag["ee_proposed"] += 1
        j = select_ee_partner(self.n, p, rng)
        u_beta = rng.random()
        eta1 = rng.random()
        eta2 = rng.random()
        ax, ay = self.drift[0] * dt, self.drift[1] * dt
        k2x = self.k[j, 0] + ax
        k2y = self.k[j, 1] + ay
        if self.cfg.ee.beta_weighted:
            u_jit = rng.random()
            beta = sample_beta((k1x, k1y), (k2x, k2y), u_beta, self.cfg.ee, self.screening, u_jit)
        else:
            beta = TWO_PI * u_beta
        final = self._ee_final(k1x, k1y, k2x, k2y, beta)
        if final is None:
            diag["ee_null"] += 1
            return
        px, py, qx, qy = final
        c1 = self._cell_of(px - ax, py - ay)
        c2 = self._cell_of(qx - ax, qy - ay)
        if c1 is None or c2 is None:
            diag["out_of_box_rejections"] += 1
            return
        if not (eta1 > self._occ(c1) and eta2 > self._occ(c2)):
            diag["ee_pauli_rejected"] += 1
            return
        self._move(p, px - ax, py - ay, c1)
        self._move(j, qx - ax, qy - ay, c2)
        diag["ee_accepted"] += 1
        self._check_conservation((k1x, k1y), (k2x, k2y), (px, py), (qx, qy))
        shift = self.drift * dt
        self.lam_ee[p] = self.ee_rate(px, py, shift)
        self.lam_ee[j] = self.ee_rate(qx, qy, shift)

    # -- parallel -------------------------------------------------------------
    def _uniform(self, pids, counters, slot):
        return crng.uniform(self.cfg.seed, pids, counters, slot)

    def _parallel_substep(self, t0: float, t1: float):
        diag = self.diag
        seed = self.cfg.seed
        headroom = self.cfg.headroom
        all_ids = np.arange(self.n, dtype=np.uint64)
        gamma_p = np.full(self.n, self.gamma_max)
        self.counters += np.uint64(1)
        t_next = t0 + crng.exponential(seed, all_ids, self.counters, gamma_p)
        modified_step = np.zeros(self.n, dtype=bool)
        pending = np.flatnonzero(t_next < t1)
        while pending.size:
            P = pending
            t = t_next[P]
            dt = t - t0
            kn = self.k[P] + self.drift[None, :] * dt[:, None]
            eps = self.params.gamma * np.hypot(kn[:, 0], kn[:, 1])
            ph = self.table(eps)
            lam = self.lam_ee[P] if self.ee_on else np.zeros(P.size)
            total = ph.sum(axis=0) + lam
            diag["candidates"] += int(P.size)
            ctr = self.counters[P]
            g = gamma_p[P]
            viol = total > g
            diag["majorant_violations"] += int(viol.sum())
            cum = np.cumsum(np.vstack([ph, lam[None, :]]), axis=0)
            r = self._uniform(P, ctr, crng.SLOT_CHANNEL) * g
            chosen = (r[None, :] >= cum).sum(axis=0)
            chosen[viol] = -1
            diag["self_scattering"] += int((chosen == SELF_SCATTERING).sum())
            u_angle = self._uniform(P, ctr, crng.SLOT_ANGLE)
            eta1 = self._uniform(P, ctr, crng.SLOT_ETA1)
            eta2 = self._uniform(P, ctr, crng.SLOT_ETA2)
            u_partner = self._uniform(P, ctr, crng.SLOT_PARTNER)
            real = np.flatnonzero((chosen >= 0) & (chosen < SELF_SCATTERING))
            order = real[np.lexsort((P[real], t[real]))]
            modified = np.zeros(self.n, dtype=bool)
            for idx in order.tolist():
                p = int(P[idx])
                ch = int(chosen[idx])
                dtp = float(dt[idx])
                kx, ky = float(kn[idx, 0]), float(kn[idx, 1])
                if ch < N_PH:
                    label = CHANNELS[ch].label
                    diag[f"{label}_proposed"] += 1
                    if modified[p]:
                        diag["conflicts"] += 1
                        continue
                    if self._commit_phonon(p, ch, kx, ky, float(eps[idx]), dtp,
                                           float(u_angle[idx]), float(eta1[idx])):
                        modified[p] = True
                else:
                    diag["ee_proposed"] += 1
                    j = int(u_partner[idx] * (self.n - 1))
                    j = min(j, self.n - 2)
                    if j >= p:
                        j += 1
                    if modified[p] or modified[j]:
                        diag["conflicts"] += 1
                        continue
                    if self._commit_ee(p, j, kx, ky, dtp, float(u_angle[idx]),
                                       float(eta1[idx]), float(eta2[idx]), ctr[idx]):
                        modified[p] = modified[j] = True
            modified_step |= modified
            hot = (total > 0.9 * g) | viol
            diag["majorant_refreshes"] += int((hot & ~viol).sum())
            gamma_p[P[hot]] = total[hot] / headroom
            self.counters[P] += np.uint64(1)
            t_next[P] = t + crng.exponential(seed, P.astype(np.uint64), self.counters[P], gamma_p[P])
            pending = P[t_next[P] < t1]
        if self.ee_on and modified_step.any():
            ids = np.flatnonzero(modified_step)
            # rates refreshed at the barrier, i.e. at t1 with the mesh moved there
            shift = self.drift * (t1 - t0)
            self.lam_ee[ids] = self.ee_rates(self.k[ids] + shift, shift)

    def _commit_phonon(self, p, ch, kx, ky, eps, dt, u_angle, eta) -> bool:
        diag = self.diag
        nkx, nky = self._phonon_final(ch, kx, ky, eps, u_angle)
        bx, by = nkx - self.drift[0] * dt, nky - self.drift[1] * dt
        cell = self._cell_of(bx, by)
        if cell is None:
            diag["out_of_box_rejections"] += 1
            return False
        if not eta > self._occ(cell):
            diag["ph_pauli_rejected"] += 1
            return False
        self._move(p, bx, by, cell)
        diag[f"{CHANNELS[ch].label}_accepted"] += 1
        return True

    def _commit_ee(self, p, j, k1x, k1y, dt, u_beta, eta1, eta2, ctr) -> bool:
        diag = self.diag
        ax, ay = self.drift[0] * dt, self.drift[1] * dt
        k2x = self.k[j, 0] + ax
        k2y = self.k[j, 1] + ay
        if self.cfg.ee.beta_weighted:
            u_jit = float(crng.uniform(self.cfg.seed, p, ctr, crng.SLOT_TIME + 6))
            beta = sample_beta((k1x, k1y), (k2x, k2y), u_beta, self.cfg.ee, self.screening, u_jit)
        else:
            beta = TWO_PI * u_beta
        final = self._ee_final(k1x, k1y, k2x, k2y, beta)
        if final is None:
            diag["ee_null"] += 1
            return False
        px, py, qx, qy = final
        c1 = self._cell_of(px - ax, py - ay)
        c2 = self._cell_of(qx - ax, qy - ay)
        if c1 is None or c2 is None:
            diag["out_of_box_rejections"] += 1
            return False
        if not (eta1 > self._occ(c1) and eta2 > self._occ(c2)):
            diag["ee_pauli_rejected"] += 1
            return False
        self._move(p, px - ax, py - ay, c1)
        self._move(j, qx - ax, qy - ay, c2)
        diag["ee_accepted"] += 1
        self._check_conservation((k1x, k1y), (k2x, k2y), (px, py), (qx, qy))
        return True


def run(cfg: SimConfig) -> RunResult:
    """Run a simulation to completion."""
    return Simulation(cfg).run()
