"""Sampling checks of the structure of the e-e collision operator.

Conserving quadruples ``(k1, k2, k1', k2')`` are produced from the conic
parametrizations of :mod:`.ee`; on them we test

* which functions are collisional invariants (``a + b.k + c|k|`` are,
  anything else should fail somewhere),
* that the generalized Fermi-Dirac family ``1/(1 + exp(a + b.k + c|k|))``
  satisfies detailed balance, and
* that the entropy integrand with ``H(f) = log(f / (1 - f))`` is never positive.

Everything is vectorized over a :class:`QuadrupleSet`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .ee import intra_final_states, inter_final_states
from .material import CONDUCTION, VALENCE

INVARIANT_TOL = 1e-9
BALANCE_TOL = 1e-12


class ExcludedPointError(ValueError):
    """The distribution equals 0 or 1 at a quadruple point, where H(f) is undefined."""


@dataclass(frozen=True)
class ConservingQuadruple:
    k1: np.ndarray
    k2: np.ndarray
    k1p: np.ndarray
    k2p: np.ndarray
    kind: str = "intra"

    def residuals(self) -> tuple[float, float]:
        qs = QuadrupleSet(self.k1[None], self.k2[None], self.k1p[None], self.k2p[None], self.kind)
        m, e = qs.residuals()
        return float(m[0]), float(e[0])


@dataclass
class QuadrupleSet:
    """Arrays of shape (n, 2) for the four wave-vectors of n quadruples."""

    k1: np.ndarray
    k2: np.ndarray
    k1p: np.ndarray
    k2p: np.ndarray
    kind: str = "intra"

    def __len__(self) -> int:
        return len(self.k1)

    def __getitem__(self, i) -> ConservingQuadruple:
        return ConservingQuadruple(self.k1[i], self.k2[i], self.k1p[i], self.k2p[i], self.kind)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def bands(self) -> tuple[int, int]:
        """Bands of (k1, k2); primed states share them."""
        return (CONDUCTION, CONDUCTION) if self.kind == "intra" else (CONDUCTION, VALENCE)

    @property
    def scale(self) -> np.ndarray:
        return np.hypot(*self.k1.T) + np.hypot(*self.k2.T)

    def residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """Relative momentum and energy residuals of each quadruple."""
        s = np.where(self.scale > 0, self.scale, 1.0)
        dm = np.hypot(*(self.k1 + self.k2 - self.k1p - self.k2p).T) / s
        sign = 1.0 if self.kind == "intra" else -1.0
        n = lambda v: np.hypot(v[:, 0], v[:, 1])  # noqa: E731
        de = np.abs(n(self.k1) + sign * n(self.k2) - n(self.k1p) - sign * n(self.k2p)) / s
        return dm, de

    def scaled(self, lam: float) -> "QuadrupleSet":
        if not lam > 0:
            raise ValueError("scale factor must be positive")
        return QuadrupleSet(lam * self.k1, lam * self.k2, lam * self.k1p, lam * self.k2p, self.kind)


@dataclass(frozen=True)
class InvariantCandidate:
    """phi(k) = a + b.k + c |k|, with |k| taken with the band sign for valence states."""

    a: float
    b: tuple[float, float]
    c: float

    def __call__(self, k, band=CONDUCTION):
        k = np.asarray(k, dtype=float)
        return (self.a + self.b[0] * k[..., 0] + self.b[1] * k[..., 1]
                + self.c * band * np.hypot(k[..., 0], k[..., 1]))


def generate_quadruples(count: int, rng: np.random.Generator, kind: str = "intra",
                        scale: float = 1.0, beta_max: float = 3.0) -> QuadrupleSet:
    """Random conserving quadruples: k1, k2 uniform in a disc of radius ``scale``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if kind not in ("intra", "inter"):
        raise ValueError(f"kind must be 'intra' or 'inter', got {kind!r}")
    r = scale * np.sqrt(rng.random((2, count)))
    phi = 2.0 * math.pi * rng.random((2, count))
    k1 = np.column_stack([r[0] * np.cos(phi[0]), r[0] * np.sin(phi[0])])
    k2 = np.column_stack([r[1] * np.cos(phi[1]), r[1] * np.sin(phi[1])])
    if kind == "intra":
        beta = 2.0 * math.pi * rng.random(count)
        k1p, k2p = intra_final_states(k1, k2, beta)
    else:
        beta = beta_max * (2.0 * rng.random(count) - 1.0)
        k1p, k2p = inter_final_states(k1, k2, beta)
    return QuadrupleSet(k1, k2, k1p, k2p, kind)


def generate_elastic_pairs(count: int, rng: np.random.Generator, scale: float = 1.0):
    """Pairs (k, k') with |k'| = |k|: the states linked by an elastic phonon event."""
    r = scale * np.sqrt(rng.random(count))
    phi, phi_p = 2.0 * math.pi * rng.random((2, count))
    k = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    kp = np.column_stack([r * np.cos(phi_p), r * np.sin(phi_p)])
    return k, kp


def _evaluate(phi, k, band):
    if isinstance(phi, InvariantCandidate):
        return phi(k, band)
    return np.asarray(phi(k), dtype=float)


def invariant_residuals(phi, quads: QuadrupleSet) -> np.ndarray:
    b1, b2 = quads.bands
    return np.abs(_evaluate(phi, quads.k1, b1) + _evaluate(phi, quads.k2, b2)
                  - _evaluate(phi, quads.k1p, b1) - _evaluate(phi, quads.k2p, b2))


def check_invariant(phi: InvariantCandidate | Callable, quads: QuadrupleSet) -> float:
    """max |phi + phi* - phi' - phi'*| over the quadruples."""
    return float(invariant_residuals(phi, quads).max())


def elastic_invariant_residual(phi, k, kp) -> float:
    """max |phi(k) - phi(k')| over elastic pairs."""
    return float(np.max(np.abs(np.asarray(phi(k)) - np.asarray(phi(kp)))))


def generalized_fermi_dirac(a: float, b, c: float) -> Callable:
    """f(k) = 1 / (1 + exp(a + b.k + c|k|)), evaluated without overflow."""
    phi = InvariantCandidate(a, tuple(b), c)
    return lambda k, band=CONDUCTION: expit(-phi(k, band))


def _occupations(f, quads: QuadrupleSet):
    b1, b2 = quads.bands
    out = []
    for k, band in ((quads.k1, b1), (quads.k2, b2), (quads.k1p, b1), (quads.k2p, b2)):
        try:
            out.append(np.asarray(f(k, band), dtype=float))
        except TypeError:
            out.append(np.asarray(f(k), dtype=float))
    return out


def balance_residuals(f, quads: QuadrupleSet) -> np.ndarray:
    """|f1' f2' (1 - f1)(1 - f2) - f1 f2 (1 - f1')(1 - f2')| per quadruple."""
    f1, f2, f1p, f2p = _occupations(f, quads)
    gain = f1p * f2p * (1.0 - f1) * (1.0 - f2)
    loss = f1 * f2 * (1.0 - f1p) * (1.0 - f2p)
    return np.abs(gain - loss)


def equilibrium_annihilation(a: float, b, c: float, quads: QuadrupleSet) -> float:
    """Max detailed-balance residual of the generalized Fermi-Dirac member (a, b, c)."""
    return float(balance_residuals(generalized_fermi_dirac(a, b, c), quads).max())


def entropy_integrand_sign(f, quads) -> np.ndarray:
    """(A - B)(log B - log A) with A = f1'f2'(1-f1)(1-f2), B = f1 f2 (1-f1')(1-f2').

    Evaluated as ``-A * d * expm1(d)`` with ``d = log B - log A``, which is
    non-positive in floating point as well.  Accepts one quadruple or a set.
    """
    if isinstance(quads, ConservingQuadruple):
        q = quads
        quads = QuadrupleSet(q.k1[None], q.k2[None], q.k1p[None], q.k2p[None], q.kind)
    occ = _occupations(f, quads)
    for v in occ:
        if np.any((v <= 0.0) | (v >= 1.0)):
            raise ExcludedPointError("f must lie strictly between 0 and 1 at every quadruple point")
    f1, f2, f1p, f2p = occ
    l1, l2, l1p, l2p = (np.log(v) for v in occ)
    m1, m2, m1p, m2p = (np.log1p(-v) for v in occ)
    log_a = l1p + l2p + m1 + m2
    log_b = l1 + l2 + m1p + m2p
    d = log_b - log_a
    return -np.exp(log_a) * d * np.expm1(d)


def entropy_function(f):
    """H(f) = log(f / (1 - f))."""
    f = np.asarray(f, dtype=float)
    return np.log(f) - np.log1p(-f)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    witness: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        text = f"{tag} {self.name}: value={self.value:.3e} threshold={self.threshold:.1e}"
        return f"{text} {self.detail}".rstrip()


def _witness(quads: QuadrupleSet, i: int) -> dict:
    return {"k1": quads.k1[i].tolist(), "k2": quads.k2[i].tolist(),
            "k1p": quads.k1p[i].tolist(), "k2p": quads.k2p[i].tolist(), "kind": quads.kind}


def search_counterexample(residuals: np.ndarray, quads: QuadrupleSet, threshold: float):
    """First quadruple whose residual exceeds ``threshold``; None if there is none."""
    hits = np.flatnonzero(residuals > threshold)
    if hits.size == 0:
        return None
    i = int(hits[0])
    return {"index": i, "residual": float(residuals[i]), **_witness(quads, i)}


def double_bump(k, band=CONDUCTION):
    """A non-equilibrium test distribution: two displaced Fermi-Dirac lobes."""
    f1 = generalized_fermi_dirac(-4.0, (3.0, 0.0), 4.0)(k, band)
    f2 = generalized_fermi_dirac(-4.0, (-3.0, 0.0), 4.0)(k, band)
    return 0.5 * (f1 + f2)


def run_property_suite(seed: int = 0, n_quads: int = 100_000, n_candidates: int = 100,
                       n_kernel: int = 100, n_balance: int = 10_000,
                       n_entropy: int = 1_000_000) -> list[CheckResult]:
    """All structural checks; each result carries a witness when it fails."""
    rng = np.random.default_rng(seed)
    results = []

    intra = generate_quadruples(n_quads, rng, "intra")
    inter = generate_quadruples(n_quads, rng, "inter")
    for quads in (intra, inter):
        dm, de = quads.residuals()
        worst = float(max(dm.max(), de.max()))
        i = int(np.argmax(np.maximum(dm, de)))
        results.append(CheckResult(f"conservation_{quads.kind}", worst <= 1e-10, worst, 1e-10,
                                   witness={} if worst <= 1e-10 else _witness(quads, i)))

    worst = 0.0
    for _ in range(n_candidates):
        cand = InvariantCandidate(rng.normal(), tuple(rng.normal(size=2)), rng.normal())
        worst = max(worst, check_invariant(cand, intra))
    results.append(CheckResult("invariants_a_bk_ck", worst <= INVARIANT_TOL, worst, INVARIANT_TOL,
                               detail=f"{n_candidates} random (a, b, c)"))

    res = invariant_residuals(lambda k: k[..., 0] ** 2 + k[..., 1] ** 2, intra)
    ref = 0.1 * intra.scale**2
    hits = np.flatnonzero(res > ref)
    results.append(CheckResult("k_squared_not_invariant", hits.size > 0, float((res / ref).max()), 1.0,
                               detail="max residual / (0.1 scale^2)",
                               witness=_witness(intra, int(hits[0])) if hits.size else {}))

    k, kp = generate_elastic_pairs(n_quads, rng)
    cand = InvariantCandidate(rng.normal(), (0.0, 0.0), rng.normal())
    r_el = elastic_invariant_residual(lambda v: cand(v), k, kp)
    results.append(CheckResult("elastic_a_ck_invariant", r_el <= INVARIANT_TOL, r_el, INVARIANT_TOL))
    r_mom = elastic_invariant_residual(lambda v: v[..., 0] + 0.5 * v[..., 1], k, kp)
    results.append(CheckResult("elastic_momentum_not_invariant", r_mom > 0.1, r_mom, 0.1))

    sub = QuadrupleSet(intra.k1[:n_balance], intra.k2[:n_balance], intra.k1p[:n_balance],
                       intra.k2p[:n_balance])
    worst = 0.0
    for _ in range(n_kernel):
        a, c = rng.uniform(-5, 5), rng.uniform(0.5, 10)
        b = tuple(rng.uniform(-3, 3, size=2))
        worst = max(worst, equilibrium_annihilation(a, b, c, sub))
    results.append(CheckResult("kernel_detailed_balance", worst <= BALANCE_TOL, worst, BALANCE_TOL,
                               detail=f"{n_kernel} members x {len(sub)} quadruples"))

    res = balance_residuals(double_bump, sub)
    wit = search_counterexample(res, sub, 1e-3)
    results.append(CheckResult("non_kernel_rejected", wit is not None, float(res.max()), 1e-3,
                               witness=wit or {}))

    worst = -math.inf
    done = 0
    while done < n_entropy:
        n = min(100_000, n_entropy - done)
        q = generate_quadruples(n, rng, "intra")
        a, c = rng.uniform(-3, 3), rng.uniform(0.5, 5)
        b = tuple(rng.uniform(-2, 2, size=2))
        base = generalized_fermi_dirac(a, b, c)
        amp = rng.uniform(0.0, 0.45)
        w = rng.normal(size=2)
        f = lambda v, band=CONDUCTION: np.clip(  # noqa: E731
            base(v) + amp * np.sin(w[0] * v[..., 0] + w[1] * v[..., 1]) * base(v) * (1 - base(v)),
            1e-300, 1 - 1e-16)
        worst = max(worst, float(entropy_integrand_sign(f, q).max()))
        done += n
    results.append(CheckResult("entropy_nonpositive", worst <= 0.0, worst, 0.0,
                               detail=f"{n_entropy} evaluations, max value"))

    kern = entropy_integrand_sign(generalized_fermi_dirac(-1.0, (0.5, -0.3), 2.0), sub)
    zero = float(np.abs(kern).max())
    results.append(CheckResult("entropy_zero_on_kernel", zero <= 1e-20, zero, 1e-20))
    return results
