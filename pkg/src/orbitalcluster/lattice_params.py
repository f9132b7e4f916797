"""Coefficients of the multiorbital Hubbard model from Wannier-orbital integrals.

Orbital indices are 0-based here (orbital 0 is the lowest band).  The bond
table ``hop_prime[b, alpha, beta]`` is <w_{b,alpha}| V' |w_{b+1,beta}>; the
Hamiltonian adds it together with its Hermitian conjugate.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .bloch import BandStructure, WannierSet, build_wannier, solve_bands
from .units import PhysicalConfig, contact_prefactor, recoil_energy


class GridConvergenceError(RuntimeError):
    pass


class ResonanceBracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class Numerics:
    cutoff: int = 16
    n_q: int = 64
    n_periods: int = 15
    points_per_period: int = 64


@dataclass(frozen=True)
class HubbardParams:
    n_sites: int
    n_orbitals: int
    eps: np.ndarray          # (n_orb,)
    hop: np.ndarray          # (n_orb, n_orb) nearest-neighbour J_ab of the primary lattice
    U: np.ndarray            # (n_orb, n_orb)
    eps_prime: np.ndarray    # (n_sites, n_orb)
    hop_prime: np.ndarray    # (n_sites - 1, n_orb, n_orb)
    tilt: np.ndarray         # (n_sites,)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def with_(self, **changes) -> "HubbardParams":
        return replace(self, **changes)

    def onsite(self) -> np.ndarray:
        """Total single-particle onsite energy per (site, orbital)."""
        return self.eps[None, :] + self.eps_prime + self.tilt[:, None]


@functools.lru_cache(maxsize=16)
def _lattice_solution(V0: float, n_orbitals: int, numerics: Numerics):
    bands = solve_bands(PhysicalConfig(V0=V0, n_orbitals=n_orbitals),
                        cutoff=numerics.cutoff, n_q=numerics.n_q)
    wannier = build_wannier(bands, numerics.n_periods, numerics.points_per_period)
    return bands, wannier


def lattice_solution(cfg: PhysicalConfig, numerics: Numerics = Numerics()):
    """Bands and Wannier set of the primary lattice, cached per (V0, numerics)."""
    return _lattice_solution(float(cfg.V0), cfg.n_orbitals, numerics)


def _checked_integral(w: WannierSet, f: np.ndarray, what: str, rtol: float = 1e-6) -> float:
    full = float(np.sum(f) * w.dx)
    coarse = float(np.sum(f[::2]) * 2 * w.dx)
    drift = abs(full - coarse)
    if drift > rtol * max(abs(full), 1e-300):
        raise GridConvergenceError(f"{what}: discretization drift {drift:.3e} "
                                   f"(relative {drift / abs(full):.3e}) exceeds {rtol:g}")
    return full


def interaction_overlaps(w: WannierSet, n_orbitals: int) -> np.ndarray:
    """1D integrals of |w_a|^2 |w_b|^2 (units 1/a)."""
    out = np.empty((n_orbitals, n_orbitals))
    for a in range(n_orbitals):
        for b in range(a, n_orbitals):
            out[a, b] = out[b, a] = _checked_integral(
                w, w.orbitals[a] ** 2 * w.orbitals[b] ** 2, f"overlap |w{a + 1}|^2|w{b + 1}|^2")
    return out


def compute_base_params(w: WannierSet, bands: BandStructure, cfg: PhysicalConfig) -> HubbardParams:
    n_orb = cfg.n_orbitals
    eps = bands.band_average()[:n_orb].copy()
    # <w_{0a}|H0|w_{1b}> from the H0-applied orbitals; the diagonal is
    # cross-checked against the band Fourier component.
    hop = np.array([[w.integrate(w.orbitals[a] * w.shifted(b, 1, h0=True))
                     for b in range(n_orb)] for a in range(n_orb)])
    fourier = bands.fourier_component(1)[:n_orb]
    quadrature_diag = np.diag(hop).copy()
    np.fill_diagonal(hop, fourier)
    nnn = bands.fourier_component(2)[:n_orb]
    overlaps = interaction_overlaps(w, n_orb)
    transverse = _checked_integral(w, w.orbitals[0] ** 4, "transverse |w1|^4")
    U = contact_prefactor(cfg) * transverse**2 * overlaps
    diagnostics = {
        "hop_fourier": fourier,
        "hop_next_nearest": nnn,
        "hop_quadrature_vs_fourier": float(np.abs(quadrature_diag - fourier).max()),
        "interaction_overlaps": overlaps,
        "transverse_overlap": transverse,
    }
    n = cfg.n_sites
    return HubbardParams(
        n_sites=n, n_orbitals=n_orb, eps=eps, hop=hop, U=U,
        eps_prime=np.zeros((n, n_orb)), hop_prime=np.zeros((n - 1, n_orb, n_orb)),
        tilt=cfg.tilt_g * np.arange(n, dtype=float), diagnostics=diagnostics)


def superlattice_potential(cfg: PhysicalConfig, x) -> np.ndarray:
    """(V0'/2) cos(pi x / a + theta), x in units of a."""
    return 0.5 * cfg.V0p * np.cos(np.pi * np.asarray(x) + cfg.theta)


def compute_superlattice_params(w: WannierSet, cfg: PhysicalConfig):
    """Return ``(eps_prime, hop_prime)`` for the two-site-period potential."""
    n, n_orb = cfg.n_sites, cfg.n_orbitals
    eps_prime = np.zeros((n, n_orb))
    hop_prime = np.zeros((n - 1, n_orb, n_orb))
    if cfg.V0p == 0.0:
        return eps_prime, hop_prime
    for i in range(n):
        # potential seen from a frame where site i sits at the home position
        vp = superlattice_potential(cfg, w.grid + i)
        for a in range(n_orb):
            eps_prime[i, a] = w.integrate(w.orbitals[a] ** 2 * vp)
        if i < n - 1:
            for a in range(n_orb):
                for b in range(n_orb):
                    hop_prime[i, a, b] = w.integrate(w.orbitals[a] * vp * w.shifted(b, 1))
    return eps_prime, hop_prime


def build_params(cfg: PhysicalConfig, numerics: Numerics = Numerics()) -> HubbardParams:
    bands, w = lattice_solution(cfg, numerics)
    base = compute_base_params(w, bands, cfg)
    eps_prime, hop_prime = compute_superlattice_params(w, cfg)
    return base.with_(eps_prime=eps_prime, hop_prime=hop_prime)


# --------------------------------------------------------------------------
# perturbative diagnostics


@dataclass(frozen=True)
class PerturbativeDiagnostics:
    Delta: np.ndarray               # per bond, leftward channel (i+1 -> orbital 2 of i)
    Delta_reverse: np.ndarray       # per bond, mirrored channel (i -> orbital 2 of i+1)
    J_ising_est: np.ndarray         # per bond, E_r; nan where flagged
    J_heisenberg_est: float
    resonance_residual: np.ndarray  # per bond, Delta + U12
    J_ising_reverse: np.ndarray = None   # same estimate for the mirrored channel
    flags: tuple = ()

    def J_ising_hz(self, cfg: PhysicalConfig) -> np.ndarray:
        return recoil_energy(cfg).to_hz(self.J_ising_est)


def _channels(p: HubbardParams):
    """Gaps and hopping amplitudes of both inter-orbital channels on each bond."""
    onsite = p.onsite()
    left = onsite[:-1, 1] - onsite[1:, 0]     # atom from i+1 into orbital 2 of i
    right = onsite[1:, 1] - onsite[:-1, 0]    # atom from i into orbital 2 of i+1
    t_left = p.hop_prime[:, 1, 0]
    t_right = p.hop_prime[:, 0, 1]
    return left, right, t_left, t_right


def perturbative_ising(p: HubbardParams, guard: float = 1e-4) -> PerturbativeDiagnostics:
    """Second-order Ising estimate per bond, |J'12|^2/(Delta+U12) - |J'12|^2/Delta.

    Delta is the gap for moving the atom of site i+1 into orbital 2 of site i.
    The mirrored process is reported separately in ``J_ising_reverse``.
    """
    if p.n_orbitals < 2:
        raise ValueError("two orbitals are required")
    U12 = p.U[0, 1]
    left, right, t_left, t_right = _channels(p)
    flags = []

    def estimate(gap, t, name):
        J = np.zeros_like(gap)
        for b in range(gap.size):
            if t[b] == 0.0 or U12 == 0.0:
                continue    # second order in J'_12 and first order in U12
            if abs(gap[b] + U12) < guard or abs(gap[b]) < guard:
                flags.append(f"bond {b} ({name}): on-resonance; perturbative estimate invalid")
                J[b] = np.nan
                continue
            J[b] = t[b] ** 2 / (gap[b] + U12) - t[b] ** 2 / gap[b]
        return J

    J = estimate(left, t_left, "leftward")
    J_rev = estimate(right, t_right, "rightward")
    J11, U11 = p.hop[0, 0], p.U[0, 0]
    heis = J11**2 / U11 if U11 != 0.0 else math.inf
    return PerturbativeDiagnostics(left, right, J, heis, left + U12, J_rev, tuple(flags))


# --------------------------------------------------------------------------
# resonance search

KNOBS = ("V0p", "aS", "g")


def _with_knob(cfg: PhysicalConfig, knob: str, value: float) -> PhysicalConfig:
    if knob == "V0p":
        return cfg.with_(V0p=value)
    if knob == "aS":
        return cfg.with_(scattering_len_aS=value)
    if knob == "g":
        return cfg.with_(tilt_g=value)
    raise ValueError(f"unknown knob {knob!r}; expected one of {KNOBS}")


def bond_residual(cfg: PhysicalConfig, bond: int, numerics: Numerics = Numerics()) -> float:
    return float(perturbative_ising(build_params(cfg, numerics)).resonance_residual[bond])


@dataclass(frozen=True)
class Resonance:
    knob: str
    value: float
    residual: float


def find_resonance(knob: str, target_bond: int, cfg: PhysicalConfig, bracket,
                   numerics: Numerics = Numerics(), tol: float = 1e-6) -> Resonance:
    """Bisect ``knob`` inside ``bracket`` until Delta + U12 on ``target_bond`` vanishes."""
    lo, hi = map(float, bracket)

    def f(x):
        return bond_residual(_with_knob(cfg, knob, x), target_bond, numerics)

    f_lo, f_hi = f(lo), f(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ResonanceBracketError(
            f"no sign change of the residual for {knob} in [{lo}, {hi}]: "
            f"residual({lo}) = {f_lo:.6g}, residual({hi}) = {f_hi:.6g}")
    x = optimize.bisect(f, lo, hi, xtol=1e-14 * max(1.0, abs(lo), abs(hi)), maxiter=200)
    r = f(x)
    if abs(r) > tol:
        raise ResonanceBracketError(f"bisection converged to {x} with residual {r:.3e} > {tol}")
    return Resonance(knob, x, r)


def resonance_scattering_length(cfg: PhysicalConfig, target_bond: int,
                                numerics: Numerics = Numerics()) -> float:
    """Closed form for the aS knob: U12 is linear in aS so aS* = -Delta / (dU12/daS)."""
    p = build_params(cfg, numerics)
    left, _, _, _ = _channels(p)
    return -left[target_bond] * cfg.scattering_len_aS / p.U[0, 1]


# --------------------------------------------------------------------------
# report


def parameter_report(p: HubbardParams) -> str:
    """Tabular text with one coefficient per row: quantity site orbital(s) value."""
    rows = ["quantity site orbitals value_recoil"]
    n_orb = p.n_orbitals
    for a in range(n_orb):
        rows.append(f"eps - {a + 1} {p.eps[a]:.12e}")
    for a in range(n_orb):
        for b in range(n_orb):
            rows.append(f"J - {a + 1}{b + 1} {p.hop[a, b]:.12e}")
    for a in range(n_orb):
        for b in range(n_orb):
            rows.append(f"U - {a + 1}{b + 1} {p.U[a, b]:.12e}")
    for i in range(p.n_sites):
        for a in range(n_orb):
            rows.append(f"eps_prime {i} {a + 1} {p.eps_prime[i, a]:.12e}")
    for i in range(p.n_sites - 1):
        for a in range(n_orb):
            for b in range(n_orb):
                rows.append(f"J_prime {i} {a + 1}{b + 1} {p.hop_prime[i, a, b]:.12e}")
    for i in range(p.n_sites):
        rows.append(f"tilt {i} - {p.tilt[i]:.12e}")
    return "\n".join(rows) + "\n"
