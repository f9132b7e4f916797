"""Bloch bands of the 1D lattice and real, parity-definite Wannier orbitals.

Units: energies in E_r, lengths in lattice constants ``a``, quasimomenta in
``pi / a`` (so the first Brillouin zone is ``[-1, 1)``).  In these units the
plane-wave Hamiltonian for ``(V0/2) cos(2 pi x)`` is tridiagonal with
diagonal ``(q + 2m)^2`` and off-diagonal ``V0 / 4``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .units import PhysicalConfig


class BandSolveError(RuntimeError):
    pass


class WannierGaugeError(RuntimeError):
    pass


@dataclass(frozen=True)
class BandStructure:
    V0: float
    q_grid: np.ndarray        # (n_q,)
    energies: np.ndarray      # (n_q, n_bands)
    bloch_coeffs: np.ndarray  # (n_q, n_bands, 2*cutoff+1), lab-frame plane-wave amplitudes
    plane_wave_cutoff: int

    @property
    def n_q(self) -> int:
        return self.q_grid.size

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    @property
    def m_values(self) -> np.ndarray:
        K = self.plane_wave_cutoff
        return np.arange(-K, K + 1)

    def band_average(self) -> np.ndarray:
        return self.energies.mean(axis=0)

    def fourier_component(self, distance: int) -> np.ndarray:
        """(1/N) sum_q E(q) exp(i q distance a) per band; real for symmetric bands."""
        phase = np.cos(np.pi * self.q_grid * distance)
        return (self.energies * phase[:, None]).mean(axis=0)


def plane_wave_hamiltonian(V0: float, q: float, cutoff: int):
    """Diagonal and off-diagonal of the tridiagonal plane-wave Hamiltonian."""
    m = np.arange(-cutoff, cutoff + 1)
    return (q + 2.0 * m) ** 2, np.full(2 * cutoff, V0 / 4.0)


def solve_bands(cfg: PhysicalConfig, cutoff: int = 16, n_q: int = 64,
                n_bands: int | None = None, boundary_tol: float = 1e-10) -> BandStructure:
    if cutoff < 8:
        raise ValueError(f"plane-wave cutoff must be >= 8, got {cutoff}")
    if n_q < 32 or n_q % 2:
        raise ValueError(f"n_q must be even and >= 32, got {n_q}")
    if n_bands is None:
        n_bands = cfg.n_orbitals + 2
    q_grid = -1.0 + 2.0 * np.arange(n_q) / n_q
    energies = np.empty((n_q, n_bands))
    coeffs = np.empty((n_q, n_bands, 2 * cutoff + 1))
    for j, q in enumerate(q_grid):
        diag, off = plane_wave_hamiltonian(cfg.V0, q, cutoff)
        try:
            e, v = linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, n_bands - 1))
        except (linalg.LinAlgError, ValueError) as exc:
            raise BandSolveError(f"eigensolve failed at q={q:+.6f} (cutoff={cutoff}): {exc}") from exc
        edge = np.abs(v[[0, -1], :]).max()
        if edge > boundary_tol:
            raise BandSolveError(
                f"plane-wave basis not converged at q={q:+.6f} (cutoff={cutoff}): "
                f"boundary amplitude {edge:.2e}")
        energies[j] = e
        coeffs[j] = v.T
    return BandStructure(cfg.V0, q_grid, energies, coeffs, cutoff)


@dataclass(frozen=True)
class WannierSet:
    """Wannier orbitals of the home site, sampled on a uniform grid (units of a).

    ``grid`` is in lab coordinates; the home site sits at x = 1/2, the minimum
    of the primary lattice.  Orbitals of other sites are integer shifts.
    """

    grid: np.ndarray
    orbitals: np.ndarray      # (n_bands, n_grid)
    points_per_period: int
    home_index: int           # grid index of the home-site center
    h0_orbitals: np.ndarray | None = None   # H0 applied to each orbital, same grid

    @property
    def dx(self) -> float:
        return 1.0 / self.points_per_period

    @property
    def n_bands(self) -> int:
        return self.orbitals.shape[0]

    @property
    def home_site_positions(self) -> np.ndarray:
        n_per = (self.grid.size // self.points_per_period) // 2
        return 0.5 + np.arange(-n_per, n_per + 1)

    def shifted(self, band: int, sites: int, h0: bool = False) -> np.ndarray:
        """Orbital of ``band`` centered ``sites`` lattice constants away; zero-filled."""
        w = (self.h0_orbitals if h0 else self.orbitals)[band]
        k = sites * self.points_per_period
        out = np.zeros_like(w)
        if k >= 0:
            out[k:] = w[: w.size - k]
        else:
            out[:k] = w[-k:]
        return out

    def integrate(self, f) -> float:
        return float(np.sum(f) * self.dx)

    def overlap(self, a: int, b: int, sites: int = 0) -> float:
        return self.integrate(self.orbitals[a] * self.shifted(b, sites))


def build_wannier(bands: BandStructure, n_periods: int = 15, points_per_period: int = 64,
                  n_wannier: int | None = None, node_tol: float = 1e-8) -> WannierSet:
    """Fourier-sum Bloch functions in a gauge that makes each Wannier orbital real
    with parity ``(-1)^band`` about its site center.

    Even bands: Bloch functions are made real and positive at the site center.
    Odd bands: the slope at the site center is made positive and the Bloch
    sum carries a factor i so the result is real.
    """
    if n_periods < 11 or n_periods % 2 == 0:
        raise ValueError(f"n_periods must be odd and >= 11, got {n_periods}")
    if n_periods > bands.n_q:
        raise ValueError("grid must not exceed the Born-von Karman supercell (n_periods <= n_q)")
    n_wannier = bands.n_bands if n_wannier is None else n_wannier

    half = n_periods * points_per_period // 2
    y = (np.arange(n_periods * points_per_period) - half) / points_per_period
    m = bands.m_values
    k = bands.q_grid[:, None] + 2.0 * m[None, :]            # (n_q, M)
    site_phase = np.where(m % 2 == 0, 1.0, -1.0)              # exp(i 2 pi m * 1/2)
    # sum_q sum_m d_m(q) exp(i pi k y) / n_q, evaluated as one matrix product
    basis = np.exp(1j * np.pi * np.outer(y, k.ravel()))
    orbitals = np.empty((n_wannier, y.size))
    h0_orbitals = np.empty_like(orbitals)
    for band in range(n_wannier):
        d = bands.bloch_coeffs[:, band, :] * site_phase[None, :]
        if band % 2 == 0:
            anchor = d.sum(axis=1)
            factor = 1.0
        else:
            anchor = -(d * k).sum(axis=1)
            factor = 1j
        bad = np.flatnonzero(np.abs(anchor) < node_tol)
        if bad.size:
            q = bands.q_grid[bad[0]]
            raise WannierGaugeError(
                f"gauge fixing failed for band {band + 1} at q={q:+.6f}: "
                f"site-center amplitude {abs(anchor[bad[0]]):.2e}")
        d = d * np.sign(anchor)[:, None]
        w = factor * (basis @ d.ravel()) / bands.n_q
        hw = factor * (basis @ (d * bands.energies[:, band, None]).ravel()) / bands.n_q
        if np.abs(w.imag).max() > 1e-10:
            raise WannierGaugeError(f"band {band + 1}: Wannier orbital not real "
                                    f"(max imag {np.abs(w.imag).max():.2e})")
        orbitals[band] = w.real
        h0_orbitals[band] = hw.real
    return WannierSet(0.5 + y, orbitals, points_per_period, half, h0_orbitals)


def write_band_table(bands: BandStructure, path) -> None:
    header = "q_pi_over_a " + " ".join(f"E{b + 1}_recoil" for b in range(bands.n_bands))
    np.savetxt(path, np.column_stack([bands.q_grid, bands.energies]), header=header,
               comments="", fmt="%.12e")


def write_wannier_table(w: WannierSet, path) -> None:
    header = "x_over_a " + " ".join(f"w{b + 1}" for b in range(w.n_bands))
    np.savetxt(path, np.column_stack([w.grid, w.orbitals.T]), header=header,
               comments="", fmt="%.12e")
