"""Physical constants, the experimental configuration and recoil-unit conversions.

Everything downstream of this module works in recoil energies (E_r) and
milliseconds.  SI values only appear in :class:`PhysicalConfig` and in the
views returned by :func:`recoil_energy`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy import constants as const

K40_MASS = 39.96399848 * const.atomic_mass


@dataclass(frozen=True)
class PhysicalConfig:
    """Experimental knobs in explicit units.

    ``V0``, ``V0p`` and ``tilt_g`` are in recoil energies; ``tilt_g`` is the
    energy step per lattice site (g*a).  The primary lattice is
    ``(V0/2) cos(2 pi x / a)`` and the superlattice ``(V0p/2) cos(pi x / a + theta)``.
    """

    atom_mass: float = K40_MASS
    lattice_const_a: float = 413e-9
    scattering_len_aS: float = -50e-9
    V0: float = 10.0
    V0p: float = 0.0
    theta: float = math.pi / 2
    tilt_g: float = 0.0
    n_sites: int = 2
    n_orbitals: int = 2

    def __post_init__(self):
        if not self.atom_mass > 0:
            raise ValueError(f"atom_mass must be positive, got {self.atom_mass}")
        if not self.lattice_const_a > 0:
            raise ValueError(f"lattice_const_a must be positive, got {self.lattice_const_a}")
        if self.n_sites < 2 or self.n_sites % 2:
            raise ValueError(f"n_sites must be even and >= 2, got {self.n_sites}")
        if self.n_orbitals < 2:
            raise ValueError(f"n_orbitals must be >= 2, got {self.n_orbitals}")
        if self.V0 < 0 or self.V0p < 0:
            raise ValueError("lattice depths must be non-negative")

    def with_(self, **changes) -> "PhysicalConfig":
        return replace(self, **changes)

    @property
    def aS_over_a(self) -> float:
        return self.scattering_len_aS / self.lattice_const_a


@dataclass(frozen=True)
class RecoilEnergy:
    """E_r = hbar^2 k_L^2 / 2M with k_L = pi / a, plus conversion helpers."""

    joules: float
    _hbar: float = field(default=const.hbar, repr=False)

    @property
    def hz(self) -> float:
        return self.joules / const.h

    @property
    def angular(self) -> float:
        """E_r / hbar in rad/s."""
        return self.joules / self._hbar

    @property
    def time_unit_ms(self) -> float:
        """hbar / E_r expressed in milliseconds."""
        return 1e3 / self.angular

    def ms_to_internal(self, t_ms):
        """Milliseconds -> dimensionless time t E_r / hbar."""
        return t_ms / self.time_unit_ms

    def internal_to_ms(self, t):
        return t * self.time_unit_ms

    def to_joules(self, e_recoil):
        return e_recoil * self.joules

    def from_joules(self, e_joules):
        return e_joules / self.joules

    def to_hz(self, e_recoil):
        return e_recoil * self.hz

    def from_hz(self, f_hz):
        return f_hz / self.hz

    def to_angular(self, e_recoil):
        return e_recoil * self.angular

    def from_angular(self, omega):
        return omega / self.angular


def recoil_energy(cfg: PhysicalConfig) -> RecoilEnergy:
    k_lattice = math.pi / cfg.lattice_const_a
    return RecoilEnergy(const.hbar**2 * k_lattice**2 / (2.0 * cfg.atom_mass))


def contact_prefactor(cfg: PhysicalConfig) -> float:
    """4 pi hbar^2 a_S / M in units of E_r * a^3.

    With hbar^2 / M = 2 E_r a^2 / pi^2 this is 8 a_S / (pi a).
    """
    return 8.0 * cfg.aS_over_a / math.pi
