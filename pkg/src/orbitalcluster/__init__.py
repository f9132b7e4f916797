"""Ab-initio multiorbital Hubbard dynamics for cluster-state generation of
fermionic atoms in an optical superlattice."""

__version__ = "0.1.0"

from .units import PhysicalConfig, RecoilEnergy, recoil_energy
from .bloch import BandStructure, WannierSet, build_wannier, solve_bands
from .lattice_params import (HubbardParams, Numerics, PerturbativeDiagnostics, build_params,
                             compute_base_params, compute_superlattice_params, find_resonance,
                             perturbative_ising)
from .fock import (ModeIndex, SectorBasis, SparseOperator, assemble_diagonal_observable,
                   assemble_hamiltonian, build_sector)
from .dynamics import (ManyBodyState, Schedule, Segment, evolve, iter_evolve, prepare_plus_product,
                       shift_unit_cells)
from .observables import (ObservableTrace, QubitEmbedding, TargetState, build_target, expectation,
                          fidelity, post_selected_fidelity, rescale_per_cell)
from .tuning import WorkingPoint, step_tilt, tune_pairwise
