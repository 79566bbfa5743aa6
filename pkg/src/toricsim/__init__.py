"""Numerical toolkit for stroboscopic synthesis and dissipative preparation
of the toric code on a periodic square lattice.

Subpackages
-----------
pauli      symplectic Pauli-string algebra and Pauli-basis decompositions
lattice    torus link lattice, stabilizers, Wilson loops, cubic embedding
sequences  gate sequences, effective Hamiltonians, perturbative order scans
spectra    sparse stabilizer Hamiltonians, eigensolvers, ground-space fidelity
lindblad   engineered jump operators, master-equation and trajectory solvers
harness    scenario configs, noise models, deterministic run records
cli        command-line entry point (``toricsim <subcommand>``)
"""

from .pauli import PauliString, PauliSum, commutator, decompose, multiply

__version__ = "0.1.0"

__all__ = [
    "PauliString",
    "PauliSum",
    "commutator",
    "decompose",
    "multiply",
    "__version__",
]
