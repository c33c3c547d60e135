"""Exact-diagonalization laboratory for the free lattice Dirac field.

Builds the one-particle Dirac operator on a finite periodic lattice, the
fermionic Fock space over its position-spin modes, charge-configuration
measurements (the natural PVM over electron/positron configurations, the
raw occupation PVM, and the quasiparticle PVM), and the Bell-type jump
process whose marginals follow the Born distribution.
"""

__version__ = "0.1.0"

MODE_ORDER_VERSION = 1

from .errors import DiracSeaError
from .lattice import LatticeSpec, OneParticleSystem, build_one_particle, momentum_eigenbasis
from .fock import FockSpace, StateVector, SlaterState
from .povm import ChargeConfiguration, Region

__all__ = [
    "DiracSeaError",
    "LatticeSpec",
    "OneParticleSystem",
    "build_one_particle",
    "momentum_eigenbasis",
    "FockSpace",
    "StateVector",
    "SlaterState",
    "ChargeConfiguration",
    "Region",
    "MODE_ORDER_VERSION",
    "__version__",
]
