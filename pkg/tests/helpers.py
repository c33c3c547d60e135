import numpy as np

from diracsea.lattice import LatticeSpec, build_one_particle, momentum_eigenbasis
from diracsea.fock import FockSpace, StateVector


def make_space(dim=1, n=4, length=None, mass=1.0, spin=2):
    spec = LatticeSpec(dim, n, float(length if length is not None else n), mass, spin)
    return FockSpace(momentum_eigenbasis(build_one_particle(spec)))


def random_state(space, rng):
    amps = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    return StateVector(space, amps).normalize()


def random_mode_vector(space, rng):
    v = rng.normal(size=space.n_modes) + 1j * rng.normal(size=space.n_modes)
    return v / np.linalg.norm(v)
