import pytest

from helpers import make_space


@pytest.fixture(scope="session")
def space4():
    """dim=1, N=4, d=2, m=1, L=4 (256-dim Fock space)."""
    return make_space(n=4)


@pytest.fixture(scope="session")
def space3():
    """dim=1, N=3, d=2, m=1, L=3 (64-dim)."""
    return make_space(n=3)


@pytest.fixture(scope="session")
def space2():
    """dim=1, N=2, d=2 (16-dim; hopping vanishes on a 2-ring)."""
    return make_space(n=2)


@pytest.fixture(scope="session")
def space3_d4():
    """dim=1, N=3, d=4 (4096-dim)."""
    return make_space(n=3, spin=4)
