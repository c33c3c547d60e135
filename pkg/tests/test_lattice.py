import numpy as np
import pytest
from dataclasses import replace

from diracsea.errors import (
    DegeneracyResolutionFailed,
    ValidationError,
    ZeroMode,
)
from diracsea.lattice import (
    LatticeSpec,
    _check_gap,
    build_one_particle,
    eigen_csv_rows,
    momentum_eigenbasis,
    shift_operator,
    signal_speed,
)


def test_spec_validation():
    with pytest.raises(ValidationError):
        LatticeSpec(4, 4, 4.0, 1.0, 2)
    with pytest.raises(ValidationError):
        LatticeSpec(1, 1, 4.0, 1.0, 2)
    with pytest.raises(ValidationError):
        LatticeSpec(1, 4, -1.0, 1.0, 2)
    with pytest.raises(ValidationError):
        LatticeSpec(1, 4, 4.0, 0.0, 2)
    with pytest.raises(ValidationError):
        LatticeSpec(1, 4, 4.0, 1.0, 3)
    with pytest.raises(ValidationError):
        LatticeSpec(3, 2, 2.0, 1.0, 2)  # no third anticommuting 2x2 matrix


def test_spec_roundtrip():
    spec = LatticeSpec(2, 3, 1.5, 0.7, 4)
    assert LatticeSpec.from_config(spec.to_config()) == spec
    assert spec.sites == 9
    assert spec.spacing == 0.5
    assert spec.n_modes == 36


def test_minimal_build_sizes():
    sysm = build_one_particle(LatticeSpec(1, 2, 2.0, 1.0, 2))
    assert sysm.h1.shape == (4, 4)
    e = sysm.eigenvalues
    assert np.allclose(e, -e[::-1], atol=1e-10)  # +- pairs

    sysm = build_one_particle(LatticeSpec(1, 3, 3.0, 1.0, 4))
    assert sysm.h1.shape == (12, 12)
    assert len(sysm.neg_modes) == 6


def test_dispersion_oracle():
    # independent oracle: +-sqrt(m^2 + sin^2(k a)/a^2) at the four ring momenta
    m, a, n = 1.0, 1.0, 4
    sysm = build_one_particle(LatticeSpec(1, n, n * a, m, 2))
    ks = 2.0 * np.pi * np.arange(n) / (n * a)
    branch = np.sqrt(m ** 2 + np.sin(ks * a) ** 2 / a ** 2)
    expected = np.sort(np.concatenate([branch, -branch]))
    assert np.allclose(sysm.eigenvalues, expected, atol=1e-12)


@pytest.mark.parametrize("spin", [2, 4])
def test_invariants(spin):
    spec = LatticeSpec(1, 4, 4.0, 1.0, spin)
    sysm = build_one_particle(spec)
    h1, u = sysm.h1, sysm.eigenvectors
    scale = np.linalg.norm(h1)
    assert np.linalg.norm(h1 - h1.conj().T) < 1e-12 * scale
    assert np.max(np.abs(u.conj().T @ u - np.eye(spec.n_modes))) < 1e-12
    e = sysm.eigenvalues
    assert np.max(np.abs(e + e[::-1])) < 1e-10
    assert np.min(np.abs(e)) >= spec.mass - 1e-9
    s = shift_operator(spec, 0)
    assert np.linalg.norm(s @ h1 @ s.conj().T - h1) < 1e-12 * scale
    c = sysm.conjugation
    assert np.linalg.norm(c @ h1.conj() @ c.conj().T + h1) < 1e-10 * scale
    assert sysm.conjugation_sign in (-1, 1)
    # C applied twice is the recorded sign times identity
    cc = c @ c.conj()
    assert np.allclose(cc, sysm.conjugation_sign * np.eye(spec.n_modes), atol=1e-12)


def test_conjugation_swaps_spectral_halves():
    sysm = build_one_particle(LatticeSpec(1, 4, 4.0, 1.0, 2))
    pneg = sysm.projector_negative()
    for k in sysm.neg_modes:
        image = sysm.apply_conjugation(sysm.eigenvectors[:, k])
        assert np.linalg.norm(pneg @ image) < 1e-10


def test_dim2_build():
    sysm = build_one_particle(LatticeSpec(2, 3, 3.0, 1.0, 2))
    assert sysm.h1.shape == (18, 18)
    assert len(sysm.neg_modes) == 9
    for axis in range(2):
        s = shift_operator(sysm.spec, axis)
        assert np.linalg.norm(s @ sysm.h1 @ s.conj().T - sysm.h1) < 1e-11


def test_zero_mode_guard():
    with pytest.raises(ZeroMode):
        _check_gap(np.array([-1.0, -1e-12, 1e-12, 1.0]), 1.0)
    with pytest.raises(ZeroMode):
        _check_gap(np.array([-1.0, -0.5, 0.5, 1.0]), 1.0)  # below the mass gap


class TestMomentumEigenbasis:
    def test_single_momentum_support(self, space4):
        sysm = space4.system
        spec = sysm.spec
        # project each labeled eigenvector on every plane wave; exactly one survives
        for col in range(spec.n_modes):
            v = sysm.eigenvectors[:, col].reshape(spec.sites, spec.spin_dim)
            weights = np.abs(np.fft.fft(v, axis=0)) ** 2
            per_momentum = weights.sum(axis=1)
            support = np.flatnonzero(per_momentum > 1e-18 * per_momentum.max())
            assert len(support) == 1
            assert support[0] == sysm.momentum_index[col]

    def test_deterministic_and_idempotent(self):
        spec = LatticeSpec(1, 4, 4.0, 1.0, 2)
        a = momentum_eigenbasis(build_one_particle(spec))
        b = momentum_eigenbasis(build_one_particle(spec))
        assert np.array_equal(a.eigenvectors, b.eigenvectors)
        again = momentum_eigenbasis(a)
        assert np.array_equal(a.eigenvectors, again.eigenvectors)
        assert np.array_equal(a.eigenvalues, again.eigenvalues)

    def test_degenerate_momenta_distinct(self, space4):
        sysm = space4.system
        # k and -k at equal energy are distinct labeled outputs
        e = sysm.eigenvalues
        pairs = [
            (i, j)
            for i in range(len(e))
            for j in range(i + 1, len(e))
            if abs(e[i] - e[j]) < 1e-9
        ]
        assert pairs, "expected degenerate energies on the ring"
        for i, j in pairs:
            assert (sysm.momentum_index[i], sysm.spin_branch[i]) != (
                sysm.momentum_index[j],
                sysm.spin_branch[j],
            )

    def test_rejects_non_translation_invariant(self):
        sysm = build_one_particle(LatticeSpec(1, 4, 4.0, 1.0, 2))
        broken = np.array(sysm.h1)
        broken[0, 0] += 0.5  # site-dependent potential
        with pytest.raises(DegeneracyResolutionFailed):
            momentum_eigenbasis(replace(sysm, h1=broken))

    def test_d4_spin_branches(self, space3_d4):
        sysm = space3_d4.system
        # every (energy, momentum) cell carries two deterministic branches
        assert sorted(set(sysm.spin_branch)) == [0, 1]


def test_signal_speed_bounds():
    spec = LatticeSpec(1, 8, 8.0, 1.0, 2)
    v = signal_speed(spec)
    assert 0.0 < v < 1.0 / spec.spacing
    # massless limit bound: speed grows as the mass shrinks
    faster = signal_speed(LatticeSpec(1, 8, 8.0, 0.1, 2))
    assert faster > v


def test_eigen_csv_rows(space4):
    rows = list(eigen_csv_rows(space4.system))
    assert len(rows) == space4.n_modes
    idx, energy, mom, branch = rows[0]
    assert idx == 0 and energy < 0
    assert all(r[1] <= rows[i + 1][1] + 1e-9 for i, r in enumerate(rows[:-1]))
