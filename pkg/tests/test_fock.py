import numpy as np
import pytest

from helpers import make_space, random_mode_vector, random_state

from diracsea.errors import DimensionMismatch, NotNormalized, NotOrthonormal, TooLarge
from diracsea.fock import (
    FockBasisChange,
    FockSpace,
    SlaterState,
    StateVector,
    annihilate,
    bottom_state,
    create,
    field_operator,
    level_state,
    load_state_binary,
    save_state_binary,
    save_state_csv,
    sea_state,
    second_quantized_hamiltonian,
    slater_amplitudes,
    total_number_operator,
    wave_packet_state,
)
from diracsea.lattice import LatticeSpec, build_one_particle


class TestLadderOperators:
    def test_create_on_bottom(self, space4):
        out = create(space4, 0, bottom_state(space4))
        assert out.amplitudes[1] == 1.0
        assert np.count_nonzero(out.amplitudes) == 1

    def test_nilpotent(self, space4):
        rng = np.random.default_rng(0)
        psi = random_state(space4, rng)
        twice = create(space4, 3, create(space4, 3, psi))
        assert np.all(twice.amplitudes == 0)

    def test_antisymmetry(self, space4):
        b = bottom_state(space4)
        ab = create(space4, 0, create(space4, 2, b))
        ba = create(space4, 2, create(space4, 0, b))
        assert np.allclose(ab.amplitudes, -ba.amplitudes)

    def test_annihilate_bottom(self, space4):
        for mode in range(space4.n_modes):
            assert np.all(annihilate(space4, mode, bottom_state(space4)).amplitudes == 0)

    def test_adjointness(self, space4):
        rng = np.random.default_rng(1)
        for _ in range(5):
            phi, psi = random_state(space4, rng), random_state(space4, rng)
            m = int(rng.integers(space4.n_modes))
            lhs = phi.inner(create(space4, m, psi))
            rhs = np.conj(annihilate(space4, m, phi).inner(psi))
            assert abs(lhs - np.conj(rhs)) < 1e-12

    def test_create_then_annihilate(self, space4):
        b = bottom_state(space4)
        back = annihilate(space4, 3, create(space4, 3, b))
        assert np.allclose(back.amplitudes, b.amplitudes)

    def test_mode_range(self, space4):
        with pytest.raises(DimensionMismatch):
            create(space4, space4.n_modes, bottom_state(space4))


class TestFieldOperators:
    def test_car_mixed(self, space4):
        rng = np.random.default_rng(2)
        states = [random_state(space4, rng) for _ in range(10)]
        worst = 0.0
        for _ in range(20):
            f = random_mode_vector(space4, rng)
            g = random_mode_vector(space4, rng)
            for psi in states:
                ab = field_operator(space4, g, True, field_operator(space4, f, False, psi))
                ba = field_operator(space4, f, False, field_operator(space4, g, True, psi))
                dev = ab.amplitudes + ba.amplitudes - np.vdot(f, g) * psi.amplitudes
                worst = max(worst, float(np.max(np.abs(dev))))
        assert worst < 1e-11

    def test_car_same_type(self, space4):
        rng = np.random.default_rng(3)
        psi = random_state(space4, rng)
        for dagger in (False, True):
            f = random_mode_vector(space4, rng)
            g = random_mode_vector(space4, rng)
            fg = field_operator(space4, g, dagger, field_operator(space4, f, dagger, psi))
            gf = field_operator(space4, f, dagger, field_operator(space4, g, dagger, psi))
            assert np.max(np.abs(fg.amplitudes + gf.amplitudes)) < 1e-12

    def test_annihilates_bottom(self, space4):
        rng = np.random.default_rng(4)
        for _ in range(5):
            f = random_mode_vector(space4, rng)
            out = field_operator(space4, f, False, bottom_state(space4))
            assert np.all(out.amplitudes == 0)

    def test_antilinearity(self, space4):
        rng = np.random.default_rng(5)
        psi = random_state(space4, rng)
        f = random_mode_vector(space4, rng)
        g = random_mode_vector(space4, rng)
        alpha, beta = 0.3 - 1.1j, -0.8 + 0.2j
        combo = field_operator(space4, alpha * f + beta * g, False, psi).amplitudes
        parts = (
            np.conj(alpha) * field_operator(space4, f, False, psi).amplitudes
            + np.conj(beta) * field_operator(space4, g, False, psi).amplitudes
        )
        assert np.max(np.abs(combo - parts)) < 1e-12

    def test_dimension_mismatch(self, space4):
        with pytest.raises(DimensionMismatch):
            field_operator(space4, np.ones(3), False, bottom_state(space4))


class TestHamiltonian:
    def test_sea_is_null_vector(self, space4):
        ham = second_quantized_hamiltonian(space4)
        omega = sea_state(space4)
        assert abs(ham.expectation(omega)) < 1e-9
        assert np.linalg.norm(ham.matvec(omega.amplitudes)) < 1e-9

    def test_ground_state_oracle_dense(self, space2):
        # full dense diagonalization at N=2, d=2 (16-dim)
        ham = second_quantized_hamiltonian(space2)
        evals, evecs = np.linalg.eigh(ham.to_dense())
        assert abs(evals[0]) < 1e-9
        assert evals[1] > 1e-6  # unique ground state
        omega = sea_state(space2)
        overlap = abs(np.vdot(evecs[:, 0], omega.amplitudes))
        assert abs(overlap - 1.0) < 1e-9

    def test_single_occupation_sector_spectrum(self, space3):
        ham = second_quantized_hamiltonian(space3).to_dense()
        sector = np.flatnonzero(space3.popcounts == 1)
        sub = ham[np.ix_(sector, sector)]
        e_sea = np.sum(space3.system.eigenvalues[space3.system.neg_modes])
        expected = np.sort(space3.system.eigenvalues - e_sea)
        assert np.allclose(np.sort(np.linalg.eigvalsh(sub)), expected, atol=1e-10)

    def test_occupation_sectors_closed(self, space3):
        mat = second_quantized_hamiltonian(space3).to_sparse().tocoo()
        rows = space3.popcounts[mat.row]
        cols = space3.popcounts[mat.col]
        assert np.all(rows == cols)

    def test_matvec_matches_sparse(self, space3):
        rng = np.random.default_rng(6)
        ham = second_quantized_hamiltonian(space3)
        amps = rng.normal(size=space3.dim) + 1j * rng.normal(size=space3.dim)
        dense_route = ham.to_sparse() @ amps
        ham_free = second_quantized_hamiltonian(space3)  # no sparse cache yet
        assert np.max(np.abs(ham_free.matvec(amps) - dense_route)) < 1e-12

    def test_commutes_with_total_number(self, space3):
        ham = second_quantized_hamiltonian(space3).to_dense()
        n_tot = total_number_operator(space3).to_dense()
        assert np.max(np.abs(ham @ n_tot - n_tot @ ham)) < 1e-12


class TestSeaState:
    def test_site_density_is_half_filling(self, space4):
        w = np.abs(sea_state(space4).amplitudes) ** 2
        half = space4.spec.spin_dim / 2
        for x in range(space4.spec.sites):
            assert abs(float(np.sum(space4.occupations[x] * w)) - half) < 1e-10

    def test_eigenmode_occupations(self, space4):
        omega = sea_state(space4)
        sysm = space4.system
        for k in range(space4.n_modes):
            n_k = field_operator(space4, sysm.eigenvectors[:, k], False, omega).norm() ** 2
            expected = 1.0 if k in sysm.neg_modes else 0.0
            assert abs(n_k - expected) < 1e-12

    def test_norm(self):
        space = make_space(n=3)
        assert abs(sea_state(space).norm() - 1.0) < 1e-12


class TestSlater:
    def test_standard_basis_vectors(self, space4):
        cols = np.zeros((space4.n_modes, 3), dtype=complex)
        for j, mode in enumerate((1, 4, 6)):
            cols[mode, j] = 1.0
        psi = slater_amplitudes(space4, SlaterState(cols))
        occupied = (1 << 1) | (1 << 4) | (1 << 6)
        assert abs(abs(psi.amplitudes[occupied]) - 1.0) < 1e-12
        assert np.count_nonzero(np.abs(psi.amplitudes) > 1e-14) == 1

    def test_matches_operator_route(self, space4):
        rng = np.random.default_rng(7)
        raw = rng.normal(size=(space4.n_modes, 4)) + 1j * rng.normal(size=(space4.n_modes, 4))
        q, _ = np.linalg.qr(raw)
        via_det = slater_amplitudes(space4, SlaterState(q))
        chain = bottom_state(space4)
        for j in reversed(range(4)):
            chain = field_operator(space4, q[:, j], True, chain)
        chain = chain.normalize()
        assert np.max(np.abs(via_det.amplitudes - chain.amplitudes)) < 1e-12

    def test_requires_orthonormal(self, space4):
        cols = np.ones((space4.n_modes, 2), dtype=complex)
        with pytest.raises(NotOrthonormal):
            SlaterState(cols)


class TestBasisChange:
    def test_lift_matches_slater(self, space3):
        rng = np.random.default_rng(8)
        raw = rng.normal(size=(space3.n_modes, space3.n_modes)) + 1j * rng.normal(
            size=(space3.n_modes, space3.n_modes)
        )
        u, _ = np.linalg.qr(raw)
        change = FockBasisChange(space3, u)
        for subset in ((), (0,), (1, 3), (0, 2, 5)):
            src = space3.zeros()
            src[sum(1 << m for m in subset)] = 1.0
            lifted = change.forward(src)
            if subset:
                expected = slater_amplitudes(space3, SlaterState(u[:, list(subset)])).amplitudes
            else:
                expected = bottom_state(space3).amplitudes
            # slater_amplitudes normalizes; the lift is exactly unitary
            phase_free = np.max(np.abs(lifted - expected))
            assert phase_free < 1e-11

    def test_roundtrip(self, space3):
        rng = np.random.default_rng(9)
        raw = rng.normal(size=(space3.n_modes, space3.n_modes)) + 1j * rng.normal(
            size=(space3.n_modes, space3.n_modes)
        )
        u, _ = np.linalg.qr(raw)
        change = FockBasisChange(space3, u)
        amps = rng.normal(size=space3.dim) + 1j * rng.normal(size=space3.dim)
        back = change.backward(change.forward(amps))
        assert np.max(np.abs(back - amps)) < 1e-11
        assert abs(np.linalg.norm(change.forward(amps)) - np.linalg.norm(amps)) < 1e-11


class TestStates:
    def test_level_state(self, space4):
        psi = level_state(space4)
        occ = space4.occupations[:, space4.level_string()]
        assert np.all(occ == space4.spec.spin_dim // 2)
        assert psi.norm() == 1.0

    def test_wave_packet_sector(self, space4):
        pk = wave_packet_state(space4, width=1.0, momentum=1.0)
        assert abs(pk.norm() - 1.0) < 1e-12
        total = space4.spec.spin_dim // 2 * space4.spec.sites - space4.popcounts.astype(int)
        charges = np.unique(total[np.abs(pk.amplitudes) > 1e-12])
        assert list(charges) == [-1]

    def test_norm_flag_enforced(self, space4):
        with pytest.raises(NotNormalized):
            StateVector(space4, 2.0 * bottom_state(space4).amplitudes, normalized=True)

    def test_dimension_guard(self):
        spec = LatticeSpec(1, 4, 4.0, 1.0, 2)
        with pytest.raises(TooLarge):
            FockSpace(build_one_particle(spec), max_dimension=4)


class TestTwoDimensional:
    def test_sea_and_charge_structure(self):
        # 3x3 torus, d=2: 18 modes (a 2-per-side torus would lose its
        # hopping to the symmetric difference, like the 2-site ring)
        space = make_space(dim=2, n=3, length=3.0)
        omega = sea_state(space)
        ham = second_quantized_hamiltonian(space)
        assert np.linalg.norm(ham.matvec(omega.amplitudes)) < 1e-9
        w = np.abs(omega.amplitudes) ** 2
        for x in range(space.spec.sites):
            assert abs(float(np.sum(space.occupations[x] * w)) - 1.0) < 1e-10
        from diracsea.povm import ChargeConfiguration, born_distribution, p_nat

        table = born_distribution(omega, "nat")
        vac = ChargeConfiguration.vacuum(9, 2)
        p_vac = table.weight_of(vac.pattern_id())
        assert 0.0 < p_vac < 1.0
        assert abs(p_nat(space, vac).weight(omega) - p_vac) < 1e-12


class TestExport:
    def test_binary_roundtrip(self, space3, tmp_path):
        rng = np.random.default_rng(10)
        psi = random_state(space3, rng)
        path = tmp_path / "state.bin"
        save_state_binary(psi, path)
        back = load_state_binary(space3, path)
        assert np.array_equal(back.amplitudes, psi.amplitudes)

    def test_binary_geometry_check(self, space3, space4, tmp_path):
        path = tmp_path / "state.bin"
        save_state_binary(bottom_state(space3), path)
        from diracsea.errors import ValidationError

        with pytest.raises(ValidationError):
            load_state_binary(space4, path)

    def test_csv_export(self, space3, tmp_path):
        path = tmp_path / "state.csv"
        save_state_csv(bottom_state(space3), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "string_hex,re,im"
        assert lines[1].startswith("0,1")
