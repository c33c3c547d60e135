import numpy as np
import pytest

from helpers import random_state

from diracsea.errors import (
    ChargeOutOfRange,
    NotNormalized,
    SitesNotDistinct,
    ValidationError,
)
from diracsea.fock import bottom_state, field_operator, level_state, sea_state
from diracsea.povm import (
    ChargeConfiguration,
    Region,
    all_charge_configurations,
    born_distribution,
    charge_maps,
    charge_operator,
    charge_sectors,
    fit_rho_nat_constant,
    number_operators,
    obv_number_operators,
    p_nat,
    p_nat_event,
    p_obv,
    p_pre,
    rho_nat_formula_check,
    zero_charge_event,
)


def occupation_patterns(spec):
    import itertools

    return itertools.product(range(spec.spin_dim + 1), repeat=spec.sites)


class TestChargeConfiguration:
    def test_bounds(self):
        with pytest.raises(ChargeOutOfRange):
            ChargeConfiguration((2, 0, 0), 2)
        q = ChargeConfiguration((-2, 1, 2), 4)
        assert q.n_el == 2 and q.n_pos == 3 and q.total == 1

    def test_id_roundtrip(self):
        for charges in ((0, 0, 0), (-1, 1, 0), (1, -1, 1)):
            q = ChargeConfiguration(charges, 2)
            back = ChargeConfiguration.from_pattern_id(q.pattern_id(), 3, 2)
            assert back.charges == charges

    def test_species_sites(self):
        q = ChargeConfiguration((-1, 0, 1), 2)
        assert q.electron_sites == (0,)
        assert q.positron_sites == (2,)
        assert q.occupation_pattern() == (2, 1, 0)


class TestChargeOperator:
    def test_commute_and_additive(self, space4):
        rng = np.random.default_rng(20)
        psi = random_state(space4, rng)
        sites = space4.spec.sites
        for _ in range(20):
            a = Region(rng.choice(sites, size=rng.integers(1, sites), replace=False))
            b = Region(rng.choice(sites, size=rng.integers(1, sites), replace=False))
            qa, qb = charge_operator(space4, a), charge_operator(space4, b)
            comm = qa.matvec(qb.matvec(psi.amplitudes)) - qb.matvec(qa.matvec(psi.amplitudes))
            assert np.all(comm == 0)
        empty = charge_operator(space4, Region([]))
        assert np.all(empty.diagonal == 0)
        left, right = Region([0, 1]), Region([2, 3])
        union = charge_operator(space4, Region([0, 1, 2, 3]))
        split = charge_operator(space4, left) + charge_operator(space4, right)
        assert np.all(union.diagonal == split.diagonal)

    def test_sea_in_total_charge_kernel(self, space4):
        omega = sea_state(space4)
        q = charge_operator(space4, Region(range(space4.spec.sites)))
        assert float(np.sum(q.diagonal ** 2 * np.abs(omega.amplitudes) ** 2)) < 1e-18

    def test_commutator_with_field_operator(self, space4):
        # annihilating a pre-particle raises the charge: [Q(A), Psi] = +1_A Psi
        rng = np.random.default_rng(21)
        psi = random_state(space4, rng)
        d = space4.spec.spin_dim
        region = Region([0, 2])
        q = charge_operator(space4, region)
        for site, spin in ((0, 1), (1, 0), (2, 0), (3, 1)):
            f = np.zeros(space4.n_modes, dtype=complex)
            f[site * d + spin] = 1.0
            a_psi = field_operator(space4, f, False, psi)
            comm = q.apply(a_psi).amplitudes - field_operator(space4, f, False, q.apply(psi)).amplitudes
            indicator = 1.0 if site in region.sites else 0.0
            assert np.max(np.abs(comm - indicator * a_psi.amplitudes)) < 1e-12


class TestOccupationFamily:
    def test_partition_of_unity(self, space3):
        total = np.zeros(space3.dim)
        for pattern in occupation_patterns(space3.spec):
            total += p_pre(space3, pattern).diagonal
        assert np.all(total == 1.0)

    def test_level_rank(self, space3, space3_d4):
        from math import comb

        for space in (space3, space3_d4):
            d = space.spec.spin_dim
            level = p_pre(space, (d // 2,) * space.spec.sites)
            assert level.rank() == comb(d, d // 2) ** space.spec.sites

    def test_bottom_rank_one(self, space3):
        proj = p_pre(space3, (0,) * 3)
        assert proj.rank() == 1
        assert proj.weight(bottom_state(space3)) == 1.0

    def test_invalid_pattern(self, space3):
        with pytest.raises(ValidationError):
            p_pre(space3, (3, 0, 0))


class TestNaturalFamily:
    def test_substitution_identity(self, space3):
        for q in all_charge_configurations(space3.spec):
            assert np.array_equal(
                p_nat(space3, q).mask, p_pre(space3, q.occupation_pattern()).mask
            )

    def test_vacuum_is_level(self, space3):
        vac = ChargeConfiguration.vacuum(3, 2)
        assert np.array_equal(p_nat(space3, vac).mask, p_pre(space3, (1, 1, 1)).mask)

    def test_orthogonal_and_complete(self, space3):
        total = np.zeros(space3.dim)
        seen = np.zeros(space3.dim, dtype=bool)
        for q in all_charge_configurations(space3.spec):
            mask = p_nat(space3, q).mask
            assert not np.any(seen & mask)  # exact orthogonality
            seen |= mask
            total += mask
        assert np.all(total == 1.0)

    def test_local_event_commutes_with_outside_fields(self, space4):
        rng = np.random.default_rng(22)
        psi = random_state(space4, rng)
        region = Region([0, 1])
        event = p_nat_event(space4, region, (0, -1))
        d = space4.spec.spin_dim
        for site in (2, 3):
            for spin in range(d):
                f = np.zeros(space4.n_modes, dtype=complex)
                f[site * d + spin] = 1.0
                for dagger in (False, True):
                    ab = event.apply(field_operator(space4, f, dagger, psi)).amplitudes
                    ba = field_operator(space4, f, dagger, event.apply(psi)).amplitudes
                    assert np.max(np.abs(ab - ba)) < 1e-12


class TestQuasiparticleFamily:
    def test_vacuum_projector_is_sea(self, space4):
        omega = sea_state(space4)
        empty = (0,) * space4.spec.sites
        proj = p_obv(space4, empty, empty)
        assert proj.rank() == 1
        assert abs(proj.weight(omega) - 1.0) < 1e-12
        rng = np.random.default_rng(23)
        psi = random_state(space4, rng)
        image = proj.apply(psi).amplitudes
        overlap = np.vdot(omega.amplitudes, psi.amplitudes)
        assert np.max(np.abs(image - overlap * omega.amplitudes)) < 1e-10

    def test_completeness(self, space2):
        import itertools

        rng = np.random.default_rng(24)
        psi = random_state(space2, rng)
        half = space2.spec.spin_dim // 2
        sites = space2.spec.sites
        total = np.zeros(space2.dim, dtype=complex)
        for el in itertools.product(range(half + 1), repeat=sites):
            for po in itertools.product(range(half + 1), repeat=sites):
                total += p_obv(space2, el, po).apply(psi).amplitudes
        assert np.max(np.abs(total - psi.amplitudes)) < 1e-10

    def test_does_not_commute_with_nat(self, space4):
        # needs N >= 3: on a 2-site ring the hopping vanishes and the sea
        # state degenerates to a level string, making the two projectors commute
        empty = (0,) * space4.spec.sites
        vac_obv = p_obv(space4, empty, empty)
        vac_nat = p_nat(space4, ChargeConfiguration.vacuum(4, 2))
        rng = np.random.default_rng(25)
        psi = random_state(space4, rng)
        ab = vac_obv.apply(vac_nat.apply(psi)).amplitudes
        ba = vac_nat.apply(vac_obv.apply(psi)).amplitudes
        assert np.max(np.abs(ab - ba)) > 1e-3

    def test_sea_vacuum_weights_differ(self, space4):
        omega = sea_state(space4)
        vac_nat = p_nat(space4, ChargeConfiguration.vacuum(4, 2))
        assert vac_nat.weight(omega) < 1.0
        empty = (0,) * 4
        assert abs(p_obv(space4, empty, empty).weight(omega) - 1.0) < 1e-12


class TestNumberOperators:
    def test_charge_decomposition_exact(self, space4):
        full = Region(range(space4.spec.sites))
        nel, npos = number_operators(space4, full)
        q = charge_operator(space4, full)
        assert np.array_equal(q.diagonal, npos.diagonal - nel.diagonal)

    def test_obv_counts_full_region(self, space4):
        rng = np.random.default_rng(26)
        full = Region(range(space4.spec.sites))
        nel, npos = obv_number_operators(space4, full)
        q = charge_operator(space4, full)
        for _ in range(5):
            psi = random_state(space4, rng)
            lhs = npos.expectation(psi) - nel.expectation(psi)
            rhs = q.expectation(psi)
            assert abs(lhs - rhs) < 1e-10

    def test_obv_counts_on_sea(self, space4):
        omega = sea_state(space4)
        nel, npos = obv_number_operators(space4, Region(range(4)))
        assert abs(nel.expectation(omega)) < 1e-10
        assert abs(npos.expectation(omega)) < 1e-10

    def test_sectors_partition(self, space4):
        total = np.zeros(space4.dim)
        for proj in charge_sectors(space4).values():
            total += proj.diagonal
        assert np.all(total == 1.0)


class TestBornDistribution:
    def test_bottom_point_mass(self, space4):
        table = born_distribution(bottom_state(space4), "pre")
        assert len(table.ids) == 1
        assert table.ids[0] == 0
        assert table.weights[0] == 1.0

    def test_sea_nat_support(self, space4):
        table = born_distribution(sea_state(space4), "nat")
        assert abs(table.total() - 1.0) < 1e-10
        vac_id = ChargeConfiguration.vacuum(4, 2).pattern_id()
        p_vac = table.weight_of(vac_id)
        assert 0.0 < p_vac < 1.0
        for cid in table.ids:
            q = ChargeConfiguration.from_pattern_id(int(cid), 4, 2)
            assert q.total == 0

    def test_sea_obv_point_mass(self, space4):
        table = born_distribution(sea_state(space4), "obv")
        assert len(table.ids) == 1
        assert abs(table.weights[0] - 1.0) < 1e-12

    def test_level_obv_spreads(self, space4):
        table = born_distribution(level_state(space4), "obv")
        assert len(table.ids) > 1
        assert abs(table.total() - 1.0) < 1e-10

    def test_requires_normalized(self, space4):
        psi = bottom_state(space4)
        bad = psi.amplitudes * 2.0
        from diracsea.fock import StateVector

        with pytest.raises(NotNormalized):
            born_distribution(StateVector(space4, bad), "nat")

    def test_csv_schema(self, space3, tmp_path):
        table = born_distribution(sea_state(space3), "nat")
        path = tmp_path / "born.csv"
        table.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "config_id,q0,q1,q2,n_el,n_pos,total_charge,weight"
        weights = [float(line.split(",")[-1]) for line in lines[1:]]
        assert abs(sum(weights) - 1.0) < 1e-10


class TestChargeMaps:
    def test_case_analysis(self):
        q = ChargeConfiguration((0, 1, -1), 2)
        lowered = charge_maps(q, 1, "lower")  # positron removed
        assert lowered.charges == (0, 0, -1)
        lowered2 = charge_maps(q, 0, "lower")  # electron added
        assert lowered2.charges == (-1, 1, -1)
        raised = charge_maps(q, 2, "raise")  # electron removed
        assert raised.charges == (0, 1, 0)

    def test_inverse_pair(self):
        q = ChargeConfiguration((0, 1, -1), 2)
        for x in range(3):
            try:
                assert charge_maps(charge_maps(q, x, "lower"), x, "raise").charges == q.charges
            except ChargeOutOfRange:
                pass

    def test_out_of_range(self):
        q = ChargeConfiguration((-1, 0), 2)
        with pytest.raises(ChargeOutOfRange):
            charge_maps(q, 0, "lower")

    def test_intertwining(self, space3):
        # Psi_s(x) maps range p_nat(q) into range p_nat(raise_x(q))
        rng = np.random.default_rng(27)
        d = space3.spec.spin_dim
        configs = [q for q in all_charge_configurations(space3.spec)]
        for _ in range(20):
            q = configs[rng.integers(len(configs))]
            x = int(rng.integers(space3.spec.sites))
            try:
                target = charge_maps(q, x, "raise")
            except ChargeOutOfRange:
                continue
            psi = random_state(space3, rng)
            projected = p_nat(space3, q).apply(psi)
            f = np.zeros(space3.n_modes, dtype=complex)
            f[x * d + int(rng.integers(d))] = 1.0
            moved = field_operator(space3, f, False, projected).amplitudes
            kept = p_nat(space3, target).matvec(moved)
            assert np.max(np.abs(kept - moved)) < 1e-12


class TestDensityFormula:
    def test_empty_configuration_exact(self, space3):
        rng = np.random.default_rng(28)
        psi = random_state(space3, rng)
        lhs, rhs = rho_nat_formula_check(psi, (), ())
        assert abs(lhs - rhs) < 1e-15

    def test_single_electron_constant(self, space3):
        rng = np.random.default_rng(29)
        pairs = []
        for _ in range(4):
            psi = random_state(space3, rng)
            for x in range(3):
                pairs.append(rho_nat_formula_check(psi, (x,), ()))
        const, residual = fit_rho_nat_constant(pairs)
        assert residual < 1e-12
        assert abs(const - 0.5) < 1e-12  # (d-1)^-1 at d=2

    def test_distinct_sites_required(self, space3):
        rng = np.random.default_rng(30)
        psi = random_state(space3, rng)
        with pytest.raises(SitesNotDistinct):
            rho_nat_formula_check(psi, (1,), (1,))


def test_zero_charge_event(space4):
    region = Region([1, 2])
    event = zero_charge_event(space4, region)
    occ1 = space4.occupations[1]
    occ2 = space4.occupations[2]
    assert np.array_equal(event.mask, (occ1 == 1) & (occ2 == 1))
