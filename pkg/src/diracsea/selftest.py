"""Invariant battery behind the `selftest` subcommand.

Each check returns (name, passed, one-line detail).  The battery covers
the operator algebra, the measurement families, the sea state, and the
jump-process generator at the requested spec.
"""

import numpy as np

from .lattice import LatticeSpec, build_one_particle, momentum_eigenbasis, shift_operator
from .fock import (
    FockSpace,
    SlaterState,
    StateVector,
    field_operator,
    sea_state,
    slater_amplitudes,
)
from .povm import (
    ChargeConfiguration,
    Region,
    all_charge_configurations,
    born_distribution,
    charge_operator,
    number_operators,
    p_nat,
    p_obv,
    p_pre,
)
from .dynamics import EvolutionPlan, evolve, hamiltonian, _rates_from_amplitudes


def run_all(spec: LatticeSpec, seed: int = 0):
    sysm = build_one_particle(spec)
    labeled = momentum_eigenbasis(sysm)
    space = FockSpace(labeled)
    rng = np.random.default_rng(seed)
    results = []

    def check(name, value, bound, detail=None):
        ok = bool(value < bound)
        results.append((name, ok, detail or f"{value:.3e} < {bound:.0e}"))

    h1 = sysm.h1
    scale = np.linalg.norm(h1)
    check("h1 hermitian", np.linalg.norm(h1 - h1.conj().T) / scale, 1e-12)

    e = sysm.eigenvalues
    check("spectrum +- symmetric", float(np.max(np.abs(e + e[::-1]))), 1e-10)
    u = sysm.eigenvectors
    check("eigenbasis unitary", float(np.max(np.abs(u.conj().T @ u - np.eye(len(e))))), 1e-12)

    worst = 0.0
    for axis in range(spec.dim):
        s = shift_operator(spec, axis)
        worst = max(worst, np.linalg.norm(s @ h1 @ s.conj().T - h1))
    check("translation covariance", worst, 1e-12)

    c = sysm.conjugation
    check(
        "conjugation anti-intertwines",
        np.linalg.norm(c @ h1.conj() @ c.conj().T + h1) / scale,
        1e-10,
        f"{sysm.conjugation_name}, C^2 = {sysm.conjugation_sign:+d}",
    )

    worst = 0.0
    psis = [_random_state(space, rng) for _ in range(3)]
    for _ in range(20):
        f = _random_vector(spec.n_modes, rng)
        g = _random_vector(spec.n_modes, rng)
        for psi in psis:
            lhs = _anticomm(space, f, g, psi)
            worst = max(worst, float(np.max(np.abs(lhs - np.vdot(f, g) * psi.amplitudes))))
    check("CAR mixed anticommutator", worst, 1e-11)

    worst = 0.0
    for _ in range(5):
        f = _random_vector(spec.n_modes, rng)
        g = _random_vector(spec.n_modes, rng)
        psi = psis[0]
        a = field_operator(space, g, False, field_operator(space, f, False, psi)).amplitudes
        b = field_operator(space, f, False, field_operator(space, g, False, psi)).amplitudes
        worst = max(worst, float(np.max(np.abs(a + b))))
    check("CAR same-type anticommutator", worst, 1e-12)

    total = np.zeros(space.dim)
    ranks = 0
    for q in all_charge_configurations(spec):
        proj = p_nat(space, q)
        total += proj.diagonal
        ranks += proj.rank()
    check("nat family completeness", float(np.max(np.abs(total - 1.0))), 1e-15,
          f"{ranks} basis strings partitioned")

    vac = ChargeConfiguration.vacuum(spec.sites, spec.spin_dim)
    d = spec.spin_dim
    expected_rank = int(round(_binom(d, d // 2) ** spec.sites))
    rank = p_nat(space, vac).rank()
    results.append(("vacuum-projector rank", rank == expected_rank, f"{rank} == {expected_rank}"))

    bottom_rank = p_pre(space, (0,) * spec.sites).rank()
    results.append(("bottom-pattern rank", bottom_rank == 1, f"{bottom_rank} == 1"))

    full = Region(range(spec.sites))
    q_full = charge_operator(space, full)
    nel, npos = number_operators(space, full)
    check("Q = Npos - Nel", float(np.max(np.abs(q_full.diagonal - (npos.diagonal - nel.diagonal)))), 1e-15)

    omega = sea_state(space)
    ham = hamiltonian(space)
    check("sea state annihilated by H", float(np.linalg.norm(ham.matvec(omega.amplitudes))), 1e-9)

    w = np.abs(omega.amplitudes) ** 2
    site_occ = [float(np.sum(space.occupations[x] * w)) for x in range(spec.sites)]
    check("sea per-site density d/2", float(np.max(np.abs(np.array(site_occ) - d / 2))), 1e-10)

    dual = slater_amplitudes(space, SlaterState(labeled.eigenvectors[:, labeled.neg_modes]))
    check("sea dual construction", float(np.max(np.abs(dual.amplitudes - omega.amplitudes))), 1e-12)

    p_vac = p_nat(space, vac).weight(omega)
    results.append(("sea vacuum weight in (0,1)", 0.0 < p_vac < 1.0, f"p_vac = {p_vac:.6f}"))

    empty = (0,) * spec.sites
    check("quasiparticle vacuum on sea", abs(p_obv(space, empty, empty).weight(omega) - 1.0), 1e-12)

    table = born_distribution(omega, "nat")
    max_rate = 0.0
    for cid in table.ids:
        rates, _ = _rates_from_amplitudes(space, ham, omega.amplitudes, int(cid))
        if rates:
            max_rate = max(max_rate, max(rates.values()))
    check("sea jump rates vanish", max_rate, 1e-12)

    plan = EvolutionPlan(method="auto", dt=0.1, t_max=1.0)
    psi = psis[0]
    fwd = evolve(psi, 0.7, plan)
    back = evolve(fwd, -0.7, plan)
    check("evolution unitary", abs(fwd.norm() - 1.0), 1e-9)
    check("evolution reversible", float(np.max(np.abs(back.amplitudes - psi.amplitudes))), 1e-9)

    check("generator identity", _generator_residual(space, ham, psis[0]), 1e-6)
    return results


def _binom(n, k):
    from math import comb
    return comb(n, k)


def _random_vector(n, rng):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def _random_state(space, rng):
    return StateVector(
        space, rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    ).normalize()


def _anticomm(space, f, g, psi):
    a = field_operator(space, g, True, field_operator(space, f, False, psi)).amplitudes
    b = field_operator(space, f, False, field_operator(space, g, True, psi)).amplitudes
    return a + b


def _generator_residual(space, ham, psi, dt=1e-4, n_configs=3):
    plan = EvolutionPlan(method="eigen-decomposition", dt=dt, t_max=5 * dt)
    table = born_distribution(psi, "nat")
    ids = space.nat_ids
    shifted = {k: evolve(psi, k * dt, plan).amplitudes for k in (-2, -1, 1, 2)}
    worst = 0.0
    for qid in [int(i) for i in table.ids[:n_configs]]:
        vals = [float(np.sum(np.abs(shifted[k][ids == qid]) ** 2)) for k in (-2, -1, 1, 2)]
        lhs = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * dt)
        out_rates, w_q = _rates_from_amplitudes(space, ham, psi.amplitudes, qid)
        inflow = 0.0
        for src in [int(i) for i in table.ids]:
            if src == qid:
                continue
            r, w_src = _rates_from_amplitudes(space, ham, psi.amplitudes, src)
            inflow += r.get(qid, 0.0) * w_src
        worst = max(worst, abs(lhs - (inflow - sum(out_rates.values()) * w_q)))
    return worst
