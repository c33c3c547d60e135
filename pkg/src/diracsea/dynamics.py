"""Exact time evolution and the Bell-type jump process over charge configurations.

The process jumps between charge configurations with rate
2 Im+ <psi|P(q') H P(q)|psi> / <psi|P(q)|psi>; every nonzero rate moves one
unit of charge between adjacent sites (positron hop, electron hop, pair
creation, pair annihilation), so total charge is conserved along every
realization.  Sampling uses a fixed time grid: rates are frozen at each
grid state, steps subdivide until rate * step < 0.1, and each trajectory
draws from its own counter-based stream, so results are reproducible for
a master seed under any scheduling.
"""

from dataclasses import dataclass
import json
import math

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    ConvergenceFailure,
    StepTooCoarse,
    TooLarge,
    ValidationError,
    ZeroProbabilityConfiguration,
)
from .fock import FockSpace, StateVector, level_state, second_quantized_hamiltonian
from .povm import (
    ChargeConfiguration,
    DiagonalOperator,
    Region,
    born_distribution,
    charge_operator,
    charge_sectors,
    number_operators,
    obv_number_operators,
)

EIGEN_DIMENSION_LIMIT = 1 << 16
DENSE_EXP_LIMIT = 1 << 12
RATE_FLOOR = 1e-12
RATE_STEP_BOUND = 0.1
MAX_SUBSTEPS = 4096
PROB_FLOOR = 1e-14


@dataclass(frozen=True)
class EvolutionPlan:
    """How to realize exp(-iHt): method, grid step, horizon, tolerance."""

    method: str = "auto"
    dt: float = 0.02
    t_max: float = 1.0
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.method not in ("auto", "dense-exponential", "eigen-decomposition", "sparse-Krylov"):
            raise ValidationError(f"unknown evolution method '{self.method}'")
        if not (self.dt > 0 and self.t_max > 0 and self.dt <= self.t_max):
            raise ValidationError("need 0 < dt <= t_max")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")

    def grid_times(self):
        steps = max(1, int(round(self.t_max / self.dt)))
        return np.linspace(0.0, self.t_max, steps + 1)


def hamiltonian(space: FockSpace):
    """Cached Fock Hamiltonian of the space."""
    if not hasattr(space, "_ham_cache"):
        space._ham_cache = second_quantized_hamiltonian(space)
    return space._ham_cache


class Evolver:
    """Realizes exp(-iHt) on one Fock space, caching the expensive pieces."""

    def __init__(self, space: FockSpace, plan: EvolutionPlan):
        self.space = space
        self.plan = plan
        self.ham = hamiltonian(space)
        method = plan.method
        if method == "auto":
            # dense eigh beats chained Krylov only on small spaces
            method = "eigen-decomposition" if space.dim <= (1 << 10) else "sparse-Krylov"
        if method == "eigen-decomposition" and space.dim > EIGEN_DIMENSION_LIMIT:
            raise TooLarge(f"eigen-decomposition limited to dimension {EIGEN_DIMENSION_LIMIT}")
        if method == "dense-exponential" and space.dim > DENSE_EXP_LIMIT:
            raise TooLarge(f"dense exponential limited to dimension {DENSE_EXP_LIMIT}")
        self.method = method
        self._eig = None

    def _eigensystem(self):
        if self._eig is None:
            evals, evecs = np.linalg.eigh(self.ham.to_dense())
            self._eig = (evals, evecs)
        return self._eig

    def advance(self, amps: np.ndarray, t: float) -> np.ndarray:
        if t == 0.0:
            return amps.copy()
        if self.method == "eigen-decomposition":
            evals, evecs = self._eigensystem()
            return evecs @ (np.exp(-1j * evals * t) * (evecs.conj().T @ amps))
        if self.method == "dense-exponential":
            return scipy.linalg.expm(-1j * t * self.ham.to_dense()) @ amps
        out = scipy.sparse.linalg.expm_multiply(-1j * t * self.ham.to_sparse(), amps)
        drift = abs(np.linalg.norm(out) - np.linalg.norm(amps))
        if drift > self.plan.tolerance:
            raise ConvergenceFailure(f"Krylov norm drift {drift:.2e} above tolerance")
        return out

    def grid_states(self, amps: np.ndarray):
        """States at every plan grid time, shape (steps+1, dim)."""
        times = self.plan.grid_times()
        if self.method == "sparse-Krylov" and len(times) > 2:
            out = scipy.sparse.linalg.expm_multiply(
                -1j * self.ham.to_sparse(), amps,
                start=times[0], stop=times[-1], num=len(times), endpoint=True,
            )
            return times, np.asarray(out)
        states = np.empty((len(times), self.space.dim), dtype=complex)
        states[0] = amps
        if self.method == "eigen-decomposition":
            evals, evecs = self._eigensystem()
            coeff = evecs.conj().T @ amps
            for i, t in enumerate(times[1:], start=1):
                states[i] = evecs @ (np.exp(-1j * evals * t) * coeff)
        else:
            step = times[1] - times[0]
            for i in range(1, len(times)):
                states[i] = self.advance(states[i - 1], step)
        return times, states


def evolve(psi: StateVector, t: float, plan: EvolutionPlan) -> StateVector:
    """exp(-iHt) psi; exact up to the method's numerical floor."""
    psi.require_normalized()
    out = Evolver(psi.space, plan).advance(psi.amplitudes, t)
    n = np.linalg.norm(out)
    if abs(n - 1.0) > plan.tolerance:
        raise ConvergenceFailure(f"evolved norm {n} departs from 1 beyond tolerance")
    return StateVector(psi.space, out, label=psi.label, normalized=abs(n - 1.0) < 1e-12)


# ---------------------------------------------------------------------------
# jump rates
# ---------------------------------------------------------------------------

def _total_charge_of_id(cid, sites, spin_dim):
    half = spin_dim // 2
    base = spin_dim + 1
    tot = 0
    for _ in range(sites):
        tot += cid % base - half
        cid //= base
    return tot


def _rates_from_amplitudes(space, ham, amps, qid):
    """Map q' id -> rate, for jumps out of configuration qid at state amps."""
    mask = space.nat_ids == qid
    weight = float(np.sum(np.abs(amps[mask]) ** 2))
    if weight < PROB_FLOOR:
        raise ZeroProbabilityConfiguration(
            f"configuration {qid} has weight {weight:.2e}; the process is undefined there"
        )
    projected = np.where(mask, amps, 0.0)
    flow = np.conj(amps) * ham.matvec(projected)
    im = flow.imag
    nz = np.abs(im) > 0
    ids = space.nat_ids[nz]
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    vals = im[nz][order]
    uniq, starts = np.unique(ids, return_index=True)
    sums = np.add.reduceat(vals, starts)
    rates = {}
    for cid, s in zip(uniq, sums):
        if cid == qid:
            continue
        rate = 2.0 * max(float(s), 0.0) / weight
        if rate > RATE_FLOOR:
            rates[int(cid)] = rate
    return rates, weight


def jump_rates(psi: StateVector, q: ChargeConfiguration):
    """Rates q -> q' of the jump process at the given state.

    Nonzero rates occur only for configurations one adjacent-site charge
    move away; raises ZeroProbabilityConfiguration when the state carries
    no weight at q.
    """
    psi.require_normalized()
    space = psi.space
    ham = hamiltonian(space)
    raw, _ = _rates_from_amplitudes(space, ham, psi.amplitudes, q.pattern_id())
    spec = space.spec
    return {
        ChargeConfiguration.from_pattern_id(cid, spec.sites, spec.spin_dim): rate
        for cid, rate in raw.items()
    }


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpTrajectory:
    """One realization: initial configuration plus time-stamped jumps."""

    seed: int
    traj_id: int
    initial: ChargeConfiguration
    events: tuple  # ((time, ChargeConfiguration), ...)

    def __post_init__(self):
        times = [t for t, _ in self.events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValidationError("event times must be strictly increasing")
        totals = {self.initial.total} | {q.total for _, q in self.events}
        if len(totals) != 1:
            raise ValidationError(f"total charge not conserved along trajectory: {totals}")

    def configuration_at(self, t: float) -> ChargeConfiguration:
        current = self.initial
        for time, q in self.events:
            if time <= t:
                current = q
            else:
                break
        return current

    @property
    def n_jumps(self):
        return len(self.events)


def _trajectory_rng(seed: int, stream: int) -> np.random.Generator:
    # counter-based: each stream owns a disjoint 2^128 counter block
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=int(stream) << 128))


class JumpProcess:
    """Shared context for sampling: grid states and a per-(step, config) rate cache."""

    def __init__(self, psi0: StateVector, plan: EvolutionPlan, seed: int):
        psi0.require_normalized()
        self.space = psi0.space
        self.plan = plan
        self.seed = int(seed)
        self.ham = hamiltonian(self.space)
        self.evolver = Evolver(self.space, plan)
        self.times, self.states = self.evolver.grid_states(psi0.amplitudes)
        table = born_distribution(psi0, "nat")
        self.init_ids = table.ids
        self.init_cum = np.cumsum(table.weights)
        self.init_cum /= self.init_cum[-1]
        self._rate_cache = {}

    def rates_at(self, step: int, qid: int):
        key = (step, qid)
        if key not in self._rate_cache:
            raw, _ = _rates_from_amplitudes(self.space, self.ham, self.states[step], qid)
            items = sorted(raw.items())
            ids = np.array([cid for cid, _ in items], dtype=np.int64)
            rates = np.array([r for _, r in items])
            self._rate_cache[key] = (ids, rates, float(np.sum(rates)))
        return self._rate_cache[key]

    def sample_one(self, traj_id: int) -> JumpTrajectory:
        rng = _trajectory_rng(self.seed, traj_id)
        qid = int(self.init_ids[np.searchsorted(self.init_cum, rng.random(), side="right")])
        initial_qid = qid
        events = []
        dt = self.times[1] - self.times[0]
        for step in range(len(self.times) - 1):
            t0 = self.times[step]
            ids, rates, total = self.rates_at(step, qid)
            n_sub = 1
            if total * dt >= RATE_STEP_BOUND:
                n_sub = min(MAX_SUBSTEPS, int(math.ceil(total * dt / (RATE_STEP_BOUND / 2))))
                if total * (dt / n_sub) >= RATE_STEP_BOUND:
                    raise StepTooCoarse(
                        f"rate {total:.3g} * substep {dt / n_sub:.3g} still above bound"
                    )
            sub = dt / n_sub
            for k in range(n_sub):
                remaining = sub
                t_now = t0 + k * sub
                while True:
                    if total <= 0.0:
                        break
                    tau = -math.log1p(-rng.random()) / total
                    if tau >= remaining:
                        break
                    t_now += tau
                    remaining -= tau
                    u = rng.random() * total
                    target = int(ids[min(np.searchsorted(np.cumsum(rates), u, side="right"),
                                         len(ids) - 1)])
                    t_event = t_now if not events or t_now > events[-1][0] else events[-1][0] + 1e-12
                    events.append((t_event, target))
                    qid = target
                    ids, rates, total = self.rates_at(step, qid)
        spec = self.space.spec
        decode = lambda cid: ChargeConfiguration.from_pattern_id(cid, spec.sites, spec.spin_dim)
        return JumpTrajectory(
            seed=self.seed,
            traj_id=traj_id,
            initial=decode(initial_qid),
            events=tuple((t, decode(cid)) for t, cid in events),
        )

    def sample(self, n_traj: int) -> list:
        return [self.sample_one(i) for i in range(n_traj)]


def sample_process(psi0: StateVector, plan: EvolutionPlan, n_traj: int, seed: int,
                   workers: int = 1) -> list:
    """Independent trajectories of the jump process started in psi0.

    Initial configurations follow the exact Born table of psi0; each
    trajectory uses its own counter-based stream, so the output is
    reproducible for (plan, seed) at any worker count.
    """
    if workers > 1 and n_traj >= 256:
        return _sample_parallel(psi0, plan, n_traj, seed, workers)
    return JumpProcess(psi0, plan, seed).sample(n_traj)


def _sample_parallel(psi0, plan, n_traj, seed, workers):
    import concurrent.futures

    spec_cfg = psi0.space.spec.to_config()
    amps = psi0.amplitudes
    chunks = np.array_split(np.arange(n_traj), workers)
    out = [None] * n_traj
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_sample_chunk, spec_cfg, amps, plan, seed, chunk.tolist())
            for chunk in chunks if len(chunk)
        ]
        for fut in futures:
            for traj in fut.result():
                out[traj.traj_id] = traj
    return out


def _sample_chunk(spec_cfg, amps, plan, seed, traj_ids):
    from .lattice import LatticeSpec, build_one_particle
    space = FockSpace(build_one_particle(LatticeSpec.from_config(spec_cfg)))
    psi0 = StateVector(space, np.asarray(amps), normalized=True)
    proc = JumpProcess(psi0, plan, seed)
    return [proc.sample_one(i) for i in traj_ids]


# ---------------------------------------------------------------------------
# equivariance
# ---------------------------------------------------------------------------

def empirical_marginal(trajectories, t):
    """Configuration-id counts across trajectories at time t."""
    counts = {}
    for traj in trajectories:
        cid = traj.configuration_at(t).pattern_id()
        counts[cid] = counts.get(cid, 0) + 1
    return counts


def total_variation(counts, exact_table, n_traj):
    ids = set(counts) | set(int(i) for i in exact_table.ids)
    exact = exact_table.as_dict()
    return 0.5 * sum(abs(counts.get(i, 0) / n_traj - exact.get(i, 0.0)) for i in ids)


def equivariance_check(psi0: StateVector, plan: EvolutionPlan, n_traj: int, times,
                       seed: int = 0, workers: int = 1, n_bootstrap: int = 200):
    """Total-variation distance of the sampled marginals from the Born marginals.

    Probe times snap to the evolution grid.  The bootstrap radius is
    1.96 sigma of the TV under multinomial resampling of the empirical
    counts.  Returns a list of records, one per probe time.
    """
    process = JumpProcess(psi0, plan, seed)
    trajectories = (
        sample_process(psi0, plan, n_traj, seed, workers) if workers > 1 else process.sample(n_traj)
    )
    rng = _trajectory_rng(seed, 1 << 62)
    records = []
    for t in times:
        step = int(np.argmin(np.abs(process.times - t)))
        t_grid = float(process.times[step])
        state = StateVector(psi0.space, process.states[step]).normalize()
        exact = born_distribution(state, "nat")
        counts = empirical_marginal(trajectories, t_grid)
        tv = total_variation(counts, exact, n_traj)
        ids = sorted(counts)
        probs = np.array([counts[i] / n_traj for i in ids])
        tvs = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            resampled = rng.multinomial(n_traj, probs)
            tvs[b] = total_variation(dict(zip(ids, resampled)), exact, n_traj)
        records.append({
            "time": t_grid,
            "tv": float(tv),
            "bootstrap_radius": float(1.96 * np.std(tvs)),
            "n_traj": n_traj,
            "support": len(exact.ids),
        })
    return records, trajectories


# ---------------------------------------------------------------------------
# conservation diagnostics
# ---------------------------------------------------------------------------

def _operator_norm(dense):
    herm = 1j * dense
    return float(np.max(np.abs(np.linalg.eigvalsh((herm + herm.conj().T) / 2))))


def _commutator_norm(h_dense, other_diag_or_dense):
    if isinstance(other_diag_or_dense, DiagonalOperator):
        d = other_diag_or_dense.diagonal
        comm = h_dense * d[np.newaxis, :] - d[:, np.newaxis] * h_dense
    else:
        comm = h_dense @ other_diag_or_dense - other_diag_or_dense @ h_dense
    return _operator_norm(comm)


def pair_creation_diagnostics(space: FockSpace, t_max: float = 4.0, samples: int = 41):
    """Which particle counts the free evolution conserves, and which it does not.

    Reports exact commutator norms (charge and quasiparticle counts
    conserved; configuration-count operators not) and the time series of
    the electron count started from a level basis state.
    """
    if space.dim > (1 << 12):
        raise TooLarge("diagnostics uses dense norms; run at dimension <= 4096")
    ham = hamiltonian(space)
    h_dense = ham.to_dense()
    full = Region(range(space.spec.sites))
    n_el, n_pos = number_operators(space, full)
    n_el_obv, n_pos_obv = obv_number_operators(space, full)
    q_full = charge_operator(space, full)
    sector_norms = [
        _commutator_norm(h_dense, proj) for proj in charge_sectors(space).values()
    ]
    hop_unit = 1.0 / (2.0 * space.spec.spacing)

    plan = EvolutionPlan(method="auto", dt=t_max / (samples - 1), t_max=t_max)
    evolver = Evolver(space, plan)
    times, states = evolver.grid_states(level_state(space).amplitudes)
    series = [float(np.sum(n_el.diagonal * np.abs(s) ** 2)) for s in states]

    return {
        "hopping_unit": hop_unit,
        "comm_h_n_nat_el": _commutator_norm(h_dense, n_el),
        "comm_h_n_nat_pos": _commutator_norm(h_dense, n_pos),
        "comm_h_n_obv_el": _commutator_norm(h_dense, n_el_obv.to_dense()),
        "comm_h_n_obv_pos": _commutator_norm(h_dense, n_pos_obv.to_dense()),
        "comm_h_q_full": _commutator_norm(h_dense, q_full),
        "comm_h_sectors_max": max(sector_norms),
        "level_series_times": [float(t) for t in times],
        "level_series_n_el": series,
        "level_series_spread": float(np.max(series) - np.min(series)),
    }


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def trajectories_to_csv(trajectories, path):
    """Rows (traj_id, event_index, time, charges...); event 0 is the initial configuration."""
    if not trajectories:
        raise ValidationError("no trajectories to write")
    sites = len(trajectories[0].initial.charges)
    with open(path, "w") as fh:
        qcols = ",".join(f"q{x}" for x in range(sites))
        fh.write(f"traj_id,event_index,time,{qcols}\n")
        for traj in trajectories:
            rows = [(0.0, traj.initial)] + list(traj.events)
            for k, (t, q) in enumerate(rows):
                qs = ",".join(str(c) for c in q.charges)
                fh.write(f"{traj.traj_id},{k},{t:.17g},{qs}\n")


def diagnostics_to_json(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
