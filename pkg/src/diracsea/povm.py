"""Charge operators and the measurement families over configurations.

Three measurements act on the same Fock space:

* the occupation family ("pre"): per-site particle counts, diagonal;
* the charge-configuration family ("nat"): per-site charge d/2 - count,
  diagonal, a genuine projector family summing to the identity;
* the quasiparticle family ("obv"): electron/positron patterns in a
  position-like quasiparticle mode basis; diagonal only after a basis
  rotation, and its vacuum projector is the rank-one sea projector.

Charge sign convention: electrons negative, positrons positive; the
diagonal charge at a site is d/2 minus its occupation.  With this
convention a field annihilator raises the charge at its site by one.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from . import bits
from .errors import (
    ChargeOutOfRange,
    NotOrthonormal,
    SitesNotDistinct,
    ValidationError,
)
from .fock import (
    FockSpace,
    StateVector,
    FockBasisChange,
    QuadraticOperator,
    _field_array,
)

WEIGHT_DROP = 1e-14


@dataclass(frozen=True)
class Region:
    """Subset of lattice sites."""

    sites: tuple

    def __init__(self, sites):
        object.__setattr__(self, "sites", tuple(sorted(set(int(s) for s in sites))))

    def validate(self, spec):
        if any(s < 0 or s >= spec.sites for s in self.sites):
            raise ValidationError(f"region {self.sites} outside 0..{spec.sites - 1}")

    def __len__(self):
        return len(self.sites)

    def complement(self, spec):
        return Region([s for s in range(spec.sites) if s not in set(self.sites)])


@dataclass(frozen=True)
class ChargeConfiguration:
    """Integer charge per site; positive = positron(s), negative = electron(s)."""

    charges: tuple
    spin_dim: int

    def __init__(self, charges, spin_dim):
        charges = tuple(int(c) for c in charges)
        half = spin_dim // 2
        if any(abs(c) > half for c in charges):
            raise ChargeOutOfRange(f"charges {charges} outside +-{half}")
        object.__setattr__(self, "charges", charges)
        object.__setattr__(self, "spin_dim", spin_dim)

    @property
    def n_el(self):
        return sum(-c for c in self.charges if c < 0)

    @property
    def n_pos(self):
        return sum(c for c in self.charges if c > 0)

    @property
    def total(self):
        return sum(self.charges)

    @property
    def electron_sites(self):
        return tuple(x for x, c in enumerate(self.charges) for _ in range(-c) if c < 0)

    @property
    def positron_sites(self):
        return tuple(x for x, c in enumerate(self.charges) for _ in range(c) if c > 0)

    def pattern_id(self):
        """Base-(d+1) encoding of the occupation deficits q + d/2."""
        half = self.spin_dim // 2
        base = self.spin_dim + 1
        pid = 0
        for x in reversed(range(len(self.charges))):
            pid = pid * base + (self.charges[x] + half)
        return pid

    @classmethod
    def from_pattern_id(cls, pid, sites, spin_dim):
        digits = bits.decode_pattern_id(pid, sites, spin_dim + 1)
        return cls(tuple(int(dg) - spin_dim // 2 for dg in digits), spin_dim)

    @classmethod
    def vacuum(cls, sites, spin_dim):
        return cls((0,) * sites, spin_dim)

    def occupation_pattern(self):
        """Per-site particle counts realizing this charge configuration."""
        half = self.spin_dim // 2
        return tuple(half - c for c in self.charges)


def all_charge_configurations(spec):
    half = spec.spin_dim // 2
    for combo in itertools.product(range(-half, half + 1), repeat=spec.sites):
        yield ChargeConfiguration(combo, spec.spin_dim)


# ---------------------------------------------------------------------------
# diagonal operators and projectors
# ---------------------------------------------------------------------------

class DiagonalOperator:
    """Real diagonal operator over the occupation basis."""

    def __init__(self, space: FockSpace, diagonal, label=""):
        self.space = space
        self.diagonal = np.asarray(diagonal, dtype=float)
        self.label = label

    def apply(self, psi: StateVector) -> StateVector:
        return StateVector(self.space, self.diagonal * psi.amplitudes, label=psi.label)

    def matvec(self, amps):
        return self.diagonal * amps

    def expectation(self, psi: StateVector) -> float:
        return float(np.sum(self.diagonal * np.abs(psi.amplitudes) ** 2))

    def __add__(self, other):
        return DiagonalOperator(self.space, self.diagonal + other.diagonal)

    def __sub__(self, other):
        return DiagonalOperator(self.space, self.diagonal - other.diagonal)


class DiagonalProjector(DiagonalOperator):
    """0/1 diagonal projector, stored as a boolean mask."""

    def __init__(self, space: FockSpace, mask, label=""):
        self.mask = np.asarray(mask, dtype=bool)
        super().__init__(space, self.mask.astype(float), label=label)

    def rank(self):
        return int(np.count_nonzero(self.mask))

    def weight(self, psi: StateVector) -> float:
        return float(np.sum(np.abs(psi.amplitudes[self.mask]) ** 2))


def charge_operator(space: FockSpace, region: Region) -> DiagonalOperator:
    """Total charge inside the region: sum over its sites of d/2 - occupation."""
    region.validate(space.spec)
    half = space.spec.spin_dim // 2
    diag = np.zeros(space.dim, dtype=np.int64)
    for x in region.sites:
        diag += half - space.occupations[x].astype(np.int64)
    return DiagonalOperator(space, diag, label=f"Q{region.sites}")


def p_pre(space: FockSpace, pattern) -> DiagonalProjector:
    """Projector onto strings whose per-site counts equal the pattern."""
    pattern = tuple(int(p) for p in pattern)
    d = space.spec.spin_dim
    if len(pattern) != space.spec.sites or any(p < 0 or p > d for p in pattern):
        raise ValidationError(f"occupation pattern {pattern} invalid for d={d}")
    pid = 0
    for x in reversed(range(len(pattern))):
        pid = pid * (d + 1) + pattern[x]
    return DiagonalProjector(space, space.pre_ids == pid, label=f"pre{pattern}")


def p_nat(space: FockSpace, q: ChargeConfiguration) -> DiagonalProjector:
    """Projector onto the charge configuration q: occupation d/2 - q per site."""
    if q.spin_dim != space.spec.spin_dim or len(q.charges) != space.spec.sites:
        raise ValidationError("configuration does not match the space")
    return DiagonalProjector(space, space.nat_ids == q.pattern_id(), label=f"nat{q.charges}")


def p_nat_event(space: FockSpace, region: Region, charges_on_region) -> DiagonalProjector:
    """Projector onto the event {q restricted to region == given charges}.

    Depends only on occupations inside the region, so it commutes with
    every operator supported on the complement.
    """
    region.validate(space.spec)
    charges_on_region = tuple(int(c) for c in charges_on_region)
    if len(charges_on_region) != len(region.sites):
        raise ValidationError("one charge per region site required")
    half = space.spec.spin_dim // 2
    if any(abs(c) > half for c in charges_on_region):
        raise ChargeOutOfRange(f"charges {charges_on_region} outside +-{half}")
    mask = np.ones(space.dim, dtype=bool)
    for x, c in zip(region.sites, charges_on_region):
        mask &= space.occupations[x] == (half - c)
    return DiagonalProjector(space, mask, label=f"nat|{region.sites}={charges_on_region}")


def zero_charge_event(space: FockSpace, region: Region) -> DiagonalProjector:
    """No particles (charge 0 everywhere) inside the region."""
    return p_nat_event(space, region, (0,) * len(region.sites))


def number_operators(space: FockSpace, region: Region):
    """(electron count, positron count) in the region, from the charge picture."""
    region.validate(space.spec)
    half = space.spec.spin_dim // 2
    nel = np.zeros(space.dim, dtype=np.int64)
    npos = np.zeros(space.dim, dtype=np.int64)
    for x in region.sites:
        occ = space.occupations[x].astype(np.int64)
        nel += np.maximum(occ - half, 0)
        npos += np.maximum(half - occ, 0)
    return (
        DiagonalOperator(space, nel, label=f"Nel{region.sites}"),
        DiagonalOperator(space, npos, label=f"Npos{region.sites}"),
    )


def charge_sectors(space: FockSpace):
    """Projectors onto total charge z, for every z with nonempty sector."""
    half = space.spec.spin_dim // 2
    total = half * space.spec.sites - space.popcounts.astype(np.int64)
    return {
        int(z): DiagonalProjector(space, total == z, label=f"sector{z}")
        for z in range(-half * space.spec.sites, half * space.spec.sites + 1)
    }


# ---------------------------------------------------------------------------
# quasiparticle measurement (the |psi|^2 picture)
# ---------------------------------------------------------------------------

class QuasiParticleBasis:
    """Position-like electron and hole modes spanning the spectral halves.

    Electron modes: symmetric orthonormalization of the positive-spectral
    projections of the upper-spin position deltas; hole modes likewise
    from the negative projections of the lower-spin deltas (those slices
    keep the frame nonsingular for the massive operator).  Quasi mode
    order: electrons site-major first, then holes site-major.  A positron
    at a site is an unoccupied hole mode there.
    """

    def __init__(self, space: FockSpace):
        self.space = space
        spec = space.spec
        d = spec.spin_dim
        half = d // 2
        sysm = space.system
        p_pos = sysm.projector_positive()
        p_neg = sysm.projector_negative()
        el_cols = []
        hole_cols = []
        for x in range(spec.sites):
            for tau in range(half):
                el_cols.append(p_pos[:, x * d + tau])
                hole_cols.append(p_neg[:, x * d + half + tau])
        w_el = _lowdin(np.array(el_cols).T)
        w_hole = _lowdin(np.array(hole_cols).T)
        self.unitary = np.hstack([w_el, w_hole])
        self.change = FockBasisChange(space, self.unitary)
        self.n_el_modes = w_el.shape[1]
        self._el_ids, self._pos_ids = self._pattern_tables()

    def _pattern_tables(self):
        space = self.space
        half = space.spec.spin_dim // 2
        sites = space.spec.sites
        idx = space.indices
        site_mask = np.uint64((1 << half) - 1)
        el = np.empty((sites, space.dim), dtype=np.uint8)
        pos = np.empty((sites, space.dim), dtype=np.uint8)
        for x in range(sites):
            el[x] = np.bitwise_count((idx >> np.uint64(x * half)) & site_mask)
            hole_occ = np.bitwise_count((idx >> np.uint64(self.n_el_modes + x * half)) & site_mask)
            pos[x] = half - hole_occ
        return bits.pattern_ids(el, half + 1), bits.pattern_ids(pos, half + 1)

    def combined_ids(self):
        base = (self.space.spec.spin_dim // 2 + 1) ** self.space.spec.sites
        return self._el_ids + self._pos_ids * base

    def pattern_mask(self, electron_pattern, positron_pattern):
        half = self.space.spec.spin_dim // 2
        sites = self.space.spec.sites
        for pat in (electron_pattern, positron_pattern):
            if len(pat) != sites or any(p < 0 or p > half for p in pat):
                raise ValidationError(f"quasiparticle pattern {pat} invalid")
        el_id = _encode(electron_pattern, half + 1)
        pos_id = _encode(positron_pattern, half + 1)
        return (self._el_ids == el_id) & (self._pos_ids == pos_id)


def _encode(pattern, base):
    pid = 0
    for x in reversed(range(len(pattern))):
        pid = pid * base + int(pattern[x])
    return pid


def _lowdin(frame):
    gram = frame.conj().T @ frame
    evals, evecs = np.linalg.eigh(gram)
    if np.min(evals) < 1e-8:
        raise NotOrthonormal("quasiparticle frame is numerically singular")
    inv_sqrt = evecs @ np.diag(evals ** -0.5) @ evecs.conj().T
    return frame @ inv_sqrt


class RotatedProjector:
    """Projector diagonal in the quasiparticle occupation basis."""

    def __init__(self, quasi: QuasiParticleBasis, mask, label=""):
        self.quasi = quasi
        self.space = quasi.space
        self.mask = np.asarray(mask, dtype=bool)
        self.label = label

    def matvec(self, amps):
        rotated = self.quasi.change.backward(amps)
        rotated[~self.mask] = 0.0
        return self.quasi.change.forward(rotated)

    def apply(self, psi: StateVector) -> StateVector:
        return StateVector(self.space, self.matvec(psi.amplitudes), label=psi.label)

    def rank(self):
        return int(np.count_nonzero(self.mask))

    def weight(self, psi: StateVector) -> float:
        rotated = self.quasi.change.backward(psi.amplitudes)
        return float(np.sum(np.abs(rotated[self.mask]) ** 2))


def quasiparticle_basis(space: FockSpace) -> QuasiParticleBasis:
    if not hasattr(space, "_quasi_cache"):
        space._quasi_cache = QuasiParticleBasis(space)
    return space._quasi_cache


def p_obv(space: FockSpace, electron_pattern, positron_pattern) -> RotatedProjector:
    """Projector onto a joint electron/positron position pattern.

    The empty pattern projects on the sea state alone; the family over all
    patterns resolves the identity.
    """
    quasi = quasiparticle_basis(space)
    mask = quasi.pattern_mask(electron_pattern, positron_pattern)
    return RotatedProjector(quasi, mask, label=f"obv{tuple(electron_pattern)}|{tuple(positron_pattern)}")


def obv_number_operators(space: FockSpace, region: Region):
    """Quasiparticle electron/positron counts in a region, as quadratic operators.

    For the full lattice these commute with the Hamiltonian and their
    difference is minus the total charge.
    """
    region.validate(space.spec)
    spec = space.spec
    d = spec.spin_dim
    sysm = space.system
    ind = np.zeros(spec.n_modes)
    for x in region.sites:
        ind[x * d:(x + 1) * d] = 1.0
    one_a = np.diag(ind)
    p_pos = sysm.projector_positive()
    n_el = QuadraticOperator(space, p_pos @ one_a @ p_pos)
    # positron weight in A: holes counted through their conjugated (positron) wave functions
    g = sysm.eigenvectors[:, sysm.neg_modes]
    cg = sysm.conjugation @ g.conj()
    m = cg.conj().T @ one_a @ cg
    coeff = -(g @ m.T @ g.conj().T)
    n_pos = QuadraticOperator(space, coeff, constant=float(np.real(np.trace(m))))
    return n_el, n_pos


# ---------------------------------------------------------------------------
# Born tables
# ---------------------------------------------------------------------------

@dataclass
class BornTable:
    """Sparse probability table over configuration ids."""

    measure: str
    space: FockSpace
    ids: np.ndarray
    weights: np.ndarray
    dropped: float

    def total(self):
        return float(np.sum(self.weights))

    def as_dict(self):
        return {int(i): float(w) for i, w in zip(self.ids, self.weights)}

    def weight_of(self, config_id):
        hit = np.flatnonzero(self.ids == config_id)
        return float(self.weights[hit[0]]) if len(hit) else 0.0

    def rows(self):
        """Export rows (config_id, charges..., n_el, n_pos, total_charge, weight)."""
        spec = self.space.spec
        half = spec.spin_dim // 2
        for cid, w in zip(self.ids, self.weights):
            if self.measure in ("nat", "pre"):
                if self.measure == "pre":
                    occ = bits.decode_pattern_id(int(cid), spec.sites, spec.spin_dim + 1)
                    charges = [half - int(o) for o in occ]
                else:
                    charges = list(
                        ChargeConfiguration.from_pattern_id(int(cid), spec.sites, spec.spin_dim).charges
                    )
                nel = sum(-c for c in charges if c < 0)
                npos = sum(c for c in charges if c > 0)
            else:
                base = (half + 1) ** spec.sites
                el = bits.decode_pattern_id(int(cid) % base, spec.sites, half + 1)
                po = bits.decode_pattern_id(int(cid) // base, spec.sites, half + 1)
                charges = [int(p) - int(e) for e, p in zip(el, po)]
                nel, npos = int(np.sum(el)), int(np.sum(po))
            yield (int(cid), charges, int(nel), int(npos), int(sum(charges)), float(w))

    def write_csv(self, path):
        spec = self.space.spec
        with open(path, "w") as fh:
            qcols = ",".join(f"q{x}" for x in range(spec.sites))
            fh.write(f"config_id,{qcols},n_el,n_pos,total_charge,weight\n")
            for cid, charges, nel, npos, tot, w in self.rows():
                qs = ",".join(str(c) for c in charges)
                fh.write(f"{cid},{qs},{nel},{npos},{tot},{w:.17g}\n")


def born_distribution(psi: StateVector, measure: str = "nat") -> BornTable:
    """Exact Born table of the state under the requested measurement family."""
    psi.require_normalized()
    space = psi.space
    if measure == "nat":
        ids = space.nat_ids
    elif measure == "pre":
        ids = space.pre_ids
    elif measure == "obv":
        quasi = quasiparticle_basis(space)
        rotated = quasi.change.backward(psi.amplitudes)
        ids = quasi.combined_ids()
        return _bin_weights(space, "obv", ids, np.abs(rotated) ** 2)
    else:
        raise ValidationError(f"unknown measure '{measure}'")
    return _bin_weights(space, measure, ids, np.abs(psi.amplitudes) ** 2)


def _bin_weights(space, measure, ids, weights):
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    sorted_w = weights[order]
    uniq, starts = np.unique(sorted_ids, return_index=True)
    sums = np.add.reduceat(sorted_w, starts)
    keep = sums >= WEIGHT_DROP
    dropped = float(np.sum(sums[~keep]))
    return BornTable(measure, space, uniq[keep], sums[keep], dropped)


# ---------------------------------------------------------------------------
# charge maps and the density formula
# ---------------------------------------------------------------------------

def charge_maps(q: ChargeConfiguration, x: int, direction: str) -> ChargeConfiguration:
    """Charge lowering / raising at a site.

    Lowering removes a positron if one is present, otherwise adds an
    electron; raising is the reverse.  In charge terms: -1 or +1 at the
    site, failing when the site already carries the extreme charge.
    """
    charges = list(q.charges)
    if direction == "lower":
        charges[x] -= 1
    elif direction == "raise":
        charges[x] += 1
    else:
        raise ValidationError(f"direction must be 'lower' or 'raise', got '{direction}'")
    return ChargeConfiguration(charges, q.spin_dim)


def rho_nat_formula_check(psi: StateVector, electron_sites, positron_sites):
    """Configuration weight vs the field-operator sandwich through the vacuum event.

    Returns (lhs, rhs_raw): lhs is the exact Born weight of the
    configuration with one electron at each listed electron site and one
    positron at each positron site; rhs_raw is the spin-summed sandwich
    with unit normalization.  The proportionality constant per particle
    content is fitted by the caller.
    """
    psi.require_normalized()
    space = psi.space
    spec = space.spec
    locations = tuple(electron_sites) + tuple(positron_sites)
    if len(set(locations)) != len(locations):
        raise SitesNotDistinct(f"locations {locations} are not pairwise distinct")
    charges = [0] * spec.sites
    for x in electron_sites:
        charges[x] = -1
    for x in positron_sites:
        charges[x] = +1
    config = ChargeConfiguration(charges, spec.spin_dim)
    lhs = p_nat(space, config).weight(psi)

    vacuum = p_nat(space, ChargeConfiguration.vacuum(spec.sites, spec.spin_dim))
    d = spec.spin_dim
    rhs = 0.0
    n, nbar = len(electron_sites), len(positron_sites)
    for spins in itertools.product(range(d), repeat=n + nbar):
        amps = psi.amplitudes
        for i, x in enumerate(electron_sites):
            f = np.zeros(spec.n_modes, dtype=complex)
            f[x * d + spins[i]] = 1.0
            amps = _field_array(space, f, False, amps)
        for j, x in enumerate(positron_sites):
            f = np.zeros(spec.n_modes, dtype=complex)
            f[x * d + spins[n + j]] = 1.0
            amps = _field_array(space, f, True, amps)
        rhs += float(np.sum(np.abs(amps[vacuum.mask]) ** 2))
    return lhs, rhs


def fit_rho_nat_constant(pairs):
    """Least-squares constant through the origin for (lhs, rhs_raw) pairs."""
    lhs = np.array([p[0] for p in pairs])
    rhs = np.array([p[1] for p in pairs])
    denom = float(np.sum(rhs * rhs))
    if denom == 0.0:
        raise ValidationError("all sandwich values vanish; constant undetermined")
    c = float(np.sum(lhs * rhs) / denom)
    residual = float(np.max(np.abs(lhs - c * rhs)))
    return c, residual
