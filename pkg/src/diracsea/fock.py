"""Fermionic Fock space over the lattice modes, as occupation bitstrings.

Basis string b has bit i set when position-spin mode i is occupied; mode
order is site-major (mode i = site i // d, spin i % d).  All operator
signs are the usual ordered-product signs, (-1)^(occupied modes below the
acted mode), applied exactly.
"""

from dataclasses import dataclass
import struct

import numpy as np
import scipy.sparse as sp

from . import bits
from .errors import (
    DimensionMismatch,
    NotNormalized,
    NotOrthonormal,
    TooLarge,
    ValidationError,
)
from .lattice import OneParticleSystem, momentum_eigenbasis

DEFAULT_DIMENSION_GUARD = 1 << 20
SPARSE_DIMENSION_LIMIT = 1 << 16
NORM_TOL = 1e-12


class FockSpace:
    """Occupation-basis arena for a built one-particle system.

    Caches the per-string occupation pattern ids used by every diagonal
    measurement.  Instances are immutable and safe to share.
    """

    def __init__(self, sys: OneParticleSystem, max_dimension: int = DEFAULT_DIMENSION_GUARD):
        if not sys.labeled:
            sys = momentum_eigenbasis(sys)
        self.system = sys
        self.spec = sys.spec
        self.n_modes = sys.spec.n_modes
        if 1 << self.n_modes > max_dimension:
            raise TooLarge(
                f"Fock dimension 2^{self.n_modes} exceeds the guard {max_dimension}; "
                "raise the guard explicitly to proceed"
            )
        self.dim = 1 << self.n_modes
        self.indices = np.arange(self.dim, dtype=np.uint64)
        self.popcounts = np.bitwise_count(self.indices).astype(np.uint8)
        self._occ = None
        self._pre_ids = None

    @property
    def occupations(self):
        """(sites, dim) per-site occupation counts."""
        if self._occ is None:
            self._occ = bits.occupation_table(self.n_modes, self.spec.spin_dim)
        return self._occ

    @property
    def pre_ids(self):
        """Per-string occupation-pattern id, base (spin_dim + 1), site 0 least significant."""
        if self._pre_ids is None:
            self._pre_ids = bits.pattern_ids(self.occupations, self.spec.spin_dim + 1)
        return self._pre_ids

    @property
    def nat_ids(self):
        """Per-string charge-configuration id: digits are the occupation deficits d - occ."""
        full = (self.spec.spin_dim + 1) ** self.spec.sites - 1
        return full - self.pre_ids

    def mode_site(self, mode):
        return mode // self.spec.spin_dim

    def mode_spin(self, mode):
        return mode % self.spec.spin_dim

    def level_string(self) -> int:
        """Canonical basis string of the level pattern: spins 0..d/2-1 filled at every site."""
        d = self.spec.spin_dim
        per_site = (1 << (d // 2)) - 1
        b = 0
        for x in range(self.spec.sites):
            b |= per_site << (x * d)
        return b

    def zeros(self):
        return np.zeros(self.dim, dtype=complex)


@dataclass
class StateVector:
    """Complex amplitudes over the occupation basis."""

    space: FockSpace
    amplitudes: np.ndarray
    label: str = ""
    normalized: bool = False

    def __post_init__(self):
        if self.amplitudes.shape != (self.space.dim,):
            raise DimensionMismatch(
                f"amplitude vector has length {self.amplitudes.shape}, expected {self.space.dim}"
            )
        if self.normalized and abs(self.norm() - 1.0) > NORM_TOL:
            raise NotNormalized(f"state '{self.label}' marked normalized has norm {self.norm()}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def normalize(self, label=None) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise NotNormalized("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n, label or self.label, normalized=True)

    def require_normalized(self):
        if abs(self.norm() - 1.0) > 1e-10:
            raise NotNormalized(f"state '{self.label}' has norm {self.norm()}, expected 1")


# ---------------------------------------------------------------------------
# elementary operators
# ---------------------------------------------------------------------------

def _create_array(space, mode, amps):
    out = space.zeros()
    idx = space.indices
    unocc = ((idx >> np.uint64(mode)) & np.uint64(1)) == 0
    src = idx[unocc]
    tgt = src | np.uint64(1 << mode)
    out[tgt] = bits.parity_below(src, mode) * amps[src]
    return out


def _annihilate_array(space, mode, amps):
    out = space.zeros()
    idx = space.indices
    occ = ((idx >> np.uint64(mode)) & np.uint64(1)) == 1
    src = idx[occ]
    tgt = src & ~np.uint64(1 << mode)
    out[tgt] = bits.parity_below(tgt, mode) * amps[src]
    return out


def create(space: FockSpace, mode: int, psi: StateVector) -> StateVector:
    """Apply the creation operator of position-spin mode `mode`."""
    if not 0 <= mode < space.n_modes:
        raise DimensionMismatch(f"mode {mode} out of range for {space.n_modes} modes")
    return StateVector(space, _create_array(space, mode, psi.amplitudes), label=f"c+{mode} {psi.label}")


def annihilate(space: FockSpace, mode: int, psi: StateVector) -> StateVector:
    """Apply the annihilation operator of mode `mode` (exact adjoint of create)."""
    if not 0 <= mode < space.n_modes:
        raise DimensionMismatch(f"mode {mode} out of range for {space.n_modes} modes")
    return StateVector(space, _annihilate_array(space, mode, psi.amplitudes), label=f"c-{mode} {psi.label}")


def _field_array(space, f, dagger, amps):
    f = np.asarray(f, dtype=complex)
    if f.shape != (space.n_modes,):
        raise DimensionMismatch(f"mode vector has shape {f.shape}, expected ({space.n_modes},)")
    out = space.zeros()
    for mode in np.flatnonzero(np.abs(f) > 0):
        if dagger:
            out += f[mode] * _create_array(space, mode, amps)
        else:
            out += np.conj(f[mode]) * _annihilate_array(space, mode, amps)
    return out


def field_operator(space: FockSpace, f, dagger: bool, psi: StateVector) -> StateVector:
    """Smeared field operator: sum_i conj(f_i) c_i, or sum_i f_i c+_i when dagger.

    Anti-linear in f without dagger, linear with; linear in psi either way.
    """
    return StateVector(space, _field_array(space, f, dagger, psi.amplitudes), label=psi.label)


# ---------------------------------------------------------------------------
# quadratic operators (sum_ij M_ij c+_i c_j + constant)
# ---------------------------------------------------------------------------

class QuadraticOperator:
    """Second quantization of a one-particle matrix, plus a constant.

    Applies matrix-free; materializes a sparse matrix on demand for
    spaces up to SPARSE_DIMENSION_LIMIT.  Matrix elements connect only
    strings of equal total occupation.
    """

    def __init__(self, space: FockSpace, coeff: np.ndarray, constant: float = 0.0):
        coeff = np.asarray(coeff, dtype=complex)
        if coeff.shape != (space.n_modes, space.n_modes):
            raise DimensionMismatch("coefficient matrix does not match the mode count")
        self.space = space
        self.coeff = coeff
        self.constant = complex(constant)
        self._sparse = None
        ii, jj = np.nonzero(np.abs(coeff) > 1e-15)
        self._terms = [(int(i), int(j), coeff[i, j]) for i, j in zip(ii, jj)]

    def matvec(self, amps: np.ndarray) -> np.ndarray:
        if self._sparse is not None:
            return self._sparse @ amps
        space = self.space
        idx = space.indices
        out = self.constant * amps if self.constant != 0 else space.zeros()
        one = np.uint64(1)
        for i, j, hij in self._terms:
            if i == j:
                occ = ((idx >> np.uint64(i)) & one).astype(float)
                out += hij * occ * amps
            else:
                sel = (((idx >> np.uint64(j)) & one) == 1) & (((idx >> np.uint64(i)) & one) == 0)
                src = idx[sel]
                mid = src & ~np.uint64(1 << j)
                tgt = mid | np.uint64(1 << i)
                sign = bits.parity_below(src, j) * bits.parity_below(mid, i)
                np.add.at(out, tgt.astype(np.int64), hij * sign * amps[src])
        return out

    def apply(self, psi: StateVector) -> StateVector:
        return StateVector(self.space, self.matvec(psi.amplitudes), label=psi.label)

    def expectation(self, psi: StateVector) -> complex:
        return complex(np.vdot(psi.amplitudes, self.matvec(psi.amplitudes)))

    def to_sparse(self) -> sp.csr_matrix:
        if self._sparse is None:
            if self.space.dim > SPARSE_DIMENSION_LIMIT:
                raise TooLarge(f"refusing to materialize a sparse operator at dimension {self.space.dim}")
            self._sparse = self._build_sparse()
        return self._sparse

    def _build_sparse(self):
        space = self.space
        idx = space.indices
        one = np.uint64(1)
        rows, cols, vals = [], [], []
        if self.constant != 0:
            rows.append(idx.astype(np.int64))
            cols.append(idx.astype(np.int64))
            vals.append(np.full(space.dim, self.constant, dtype=complex))
        for i, j, hij in self._terms:
            if i == j:
                sel = ((idx >> np.uint64(i)) & one) == 1
                src = idx[sel].astype(np.int64)
                rows.append(src)
                cols.append(src)
                vals.append(np.full(len(src), hij, dtype=complex))
            else:
                sel = (((idx >> np.uint64(j)) & one) == 1) & (((idx >> np.uint64(i)) & one) == 0)
                src = idx[sel]
                mid = src & ~np.uint64(1 << j)
                tgt = (mid | np.uint64(1 << i)).astype(np.int64)
                sign = bits.parity_below(src, j) * bits.parity_below(mid, i)
                rows.append(tgt)
                cols.append(src.astype(np.int64))
                vals.append(hij * sign)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(space.dim, space.dim),
        )
        mat.sum_duplicates()
        return mat.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def second_quantized_hamiltonian(space: FockSpace) -> QuadraticOperator:
    """Fock Hamiltonian sum_ij h1_ij c+_i c_j, shifted so the sea state has energy 0.

    The shift is minus the sum of the negative one-particle energies; it
    leaves all commutators and jump rates unchanged.
    """
    e_sea = float(np.sum(space.system.eigenvalues[space.system.neg_modes]))
    return QuadraticOperator(space, space.system.h1, constant=-e_sea)


def total_number_operator(space: FockSpace) -> QuadraticOperator:
    return QuadraticOperator(space, np.eye(space.n_modes))


# ---------------------------------------------------------------------------
# distinguished states
# ---------------------------------------------------------------------------

def bottom_state(space: FockSpace) -> StateVector:
    """The unique state with zero occupied modes."""
    amps = space.zeros()
    amps[0] = 1.0
    return StateVector(space, amps, label="bottom", normalized=True)


def sea_state(space: FockSpace) -> StateVector:
    """All negative-energy eigenmodes filled, with the frozen phase convention.

    Built by applying the eigenmode creation operators in the canonical
    order (energy ascending, momentum index, spin branch); the first mode
    ends up leftmost in the ordered product.
    """
    sys = space.system
    amps = space.zeros()
    amps[0] = 1.0
    for k in reversed(sys.neg_modes):
        amps = _field_array(space, sys.eigenvectors[:, k], True, amps)
    return StateVector(space, amps, label="sea", normalized=True)


def level_state(space: FockSpace) -> StateVector:
    """Canonical basis state of the level pattern (d/2 particles per site)."""
    amps = space.zeros()
    amps[space.level_string()] = 1.0
    return StateVector(space, amps, label="level", normalized=True)


def wave_packet_state(space: FockSpace, center=None, width: float = 1.0,
                      momentum: float = 0.0) -> StateVector:
    """One quasi-electron over the sea: a Gaussian projected onto the positive half.

    The packet is centered at `center` (site units, default mid-lattice)
    with the given spatial width (physical units) and carrier momentum
    along the first axis; its positive-spectral projection is normalized
    and created on top of the sea state.
    """
    spec = space.spec
    sysm = space.system
    if center is None:
        center = [spec.n_per_side / 2.0] * spec.dim
    a = spec.spacing
    f = np.zeros(spec.n_modes, dtype=complex)
    for x in range(spec.sites):
        coords = np.array(spec.site_coords(x), dtype=float)
        # nearest periodic image
        delta = (coords - np.asarray(center) + spec.n_per_side / 2.0) % spec.n_per_side
        delta -= spec.n_per_side / 2.0
        dist2 = float(np.sum((a * delta) ** 2))
        f[x * spec.spin_dim] = np.exp(-dist2 / (2.0 * width ** 2) + 1j * momentum * a * delta[0])
    pos = sysm.eigenvectors[:, sysm.pos_modes]
    f = pos @ (pos.conj().T @ f)
    nrm = np.linalg.norm(f)
    if nrm < 1e-12:
        raise ValidationError("packet has no overlap with the positive spectral half")
    amps = _field_array(space, f / nrm, True, sea_state(space).amplitudes)
    return StateVector(space, amps, label="packet").normalize()


@dataclass(frozen=True)
class SlaterState:
    """Ordered orthonormal mode vectors defining a filled-modes state."""

    mode_vectors: np.ndarray  # (n_modes, k), columns are the filled vectors

    def __post_init__(self):
        v = self.mode_vectors
        gram = v.conj().T @ v
        if not np.allclose(gram, np.eye(v.shape[1]), atol=NORM_TOL * 10):
            raise NotOrthonormal("mode vectors are not orthonormal")


def slater_amplitudes(space: FockSpace, slater: SlaterState) -> StateVector:
    """Amplitudes of the filled-modes state by determinant expansion.

    The amplitude on a string with occupied modes i_1 < ... < i_k is the
    determinant of the rows (i_1..i_k) of the mode-vector matrix; this is
    the same state produced by applying the creation operators of the
    columns left to right.  Independent of the operator route by
    construction, which makes it the cross-check for sea_state.
    """
    v = np.asarray(slater.mode_vectors, dtype=complex)
    if v.shape[0] != space.n_modes:
        raise DimensionMismatch("mode vectors do not match the mode count")
    k = v.shape[1]
    if k > space.n_modes:
        raise DimensionMismatch("more filled vectors than modes")
    amps = space.zeros()
    strings = np.flatnonzero(space.popcounts == k)
    chunk = 16384
    for lo in range(0, len(strings), chunk):
        batch = strings[lo:lo + chunk]
        subs = np.empty((len(batch), k, k), dtype=complex)
        for row, b in enumerate(batch):
            occ = [m for m in range(space.n_modes) if (int(b) >> m) & 1]
            subs[row] = v[occ, :]
        amps[batch] = np.linalg.det(subs)
    return StateVector(space, amps, label="slater").normalize()


# ---------------------------------------------------------------------------
# Fock lift of a one-particle unitary (basis change)
# ---------------------------------------------------------------------------

class FockBasisChange:
    """Lift of a one-particle unitary u to the Fock space.

    forward() maps amplitudes given in the u-mode occupation basis to the
    position-mode basis (the lift maps the filled-subset state of u-columns
    to the corresponding product of created column vectors).  backward()
    is the exact inverse.  Implemented as a chain of adjacent two-mode
    rotations (no reordering signs) and one diagonal phase layer.
    """

    def __init__(self, space: FockSpace, u: np.ndarray):
        u = np.asarray(u, dtype=complex)
        if u.shape != (space.n_modes, space.n_modes):
            raise DimensionMismatch("unitary does not match the mode count")
        if not np.allclose(u.conj().T @ u, np.eye(space.n_modes), atol=1e-10):
            raise NotOrthonormal("basis-change matrix is not unitary")
        self.space = space
        self.rotations, self.phases = self._decompose(u.copy())

    @staticmethod
    def _decompose(u):
        m = u.shape[0]
        rotations = []  # (p, 2x2 g) with (g @ rows) applied during reduction
        for j in range(m):
            for i in range(m - 1, j, -1):
                b = u[i, j]
                if abs(b) < 1e-15:
                    continue
                a = u[i - 1, j]
                r = np.hypot(abs(a), abs(b))
                g = np.array([[np.conj(a) / r, np.conj(b) / r], [-b / r, a / r]], dtype=complex)
                u[i - 1:i + 1, :] = g @ u[i - 1:i + 1, :]
                rotations.append((i - 1, g))
        phases = np.diag(u).copy()
        if np.max(np.abs(u - np.diag(phases))) > 1e-9 or np.max(np.abs(np.abs(phases) - 1)) > 1e-9:
            raise NotOrthonormal("Givens reduction did not terminate on a unitary diagonal")
        return rotations, phases

    def _apply_pair(self, amps, p, g):
        # lift of a 2-mode unitary acting on adjacent modes (p, p+1)
        idx = self.space.indices
        one = np.uint64(1)
        bp = (idx >> np.uint64(p)) & one
        bq = (idx >> np.uint64(p + 1)) & one
        only_p = np.flatnonzero((bp == 1) & (bq == 0))
        partner = (idx[only_p] | np.uint64(1 << (p + 1))) & ~np.uint64(1 << p)
        partner = partner.astype(np.int64)
        ap = amps[only_p]
        aq = amps[partner]
        amps[only_p] = g[0, 0] * ap + g[0, 1] * aq
        amps[partner] = g[1, 0] * ap + g[1, 1] * aq
        both = (bp == 1) & (bq == 1)
        amps[both] *= np.linalg.det(g)
        return amps

    def _apply_phases(self, amps, phases):
        idx = self.space.indices
        one = np.uint64(1)
        for mode, ph in enumerate(phases):
            if abs(ph - 1.0) > 1e-15:
                amps[((idx >> np.uint64(mode)) & one) == 1] *= ph
        return amps

    def forward(self, amps: np.ndarray) -> np.ndarray:
        out = amps.astype(complex).copy()
        out = self._apply_phases(out, self.phases)
        for p, g in reversed(self.rotations):
            out = self._apply_pair(out, p, g.conj().T)
        return out

    def backward(self, amps: np.ndarray) -> np.ndarray:
        out = amps.astype(complex).copy()
        for p, g in self.rotations:
            out = self._apply_pair(out, p, g)
        return self._apply_phases(out, np.conj(self.phases))


# ---------------------------------------------------------------------------
# state import/export
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4I")


def save_state_binary(psi: StateVector, path):
    """Little-endian complex doubles prefixed by (dim, n_per_side, spin_dim, mode-order version)."""
    from . import MODE_ORDER_VERSION

    spec = psi.space.spec
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(spec.dim, spec.n_per_side, spec.spin_dim, MODE_ORDER_VERSION))
        fh.write(psi.amplitudes.astype("<c16").tobytes())


def load_state_binary(space: FockSpace, path) -> StateVector:
    from . import MODE_ORDER_VERSION

    spec = space.spec
    with open(path, "rb") as fh:
        dim, n, d, ver = _HEADER.unpack(fh.read(_HEADER.size))
        if (dim, n, d) != (spec.dim, spec.n_per_side, spec.spin_dim):
            raise ValidationError(f"state file geometry ({dim},{n},{d}) does not match the space")
        if ver != MODE_ORDER_VERSION:
            raise ValidationError(f"state file mode-order version {ver} unsupported")
        amps = np.frombuffer(fh.read(), dtype="<c16").astype(complex)
    if amps.shape != (space.dim,):
        raise DimensionMismatch("state file truncated")
    return StateVector(space, amps, label=str(path))


def save_state_csv(psi: StateVector, path, threshold: float = 0.0):
    """Rows (string_hex, re, im); intended for small spaces."""
    with open(path, "w") as fh:
        fh.write("string_hex,re,im\n")
        for b in range(psi.space.dim):
            a = psi.amplitudes[b]
            if abs(a) > threshold:
                fh.write(f"{b:x},{a.real:.17g},{a.imag:.17g}\n")
