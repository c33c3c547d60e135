"""Finite periodic lattice and the one-particle Dirac operator.

The derivative is discretized with the symmetric difference
(psi(x + a e_j) - psi(x - a e_j)) / (2a), which keeps the operator
Hermitian; the resulting doubler modes are left in place.  Charge
conjugation is found as an anti-unitary intertwiner C with
C h1 C^-1 = -h1, from a fixed candidate list, and verified numerically.
"""

from dataclasses import dataclass, replace
import itertools

import numpy as np

from .errors import (
    ValidationError,
    NonHermitian,
    ZeroMode,
    ConjugationMismatch,
    DegeneracyResolutionFailed,
)

_SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITICITY_TOL = 1e-12
ZERO_MODE_TOL = 1e-9
CONJUGATION_TOL = 1e-10
RESIDUAL_TOL = 1e-11
DEGENERACY_TOL = 1e-9


def dirac_matrices(dim, spin_dim):
    """Anticommuting (alpha_1..alpha_dim, beta) for the requested spin dimension."""
    if spin_dim == 2:
        if dim > 2:
            raise ValidationError("spin_dim=2 supports dim <= 2 (no third anticommuting matrix)")
        return [_SIGMA1, _SIGMA2][:dim], _SIGMA3
    zero = np.zeros((2, 2), dtype=complex)
    alphas = [np.block([[zero, s], [s, zero]]) for s in (_SIGMA1, _SIGMA2, _SIGMA3)]
    beta = np.block([[np.eye(2), zero], [zero, -np.eye(2)]])
    return alphas[:dim], beta.astype(complex)


def _conjugation_candidates(dim, spin_dim):
    if spin_dim == 2:
        return [("sigma1", _SIGMA1), ("sigma2", _SIGMA2), ("sigma3", _SIGMA3)]
    alphas, beta = dirac_matrices(3, 4)
    return [
        ("beta*alpha2", beta @ alphas[1]),
        ("alpha2", alphas[1]),
        ("beta*alpha1", beta @ alphas[0]),
        ("alpha1", alphas[0]),
        ("beta*alpha3", beta @ alphas[2]),
        ("alpha3", alphas[2]),
    ]


@dataclass(frozen=True)
class LatticeSpec:
    """Model definition: geometry, mass, spinor size.

    Sites are indexed lexicographically by integer coordinates; mode i of
    the one-particle space is (site i // spin_dim, spin i % spin_dim).
    """

    dim: int
    n_per_side: int
    box_length: float
    mass: float
    spin_dim: int = 2

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2, or 3, got {self.dim}")
        if self.n_per_side < 2:
            raise ValidationError(f"n_per_side must be >= 2, got {self.n_per_side}")
        if not self.box_length > 0:
            raise ValidationError(f"box_length must be positive, got {self.box_length}")
        if not self.mass > 0:
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if self.spin_dim not in (2, 4):
            raise ValidationError(f"spin_dim must be 2 or 4, got {self.spin_dim}")
        if self.spin_dim == 2 and self.dim > 2:
            raise ValidationError("spin_dim=2 requires dim <= 2")

    @property
    def sites(self):
        return self.n_per_side ** self.dim

    @property
    def spacing(self):
        return self.box_length / self.n_per_side

    @property
    def n_modes(self):
        return self.spin_dim * self.sites

    def site_coords(self, site):
        """Integer coordinates of a site index (lexicographic)."""
        c = []
        for _ in range(self.dim):
            c.append(site % self.n_per_side)
            site //= self.n_per_side
        return tuple(reversed(c))

    def site_index(self, coords):
        idx = 0
        for c in coords:
            idx = idx * self.n_per_side + (c % self.n_per_side)
        return idx

    def neighbor(self, site, axis, step):
        """Site shifted by `step` along `axis`, with periodic wrap."""
        c = list(self.site_coords(site))
        c[axis] = (c[axis] + step) % self.n_per_side
        return self.site_index(c)

    def to_config(self):
        return {
            "dim": self.dim,
            "n_per_side": self.n_per_side,
            "box_length": self.box_length,
            "mass": self.mass,
            "spin_dim": self.spin_dim,
        }

    @classmethod
    def from_config(cls, cfg):
        try:
            return cls(
                dim=int(cfg["dim"]),
                n_per_side=int(cfg["n_per_side"]),
                box_length=float(cfg["box_length"]),
                mass=float(cfg["mass"]),
                spin_dim=int(cfg["spin_dim"]),
            )
        except KeyError as exc:
            raise ValidationError(f"missing lattice config key: {exc}") from exc


@dataclass(frozen=True)
class OneParticleSystem:
    """One-particle operator with its spectral split and charge conjugation.

    `eigenvectors` holds eigenvectors as columns, energies ascending.
    `conjugation` is the unitary part U of the anti-unitary C: C f = U conj(f).
    After momentum labeling, `momentum_index` and `spin_branch` identify
    each eigenvector; both are None on a freshly built system.
    """

    spec: LatticeSpec
    h1: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    neg_modes: np.ndarray
    pos_modes: np.ndarray
    conjugation: np.ndarray
    conjugation_name: str
    conjugation_sign: int
    momentum_index: np.ndarray | None = None
    spin_branch: np.ndarray | None = None

    @property
    def labeled(self):
        return self.momentum_index is not None

    def projector_negative(self):
        v = self.eigenvectors[:, self.neg_modes]
        return v @ v.conj().T

    def projector_positive(self):
        v = self.eigenvectors[:, self.pos_modes]
        return v @ v.conj().T

    def apply_conjugation(self, f):
        return self.conjugation @ np.conj(f)


def assemble_h1(spec: LatticeSpec) -> np.ndarray:
    """Dense one-particle matrix: -i alpha . grad_sym + m beta, periodic."""
    alphas, beta = dirac_matrices(spec.dim, spec.spin_dim)
    d = spec.spin_dim
    a = spec.spacing
    n = spec.n_modes
    h = np.zeros((n, n), dtype=complex)
    for x in range(spec.sites):
        h[x * d:(x + 1) * d, x * d:(x + 1) * d] += spec.mass * beta
        for j in range(spec.dim):
            xp = spec.neighbor(x, j, +1)
            xm = spec.neighbor(x, j, -1)
            hop = alphas[j] / (2.0 * a)
            h[x * d:(x + 1) * d, xp * d:(xp + 1) * d] += -1j * hop
            h[x * d:(x + 1) * d, xm * d:(xm + 1) * d] += +1j * hop
    return h


def shift_operator(spec: LatticeSpec, axis: int) -> np.ndarray:
    """Unitary one-site translation along `axis` (acts trivially on spin)."""
    n = spec.n_modes
    d = spec.spin_dim
    s = np.zeros((n, n), dtype=complex)
    for x in range(spec.sites):
        xp = spec.neighbor(x, axis, +1)
        for sp in range(d):
            s[xp * d + sp, x * d + sp] = 1.0
    return s


def _find_conjugation(spec, h1):
    scale = np.linalg.norm(h1)
    for name, small in _conjugation_candidates(spec.dim, spec.spin_dim):
        u = np.kron(np.eye(spec.sites), small)
        if np.linalg.norm(u @ h1.conj() @ u.conj().T + h1) <= CONJUGATION_TOL * scale:
            uu = u @ u.conj()
            if np.allclose(uu, np.eye(spec.n_modes), atol=1e-12):
                sign = 1
            elif np.allclose(uu, -np.eye(spec.n_modes), atol=1e-12):
                sign = -1
            else:
                continue
            return name, u, sign
    raise ConjugationMismatch(
        f"no candidate anti-unitary intertwines h1 with -h1 for dim={spec.dim}, d={spec.spin_dim}"
    )


def build_one_particle(spec: LatticeSpec) -> OneParticleSystem:
    """Assemble, diagonalize, split, and attach the verified conjugation.

    Raises NonHermitian on an assembly defect, ZeroMode if the spectrum
    touches zero (the split would be ambiguous), ConjugationMismatch if no
    verified intertwiner exists or the split halves are unequal.
    """
    h1 = assemble_h1(spec)
    scale = np.linalg.norm(h1)
    if np.linalg.norm(h1 - h1.conj().T) > HERMITICITY_TOL * scale:
        raise NonHermitian("assembled h1 is not Hermitian")
    eigenvalues, eigenvectors = np.linalg.eigh(h1)
    _check_gap(eigenvalues, spec.mass)
    neg = np.flatnonzero(eigenvalues < 0)
    pos = np.flatnonzero(eigenvalues > 0)
    name, u, sign = _find_conjugation(spec, h1)
    if len(neg) != len(pos):
        raise ConjugationMismatch(
            f"unequal spectral split: {len(neg)} negative vs {len(pos)} positive modes"
        )
    sys = OneParticleSystem(
        spec=spec,
        h1=h1,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        neg_modes=neg,
        pos_modes=pos,
        conjugation=u,
        conjugation_name=name,
        conjugation_sign=sign,
    )
    # C must map the negative span onto the positive span
    pneg = sys.projector_negative()
    cneg = u @ eigenvectors[:, neg].conj()
    if np.linalg.norm(pneg @ cneg) > 1e-8:
        raise ConjugationMismatch("conjugation does not map the negative span to the positive span")
    return sys


def _check_gap(eigenvalues, mass):
    if np.min(np.abs(eigenvalues)) < ZERO_MODE_TOL:
        raise ZeroMode("one-particle spectrum touches zero; split is ambiguous")
    if np.min(np.abs(eigenvalues)) < mass - ZERO_MODE_TOL:
        raise ZeroMode(f"gap smaller than the mass: min |E| = {np.min(np.abs(eigenvalues))}")


def _canonical_block_basis(subspace):
    """Deterministic orthonormal basis of a degenerate Bloch eigenspace.

    Gram-Schmidt of the standard basis projected onto the subspace, in
    index order, followed by a phase fix (largest-magnitude component made
    real positive, lowest index winning ties).
    """
    d = subspace.shape[0]
    proj = subspace @ subspace.conj().T
    out = []
    for i in range(d):
        v = proj[:, i].copy()
        for w in out:
            v -= w * (w.conj() @ v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-7:
            out.append(v / nrm)
        if len(out) == subspace.shape[1]:
            break
    if len(out) != subspace.shape[1]:
        raise DegeneracyResolutionFailed("could not canonicalize a degenerate Bloch block")
    return [_fix_phase(v) for v in out]


def _fix_phase(v):
    mags = np.abs(v)
    top = np.max(mags)
    pivot = int(np.flatnonzero(mags >= top * (1 - 1e-9))[0])
    phase = v[pivot] / abs(v[pivot])
    return v * np.conj(phase)


def bloch_hamiltonian(spec: LatticeSpec, n_vec) -> np.ndarray:
    """spin_dim x spin_dim Bloch block at integer momentum vector n_vec."""
    alphas, beta = dirac_matrices(spec.dim, spec.spin_dim)
    a = spec.spacing
    h = spec.mass * beta.copy()
    for j in range(spec.dim):
        h = h + alphas[j] * (np.sin(2.0 * np.pi * n_vec[j] / spec.n_per_side) / a)
    return h


def momentum_eigenbasis(sys: OneParticleSystem) -> OneParticleSystem:
    """Relabel the eigenbasis so every eigenvector lives on one momentum.

    The basis is rebuilt from the Bloch blocks (plane wave times spinor),
    ordered by (energy ascending, momentum index lexicographic, spin
    branch) with a frozen phase convention, so the output depends only on
    the spec.  Applying the operation twice gives an identical system.
    Raises DegeneracyResolutionFailed if the supplied h1 is not diagonal
    in this basis (i.e. not translation invariant).
    """
    spec = sys.spec
    d = spec.spin_dim
    n = spec.n_per_side
    energies = []
    nflats = []
    branches = []
    columns = []
    for n_vec in itertools.product(range(n), repeat=spec.dim):
        n_flat = spec.site_index(n_vec)
        hk = bloch_hamiltonian(spec, n_vec)
        ek, uk = np.linalg.eigh(hk)
        # phase through the lattice: exp(i k . x) with k_j a = 2 pi n_j / N
        phases = np.empty(spec.sites, dtype=complex)
        for x in range(spec.sites):
            cx = spec.site_coords(x)
            phases[x] = np.exp(2j * np.pi * sum(nj * cj for nj, cj in zip(n_vec, cx)) / n)
        phases /= np.sqrt(spec.sites)
        start = 0
        while start < d:
            stop = start + 1
            while stop < d and abs(ek[stop] - ek[start]) <= DEGENERACY_TOL * max(1.0, abs(ek[start])):
                stop += 1
            spinors = _canonical_block_basis(uk[:, start:stop])
            for b, u in enumerate(spinors):
                energies.append(float(np.mean(ek[start:stop])))
                nflats.append(n_flat)
                branches.append(b)
                columns.append(np.kron(phases, u))
            start = stop
    energies = np.array(energies)
    nflats = np.array(nflats)
    branches = np.array(branches)
    vecs = np.array(columns).T
    order = _energy_group_order(energies, nflats, branches)
    energies, nflats, branches = energies[order], nflats[order], branches[order]
    vecs = vecs[:, order]
    # exact eigenvalues from the operator, and the diagonalization residual
    rayleigh = np.real(np.einsum("ij,ij->j", vecs.conj(), sys.h1 @ vecs))
    residual = np.linalg.norm(sys.h1 @ vecs - vecs * rayleigh)
    if residual > RESIDUAL_TOL * max(1.0, np.linalg.norm(sys.h1)):
        raise DegeneracyResolutionFailed(
            f"momentum basis does not diagonalize h1 (residual {residual:.2e}); "
            "operator is not translation invariant"
        )
    _check_gap(rayleigh, spec.mass)
    return replace(
        sys,
        eigenvalues=rayleigh,
        eigenvectors=vecs,
        neg_modes=np.flatnonzero(rayleigh < 0),
        pos_modes=np.flatnonzero(rayleigh > 0),
        momentum_index=nflats,
        spin_branch=branches,
    )


def _energy_group_order(energies, nflats, branches):
    """Stable order: energy ascending (grouped to tolerance), then momentum, then branch."""
    rough = np.argsort(energies, kind="stable")
    group = np.empty(len(energies), dtype=np.int64)
    gid = 0
    prev = None
    for r in rough:
        if prev is not None and energies[r] - prev > DEGENERACY_TOL * max(1.0, abs(prev)):
            gid += 1
        group[r] = gid
        prev = energies[r]
    return np.lexsort((branches, nflats, group))


def signal_speed(spec: LatticeSpec, samples: int = 4001) -> float:
    """Maximal group velocity of the dispersion, measured on a fine k grid."""
    a = spec.spacing
    m = spec.mass
    if spec.dim == 1:
        k = np.linspace(0, 2 * np.pi / a, samples)
        e = np.sqrt(m ** 2 + np.sin(k * a) ** 2 / a ** 2)
        return float(np.max(np.abs(np.gradient(e, k))))
    per_axis = max(31, int(round(samples ** (1.0 / spec.dim))))
    k = np.linspace(0, 2 * np.pi / a, per_axis)
    grids = np.meshgrid(*([k] * spec.dim), indexing="ij")
    e = np.sqrt(m ** 2 + sum(np.sin(g * a) ** 2 for g in grids) / a ** 2)
    total = np.zeros_like(e)
    for axis in range(spec.dim):
        total += np.gradient(e, k, axis=axis) ** 2
    return float(np.max(np.sqrt(total)))


def eigen_csv_rows(sys: OneParticleSystem):
    """Rows (index, energy, momentum_index, spin_branch) for export."""
    if not sys.labeled:
        sys = momentum_eigenbasis(sys)
    for i in range(len(sys.eigenvalues)):
        yield i, sys.eigenvalues[i], int(sys.momentum_index[i]), int(sys.spin_branch[i])
