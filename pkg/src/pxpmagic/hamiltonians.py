"""Constrained-basis and full-space Hamiltonians of the blockaded chain:
the kinetically constrained flip model, its frustration-free deformation,
the Rydberg chain with truncated power-law interactions, the three-site
parent projector of the variational ansatz, and exact diagonalization
with reflection-parity resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ConstrainedBasis",
    "SparseHamiltonian",
    "RydbergParams",
    "ParentProjector",
    "EDResult",
    "fib_basis",
    "z2_bitstring",
    "build_pxp",
    "build_h0",
    "build_rydberg",
    "parent_projector",
    "reflect_bits",
    "parity_projectors",
    "ed",
    "h0_trajectory_params",
    "QUOTED_TRAJECTORY_POINT",
    "spectrum_to_csv",
]

ED_DENSE_CAP = 4000

# Reference point quoted for the maximum of the ground-state trajectory
# (recorded separately from the z-parametrization, which gives a delta
# value twice as large at z = 2; scans locate the maximum numerically).
QUOTED_TRAJECTORY_POINT = {"omega": 0.0156, "delta": -0.0429, "z": 2.0, "v": 1.0}


@dataclass(frozen=True)
class ConstrainedBasis:
    """Sorted enumeration of bitstrings with no adjacent excitations.

    Site 0 is the most significant bit; for periodic chains the first and
    last sites also may not both be excited.  The dimension follows the
    Fibonacci (open) / Lucas (periodic) sequence.
    """

    n_sites: int
    bc: str
    states: np.ndarray
    index: dict

    @property
    def dim(self):
        return len(self.states)

    def embed(self, amplitudes):
        """Constrained-basis amplitudes -> full 2^N vector."""
        full = np.zeros(2 ** self.n_sites, dtype=complex)
        full[self.states] = amplitudes
        return full

    def project(self, full):
        return np.asarray(full)[self.states]


def fib_basis(n_sites, bc="open"):
    """All blockade-respecting bitstrings of a chain, sorted ascending."""
    if n_sites < 2:
        raise ValueError("need at least two sites")
    if bc not in ("open", "periodic"):
        raise ValueError("bc must be 'open' or 'periodic'")
    states = []
    wrap_mask = (1 << (n_sites - 1)) | 1
    for s in range(2 ** n_sites):
        if s & (s >> 1):
            continue
        if bc == "periodic" and (s & wrap_mask) == wrap_mask:
            continue
        states.append(s)
    arr = np.array(states, dtype=np.int64)
    return ConstrainedBasis(n_sites=n_sites, bc=bc, states=arr,
                            index={int(s): i for i, s in enumerate(arr)})


def z2_bitstring(n_sites, offset=0):
    """The Neel bitstring with excitations on the (0-indexed) even sites
    when offset = 0; site 0 is the most significant bit."""
    s = 0
    for j in range(offset, n_sites, 2):
        s |= 1 << (n_sites - 1 - j)
    return s


@dataclass
class SparseHamiltonian:
    """Hermitian sparse matrix together with the basis it acts in.

    `basis` is None for full-space Hamiltonians; `symmetry` carries an
    optional parity-sector tag set by `ed`.
    """

    matrix: sp.csr_matrix
    n_sites: int
    basis: ConstrainedBasis | None = None
    label: str = ""
    symmetry: str | None = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix.toarray()


def _bit(s, j, n):
    return (s >> (n - 1 - j)) & 1


def _neighbors_down(s, j, n, bc):
    """Both neighbours of site j unexcited (edge projectors absorbed)."""
    if bc == "open":
        left = 0 if j == 0 else _bit(s, j - 1, n)
        right = 0 if j == n - 1 else _bit(s, j + 1, n)
    else:
        left = _bit(s, (j - 1) % n, n)
        right = _bit(s, (j + 1) % n, n)
    return left == 0 and right == 0


def build_pxp(basis, omega=1.0):
    """Constrained flip chain: (omega/2) sum_j P sigma^x_j P."""
    n = basis.n_sites
    rows, cols, vals = [], [], []
    for i, s in enumerate(basis.states):
        s = int(s)
        for j in range(n):
            if not _neighbors_down(s, j, n, basis.bc):
                continue
            t = s ^ (1 << (n - 1 - j))
            k = basis.index.get(t)
            if k is not None:
                rows.append(k)
                cols.append(i)
                vals.append(omega / 2.0)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))
    return SparseHamiltonian(matrix=m, n_sites=n, basis=basis, label="pxp")


def build_h0(basis, z):
    """Frustration-free deformation sum_j P(sigma^y_j + z P_j + n_j/z)P.

    Positive semidefinite with exact ground energy zero; the ground state
    is the uniform-angle coherent ansatz with z = sin(theta/2)/cos^2(theta/2).
    """
    if z <= 0:
        raise ValueError("z must be positive")
    n = basis.n_sites
    rows, cols, vals = [], [], []
    for i, s in enumerate(basis.states):
        s = int(s)
        diag = 0.0
        for j in range(n):
            if not _neighbors_down(s, j, n, basis.bc):
                continue
            bj = _bit(s, j, n)
            diag += z if bj == 0 else 1.0 / z
            t = s ^ (1 << (n - 1 - j))
            k = basis.index.get(t)
            if k is not None:
                rows.append(k)
                cols.append(i)
                vals.append(1j if bj == 0 else -1j)
        rows.append(i)
        cols.append(i)
        vals.append(diag)
    m = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)),
                      shape=(basis.dim, basis.dim))
    return SparseHamiltonian(matrix=m, n_sites=n, basis=basis, label="h0")


@dataclass(frozen=True)
class RydbergParams:
    """Couplings of the full-space Rydberg chain.

    Interactions decay as 1/r^alpha and are dropped beyond
    `range_cutoff` lattice spacings.
    """

    omega: float
    delta: float
    v: float = 1.0
    alpha: int = 6
    range_cutoff: int = 2

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("interaction strength must be non-negative")
        if self.range_cutoff < 1:
            raise ValueError("range_cutoff must be at least 1")


def build_rydberg(n_sites, params):
    """Full 2^N Rydberg Hamiltonian (the blockade is energetic here):
    (omega/2) sum sigma^y + delta sum n + v sum_{r<=cutoff} n n / r^alpha."""
    if n_sites > 16:
        raise ValueError("full-space construction capped at 16 sites")
    dim = 2 ** n_sites
    s = np.arange(dim)
    occ = (s[:, None] >> (n_sites - 1 - np.arange(n_sites))) & 1  # (dim, n)
    diag = params.delta * occ.sum(axis=1).astype(float)
    for r in range(1, params.range_cutoff + 1):
        coupling = params.v / float(r) ** params.alpha
        for j in range(n_sites - r):
            diag += coupling * (occ[:, j] * occ[:, j + r])
    rows, cols, vals = [], [], []
    for j in range(n_sites):
        bit = 1 << (n_sites - 1 - j)
        t = s ^ bit
        amp = np.where((s & bit) == 0, 1j, -1j) * (params.omega / 2.0)
        rows.append(t)
        cols.append(s)
        vals.append(amp)
    rows = np.concatenate(rows + [s])
    cols = np.concatenate(cols + [s])
    vals = np.concatenate(vals + [diag.astype(complex)])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    return SparseHamiltonian(matrix=m, n_sites=n_sites, basis=None, label="rydberg")


# ---------------------------------------------------------------------------
# parent projector

BLOCKADED_3SITE = (0b000, 0b001, 0b010, 0b100, 0b101)


@dataclass(frozen=True)
class ParentProjector:
    """Rank-1 three-site projector annihilating the uniform ansatz."""

    theta: float
    phi: float
    z: float
    matrix: np.ndarray  # 8x8, embedded from the blockaded 5-state block

    def block(self):
        """The 5x5 block in the blockaded basis {000, 001, 010, 100, 101}."""
        sel = list(BLOCKADED_3SITE)
        return self.matrix[np.ix_(sel, sel)]


def parent_projector(theta, phi=0.0):
    """|phi><phi| with |phi> the null vector of the three-site reduced state.

    |phi> = (-i z e^{-i phi}, 0, 1, 0, 0) / sqrt(1 + z^2) in the blockaded
    basis, z = sin(theta/2)/cos^2(theta/2).  The sign conventions are
    fixed by requiring annihilation of the coherent ansatz; at phi = 0
    the projector equals the frustration-free three-site term times
    z / (1 + z^2).
    """
    if not 0.0 < theta < np.pi:
        raise ValueError("theta must lie strictly between 0 and pi")
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    z = s / c ** 2
    null = np.zeros(5, dtype=complex)
    null[0] = -1j * z * np.exp(-1j * phi)
    null[2] = 1.0
    null /= np.sqrt(1.0 + z ** 2)
    block = np.outer(null, null.conj())
    mat = np.zeros((8, 8), dtype=complex)
    mat[np.ix_(BLOCKADED_3SITE, BLOCKADED_3SITE)] = block
    return ParentProjector(theta=float(theta), phi=float(phi), z=float(z), matrix=mat)


def parent_hamiltonian_sum(theta, phi, n_sites):
    """sum_j P_j over the interior sites of an open chain, as a dense matrix."""
    proj = parent_projector(theta, phi).matrix
    dim = 2 ** n_sites
    total = np.zeros((dim, dim), dtype=complex)
    for j in range(1, n_sites - 1):
        left = np.eye(2 ** (j - 1))
        right = np.eye(2 ** (n_sites - j - 2))
        total += np.kron(np.kron(left, proj), right)
    return total


# ---------------------------------------------------------------------------
# exact diagonalization with reflection parity


def reflect_bits(s, n):
    """Spatial reflection of an n-bit configuration."""
    r = 0
    for _ in range(n):
        r = (r << 1) | (s & 1)
        s >>= 1
    return r


def parity_projectors(basis):
    """Orthonormal symmetric / antisymmetric combinations under reflection.

    Returns (p_plus, p_minus) with columns spanning the two sectors of
    the constrained space.
    """
    n = basis.n_sites
    plus_cols, minus_cols = [], []
    for i, s in enumerate(basis.states):
        s = int(s)
        r = reflect_bits(s, n)
        if r == s:
            col = np.zeros(basis.dim)
            col[i] = 1.0
            plus_cols.append(col)
        elif s < r:
            k = basis.index[r]
            col = np.zeros(basis.dim)
            col[i] = col[k] = 1.0 / np.sqrt(2.0)
            plus_cols.append(col)
            col = np.zeros(basis.dim)
            col[i] = 1.0 / np.sqrt(2.0)
            col[k] = -1.0 / np.sqrt(2.0)
            minus_cols.append(col)
    p_plus = np.column_stack(plus_cols) if plus_cols else np.zeros((basis.dim, 0))
    p_minus = np.column_stack(minus_cols) if minus_cols else np.zeros((basis.dim, 0))
    return p_plus, p_minus


@dataclass
class EDResult:
    values: np.ndarray
    vectors: np.ndarray  # columns, expressed in the Hamiltonian's basis
    sector: str | None = None
    diagnostics: dict = field(default_factory=dict)


def ed(h, sector=None, degeneracy_tol=1e-10):
    """Full dense spectrum, optionally restricted to a reflection-parity sector.

    Eigenvectors are embedded back into the basis `h` acts in.  Nearly
    degenerate eigenvalues are counted in the diagnostics: eigenvectors
    inside such blocks are solver-basis dependent and any per-state
    quantity evaluated on them should be treated with care.
    """
    if h.dim > ED_DENSE_CAP:
        raise ValueError(f"dense diagonalization capped at {ED_DENSE_CAP} states")
    if sector is None:
        vals, vecs = np.linalg.eigh(h.dense())
    else:
        if sector not in (+1, -1):
            raise ValueError("sector must be +1 or -1")
        if h.basis is None:
            raise ValueError("parity sectors need a ConstrainedBasis")
        p_plus, p_minus = parity_projectors(h.basis)
        p = p_plus if sector == +1 else p_minus
        hs = p.conj().T @ h.dense() @ p
        vals, small = np.linalg.eigh(hs)
        vecs = p @ small
    gaps = np.diff(vals)
    n_deg = int(np.count_nonzero(gaps < degeneracy_tol))
    return EDResult(
        values=vals,
        vectors=vecs,
        sector={+1: "P=+1", -1: "P=-1", None: None}[sector],
        diagnostics={"near_degenerate_pairs": n_deg, "degeneracy_tol": degeneracy_tol},
    )


# ---------------------------------------------------------------------------
# ground-state trajectory parametrization


def h0_trajectory_params(z, v=1.0, alpha=6):
    """(omega, delta) of the Rydberg chain along the frustration-free
    trajectory: omega = 2V/(2^alpha z), delta = -(2V/2^alpha)(3 - 1/z^2)."""
    if z <= 0:
        raise ValueError("z must be positive")
    scale = 2.0 * v / 2 ** alpha
    return scale / z, -scale * (3.0 - 1.0 / z ** 2)


def spectrum_to_csv(records, path):
    """Write per-eigenstate records to CSV.

    Each record is a mapping with keys index, energy, parity, overlap_z2,
    m2, m2_stderr (missing entries are written as empty fields).
    """
    cols = ("index", "energy", "parity", "overlap_z2", "m2", "m2_stderr")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in records:
            row = []
            for c in cols:
                val = rec.get(c)
                if val is None:
                    row.append("")
                elif isinstance(val, float):
                    row.append(f"{val:.12g}")
                else:
                    row.append(str(val))
            fh.write(",".join(row) + "\n")
