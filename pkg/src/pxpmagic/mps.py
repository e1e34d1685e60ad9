"""Matrix product states for the blockaded chain.

Contains the chi=2 variational ansatz of the constrained chain, its
transfer matrix and fixed points, small reduced density matrices, the
two exact E=0 scar states and the volume-law rainbow state.

Site tensors are arrays of shape ``(d=2, chi_left, chi_right)``.  Finite
contractions index site 0 as the leftmost site and the most significant
bit of a computational-basis label, and site 0 carries the odd-sublattice
angle of the two-site unit cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnitCellMPS",
    "FiniteMPS",
    "TransferFixedPoints",
    "DegenerateTransferError",
    "pxp_site_tensor",
    "pxp_ansatz",
    "pxp_ansatz_single",
    "h0_angle",
    "h0_ground_state",
    "site_transfer",
    "transfer_matrix",
    "fixed_points",
    "rdm",
    "scar_mps_pair",
    "rainbow_state",
    "mps_to_statevector",
    "mps_to_json",
    "mps_from_json",
]

MAX_DENSE_SITES = 20


class DegenerateTransferError(RuntimeError):
    """Transfer matrix has a (near-)degenerate dominant eigenvalue."""


@dataclass(frozen=True)
class UnitCellMPS:
    """Translation-invariant MPS given by one unit cell of site tensors."""

    tensors: tuple

    def __post_init__(self):
        tens = tuple(np.asarray(t, dtype=complex) for t in self.tensors)
        object.__setattr__(self, "tensors", tens)
        for j, t in enumerate(tens):
            if t.ndim != 3:
                raise ValueError("site tensors must have shape (d, chi_l, chi_r)")
            nxt = tens[(j + 1) % len(tens)]
            if t.shape[2] != nxt.shape[1]:
                raise ValueError("bond dimensions do not chain around the cell")

    @property
    def cell_size(self):
        return len(self.tensors)

    @property
    def d(self):
        return self.tensors[0].shape[0]

    @property
    def chi(self):
        return max(t.shape[1] for t in self.tensors)

    def site(self, j):
        """Tensor at chain site ``j`` (cycled through the cell)."""
        return self.tensors[j % self.cell_size]

    def rotated(self, unitaries):
        """Apply one single-site unitary per cell position to the physical leg."""
        if len(unitaries) != self.cell_size:
            raise ValueError("need one unitary per cell site")
        new = tuple(
            np.einsum("st,tij->sij", np.asarray(u, dtype=complex), t)
            for u, t in zip(unitaries, self.tensors)
        )
        return UnitCellMPS(new)


@dataclass(frozen=True)
class FiniteMPS:
    """Finite chain of site tensors; boundary 'open' or 'periodic'.

    Open chains must have bond dimension 1 on both outer legs.
    """

    tensors: tuple
    boundary: str = "open"

    def __post_init__(self):
        tens = tuple(np.asarray(t, dtype=complex) for t in self.tensors)
        object.__setattr__(self, "tensors", tens)
        if self.boundary not in ("open", "periodic"):
            raise ValueError("boundary must be 'open' or 'periodic'")
        for j in range(len(tens) - 1):
            if tens[j].shape[2] != tens[j + 1].shape[1]:
                raise ValueError("bond dimensions do not chain")
        if self.boundary == "open":
            if tens[0].shape[1] != 1 or tens[-1].shape[2] != 1:
                raise ValueError("open chain needs outer bond dimension 1")
        else:
            if tens[0].shape[1] != tens[-1].shape[2]:
                raise ValueError("periodic chain bond mismatch")

    @property
    def n_sites(self):
        return len(self.tensors)

    @property
    def chi(self):
        return max(t.shape[1] for t in self.tensors)

    def norm_sq(self):
        """<psi|psi> by a transfer-matrix sweep."""
        if self.boundary == "open":
            v = np.array([[1.0 + 0.0j]])
            for t in self.tensors:
                v = np.einsum("ac,sab,scd->bd", v, t, t.conj())
            return float(v[0, 0].real)
        m = None
        for t in self.tensors:
            e = site_transfer(t)
            m = e if m is None else m @ e
        return float(np.trace(m).real)


@dataclass(frozen=True)
class TransferFixedPoints:
    """Dominant eigenvalue and left/right fixed points of a cell transfer matrix.

    Normalized so that ``left @ right == 1`` and the right vector reshaped
    to a chi x chi matrix is Hermitian positive semidefinite.
    """

    lam: float
    left: np.ndarray
    right: np.ndarray

    @property
    def chi(self):
        return int(round(np.sqrt(self.right.size)))

    def right_matrix(self):
        """Right fixed point reshaped to a trace-1 density matrix on the bond."""
        r = self.right.reshape(self.chi, self.chi)
        return r / np.trace(r)


def pxp_site_tensor(theta, phi=0.0):
    """One site of the blockaded coherent-state ansatz, shape (2, 2, 2)."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    a0 = np.array([[c, 0.0], [s, 0.0]], dtype=complex)
    a1 = np.array([[0.0, -1j * np.exp(1j * phi)], [0.0, 0.0]], dtype=complex)
    return np.stack([a0, a1])


def pxp_ansatz(theta_o, theta_e, phi_o=0.0, phi_e=0.0):
    """Two-site unit cell ansatz; site 0 carries the odd-sublattice angle.

    The two-site cell is used even for equal angles: the single-site
    transfer matrix degenerates at theta = pi, the two-site one does not.
    """
    return UnitCellMPS((pxp_site_tensor(theta_o, phi_o), pxp_site_tensor(theta_e, phi_e)))


def pxp_ansatz_single(theta, phi=0.0):
    """Single-site unit cell, as used by the three-site parent construction."""
    return UnitCellMPS((pxp_site_tensor(theta, phi),))


def h0_angle(z):
    """Bloch angle of the exact ground state of the frustration-free chain.

    Solves z = sin(theta/2) / cos^2(theta/2), i.e. the positive root of
    z s^2 + s - z = 0.
    """
    if z <= 0:
        raise ValueError("z must be positive")
    s = (-1.0 + np.sqrt(1.0 + 4.0 * z * z)) / (2.0 * z)
    return 2.0 * np.arcsin(s)


def h0_ground_state(z):
    """Uniform-angle ansatz that the frustration-free chain pins at coupling z."""
    th = h0_angle(z)
    return pxp_ansatz(th, th)


def site_transfer(a):
    """chi^2 x chi^2 transfer matrix sum_s A^s (x) conj(A^s) of one site."""
    a = np.asarray(a)
    e = np.einsum("sij,skl->ikjl", a, a.conj())
    return e.reshape(a.shape[1] ** 2, a.shape[2] ** 2)


def transfer_matrix(mps, offset=0):
    """Transfer matrix of one full unit cell starting at cell position offset."""
    cell = mps.cell_size
    m = None
    for j in range(cell):
        e = site_transfer(mps.site(offset + j))
        m = e if m is None else m @ e
    return m


def fixed_points(mps, offset=0, gap_tol=1e-10):
    """Dominant eigenvalue and normalized fixed points of the cell transfer matrix.

    Raises DegenerateTransferError when the dominant eigenvalue is not
    separated in modulus (non-injective MPS, e.g. the single-site cell at
    theta = pi).
    """
    e = transfer_matrix(mps, offset)
    vals, vecs = np.linalg.eig(e)
    order = np.argsort(-np.abs(vals))
    lam = vals[order[0]]
    if len(vals) > 1 and abs(vals[order[1]]) > (1.0 - gap_tol) * abs(lam):
        raise DegenerateTransferError(
            f"dominant transfer eigenvalue degenerate: |lam0|={abs(lam):.6g}, "
            f"|lam1|={abs(vals[order[1]]):.6g}"
        )
    if abs(lam.imag) > 1e-10 * abs(lam) or lam.real <= 0:
        raise DegenerateTransferError(f"dominant transfer eigenvalue not positive: {lam}")
    right = vecs[:, order[0]]
    valsl, vecsl = np.linalg.eig(e.T)
    left = vecsl[:, np.argmax(np.abs(valsl))]
    chi = int(round(np.sqrt(right.size)))
    # phase-fix the right vector so its chi x chi reshape is Hermitian PSD
    rm = right.reshape(chi, chi)
    tr = np.trace(rm)
    if abs(tr) < 1e-14:
        raise DegenerateTransferError("right fixed point has vanishing trace")
    right = right * (abs(tr) / tr)
    rm = right.reshape(chi, chi)
    if np.abs(rm - rm.conj().T).max() > 1e-9 * np.abs(rm).max():
        raise DegenerateTransferError("right fixed point is not Hermitian")
    if np.trace(rm).real < 0:
        right = -right
    left = left / (left @ right)
    return TransferFixedPoints(float(lam.real), left, right)


def rdm(mps, k, offset=0):
    """Reduced density matrix of k consecutive sites in the infinite chain.

    `offset` selects the cell position of the first site (0 = odd
    sublattice).  The result is Hermitian, trace 1 and PSD up to
    numerical noise; for the blockaded ansatz every matrix element
    touching an adjacent pair of excitations vanishes.
    """
    fp_l = fixed_points(mps, offset)
    fp_r = fixed_points(mps, offset + k)
    left, right = fp_l.left, fp_r.right
    chi_l = int(round(np.sqrt(left.size)))
    env = left.reshape(chi_l, chi_l)
    # grow the open-physical-index environment site by site
    # block[(s...), (t...), a, b] with a (ket) and b (bra) right bond indices
    block = env[None, None, :, :]
    for j in range(k):
        a = mps.site(offset + j)
        block = np.einsum("stab,xac,ybd->sxtycd", block, a, a.conj())
        ds = block.shape[0] * block.shape[1]
        block = block.reshape(ds, ds, a.shape[2], a.shape[2])
    chi_r = int(round(np.sqrt(right.size)))
    rho = np.einsum("stab,ab->st", block, right.reshape(chi_r, chi_r))
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return rho


_SQ2 = np.sqrt(2.0)
_SCAR_B = np.stack(
    [
        np.array([[1, 0, 0], [0, 1, 0]], dtype=complex),
        _SQ2 * np.array([[0, 0, 0], [1, 0, 1]], dtype=complex),
    ]
)
_SCAR_C = np.stack(
    [
        np.array([[0, -1], [1, 0], [0, 0]], dtype=complex),
        _SQ2 * np.array([[1, 0], [0, 0], [-1, 0]], dtype=complex),
    ]
)


def scar_mps_pair(n_sites):
    """The two exact E=0 scarred eigenstates on an even periodic chain.

    Built from the published 2x3 / 3x2 matrices; returned as periodic
    finite MPS whose trace contraction gives the state vector.
    """
    if n_sites % 2 or n_sites < 4:
        raise ValueError("scar states need an even chain of at least 4 sites")
    pair_bc = (_SCAR_B, _SCAR_C) * (n_sites // 2)
    pair_cb = (_SCAR_C, _SCAR_B) * (n_sites // 2)
    return (
        FiniteMPS(pair_bc, boundary="periodic"),
        FiniteMPS(pair_cb, boundary="periodic"),
    )


def scar_unit_cell():
    """The scar pair's two-site unit cell, for thermodynamic-limit magic."""
    return UnitCellMPS((_SCAR_B, _SCAR_C))


def _pbc_blockaded_strings(length):
    out = []
    for s in range(2 ** length):
        if s & (s >> 1):
            continue
        if length > 1 and (s & 1) and (s >> (length - 1)) & 1:
            continue
        out.append(s)
    return out


def rainbow_state(half_length):
    """Volume-law E=0 eigenstate pairing the two halves of a periodic chain.

    Amplitude (-1)^{|f|} / sqrt(|F_L|) on f (x) f for every blockaded
    periodic string f of the half chain; |F_L| is a Lucas number.
    """
    if half_length < 3:
        raise ValueError("half chain must have at least 3 sites")
    strings = _pbc_blockaded_strings(half_length)
    n = 2 * half_length
    vec = np.zeros(2 ** n, dtype=complex)
    for f in strings:
        vec[(f << half_length) | f] = -1.0 if bin(f).count("1") % 2 else 1.0
    return vec / np.sqrt(len(strings))


def _finite_from_unitcell(mps, n_sites, right_boundary="coherent"):
    """Open-chain tensors from a unit cell with pinned boundary vectors.

    The left boundary selects the first bond basis state.  The default
    right boundary (1, sin(theta_last/2)) closes the chain so the
    contraction equals the blockade-projected coherent product on
    n_sites sites; ``"h0"`` uses (1, tan(theta_last/2)) which is the
    exact zero mode of the open frustration-free chain; a vector may be
    passed directly.
    """
    tens = [np.array(mps.site(j)) for j in range(n_sites)]
    chi_l = tens[0].shape[1]
    lb = np.zeros(chi_l)
    lb[0] = 1.0
    if isinstance(right_boundary, str):
        a_last = tens[-1]
        c = a_last[0, 0, 0].real
        s = a_last[0, 1, 0].real
        if right_boundary == "coherent":
            rb = np.array([1.0, s])
        elif right_boundary == "h0":
            if abs(c) < 1e-14:
                rb = np.array([0.0, 1.0])
            else:
                rb = np.array([1.0, s / c])
        else:
            raise ValueError(f"unknown right boundary '{right_boundary}'")
        if a_last.shape[2] != 2:
            raise ValueError("named right boundaries assume chi = 2 tensors")
    else:
        rb = np.asarray(right_boundary, dtype=complex)
    tens[0] = np.einsum("a,sab->sb", lb, tens[0])[:, None, :]
    tens[-1] = np.einsum("sab,b->sa", tens[-1], rb)[:, :, None]
    return FiniteMPS(tuple(tens), boundary="open")


def mps_to_statevector(mps, n_sites=None, right_boundary="coherent", normalize=True,
                       return_norm=False):
    """Exact contraction of a finite or unit-cell MPS to a full state vector.

    Site 0 is the most significant bit of the basis label.  With
    ``return_norm`` the pre-normalization norm is reported alongside.
    """
    if isinstance(mps, UnitCellMPS):
        if n_sites is None:
            raise ValueError("n_sites is required for a unit-cell MPS")
        fin = _finite_from_unitcell(mps, n_sites, right_boundary)
    else:
        fin = mps
        if n_sites is not None and n_sites != fin.n_sites:
            raise ValueError("n_sites does not match the finite MPS")
    n = fin.n_sites
    if n > MAX_DENSE_SITES:
        raise ValueError(f"refusing dense contraction for n_sites={n} > {MAX_DENSE_SITES}")
    chi0 = fin.tensors[0].shape[1]
    block = np.eye(chi0, dtype=complex)[None, :, :]  # (configs, chi_first, chi_right)
    for t in fin.tensors:
        block = np.einsum("xab,sbc->xsac", block, t)
        block = block.reshape(-1, chi0, t.shape[2])
    if fin.boundary == "open":
        vec = block[:, 0, 0].copy()
    else:
        vec = np.trace(block, axis1=1, axis2=2)
    nrm = float(np.linalg.norm(vec))
    if normalize:
        if nrm == 0:
            raise ValueError("MPS contracts to the zero vector")
        vec = vec / nrm
    return (vec, nrm) if return_norm else vec


def mps_to_json(mps):
    """Serialize a unit-cell or finite MPS to a JSON string.

    Tensors are nested lists of [re, im] pairs.
    """
    def enc(t):
        return np.stack([t.real, t.imag], axis=-1).tolist()

    if isinstance(mps, UnitCellMPS):
        doc = {
            "kind": "unit_cell",
            "cell_size": mps.cell_size,
            "chi": mps.chi,
            "tensors": [enc(t) for t in mps.tensors],
        }
    elif isinstance(mps, FiniteMPS):
        doc = {
            "kind": "finite",
            "n_sites": mps.n_sites,
            "chi": mps.chi,
            "boundary": mps.boundary,
            "tensors": [enc(t) for t in mps.tensors],
        }
    else:
        raise TypeError("expected UnitCellMPS or FiniteMPS")
    return json.dumps(doc)


def mps_from_json(text):
    """Inverse of :func:`mps_to_json`."""
    doc = json.loads(text)

    def dec(obj):
        arr = np.asarray(obj, dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]

    tensors = tuple(dec(t) for t in doc["tensors"])
    if doc["kind"] == "unit_cell":
        return UnitCellMPS(tensors)
    if doc["kind"] == "finite":
        return FiniteMPS(tensors, boundary=doc.get("boundary", "open"))
    raise ValueError(f"unknown MPS kind '{doc['kind']}'")
