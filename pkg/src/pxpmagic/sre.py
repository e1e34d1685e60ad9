"""Stabilizer Renyi entropies: direct Pauli sums, replica transfer
matrices for infinite and finite MPS, the truncated Pauli-basis method,
mixed-state and long-range variants, and manifold scans.

All entropies are reported in nats; densities are nats per site.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .linalg import EigenSolverError, dominant_eigenpair
from .mps import (
    FiniteMPS,
    UnitCellMPS,
    _finite_from_unitcell,
    fixed_points,
    rdm,
    site_transfer,
    transfer_matrix,
)

__all__ = [
    "PAULIS",
    "PauliString",
    "SREResult",
    "ScanResult",
    "pauli_moment_sum",
    "sre_direct",
    "sre_replica_density",
    "sre_finite_replica",
    "sre_pauli_basis",
    "sre_mixed",
    "sre_long_range",
    "scan_manifold",
]

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

DIRECT_MAX_SITES = 12
REPLICA_DIM_CAP = 10000


@dataclass(frozen=True)
class PauliString:
    """Per-site codes in {0: I, 1: X, 2: Y, 3: Z}."""

    codes: tuple

    def __post_init__(self):
        codes = tuple(int(c) for c in self.codes)
        if any(c not in (0, 1, 2, 3) for c in codes):
            raise ValueError("Pauli codes must be in {0, 1, 2, 3}")
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return len(self.codes)

    @property
    def x_mask(self):
        """Bit mask of sites carrying X or Y (site 0 = most significant bit)."""
        n = len(self.codes)
        return sum(1 << (n - 1 - j) for j, c in enumerate(self.codes) if c in (1, 2))

    @property
    def z_mask(self):
        n = len(self.codes)
        return sum(1 << (n - 1 - j) for j, c in enumerate(self.codes) if c in (2, 3))

    def matrix(self):
        m = np.array([[1.0]], dtype=complex)
        for c in self.codes:
            m = np.kron(m, PAULIS[c])
        return m


@dataclass(frozen=True)
class SREResult:
    """Entropy density `m` (nats/site), total `M` (None for infinite states),
    the method used and solver diagnostics."""

    m: float
    M: float | None
    method: str
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# direct Pauli sum


def _walsh_hadamard_last_axis(a):
    """In-place fast Walsh-Hadamard transform along the last axis."""
    n = a.shape[-1]
    h = 1
    while h < n:
        a = a.reshape(a.shape[:-1] + (-1, 2 * h))
        lo = a[..., :h].copy()
        hi = a[..., h:]
        a[..., :h] = lo + hi
        a[..., h:] = lo - hi
        a = a.reshape(a.shape[:-2] + (-1,))
        h *= 2
    return a


def pauli_moment_sum(psi, n=2, x_chunk=None):
    """sum_P |<psi|P|psi>|^(2n) / 2^N over all N-site Pauli strings.

    Exact, via <psi| X^x Z^z |psi> = sum_s (-1)^(z.s) conj(psi[s^x]) psi[s]
    evaluated for all z at once with a Walsh-Hadamard transform; the Y
    phases drop out of the even moments.
    """
    psi = np.asarray(psi, dtype=complex)
    dim = psi.size
    nq = int(np.log2(dim))
    if 2 ** nq != dim:
        raise ValueError("state vector length must be a power of two")
    if x_chunk is None:
        x_chunk = max(1, min(dim, 2 ** 22 // dim))
    s = np.arange(dim)
    total = 0.0
    for x0 in range(0, dim, x_chunk):
        xs = np.arange(x0, min(x0 + x_chunk, dim))
        f = psi.conj()[np.bitwise_xor(xs[:, None], s[None, :])] * psi[None, :]
        f = _walsh_hadamard_last_axis(f)
        total += float(np.sum(np.abs(f) ** (2 * n)))
    return total / dim


def sre_direct(psi, n=2, basis=None):
    """Exact stabilizer Renyi entropy of a pure state vector.

    `basis` may be a ConstrainedBasis whose amplitudes `psi` holds; the
    vector is then embedded into the full 2^N space first.  Guarded at
    N <= 12 by the 4^N cost.
    """
    if basis is not None:
        full = np.zeros(2 ** basis.n_sites, dtype=complex)
        full[basis.states] = psi
        psi = full
    psi = np.asarray(psi, dtype=complex)
    nq = int(np.log2(psi.size))
    if nq > DIRECT_MAX_SITES:
        raise ValueError(f"sre_direct is capped at {DIRECT_MAX_SITES} sites (got {nq})")
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"state vector is not normalized (norm {nrm:.9f})")
    if n < 2 or int(n) != n:
        raise ValueError("the Renyi index must be an integer >= 2")
    total = pauli_moment_sum(psi, n=n)
    M = np.log(total) / (1.0 - n)
    return SREResult(m=M / nq + 0.0, M=M + 0.0, method="direct", diagnostics={"n_sites": nq})


# ---------------------------------------------------------------------------
# replica transfer matrices

_LAMBDA_CACHE = {}


def replica_pauli_operator(n=2):
    """(1/2) sum_alpha (sigma^alpha)^(x 2n), a 2^(2n) x 2^(2n) matrix."""
    if n not in _LAMBDA_CACHE:
        out = np.zeros((4 ** n, 4 ** n), dtype=complex)
        for p in PAULIS:
            q = np.array([[1.0]], dtype=complex)
            for _ in range(2 * n):
                q = np.kron(q, p)
            out += q
        _LAMBDA_CACHE[n] = out / 2.0
    return _LAMBDA_CACHE[n]


def _replicate_tensor(a, n):
    """B[s, I, J] = 2n-fold tensor power of the site tensor, batched on axis 0."""
    b = a
    for _ in range(2 * n - 1):
        b = np.einsum("...sij,...tkl->...stikjl", b, a)
        b = b.reshape(
            b.shape[: -6]
            + (b.shape[-6] * b.shape[-5], b.shape[-4] * b.shape[-3], b.shape[-2] * b.shape[-1])
        )
    return b


def replica_site_transfer(a, n=2):
    """Replica transfer matrix of one site, shape (cl^2, cr^2) with
    cl = chi_l^(2n), cr = chi_r^(2n); supports a leading batch axis."""
    lam = replica_pauli_operator(n)
    b = _replicate_tensor(np.asarray(a, dtype=complex), n)
    c = np.einsum("st,...sIJ->...tIJ", lam, b)
    tau = np.einsum("...tIJ,...tKL->...IKJL", c, b.conj())
    cl = b.shape[-2]
    cr = b.shape[-1]
    return tau.reshape(tau.shape[:-4] + (cl * cl, cr * cr))


def _select_positive_dominant(vals):
    """Physical dominant eigenvalue: largest real part among max-modulus ones."""
    mod = np.abs(vals)
    tied = np.where(mod >= mod.max() * (1.0 - 1e-9))[0]
    lam = vals[tied[np.argmax(vals[tied].real)]]
    return lam


def sre_replica_density(mps, n=2):
    """Entropy density of a translation-invariant MPS from the dominant
    eigenvalue of the replica transfer matrix of one unit cell.

    The raw eigenvalue is divided by lambda_E^(2n) (the plain transfer
    eigenvalue of the cell) so unnormalized tensors are handled; the cell
    logarithm is divided by the cell size to yield a per-site density.
    For bond dimensions whose replica matrix would exceed the dimension
    cap the finite-size Pauli-basis method is used on two chain lengths
    and the bulk density extracted from the difference.
    """
    if n < 2 or int(n) != n:
        raise ValueError("the Renyi index must be an integer >= 2")
    cell = mps.cell_size
    if (mps.chi ** (4 * n)) > REPLICA_DIM_CAP:
        return _replica_density_via_pauli_basis(mps, n)
    tau = None
    e_cell = None
    for j in range(cell):
        tau_j = replica_site_transfer(mps.tensors[j], n)
        e_j = site_transfer(mps.tensors[j])
        tau = tau_j if tau is None else tau @ tau_j
        e_cell = e_j if e_cell is None else e_cell @ e_j
    lam_e = _select_positive_dominant(np.linalg.eigvals(e_cell))
    iterations = None
    try:
        pair = dominant_eigenpair(tau, tol=1e-12)
        lam0 = pair.value
    except EigenSolverError:
        lam0 = _select_positive_dominant(np.linalg.eigvals(tau))
        iterations = "dense"
    ratio = lam0 / lam_e ** (2 * n)
    if abs(ratio.imag) > 1e-8 * abs(ratio) or ratio.real <= 0:
        raise EigenSolverError(f"replica eigenvalue not positive: {lam0}")
    m = float(np.log(ratio.real) / (1.0 - n) / cell) + 0.0
    return SREResult(
        m=m,
        M=None,
        method="replica",
        diagnostics={"lambda0": complex(lam0), "transfer_lambda": complex(lam_e),
                     "solver": iterations or "power"},
    )


def _replica_density_via_pauli_basis(mps, n, n_small=16, n_large=24, chi_p=64):
    """Bulk density from total entropies of two finite chains (boundary
    contributions cancel in the difference)."""
    small = _finite_from_unitcell(mps, n_small, right_boundary="coherent")
    large = _finite_from_unitcell(mps, n_large, right_boundary="coherent")
    r_small = sre_pauli_basis(small, n=n, chi_p=chi_p)
    r_large = sre_pauli_basis(large, n=n, chi_p=chi_p)
    m = (r_large.M - r_small.M) / (n_large - n_small)
    return SREResult(
        m=float(m),
        M=None,
        method="replica/pauli-basis",
        diagnostics={"n_small": n_small, "n_large": n_large, "chi_p": chi_p,
                     "discarded_weight": r_large.diagnostics["discarded_weight"]},
    )


def sre_finite_replica(fmps, n=2):
    """Exact entropy of a finite MPS by contracting the 2n-fold replica
    against the per-site Pauli average, without forming the state vector."""
    if n < 2 or int(n) != n:
        raise ValueError("the Renyi index must be an integer >= 2")
    lam = replica_pauli_operator(n)
    nq = fmps.n_sites
    norm_sq = fmps.norm_sq()
    if fmps.boundary == "open":
        v = np.array([[1.0 + 0.0j]])
        for t in fmps.tensors:
            b = _replicate_tensor(t, n)
            # v' = sum_{s s'} lam[s,s'] (B^s)^T v conj(B^{s'})
            w = np.einsum("sIJ,IK->sJK", b, v)
            w = np.einsum("st,sJK->tJK", lam, w)
            v = np.einsum("tJK,tKL->JL", w, b.conj())
        z = complex(v[0, 0])
    else:
        m = None
        for t in fmps.tensors:
            b = _replicate_tensor(t, n)
            c = np.einsum("st,sIJ->tIJ", lam, b)
            tau = np.einsum("tIJ,tKL->IKJL", c, b.conj())
            tau = tau.reshape(b.shape[1] ** 2, b.shape[2] ** 2)
            m = tau if m is None else m @ tau
        z = complex(np.trace(m))
    z /= norm_sq ** (2 * n)
    M = float(np.log(z.real) / (1.0 - n))
    return SREResult(m=M / nq, M=M, method="finite-replica",
                     diagnostics={"n_sites": nq, "norm_sq": norm_sq})


# ---------------------------------------------------------------------------
# Pauli-basis method with truncation


def _compress(tensors, chi_max, tol):
    """Two-pass canonicalization + truncation sweep; returns new tensors
    and the accumulated discarded weight."""
    tensors = [np.asarray(t) for t in tensors]
    n = len(tensors)
    # left-to-right QR pass
    for j in range(n - 1):
        d, cl, cr = tensors[j].shape
        q, r = np.linalg.qr(tensors[j].reshape(d * cl, cr))
        tensors[j] = q.reshape(d, cl, q.shape[1])
        tensors[j + 1] = np.einsum("ab,sbc->sac", r, tensors[j + 1])
    discarded = 0.0
    # right-to-left SVD truncation
    for j in range(n - 1, 0, -1):
        d, cl, cr = tensors[j].shape
        mat = tensors[j].reshape(cl, d * cr) if False else tensors[j].transpose(1, 0, 2).reshape(cl, d * cr)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = min(chi_max, s.size) if chi_max else s.size
        if s.size and tol > 0:
            keep = min(keep, max(1, int(np.count_nonzero(s >= tol * s[0]))))
        discarded += float(np.sum(s[keep:] ** 2))
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        tensors[j] = vh.reshape(keep, d, cr).transpose(1, 0, 2)
        carry = u * s
        tensors[j - 1] = np.einsum("sab,bc->sac", tensors[j - 1], carry)
    return tensors, discarded


def _pauli_basis_tensors(fmps):
    """Tensors of the Pauli-coefficient MPS |P(psi)>, physical dimension 4."""
    out = []
    for t in fmps.tensors:
        d, cl, cr = t.shape
        if d != 2:
            raise ValueError("Pauli-basis conversion assumes qubits")
        p = np.stack(PAULIS) / np.sqrt(2.0)
        # T[alpha,(a a'),(b b')] = sum_{s s'} P[alpha, s', s] A[s,a,b] conj(A[s',a',b'])
        tt = np.einsum("xut,tab,ucd->xacbd", p, t, t.conj())
        out.append(tt.reshape(4, cl * cl, cr * cr))
    return out


def _mps_inner(tens_a, tens_b):
    """<a|b> for two open-chain tensor lists of equal physical dims."""
    v = np.array([[1.0 + 0.0j]])
    for ta, tb in zip(tens_a, tens_b):
        v = np.einsum("ac,sab,scd->bd", v, tb, ta.conj())
    return complex(v[0, 0])


def sre_pauli_basis(fmps, n=2, chi_p=None, tol=1e-12, truncation_budget=1e-6):
    """Entropy of a finite MPS via conversion to the Pauli basis.

    The squared Pauli coefficients are raised to the n-th power by n-1
    applications of the diagonal coefficient operator, truncating to bond
    `chi_p` after each application (untruncated when None).  Reports the
    cumulative discarded weight; exceeding `truncation_budget` flags the
    result rather than failing.
    """
    if fmps.boundary != "open":
        raise ValueError("the Pauli-basis method is implemented for open chains")
    if n < 2 or int(n) != n:
        raise ValueError("the Renyi index must be an integer >= 2")
    nq = fmps.n_sites
    norm_sq = fmps.norm_sq()
    scale = norm_sq ** (-0.5 / nq)
    normed = FiniteMPS(tuple(t * scale for t in fmps.tensors), boundary="open")
    p_tens = _pauli_basis_tensors(normed)
    p_tens, disc0 = _compress(p_tens, chi_p, tol)
    discarded = disc0
    state = [t.copy() for t in p_tens]
    for _ in range(n - 1):
        # apply the diagonal coefficient operator: componentwise product
        state = [
            np.einsum("xwv,xab->xwavb", w, q).reshape(
                4, w.shape[1] * q.shape[1], w.shape[2] * q.shape[2]
            )
            for w, q in zip(p_tens, state)
        ]
        state, d = _compress(state, chi_p, tol)
        discarded += d
    z = _mps_inner(state, state).real
    M = float(np.log(z) / (1.0 - n) - nq * np.log(2.0))
    flag = "truncation budget exceeded" if discarded > truncation_budget else None
    diag = {"n_sites": nq, "discarded_weight": discarded, "chi_p": chi_p}
    if flag:
        diag["warning"] = flag
    return SREResult(m=M / nq, M=M, method="pauli-basis", diagnostics=diag)


# ---------------------------------------------------------------------------
# mixed-state entropy


def pauli_basis_matrices(k):
    """All 4^k Pauli matrices on k qubits, index base-4 with site 0 leading."""
    mats = [np.array([[1.0]], dtype=complex)]
    for _ in range(k):
        mats = [np.kron(m, p) for m in mats for p in PAULIS]
    return mats


_PAULI_MATS_CACHE = {}


def _pauli_mats(k):
    if k not in _PAULI_MATS_CACHE:
        _PAULI_MATS_CACHE[k] = np.stack(pauli_basis_matrices(k))
    return _PAULI_MATS_CACHE[k]


def mixed_moment_ratio(rho):
    """sum_P tr(rho P)^4 / sum_P tr(rho P)^2 over all Paulis of the state size."""
    rho = np.asarray(rho, dtype=complex)
    k = int(np.log2(rho.shape[0]))
    mats = _pauli_mats(k)
    evs = np.einsum("pij,ji->p", mats, rho).real
    return float(np.sum(evs ** 4) / np.sum(evs ** 2))


def sre_mixed(rho, psd_tol=1e-8):
    """Mixed-state entropy -(1/2) ln(sum tr(rho P)^4 / sum tr(rho P)^2).

    For a pure two-qubit state this equals the per-site density of the
    pure-state entropy.  Input must be Hermitian, unit trace and PSD
    within `psd_tol`.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("rho must be a square matrix")
    k = int(np.log2(rho.shape[0]))
    if 2 ** k != rho.shape[0]:
        raise ValueError("rho dimension must be a power of two")
    if np.abs(rho - rho.conj().T).max() > 1e-10:
        raise ValueError("rho is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-8:
        raise ValueError("rho must have unit trace")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -psd_tol:
        raise ValueError(f"rho is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return float(-0.5 * np.log(mixed_moment_ratio(rho))) + 0.0


# ---------------------------------------------------------------------------
# batched replica engine for grids / rotations (n = 2, chi = 2)


def _site_transfer_batch(a):
    e = np.einsum("...sij,...skl->...ikjl", a, a.conj())
    return e.reshape(a.shape[:-3] + (a.shape[-2] ** 2, a.shape[-1] ** 2))


def _dominant_batch(mats, tol=1e-12, max_iter=2000):
    """Dominant eigenvalues of a stack of square matrices.

    Deterministic batched power iteration with a dense fallback for
    entries that fail to converge (degenerate dominant modulus on the
    zero-magic lines)."""
    g, q, _ = mats.shape
    v = np.full((g, q), 1.0 / np.sqrt(q), dtype=complex)
    lam = np.zeros(g, dtype=complex)
    active = np.arange(g)
    for _ in range(max_iter):
        w = np.einsum("gij,gj->gi", mats[active], v[active])
        lam_a = np.einsum("gi,gi->g", v[active].conj(), w)
        res = np.linalg.norm(w - lam_a[:, None] * v[active], axis=1)
        lam[active] = lam_a
        nrm = np.linalg.norm(w, axis=1)
        ok = res <= tol * np.maximum(np.abs(lam_a), 1e-300)
        stalled = nrm < 1e-300
        if np.any(stalled):
            w[stalled] = np.arange(1.0, q + 1.0)
            nrm[stalled] = np.linalg.norm(w[stalled], axis=1)
        v[active] = w / nrm[:, None]
        active = active[~ok]
        if active.size == 0:
            break
    for g_idx in active:
        lam[g_idx] = _select_positive_dominant(np.linalg.eigvals(mats[g_idx]))
    return lam


def _m2_two_site_cells(a_o, a_e, chunk=64):
    """m2 for batches of two-site unit cells given per-site tensors.

    a_o, a_e: arrays (..., 2, chi, chi) broadcast against each other on
    the leading axes.
    """
    a_o, a_e = np.broadcast_arrays(a_o, a_e)
    lead = a_o.shape[:-3]
    a_o = a_o.reshape((-1,) + a_o.shape[-3:])
    a_e = a_e.reshape((-1,) + a_e.shape[-3:])
    g = a_o.shape[0]
    out = np.empty(g)
    for i0 in range(0, g, chunk):
        sl = slice(i0, min(i0 + chunk, g))
        tau = replica_site_transfer(a_o[sl], 2) @ replica_site_transfer(a_e[sl], 2)
        e_cell = _site_transfer_batch(a_o[sl]) @ _site_transfer_batch(a_e[sl])
        lam_e = np.array([_select_positive_dominant(v) for v in np.linalg.eigvals(e_cell)])
        lam0 = _dominant_batch(tau)
        ratio = (lam0 / lam_e ** 4).real
        out[sl] = -0.5 * np.log(np.maximum(ratio, 1e-300))
    return (out + 0.0).reshape(lead)


def _y_rotation(gamma):
    """exp(i gamma sigma_y) as a real rotation matrix (batched)."""
    gamma = np.asarray(gamma, dtype=float)
    c, s = np.cos(gamma), np.sin(gamma)
    out = np.empty(gamma.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    return out


def sre_long_range(mps, n=2, coarse=16, refine=True):
    """Minimum entropy density over independent y-axis rotations of the
    two sublattices; returns (value, (gamma_o, gamma_e)).

    A coarse grid over [0, pi)^2 (which contains the identity) seeds a
    Nelder-Mead polish; the identity point guarantees the result never
    exceeds the unrotated density.
    """
    if mps.cell_size != 2:
        raise ValueError("long-range entropy expects a two-site unit cell")
    if n != 2:
        raise ValueError("long-range entropy is implemented for n = 2")
    a_o, a_e = mps.tensors

    def rotated_pair(go, ge):
        return (
            np.einsum("...st,tij->...sij", _y_rotation(go), a_o),
            np.einsum("...st,tij->...sij", _y_rotation(ge), a_e),
        )

    gammas = np.linspace(0.0, np.pi, coarse, endpoint=False)
    gg_o, gg_e = np.meshgrid(gammas, gammas, indexing="ij")
    ro, re = rotated_pair(gg_o.ravel(), gg_e.ravel())
    vals = _m2_two_site_cells(ro, re)
    k = int(np.argmin(vals))
    best_v = float(vals[k])
    best_g = np.array([gg_o.ravel()[k], gg_e.ravel()[k]])

    def objective(g):
        ro1, re1 = rotated_pair(g[0], g[1])
        return float(_m2_two_site_cells(ro1[None], re1[None])[0])

    if refine:
        res = minimize(objective, best_g, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 300})
        if res.fun < best_v:
            best_v, best_g = float(res.fun), res.x
    best_v = min(best_v, objective(np.zeros(2)))  # identity is always a candidate
    return max(best_v, 0.0), (float(best_g[0] % np.pi), float(best_g[1] % np.pi))


# ---------------------------------------------------------------------------
# manifold scans


@dataclass
class ScanResult:
    """Grid of magic quantities over the two manifold angles."""

    theta_o: np.ndarray
    theta_e: np.ndarray
    columns: dict
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path):
        names = sorted(self.columns)
        with open(path, "w") as fh:
            fh.write("theta_o,theta_e," + ",".join(names) + "\n")
            for i, to in enumerate(self.theta_o):
                for j, te in enumerate(self.theta_e):
                    row = [f"{to:.12g}", f"{te:.12g}"]
                    row += [f"{self.columns[c][i, j]:.12g}" for c in names]
                    fh.write(",".join(row) + "\n")

    def to_json(self, path):
        import json

        doc = dict(self.metadata)
        doc["theta_o"] = [float(x) for x in self.theta_o]
        doc["theta_e"] = [float(x) for x in self.theta_e]
        doc["columns"] = {k: np.asarray(v).tolist() for k, v in self.columns.items()}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)


SCAN_QUANTITIES = ("m2", "m2_long_range", "m2_mixed", "m2_unitary")


def scan_manifold(resolution=201, quantities=("m2",), theta_max=2.0 * np.pi,
                  long_range_coarse=16, progress=None):
    """Magic quantities on a (theta_o, theta_e) grid over [0, theta_max]^2.

    Quantities: 'm2' (replica density), 'm2_long_range' (minimized over
    sublattice y-rotations; expensive), 'm2_mixed' (two-site reduced
    state), 'm2_unitary' (circuit estimate).  Per-point failures are
    recorded as NaN with an entry in metadata['failures'].
    """
    from .dynamics import m_u_cell  # local import to avoid a cycle
    from .mps import pxp_ansatz, pxp_site_tensor

    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    unknown = set(quantities) - set(SCAN_QUANTITIES)
    if unknown:
        raise ValueError(f"unknown quantities: {sorted(unknown)}")
    thetas = np.linspace(0.0, theta_max, resolution)
    cols = {}
    failures = []
    t0 = time.time()

    if "m2" in quantities:
        site_tensors = np.stack([pxp_site_tensor(t) for t in thetas])
        grid = np.empty((resolution, resolution))
        for i in range(resolution):
            grid[i] = _m2_two_site_cells(site_tensors[i][None], site_tensors, chunk=resolution)
            if progress:
                progress("m2", i, resolution)
        cols["m2"] = grid
    for name in ("m2_long_range", "m2_mixed", "m2_unitary"):
        if name not in quantities:
            continue
        grid = np.full((resolution, resolution), np.nan)
        for i, to in enumerate(thetas):
            for j, te in enumerate(thetas):
                try:
                    if name == "m2_long_range":
                        grid[i, j] = sre_long_range(pxp_ansatz(to, te),
                                                    coarse=long_range_coarse)[0]
                    elif name == "m2_mixed":
                        grid[i, j] = sre_mixed(rdm(pxp_ansatz(to, te), 2))
                    else:
                        grid[i, j] = m_u_cell(to, te)
                except Exception as exc:  # record, keep scanning
                    failures.append({"quantity": name, "theta_o": float(to),
                                     "theta_e": float(te), "error": str(exc)})
            if progress:
                progress(name, i, resolution)
        cols[name] = grid
    meta = {
        "resolution": resolution,
        "theta_max": float(theta_max),
        "quantities": list(quantities),
        "wall_time_s": time.time() - t0,
        "failures": failures,
    }
    return ScanResult(theta_o=thetas, theta_e=thetas, columns=cols, metadata=meta)
