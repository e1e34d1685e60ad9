"""Finite-state-machine MPO for the truncated Rydberg chain and a two-site
DMRG ground-state solver.

Index conventions: MPS tensors A[s, a, b] (physical, left, right bond);
MPO tensors W[p, q, s_out, s_in]; left environments L[a_bra, p, a_ket],
right environments R[b_ket, q, b_bra].
"""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla
from dataclasses import dataclass

from .mps import FiniteMPS

__all__ = ["MPO", "rydberg_mpo", "mpo_to_dense", "dmrg_ground_state"]

_ID = np.eye(2, dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_NUM = np.diag([0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class MPO:
    """Operator tensors W[p, q, s_out, s_in]; outer bond dimensions are 1."""

    tensors: tuple

    @property
    def n_sites(self):
        return len(self.tensors)


def rydberg_mpo(n_sites, params):
    """MPO of the Rydberg chain with interactions dropped beyond
    next-nearest neighbours.

    Automaton states: 0 = nothing pending, 1 = excitation one site back,
    2 = excitation two sites back, 3 = finished.
    """
    if params.range_cutoff != 2:
        raise ValueError("the automaton encodes a next-nearest-neighbour cutoff")
    if n_sites < 2:
        raise ValueError("need at least two sites")
    onsite = (params.omega / 2.0) * _SY + params.delta * _NUM
    w = np.zeros((4, 4, 2, 2), dtype=complex)
    w[0, 0] = _ID
    w[0, 1] = _NUM
    w[0, 3] = onsite
    w[1, 2] = _ID
    w[1, 3] = params.v * _NUM
    w[2, 3] = (params.v / 2.0 ** params.alpha) * _NUM
    w[3, 3] = _ID
    tensors = (w[0:1],) + tuple(w for _ in range(n_sites - 2)) + (w[:, 3:4],)
    return MPO(tensors)


def mpo_to_dense(mpo):
    """Dense matrix of a small MPO (oracle for tests)."""
    acc = mpo.tensors[0]
    for w in mpo.tensors[1:]:
        acc = np.einsum("pqSs,qrTt->prSTst", acc, w)
        sh = acc.shape
        acc = acc.reshape(sh[0], sh[1], sh[2] * sh[3], sh[4] * sh[5])
    return acc[0, 0]


def _right_canonicalize(tensors):
    """Bring all tensors to right-canonical form (sum_s A A^dag = 1)."""
    tensors = [t.copy() for t in tensors]
    for j in range(len(tensors) - 1, 0, -1):
        d, a, b = tensors[j].shape
        mat = tensors[j].transpose(1, 0, 2).reshape(a, d * b)
        q, r = np.linalg.qr(mat.conj().T)
        k = q.shape[1]
        tensors[j] = q.conj().T.reshape(k, d, b).transpose(1, 0, 2)
        tensors[j - 1] = np.einsum("sab,bc->sac", tensors[j - 1], r.conj().T)
    nrm = np.linalg.norm(tensors[0])
    tensors[0] = tensors[0] / nrm
    return tensors


def _left_env_step(left, a, w):
    x = np.einsum("Apa,sab->Apsb", left, a)
    x = np.einsum("Apsb,pqSs->AqSb", x, w)
    return np.einsum("AqSb,SAB->Bqb", x, a.conj())


def _right_env_step(right, a, w):
    x = np.einsum("sab,bqB->saqB", a, right)
    x = np.einsum("pqSs,saqB->pSaB", w, x)
    return np.einsum("pSaB,SAB->apA", x, a.conj())


def _two_site_matvec(left, w1, w2, right, t):
    x = np.einsum("Apa,astb->Apstb", left, t)
    x = np.einsum("Apstb,pqSs->AqStb", x, w1)
    x = np.einsum("AqStb,qrTt->ArSTb", x, w2)
    return np.einsum("ArSTb,brB->ASTB", x, right)


def _solve_two_site(left, w1, w2, right, t0):
    shape = t0.shape
    dim = t0.size

    def mv(v):
        return _two_site_matvec(left, w1, w2, right, v.reshape(shape)).ravel()

    if dim <= 64:
        h = np.empty((dim, dim), dtype=complex)
        eye = np.eye(dim)
        for k in range(dim):
            h[:, k] = mv(eye[:, k].astype(complex))
        vals, vecs = np.linalg.eigh(0.5 * (h + h.conj().T))
        return float(vals[0]), vecs[:, 0].reshape(shape)
    op = spla.LinearOperator((dim, dim), matvec=mv, dtype=complex)
    vals, vecs = spla.eigsh(op, k=1, which="SA", v0=t0.ravel(), tol=0.0)
    return float(vals[0]), vecs[:, 0].reshape(shape)


def _split_two_site(t, chi, tol):
    """SVD split T[a,s,t,b] -> (A[s,a,k], center-carrying B[t,k,b], weight)."""
    a, d1, d2, b = t.shape
    mat = t.reshape(a * d1, d2 * b)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = min(chi, s.size)
    if tol > 0 and s.size:
        keep = min(keep, max(1, int(np.count_nonzero(s >= tol * s[0]))))
    weight = float(np.sum(s[keep:] ** 2))
    u, s, vh = u[:, :keep], s[:keep], vh[:keep]
    left = u.reshape(a, d1, keep).transpose(1, 0, 2)
    right = vh.reshape(keep, d2, b).transpose(1, 0, 2)
    return left, right, s, weight


def dmrg_ground_state(mpo, chi=16, sweeps=10, tol=1e-10, trunc_tol=1e-12, seed=0):
    """Two-site DMRG for the ground state of an MPO.

    Returns (FiniteMPS, energy, info); info carries the energy after each
    half sweep, the maximum discarded weight, and a convergence flag
    (non-convergence after the sweep budget is reported there rather than
    raised).
    """
    n = mpo.n_sites
    rng = np.random.default_rng(seed)
    dims = [1] + [min(chi, 2 ** j, 2 ** (n - j)) for j in range(1, n)] + [1]
    tensors = []
    for j in range(n):
        shape = (2, dims[j], dims[j + 1])
        t = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        tensors.append(t / np.linalg.norm(t))
    tensors = _right_canonicalize(tensors)

    rights = [None] * (n + 1)
    rights[n] = np.ones((1, 1, 1), dtype=complex)
    for j in range(n - 1, -1, -1):
        rights[j] = _right_env_step(rights[j + 1], tensors[j], mpo.tensors[j])
    lefts = [None] * (n + 1)
    lefts[0] = np.ones((1, 1, 1), dtype=complex)

    energies = []
    max_weight = 0.0
    energy = np.inf
    converged = False
    for sweep in range(sweeps):
        previous = energy
        # left-to-right
        for j in range(n - 1):
            t0 = np.einsum("sab,tbc->astc", tensors[j], tensors[j + 1])
            energy, t = _solve_two_site(lefts[j], mpo.tensors[j],
                                        mpo.tensors[j + 1], rights[j + 2], t0)
            left, right, s, wgt = _split_two_site(t, chi, trunc_tol)
            max_weight = max(max_weight, wgt)
            tensors[j] = left
            carry = np.einsum("k,skb->skb", s / np.linalg.norm(s), right)
            tensors[j + 1] = carry
            lefts[j + 1] = _left_env_step(lefts[j], tensors[j], mpo.tensors[j])
        energies.append(energy)
        # right-to-left
        for j in range(n - 2, -1, -1):
            t0 = np.einsum("sab,tbc->astc", tensors[j], tensors[j + 1])
            energy, t = _solve_two_site(lefts[j], mpo.tensors[j],
                                        mpo.tensors[j + 1], rights[j + 2], t0)
            left, right, s, wgt = _split_two_site(t, chi, trunc_tol)
            max_weight = max(max_weight, wgt)
            tensors[j + 1] = right
            carry = np.einsum("sak,k->sak", left, s / np.linalg.norm(s))
            tensors[j] = carry
            rights[j + 1] = _right_env_step(rights[j + 2], tensors[j + 1],
                                            mpo.tensors[j + 1])
        energies.append(energy)
        if abs(energy - previous) < tol:
            converged = True
            break
    info = {
        "energies": energies,
        "converged": converged,
        "max_discarded_weight": max_weight,
        "sweeps_run": sweep + 1,
    }
    if not converged:
        info["warning"] = f"not converged to {tol} after {sweeps} sweeps"
    state = FiniteMPS(tuple(tensors), boundary="open")
    return state, float(energy), info
