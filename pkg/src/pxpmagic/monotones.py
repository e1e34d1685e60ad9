"""Alternative and stochastic magic quantifiers: robustness of magic via
a self-contained simplex LP over the 60 two-qubit stabilizer states,
Markov-chain Monte Carlo estimation of the entropy density for
eigenstates, and a finite-shot two-site tomography estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sre import PAULIS, pauli_basis_matrices

__all__ = [
    "StabilizerSet2Q",
    "RomResult",
    "MCEstimate",
    "ShotRecord",
    "enumerate_stabilizers_2q",
    "rom",
    "mc_sre",
    "eigenstate_scan",
    "shot_estimator",
    "partial_trace_two_site",
]


# ---------------------------------------------------------------------------
# two-qubit stabilizer states and robustness of magic

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_S = np.diag([1.0, 1j])
_CNOT01 = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CNOT10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class StabilizerSet2Q:
    """The 60 two-qubit pure stabilizer states and their Pauli table
    A[alpha, beta] = <S_beta| sigma^alpha |S_beta> with entries in {0, +-1}."""

    states: np.ndarray  # (60, 4)
    pauli_table: np.ndarray  # (16, 60)


def _canonicalize(vec):
    """Fix the global phase (first sizable amplitude real positive)."""
    k = int(np.argmax(np.abs(vec) > 1e-8))
    v = vec * (abs(vec[k]) / vec[k])
    return v, np.round(v, 8).tobytes()


def enumerate_stabilizers_2q():
    """Close the orbit of |00> under {H, S, CNOT} on both qubits.

    Deduplicated up to global phase; the known count for two qubits is
    2^n prod_k (2^k + 1) = 60.
    """
    gates = [
        np.kron(_H, _I2), np.kron(_I2, _H),
        np.kron(_S, _I2), np.kron(_I2, _S),
        _CNOT01, _CNOT10,
    ]
    start = np.zeros(4, dtype=complex)
    start[0] = 1.0
    v0, key0 = _canonicalize(start)
    seen = {key0: v0}
    frontier = [v0]
    while frontier:
        nxt = []
        for v in frontier:
            for g in gates:
                w, key = _canonicalize(g @ v)
                if key not in seen:
                    seen[key] = w
                    nxt.append(w)
        frontier = nxt
    states = np.array([seen[k] for k in sorted(seen)])
    mats = np.stack(pauli_basis_matrices(2))
    table = np.einsum("bi,pij,bj->pb", states.conj(), mats, states).real
    return StabilizerSet2Q(states=states, pauli_table=table)


_STABILIZER_CACHE = None


def _stabilizers():
    global _STABILIZER_CACHE
    if _STABILIZER_CACHE is None:
        _STABILIZER_CACHE = enumerate_stabilizers_2q()
        if _STABILIZER_CACHE.states.shape[0] != 60:
            raise RuntimeError("stabilizer orbit closure did not yield 60 states")
    return _STABILIZER_CACHE


class SimplexError(RuntimeError):
    pass


def _simplex_min(c, a_eq, b_eq, tol=1e-9, max_pivots=20000):
    """min c.x subject to a_eq x = b_eq, x >= 0 (dense two-phase simplex,
    Bland's rule).  Small problems only."""
    a = np.array(a_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    c = np.array(c, dtype=float)
    m, n = a.shape
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    # tableau with artificial variables
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(n, n + m))
    tab[m, :] = -tab[:m, :].sum(axis=0)
    tab[m, n:n + m] = 0.0

    def pivot(allowed_cols):
        for _ in range(max_pivots):
            red = tab[m, :-1]
            enter = -1
            for j in allowed_cols:
                if j not in basis and red[j] < -tol:
                    enter = j
                    break
            if enter < 0:
                return
            col = tab[:m, enter]
            ratios = np.full(m, np.inf)
            ok = col > tol
            ratios[ok] = tab[:m, -1][ok] / col[ok]
            if not np.any(np.isfinite(ratios)):
                raise SimplexError("unbounded linear program")
            leave = int(np.argmin(ratios + np.array(basis) * 1e-15))
            piv = tab[leave, enter]
            tab[leave, :] /= piv
            for r in range(m + 1):
                if r != leave and abs(tab[r, enter]) > 0:
                    tab[r, :] -= tab[r, enter] * tab[leave, :]
            basis[leave] = enter
        raise SimplexError("pivot limit exceeded")

    pivot(range(n + m))
    if tab[m, -1] < -1e-7:
        raise SimplexError(f"infeasible program (phase-1 objective {-tab[m, -1]:.3e})")
    # drive leftover artificial variables out of the basis where possible
    for i, bv in enumerate(basis):
        if bv >= n:
            row = tab[i, :n]
            cand = np.where(np.abs(row) > tol)[0]
            if cand.size:
                enter = int(cand[0])
                piv = tab[i, enter]
                tab[i, :] /= piv
                for r in range(m + 1):
                    if r != i and abs(tab[r, enter]) > 0:
                        tab[r, :] -= tab[r, enter] * tab[i, :]
                basis[i] = enter
    # phase 2
    tab[m, :] = 0.0
    tab[m, :n] = c
    for i, bv in enumerate(basis):
        if bv < n:
            tab[m, :] -= c[bv] * tab[i, :]
    pivot(range(n))
    x = np.zeros(n)
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = tab[i, -1]
    return x, float(c @ x)


@dataclass(frozen=True)
class RomResult:
    """Robustness (minimal negativity weight), its log-free form, and the
    optimal signed stabilizer weights."""

    r: float
    log_free: float
    weights: np.ndarray
    reconstruction_error: float


def rom(rho):
    """Robustness of magic of a two-qubit density matrix.

    Minimal sum |x_i| - 1 over decompositions rho = sum x_i S_i into the
    60 stabilizer projectors; solved as a split-variable LP whose 16
    equality rows are the Pauli expectations (the identity row carries
    the normalization).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("rom expects a two-qubit density matrix")
    if np.abs(rho - rho.conj().T).max() > 1e-9:
        raise ValueError("rho is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-8:
        raise ValueError("rho must have unit trace")
    stab = _stabilizers()
    a = stab.pauli_table
    b = np.einsum("pij,ji->p", np.stack(pauli_basis_matrices(2)), rho).real
    n = a.shape[1]
    a_split = np.concatenate([a, -a], axis=1)
    c = np.ones(2 * n)
    try:
        y, obj = _simplex_min(c, a_split, b)
    except SimplexError as exc:
        raise SimplexError(f"robustness LP failed for a valid state: {exc}") from exc
    x = y[:n] - y[n:]
    recon = np.einsum("b,bi,bj->ij", x, stab.states, stab.states.conj())
    err = float(np.abs(recon - rho).max())
    r = max(obj - 1.0, 0.0)
    return RomResult(r=r, log_free=float(np.log1p(r)), weights=x,
                     reconstruction_error=err)


# ---------------------------------------------------------------------------
# Monte Carlo sampling of the Pauli distribution


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate of the entropy density."""

    mean: float
    stderr: float
    n_samples: int
    burn_in: int
    acceptance_rate: float
    diagnostics: dict = field(default_factory=dict)


def _pauli_amp_sq_batch(psi, x_masks, z_masks, parity_table):
    """|<psi| X^x Z^z |psi>|^2 for a batch of masks (phases drop out)."""
    s = np.arange(psi.size)
    signs = 1.0 - 2.0 * parity_table[np.bitwise_and(z_masks[:, None], s[None, :])]
    f = psi.conj()[np.bitwise_xor(x_masks[:, None], s[None, :])] * psi[None, :]
    amps = np.einsum("cs,cs->c", f, signs.astype(complex))
    return np.abs(amps) ** 2


def _masks_from_codes(codes, n):
    weights = 1 << (n - 1 - np.arange(n))
    x = ((codes == 1) | (codes == 2)) @ weights
    z = ((codes == 2) | (codes == 3)) @ weights
    return x.astype(np.int64), z.astype(np.int64)


def mc_sre(psi, n_samples=200000, burn_in=2000, seed=0, n_chains=8, n_batches=32):
    """Metropolis estimate of the order-2 entropy density of a pure state.

    The walk samples Pauli strings from the squared-expectation law; the
    estimator is -(1/N) ln(mean of sampled squared expectations).
    Proposals resample one uniformly chosen site among the other three
    codes.  The standard error combines per-chain batch means by inverse
    variance.
    """
    psi = np.asarray(psi, dtype=complex)
    nq = int(np.log2(psi.size))
    if 2 ** nq != psi.size:
        raise ValueError("state vector length must be a power of two")
    if nq > 20:
        raise ValueError("sampler capped at 20 sites")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("state vector must be normalized")
    rng = np.random.default_rng(seed)
    per_chain = max(n_batches, int(np.ceil(n_samples / n_chains)))
    parity_table = np.zeros(2 ** nq, dtype=np.int8)
    parity_table[:] = np.bitwise_count(np.arange(2 ** nq, dtype=np.uint64)) & 1

    codes = np.zeros((n_chains, nq), dtype=np.int8)  # identity string
    x, z = _masks_from_codes(codes, nq)
    amp = _pauli_amp_sq_batch(psi, x, z, parity_table)
    samples = np.empty((n_chains, per_chain))
    accepted = 0
    total_steps = burn_in + per_chain
    for step in range(total_steps):
        sites = rng.integers(0, nq, size=n_chains)
        shifts = rng.integers(1, 4, size=n_chains).astype(np.int8)
        new_codes = codes.copy()
        rows = np.arange(n_chains)
        new_codes[rows, sites] = (new_codes[rows, sites] + shifts) % 4
        xn, zn = _masks_from_codes(new_codes, nq)
        amp_new = _pauli_amp_sq_batch(psi, xn, zn, parity_table)
        ratio = amp_new / np.maximum(amp, 1e-300)
        accept = rng.random(n_chains) < ratio
        codes[accept] = new_codes[accept]
        amp[accept] = amp_new[accept]
        if step >= burn_in:
            samples[:, step - burn_in] = amp
            accepted += int(np.count_nonzero(accept))
    acc_rate = accepted / (n_chains * per_chain)

    # batch means per chain, inverse-variance merge across chains
    usable = (per_chain // n_batches) * n_batches
    bm = samples[:, :usable].reshape(n_chains, n_batches, -1).mean(axis=2)
    chain_mean = bm.mean(axis=1)
    chain_var = bm.var(axis=1, ddof=1) / n_batches
    if np.all(chain_var < 1e-300):
        mean_e = float(chain_mean.mean())
        se_e = 0.0
    else:
        w = 1.0 / np.maximum(chain_var, np.max(chain_var) * 1e-12)
        mean_e = float(np.sum(w * chain_mean) / np.sum(w))
        se_e = float(np.sqrt(1.0 / np.sum(w)))
    m_hat = -np.log(mean_e) / nq
    se_m = se_e / (nq * mean_e)
    diag = {"chain_means": chain_mean.tolist(), "n_chains": n_chains}
    if acc_rate == 0.0 and not np.allclose(samples, samples[0, 0]):
        diag["warning"] = "sampler stalled at zero acceptance"
    return MCEstimate(mean=float(m_hat), stderr=float(se_m),
                      n_samples=n_chains * per_chain, burn_in=burn_in,
                      acceptance_rate=float(acc_rate), diagnostics=diag)


# ---------------------------------------------------------------------------
# eigenstate scan


def eigenstate_scan(h, basis, z2_vector, n_samples=60000, burn_in=2000,
                    seed=0, n_chains=8, sector=None, state_indices=None,
                    progress=None):
    """Per-eigenstate records (energy, parity, Neel overlap, sampled m2).

    Scarred states are flagged as the N+1 largest-overlap states.  Runs
    the dense diagonalization once and one sampler per eigenstate;
    `state_indices` restricts the scan (useful for smoke runs).
    """
    from .hamiltonians import ed

    res = ed(h, sector=sector)
    n_states = len(res.values)
    indices = range(n_states) if state_indices is None else list(state_indices)
    overlaps = np.abs(res.vectors.conj().T @ z2_vector) ** 2
    n_flag = h.n_sites + 1
    flagged = set(np.argsort(-overlaps)[:n_flag].tolist())
    records = []
    for i in indices:
        vec = res.vectors[:, i]
        full = basis.embed(vec) if basis is not None else vec
        est = mc_sre(full, n_samples=n_samples, burn_in=burn_in,
                     seed=seed + 7919 * i, n_chains=n_chains)
        records.append({
            "index": int(i),
            "energy": float(res.values[i]),
            "parity": res.sector or "",
            "overlap_z2": float(overlaps[i]),
            "m2": est.mean,
            "m2_stderr": est.stderr,
            "acceptance_rate": est.acceptance_rate,
            "scar_flag": i in flagged,
        })
        if progress:
            progress(i, n_states)
    diag = dict(res.diagnostics)
    if diag.get("near_degenerate_pairs", 0):
        diag["warning"] = ("spectrum contains near-degenerate blocks; "
                           "per-state magic there is basis dependent")
    return records, diag


# ---------------------------------------------------------------------------
# finite-shot tomography estimator


@dataclass(frozen=True)
class ShotRecord:
    """Finite-shot estimates of the 16 two-site Pauli expectations and the
    mixed-state entropy derived from them."""

    n_shots: int
    sites: tuple
    expectations: np.ndarray
    stderrs: np.ndarray
    m2: float
    m2_stderr: float


def partial_trace_two_site(psi, sites):
    """Two-site reduced density matrix of a pure state."""
    psi = np.asarray(psi, dtype=complex)
    nq = int(np.log2(psi.size))
    i, j = sites
    if not (0 <= i < j < nq):
        raise ValueError("sites must satisfy 0 <= i < j < N")
    t = psi.reshape([2] * nq)
    order = [i, j] + [k for k in range(nq) if k not in (i, j)]
    t = np.transpose(t, order).reshape(4, -1)
    return t @ t.conj().T


def shot_estimator(state, n_shots=1000, seed=0, sites=None):
    """Simulated two-site tomography with `n_shots` projective samples per
    Pauli setting.

    `state` is either a pure state vector (the two central sites are
    traced out by default) or a 4x4 density matrix.  Expectations of the
    15 non-identity settings are drawn from binomial outcome counts; the
    identity is exact.  The entropy error bar is first-order propagation
    of the per-setting shot noise.
    """
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        nq = int(np.log2(state.size))
        if sites is None:
            sites = ((nq - 1) // 2, (nq - 1) // 2 + 1)
        rho = partial_trace_two_site(state, sites)
    else:
        rho = state
        sites = sites or (0, 1)
    rng = np.random.default_rng(seed)
    mats = np.stack(pauli_basis_matrices(2))
    exact = np.einsum("pij,ji->p", mats, rho).real
    est = np.empty(16)
    var = np.empty(16)
    est[0], var[0] = 1.0, 0.0
    for k in range(1, 16):
        p_up = min(max((1.0 + exact[k]) / 2.0, 0.0), 1.0)
        ups = rng.binomial(n_shots, p_up)
        est[k] = 2.0 * ups / n_shots - 1.0
        var[k] = max(1.0 - est[k] ** 2, 1.0 / n_shots) / n_shots
    s2 = float(np.sum(est ** 2))
    s4 = float(np.sum(est ** 4))
    m2 = -0.5 * np.log(s4 / s2)
    grad = -0.5 * (4.0 * est ** 3 / s4 - 2.0 * est / s2)
    m2_err = float(np.sqrt(np.sum(grad ** 2 * var)))
    return ShotRecord(n_shots=int(n_shots), sites=tuple(sites),
                      expectations=est, stderrs=np.sqrt(var),
                      m2=float(m2), m2_stderr=m2_err)
