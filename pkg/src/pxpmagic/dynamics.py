"""Projected dynamics on the two-angle variational manifold, exact quench
evolution at small sizes, and the circuit decomposition of the ansatz
with its per-site magic estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mps import (
    DegenerateTransferError,
    fixed_points,
    mps_to_statevector,
    pxp_ansatz,
    pxp_ansatz_single,
    pxp_site_tensor,
)
from .sre import mixed_moment_ratio, sre_direct, sre_mixed, _m2_two_site_cells

__all__ = [
    "ManifoldPoint",
    "Trajectory",
    "CircuitSpec",
    "SingularFlowError",
    "tdvp_rhs",
    "integrate_trajectory",
    "first_return_period",
    "trajectory_observables",
    "quench_ed",
    "mps_unitary",
    "staircase_state",
    "m_u",
    "m_u_cell",
]

FOUR_PI = 4.0 * math.pi
SINGULAR_COS = 1e-12


class SingularFlowError(RuntimeError):
    """Flow evaluated on the singular line with a non-vanishing coefficient."""


@dataclass(frozen=True)
class ManifoldPoint:
    """Sublattice angles; the physical state is 4*pi-periodic in each."""

    theta_o: float
    theta_e: float

    def canonical(self):
        return ManifoldPoint(self.theta_o % FOUR_PI, self.theta_e % FOUR_PI)

    def mps(self):
        return pxp_ansatz(self.theta_o, self.theta_e)


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray  # (len(times), 2) columns theta_o, theta_e
    observables: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def _flow_term(sin_half_own, cos_sq_own, theta_other):
    """sin(to/2) tan(te/2) cos^2(to/2) with 0/0 -> 0 continuation.

    The tan is singular where the partner angle crosses pi; trajectories
    only touch that line where the own-angle coefficient vanishes, so the
    limit along a trajectory is zero there.
    """
    coeff = sin_half_own * cos_sq_own * math.sin(theta_other / 2.0)
    den = math.cos(theta_other / 2.0)
    if abs(den) < SINGULAR_COS:
        if abs(coeff) < SINGULAR_COS:
            return 0.0
        raise SingularFlowError(
            f"flow singular: cos(theta/2)={den:.2e} with coefficient {coeff:.2e}"
        )
    return coeff / den


def tdvp_rhs(theta_o, theta_e):
    """Right-hand side of the projected equations of motion."""
    so, co = math.sin(theta_o / 2.0), math.cos(theta_o / 2.0)
    se, ce = math.sin(theta_e / 2.0), math.cos(theta_e / 2.0)
    d_o = ce + _flow_term(so, co * co, theta_e)
    d_e = co + _flow_term(se, ce * ce, theta_o)
    return d_o, d_e


def integrate_trajectory(init, t_max, dt, record_every=1, check_halving=True):
    """Fixed-step RK4 integration of the manifold flow.

    Singular evaluations abort the integration and are reported with a
    time stamp in the trajectory diagnostics.  With `check_halving` the
    end point is re-integrated at dt/2 and the deviation recorded.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(t_max / dt))
    singularities = []

    def run(step, keep_every):
        x = (float(init[0]), float(init[1]))
        pts = [x]
        ts = [0.0]
        for k in range(int(round(t_max / step))):
            try:
                x = _rk4_step(x, step)
            except SingularFlowError as exc:
                singularities.append({"time": (k + 1) * step, "error": str(exc)})
                break
            if (k + 1) % keep_every == 0:
                pts.append(x)
                ts.append((k + 1) * step)
        return np.array(ts), np.array(pts)

    times, points = run(dt, record_every)
    diag = {"dt": dt, "singularities": singularities}
    if check_halving and not singularities and len(points):
        _, fine = run(dt / 2.0, max(1, 2 * n_steps))
        diag["step_halving_error"] = float(np.max(np.abs(fine[-1] - points[-1])))
    return Trajectory(times=times, points=points, diagnostics=diag)


def _rk4_step(x, dt):
    k1 = tdvp_rhs(*x)
    k2 = tdvp_rhs(x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1])
    k3 = tdvp_rhs(x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1])
    k4 = tdvp_rhs(x[0] + dt * k3[0], x[1] + dt * k3[1])
    return (
        x[0] + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        x[1] + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
    )


def _wrapped_distance(points, ref):
    d = (points - np.asarray(ref) + FOUR_PI / 2.0) % FOUR_PI - FOUR_PI / 2.0
    return np.linalg.norm(d, axis=-1)


def first_return_period(init=(math.pi, 0.0), dt=1e-4, t_max=25.0, t_min=1.0):
    """First return time of a closed orbit and its return distance.

    Distances are measured modulo the 4*pi angle periodicity.  The
    discrete first local minimum below a loose gate is refined by a
    parabolic fit through the neighbouring samples.
    """
    tr = integrate_trajectory(init, t_max, dt, check_halving=False)
    d = _wrapped_distance(tr.points, init)
    k0 = int(t_min / dt)
    idx = None
    for k in range(k0, len(d) - 1):
        if d[k] < 0.05 and d[k] <= d[k - 1] and d[k] <= d[k + 1]:
            idx = k
            break
    if idx is None:
        raise RuntimeError("no return detected; increase t_max")
    # parabolic refinement of the minimum
    a, b, c = d[idx - 1], d[idx], d[idx + 1]
    shift = 0.5 * (a - c) / (a - 2 * b + c) if (a - 2 * b + c) != 0 else 0.0
    period = (idx + shift) * dt
    return float(period), float(b), tr


def trajectory_observables(tr, quantities=("m2",), subsample=1,
                           long_range_coarse=16):
    """Magic quantities along a trajectory, evaluated every `subsample` points.

    Returns a new Trajectory restricted to the evaluated points.  The
    circuit estimate uses the two-site-cell staircase.
    """
    from .sre import sre_long_range
    from .mps import rdm

    pts = tr.points[::subsample]
    ts = tr.times[::subsample]
    obs = {}
    if "m2" in quantities:
        a_o = np.stack([pxp_site_tensor(p[0]) for p in pts])
        a_e = np.stack([pxp_site_tensor(p[1]) for p in pts])
        obs["m2"] = _m2_two_site_cells(a_o, a_e)
    for name in quantities:
        if name == "m2":
            continue
        vals = np.full(len(pts), np.nan)
        for i, (to, te) in enumerate(pts):
            try:
                if name == "m2_long_range":
                    vals[i] = sre_long_range(pxp_ansatz(to, te),
                                             coarse=long_range_coarse)[0]
                elif name == "m2_mixed":
                    vals[i] = sre_mixed(rdm(pxp_ansatz(to, te), 2))
                elif name == "m_u":
                    vals[i] = m_u_cell(to, te)
                else:
                    raise ValueError(f"unknown trajectory quantity '{name}'")
            except DegenerateTransferError:
                pass  # leave NaN on degenerate lines
        obs[name] = vals
    return Trajectory(times=ts, points=pts, observables=obs,
                      diagnostics=dict(tr.diagnostics))


# ---------------------------------------------------------------------------
# exact quench evolution


def quench_ed(h, psi0, times, basis=None):
    """Exact evolution by spectral decomposition, with the magic density
    and the return fidelity evaluated at each time.

    `h` is a dense or sparse Hermitian matrix in the same basis as psi0;
    `basis` (a ConstrainedBasis) is forwarded to the Pauli sums.
    """
    hm = np.asarray(h.todense()) if hasattr(h, "todense") else np.asarray(h)
    if hm.shape[0] > 4000:
        raise ValueError("quench_ed is capped at dimension 4000")
    vals, vecs = np.linalg.eigh(hm)
    psi0 = np.asarray(psi0, dtype=complex)
    coeff = vecs.conj().T @ psi0
    out_m2 = np.empty(len(times))
    out_fid = np.empty(len(times))
    out_norm = np.empty(len(times))
    for i, t in enumerate(times):
        psi_t = vecs @ (np.exp(-1j * vals * t) * coeff)
        out_norm[i] = float(np.linalg.norm(psi_t))
        out_fid[i] = float(abs(np.vdot(psi0, psi_t)) ** 2)
        out_m2[i] = sre_direct(psi_t / out_norm[i], basis=basis).m
    return {"times": np.asarray(times, dtype=float), "m2": out_m2,
            "fidelity": out_fid, "norm": out_norm}


# ---------------------------------------------------------------------------
# circuit decomposition

_I2 = np.eye(2, dtype=complex)
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


@dataclass(frozen=True)
class CircuitSpec:
    """Two-qubit generating circuit: gate names in temporal order plus the
    composed matrix (first qubit = dummy physical input, second = bond)."""

    theta: float
    phi: float
    gates: tuple
    matrix: np.ndarray


def mps_unitary(theta, phi=0.0):
    """The two-qubit staircase unitary generating the ansatz.

    A SWAP followed by one controlled operation on the second qubit:
    conditional on the first qubit being |0> it rotates the fresh bond
    qubit by exp(-i theta sigma_y / 2); conditional on |1> it applies the
    phase -i e^{i phi}.  Feeding |0> into the first qubit makes the first
    two columns, reshaped, exactly the ansatz site tensor, so the
    staircase preserves the blockade (the excited block is a pure phase,
    never re-exciting the bond).
    """
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    rot = np.array([[c, -s], [s, c]], dtype=complex)  # exp(-i theta sigma_y / 2)
    ctrl = np.zeros((4, 4), dtype=complex)
    ctrl[0:2, 0:2] = rot
    ctrl[2:4, 2:4] = -1j * np.exp(1j * phi) * _I2
    u = ctrl @ _SWAP
    if np.abs(u @ u.conj().T - np.eye(4)).max() > 1e-12:
        raise RuntimeError("composed circuit is not unitary")
    return CircuitSpec(theta=float(theta), phi=float(phi),
                       gates=("SWAP", "controlled_bond_rotation"),
                       matrix=u)


def circuit_site_tensor(spec):
    """Site tensor read off the |0>-input columns of the circuit matrix."""
    v = spec.matrix.reshape(2, 2, 2, 2)[:, :, 0, :]  # (sigma, bond_out, bond_in)
    return v


def staircase_state(theta, phi=0.0, n_sites=6):
    """State generated by composing the circuit in a staircase.

    The bond qubit starts in the coherent right-boundary state; each step
    feeds a fresh |0> physical qubit through the circuit, emitting the
    chain right to left.  The final bond is projected on |0>.
    """
    spec = mps_unitary(theta, phi)
    s = math.sin(theta / 2.0)
    bond = np.array([1.0, s], dtype=complex)
    bond /= np.linalg.norm(bond)
    state = bond[None, :]  # (emitted configs, bond)
    fresh = np.array([1.0, 0.0], dtype=complex)
    for _ in range(n_sites):
        blk = np.einsum("s,xb->xsb", fresh, state)
        blk = blk.reshape(-1, 4) @ spec.matrix.T  # apply U to (phys_in, bond)
        # output legs: (emitted qubit, new bond); the chain grows right to
        # left, so the newest emitted qubit becomes the most significant bit
        state = blk.reshape(-1, 2, 2).transpose(1, 0, 2).reshape(-1, 2)
    vec = state[:, 0]
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise RuntimeError("staircase contracted to zero")
    return vec / nrm


def _mixed_log_moment(rho):
    """-ln(sum tr(rho P)^4 / sum tr(rho P)^2): additive under tensor product."""
    return -math.log(mixed_moment_ratio(rho))


def _lift_isometry(a, rho):
    """Feed the bond leg of `rho` through the site isometry of tensor `a`.

    rho lives on (rest..., bond); the result lives on (sigma, rest...,
    bond') with the emitted qubit leading.  rho must be given as a square
    matrix whose last ket/bra factor is the bond.
    """
    dim = rho.shape[0]
    rest = dim // a.shape[2]
    r4 = rho.reshape(rest, a.shape[2], rest, a.shape[2])
    out = np.einsum("sab,xbyc,tdc->sxatyd", a, r4, a.conj())
    new = rest * a.shape[1]
    out = out.reshape(2 * new, 2 * new)
    return out / np.trace(out)


def m_u(theta, phi=0.0):
    """Per-site magic estimate from one application of the staircase circuit.

    The input is |0><0| (x) rho_R with rho_R the bond fixed point of the
    uniform ansatz; the estimate is the log-moment magic added by the
    step.  Degenerate fixed points (theta = pi) propagate as errors.
    """
    fp = fixed_points(pxp_ansatz_single(theta, phi))
    rho_r = fp.right_matrix()
    rho_out = _lift_isometry(pxp_site_tensor(theta, phi), rho_r)
    return _mixed_log_moment(rho_out) - _mixed_log_moment(rho_r)


def m_u_cell(theta_o, theta_e, phi_o=0.0, phi_e=0.0):
    """Circuit magic estimate for the two-site cell, per site.

    Two staircase steps (even then odd site, generating right to left)
    act on the cell bond fixed point; half of the added log-moment magic
    is the per-site estimate.
    """
    fp = fixed_points(pxp_ansatz(theta_o, theta_e, phi_o, phi_e), offset=0)
    rho_r = fp.right_matrix()
    rho1 = _lift_isometry(pxp_site_tensor(theta_e, phi_e), rho_r)
    rho2 = _lift_isometry(pxp_site_tensor(theta_o, phi_o), rho1)
    return 0.5 * (_mixed_log_moment(rho2) - _mixed_log_moment(rho_r))
