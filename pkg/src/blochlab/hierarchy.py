"""Semiclassical hierarchy of an evolved observable's Wick symbol.

For affine observables A(X) = (F_A . X) I + S_A the evolved symbol expands
in powers of h.  Order 0 is classical transport of the field part plus
conjugation of the spin part by the propagator G(t, s, X); higher orders
follow a Duhamel recursion whose forcing pairs the constant gradient of
the interaction symbol with directional derivatives of the previous order.

Two independent computational paths exist for the first-order objects:
the recursion (order_j) and the sourced Maxwell / corrected Bloch systems
(maxwell_cross_check, spin_correction1).  Their agreement is the main
internal consistency check of the module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blochlab.model import (
    Model,
    ModelError,
    PhaseVector,
    apply_helicity,
    chi_flow_vector,
    coupling_B,
    coupling_B_gradient,
    fmap,
)
from blochlab.oracle import ObservableSpec


class HierarchyError(ModelError):
    """Integration failures, grid-refinement failures, residual breaches."""


# resolved empirically against the exact photon-rate oracle; see the
# commutator (i/h)[H, N (x) I] = - sum Phi_{S,h}(F B) (x) sigma
PHOTON_RATE_SIGN = -1.0

_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _EPS3[_i, _j, _k], _EPS3[_i, _k, _j] = 1.0, -1.0


def _cross_mat(x: np.ndarray) -> np.ndarray:
    """C(x) with C(x) v = x cross v."""
    return np.array(
        [
            [0.0, -x[2], x[1]],
            [x[2], 0.0, -x[0]],
            [-x[1], x[0], 0.0],
        ]
    )


# ---------------------------------------------------------------------------
# free flow


@dataclass(frozen=True)
class FlowCache:
    """Precomputed per-slot rotation for one flow time chi_t."""

    grid: object
    t: float
    cos: np.ndarray = field(init=False)
    sin: np.ndarray = field(init=False)

    def __post_init__(self):
        om = self.grid.slot_omegas
        object.__setattr__(self, "cos", np.cos(om * self.t))
        object.__setattr__(self, "sin", np.sin(om * self.t))

    def apply(self, x: PhaseVector) -> PhaseVector:
        if x.dim != self.grid.D:
            raise ModelError("dimension mismatch")
        return PhaseVector(
            self.cos * x.q + self.sin * x.p, -self.sin * x.q + self.cos * x.p
        )

    def inverse(self) -> "FlowCache":
        return FlowCache(self.grid, -self.t)


def chi_flow(grid, t: float, x: PhaseVector) -> PhaseVector:
    """Free flow: per-mode clockwise rotation at frequency omega."""
    return chi_flow_vector(grid, t, x)


# ---------------------------------------------------------------------------
# generic adaptive RK4 with step doubling


def _integrate_adaptive(rhs, t0, t1, y0, tol, postprocess=None, log=None):
    """Classical RK4 with step-doubling control and Richardson update.

    rhs(t, y) -> dy/dt for a complex ndarray y of any shape.  postprocess,
    if given, is applied to y after every accepted step (used for polar
    re-unitarization).  Raises on step floor.
    """
    span = t1 - t0
    if span == 0.0:
        return np.array(y0, copy=True)
    direction = 1.0 if span > 0 else -1.0
    floor = 1e-12 * max(1.0, abs(span))

    def step(t, y, dt):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    t = t0
    y = np.array(y0, dtype=complex)
    dt = direction * min(1e-2, abs(span))
    while (t1 - t) * direction > 1e-15 * max(1.0, abs(span)):
        if abs(dt) > abs(t1 - t):
            dt = t1 - t
        big = step(t, y, dt)
        half = step(t, y, 0.5 * dt)
        small = step(t + 0.5 * dt, half, 0.5 * dt)
        err = float(np.max(np.abs(small - big)))
        if err <= tol:
            y = small + (small - big) / 15.0
            if postprocess is not None:
                y = postprocess(y)
            t += dt
            if log is not None:
                log["n_accepted"] = log.get("n_accepted", 0) + 1
                log["max_local_error"] = max(log.get("max_local_error", 0.0), err)
            if err < tol / 64.0:
                dt *= 2.0
        else:
            dt *= 0.5
            if log is not None:
                log["n_rejected"] = log.get("n_rejected", 0) + 1
            if abs(dt) < floor:
                raise HierarchyError("step size fell below the floor")
    return y


# ---------------------------------------------------------------------------
# propagator


@dataclass
class PropagatorState:
    """Unitary spin propagator G(t, s, X) with its integration log."""

    matrix: np.ndarray
    t: float
    s: float
    x: PhaseVector
    log: dict

    @property
    def unitarity_defect(self) -> float:
        g = self.matrix
        return float(np.linalg.norm(g.conj().T @ g - np.eye(g.shape[0])))


def _polar_project(g: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(g)
    return u @ vh


def propagator_G(
    model: Model, t: float, s: float, x: PhaseVector, tol: float = 1e-8
) -> PropagatorState:
    """Solve dG/dt = i G H_int(chi_t X), G(s, s) = I."""
    if tol <= 0:
        raise HierarchyError("tol must be positive")
    sd = model.spin_dim
    eye = np.eye(sd, dtype=complex)
    log: dict = {"n_projections": 0}

    def rhs(u, g):
        return 1j * (g @ model.h_int_symbol(chi_flow_vector(model.grid, u, x)))

    def post(g):
        defect = np.linalg.norm(g.conj().T @ g - eye)
        if defect > tol / 10.0:
            log["n_projections"] += 1
            return _polar_project(g)
        return g

    g = _integrate_adaptive(rhs, s, t, eye, tol, postprocess=post, log=log)
    return PropagatorState(matrix=g, t=t, s=s, x=x, log=log)


def _propagator_sweep(model: Model, t: float, x: PhaseVector, n: int) -> np.ndarray:
    """G(u_i, 0, X) on the uniform grid u_i = i t / n, shape (n+1, sd, sd).

    Fixed-substep RK4 between nodes (substep <= 0.01) with polar projection
    at each node; accurate far below the quadrature tolerances it feeds.
    """
    sd = model.spin_dim
    out = np.empty((n + 1, sd, sd), dtype=complex)
    g = np.eye(sd, dtype=complex)
    out[0] = g
    if t == 0.0 or n == 0:
        return out[: n + 1]
    panel = t / n
    sub = max(1, int(np.ceil(abs(panel) / 0.01)))
    dt = panel / sub

    # H_int(chi_u X) on the half-step grid, assembled in one vectorized pass
    bs, _, sigs, idx = _coupling_list(model)
    h_beta = sum(
        model.beta[m] * sigs[a] for a, (lam, m) in enumerate(idx)
    )
    stage = 0.5 * dt * np.arange(2 * n * sub + 1)
    ctab = _chi_pair_table(model.grid, bs, x, stage)  # (A, n_stages)
    h_stage = np.einsum("at,acd->tcd", ctab, sigs) + h_beta

    for i in range(n):
        for k in range(sub):
            j = 2 * (i * sub + k)
            h0, h1, h2 = h_stage[j], h_stage[j + 1], h_stage[j + 2]
            k1 = 1j * (g @ h0)
            k2 = 1j * ((g + 0.5 * dt * k1) @ h1)
            k3 = 1j * ((g + 0.5 * dt * k2) @ h1)
            k4 = 1j * ((g + dt * k3) @ h2)
            g = g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        g = _polar_project(g)
        out[i + 1] = g
    return out


# ---------------------------------------------------------------------------
# observables in affine form


def field_coupling(model: Model, obs: ObservableSpec) -> PhaseVector:
    """Linear-form vector of a field observable at its evaluation point."""
    b = coupling_B(model.grid, model.config, obs.m, obs.x)
    if obs.kind == "field_E":
        return apply_helicity(model.grid, b)
    if obs.kind == "field_E_pol":
        return fmap(b)
    return b


def observable_form(model: Model, obs: ObservableSpec):
    """(F_A, S_A) with A(X) = (F_A . X) I + S_A; either part may be None."""
    if obs.kind == "spin":
        return None, model.spin_ops[obs.lam - 1][obs.m - 1]
    if obs.kind.startswith("field"):
        return field_coupling(model, obs), None
    raise HierarchyError(
        "number_rate is not affine in this sense; use photon_rate_expansion"
    )


def order0(
    model: Model, obs: ObservableSpec, t: float, x: PhaseVector, tol: float = 1e-8
) -> np.ndarray:
    """A^[0](t, X) = (F_A . chi_t X) I + G(t,0,X) S_A G(t,0,X)*."""
    f_a, s_a = observable_form(model, obs)
    sd = model.spin_dim
    out = np.zeros((sd, sd), dtype=complex)
    if f_a is not None:
        out += f_a.dot(chi_flow_vector(model.grid, t, x)) * np.eye(sd)
    if s_a is not None:
        g = propagator_G(model, t, 0.0, x, tol).matrix
        out += g @ s_a @ g.conj().T
    return out


# ---------------------------------------------------------------------------
# quadrature helpers


def _trap_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _refine(compute, tol, n0=32, nmax=4096, label="quadrature"):
    """Double the grid until the trapezoid result settles, then extrapolate."""
    prev = compute(n0)
    n = n0
    while n < nmax:
        n *= 2
        cur = compute(n)
        scale = max(1.0, float(np.max(np.abs(cur))))
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol * scale:
            return cur + (cur - prev) / 3.0
        prev = cur
    raise HierarchyError(f"{label} did not converge below tol={tol}")


def _coupling_list(model: Model):
    """Flat (lam, m) coupling data: vectors B_a, F B_a and matrices sigma_a."""
    bs, fbs, sigs, idx = [], [], [], []
    for lam in range(model.N):
        for m in range(3):
            bs.append(model.couplings[lam][m])
            fbs.append(fmap(model.couplings[lam][m]))
            sigs.append(model.spin_ops[lam][m])
            idx.append((lam, m))
    return bs, fbs, np.array(sigs), idx


def _chi_pair_table(grid, left_vecs, right: PhaseVector, rgrid) -> np.ndarray:
    """table[a, i] = left_vecs[a] . chi_{rgrid[i]} right."""
    om = grid.slot_omegas
    ang = np.outer(np.asarray(rgrid, dtype=float), om)
    c, s = np.cos(ang), np.sin(ang)
    qr = c * right.q + s * right.p  # (nr, D)
    pr = -s * right.q + c * right.p
    lq = np.stack([v.q for v in left_vecs])
    lp = np.stack([v.p for v in left_vecs])
    return lq @ qr.T + lp @ pr.T


# ---------------------------------------------------------------------------
# order j >= 1 via the Duhamel recursion


def _order1_on_grid(model, obs, t, x, n):
    f_a, s_a = observable_form(model, obs)
    bs, fbs, sig_stack, _ = _coupling_list(model)
    T = _propagator_sweep(model, t, x, n)
    dt = t / n
    w = _trap_weights(n, dt)
    # conjugated coupling spins Sig[i, a] = T_i sigma_a T_i*
    Sig = np.einsum("iab,qbc,idc->iqad", T, sig_stack, T.conj())

    if s_a is None:
        # pure field: Phi^[0](s) = - sum_a (F_A . chi_s F B_a) sigma_a,
        # X-independent, so only the conjugated spins enter.
        r = t - dt * np.arange(n + 1)
        ctab = np.stack(
            [_chi_pair_table(model.grid, [f_a], fb, r)[0] for fb in fbs]
        )  # (A, n+1)
        return -np.einsum("i,ai,iacd->cd", w, ctab, Sig)

    # spin observable.  The inner Duhamel layer needs, for every u,
    #   N_V(u) = i int_u^t (B_{a'} . chi_{w-u} V) Sig_{a'}(w) dw;
    # the pairing kernel is a finite cosine/sine sum over the distinct mode
    # frequencies, so it separates in (w, u) and the double quadrature
    # collapses to O(n) suffix integrals per frequency.
    K = T[n] @ s_a @ T[n].conj().T
    uniq, inv = np.unique(model.grid.slot_omegas, return_inverse=True)
    ug = dt * np.arange(n + 1)
    cg = np.cos(np.outer(uniq, ug))  # (G, n+1)
    sg = np.sin(np.outer(uniq, ug))

    def pair_coeffs(right_vecs):
        # c_{a'}(r; V_a) = sum_g alpha[g,a',a] cos(g r) + beta[g,a',a] sin(g r)
        nG, A = len(uniq), len(bs)
        alpha = np.zeros((nG, A, A))
        beta = np.zeros((nG, A, A))
        for ap, b in enumerate(bs):
            for a, v in enumerate(right_vecs):
                ca = b.q * v.q + b.p * v.p
                sa = b.q * v.p - b.p * v.q
                np.add.at(alpha[:, ap, a], inv, ca)
                np.add.at(beta[:, ap, a], inv, sa)
        return alpha, beta

    def rev_cumtrapz(f):
        # suffix trapezoid integrals along axis 1
        inc = 0.5 * dt * (f[:, :-1] + f[:, 1:])
        out = np.zeros_like(f)
        out[:, :-1] = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
        return out

    fc = np.einsum("gi,ipcd->gipcd", cg, Sig)
    fs = np.einsum("gi,ipcd->gipcd", sg, Sig)
    rc = rev_cumtrapz(fc)  # int_u^t cos(g w) Sig(w) dw
    rs = rev_cumtrapz(fs)

    def inner(alpha, beta):
        t1 = np.einsum("gi,gpa,gipcd->iacd", cg, alpha, rc, optimize=True)
        t2 = np.einsum("gi,gpa,gipcd->iacd", cg, beta, rs, optimize=True)
        t3 = np.einsum("gi,gpa,gipcd->iacd", sg, alpha, rs, optimize=True)
        t4 = np.einsum("gi,gpa,gipcd->iacd", sg, beta, rc, optimize=True)
        return 1j * (t1 + t2 + t3 - t4)

    nb = inner(*pair_coeffs(bs))  # (n+1, A, sd, sd)
    nf = inner(*pair_coeffs(fbs))
    cb = nb @ K - K @ nb
    cf = nf @ K - K @ nf
    term = 0.5j * (Sig @ cb - cb @ Sig) - 0.5 * (Sig @ cf + cf @ Sig)
    return np.einsum("i,icd->cd", w, term.sum(axis=1))


def order_j(
    model: Model,
    obs: ObservableSpec,
    j: int,
    t: float,
    x: PhaseVector,
    tol: float = 1e-7,
) -> np.ndarray:
    """j-th hierarchy coefficient A^[j](t, X) of an affine observable."""
    if j < 1:
        raise HierarchyError("order_j handles j >= 1; use order0")
    sd = model.spin_dim
    if t == 0.0:
        return np.zeros((sd, sd), dtype=complex)
    if j == 1:
        return _refine(
            lambda n: _order1_on_grid(model, obs, t, x, n),
            tol,
            label="order-1 Duhamel quadrature",
        )
    return _order_high(model, obs, j, t, x, tol)


def _directional_prev(model, obs, jm1, s, y, v, tol, eps=1e-5):
    """Central-difference directional derivative of A^[j-1](s, .) at y."""
    vn = v.norm()
    if vn == 0.0:
        return np.zeros((model.spin_dim, model.spin_dim), dtype=complex)
    step = eps / vn

    def prev(z):
        if jm1 == 0:
            return order0(model, obs, s, z, tol)
        return order_j(model, obs, jm1, s, z, tol)

    hi = prev(PhaseVector(y.q + step * v.q, y.p + step * v.p))
    lo = prev(PhaseVector(y.q - step * v.q, y.p - step * v.p))
    return (hi - lo) / (2.0 * step)


def _order_high(model, obs, j, t, x, tol):
    """Orders j >= 2: the same Duhamel integral with finite-difference
    tangents of the previous order.  Accurate to the FD floor (~1e-8)."""
    bs, fbs, sigs, _ = _coupling_list(model)

    def on_grid(n):
        T = _propagator_sweep(model, t, x, n)
        dt = t / n
        w = _trap_weights(n, dt)
        acc = np.zeros((model.spin_dim, model.spin_dim), dtype=complex)
        for i in range(n + 1):
            u = i * dt
            s = t - u
            y = chi_flow_vector(model.grid, u, x)
            phi = np.zeros_like(acc)
            for b, fb, sig in zip(bs, fbs, sigs):
                db = _directional_prev(model, obs, j - 1, s, y, b, tol * 0.1)
                df = _directional_prev(model, obs, j - 1, s, y, fb, tol * 0.1)
                phi += 0.5j * (sig @ db - db @ sig) - 0.5 * (sig @ df + df @ sig)
            acc += w[i] * (T[i] @ phi @ T[i].conj().T)
        return acc

    return _refine(on_grid, max(tol, 1e-6), n0=16, nmax=256, label="order-j quadrature")


# ---------------------------------------------------------------------------
# order-0 Bloch spins and tangents


@dataclass
class SpinTriple:
    """S_m^{[lam, j]}(t, X) for m = 1..3 as spin-register matrices."""

    lam: int
    order: int
    rotation: np.ndarray | None  # SO(3) path endpoint, order 0 only
    matrices: np.ndarray  # (3, sd, sd)


def _site_field(model, lam, u, x) -> np.ndarray:
    """b_m(u) = beta_m + B_{m x_lam} . chi_u X."""
    y = chi_flow_vector(model.grid, u, x)
    return np.array(
        [model.beta[m] + model.couplings[lam][m].dot(y) for m in range(3)]
    )


def _rotation_endpoint(model, lam, t, x, tol) -> np.ndarray:
    def rhs(u, r):
        return 2.0 * _cross_mat(_site_field(model, lam, u, x)) @ r

    r = _integrate_adaptive(rhs, 0.0, t, np.eye(3, dtype=complex), tol)
    return np.real(r)


def bloch_spin0(
    model: Model, t: float, x: PhaseVector, tol: float = 1e-8
) -> list[SpinTriple]:
    """Integrate dS/dt = 2 (beta + B^[0](x_lam, t, X)) x S, S(0) = sigma."""
    if tol <= 0:
        raise HierarchyError("tol must be positive")
    out = []
    for lam in range(model.N):
        r = _rotation_endpoint(model, lam, t, x, tol)
        sig = np.array(model.spin_ops[lam])
        mats = np.einsum("mk,kab->mab", r, sig)
        out.append(SpinTriple(lam=lam + 1, order=0, rotation=r, matrices=mats))
    return out


@dataclass
class TangentBundleState:
    """Order-0 spin triple with its directional derivative along V."""

    lam: int
    t: float
    direction: PhaseVector
    rotation: np.ndarray
    drotation: np.ndarray
    S: np.ndarray  # (3, sd, sd)
    dS: np.ndarray  # (3, sd, sd)
    residual: float


def _rotation_tangent(model, lam, t, x, v, tol):
    """Joint (R, dR) integration of the linearized site-Bloch system."""

    def rhs(u, y):
        r, d = y[0], y[1]
        om = 2.0 * _cross_mat(_site_field(model, lam, u, x))
        yv = chi_flow_vector(model.grid, u, v)
        db = np.array([model.couplings[lam][m].dot(yv) for m in range(3)])
        return np.stack([om @ r, om @ d + 2.0 * _cross_mat(db) @ r])

    y0 = np.stack([np.eye(3, dtype=complex), np.zeros((3, 3), dtype=complex)])
    y = _integrate_adaptive(rhs, 0.0, t, y0, tol)
    return np.real(y[0]), np.real(y[1])


def tangent_derivatives(
    model: Model,
    lam: int,
    j: int,
    v: PhaseVector,
    t: float,
    x: PhaseVector,
    tol: float = 1e-8,
) -> TangentBundleState:
    """Directional derivative of S^{[lam, j]}(t, X) along V with an
    independent finite-difference residual check."""
    if j != 0:
        raise HierarchyError("tangent derivatives are provided at order 0 only")
    r, d = _rotation_tangent(model, lam - 1, t, x, v, tol)
    # finite-difference probe, centered, eps = 1e-5 in the direction V
    vn = v.norm()
    if vn == 0.0:
        residual = 0.0
    else:
        eps = 1e-5 / vn
        rp = _rotation_endpoint(
            model, lam - 1, t, PhaseVector(x.q + eps * v.q, x.p + eps * v.p), tol
        )
        rm = _rotation_endpoint(
            model, lam - 1, t, PhaseVector(x.q - eps * v.q, x.p - eps * v.p), tol
        )
        fd = (rp - rm) / (2.0 * eps)
        residual = float(
            np.linalg.norm(fd - d) / max(np.linalg.norm(d), 1.0)
        )
        if residual > max(tol, 1e-6):
            raise HierarchyError(
                f"tangent residual breach: {residual:.3e} along |V|={vn:.3e}"
            )
    sig = np.array(model.spin_ops[lam - 1])
    return TangentBundleState(
        lam=lam,
        t=t,
        direction=v,
        rotation=r,
        drotation=d,
        S=np.einsum("mk,kab->mab", r, sig),
        dS=np.einsum("mk,kab->mab", d, sig),
        residual=residual,
    )


# ---------------------------------------------------------------------------
# sourced Maxwell cross-check


def _maxwell_sweep(model: Model, t: float, x: PhaseVector, n: int):
    """Jointly integrate per-site rotations R^mu and the matrix-valued
    first-order mode amplitudes Z on a uniform grid.

    dZ_q = omega Z_p, dZ_p = -omega Z_q, sourced by - sum_a (F B_a) S_a^0(u).
    Returns (R_path (n+1, N, 3, 3), Z_path (n+1, 2, D, sd, sd))."""
    D, sd, N = model.D, model.spin_dim, model.N
    om = model.grid.slot_omegas
    _, fbs, sigs, idx = _coupling_list(model)
    fq = np.stack([v.q for v in fbs])  # (A, D)
    fp = np.stack([v.p for v in fbs])

    r_path = np.empty((n + 1, N, 3, 3))
    z_path = np.zeros((n + 1, 2, D, sd, sd), dtype=complex)
    state_r = np.stack([np.eye(3) for _ in range(N)]).astype(complex)
    state_z = np.zeros((2, D, sd, sd), dtype=complex)
    r_path[0] = np.real(state_r)
    if t == 0.0 or n == 0:
        return r_path[: n + 1], z_path[: n + 1]
    panel = t / n
    sub = max(1, int(np.ceil(abs(panel) / 0.01)))
    dt = panel / sub

    def rhs(u, rr, zz):
        drr = np.empty_like(rr)
        for lam in range(N):
            drr[lam] = 2.0 * _cross_mat(_site_field(model, lam, u, x)) @ rr[lam]
        # spin matrices S_a(u) = sum_k R^lam[m, k] sigma_k^[lam]
        s_mats = np.empty((len(idx), sd, sd), dtype=complex)
        for a, (lam, m) in enumerate(idx):
            s_mats[a] = np.einsum("k,kab->ab", rr[lam, m], np.array(model.spin_ops[lam]))
        dz = np.empty_like(zz)
        dz[0] = om[:, None, None] * zz[1]
        dz[1] = -om[:, None, None] * zz[0]
        dz[0] -= np.einsum("aj,acd->jcd", fq, s_mats)
        dz[1] -= np.einsum("aj,acd->jcd", fp, s_mats)
        return drr, dz

    for i in range(n):
        u0 = i * panel
        for k in range(sub):
            uu = u0 + k * dt
            k1r, k1z = rhs(uu, state_r, state_z)
            k2r, k2z = rhs(uu + 0.5 * dt, state_r + 0.5 * dt * k1r, state_z + 0.5 * dt * k1z)
            k3r, k3z = rhs(uu + 0.5 * dt, state_r + 0.5 * dt * k2r, state_z + 0.5 * dt * k2z)
            k4r, k4z = rhs(uu + dt, state_r + dt * k3r, state_z + dt * k3z)
            state_r = state_r + (dt / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
            state_z = state_z + (dt / 6.0) * (k1z + 2 * k2z + 2 * k3z + k4z)
        r_path[i + 1] = np.real(state_r)
        z_path[i + 1] = state_z
    return r_path, z_path


def _contract_field(vec: PhaseVector, z: np.ndarray) -> np.ndarray:
    """(vec . Z) for matrix-valued mode amplitudes Z of shape (2, D, sd, sd)."""
    return np.einsum("j,jcd->cd", vec.q, z[0]) + np.einsum("j,jcd->cd", vec.p, z[1])


@dataclass
class MaxwellCheckReport:
    """Dual-path comparison of the first-order radiated field."""

    t: float
    max_rel_dev: float
    entries: list
    div_b_residual: float
    div_e_residual: float
    passed: bool


def first_order_modes(
    model: Model, t: float, x: PhaseVector, tol: float = 1e-7
) -> np.ndarray:
    """Matrix-valued mode amplitudes Z(t) of the sourced Maxwell system."""

    def endpoint(n):
        _, z = _maxwell_sweep(model, t, x, n)
        return z[-1]

    return _refine(endpoint, tol, n0=32, label="sourced Maxwell integration")


def maxwell_cross_check(
    model: Model,
    t: float,
    x: PhaseVector,
    tol: float = 1e-6,
    points=None,
) -> MaxwellCheckReport:
    """Compare B^[1] from the sourced mode system against the recursion."""
    z = first_order_modes(model, t, x, tol=min(tol, 1e-7))
    if points is None:
        points = [np.asarray(p, dtype=float) for p in model.config.positions]
    entries = []
    max_dev = 0.0
    for pt in points:
        for m in (1, 2, 3):
            vec = coupling_B(model.grid, model.config, m, pt)
            lhs = _contract_field(vec, z)
            obs = ObservableSpec(kind="field_B", m=m, x=pt)
            rhs = order_j(model, obs, 1, t, x, tol=min(tol * 0.1, 1e-7))
            scale = max(np.linalg.norm(rhs), 1e-12)
            dev = float(np.linalg.norm(lhs - rhs) / scale)
            entries.append({"point": pt.tolist(), "m": m, "rel_dev": dev})
            max_dev = max(max_dev, dev)
    # analytic divergence of the reconstructed first-order fields
    div_b = 0.0
    div_e = 0.0
    for pt in points:
        acc_b = np.zeros((model.spin_dim,) * 2, dtype=complex)
        acc_e = np.zeros_like(acc_b)
        for m in (1, 2, 3):
            grads = coupling_B_gradient(model.grid, model.config, m, pt)
            acc_b += _contract_field(grads[m - 1], z)
            acc_e += _contract_field(apply_helicity(model.grid, grads[m - 1]), z)
        div_b = max(div_b, float(np.linalg.norm(acc_b)))
        div_e = max(div_e, float(np.linalg.norm(acc_e)))
    return MaxwellCheckReport(
        t=t,
        max_rel_dev=max_dev,
        entries=entries,
        div_b_residual=div_b,
        div_e_residual=div_e,
        passed=max_dev <= tol,
    )


# ---------------------------------------------------------------------------
# first-order Bloch correction


def _spin1_on_grid(model, lam, t, x, n):
    """S^{[lam, 1]}(t, X) by variation of constants around the order-0
    rotation, with the radiated-field coupling and the tangent contraction
    K built from dB^[0] pairings along the coupling directions."""
    sd = model.spin_dim
    r_all, z_path = _maxwell_sweep(model, t, x, n)
    r_path = r_all[:, lam]
    dt = t / n
    w = _trap_weights(n, dt)
    sig = np.array(model.spin_ops[lam])
    bsl = [model.couplings[lam][m] for m in range(3)]
    rgrid = dt * np.arange(n + 1)
    # pbb[c, m, r] = B_{c x_lam} . chi_r B_{m x_lam}
    pbb = np.stack([_chi_pair_table(model.grid, bsl, b, rgrid) for b in bsl], axis=1)

    r_t = r_path[n]
    out = np.zeros((3, sd, sd), dtype=complex)
    for iw in range(n + 1):
        rw = r_path[iw]
        # radiated-field coupling, symmetrized: eps_{nab} {B^1_a, S^0_b}
        b1 = np.stack([_contract_field(bsl[a], z_path[iw]) for a in range(3)])
        s0 = np.einsum("bk,kcd->bcd", rw, sig)
        cpl = np.einsum("nab,acd,bde->nce", _EPS3, b1, s0) + np.einsum(
            "nab,bcd,ade->nce", _EPS3, s0, b1
        )
        # K(w): same-site contraction of coupling pairings with the
        # rotation transport, cumulative over u <= w
        if iw > 0:
            wu = _trap_weights(iw, dt)
            g3 = pbb[:, :, iw - np.arange(iw + 1)]  # [c, m, u]
            cmat = np.einsum("nca,cmu->umna", _EPS3, g3)
            trans = np.einsum("np,uqp->unq", rw, r_path[: iw + 1])  # R_w R_u^T
            m1 = np.einsum("umnp,upq->umnq", cmat, trans)
            kappa = -2.0 * np.einsum(
                "u,umnp,mpk,ukq->nq", wu, m1, _EPS3, r_path[: iw + 1]
            )
            kmat = np.einsum("nq,qcd->ncd", kappa, sig)
        else:
            kmat = np.zeros((3, sd, sd), dtype=complex)
        frc = cpl + kmat
        out += w[iw] * np.einsum("np,pcd->ncd", r_t @ rw.T, frc)
    return out


def spin_correction1(
    model: Model, t: float, x: PhaseVector, tol: float = 1e-6
) -> list[SpinTriple]:
    """First-order spin correction S^{[lam, 1]}(t, X), one triple per site."""
    if tol <= 0:
        raise HierarchyError("tol must be positive")
    out = []
    for lam in range(model.N):
        mats = _refine(
            lambda n: _spin1_on_grid(model, lam, t, x, n),
            tol * 0.1,
            label="spin-correction quadrature",
        )
        out.append(SpinTriple(lam=lam + 1, order=1, rotation=None, matrices=mats))
    return out


# ---------------------------------------------------------------------------
# photon-rate expansion


def photon_rate_expansion(
    model: Model, t: float, x: PhaseVector, M: int, tol: float = 1e-7
) -> list[np.ndarray]:
    """Coefficients N^[0..M](t, X) of the photon-rate symbol.

    N^[0] = sign * sum_a (F B_a . chi_t X) S_a^{[0]}(t, X); the first
    correction collects the three order-one cross terms of the composition
    of the polarized-field and spin expansions."""
    if M < 0:
        raise HierarchyError("expansion order must be nonnegative")
    if M > 1:
        raise HierarchyError("photon-rate expansion is provided to order 1")
    sd = model.spin_dim
    y = chi_flow_vector(model.grid, t, x)
    spins0 = bloch_spin0(model, t, x, tol=min(tol, 1e-9))
    n0 = np.zeros((sd, sd), dtype=complex)
    for lam in range(model.N):
        for m in range(3):
            e0 = fmap(model.couplings[lam][m]).dot(y)
            n0 += PHOTON_RATE_SIGN * e0 * spins0[lam].matrices[m]
    orders = [n0]
    if M == 0:
        return orders

    n1 = np.zeros((sd, sd), dtype=complex)
    spins1 = spin_correction1(model, t, x, tol=max(tol, 1e-7))
    for lam in range(model.N):
        pos = model.config.positions[lam]
        for m in range(3):
            fb = fmap(model.couplings[lam][m])
            e0 = fb.dot(y)
            # C^0(E^1, S^0): first-order polarized field times order-0 spin
            obs = ObservableSpec(kind="field_E_pol", m=m + 1, x=pos)
            e1 = PHOTON_RATE_SIGN * order_j(model, obs, 1, t, x, tol=tol)
            n1 += e1 @ spins0[lam].matrices[m]
            # C^0(E^0, S^1)
            n1 += PHOTON_RATE_SIGN * e0 * spins1[lam].matrices[m]
            # C^1(E^0, S^0): half the (B + i F B) directional derivative of
            # the order-0 spin along the transported polarized coupling
            wvec = chi_flow_vector(model.grid, -t, fb)
            tb = tangent_derivatives(model, lam + 1, 0, wvec, t, x, tol=min(tol, 1e-8))
            tf = tangent_derivatives(
                model, lam + 1, 0, fmap(wvec), t, x, tol=min(tol, 1e-8)
            )
            n1 += PHOTON_RATE_SIGN * 0.5 * (tb.dS[m] + 1j * tf.dS[m])
    orders.append(n1)
    return orders


# ---------------------------------------------------------------------------
# result container


@dataclass
class HierarchyResult:
    """Expansion coefficients of one observable with run metadata."""

    observable: str
    t: float
    x_q: np.ndarray
    x_p: np.ndarray
    orders: list
    meta: dict

    def to_dict(self) -> dict:
        return {
            "observable": self.observable,
            "t": self.t,
            "X": {"q": self.x_q.tolist(), "p": self.x_p.tolist()},
            "orders": [
                {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}
                for a in self.orders
            ],
            "meta": self.meta,
        }


def compute_hierarchy(
    model: Model,
    obs: ObservableSpec,
    t: float,
    x: PhaseVector,
    M: int,
    tol: float = 1e-7,
) -> HierarchyResult:
    """Orders 0..M of the evolved-symbol expansion for one observable."""
    if obs.kind == "number_rate":
        orders = photon_rate_expansion(model, t, x, M, tol=tol)
    else:
        orders = [order0(model, obs, t, x, tol=min(tol, 1e-9))]
        for j in range(1, M + 1):
            orders.append(order_j(model, obs, j, t, x, tol=tol))
    grid_id = f"D{model.D}:K{model.grid.n_kpoints}"
    meta = {
        "tol": tol,
        "grid": grid_id,
        "q_trace": model.q_form(t).trace if t != 0.0 else 0.0,
    }
    return HierarchyResult(
        observable=obs.label(),
        t=t,
        x_q=x.q.copy(),
        x_p=x.p.copy(),
        orders=orders,
        meta=meta,
    )
