"""Exact quantum dynamics on the truncated photon-spin space.

H(h) = H_ph (x) I + h H_int with H_ph = h dGamma(M_omega) and
H_int = sum_{lam,m} (beta_m + Phi_{S,h}(B_{m x_lam})) (x) sigma_m^[lam].

Propagation works in the interaction picture: psi(t) = (Gamma(chi_t) (x) I)
phi(t) where the free factor is an exact diagonal phase and phi solves
i phi' = H_int^free(t) phi with H_int^free(t) built on the rotated
couplings chi_{-t} B.  Since the free flow acts per mode as
z -> e^{-i omega t} z, the annihilator coefficients of the rotated
couplings are the initial ones times e^{-i omega t}, so the generator is a
small fixed set of sparse operators with scalar phases.  The stepper is
RK4 with step doubling (local Richardson error control); the remaining
generator is bounded uniformly in h, so steps do not shrink as h does.

States are arrays of shape (fock_dim, spin_dim, n_states) so a whole
coherent frame (the 2^N states Psi_X (x) e_j) evolves in one integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from blochlab.fock import FockBasis, coherent_state, dgamma, gamma_free_phases
from blochlab.model import Model, ModelError, PhaseVector, fmap

DEFAULT_TOL = 1e-9
DEFAULT_TAIL_TOL = 1e-10


class OracleError(ModelError):
    """Raised for propagation failures and truncation-threshold breaches."""


@dataclass(frozen=True)
class ObservableSpec:
    """Observable selector: field kinds carry (axis, point), spin kinds
    carry (axis, spin index), number_rate stands alone."""

    kind: str
    m: int | None = None
    x: np.ndarray | None = None
    lam: int | None = None

    KINDS = ("field_B", "field_E", "field_E_pol", "spin", "number_rate")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ModelError(f"unknown observable kind {self.kind!r}")
        if self.kind.startswith("field"):
            if self.m not in (1, 2, 3) or self.x is None:
                raise ModelError("field observables need axis m and point x")
            object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        elif self.kind == "spin":
            if self.m not in (1, 2, 3) or self.lam is None or self.lam < 1:
                raise ModelError(
                    "spin observables need axis m and a 1-based site index lam"
                )

    @staticmethod
    def from_dict(d: dict) -> "ObservableSpec":
        return ObservableSpec(
            kind=d["kind"],
            m=d.get("axis"),
            x=np.asarray(d["point"], dtype=float) if "point" in d else None,
            lam=d.get("spin"),
        )

    def label(self) -> str:
        if self.kind.startswith("field"):
            pt = ",".join(f"{v:g}" for v in self.x)
            return f"{self.kind}[m={self.m},x=({pt})]"
        if self.kind == "spin":
            return f"spin[m={self.m},lam={self.lam}]"
        return "number_rate"


@dataclass
class PropagationLog:
    """Step record of one interaction-picture integration."""

    n_accepted: int = 0
    n_rejected: int = 0
    step_sizes: list = field(default_factory=list)
    local_errors: list = field(default_factory=list)
    unitarity_defect: float = 0.0

    def to_dict(self) -> dict:
        return {
            "n_accepted": self.n_accepted,
            "n_rejected": self.n_rejected,
            "min_step": min(self.step_sizes, default=None),
            "max_local_error": max(self.local_errors, default=0.0),
            "unitarity_defect": self.unitarity_defect,
        }


class Hamiltonian:
    """Assembled truncated Hamiltonian with fast generator application."""

    def __init__(self, model: Model, basis: FockBasis, h: float):
        if h <= 0:
            raise OracleError("h must be positive")
        if basis.D != model.D:
            raise OracleError("basis mode count does not match the grid")
        self.model = model
        self.basis = basis
        self.h = float(h)
        self.spin_dim = model.spin_dim
        self.slot_omegas = model.grid.slot_omegas
        # exact diagonal free part (photon only), in units of energy
        self.hph_diag = h * (basis.occupations @ self.slot_omegas)
        # constant spin part of H_int
        self.spin_const = sum(
            model.beta[m] * model.spin_ops[lam][m]
            for lam in range(model.N)
            for m in range(3)
        )
        # per (lam, m) and per distinct frequency: sparse weighted
        # annihilators A with coefficients c_j = (b_q - i b_p)_j, so that
        # Phi_{S,h}(chi_{-t} B) = sqrt(h/2) sum_g [e^{-i w_g t} A_g + h.c.]
        omegas = self.slot_omegas
        self.omega_values = np.unique(omegas)
        groups = [np.nonzero(np.abs(omegas - w) < 1e-12)[0] for w in self.omega_values]
        self.field_terms = []  # list of (sigma, [(omega, A_sparse), ...])
        for lam in range(model.N):
            for m in range(3):
                b = model.couplings[lam][m]
                coeff = b.q - 1j * b.p
                per_group = []
                for w, idx in zip(self.omega_values, groups):
                    if not np.any(coeff[idx]):
                        continue
                    a_sum = sum(coeff[j] * basis.annihilator(j) for j in idx)
                    per_group.append((float(w), a_sum.tocsr()))
                self.field_terms.append((model.spin_ops[lam][m], per_group))

    # -- generator application -----------------------------------------

    def _interaction_apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        """H_int^free(t) psi for psi of shape (dim, s, n)."""
        dim, s, n = psi.shape
        flat = psi.reshape(dim, s * n)
        out = np.einsum("ab,fbn->fan", self.spin_const, psi).astype(complex)
        root = np.sqrt(self.h / 2.0)
        for sigma, per_group in self.field_terms:
            acc = np.zeros_like(flat)
            for w, a_op in per_group:
                ph = np.exp(-1j * w * t)
                acc += ph * (a_op @ flat)
                acc += np.conj(ph) * (a_op.conj().T @ flat)
            out += root * np.einsum("ab,fbn->fan", sigma, acc.reshape(dim, s, n))
        return out

    def interaction_operator(self, t: float = 0.0) -> sp.csr_matrix:
        """Materialized sparse H_int^free(t) on the tensor space."""
        s = self.spin_dim
        out = sp.kron(
            sp.identity(self.basis.dim, format="csr"),
            sp.csr_matrix(self.spin_const),
            format="csr",
        )
        root = np.sqrt(self.h / 2.0)
        for sigma, per_group in self.field_terms:
            acc = sp.csr_matrix((self.basis.dim, self.basis.dim), dtype=complex)
            for w, a_op in per_group:
                ph = np.exp(-1j * w * t)
                acc = acc + ph * a_op + np.conj(ph) * a_op.conj().T
            out = out + root * sp.kron(acc, sp.csr_matrix(sigma), format="csr")
        return out.tocsr()

    def full_operator(self) -> sp.csr_matrix:
        """H(h) = H_ph (x) I + h H_int as one sparse matrix."""
        free = sp.kron(
            sp.diags(self.hph_diag).astype(complex),
            sp.identity(self.spin_dim, format="csr"),
            format="csr",
        )
        return (free + self.h * self.interaction_operator(0.0)).tocsr()

    def energy(self, psi: np.ndarray) -> float:
        """<psi, H psi> for a single unit state of shape (dim, s)."""
        state = psi[:, :, None]
        hpsi = self.hph_diag[:, None, None] * state + self.h * self._interaction_apply(
            0.0, state
        )
        return float(np.vdot(state, hpsi).real)

    def free_phases(self, t: float) -> np.ndarray:
        return gamma_free_phases(self.basis, self.slot_omegas, t)


def build_hamiltonian(model: Model, basis: FockBasis, h: float) -> Hamiltonian:
    return Hamiltonian(model, basis, h)


def evolve_interaction_picture(
    ham: Hamiltonian,
    psi0: np.ndarray,
    t: float,
    tol: float = DEFAULT_TOL,
) -> tuple[np.ndarray, PropagationLog]:
    """e^{-i (t/h) H(h)} applied to states of shape (dim, s, n).

    Integrates the interaction-picture ODE i phi' = H_int^free(s) phi with
    an adaptive RK4 (step-doubling local error <= tol per step), then
    applies the exact free phase.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    squeeze = psi0.ndim == 2
    if squeeze:
        psi0 = psi0[:, :, None]
    if psi0.shape[0] != ham.basis.dim or psi0.shape[1] != ham.spin_dim:
        raise OracleError("state shape does not match the Hamiltonian")
    log = PropagationLog()
    norms0 = np.sqrt(np.sum(np.abs(psi0) ** 2, axis=(0, 1)))

    def rhs(s, phi):
        return -1j * ham._interaction_apply(s, phi)

    def rk4(s, phi, dt):
        k1 = rhs(s, phi)
        k2 = rhs(s + dt / 2, phi + dt / 2 * k1)
        k3 = rhs(s + dt / 2, phi + dt / 2 * k2)
        k4 = rhs(s + dt, phi + dt * k3)
        return phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    phi = psi0.copy()
    if t != 0.0:
        direction = 1.0 if t > 0 else -1.0
        remaining = abs(t)
        s = 0.0
        dt = min(0.1, remaining)
        floor = max(abs(t), 1.0) * 1e-12
        while remaining > 0.0:
            dt = min(dt, remaining)
            step = direction * dt
            big = rk4(s, phi, step)
            half = rk4(s, phi, step / 2)
            small = rk4(s + step / 2, half, step / 2)
            err = float(np.max(np.abs(small - big)))
            if err <= tol:
                # Richardson extrapolation from the halved solution
                phi = small + (small - big) / 15.0
                s += step
                remaining -= dt
                log.n_accepted += 1
                log.step_sizes.append(dt)
                log.local_errors.append(err)
                if err < tol / 64.0:
                    dt *= 2.0
            else:
                log.n_rejected += 1
                dt *= 0.5
                if dt < floor:
                    raise OracleError(
                        f"step control stalled at dt={dt:.3e}; "
                        f"log={log.to_dict()}"
                    )
    psi_t = ham.free_phases(t)[:, None, None] * phi
    norms = np.sqrt(np.sum(np.abs(psi_t) ** 2, axis=(0, 1)))
    log.unitarity_defect = float(np.max(np.abs(norms - norms0)))
    return (psi_t[:, :, 0] if squeeze else psi_t), log


# -- observables ------------------------------------------------------


def _field_coupling(model: Model, obs: ObservableSpec) -> PhaseVector:
    from blochlab.model import apply_helicity, coupling_B

    b = coupling_B(model.grid, model.config, obs.m, obs.x)
    if obs.kind == "field_B":
        return b
    if obs.kind == "field_E":
        return apply_helicity(model.grid, b)
    return fmap(b)  # field_E_pol


def apply_observable(
    ham: Hamiltonian, obs: ObservableSpec, psi: np.ndarray
) -> np.ndarray:
    """A psi for psi of shape (dim, s, n), without materializing A."""
    from blochlab.fock import segal_field

    model = ham.model
    dim, s, n = psi.shape
    if obs.kind == "spin":
        sigma = model.spin_ops[obs.lam - 1][obs.m - 1]
        return np.einsum("ab,fbn->fan", sigma, psi)
    if obs.kind.startswith("field"):
        v = _field_coupling(model, obs)
        f = segal_field(ham.basis, ham.h, v)
        return (f @ psi.reshape(dim, s * n)).reshape(dim, s, n)
    # number_rate generator: (i/h)[H, N (x) I]; the exact commutator gives
    # - sum_{lam,m} Phi_{S,h}(F B_{m x_lam}) (x) sigma_m^[lam]
    out = np.zeros_like(psi)
    for lam in range(model.N):
        for m in range(3):
            f = segal_field(ham.basis, ham.h, fmap(model.couplings[lam][m]))
            fp = (f @ psi.reshape(dim, s * n)).reshape(dim, s, n)
            out -= np.einsum("ab,fbn->fan", model.spin_ops[lam][m], fp)
    return out


def coherent_frame(
    ham: Hamiltonian, x: PhaseVector, tail_tol: float = DEFAULT_TAIL_TOL
) -> np.ndarray:
    """The 2^N states Psi_X (x) e_j stacked as (dim, s, s).

    Refuses when the coherent tail mass exceeds tail_tol (the cutoff can
    not represent the requested (X, h) pair faithfully).
    """
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c, tail = coherent_state(ham.basis, ham.h, x, tail_tol=tail_tol)
    if tail > tail_tol:
        raise OracleError(
            f"coherent tail mass {tail:.3e} exceeds {tail_tol:.1e}; "
            "increase n_max or h"
        )
    s = ham.spin_dim
    frame = np.zeros((ham.basis.dim, s, s), dtype=complex)
    for j in range(s):
        frame[:, j, j] = c
    return frame


def frame_symbol(frame_t: np.ndarray, applied: np.ndarray) -> np.ndarray:
    """Matrix <state_i, A state_j> from a frame and A applied to it."""
    return np.einsum("fsi,fsj->ij", frame_t.conj(), applied)


def evolved_frame(
    ham: Hamiltonian,
    t: float,
    x: PhaseVector,
    tol: float = DEFAULT_TOL,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> tuple[np.ndarray, PropagationLog]:
    """Forward-evolved coherent frame e^{-i(t/h)H}(Psi_X (x) e_j)."""
    return evolve_interaction_picture(ham, coherent_frame(ham, x, tail_tol), t, tol)


def evolved_wick_symbol(
    ham: Hamiltonian,
    obs: ObservableSpec,
    t: float,
    x: PhaseVector,
    tol: float = DEFAULT_TOL,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> np.ndarray:
    """Exact Wick symbol of the Heisenberg-evolved observable at X.

    Entries <U(t) Psi_i, A U(t) Psi_j> over the coherent spin frame; the
    conjugated operator is never materialized.
    """
    frame_t, _ = evolved_frame(ham, t, x, tol, tail_tol)
    return frame_symbol(frame_t, apply_observable(ham, obs, frame_t))


def evolved_wick_symbols(
    ham: Hamiltonian,
    observables: Sequence[ObservableSpec],
    t: float,
    x: PhaseVector,
    tol: float = DEFAULT_TOL,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> list[np.ndarray]:
    """Shared-propagation variant for several observables at one (t, X)."""
    frame_t, _ = evolved_frame(ham, t, x, tol, tail_tol)
    return [
        frame_symbol(frame_t, apply_observable(ham, obs, frame_t))
        for obs in observables
    ]


def photon_rate_exact(
    ham: Hamiltonian,
    t: float,
    x: PhaseVector,
    tol: float = DEFAULT_TOL,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> np.ndarray:
    """Wick symbol of the photon-number rate N'(t) = (i/h) e^{i(t/h)H}
    [H, N (x) I] e^{-i(t/h)H} at X."""
    return evolved_wick_symbol(
        ham, ObservableSpec(kind="number_rate"), t, x, tol, tail_tol
    )


def number_expectation(ham: Hamiltonian, frame_t: np.ndarray) -> np.ndarray:
    """Matrix of <state_i, (N (x) I) state_j> for a state frame."""
    n_diag = np.asarray(ham.basis.totals, dtype=float)
    return frame_symbol(frame_t, n_diag[:, None, None] * frame_t)
