"""Experiment driver: plan ingestion, convergence sweeps, self-tests, reports.

The harness keeps the numerics elsewhere (oracle, hierarchy, symbols) and
concerns itself with orchestration only: deterministic sample generation,
a bounded worker pool over independent cells, log-log slope fits with the
raw (h, error) pairs kept alongside, and CSV/JSON writers whose output is
bitwise-stable under a fixed seed.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fock import (
    FockBasis,
    coherent_overlap,
    coherent_state,
)
from .hierarchy import (
    PHOTON_RATE_SIGN,
    bloch_spin0,
    compute_hierarchy,
    maxwell_cross_check,
    order0,
    order_j,
    photon_rate_expansion,
    propagator_G,
    spin_correction1,
    tangent_derivatives,
)
from .model import (
    Model,
    ModelConfig,
    ModelError,
    PhaseVector,
    polarization_project,
)
from .oracle import (
    Hamiltonian,
    ObservableSpec,
    OracleError,
    coherent_frame,
    evolved_frame,
    frame_symbol,
    apply_observable,
    photon_rate_exact,
)
from .symbols import (
    PolySymbol,
    heat,
    mizrahi_compose,
    wick_quantize,
)
from .fock import wick_symbol

WORKERS_ENV = "BLOCHLAB_WORKERS"

# Fit acceptance: slope must exceed M + 0.8; the upper sanity bound 1.2
# applies only at M = 0 where superconvergence would mean a wiring error.
SLOPE_MARGIN = 0.8
SLOPE_UPPER_M0 = 1.2

ZERO_COUPLING_TOL = 1e-8


class HarnessError(ModelError):
    """Raised for malformed plans and precheck failures."""


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise HarnessError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise HarnessError(f"{WORKERS_ENV} must be >= 1")
    return n


def _pool_map(fn, jobs):
    """Run jobs through the bounded pool; results keep the job order."""
    n = worker_count()
    if n == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep: a model, observables, samples, and an h ladder."""

    config: ModelConfig
    observables: tuple
    x_samples: tuple  # ((x_id, PhaseVector), ...)
    t_samples: tuple
    h_list: tuple
    M: int
    n_max: int
    tol: float = 1e-7
    oracle_tol: float = 1e-9
    seed: int = 0
    csv_path: str | None = None
    json_path: str | None = None

    def __post_init__(self):
        hs = np.asarray(self.h_list, dtype=float)
        if hs.size == 0:
            raise HarnessError("plan needs at least one h value")
        if np.any(hs <= 0.0) or np.any(hs > 1.0):
            raise HarnessError("every h must lie in (0, 1]")
        if np.any(np.diff(hs) >= 0.0):
            raise HarnessError("h list must be strictly decreasing")
        if self.M < 0:
            raise HarnessError("expansion order M must be >= 0")
        if self.n_max < 1:
            raise HarnessError("n_max must be positive")
        if not self.observables:
            raise HarnessError("plan needs at least one observable")
        if not self.x_samples or not self.t_samples:
            raise HarnessError("plan needs X and t samples")
        h_min = float(hs[-1])
        for x_id, x in self.x_samples:
            mean = x.norm() ** 2 / (2.0 * h_min)
            need = mean + 3.0 * np.sqrt(mean)
            if need > self.n_max:
                raise HarnessError(
                    f"cutoff adequacy precheck failed for {x_id}: "
                    f"mean occupation {mean:.3g} at h={h_min} needs "
                    f"n_max >= {need:.3g} (have {self.n_max})"
                )

    @property
    def model(self) -> Model:
        return Model(self.config)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentPlan":
        config = ModelConfig.from_dict(d["model"])
        observables = tuple(ObservableSpec.from_dict(o) for o in d["observables"])
        seed = int(d.get("seed", 0))
        xs_spec = d.get("X", {"count": 1, "norm": 0.5})
        samples = []
        if isinstance(xs_spec, dict):
            model = Model(config)
            grid_D = model.D
            rng = np.random.default_rng(seed)
            norm = float(xs_spec.get("norm", 0.5))
            for i in range(int(xs_spec.get("count", 1))):
                v = rng.standard_normal(2 * grid_D)
                v *= norm / np.linalg.norm(v)
                samples.append(
                    (f"X{i}", PhaseVector(v[:grid_D].copy(), v[grid_D:].copy()))
                )
        else:
            for i, entry in enumerate(xs_spec):
                x = PhaseVector(
                    np.asarray(entry["q"], dtype=float),
                    np.asarray(entry["p"], dtype=float),
                )
                samples.append((entry.get("id", f"X{i}"), x))
        out = d.get("output", {})
        return ExperimentPlan(
            config=config,
            observables=observables,
            x_samples=tuple(samples),
            t_samples=tuple(float(t) for t in d["t"]),
            h_list=tuple(float(h) for h in d["h"]),
            M=int(d.get("M", 0)),
            n_max=int(d["n_max"]),
            tol=float(d.get("tol", 1e-7)),
            oracle_tol=float(d.get("oracle_tol", 1e-9)),
            seed=seed,
            csv_path=out.get("csv"),
            json_path=out.get("json"),
        )

    @staticmethod
    def from_file(path) -> "ExperimentPlan":
        with open(path) as fh:
            return ExperimentPlan.from_dict(json.load(fh))


def default_plan_dict() -> dict:
    """Desk-scale sweep: one spin, single-mode grid, four h values."""
    return {
        "model": {
            "spins": {"positions": [[0.0, 0.0, 0.0]]},
            "field": {"beta": [0.0, 0.0, 1.0]},
            "grid": {"kpoints": [[0.0, 0.0, 1.0]], "weights": [1.0]},
        },
        "n_max": 30,
        "h": [0.4, 0.2, 0.1, 0.05],
        "t": [1.0],
        "M": 1,
        "observables": [
            {"kind": "spin", "axis": 1, "spin": 1},
            {"kind": "field_B", "axis": 2, "point": [0.0, 0.0, 0.0]},
        ],
        "X": {"count": 1, "norm": 0.5},
        "seed": 20260826,
        "tol": 1e-7,
    }


# ---------------------------------------------------------------------------
# slope fits


def fit_slope(hs, errors):
    """Least-squares slope and R^2 of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if hs.size < 4:
        raise HarnessError("slope fit needs at least 4 h values")
    if np.any(errors <= 0.0):
        raise HarnessError("slope fit needs positive errors")
    lx, ly = np.log(hs), np.log(errors)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(r2)


def slope_passes(slope: float, M: int) -> bool:
    if slope < M + SLOPE_MARGIN:
        return False
    if M == 0 and slope > SLOPE_UPPER_M0:
        return False
    return True


# ---------------------------------------------------------------------------
# convergence sweep


@dataclass(frozen=True)
class SweepCell:
    """One (observable, t, X, h) comparison."""

    observable: str
    t: float
    x_id: str
    h: float
    error: float | None
    status: str  # ok | exact | failed:<reason>
    hygiene: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConvergenceReport:
    plan_meta: dict
    cells: tuple  # SweepCell, canonical order
    fits: tuple  # dicts: observable, t, x_id, slope, r2, expected, status
    coefficients: dict  # (obs, t, x_id) -> list of matrices
    passed: bool

    def to_dict(self) -> dict:
        return {
            "kind": "convergence",
            "plan": self.plan_meta,
            "passed": self.passed,
            "fits": list(self.fits),
            "cells": [
                {
                    "observable": c.observable,
                    "t": c.t,
                    "X_id": c.x_id,
                    "h": c.h,
                    "error": c.error,
                    "status": c.status,
                    "hygiene": c.hygiene,
                }
                for c in self.cells
            ],
        }


def _operator_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.atleast_2d(a), 2))


def _coupling_norm(model: Model) -> float:
    return max(
        (b.norm() for row in model.couplings for b in row),
        default=0.0,
    )


def _cell_sort_key(c: SweepCell):
    return (c.observable, c.t, c.x_id, -c.h)


def run_convergence(plan: ExperimentPlan) -> ConvergenceReport:
    """Exact symbols vs hierarchy partial sums over the plan's h ladder."""
    model = plan.model
    zero_coupling = _coupling_norm(model) == 0.0

    # coefficients are h-independent: one hierarchy run per (obs, t, X)
    coeff_jobs = [
        (obs, t, x_id, x)
        for obs in plan.observables
        for t in plan.t_samples
        for (x_id, x) in plan.x_samples
    ]

    def _coeffs(job):
        obs, t, x_id, x = job
        res = compute_hierarchy(model, obs, t, x, plan.M, tol=plan.tol)
        return (obs.label(), t, x_id), res.orders

    coefficients = dict(_pool_map(_coeffs, coeff_jobs))

    # one Hamiltonian per h, one propagated frame per (h, t, X)
    basis = FockBasis(model.D, plan.n_max)
    hams = {h: Hamiltonian(model, basis, h) for h in plan.h_list}

    frame_jobs = [
        (h, t, x_id, x)
        for h in plan.h_list
        for t in plan.t_samples
        for (x_id, x) in plan.x_samples
    ]

    def _frame(job):
        h, t, x_id, x = job
        ham = hams[h]
        try:
            frame, log = evolved_frame(ham, t, x, tol=plan.oracle_tol)
        except (OracleError, ModelError) as exc:
            return (h, t, x_id), (None, f"failed:{exc}")
        frame0 = coherent_frame(ham, x)
        drift = max(
            abs(ham.energy(frame[:, :, j]) - ham.energy(frame0[:, :, j]))
            / max(abs(ham.energy(frame0[:, :, j])), 1.0)
            for j in range(frame.shape[2])
        )
        hygiene = {
            "unitarity_defect": log.unitarity_defect,
            "energy_drift": drift,
        }
        return (h, t, x_id), (frame, hygiene)

    frames = dict(_pool_map(_frame, frame_jobs))

    cells = []
    errors_by_fit = {}
    for obs in plan.observables:
        for t in plan.t_samples:
            for x_id, x in plan.x_samples:
                orders = coefficients[(obs.label(), t, x_id)]
                for h in plan.h_list:
                    frame, info = frames[(h, t, x_id)]
                    if frame is None:
                        cells.append(
                            SweepCell(obs.label(), t, x_id, h, None, info)
                        )
                        continue
                    ham = hams[h]
                    exact = np.atleast_2d(
                        frame_symbol(frame, apply_observable(ham, obs, frame))
                    )
                    # slopes for every partial sum up to M come from the
                    # same frames; the cell rows keep the plan's M
                    partial = np.zeros_like(exact)
                    for order_used in range(plan.M + 1):
                        partial = partial + (h**order_used) * np.atleast_2d(
                            orders[order_used]
                        )
                        err = _operator_norm(exact - partial)
                        errors_by_fit.setdefault(
                            (obs.label(), t, x_id, order_used), []
                        ).append((h, err))
                        if order_used == plan.M:
                            status = "exact" if zero_coupling else "ok"
                            cells.append(
                                SweepCell(obs.label(), t, x_id, h, err, status, info)
                            )

    fits = []
    all_pass = True
    for (label, t, x_id, order_used), pairs in sorted(errors_by_fit.items()):
        hs = [p[0] for p in pairs]
        es = [p[1] for p in pairs]
        base = {
            "observable": label,
            "t": t,
            "X_id": x_id,
            "M": order_used,
            "expected": order_used + 1,
        }
        if zero_coupling:
            ok = max(es) <= ZERO_COUPLING_TOL
            fits.append(
                dict(
                    base,
                    slope=None,
                    r2=None,
                    max_error=max(es),
                    status="exact" if ok else "fail",
                )
            )
            all_pass &= ok
            continue
        if len(hs) < 4:
            fits.append(
                dict(base, slope=None, r2=None, status="insufficient-data")
            )
            all_pass = False
            continue
        slope, r2 = fit_slope(hs, es)
        ok = slope_passes(slope, order_used)
        fits.append(
            dict(base, slope=slope, r2=r2, status="pass" if ok else "fail")
        )
        all_pass &= ok

    if any(c.status.startswith("failed") for c in cells):
        all_pass = False

    cells.sort(key=_cell_sort_key)
    meta = {
        "seed": plan.seed,
        "M": plan.M,
        "n_max": plan.n_max,
        "h": list(plan.h_list),
        "t": list(plan.t_samples),
        "X_ids": [x_id for x_id, _ in plan.x_samples],
        "observables": [o.label() for o in plan.observables],
    }
    return ConvergenceReport(
        plan_meta=meta,
        cells=tuple(cells),
        fits=tuple(fits),
        coefficients=coefficients,
        passed=all_pass,
    )


# ---------------------------------------------------------------------------
# calculus self-test


@dataclass(frozen=True)
class CheckEntry:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tol": self.tol,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class SelftestReport:
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "kind": "selftest",
            "passed": self.passed,
            "entries": [e.to_dict() for e in self.entries],
        }


def _random_symbol(rng, D: int, degree: int) -> PolySymbol:
    out = PolySymbol(D, {})
    for _ in range(6):
        q_exp = rng.integers(0, degree + 1, size=D)
        p_exp = rng.integers(0, degree + 1, size=D)
        while q_exp.sum() + p_exp.sum() > degree:
            q_exp = rng.integers(0, degree + 1, size=D)
            p_exp = rng.integers(0, degree + 1, size=D)
        coeff = complex(rng.standard_normal(), rng.standard_normal())
        out = out + PolySymbol.from_qp_monomial(tuple(q_exp), tuple(p_exp), coeff)
    return out


def _rand_x(rng, D: int, scale: float) -> PhaseVector:
    v = rng.standard_normal(2 * D) * scale
    return PhaseVector(v[:D].copy(), v[D:].copy())


def run_calculus_selftest(seed: int = 20260826) -> SelftestReport:
    """Symbol-calculus and coherent-state identity battery.

    All residuals are relative to the scale of the compared quantities;
    the tolerances mirror the guarantees each identity carries (exact
    coefficient arithmetic vs truncation-limited comparisons).
    """
    rng = np.random.default_rng(seed)
    entries = []
    D, h = 2, 0.5
    basis = FockBasis(D, 25)

    # heat round-trip: H_{-h} H_h = id, exact coefficient arithmetic
    f = _random_symbol(rng, D, 6)
    rt = heat(heat(f, h), -h) - f
    scale = max(abs(v) for v in f.coeffs.values())
    res = max((abs(v) for v in rt.coeffs.values()), default=0.0) / scale
    entries.append(CheckEntry("heat-roundtrip", res, 1e-12))

    # Wick ordering: Op^wick(q^2 + p^2) = 2 h N
    qq = PolySymbol.from_qp_monomial((2, 0), (0, 0)) + PolySymbol.from_qp_monomial(
        (0, 0), (2, 0)
    )
    op = wick_quantize(qq, basis, h).toarray()
    # q^2 + p^2 lives on slot 0, so the operator is 2h x (slot-0 number)
    res = np.max(np.abs(op - np.diag(np.diag(op)))) + np.max(
        np.abs(np.diag(op) - 2.0 * h * basis.occupations[:, 0])
    )
    entries.append(CheckEntry("wick-ordering-2hN", float(res), 1e-12))

    # symbol o quantize round-trip on a random degree <= 3 symbol
    g = _random_symbol(rng, D, 3)
    x = _rand_x(rng, D, 0.3)
    opg = wick_quantize(g, basis, h)
    got = wick_symbol(basis, h, opg, x)
    want = g.eval(x)
    res = abs(got - want) / max(1.0, abs(want))
    entries.append(CheckEntry("symbol-quantize-roundtrip", float(res), 1e-6))

    # Mizrahi operator identity: symbol(Op(f) Op(g)) = C_h(f, g)
    f2 = _random_symbol(rng, D, 2)
    g2 = _random_symbol(rng, D, 2)
    prod = wick_quantize(f2, basis, h) @ wick_quantize(g2, basis, h)
    got = wick_symbol(basis, h, prod, x)
    want = mizrahi_compose(f2, g2, h).eval(x)
    res = abs(got - want) / max(1.0, abs(want))
    entries.append(CheckEntry("mizrahi-identity", float(res), 1e-6))

    # coherent overlap closed form vs truncated inner product
    xo = _rand_x(rng, D, 0.4)
    yo = _rand_x(rng, D, 0.4)
    cx, _ = coherent_state(basis, h, xo)
    cy, _ = coherent_state(basis, h, yo)
    res = abs(np.vdot(cx, cy) - coherent_overlap(h, xo, yo))
    entries.append(CheckEntry("coherent-overlap", float(res), 1e-10))

    # coherent state as displaced vacuum
    from scipy.linalg import expm

    from .fock import segal_field
    from .model import fmap

    small = FockBasis(1, 25)
    xs = PhaseVector(np.array([0.5]), np.array([-0.3]))
    gen = segal_field(small, h, fmap(xs)).toarray()
    vac = np.zeros(small.dim, dtype=complex)
    vac[0] = 1.0
    disp = expm((-1j / h) * gen) @ vac
    target, _ = coherent_state(small, h, xs)
    entries.append(
        CheckEntry("displacement-identity", float(np.max(np.abs(disp - target))), 1e-9)
    )

    # free-flow covariance of coherent states on the minimal grid
    from .fock import gamma_free_phases
    from .model import chi_flow_vector, minimal_grid_config

    model = Model(minimal_grid_config())
    b4 = FockBasis(4, 18)
    xf = _rand_x(rng, 4, 0.25)
    cf, _ = coherent_state(b4, h, xf)
    moved = gamma_free_phases(b4, model.grid.slot_omegas, 0.8) * cf
    tgt, _ = coherent_state(b4, h, chi_flow_vector(model.grid, 0.8, xf))
    entries.append(
        CheckEntry("free-flow-covariance", float(np.max(np.abs(moved - tgt))), 1e-10)
    )

    return SelftestReport(entries=tuple(entries))


# ---------------------------------------------------------------------------
# photon-rate sweep


@dataclass(frozen=True)
class PhotonRateReport:
    plan_meta: dict
    sign: float
    cells: tuple  # SweepCell
    fits: tuple
    polarization: tuple  # per X: norms of Pi_+/Pi_- parts
    passed: bool

    def to_dict(self) -> dict:
        return {
            "kind": "photon_rate",
            "plan": self.plan_meta,
            "sign": self.sign,
            "passed": self.passed,
            "fits": list(self.fits),
            "polarization": list(self.polarization),
            "cells": [
                {
                    "observable": c.observable,
                    "t": c.t,
                    "X_id": c.x_id,
                    "h": c.h,
                    "error": c.error,
                    "status": c.status,
                }
                for c in self.cells
            ],
        }


def run_photon_rate(plan: ExperimentPlan) -> PhotonRateReport:
    """Exact photon rate vs hierarchy partial sums, with the sign and the
    circular-polarization split of each X sample recorded."""
    model = plan.model
    M = min(plan.M, 1)

    pol = []
    for x_id, x in plan.x_samples:
        xp = polarization_project(model.grid, +1, x)
        xm = polarization_project(model.grid, -1, x)
        pol.append(
            {
                "X_id": x_id,
                "norm_plus": xp.norm(),
                "norm_minus": xm.norm(),
            }
        )

    def _orders(job):
        t, x_id, x = job
        return (t, x_id), photon_rate_expansion(model, t, x, M, tol=plan.tol)

    jobs = [(t, x_id, x) for t in plan.t_samples for (x_id, x) in plan.x_samples]
    orders_map = dict(_pool_map(_orders, jobs))

    basis = FockBasis(model.D, plan.n_max)
    hams = {h: Hamiltonian(model, basis, h) for h in plan.h_list}

    def _exact(job):
        h, t, x_id, x = job
        try:
            return (h, t, x_id), photon_rate_exact(
                hams[h], t, x, tol=plan.oracle_tol
            )
        except (OracleError, ModelError) as exc:
            return (h, t, x_id), f"failed:{exc}"

    exact_jobs = [
        (h, t, x_id, x)
        for h in plan.h_list
        for t in plan.t_samples
        for (x_id, x) in plan.x_samples
    ]
    exact_map = dict(_pool_map(_exact, exact_jobs))

    cells = []
    errors_by_fit = {}
    for order_used in range(M + 1):
        label = f"number_rate[M={order_used}]"
        for t in plan.t_samples:
            for x_id, x in plan.x_samples:
                orders = orders_map[(t, x_id)]
                for h in plan.h_list:
                    exact = exact_map[(h, t, x_id)]
                    if isinstance(exact, str):
                        cells.append(SweepCell(label, t, x_id, h, None, exact))
                        continue
                    partial = sum(
                        (h**j) * orders[j] for j in range(order_used + 1)
                    )
                    err = _operator_norm(np.atleast_2d(exact) - partial)
                    cells.append(SweepCell(label, t, x_id, h, err, "ok"))
                    errors_by_fit.setdefault((label, t, x_id, order_used), []).append(
                        (h, err)
                    )

    fits = []
    all_pass = True
    for (label, t, x_id, order_used), pairs in sorted(errors_by_fit.items()):
        hs = [p[0] for p in pairs]
        es = [p[1] for p in pairs]
        if len(hs) < 4:
            fits.append(
                {
                    "observable": label,
                    "t": t,
                    "X_id": x_id,
                    "slope": None,
                    "r2": None,
                    "status": "insufficient-data",
                }
            )
            all_pass = False
            continue
        slope, r2 = fit_slope(hs, es)
        ok = slope >= order_used + SLOPE_MARGIN
        fits.append(
            {
                "observable": label,
                "t": t,
                "X_id": x_id,
                "slope": slope,
                "r2": r2,
                "expected": order_used + 1,
                "status": "pass" if ok else "fail",
            }
        )
        all_pass &= ok
    if any(c.status.startswith("failed") for c in cells):
        all_pass = False

    cells.sort(key=_cell_sort_key)
    meta = {
        "seed": plan.seed,
        "M": M,
        "n_max": plan.n_max,
        "h": list(plan.h_list),
        "t": list(plan.t_samples),
        "X_ids": [x_id for x_id, _ in plan.x_samples],
    }
    return PhotonRateReport(
        plan_meta=meta,
        sign=PHOTON_RATE_SIGN,
        cells=tuple(cells),
        fits=tuple(fits),
        polarization=tuple(pol),
        passed=all_pass,
    )


# ---------------------------------------------------------------------------
# dual-path cross-check


@dataclass(frozen=True)
class CrosscheckReport:
    plan_meta: dict
    entries: tuple  # dicts: check, t, deviation, tol, passed
    hygiene: tuple
    passed: bool

    def to_dict(self) -> dict:
        return {
            "kind": "crosscheck",
            "plan": self.plan_meta,
            "passed": self.passed,
            "entries": list(self.entries),
            "hygiene": list(self.hygiene),
        }


def _rel_dev(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(_operator_norm(b), 1e-30)
    return _operator_norm(np.atleast_2d(a) - np.atleast_2d(b)) / scale


def run_crosscheck(plan: ExperimentPlan, tol: float = 1e-6) -> CrosscheckReport:
    """The three independent-path agreements, per t sample.

    Path pairs: order-0 Duhamel vs the precession solution, order-1
    Duhamel (spin) vs the forced-precession correction, and order-1
    Duhamel (field) vs the sourced-mode reconstruction.
    """
    model = plan.model
    x_id, x = plan.x_samples[0]
    entries = []
    hygiene = []

    def _one_t(t):
        out = []
        # order 0: Duhamel path vs precession path, all sites and axes
        triples = bloch_spin0(model, t, x, tol=plan.tol)
        dev0 = 0.0
        for tr in triples:
            for m in (1, 2, 3):
                obs = ObservableSpec(kind="spin", m=m, lam=tr.lam)
                direct = order0(model, obs, t, x, tol=plan.tol)
                dev0 = max(dev0, _rel_dev(tr.matrices[m - 1], direct))
        out.append({"check": "spin-order0", "t": t, "deviation": dev0})

        if t > 0.0:
            # order 1 spin: variation-of-constants vs Duhamel recursion
            ones = spin_correction1(model, t, x, tol=tol * 0.3)
            dev1 = 0.0
            for tr in ones:
                for m in (1, 2, 3):
                    obs = ObservableSpec(kind="spin", m=m, lam=tr.lam)
                    direct = order_j(model, obs, 1, t, x, tol=tol * 0.3)
                    scale = max(_operator_norm(np.atleast_2d(direct)), 1.0)
                    dev1 = max(
                        dev1,
                        _operator_norm(
                            np.atleast_2d(tr.matrices[m - 1]) - np.atleast_2d(direct)
                        )
                        / scale,
                    )
            out.append({"check": "spin-order1", "t": t, "deviation": dev1})

            # order 1 field: sourced modes vs Duhamel recursion
            mx = maxwell_cross_check(model, t, x, tol=tol)
            out.append(
                {
                    "check": "field-order1",
                    "t": t,
                    "deviation": mx.max_rel_dev,
                    "div_b": mx.div_b_residual,
                    "div_e": mx.div_e_residual,
                }
            )
        return out

    for group in _pool_map(_one_t, list(plan.t_samples)):
        entries.extend(group)

    # hygiene probes: propagator unitarity and tangent-vs-FD residuals
    t_max = max(plan.t_samples)
    state = propagator_G(model, t_max, 0.0, x, tol=plan.tol)
    hygiene.append(
        {"check": "propagator-unitarity", "residual": state.unitarity_defect}
    )
    v = PhaseVector(np.ones(model.D), np.zeros(model.D)) * (1.0 / np.sqrt(model.D))
    tb = tangent_derivatives(model, 0, 0, v, t_max, x, tol=plan.tol)
    hygiene.append({"check": "tangent-fd-residual", "residual": tb.residual})

    for e in entries:
        e["tol"] = tol
        e["passed"] = e["deviation"] <= tol
    for hgi in hygiene:
        hgi["tol"] = 1e-6
        hgi["passed"] = hgi["residual"] <= 1e-6
    passed = all(e["passed"] for e in entries) and all(h["passed"] for h in hygiene)

    meta = {
        "seed": plan.seed,
        "t": list(plan.t_samples),
        "X_id": x_id,
    }
    return CrosscheckReport(
        plan_meta=meta,
        entries=tuple(entries),
        hygiene=tuple(hygiene),
        passed=passed,
    )


# ---------------------------------------------------------------------------
# writers

CSV_COLUMNS = ("observable", "t", "X_id", "h", "error", "slope", "r2", "status")


def _ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_csv(report, path) -> None:
    """Sweep table: one row per cell, with the fit of its (observable, t,
    X) group repeated on each row so the table stands alone."""
    _ensure_parent(path)
    fit_by_key = {}
    for f in getattr(report, "fits", ()):
        fit_by_key[(f["observable"], f["t"], f["X_id"])] = f
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for c in report.cells:
            fit = fit_by_key.get((c.observable, c.t, c.x_id), {})
            writer.writerow(
                [
                    c.observable,
                    repr(c.t),
                    c.x_id,
                    repr(c.h),
                    "" if c.error is None else repr(c.error),
                    "" if fit.get("slope") is None else repr(fit.get("slope")),
                    "" if fit.get("r2") is None else repr(fit.get("r2")),
                    c.status if c.status != "ok" else fit.get("status", "ok"),
                ]
            )


def write_json(report, path) -> None:
    _ensure_parent(path)
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
