"""epsilon-sweep harness: convergence of the band flow to the curve flow.

For each epsilon on the ladder the band problem is solved from the chosen
initial data and compared against one epsilon-independent reference
solution of the limit problem, computed at ``ref_factor`` times the curve
resolution and restricted to the sweep grid.  Errors are fitted by least
squares on ``(log eps, log err)``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fieldio
from .averaging import (
    average,
    average_square_defect,
    cubic_pairing_defect,
    dirichlet_form_defect,
    extend,
    extension_gradient_defect,
    normal_deviation,
    pairing_defect,
    psi_bounds,
)
from .config import ConfigError
from .discretization import SurfaceGrid, ThinGrid, norm_surface, norm_thin, surface_derivative
from .geometry import PlaneCurve, ThicknessProfile, ThinDomain, make_curve, validate
from .stepping import GLParams
from .surface_solver import SurfaceSolverConfig, solve_surface
from .thin_solver import ThinSolverConfig, solve

log = logging.getLogger(__name__)

ERROR_FLOOR = 1e-13
INIT_FAMILIES = ("well_prepared", "normal_perturbed", "sup_growing")
CHECKS = ("surface_rate", "thin_rate", "lemma_rates")


# ---------------------------------------------------------------- rates


@dataclass
class RateFit:
    pairs: list
    slope: float | None
    intercept: float | None
    max_residual: float | None
    excluded: list = field(default_factory=list)

    @property
    def suppressed(self) -> bool:
        return self.slope is None


def fit_rate(pairs, floor: float = ERROR_FLOOR) -> RateFit:
    """Least-squares slope of log(error) against log(eps).

    Pairs with error at or below ``floor`` are dropped and listed in
    ``excluded``; fewer than three surviving pairs suppress the fit.
    """
    pairs = [(float(e), float(v)) for e, v in pairs]
    kept = [(e, v) for e, v in pairs if v > floor and math.isfinite(v)]
    excluded = [(e, v) for e, v in pairs if not (v > floor and math.isfinite(v))]
    if len(kept) < 3:
        return RateFit(pairs, None, None, None, excluded)
    x = np.log([e for e, _ in kept])
    y = np.log([v for _, v in kept])
    X = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(X, y, rcond=None)
    res = np.abs(y - (slope * x + intercept))
    return RateFit(pairs, float(slope), float(intercept), float(res.max()), excluded)


# ---------------------------------------------------------- initial data


def fourier_series(coeffs, theta):
    """``a0 + sum_k a_k cos(k theta) + b_k sin(k theta)`` for ``[a0, a1, b1, ...]``."""
    theta = np.asarray(theta, dtype=float)
    out = np.full_like(theta, float(coeffs[0]))
    for k in range(1, len(coeffs) // 2 + 1):
        a = coeffs[2 * k - 1]
        b = coeffs[2 * k] if 2 * k < len(coeffs) else 0.0
        out = out + a * np.cos(k * theta) + b * np.sin(k * theta)
    return out


@dataclass(frozen=True)
class InitialData:
    """Initial-data families for the sweep.

    ``well_prepared``: constant extension of ``v0``.
    ``normal_perturbed``: adds ``eps**beta * amplitude * cos(pi sigma)``.
    ``sup_growing``: scales ``v0`` by a boundary-layer bump in sigma so that
    the sup norm equals ``c1 * eps**(alpha - 1/3)``.
    """

    family: str = "well_prepared"
    coefficients: tuple = (0.2, 0.5, 0.0, 0.0, 0.3)
    beta: float = 1.0
    amplitude: float = 1.0
    c1: float = 1.0
    alpha: float = 1.0 / 3.0

    def __post_init__(self):
        if self.family not in INIT_FAMILIES:
            raise ValueError(f"unknown initial data family {self.family!r}; choose from {INIT_FAMILIES}")
        if self.family == "normal_perturbed" and not self.beta > 0:
            raise ValueError("normal perturbation exponent beta must be positive")
        if self.family == "sup_growing" and not 0 < self.alpha <= 1 / 3 + 1e-12:
            raise ValueError("sup-growing family needs alpha in (0, 1/3]")

    def surface(self, theta, n_components=1) -> np.ndarray:
        cols = [fourier_series(self.coefficients, theta + 2 * np.pi * c / n_components)
                for c in range(n_components)]
        return np.stack(cols, axis=-1)

    def thin(self, grid: ThinGrid, n_components=1) -> np.ndarray:
        v0 = self.surface(grid.surface.theta, n_components)
        u0 = extend(grid, v0)
        eps = grid.epsilon
        sig = grid.sigma[None, :, None]
        if self.family == "normal_perturbed":
            u0 = u0 + eps**self.beta * self.amplitude * np.cos(np.pi * sig)
        elif self.family == "sup_growing":
            target = self.c1 * eps ** (self.alpha - 1.0 / 3.0)
            sup = float(np.sqrt(np.max(np.sum(v0**2, axis=-1))))
            H = max(0.0, target / sup - 1.0) if sup > 0 else 0.0
            s = math.sqrt(eps)
            bump = np.maximum(0.0, 1.0 - sig / s) ** 2
            u0 = u0 * (1.0 + H * bump)
        return u0


# ---------------------------------------------------------------- config


@dataclass
class SweepConfig:
    curve: PlaneCurve
    profile: ThicknessProfile
    epsilons: tuple = (0.2, 0.1, 0.05, 0.025)
    params: GLParams = GLParams()
    T: float = 0.5
    dt: float = 1e-3
    scheme: str = "imex_euler"
    n_snapshots: int = 11
    m_theta: int = 256
    m_sigma: int = 32
    ref_factor: int = 2
    init: InitialData = InitialData()
    checks: tuple = CHECKS
    seed: int = 0
    linear_solver: str = "direct_banded"
    cg_tol: float = 1e-10
    cg_max_iter: int = 2000
    backend: str = "fd"
    modes: int = 16
    weighted_basis: bool = True
    solve_epsilon: float = 0.1
    jobs: int = 1

    def __post_init__(self):
        eps = list(self.epsilons)
        if not eps:
            raise ConfigError("epsilon ladder is empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"epsilon ladder must be strictly decreasing, got {eps}")
        for e in eps + [self.solve_epsilon]:
            if not 0 < e < 1:
                raise ConfigError(f"epsilon {e} outside (0, 1)")
            rep = validate(ThinDomain(self.curve, self.profile, e))
            if not rep.ok:
                raise ConfigError(f"epsilon = {e}: " + "; ".join(rep.reasons))
        if self.n_snapshots < 2:
            raise ConfigError("need at least 2 snapshots")
        if self.ref_factor < 1 or int(self.ref_factor) != self.ref_factor:
            raise ConfigError("ref_factor must be a positive integer")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks {sorted(unknown)}; choose from {CHECKS}")
        try:
            self.time_config()
            self.surface_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def snapshot_times(self):
        return [float(t) for t in np.linspace(0.0, self.T, self.n_snapshots)]

    def time_config(self, dt=None) -> ThinSolverConfig:
        return ThinSolverConfig(dt=self.dt if dt is None else dt, T=self.T, scheme=self.scheme,
                                linear_solver=self.linear_solver, cg_tol=self.cg_tol,
                                cg_max_iter=self.cg_max_iter, snapshot_times=self.snapshot_times)

    def surface_config(self, backend=None) -> SurfaceSolverConfig:
        return SurfaceSolverConfig(dt=self.dt, T=self.T, scheme=self.scheme,
                                   linear_solver=self.linear_solver, cg_tol=self.cg_tol,
                                   cg_max_iter=self.cg_max_iter, snapshot_times=self.snapshot_times,
                                   backend=backend or self.backend, modes=self.modes,
                                   weighted_basis=self.weighted_basis)

    def domain(self, eps) -> ThinDomain:
        return ThinDomain(self.curve, self.profile, eps)

    def thin_grid(self, eps) -> ThinGrid:
        return ThinGrid(self.domain(eps), self.m_theta, self.m_sigma)

    @classmethod
    def from_dict(cls, cfg: dict, seed=None, jobs=None) -> "SweepConfig":
        try:
            curve = make_curve(cfg["geometry"]["family"], cfg["geometry"]["params"])
            profile = ThicknessProfile.of(cfg["profile"]["g0"], cfg["profile"]["g1"])
            params = GLParams(float(cfg["gl"]["lambda"]), int(cfg["gl"]["components"]),
                              bool(cfg["gl"]["reaction"]))
            ini = cfg["init"]
            init = InitialData(str(ini["family"]).lower(), tuple(float(c) for c in ini["params"]),
                               float(ini["beta"]), float(ini["amplitude"]), float(ini["c1"]),
                               float(ini["alpha"]))
            tm, gr, sv, sf = cfg["time"], cfg["grid"], cfg["solver"], cfg["surface"]
            return cls(
                curve=curve,
                profile=profile,
                epsilons=tuple(float(e) for e in cfg["sweep"]["epsilons"]),
                params=params,
                T=float(tm["T"]),
                dt=float(tm["dt"]),
                scheme=str(tm["scheme"]),
                n_snapshots=int(tm["snapshots"]),
                m_theta=int(gr["m_theta"]),
                m_sigma=int(gr["m_sigma"]),
                ref_factor=int(gr["ref_factor"]),
                init=init,
                checks=tuple(cfg["checks"]),
                seed=int(cfg["seed"] if seed is None else seed),
                linear_solver=str(sv["linear"]),
                cg_tol=float(sv["cg_tol"]),
                cg_max_iter=int(sv["cg_max_iter"]),
                backend=str(sf["backend"]),
                modes=int(sf["modes"]),
                weighted_basis=bool(sf["weighted_basis"]),
                solve_epsilon=float(cfg["solve"]["epsilon"]),
                jobs=int(cfg["sweep"]["jobs"] if jobs is None else jobs),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------- reference


@dataclass
class Reference:
    """Limit solution restricted to the sweep grid.

    ``snapshots`` follow ``cfg.snapshot_times``; ``steps`` holds the state
    after every time step (entry 0 is the initial state), which the band
    runs share because both use the same step sequence.
    """

    snapshots: list
    steps: list
    trace: object
    final: np.ndarray


def reference_solution(cfg: SweepConfig, factor: int | None = None) -> Reference:
    """Curve solution at ``factor`` times the sweep resolution."""
    factor = cfg.ref_factor if factor is None else factor
    fine = SurfaceGrid(cfg.curve, cfg.m_theta * factor)
    v0 = cfg.init.surface(fine.theta, cfg.params.n_components)
    steps = [v0[::factor].copy()]
    sol = solve_surface(fine, v0, cfg.params, cfg.profile, cfg.surface_config("fd"),
                        on_step=lambda k, t, h, a, b: steps.append(b[::factor].copy()))
    snaps = [sol.snapshots[t][::factor] for t in cfg.snapshot_times]
    return Reference(snaps, steps, sol.trace, sol.v)


class ErrorAccumulator:
    """Band and curve error norms of a band run against a reference.

    C-in-time norms are maxima over the snapshots; the L2-in-time gradient
    norms are integrated step by step with the same rule as the energy
    trace (right end point for IMEX Euler, midpoint for CN), so that initial
    layers in the normal direction are resolved.
    """

    def __init__(self, grid: ThinGrid, ref: Reference, scheme: str):
        self.grid, self.ref, self.scheme = grid, ref, scheme
        self.surface_grad_sq = 0.0
        self.thin_grad_sq = 0.0

    def _grad_sq(self, u, v):
        grid = self.grid
        sg = grid.surface
        ds = surface_derivative(sg, average(grid, u) - v)
        gt, gn = grid.frame_gradient(u - extend(grid, v))
        return (float(np.sum(sg.weights[:, None] * ds**2)),
                float(np.sum(grid.weights[..., None] * (gt**2 + gn**2))))

    def on_step(self, k, t, h, u_old, u_new):
        if self.scheme == "cn_ab2":
            u = 0.5 * (u_old + u_new)
            v = 0.5 * (self.ref.steps[k - 1] + self.ref.steps[k])
        else:
            u, v = u_new, self.ref.steps[k]
        s, b = self._grad_sq(u, v)
        self.surface_grad_sq += h * s
        self.thin_grad_sq += h * b

    def errors(self, u_snaps) -> dict:
        grid = self.grid
        sC, tC = [], []
        for u, v in zip(u_snaps, self.ref.snapshots):
            sC.append(norm_surface(grid.surface, average(grid, u) - v, "L2"))
            tC.append(norm_thin(grid, u - extend(grid, v), "L2"))
        scale = 1.0 / math.sqrt(grid.epsilon)
        thin_C = max(tC) * scale
        thin_H1 = math.sqrt(self.thin_grad_sq) * scale
        return {
            "surface_C": max(sC),
            "surface_H1": math.sqrt(self.surface_grad_sq),
            "thin": thin_C + thin_H1,
            "thin_C": thin_C,
            "thin_H1": thin_H1,
        }


@dataclass
class EpsilonRun:
    epsilon: float
    errors: dict
    errors_coarse_ref: dict
    trace: object
    u_final: np.ndarray


def _thin_job(cfg: SweepConfig, eps: float, ref: Reference, ref_coarse: Reference) -> EpsilonRun:
    grid = cfg.thin_grid(eps)
    u0 = cfg.init.thin(grid, cfg.params.n_components)
    acc = ErrorAccumulator(grid, ref, cfg.scheme)
    acc_c = ErrorAccumulator(grid, ref_coarse, cfg.scheme)

    def observe(*args):
        acc.on_step(*args)
        acc_c.on_step(*args)

    tc = cfg.time_config()
    sol = solve(grid, u0, cfg.params, tc, on_step=observe)
    if len(sol.trace) != len(ref.steps):
        raise RuntimeError("band and reference runs took different step sequences")
    u_snaps = [sol.snapshots[t] for t in cfg.snapshot_times]
    return EpsilonRun(eps, acc.errors(u_snaps), acc_c.errors(u_snaps), sol.trace, sol.u)


@dataclass
class SweepRuns:
    config: SweepConfig
    runs: list
    reference_trace: object
    reference_final: np.ndarray

    def pairs(self, check):
        return [(r.epsilon, r.errors[check]) for r in self.runs]

    def hygiene(self):
        """Relative change of each error when the reference resolution is halved.

        Rows are ``(eps, check, error, error_with_halved_reference, relative_change)``.
        """
        out = []
        for r in self.runs:
            for k, v in r.errors.items():
                w = r.errors_coarse_ref[k]
                rel = abs(w - v) / v if v > 0 else 0.0
                out.append((r.epsilon, k, v, w, rel))
        return out

    def max_hygiene_change(self, checks=("surface_C", "thin")) -> float:
        return max((h[4] for h in self.hygiene() if h[1] in checks), default=0.0)


def run_convergence_sweep(cfg: SweepConfig, jobs: int | None = None) -> SweepRuns:
    jobs = cfg.jobs if jobs is None else jobs
    ref = reference_solution(cfg)
    ref_coarse = ref if cfg.ref_factor == 1 else reference_solution(cfg, cfg.ref_factor // 2 or 1)
    if jobs > 1 and len(cfg.epsilons) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {e: pool.submit(_thin_job, cfg, e, ref, ref_coarse) for e in cfg.epsilons}
            runs = [futs[e].result() for e in cfg.epsilons]
    else:
        runs = [_thin_job(cfg, e, ref, ref_coarse) for e in cfg.epsilons]
    sr = SweepRuns(cfg, runs, ref.trace, ref.final)
    log.info("reference hygiene: max relative error change %.3g", sr.max_hygiene_change())
    return sr


def run_surface_rate(cfg: SweepConfig, runs: SweepRuns | None = None):
    runs = runs or run_convergence_sweep(cfg)
    return fit_rate(runs.pairs("surface_C")), runs


def run_thin_rate(cfg: SweepConfig, runs: SweepRuns | None = None):
    runs = runs or run_convergence_sweep(cfg)
    return fit_rate(runs.pairs("thin")), runs


# ------------------------------------------------------- lemma estimates


@dataclass(frozen=True)
class Manufactured:
    """Seeded smooth test fields: a sum of Cartesian plane waves for the band
    and low Fourier modes on the curve."""

    seed: int = 0
    n_components: int = 1
    n_waves: int = 4

    def _rng(self, salt):
        return np.random.default_rng([self.seed, salt])

    def cartesian(self, x) -> np.ndarray:
        rng = self._rng(1)
        out = []
        for _ in range(self.n_components):
            k = rng.uniform(-2.0, 2.0, size=(self.n_waves, 2))
            a = rng.uniform(0.2, 1.0, size=self.n_waves) / self.n_waves
            ph = rng.uniform(0, 2 * np.pi, size=self.n_waves)
            val = np.zeros(x.shape[:-1])
            for i in range(self.n_waves):
                val = val + a[i] * np.sin(x @ k[i] + ph[i])
            out.append(val)
        return np.stack(out, axis=-1)

    def thin(self, grid: ThinGrid) -> np.ndarray:
        x = grid.surface.position[:, None, :] + grid.r[..., None] * grid.surface.normal[:, None, :]
        return self.cartesian(x)

    def surface(self, theta, salt=2, modes=3) -> np.ndarray:
        rng = self._rng(salt)
        cols = [fourier_series(rng.uniform(-1, 1, size=2 * modes + 1), theta)
                for _ in range(self.n_components)]
        return np.stack(cols, axis=-1)


# name: (power of eps expected in the normalized quantity, kind)
LEMMA_QUANTITIES = {
    "at_diri": 1.5,
    "ave_non": 1.5,
    "code_l2": 1.5,
    "code_l2_first": 0.5,
    "coex_l2": 1.0,
    "ave_dif": 1.0,
    "ave_sq": 0.5,
    "ave_lp2": -0.5,
    "ave_lp4": -0.25,
    "ave_h1": -0.5,
    "atgr_l2": 0.5,
    "pairing": None,
}


def lemma_quantities(grid: ThinGrid, fields: Manufactured) -> dict:
    """Normalized defect quantities for one epsilon.

    Each entry is the raw quantity divided by the field norms on the right
    of the corresponding estimate, so that it behaves like ``eps**p``.
    """
    eps = grid.epsilon
    sg = grid.surface
    u = fields.thin(grid)
    eta = fields.surface(sg.theta, salt=2)
    zeta = fields.surface(sg.theta, salt=3)
    gt, gn = grid.frame_gradient(u)
    W = grid.weights[..., None]
    u_l2 = math.sqrt(float(np.sum(W * u**2)))
    dnu_l2 = math.sqrt(float(np.sum(W * gn**2)))
    u_h1 = math.sqrt(u_l2**2 + float(np.sum(W * (gt**2 + gn**2))))
    u_inf = float(np.sqrt(np.max(np.sum(u**2, axis=-1))))
    deta = norm_surface(sg, surface_derivative(sg, eta), "L2")
    Mu = average(grid, u)
    dMu = surface_derivative(sg, Mu)
    M_Pgrad = average(grid, gt)
    eta_bar = extend(grid, eta)
    g_eta2 = float(np.sum(grid.epsilon * grid.g[:, None] * sg.weights[:, None] * eta**2))
    et, en = grid.frame_gradient(eta_bar)
    return {
        "at_diri": dirichlet_form_defect(grid, u, eta) / (u_h1 * deta),
        "ave_non": cubic_pairing_defect(grid, u, zeta) / (u_inf**2 * (u_l2 + dnu_l2) * norm_surface(sg, zeta)),
        "code_l2": extension_gradient_defect(grid, eta) / deta,
        "code_l2_first": math.sqrt(float(np.sum(W * (et**2 + en**2)))) / deta,
        "coex_l2": abs(float(np.sum(W * eta_bar**2)) / g_eta2 - 1.0),
        "ave_dif": normal_deviation(grid, u) / (u_l2 + dnu_l2),
        "ave_sq": average_square_defect(grid, u) / (u_inf * (u_l2 + dnu_l2)),
        "ave_lp2": norm_surface(sg, Mu, "L2") / u_l2,
        "ave_lp4": norm_surface(sg, Mu, "L4") / norm_thin(grid, u, "L4"),
        "ave_h1": norm_surface(sg, dMu, "L2") / u_h1,
        "atgr_l2": norm_surface(sg, dMu - M_Pgrad, "L2") / u_h1,
        "pairing": pairing_defect(grid, u, eta) / max(1e-300, abs(float(np.sum(W * u * eta_bar)))),
        "psi_eps": psi_bounds(grid)["Psi_eps"],
        "psi_J": psi_bounds(grid)["Psi_J"],
    }


@dataclass
class LemmaReport:
    rows: list  # (eps, name, raw, compensated)
    fits: dict

    def compensated(self, name):
        return [c for _, n, _, c in self.rows if n == name]

    def bounded_ratio(self, name) -> float:
        c = self.compensated(name)
        return max(c) / min(c) if min(c) > 0 else math.inf


def run_lemma_rates(cfg: SweepConfig) -> LemmaReport:
    fields = Manufactured(cfg.seed, cfg.params.n_components)
    rows = []
    per_name = {}
    for eps in cfg.epsilons:
        q = lemma_quantities(cfg.thin_grid(eps), fields)
        for name, val in q.items():
            p = LEMMA_QUANTITIES.get(name)
            comp = val / eps**p if p is not None else val
            rows.append((eps, name, val, comp))
            per_name.setdefault(name, []).append((eps, val))
    fits = {n: fit_rate(pairs) for n, pairs in per_name.items() if LEMMA_QUANTITIES.get(n) is not None}
    return LemmaReport(rows, fits)


# ------------------------------------------------------------- outputs


def _eps_tag(eps):
    return f"{eps:g}"


def write_sweep_outputs(out_dir, runs: SweepRuns | None, lemmas: LemmaReport | None, checks=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep_rows, rate_rows = [], []
    if runs is not None:
        names = list(runs.runs[0].errors)
        for r in runs.runs:
            for n in names:
                sweep_rows.append((r.epsilon, n, r.errors[n]))
            r.trace.to_csv(out / f"trace_eps{_eps_tag(r.epsilon)}.csv")
            fieldio.write_field(out / f"snapshot_eps{_eps_tag(r.epsilon)}_final.csv", r.u_final)
        runs.reference_trace.to_csv(out / "reference_trace.csv")
        fieldio.write_field(out / "reference_final.csv", runs.reference_final)
        fieldio.write_table(out / "hygiene.csv",
                            ("epsilon", "check_name", "error_ref", "error_half_ref", "relative_change"),
                            runs.hygiene())
        for n in names:
            f = fit_rate(runs.pairs(n))
            rate_rows.append((n, _num(f.slope), _num(f.intercept), _num(f.max_residual)))
    if lemmas is not None:
        for eps, name, raw, comp in lemmas.rows:
            sweep_rows.append((eps, name, raw))
        fieldio.write_table(out / "defects.csv",
                            ("epsilon", "quantity_name", "raw_value", "compensated_ratio"), lemmas.rows)
        for n, f in lemmas.fits.items():
            rate_rows.append((n, _num(f.slope), _num(f.intercept), _num(f.max_residual)))
    fieldio.write_table(out / "sweep.csv", ("epsilon", "check_name", "error_value"), sweep_rows)
    fieldio.write_table(out / "rates.csv", ("check_name", "slope", "intercept", "max_residual"), rate_rows)
    return out


def _num(x):
    return float("nan") if x is None else float(x)


def run_sweep(cfg: SweepConfig, out_dir=None, jobs=None):
    """Run the configured checks; returns ``(runs, lemmas)`` and writes CSVs if asked."""
    runs = lemmas = None
    if {"surface_rate", "thin_rate"} & set(cfg.checks):
        runs = run_convergence_sweep(cfg, jobs)
    if "lemma_rates" in cfg.checks:
        lemmas = run_lemma_rates(cfg)
    if out_dir is not None:
        write_sweep_outputs(out_dir, runs, lemmas)
    return runs, lemmas
