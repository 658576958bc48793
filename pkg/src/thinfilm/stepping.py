"""Linearly implicit time stepping shared by the band and curve FD solvers.

Both solvers reduce to the same semi-discrete system

    M u' + A u = -lam M (|u|^2 - 1) u

with a diagonal (lumped) mass ``M`` and a symmetric positive semidefinite
stiffness ``A``.  Diffusion is treated implicitly, the cubic explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fieldio

SCHEMES = ("imex_euler", "cn_ab2")
_SCHEME_ALIASES = {
    "imex_euler": "imex_euler",
    "imex": "imex_euler",
    "euler": "imex_euler",
    "cn_ab2": "cn_ab2",
    "cn": "cn_ab2",
    "semiimplicit_cn": "cn_ab2",
    "semi_implicit_cn": "cn_ab2",
    "crank_nicolson": "cn_ab2",
}
LINEAR_SOLVERS = ("direct_banded", "conjugate_gradient")
_LINEAR_ALIASES = {
    "direct_banded": "direct_banded",
    "direct": "direct_banded",
    "lu": "direct_banded",
    "conjugate_gradient": "conjugate_gradient",
    "cg": "conjugate_gradient",
}


class NumericalError(RuntimeError):
    """Linear-solver failure or blow-up during a time integration."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class StabilityGuardError(ValueError):
    """Requested time step exceeds the explicit-cubic stability bound."""


def parse_scheme(name: str) -> str:
    key = str(name).strip().lower().replace("-", "_")
    if key not in _SCHEME_ALIASES:
        raise ValueError(f"unknown time scheme {name!r}; choose from {SCHEMES}")
    return _SCHEME_ALIASES[key]


def parse_linear_solver(name: str) -> str:
    key = str(name).strip().lower().replace("-", "_")
    if key not in _LINEAR_ALIASES:
        raise ValueError(f"unknown linear solver {name!r}; choose from {LINEAR_SOLVERS}")
    return _LINEAR_ALIASES[key]


@dataclass(frozen=True)
class GLParams:
    """Coupling ``lam`` and number of order-parameter components.

    ``reaction=False`` switches the cubic off (pure diffusion), which is
    handy for linear-regime checks.
    """

    lam: float = 1.0
    n_components: int = 1
    reaction: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.n_components < 1:
            raise ValueError("need at least one component")

    @property
    def effective_lam(self) -> float:
        return self.lam if self.reaction else 0.0

    def reaction_term(self, u):
        if not self.reaction:
            return np.zeros_like(u)
        return self.lam * (np.sum(u * u, axis=-1, keepdims=True) - 1.0) * u


def max_stable_dt(params: GLParams, sup_u0: float) -> float:
    if not params.reaction:
        return math.inf
    return 0.5 / (params.lam * (3.0 * max(1.0, sup_u0) ** 2 + 1.0))


@dataclass
class TimeConfig:
    dt: float = 1e-3
    T: float = 0.5
    scheme: str = "imex_euler"
    linear_solver: str = "direct_banded"
    cg_tol: float = 1e-10
    cg_max_iter: int = 2000
    snapshot_times: Sequence[float] | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        self.scheme = parse_scheme(self.scheme)
        self.linear_solver = parse_linear_solver(self.linear_solver)
        self.landing_times()

    def landing_times(self):
        ts = {float(self.T)}
        for t in self.snapshot_times or ():
            if not 0 <= t <= self.T:
                raise ValueError(f"snapshot time {t} outside [0, {self.T}]")
            ts.add(float(t))
        return sorted(ts)


@dataclass
class EnergyTrace:
    """Per-step energy bookkeeping of a run."""

    lam: float
    t: list = field(default_factory=list)
    l2sq: list = field(default_factory=list)
    cum_dirichlet: list = field(default_factory=list)
    cum_l4: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    dt: float = 0.0
    horizon: float = 0.0

    HEADER = ("t", "l2sq", "cum_dirichlet", "cum_l4", "sup")

    def append(self, t, l2sq, cum_dir, cum_l4, sup):
        self.t.append(float(t))
        self.l2sq.append(float(l2sq))
        self.cum_dirichlet.append(float(cum_dir))
        self.cum_l4.append(float(cum_l4))
        self.sup.append(float(sup))

    def arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in self.HEADER}

    def __len__(self):
        return len(self.t)

    @property
    def complete(self) -> bool:
        return len(self.t) > 0 and self.t[-1] >= self.horizon - 1e-12

    def is_finite(self) -> bool:
        a = self.arrays()
        return all(np.all(np.isfinite(v)) for v in a.values())

    def energy_lhs(self):
        a = self.arrays()
        return a["l2sq"] + 2 * a["cum_dirichlet"] + 2 * self.lam * a["cum_l4"]

    def energy_rhs(self):
        a = self.arrays()
        return np.exp(2 * self.lam * a["t"]) * a["l2sq"][0]

    def energy_ratio(self) -> float:
        """Largest ratio lhs / rhs over t > 0 (0 for the zero solution)."""
        lhs, rhs = self.energy_lhs(), self.energy_rhs()
        if len(lhs) > 1:
            lhs, rhs = lhs[1:], rhs[1:]
        if not np.all(np.isfinite(lhs)):
            return math.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, math.inf, 0.0))
        return float(r.max())

    def check_energy(self, tol: float | None = None) -> bool:
        if tol is None:
            tol = 10 * self.dt
        return self.is_finite() and self.energy_ratio() <= 1.0 + tol

    def max_principle_overshoot(self) -> float:
        s = np.asarray(self.sup)
        return float(s.max() - max(1.0, s[0]))

    def to_csv(self, path):
        a = self.arrays()
        rows = zip(*(a[k].tolist() for k in self.HEADER))
        return fieldio.write_table(Path(path), self.HEADER, rows)

    @classmethod
    def from_csv(cls, path, lam):
        header, rows = fieldio.read_table(path)
        tr = cls(lam=lam)
        for row in rows:
            tr.append(*map(float, row))
        return tr


class ImplicitDiffusionStepper:
    """Integrator for ``M u' + A u = -M f(u)`` with diagonal ``M``.

    Fields are handled as 2-d arrays ``(n_nodes, N)``; callers reshape.
    """

    def __init__(self, mass, stiffness, params: GLParams, config: TimeConfig):
        self.mass = np.asarray(mass, dtype=float)
        self.A = sp.csr_matrix(stiffness)
        self.params = params
        self.config = config
        self._solvers = {}

    # -- linear algebra -------------------------------------------------
    def _operator(self, dt):
        theta = 1.0 if self.config.scheme == "imex_euler" else 0.5
        return (sp.diags(self.mass / dt) + theta * self.A).tocsc()

    def solve_linear(self, dt, rhs, x0=None):
        key = round(dt, 15)
        if key not in self._solvers:
            op = self._operator(dt)
            if self.config.linear_solver == "direct_banded":
                self._solvers[key] = ("lu", spla.splu(op))
            else:
                self._solvers[key] = ("cg", op, sp.diags(1.0 / op.diagonal()))
        entry = self._solvers[key]
        if entry[0] == "lu":
            return entry[1].solve(rhs)
        _, op, prec = entry
        out = np.empty_like(rhs)
        for c in range(rhs.shape[1]):
            guess = None if x0 is None else x0[:, c]
            x, info = spla.cg(op, rhs[:, c], x0=guess, rtol=self.config.cg_tol, atol=0.0,
                              maxiter=self.config.cg_max_iter, M=prec)
            if info != 0:
                raise NumericalError(f"conjugate gradient did not converge (info={info})")
            out[:, c] = x
        return out

    # -- diagnostics ----------------------------------------------------
    def dirichlet(self, u) -> float:
        return float(np.sum(u * (self.A @ u)))

    def l2sq(self, u) -> float:
        return float(np.sum(self.mass[:, None] * u * u))

    def l4(self, u) -> float:
        return float(np.sum(self.mass * np.sum(u * u, axis=-1) ** 2))

    @staticmethod
    def sup(u) -> float:
        return float(np.sqrt(np.max(np.sum(u * u, axis=-1))))

    # -- stepping -------------------------------------------------------
    def step(self, u, dt, f_prev=None, dt_prev=None):
        """Advance one step; returns ``(u_new, f(u))`` so CN-AB2 can reuse it."""
        M = self.mass[:, None]
        f = self.params.reaction_term(u)
        if self.config.scheme == "imex_euler" or f_prev is None:
            if self.config.scheme == "imex_euler":
                rhs = M * u / dt - M * f
                return self.solve_linear(dt, rhs, u), f
            # CN startup: Crank-Nicolson diffusion with the current cubic
            rhs = M * u / dt - 0.5 * (self.A @ u) - M * f
            return self.solve_linear(dt, rhs, u), f
        w = dt / (2.0 * (dt_prev or dt))
        f_star = (1.0 + w) * f - w * f_prev
        rhs = M * u / dt - 0.5 * (self.A @ u) - M * f_star
        return self.solve_linear(dt, rhs, u), f

    def run(self, u0, reshape=None, on_step=None):
        """Integrate to ``config.T``; returns ``(u_final, trace, snapshots)``.

        The step is shortened per snapshot interval so that every requested
        time is hit exactly.  ``reshape`` maps internal 2-d arrays back to
        the caller's field layout for the snapshots.  ``on_step(k, t, h,
        u_old, u_new)`` is called after every step with reshaped fields.
        """
        cfg = self.config
        reshape = reshape or (lambda a: a)
        u = np.array(u0, dtype=float)
        lam = self.params.effective_lam
        trace = EnergyTrace(lam=lam, dt=cfg.dt, horizon=cfg.T)
        trace.append(0.0, self.l2sq(u), 0.0, 0.0, self.sup(u))
        snaps = {}
        landing = cfg.landing_times()
        if 0.0 in landing:
            snaps[0.0] = reshape(u.copy())
        t, cum_d, cum_4 = 0.0, 0.0, 0.0
        f_prev, h_prev = None, None
        l4_old = self.l4(u)
        for t_next in landing:
            span = t_next - t
            if span <= 0:
                continue
            n = max(1, math.ceil(span / cfg.dt - 1e-9))
            h = span / n
            for i in range(n):
                u_new, f = self.step(u, h, f_prev, h_prev)
                if not np.all(np.isfinite(u_new)):
                    raise NumericalError(f"non-finite values at t = {t + h:.6g}", trace)
                l4_new = self.l4(u_new)
                if cfg.scheme == "imex_euler":
                    cum_d += h * self.dirichlet(u_new)
                    cum_4 += h * l4_old
                else:
                    cum_d += h * self.dirichlet(0.5 * (u + u_new))
                    cum_4 += 0.5 * h * (l4_old + l4_new)
                t_cur = t + (i + 1) * h if i < n - 1 else t_next
                if on_step is not None:
                    on_step(len(trace), t_cur, h, reshape(u), reshape(u_new))
                u, f_prev, h_prev, l4_old = u_new, f, h, l4_new
                trace.append(t_cur, self.l2sq(u), cum_d, cum_4, self.sup(u))
            t = t_next
            snaps[t_next] = reshape(u.copy())
        return u, trace, snaps
