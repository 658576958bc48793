"""Limit Ginzburg-Landau flow on the curve,

    dv/dt - (1/g) div_Gamma(g grad_Gamma v) + lam (|v|^2 - 1) v = 0,

with a finite-difference backend (g-weighted lumped mass, same stepper as
the band solver) and a Galerkin backend in a g-orthonormal Fourier basis
integrated with classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .discretization import SurfaceGrid
from .geometry import ThicknessProfile
from .stepping import (
    EnergyTrace,
    GLParams,
    ImplicitDiffusionStepper,
    NumericalError,
    StabilityGuardError,
    TimeConfig,
    max_stable_dt,
)

BACKENDS = ("fd", "galerkin")


@dataclass
class SurfaceSolverConfig(TimeConfig):
    backend: str = "fd"
    modes: int = 16
    weighted_basis: bool = True

    def __post_init__(self):
        super().__post_init__()
        self.backend = str(self.backend).lower()
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown surface backend {self.backend!r}; choose from {BACKENDS}")
        if self.backend == "galerkin" and self.modes < 1:
            raise ValueError("Galerkin backend needs L >= 1")


@dataclass
class SurfaceSolution:
    v: np.ndarray
    trace: EnergyTrace
    snapshots: dict
    basis: "GalerkinBasis | None" = None
    coefficients: np.ndarray | None = field(default=None, repr=False)


def fd_operators(grid: SurfaceGrid, profile: ThicknessProfile):
    """Lumped g-weighted mass and stiffness ``D^T diag(g dtheta / m) D``."""
    g = profile.g(grid.theta)
    mass = g * grid.weights
    D = grid.D_theta
    A = (D.T @ sp.diags(g * grid.dtheta / grid.metric) @ D).tocsr()
    return mass, A


def _raw_modes(theta, L):
    cols, dcols = [np.ones_like(theta)], [np.zeros_like(theta)]
    for k in range(1, L + 1):
        c, s = np.cos(k * theta), np.sin(k * theta)
        cols += [c, s]
        dcols += [-k * s, k * c]
    return np.stack(cols, axis=1), np.stack(dcols, axis=1)


class GalerkinBasis:
    """2L+1 real Fourier modes orthonormalized in ``(g ., .)_{L2(Gamma)}``.

    With ``weighted=False`` the modes are orthonormal in plain L2 instead and
    the g-weighted mass matrix is carried explicitly.
    """

    def __init__(self, grid: SurfaceGrid, profile: ThicknessProfile, L: int, weighted: bool = True):
        if L < 1:
            raise ValueError("L must be at least 1")
        if 2 * L + 1 > grid.m_theta / 2:
            raise ValueError(
                f"aliasing: 2L+1 = {2 * L + 1} modes need M_theta >= {4 * L + 2}, got {grid.m_theta}"
            )
        self.grid, self.profile, self.L, self.weighted = grid, profile, L, weighted
        self.g = profile.g(grid.theta)
        self.w_g = self.g * grid.weights
        ip_w = self.w_g if weighted else grid.weights
        raw, draw = _raw_modes(grid.theta, L)
        K = raw.shape[1]
        C = np.eye(K)
        Phi = raw.copy()
        for i in range(K):
            for _ in range(2):  # one re-orthogonalization pass
                for j in range(i):
                    p = np.sum(ip_w * Phi[:, j] * Phi[:, i])
                    Phi[:, i] -= p * Phi[:, j]
                    C[:, i] -= p * C[:, j]
            nrm = math.sqrt(np.sum(ip_w * Phi[:, i] ** 2))
            Phi[:, i] /= nrm
            C[:, i] /= nrm
        self.coefficients = C
        self.values = raw @ C
        self.derivatives = draw @ C
        self.mass_g = self.values.T @ (self.w_g[:, None] * self.values)
        dw = self.g * grid.dtheta / grid.metric
        self.stiffness = self.derivatives.T @ (dw[:, None] * self.derivatives)
        self._mass_inv = np.eye(K) if weighted else np.linalg.inv(self.mass_g)

    @property
    def size(self):
        return 2 * self.L + 1

    def gram(self):
        """Gram matrix in the g-weighted inner product."""
        return self.mass_g

    def project(self, v) -> np.ndarray:
        """Coefficients of the g-weighted L2 projection of a nodal field."""
        v = self.grid.check(v)
        b = self.values.T @ (self.w_g[:, None] * v)
        return self._mass_inv @ b if self.weighted else np.linalg.solve(self.mass_g, b)

    def evaluate(self, alpha) -> np.ndarray:
        return self.values @ alpha

    def rhs(self, alpha, params: GLParams):
        v = self.values @ alpha
        f = self.values.T @ (self.w_g[:, None] * params.reaction_term(v))
        return -self._mass_inv @ (self.stiffness @ alpha + f)


def _check(grid, v0, params, config):
    v0 = grid.check(v0, "initial data")
    if v0.shape[-1] != params.n_components:
        raise ValueError(f"field has {v0.shape[-1]} components, params say {params.n_components}")
    sup = float(np.sqrt(np.max(np.sum(v0 * v0, axis=-1))))
    dt_max = max_stable_dt(params, sup)
    if config.dt > dt_max:
        raise StabilityGuardError(f"dt = {config.dt:.4g} exceeds stability bound {dt_max:.4g}")
    return v0


def _check_profile(grid, profile):
    if profile.g(grid.theta).min() <= 0:
        raise ValueError("thickness g must be positive on the curve")


def solve_surface(grid: SurfaceGrid, v0, params: GLParams, profile: ThicknessProfile,
                  config: SurfaceSolverConfig, on_step=None) -> SurfaceSolution:
    """``on_step(k, t, h, v_old, v_new)`` observes every FD step (ignored by Galerkin)."""
    _check_profile(grid, profile)
    v0 = _check(grid, v0, params, config)
    if config.backend == "fd":
        mass, A = fd_operators(grid, profile)
        st = ImplicitDiffusionStepper(mass, A, params, config)
        v, trace, snaps = st.run(v0, on_step=on_step)
        return SurfaceSolution(v, trace, snaps)
    basis = GalerkinBasis(grid, profile, config.modes, config.weighted_basis)
    return _run_galerkin(basis, v0, params, config)


def _run_galerkin(basis: GalerkinBasis, v0, params: GLParams, config: TimeConfig) -> SurfaceSolution:
    lam = params.effective_lam
    w = basis.w_g

    def diag(alpha):
        v = basis.values @ alpha
        mod2 = np.sum(v * v, axis=-1)
        return (float(np.sum(w * mod2)), float(np.sum(alpha * (basis.stiffness @ alpha))),
                float(np.sum(w * mod2**2)), float(np.sqrt(mod2.max())))

    alpha = basis.project(v0)
    trace = EnergyTrace(lam=lam, dt=config.dt, horizon=config.T)
    l2, d_old, l4_old, sup = diag(alpha)
    trace.append(0.0, l2, 0.0, 0.0, sup)
    snaps = {}
    landing = config.landing_times()
    if 0.0 in landing:
        snaps[0.0] = basis.evaluate(alpha)
    t, cum_d, cum_4 = 0.0, 0.0, 0.0
    F = lambda a: basis.rhs(a, params)
    with np.errstate(over="ignore", invalid="ignore"):
        for t_next in landing:
            span = t_next - t
            if span <= 0:
                continue
            n = max(1, math.ceil(span / config.dt - 1e-9))
            h = span / n
            for i in range(n):
                k1 = F(alpha)
                k2 = F(alpha + 0.5 * h * k1)
                k3 = F(alpha + 0.5 * h * k2)
                k4 = F(alpha + h * k3)
                alpha = alpha + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(alpha)):
                    raise NumericalError(f"Galerkin solution blew up at t = {t + (i + 1) * h:.6g}", trace)
                l2, d_new, l4_new, sup = diag(alpha)
                cum_d += 0.5 * h * (d_old + d_new)
                cum_4 += 0.5 * h * (l4_old + l4_new)
                d_old, l4_old = d_new, l4_new
                trace.append(t + (i + 1) * h if i < n - 1 else t_next, l2, cum_d, cum_4, sup)
            t = t_next
            snaps[t_next] = basis.evaluate(alpha)
    return SurfaceSolution(basis.evaluate(alpha), trace, snaps, basis, alpha)


def galerkin_energy_check(trace: EnergyTrace, slack: float = 1.05) -> bool:
    """Energy inequality for a Galerkin run, relative to ``||P_L v0||_g^2``.

    Non-finite or truncated traces fail.
    """
    if trace is None or len(trace) < 2 or not trace.complete or not trace.is_finite():
        return False
    return trace.energy_ratio() <= slack
