"""Neumann Ginzburg-Landau heat flow on the thin band, in reference coordinates.

Mass is the lumped J-weighted quadrature, stiffness is the discrete Dirichlet
form ``G_t^T W G_t + G_n^T W G_n``; the Neumann condition is natural.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import ThinGrid
from .stepping import (
    EnergyTrace,
    GLParams,
    ImplicitDiffusionStepper,
    NumericalError,
    StabilityGuardError,
    TimeConfig,
    max_stable_dt,
)


@dataclass
class ThinSolverConfig(TimeConfig):
    pass


@dataclass
class ThinSolution:
    u: np.ndarray
    trace: EnergyTrace
    snapshots: dict


def _check_inputs(grid: ThinGrid, u, params: GLParams, config: TimeConfig):
    u = grid.check(u, "initial data")
    if u.shape[-1] != params.n_components:
        raise ValueError(f"field has {u.shape[-1]} components, params say {params.n_components}")
    sup = float(np.sqrt(np.max(np.sum(u * u, axis=-1))))
    dt_max = max_stable_dt(params, sup)
    if config.dt > dt_max:
        raise StabilityGuardError(f"dt = {config.dt:.4g} exceeds stability bound {dt_max:.4g}")
    return u


def _stepper(grid: ThinGrid, params, config):
    # one stepper (and factorization cache) per grid/scheme/solver combination
    cache = grid.__dict__.setdefault("_steppers", {})
    key = (params, config.scheme, config.linear_solver, config.cg_tol, config.cg_max_iter)
    if key not in cache:
        cache[key] = ImplicitDiffusionStepper(grid.weights.ravel(), grid.stiffness, params, config)
    st = cache[key]
    st.config = config
    return st


def step(grid: ThinGrid, u, params: GLParams, config: ThinSolverConfig, u_prev=None) -> np.ndarray:
    """One step of size ``config.dt``.

    For the CN-AB2 scheme the previous level ``u_prev`` feeds the
    extrapolated cubic; without it the step is a CN/explicit start-up step.
    """
    u = _check_inputs(grid, u, params, config)
    st = _stepper(grid, params, config)
    flat = u.reshape(grid.n_nodes, -1)
    f_prev = None
    if u_prev is not None and config.scheme == "cn_ab2":
        f_prev = params.reaction_term(grid.check(u_prev).reshape(grid.n_nodes, -1))
    new, _ = st.step(flat, config.dt, f_prev)
    if not np.all(np.isfinite(new)):
        raise NumericalError("non-finite values after one step")
    return new.reshape(u.shape)


def solve(grid: ThinGrid, u0, params: GLParams, config: ThinSolverConfig, on_step=None) -> ThinSolution:
    """Integrate to ``config.T``.  ``on_step(k, t, h, u_old, u_new)`` observes every step."""
    grid.ensure_valid()
    u0 = _check_inputs(grid, u0, params, config)
    st = _stepper(grid, params, config)
    shape = u0.shape
    u, trace, snaps = st.run(u0.reshape(grid.n_nodes, -1), reshape=lambda a: a.reshape(shape), on_step=on_step)
    return ThinSolution(u.reshape(shape), trace, snaps)


def monotonicity_gaps(a, b):
    """Slacks of ``(|a|^2 a - |b|^2 b).(a - b) >= (|a|^3 - |b|^3)(|a| - |b|) >= 0``.

    ``a`` and ``b`` are arrays of vectors (..., N).  Returns the two gaps and
    a magnitude scale ``(|a| + |b|)^4`` for relative comparisons.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    na, nb = np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1)
    lhs = np.sum((na[..., None] ** 2 * a - nb[..., None] ** 2 * b) * (a - b), axis=-1)
    mid = (na**3 - nb**3) * (na - nb)
    scale = np.maximum((na + nb) ** 4, np.finfo(float).tiny)
    return lhs - mid, mid, scale
