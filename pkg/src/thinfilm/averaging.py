"""Weighted thin-direction average, constant extension and comparison estimates.

The average of a thin field is

    M u(theta) = (1 / (eps g)) int_{eps g0}^{eps g1} u J dr = int_0^1 u J dsigma,

evaluated with the same sigma quadrature as the band integrals, so that
``(u, ext(eta))_{band} = eps (g M u, eta)_{curve}`` holds to rounding error.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .discretization import SurfaceGrid, ThinGrid, norm_surface, surface_derivative


def average(grid: ThinGrid, u) -> np.ndarray:
    u = grid.check(u)
    w = (grid.tau * grid.dsigma)[None, :] * grid.J
    return np.einsum("jk,jkc->jc", w, u)


def extend(grid: ThinGrid, v) -> np.ndarray:
    v = grid.surface.check(v)
    return np.repeat(v[:, None, :], grid.m_sigma, axis=1)


def _curve_weights(grid: ThinGrid):
    """Weights of ``eps g dH^1`` on the curve nodes."""
    return grid.epsilon * grid.g * grid.surface.weights


def pairing_defect(grid: ThinGrid, u, eta) -> float:
    u = grid.check(u)
    eta = grid.surface.check(eta)
    lhs = np.sum(grid.weights[..., None] * u * extend(grid, eta))
    rhs = np.sum(_curve_weights(grid)[:, None] * average(grid, u) * eta)
    return float(abs(lhs - rhs))


class AverageGradientTerms(NamedTuple):
    """Coefficient fields on the band; vector fields are stored as their t-component."""

    B_grad_u: np.ndarray  # (M_theta, M_sigma, N): d_s u at fixed r
    normal_derivative: np.ndarray  # (M_theta, M_sigma, N)
    Psi_eps: np.ndarray  # (M_theta, M_sigma)
    f_J: np.ndarray  # (M_theta, M_sigma)
    Psi_J: np.ndarray  # (M_theta, M_sigma)


def gradient_terms(grid: ThinGrid, u, du=None) -> AverageGradientTerms:
    """Assemble the pieces of the tangential gradient of the average.

    ``du`` may be passed as the ``(tangential, normal)`` pair returned by
    :meth:`ThinGrid.frame_gradient`.
    """
    u = grid.check(u)
    gt, gn = grid.frame_gradient(u) if du is None else du
    eps = grid.epsilon
    m = grid.surface.metric[:, None]
    kappa = grid.surface.kappa_w[:, None]
    r = grid.r
    dg1 = (grid.dg0 + grid.dg)[:, None]
    psi_eps = ((r - eps * grid.g0[:, None]) * dg1 + (eps * grid.g1[:, None] - r) * grid.dg0[:, None]) / (grid.g[:, None] * m)
    f_J = -kappa / grid.J
    psi_J = -r * grid.surface.dkappa_w_dtheta[:, None] / (m * grid.J)
    # (I - r W) applied to the tangential gradient undoes the 1/J factor
    B_grad = gt * grid.J[..., None]
    return AverageGradientTerms(B_grad, gn, psi_eps, f_J, psi_J)


def average_gradient_explicit(grid: ThinGrid, u, du=None) -> np.ndarray:
    """Tangential gradient of ``average(u)`` from the explicit formula, shape (M_theta, N, 2)."""
    u = grid.check(u)
    T = gradient_terms(grid, u, du)
    integrand = T.B_grad_u + (T.normal_derivative + u * T.f_J[..., None]) * T.Psi_eps[..., None] + u * T.Psi_J[..., None]
    s = average(grid, integrand)
    return s[..., None] * grid.surface.tangent[:, None, :]


def average_gradient_direct(grid: ThinGrid, u) -> np.ndarray:
    """Tangential gradient of ``average(u)`` by differencing on the curve."""
    s = surface_derivative(grid.surface, average(grid, u))
    return s[..., None] * grid.surface.tangent[:, None, :]


def _curve_l2(grid: SurfaceGrid, f) -> float:
    return norm_surface(grid, f, "L2")


def average_square_defect(grid: ThinGrid, u) -> float:
    u = grid.check(u)
    Mu = average(grid, u)
    M_sq = average(grid, np.sum(u**2, axis=-1, keepdims=True))
    return _curve_l2(grid.surface, M_sq - np.sum(Mu**2, axis=-1, keepdims=True))


def normal_deviation(grid: ThinGrid, u) -> float:
    u = grid.check(u)
    d = u - extend(grid, average(grid, u))
    return float(np.sqrt(np.sum(grid.weights[..., None] * d**2)))


def dirichlet_form_defect(grid: ThinGrid, u, eta) -> float:
    u = grid.check(u)
    eta = grid.surface.check(eta)
    gt_u, gn_u = grid.frame_gradient(u)
    gt_e, gn_e = grid.frame_gradient(extend(grid, eta))
    lhs = np.sum(grid.weights[..., None] * (gt_u * gt_e + gn_u * gn_e))
    dMu = surface_derivative(grid.surface, average(grid, u))
    deta = surface_derivative(grid.surface, eta)
    rhs = np.sum(_curve_weights(grid)[:, None] * dMu * deta)
    return float(abs(lhs - rhs))


def cubic_pairing_defect(grid: ThinGrid, u, zeta) -> float:
    u = grid.check(u)
    zeta = grid.surface.check(zeta)
    cub = np.sum(u**2, axis=-1, keepdims=True) * u
    lhs = np.sum(grid.weights[..., None] * cub * extend(grid, zeta))
    Mu = average(grid, u)
    rhs = np.sum(_curve_weights(grid)[:, None] * np.sum(Mu**2, axis=-1, keepdims=True) * Mu * zeta)
    return float(abs(lhs - rhs))


def extension_gradient_defect(grid: ThinGrid, eta) -> float:
    """``||grad ext(eta) - ext(grad_Gamma eta)||`` over the band."""
    eta = grid.surface.check(eta)
    gt, gn = grid.frame_gradient(extend(grid, eta))
    d_eta = extend(grid, surface_derivative(grid.surface, eta))
    return float(np.sqrt(np.sum(grid.weights[..., None] * ((gt - d_eta) ** 2 + gn**2))))


def psi_bounds(grid: ThinGrid) -> dict:
    """Measured sup of |Psi_eps| and |Psi_J| divided by eps."""
    zero = np.zeros(grid.shape + (1,))
    T = gradient_terms(grid, zero)
    return {
        "Psi_eps": float(np.abs(T.Psi_eps).max() / grid.epsilon),
        "Psi_J": float(np.abs(T.Psi_J).max() / grid.epsilon),
    }
