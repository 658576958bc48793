"""Tensor-product grids, finite-difference gradients and quadrature.

Surface fields are arrays of shape ``(M_theta, N)``; thin fields have shape
``(M_theta, M_sigma, N)``.  Flattening a thin field in C order gives the node
index ``j * M_sigma + k`` used by all sparse operators below.

The theta direction is periodic with equal weights (spectrally accurate for
smooth periodic data).  The sigma direction uses the trapezoid rule on
``M_sigma`` nodes including both boundaries, so quadrature is second order
in ``1/(M_sigma - 1)``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import PlaneCurve, ThicknessProfile, ThinDomain, validate

NORM_KINDS = ("L2", "H1", "Linf", "L4")


def periodic_difference(n: int, h: float) -> sp.csr_matrix:
    """Centered first difference on a periodic grid of ``n`` points."""
    if n < 3:
        raise ValueError("periodic difference needs at least 3 nodes")
    main = np.ones(n) / (2 * h)
    D = sp.diags([main[:-1], -main[:-1]], [1, -1], shape=(n, n), format="lil")
    D[0, n - 1] = -1 / (2 * h)
    D[n - 1, 0] = 1 / (2 * h)
    return D.tocsr()


def interval_difference(n: int, h: float) -> sp.csr_matrix:
    """Second-order first difference on ``n`` nodes of an interval (one-sided at the ends)."""
    if n < 3:
        raise ValueError("need at least 3 nodes across the film")
    D = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [1, -1], shape=(n, n), format="lil") / (2 * h)
    D = D.tolil()
    D[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
    D[n - 1, n - 3:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    return D.tocsr()


def trapezoid_factors(n: int) -> np.ndarray:
    tau = np.ones(n)
    tau[0] = tau[-1] = 0.5
    return tau


def _as_field(u, lead_shape, name="field"):
    u = np.asarray(u, dtype=float)
    if u.shape == tuple(lead_shape):
        u = u[..., None]
    if u.ndim != len(lead_shape) + 1 or u.shape[:-1] != tuple(lead_shape):
        raise ValueError(f"{name} has shape {u.shape}, expected {tuple(lead_shape)} + (N,)")
    return u


class SurfaceGrid:
    """Uniform periodic grid on the parameter circle of a curve."""

    def __init__(self, curve: PlaneCurve, m_theta: int = 256):
        if m_theta < 8:
            raise ValueError("M_theta must be at least 8")
        self.curve = curve
        self.m_theta = int(m_theta)
        self.dtheta = 2 * np.pi / self.m_theta
        self.theta = self.dtheta * np.arange(self.m_theta)
        fr = curve.frame(self.theta)
        self.position, self.tangent, self.normal = fr.position, fr.tangent, fr.normal
        self.kappa_w, self.metric = fr.kappa_w, fr.metric
        self.dkappa_w_dtheta = curve.dkappa_w_dtheta(self.theta)

    @property
    def shape(self):
        return (self.m_theta,)

    @cached_property
    def D_theta(self) -> sp.csr_matrix:
        return periodic_difference(self.m_theta, self.dtheta)

    @cached_property
    def weights(self) -> np.ndarray:
        """Arclength quadrature weights ``m dtheta``."""
        return self.metric * self.dtheta

    def check(self, v, name="surface field"):
        return _as_field(v, self.shape, name)

    def refine(self, factor: int) -> "SurfaceGrid":
        return SurfaceGrid(self.curve, self.m_theta * factor)


class ThinGrid:
    """Reference grid ``theta_j x sigma_k`` pushed into the thin band by the Fermi map."""

    def __init__(self, domain: ThinDomain, m_theta: int = 256, m_sigma: int = 32):
        if m_sigma < 3:
            raise ValueError("M_sigma must be at least 3")
        self.domain = domain
        self.surface = SurfaceGrid(domain.curve, m_theta)
        self.m_theta = self.surface.m_theta
        self.m_sigma = int(m_sigma)
        self.dsigma = 1.0 / (self.m_sigma - 1)
        self.sigma = np.linspace(0.0, 1.0, self.m_sigma)
        self.tau = trapezoid_factors(self.m_sigma)

        th = self.surface.theta
        prof, eps = domain.profile, domain.epsilon
        self.g0 = prof.g0(th)
        self.g1 = prof.g1(th)
        self.g = self.g1 - self.g0
        self.dg0 = prof.g0.derivative(th)
        self.dg = prof.dg(th)
        S = self.sigma[None, :]
        self.r = eps * (self.g0[:, None] + S * self.g[:, None])
        self.J = 1.0 - self.r * self.surface.kappa_w[:, None]
        # d sigma / d theta at fixed r
        self.sigma_theta = -(self.dg0[:, None] + S * self.dg[:, None]) / self.g[:, None]

    @property
    def epsilon(self):
        return self.domain.epsilon

    @property
    def shape(self):
        return (self.m_theta, self.m_sigma)

    @property
    def n_nodes(self):
        return self.m_theta * self.m_sigma

    def check(self, u, name="thin field"):
        return _as_field(u, self.shape, name)

    def ensure_valid(self):
        rep = validate(self.domain)
        if not rep.ok:
            raise ValueError("invalid thin domain: " + "; ".join(rep.reasons))
        if self.J.min() <= 0:
            raise ValueError("Jacobian not positive on grid")
        return rep

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for ``dx``: ``J m eps g dtheta dsigma tau_k``."""
        m = self.surface.metric[:, None]
        return self.J * m * self.epsilon * self.g[:, None] * self.surface.dtheta * self.dsigma * self.tau[None, :]

    @cached_property
    def _D2(self):
        Dth = sp.kron(self.surface.D_theta, sp.identity(self.m_sigma), format="csr")
        Dsg = sp.kron(sp.identity(self.m_theta), interval_difference(self.m_sigma, self.dsigma), format="csr")
        return Dth, Dsg

    @cached_property
    def G_tangential(self) -> sp.csr_matrix:
        """Maps nodal values to ``(1/J) d_s u`` at fixed r (the t-component of grad u)."""
        Dth, Dsg = self._D2
        a = 1.0 / (self.surface.metric[:, None] * self.J)
        return (sp.diags(a.ravel()) @ (Dth + sp.diags(self.sigma_theta.ravel()) @ Dsg)).tocsr()

    @cached_property
    def G_normal(self) -> sp.csr_matrix:
        """Maps nodal values to ``d_r u`` (the nu-component of grad u)."""
        _, Dsg = self._D2
        a = np.broadcast_to(1.0 / (self.epsilon * self.g[:, None]), self.shape)
        return (sp.diags(a.ravel()) @ Dsg).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        W = sp.diags(self.weights.ravel())
        Gt, Gn = self.G_tangential, self.G_normal
        return (Gt.T @ W @ Gt + Gn.T @ W @ Gn).tocsr()

    def frame_gradient(self, u):
        """Tangential and normal components of ``grad u``, each shaped like ``u``."""
        u = self.check(u)
        flat = u.reshape(self.n_nodes, -1)
        gt = (self.G_tangential @ flat).reshape(u.shape)
        gn = (self.G_normal @ flat).reshape(u.shape)
        return gt, gn

    def tangential_derivative(self, u):
        """``d_s u`` at fixed r, i.e. ``J`` times the tangential gradient component."""
        gt, _ = self.frame_gradient(u)
        return gt * self.J[..., None]


def thin_gradient(grid: ThinGrid, u) -> np.ndarray:
    """Cartesian gradient of a thin field, shape ``(M_theta, M_sigma, N, 2)``."""
    gt, gn = grid.frame_gradient(u)
    t = grid.surface.tangent[:, None, None, :]
    nu = grid.surface.normal[:, None, None, :]
    return gt[..., None] * t + gn[..., None] * nu


def surface_derivative(grid: SurfaceGrid, v) -> np.ndarray:
    """Arclength derivative ``(1/m) d_theta v``."""
    v = grid.check(v)
    return (grid.D_theta @ v) / grid.metric[:, None]


def surface_gradient(grid: SurfaceGrid, v) -> np.ndarray:
    """Cartesian tangential gradient, shape ``(M_theta, N, 2)``."""
    return surface_derivative(grid, v)[..., None] * grid.tangent[:, None, :]


def _pointwise_norm(grid_weights, values, kind, grad_sq=None):
    mod2 = np.sum(values**2, axis=-1)
    if kind == "Linf":
        return float(np.sqrt(mod2.max()))
    if kind == "L2":
        return float(np.sqrt(np.sum(grid_weights * mod2)))
    if kind == "L4":
        return float(np.sum(grid_weights * mod2**2) ** 0.25)
    if kind == "H1":
        return float(np.sqrt(np.sum(grid_weights * (mod2 + grad_sq))))
    raise ValueError(f"unknown norm {kind!r}; choose from {NORM_KINDS}")


def norm_thin(grid: ThinGrid, u, kind: str = "L2") -> float:
    u = grid.check(u)
    grad_sq = None
    if kind == "H1":
        gt, gn = grid.frame_gradient(u)
        grad_sq = np.sum(gt**2 + gn**2, axis=-1)
    return _pointwise_norm(grid.weights, u, kind, grad_sq)


def norm_surface(grid: SurfaceGrid, v, kind: str = "L2", weight=None) -> float:
    """Norm on the curve; ``weight`` (array or profile) turns it into the g-weighted norm."""
    v = grid.check(v)
    w = grid.weights
    if weight is not None:
        w = w * _weight_values(grid, weight)
    grad_sq = None
    if kind == "H1":
        grad_sq = np.sum(surface_derivative(grid, v) ** 2, axis=-1)
    return _pointwise_norm(w, v, kind, grad_sq)


def _weight_values(grid: SurfaceGrid, weight):
    if isinstance(weight, ThicknessProfile):
        return weight.g(grid.theta)
    w = np.asarray(weight, dtype=float)
    if w.shape != grid.shape:
        raise ValueError("weight must be given at the grid nodes")
    return w


def dirichlet_form_thin(grid: ThinGrid, u, w) -> float:
    """``int grad u : grad w dx`` with the discrete gradient and J-weighted quadrature."""
    gu_t, gu_n = grid.frame_gradient(u)
    gw_t, gw_n = grid.frame_gradient(w)
    dens = np.sum(gu_t * gw_t + gu_n * gw_n, axis=-1)
    return float(np.sum(grid.weights * dens))


def dirichlet_form_surface(grid: SurfaceGrid, v, z, weight) -> float:
    """``int_Gamma g grad_Gamma v : grad_Gamma z dH^1``."""
    dens = np.sum(surface_derivative(grid, v) * surface_derivative(grid, z), axis=-1)
    return float(np.sum(grid.weights * _weight_values(grid, weight) * dens))


def integrate_thin(grid: ThinGrid, f) -> float:
    """Quadrature of a scalar nodal array over the band."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"expected shape {grid.shape}, got {f.shape}")
    return float(np.sum(grid.weights * f))


def integrate_surface(grid: SurfaceGrid, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"expected shape {grid.shape}, got {f.shape}")
    return float(np.sum(grid.weights * f))
