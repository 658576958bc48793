import numpy as np
import pytest

from thinfilm.discretization import (
    SurfaceGrid,
    ThinGrid,
    dirichlet_form_surface,
    dirichlet_form_thin,
    integrate_thin,
    interval_difference,
    norm_surface,
    norm_thin,
    periodic_difference,
    surface_derivative,
    thin_gradient,
)
from thinfilm.geometry import Circle, Ellipse, ThicknessProfile, ThinDomain

from conftest import annulus, wavy_ellipse


def order(e_coarse, e_fine, ratio=2.0):
    return np.log(e_coarse / e_fine) / np.log(ratio)


def test_periodic_difference_second_order():
    errs = []
    for n in (32, 64, 128):
        th = 2 * np.pi * np.arange(n) / n
        D = periodic_difference(n, 2 * np.pi / n)
        errs.append(np.abs(D @ np.sin(3 * th) - 3 * np.cos(3 * th)).max())
    assert order(errs[0], errs[1]) > 1.95 and order(errs[1], errs[2]) > 1.95


def test_interval_difference_exact_on_quadratics():
    x = np.linspace(0, 1, 7)
    D = interval_difference(7, x[1] - x[0])
    assert np.allclose(D @ (x**2 - 3 * x), 2 * x - 3, atol=1e-12)
    with pytest.raises(ValueError):
        interval_difference(2, 1.0)


def test_band_area_exact():
    # J is affine in sigma, so the trapezoid rule integrates the area exactly
    eps = 0.1
    grid = ThinGrid(ThinDomain(Circle(1.0), ThicknessProfile.of(0.0, [1.0, 0.3, 1]), eps), 64, 5)
    area = 2 * np.pi * eps + eps**2 / 2 * (2 * np.pi + 0.09 * np.pi)
    assert grid.weights.sum() == pytest.approx(area, rel=1e-13)


def test_l2_norm_of_radius_on_annulus_converges():
    # int_0^{2pi} int_0^{0.1} r^2 (1 + r) dr dtheta
    exact = 2 * np.pi * (0.1**3 / 3 + 0.1**4 / 4)
    errs = []
    for ms in (5, 9, 17):
        g = annulus(0.1, 32, ms)
        errs.append(abs(norm_thin(g, g.r, "L2") ** 2 - exact))
    assert order(errs[0], errs[1]) >= 1.9 and order(errs[1], errs[2]) >= 1.9


def test_gradient_of_cartesian_coordinate():
    errs = []
    for m, ms in ((32, 5), (64, 9), (128, 17)):
        g = wavy_ellipse(0.1, m, ms)
        x = g.surface.position[:, None, :] + g.r[..., None] * g.surface.normal[:, None, :]
        u = np.sin(x[..., 0]) * np.cos(0.5 * x[..., 1])
        grad = thin_gradient(g, u)[:, :, 0, :]
        exact = np.stack([np.cos(x[..., 0]) * np.cos(0.5 * x[..., 1]),
                          -0.5 * np.sin(x[..., 0]) * np.sin(0.5 * x[..., 1])], axis=-1)
        errs.append(np.abs(grad - exact).max())
    assert order(errs[0], errs[1]) >= 1.8 and order(errs[1], errs[2]) >= 1.9


def test_dirichlet_form_symmetric_and_matches_stiffness(rng):
    g = wavy_ellipse()
    u = rng.standard_normal(g.shape + (2,))
    w = rng.standard_normal(g.shape + (2,))
    assert dirichlet_form_thin(g, u, w) == dirichlet_form_thin(g, w, u)
    A = g.stiffness
    direct = sum(u[..., c].ravel() @ (A @ w[..., c].ravel()) for c in range(2))
    assert dirichlet_form_thin(g, u, w) == pytest.approx(direct, rel=1e-12)
    assert abs(dirichlet_form_thin(g, np.ones(g.shape), w[..., :1])) < 1e-10


def test_stiffness_symmetric_semidefinite():
    A = annulus(0.1, 16, 5).stiffness.toarray()
    assert np.allclose(A, A.T, atol=1e-12)
    assert np.linalg.eigvalsh(A).min() > -1e-10


def test_norm_kinds():
    g = annulus()
    u = np.full(g.shape, 2.0)
    area = g.weights.sum()
    assert norm_thin(g, u, "Linf") == 2.0
    assert norm_thin(g, u, "L2") == pytest.approx(2 * np.sqrt(area))
    assert norm_thin(g, u, "L4") == pytest.approx(2 * area**0.25)
    assert norm_thin(g, u, "H1") == pytest.approx(2 * np.sqrt(area))
    with pytest.raises(ValueError):
        norm_thin(g, u, "L3")


def test_shape_errors():
    g = annulus()
    with pytest.raises(ValueError):
        norm_thin(g, np.zeros((3, 3)), "L2")
    with pytest.raises(ValueError):
        ThinGrid(g.domain, 64, 2)
    with pytest.raises(ValueError):
        integrate_thin(g, np.zeros(5))


def test_surface_forms_on_circle():
    sg = SurfaceGrid(Circle(1.0), 256)
    v = np.cos(sg.theta)
    prof = ThicknessProfile.of(0.0, 1.0)
    assert norm_surface(sg, v, "L2") ** 2 == pytest.approx(np.pi, rel=1e-13)
    assert dirichlet_form_surface(sg, v, v, prof) == pytest.approx(np.pi, rel=1e-3)
    w = np.full(sg.shape, 2.0)
    assert norm_surface(sg, v, "L2", weight=w) ** 2 == pytest.approx(2 * np.pi, rel=1e-13)


def test_surface_derivative_arclength_on_ellipse():
    e = Ellipse(2.0, 1.0)
    sg = SurfaceGrid(e, 512)
    # d/ds of x-coordinate is the x-component of the tangent
    ds = surface_derivative(sg, sg.position[:, 0])
    assert np.abs(ds[:, 0] - sg.tangent[:, 0]).max() < 1e-4
