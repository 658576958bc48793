import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinfilm.averaging import (
    average,
    average_gradient_direct,
    average_gradient_explicit,
    average_square_defect,
    cubic_pairing_defect,
    dirichlet_form_defect,
    extend,
    extension_gradient_defect,
    normal_deviation,
    pairing_defect,
    psi_bounds,
)
from thinfilm.discretization import norm_surface, norm_thin, surface_derivative
from thinfilm.experiments import Manufactured, fit_rate
from thinfilm.stepping import GLParams
from thinfilm.thin_solver import ThinSolverConfig, solve

from conftest import annulus, flat, wavy_ellipse

LADDER = (0.2, 0.1, 0.05, 0.025)


def test_average_of_constant_on_flat_band():
    g = flat()
    assert np.all(average(g, np.full(g.shape, 3.0)) == pytest.approx(3.0, abs=1e-15))


def test_average_of_one_on_unit_annulus():
    # (1/eps) int_0^eps (1 + r) dr = 1 + eps/2
    g = annulus(0.1, 32, 9)
    assert np.allclose(average(g, np.ones(g.shape)), 1.05, rtol=0, atol=1e-14)


def test_average_factorizes_for_sigma_independent_fields():
    g = wavy_ellipse()
    f = np.cos(2 * g.surface.theta)[:, None]
    assert np.allclose(average(g, extend(g, f)), f * average(g, np.ones(g.shape)), atol=1e-15)


def test_extend_is_constant_in_sigma_and_right_inverse():
    g = wavy_ellipse()
    v = np.sin(g.surface.theta)[:, None]
    ext = extend(g, v)
    for k in (0, 3, g.m_sigma - 1):
        assert np.array_equal(ext[:, k], v)
    fg = flat()
    assert np.allclose(average(fg, extend(fg, np.ones((fg.m_theta, 1)))), 1.0, atol=1e-15)


def test_extension_norm_ratio_tends_to_one():
    pairs = []
    for eps in LADDER:
        g = annulus(eps, 64, 9, g1=1.0)
        v = (1 + 0.5 * np.cos(g.surface.theta))[:, None]
        lhs = norm_thin(g, extend(g, v), "L2") ** 2
        rhs = eps * np.sum(g.g * g.surface.weights * v[:, 0] ** 2)
        pairs.append((eps, abs(lhs / rhs - 1)))
    assert fit_rate(pairs).slope >= 0.9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
def test_pairing_identity_exact(seed, scale):
    rng = np.random.default_rng(seed)
    g = annulus()
    u = scale * rng.standard_normal(g.shape + (2,))
    eta = rng.standard_normal((g.m_theta, 2))
    mag = np.sum(g.weights[..., None] * np.abs(u * extend(g, eta)))
    assert pairing_defect(g, u, eta) <= 1e-12 * mag


def test_pairing_zero_and_linear(rng):
    g = wavy_ellipse()
    eta = rng.standard_normal((g.m_theta, 1))
    assert pairing_defect(g, np.zeros(g.shape), eta) == 0.0
    u = rng.standard_normal(g.shape)
    d1 = pairing_defect(g, u, eta)
    assert pairing_defect(g, 1e3 * u, eta) <= 1e3 * d1 + 1e-12


def test_gradient_formula_vanishes_for_constants_on_flat_band():
    g = flat()
    assert np.abs(average_gradient_explicit(g, np.full(g.shape, 2.0))).max() < 1e-14


def test_gradient_formula_reduces_to_surface_gradient_on_flat_band():
    g = flat(0.1, 64, 9)
    eta = np.sin(g.surface.theta) + 0.3 * np.cos(3 * g.surface.theta)
    got = average_gradient_explicit(g, extend(g, eta[:, None]))
    expect = surface_derivative(g.surface, eta)[..., None] * g.surface.tangent[:, None, :]
    assert np.allclose(got, expect, atol=1e-12)


def test_gradient_formula_matches_differentiated_average():
    fields = Manufactured(seed=7)
    errs = []
    for m, ms in ((32, 9), (64, 17), (128, 33)):
        g = wavy_ellipse(0.2, m, ms)
        u = fields.thin(g)
        errs.append(np.abs(average_gradient_explicit(g, u) - average_gradient_direct(g, u)).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9, (errs, orders)


def test_psi_fields_are_order_epsilon():
    vals = [psi_bounds(wavy_ellipse(eps)) for eps in LADDER]
    for key in ("Psi_eps", "Psi_J"):
        ratios = [v[key] for v in vals]
        assert max(ratios) / min(ratios) < 1.5 and max(ratios) < 10


def test_square_defect_flat_cases():
    g = flat()
    v = np.cos(g.surface.theta)[:, None]
    assert average_square_defect(g, extend(g, v)) < 1e-14
    assert average_square_defect(g, np.zeros(g.shape)) == 0.0
    pairs = []
    for eps in LADDER:
        g = flat(eps, 64, 17)
        w = np.sin(np.pi * g.sigma)[None, :, None]
        pairs.append((eps, average_square_defect(g, extend(g, v) + eps * w)))
    assert fit_rate(pairs).slope >= 1.4


def test_normal_deviation_cases():
    g = flat()
    v = np.cos(g.surface.theta)[:, None]
    assert normal_deviation(g, extend(g, v)) < 1e-14
    # circle: M(ext v) = v (1 + eps (g0 + g1) / 2), so the deviation is |1 - M1| ||ext v||
    eps = 0.1
    ga = annulus(eps, 64, 9)
    ev = extend(ga, v)
    expect = eps / 2 * norm_thin(ga, ev, "L2")
    assert normal_deviation(ga, ev) == pytest.approx(expect, rel=1e-12)
    ratios = []
    for eps in LADDER:
        g = annulus(eps, 64, 17)
        u = np.sin(2 * np.pi * g.sigma)[None, :, None] * np.ones((g.m_theta, 1, 1))
        gt, gn = g.frame_gradient(u)
        dn = np.sqrt(np.sum(g.weights[..., None] * gn**2))
        ratios.append(normal_deviation(g, u) / (eps * (norm_thin(g, u) + dn)))
    assert max(ratios) / min(ratios) < 3


def test_dirichlet_defect_cases():
    g = flat(0.1, 64, 9)
    z = np.cos(g.surface.theta)[:, None]
    eta = np.sin(2 * g.surface.theta)[:, None]
    assert dirichlet_form_defect(g, extend(g, z), eta) < 1e-12
    assert dirichlet_form_defect(g, np.zeros(g.shape), eta) == 0.0


def _lemma_ladder(fn):
    fields = Manufactured(seed=3)
    pairs = []
    for eps in LADDER:
        g = annulus(eps, 128, 17, g1=[1.0, 0.3, 1])
        pairs.append((eps, fn(g, fields)))
    return fit_rate(pairs)


def test_dirichlet_defect_rate():
    def q(g, f):
        u = f.thin(g)
        eta = f.surface(g.surface.theta)
        return dirichlet_form_defect(g, u, eta) / (norm_thin(g, u, "H1") * norm_surface(g.surface, surface_derivative(g.surface, eta)))
    assert _lemma_ladder(q).slope >= 1.4


def test_cubic_defect_cases_and_rate():
    g = flat()
    v = np.cos(g.surface.theta)[:, None]
    assert cubic_pairing_defect(g, extend(g, v), v) < 1e-14
    assert cubic_pairing_defect(g, np.zeros(g.shape), v) == 0.0

    def q(g, f):
        u = f.thin(g)
        zeta = f.surface(g.surface.theta, salt=3)
        gt, gn = g.frame_gradient(u)
        dn = np.sqrt(np.sum(g.weights[..., None] * gn**2))
        return cubic_pairing_defect(g, u, zeta) / (norm_thin(g, u, "Linf") ** 2 * (norm_thin(g, u) + dn) * norm_surface(g.surface, zeta))
    assert _lemma_ladder(q).slope >= 1.4


def test_extension_gradient_defect_rate():
    def q(g, f):
        eta = f.surface(g.surface.theta)
        return extension_gradient_defect(g, eta) / norm_surface(g.surface, surface_derivative(g.surface, eta))
    fit = _lemma_ladder(q)
    assert abs(fit.slope - 1.5) <= 0.2


def test_average_commutes_with_time_stepping():
    g = annulus(0.1, 32, 5)
    u0 = extend(g, (0.3 + 0.5 * np.cos(g.surface.theta))[:, None])
    cfg = ThinSolverConfig(dt=0.01, T=0.05, snapshot_times=[0.0, 0.01, 0.02])
    snaps = solve(g, u0, GLParams(), cfg).snapshots
    for a, b in ((0.0, 0.01), (0.01, 0.02)):
        lhs = average(g, snaps[b]) - average(g, snaps[a])
        assert np.allclose(lhs, average(g, snaps[b] - snaps[a]), rtol=0, atol=1e-15)
