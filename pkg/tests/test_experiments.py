import numpy as np
import pytest

from thinfilm.config import ConfigError, load_config
from thinfilm.experiments import (
    InitialData,
    SweepConfig,
    fit_rate,
    run_convergence_sweep,
    run_lemma_rates,
    run_sweep,
    run_thin_rate,
)
from thinfilm.geometry import Circle, FlatBand, ThicknessProfile


def small_cfg(**kw):
    base = dict(curve=Circle(1.0), profile=ThicknessProfile.of(0.0, [1.0, 0.3, 1]),
                epsilons=(0.2, 0.1, 0.05), m_theta=64, m_sigma=9, dt=5e-3, T=0.2, n_snapshots=5)
    base.update(kw)
    return SweepConfig(**base)


def test_fit_rate_examples():
    assert fit_rate([(0.2, 0.2), (0.1, 0.1), (0.05, 0.05)]).slope == pytest.approx(1.0, abs=1e-14)
    assert fit_rate([(0.2, 0.04), (0.1, 0.01), (0.05, 0.0025)]).slope == pytest.approx(2.0, abs=1e-14)
    f = fit_rate([(0.2, 0.04), (0.1, 0.01), (0.05, 0.0025), (0.025, 1e-15)])
    assert f.excluded == [(0.025, 1e-15)] and f.slope == pytest.approx(2.0)
    f = fit_rate([(0.2, 1e-14), (0.1, 0.0), (0.05, 0.1)])
    assert f.suppressed and len(f.excluded) == 2


def test_fit_rate_deterministic_residual():
    pairs = [(0.2, 0.21), (0.1, 0.098), (0.05, 0.051), (0.025, 0.0249)]
    a, b = fit_rate(pairs), fit_rate(pairs)
    assert a.slope == b.slope and a.max_residual == b.max_residual > 0


def test_zero_data_sweep_is_floor_suppressed():
    cfg = small_cfg(init=InitialData(coefficients=(0.0,)))
    runs = run_convergence_sweep(cfg)
    for r in runs.runs:
        assert max(r.errors.values()) <= 1e-12
    assert fit_rate(runs.pairs("surface_C")).suppressed


def test_flat_band_matches_limit_to_rounding():
    cfg = small_cfg(curve=FlatBand(2 * np.pi), profile=ThicknessProfile.of(0.0, 1.0), ref_factor=1)
    runs = run_convergence_sweep(cfg)
    for r in runs.runs:
        assert r.errors["surface_C"] < 1e-10 and r.errors["thin"] < 1e-10


def test_sweep_rates_small_grid():
    # same-grid reference: theta discretization errors cancel, leaving the eps dependence
    cfg = small_cfg(epsilons=(0.2, 0.1, 0.05, 0.025), ref_factor=1)
    runs = run_convergence_sweep(cfg)
    assert 0.8 <= fit_rate(runs.pairs("surface_C")).slope <= 1.25
    assert fit_rate(runs.pairs("thin")).slope >= 0.9


def test_hygiene_flags_underresolved_grid():
    # at 64 nodes the sweep grid's own O(h^2) error is comparable to the eps = 0.025 error
    coarse = run_convergence_sweep(small_cfg(epsilons=(0.2, 0.025)))
    assert coarse.max_hygiene_change() > 0.05
    fine = run_convergence_sweep(small_cfg(epsilons=(0.2, 0.025), m_theta=256, m_sigma=16))
    assert fine.max_hygiene_change() < 0.05


def test_normal_perturbed_thin_rate():
    cfg = small_cfg(epsilons=(0.2, 0.1, 0.05, 0.025), init=InitialData("normal_perturbed", beta=1.0))
    fit, _ = run_thin_rate(cfg)
    assert fit.slope >= 0.9


def test_sup_growing_family_hits_target():
    cfg = small_cfg()
    init = InitialData("sup_growing", c1=2.0, alpha=0.1)
    for eps in (0.2, 0.05):
        u0 = init.thin(cfg.thin_grid(eps))
        assert np.abs(u0).max() == pytest.approx(2.0 * eps ** (0.1 - 1 / 3), rel=1e-12)
    with pytest.raises(ValueError):
        InitialData("sup_growing", alpha=0.5)


def test_default_initial_data():
    th = np.array([0.0, np.pi / 4])
    v = InitialData().surface(th)[:, 0]
    assert v == pytest.approx([0.7, 0.2 + 0.5 * np.cos(np.pi / 4) + 0.3])
    with pytest.raises(ValueError):
        InitialData("rough")


def test_lemma_rates_report():
    rep = run_lemma_rates(small_cfg(epsilons=(0.2, 0.1, 0.05, 0.025), m_theta=128, m_sigma=17))
    assert rep.fits["at_diri"].slope >= 1.4
    assert rep.fits["ave_non"].slope >= 1.4
    assert rep.fits["code_l2"].slope >= 1.3
    assert rep.bounded_ratio("ave_dif") <= 3
    for name in ("ave_lp2", "ave_lp4", "ave_h1", "atgr_l2", "ave_sq", "code_l2_first"):
        assert rep.bounded_ratio(name) <= 3, name
    assert max(rep.compensated("pairing")) <= 1e-12


def test_config_validation():
    with pytest.raises(ConfigError):
        small_cfg(epsilons=(0.1, 0.2))
    with pytest.raises(ConfigError):
        small_cfg(epsilons=(0.95, 0.5))
    with pytest.raises(ConfigError):
        small_cfg(dt=-1.0)
    with pytest.raises(ConfigError):
        small_cfg(checks=("everything",))
    with pytest.raises(ConfigError):
        SweepConfig.from_dict(load_config(overrides=["geometry.family=\"blob\""]))


def test_from_dict_defaults():
    cfg = SweepConfig.from_dict(load_config())
    assert cfg.epsilons == (0.2, 0.1, 0.05, 0.025)
    assert cfg.T == 0.5 and cfg.params.lam == 1.0 and cfg.m_theta == 256


def _read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_sweep_outputs_bit_identical(tmp_path):
    cfg = small_cfg()
    run_sweep(cfg, tmp_path / "a")
    run_sweep(cfg, tmp_path / "b", jobs=2)
    a, b = _read_all(tmp_path / "a"), _read_all(tmp_path / "b")
    assert a.keys() == b.keys() and {"sweep.csv", "rates.csv", "defects.csv"} <= a.keys()
    assert a == b
    header = a["sweep.csv"].decode().splitlines()[0]
    assert header == "epsilon,check_name,error_value"
    assert a["rates.csv"].decode().splitlines()[0] == "check_name,slope,intercept,max_residual"
