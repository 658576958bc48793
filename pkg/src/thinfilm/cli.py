"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure or failed check, 2 config error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import fieldio
from .averaging import average, extend, pairing_defect
from .config import ConfigError, load_config
from .discretization import SurfaceGrid, ThinGrid
from .experiments import SweepConfig, run_lemma_rates, run_sweep
from .geometry import Circle, Ellipse, ThicknessProfile, ThinDomain, jacobian, make_curve, validate
from .stepping import NumericalError
from .surface_solver import GalerkinBasis, galerkin_energy_check, solve_surface
from .thin_solver import monotonicity_gaps, solve

COMMANDS = ("validate", "solve-thin", "solve-surface", "average", "sweep", "check-invariants")


def build_parser():
    p = argparse.ArgumentParser(prog="thinfilm", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, default=None, help="TOML run configuration")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="worker processes for the epsilon sweep")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--field", type=Path, default=None, help="thin field CSV for 'average'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_snapshots(out, prefix, snaps):
    for t, u in sorted(snaps.items()):
        fieldio.write_field(out / f"{prefix}_t{t:.6g}.csv", u)


def cmd_validate(raw, args):
    curve = make_curve(raw["geometry"]["family"], raw["geometry"]["params"])
    profile = ThicknessProfile.of(raw["profile"]["g0"], raw["profile"]["g1"])
    eps_list = sorted({float(raw["solve"]["epsilon"]), *map(float, raw["sweep"]["epsilons"])}, reverse=True)
    ok = True
    for eps in eps_list:
        rep = validate(ThinDomain(curve, profile, eps))
        print(f"epsilon = {eps:g}")
        print("  " + rep.summary().replace("\n", "\n  "))
        ok &= rep.ok
    return 0 if ok else 1


def cmd_solve_thin(cfg: SweepConfig, args):
    grid = cfg.thin_grid(cfg.solve_epsilon)
    u0 = cfg.init.thin(grid, cfg.params.n_components)
    sol = solve(grid, u0, cfg.params, cfg.time_config())
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    sol.trace.to_csv(out / "trace.csv")
    _write_snapshots(out, "snapshot", sol.snapshots)
    ratio = sol.trace.energy_ratio()
    ok = sol.trace.check_energy()
    print(f"epsilon {cfg.solve_epsilon:g}  energy ratio {ratio:.6f}  "
          f"max-principle overshoot {sol.trace.max_principle_overshoot():.3e}  "
          f"energy {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_solve_surface(cfg: SweepConfig, args):
    grid = SurfaceGrid(cfg.curve, cfg.m_theta)
    v0 = cfg.init.surface(grid.theta, cfg.params.n_components)
    sol = solve_surface(grid, v0, cfg.params, cfg.profile, cfg.surface_config())
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    sol.trace.to_csv(out / "trace.csv")
    _write_snapshots(out, "snapshot", sol.snapshots)
    if cfg.backend == "galerkin":
        ok = galerkin_energy_check(sol.trace)
    else:
        ok = sol.trace.check_energy()
    print(f"backend {cfg.backend}  energy ratio {sol.trace.energy_ratio():.6f}  energy {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_average(cfg: SweepConfig, args):
    out = args.out
    if args.field is not None:
        grid = cfg.thin_grid(cfg.solve_epsilon)
        u = fieldio.read_field(args.field)
        try:
            Mu = average(grid, u)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        fieldio.write_field(out / "average.csv", Mu)
        print(f"wrote {out / 'average.csv'}")
        return 0
    rep = run_lemma_rates(cfg)
    out.mkdir(parents=True, exist_ok=True)
    fieldio.write_table(out / "defects.csv", ("epsilon", "quantity_name", "raw_value", "compensated_ratio"), rep.rows)
    for name, f in rep.fits.items():
        s = "suppressed" if f.suppressed else f"{f.slope:.3f}"
        print(f"{name:14s} slope {s}  compensated max/min {rep.bounded_ratio(name):.3f}")
    return 0


def cmd_sweep(cfg: SweepConfig, args):
    runs, lemmas = run_sweep(cfg, args.out, args.jobs)
    header, rows = fieldio.read_table(args.out / "rates.csv")
    for r in rows:
        print(f"{r[0]:14s} slope {float(r[1]):.4f}")
    if runs is not None:
        print(f"reference hygiene: max relative change {runs.max_hygiene_change():.3%}")
    return 0


def invariant_battery(cfg: SweepConfig):
    """Fast property checks; returns a list of ``(name, passed, detail)``."""
    res = []
    rng = np.random.default_rng(cfg.seed)

    grid = ThinGrid(ThinDomain(Circle(1.0), ThicknessProfile.of(0.0, 1.0), 0.1), 64, 8)
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal(grid.shape + (2,))
        eta = rng.standard_normal((grid.m_theta, 2))
        scale = float(np.sum(grid.weights[..., None] * np.abs(u) * np.abs(extend(grid, eta))))
        worst = max(worst, pairing_defect(grid, u, eta) / scale)
    res.append(("pairing identity", worst <= 1e-12, f"max relative defect {worst:.2e}"))

    worst = math.inf
    for n in (1, 2, 3):
        a, b = rng.standard_normal((2, 20000, n)) * rng.uniform(0.01, 10, size=(2, 20000, 1))
        g1, g2, scale = monotonicity_gaps(a, b)
        worst = min(worst, float(np.min(np.minimum(g1, g2) / scale)))
    res.append(("cubic monotonicity", worst >= -1e-12, f"min scaled gap {worst:.2e}"))

    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    R = 2.0
    c = Circle(R)
    dom = ThinDomain(c, ThicknessProfile.of(0.0, 1.0), 0.1)
    err = max(np.abs(c.kappa_w(th) + 1 / R).max(), np.abs(jacobian(dom, th, 0.05) - (R + 0.05) / R).max())
    res.append(("circle curvature / Jacobian", err <= 1e-14, f"max error {err:.1e}"))

    e = Ellipse(2.0, 1.0)
    r, h = 0.1, 1e-3
    off = lambda t: e.frame(t).position + r * e.frame(t).normal
    d = (off(th - 2 * h) - 8 * off(th - h) + 8 * off(th + h) - off(th + 2 * h)) / (12 * h)
    stretch = np.hypot(d[:, 0], d[:, 1]) / e.metric(th)
    err = float(np.abs(stretch - (1 - r * e.kappa_w(th))).max())
    res.append(("ellipse offset stretch", err <= 1e-8, f"max error {err:.1e}"))

    sg = SurfaceGrid(cfg.curve, max(64, cfg.m_theta // 4))
    L = min(8, (sg.m_theta - 2) // 4)
    B = GalerkinBasis(sg, cfg.profile, L)
    err = float(np.abs(B.gram() - np.eye(B.size)).max())
    res.append(("weighted Gram matrix", err <= 1e-10, f"max deviation {err:.1e}"))

    eps = cfg.epsilons[0]
    tg = ThinGrid(cfg.domain(eps), 64, 8)
    u0 = cfg.init.thin(tg, cfg.params.n_components)
    tc = cfg.time_config()
    tc.T, tc.snapshot_times = min(cfg.T, 0.1), None
    sol = solve(tg, u0, cfg.params, tc)
    res.append(("energy inequality (short run)", sol.trace.check_energy(),
                f"ratio {sol.trace.energy_ratio():.6f}"))
    over = sol.trace.max_principle_overshoot()
    res.append(("maximum principle (short run)", over <= 1e-6 + 10 * tc.dt, f"overshoot {over:.2e}"))
    return res


def cmd_check_invariants(cfg: SweepConfig, args):
    rows = invariant_battery(cfg)
    width = max(len(n) for n, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{name:{width}s}  {'PASS' if ok else 'FAIL'}  {detail}")
    return 0 if all(ok for _, ok, _ in rows) else 1


HANDLERS = {
    "solve-thin": cmd_solve_thin,
    "solve-surface": cmd_solve_surface,
    "average": cmd_average,
    "sweep": cmd_sweep,
    "check-invariants": cmd_check_invariants,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = load_config(args.config, args.overrides)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.command == "validate":
            return cmd_validate(raw, args)
        cfg = SweepConfig.from_dict(raw, seed=args.seed, jobs=args.jobs)
        return HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # remaining ValueErrors come from invalid inputs (guards, shapes)
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
