"""Command-line surface: run, sweep-darcy, mms, validate.

Exit codes are a total function of the outcome class:

* 0  success
* 1  configuration error
* 2  aborted run / aborted sweep
* 3  verification (convergence-slope) failure
* 4  strict assumption failure
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import verification
from .flow import (BrinkmanOptions, FlowSolverError, darcy_residual,
                   korteweg_force, solve_brinkman, solve_darcy)
from .io_formats import RunWriter, write_sweep_csv
from .parameters import (ConfigError, ScenarioConfig, StrictAssumptionError,
                         build_default_scenario, load_config,
                         validate_assumptions)
from .state import build_initial_state
from .stepping import TimeStepper
from . import constitutive as cst

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORTED = 2
EXIT_VERIFICATION = 3
EXIT_STRICT = 4


@dataclass
class SweepResult:
    """Brinkman-to-Darcy comparison on one frozen state."""

    eta_levels: list[float]
    velocity_gaps: list[float]
    velocity_gaps_rel: list[float]
    darcy_residuals: list[float]
    reference: object
    partial: bool = False

    def __post_init__(self):
        n = len(self.eta_levels)
        if any(len(lst) != n for lst in (self.velocity_gaps,
                                         self.velocity_gaps_rel,
                                         self.darcy_residuals)):
            raise ValueError("sweep level lists must share length")
        if any(b >= a for a, b in zip(self.eta_levels, self.eta_levels[1:])):
            raise ValueError("eta levels must be strictly decreasing")


def _resolve_config(args) -> ScenarioConfig:
    strict = getattr(args, "strict", False)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"configuration file not found: {path}")
        cfg = load_config(path.read_text(), strict=strict)
    else:
        cfg = build_default_scenario(args.preset)
        if strict:
            report = validate_assumptions(cfg.model, eta0=cfg.eta0,
                                          lambda0=cfg.lambda0,
                                          flow_backend=cfg.flow_backend)
            if not report.all_pass:
                raise StrictAssumptionError(
                    "assumption check failed under strict mode: "
                    + ", ".join(report.failing()))
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "t_end", None) is not None:
        overrides["t_end"] = args.t_end
    if getattr(args, "steps", None) is not None:
        overrides["t_end"] = args.steps * cfg.dt
    if overrides:
        cfg = replace(cfg, **overrides).validate()
    return cfg


def _out_dir(args) -> Path:
    base = args.out_dir or os.environ.get("MCHB_OUT_DIR") or "mchb-out"
    return Path(base)


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    report = validate_assumptions(cfg.model, eta0=cfg.eta0, lambda0=cfg.lambda0,
                                  flow_backend=cfg.flow_backend)
    for name in report.failing():
        print(f"warning: assumption {name} violated", file=sys.stderr)
    out = _out_dir(args)
    with RunWriter(out, cfg, tag=args.tag) as writer:
        summary = TimeStepper(cfg).run(writer)
    print(f"run finished: {len(summary.reports)} steps, "
          f"E0={summary.e_initial:.6g}, out={out}")
    if summary.aborted:
        print(f"run aborted: {summary.message}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def frozen_snapshot(cfg: ScenarioConfig, steps: int = 5):
    """Short run of the configured scenario, returning the frozen state inputs."""
    stepper = TimeStepper(cfg)
    state = build_initial_state(cfg, stepper.bundle)
    for _ in range(steps):
        state, _ = stepper.step(state, cfg.dt)
    bundle = stepper.bundle
    _, _, n_sigma, _ = cst.chemical_energy(state.phi, state.sigma, bundle.chem)
    force = korteweg_force(state.phi, state.mu, state.sigma, n_sigma,
                           state.grid)
    if cfg.sources_enabled:
        s_v = cst.source_velocity(state.phi, state.sigma, bundle.sources)
    else:
        s_v = np.zeros(state.grid.shape)
    return state, force, s_v


def run_darcy_sweep(cfg: ScenarioConfig, eta_levels, jobs: int = 1,
                    snapshot_steps: int = 5, tol: float = 1e-10) -> SweepResult:
    eta_levels = sorted(eta_levels, reverse=True)
    state, force, s_v = frozen_snapshot(cfg, steps=snapshot_steps)
    grid = state.grid
    nu = cfg.model.nu
    reference = solve_darcy(force, s_v, nu, grid, tol=tol)
    ref_norm = float(np.sqrt((reference.v**2).sum() * grid.cell_area))
    opts = BrinkmanOptions(tol=tol)

    def level(eta):
        eta_f = np.full(grid.shape, eta)
        res = solve_brinkman(force, s_v, eta_f, eta_f, nu, grid, opts)
        gap = float(np.sqrt(((res.v - reference.v)**2).sum() * grid.cell_area))
        dres = darcy_residual(res.v, res.p, force, nu, grid)
        return gap, dres

    gaps, gaps_rel, residuals = [], [], []
    partial = False
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(level, eta) for eta in eta_levels]
            results = []
            for fut in futures:
                try:
                    results.append(fut.result())
                except FlowSolverError:
                    results.append(None)
                    partial = True
    else:
        results = []
        for eta in eta_levels:
            try:
                results.append(level(eta))
            except FlowSolverError:
                results.append(None)
                partial = True
    kept_levels = []
    for eta, res in zip(eta_levels, results):
        if res is None:
            break
        kept_levels.append(eta)
        gaps.append(res[0])
        gaps_rel.append(res[0] / max(ref_norm, 1e-300))
        residuals.append(res[1])
    return SweepResult(kept_levels, gaps, gaps_rel, residuals, reference,
                       partial=partial)


def cmd_sweep_darcy(args) -> int:
    cfg = _resolve_config(args)
    if cfg.flow_backend != "brinkman":
        cfg = replace(cfg, flow_backend="brinkman").validate()
    levels = [float(tok) for tok in args.levels.split(",") if tok]
    if not levels:
        raise ConfigError("empty eta ladder")
    result = run_darcy_sweep(cfg, levels, jobs=args.jobs,
                             snapshot_steps=args.snapshot_steps)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "sweep_darcy.csv", result.eta_levels,
                    result.velocity_gaps, result.velocity_gaps_rel,
                    result.darcy_residuals, partial=result.partial)
    for eta, gap, rel, res in zip(result.eta_levels, result.velocity_gaps,
                                  result.velocity_gaps_rel,
                                  result.darcy_residuals):
        print(f"eta={eta:.3e}  gap={gap:.6e}  rel={rel:.6e}  residual={res:.6e}")
    if result.partial:
        print("sweep aborted: solver failure, partial results flagged",
              file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def cmd_mms(args) -> int:
    ns = [int(tok) for tok in args.grids.split(",") if tok]
    if len(ns) < 2:
        raise ConfigError("convergence study needs at least two grids")
    studies = verification.run_all(tuple(ns))
    for s in studies:
        print(s.line())
    bad = verification.check_slopes(studies)
    if bad:
        print(f"verification failure: {', '.join(bad)}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _resolve_config(args)
    report = validate_assumptions(cfg.model, eta0=cfg.eta0, lambda0=cfg.lambda0,
                                  flow_backend=cfg.flow_backend)
    for line in report.lines():
        print(line)
    if args.strict and not report.all_pass:
        print("strict mode: assumption failure "
              + ", ".join(report.failing()), file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mchb",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, preset_default):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", default=preset_default,
                       help=f"preset name (default {preset_default})")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None,
                       help="output root (default $MCHB_OUT_DIR or ./mchb-out)")
        p.add_argument("--strict", action="store_true",
                       help="hard-enforce the model assumptions")

    p = sub.add_parser("run", help="advance a scenario and write reports")
    common(p, "stratified-tumor")
    p.add_argument("--steps", type=int, default=None,
                   help="override t_end as steps * dt")
    p.add_argument("--t-end", type=float, default=None, dest="t_end")
    p.add_argument("--tag", default="run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-darcy", help="vanishing-viscosity comparison")
    common(p, "darcy-limit")
    p.add_argument("--levels", default="1e-1,1e-2,1e-3,1e-4",
                   help="comma-separated eta ladder (lambda = eta)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--snapshot-steps", type=int, default=5,
                   help="steps used to prepare the frozen snapshot")
    p.set_defaults(func=cmd_sweep_darcy)

    p = sub.add_parser("mms", help="manufactured-solution convergence studies")
    p.add_argument("--grids", default="32,64,128,256")
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("validate", help="check the model assumptions")
    common(p, "stratified-tumor")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StrictAssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRICT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FlowSolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
