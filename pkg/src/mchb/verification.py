"""Manufactured-solution convergence studies for the spatial discretizations.

Each study evaluates a discrete operator (or full solve) against a smooth
closed-form solution on a ladder of grids and fits the least-squares slope of
log(error) against log(h).  Second-order interior stencils with the ghost
closures used here should sit at slope 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constitutive as cst
from .grid import (NEUMANN, Field, Grid, advective_divergence,
                   arithmetic_face_coefficients, fv_diffusion_matrix)
from .flow import solve_darcy
from .parameters import SpecBundle, build_specs, default_parameters


@dataclass
class ConvergenceStudy:
    name: str
    ns: list[int]
    errors: list[float]
    slope: float

    def line(self) -> str:
        errs = ", ".join(f"{e:.3e}" for e in self.errors)
        return f"{self.name}: slope {self.slope:.3f}  (errors {errs})"


def _fit_slope(ns, errors) -> float:
    h = np.log([1.0 / n for n in ns])
    e = np.log(errors)
    return float(np.polyfit(h, e, 1)[0])


def _l2(a: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt((a**2).sum() * grid.cell_area))


def mms_darcy(ns=(32, 64, 128, 256), nu: float = 1.0):
    """Pressure-Poisson/Darcy solve against sin-sin pressure, smooth velocity."""
    p_errs, v_errs = [], []
    for n in ns:
        grid = Grid(n, n, 1.0, 1.0)
        x, y = grid.cell_centers()
        p_star = np.sin(np.pi * x) * np.sin(np.pi * y)
        vx = np.sin(np.pi * x) * np.cos(np.pi * y)
        vy = np.cos(np.pi * x) * np.sin(np.pi * y)
        s_v = 2.0 * np.pi * np.cos(np.pi * x) * np.cos(np.pi * y)
        gpx = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        gpy = np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
        force = np.stack([gpx + nu * vx, gpy + nu * vy])
        res = solve_darcy(force, s_v, nu, grid, tol=1e-12)
        p_errs.append(_l2(res.p - p_star, grid))
        v_errs.append(_l2(np.stack([res.v[0] - vx, res.v[1] - vy]), grid))
    return (ConvergenceStudy("darcy-pressure", list(ns), p_errs,
                             _fit_slope(ns, p_errs)),
            ConvergenceStudy("darcy-velocity", list(ns), v_errs,
                             _fit_slope(ns, v_errs)))


def _manufactured_phase(grid: Grid):
    x, y = grid.cell_centers()
    c1 = np.cos(np.pi * x) * np.cos(np.pi * y)
    c2 = np.cos(2.0 * np.pi * x)
    c3 = np.cos(np.pi * y)
    phi = np.stack([0.4 + 0.2 * c1, 0.3 + 0.15 * c2, 0.2 + 0.1 * c3])
    lap = np.stack([
        -0.2 * 2.0 * np.pi**2 * c1,
        -0.15 * 4.0 * np.pi**2 * c2,
        -0.1 * np.pi**2 * c3,
    ])
    return phi, lap


def mms_ch_operator(ns=(32, 64, 128, 256), bundle: SpecBundle | None = None):
    """Apply the chemical-potential operator to a manufactured phase field."""
    bundle = bundle or build_specs(default_parameters())
    m = bundle.params
    errs = []
    for n in ns:
        grid = Grid(n, n, 1.0, 1.0)
        phi, lap = _manufactured_phase(grid)
        _, grad, _ = cst.potential_eval(phi)
        mu_star = -m.gamma * m.epsilon * lap + m.gamma / m.epsilon * grad
        a_neu, _ = fv_diffusion_matrix(grid, NEUMANN)
        mu_h = np.stack([
            (m.gamma * m.epsilon * (a_neu @ phi[i].ravel())).reshape(grid.shape)
            + m.gamma / m.epsilon * grad[i]
            for i in range(3)
        ])
        errs.append(_l2(mu_h - mu_star, grid))
    return ConvergenceStudy("ch-operator", list(ns), errs, _fit_slope(ns, errs))


def mms_nutrient_operator(ns=(32, 64, 128, 256), bundle: SpecBundle | None = None):
    """Apply the nutrient flux operator div(D grad N_sigma) with no-flux walls."""
    bundle = bundle or build_specs(default_parameters())
    chem = bundle.chem
    errs = []
    for n in ns:
        grid = Grid(n, n, 1.0, 1.0)
        x, y = grid.cell_centers()
        phi, lap_phi = _manufactured_phase(grid)
        sigma = 1.0 + 0.3 * np.cos(np.pi * x) * np.cos(2.0 * np.pi * y)
        lap_sigma = -0.3 * 5.0 * np.pi**2 * np.cos(np.pi * x) * np.cos(2.0 * np.pi * y)
        target = chem.chi_sigma * lap_sigma \
            - sum(chem.coupling[0, l] * lap_phi[l] for l in range(3))
        d_face = arithmetic_face_coefficients(np.ones(grid.shape), grid)
        a_d, _ = fv_diffusion_matrix(grid, NEUMANN, d_face[0], d_face[1])
        n_sigma = chem.chi_sigma * sigma \
            - sum(chem.coupling[0, l] * phi[l] for l in range(3))
        applied = -(a_d @ n_sigma.ravel()).reshape(grid.shape)
        errs.append(_l2(applied - target, grid))
    return ConvergenceStudy("nutrient-operator", list(ns), errs,
                            _fit_slope(ns, errs))


def mms_advection(ns=(32, 64, 128, 256)):
    """Upwind convective term against the analytic (grad q) . v + q div v."""
    errs = []
    for n in ns:
        grid = Grid(n, n, 1.0, 1.0)
        x, y = grid.cell_centers()
        q = 0.5 + 0.25 * np.cos(np.pi * x) * np.cos(np.pi * y)
        qx = -0.25 * np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
        qy = -0.25 * np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        vx = np.sin(np.pi * x) * np.cos(np.pi * y)
        vy = -0.5 * np.cos(np.pi * x) * np.sin(np.pi * y)
        div_v = 0.5 * np.pi * np.cos(np.pi * x) * np.cos(np.pi * y)
        target = qx * vx + qy * vy + q * div_v
        got = advective_divergence(Field(q, NEUMANN, grid), vx, vy, div_v)
        errs.append(_l2(got - target, grid))
    return ConvergenceStudy("advective-divergence", list(ns), errs,
                            _fit_slope(ns, errs))


def run_all(ns=(32, 64, 128, 256)) -> list[ConvergenceStudy]:
    dp, dv = mms_darcy(ns)
    return [dp, dv, mms_ch_operator(ns), mms_nutrient_operator(ns),
            mms_advection(ns)]


def check_slopes(studies: list[ConvergenceStudy]) -> list[str]:
    """Names of studies whose slope misses its acceptance window."""
    bad = []
    for s in studies:
        if s.name in ("darcy-pressure", "darcy-velocity"):
            if abs(s.slope - 2.0) > 0.2:
                bad.append(s.name)
        elif s.slope < 1.8:
            bad.append(s.name)
    return bad
