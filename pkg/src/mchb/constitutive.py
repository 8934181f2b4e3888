"""Pointwise constitutive functions of the four-cell-species tumor model.

Everything in this module is closed-form algebra: the componentwise
double-well potential and its convex split, the quadratic-minus-affine
chemical free energy, the saturating proliferation law, truncations, the
phase/nutrient/velocity/boundary source terms, mobilities, viscosities and
the viscous stress.  Functions broadcast over trailing axes, so they evaluate
equally on single points (shape ``(L,)``) and on field stacks
(shape ``(L, ny, nx)``).

Component conventions: ``p[0]`` proliferating, ``p[1]`` quiescent, ``p[2]``
necrotic tumor fraction; ``s[0]`` the single nutrient density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class PotentialSpec:
    """Componentwise double well with a quadratic stabilization split.

    The split is ``psi = psi1 + psi2`` with ``psi1 = psi + s0/2 |p|^2``
    (convex for ``s0 >= 1``) and ``psi2 = -s0/2 |p|^2`` (concave, globally
    Lipschitz gradient).
    """

    kind: str = "componentwise-double-well"
    split_shift: float = 1.0

    def __post_init__(self):
        if self.split_shift < 1.0:
            raise ValueError("split_shift below 1 loses convexity of the split")


@dataclass(frozen=True, eq=False)
class ChemicalEnergySpec:
    """Coefficients of ``N(p, s) = chi_sigma/2 |s|^2 - (s.B p + a.p + b.s + c)``."""

    chi_sigma: float
    coupling: np.ndarray     # (M, L)
    a_vec: np.ndarray        # (L,)
    b_vec: np.ndarray        # (M,)
    c_scalar: float = 0.0


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Rates and shape choices for the phase/nutrient/velocity sources.

    ``variant`` selects the truncated linear exchange chain ("linear") or the
    interfacial form scaled by 1/epsilon ("interfacial").  ``theta_phi`` and
    ``theta_sigma`` carry the optional chemical-potential couplings of the
    general decomposition ``S = Lambda(p, s) - theta(p, s) m``; both vanish in
    the concrete model but the evaluation path supports them.
    """

    variant: str
    rate_p: float
    rate_q: float
    rate_a: float
    rate_d: float
    rate_c: float
    rate_b: float
    kappa: float
    c_p: float
    r: float
    epsilon: float
    sigma_omega: float
    k_boundary: float
    sigma_gamma: float
    theta_phi: np.ndarray | None = None
    theta_sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("linear", "interfacial"):
            raise ValueError(f"unknown source variant {self.variant!r}")


@dataclass(frozen=True)
class MobilitySpec:
    """Diagonal phase mobilities and the scalar nutrient mobility.

    ``m_funcs``/``d_func`` default to the constant-one choice; any modulation
    is clamped from below by ``floor`` so the tensors stay uniformly positive
    definite.
    """

    m_funcs: tuple[Callable, ...] | None = None
    d_func: Callable | None = None
    floor: float = 1e-8


@dataclass(frozen=True)
class ViscositySpec:
    """Constant shear/bulk viscosity levels with optional bounded modulation."""

    eta0: float
    lambda0: float
    modulation: Callable | None = None

    def eta_field(self, p: np.ndarray) -> np.ndarray:
        base = np.full(p.shape[1:], self.eta0)
        if self.modulation is not None:
            base = self.eta0 * np.clip(self.modulation(p), 0.1, 10.0)
        return base

    def lambda_field(self, p: np.ndarray) -> np.ndarray:
        base = np.full(p.shape[1:], self.lambda0)
        if self.modulation is not None:
            base = self.lambda0 * np.clip(self.modulation(p), 0.1, 10.0)
        return base


# ---------------------------------------------------------------------------
# potential

def potential_eval(p: np.ndarray, spec: PotentialSpec | None = None):
    """Value, gradient and Hessian of ``psi(p) = sum_i p_i^2 (1 - p_i)^2``."""
    p = np.asarray(p, dtype=float)
    value = (p**2 * (1.0 - p) ** 2).sum(axis=0)
    grad = 2.0 * p * (1.0 - p) * (1.0 - 2.0 * p)
    diag = 12.0 * p**2 - 12.0 * p + 2.0
    L = p.shape[0]
    hess = np.zeros((L,) + p.shape)
    for i in range(L):
        hess[i, i] = diag[i]
    return value, grad, hess


def potential_split(p: np.ndarray, spec: PotentialSpec):
    """Convex/concave gradient parts; they sum to the full gradient exactly."""
    p = np.asarray(p, dtype=float)
    _, grad, _ = potential_eval(p, spec)
    s0 = spec.split_shift
    return grad + s0 * p, -s0 * p


def convex_part_diag_hessian(p: np.ndarray, spec: PotentialSpec) -> np.ndarray:
    """Diagonal of the convex-part Hessian (the split keeps it diagonal)."""
    p = np.asarray(p, dtype=float)
    return 12.0 * p**2 - 12.0 * p + 2.0 + spec.split_shift


# ---------------------------------------------------------------------------
# chemical free energy

def chemical_energy(p: np.ndarray, s: np.ndarray, spec: ChemicalEnergySpec):
    """``N`` and its first/second derivatives in the affine-coupling form."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    B = spec.coupling
    M = B.shape[0]
    bp = np.einsum("ml,l...->m...", B, p)
    n_val = (0.5 * spec.chi_sigma * (s**2).sum(axis=0)
             - (s * bp).sum(axis=0)
             - np.einsum("l,l...->...", spec.a_vec, p)
             - np.einsum("m,m...->...", spec.b_vec, s)
             - spec.c_scalar)
    n_phi = -np.einsum("ml,m...->l...", B, s) - _column(spec.a_vec, p)
    n_sigma = spec.chi_sigma * s - bp - _column(spec.b_vec, s)
    n_ss = spec.chi_sigma * np.eye(M)
    return n_val, n_phi, n_sigma, n_ss


def _column(vec: np.ndarray, like: np.ndarray) -> np.ndarray:
    out = np.asarray(vec, dtype=float)
    return out.reshape(out.shape + (1,) * (like.ndim - 1))


def g_sigma(p: np.ndarray, spec: ChemicalEnergySpec) -> np.ndarray:
    """Derivative of the coupling part in the nutrient direction, ``B p + b``."""
    return np.einsum("ml,l...->m...", spec.coupling, np.asarray(p, dtype=float)) \
        + _column(spec.b_vec, np.asarray(p))


# ---------------------------------------------------------------------------
# scalar model functions

def saturating_proliferation(s, rate_p: float, c_p: float):
    """Bounded nondecreasing C^1 proliferation response.

    Linear ``rate_p * s`` up to ``c_p - 1``, saturated at ``rate_p * c_p``
    beyond ``c_p``, a monotone cubic bridge in between, and ``rate_p tanh(s)``
    for negative arguments (value/slope matched at zero).
    """
    s = np.asarray(s, dtype=float)
    t = s - (c_p - 1.0)
    bridge = rate_p * (c_p - 1.0) + rate_p * (t + t**2 - t**3)
    out = np.where(s < 0.0, rate_p * np.tanh(s), rate_p * s)
    out = np.where(s > c_p - 1.0, bridge, out)
    out = np.where(s >= c_p, rate_p * c_p, out)
    return out if out.ndim else float(out)


def truncation(s, r: float):
    """C^1 truncation: identity on [-r, 1+r], tanh saturation outside."""
    if r <= 0:
        raise ValueError("truncation radius must be positive")
    s = np.asarray(s, dtype=float)
    hi = 1.0 + r
    out = np.where(s > hi, hi + np.tanh(s - hi), s)
    out = np.where(s < -r, -r + np.tanh(s + r), out)
    return out if out.ndim else float(out)


def interface_polynomial(s, r: float):
    """``p(s) = s^2 (1 - s^2)^2`` and its truncated composition ``p(h_r(s))``."""
    s = np.asarray(s, dtype=float)
    p_val = s**2 * (1.0 - s**2) ** 2
    hr = truncation(s, r)
    p_r_val = hr**2 * (1.0 - hr**2) ** 2
    if p_val.ndim:
        return p_val, p_r_val
    return float(p_val), float(p_r_val)


# ---------------------------------------------------------------------------
# source terms

def _lambda_phase(p: np.ndarray, s: np.ndarray, spec: SourceSpec) -> np.ndarray:
    s0 = s[0]
    if spec.variant == "linear":
        pr = saturating_proliferation(s0, spec.rate_p, spec.c_p)
        return np.stack([
            truncation(p[0], spec.r) * pr - spec.rate_q * p[0],
            spec.rate_q * p[0] - spec.rate_a * p[1],
            spec.rate_a * p[1] - spec.rate_d * truncation(p[2], spec.r),
        ])
    pr = saturating_proliferation(s0, spec.rate_p, spec.c_p)
    inv_eps = 1.0 / spec.epsilon
    return np.stack([
        inv_eps * interface_polynomial(p[0], spec.r)[1] * (pr - spec.rate_q),
        inv_eps * interface_polynomial(p[1], spec.r)[1] * (spec.rate_q - spec.rate_a),
        inv_eps * interface_polynomial(p[2], spec.r)[1] * (spec.rate_a - spec.rate_d),
    ])


def source_phase(p, s, m, spec: SourceSpec) -> np.ndarray:
    """Phase source ``Lambda_phi(p, s) - theta_phi(p, s) m``."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    lam = _lambda_phase(p, s, spec)
    if spec.theta_phi is not None:
        lam = lam - np.einsum("kl,l...->k...", spec.theta_phi, np.asarray(m, dtype=float))
    return lam


def source_nutrient(p, s, m, spec: SourceSpec) -> np.ndarray:
    """Nutrient source ``C h_r(p1) s - B (sigma_Omega - s)`` minus theta term.

    The proliferating fraction is truncated so the consumption term keeps the
    linear growth bound; on the physical range of the phase field the
    truncation is the identity.
    """
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    lam = (spec.rate_c * truncation(p[0], spec.r) * s[0]
           - spec.rate_b * (spec.sigma_omega - s[0]))[None]
    if spec.theta_sigma is not None:
        lam = lam - np.einsum("ml,l...->m...", spec.theta_sigma, np.asarray(m, dtype=float))
    return lam


def source_healthy(p, s, spec: SourceSpec):
    """Source of the derived healthy fraction closing the volume balance."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    if spec.variant == "linear":
        pr = saturating_proliferation(s[0], spec.rate_p, spec.c_p)
        return -spec.kappa * pr * truncation(p[0], spec.r)
    return np.zeros(np.broadcast(p[0], s[0]).shape)


def source_velocity(p, s, spec: SourceSpec) -> np.ndarray:
    """Volume source ``1 . Lambda_phi + S_healthy``; bounded for both variants."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    return _lambda_phase(p, s, spec).sum(axis=0) + source_healthy(p, s, spec)


def source_boundary(p, s, spec: SourceSpec) -> np.ndarray:
    """Boundary nutrient source ``K (sigma_Gamma - s)``; K=0 is no-flux."""
    s = np.asarray(s, dtype=float)
    return spec.k_boundary * (spec.sigma_gamma - s)


def source_growth_constant(spec: SourceSpec) -> float:
    """Analytic constant B_S with |S_phi| + |S_sigma| <= B_S (|p|+|s|+|m|+1)."""
    hr_max = spec.r + 2.0
    p_max = spec.rate_p * spec.c_p
    if spec.variant == "linear":
        b_phi = hr_max * p_max + spec.rate_d * hr_max + 2.0 * (spec.rate_q + spec.rate_a)
    else:
        poly_max = _poly_sup(spec.r)
        rate_span = max(abs(p_max - spec.rate_q), spec.rate_p,
                        abs(spec.rate_q - spec.rate_a), abs(spec.rate_a - spec.rate_d))
        b_phi = 3.0 * poly_max * (rate_span + spec.rate_q + spec.rate_p) / spec.epsilon
    b_sig = spec.rate_c * hr_max + spec.rate_b * (spec.sigma_omega + 1.0)
    theta = 0.0
    for th in (spec.theta_phi, spec.theta_sigma):
        if th is not None:
            theta += float(np.linalg.norm(th, 2))
    return b_phi + b_sig + theta


def velocity_source_bound(spec: SourceSpec) -> float:
    """Analytic constant A_S with |S_v| <= A_S everywhere."""
    hr_max = spec.r + 2.0
    p_max = spec.rate_p * spec.c_p
    if spec.variant == "linear":
        return (1.0 - spec.kappa) * p_max * hr_max + spec.rate_d * hr_max \
            + spec.rate_p * hr_max
    poly_max = _poly_sup(spec.r)
    rate_span = max(abs(p_max - spec.rate_q) + spec.rate_p,
                    abs(spec.rate_q - spec.rate_a), abs(spec.rate_a - spec.rate_d))
    return 3.0 * poly_max * rate_span / spec.epsilon


def _poly_sup(r: float) -> float:
    grid = np.linspace(-r - 1.0, 2.0 + r, 2001)
    return float(interface_polynomial(grid, r)[1].max()) + 1e-12


# ---------------------------------------------------------------------------
# mobilities, viscosities, stress

def mobility(p, s, spec: MobilitySpec):
    """Diagonal phase mobilities and the nutrient mobility, floored below."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    L = p.shape[0]
    tail = p.shape[1:]
    if spec.m_funcs is None:
        phase = np.ones((L,) + tail)
    else:
        phase = np.stack([np.broadcast_to(np.asarray(f(p, s), dtype=float), tail)
                          for f in spec.m_funcs])
    if spec.d_func is None:
        nutrient = np.ones(tail)
    else:
        nutrient = np.broadcast_to(np.asarray(spec.d_func(p, s), dtype=float), tail).copy()
    phase = np.maximum(phase, spec.floor)
    nutrient = np.maximum(nutrient, spec.floor)
    if tail:
        return phase, nutrient
    return phase.reshape(L), float(nutrient)


def stress_tensor(grad_v: np.ndarray, div_v: float, pressure: float,
                  p: np.ndarray, spec: ViscositySpec) -> np.ndarray:
    """Viscous stress ``2 eta Dv + lambda div(v) I - pressure I``."""
    grad_v = np.asarray(grad_v, dtype=float)
    d = grad_v.shape[0]
    sym = 0.5 * (grad_v + grad_v.T)
    p = np.asarray(p, dtype=float)
    eta = float(spec.eta_field(p.reshape(p.shape + (1,))).ravel()[0])
    lam = float(spec.lambda_field(p.reshape(p.shape + (1,))).ravel()[0])
    return 2.0 * eta * sym + (lam * div_v - pressure) * np.eye(d)
