"""Analytic references and independent integrators.

Nothing here shares discretization code with the solvers it validates.  ODE
references use scipy's DOP853 at rtol 1e-12; roots use Brent's method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import PhysicalParams, PotentialSpec

RTOL = 1e-12
ATOL = 1e-14


@dataclass(frozen=True)
class ReferenceCurve:
    label: str
    func: Callable
    provenance: str

    def __call__(self, t):
        return self.func(t)


def _linear_omega(pot: PotentialSpec | None, omega0: float | None, m: float) -> float:
    if pot is not None:
        if pot.degree > 2:
            raise ValueError("linear dynamics needs a free or harmonic potential")
        return pot.harmonic_frequency(m)
    return 0.0 if omega0 is None else float(omega0)


def commutator_factor(params: PhysicalParams, t: float, pot: PotentialSpec | None = None,
                      omega0: float | None = None) -> float:
    """det of the transition matrix of x' = v, v' = -(b/m) v - w^2 x at time t.

    The 2x2 matrix equation is integrated numerically; analytically the
    determinant is exp(-b t / m).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    w = _linear_omega(pot, omega0, params.m)
    g = params.b / params.m
    if t == 0:
        return 1.0
    A = np.array([[0.0, 1.0], [-w * w, -g]])

    def rhs(_t, y):
        return (A @ y.reshape(2, 2)).ravel()

    sol = solve_ivp(rhs, (0.0, t), np.eye(2).ravel(), method="DOP853", rtol=1e-13, atol=1e-15)
    M = sol.y[:, -1].reshape(2, 2)
    return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])


def free_quantum_dispersion(t, params: PhysicalParams):
    """sigma^2 = hbar sqrt(t / m b)."""
    if params.b <= 0:
        raise ValueError("needs b > 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = params.hbar * np.sqrt(t / (params.m * params.b))
    return float(out) if out.ndim == 0 else out


def einstein_dispersion(t, params: PhysicalParams):
    """sigma^2 = 2 D t with D = kT / b."""
    if params.b <= 0 or params.kT <= 0:
        raise ValueError("needs b > 0 and kT > 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = 2.0 * params.kT / params.b * t
    return float(out) if out.ndim == 0 else out


def thermo_quantum_free_dispersion(t, params: PhysicalParams):
    """Root of x - l^2 ln(1 + x/l^2) = 2 D t by Brent's method."""
    if params.b <= 0 or params.kT <= 0:
        raise ValueError("needs b > 0 and kT > 0")
    lam2 = params.hbar**2 / (4.0 * params.m * params.kT)
    D = params.kT / params.b
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(ts)
    for i, ti in enumerate(ts):
        if ti <= 0:
            continue
        rhs = 2 * D * ti
        if lam2 == 0:
            out[i] = rhs
            continue
        f = lambda x: x - lam2 * math.log1p(x / lam2) - rhs
        hi = rhs + math.sqrt(2 * lam2 * rhs) + lam2
        out[i] = brentq(f, 0.0, hi, xtol=1e-15 * max(1.0, rhs), rtol=1e-15)
    return float(out[0]) if np.ndim(t) == 0 else out


def harmonic_quantum_dispersion(t, params: PhysicalParams, omega0: float):
    """sigma^2 = (hbar / 2 m w) sqrt(1 - exp(-4 m w^2 t / b)) from a point start, kT = 0."""
    t = np.asarray(t, dtype=float)
    m = params.m
    out = params.hbar / (2 * m * omega0) * np.sqrt(1.0 - np.exp(-4 * m * omega0**2 * t / params.b))
    return float(out) if out.ndim == 0 else out


def gaussian_dispersion_curve(sigma2_0: float, params: PhysicalParams, omega0: float, t) -> np.ndarray:
    """Gaussian-ansatz variance ODE integrated from sigma2_0.

    d s/dt = -2 m w^2 s / b + hbar^2 / (2 m b s) + 2 kT / b.
    """
    m, b = params.m, params.b
    t = np.asarray(t, dtype=float)

    def rhs(_t, s):
        return [-2 * m * omega0**2 * s[0] / b + params.hbar**2 / (2 * m * b * s[0]) + 2 * params.kT / b]

    sol = solve_ivp(rhs, (0.0, float(t.max())), [sigma2_0], t_eval=t, method="DOP853", rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[0]


def damped_oscillator(t, x0: float, v0: float, params: PhysicalParams, omega0: float):
    """Classical m x'' + b x' + m w^2 x = 0; returns (x(t), v(t))."""
    g = params.b / params.m
    t = np.asarray(t, dtype=float)
    sol = solve_ivp(lambda _t, y: [y[1], -g * y[1] - omega0**2 * y[0]], (0.0, float(t.max())),
                    [x0, v0], t_eval=t, method="DOP853", rtol=RTOL, atol=ATOL)
    return sol.y[0], sol.y[1]


def thermo_quantum_sigma2(params: PhysicalParams, omega0: float) -> float:
    """Stationary Gaussian variance [kT + sqrt(kT^2 + hbar^2 w^2)] / (2 m w^2)."""
    kt = params.kT
    return (kt + math.sqrt(kt * kt + (params.hbar * omega0) ** 2)) / (2 * params.m * omega0**2)


def coffey_sigma2(params: PhysicalParams, omega0: float) -> float:
    """Stationary x-variance of the Coffey-corrected Kramers equation: kT/m w^2 + hbar^2/(12 m kT)."""
    if params.kT <= 0:
        raise ValueError("needs kT > 0")
    return params.kT / (params.m * omega0**2) + params.hbar**2 / (12 * params.m * params.kT)


@dataclass(frozen=True)
class EquilibriumReferences:
    mb_phase_density: Callable | None
    ground_sigma2: float | None
    classical_sigma2: float | None


def equilibrium_references(params: PhysicalParams, pot: PotentialSpec) -> EquilibriumReferences:
    """Maxwell-Boltzmann density and the harmonic variance references.

    ``mb_phase_density(x, p)`` is normalized by quadrature over the real line,
    so it needs a confining potential (degree >= 2, positive leading term).
    """
    m = params.m
    w = pot.harmonic_frequency(m) if pot.degree <= 2 else None
    ground = params.hbar / (2 * m * w) if w else None
    classical = params.kT / (m * w * w) if (w and params.kT > 0) else None
    mb = None
    if params.kT > 0 and pot.degree >= 2 and pot.coeffs[-1] > 0:
        from scipy.integrate import quad
        kt = params.kT
        u0 = float(pot(0.0))
        zx = quad(lambda x: math.exp(-(float(pot(x)) - u0) / kt), -np.inf, np.inf, epsabs=0, epsrel=1e-13)[0]
        zp = math.sqrt(2 * math.pi * m * kt)

        def mb(x, p):
            x = np.asarray(x, dtype=float)
            p = np.asarray(p, dtype=float)
            return np.exp(-(p * p / (2 * m) + pot(x) - u0) / kt) / (zx * zp)
    return EquilibriumReferences(mb, ground, classical)


def ground_state_wigner(x, p, params: PhysicalParams, omega0: float):
    """Harmonic ground-state Wigner function (1/pi hbar) exp(-x^2/2s - p^2 2s/hbar^2), s = hbar/2mw."""
    s = params.hbar / (2 * params.m * omega0)
    return np.exp(-x * x / (2 * s) - 2 * s * p * p / params.hbar**2) / (math.pi * params.hbar)


def reference_curve(name: str, params: PhysicalParams, omega0: float = 0.0,
                    sigma2_0: float = 0.0) -> ReferenceCurve:
    """Look up a named sigma^2(t) reference for sweeps and the command line."""
    if name == "harmonic":
        return ReferenceCurve(name, lambda t: harmonic_quantum_dispersion(t, params, omega0),
                              "closed form, point start, kT = 0")
    if name == "gaussian_ode":
        return ReferenceCurve(name, lambda t: gaussian_dispersion_curve(sigma2_0, params, omega0, t),
                              "Gaussian variance ODE, DOP853")
    if name == "free_quantum":
        return ReferenceCurve(name, lambda t: free_quantum_dispersion(t, params), "hbar sqrt(t/mb)")
    if name == "einstein":
        return ReferenceCurve(name, lambda t: sigma2_0 + einstein_dispersion(t, params), "sigma0^2 + 2Dt")
    if name == "thermo_quantum_free":
        return ReferenceCurve(name, lambda t: thermo_quantum_free_dispersion(t, params),
                              "implicit law, Brent root")
    if name == "commutator":
        return ReferenceCurve(name, lambda t: np.vectorize(
            lambda s: commutator_factor(params, s, omega0=omega0))(t), "transition-matrix determinant")
    raise KeyError(f"unknown oracle {name!r}")


ORACLE_NAMES = ("harmonic", "gaussian_ode", "free_quantum", "einstein", "thermo_quantum_free", "commutator")

__all__ = ["ReferenceCurve", "commutator_factor", "free_quantum_dispersion", "einstein_dispersion",
           "thermo_quantum_free_dispersion", "harmonic_quantum_dispersion", "gaussian_dispersion_curve",
           "damped_oscillator", "thermo_quantum_sigma2", "coffey_sigma2", "EquilibriumReferences",
           "equilibrium_references", "ground_state_wigner", "reference_curve", "ORACLE_NAMES"]
