"""Quantum potential, quantum force, pressure and the Fisher functional.

All evaluations are restricted to the floor mask rho > floor * max(rho).
Outside the mask Q is carried flat from the nearest in-mask point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DensityField, PhysicalParams, derivative, fill_nearest, floor_mask,
                   integrate)

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class PressureField:
    """Thermal plus quantum pressure, P = kT rho - (hbar^2/4m) rho (ln rho)''."""

    thermal: np.ndarray
    quantum: np.ndarray
    mask: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.thermal + self.quantum


def _sqrt_derivs(rho: DensityField, orders=(1, 2)):
    u = np.sqrt(rho.values)
    return u, [derivative(u, k, rho.grid) for k in orders]


def _mask(rho: DensityField, floor: float) -> np.ndarray:
    mask = floor_mask(rho.values, floor)
    return mask


def extend_log_density(rho: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """ln rho on a contiguous mask, continued quadratically beyond it.

    The continuation is exact for Gaussians, whose log density is quadratic.
    """
    idx = np.nonzero(mask)[0]
    lo, hi = idx[0], idx[-1]
    if hi - lo + 1 != idx.size:
        raise ValueError("log-density extension needs a contiguous mask")
    if idx.size < 3:
        raise ValueError("mask too narrow for quadratic extension")
    y = np.empty(rho.size)
    y[lo:hi + 1] = np.log(rho[lo:hi + 1])
    a = y[lo:lo + 3]
    k = np.arange(lo, 0, -1, dtype=float)
    y[:lo] = a[0] - k * (-1.5 * a[0] + 2 * a[1] - 0.5 * a[2]) + 0.5 * k * k * (a[0] - 2 * a[1] + a[2])
    a = y[hi - 2:hi + 1]
    k = np.arange(1, rho.size - hi, dtype=float)
    y[hi + 1:] = a[2] + k * (1.5 * a[2] - 2 * a[1] + 0.5 * a[0]) + 0.5 * k * k * (a[2] - 2 * a[1] + a[0])
    return y


def quantum_potential(rho: DensityField, params: PhysicalParams, floor: float = DEFAULT_FLOOR,
                      method: str = "sqrt") -> np.ndarray:
    """Q = -(hbar^2/2m) (sqrt rho)'' / sqrt rho on the mask.

    ``method="log"`` evaluates the equivalent -(hbar^2/8m)(2 y'' + y'^2),
    y = ln rho, with finite differences on the mask.  It serves as a cross-check.
    """
    mask = _mask(rho, floor)
    c = params.hbar**2 / (2.0 * params.m)
    if c == 0:
        return np.zeros(rho.grid.n)
    if method == "sqrt":
        u, (u2,) = _sqrt_derivs(rho, (2,))
        q = np.zeros_like(u)
        q[mask] = -c * u2[mask] / u[mask]
    elif method == "log":
        y = extend_log_density(rho.values, mask)
        dx = rho.grid.dx
        y1 = np.gradient(y, dx, edge_order=2)
        y2 = np.empty_like(y)
        y2[1:-1] = (y[2:] - 2 * y[1:-1] + y[:-2]) / dx**2
        y2[0], y2[-1] = y2[1], y2[-2]
        q = -0.25 * c * (2.0 * y2 + y1 * y1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return fill_nearest(q, mask)


def quantum_force(rho: DensityField, params: PhysicalParams, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """-dQ/dx on the mask, zero outside.

    Uses the quotient form Q' = -(hbar^2/2m)(u''' u - u'' u')/u^2, u = sqrt(rho),
    which avoids differentiating the flat tail extrapolation of Q.
    """
    mask = _mask(rho, floor)
    c = params.hbar**2 / (2.0 * params.m)
    f = np.zeros(rho.grid.n)
    if c == 0:
        return f
    u, (u1, u2, u3) = _sqrt_derivs(rho, (1, 2, 3))
    um = u[mask]
    f[mask] = c * (u3[mask] * um - u2[mask] * u1[mask]) / (um * um)
    return f


def pressure_field(rho: DensityField, params: PhysicalParams, floor: float = DEFAULT_FLOOR) -> PressureField:
    """Thermal and quantum pressure.

    The quantum part is computed as -(hbar^2/2m)(u u'' - u'^2) with u = sqrt(rho),
    which equals -(hbar^2/4m) rho (ln rho)'' and needs no division.
    """
    mask = _mask(rho, floor)
    thermal = params.kT * rho.values
    c = params.hbar**2 / (2.0 * params.m)
    if c == 0:
        quantum = np.zeros(rho.grid.n)
    else:
        u, (u1, u2) = _sqrt_derivs(rho, (1, 2))
        quantum = -c * (u * u2 - u1 * u1)
    return PressureField(thermal, quantum, mask)


def pressure_identity_residual(rho: DensityField, params: PhysicalParams,
                               floor: float = DEFAULT_FLOOR, trim: int = 2) -> float:
    """max |P' - rho mu'| / max |rho mu'| over the mask, with mu = kT ln rho + Q.

    The thermal side is written as kT rho' so the classical identity holds exactly.
    On clamped grids everything uses finite differences, ``trim`` nodes at each
    mask edge are excluded, and the pressure is built from its log form so that
    the two sides are independent discretizations.
    """
    g = rho.grid
    mask = _mask(rho, floor)
    c = params.hbar**2 / (2.0 * params.m)
    if g.periodic:
        p = pressure_field(rho, params, floor).total
        lhs = derivative(p, 1, g)
        rhs = params.kT * derivative(rho.values, 1, g)
        if c:
            rhs = rhs - rho.values * quantum_force(rho, params, floor)
        sel = mask
    else:
        lr = extend_log_density(rho.values, mask)
        pq = -0.5 * c * rho.values * derivative(lr, 2, g)
        lhs = derivative(params.kT * rho.values + pq, 1, g)
        q = quantum_potential(rho, params, floor)
        rhs = params.kT * derivative(rho.values, 1, g) + rho.values * derivative(q, 1, g)
        idx = np.nonzero(mask)[0]
        sel = np.zeros_like(mask)
        lo, hi = idx[0] + trim, idx[-1] - trim
        sel[max(lo, 1):min(hi, g.n - 2) + 1] = True
        sel &= mask
    scale = np.max(np.abs(rhs[sel]))
    if scale == 0:
        return float(np.max(np.abs(lhs[sel] - rhs[sel])))
    return float(np.max(np.abs(lhs[sel] - rhs[sel])) / scale)


@dataclass(frozen=True)
class FisherResult:
    mean_q: float
    fisher_form: float


def fisher_mean_q(rho: DensityField, params: PhysicalParams, floor: float = DEFAULT_FLOOR,
                  edge_tol: float = 1e-10) -> FisherResult:
    """<Q> = integral rho Q dx and the Fisher form (hbar^2/8m) integral rho'^2/rho dx.

    The Fisher form is evaluated as (hbar^2/2m) integral u'^2 dx.  The two agree
    when the boundary density vanishes; a non-vanishing edge raises.
    """
    v = rho.values
    if max(v[0], v[-1]) > edge_tol * v.max():
        raise ValueError("density does not vanish at the grid boundary")
    c = params.hbar**2 / (2.0 * params.m)
    if c == 0:
        return FisherResult(0.0, 0.0)
    q = quantum_potential(rho, params, floor)
    u, (u1,) = _sqrt_derivs(rho, (1,))
    mean_q = float(integrate(v * q, rho.grid))
    fisher = float(c * integrate(u1 * u1, rho.grid))
    return FisherResult(mean_q, fisher)


__all__ = ["PressureField", "FisherResult", "quantum_potential", "quantum_force",
           "pressure_field", "pressure_identity_residual", "fisher_mean_q", "extend_log_density", "DEFAULT_FLOOR"]
