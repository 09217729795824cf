"""Split-step solver for the frictional (Kostin) Schroedinger equation.

    i hbar psi_t = [-hbar^2/2m d_xx + U + (b/m) S + kT ln rho] psi

where S is the phase of psi times hbar.  The nonlinear terms are real, so the
potential sub-step only rotates phases.  Along that sub-flow rho is frozen and
S obeys S_t = -(W + gamma S) with W = U + kT ln rho and gamma = b/m, which is
integrated exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import (DensityField, Grid1D, NumericalError, PhysicalParams, PotentialSpec,
                   WaveFunction, fill_nearest, floor_mask, integrate, spectral_derivative)
from .qpotential import DEFAULT_FLOOR, quantum_force

MAX_PHASE_JUMP = 0.5 * math.pi


@dataclass(frozen=True, eq=False)
class MadelungFields:
    """rho, unwrapped action S (zero at the density maximum) and velocity V."""

    rho: DensityField
    S: np.ndarray
    V: np.ndarray
    mask: np.ndarray


def _require_periodic(grid: Grid1D):
    if not grid.periodic:
        raise ValueError("the split-step solver needs a periodic grid")


def unwrap_phase(psi: np.ndarray, mask: np.ndarray, max_jump: float = MAX_PHASE_JUMP) -> np.ndarray:
    """Phase of psi unwrapped outward from argmax |psi|, flat outside the mask."""
    rho = np.abs(psi) ** 2
    i0 = int(np.argmax(rho))
    inc = np.angle(psi[1:] * np.conj(psi[:-1]))
    ok = mask[1:] & mask[:-1]
    bad = ok & (np.abs(inc) > max_jump)
    if bad.any():
        j = int(np.nonzero(bad)[0][0])
        raise NumericalError(f"phase jump {inc[j]:.3f} rad between nodes {j} and {j + 1}; refine the grid")
    inc = np.where(ok, inc, 0.0)
    phase = np.zeros(psi.size)
    phase[i0 + 1:] = np.cumsum(inc[i0:])
    phase[:i0] = -np.cumsum(inc[:i0][::-1])[::-1]
    return phase


def continue_quadratic(f: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Continue f beyond the span of ``mask`` by the quadratic through its three end nodes."""
    idx = np.nonzero(mask)[0]
    lo, hi = idx[0], idx[-1]
    if hi - lo < 2:
        return f
    f = f.copy()
    a = f[lo:lo + 3]
    k = np.arange(lo, 0, -1, dtype=float)
    f[:lo] = a[0] - k * (-1.5 * a[0] + 2 * a[1] - 0.5 * a[2]) + 0.5 * k * k * (a[0] - 2 * a[1] + a[2])
    a = f[hi - 2:hi + 1]
    k = np.arange(1, f.size - hi, dtype=float)
    f[hi + 1:] = a[2] + k * (1.5 * a[2] - 2 * a[1] + 0.5 * a[0]) + 0.5 * k * k * (a[2] - 2 * a[1] + a[0])
    return f


def velocity_field(psi: np.ndarray, grid: Grid1D, params: PhysicalParams, mask: np.ndarray) -> np.ndarray:
    """V = hbar Im(psi* psi') / (m rho) on the mask, zero outside."""
    dpsi = spectral_derivative(psi, 1, grid.dx)
    rho = np.abs(psi) ** 2
    v = np.zeros(psi.size)
    v[mask] = params.hbar * np.imag(np.conj(psi[mask]) * dpsi[mask]) / (params.m * rho[mask])
    return v


def velocity_gradient(psi: np.ndarray, grid: Grid1D, params: PhysicalParams, mask: np.ndarray) -> np.ndarray:
    """V' = (hbar/m) Im(psi''/psi - (psi'/psi)^2) on the mask, zero outside."""
    d1 = spectral_derivative(psi, 1, grid.dx)[mask] / psi[mask]
    d2 = spectral_derivative(psi, 2, grid.dx)[mask] / psi[mask]
    out = np.zeros(psi.size)
    out[mask] = params.hbar / params.m * np.imag(d2 - d1 * d1)
    return out


def madelung_decompose(psi: WaveFunction, params: PhysicalParams,
                       floor: float = DEFAULT_FLOOR) -> MadelungFields:
    """Split psi into density, action and velocity."""
    _require_periodic(psi.grid)
    v = psi.values
    rho = np.abs(v) ** 2
    mask = floor_mask(rho, floor)
    S = params.hbar * unwrap_phase(v, mask)
    V = velocity_field(v, psi.grid, params, mask)
    return MadelungFields(DensityField(rho, psi.grid), S, V, mask)


@lru_cache(maxsize=32)
def _kinetic_factor(n: int, dx: float, dt: float, hbar: float, m: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    f = np.exp(-1j * hbar * k * k * dt / (2.0 * m))
    f.setflags(write=False)
    return f


def _potential_kick(psi: np.ndarray, U: np.ndarray, params: PhysicalParams, tau: float,
                    floor: float) -> np.ndarray:
    gamma = params.b / params.m
    if gamma == 0 and params.kT == 0:
        return psi * np.exp(-1j * U * tau / params.hbar)
    rho = np.abs(psi) ** 2
    mask = floor_mask(rho, floor)
    W = U
    if params.kT > 0:
        lr = np.zeros(psi.size)
        lr[mask] = np.log(rho[mask])
        W = U + params.kT * fill_nearest(lr, mask)
    if gamma > 0:
        S = params.hbar * continue_quadratic(unwrap_phase(psi, mask), mask)
        dS = (S + W / gamma) * math.expm1(-gamma * tau)
    else:
        dS = -W * tau
    return psi * np.exp(1j * dS / params.hbar)


def _strang(psi: np.ndarray, U: np.ndarray, kin: np.ndarray, params: PhysicalParams,
            dt: float, floor: float) -> np.ndarray:
    psi = _potential_kick(psi, U, params, 0.5 * dt, floor)
    psi = np.fft.ifft(np.fft.fft(psi) * kin)
    return _potential_kick(psi, U, params, 0.5 * dt, floor)


def step_kostin(psi: WaveFunction, params: PhysicalParams, pot: PotentialSpec, dt: float,
                floor: float = DEFAULT_FLOOR, norm_tol: float = 1e-8) -> WaveFunction:
    """One Strang step (half potential, full kinetic, half potential)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = psi.grid
    _require_periodic(g)
    kin = _kinetic_factor(g.n, g.dx, float(dt), params.hbar, params.m)
    out = _strang(psi.values, pot(g.x), kin, params, dt, floor)
    n0, n1 = psi.norm, float(integrate(np.abs(out) ** 2, g))
    if abs(n1 - n0) > norm_tol:
        raise NumericalError(f"norm drift {n1 - n0:.3e} in one step")
    return WaveFunction(out, g)


@dataclass
class EvolutionRecord:
    """Observables sampled along a run."""

    t: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    mean_x: list = field(default_factory=list)
    var_x: list = field(default_factory=list)
    mean_p: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    dt: float = 0.0

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in ("t", "norm", "mean_x", "var_x", "mean_p", "energy")}


def observables(psi: np.ndarray, grid: Grid1D, params: PhysicalParams, U: np.ndarray) -> tuple:
    """norm, <x>, variance, <p> and energy of a sampled wave function."""
    rho = np.abs(psi) ** 2
    x = grid.x
    norm = float(integrate(rho, grid))
    mx = float(integrate(x * rho, grid)) / norm
    var = float(integrate((x - mx) ** 2 * rho, grid)) / norm
    dpsi = spectral_derivative(psi, 1, grid.dx)
    mp = params.hbar * float(integrate(np.imag(np.conj(psi) * dpsi), grid)) / norm
    ekin = params.hbar**2 / (2 * params.m) * float(integrate(np.abs(dpsi) ** 2, grid))
    energy = (ekin + float(integrate(U * rho, grid))) / norm
    return norm, mx, var, mp, energy


def stable_dt(grid: Grid1D, params: PhysicalParams) -> float:
    """Heuristic step bound dx^2 m / (pi hbar) for the spectral splitting."""
    return grid.dx**2 * params.m / (math.pi * params.hbar)


def evolve_kostin(psi0: WaveFunction, params: PhysicalParams, pot: PotentialSpec, t_max: float,
                  dt: float, cadence: int = 1, snapshots: bool = False,
                  floor: float = DEFAULT_FLOOR, norm_tol: float = 1e-6) -> EvolutionRecord:
    """Integrate to ``t_max`` recording observables every ``cadence`` steps.

    The step is shortened if needed so that an integer number of steps lands
    exactly on ``t_max``.
    """
    g = psi0.grid
    _require_periodic(g)
    if not (t_max > 0 and dt > 0):
        raise ValueError("t_max and dt must be positive")
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    nsteps = max(1, math.ceil(t_max / dt - 1e-9))
    h = t_max / nsteps
    bound = stable_dt(g, params)
    if h > bound:
        warnings.warn(f"dt = {h:.3g} exceeds the heuristic bound {bound:.3g}", RuntimeWarning, stacklevel=2)
    U = pot(g.x)
    kin = _kinetic_factor(g.n, g.dx, h, params.hbar, params.m)
    rec = EvolutionRecord(dt=h)
    psi = psi0.values.copy()

    def record(t):
        nrm, mx, var, mp, en = observables(psi, g, params, U)
        if abs(nrm - 1.0) > norm_tol:
            raise NumericalError(f"norm {nrm:.12g} drifted at t = {t:.6g}")
        rec.t.append(t)
        rec.norm.append(nrm)
        rec.mean_x.append(mx)
        rec.var_x.append(var)
        rec.mean_p.append(mp)
        rec.energy.append(en)
        if snapshots:
            rec.snapshots.append(psi.copy())

    record(0.0)
    for i in range(1, nsteps + 1):
        psi = _strang(psi, U, kin, params, h, floor)
        if i % cadence == 0 or i == nsteps:
            record(i * h)
    return rec


def final_state(psi0: WaveFunction, params: PhysicalParams, pot: PotentialSpec, t_max: float,
                dt: float, floor: float = DEFAULT_FLOOR) -> WaveFunction:
    """Wave function at ``t_max`` (same stepping as :func:`evolve_kostin`)."""
    rec = evolve_kostin(psi0, params, pot, t_max, dt, cadence=max(1, math.ceil(t_max / dt - 1e-9)),
                        snapshots=True, floor=floor)
    return WaveFunction(rec.snapshots[-1], psi0.grid)


@dataclass(frozen=True)
class BalanceResidual:
    momentum: float
    continuity: float


def momentum_balance_residual(snapshots, dt: float, params: PhysicalParams, pot: PotentialSpec,
                              mask_floor: float = 1e-6, grid: Grid1D | None = None) -> BalanceResidual:
    """Residuals of the hydrodynamic equations at the middle of three snapshots.

    Momentum:   m V_t + m V V' + b V + (U + Q)' + kT (ln rho)'
    Continuity: rho_t + (rho V)'

    Time derivatives are centred.  Each residual is a max-norm over the
    intersection of the snapshot masks, divided by the largest individual term
    (continuity also admits the intrinsic rate hbar rho_max / (m sigma^2)).
    Raw arrays are accepted when ``grid`` is given.
    """
    if len(snapshots) != 3:
        raise ValueError("need exactly three consecutive snapshots")
    if grid is None:
        grids = [s.grid for s in snapshots if isinstance(s, WaveFunction)]
        if not grids:
            raise ValueError("raw snapshot arrays need an explicit grid")
        grid = grids[0]
    psis = [s if isinstance(s, WaveFunction) else WaveFunction(np.asarray(s), grid) for s in snapshots]
    g = psis[1].grid
    if any(p.grid != g for p in psis):
        raise ValueError("snapshots live on different grids")
    _require_periodic(g)
    masks = [floor_mask(np.abs(p.values) ** 2, mask_floor) for p in psis]
    mask = masks[0] & masks[1] & masks[2]
    if not mask.any():
        raise ValueError("snapshot masks do not overlap")
    Vs = [velocity_field(p.values, g, params, mask) for p in psis]
    rhos = [np.abs(p.values) ** 2 for p in psis]
    rho = rhos[1]
    V = Vs[1]
    dens = DensityField(rho, g)
    m = params.m
    terms = [
        m * (Vs[2] - Vs[0]) / (2 * dt),
        m * V * velocity_gradient(psis[1].values, g, params, mask),
        params.b * V,
        pot.deriv_values(g.x, 1),
        -quantum_force(dens, params),
    ]
    if params.kT > 0:
        terms.append(params.kT * spectral_derivative(rho, 1, g.dx) / np.where(rho > 0, rho, 1.0))
    total = sum(terms)
    scale = max(np.max(np.abs(t[mask])) for t in terms)
    mom = float(np.max(np.abs(total[mask])) / scale)

    rho_t = (rhos[2] - rhos[0]) / (2 * dt)
    # (rho V)' = (hbar/m) Im(psi* psi''), smooth across the mask edge
    flux = params.hbar / m * np.imag(np.conj(psis[1].values) * spectral_derivative(psis[1].values, 2, g.dx))
    x = g.x
    var = float(integrate((x - integrate(x * rho, g)) ** 2 * rho, g))
    intrinsic = params.hbar * rho.max() / (m * var)
    cscale = max(np.max(np.abs(rho_t[mask])), np.max(np.abs(flux[mask])), intrinsic)
    cont = float(np.max(np.abs((rho_t + flux)[mask])) / cscale)
    return BalanceResidual(mom, cont)


def coherent_state(grid: Grid1D, params: PhysicalParams, omega0: float, x0: float = 0.0,
                   v0: float = 0.0) -> WaveFunction:
    """Displaced harmonic ground state with mean velocity v0."""
    from .core import gaussian_wavefunction
    return gaussian_wavefunction(x0, params.hbar / (2 * params.m * omega0), grid, v0, params)


def ground_action_1d(params: PhysicalParams, omega0: float) -> float:
    """Stationary action -m (U + Q) / b for the overdamped ground state in 1D."""
    return -params.m * params.hbar * omega0 / (2.0 * params.b)


__all__ = ["MadelungFields", "EvolutionRecord", "BalanceResidual", "madelung_decompose",
           "unwrap_phase", "velocity_field", "velocity_gradient", "step_kostin", "evolve_kostin", "final_state",
           "momentum_balance_residual", "observables", "coherent_state", "stable_dt",
           "ground_action_1d"]
