"""Strong-friction quantum diffusion.

    rho_t = d_x [ rho d_x (U + Q) / b + D d_x rho ]

Two integrators are provided.

``step_smoluchowski`` is the explicit conservative finite-volume step.  Its
fourth-order quantum term limits dt to about dx^4 m b / hbar^2, so it only
suits coarse grids and short runs.

``evolve_smoluchowski(method="implicit")`` integrates the equation written for
y = ln rho,

    b y_t = mu'' + y' mu',    mu = U + kT y - (hbar^2/8m)(2 y'' + y'^2),

with central differences and variable-step BDF2 plus Newton's method.  Every
difference operator is exact on quadratics, so Gaussian solutions are
reproduced at any resolution.  The equation is solved on the window
y > max(y) - window_depth; outside it y is continued quadratically, because
the log form amplifies perturbations where |y'| is large.  Mass is restored
after each step by a constant shift of y, under which the equation is invariant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .core import (DensityField, Grid1D, NumericalError, PhysicalParams, PotentialSpec,
                   floor_mask, integrate)
from .qpotential import DEFAULT_FLOOR, extend_log_density, quantum_potential


@dataclass
class DispersionSeries:
    """sigma^2(t) with its provenance label (pde, ode, closed-form, implicit)."""

    t: np.ndarray
    sigma2: np.ndarray
    source: str
    mean: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if self.t.shape != self.sigma2.shape:
            raise ValueError("t and sigma2 must have equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time stamps must be strictly increasing")
        if np.any(self.sigma2[self.t > 0] <= 0):
            raise ValueError("sigma^2 must be positive for t > 0")


def _omega(pot: PotentialSpec, params: PhysicalParams) -> float:
    return pot.harmonic_frequency(params.m)


def gaussian_sigma_ode_rhs(sigma2: float, params: PhysicalParams, pot: PotentialSpec) -> float:
    """d sigma^2/dt = -2 m w^2 sigma^2 / b + hbar^2 / (2 m b sigma^2) + 2 D.

    Second moment of the thermo-quantum diffusion equation under a Gaussian
    ansatz, for free or harmonic potentials.
    """
    if not sigma2 > 0:
        raise ValueError("sigma^2 must be positive")
    if params.b <= 0:
        raise ValueError("strong-friction dynamics needs b > 0")
    m, b = params.m, params.b
    w = _omega(pot, params)
    return -2.0 * m * w * w * sigma2 / b + params.hbar**2 / (2.0 * m * b * sigma2) + 2.0 * params.kT / b


def dispersion_harmonic(t, params: PhysicalParams, omega0: float):
    """sigma^2(t) = (hbar/2 m w) sqrt(1 - exp(-4 m w^2 t / b)) from a point start."""
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    if params.b <= 0:
        raise ValueError("b must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    m = params.m
    out = params.hbar / (2 * m * omega0) * np.sqrt(-np.expm1(-4 * m * omega0**2 * t / params.b))
    return float(out) if out.ndim == 0 else out


def dispersion_free_implicit(t, params: PhysicalParams, maxiter: int = 100):
    """Root of sigma^2 - l^2 ln(1 + sigma^2/l^2) = 2 D t with l the thermal wavelength.

    Newton's method from 2Dt + hbar sqrt(t/mb); the left side is increasing,
    with derivative x/(x + l^2).
    """
    if params.kT <= 0 or params.b <= 0:
        raise ValueError("needs kT > 0 and b > 0")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be non-negative")
    lam2 = params.lambdaT**2
    out = np.empty_like(ts)
    for i, ti in enumerate(ts):
        rhs = 2.0 * params.D * ti
        if ti == 0:
            out[i] = 0.0
            continue
        x = rhs + params.hbar * math.sqrt(ti / (params.m * params.b))
        tol = 1e-12 * max(1.0, rhs)
        for _ in range(maxiter):
            f = x - lam2 * math.log1p(x / lam2) - rhs
            if abs(f) < tol:
                break
            x_new = x - f * (x + lam2) / x
            x = x_new if x_new > 0 else 0.5 * x
        else:
            raise NumericalError(f"implicit dispersion did not converge at t = {ti}")
        out[i] = x
    return float(out[0]) if np.ndim(t) == 0 else out


# ----------------------------------------------------------------------------
# explicit conservative finite-volume step


def explicit_dt_bound(grid: Grid1D, params: PhysicalParams, pot: PotentialSpec, C: float = 0.1) -> float:
    """Largest stable explicit step.

    Minimum of the quantum bound C dx^4 2 m b / hbar^2, the diffusion bound
    dx^2 b / (2 kT) and the drift bound C dx b / max|U'|.
    """
    dx = grid.dx
    bounds = [math.inf]
    if params.hbar > 0:
        bounds.append(C * dx**4 * 2.0 * params.m * params.b / params.hbar**2)
    if params.kT > 0:
        bounds.append(0.5 * dx * dx * params.b / params.kT)
    fmax = float(np.max(np.abs(pot.deriv_values(grid.x, 1))))
    if fmax > 0:
        bounds.append(C * dx * params.b / fmax)
    return min(bounds)


def _fv_rate(rho: np.ndarray, mu: np.ndarray, grid: Grid1D, params: PhysicalParams) -> np.ndarray:
    dx, b = grid.dx, params.b
    if grid.periodic:
        rf = 0.5 * (rho + np.roll(rho, -1))
        J = (rf * (np.roll(mu, -1) - mu) + params.kT * (np.roll(rho, -1) - rho)) / (dx * b)
        return (J - np.roll(J, 1)) / dx
    J = np.zeros(rho.size + 1)
    J[1:-1] = (0.5 * (rho[1:] + rho[:-1]) * (mu[1:] - mu[:-1]) + params.kT * (rho[1:] - rho[:-1])) / (dx * b)
    return (J[1:] - J[:-1]) / dx


@dataclass(frozen=True)
class StepInfo:
    clip_mass: float
    mass_change: float


def _explicit_step(rho: DensityField, params, pot, dt, drift_q, C, clip_tol):
    if params.b <= 0:
        raise ValueError("strong-friction dynamics needs b > 0")
    g = rho.grid
    bound = explicit_dt_bound(g, params, pot, C)
    if dt > bound:
        raise NumericalError(f"dt = {dt:.3g} violates the explicit stability bound {bound:.3g}")
    mu = pot(g.x) + drift_q
    new = rho.values + dt * _fv_rate(rho.values, mu, g, params)
    neg = new < 0
    clip = float(-integrate(np.where(neg, new, 0.0), g))
    if clip > clip_tol:
        raise NumericalError(f"clipped mass {clip:.3e} exceeds {clip_tol:g}")
    m0 = rho.norm
    if clip > 0:
        new = np.where(neg, 0.0, new)
        new *= m0 / integrate(new, g)
    return DensityField(new, g), StepInfo(clip, float(integrate(new, g) - m0))


def _drift_q(rho: DensityField, params: PhysicalParams, floor: float) -> np.ndarray:
    """Q for the explicit step: log form (exact on Gaussians) where the mask allows it."""
    if params.hbar == 0:
        return np.zeros(rho.grid.n)
    try:
        return quantum_potential(rho, params, floor, method="log")
    except ValueError:
        return quantum_potential(rho, params, floor)


def step_smoluchowski(rho: DensityField, params: PhysicalParams, pot: PotentialSpec, dt: float,
                      C: float = 0.1, clip_tol: float = 1e-10, floor: float = DEFAULT_FLOOR,
                      return_info: bool = False):
    """One explicit conservative step of the thermo-quantum diffusion equation."""
    out, info = _explicit_step(rho, params, pot, dt, _drift_q(rho, params, floor), C, clip_tol)
    return (out, info) if return_info else out


def _beta_weights(beta_nodes: int, params: PhysicalParams):
    """Trapezoid nodes on [0, 1/kT]; returns (weight of current Q, [(beta', weight)])."""
    if beta_nodes < 1:
        raise ValueError("beta_nodes must be >= 1")
    if beta_nodes == 1:
        return 1.0, []
    if params.kT <= 0:
        raise ValueError("a beta quadrature needs kT > 0")
    beta = 1.0 / params.kT
    h = beta / (beta_nodes - 1)
    interior = [(j * h, params.kT * h) for j in range(1, beta_nodes - 1)]
    return 0.5 * params.kT * h, interior


def surrogate_variance(beta: float, params: PhysicalParams, omega0: float) -> float:
    """Stationary Gaussian variance at inverse temperature beta (harmonic)."""
    kt = 1.0 / beta
    return (kt + math.sqrt(kt * kt + (params.hbar * omega0) ** 2)) / (2.0 * params.m * omega0**2)


def surrogate_q(x: np.ndarray, center: float, params: PhysicalParams, pot: PotentialSpec,
                beta_nodes: int) -> tuple[float, np.ndarray]:
    """Weight on Q[rho] and the summed surrogate contribution for the beta integral.

    Interior quadrature nodes use the quantum potential of a Gaussian with the
    stationary variance at that beta', centred at ``center``.  The beta' = 0 node
    has infinite variance and contributes nothing; so does a free particle.
    """
    w_cur, nodes = _beta_weights(beta_nodes, params)
    extra = np.zeros_like(x, dtype=float)
    if not nodes or params.hbar == 0:
        return w_cur, extra
    w = pot.harmonic_frequency(params.m) if pot.degree <= 2 else None
    if w is None:
        raise ValueError("the beta surrogate needs a free or harmonic potential")
    if w == 0:
        return w_cur, extra
    c = params.hbar**2 / params.m
    for bp, wt in nodes:
        s = surrogate_variance(bp, params, w)
        extra += wt * (c / (4 * s) - c * (x - center) ** 2 / (8 * s * s))
    return w_cur, extra


def step_nonlinear_smoluchowski(rho: DensityField, params: PhysicalParams, pot: PotentialSpec,
                                dt: float, beta_nodes: int = 1, C: float = 0.1,
                                clip_tol: float = 1e-10, floor: float = DEFAULT_FLOOR,
                                return_info: bool = False):
    """Explicit step with the drift potential U + kT * integral_0^beta Q dbeta'.

    ``beta_nodes = 1`` uses Q[rho] itself and coincides with
    :func:`step_smoluchowski`.  More nodes use the Gaussian surrogate of
    :func:`surrogate_q` (an experimental interpretation).
    """
    g = rho.grid
    mean = float(integrate(g.x * rho.values, g) / rho.norm)
    w_cur, extra = surrogate_q(g.x, mean, params, pot, beta_nodes)
    out, info = _explicit_step(rho, params, pot, dt, w_cur * _drift_q(rho, params, floor) + extra, C, clip_tol)
    return (out, info) if return_info else out


# ----------------------------------------------------------------------------
# implicit log-density integrator


def _ghosts(y):
    l, r = y[:3], y[-3:]
    return np.concatenate(([6 * l[0] - 8 * l[1] + 3 * l[2], 3 * l[0] - 3 * l[1] + l[2]], y,
                           [3 * r[2] - 3 * r[1] + r[0], 6 * r[2] - 8 * r[1] + 3 * r[0]]))


def _log_rate(y, U_ext, S_ext, dx, params: PhysicalParams, qw: float):
    """b y_t = mu'' + y' mu' on a window; U_ext/S_ext carry two ghost nodes per side."""
    ye = _ghosts(y)
    d1 = (ye[2:] - ye[:-2]) / (2 * dx)
    d2 = (ye[2:] - 2 * ye[1:-1] + ye[:-2]) / (dx * dx)
    mu = U_ext[1:-1] + S_ext[1:-1] + params.kT * ye[1:-1]
    if qw:
        mu = mu - qw * (params.hbar**2 / (8 * params.m)) * (2 * d2 + d1 * d1)
    mu1 = (mu[2:] - mu[:-2]) / (2 * dx)
    mu2 = (mu[2:] - 2 * mu[1:-1] + mu[:-2]) / (dx * dx)
    return (mu2 + d1[1:-1] * mu1) / params.b


def _residual(y, a0, hist, beta_dt, args):
    return a0 * y - hist - beta_dt * _log_rate(y, *args)


def _banded_jacobian(y, a0, hist, beta_dt, args, h=1e-30):
    n = y.size
    ab = np.zeros((5, n))
    idx = np.arange(n)
    for c in range(5):
        e = np.zeros(n, dtype=complex)
        e[c::5] = 1j * h
        d = _residual(y + e, a0, hist, beta_dt, args).imag / h
        cols = idx[c::5]
        for off in range(-2, 3):
            rows = cols + off
            ok = (rows >= 0) & (rows < n)
            ab[2 + off, cols[ok]] = d[rows[ok]]
    return ab


def _newton(y, a0, hist, beta_dt, args, maxit=30):
    for it in range(maxit):
        R = _residual(y, a0, hist, beta_dt, args)
        d = solve_banded((2, 2), _banded_jacobian(y, a0, hist, beta_dt, args), R)
        y = y - d
        if not np.all(np.isfinite(y)):
            break
        if np.max(np.abs(d)) < 1e-12 * (1.0 + np.max(np.abs(y))):
            return y, it + 1
    raise NumericalError("Newton iteration did not converge")


def _window(y, depth):
    pk = int(np.argmax(y))
    low = y < y[pk] - depth
    left = np.nonzero(low[:pk])[0]
    right = np.nonzero(low[pk:])[0]
    lo = left[-1] + 1 if left.size else 0
    hi = pk + right[0] - 1 if right.size else y.size - 1
    return lo, hi


def _continue(y, lo, hi):
    mask = np.zeros(y.size, dtype=bool)
    mask[lo:hi + 1] = True
    out = y.copy()
    a = y[lo:lo + 3]
    k = np.arange(lo, 0, -1, dtype=float)
    out[:lo] = a[0] - k * (-1.5 * a[0] + 2 * a[1] - 0.5 * a[2]) + 0.5 * k * k * (a[0] - 2 * a[1] + a[2])
    a = y[hi - 2:hi + 1]
    k = np.arange(1, y.size - hi, dtype=float)
    out[hi + 1:] = a[2] + k * (1.5 * a[2] - 2 * a[1] + 0.5 * a[0]) + 0.5 * k * k * (a[2] - 2 * a[1] + a[0])
    return out


def _renormalize(y, grid):
    ymax = y.max()
    return y - (ymax + math.log(float(integrate(np.exp(y - ymax), grid))))


@dataclass
class SmoluchowskiResult:
    series: DispersionSeries
    rho: DensityField
    steps: int = 0
    rejected: int = 0
    newton_iterations: int = 0
    max_mass_defect: float = 0.0
    max_clip_mass: float = 0.0
    free_energy: list = field(default_factory=list)


def _moments(rho, grid):
    norm = float(integrate(rho, grid))
    mx = float(integrate(grid.x * rho, grid)) / norm
    return mx, float(integrate((grid.x - mx) ** 2 * rho, grid)) / norm


def _free_energy(rho: np.ndarray, grid: Grid1D, params, pot) -> float:
    """integral rho U + (hbar^2/8m) integral rho'^2/rho + kT integral rho ln rho."""
    U = pot(grid.x)
    e = float(integrate(rho * U, grid))
    mask = rho > 0
    if params.hbar > 0:
        u = np.sqrt(rho)
        du = np.gradient(u, grid.dx)
        e += params.hbar**2 / (2 * params.m) * float(integrate(du * du, grid))
    if params.kT > 0:
        e += params.kT * float(integrate(np.where(mask, rho * np.log(np.where(mask, rho, 1.0)), 0.0), grid))
    return e


def _checkpoint_times(t_max, checkpoints):
    if checkpoints is None:
        checkpoints = 20
    if np.isscalar(checkpoints):
        ts = np.linspace(0.0, t_max, int(checkpoints) + 1)[1:]
    else:
        ts = np.asarray(checkpoints, dtype=float)
        ts = ts[ts > 0]
    if ts.size == 0 or np.any(np.diff(ts) <= 0) or ts[-1] > t_max * (1 + 1e-12):
        raise ValueError("checkpoints must be increasing and within (0, t_max]")
    return ts


def evolve_smoluchowski(rho0: DensityField, params: PhysicalParams, pot: PotentialSpec,
                        t_max: float, checkpoints=None, method: str = "implicit",
                        beta_nodes: int = 1, dt: float | None = None, adaptive: bool = True,
                        eta: float = 0.01, window_depth: float = 50.0,
                        dt_max: float | None = None, C: float = 0.1,
                        track_free_energy: bool = False) -> SmoluchowskiResult:
    """Integrate the strong-friction equation and sample sigma^2 at checkpoints.

    Parameters
    ----------
    checkpoints : int or array, optional
        Number of equally spaced output times (default 20) or explicit times.
    method : {"implicit", "explicit"}
        Log-density BDF2 integrator or the explicit finite-volume step.
    dt : float, optional
        Initial step (implicit, adaptive), fixed step (implicit with
        ``adaptive=False``) or explicit step (defaults to the stability bound).
    eta : float
        Target relative change of sigma^2 per adaptive step.
    """
    if params.b <= 0:
        raise ValueError("strong-friction dynamics needs b > 0")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    outs = _checkpoint_times(t_max, checkpoints)
    if method == "explicit":
        return _evolve_explicit(rho0, params, pot, t_max, outs, beta_nodes, dt, C, track_free_energy)
    if method != "implicit":
        raise ValueError(f"unknown method {method!r}")
    return _evolve_implicit(rho0, params, pot, t_max, outs, beta_nodes, dt, adaptive, eta,
                            window_depth, dt_max, track_free_energy)


def _evolve_explicit(rho0, params, pot, t_max, outs, beta_nodes, dt, C, track):
    g = rho0.grid
    if dt is None:
        dt = explicit_dt_bound(g, params, pot, C)
    rho = rho0
    mx, s2 = _moments(rho.values, g)
    ts, ss, ms = [0.0], [s2], [mx]
    res = SmoluchowskiResult(DispersionSeries([0.0], [max(s2, 1e-300)], "pde"), rho0)
    if track:
        res.free_energy.append(_free_energy(rho.values, g, params, pot))
    t = 0.0
    for t_out in outs:
        while t < t_out - 1e-12 * t_max:
            h = min(dt, t_out - t)
            rho, info = step_nonlinear_smoluchowski(rho, params, pot, h, beta_nodes, C=C, return_info=True)
            res.max_clip_mass = max(res.max_clip_mass, info.clip_mass)
            res.max_mass_defect = max(res.max_mass_defect, abs(info.mass_change))
            res.steps += 1
            t += h
            if track:
                res.free_energy.append(_free_energy(rho.values, g, params, pot))
        mx, s2 = _moments(rho.values, g)
        ts.append(t_out)
        ss.append(s2)
        ms.append(mx)
    res.series = DispersionSeries(ts, ss, "pde", np.asarray(ms))
    res.rho = rho
    return res


def _evolve_implicit(rho0, params, pot, t_max, outs, beta_nodes, dt, adaptive, eta, depth,
                     dt_max, track):
    g = rho0.grid
    x, dx = g.x, g.dx
    mask = floor_mask(rho0.values, 1e-250)
    y = _renormalize(extend_log_density(rho0.values, mask), g)
    lo, hi = _window(y, depth)
    if hi - lo < 8:
        raise NumericalError("initial density is resolved by fewer than 8 grid points")
    xe = np.concatenate(([x[0] - 2 * dx, x[0] - dx], x, [x[-1] + dx, x[-1] + 2 * dx]))
    U_ext = pot(xe)
    qw_cur, _ = _beta_weights(beta_nodes, params)
    qw = qw_cur if params.hbar > 0 else 0.0
    if dt_max is None:
        dt_max = t_max / 50.0

    def surrogate(yv):
        if beta_nodes == 1 or params.hbar == 0:
            return np.zeros_like(xe)
        rho = np.exp(yv)
        mean = float(integrate(x * rho, g) / integrate(rho, g))
        return surrogate_q(xe, mean, params, pot, beta_nodes)[1]

    def rate_scale(yv):
        lo_, hi_ = _window(yv, depth)
        sl = slice(lo_, hi_ + 1)
        r = _log_rate(yv[sl], U_ext[lo_:hi_ + 5], surrogate(yv)[lo_:hi_ + 5], dx, params, qw)
        rho = np.exp(yv[sl])
        core = rho > 1e-6 * rho.max()
        return float(np.max(np.abs(r[core]))) + 1e-300

    res = SmoluchowskiResult(DispersionSeries([0.0], [1.0], "pde"), rho0)
    rho = np.exp(y)
    mx, s2 = _moments(rho, g)
    ts, ss, ms = [0.0], [s2], [mx]
    if track:
        res.free_energy.append(_free_energy(rho, g, params, pot))
    if dt is None:
        h = min(1e-3 / rate_scale(y), dt_max)
    else:
        h = float(dt)
    fixed = not adaptive
    hist = [y]
    h_prev = None
    t = 0.0
    s2_prev = s2
    k_out = 0
    while k_out < outs.size:
        t_out = outs[k_out]
        h_try = min(h, t_out - t)
        last_to_out = h_try >= t_out - t - 1e-12 * t_max
        if h_prev is None:
            a0, ahist, beta = 1.0, hist[-1], 1.0
        else:
            r = h_try / h_prev
            a1 = (1 + r) ** 2 / (1 + 2 * r)
            a2 = -r * r / (1 + 2 * r)
            a0, ahist, beta = 1.0, a1 * hist[-1] + a2 * hist[-2], (1 + r) / (1 + 2 * r)
        guess = hist[-1] if h_prev is None else hist[-1] + (hist[-1] - hist[-2]) * h_try / h_prev
        lo, hi = _window(hist[-1], depth)
        sl = slice(lo, hi + 1)
        sur = surrogate(hist[-1])
        args = (U_ext[lo:hi + 5], sur[lo:hi + 5], dx, params, qw)
        try:
            ya, it = _newton(guess[sl].copy(), a0, ahist[sl], beta * h_try, args)
        except (NumericalError, np.linalg.LinAlgError, ValueError, FloatingPointError):
            if fixed:
                raise NumericalError(f"implicit step failed at t = {t:.6g} with fixed dt = {h_try:.3g}")
            res.rejected += 1
            h = 0.25 * h_try
            if h < 1e-14 * t_max:
                raise NumericalError(f"step size collapsed at t = {t:.6g}")
            continue
        res.newton_iterations += it
        yn = guess.copy()
        yn[sl] = ya
        yn = _renormalize(_continue(yn, lo, hi), g)
        rho = np.exp(yn)
        res.max_mass_defect = max(res.max_mass_defect, abs(float(integrate(rho, g)) - 1.0))
        mx, s2n = _moments(rho, g)
        hist = [hist[-1], yn]
        h_prev = h_try
        t = t_out if last_to_out else t + h_try
        res.steps += 1
        if track:
            res.free_energy.append(_free_energy(rho, g, params, pot))
        if last_to_out:
            ts.append(t_out)
            ss.append(s2n)
            ms.append(mx)
            k_out += 1
        if not fixed:
            rel = abs(s2n - s2_prev) / s2_prev
            grow = min(1.5, eta / rel) if rel > 0 else 1.5
            h = min(h_prev * grow, dt_max)
            if last_to_out and h_try < h:
                h = max(h, h_prev)
        s2_prev = s2n
    res.series = DispersionSeries(ts, ss, "pde", np.asarray(ms))
    res.rho = DensityField(np.exp(hist[-1]), g)
    return res


__all__ = ["DispersionSeries", "SmoluchowskiResult", "StepInfo", "gaussian_sigma_ode_rhs",
           "dispersion_harmonic", "dispersion_free_implicit", "explicit_dt_bound",
           "step_smoluchowski", "step_nonlinear_smoluchowski", "surrogate_q", "surrogate_variance",
           "evolve_smoluchowski"]
