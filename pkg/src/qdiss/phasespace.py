"""Phase-space evolution of W(x, p).

    W_t = -(p/m) W_x + sum_k c_k U^(2k+1)(x) d_p^(2k+1) W
          + b d_p [ (p/m) W + kT d_p W + X W ],      c_k = (-hbar^2/4)^k / (2k+1)!

``quantum=False`` keeps only k = 0 (classical Liouville); ``friction`` switches
the Kramers collision term; ``XModel`` supplies the thermo-quantum operator X,
always of the form a(x) d_p.  The x-grid is periodic and the p-grid is treated
as periodic for spectral differentiation, so every derivative term integrates
to zero and mass is conserved to roundoff.

Explicit stepping.  RK2 is weakly unstable for purely imaginary eigenvalues
(amplification 1 + y^4/8 per step), so its advective Courant number is kept at
0.25; RK4 is stable up to about 2.8 and uses 1.4.  See :func:`stable_dt`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DensityField, Grid1D, NumericalError, PhysicalParams, PotentialSpec, WaveFunction
from .qpotential import DEFAULT_FLOOR, extend_log_density
from .core import floor_mask

BOUNDARY_TOL = 1e-10
_LIMITS = {"rk2": (0.25, 1.0), "rk4": (1.4, 1.4)}


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Periodic x-grid times p in [-p_max, p_max) with n_p points."""

    xgrid: Grid1D
    p_max: float
    n_p: int

    def __post_init__(self):
        if not self.xgrid.periodic:
            raise ValueError("phase-space x-grid must be periodic")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if self.n_p < 8 or self.n_p % 2:
            raise ValueError("n_p must be even and >= 8")

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / self.n_p

    @property
    def p(self) -> np.ndarray:
        return -self.p_max + self.dp * np.arange(self.n_p)

    @property
    def x(self) -> np.ndarray:
        return self.xgrid.x

    @property
    def dx(self) -> float:
        return self.xgrid.dx

    @property
    def shape(self) -> tuple:
        return (self.xgrid.n, self.n_p)

    @property
    def cell(self) -> float:
        return self.dx * self.dp


@dataclass(eq=False)
class WignerField:
    """W(x_i, p_j) with shape (n_x, n_p); may be negative."""

    values: np.ndarray
    psg: PhaseSpaceGrid
    t: float = 0.0
    params: PhysicalParams | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.psg.shape:
            raise ValueError(f"W has shape {self.values.shape}, grid expects {self.psg.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("non-finite Wigner values")

    @property
    def norm(self) -> float:
        return float(self.values.sum() * self.psg.cell)

    def boundary_ratio(self) -> float:
        """max |W| on the two p-boundary columns relative to max |W|."""
        v = np.abs(self.values)
        return float(max(v[:, 0].max(), v[:, -1].max()) / v.max())

    def check(self, norm_tol: float = 1e-6, boundary_tol: float = BOUNDARY_TOL):
        if abs(self.norm - 1.0) > norm_tol:
            raise NumericalError(f"Wigner norm {self.norm:.12g} differs from 1")
        r = self.boundary_ratio()
        if r > boundary_tol:
            raise NumericalError(f"W leaks through the p-boundary (ratio {r:.2e}); increase p_max")


@dataclass(frozen=True)
class XModel:
    """Thermo-quantum operator X = a(x) d_p.

    variant: "none", "coffey" (a = hbar^2 U''/(12 m kT)) or "gaussian_nonlinear"
    (a = -(hbar^2/4m)(ln rho)'' with rho the x-marginal).
    """

    variant: str = "none"

    def __post_init__(self):
        if self.variant not in ("none", "coffey", "gaussian_nonlinear"):
            raise ValueError(f"unknown X model {self.variant!r}")

    def validate(self, params: PhysicalParams):
        if self.variant == "coffey" and params.kT <= 0:
            raise ValueError("the Coffey model requires kT > 0")


def from_function(psg: PhaseSpaceGrid, f, params: PhysicalParams | None = None,
                  normalize: bool = True) -> WignerField:
    """Sample f(x, p) on the grid, optionally rescaled to unit discrete mass."""
    X, P = np.meshgrid(psg.x, psg.p, indexing="ij")
    v = np.asarray(f(X, P), dtype=float)
    if normalize:
        v = v / (v.sum() * psg.cell)
    return WignerField(v, psg, 0.0, params)


def wigner_transform(psi: WaveFunction, psg: PhaseSpaceGrid, params: PhysicalParams,
                     imag_tol: float = 1e-10) -> WignerField:
    """W(x,p) = (1/2 pi hbar) integral psi*(x + y/2) psi(x - y/2) exp(i p y / hbar) dy.

    The shifted products use y = 2 s dx for |s| < n with psi taken as zero
    outside the box.  Periodic shifts are avoided because they create a ghost
    copy of the state half a period away.  The kernel is Hermitian in s, so the
    result is real up to roundoff.
    """
    g = psi.grid
    if g.n != psg.xgrid.n or abs(g.dx - psg.dx) > 1e-12 * g.dx or abs(g.x_min - psg.xgrid.x_min) > 1e-12:
        raise ValueError("wave function and phase-space grid differ")
    if not g.periodic:
        raise ValueError("wave function must live on a periodic grid")
    if params.hbar <= 0:
        raise ValueError("the Wigner transform needs hbar > 0")
    if psg.p_max > math.pi * params.hbar / (2 * g.dx) * (1 + 1e-12):
        raise ValueError("p_max exceeds pi hbar / 2dx; the transform would alias in p")
    n = g.n
    s = np.arange(-n + 1, n)
    v = np.concatenate((np.zeros(n, dtype=complex), psi.values, np.zeros(n, dtype=complex)))
    idx = np.arange(n) + n
    C = np.conj(v[idx[:, None] + s[None, :]]) * v[idx[:, None] - s[None, :]]
    E = np.exp(1j * np.outer(2 * s * g.dx, psg.p) / params.hbar) * (2 * g.dx / (2 * math.pi * params.hbar))
    W = C @ E
    scale = np.max(np.abs(W.real))
    if np.max(np.abs(W.imag)) > imag_tol * max(scale, 1.0):
        raise NumericalError("Wigner transform has a large imaginary residue (grid mismatch)")
    return WignerField(W.real.copy(), psg, 0.0, params)


def marginals(W: WignerField, tol: float = 1e-8) -> tuple[DensityField, np.ndarray]:
    """x-marginal as a DensityField and the p-marginal as an array."""
    psg = W.psg
    rho = W.values.sum(axis=1) * psg.dp
    if rho.min() < -tol:
        raise NumericalError(f"x-marginal is negative ({rho.min():.2e})")
    phi = W.values.sum(axis=0) * psg.dx
    return DensityField(np.maximum(rho, 0.0), psg.xgrid), phi


def phase_moments(W: WignerField) -> dict:
    """Mean and variance of x and p, plus mean kinetic energy (needs params)."""
    psg = W.psg
    rho = W.values.sum(axis=1) * psg.dp
    phi = W.values.sum(axis=0) * psg.dx
    norm = rho.sum() * psg.dx
    mx = (psg.x * rho).sum() * psg.dx / norm
    mp = (psg.p * phi).sum() * psg.dp / norm
    vx = ((psg.x - mx) ** 2 * rho).sum() * psg.dx / norm
    vp = ((psg.p - mp) ** 2 * phi).sum() * psg.dp / norm
    out = {"norm": norm, "mean_x": mx, "var_x": vx, "mean_p": mp, "var_p": vp}
    if W.params is not None:
        out["kinetic"] = (psg.p**2 * phi).sum() * psg.dp / (2 * W.params.m)
    return out


# ----------------------------------------------------------------------------
# right-hand sides


def _ik(n: int, d: float) -> np.ndarray:
    return 2j * np.pi * np.fft.rfftfreq(n, d)


def _pderiv(W: np.ndarray, dp: float, order: int) -> np.ndarray:
    n = W.shape[1]
    k = _ik(n, dp)
    if order % 2:
        k = k.copy()
        k[-1] = 0.0
    return np.fft.irfft(np.fft.rfft(W, axis=1) * k**order, n=n, axis=1)


def moyal_coefficient(k: int, hbar: float) -> float:
    """(hbar/2i)^(2k) / (2k+1)!"""
    return (-hbar * hbar / 4.0) ** k / math.factorial(2 * k + 1)


def _moyal_terms(pot: PotentialSpec, x: np.ndarray, hbar: float, quantum: bool, start: int = 0):
    """[(c_k U^(2k+1)(x), 2k+1)] for the non-vanishing orders."""
    out = []
    k = start
    while 2 * k + 1 <= pot.degree:
        if k > 0 and not quantum:
            break
        c = moyal_coefficient(k, hbar)
        if c != 0:
            d = pot.deriv_values(x, 2 * k + 1)
            if np.any(d):
                out.append((c * d, 2 * k + 1))
        k += 1
    return out


def _x_advection(W: np.ndarray, psg: PhaseSpaceGrid, m: float) -> np.ndarray:
    n = W.shape[0]
    k = _ik(n, psg.dx).copy()
    k[-1] = 0.0
    dW = np.fft.irfft(np.fft.rfft(W, axis=0) * k[:, None], n=n, axis=0)
    return -(psg.p / m)[None, :] * dW


def moyal_rhs(W: WignerField, pot: PotentialSpec, params: PhysicalParams, quantum: bool = True) -> np.ndarray:
    """-(p/m) W_x + sum_k c_k U^(2k+1) d_p^(2k+1) W, truncated at the potential degree."""
    psg = W.psg
    out = _x_advection(W.values, psg, params.m)
    terms = _moyal_terms(pot, psg.x, params.hbar, quantum)
    if terms:
        n = psg.n_p
        F = np.fft.rfft(W.values, axis=1)
        k = _ik(n, psg.dp).copy()
        k[-1] = 0.0
        acc = np.zeros_like(F)
        for coef, order in terms:
            acc += coef[:, None] * (k**order)[None, :] * F
        out += np.fft.irfft(acc, n=n, axis=1)
    return out


def quantum_force_term(W: WignerField, pot: PotentialSpec, params: PhysicalParams) -> np.ndarray:
    """-sum_{k>=1} c_k U^(2k+1) d_p^(2k) W; exactly zero for degree <= 2 or hbar = 0."""
    psg = W.psg
    terms = _moyal_terms(pot, psg.x, params.hbar, True, start=1)
    out = np.zeros(psg.shape)
    for coef, order in terms:
        out -= coef[:, None] * _pderiv(W.values, psg.dp, order - 1)
    return out


def x_model_coefficient(W: WignerField, x_model: XModel, params: PhysicalParams,
                        pot: PotentialSpec, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """a(x) in X W = a(x) d_p W."""
    psg = W.psg
    if x_model.variant == "none" or params.hbar == 0:
        return np.zeros(psg.xgrid.n)
    x_model.validate(params)
    if x_model.variant == "coffey":
        return params.hbar**2 * pot.deriv_values(psg.x, 2) / (12.0 * params.m * params.kT)
    rho = W.values.sum(axis=1) * psg.dp
    if rho.min() < -1e-8 * rho.max():
        raise NumericalError("x-marginal has nodes; the Gaussian model is undefined")
    rho = np.maximum(rho, 0.0)
    mask = floor_mask(rho, floor)
    y = extend_log_density(rho, mask)
    y2 = np.empty_like(y)
    y2[1:-1] = (y[2:] - 2 * y[1:-1] + y[:-2]) / psg.dx**2
    y2[0], y2[-1] = y2[1], y2[-2]
    return -params.hbar**2 / (4.0 * params.m) * y2


def apply_x_model(W: WignerField, x_model: XModel, params: PhysicalParams, pot: PotentialSpec) -> np.ndarray:
    """The field X W, inserted under b d_p in the collision term."""
    a = x_model_coefficient(W, x_model, params, pot)
    if not np.any(a):
        return np.zeros(W.psg.shape)
    return a[:, None] * _pderiv(W.values, W.psg.dp, 1)


def _collision(Wv, psg, params, a):
    n = psg.n_p
    k = _ik(n, psg.dp).copy()
    k1 = k.copy()
    k1[-1] = 0.0
    F = np.fft.rfft(Wv, axis=1)
    Fp = np.fft.rfft(Wv * (psg.p / params.m)[None, :], axis=1)
    diff = (params.kT + a)[:, None] * (k * k)[None, :]
    return params.b * np.fft.irfft(k1[None, :] * Fp + diff * F, n=n, axis=1)


def full_rhs(W: WignerField, params, pot, quantum=True, friction=False, x_model: XModel = XModel()):
    out = moyal_rhs(W, pot, params, quantum)
    if friction:
        a = x_model_coefficient(W, x_model, params, pot)
        if np.min(params.kT + a) < 0:
            raise NumericalError("negative momentum diffusion from the X model")
        out += _collision(W.values, W.psg, params, a)
    return out


def stable_dt(psg: PhaseSpaceGrid, params: PhysicalParams, pot: PotentialSpec, quantum: bool = True,
              friction: bool = False, x_model: XModel = XModel(), scheme: str = "rk2",
              a_max: float | None = None) -> float:
    """Largest step allowed by the per-term bounds.

    Imaginary (transport) rate:
        (p_max/m)(pi/dx) + sum_k |c_k| max|U^(2k+1)| (pi/dp)^(2k+1) + (b/m) p_max pi/dp
    Real (diffusive) rate:
        b (kT + max a) (pi/dp)^2
    dt is the smaller of lim_I / imaginary rate and lim_R / real rate, with
    (lim_I, lim_R) = (0.25, 1.0) for RK2 and (1.4, 1.4) for RK4.
    """
    if scheme not in _LIMITS:
        raise ValueError(f"unknown scheme {scheme!r}")
    lim_i, lim_r = _LIMITS[scheme]
    kx, kp = math.pi / psg.dx, math.pi / psg.dp
    imag = psg.p_max / params.m * kx
    for coef, order in _moyal_terms(pot, psg.x, params.hbar, quantum):
        imag += float(np.max(np.abs(coef))) * kp**order
    real = 0.0
    if friction:
        imag += params.b / params.m * psg.p_max * kp
        if a_max is None:
            a_max = 0.0
            if x_model.variant == "coffey" and params.hbar > 0:
                a_max = params.hbar**2 * float(np.max(np.abs(pot.deriv_values(psg.x, 2)))) / (12 * params.m * params.kT)
        real = params.b * (params.kT + a_max) * kp * kp
    bounds = [lim_i / imag] if imag > 0 else [math.inf]
    if real > 0:
        bounds.append(lim_r / real)
    return min(bounds)


def step_phase_space(W: WignerField, params: PhysicalParams, pot: PotentialSpec, dt: float,
                     quantum: bool = True, friction: bool = False, x_model: XModel = XModel(),
                     scheme: str = "rk2", check_stability: bool = True,
                     mass_tol: float = 1e-10) -> WignerField:
    """One explicit RK2 (midpoint) or RK4 step."""
    if friction and params.b <= 0:
        raise ValueError("friction needs b > 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if check_stability:
        a_max = None
        if friction and x_model.variant == "gaussian_nonlinear":
            a_max = float(np.max(x_model_coefficient(W, x_model, params, pot)))
        bound = stable_dt(W.psg, params, pot, quantum, friction, x_model, scheme, a_max)
        if dt > bound * (1 + 1e-12):
            raise NumericalError(f"dt = {dt:.3g} exceeds the stability bound {bound:.3g}")
    psg = W.psg

    def f(v):
        return full_rhs(WignerField(v, psg, W.t, params), params, pot, quantum, friction, x_model)

    w0 = W.values
    if scheme == "rk2":
        new = w0 + dt * f(w0 + 0.5 * dt * f(w0))
    elif scheme == "rk4":
        k1 = f(w0)
        k2 = f(w0 + 0.5 * dt * k1)
        k3 = f(w0 + 0.5 * dt * k2)
        k4 = f(w0 + dt * k3)
        new = w0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    out = WignerField(new, psg, W.t + dt, params)
    drift = abs(out.norm - W.norm)
    if drift > mass_tol:
        raise NumericalError(f"mass changed by {drift:.2e} in one step")
    return out


@dataclass
class PhaseSpaceRecord:
    t: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    var_x: list = field(default_factory=list)
    var_p: list = field(default_factory=list)
    mean_x: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)

    def as_arrays(self) -> dict:
        return {k: np.asarray(v) for k, v in self.__dict__.items()}


def evolve_phase_space(W0: WignerField, params: PhysicalParams, pot: PotentialSpec, t_max: float,
                       dt: float | None = None, quantum: bool = True, friction: bool = False,
                       x_model: XModel = XModel(), scheme: str = "rk2", cadence: int = 10,
                       boundary_tol: float = BOUNDARY_TOL) -> tuple[WignerField, PhaseSpaceRecord]:
    """Step to t_max, recording moments and checking the p-boundary every ``cadence`` steps."""
    x_model.validate(params)
    if dt is None:
        a_max = None
        if friction and x_model.variant == "gaussian_nonlinear":
            a_max = 1.5 * float(np.max(x_model_coefficient(W0, x_model, params, pot)))
        dt = stable_dt(W0.psg, params, pot, quantum, friction, x_model, scheme, a_max)
    nsteps = max(1, int(math.ceil(t_max / dt - 1e-9)))
    h = t_max / nsteps
    rec = PhaseSpaceRecord()
    W = WignerField(W0.values, W0.psg, 0.0, params)

    def record(w):
        mo = phase_moments(w)
        rec.t.append(w.t)
        rec.norm.append(mo["norm"])
        rec.var_x.append(mo["var_x"])
        rec.var_p.append(mo["var_p"])
        rec.mean_x.append(mo["mean_x"])
        rec.kinetic.append(mo["kinetic"])
        if w.boundary_ratio() > boundary_tol:
            raise NumericalError(f"W leaks through the p-boundary at t = {w.t:.4g}; increase p_max")

    record(W)
    for i in range(nsteps):
        W = step_phase_space(W, params, pot, h, quantum, friction, x_model, scheme, check_stability=(i == 0))
        if (i + 1) % cadence == 0 or i == nsteps - 1:
            record(W)
    return W, rec


def l1_distance(A: WignerField, B: WignerField) -> float:
    return float(np.abs(A.values - B.values).sum() * A.psg.cell)


__all__ = ["PhaseSpaceGrid", "WignerField", "XModel", "from_function", "wigner_transform", "marginals",
           "phase_moments", "moyal_coefficient", "moyal_rhs", "quantum_force_term", "x_model_coefficient",
           "apply_x_model", "full_rhs", "stable_dt", "step_phase_space", "PhaseSpaceRecord",
           "evolve_phase_space", "l1_distance", "BOUNDARY_TOL"]
