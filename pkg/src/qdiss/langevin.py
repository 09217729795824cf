"""Trajectory ensembles for m R'' + b R' = -U'(R) + f_Q + f_L.

The thermal force f_L is white noise with <f_L(t) f_L(s)> = 2 b kT delta(t - s),
so each step adds a velocity kick of variance 2 b kT dt / m^2.  Every particle
draws from its own counter-based Philox stream, keyed by the master seed and
indexed by (particle id, step, purpose), which makes trajectories independent
of evaluation order.

Two quantum force models are offered: ``none``, which is exact for quadratic
potentials when the initial conditions are Wigner-sampled, and ``meanfield``,
which applies -dQ/dx of a kernel density estimate of the ensemble.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .core import Grid1D, NumericalError, PhysicalParams, PotentialSpec, DensityField
from .qpotential import quantum_force

MIN_STATS_N = 100
PURPOSE_NOISE = 0
PURPOSE_INIT = 1
BANDWIDTH_RULES = ("silverman", "force")


def seed_key(seed: int) -> np.ndarray:
    """Two 32-bit Philox key words from a non-negative seed below 2^64."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be in [0, 2^64)")
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint32)


@dataclass
class TrajectoryEnsemble:
    x: np.ndarray
    v: np.ndarray
    seed: int
    ids: np.ndarray
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.uint64)
        if not (self.x.shape == self.v.shape == self.ids.shape) or self.x.ndim != 1:
            raise ValueError("x, v and ids must be 1D arrays of equal length")

    @property
    def N(self) -> int:
        return self.x.size

    def copy(self) -> "TrajectoryEnsemble":
        return replace(self, x=self.x.copy(), v=self.v.copy(), ids=self.ids.copy())


@dataclass(frozen=True)
class GaussianSpec:
    """Bivariate Gaussian in (x, v) with cov = Cov(x, v)."""

    mean_x: float = 0.0
    var_x: float = 1.0
    mean_v: float = 0.0
    var_v: float = 1.0
    cov: float = 0.0

    def cholesky(self, tol: float = 1e-14) -> np.ndarray:
        """Lower factor of the covariance; degenerate directions allowed."""
        a, c, d = self.var_x, self.cov, self.var_v
        if a < 0 or d < 0 or a * d - c * c < -tol * max(1.0, a * d):
            raise ValueError("covariance matrix is not positive semi-definite")
        if a == 0:
            if abs(c) > tol:
                raise ValueError("covariance matrix is not positive semi-definite")
            return np.array([[0.0, 0.0], [0.0, math.sqrt(d)]])
        l11 = math.sqrt(a)
        l21 = c / l11
        return np.array([[l11, 0.0], [l21, math.sqrt(max(d - l21 * l21, 0.0))]])

    @classmethod
    def ground_state(cls, params: PhysicalParams, omega0: float, x0: float = 0.0, v0: float = 0.0):
        """Harmonic ground (or coherent) state: var_x = hbar/2mw, var_v = hbar w/2m."""
        return cls(x0, params.hbar / (2 * params.m * omega0), v0, params.hbar * omega0 / (2 * params.m), 0.0)

    @classmethod
    def minimal(cls, params: PhysicalParams, var_x: float, x0: float = 0.0, v0: float = 0.0):
        """Minimum-uncertainty Gaussian: sigma_x * m sigma_v = hbar / 2."""
        var_v = (params.hbar / (2 * params.m)) ** 2 / var_x
        return cls(x0, var_x, v0, var_v, 0.0)

    @classmethod
    def thermal(cls, params: PhysicalParams, omega0: float):
        """Maxwell-Boltzmann state of a harmonic oscillator."""
        return cls(0.0, params.kT / (params.m * omega0**2), 0.0, params.kT / params.m, 0.0)


def sample_wigner_initial(spec: GaussianSpec, N: int, seed: int, backend=None) -> TrajectoryEnsemble:
    """N samples of a Gaussian initial Wigner function."""
    if N < 1:
        raise ValueError("N must be positive")
    K = backend or _backend.kernels
    L = spec.cholesky()
    ids = np.arange(N, dtype=np.uint64)
    z = K.normal_pairs(ids, 0, PURPOSE_INIT, seed_key(seed))
    x = spec.mean_x + L[0, 0] * z[:, 0]
    v = spec.mean_v + L[1, 0] * z[:, 0] + L[1, 1] * z[:, 1]
    return TrajectoryEnsemble(x, v, seed, ids)


@dataclass(frozen=True)
class ForceModel:
    """Forces acting on each particle.

    quantum : "none" or "meanfield"
    bandwidth : "force" (default), "silverman" or a positive number
    variance_match : shrink the kernel estimate so its variance equals the sample variance
    """

    potential: PotentialSpec
    thermal: bool = False
    quantum: str = "none"
    bandwidth: object = "force"
    variance_match: bool = True
    kde_points: int = 1024

    def __post_init__(self):
        if self.quantum not in ("none", "meanfield"):
            raise ValueError(f"unknown quantum force model {self.quantum!r}")
        if not (self.bandwidth in BANDWIDTH_RULES
                or (isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0)):
            raise ValueError("bandwidth must be 'force', 'silverman' or a positive number")

    def validate(self, params: PhysicalParams):
        if self.thermal and (params.b <= 0 or params.kT < 0):
            raise ValueError("thermal forcing needs b > 0 and kT >= 0")


@dataclass
class KDEForce:
    """Mean-field force at the particles plus diagnostics."""

    force: np.ndarray
    bandwidth: float
    outside: int
    grid: Grid1D
    density: np.ndarray



def _bandwidth(x: np.ndarray, rule) -> float:
    """Kernel width from a rule name or a number.

    "silverman" is 1.06 s N^(-1/5), tuned for the density itself.  "force" is
    1.86 s N^(-1/11), twice the normal-reference optimum for the third
    derivative that enters -Q'; with Silverman's width the force is dominated
    by sampling noise.
    """
    if isinstance(rule, str):
        s = float(np.std(x))
        if s == 0:
            raise NumericalError("degenerate ensemble: zero spread")
        if rule == "silverman":
            return 1.06 * s * x.size ** (-0.2)
        if rule == "force":
            return 1.86 * s * x.size ** (-1.0 / 11.0)
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    return float(rule)


def kde_density(x: np.ndarray, bandwidth, points: int = 1024, variance_match: bool = True,
                backend=None) -> tuple[Grid1D, np.ndarray, float]:
    """Binned Gaussian kernel density estimate on a periodic scratch grid.

    Particles are linearly binned, then convolved with the kernel by FFT.  The
    grid extends 8 bandwidths (and 8 standard deviations) beyond the sample so
    the periodic wrap is negligible.  With ``variance_match`` the sample is
    shrunk about its mean by a = sqrt(s^2 / (s^2 + h^2)) and the kernel by the
    same factor, so the estimate has the sample variance s^2.
    """
    K = backend or _backend.kernels
    x = np.asarray(x, dtype=float)
    h = _bandwidth(x, bandwidth)
    mean = float(np.mean(x))
    s2 = float(np.var(x))
    if variance_match:
        a = math.sqrt(s2 / (s2 + h * h))
        x = mean + a * (x - mean)
        h = a * h
    pad = 8.0 * max(h, math.sqrt(s2))
    lo, hi = float(x.min()) - pad, float(x.max()) + pad
    g = Grid1D(lo, hi, points)
    counts = K.linear_bin(np.ascontiguousarray(x), lo, g.dx, points)
    k = 2 * np.pi * np.fft.rfftfreq(points, g.dx)
    rho = np.fft.irfft(np.fft.rfft(counts) * np.exp(-0.5 * (k * h) ** 2), n=points)
    rho = np.maximum(rho, 0.0) / (x.size * g.dx)
    return g, rho, h


def meanfield_quantum_force(ens: TrajectoryEnsemble, params: PhysicalParams, bandwidth="force",
                            points: int = 1024, variance_match: bool = True, floor: float = 1e-10,
                            backend=None) -> KDEForce:
    """-Q'[rho_hat] at the particle positions.

    Positions where the estimate falls below ``floor`` times its peak take the
    force of the nearest supported node; they are counted in ``outside``.
    """
    if ens.N < 1000:
        raise ValueError("mean-field force needs N >= 1000")
    g, rho, h = kde_density(ens.x, bandwidth, points, variance_match, backend)
    dens = DensityField(rho / (rho.sum() * g.dx), g)
    f = quantum_force(dens, params, floor)
    mask = dens.values > floor * dens.values.max()
    idx = np.nonzero(mask)[0]
    lo, hi = g.x[idx[0]], g.x[idx[-1]]
    f_at = np.interp(ens.x, g.x[idx], f[idx])
    outside = int(np.count_nonzero((ens.x < lo) | (ens.x > hi)))
    return KDEForce(f_at, h, outside, g, dens.values)


@dataclass
class StepDiagnostics:
    outside: int = 0
    mean_quantum_force: float = 0.0
    se_quantum_force: float = 0.0


def step_ensemble(ens: TrajectoryEnsemble, params: PhysicalParams, model: ForceModel, dt: float,
                  backend=None, diagnostics: StepDiagnostics | None = None) -> TrajectoryEnsemble:
    """One semi-implicit Euler-Maruyama step (velocity first, then position)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    model.validate(params)
    K = backend or _backend.kernels
    out = ens.copy()
    dU = np.ascontiguousarray(model.potential.poly.deriv(1).coef if model.potential.degree else [0.0], dtype=float)
    empty = np.empty(0)
    fq = empty
    if model.quantum == "meanfield" and params.hbar > 0:
        kf = meanfield_quantum_force(ens, params, model.bandwidth, model.kde_points, model.variance_match,
                                     backend=K)
        fq = np.ascontiguousarray(kf.force)
        if kf.outside:
            warnings.warn(f"{kf.outside} particles outside the density support; force held flat",
                          RuntimeWarning, stacklevel=2)
        if diagnostics is not None:
            diagnostics.outside += kf.outside
            diagnostics.mean_quantum_force = float(fq.mean())
            diagnostics.se_quantum_force = float(fq.std() / math.sqrt(fq.size))
    noise = empty
    sig = 0.0
    if model.thermal and params.kT > 0:
        noise = K.normals(out.ids, out.step, PURPOSE_NOISE, seed_key(out.seed))
        sig = math.sqrt(2.0 * params.b * params.kT * dt) / params.m
    K.em_step(out.x, out.v, dU, fq, noise, dt, params.b / params.m, 1.0 / params.m, sig)
    if not (np.all(np.isfinite(out.x)) and np.all(np.isfinite(out.v))):
        raise NumericalError("ensemble diverged; reduce dt")
    out.t = ens.t + dt
    out.step = ens.step + 1
    return out


@dataclass
class EnsembleRecord:
    t: list = field(default_factory=list)
    mean_x: list = field(default_factory=list)
    var_x: list = field(default_factory=list)
    se_var_x: list = field(default_factory=list)
    mean_v: list = field(default_factory=list)
    var_v: list = field(default_factory=list)
    se_var_v: list = field(default_factory=list)

    def as_arrays(self) -> dict:
        return {k: np.asarray(v) for k, v in self.__dict__.items()}


def evolve_ensemble(ens: TrajectoryEnsemble, params: PhysicalParams, model: ForceModel, t_max: float,
                    dt: float, cadence: int = 1, backend=None,
                    diagnostics: StepDiagnostics | None = None) -> tuple[TrajectoryEnsemble, EnsembleRecord]:
    """Step to t_max (integer number of equal steps), recording moments every ``cadence`` steps."""
    nsteps = max(1, int(math.ceil(t_max / dt - 1e-9)))
    h = t_max / nsteps
    rec = EnsembleRecord()

    def record(e):
        st = ensemble_statistics(e)
        rec.t.append(e.t)
        for k in ("mean_x", "var_x", "se_var_x", "mean_v", "var_v", "se_var_v"):
            getattr(rec, k).append(st[k])

    record(ens)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i in range(nsteps):
            ens = step_ensemble(ens, params, model, h, backend, diagnostics)
            if (i + 1) % cadence == 0 or i == nsteps - 1:
                record(ens)
    return ens, rec


def _var_se(a: np.ndarray) -> tuple[float, float]:
    d = a - a.mean()
    m2 = float(np.mean(d * d))
    m4 = float(np.mean(d**4))
    return m2, math.sqrt(max(m4 - m2 * m2, 0.0) / a.size)


def ensemble_statistics(ens: TrajectoryEnsemble, x_edges: np.ndarray | None = None, psg=None,
                        params: PhysicalParams | None = None, min_count: int = 10) -> dict:
    """Moments with standard errors, binned mean velocity and an optional phase-space histogram.

    The standard error of a variance estimate is sqrt((m4 - m2^2) / N).
    ``psg`` (a PhaseSpaceGrid) bins (x, m v) into a density normalized like a
    Wigner field; it needs ``params`` for the mass.
    """
    if ens.N < MIN_STATS_N:
        raise ValueError(f"statistics need N >= {MIN_STATS_N}")
    vx, sex = _var_se(ens.x)
    vv, sev = _var_se(ens.v)
    out = {"N": ens.N, "mean_x": float(ens.x.mean()), "var_x": vx, "se_var_x": sex,
           "mean_v": float(ens.v.mean()), "var_v": vv, "se_var_v": sev,
           "se_mean_x": math.sqrt(vx / ens.N), "se_mean_v": math.sqrt(vv / ens.N)}
    if x_edges is not None:
        cnt, _ = np.histogram(ens.x, x_edges)
        vsum, _ = np.histogram(ens.x, x_edges, weights=ens.v)
        with np.errstate(invalid="ignore", divide="ignore"):
            V = np.where(cnt > 0, vsum / np.maximum(cnt, 1), np.nan)
        out["V"] = V
        out["counts"] = cnt
        out["undersampled"] = (cnt > 0) & (cnt < min_count)
    if psg is not None:
        m = 1.0 if params is None else params.m
        xe = psg.x[0] - 0.5 * psg.dx + psg.dx * np.arange(psg.xgrid.n + 1)
        pe = psg.p[0] - 0.5 * psg.dp + psg.dp * np.arange(psg.n_p + 1)
        H, _, _ = np.histogram2d(ens.x, m * ens.v, bins=[xe, pe])
        out["histogram"] = H / (ens.N * psg.cell)
    return out


__all__ = ["TrajectoryEnsemble", "GaussianSpec", "ForceModel", "KDEForce", "StepDiagnostics",
           "EnsembleRecord", "seed_key", "sample_wigner_initial", "kde_density", "meanfield_quantum_force",
           "step_ensemble", "evolve_ensemble", "ensemble_statistics"]
