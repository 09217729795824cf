"""Grids, field containers, derivatives and moments shared by every solver.

Units default to hbar = m = 1.  Everything is one-dimensional.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

PERIODIC = "periodic"
CLAMPED = "clamped"


class NumericalError(RuntimeError):
    """A solver hit a numerical failure (instability, divergence, leak)."""


@dataclass(frozen=True)
class PhysicalParams:
    """Particle and bath parameters.

    Parameters
    ----------
    m : float
        Particle mass, > 0.
    b : float
        Friction coefficient, >= 0.
    kT : float
        Thermal energy k_B T, >= 0.
    hbar : float
        Planck constant, > 0.  Zero is accepted to switch quantum terms off.
    """

    m: float = 1.0
    b: float = 1.0
    kT: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("m", "b", "kT", "hbar"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.m <= 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if self.b < 0:
            raise ValueError(f"friction must be non-negative, got {self.b}")
        if self.kT < 0:
            raise ValueError(f"kT must be non-negative, got {self.kT}")
        if self.hbar < 0:
            raise ValueError(f"hbar must be non-negative, got {self.hbar}")

    @property
    def D(self) -> float:
        """Einstein diffusion constant kT/b."""
        if self.b == 0:
            raise ValueError("diffusion constant undefined for b = 0")
        return self.kT / self.b

    @property
    def lambdaT(self) -> float:
        """Thermal de Broglie length hbar / (2 sqrt(m kT))."""
        if self.kT == 0:
            raise ValueError("thermal wavelength undefined for kT = 0")
        return self.hbar / (2.0 * math.sqrt(self.m * self.kT))

    def replace(self, **kw) -> "PhysicalParams":
        d = dict(m=self.m, b=self.b, kT=self.kT, hbar=self.hbar)
        d.update(kw)
        return PhysicalParams(**d)


@dataclass(frozen=True)
class PotentialSpec:
    """Polynomial potential U(x) = sum_j c_j x^j with exact derivatives."""

    coeffs: tuple = (0.0,)
    omega0: float | None = None

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs) or (0.0,)
        if not all(math.isfinite(v) for v in c):
            raise ValueError("potential coefficients must be finite")
        # trim trailing zeros so that degree is meaningful
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def free(cls) -> "PotentialSpec":
        return cls((0.0,), omega0=0.0)

    @classmethod
    def harmonic(cls, omega0: float, m: float = 1.0) -> "PotentialSpec":
        """U = m omega0^2 x^2 / 2."""
        if omega0 < 0:
            raise ValueError("omega0 must be non-negative")
        return cls((0.0, 0.0, 0.5 * m * omega0 * omega0), omega0=float(omega0))

    @classmethod
    def quartic(cls, g: float = 0.25) -> "PotentialSpec":
        """U = g x^4."""
        return cls((0.0, 0.0, 0.0, 0.0, g))

    @classmethod
    def double_well(cls, depth: float = 1.0, x0: float = 1.0) -> "PotentialSpec":
        """U = depth ((x/x0)^2 - 1)^2, minima at +-x0."""
        a = depth / x0**4
        return cls((depth, 0.0, -2.0 * depth / x0**2, 0.0, a))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    def __call__(self, x):
        return self.poly(np.asarray(x, dtype=float))

    def derivative(self, k: int = 1) -> "PotentialSpec":
        if k < 0:
            raise ValueError("derivative order must be >= 0")
        if k == 0:
            return self
        if k > self.degree:
            return PotentialSpec((0.0,))
        return PotentialSpec(tuple(self.poly.deriv(k).coef))

    def deriv_values(self, x, k: int = 1) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if k > self.degree:
            return np.zeros_like(x)
        return self.derivative(k)(x)

    def harmonic_frequency(self, m: float = 1.0) -> float:
        """omega0 for a potential of degree <= 2 (0 for a free particle)."""
        if self.degree > 2:
            raise ValueError("potential is not quadratic")
        c2 = self.coeffs[2] if self.degree == 2 else 0.0
        if c2 < 0:
            raise ValueError("inverted harmonic potential has no real frequency")
        return math.sqrt(2.0 * c2 / m)


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid.

    Periodic grids omit the right end point, clamped grids include it.
    """

    x_min: float
    x_max: float
    n: int
    mode: str = PERIODIC

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"grid needs n >= 8 points, got {self.n}")
        if self.mode not in (PERIODIC, CLAMPED):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dx(self) -> float:
        span = self.x_max - self.x_min
        return span / self.n if self.mode == PERIODIC else span / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def periodic(self) -> bool:
        return self.mode == PERIODIC

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)


def build_grid(x_min: float, x_max: float, n: int, mode: str = PERIODIC) -> Grid1D:
    """Construct a :class:`Grid1D`, validating bounds and size."""
    return Grid1D(float(x_min), float(x_max), n, mode)


def integrate(values, grid: Grid1D):
    """Quadrature: rectangle rule on periodic grids, trapezoid on clamped."""
    values = np.asarray(values)
    if grid.periodic:
        return values.sum(axis=-1) * grid.dx
    return np.trapezoid(values, dx=grid.dx, axis=-1)


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DensityField:
    """Non-negative density samples on a grid."""

    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        v = _frozen(self.values, float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"density has shape {v.shape}, grid has {self.grid.n} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("density contains non-finite values")
        if np.any(v < 0):
            raise ValueError("density must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        return float(integrate(self.values, self.grid))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex wave function samples on a grid."""

    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        v = _frozen(self.values, complex)
        if v.shape != (self.grid.n,):
            raise ValueError(f"wave function has shape {v.shape}, grid has {self.grid.n} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("wave function contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        return float(integrate(np.abs(self.values) ** 2, self.grid))

    @property
    def density(self) -> DensityField:
        return DensityField(np.abs(self.values) ** 2, self.grid)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x


def gaussian_density(mean: float, variance: float, grid: Grid1D, tol: float = 1e-12) -> DensityField:
    """Sampled normal density, renormalized on the grid.

    Raises if the density at either end of the grid exceeds ``tol`` times the peak.
    """
    if not variance > 0:
        raise ValueError("variance must be positive")
    x = grid.x
    rho = np.exp(-((x - mean) ** 2) / (2.0 * variance)) / math.sqrt(2.0 * math.pi * variance)
    peak = rho.max()
    edge = max(rho[0], rho[-1])
    if edge > tol * peak:
        raise ValueError(f"grid truncates the Gaussian: edge/peak = {edge / peak:.3e} > {tol:g}")
    rho, _ = _normalize_array(rho, grid)
    return DensityField(rho, grid)


def gaussian_wavefunction(mean: float, variance: float, grid: Grid1D, v0: float = 0.0,
                          params: PhysicalParams | None = None, tol: float = 1e-12) -> WaveFunction:
    """Gaussian packet with |psi|^2 of the given variance and phase exp(i m v0 x / hbar)."""
    p = params or PhysicalParams()
    rho = gaussian_density(mean, variance, grid, tol).values
    psi = np.sqrt(rho) * np.exp(1j * p.m * v0 * grid.x / p.hbar)
    return WaveFunction(psi, grid)


def _fd_first(f: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(f, dx, edge_order=2)


def _fd_second(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dx**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / dx**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / dx**2
    return out


def spectral_derivative(f: np.ndarray, order: int, dx: float, axis: int = -1) -> np.ndarray:
    """Fourier derivative along ``axis``; the Nyquist mode is dropped for odd orders."""
    f = np.asarray(f)
    n = f.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    mult = mult.reshape(shape)
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * mult, axis=axis)
    return out if np.iscomplexobj(f) else out.real


def derivative(values, order: int, grid: Grid1D) -> np.ndarray:
    """d^order/dx^order of sampled values.

    Periodic grids use spectral differentiation.  Clamped grids use centered
    second-order differences with second-order one-sided ends; orders above
    two are built by repeated application.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    f = np.asarray(values)
    if grid.periodic:
        return spectral_derivative(f, int(order), grid.dx)
    out = f
    remaining = int(order)
    while remaining >= 2:
        out = _fd_second(out, grid.dx)
        remaining -= 2
    if remaining == 1:
        out = _fd_first(out, grid.dx)
    return out


def moments(rho: DensityField, tol: float = 1e-6) -> tuple[float, float]:
    """Mean and variance of a normalized density."""
    g = rho.grid
    norm = rho.norm
    if abs(norm - 1.0) > tol:
        raise ValueError(f"density is not normalized (norm = {norm:.12g})")
    x = g.x
    mean = float(integrate(x * rho.values, g) / norm)
    var = float(integrate((x - mean) ** 2 * rho.values, g) / norm)
    return mean, var


def _normalize_array(a: np.ndarray, grid: Grid1D, squared: bool = False):
    dens = np.abs(a) ** 2 if squared else a
    norm = float(integrate(dens, grid))
    if not norm > 0 or not math.isfinite(norm):
        raise ValueError(f"cannot normalize a field with total mass {norm}")
    scale = 1.0 / math.sqrt(norm) if squared else 1.0 / norm
    return a * scale, norm


def normalize(f):
    """Return ``(normalized_field, norm_before)`` for a density or wave function."""
    if isinstance(f, WaveFunction):
        if abs(f.norm - 1.0) <= 1e-15:
            return f, f.norm
        v, norm = _normalize_array(f.values, f.grid, squared=True)
        return WaveFunction(v, f.grid), norm
    if isinstance(f, DensityField):
        if abs(f.norm - 1.0) <= 1e-15:
            return f, f.norm
        v, norm = _normalize_array(f.values, f.grid)
        return DensityField(v, f.grid), norm
    raise TypeError(f"cannot normalize {type(f).__name__}")


def floor_mask(rho: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Points where rho exceeds ``floor`` times its maximum."""
    rho = np.asarray(rho)
    mx = rho.max()
    if not mx > 0:
        raise ValueError("density is identically zero")
    return rho > floor * mx


def fill_nearest(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace masked-out entries by the value at the nearest in-mask index."""
    n = values.size
    idx = np.arange(n)
    if not mask.any():
        raise ValueError("empty evaluation mask")
    left = np.where(mask, idx, -1)
    left = np.maximum.accumulate(left)
    right = np.where(mask, idx, n)
    right = np.minimum.accumulate(right[::-1])[::-1]
    dl = np.where(left >= 0, idx - left, n + 1)
    dr = np.where(right < n, right - idx, n + 1)
    src = np.where(dl <= dr, left, right)
    return values[src]


__all__: Sequence[str] = [
    "PERIODIC", "CLAMPED", "NumericalError", "PhysicalParams", "PotentialSpec", "Grid1D",
    "DensityField", "WaveFunction", "build_grid", "gaussian_density", "gaussian_wavefunction",
    "derivative", "spectral_derivative", "moments", "normalize", "integrate", "floor_mask",
    "fill_nearest",
]
