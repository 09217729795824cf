import math

import numpy as np
import pytest

from qdiss.core import (NumericalError, PhysicalParams, PotentialSpec, WaveFunction, build_grid,
                        gaussian_wavefunction)
from qdiss.oracle import coffey_sigma2, equilibrium_references, ground_state_wigner
from qdiss.phasespace import (PhaseSpaceGrid, WignerField, XModel, apply_x_model, evolve_phase_space,
                              from_function, marginals, moyal_coefficient, moyal_rhs, phase_moments,
                              quantum_force_term, stable_dt, step_phase_space, wigner_transform,
                              x_model_coefficient)


def _psg(L=8.0, n=64, p_max=6.0, n_p=64):
    return PhaseSpaceGrid(build_grid(-L, L, n), p_max, n_p)


def _gauss(psg, sx=0.5, sp=0.5, x0=0.0, p0=0.0, params=None):
    return from_function(psg, lambda X, P: np.exp(-(X - x0) ** 2 / (2 * sx) - (P - p0) ** 2 / (2 * sp)), params)


class TestGrid:
    def test_properties(self):
        psg = _psg()
        assert psg.shape == (64, 64)
        assert psg.dp == pytest.approx(12.0 / 64)
        assert psg.p[0] == -6.0 and psg.p[-1] == pytest.approx(6.0 - psg.dp)

    @pytest.mark.parametrize("kw", [dict(p_max=0.0, n_p=64), dict(p_max=1.0, n_p=7), dict(p_max=1.0, n_p=9)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            PhaseSpaceGrid(build_grid(-1, 1, 16), **kw)

    def test_needs_periodic(self):
        with pytest.raises(ValueError):
            PhaseSpaceGrid(build_grid(-1, 1, 16, "clamped"), 1.0, 16)

    def test_field_shape_checked(self):
        with pytest.raises(ValueError):
            WignerField(np.zeros((3, 3)), _psg())

    def test_non_finite(self):
        v = np.zeros(_psg().shape)
        v[0, 0] = np.nan
        with pytest.raises(NumericalError):
            WignerField(v, _psg())


class TestWignerTransform:
    params = PhysicalParams(hbar=1.0)

    def _ground(self):
        g = build_grid(-8, 8, 128)
        psg = PhaseSpaceGrid(g, math.pi / (2 * g.dx), 128)
        return gaussian_wavefunction(0.0, 0.5, g), psg

    def test_ground_state_peak(self):
        psi, psg = self._ground()
        W = wigner_transform(psi, psg, self.params)
        i = np.argmin(np.abs(psg.x))
        j = np.argmin(np.abs(psg.p))
        assert W.values[i, j] == pytest.approx(1 / math.pi, rel=1e-8)
        X, P = np.meshgrid(psg.x, psg.p, indexing="ij")
        assert np.max(np.abs(W.values - ground_state_wigner(X, P, self.params, 1.0))) < 1e-8

    def test_x_marginal_is_density(self):
        psi, psg = self._ground()
        W = wigner_transform(psi, psg, self.params)
        rho, _ = marginals(W)
        assert np.max(np.abs(rho.values - psi.density.values)) < 1e-8
        assert W.norm == pytest.approx(1.0, abs=1e-10)

    def test_cat_state_negative(self):
        g = build_grid(-8, 8, 128)
        psg = PhaseSpaceGrid(g, math.pi / (2 * g.dx), 128)
        a = gaussian_wavefunction(-2.0, 0.25, g).values
        b = gaussian_wavefunction(2.0, 0.25, g).values
        psi = WaveFunction((a + b) / math.sqrt(np.sum(np.abs(a + b) ** 2) * g.dx), g)
        W = wigner_transform(psi, psg, self.params)
        assert W.values.min() < -0.1 / math.pi

    def test_p_max_guard(self):
        psi, psg = self._ground()
        bad = PhaseSpaceGrid(psg.xgrid, 1.01 * psg.p_max, 128)
        with pytest.raises(ValueError, match="alias"):
            wigner_transform(psi, bad, self.params)

    def test_needs_hbar(self):
        psi, psg = self._ground()
        with pytest.raises(ValueError):
            wigner_transform(psi, psg, PhysicalParams(hbar=0.0))


class TestMoyal:
    def test_coefficients(self):
        assert moyal_coefficient(0, 1.0) == 1.0
        assert moyal_coefficient(1, 1.0) == pytest.approx(-1 / 24)
        assert moyal_coefficient(1, 2.0) == pytest.approx(-4 / 24)

    def test_harmonic_quantum_equals_classical(self):
        psg = _psg()
        p = PhysicalParams(hbar=1.0)
        W = _gauss(psg)
        pot = PotentialSpec.harmonic(1.3)
        np.testing.assert_array_equal(moyal_rhs(W, pot, p, True), moyal_rhs(W, pot, p, False))

    def test_free_is_advection(self):
        psg = _psg(n=128)
        p = PhysicalParams(m=2.0)
        W = _gauss(psg)
        X, P = np.meshgrid(psg.x, psg.p, indexing="ij")
        expected = -(P / 2.0) * (-X / 0.5) * W.values
        assert np.max(np.abs(moyal_rhs(W, PotentialSpec.free(), p) - expected)) < 1e-9

    def test_quartic_third_order_term(self):
        # U = x^4/4: the k = 1 term is -(hbar^2/24) U''' d_p^3 W = -(hbar^2/4) x d_p^3 W
        psg = _psg(n_p=128, p_max=8.0)
        hbar = 0.7
        p = PhysicalParams(hbar=hbar)
        pot = PotentialSpec.quartic(0.25)
        W = _gauss(psg)
        X, P = np.meshgrid(psg.x, psg.p, indexing="ij")
        s = 0.5
        d3 = (3 * P / s**2 - P**3 / s**3) * W.values
        extra = moyal_rhs(W, pot, p, True) - moyal_rhs(W, pot, p, False)
        assert np.max(np.abs(extra - (-(hbar**2) / 4) * X * d3)) < 1e-9

    def test_quantum_force_term(self):
        psg = _psg(n_p=128, p_max=8.0)
        hbar = 0.7
        p = PhysicalParams(hbar=hbar)
        W = _gauss(psg)
        X, P = np.meshgrid(psg.x, psg.p, indexing="ij")
        d2 = (P**2 / 0.25 - 1 / 0.5) * W.values
        q = quantum_force_term(W, PotentialSpec.quartic(0.25), p)
        assert np.max(np.abs(q - (hbar**2 / 4) * X * d2)) < 1e-9
        assert not np.any(quantum_force_term(W, PotentialSpec.harmonic(1.0), p))
        assert not np.any(quantum_force_term(W, PotentialSpec.quartic(0.25), PhysicalParams(hbar=0.0)))


class TestXModel:
    def test_unknown(self):
        with pytest.raises(ValueError):
            XModel("other")

    def test_coffey_coefficient(self):
        psg = _psg()
        p = PhysicalParams(hbar=1.0, kT=0.5, m=2.0)
        W = _gauss(psg)
        a = x_model_coefficient(W, XModel("coffey"), p, PotentialSpec.harmonic(1.0, m=2.0))
        # U'' = m w^2 = 2
        np.testing.assert_allclose(a, 2.0 / (12 * 2.0 * 0.5))

    def test_coffey_needs_temperature(self):
        with pytest.raises(ValueError):
            XModel("coffey").validate(PhysicalParams(kT=0.0))

    def test_gaussian_nonlinear(self):
        psg = _psg(n=256)
        p = PhysicalParams(hbar=1.0, m=1.0)
        W = _gauss(psg, sx=1.0)
        a = x_model_coefficient(W, XModel("gaussian_nonlinear"), p, PotentialSpec.free())
        # -(hbar^2/4m) (ln rho)'' = 1/(4 sigma^2)
        inner = np.abs(psg.x) < 4
        np.testing.assert_allclose(a[inner], 0.25, rtol=1e-3)

    def test_none_is_zero(self):
        psg = _psg()
        W = _gauss(psg)
        assert not np.any(apply_x_model(W, XModel(), PhysicalParams(kT=1.0), PotentialSpec.harmonic(1.0)))


class TestEquilibrium:
    def test_mb_marginals(self):
        params = PhysicalParams(m=1.5, b=1.0, kT=0.8, hbar=1.0)
        pot = PotentialSpec.harmonic(1.0, m=1.5)
        psg = _psg(L=8.0, n=64, p_max=8.0, n_p=64)
        mb = equilibrium_references(params, pot).mb_phase_density
        W = from_function(psg, mb, params, normalize=False)
        assert W.norm == pytest.approx(1.0, abs=1e-8)
        mo = phase_moments(W)
        assert mo["var_p"] == pytest.approx(1.5 * 0.8, rel=1e-8)
        assert mo["var_x"] == pytest.approx(0.8 / 1.5, rel=1e-8)
        assert mo["kinetic"] == pytest.approx(0.4, rel=1e-8)

    def test_mb_fixed_point_of_classical_kramers(self):
        params = PhysicalParams(b=1.0, kT=1.0, hbar=1.0)
        pot = PotentialSpec.harmonic(1.0)
        psg = _psg(L=8.0, n=64, p_max=8.0, n_p=64)
        W0 = from_function(psg, equilibrium_references(params, pot).mb_phase_density, params)
        W, rec = evolve_phase_space(W0, params, pot, 1.0, friction=True, quantum=False, scheme="rk4")
        assert np.abs(W.values - W0.values).sum() * psg.cell < 1e-8
        assert np.ptp(rec.norm) < 1e-12

    def test_coffey_stationary_variance(self):
        params = PhysicalParams(b=1.0, kT=1.0, hbar=1.0)
        assert coffey_sigma2(params, 1.0) == pytest.approx(1 + 1 / 12)


class TestStepping:
    def test_stable_dt_monotone(self):
        psg = _psg()
        p = PhysicalParams(b=1.0, kT=1.0)
        pot = PotentialSpec.harmonic(1.0)
        assert stable_dt(psg, p, pot, scheme="rk4") > stable_dt(psg, p, pot, scheme="rk2")
        assert stable_dt(psg, p, pot, friction=True) <= stable_dt(psg, p, pot)

    def test_step_rejects_large_dt(self):
        psg = _psg()
        p = PhysicalParams(b=1.0, kT=1.0)
        pot = PotentialSpec.harmonic(1.0)
        W = _gauss(psg, params=p)
        with pytest.raises(NumericalError):
            step_phase_space(W, p, pot, 10 * stable_dt(psg, p, pot))

    def test_unknown_scheme(self):
        psg = _psg()
        with pytest.raises(ValueError):
            stable_dt(psg, PhysicalParams(), PotentialSpec.free(), scheme="euler")

    def test_ground_state_stationary(self):
        params = PhysicalParams(b=0.0, hbar=1.0)
        pot = PotentialSpec.harmonic(1.0)
        psg = _psg(L=8.0, n=64, p_max=8.0, n_p=64)
        W0 = from_function(psg, lambda X, P: ground_state_wigner(X, P, params, 1.0), params)
        W, rec = evolve_phase_space(W0, params, pot, 2.0, scheme="rk4")
        assert np.abs(W.values - W0.values).sum() * psg.cell < 1e-7
        assert np.max(np.abs(np.asarray(rec.var_x) - 0.5)) < 1e-7

    def test_rk2_matches_rk4(self):
        params = PhysicalParams(b=0.5, kT=0.5, hbar=1.0)
        pot = PotentialSpec.harmonic(1.0)
        psg = _psg(L=8.0, n=64, p_max=8.0, n_p=64)
        W0 = _gauss(psg, sx=0.3, sp=0.8, x0=1.0, params=params)
        a, _ = evolve_phase_space(W0, params, pot, 0.5, friction=True, scheme="rk2")
        b, _ = evolve_phase_space(W0, params, pot, 0.5, friction=True, scheme="rk4")
        assert np.abs(a.values - b.values).sum() * psg.cell < 1e-4

    def test_mean_follows_classical_orbit(self):
        params = PhysicalParams(b=0.0, hbar=1.0)
        pot = PotentialSpec.harmonic(1.0)
        psg = _psg(L=8.0, n=64, p_max=8.0, n_p=64)
        W0 = _gauss(psg, sx=0.5, sp=0.5, x0=1.0, params=params)
        W, rec = evolve_phase_space(W0, params, pot, math.pi / 2, scheme="rk4", cadence=1)
        assert rec.mean_x[-1] == pytest.approx(0.0, abs=1e-6)
        assert phase_moments(W)["mean_p"] == pytest.approx(-1.0, abs=1e-6)

    def test_boundary_leak_detected(self):
        params = PhysicalParams(b=0.0, hbar=1.0)
        psg = _psg(L=8.0, n=32, p_max=3.0, n_p=32)
        W0 = _gauss(psg, sx=0.5, sp=0.5, x0=0.0, p0=1.5, params=params)
        with pytest.raises(NumericalError, match="p-boundary"):
            evolve_phase_space(W0, params, PotentialSpec.harmonic(1.0), 1.0, cadence=1)

    def test_friction_needs_b(self):
        psg = _psg()
        p = PhysicalParams(b=0.0)
        with pytest.raises(ValueError):
            step_phase_space(_gauss(psg, params=p), p, PotentialSpec.free(), 1e-3, friction=True)
