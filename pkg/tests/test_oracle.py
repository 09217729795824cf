import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdiss.core import PhysicalParams, PotentialSpec
from qdiss.oracle import (ORACLE_NAMES, coffey_sigma2, commutator_factor, damped_oscillator,
                          einstein_dispersion, equilibrium_references, free_quantum_dispersion,
                          gaussian_dispersion_curve, ground_state_wigner, harmonic_quantum_dispersion,
                          reference_curve, thermo_quantum_free_dispersion, thermo_quantum_sigma2)


class TestCommutator:
    def test_values(self):
        p = PhysicalParams(m=1.0, b=1.0)
        assert commutator_factor(p, 1.0) == pytest.approx(math.exp(-1), rel=1e-10)
        assert commutator_factor(p, 0.0) == 1.0
        assert commutator_factor(PhysicalParams(b=0.0), 3.0, omega0=2.0) == pytest.approx(1.0, rel=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 4.0))
    def test_matches_exponential(self, m, b, w, t):
        p = PhysicalParams(m=m, b=b)
        assert commutator_factor(p, t, omega0=w) == pytest.approx(math.exp(-b * t / m), rel=1e-9)

    def test_rejects_anharmonic(self):
        with pytest.raises(ValueError):
            commutator_factor(PhysicalParams(), 1.0, pot=PotentialSpec.quartic())

    def test_negative_time(self):
        with pytest.raises(ValueError):
            commutator_factor(PhysicalParams(), -1.0)


class TestDispersionLaws:
    def test_free_quantum(self):
        assert free_quantum_dispersion(4.0, PhysicalParams(m=1, b=1, hbar=1)) == pytest.approx(2.0)
        np.testing.assert_allclose(free_quantum_dispersion(np.array([0.0, 1.0]), PhysicalParams(b=4.0)), [0, 0.5])

    def test_einstein(self):
        assert einstein_dispersion(3.0, PhysicalParams(b=1, kT=1)) == pytest.approx(6.0)
        assert einstein_dispersion(1.0, PhysicalParams(b=2, kT=1)) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            einstein_dispersion(1.0, PhysicalParams(kT=0.0))

    def test_implicit_law_residual(self):
        p = PhysicalParams(m=1.0, b=1.0, kT=0.5, hbar=1.0)
        lam2 = p.hbar**2 / (4 * p.m * p.kT)
        t = np.array([0.1, 1.0, 10.0])
        s = thermo_quantum_free_dispersion(t, p)
        res = s - lam2 * np.log1p(s / lam2) - 2 * p.kT / p.b * t
        assert np.max(np.abs(res)) < 1e-12

    def test_implicit_law_limits(self):
        # small kT: approaches hbar sqrt(t/mb); large t: approaches 2Dt
        cold = PhysicalParams(b=1.0, kT=1e-6, hbar=1.0)
        assert thermo_quantum_free_dispersion(4.0, cold) == pytest.approx(free_quantum_dispersion(4.0, cold), rel=5e-3)
        hot = PhysicalParams(b=1.0, kT=1.0, hbar=1.0)
        assert thermo_quantum_free_dispersion(1e4, hot) == pytest.approx(2e4, rel=1e-3)
        assert thermo_quantum_free_dispersion(0.0, hot) == 0.0

    def test_harmonic_limits(self):
        p = PhysicalParams(b=1.0, hbar=1.0)
        assert harmonic_quantum_dispersion(0.0, p, 1.0) == 0.0
        assert harmonic_quantum_dispersion(50.0, p, 1.0) == pytest.approx(0.5)

    def test_gaussian_ode_fixed_point(self):
        p = PhysicalParams(b=1.0, kT=0.7, hbar=1.0)
        s = thermo_quantum_sigma2(p, 1.3)
        curve = gaussian_dispersion_curve(s, p, 1.3, np.linspace(0, 5, 6))
        np.testing.assert_allclose(curve, s, rtol=1e-10)

    def test_gaussian_ode_free_matches_closed_form(self):
        # hbar^2/(2 m b s) with s(0) -> 0 gives s = hbar sqrt(t/mb)
        p = PhysicalParams(b=1.0, hbar=1.0)
        t = np.array([0.0, 1.0, 4.0])
        s0 = 1e-3
        curve = gaussian_dispersion_curve(s0, p, 0.0, t)
        np.testing.assert_allclose(curve, np.sqrt(s0**2 + t), rtol=1e-10)

    def test_damped_oscillator(self):
        p = PhysicalParams(m=1.0, b=0.2)
        t = np.linspace(0, 5, 11)
        x, v = damped_oscillator(t, 1.0, 0.0, p, 1.0)
        g, wd = 0.1, math.sqrt(1 - 0.01)
        exact = np.exp(-g * t) * (np.cos(wd * t) + g / wd * np.sin(wd * t))
        np.testing.assert_allclose(x, exact, atol=1e-11)


class TestStationary:
    def test_thermo_quantum_limits(self):
        assert thermo_quantum_sigma2(PhysicalParams(kT=0.0, hbar=1.0), 1.0) == pytest.approx(0.5)
        assert thermo_quantum_sigma2(PhysicalParams(kT=100.0, hbar=1.0), 1.0) == pytest.approx(100.0, rel=1e-4)

    def test_coffey(self):
        assert coffey_sigma2(PhysicalParams(kT=1.0, hbar=1.0), 1.0) == pytest.approx(13 / 12)
        with pytest.raises(ValueError):
            coffey_sigma2(PhysicalParams(kT=0.0), 1.0)

    def test_equilibrium_refs(self):
        refs = equilibrium_references(PhysicalParams(kT=1.0, hbar=1.0), PotentialSpec.harmonic(1.0))
        assert refs.ground_sigma2 == pytest.approx(0.5)
        assert refs.classical_sigma2 == pytest.approx(1.0)

    def test_mb_annihilated_by_collision_and_liouville(self):
        params = PhysicalParams(m=1.0, b=1.0, kT=1.0)
        pot = PotentialSpec.harmonic(1.0)
        mb = equilibrium_references(params, pot).mb_phase_density
        x = np.linspace(-4, 4, 41)[:, None]
        p = np.linspace(-4, 4, 41)[None, :]
        W = mb(x, p)
        # analytic derivatives of exp(-(p^2/2m + x^2/2)/kT)
        Wx, Wp = -x * W, -p * W
        liouville = -p * Wx + x * Wp
        collision = params.b * (W + p * Wp + params.kT * (p * p - 1) * W)
        assert np.max(np.abs(liouville + collision)) < 1e-10

    def test_mb_normalized(self):
        params = PhysicalParams(kT=0.5)
        mb = equilibrium_references(params, PotentialSpec.quartic()).mb_phase_density
        x = np.linspace(-6, 6, 601)
        p = np.linspace(-6, 6, 601)
        total = mb(x[:, None], p[None, :]).sum() * (x[1] - x[0]) * (p[1] - p[0])
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_ground_wigner_peak(self):
        assert ground_state_wigner(0.0, 0.0, PhysicalParams(hbar=1.0), 1.0) == pytest.approx(1 / math.pi)


class TestReferenceCurve:
    @pytest.mark.parametrize("name", ORACLE_NAMES)
    def test_all_names(self, name):
        c = reference_curve(name, PhysicalParams(b=1.0, kT=1.0, hbar=1.0), omega0=1.0, sigma2_0=0.5)
        v = np.asarray(c(np.array([0.5, 1.0])))
        assert v.shape == (2,) and np.all(np.isfinite(v))
        assert c.label == name and c.provenance

    def test_unknown(self):
        with pytest.raises(KeyError):
            reference_curve("nope", PhysicalParams())
