import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdiss.core import DensityField, Grid1D, PhysicalParams, PotentialSpec, gaussian_density, integrate
from qdiss.qpotential import (fisher_mean_q, pressure_field, pressure_identity_residual, quantum_force,
                              quantum_potential)

P = PhysicalParams(m=1.0, b=1.0, kT=0.0, hbar=1.0)
G = Grid1D(-12.0, 12.0, 512)


def at(field, x, grid=G):
    return float(np.interp(x, grid.x, field))


def gauss_q(x, s2, p=P):
    """Closed-form quantum potential of a normal density."""
    return p.hbar**2 / (4 * p.m * s2) - p.hbar**2 * x**2 / (8 * p.m * s2**2)


class TestQuantumPotential:
    def test_gaussian_values(self):
        q = quantum_potential(gaussian_density(0, 1, G), P)
        assert at(q, 0.0) == pytest.approx(0.25, abs=1e-10)
        assert np.max(np.abs(q - gauss_q(G.x, 1.0))[np.abs(G.x) < 5]) < 1e-9

    def test_zeros_at_sqrt2(self):
        g = Grid1D(-16, 16, 512)
        q = quantum_potential(gaussian_density(0, 1, g), P)
        assert np.interp(math.sqrt(2), g.x, q) == pytest.approx(0.0, abs=1e-3)
        assert q[np.searchsorted(g.x, 2.0)] == pytest.approx(-0.25, abs=1e-10)

    def test_log_method_agrees(self):
        g = Grid1D(-10, 10, 1024, "clamped")
        rho = gaussian_density(0.5, 1.3, g)
        a = quantum_potential(rho, P, method="log")
        assert np.max(np.abs(a - gauss_q(g.x - 0.5, 1.3))[np.abs(g.x) < 5]) < 1e-8

    def test_hbar_zero(self):
        assert not np.any(quantum_potential(gaussian_density(0, 1, G), P.replace(hbar=0.0)))

    def test_ground_state_total_constant(self):
        w = 1.7
        rho = gaussian_density(0, P.hbar / (2 * P.m * w), G)
        total = PotentialSpec.harmonic(w)(G.x) + quantum_potential(rho, P)
        sel = np.abs(G.x) < 3
        assert np.max(np.abs(total[sel] - P.hbar * w / 2)) < 1e-9

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            quantum_potential(gaussian_density(0, 1, G), P, method="fd")


class TestQuantumForce:
    def test_gaussian(self):
        f = quantum_force(gaussian_density(0, 1, G), P)
        assert at(f, 1.0) == pytest.approx(0.25, abs=1e-6)
        assert abs(at(f, 0.0)) < 1e-12

    def test_hbar_zero(self):
        assert not np.any(quantum_force(gaussian_density(0, 1, G), P.replace(hbar=0.0)))

    def test_symmetric_mixture_center(self):
        x = G.x
        v = np.exp(-(x - 1) ** 2) + np.exp(-(x + 1) ** 2)
        f = quantum_force(DensityField(v / integrate(v, G), G), P)
        assert abs(at(f, 0.0)) < 1e-10


class TestPressure:
    def test_quantum_part(self):
        rho = gaussian_density(0, 1, G)
        assert at(pressure_field(rho, P).total, 0.0) == pytest.approx(0.25 / math.sqrt(2 * math.pi), abs=1e-8)

    def test_with_thermal(self):
        rho = gaussian_density(0, 1, G)
        assert at(pressure_field(rho, P.replace(kT=1.0)).total, 0.0) == pytest.approx(0.49868, abs=1e-5)

    def test_ideal_gas(self):
        rho = gaussian_density(0, 1, G)
        pf = pressure_field(rho, P.replace(hbar=0.0, kT=1.0))
        assert np.array_equal(pf.total, rho.values)

    def test_identity_gaussian(self):
        assert pressure_identity_residual(gaussian_density(0, 1, G), P) < 1e-6

    def test_identity_classical(self):
        assert pressure_identity_residual(gaussian_density(0, 1, G), P.replace(hbar=0.0, kT=1.0)) < 1e-12

    def test_identity_mixture_clamped_order(self):
        errs = []
        for n in (128, 256, 512):
            g = Grid1D(-10, 10, n, "clamped")
            x = g.x
            v = np.exp(-(x - 1.5) ** 2 / 0.8) + 0.6 * np.exp(-(x + 1.2) ** 2 / 1.4)
            errs.append(pressure_identity_residual(DensityField(v / integrate(v, g), g), P.replace(kT=0.5)))
        order = np.polyfit(np.log([1 / 128, 1 / 256, 1 / 512]), np.log(errs), 1)[0]
        assert errs[2] < errs[1] < errs[0] and order > 1.8


class TestFisher:
    @pytest.mark.parametrize("s2, expect", [(1.0, 0.125), (0.5, 0.25)])
    def test_gaussian(self, s2, expect):
        r = fisher_mean_q(gaussian_density(0, s2, G), P)
        assert r.mean_q == pytest.approx(expect, abs=1e-10)
        assert r.fisher_form == pytest.approx(expect, abs=1e-10)

    def test_hbar_zero(self):
        assert fisher_mean_q(gaussian_density(0, 1, G), P.replace(hbar=0.0)).mean_q == 0.0

    def test_edge(self):
        g = Grid1D(-4, 4, 128)
        with pytest.raises(ValueError):
            fisher_mean_q(gaussian_density(0, 1, g, tol=1e-2), P)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0.3, 2.0), st.floats(0.2, 2.0))
def test_mean_q_equals_fisher(mean, s2, hbar):
    p = P.replace(hbar=hbar)
    r = fisher_mean_q(gaussian_density(mean, s2, G), p)
    assert r.mean_q == pytest.approx(r.fisher_form, rel=1e-8)
    assert r.mean_q == pytest.approx(hbar**2 / (8 * s2), rel=1e-8)
