import math
import warnings

import numpy as np
import pytest

from qdiss.core import Grid1D, NumericalError, PhysicalParams, PotentialSpec, WaveFunction, gaussian_wavefunction
from qdiss.kostin import (coherent_state, continue_quadratic, evolve_kostin, final_state, ground_action_1d,
                          madelung_decompose, momentum_balance_residual, stable_dt, step_kostin, unwrap_phase)
from qdiss.oracle import damped_oscillator

P = PhysicalParams(m=1.0, b=0.0, kT=0.0, hbar=1.0)
pytestmark = pytest.mark.filterwarnings("ignore:dt = .* exceeds the heuristic bound:RuntimeWarning")
HARM = PotentialSpec.harmonic(1.0)
G = Grid1D(-10.0, 10.0, 256)


class TestMadelung:
    def test_plane_wave(self):
        g = Grid1D(0, 2 * np.pi, 64)
        k = 3
        f = madelung_decompose(WaveFunction(np.exp(1j * k * g.x) / np.sqrt(2 * np.pi), g), P.replace(m=2.0))
        assert np.ptp(f.rho.values) < 1e-14
        assert np.max(np.abs(f.V - k / 2.0)) < 1e-12

    def test_real_state(self):
        f = madelung_decompose(coherent_state(G, P, 1.0), P)
        assert np.max(np.abs(f.S)) < 1e-14 and np.max(np.abs(f.V)) < 1e-8

    def test_moving_packet(self):
        f = madelung_decompose(gaussian_wavefunction(0, 0.5, G, 0.7, P), P)
        assert np.max(np.abs(f.V[f.mask] - 0.7)) < 1e-9

    def test_action_zero_at_peak(self):
        f = madelung_decompose(gaussian_wavefunction(1.0, 0.5, G, 0.7, P), P)
        assert f.S[np.argmax(f.rho.values)] == 0.0

    def test_phase_jump_detected(self):
        g = Grid1D(0, 1, 16)
        psi = np.exp(1j * 2.9 * np.arange(16))
        with pytest.raises(NumericalError):
            unwrap_phase(psi, np.ones(16, bool))

    def test_quadratic_continuation_exact(self):
        x = np.arange(20.0)
        f = 0.3 * x**2 - x + 2
        mask = (x > 5) & (x < 14)
        g = np.where(mask, f, 0.0)
        assert np.allclose(continue_quadratic(g, mask), f, atol=1e-10)


class TestStep:
    def test_coherent_state_cosine(self):
        rec = evolve_kostin(coherent_state(G, P, 1.0, x0=1.0), P, HARM, 6 * math.pi, 1e-3, cadence=10)
        a = rec.as_arrays()
        assert np.max(np.abs(a["mean_x"] - np.cos(a["t"]))) < 1e-3

    def test_constant_friction_potential(self):
        p = P.replace(b=0.7)
        psi = coherent_state(G, p, 1.0)
        out = step_kostin(psi, p, PotentialSpec.free(), 1e-3)
        ref = step_kostin(psi, P, PotentialSpec.free(), 1e-3)
        assert np.max(np.abs(np.abs(out.values) - np.abs(ref.values))) < 1e-14

    def test_norm_preserved(self):
        p = P.replace(b=0.3)
        a = evolve_kostin(coherent_state(G, p, 1.0, x0=1.0, v0=0.5), p, HARM, 2.0, 1e-3, cadence=50).as_arrays()
        assert np.max(np.abs(a["norm"] - 1)) < 1e-12

    def test_requires_periodic(self):
        g = Grid1D(-10, 10, 128, "clamped")
        with pytest.raises(ValueError):
            step_kostin(WaveFunction(np.ones(128, complex), g), P, HARM, 1e-3)

    def test_stable_dt_warning(self):
        with pytest.warns(RuntimeWarning):
            evolve_kostin(coherent_state(G, P, 1.0), P, HARM, 0.1, 10 * stable_dt(G, P))

    def test_final_time_exact(self):
        a = evolve_kostin(coherent_state(G, P, 1.0), P, HARM, 0.1, 0.03).as_arrays()
        assert a["t"][-1] == pytest.approx(0.1)

    def test_final_state_matches_record(self):
        psi0 = coherent_state(G, P, 1.0, x0=0.5)
        a = final_state(psi0, P, HARM, 0.2, 1e-3)
        rec = evolve_kostin(psi0, P, HARM, 0.2, 1e-3, snapshots=True)
        assert np.array_equal(a.values, rec.snapshots[-1])


class TestEvolve:
    def test_ehrenfest(self):
        p = P.replace(b=0.2)
        a = evolve_kostin(coherent_state(G, p, 1.0, x0=1.0), p, HARM, 10 * math.pi, 2e-3, cadence=10).as_arrays()
        ref, _ = damped_oscillator(a["t"], 1.0, 0.0, p, 1.0)
        assert np.max(np.abs(a["mean_x"] - ref)) < 0.01

    def test_overdamped_relaxation(self):
        p = P.replace(b=5.0)
        a = evolve_kostin(gaussian_wavefunction(0, 0.1, G, 0.0, p), p, HARM, 20.0, 2e-3, cadence=100).as_arrays()
        s = a["var_x"]
        assert np.all(np.diff(s) >= -1e-12)
        assert s[-1] == pytest.approx(0.5, rel=1e-4)

    def test_thermal_free_einstein_rate(self):
        p = PhysicalParams(m=1.0, b=1.0, kT=1.0, hbar=1.0)
        g = Grid1D(-60, 60, 2048)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            a = evolve_kostin(gaussian_wavefunction(0, 1.0, g, 0.0, p), p, PotentialSpec.free(), 20.0, 4e-3,
                              cadence=250).as_arrays()
        rate = np.gradient(a["var_x"], a["t"])[-1]
        assert rate == pytest.approx(2 * p.D, rel=0.05)


class TestBalance:
    def _triple(self, p, n, dt, x0=1.0, t=1.0, L=10.0):
        g = Grid1D(-L, L, n)
        rec = evolve_kostin(coherent_state(g, p, 1.0, x0=x0), p, HARM, t, dt, snapshots=True)
        k = len(rec.snapshots) // 2
        return momentum_balance_residual(rec.snapshots[k - 1:k + 2], rec.dt, p, HARM, grid=g)

    def test_stationary(self):
        # the split-step ground state differs from the exact one by O(dt^2)
        r = self._triple(P, 128, 1e-4, x0=0.0, t=0.001)
        assert r.momentum < 1e-8 and r.continuity < 1e-8

    @pytest.mark.parametrize("b", [0.0, 0.2])
    def test_convergence(self, b):
        p = P.replace(b=b)
        rs = [self._triple(p, n, dt) for n, dt in ((64, 4e-3), (128, 2e-3), (256, 1e-3))]
        for attr in ("momentum", "continuity"):
            e = [getattr(r, attr) for r in rs]
            assert np.polyfit(np.log([4, 2, 1]), np.log(e), 1)[0] > 1.8

    def test_needs_three(self):
        with pytest.raises(ValueError):
            momentum_balance_residual([coherent_state(G, P, 1.0)] * 2, 1e-3, P, HARM)

    def test_raw_arrays_need_grid(self):
        psi = coherent_state(G, P, 1.0).values
        with pytest.raises(ValueError):
            momentum_balance_residual([psi] * 3, 1e-3, P, HARM)


def test_ground_action():
    from qdiss.core import gaussian_density
    from qdiss.qpotential import quantum_potential

    p = PhysicalParams(m=2.0, b=4.0, hbar=1.0)
    w = 3.0
    assert ground_action_1d(p, w) == pytest.approx(-0.75)
    # U + Q is flat on the ground state, so -m (U + Q) / b is the same number everywhere
    g = Grid1D(-3.0, 3.0, 512)
    rho = gaussian_density(0.0, p.hbar / (2 * p.m * w), g)
    total = PotentialSpec.harmonic(w, p.m)(g.x) + quantum_potential(rho, p, method="log")
    inner = np.abs(g.x) < 1.0
    np.testing.assert_allclose(-p.m * total[inner] / p.b, ground_action_1d(p, w), rtol=1e-8)
