import numpy as np
import pytest

from chaos_anneal.errors import (DivergenceError, MisuseError, StabilityError)
from chaos_anneal.meanfield import (PhaseState, Trajectory, integrate_meanfield,
                                    integrate_rk4, linear_steady_state,
                                    meanfield_rhs)
from chaos_anneal.model import DimensionlessParams, apply_scaling, ScalingTransform


def linear_params(delta=0.7, kappa=0.5, drive=2.0):
    return DimensionlessParams(delta=delta, kappa=kappa, gamma=1e-7,
                               coupling=0.0, kerr=0.0, drive=drive)


class TestRhs:
    def test_origin(self):
        d = linear_params()
        out = meanfield_rhs(PhaseState(0j, 0j), d)
        assert out.a == d.drive
        assert out.b == 0j

    def test_linear_fixed_point_resonant(self):
        d = linear_params(delta=0.0, kappa=0.5, drive=2.0)
        out = meanfield_rhs(PhaseState(d.drive / d.kappa + 0j, 0j), d)
        assert abs(out.a) < 1e-14
        assert abs(out.b) < 1e-14

    def test_linear_fixed_point_detuned(self):
        d = linear_params()
        star = linear_steady_state(d)
        out = meanfield_rhs(star, d)
        assert abs(out.a) < 1e-13 * abs(star.a)


class TestLinearSteadyState:
    def test_resonant(self):
        d = linear_params(delta=0.0)
        assert linear_steady_state(d).a == pytest.approx(d.drive / d.kappa)

    def test_balanced_detuning(self):
        d = linear_params(delta=0.5, kappa=0.5)
        star = linear_steady_state(d)
        assert star.a == pytest.approx(d.drive / (d.kappa * (1 - 1j)))
        assert abs(star.a) == pytest.approx(d.drive / (d.kappa * np.sqrt(2)))

    def test_no_drive(self):
        d = linear_params(drive=0.0)
        star = linear_steady_state(d)
        assert star.a == 0j and star.b == 0j

    def test_rejects_nonlinear_params(self):
        d = DimensionlessParams(delta=0.0, kappa=0.5, gamma=1e-7,
                                coupling=0.1, kerr=0.0, drive=1.0)
        with pytest.raises(MisuseError):
            linear_steady_state(d)


class TestIntegrate:
    def test_linear_relaxation_matches_closed_form(self):
        d = linear_params()
        traj = integrate_meanfield(d, PhaseState(0j, 0j), t_end=20.0,
                                   dt=1e-3, sample_stride=100)
        star = linear_steady_state(d).a
        exact = star * (1.0 - np.exp((1j * d.delta - d.kappa) * traj.times))
        assert np.all(np.abs(traj.a - exact) < 1e-6 * abs(star))

    def test_free_decay(self):
        d = linear_params(drive=0.0, kappa=0.8)
        a0 = 2.0 - 1.5j
        traj = integrate_meanfield(d, PhaseState(a0, 0j), t_end=5.0, dt=1e-3,
                                   sample_stride=50)
        assert np.abs(traj.a) == pytest.approx(
            abs(a0) * np.exp(-d.kappa * traj.times), rel=1e-8)

    def test_convergence_order(self):
        d = linear_params()
        star = linear_steady_state(d).a

        def final_error(dt):
            traj = integrate_meanfield(d, PhaseState(0j, 0j), t_end=4.0,
                                       dt=dt, sample_stride=int(round(4.0 / dt)))
            exact = star * (1.0 - np.exp((1j * d.delta - d.kappa) * 4.0))
            return abs(traj.a[-1] - exact)

        e1, e2 = final_error(4e-3), final_error(2e-3)
        order = np.log2(e1 / e2)
        assert order >= 3.5

    def test_bit_for_bit_determinism(self, fig2_dimensionless):
        run = lambda: integrate_meanfield(fig2_dimensionless,
                                          PhaseState(0j, 0j), t_end=5.0,
                                          dt=1e-3, sample_stride=10)
        t1, t2 = run(), run()
        assert np.array_equal(t1.a, t2.a)
        assert np.array_equal(t1.b, t2.b)

    def test_amplitude_scaling_invariance(self, fig2_dimensionless):
        d = fig2_dimensionless
        s = 5.0
        scaled = apply_scaling(d, ScalingTransform(s))
        base = integrate_meanfield(d, PhaseState(0j, 0j), t_end=100.0,
                                   dt=1e-3, sample_stride=200)
        resc = integrate_meanfield(scaled, PhaseState(0j, 0j), t_end=100.0,
                                   dt=1e-3, sample_stride=200)
        scale_ref = np.abs(base.a).max()
        assert np.all(np.abs(s * resc.a - base.a) < 1e-6 * scale_ref)
        assert np.all(np.abs(s * resc.b - base.b)
                      < 1e-6 * np.abs(base.b).max())

    def test_stability_guard(self):
        d = linear_params(delta=40.0)
        with pytest.raises(StabilityError):
            integrate_meanfield(d, PhaseState(0j, 0j), t_end=1.0, dt=0.02)

    def test_divergence_carries_last_valid_time(self):
        # quadratic drift blows up in finite time: a' = a^2, a(0) = 1e12
        def f(a, b):
            return a * a, 0j

        with pytest.raises(DivergenceError) as err:
            integrate_rk4(f, PhaseState(1e12 + 0j, 0j), t_end=1.0, dt=1e-6)
        assert err.value.last_valid_time is not None
        assert 0.0 <= err.value.last_valid_time < 1e-5


class TestTrajectory:
    def test_length_mismatch_rejected(self):
        with pytest.raises(MisuseError):
            Trajectory(np.arange(3.0), np.zeros(2, complex), np.zeros(3, complex))

    def test_times_must_increase(self):
        with pytest.raises(MisuseError):
            Trajectory(np.array([0.0, 2.0, 1.0]), np.zeros(3, complex),
                       np.zeros(3, complex))

    def test_intensity_and_indexing(self):
        traj = Trajectory(np.array([0.0, 1.0]),
                          np.array([1 + 1j, 2 + 0j]),
                          np.array([0j, 1j]))
        assert traj.intensity == pytest.approx([2.0, 4.0])
        state = traj.state_at(1)
        assert state.a == 2 + 0j and state.b == 1j
