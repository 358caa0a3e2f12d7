import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracburgers.errors import NonFiniteError, RejectedInputError, ResolutionError
from fracburgers.flux import FluxSpec, burgers, linear_flux, zero_flux
from fracburgers.monitors import MonitorSet
from fracburgers.presets import initial_field
from fracburgers.scaling import fit_loglog
from fracburgers.spectral import Grid, SpectralField, forward_transform
from fracburgers.stepper import (
    SolverState,
    StepperConfig,
    cfl_dt,
    etd_coefficients,
    heat_semigroup,
    integrate,
    phi,
    step,
)

from conftest import random_field


def sine(n):
    g = Grid(n)
    return forward_transform(np.sin(2 * np.pi * g.x), g)


class TestConfig:
    @pytest.mark.parametrize("alpha", [1.0, 0.8, 2.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(RejectedInputError):
            StepperConfig(0.1, alpha, 1.0)

    def test_nu_positive(self):
        with pytest.raises(RejectedInputError):
            StepperConfig(0.0, 2.0, 1.0)

    def test_scheme(self):
        with pytest.raises(RejectedInputError):
            StepperConfig(0.1, 2.0, 1.0, scheme="RK4")

    def test_beta(self):
        assert StepperConfig(0.1, 1.5, 1.0).beta == pytest.approx(2.0)


class TestHeatSemigroup:
    def test_decay_factor(self):
        out = heat_semigroup(sine(32), 1.0, 2.0, 1.0)
        assert abs(out.coeffs[1]) / abs(sine(32).coeffs[1]) == pytest.approx(7.157e-18, rel=1e-3)

    def test_identity(self, rng):
        f = random_field(Grid(64), rng)
        np.testing.assert_array_equal(heat_semigroup(f, 0.3, 1.5, 0.0).coeffs, f.coeffs)

    def test_negative_time(self):
        with pytest.raises(RejectedInputError):
            heat_semigroup(sine(16), 1.0, 2.0, -1.0)

    @settings(max_examples=30, deadline=None)
    @given(t1=st.floats(0, 0.1), t2=st.floats(0, 0.1), alpha=st.floats(1.05, 2.0), seed=st.integers(0, 10**6))
    def test_semigroup_law(self, t1, t2, alpha, seed):
        f = random_field(Grid(64), np.random.default_rng(seed))
        a = heat_semigroup(heat_semigroup(f, 0.01, alpha, t1), 0.01, alpha, t2).coeffs
        b = heat_semigroup(f, 0.01, alpha, t1 + t2).coeffs
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


class TestPhi:
    def test_zero(self):
        assert phi(1, 0.0) == 1.0
        assert phi(2, 0.0) == 0.5
        assert phi(3, 0.0) == pytest.approx(1 / 6)

    def test_one(self):
        assert phi(1, 1.0) == pytest.approx(math.e - 1, rel=1e-14)

    def test_branch_consistency(self):
        z = -1e-3
        closed = math.expm1(z) / z
        assert abs(phi(1, z) - closed) < 1e-12
        assert abs(phi(1, np.nextafter(z, 0)) - closed) < 1e-12

    @pytest.mark.parametrize("j", [2, 3])
    def test_threshold_continuity(self, j):
        below, above = phi(j, np.array([-0.5 + 1e-12, -0.5 - 1e-12]))
        assert abs(below - above) < 1e-12

    @pytest.mark.parametrize("j", [1, 2, 3])
    def test_against_quadrature(self, j):
        # phi_j(z) = int_0^1 e^{(1-s) z} s^{j-1} / (j-1)! ds
        from scipy.integrate import quad

        for z in [-200.0, -30.0, -2.0, -0.6, -0.3, -1e-2, -1e-5]:
            q, _ = quad(lambda s: math.exp((1 - s) * z) * s ** (j - 1) / math.factorial(j - 1), 0, 1, epsabs=0, epsrel=1e-13)
            assert phi(j, z) == pytest.approx(q, rel=1e-11)

    def test_coefficients(self):
        g = Grid(32)
        c = etd_coefficients(0.1, 2.0, 0.01, g)
        lam = 0.1 * (2 * np.pi * g.k) ** 2
        np.testing.assert_allclose(c.E, np.exp(-lam * 0.01))
        assert c.E[0] == 1.0
        assert c.phi1[0] == 1.0

    def test_coefficients_need_dt(self):
        with pytest.raises(RejectedInputError):
            etd_coefficients(0.1, 2.0, 0.0, Grid(16))


class TestStep:
    def test_zero_flux_is_heat(self, rng):
        f = random_field(Grid(64), rng)
        cfg = StepperConfig(0.05, 1.5, 1.0)
        out = step(SolverState(f, 0.0), cfg, zero_flux(), dt=0.01)
        np.testing.assert_allclose(out.field.coeffs, heat_semigroup(f, 0.05, 1.5, 0.01).coeffs, rtol=1e-12, atol=1e-15)
        assert out.step_count == 1 and out.dt_last == 0.01

    @pytest.mark.parametrize("scheme,order", [("ETDRK4", 4), ("ETDRK2", 2)])
    def test_linear_transport(self, scheme, order):
        n, nu, alpha, c, T = 32, 0.01, 1.5, 1.0, 0.5
        g = Grid(n)
        exact = np.exp(-nu * (2 * np.pi) ** alpha * T) * np.sin(2 * np.pi * (g.x - c * T))
        cfg = StepperConfig(nu, alpha, T, dt_max=1.0, scheme=scheme)
        errs = []
        dts = [0.05, 0.025, 0.0125]
        for dt in dts:
            run = integrate(sine(n), cfg, linear_flux(c), validate_flux=False, fixed_dt=dt, c_res=math.inf)
            errs.append(np.max(np.abs(run.final_state.field.samples() - exact)))
        assert errs[-1] < (1e-5 if order == 4 else 5e-3)
        slope = fit_loglog(list(zip(dts, errs))).slope
        assert slope == pytest.approx(order, abs=0.3)

    def test_burgers_order(self):
        from fracburgers.acceptance import convergence_order

        assert 3.5 <= convergence_order().slope <= 4.5

    def test_etdrk2_order(self):
        from fracburgers.acceptance import convergence_order

        assert 1.7 <= convergence_order(scheme="ETDRK2").slope <= 2.3

    def test_zero_mode(self, rng):
        f = random_field(Grid(64), rng)
        out = step(SolverState(f, 0.0), StepperConfig(0.05, 2.0, 1.0), burgers(), dt=1e-3)
        assert out.field.coeffs[0] == 0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blowup_guard(self):
        g = Grid(32)
        spec = FluxSpec("exp", np.exp, np.exp, np.exp, 1.0, 1.0, validation_radius=1.0)
        u = forward_transform(700 * np.sin(2 * np.pi * g.x), g)
        with pytest.raises(NonFiniteError):
            step(SolverState(u, 0.0), StepperConfig(0.1, 2.0, 1.0), spec, dt=1e-3)


class TestCfl:
    def test_zero_field(self):
        cfg = StepperConfig(0.1, 2.0, 1.0, dt_max=0.02)
        assert cfl_dt(SolverState(SpectralField.zeros(Grid(64)), 0.0), cfg, burgers()) == 0.02

    def test_unit_amplitude(self):
        cfg = StepperConfig(0.1, 2.0, 1.0, dt_max=1.0)
        dt = cfl_dt(SolverState(sine(1024), 0.0), cfg, burgers())
        assert dt == pytest.approx(0.4 / 1024, rel=1e-12)

    def test_dt_max_caps(self):
        cfg = StepperConfig(0.1, 2.0, 1.0, dt_max=1e-4)
        assert cfl_dt(SolverState(sine(1024), 0.0), cfg, burgers()) == 1e-4

    def test_ramp_limiter(self):
        cfg = StepperConfig(0.1, 2.0, 1.0, dt_max=1.0)
        assert cfl_dt(SolverState(SpectralField.zeros(Grid(64)), 0.0, 3, 1e-3), cfg, burgers()) == 2e-3

    def test_ramp_during_run(self):
        g = Grid(256)
        u0 = forward_transform(1e-3 * np.sin(2 * np.pi * g.x), g)
        mon = MonitorSet(sample_times=np.linspace(0, 0.5, 200)[1:], p_values=())
        run = integrate(u0, StepperConfig(0.05, 2.0, 0.5, dt_max=0.1), burgers(), mon)
        dts = [r.dt_last for r in run.records[1:]]
        assert all(b <= 2 * a * (1 + 1e-12) for a, b in zip(dts, dts[1:]))


class TestIntegrate:
    def test_t_end_zero(self):
        run = integrate(sine(64), StepperConfig(0.05, 2.0, 0.0), burgers())
        assert len(run.records) == 1
        assert run.records[0].t == 0.0

    def test_heat_flow(self):
        nu, alpha, T = 0.02, 1.5, 0.7
        g = Grid(64)
        run = integrate(sine(64), StepperConfig(nu, alpha, T), zero_flux(), c_res=math.inf)
        exact = math.exp(-nu * (2 * np.pi) ** alpha * T) * np.sin(2 * np.pi * g.x)
        np.testing.assert_allclose(run.final_state.field.samples(), exact, atol=1e-13)

    def test_sample_times_hit(self):
        times = [0.01, 0.0337, 0.1, 0.15]
        run = integrate(sine(128), StepperConfig(0.05, 2.0, 0.2), burgers(), MonitorSet(sample_times=times, p_values=()))
        np.testing.assert_array_equal(run.times, [0.0] + times + [0.2])

    def test_resolution_guard(self):
        cfg = StepperConfig(1e-3, 2.0, 0.01)
        with pytest.raises(ResolutionError):
            integrate(sine(64), cfg, burgers())
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            run = integrate(sine(64), cfg, burgers(), allow_underresolved=True)
        assert caught and run.warnings

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_propagates(self):
        g = Grid(32)
        spec = FluxSpec("exp", np.exp, np.exp, np.exp, 1.0, 1.0, validation_radius=1.0)
        u = forward_transform(700 * np.sin(2 * np.pi * g.x), g)
        with pytest.raises(NonFiniteError) as info:
            integrate(u, StepperConfig(0.5, 2.0, 0.1), spec, validate_flux=False, fixed_dt=1e-3)
        assert info.value.t == 0.0

    def test_rejects_invalid_flux(self):
        from fracburgers.errors import GrowthError
        from fracburgers.flux import cosh_capped

        with pytest.raises(GrowthError):
            integrate(sine(64), StepperConfig(0.05, 2.0, 0.1), cosh_capped())

    def test_determinism(self):
        cfg = StepperConfig(0.01, 2.0, 0.3)
        u0 = initial_field(Grid(256), "default")
        a = integrate(u0, cfg, burgers()).final_state.field.coeffs
        b = integrate(u0, cfg, burgers()).final_state.field.coeffs
        np.testing.assert_array_equal(a, b)

    def test_resume_bit_exact(self):
        cfg = StepperConfig(0.01, 2.0, 0.3)
        u0 = initial_field(Grid(256), "default")
        times = [0.05, 0.1, 0.2]
        full = integrate(u0, cfg, burgers(), MonitorSet(sample_times=times, p_values=()))
        half = integrate(u0, StepperConfig(0.01, 2.0, 0.1), burgers(), MonitorSet(sample_times=times, p_values=()))
        rest = integrate(u0, cfg, burgers(), MonitorSet(sample_times=times, p_values=()), initial_state=half.final_state)
        np.testing.assert_array_equal(full.final_state.field.coeffs, rest.final_state.field.coeffs)
        assert rest.final_state.step_count == full.final_state.step_count


class TestTrajectoryInvariants:
    @pytest.fixture(scope="class")
    @staticmethod
    def run():
        g = Grid(1024)
        u0 = initial_field(g, "default")
        mon = MonitorSet(sample_times=np.geomspace(1e-3, 0.5, 60), p_values=(), keep_fields=True)
        return integrate(u0, StepperConfig(0.005, 2.0, 0.5), burgers(), mon)

    def test_energy_budget(self, run):
        assert max(abs(r.budget_residual) for r in run.records) < 1e-4

    def test_zero_mode(self, run):
        assert all(r.coeffs[0] == 0 for r in run.records)

    def test_maximum_principle(self, run):
        assert max(r.maxprin_margin for r in run.records) <= 1.05

    def test_sup_and_w11(self, run):
        assert max(r.supnorm_margin for r in run.records) <= 1.05
        assert max(r.w11_margin for r in run.records) <= 1.05
