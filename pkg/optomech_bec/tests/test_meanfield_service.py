import math
import unittest

import numpy as np

from optomech_bec.exceptions import ConfigError, NumericalError, StabilityGuardError
from optomech_bec.models import MeanFieldState, SystemParams, derive_params
from optomech_bec.services import config_service
from optomech_bec.services.meanfield_service import (
    MeanFieldModel,
    TrajectoryConfig,
    adiabatic_field,
    check_step_stability,
    dominant_frequency,
    effective_frequencies,
    integrate,
    relaxation_time,
    rhs_adiabatic,
    rhs_full,
)
from optomech_bec.services.steadystate_service import find_branches


def linear_cavity_params():
    # membrane and condensate decoupled, the field obeys a linear ODE
    return SystemParams(
        kappa=1.0, omega_m=0.01, gamma_m=1e-4, gamma_c=1e-3, xi1=0.0, xi2=0.0,
        eta=10.0, delta_c=5.0, omega_r=0.003, omega_sw=0.0015, n_atoms=1e5,
        u0=0.0, temperature=1e-7,
    )


class TestMeanFieldService(unittest.TestCase):

    def setUp(self):
        self.params = config_service.load_config()
        self.scaled = self.params.scaled()
        self.derived = derive_params(self.scaled)

    def _final_error(self, params, dt):
        cfg = TrajectoryConfig(model='full', t_end=2.0, dt=dt)
        trajectory = integrate(params, derive_params(params), cfg)
        t = trajectory.times[-1]
        rate = complex(params.kappa, params.delta_c)
        exact = -params.eta / rate * (1.0 - np.exp(-rate * t))
        return abs(trajectory.states[-1].alpha - exact)

    def test_zero_drive(self):
        """Test a cavity without pump stays empty"""
        params = self.scaled.replace(eta=0.0)
        np.testing.assert_array_equal(rhs_full(params, self.derived, MeanFieldState()), np.zeros(6))
        cfg = TrajectoryConfig(model='adiabatic', t_end=50.0 / self.params.kappa, dt=1.0 / self.params.kappa)
        trajectory = integrate(params, self.derived, cfg)
        self.assertTrue(np.all(trajectory.as_array() == 0.0))
        self.assertTrue(np.all(trajectory.photon_numbers == 0.0))

    def test_rk4_fourth_order(self):
        """Test RK4 global error falls with the fourth power of the step"""
        params = linear_cavity_params()
        errors = [self._final_error(params, dt) for dt in (0.05, 0.025, 0.0125)]
        for coarse, fine in zip(errors, errors[1:]):
            slope = math.log2(coarse / fine)
            self.assertGreater(slope, 3.7)
            self.assertLess(slope, 4.3)

    def test_richardson_ratio_coupled(self):
        """Test step-halving differences shrink by about 16 on the coupled system"""
        finals = []
        for dt_kappa_t in (0.002, 0.001, 0.0005):
            cfg = TrajectoryConfig(model='full', t_end=2.0 / self.params.kappa, dt=dt_kappa_t / self.params.kappa)
            finals.append(integrate(self.scaled, self.derived, cfg).states[-1].as_array())
        ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
        self.assertGreater(ratio, 12.0)
        self.assertLess(ratio, 20.0)

    def test_steady_states_are_fixed_points(self):
        """Test rhs_full vanishes at stable stationary solutions"""
        checked = 0
        for ratio in (0.0, 0.01):
            params = self.scaled.replace(xi2=ratio * self.scaled.xi1)
            for delta in (30.0, 80.0, 200.0):
                for point in find_branches(params, self.derived, delta):
                    if not point.stable:
                        continue
                    p_at = params.replace(delta_c=delta)
                    residual = np.max(np.abs(rhs_full(p_at, self.derived, point.state)))
                    self.assertLessEqual(residual, 1e-9)
                    checked += 1
        self.assertGreater(checked, 0)

    def test_adiabatic_field_identity(self):
        """Test the slaved field zeroes the optical equations"""
        q, big_q = 12.5, -30.0
        alpha = adiabatic_field(self.scaled, self.derived, q, big_q)
        state = MeanFieldState(alpha_re=alpha.real, alpha_im=alpha.imag, q_bar=q, Q_bar=big_q)
        deriv = rhs_full(self.scaled, self.derived, state)
        self.assertLess(abs(deriv[0]), 1e-12 * self.scaled.eta)
        self.assertLess(abs(deriv[1]), 1e-12 * self.scaled.eta)

        reduced = rhs_adiabatic(self.scaled, self.derived, [q, 0.0, big_q, 0.0])
        self.assertEqual(reduced[0], 0.0)
        self.assertEqual(reduced[2], 0.0)

    def test_effective_frequencies(self):
        """Test effective frequencies and the softening flag"""
        plain = effective_frequencies(self.scaled, self.derived, 10.0)
        self.assertAlmostEqual(plain.omega_m_eff, self.scaled.omega_m, places=15)
        self.assertFalse(plain.softening_instability)
        self.assertAlmostEqual(
            plain.omega_c_eff, math.hypot(self.derived.omega_c, self.scaled.gamma_c), places=15,
        )

        stiff = effective_frequencies(self.scaled.replace(xi2=0.01 * self.scaled.xi1), self.derived, 10.0)
        self.assertGreater(stiff.omega_m_eff, plain.omega_m_eff)

        soft = self.scaled.replace(xi2=-0.005 * self.scaled.xi1)
        with self.assertLogs('optomech_bec', level='WARNING'):
            result = effective_frequencies(soft, self.derived, 100.0)
        self.assertTrue(result.softening_instability)
        self.assertTrue(math.isnan(result.omega_m_eff))
        self.assertLess(result.omega_m_eff_squared, 0.0)

    def test_frequency_ordering(self):
        """Test positive xi2 raises and negative xi2 lowers the oscillation frequency"""
        frequencies = {}
        for ratio in (0.003, 0.0, -0.003):
            params = self.scaled.replace(xi2=ratio * self.scaled.xi1)
            cfg = TrajectoryConfig(
                model='adiabatic', t_end=0.5 / self.params.gamma_m, dt=1.0 / self.params.kappa,
            )
            trajectory = integrate(params, self.derived, cfg)
            frequencies[ratio] = dominant_frequency(trajectory.times, trajectory.q_bar)
        self.assertGreater(frequencies[0.003], frequencies[0.0])
        self.assertGreater(frequencies[0.0], frequencies[-0.003])

    def test_ordering_near_stationary_point(self):
        """Test xi2 orders the frequency and relaxation time of both q and Q after a small kick"""
        delta = 50.0
        frequencies, relaxation = {}, {}
        for ratio in (0.003, 0.0, -0.003):
            params = self.scaled.replace(xi2=ratio * self.scaled.xi1, delta_c=delta)
            point = find_branches(params, self.derived, delta)[-1]
            kick = 1e-3 * point.state.q_bar
            start = MeanFieldState(
                alpha_re=point.state.alpha_re, alpha_im=point.state.alpha_im,
                q_bar=point.state.q_bar + kick, p_bar=0.0,
                Q_bar=point.state.Q_bar, P_bar=point.state.P_bar,
            )
            cfg = TrajectoryConfig(
                model='adiabatic', t_end=3e4 / self.params.kappa, dt=2.0 / self.params.kappa,
                sample_stride=2, initial=start,
            )
            trajectory = integrate(params, self.derived, cfg)
            # the condensate-like mode has died out long before the analysed half
            frequencies[ratio] = (
                dominant_frequency(trajectory.times, trajectory.q_bar),
                dominant_frequency(trajectory.times, trajectory.Q_bar),
            )
            relaxation[ratio] = (
                relaxation_time(trajectory.times, trajectory.q_bar, baseline=point.state.q_bar),
                relaxation_time(trajectory.times, trajectory.Q_bar, baseline=point.state.Q_bar),
            )
            tau_q, tau_big_q = relaxation[ratio]
            self.assertAlmostEqual(tau_big_q / tau_q, 1.0, delta=0.1)
        for component in (0, 1):
            self.assertGreater(frequencies[0.003][component], frequencies[0.0][component])
            self.assertGreater(frequencies[0.0][component], frequencies[-0.003][component])
            self.assertGreater(relaxation[0.003][component], relaxation[0.0][component])
            self.assertGreater(relaxation[0.0][component], relaxation[-0.003][component])

    def test_relaxation_time_of_damped_sine(self):
        """Test the envelope fit on clean damped and growing signals"""
        times = np.linspace(0.0, 60.0, 6001)
        values = 2.0 + 0.5 * np.exp(-0.05 * times) * np.cos(1.7 * times)
        self.assertAlmostEqual(relaxation_time(times, values, baseline=2.0), 20.0, delta=0.2)
        with self.assertRaises(NumericalError):
            relaxation_time(times, np.exp(0.01 * times) * np.sin(1.7 * times))
        with self.assertRaises(NumericalError):
            relaxation_time(times, np.full_like(times, 2.0), baseline=2.0)

    def test_dominant_frequency_of_sine(self):
        """Test zero-crossing frequency estimate on a clean signal"""
        times = np.linspace(0.0, 100.0, 20001)
        values = 3.0 + 0.01 * times + np.sin(2.5 * times)
        self.assertAlmostEqual(dominant_frequency(times, values), 2.5, delta=5e-3)

    def test_stability_guard(self):
        """Test the explicit-step guard rejects oversized steps"""
        with self.assertRaises(StabilityGuardError):
            check_step_stability(self.scaled, self.derived, MeanFieldState(), 1.0)
        cfg = TrajectoryConfig(model='full', t_end=10.0 / self.params.kappa, dt=1.0 / self.params.kappa)
        with self.assertRaises(StabilityGuardError):
            integrate(self.scaled, self.derived, cfg)
        self.assertLess(check_step_stability(self.scaled, self.derived, MeanFieldState(), 0.01), 2.5)

    def test_full_and_adiabatic_agree_near_steady_state(self):
        """Test both models follow the same small displacement from a stationary point"""
        delta = 30.0
        params = self.scaled.replace(delta_c=delta)
        point = find_branches(params, self.derived, delta)[0]
        kick = 1e-4 * point.state.q_bar
        start = MeanFieldState(
            alpha_re=point.state.alpha_re, alpha_im=point.state.alpha_im,
            q_bar=point.state.q_bar + kick, p_bar=0.0,
            Q_bar=point.state.Q_bar, P_bar=point.state.P_bar,
        )
        finals = {}
        for model in ('full', 'adiabatic'):
            cfg = TrajectoryConfig(
                model=model, t_end=50.0 / self.params.kappa, dt=0.01 / self.params.kappa, initial=start,
            )
            finals[model] = integrate(params, self.derived, cfg).states[-1]
        offset = finals['full'].q_bar - finals['adiabatic'].q_bar
        self.assertLess(abs(offset), 0.1 * abs(kick))

    def test_sampling(self):
        """Test stride sampling keeps the last step"""
        cfg = TrajectoryConfig(
            model='adiabatic', t_end=10.0 / self.params.kappa, dt=1.0 / self.params.kappa, sample_stride=3,
        )
        trajectory = integrate(self.scaled, self.derived, cfg)
        self.assertEqual(len(trajectory), 5)
        self.assertAlmostEqual(trajectory.times[-1], 10.0 / self.params.kappa, delta=1e-18)
        np.testing.assert_allclose(trajectory.gamma_m_times, trajectory.times * self.params.gamma_m)

    def test_trajectory_config_validation(self):
        """Test invalid trajectory settings raise ConfigError"""
        with self.assertRaises(ConfigError):
            TrajectoryConfig(model='full', t_end=1.0, dt=0.0)
        with self.assertRaises(ConfigError):
            TrajectoryConfig(model='full', t_end=0.1, dt=1.0)
        with self.assertRaises(ConfigError):
            TrajectoryConfig(model='full', t_end=1.0, dt=0.1, sample_stride=0)
        with self.assertRaises(ConfigError) as ctx:
            TrajectoryConfig(model='quantum', t_end=1.0, dt=0.1)
        self.assertEqual(ctx.exception.key, 'model')
        self.assertIs(TrajectoryConfig(model='full', t_end=1.0, dt=0.1).model, MeanFieldModel.FULL)


if __name__ == '__main__':
    unittest.main()
