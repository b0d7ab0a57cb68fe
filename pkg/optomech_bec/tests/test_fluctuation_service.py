import math
import unittest

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from optomech_bec.exceptions import NoStationaryStateError, UnphysicalStateError
from optomech_bec.models import derive_params, diffusion_matrix, drift_matrix
from optomech_bec.services import config_service
from optomech_bec.services.fluctuation_service import (
    integrate_cm,
    logarithmic_negativity,
    observables_at,
    physicality_report,
    reduced_covariance,
    solve_lyapunov,
    squeezing_db,
    symplectic_eigenvalues,
)
from optomech_bec.services.steadystate_service import find_branches
from optomech_bec.tests import FIXTURES


def random_stable_system(rng, n, margin=0.5):
    a = rng.normal(size=(n, n))
    a -= (np.max(np.linalg.eigvals(a).real) + margin) * np.eye(n)
    b = rng.normal(size=(n, n))
    return a, b @ b.T


def two_mode_squeezed(r):
    c, s = math.cosh(2.0 * r), math.sinh(2.0 * r)
    z = np.diag([1.0, -1.0])
    return 0.5 * np.block([[c * np.eye(2), s * z], [s * z, c * np.eye(2)]])


class TestFluctuationService(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1234)

    def test_lyapunov_diagonal(self):
        """Test the covariance of independent damped modes"""
        cm = solve_lyapunov(-np.eye(4), 2.0 * np.eye(4))
        np.testing.assert_allclose(cm.v, np.eye(4), atol=1e-14)
        kappa = 3.0
        d = np.diag([1.0, 2.0, 3.0])
        np.testing.assert_allclose(solve_lyapunov(-kappa * np.eye(3), d).v, d / (2.0 * kappa), atol=1e-14)

    def test_lyapunov_random_residual(self):
        """Test the Lyapunov residual on random stable systems"""
        for _ in range(100):
            n = int(self.rng.integers(2, 7))
            a, d = random_stable_system(self.rng, n)
            cm = solve_lyapunov(a, d)
            self.assertLessEqual(cm.residual, 1e-8)
            np.testing.assert_array_equal(cm.v, cm.v.T)

    def test_lyapunov_linear_in_diffusion(self):
        """Test the stationary covariance is linear in D"""
        a, d1 = random_stable_system(self.rng, 6)
        _, d2 = random_stable_system(self.rng, 6)
        combined = solve_lyapunov(a, 2.0 * d1 + d2).v
        separate = 2.0 * solve_lyapunov(a, d1).v + solve_lyapunov(a, d2).v
        np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-12 * np.max(np.abs(combined)))

    def test_lyapunov_rejects_unstable(self):
        """Test no stationary covariance for an unstable drift matrix"""
        with self.assertRaises(NoStationaryStateError):
            solve_lyapunov(np.eye(2), np.eye(2))
        with self.assertRaises(NoStationaryStateError):
            integrate_cm(np.eye(2), np.eye(2), 10.0, 0.01)

    def test_integrate_cm_matches_solve(self):
        """Test the relaxed covariance agrees with the direct solve"""
        for _ in range(20):
            a, d = random_stable_system(self.rng, 4)
            dt = 0.05 / max(1.0, float(np.max(np.abs(np.linalg.eigvals(a)))))
            relaxed = integrate_cm(a, d, 400.0, dt).v
            direct = solve_lyapunov(a, d).v
            scale = float(np.max(np.abs(direct)))
            self.assertLessEqual(float(np.max(np.abs(relaxed - direct))), 1e-6 * scale)

    def test_integrate_cm_without_noise(self):
        """Test covariance decays to zero when D = 0"""
        a, _ = random_stable_system(self.rng, 3)
        dt = 0.05 / max(1.0, float(np.max(np.abs(np.linalg.eigvals(a)))))
        relaxed = integrate_cm(a, np.zeros((3, 3)), 400.0, dt).v
        self.assertLess(float(np.max(np.abs(relaxed))), 1e-7)
        np.testing.assert_array_equal(solve_lyapunov(a, np.zeros((3, 3))).v, np.zeros((3, 3)))

    def test_squeezing_db(self):
        """Test squeezing relative to the zero-point variance"""
        self.assertEqual(squeezing_db(0.5), 0.0)
        self.assertAlmostEqual(squeezing_db(0.25), 10.0 * math.log10(2.0), places=12)
        self.assertAlmostEqual(squeezing_db(0.05), 10.0, places=12)
        self.assertLess(squeezing_db(1.0), 0.0)
        with self.assertRaises(UnphysicalStateError):
            squeezing_db(0.0)
        with self.assertRaises(UnphysicalStateError):
            squeezing_db(-0.1)

    def test_negativity_two_mode_squeezed(self):
        """Test E_N = 2r for two-mode squeezed vacuum"""
        for r in (0.1, 0.5, 1.0):
            self.assertAlmostEqual(logarithmic_negativity(two_mode_squeezed(r)), 2.0 * r, delta=1e-9)
        self.assertEqual(logarithmic_negativity(0.5 * np.eye(4)), 0.0)

    def test_negativity_local_symplectic_invariance(self):
        """Test local symplectic maps leave E_N unchanged"""
        v = two_mode_squeezed(0.7)
        theta, squeeze = 0.4, 0.3
        rotation = np.array([[math.cos(theta), math.sin(theta)], [-math.sin(theta), math.cos(theta)]])
        local = np.block([
            [rotation @ np.diag([math.exp(squeeze), math.exp(-squeeze)]), np.zeros((2, 2))],
            [np.zeros((2, 2)), np.diag([math.exp(-2 * squeeze), math.exp(2 * squeeze)]) @ rotation.T],
        ])
        transformed = local @ v @ local.T
        self.assertAlmostEqual(logarithmic_negativity(transformed), 1.4, delta=1e-9)

    def test_symplectic_eigenvalues(self):
        """Test symplectic eigenvalues of pure and thermal states"""
        lower, upper = symplectic_eigenvalues(two_mode_squeezed(0.3))
        self.assertAlmostEqual(lower, 0.5, places=6)
        self.assertAlmostEqual(upper, 0.5, places=6)
        thermal = np.diag([1.5, 1.5, 2.5, 2.5])
        lower, upper = symplectic_eigenvalues(thermal)
        self.assertAlmostEqual(lower, 1.5, places=12)
        self.assertAlmostEqual(upper, 2.5, places=12)

    def test_reduced_covariance(self):
        """Test mode-pair selection"""
        v = np.arange(36.0).reshape(6, 6)
        reduced = reduced_covariance(v, ('optical', 'bogoliubov'))
        np.testing.assert_array_equal(reduced[0], [0.0, 1.0, 4.0, 5.0])
        np.testing.assert_array_equal(reduced_covariance(v[:4, :4]), v[:4, :4])
        with self.assertRaises(ValueError):
            reduced_covariance(v, ('optical', 'optical'))

    def test_physicality_report(self):
        """Test the uncertainty diagnostic on vacuum"""
        report = physicality_report(0.5 * np.eye(6))
        self.assertTrue(report.physical)
        self.assertAlmostEqual(report.minimum, 0.5, places=12)
        self.assertEqual(set(report.two_mode), {'optical-mechanical', 'optical-bogoliubov', 'mechanical-bogoliubov'})
        self.assertFalse(physicality_report(0.1 * np.eye(6)).physical)

    def test_decoupled_observables(self):
        """Test thermal variances when the modes do not couple"""
        params = config_service.load_config(FIXTURES / 'decoupled_config.json').scaled()
        derived = derive_params(params)
        points = find_branches(params, derived)
        self.assertEqual(len(points), 1)
        self.assertTrue(points[0].stable)
        observables = observables_at(params, derived, points[0])
        self.assertAlmostEqual(observables.sigma_q, derived.n_m + 0.5, places=6)
        self.assertAlmostEqual(observables.sigma_p, derived.n_m + 0.5, places=6)
        self.assertAlmostEqual(observables.sigma_Q, derived.n_c + 0.5, places=6)
        self.assertAlmostEqual(observables.sigma_P, derived.n_c + 0.5, places=6)
        self.assertAlmostEqual(observables.e_n, 0.0, places=9)

    def test_matches_independent_lyapunov_solver(self):
        """Test the Kronecker solve against scipy on a stiff reference-parameter point"""
        params = config_service.load_config().scaled()
        params = params.replace(xi2=0.01 * params.xi1, squeezing_enabled=True)
        derived = derive_params(params)
        stable = [
            (params.replace(delta_c=delta), pt)
            for delta in (100.0, 200.0, 300.0)
            for pt in find_branches(params, derived, delta) if pt.stable
        ]
        self.assertTrue(stable)
        for p_at, point in stable:
            a = drift_matrix(p_at, derived, point.state)
            d = diffusion_matrix(p_at, derived)
            ours = solve_lyapunov(a, d).v
            reference = solve_continuous_lyapunov(a, -d)
            scale = float(np.max(np.abs(reference)))
            self.assertLessEqual(float(np.max(np.abs(ours - reference))), 1e-6 * scale)

    def test_unstable_point_raises(self):
        """Test observables refuse an unstable stationary solution"""
        params = config_service.load_config().scaled()
        params = params.replace(xi2=-0.005 * params.xi1, delta_c=115.0)
        derived = derive_params(params)
        unstable = [pt for pt in find_branches(params, derived) if not pt.stable]
        self.assertTrue(unstable)
        with self.assertRaises(NoStationaryStateError):
            observables_at(params, derived, unstable[0])


if __name__ == '__main__':
    unittest.main()
