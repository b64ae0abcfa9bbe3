import math
import unittest

import numpy as np
from scipy.integrate import simpson

from src.dwell import (
    DwellMatrix,
    WavePacket,
    dwell_eigensystem,
    dwell_matrix,
    dwell_time,
    moment_matrix,
    spectral_expectation,
    squared_matrix,
    wavepacket_dwell,
)
from src.larmor import complex_times
from src.potential import UnitSystem, make_barrier
from src.scattering import interior_wavefunctions, solve_amplitudes


K0 = 3.0 * math.pi
V0 = K0**2


def eigen_residual(dwell: DwellMatrix) -> float:
    eigensystem = dwell_eigensystem(dwell)
    matrix = dwell.matrix
    return max(
        float(np.linalg.norm(matrix @ eigensystem.state_plus - eigensystem.lambda_plus * eigensystem.state_plus)),
        float(np.linalg.norm(matrix @ eigensystem.state_minus - eigensystem.lambda_minus * eigensystem.state_minus)),
    )


class DwellMatrixTest(unittest.TestCase):
    def test_free_particle_dwell_time(self):
        barrier = make_barrier("square", {"v0": 0.0, "d": 1.0})
        dwell = dwell_matrix(interior_wavefunctions(barrier, 1.0), barrier.units)

        self.assertAlmostEqual(dwell.c_ll, 0.5, places=10)
        self.assertAlmostEqual(dwell.c_rr, 0.5, places=10)
        self.assertAlmostEqual(dwell_time(barrier, 1.0), 0.5, places=10)

    def test_square_barrier_matches_larmor_times(self):
        barrier = make_barrier("square", {"v0": V0, "d": 1.0})
        for fraction in (0.3, 0.5, 0.8):
            k = fraction * K0
            dwell = dwell_matrix(interior_wavefunctions(barrier, k), barrier.units)
            amplitudes = solve_amplitudes(barrier, k)
            times = complex_times(barrier, k)
            scale = max(abs(dwell.c_ll), abs(dwell.c_rl))

            self.assertLess(abs(dwell.c_rl.imag), 1e-8 * scale)
            self.assertLess(abs(dwell.c_rl.real - math.sqrt(amplitudes.T / amplitudes.R) * times.tau_zt), 1e-5 * scale)
            self.assertLess(abs(dwell.c_ll - times.tau_yt), 1e-5 * scale)

    def test_symmetric_barrier_has_equal_diagonal(self):
        barrier = make_barrier("quadratic", {"v0": V0, "a": V0, "d": 1.0})
        dwell = dwell_matrix(interior_wavefunctions(barrier, 0.5 * K0), barrier.units)

        self.assertLess(abs(dwell.c_ll - dwell.c_rr), 1e-10 * dwell.c_ll)

    def test_too_coarse_grid_is_rejected(self):
        barrier = make_barrier("square", {"v0": V0})
        wave = interior_wavefunctions(barrier, 0.5 * K0, slices=1)

        with self.assertRaisesRegex(ValueError, "too coarse"):
            dwell_matrix(wave, UnitSystem())


class DwellEigensystemTest(unittest.TestCase):
    def test_diagonal_case(self):
        eigensystem = dwell_eigensystem(DwellMatrix(k=1.0, c_ll=2.0, c_rr=1.0, c_rl=0j))

        self.assertEqual(eigensystem.lambda_plus, 2.0)
        self.assertEqual(eigensystem.lambda_minus, 1.0)
        np.testing.assert_allclose(np.abs(eigensystem.state_plus), [1.0, 0.0])
        np.testing.assert_allclose(np.abs(eigensystem.state_minus), [0.0, 1.0])

    def test_symmetric_barrier_eigenvalues(self):
        dwell = DwellMatrix(k=1.0, c_ll=0.3, c_rr=0.3, c_rl=0.12 + 0j)
        eigensystem = dwell_eigensystem(dwell)

        self.assertAlmostEqual(eigensystem.lambda_plus, 0.42)
        self.assertAlmostEqual(eigensystem.lambda_minus, 0.18)
        self.assertLess(eigen_residual(dwell), 1e-12)

    def test_random_hermitian_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            c_ll, c_rr = rng.uniform(0.0, 2.0, size=2)
            c_rl = complex(rng.normal(), rng.normal())
            dwell = DwellMatrix(k=1.0, c_ll=float(c_ll), c_rr=float(c_rr), c_rl=c_rl)
            eigensystem = dwell_eigensystem(dwell)

            self.assertLess(eigen_residual(dwell), 1e-10)
            self.assertAlmostEqual(abs(np.vdot(eigensystem.state_plus, eigensystem.state_minus)), 0.0, places=12)
            self.assertAlmostEqual(np.linalg.norm(eigensystem.state_plus), 1.0, places=12)


    def test_eigenvalues_are_non_negative_across_the_grid(self):
        barriers = [
            make_barrier("square", {"v0": V0}),
            make_barrier("quadratic", {"v0": V0, "a": V0}),
            make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0}),
        ]
        for barrier in barriers:
            for fraction in np.linspace(0.05, 0.95, 19):
                dwell = dwell_matrix(interior_wavefunctions(barrier, fraction * K0), barrier.units)
                eigensystem = dwell_eigensystem(dwell)

                self.assertGreaterEqual(eigensystem.lambda_minus, -1e-10 * eigensystem.lambda_plus)
                self.assertGreater(eigensystem.lambda_plus, 0.0)


class SquaredMatrixTest(unittest.TestCase):
    def test_diagonal_squares(self):
        squared = squared_matrix(DwellMatrix(k=1.0, c_ll=2.0, c_rr=3.0, c_rl=0j))

        np.testing.assert_allclose(squared, np.diag([4.0, 9.0]))

    def test_matches_matrix_product(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            dwell = DwellMatrix(
                k=1.0,
                c_ll=float(rng.uniform(0.0, 1.0)),
                c_rr=float(rng.uniform(0.0, 1.0)),
                c_rl=complex(rng.normal(), rng.normal()),
            )
            squared = squared_matrix(dwell)
            self.assertLess(float(np.max(np.abs(squared - dwell.matrix @ dwell.matrix))), 1e-12)
            np.testing.assert_allclose(squared, moment_matrix(dwell, 2), atol=1e-12)

    def test_eigenvalues_are_squared(self):
        dwell = DwellMatrix(k=1.0, c_ll=0.4, c_rr=0.1, c_rl=0.2 - 0.05j)
        eigensystem = dwell_eigensystem(dwell)
        eigenvalues = np.sort(np.linalg.eigvalsh(squared_matrix(dwell)))
        expected = np.sort([eigensystem.lambda_plus**2, eigensystem.lambda_minus**2])

        np.testing.assert_allclose(eigenvalues, expected, atol=1e-12)

    def test_spectral_expectation_of_left_state(self):
        dwell = DwellMatrix(k=1.0, c_ll=0.4, c_rr=0.1, c_rl=0.2 - 0.05j)
        eigensystem = dwell_eigensystem(dwell)
        left = np.array([1.0, 0.0], dtype=complex)

        self.assertAlmostEqual(spectral_expectation(eigensystem, left, power=1), 0.4, places=12)
        self.assertAlmostEqual(spectral_expectation(eigensystem, left, power=2), 0.16 + 0.0425, places=12)

    def test_moment_power_validation(self):
        dwell = DwellMatrix(k=1.0, c_ll=0.4, c_rr=0.1, c_rl=0.2j)

        np.testing.assert_allclose(moment_matrix(dwell, 0), np.eye(2))
        with self.assertRaisesRegex(ValueError, "non-negative"):
            moment_matrix(dwell, -1)


class WavePacketTest(unittest.TestCase):
    def test_free_particle_packet(self):
        barrier = make_barrier("square", {"v0": 0.0, "d": 1.0})
        packet = WavePacket(k_center=2.0, k_sigma=0.1)

        self.assertAlmostEqual(wavepacket_dwell(barrier, packet, slices=64), 0.2503, places=4)

    def test_narrow_packet_limit(self):
        barrier = make_barrier("square", {"v0": V0, "d": 1.0})
        k_center = 0.5 * K0
        packet = WavePacket(k_center=k_center, k_sigma=1e-3 * k_center)
        expected = dwell_time(barrier, k_center, slices=400)

        self.assertLess(abs(wavepacket_dwell(barrier, packet, slices=400) - expected), 1e-3 * expected)

    def test_packet_normalization(self):
        packet = WavePacket(k_center=2.0, k_sigma=0.1)
        ks = np.linspace(1.0, 3.0, 4001)

        self.assertAlmostEqual(float(simpson(packet.density(ks), x=ks)), 1.0, places=8)

    def test_packet_reaching_negative_k_is_rejected(self):
        barrier = make_barrier("square", {"v0": 0.0, "d": 1.0})

        with self.assertRaisesRegex(ValueError, "extends below k=0"):
            wavepacket_dwell(barrier, WavePacket(k_center=0.1, k_sigma=0.1))

    def test_invalid_width(self):
        with self.assertRaisesRegex(ValueError, "k_sigma must be positive"):
            WavePacket(k_center=1.0, k_sigma=0.0)


if __name__ == "__main__":
    unittest.main()
