import math
import unittest

import numpy as np

from src.potential import (
    BarrierKind,
    UnitSystem,
    evaluate,
    is_symmetric,
    make_barrier,
    min_local_k0,
    mirrored,
    parse_barrier_kind,
)


K0 = 3.0 * math.pi
V0 = K0**2


class BarrierConstructionTest(unittest.TestCase):
    def test_square_barrier_reference_wavenumber(self):
        barrier = make_barrier("square", {"v0": V0, "d": 1.0})

        self.assertEqual(barrier.kind, BarrierKind.SQUARE)
        self.assertAlmostEqual(barrier.k0, K0, places=12)
        self.assertAlmostEqual(barrier.half_width, 0.5)

    def test_free_particle_is_zero_everywhere(self):
        barrier = make_barrier("square", {"v0": 0.0, "d": 1.0})
        positions = np.linspace(-2.0, 2.0, 41)

        self.assertTrue(np.all(evaluate(barrier, positions) == 0.0))
        self.assertEqual(barrier.k0, 0.0)

    def test_trapezoid_endpoints(self):
        barrier = make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0, "d": 1.0})

        self.assertAlmostEqual(evaluate(barrier, -0.5), V0)
        self.assertAlmostEqual(evaluate(barrier, 0.5), 1.5 * V0)

    def test_evaluate_inside_outside_and_shift(self):
        square = make_barrier("square", {"v0": 10.0, "d": 2.0})
        trapezoid = make_barrier("trapezoid", {"v0": 10.0, "epsilon": 4.0, "d": 2.0})

        self.assertEqual(evaluate(square, 0.0), 10.0)
        self.assertEqual(evaluate(square, 1.5, spin_shift=-0.01), 0.0)
        self.assertAlmostEqual(evaluate(square, 0.0, spin_shift=-0.01), 9.99)
        self.assertAlmostEqual(evaluate(trapezoid, 0.0), 12.0)

    def test_quadratic_profile(self):
        barrier = make_barrier("quadratic", {"v0": 2.0, "a": 8.0, "d": 1.0})

        self.assertAlmostEqual(evaluate(barrier, 0.25), 2.5)
        self.assertAlmostEqual(evaluate(barrier, -0.25), 2.5)

    def test_sampled_barrier_nearest_cell(self):
        barrier = make_barrier("sampled", {"samples": [[-0.5, 1.0], [0.0, 2.0], [0.5, 3.0]]})

        self.assertAlmostEqual(barrier.width, 1.0)
        self.assertAlmostEqual(barrier.v0, 1.0)
        self.assertEqual(evaluate(barrier, 0.1), 2.0)
        self.assertEqual(evaluate(barrier, 0.4), 3.0)
        self.assertEqual(evaluate(mirrored(barrier), -0.45), 3.0)

    def test_sampled_barrier_must_cover_support(self):
        with self.assertRaisesRegex(ValueError, "samples must cover"):
            make_barrier("sampled", {"samples": [[-0.2, 1.0], [0.2, 1.0]], "d": 1.0})

    def test_invalid_parameters(self):
        with self.assertRaisesRegex(ValueError, "d must be positive"):
            make_barrier("square", {"v0": 1.0, "d": 0.0})
        with self.assertRaisesRegex(ValueError, "v0 must be non-negative"):
            make_barrier("square", {"v0": -1.0, "d": 1.0})
        with self.assertRaisesRegex(ValueError, "non-negative"):
            make_barrier("trapezoid", {"v0": 1.0, "epsilon": -2.0, "d": 1.0})
        with self.assertRaisesRegex(ValueError, "hbar must be positive"):
            UnitSystem(hbar=0.0)


class BarrierKindTest(unittest.TestCase):
    def test_aliases(self):
        self.assertEqual(parse_barrier_kind("Box"), BarrierKind.SQUARE)
        self.assertEqual(parse_barrier_kind("parabolic"), BarrierKind.QUADRATIC_SYMMETRIC)
        self.assertEqual(parse_barrier_kind("trapezoidal"), BarrierKind.TRAPEZOID)
        self.assertEqual(parse_barrier_kind(BarrierKind.SAMPLED), BarrierKind.SAMPLED)

    def test_unknown_kind(self):
        with self.assertRaisesRegex(ValueError, "unknown barrier kind"):
            parse_barrier_kind("gaussian")


class BarrierGeometryTest(unittest.TestCase):
    def test_symmetry(self):
        self.assertTrue(is_symmetric(make_barrier("square", {"v0": V0})))
        self.assertTrue(is_symmetric(make_barrier("quadratic", {"v0": V0, "a": V0})))
        self.assertFalse(is_symmetric(make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0})))

    def test_mirrored_trapezoid_swaps_ends(self):
        barrier = make_barrier("trapezoid", {"v0": 10.0, "epsilon": 4.0, "d": 2.0})
        mirror = mirrored(barrier)

        for x in (-0.9, -0.3, 0.4, 1.0):
            self.assertAlmostEqual(evaluate(mirror, x), evaluate(barrier, -x))

    def test_min_local_k0(self):
        square = make_barrier("square", {"v0": V0})
        trapezoid = make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0})

        self.assertAlmostEqual(min_local_k0(square), K0, places=10)
        self.assertGreater(min_local_k0(trapezoid), K0)
        self.assertEqual(min_local_k0(make_barrier("square", {"v0": 0.0})), 0.0)


if __name__ == "__main__":
    unittest.main()
