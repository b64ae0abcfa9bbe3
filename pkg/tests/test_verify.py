import math
import unittest

from src.potential import make_barrier
from src.scattering import amplitudes_from_values, solve_amplitudes
from src.spin_meter import postselection_overlaps
from src.sweep import build_config
from src.verify import (
    CONTEXTUAL_CHECKS,
    LARMOR_CHECKS,
    IdentityReport,
    identities_at_k,
    make_report,
    normalization_identity,
    orthogonality_identity,
    reciprocity_report,
    run_all_identities,
    summarize,
    unitarity_reports,
)


K0 = 3.0 * math.pi
V0 = K0**2
OMEGA = 1e-3 * V0
FIGURE_SPIN = postselection_overlaps(math.pi / 2.0 - math.pi / 8.0, math.pi / 4.0)


def failures(reports):
    return [(report.name, report.abs_residual, report.tolerance) for report in reports if not report.passed]


def by_name(reports):
    return {report.name: report for report in reports}


class ScatteringIdentitiesTest(unittest.TestCase):
    def test_unitarity_flags_tampered_amplitudes(self):
        amplitudes = solve_amplitudes(make_barrier("square", {"v0": V0}), 0.5 * K0)
        tampered = amplitudes_from_values(amplitudes.k, amplitudes.t, 1.1 * amplitudes.r_left, amplitudes.r_right)

        self.assertTrue(all(report.passed for report in unitarity_reports(amplitudes)))
        self.assertFalse(by_name(unitarity_reports(tampered))["unitarity_norm"].passed)

    def test_free_particle_overlaps(self):
        barrier = make_barrier("square", {"v0": 0.0, "d": 1.0})

        self.assertLess(normalization_identity(barrier, 1.0).abs_residual, 1e-12)
        self.assertLess(orthogonality_identity(barrier, 1.0).abs_residual, 1e-12)

    def test_overlap_identities_hold_below_the_barrier_top(self):
        barriers = [
            make_barrier("square", {"v0": V0}),
            make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0}),
        ]
        for barrier in barriers:
            for fraction in (0.5, 0.7):
                k = fraction * K0
                reports = [normalization_identity(barrier, k), orthogonality_identity(barrier, k)]

                self.assertEqual(failures(reports), [])

    def test_reciprocity_on_asymmetric_barrier(self):
        barrier = make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0})
        amplitudes = solve_amplitudes(barrier, 0.6 * K0)

        self.assertTrue(reciprocity_report(barrier, amplitudes, slices=2000).passed)


class IdentitiesAtKTest(unittest.TestCase):
    def test_square_barrier_passes_every_identity(self):
        barrier = make_barrier("square", {"v0": V0})
        for index, fraction in enumerate((0.5, 0.8)):
            reports = identities_at_k((index, fraction * K0), barrier, FIGURE_SPIN, OMEGA, None, 2000, 0)
            names = by_name(reports)

            self.assertEqual(failures(reports), [])
            self.assertIn("square_alpha0_vanishes", names)
            self.assertIn("context_invariance", names)
            self.assertFalse(names["steinberg_relation"].skipped)

    def test_asymmetric_barrier_skips_steinberg(self):
        barrier = make_barrier("trapezoid", {"v0": V0, "epsilon": 0.5 * V0})
        names = by_name(identities_at_k((0, 0.6 * K0), barrier, FIGURE_SPIN, OMEGA, None, 2000, 0))

        self.assertTrue(names["steinberg_relation"].skipped)
        self.assertEqual(names["steinberg_relation"].reason, "asymmetric barrier")

    def test_singular_context_skips_contextual_checks(self):
        barrier = make_barrier("square", {"v0": V0})
        spin = postselection_overlaps(math.pi / 2.0, math.pi / 2.0)
        names = by_name(identities_at_k((0, 0.5 * K0), barrier, spin, OMEGA, None, 2000, 0))

        for name in CONTEXTUAL_CHECKS:
            self.assertTrue(names[name].skipped)
            self.assertIn("x-y", names[name].reason)
        self.assertFalse(names["dwell_larmor_diagonal"].skipped)
        self.assertEqual(failures(names.values()), [])

    def test_free_particle_skips_larmor_checks(self):
        barrier = make_barrier("square", {"v0": 0.0, "d": 1.0})
        names = by_name(identities_at_k((0, 1.0), barrier, FIGURE_SPIN, 1e-3, None, 2000, 0))

        for name in LARMOR_CHECKS + CONTEXTUAL_CHECKS:
            self.assertTrue(names[name].skipped)
        self.assertTrue(names["unitarity_norm"].passed)
        self.assertFalse(names["normalization_identity"].skipped)


class RunAllIdentitiesTest(unittest.TestCase):
    def test_summary_counts(self):
        barrier = make_barrier("square", {"v0": V0})
        ks = [0.4 * K0, 0.6 * K0]
        reports = run_all_identities(barrier, ks, FIGURE_SPIN, OMEGA, seed=3, workers=1)
        summary = summarize(reports)

        self.assertEqual(summary["failed"], 0)
        self.assertEqual(summary["skipped"], 0)
        self.assertEqual(summary["passed"], len(reports))
        self.assertEqual(sorted({report.k for report in reports}), ks)

    def test_deep_tunneling_points_pass_steinberg_relation(self):
        barrier = make_barrier("square", {"v0": V0})
        ks = [fraction * K0 for fraction in (0.05, 0.055, 0.06, 0.065, 0.07)]
        reports = run_all_identities(barrier, ks, FIGURE_SPIN, OMEGA, workers=1)

        self.assertEqual(failures(reports), [])
        self.assertEqual(sum(report.name == "steinberg_relation" for report in reports), len(ks))

    def test_default_configuration_passes(self):
        config = build_config()
        reports = run_all_identities(
            config.barrier,
            config.ks,
            config.spin,
            config.omega,
            probe_omega=config.probe_omega,
            slices=config.slices,
            seed=config.seed,
        )
        summary = summarize(reports)

        self.assertEqual(failures(reports), [])
        self.assertEqual(summary["skipped"], 0)
        self.assertEqual(len({report.k for report in reports}), 181)

    def test_summarize_counts_skips_separately(self):
        reports = [
            make_report("a", 1.0, 1.0, 1.0, 1e-9),
            make_report("b", 1.0, 1.0, 2.0, 1e-9),
            IdentityReport("c", 1.0, 0j, 0j, 0.0, 0.0, True, skipped=True, reason="n/a"),
        ]

        self.assertEqual(summarize(reports), {"passed": 1, "failed": 1, "skipped": 1})


class IdentityReportTest(unittest.TestCase):
    def test_to_dict(self):
        report = make_report("unitarity_norm", 2.0, [1.0, 2.0], [1.0, 2.5], 1e-8)

        self.assertEqual(
            report.to_dict(),
            {"name": "unitarity_norm", "k": 2.0, "residual": 0.5, "tolerance": 1e-8, "passed": False, "skipped": False},
        )

    def test_skipped_report_keeps_reason(self):
        report = IdentityReport("sum_rule", 1.0, 0j, 0j, 0.0, 0.0, True, skipped=True, reason="singular context")

        self.assertEqual(report.to_dict()["reason"], "singular context")


if __name__ == "__main__":
    unittest.main()
