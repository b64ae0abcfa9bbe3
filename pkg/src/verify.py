import math
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from src.clock import ClockPoint
from src.contextual import (
    ContextualValues,
    SingularContext,
    detect_singular_context,
    explicit_transformed_dwell,
    solve_cvs_linear,
    transformed_operators,
)
from src.dwell import off_diagonal_pair, spectral_expectation
from src.estimators import EstimatorError, Side, disturbance, expectation_via_cvs
from src.larmor import LarmorError
from src.potential import BarrierKind, BarrierSpec, is_symmetric, mirrored
from src.scattering import (
    DEFAULT_SLICES,
    ScatteringAmplitudes,
    ScatteringError,
    check_unitarity,
    interior_wavefunctions,
    solve_amplitudes,
)
from src.spin_meter import SpinPostSelection, measurement_operators, postselection_overlaps, povm_elements
from src.workers import ordered_map


UNITARITY_TOLERANCE = 1e-8
RECIPROCITY_TOLERANCE = 1e-10
HERMITICITY_TOLERANCE = 1e-10
OVERLAP_TOLERANCE = 1e-6
LARMOR_TOLERANCE = 1e-5
CONJUGATION_TOLERANCE = 1e-6
ALPHA0_TOLERANCE = 1e-8
ROUTE_TOLERANCE = 1e-8
ESTIMATOR_TOLERANCE = 1e-9
SECOND_MOMENT_TOLERANCE = 1e-6
DERIVATIVE_STEP = 1e-5
CONTEXT_DRAWS = 50
CONTEXT_MARGIN = 0.1


@dataclass(frozen=True)
class IdentityReport:
    name: str
    k: float
    lhs: complex
    rhs: complex
    abs_residual: float
    tolerance: float
    passed: bool
    skipped: bool = False
    reason: str = ""

    def to_dict(self) -> Dict[str, object]:
        payload = {
            "name": self.name,
            "k": self.k,
            "residual": self.abs_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "skipped": self.skipped,
        }
        if self.reason:
            payload["reason"] = self.reason
        return payload


def make_report(name: str, k: float, lhs, rhs, tolerance: float) -> IdentityReport:
    lhs_array = np.atleast_1d(np.asarray(lhs, dtype=complex))
    rhs_array = np.atleast_1d(np.asarray(rhs, dtype=complex))
    residual = float(np.max(np.abs(lhs_array - rhs_array)))
    return IdentityReport(
        name=name,
        k=k,
        lhs=complex(lhs_array.flat[0]),
        rhs=complex(rhs_array.flat[0]),
        abs_residual=residual,
        tolerance=tolerance,
        passed=bool(residual <= tolerance),
    )


def skipped_report(name: str, k: float, reason: str) -> IdentityReport:
    return IdentityReport(
        name=name,
        k=k,
        lhs=0j,
        rhs=0j,
        abs_residual=0.0,
        tolerance=0.0,
        passed=True,
        skipped=True,
        reason=reason,
    )


def amplitude_derivatives(
    barrier: BarrierSpec,
    k: float,
    slices: int = DEFAULT_SLICES,
) -> Tuple[complex, complex, complex]:
    """∂_k of (t, r^l, r^r) by the 5-point central stencil with step 1e-5·k."""
    step = DERIVATIVE_STEP * k

    def values(offset: float) -> np.ndarray:
        amplitudes = solve_amplitudes(barrier, k + offset, slices=slices)
        return np.array([amplitudes.t, amplitudes.r_left, amplitudes.r_right])

    derivative = (
        -values(2.0 * step) + 8.0 * values(step) - 8.0 * values(-step) + values(-2.0 * step)
    ) / (12.0 * step)
    return complex(derivative[0]), complex(derivative[1]), complex(derivative[2])


def _overlap_integral(first: np.ndarray, second: np.ndarray, grid: np.ndarray) -> complex:
    product = np.conj(first) * second / (2.0 * math.pi)
    return complex(simpson(product.real, x=grid), simpson(product.imag, x=grid))


def normalization_identity(barrier: BarrierSpec, k: float, slices: int = DEFAULT_SLICES) -> IdentityReport:
    """∫|φ_l|² over the barrier against its boundary form, at 1/√(2π) normalization."""
    wave = interior_wavefunctions(barrier, k, slices=slices)
    amplitudes = solve_amplitudes(barrier, k, slices=slices)
    dt, dr_left, _ = amplitude_derivatives(barrier, k, slices)
    a = barrier.half_width
    t, r_left = amplitudes.t, amplitudes.r_left

    lhs = _overlap_integral(wave.phi_l, wave.phi_l, wave.grid)
    rhs = (
        2.0 * a
        - 1j * (np.conj(t) * dt + np.conj(r_left) * dr_left)
        + 1j / (2.0 * k) * (np.conj(r_left) * np.exp(-2j * k * a) - r_left * np.exp(2j * k * a))
    ) / (2.0 * math.pi)
    return make_report("normalization_identity", k, lhs, rhs, OVERLAP_TOLERANCE)


def orthogonality_identity(barrier: BarrierSpec, k: float, slices: int = DEFAULT_SLICES) -> IdentityReport:
    wave = interior_wavefunctions(barrier, k, slices=slices)
    amplitudes = solve_amplitudes(barrier, k, slices=slices)
    dt, _, dr_right = amplitude_derivatives(barrier, k, slices)
    a = barrier.half_width
    t, r_left = amplitudes.t, amplitudes.r_left

    lhs = _overlap_integral(wave.phi_l, wave.phi_r, wave.grid)
    rhs = -1j / (2.0 * math.pi) * (np.conj(r_left) * dt + np.conj(t) * dr_right) + 1j / (
        4.0 * math.pi * k
    ) * (np.conj(t) * np.exp(-2j * k * a) - t * np.exp(2j * k * a))
    return make_report("orthogonality_identity", k, lhs, rhs, OVERLAP_TOLERANCE)


def unitarity_reports(amplitudes: ScatteringAmplitudes) -> List[IdentityReport]:
    norm_residual, cross_residual = check_unitarity(amplitudes)
    return [
        make_report("unitarity_norm", amplitudes.k, norm_residual, 0.0, UNITARITY_TOLERANCE),
        make_report("unitarity_cross", amplitudes.k, cross_residual, 0.0, UNITARITY_TOLERANCE),
    ]


def reciprocity_report(barrier: BarrierSpec, amplitudes: ScatteringAmplitudes, slices: int) -> IdentityReport:
    """Left incidence on V(-x) must reproduce t and r^r of V(x)."""
    mirror = solve_amplitudes(mirrored(barrier), amplitudes.k, slices=slices)
    return make_report(
        "reciprocity",
        amplitudes.k,
        [mirror.t, mirror.r_left],
        [amplitudes.t, amplitudes.r_right],
        RECIPROCITY_TOLERANCE,
    )


def _time_scale(point: ClockPoint) -> float:
    dwell = point.dwell
    return max(abs(dwell.c_ll), abs(dwell.c_rr), abs(dwell.c_rl), 1e-300)


def _larmor_reports(point: ClockPoint) -> List[IdentityReport]:
    k = point.k
    amplitudes, dwell, times = point.amplitudes, point.dwell, point.times
    scale = _time_scale(point)
    reports = [
        make_report(
            "dwell_larmor_diagonal",
            k,
            dwell.c_ll,
            amplitudes.T * times.tau_yt + amplitudes.R * times.tau_yr_left,
            LARMOR_TOLERANCE * scale,
        ),
        make_report(
            "dwell_larmor_off_diagonal",
            k,
            dwell.c_rl,
            -1j * amplitudes.t * np.conj(amplitudes.r_right) * times.delta_tau,
            LARMOR_TOLERANCE * scale,
        ),
        make_report(
            "delta_tau_conjugation",
            k,
            times.tau_t - times.tau_r_left,
            np.conj(times.tau_t - times.tau_r_right),
            CONJUGATION_TOLERANCE * times.scale,
        ),
    ]
    if is_symmetric(point.barrier, point.slices):
        steinberg = point.steinberg
        reports.append(
            make_report(
                "steinberg_relation",
                k,
                steinberg,
                complex(times.tau_yt, -times.tau_zt),
                LARMOR_TOLERANCE * max(scale, times.scale),
            )
        )
        reports.append(make_report("steinberg_dwell", k, steinberg.real, dwell.c_ll, LARMOR_TOLERANCE * scale))
    else:
        reports.append(skipped_report("steinberg_relation", k, "asymmetric barrier"))
        reports.append(skipped_report("steinberg_dwell", k, "asymmetric barrier"))
    return reports


def _decomposition(cvs: ContextualValues, point: ClockPoint) -> np.ndarray:
    return sum(cvs.value(side, sign) * element for (side, sign), element in point.povm.items())


def _random_context_expectations(point: ClockPoint, rng: np.random.Generator) -> List[float]:
    values = []
    while len(values) < CONTEXT_DRAWS:
        theta = rng.uniform(CONTEXT_MARGIN, math.pi - CONTEXT_MARGIN)
        phi = rng.uniform(CONTEXT_MARGIN, 2.0 * math.pi - CONTEXT_MARGIN)
        spin = postselection_overlaps(theta, phi)
        if not detect_singular_context(spin, tolerance=1e-3).is_regular:
            continue
        transformed = transformed_operators(point.dwell, point.amplitudes, point.times, spin)
        cvs = solve_cvs_linear(transformed, spin, point.omega)
        povm = povm_elements(measurement_operators(point.amplitudes, point.times, spin), point.omega)
        values.append(expectation_via_cvs(cvs, povm, point.state))
    return values


def _contextual_reports(point: ClockPoint, rng: np.random.Generator) -> List[IdentityReport]:
    k = point.k
    scale = _time_scale(point)
    dwell, amplitudes = point.dwell, point.amplitudes
    cvs, closed = point.cvs, point.cvs_closed
    reports = []

    t11, t22, t12 = explicit_transformed_dwell(dwell, amplitudes)
    transformed = point.transformed
    reports.append(
        make_report(
            "transformed_dual_route",
            k,
            [t11, t22, t12],
            [transformed.t11, transformed.t22, transformed.t12],
            1e-10 * scale,
        )
    )

    reports.append(
        make_report(
            "cv_decomposition",
            k,
            _decomposition(cvs, point).ravel(),
            dwell.matrix.ravel(),
            max(ROUTE_TOLERANCE * np.linalg.norm(dwell.matrix), 10.0 * point.omega**2 * scale),
        )
    )

    linear_values = np.array([cvs.alpha_r_plus, cvs.alpha_r_minus, cvs.alpha_l_plus, cvs.alpha_l_minus])
    closed_values = np.array([closed.alpha_r_plus, closed.alpha_r_minus, closed.alpha_l_plus, closed.alpha_l_minus])
    reports.append(
        make_report(
            "cv_dual_route",
            k,
            closed_values,
            linear_values,
            ROUTE_TOLERANCE * max(np.max(np.abs(linear_values)), 1e-300),
        )
    )

    if point.barrier.kind == BarrierKind.SQUARE:
        pole = max(abs(cvs.alpha1_r), abs(cvs.alpha1_l)) / point.omega
        reports.append(make_report("square_alpha0_vanishes", k, [cvs.alpha0_r, cvs.alpha0_l], [0.0, 0.0], ALPHA0_TOLERANCE * pole))

    reports.append(make_report("expectation_identity", k, point.expectation, dwell.c_ll, ROUTE_TOLERANCE * scale))
    contexts = _random_context_expectations(point, rng)
    reports.append(
        make_report("context_invariance", k, contexts, [dwell.c_ll] * len(contexts), ROUTE_TOLERANCE * scale)
    )

    try:
        transmitted = point.conditioned
        reflected = point.conditioned_reflected
    except EstimatorError as exc:
        for name in ("sum_rule", "conditioned_routes", "disturbance_routes"):
            reports.append(skipped_report(name, k, str(exc)))
    else:
        reports.append(
            make_report(
                "sum_rule",
                k,
                amplitudes.T * transmitted.conditioned_avg + amplitudes.R * reflected.conditioned_avg,
                dwell.c_ll,
                ESTIMATOR_TOLERANCE * scale,
            )
        )
        reports.append(
            make_report(
                "conditioned_routes",
                k,
                transmitted.conditioned_avg,
                point.conditioned_closed.conditioned_avg,
                ESTIMATOR_TOLERANCE * max(scale, abs(transmitted.conditioned_avg)),
            )
        )
        direct = disturbance(point.operators, point.cvs, point.state, Side.TRANSMITTED)
        reports.append(
            make_report(
                "disturbance_routes",
                k,
                direct,
                transmitted.conditioned_avg - transmitted.weak_value.real,
                ESTIMATOR_TOLERANCE * max(scale, abs(transmitted.conditioned_avg)),
            )
        )

    reports.append(
        make_report(
            "second_moment_spectral",
            k,
            point.moments.second_moment,
            spectral_expectation(point.eigensystem, point.state.vector, power=2),
            SECOND_MOMENT_TOLERANCE * scale**2,
        )
    )
    return reports


LARMOR_CHECKS = ("dwell_larmor_diagonal", "dwell_larmor_off_diagonal", "delta_tau_conjugation", "steinberg_relation", "steinberg_dwell")
CONTEXTUAL_CHECKS = (
    "transformed_dual_route",
    "cv_decomposition",
    "cv_dual_route",
    "expectation_identity",
    "context_invariance",
    "sum_rule",
    "conditioned_routes",
    "disturbance_routes",
    "second_moment_spectral",
)


def identities_at_k(
    indexed_k: Tuple[int, float],
    barrier: BarrierSpec,
    spin: SpinPostSelection,
    omega: float,
    probe_omega: Optional[float],
    slices: int,
    seed: int,
) -> List[IdentityReport]:
    index, k = indexed_k
    rng = np.random.default_rng([seed, index])
    point = ClockPoint(barrier=barrier, k=k, spin=spin, omega=omega, probe_omega=probe_omega, slices=slices)

    try:
        reports = unitarity_reports(point.amplitudes)
        reports.append(reciprocity_report(barrier, point.amplitudes, slices))
        c_rl, c_lr = off_diagonal_pair(point.wave, barrier.units)
        reports.append(
            make_report("hermiticity", k, c_lr, np.conj(c_rl), HERMITICITY_TOLERANCE * _time_scale(point))
        )
        reports.append(normalization_identity(barrier, k, slices))
        reports.append(orthogonality_identity(barrier, k, slices))
    except ScatteringError as exc:
        return [skipped_report("scattering", k, f"numerical failure: {exc}")]

    try:
        reports.extend(_larmor_reports(point))
    except (LarmorError, ScatteringError, EstimatorError) as exc:
        reason = f"Larmor times undefined: {exc}"
        reports.extend(skipped_report(name, k, reason) for name in LARMOR_CHECKS + CONTEXTUAL_CHECKS)
        return reports

    try:
        reports.extend(_contextual_reports(point, rng))
    except SingularContext as exc:
        reports.extend(skipped_report(name, k, str(exc)) for name in CONTEXTUAL_CHECKS)
    return reports


def run_all_identities(
    barrier: BarrierSpec,
    ks: Sequence[float],
    spin: SpinPostSelection,
    omega: float,
    probe_omega: Optional[float] = None,
    slices: int = DEFAULT_SLICES,
    seed: int = 0,
    workers: Optional[int] = None,
) -> List[IdentityReport]:
    check = partial(
        identities_at_k,
        barrier=barrier,
        spin=spin,
        omega=omega,
        probe_omega=probe_omega,
        slices=slices,
        seed=seed,
    )
    per_k = ordered_map(check, list(enumerate(ks)), workers=workers)
    return [report for reports in per_k for report in reports]


def summarize(reports: Sequence[IdentityReport]) -> Dict[str, int]:
    return {
        "passed": sum(1 for report in reports if report.passed and not report.skipped),
        "failed": sum(1 for report in reports if not report.passed),
        "skipped": sum(1 for report in reports if report.skipped),
    }
