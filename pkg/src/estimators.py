import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.integrate import simpson

from src.contextual import ContextualValues, TransformedOperators
from src.dwell import DwellMatrix
from src.larmor import ComplexTimes
from src.potential import UnitSystem
from src.scattering import InteriorWave, ScatteringAmplitudes
from src.spin_meter import (
    OUTCOMES,
    PROJECTORS,
    SIGNS,
    MeasurementOperators,
    ProbabilityOperators,
    SpinPostSelection,
    povm_elements,
)


NORM_TOLERANCE = 1e-12
MIN_PROBABILITY = 1e-12
MIN_TRANSMISSION = 1e-12
ROUTE_TOLERANCE = 1e-7
VARIANCE_TOLERANCE = 1e-8
SYMMETRY_TOLERANCE = 1e-8


class Side(str, Enum):
    """Post-selected detector side, named for a particle incident from the left."""

    TRANSMITTED = "transmitted"
    REFLECTED = "reflected"

    @property
    def outcome(self) -> str:
        return "r" if self is Side.TRANSMITTED else "l"


class Route(str, Enum):
    PROBABILITY_WEIGHTED = "probability"
    CLOSED_FORM = "closed_form"


class EstimatorError(Exception):
    def __init__(self, reason: str, value: Optional[float] = None):
        self.reason = reason
        self.value = value
        message = reason if value is None else f"{reason} ({value:.3e})"
        super().__init__(message)


class OpaqueBarrierError(EstimatorError):
    """The transmitted channel is too weak to post-select on."""


class AsymmetricBarrierError(ValueError):
    def __init__(self, asymmetry: float):
        self.asymmetry = asymmetry
        super().__init__(
            f"Steinberg time needs a symmetric barrier; phi_r(x) and phi_l(-x) differ by {asymmetry:.3e}"
        )


@dataclass(frozen=True)
class InitialSystemState:
    amp_left: complex = 1.0
    amp_right: complex = 0.0

    def __post_init__(self):
        norm = abs(self.amp_left) ** 2 + abs(self.amp_right) ** 2
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"initial state must be normalized, |amp_left|^2+|amp_right|^2 = {norm!r}")

    @classmethod
    def left_incoming(cls) -> "InitialSystemState":
        return cls(1.0, 0.0)

    @classmethod
    def right_incoming(cls) -> "InitialSystemState":
        return cls(0.0, 1.0)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_left, self.amp_right], dtype=complex)

    @property
    def density(self) -> np.ndarray:
        vector = self.vector
        return np.outer(vector, vector.conj())


@dataclass(frozen=True)
class ConditionedResult:
    conditioned_avg: float
    weak_value: complex
    disturbance: float
    probability: float
    route: Route
    side: Side = Side.TRANSMITTED


SIDE_ALIASES = {
    "transmitted": Side.TRANSMITTED,
    "transmission": Side.TRANSMITTED,
    "reflected": Side.REFLECTED,
    "reflection": Side.REFLECTED,
}


class MomentResult(NamedTuple):
    second_moment: float
    mean: float
    uncertainty: float


def parse_side(value: Union[str, Side]) -> Side:
    if isinstance(value, Side):
        return value
    normalized = value.strip().casefold()
    if normalized not in SIDE_ALIASES:
        raise ValueError(f"Unknown side '{value}'. Allowed values: transmitted, reflected")
    return SIDE_ALIASES[normalized]


def _vanishing(side: Side, probability: float) -> EstimatorError:
    if side is Side.TRANSMITTED:
        return OpaqueBarrierError("vanishing transmitted probability", probability)
    return EstimatorError(f"vanishing {side.value} probability", probability)


def _probability(element: np.ndarray, density: np.ndarray) -> float:
    return float(np.trace(element @ density).real)


def expectation_via_cvs(
    cvs: ContextualValues,
    povm: ProbabilityOperators,
    state: InitialSystemState,
) -> float:
    density = state.density
    return float(
        sum(cvs.value(side, sign) * _probability(element, density) for (side, sign), element in povm.items())
    )


def _postselection_vector(s_matrix: np.ndarray, side: Side) -> np.ndarray:
    """|f> = S⁰†|e_side> in the incoming basis."""
    outgoing = np.eye(2, dtype=complex)[0 if side is Side.TRANSMITTED else 1]
    return s_matrix.conj().T @ outgoing


def postselection_weak_value(
    operator: Union[DwellMatrix, np.ndarray],
    s_matrix: np.ndarray,
    state: InitialSystemState,
    side: Union[str, Side] = Side.TRANSMITTED,
) -> complex:
    """Tr[F T ρ]/Tr[F ρ] with F the post-selection projector pulled back to the incoming basis."""
    side = parse_side(side)
    matrix = operator.matrix if isinstance(operator, DwellMatrix) else np.asarray(operator, dtype=complex)
    final = _postselection_vector(s_matrix, side)
    overlap = np.vdot(final, state.vector)
    if abs(overlap) < math.sqrt(MIN_PROBABILITY):
        raise EstimatorError("vanishing post-selection overlap", abs(overlap))
    return complex(np.vdot(final, matrix @ state.vector) / overlap)


def weak_value(dwell: DwellMatrix, amplitudes: ScatteringAmplitudes) -> complex:
    """T_d^w for a left-incoming particle post-selected on transmission."""
    if abs(amplitudes.t) <= MIN_TRANSMISSION:
        raise OpaqueBarrierError("opaque barrier: weak value amplification overflows, |t|", abs(amplitudes.t))
    return complex(dwell.c_ll + amplitudes.r_right / amplitudes.t * dwell.c_rl)


def _side_probability(povm: ProbabilityOperators, density: np.ndarray, side: Side) -> float:
    return sum(_probability(povm.element(side.outcome, sign), density) for sign in SIGNS)


def _probability_weighted(
    cvs: ContextualValues,
    povm: ProbabilityOperators,
    density: np.ndarray,
    side: Side,
) -> float:
    probability = _side_probability(povm, density, side)
    if probability <= MIN_PROBABILITY:
        raise _vanishing(side, probability)
    weighted = sum(
        cvs.value(side.outcome, sign) * _probability(povm.element(side.outcome, sign), density)
        for sign in SIGNS
    )
    return weighted / probability


def conditioned_average(
    cvs: ContextualValues,
    povm: ProbabilityOperators,
    state: InitialSystemState,
    side: Union[str, Side],
    dwell: DwellMatrix,
) -> ConditionedResult:
    """Σ_m α_{side,m} P_{side,m} / P_side, split into weak value and disturbance."""
    side = parse_side(side)
    density = state.density
    average = _probability_weighted(cvs, povm, density, side)
    weak = postselection_weak_value(dwell, povm.s_matrix, state, side)
    return ConditionedResult(
        conditioned_avg=float(average),
        weak_value=weak,
        disturbance=float(average - weak.real),
        probability=float(_side_probability(povm, density, side)),
        route=Route.PROBABILITY_WEIGHTED,
        side=side,
    )


def conditioned_average_closed_form(
    transformed: TransformedOperators,
    cvs: ContextualValues,
    dwell: DwellMatrix,
    amplitudes: ScatteringAmplitudes,
    times: ComplexTimes,
    spin: SpinPostSelection,
    side: Union[str, Side] = Side.TRANSMITTED,
) -> ConditionedResult:
    """Closed form for a left-incoming particle.

    transmitted: T11 - R Re(δτ* x1) f_r
    reflected:   T22 - T Re(δτ x1) f_l
    """
    side = parse_side(side)
    x1 = spin.x1
    delta_tau = times.delta_tau
    if side is Side.TRANSMITTED:
        probability = amplitudes.T
        average = transformed.t11 - amplitudes.R * (np.conj(delta_tau) * x1).real * cvs.f_r
    else:
        probability = amplitudes.R
        average = transformed.t22 - amplitudes.T * (delta_tau * x1).real * cvs.f_l
    if probability <= MIN_PROBABILITY:
        raise _vanishing(side, probability)

    weak = postselection_weak_value(dwell, amplitudes.s_matrix, InitialSystemState.left_incoming(), side)
    return ConditionedResult(
        conditioned_avg=float(average),
        weak_value=weak,
        disturbance=float(average - weak.real),
        probability=float(probability),
        route=Route.CLOSED_FORM,
        side=side,
    )


def _commutator(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    return first @ second - second @ first


def _spin_weight(operators: MeasurementOperators, sign: int) -> float:
    """x0_m recovered from M0_m†M0_m = x0_m·1."""
    zeroth = operators.zeroth(sign)
    return float(np.trace(zeroth.conj().T @ zeroth).real / 2.0)


def disturbance(
    operators: MeasurementOperators,
    cvs: ContextualValues,
    state: InitialSystemState,
    side: Union[str, Side] = Side.TRANSMITTED,
    weak: Optional[complex] = None,
    dwell: Optional[DwellMatrix] = None,
) -> float:
    """Disturbance from the commutators of the measurement operators with F.

    Works in the incoming basis with A_{p,m} = S⁰†Π_p M_m and F = S⁰†Π_side S⁰,
    and keeps the ω-independent part of Σ α_{p,m} Re Tr[[A†,F] A ρ]. When a
    weak value is given the result is cross-checked against the conditioned
    average minus Re(weak).
    """
    side = parse_side(side)
    density = state.density
    s_matrix = operators.s_matrix
    s_dagger = s_matrix.conj().T
    final = s_dagger @ PROJECTORS[side.outcome] @ s_matrix
    normalization = float(np.trace(final @ density).real)
    if normalization <= MIN_PROBABILITY:
        raise _vanishing(side, normalization)

    total = 0.0
    for outcome, sign in OUTCOMES:
        zeroth = s_dagger @ PROJECTORS[outcome] @ operators.zeroth(sign)
        first = s_dagger @ PROJECTORS[outcome] @ operators.first(sign)
        leading = np.trace(_commutator(zeroth.conj().T, final) @ zeroth @ density).real
        response = np.trace(
            _commutator(zeroth.conj().T, final) @ first @ density
            + zeroth.conj().T @ _commutator(final, first) @ density
        ).real
        alpha0 = cvs.alpha0_r if outcome == "r" else cvs.alpha0_l
        alpha1 = cvs.alpha1_r if outcome == "r" else cvs.alpha1_l
        total += alpha0 * leading + sign * alpha1 / _spin_weight(operators, sign) * response
    direct = float(total / normalization)

    if weak is not None:
        if dwell is None:
            raise ValueError("dwell matrix is required to cross-check the disturbance against a weak value")
        povm = povm_elements(operators, cvs.omega)
        indirect = conditioned_average(cvs, povm, state, side, dwell).conditioned_avg - weak.real
        scale = max(1.0, abs(indirect), abs(weak))
        if abs(direct - indirect) > ROUTE_TOLERANCE * scale:
            raise EstimatorError("disturbance routes disagree", abs(direct - indirect))
    return direct


def second_moment_and_uncertainty(
    beta: ContextualValues,
    povm: ProbabilityOperators,
    state: InitialSystemState,
    alpha: ContextualValues,
) -> MomentResult:
    second_moment = expectation_via_cvs(beta, povm, state)
    mean = expectation_via_cvs(alpha, povm, state)
    variance = second_moment - mean**2
    if variance < 0:
        if -variance > VARIANCE_TOLERANCE * max(1.0, second_moment):
            raise EstimatorError("negative dwell-time variance", variance)
        variance = 0.0
    return MomentResult(second_moment=float(second_moment), mean=float(mean), uncertainty=math.sqrt(variance))


def steinberg_time(wave: InteriorWave, amplitudes: ScatteringAmplitudes, units: UnitSystem) -> complex:
    """(m/ħk)∫φ_r φ_l dx / t, without conjugating φ_r."""
    scale = max(np.max(np.abs(wave.phi_l)), np.max(np.abs(wave.phi_r)))
    asymmetry = float(np.max(np.abs(wave.phi_r - wave.phi_l[::-1])))
    if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1.0) or not np.allclose(wave.grid, -wave.grid[::-1]):
        raise AsymmetricBarrierError(asymmetry)
    if abs(amplitudes.t) <= MIN_TRANSMISSION:
        raise OpaqueBarrierError("opaque barrier: Steinberg time undefined, |t|", abs(amplitudes.t))

    product = wave.phi_r * wave.phi_l
    integral = complex(simpson(product.real, x=wave.grid), simpson(product.imag, x=wave.grid))
    return complex(units.flux_factor(wave.k) * integral / amplitudes.t)
