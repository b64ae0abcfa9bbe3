from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from src.dwell import DwellMatrix
from src.larmor import ComplexTimes
from src.scattering import ScatteringAmplitudes
from src.spin_meter import SpinPostSelection


CONTEXT_TOLERANCE = 1e-9
MAX_CONDITION_NUMBER = 1e13
MIN_DENOMINATOR = 1e-300


class ContextKind(str, Enum):
    REGULAR = "regular"
    XZ_PLANE = "x-z"
    XY_PLANE = "x-y"
    NEAR_SINGULAR = "near"


class SingularContext(Exception):
    def __init__(self, plane: str, score: Optional[float] = None, detail: str = ""):
        self.plane = plane
        self.score = score
        message = f"Singular measurement context ({plane} plane)"
        if score is not None:
            message += f", score {score:.3e}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


@dataclass(frozen=True)
class ContextDiagnosis:
    kind: ContextKind
    score: float

    @property
    def is_regular(self) -> bool:
        return self.kind == ContextKind.REGULAR


@dataclass(frozen=True)
class TransformedOperators:
    t11: float
    t22: float
    t12: complex
    er11: float
    er12: complex
    el12: complex
    el22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.t11, self.t12], [np.conj(self.t12), self.t22]], dtype=complex)


@dataclass(frozen=True)
class ContextualValues:
    alpha_r_plus: float
    alpha_r_minus: float
    alpha_l_plus: float
    alpha_l_minus: float
    alpha0_r: float
    alpha0_l: float
    alpha1_r: float
    alpha1_l: float
    f_r: float
    f_l: float
    omega: float
    condition_number: float

    def value(self, side: str, sign: int) -> float:
        return {
            ("r", 1): self.alpha_r_plus,
            ("r", -1): self.alpha_r_minus,
            ("l", 1): self.alpha_l_plus,
            ("l", -1): self.alpha_l_minus,
        }[(side, sign)]

    def scaled(self, side: str, sign: int) -> float:
        """ω·α, the quantity that stays finite in the weak limit."""
        return self.omega * self.value(side, sign)

    @classmethod
    def from_decomposition(
        cls,
        alpha0_r: float,
        alpha0_l: float,
        alpha1_r: float,
        alpha1_l: float,
        spin: SpinPostSelection,
        omega: float,
        condition_number: float,
    ) -> "ContextualValues":
        product = spin.x0_plus * spin.x0_minus
        return cls(
            alpha_r_plus=alpha0_r + alpha1_r / (omega * spin.x0_plus),
            alpha_r_minus=alpha0_r - alpha1_r / (omega * spin.x0_minus),
            alpha_l_plus=alpha0_l + alpha1_l / (omega * spin.x0_plus),
            alpha_l_minus=alpha0_l - alpha1_l / (omega * spin.x0_minus),
            alpha0_r=alpha0_r,
            alpha0_l=alpha0_l,
            alpha1_r=alpha1_r,
            alpha1_l=alpha1_l,
            f_r=-alpha1_r / product,
            f_l=alpha1_l / product,
            omega=omega,
            condition_number=condition_number,
        )


def detect_singular_context(
    spin: SpinPostSelection,
    tolerance: float = CONTEXT_TOLERANCE,
) -> ContextDiagnosis:
    real_part = abs(spin.x1.real)
    imag_part = abs(spin.x1.imag)
    score = real_part * imag_part

    if real_part < tolerance and imag_part < tolerance:
        return ContextDiagnosis(ContextKind.NEAR_SINGULAR, score)
    if imag_part < tolerance:
        return ContextDiagnosis(ContextKind.XZ_PLANE, score)
    if real_part < tolerance:
        return ContextDiagnosis(ContextKind.XY_PLANE, score)
    if score < tolerance**2:
        return ContextDiagnosis(ContextKind.NEAR_SINGULAR, score)
    return ContextDiagnosis(ContextKind.REGULAR, score)


def _require_regular(spin: SpinPostSelection):
    diagnosis = detect_singular_context(spin)
    if not diagnosis.is_regular:
        raise SingularContext(diagnosis.kind.value, diagnosis.score)


def _operator_matrix(operator: Union[DwellMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(operator, DwellMatrix):
        return operator.matrix
    matrix = np.asarray(operator, dtype=complex)
    if matrix.shape != (2, 2):
        raise ValueError(f"operator must be a 2x2 matrix, got shape {matrix.shape}")
    return matrix


def explicit_transformed_dwell(
    operator: Union[DwellMatrix, np.ndarray],
    amplitudes: ScatteringAmplitudes,
) -> Tuple[float, float, complex]:
    """T11, T22, T12 of S⁰ T S⁰† written out in the operator elements."""
    c_ll, c_lr = _operator_matrix(operator)[0]
    c_rl, c_rr = _operator_matrix(operator)[1]
    t, r_left, r_right = amplitudes.t, amplitudes.r_left, amplitudes.r_right
    transmission, reflection = amplitudes.T, amplitudes.R

    t11 = transmission * c_ll + reflection * c_rr + 2.0 * (np.conj(t) * r_right * c_rl).real
    t22 = reflection * c_ll + transmission * c_rr + 2.0 * (np.conj(r_left) * t * c_rl).real
    t12 = (
        np.conj(r_left) * t * c_ll
        + np.conj(r_left) * r_right * c_rl
        + transmission * c_lr
        + np.conj(t) * r_right * c_rr
    )
    return float(np.real(t11)), float(np.real(t22)), complex(t12)


def transformed_operators(
    operator: Union[DwellMatrix, np.ndarray],
    amplitudes: ScatteringAmplitudes,
    times: ComplexTimes,
    spin: SpinPostSelection,
) -> TransformedOperators:
    """S⁰ T S⁰† and the first-order elements of S⁰ Ê S⁰†."""
    s_matrix = amplitudes.s_matrix
    conjugated = s_matrix @ _operator_matrix(operator) @ s_matrix.conj().T

    t, r_left = amplitudes.t, amplitudes.r_left
    transmission, reflection = amplitudes.T, amplitudes.R
    x1 = spin.x1
    coupling = np.conj(r_left) * t * np.conj(times.delta_tau) / 2.0

    return TransformedOperators(
        t11=float(conjugated[0, 0].real),
        t22=float(conjugated[1, 1].real),
        t12=complex(conjugated[0, 1]),
        er11=float(transmission * (times.tau_t * x1).real + reflection * (times.tau_r_right * x1).real),
        er12=complex(coupling * x1),
        el12=complex(-coupling * np.conj(x1)),
        el22=float(transmission * (times.tau_t * x1).real + reflection * (times.tau_r_left * x1).real),
    )


def _cv_system(transformed: TransformedOperators) -> Tuple[np.ndarray, np.ndarray]:
    """Real 4×4 system for (ξ⁰_r, ξ⁰_l, δα_r, δα_l)."""
    matrix = np.array(
        [
            [1.0, 0.0, transformed.er11, 0.0],
            [0.0, 0.0, transformed.er12.real, transformed.el12.real],
            [0.0, 0.0, transformed.er12.imag, transformed.el12.imag],
            [0.0, 1.0, 0.0, transformed.el22],
        ]
    )
    rhs = np.array([transformed.t11, transformed.t12.real, transformed.t12.imag, transformed.t22])
    return matrix, rhs


def solve_cvs_linear(
    transformed: TransformedOperators,
    spin: SpinPostSelection,
    omega: float,
) -> ContextualValues:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    _require_regular(spin)

    matrix, rhs = _cv_system(transformed)
    condition_number = float(np.linalg.cond(matrix))
    if not np.isfinite(condition_number) or condition_number > MAX_CONDITION_NUMBER:
        raise SingularContext("degenerate", detail=f"condition number {condition_number:.3e}")

    xi_r, xi_l, delta_r, delta_l = lu_solve(lu_factor(matrix), rhs)
    product = spin.x0_plus * spin.x0_minus
    return ContextualValues.from_decomposition(
        alpha0_r=float(xi_r),
        alpha0_l=float(xi_l),
        alpha1_r=float(delta_r * product),
        alpha1_l=float(delta_l * product),
        spin=spin,
        omega=omega,
        condition_number=condition_number,
    )


def cvs_closed_form(
    transformed: TransformedOperators,
    dwell: DwellMatrix,
    amplitudes: ScatteringAmplitudes,
    times: ComplexTimes,
    spin: SpinPostSelection,
    omega: float,
) -> ContextualValues:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if abs(dwell.k - amplitudes.k) > 1e-12 * max(abs(amplitudes.k), 1.0):
        raise ValueError(f"dwell matrix at k={dwell.k} does not match amplitudes at k={amplitudes.k}")
    _require_regular(spin)

    t, r_left, r_right = amplitudes.t, amplitudes.r_left, amplitudes.r_right
    transmission, reflection = amplitudes.T, amplitudes.R
    x1 = spin.x1
    delta_tau = times.delta_tau

    denominator = reflection * transmission * abs(delta_tau) ** 2 * x1.real * x1.imag
    if abs(denominator) < MIN_DENOMINATOR:
        raise SingularContext("degenerate", detail="closed-form denominator underflow")

    f_r = (transformed.t12 * t * np.conj(r_right) * delta_tau * x1).imag / denominator
    f_l = (transformed.t12 * np.conj(t) * r_left * delta_tau * np.conj(x1)).imag / denominator
    product = spin.x0_plus * spin.x0_minus

    matrix, _ = _cv_system(transformed)
    return ContextualValues.from_decomposition(
        alpha0_r=float(transformed.t11 + ((transmission * times.tau_t + reflection * times.tau_r_right) * x1).real * f_r),
        alpha0_l=float(transformed.t22 - ((transmission * times.tau_t + reflection * times.tau_r_left) * x1).real * f_l),
        alpha1_r=float(-product * f_r),
        alpha1_l=float(product * f_l),
        spin=spin,
        omega=omega,
        condition_number=float(np.linalg.cond(matrix)),
    )


def operator_cvs(
    operator: Union[DwellMatrix, np.ndarray],
    amplitudes: ScatteringAmplitudes,
    times: ComplexTimes,
    spin: SpinPostSelection,
    omega: float,
) -> ContextualValues:
    """CVs decomposing any Hermitian 2×2 operator over the Larmor-clock POVM."""
    transformed = transformed_operators(operator, amplitudes, times, spin)
    return solve_cvs_linear(transformed, spin, omega)


def second_moment_cvs(
    squared: np.ndarray,
    amplitudes: ScatteringAmplitudes,
    times: ComplexTimes,
    spin: SpinPostSelection,
    omega: float,
) -> ContextualValues:
    return operator_cvs(squared, amplitudes, times, spin, omega)
