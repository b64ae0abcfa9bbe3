import math
from dataclasses import dataclass
from typing import Dict, Iterator, Tuple

import numpy as np

from src.larmor import ComplexTimes, SpinfulAmplitudes
from src.scattering import ScatteringAmplitudes


PLUS_Z = np.array([1.0, 0.0], dtype=complex)
MINUS_Z = np.array([0.0, 1.0], dtype=complex)
PLUS_X = (PLUS_Z + MINUS_Z) / math.sqrt(2.0)
MINUS_X = (PLUS_Z - MINUS_Z) / math.sqrt(2.0)

# outgoing momentum projectors in the (right-moving, left-moving) basis
PROJECTORS = {
    "r": np.diag([1.0, 0.0]).astype(complex),
    "l": np.diag([0.0, 1.0]).astype(complex),
}
SIDES = ("r", "l")
SIGNS = (1, -1)
OUTCOMES = tuple((side, sign) for side in SIDES for sign in SIGNS)


@dataclass(frozen=True)
class SpinPostSelection:
    theta: float
    phi: float
    x0_plus: float
    x0_minus: float
    x1: complex

    @property
    def plus_n(self) -> np.ndarray:
        return math.cos(self.theta / 2.0) * PLUS_Z + np.exp(1j * self.phi) * math.sin(self.theta / 2.0) * MINUS_Z

    @property
    def minus_n(self) -> np.ndarray:
        return math.sin(self.theta / 2.0) * PLUS_Z - np.exp(1j * self.phi) * math.cos(self.theta / 2.0) * MINUS_Z

    def state(self, sign: int) -> np.ndarray:
        return self.plus_n if sign > 0 else self.minus_n

    def x0(self, sign: int) -> float:
        return self.x0_plus if sign > 0 else self.x0_minus


@dataclass(frozen=True, eq=False)
class MeasurementOperators:
    """M_m = m0_m + ω m1_m acting on the incoming momentum amplitudes."""

    s_matrix: np.ndarray
    m0_plus: np.ndarray
    m0_minus: np.ndarray
    m1_plus: np.ndarray
    m1_minus: np.ndarray

    def zeroth(self, sign: int) -> np.ndarray:
        return self.m0_plus if sign > 0 else self.m0_minus

    def first(self, sign: int) -> np.ndarray:
        return self.m1_plus if sign > 0 else self.m1_minus

    def at(self, sign: int, omega: float) -> np.ndarray:
        return self.zeroth(sign) + omega * self.first(sign)


@dataclass(frozen=True, eq=False)
class ProbabilityOperators:
    e_r_plus: np.ndarray
    e_r_minus: np.ndarray
    e_l_plus: np.ndarray
    e_l_minus: np.ndarray
    omega: float
    s_matrix: np.ndarray

    def element(self, side: str, sign: int) -> np.ndarray:
        return {
            ("r", 1): self.e_r_plus,
            ("r", -1): self.e_r_minus,
            ("l", 1): self.e_l_plus,
            ("l", -1): self.e_l_minus,
        }[(side, sign)]

    def items(self) -> Iterator[Tuple[Tuple[str, int], np.ndarray]]:
        for outcome in OUTCOMES:
            yield outcome, self.element(*outcome)

    def total(self) -> np.ndarray:
        return sum(element for _, element in self.items())

    def probabilities(self, density: np.ndarray) -> Dict[Tuple[str, int], float]:
        return {
            outcome: float(np.trace(element @ density).real)
            for outcome, element in self.items()
        }


@dataclass(frozen=True, eq=False)
class RotatedSpinStates:
    s_r: np.ndarray
    s_l: np.ndarray
    precession_r: float
    tilt_r: float
    precession_l: float
    tilt_l: float


def postselection_overlaps(theta: float, phi: float) -> SpinPostSelection:
    if not 0.0 < theta < math.pi:
        raise ValueError(f"theta must lie in (0, pi), got {theta}")
    if not 0.0 < phi < 2.0 * math.pi:
        raise ValueError(f"phi must lie in (0, 2*pi), got {phi}")

    half = theta / 2.0
    plus_n = math.cos(half) * PLUS_Z + np.exp(1j * phi) * math.sin(half) * MINUS_Z
    return SpinPostSelection(
        theta=theta,
        phi=phi,
        x0_plus=float(abs(np.vdot(plus_n, PLUS_X)) ** 2),
        x0_minus=float(abs(np.vdot(plus_n, MINUS_X)) ** 2),
        x1=complex(np.vdot(PLUS_X, plus_n) * np.vdot(plus_n, MINUS_X)),
    )


def measurement_operators(
    amplitudes: ScatteringAmplitudes,
    times: ComplexTimes,
    spin: SpinPostSelection,
) -> MeasurementOperators:
    s_matrix = amplitudes.s_matrix
    response = np.array(
        [
            [amplitudes.t * times.tau_t, amplitudes.r_right * times.tau_r_right],
            [amplitudes.r_left * times.tau_r_left, amplitudes.t * times.tau_t],
        ],
        dtype=complex,
    )

    def overlaps(sign: int) -> Tuple[complex, complex]:
        state = spin.state(sign)
        return np.vdot(state, PLUS_X), np.vdot(state, MINUS_X)

    plus_on_x, plus_on_minus_x = overlaps(1)
    minus_on_x, minus_on_minus_x = overlaps(-1)
    return MeasurementOperators(
        s_matrix=s_matrix,
        m0_plus=s_matrix * plus_on_x,
        m0_minus=s_matrix * minus_on_x,
        m1_plus=0.5 * response * plus_on_minus_x,
        m1_minus=0.5 * response * minus_on_minus_x,
    )


def povm_elements(operators: MeasurementOperators, omega: float) -> ProbabilityOperators:
    """(Π_p M_m)†(Π_p M_m) kept to first order in ω."""
    if omega < 0:
        raise ValueError(f"omega must be non-negative, got {omega}")

    elements = {}
    for side, sign in OUTCOMES:
        zeroth = PROJECTORS[side] @ operators.zeroth(sign)
        first = PROJECTORS[side] @ operators.first(sign)
        cross = zeroth.conj().T @ first
        elements[(side, sign)] = zeroth.conj().T @ zeroth + omega * (cross + cross.conj().T)

    return ProbabilityOperators(
        e_r_plus=elements[("r", 1)],
        e_r_minus=elements[("r", -1)],
        e_l_plus=elements[("l", 1)],
        e_l_minus=elements[("l", -1)],
        omega=omega,
        s_matrix=operators.s_matrix,
    )


def finite_strength_povm(spinful: SpinfulAmplitudes, spin: SpinPostSelection) -> ProbabilityOperators:
    """Exact POVM at finite ω built from the spin-resolved S-matrices."""
    s_plus = spinful.plus.s_matrix
    s_minus = spinful.minus.s_matrix

    elements = {}
    for side, sign in OUTCOMES:
        state = spin.state(sign)
        operator = (
            np.vdot(state, PLUS_Z) * np.vdot(PLUS_Z, PLUS_X) * s_plus
            + np.vdot(state, MINUS_Z) * np.vdot(MINUS_Z, PLUS_X) * s_minus
        )
        projected = PROJECTORS[side] @ operator
        elements[(side, sign)] = projected.conj().T @ projected

    s_average = 0.5 * (s_plus + s_minus)
    return ProbabilityOperators(
        e_r_plus=elements[("r", 1)],
        e_r_minus=elements[("r", -1)],
        e_l_plus=elements[("l", 1)],
        e_l_minus=elements[("l", -1)],
        omega=spinful.omega_probe,
        s_matrix=s_average,
    )


def bloch_angles(state: np.ndarray) -> Tuple[float, float]:
    """(precession, tilt): arg(c_+z / c_-z) and the z-polarization."""
    up, down = state
    norm = abs(up) ** 2 + abs(down) ** 2
    return float(np.angle(up / down)), float((abs(up) ** 2 - abs(down) ** 2) / norm)


def rotated_spin_states(times: ComplexTimes, omega: float) -> RotatedSpinStates:
    def rotated(tau: complex) -> np.ndarray:
        state = PLUS_X + 0.5 * omega * tau * MINUS_X
        return state / np.linalg.norm(state)

    s_r = rotated(times.tau_t)
    s_l = rotated(times.tau_r_left)
    precession_r, tilt_r = bloch_angles(s_r)
    precession_l, tilt_l = bloch_angles(s_l)
    return RotatedSpinStates(
        s_r=s_r,
        s_l=s_l,
        precession_r=precession_r,
        tilt_r=tilt_r,
        precession_l=precession_l,
        tilt_l=tilt_l,
    )
