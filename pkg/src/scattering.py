import math
import sys
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from src.potential import BarrierSpec, UnitSystem, discretize


DEFAULT_SLICES = 2000
MAX_SLICES = 32000
UNITARITY_TOLERANCE = 1e-8
TURNING_POINT_TOLERANCE = 1e-12
SMALL_KAPPA_D = 1e-6


class ScatteringError(Exception):
    def __init__(self, k: float, residual: float, slices: int, detail: str = ""):
        self.k = k
        self.residual = residual
        self.slices = slices
        message = f"Scattering solve failed at k={k:.17g} with {slices} slices (residual {residual:.3e})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


@dataclass(frozen=True)
class ScatteringAmplitudes:
    k: float
    t: complex
    r_left: complex
    r_right: complex
    phase_t: float
    phase_r_left: float
    phase_r_right: float

    @property
    def T(self) -> float:
        return abs(self.t) ** 2

    @property
    def R(self) -> float:
        return abs(self.r_left) ** 2

    @property
    def s_matrix(self) -> np.ndarray:
        """Spinless S-matrix; column 0 is left incidence, column 1 right incidence."""
        return np.array([[self.t, self.r_right], [self.r_left, self.t]], dtype=complex)


@dataclass(frozen=True, eq=False)
class InteriorWave:
    k: float
    grid: np.ndarray
    phi_l: np.ndarray
    phi_r: np.ndarray


class _TransferSolution(NamedTuple):
    amplitudes: ScatteringAmplitudes
    log_abs_t: float
    t_phase: complex
    edges: np.ndarray
    matrices: np.ndarray


def amplitudes_from_values(k: float, t: complex, r_left: complex, r_right: complex) -> ScatteringAmplitudes:
    return ScatteringAmplitudes(
        k=k,
        t=complex(t),
        r_left=complex(r_left),
        r_right=complex(r_right),
        phase_t=float(np.angle(t)),
        phase_r_left=float(np.angle(r_left)),
        phase_r_right=float(np.angle(r_right)),
    )


def _segment_matrices(q2: np.ndarray, h: float, tolerance: float) -> np.ndarray:
    """Exact (psi, psi') propagators for constant-potential slices of width h.

    q2 is the local k^2 - 2mV/hbar^2. Slices close to a turning point use the
    series form of the linear solution.
    """
    q2 = q2.astype(complex)
    q = np.sqrt(q2)
    near_turning_point = np.abs(q2) < tolerance

    safe_q = np.where(near_turning_point, 1.0, q)
    cos_qh = np.where(near_turning_point, 1.0 - q2 * h**2 / 2.0, np.cos(safe_q * h))
    sin_over_q = np.where(
        near_turning_point,
        h * (1.0 - q2 * h**2 / 6.0),
        np.sin(safe_q * h) / safe_q,
    )

    matrices = np.empty((len(q2), 2, 2), dtype=complex)
    matrices[:, 0, 0] = cos_qh
    matrices[:, 0, 1] = sin_over_q
    matrices[:, 1, 0] = -q2 * sin_over_q
    matrices[:, 1, 1] = cos_qh
    return matrices


def _normalize(matrices: np.ndarray, log_scale: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.max(np.abs(matrices), axis=(-2, -1))
    return matrices / norms[..., None, None], log_scale + np.log(norms)


def _scaled_prefix_products(matrices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Running products P_j = M_j ... M_0 kept as (unit-scale matrix, log scale)."""
    prefix, log_scale = _normalize(matrices, np.zeros(len(matrices)))
    shift = 1
    while shift < len(prefix):
        combined = prefix[shift:] @ prefix[:-shift]
        combined_log = log_scale[shift:] + log_scale[:-shift]
        prefix = np.concatenate([prefix[:shift], combined])
        log_scale = np.concatenate([log_scale[:shift], combined_log])
        prefix, log_scale = _normalize(prefix, log_scale)
        shift *= 2
    return prefix, log_scale


def _scaled_product(matrices: np.ndarray) -> Tuple[np.ndarray, float]:
    """Total product M_{N-1} ... M_0 by pairwise reduction with rescaling."""
    product, log_scale = _normalize(matrices, np.zeros(len(matrices)))
    while len(product) > 1:
        if len(product) % 2:
            product = np.concatenate([product, np.eye(2, dtype=complex)[None]])
            log_scale = np.append(log_scale, 0.0)
        product, log_scale = _normalize(
            product[1::2] @ product[0::2],
            log_scale[1::2] + log_scale[0::2],
        )
    return product[0], float(log_scale[0])


def _plane_wave_basis(k: float, x: float) -> np.ndarray:
    """Maps plane-wave coefficients (A, B) of A e^{ikx} + B e^{-ikx} to (psi, psi')."""
    forward = np.exp(1j * k * x)
    backward = np.exp(-1j * k * x)
    return np.array([[forward, backward], [1j * k * forward, -1j * k * backward]])


def _plane_wave_coefficients(k: float, x: float) -> np.ndarray:
    forward = np.exp(-1j * k * x)
    backward = np.exp(1j * k * x)
    return np.array(
        [
            [forward / 2.0, forward / (2j * k)],
            [backward / 2.0, -backward / (2j * k)],
        ]
    )


def _transfer_solution(
    barrier: BarrierSpec,
    k: float,
    spin_shift: float,
    slices: int,
) -> _TransferSolution:
    edges, _, values = discretize(barrier, slices, spin_shift)
    units = barrier.units
    q2 = k**2 - units.wavenumber_squared(values)
    tolerance = TURNING_POINT_TOLERANCE * max(units.wavenumber_squared(barrier.v0), k**2)
    matrices = _segment_matrices(q2, edges[1] - edges[0], tolerance)

    if not np.any(values):
        # no potential anywhere: the exact answer, free of accumulated rounding
        amplitudes = amplitudes_from_values(k, 1.0, 0.0, 0.0)
        return _TransferSolution(amplitudes, 0.0, 1.0 + 0j, edges, matrices)

    product, log_scale = _scaled_product(matrices)
    half = barrier.half_width
    scaled = _plane_wave_coefficients(k, half) @ product @ _plane_wave_basis(k, -half)
    w11, w12 = scaled[0]
    w21, w22 = scaled[1]

    if not np.isfinite(scaled).all() or abs(w22) == 0.0:
        raise ScatteringError(k, math.inf, slices, "scaled propagation failed")

    log_abs_t = -log_scale - math.log(abs(w22))
    t_phase = complex(abs(w22) / w22)
    t = math.exp(log_abs_t) * t_phase if log_abs_t > -745.0 else 0j
    amplitudes = amplitudes_from_values(k, t, -w21 / w22, w12 / w22)
    return _TransferSolution(amplitudes, log_abs_t, t_phase, edges, matrices)


def check_unitarity(amplitudes: ScatteringAmplitudes) -> Tuple[float, float]:
    norm_residual = abs(amplitudes.T + amplitudes.R - 1.0)
    cross = amplitudes.t * np.conj(amplitudes.r_left) + np.conj(amplitudes.t) * amplitudes.r_right
    return float(norm_residual), float(abs(cross))


def _solve(
    barrier: BarrierSpec,
    k: float,
    spin_shift: float,
    slices: int,
    tolerance: float,
) -> _TransferSolution:
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")

    current = slices
    while True:
        solution = _transfer_solution(barrier, k, spin_shift, current)
        residual = max(check_unitarity(solution.amplitudes))
        if residual <= tolerance:
            return solution
        if current * 2 > MAX_SLICES:
            raise ScatteringError(k, residual, current, "unitarity tolerance not reached")
        print(
            f"Warning: unitarity residual {residual:.2e} at k={k:g}, "
            f"refining to {current * 2} slices",
            file=sys.stderr,
        )
        current *= 2


def solve_amplitudes(
    barrier: BarrierSpec,
    k: float,
    spin_shift: float = 0.0,
    slices: int = DEFAULT_SLICES,
    tolerance: float = UNITARITY_TOLERANCE,
) -> ScatteringAmplitudes:
    return _solve(barrier, k, spin_shift, slices, tolerance).amplitudes


def scan_amplitudes(
    barrier: BarrierSpec,
    ks: Sequence[float],
    slices: int = DEFAULT_SLICES,
) -> List[ScatteringAmplitudes]:
    """Solve along an ascending k-scan and unwrap every phase along it."""
    solved = [solve_amplitudes(barrier, k, slices=slices) for k in ks]
    if not solved:
        return []

    phase_t = np.unwrap([item.phase_t for item in solved])
    phase_r_left = np.unwrap([item.phase_r_left for item in solved])
    phase_r_right = np.unwrap([item.phase_r_right for item in solved])
    return [
        replace(
            item,
            phase_t=float(phase_t[index]),
            phase_r_left=float(phase_r_left[index]),
            phase_r_right=float(phase_r_right[index]),
        )
        for index, item in enumerate(solved)
    ]


def _propagated_values(
    matrices: np.ndarray,
    start: np.ndarray,
    log_amplitude: float,
    phase: complex,
) -> np.ndarray:
    """psi at every slice edge reached from `start`, times exp(log_amplitude)*phase."""
    prefix, log_scale = _scaled_prefix_products(matrices)
    reached = (prefix @ start)[:, 0]
    values = np.empty(len(matrices) + 1, dtype=complex)
    values[0] = start[0] * math.exp(log_amplitude)
    values[1:] = reached * np.exp(log_scale + log_amplitude)
    return values * phase


def interior_wavefunctions(
    barrier: BarrierSpec,
    k: float,
    slices: int = DEFAULT_SLICES,
    tolerance: float = UNITARITY_TOLERANCE,
) -> InteriorWave:
    """Left- and right-incoming states on the slice edges inside the barrier.

    Both states are propagated from their transmitted side, where they are
    smallest, so the integration always runs in the growing direction.
    """
    solution = _solve(barrier, k, 0.0, slices, tolerance)
    half = barrier.half_width
    phase_t = solution.t_phase

    # phi_r = t e^{-ikx} left of the barrier
    right_start = np.exp(1j * k * half) * np.array([1.0, -1j * k])
    phi_r = _propagated_values(solution.matrices, right_start, solution.log_abs_t, phase_t)

    # phi_l = t e^{ikx} right of the barrier, run backwards with inverse slices
    inverse = solution.matrices[::-1].copy()
    inverse[:, 0, 1] *= -1.0
    inverse[:, 1, 0] *= -1.0
    left_start = np.exp(1j * k * half) * np.array([1.0, 1j * k])
    phi_l = _propagated_values(inverse, left_start, solution.log_abs_t, phase_t)[::-1]

    if not (np.isfinite(phi_l).all() and np.isfinite(phi_r).all()):
        raise ScatteringError(k, math.inf, len(solution.matrices), "interior propagation overflowed")

    return InteriorWave(k=k, grid=solution.edges, phi_l=phi_l, phi_r=phi_r)


def square_amplitudes_from_kappa(kappa: complex, k: float, width: float) -> Tuple[complex, complex]:
    """(t, r) of a centred square barrier; kappa may be complex above the barrier."""
    kd = kappa * width
    if abs(kd) < SMALL_KAPPA_D:
        sinh_over_kappa = width * (1.0 + kd**2 / 6.0)
        cosh_kd = 1.0 + kd**2 / 2.0
    else:
        sinh_over_kappa = np.sinh(kd) / kappa
        cosh_kd = np.cosh(kd)

    kappa_sinh = kappa**2 * sinh_over_kappa
    denominator = cosh_kd + 0.5j * (kappa_sinh / k - k * sinh_over_kappa)
    free_phase = np.exp(-1j * k * width)
    t = free_phase / denominator
    r = -0.5j * (kappa_sinh / k + k * sinh_over_kappa) * free_phase / denominator
    return complex(t), complex(r)


def square_kappa(v0: float, k: float, units: UnitSystem) -> complex:
    return complex(np.sqrt(complex(units.wavenumber_squared(v0) - k**2)))


def analytic_square_amplitudes(
    v0: float,
    d: float,
    k: float,
    units: UnitSystem = UnitSystem(),
) -> ScatteringAmplitudes:
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    t, r = square_amplitudes_from_kappa(square_kappa(v0, k, units), k, d)
    return amplitudes_from_values(k, t, r, r)


def analytic_square_interior(
    v0: float,
    d: float,
    k: float,
    units: UnitSystem,
    grid: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form interior (phi_l, phi_r) of the centred square barrier."""
    amplitudes = analytic_square_amplitudes(v0, d, k, units)
    kappa = square_kappa(v0, k, units)
    half = d / 2.0

    def left_state(x):
        offset = x - half
        value = amplitudes.t * np.exp(1j * k * half)
        slope = 1j * k * value
        if abs(kappa) * d < SMALL_KAPPA_D:
            return value + slope * offset
        return value * np.cosh(kappa * offset) + slope * np.sinh(kappa * offset) / kappa

    grid = np.asarray(grid, dtype=float)
    return left_state(grid), left_state(-grid)
