import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import quad, simpson
from scipy.special import erfc

from src.potential import BarrierSpec, UnitSystem
from src.scattering import DEFAULT_SLICES, InteriorWave, interior_wavefunctions


MIN_GRID_POINTS = 3
PACKET_HALF_SPAN = 6.0
PACKET_TAIL_LIMIT = 1e-12


@dataclass(frozen=True)
class DwellMatrix:
    k: float
    c_ll: float
    c_rr: float
    c_rl: complex

    @property
    def c_lr(self) -> complex:
        return complex(np.conj(self.c_rl))

    @property
    def tau_d(self) -> float:
        return self.c_ll

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.c_ll, self.c_lr], [self.c_rl, self.c_rr]], dtype=complex)


@dataclass(frozen=True, eq=False)
class DwellEigensystem:
    lambda_plus: float
    lambda_minus: float
    state_plus: np.ndarray
    state_minus: np.ndarray


@dataclass(frozen=True)
class WavePacket:
    """Gaussian momentum amplitude A(k) of width k_sigma around k_center."""

    k_center: float
    k_sigma: float

    def __post_init__(self):
        if not self.k_sigma > 0:
            raise ValueError(f"k_sigma must be positive, got {self.k_sigma}")

    @property
    def tail_mass(self) -> float:
        """Weight of |A(k)|^2 at k <= 0."""
        return 0.5 * float(erfc(self.k_center / self.k_sigma))

    def amplitude(self, k):
        return (math.pi * self.k_sigma**2) ** -0.25 * np.exp(
            -((k - self.k_center) ** 2) / (2.0 * self.k_sigma**2)
        )

    def density(self, k):
        return np.abs(self.amplitude(k)) ** 2


def _integrate(values: np.ndarray, grid: np.ndarray) -> complex:
    return complex(simpson(values.real, x=grid), simpson(values.imag, x=grid))


def dwell_matrix(wave: InteriorWave, units: UnitSystem) -> DwellMatrix:
    if len(wave.grid) < MIN_GRID_POINTS:
        raise ValueError(
            f"interior grid too coarse: {len(wave.grid)} points (need {MIN_GRID_POINTS})"
        )

    flux_factor = units.flux_factor(wave.k)
    c_ll = flux_factor * _integrate(np.abs(wave.phi_l) ** 2, wave.grid).real
    c_rr = flux_factor * _integrate(np.abs(wave.phi_r) ** 2, wave.grid).real
    c_rl = flux_factor * _integrate(np.conj(wave.phi_r) * wave.phi_l, wave.grid)
    return DwellMatrix(k=wave.k, c_ll=c_ll, c_rr=c_rr, c_rl=c_rl)


def off_diagonal_pair(wave: InteriorWave, units: UnitSystem) -> Tuple[complex, complex]:
    """(C_rl, C_lr) from two separate quadratures."""
    flux_factor = units.flux_factor(wave.k)
    c_rl = flux_factor * _integrate(np.conj(wave.phi_r) * wave.phi_l, wave.grid)
    c_lr = flux_factor * _integrate(np.conj(wave.phi_l) * wave.phi_r, wave.grid)
    return c_rl, c_lr


def dwell_eigensystem(dwell: DwellMatrix) -> DwellEigensystem:
    split = math.sqrt((dwell.c_rr - dwell.c_ll) ** 2 + 4.0 * abs(dwell.c_rl) ** 2)
    lambda_plus = 0.5 * (dwell.c_rr + dwell.c_ll + split)
    lambda_minus = 0.5 * (dwell.c_rr + dwell.c_ll - split)

    # two equivalent forms of the upper eigenvector; the larger one avoids 0/0
    first = np.array([dwell.c_ll - dwell.c_rr + split, 2.0 * dwell.c_rl], dtype=complex)
    second = np.array([2.0 * dwell.c_lr, dwell.c_rr - dwell.c_ll + split], dtype=complex)
    state_plus = first if np.linalg.norm(first) >= np.linalg.norm(second) else second
    norm = np.linalg.norm(state_plus)
    state_plus = state_plus / norm if norm > 0 else np.array([1.0, 0.0], dtype=complex)
    state_minus = np.array([-np.conj(state_plus[1]), np.conj(state_plus[0])])

    return DwellEigensystem(
        lambda_plus=lambda_plus,
        lambda_minus=lambda_minus,
        state_plus=state_plus,
        state_minus=state_minus,
    )


def squared_matrix(dwell: DwellMatrix) -> np.ndarray:
    off_diagonal = dwell.c_lr * (dwell.c_ll + dwell.c_rr)
    coupling = abs(dwell.c_rl) ** 2
    return np.array(
        [
            [dwell.c_ll**2 + coupling, off_diagonal],
            [np.conj(off_diagonal), dwell.c_rr**2 + coupling],
        ],
        dtype=complex,
    )


def moment_matrix(dwell: DwellMatrix, power: int) -> np.ndarray:
    if power < 0:
        raise ValueError(f"power must be non-negative, got {power}")
    return np.linalg.matrix_power(dwell.matrix, power)


def spectral_expectation(eigensystem: DwellEigensystem, state: np.ndarray, power: int = 1) -> float:
    """Σ w_± λ_±^power with w_± the eigenstate weights of `state`."""
    weight_plus = abs(np.vdot(eigensystem.state_plus, state)) ** 2
    weight_minus = abs(np.vdot(eigensystem.state_minus, state)) ** 2
    return float(
        weight_plus * eigensystem.lambda_plus**power
        + weight_minus * eigensystem.lambda_minus**power
    )


def dwell_time(barrier: BarrierSpec, k: float, slices: int = DEFAULT_SLICES) -> float:
    wave = interior_wavefunctions(barrier, k, slices=slices)
    return dwell_matrix(wave, barrier.units).c_ll


def wavepacket_dwell(
    barrier: BarrierSpec,
    packet: WavePacket,
    slices: int = DEFAULT_SLICES,
) -> float:
    if packet.tail_mass >= PACKET_TAIL_LIMIT:
        raise ValueError(
            f"wave packet extends below k=0 (tail mass {packet.tail_mass:.2e}); "
            "increase k_center or reduce k_sigma"
        )

    lower = max(packet.k_center - PACKET_HALF_SPAN * packet.k_sigma, 1e-12 * packet.k_center)
    upper = packet.k_center + PACKET_HALF_SPAN * packet.k_sigma
    value, _ = quad(
        lambda k: packet.density(k) * dwell_time(barrier, k, slices),
        lower,
        upper,
        points=[packet.k_center],
        epsabs=0.0,
        epsrel=1e-10,
        limit=200,
    )
    return float(value)
