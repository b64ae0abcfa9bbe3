import sys
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.potential import BarrierSpec, UnitSystem
from src.scattering import (
    DEFAULT_SLICES,
    ScatteringAmplitudes,
    square_amplitudes_from_kappa,
    square_kappa,
    solve_amplitudes,
)


DEFAULT_PROBE_FRACTION = 1e-6
MIN_AMPLITUDE = 1e-12
WEAK_PROBE_LIMIT = 1e-2
KAPPA_STEP = 1e-6


class LarmorError(Exception):
    def __init__(self, k: float, amplitude: str, magnitude: float):
        self.k = k
        self.amplitude = amplitude
        self.magnitude = magnitude
        super().__init__(
            f"Cannot extract Larmor times at k={k:.17g}: |{amplitude}| = {magnitude:.3e} "
            f"is below {MIN_AMPLITUDE:g}"
        )


@dataclass(frozen=True)
class ComplexTimes:
    tau_zt: float
    tau_zr: float
    tau_yt: float
    tau_yr_left: float
    tau_yr_right: float

    @property
    def tau_t(self) -> complex:
        return complex(self.tau_zt, self.tau_yt)

    @property
    def tau_r_left(self) -> complex:
        return complex(self.tau_zr, self.tau_yr_left)

    @property
    def tau_r_right(self) -> complex:
        return complex(self.tau_zr, self.tau_yr_right)

    @property
    def delta_tau(self) -> complex:
        return self.tau_t - self.tau_r_left

    @property
    def scale(self) -> float:
        return max(abs(self.tau_t), abs(self.tau_r_left), abs(self.tau_r_right))


@dataclass(frozen=True)
class SpinfulAmplitudes:
    omega_probe: float
    plus: ScatteringAmplitudes
    minus: ScatteringAmplitudes


def default_probe_omega(barrier: BarrierSpec, k: float) -> float:
    energy = barrier.units.energy(k)
    return DEFAULT_PROBE_FRACTION * max(barrier.v0, energy) / barrier.units.hbar


def spin_split_solve(
    barrier: BarrierSpec,
    k: float,
    omega_probe: float,
    slices: int = DEFAULT_SLICES,
) -> SpinfulAmplitudes:
    """Amplitudes for spin +z (barrier lowered by ħω/2) and spin -z (raised)."""
    if omega_probe < 0:
        raise ValueError(f"omega_probe must be non-negative, got {omega_probe}")

    half_split = 0.5 * barrier.units.hbar * omega_probe
    gap = min(barrier.v0, barrier.v0 - barrier.units.energy(k))
    if half_split > 0 and (gap <= 0 or 2.0 * half_split > WEAK_PROBE_LIMIT * gap):
        print(
            f"Warning: Larmor probe hbar*omega={2.0 * half_split:.3e} is not small "
            f"against min(V0, V0-E)={gap:.3e} at k={k:g}",
            file=sys.stderr,
        )

    return SpinfulAmplitudes(
        omega_probe=omega_probe,
        plus=solve_amplitudes(barrier, k, spin_shift=-half_split, slices=slices),
        minus=solve_amplitudes(barrier, k, spin_shift=half_split, slices=slices),
    )


def _require_amplitude(k: float, name: str, value: complex):
    if abs(value) < MIN_AMPLITUDE:
        raise LarmorError(k, name, abs(value))


def _log_ratio_times(spinful: SpinfulAmplitudes) -> Tuple[complex, complex, complex]:
    omega = spinful.omega_probe
    plus, minus = spinful.plus, spinful.minus
    return (
        np.log(plus.t / minus.t) / omega,
        np.log(plus.r_left / minus.r_left) / omega,
        np.log(plus.r_right / minus.r_right) / omega,
    )


def complex_times(
    barrier: BarrierSpec,
    k: float,
    omega_probe: Optional[float] = None,
    slices: int = DEFAULT_SLICES,
) -> ComplexTimes:
    """Larmor times from the first-order spin-split response.

    ln(t_+/t_-)/ω gives τ_t with an O(ω²) error; one Richardson step between
    ω and ω/2 removes it.
    """
    if omega_probe is None:
        omega_probe = default_probe_omega(barrier, k)
    if not omega_probe > 0:
        raise ValueError(f"omega_probe must be positive, got {omega_probe}")

    baseline = solve_amplitudes(barrier, k, slices=slices)
    _require_amplitude(k, "t", baseline.t)
    _require_amplitude(k, "r_left", baseline.r_left)
    _require_amplitude(k, "r_right", baseline.r_right)

    coarse = _log_ratio_times(spin_split_solve(barrier, k, omega_probe, slices))
    fine = _log_ratio_times(spin_split_solve(barrier, k, omega_probe / 2.0, slices))
    tau_t, tau_r_left, tau_r_right = (
        (4.0 * fine_value - coarse_value) / 3.0 for fine_value, coarse_value in zip(fine, coarse)
    )

    return ComplexTimes(
        tau_zt=float(tau_t.real),
        tau_zr=float(tau_r_left.real),
        tau_yt=float(tau_t.imag),
        tau_yr_left=float(tau_r_left.imag),
        tau_yr_right=float(tau_r_right.imag),
    )


def _kappa_log_derivative(amplitude_index: int, kappa: float, k: float, width: float) -> complex:
    step = KAPPA_STEP * kappa
    reference = square_amplitudes_from_kappa(kappa, k, width)[amplitude_index]

    def log_ratio(offset: float) -> complex:
        return np.log(square_amplitudes_from_kappa(kappa + offset, k, width)[amplitude_index] / reference)

    return (
        -log_ratio(2.0 * step) + 8.0 * log_ratio(step) - 8.0 * log_ratio(-step) + log_ratio(-2.0 * step)
    ) / (12.0 * step)


def analytic_square_larmor(
    v0: float,
    d: float,
    k: float,
    units: UnitSystem = UnitSystem(),
) -> ComplexTimes:
    """Square-barrier times from κ-derivatives of the closed-form amplitudes.

    τ = -(m/ħκ) ∂ ln(amplitude)/∂κ, whose real part is the z-time and whose
    imaginary part is the y-time.
    """
    kappa = square_kappa(v0, k, units)
    if not (k > 0 and kappa.imag == 0 and kappa.real > 0):
        raise ValueError(f"k={k} is outside (0, k0) for the square barrier")

    kappa = kappa.real
    prefactor = -units.mass / (units.hbar * kappa)
    tau_t = prefactor * _kappa_log_derivative(0, kappa, k, d)
    tau_r = prefactor * _kappa_log_derivative(1, kappa, k, d)
    return ComplexTimes(
        tau_zt=float(tau_t.real),
        tau_zr=float(tau_r.real),
        tau_yt=float(tau_t.imag),
        tau_yr_left=float(tau_r.imag),
        tau_yr_right=float(tau_r.imag),
    )
