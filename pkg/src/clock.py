from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from src.contextual import (
    ContextualValues,
    TransformedOperators,
    cvs_closed_form,
    second_moment_cvs,
    solve_cvs_linear,
    transformed_operators,
)
from src.dwell import DwellEigensystem, DwellMatrix, dwell_eigensystem, dwell_matrix, squared_matrix
from src.estimators import (
    ConditionedResult,
    InitialSystemState,
    MomentResult,
    Side,
    conditioned_average,
    conditioned_average_closed_form,
    disturbance,
    expectation_via_cvs,
    second_moment_and_uncertainty,
    steinberg_time,
    weak_value,
)
from src.larmor import ComplexTimes, complex_times, default_probe_omega
from src.potential import BarrierSpec
from src.scattering import DEFAULT_SLICES, InteriorWave, ScatteringAmplitudes, interior_wavefunctions, solve_amplitudes
from src.spin_meter import (
    MeasurementOperators,
    ProbabilityOperators,
    SpinPostSelection,
    measurement_operators,
    povm_elements,
)


@dataclass(eq=False)
class ClockPoint:
    """Every stage of the Larmor-clock pipeline at one wavenumber, computed on demand."""

    barrier: BarrierSpec
    k: float
    spin: SpinPostSelection
    omega: float
    probe_omega: Optional[float] = None
    slices: int = DEFAULT_SLICES
    state: InitialSystemState = InitialSystemState()

    @cached_property
    def amplitudes(self) -> ScatteringAmplitudes:
        return solve_amplitudes(self.barrier, self.k, slices=self.slices)

    @cached_property
    def wave(self) -> InteriorWave:
        return interior_wavefunctions(self.barrier, self.k, slices=self.slices)

    @cached_property
    def dwell(self) -> DwellMatrix:
        return dwell_matrix(self.wave, self.barrier.units)

    @cached_property
    def eigensystem(self) -> DwellEigensystem:
        return dwell_eigensystem(self.dwell)

    @cached_property
    def squared(self) -> np.ndarray:
        return squared_matrix(self.dwell)

    @cached_property
    def effective_probe(self) -> float:
        if self.probe_omega is not None:
            return self.probe_omega
        return default_probe_omega(self.barrier, self.k)

    @cached_property
    def times(self) -> ComplexTimes:
        return complex_times(self.barrier, self.k, self.effective_probe, slices=self.slices)

    @cached_property
    def operators(self) -> MeasurementOperators:
        return measurement_operators(self.amplitudes, self.times, self.spin)

    @cached_property
    def povm(self) -> ProbabilityOperators:
        return povm_elements(self.operators, self.omega)

    @cached_property
    def transformed(self) -> TransformedOperators:
        return transformed_operators(self.dwell, self.amplitudes, self.times, self.spin)

    @cached_property
    def cvs(self) -> ContextualValues:
        return solve_cvs_linear(self.transformed, self.spin, self.omega)

    @cached_property
    def cvs_closed(self) -> ContextualValues:
        return cvs_closed_form(self.transformed, self.dwell, self.amplitudes, self.times, self.spin, self.omega)

    @cached_property
    def beta(self) -> ContextualValues:
        return second_moment_cvs(self.squared, self.amplitudes, self.times, self.spin, self.omega)

    @cached_property
    def expectation(self) -> float:
        return expectation_via_cvs(self.cvs, self.povm, self.state)

    @cached_property
    def weak(self) -> complex:
        return weak_value(self.dwell, self.amplitudes)

    @cached_property
    def conditioned(self) -> ConditionedResult:
        return conditioned_average(self.cvs, self.povm, self.state, Side.TRANSMITTED, self.dwell)

    @cached_property
    def conditioned_reflected(self) -> ConditionedResult:
        return conditioned_average(self.cvs, self.povm, self.state, Side.REFLECTED, self.dwell)

    @cached_property
    def conditioned_closed(self) -> ConditionedResult:
        return conditioned_average_closed_form(
            self.transformed, self.cvs_closed, self.dwell, self.amplitudes, self.times, self.spin
        )

    @cached_property
    def disturbance(self) -> float:
        return disturbance(self.operators, self.cvs, self.state, Side.TRANSMITTED, self.weak, self.dwell)

    @cached_property
    def moments(self) -> MomentResult:
        return second_moment_and_uncertainty(self.beta, self.povm, self.state, self.cvs)

    @cached_property
    def steinberg(self) -> complex:
        return steinberg_time(self.wave, self.amplitudes, self.barrier.units)
