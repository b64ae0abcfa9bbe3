import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np


DEFAULT_HBAR = 1.0
DEFAULT_MASS = 0.5
SYMMETRY_TOLERANCE = 1e-12


class BarrierKind(str, Enum):
    SQUARE = "square"
    QUADRATIC_SYMMETRIC = "quadratic"
    TRAPEZOID = "trapezoid"
    SAMPLED = "sampled"


BARRIER_KIND_ALIASES = {
    "box": "square",
    "rectangular": "square",
    "quadratic_symmetric": "quadratic",
    "parabolic": "quadratic",
    "symmetric": "quadratic",
    "trapezoidal": "trapezoid",
    "asymmetric": "trapezoid",
    "samples": "sampled",
    "table": "sampled",
}


def parse_barrier_kind(value: Union[str, BarrierKind]) -> BarrierKind:
    if isinstance(value, BarrierKind):
        return value

    normalized = str(value).strip().casefold().replace("-", "_")
    normalized = BARRIER_KIND_ALIASES.get(normalized, normalized)
    try:
        return BarrierKind(normalized)
    except ValueError as exc:
        known = ", ".join(kind.value for kind in BarrierKind)
        raise ValueError(f"unknown barrier kind {value!r} (expected one of: {known})") from exc


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = DEFAULT_HBAR
    mass: float = DEFAULT_MASS

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    def wavenumber_squared(self, energy):
        """2mE/ħ², the reduced form used by the Schrödinger equation."""
        return 2.0 * self.mass * energy / self.hbar**2

    def energy(self, k: float) -> float:
        return (self.hbar * k) ** 2 / (2.0 * self.mass)

    def flux_factor(self, k: float) -> float:
        """m/(ħk): inverse incident flux of a unit-amplitude plane wave."""
        return self.mass / (self.hbar * k)


@dataclass(frozen=True)
class BarrierSpec:
    kind: BarrierKind
    v0: float
    width: float
    quad_coeff: float = 0.0
    slope_total: float = 0.0
    samples: Tuple[Tuple[float, float], ...] = ()
    units: UnitSystem = field(default_factory=UnitSystem)

    @property
    def half_width(self) -> float:
        return 0.5 * self.width

    @property
    def k0(self) -> float:
        return math.sqrt(2.0 * self.units.mass * self.v0) / self.units.hbar

    def describe(self) -> str:
        if self.kind == BarrierKind.QUADRATIC_SYMMETRIC:
            return f"quadratic barrier V0={self.v0:g}, a={self.quad_coeff:g}, d={self.width:g}"
        if self.kind == BarrierKind.TRAPEZOID:
            return f"trapezoid barrier V0={self.v0:g}, epsilon={self.slope_total:g}, d={self.width:g}"
        if self.kind == BarrierKind.SAMPLED:
            return f"sampled barrier ({len(self.samples)} samples), d={self.width:g}"
        return f"square barrier V0={self.v0:g}, d={self.width:g}"


def make_barrier(
    kind: Union[str, BarrierKind],
    params: Dict[str, Any],
    units: Optional[UnitSystem] = None,
) -> BarrierSpec:
    """Build a validated barrier from loosely typed parameters.

    Recognised keys: v0, d, a, epsilon, samples. Sampled barriers take their
    width from the sample span unless d is given.
    """
    kind = parse_barrier_kind(kind)
    units = units or UnitSystem()

    samples: Tuple[Tuple[float, float], ...] = ()
    if kind == BarrierKind.SAMPLED:
        samples = _validate_samples(params.get("samples"))
        width = float(params.get("d") or (samples[-1][0] - samples[0][0]))
        v0 = float(params.get("v0", samples[0][1]))
    else:
        width = float(params.get("d", 1.0))
        v0 = float(params.get("v0", 0.0))

    if not width > 0:
        raise ValueError(f"d must be positive, got {width}")
    if v0 < 0:
        raise ValueError(f"v0 must be non-negative, got {v0}")

    quad_coeff = float(params.get("a", 0.0)) if kind == BarrierKind.QUADRATIC_SYMMETRIC else 0.0
    slope_total = float(params.get("epsilon", 0.0)) if kind == BarrierKind.TRAPEZOID else 0.0

    if kind == BarrierKind.QUADRATIC_SYMMETRIC and v0 + quad_coeff * width**2 / 4.0 < 0:
        raise ValueError("quadratic barrier must stay non-negative: v0 + a*d^2/4 < 0")
    if kind == BarrierKind.TRAPEZOID and v0 + slope_total < 0:
        raise ValueError("trapezoid barrier must stay non-negative: v0 + epsilon < 0")
    if kind == BarrierKind.SAMPLED:
        half = width / 2.0
        if samples[0][0] > -half + 1e-12 * width or samples[-1][0] < half - 1e-12 * width:
            raise ValueError(f"samples must cover [-{half:g}, {half:g}]")

    return BarrierSpec(
        kind=kind,
        v0=v0,
        width=width,
        quad_coeff=quad_coeff,
        slope_total=slope_total,
        samples=samples,
        units=units,
    )


def _validate_samples(raw: Optional[Iterable[Sequence[float]]]) -> Tuple[Tuple[float, float], ...]:
    if not raw:
        raise ValueError("sampled barrier requires a non-empty samples list")

    samples = []
    for item in raw:
        try:
            x, value = item
            samples.append((float(x), float(value)))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"samples must be [x, V] pairs, got {item!r}") from exc

    xs = [x for x, _ in samples]
    if any(later <= earlier for earlier, later in zip(xs, xs[1:])):
        raise ValueError("sample positions must be strictly increasing")
    if any(value < 0 for _, value in samples):
        raise ValueError("sampled potential must be non-negative")

    return tuple(samples)


def evaluate(barrier: BarrierSpec, x, spin_shift: float = 0.0):
    """V(x) + spin_shift inside [-d/2, d/2], exactly zero outside."""
    positions = np.asarray(x, dtype=float)
    half = barrier.half_width

    if barrier.kind == BarrierKind.QUADRATIC_SYMMETRIC:
        inside_value = barrier.v0 + barrier.quad_coeff * positions**2
    elif barrier.kind == BarrierKind.TRAPEZOID:
        inside_value = barrier.v0 + barrier.slope_total * (0.5 + positions / barrier.width)
    elif barrier.kind == BarrierKind.SAMPLED:
        inside_value = _sampled_values(barrier.samples, positions)
    else:
        inside_value = np.full_like(positions, barrier.v0)

    values = np.where(np.abs(positions) <= half, inside_value + spin_shift, 0.0)
    if values.ndim == 0:
        return float(values)
    return values


def _sampled_values(samples: Tuple[Tuple[float, float], ...], positions: np.ndarray) -> np.ndarray:
    xs = np.array([x for x, _ in samples])
    vs = np.array([value for _, value in samples])
    # each sample owns the cell between the midpoints to its neighbours
    cell_edges = 0.5 * (xs[1:] + xs[:-1])
    return vs[np.searchsorted(cell_edges, positions, side="right")]


def discretize(
    barrier: BarrierSpec,
    slices: int,
    spin_shift: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Midpoint slicing: (edges, midpoints, potential on each slice)."""
    if slices < 1:
        raise ValueError(f"slices must be at least 1, got {slices}")

    edges = np.linspace(-barrier.half_width, barrier.half_width, slices + 1)
    midpoints = 0.5 * (edges[1:] + edges[:-1])
    return edges, midpoints, evaluate(barrier, midpoints, spin_shift)


def min_local_k0(barrier: BarrierSpec, slices: int = 2000) -> float:
    _, _, values = discretize(barrier, slices)
    return math.sqrt(2.0 * barrier.units.mass * max(float(np.min(values)), 0.0)) / barrier.units.hbar


def is_symmetric(barrier: BarrierSpec, slices: int = 2000) -> bool:
    _, _, values = discretize(barrier, slices)
    scale = max(float(np.max(np.abs(values))), 1.0)
    return bool(np.all(np.abs(values - values[::-1]) <= SYMMETRY_TOLERANCE * scale))


def mirrored(barrier: BarrierSpec) -> BarrierSpec:
    if barrier.kind == BarrierKind.TRAPEZOID:
        return replace(barrier, v0=barrier.v0 + barrier.slope_total, slope_total=-barrier.slope_total)
    if barrier.kind == BarrierKind.SAMPLED:
        reflected = tuple((-x, value) for x, value in reversed(barrier.samples))
        return replace(barrier, samples=reflected)
    return barrier
