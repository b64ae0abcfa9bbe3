import csv
import json
import math
import sys
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from src.clock import ClockPoint
from src.contextual import SingularContext
from src.estimators import AsymmetricBarrierError, EstimatorError, OpaqueBarrierError
from src.larmor import LarmorError
from src.potential import BarrierSpec, UnitSystem, make_barrier, min_local_k0
from src.scattering import DEFAULT_SLICES, ScatteringError
from src.spin_meter import SpinPostSelection, postselection_overlaps
from src.workers import ordered_map


DEFAULT_V0 = (3.0 * math.pi) ** 2
DEFAULT_THETA = math.pi / 2.0 - math.pi / 8.0
DEFAULT_PHI = math.pi / 4.0
DEFAULT_KMIN = 0.05
DEFAULT_KMAX = 0.95
DEFAULT_POINTS = 181
OMEGA_FRACTION = 1e-3
OUTPUT_FORMATS = ("csv", "json")

STATUS_OK = "ok"
STATUS_SINGULAR = "singular_context"
STATUS_OPAQUE = "opaque_barrier"
STATUS_ESTIMATOR = "estimator_failure"
STATUS_ASYMMETRIC = "asymmetric_barrier"
STATUS_NUMERICAL = "numerical_failure"

CONFIG_DEFAULTS: Dict[str, Any] = {
    "barrier": "square",
    "v0": DEFAULT_V0,
    "d": 1.0,
    "a": 0.0,
    "epsilon": 0.0,
    "samples": None,
    "hbar": 1.0,
    "mass": 0.5,
    "theta": DEFAULT_THETA,
    "phi": DEFAULT_PHI,
    "omega": None,
    "probe_omega": None,
    "kmin": DEFAULT_KMIN,
    "kmax": DEFAULT_KMAX,
    "n": DEFAULT_POINTS,
    "slices": DEFAULT_SLICES,
    "outputs": None,
    "format": "csv",
    "seed": 0,
}

FLOAT_FIELDS = ("v0", "d", "a", "epsilon", "hbar", "mass", "theta", "phi", "omega", "probe_omega", "kmin", "kmax")
INT_FIELDS = ("n", "slices", "seed")


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        details = "\n".join(f"  - {problem}" for problem in self.problems)
        super().__init__(f"Invalid configuration:\n{details}")


@dataclass(frozen=True)
class Quantity:
    description: str
    extract: Callable[[ClockPoint], Optional[float]]
    phase: bool = False


QUANTITIES: Dict[str, Quantity] = {
    "t_re": Quantity("Re t", lambda p: p.amplitudes.t.real),
    "t_im": Quantity("Im t", lambda p: p.amplitudes.t.imag),
    "r_left_re": Quantity("Re r^l", lambda p: p.amplitudes.r_left.real),
    "r_left_im": Quantity("Im r^l", lambda p: p.amplitudes.r_left.imag),
    "r_right_re": Quantity("Re r^r", lambda p: p.amplitudes.r_right.real),
    "r_right_im": Quantity("Im r^r", lambda p: p.amplitudes.r_right.imag),
    "transmission": Quantity("T = |t|^2", lambda p: p.amplitudes.T),
    "reflection": Quantity("R = |r|^2", lambda p: p.amplitudes.R),
    "phase_t": Quantity("arg t, unwrapped along k", lambda p: p.amplitudes.phase_t, phase=True),
    "phase_r_left": Quantity("arg r^l, unwrapped along k", lambda p: p.amplitudes.phase_r_left, phase=True),
    "phase_r_right": Quantity("arg r^r, unwrapped along k", lambda p: p.amplitudes.phase_r_right, phase=True),
    "tau_d": Quantity("dwell time C_ll", lambda p: p.dwell.c_ll),
    "c_rr": Quantity("C_rr", lambda p: p.dwell.c_rr),
    "c_rl_re": Quantity("Re C_rl", lambda p: p.dwell.c_rl.real),
    "c_rl_im": Quantity("Im C_rl", lambda p: p.dwell.c_rl.imag),
    "lambda_plus": Quantity("upper dwell eigenvalue", lambda p: p.eigensystem.lambda_plus),
    "lambda_minus": Quantity("lower dwell eigenvalue", lambda p: p.eigensystem.lambda_minus),
    "tau_zt": Quantity("Larmor tilt time, transmitted", lambda p: p.times.tau_zt),
    "tau_zr": Quantity("Larmor tilt time, reflected", lambda p: p.times.tau_zr),
    "tau_yt": Quantity("Larmor precession time, transmitted", lambda p: p.times.tau_yt),
    "tau_yr_left": Quantity("Larmor precession time, reflected from the left", lambda p: p.times.tau_yr_left),
    "tau_yr_right": Quantity("Larmor precession time, reflected from the right", lambda p: p.times.tau_yr_right),
    "wl_alpha_r_plus": Quantity("omega * alpha_{r,+n}", lambda p: p.cvs.scaled("r", 1)),
    "wl_alpha_r_minus": Quantity("omega * alpha_{r,-n}", lambda p: p.cvs.scaled("r", -1)),
    "wl_alpha_l_plus": Quantity("omega * alpha_{l,+n}", lambda p: p.cvs.scaled("l", 1)),
    "wl_alpha_l_minus": Quantity("omega * alpha_{l,-n}", lambda p: p.cvs.scaled("l", -1)),
    "alpha0_r": Quantity("alpha0_r", lambda p: p.cvs.alpha0_r),
    "alpha0_l": Quantity("alpha0_l", lambda p: p.cvs.alpha0_l),
    "alpha1_r": Quantity("alpha1_r", lambda p: p.cvs.alpha1_r),
    "alpha1_l": Quantity("alpha1_l", lambda p: p.cvs.alpha1_l),
    "f_r": Quantity("f_r", lambda p: p.cvs.f_r),
    "f_l": Quantity("f_l", lambda p: p.cvs.f_l),
    "condition_number": Quantity("condition number of the CV system", lambda p: p.cvs.condition_number),
    "expectation": Quantity("CV-weighted dwell time", lambda p: p.expectation),
    "cond_avg": Quantity("conditioned average, transmitted", lambda p: p.conditioned.conditioned_avg),
    "cond_avg_closed": Quantity("closed-form conditioned average", lambda p: p.conditioned_closed.conditioned_avg),
    "cond_avg_reflected": Quantity(
        "conditioned average, reflected", lambda p: p.conditioned_reflected.conditioned_avg
    ),
    "transmitted_prob": Quantity("post-selection probability P_{l,r}", lambda p: p.conditioned.probability),
    "weak_re": Quantity("Re of the dwell-time weak value", lambda p: p.weak.real),
    "weak_im": Quantity("Im of the dwell-time weak value", lambda p: p.weak.imag),
    "disturbance": Quantity("disturbance D_n", lambda p: p.disturbance),
    "second_moment": Quantity("<T_d^2>", lambda p: p.moments.second_moment),
    "delta_t": Quantity("dwell-time uncertainty", lambda p: p.moments.uncertainty),
    "steinberg_re": Quantity("Re Steinberg time", lambda p: p.steinberg.real),
    "steinberg_im": Quantity("Im Steinberg time", lambda p: p.steinberg.imag),
}

QUANTITY_ALIASES = {
    "t_abs2": "transmission",
    "r_abs2": "reflection",
    "dwell": "tau_d",
    "dwell_time": "tau_d",
    "c_ll": "tau_d",
    "conditioned": "cond_avg",
    "conditioned_average": "cond_avg",
    "weak_value_re": "weak_re",
    "weak_value_im": "weak_im",
    "uncertainty": "delta_t",
    "variance_sqrt": "delta_t",
    "d_n": "disturbance",
}

COMMAND_OUTPUTS = {
    "amplitudes": ("transmission", "reflection", "phase_t", "phase_r_left", "phase_r_right"),
    "dwell": ("tau_d", "c_rr", "c_rl_re", "c_rl_im", "lambda_plus", "lambda_minus"),
    "larmor": ("tau_zt", "tau_zr", "tau_yt", "tau_yr_left", "tau_yr_right"),
    "cv": (
        "wl_alpha_r_plus",
        "wl_alpha_r_minus",
        "wl_alpha_l_plus",
        "wl_alpha_l_minus",
        "alpha0_r",
        "alpha0_l",
        "condition_number",
    ),
    "conditioned": ("cond_avg", "cond_avg_closed", "weak_re", "weak_im", "disturbance", "transmitted_prob"),
    "moments": ("tau_d", "second_moment", "delta_t"),
}

FIGURE_CV_OUTPUTS = ("wl_alpha_r_plus", "wl_alpha_r_minus", "wl_alpha_l_plus", "wl_alpha_l_minus")
FIGURE_CONDITIONED_OUTPUTS = ("cond_avg", "weak_re", "disturbance")

FIGURE_PRESETS: Dict[str, Dict[str, Any]] = {
    "fig2a": {"barrier": "square", "outputs": FIGURE_CV_OUTPUTS},
    "fig2b": {"barrier": "quadratic", "a": DEFAULT_V0, "outputs": FIGURE_CV_OUTPUTS},
    "fig2c": {"barrier": "trapezoid", "epsilon": 0.5 * DEFAULT_V0, "outputs": FIGURE_CV_OUTPUTS},
    "fig3a": {"barrier": "square", "outputs": FIGURE_CONDITIONED_OUTPUTS},
    "fig3b": {
        "barrier": "square",
        "theta": math.pi / 2.0 - math.pi / 200.0,
        "outputs": FIGURE_CONDITIONED_OUTPUTS,
    },
    "fig3c": {"barrier": "quadratic", "a": DEFAULT_V0, "outputs": FIGURE_CONDITIONED_OUTPUTS},
}

FIGURE_DESCRIPTIONS = {
    "fig2a": "Square barrier, omega*alpha CVs (flat in k)",
    "fig2b": "Quadratic barrier a=V0/d^2, omega*alpha CVs",
    "fig2c": "Trapezoid barrier epsilon=0.5*V0, omega*alpha CVs",
    "fig3a": "Square barrier, conditioned average vs weak value (theta=pi/2-pi/8)",
    "fig3b": "Square barrier, conditioned average vs weak value (theta=pi/2-pi/200)",
    "fig3c": "Quadratic barrier, conditioned average vs weak value",
}


@dataclass(frozen=True)
class SweepConfig:
    barrier: BarrierSpec
    kmin: float
    kmax: float
    n: int
    theta: float
    phi: float
    omega: float
    probe_omega: Optional[float]
    slices: int
    outputs: Tuple[str, ...]
    format: str = "csv"
    seed: int = 0

    @property
    def k_unit(self) -> float:
        """k0 of the barrier, or 1 for a barrier without a reference height."""
        k0 = self.barrier.k0
        return k0 if k0 > 0 else 1.0

    @property
    def ks(self) -> np.ndarray:
        return np.linspace(self.kmin, self.kmax, self.n) * self.k_unit

    @property
    def spin(self) -> SpinPostSelection:
        return postselection_overlaps(self.theta, self.phi)


@dataclass(frozen=True)
class OutputRow:
    k_over_k0: float
    values: Dict[str, Optional[float]] = field(default_factory=dict)
    status: str = STATUS_OK


def figure_preset_values(name: str) -> Dict[str, Any]:
    normalized = name.strip().casefold()
    if normalized not in FIGURE_PRESETS:
        raise ConfigError([f"unknown figure preset '{name}' (expected one of: {', '.join(FIGURE_PRESETS)})"])
    values = dict(FIGURE_PRESETS[normalized])
    values["outputs"] = list(values["outputs"])
    return values


def figure_preset(name: str) -> SweepConfig:
    return build_config(figure_preset_values(name))


def parse_quantities(value: Any) -> Tuple[str, ...]:
    if isinstance(value, str):
        raw_names = value.split(",")
    else:
        raw_names = list(value)

    names: List[str] = []
    unknown = []
    for raw_name in raw_names:
        name = str(raw_name).strip().casefold().replace("-", "_")
        if not name:
            continue
        name = QUANTITY_ALIASES.get(name, name)
        if name not in QUANTITIES:
            unknown.append(str(raw_name).strip())
            continue
        if name not in names:
            names.append(name)

    if unknown:
        raise ValueError(f"unknown output quantity name(s): {', '.join(unknown)}")
    if not names:
        raise ValueError("at least one output quantity is required")
    return tuple(names)


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {path} is not valid JSON: {exc}"]) from exc

    if not isinstance(data, dict):
        raise ConfigError([f"config file {path} must contain a JSON object"])
    unknown = sorted(set(data) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError([f"unknown config key(s): {', '.join(unknown)}"])
    return data


def default_omega(barrier: BarrierSpec, kmax: float, k_unit: float) -> float:
    if barrier.v0 > 0:
        return OMEGA_FRACTION * barrier.v0 / barrier.units.hbar
    return OMEGA_FRACTION * barrier.units.energy(kmax * k_unit) / barrier.units.hbar


def build_config(
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    default_outputs: Sequence[str] = COMMAND_OUTPUTS["dwell"],
) -> SweepConfig:
    """Merge defaults < file < flags and validate every field, reporting all problems at once."""
    merged = dict(CONFIG_DEFAULTS)
    merged.update({key: value for key, value in (file_values or {}).items() if value is not None})
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})

    problems: List[str] = []
    for name in FLOAT_FIELDS:
        if merged[name] is None:
            continue
        try:
            merged[name] = float(merged[name])
        except (TypeError, ValueError):
            problems.append(f"{name}: expected a number, got {merged[name]!r}")
            merged[name] = CONFIG_DEFAULTS[name]
    for name in INT_FIELDS:
        try:
            if isinstance(merged[name], float) and not merged[name].is_integer():
                raise ValueError
            merged[name] = int(merged[name])
        except (TypeError, ValueError):
            problems.append(f"{name}: expected an integer, got {merged[name]!r}")
            merged[name] = CONFIG_DEFAULTS[name]

    barrier = None
    try:
        units = UnitSystem(hbar=merged["hbar"], mass=merged["mass"])
        barrier = make_barrier(
            merged["barrier"],
            {
                "v0": merged["v0"],
                "d": merged["d"],
                "a": merged["a"],
                "epsilon": merged["epsilon"],
                "samples": merged["samples"],
            },
            units,
        )
    except ValueError as exc:
        problems.append(f"barrier: {exc}")

    if not 0 < merged["kmin"] < merged["kmax"]:
        problems.append(f"kmin/kmax: need 0 < kmin < kmax, got kmin={merged['kmin']}, kmax={merged['kmax']}")
    if merged["n"] < 2:
        problems.append(f"n: need at least 2 points, got {merged['n']}")
    if merged["slices"] < 1:
        problems.append(f"slices: must be positive, got {merged['slices']}")
    if merged["omega"] is not None and not merged["omega"] > 0:
        problems.append(f"omega: must be positive, got {merged['omega']}")
    if merged["probe_omega"] is not None and not merged["probe_omega"] > 0:
        problems.append(f"probe_omega: must be positive, got {merged['probe_omega']}")
    if not 0 < merged["theta"] < math.pi:
        problems.append(f"theta: must lie in (0, pi), got {merged['theta']}")
    if not 0 < merged["phi"] < 2.0 * math.pi:
        problems.append(f"phi: must lie in (0, 2*pi), got {merged['phi']}")

    output_format = str(merged["format"]).strip().casefold()
    if output_format not in OUTPUT_FORMATS:
        problems.append(f"format: expected one of {', '.join(OUTPUT_FORMATS)}, got {merged['format']!r}")

    outputs: Tuple[str, ...] = ()
    try:
        outputs = parse_quantities(merged["outputs"] if merged["outputs"] is not None else default_outputs)
    except ValueError as exc:
        problems.append(f"outputs: {exc}")

    if problems:
        raise ConfigError(problems)

    k_unit = barrier.k0 if barrier.k0 > 0 else 1.0
    omega = merged["omega"] or default_omega(barrier, merged["kmax"], k_unit)
    return SweepConfig(
        barrier=barrier,
        kmin=merged["kmin"],
        kmax=merged["kmax"],
        n=merged["n"],
        theta=merged["theta"],
        phi=merged["phi"],
        omega=omega,
        probe_omega=merged["probe_omega"],
        slices=merged["slices"],
        outputs=outputs,
        format=output_format,
        seed=merged["seed"],
    )


def failure_status(exc: Exception) -> str:
    if isinstance(exc, SingularContext):
        return STATUS_SINGULAR
    if isinstance(exc, (LarmorError, OpaqueBarrierError)):
        return STATUS_OPAQUE
    if isinstance(exc, AsymmetricBarrierError):
        return STATUS_ASYMMETRIC
    if isinstance(exc, EstimatorError):
        return STATUS_ESTIMATOR
    return STATUS_NUMERICAL


NUMERICAL_ERRORS = (ScatteringError, FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError)
ROW_ERRORS = (SingularContext, LarmorError, EstimatorError, AsymmetricBarrierError) + NUMERICAL_ERRORS


def evaluate_row(indexed_k: Tuple[int, float], config: SweepConfig) -> OutputRow:
    _, k = indexed_k
    point = ClockPoint(
        barrier=config.barrier,
        k=float(k),
        spin=config.spin,
        omega=config.omega,
        probe_omega=config.probe_omega,
        slices=config.slices,
    )

    values: Dict[str, Optional[float]] = {}
    status = STATUS_OK
    for name in config.outputs:
        try:
            value = QUANTITIES[name].extract(point)
            values[name] = float(value) if value is not None and np.isfinite(value) else None
        except ROW_ERRORS as exc:
            values[name] = None
            if status == STATUS_OK:
                status = failure_status(exc)
    return OutputRow(k_over_k0=float(k) / config.k_unit, values=values, status=status)


def _unwrap_phase_columns(rows: List[OutputRow], outputs: Sequence[str]) -> List[OutputRow]:
    for name in outputs:
        if not QUANTITIES[name].phase:
            continue
        indices = [index for index, row in enumerate(rows) if row.values.get(name) is not None]
        if len(indices) < 2:
            continue
        unwrapped = np.unwrap([rows[index].values[name] for index in indices])
        for index, value in zip(indices, unwrapped):
            rows[index].values[name] = float(value)
    return rows


def warn_outside_tunneling(config: SweepConfig):
    local_k0 = min_local_k0(config.barrier, config.slices)
    k_top = config.kmax * config.k_unit
    if k_top > local_k0:
        print(
            f"Warning: k up to {k_top:.6g} exceeds min_x k0(x) = {local_k0:.6g}; "
            "some points are outside the tunneling regime",
            file=sys.stderr,
        )


def run_sweep(config: SweepConfig, workers: Optional[int] = None) -> List[OutputRow]:
    """Rows in ascending k; parallel over k with the input order preserved."""
    warn_outside_tunneling(config)
    evaluate = partial(evaluate_row, config=config)
    rows = ordered_map(evaluate, list(enumerate(config.ks)), workers=workers)
    return _unwrap_phase_columns(rows, config.outputs)


def status_counts(rows: Iterable[OutputRow]) -> Counter:
    return Counter(row.status for row in rows)


def format_number(value: Optional[float]) -> str:
    if value is None:
        return ""
    return format(value, ".17g")


def write_csv(rows: Sequence[OutputRow], outputs: Sequence[str], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["k_over_k0", *outputs, "status"])
    for row in rows:
        writer.writerow(
            [format_number(row.k_over_k0), *(format_number(row.values.get(name)) for name in outputs), row.status]
        )


def write_json(rows: Sequence[OutputRow], outputs: Sequence[str], stream: TextIO):
    payload = [
        {"k_over_k0": row.k_over_k0, **{name: row.values.get(name) for name in outputs}, "status": row.status}
        for row in rows
    ]
    json.dump(payload, stream, indent=2, ensure_ascii=False)
    stream.write("\n")


def write_rows(rows: Sequence[OutputRow], outputs: Sequence[str], output_format: str, stream: TextIO):
    if output_format == "json":
        write_json(rows, outputs, stream)
    else:
        write_csv(rows, outputs, stream)
