import argparse
import csv
import json
import math
import sys
from collections import Counter
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, TextIO

from dotenv import load_dotenv

from src.sweep import (
    COMMAND_OUTPUTS,
    FIGURE_DESCRIPTIONS,
    FIGURE_PRESETS,
    OUTPUT_FORMATS,
    STATUS_NUMERICAL,
    STATUS_OK,
    ConfigError,
    SweepConfig,
    build_config,
    figure_preset_values,
    format_number,
    load_config_file,
    run_sweep,
    status_counts,
    write_rows,
)
from src.verify import IdentityReport, run_all_identities, summarize


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_PARTIAL = 4

SWEEP_COMMANDS = tuple(COMMAND_OUTPUTS)
OVERRIDE_FIELDS = (
    "barrier",
    "v0",
    "d",
    "a",
    "epsilon",
    "samples",
    "hbar",
    "mass",
    "theta",
    "phi",
    "omega",
    "probe_omega",
    "kmin",
    "kmax",
    "n",
    "slices",
    "outputs",
    "format",
    "seed",
)
REPORT_COLUMNS = ("name", "k", "residual", "tolerance", "passed", "skipped", "reason")


def parse_angle(value: str) -> float:
    """Accept plain floats or sums of pi multiples such as 'pi/4' or 'pi/2-pi/8'."""
    normalized = value.strip().casefold().replace(" ", "")
    if "pi" not in normalized:
        try:
            return float(normalized)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid angle '{value}'") from exc

    terms = normalized.replace("+", " +").replace("-", " -").split()
    return sum(_pi_term(term, value) for term in terms)


def _pi_term(normalized: str, value: str) -> float:
    numerator, _, denominator = normalized.partition("/")
    factor = numerator.replace("*", "").replace("pi", "")
    try:
        result = (float(factor) if factor not in ("", "+", "-") else float(f"{factor}1")) * math.pi
        if denominator:
            result /= float(denominator)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"invalid angle '{value}', expected e.g. 0.7 or pi/4") from exc
    return result


def parse_samples(value: str) -> List[List[float]]:
    try:
        samples = json.loads(value)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"--samples must be a JSON list of [x, V] pairs: {exc}") from exc
    if not isinstance(samples, list):
        raise argparse.ArgumentTypeError("--samples must be a JSON list of [x, V] pairs")
    return samples


def add_config_arguments(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("configuration (flag > --config file > default)")
    group.add_argument("--config", help="JSON config file with any of the flag names as keys")
    group.add_argument("--barrier", help="Barrier kind: square, quadratic, trapezoid or sampled")
    group.add_argument("--v0", type=float, help="Barrier height V0 (default: (3*pi)^2, so d*k0 = 3*pi)")
    group.add_argument("--d", type=float, help="Barrier width (default: 1)")
    group.add_argument("--a", type=float, help="Quadratic coefficient, V(x) = V0 + a*x^2")
    group.add_argument("--epsilon", type=float, help="Trapezoid rise across the barrier")
    group.add_argument("--samples", type=parse_samples, help="Sampled barrier as a JSON list of [x, V] pairs")
    group.add_argument("--hbar", type=float, help="Reduced Planck constant (default: 1)")
    group.add_argument("--mass", type=float, help="Particle mass (default: 1/2)")
    group.add_argument("--theta", type=parse_angle, help="Post-selection polar angle (default: pi/2 - pi/8)")
    group.add_argument("--phi", type=parse_angle, help="Post-selection azimuth (default: pi/4)")
    group.add_argument("--omega", type=float, help="Working Larmor frequency (default: 1e-3 * V0/hbar)")
    group.add_argument("--probe-omega", type=float, help="Larmor probe frequency for the complex times")
    group.add_argument("--kmin", type=float, help="Lowest k in units of k0 (default: 0.05)")
    group.add_argument("--kmax", type=float, help="Highest k in units of k0 (default: 0.95)")
    group.add_argument("--n", type=int, help="Number of k points (default: 181)")
    group.add_argument("--slices", type=int, help="Piecewise-constant slices per barrier")
    group.add_argument("--outputs", help="Comma-separated quantity names, in column order")
    group.add_argument("--format", choices=OUTPUT_FORMATS, help="Output format (default: csv)")
    group.add_argument("--seed", type=int, help="Seed for randomized checks (default: 0)")
    group.add_argument("--out", help="Write output to this path instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Larmor-clock tunneling times: sweeps over k, figure data and identity checks.",
        epilog=(
            "Examples:\n"
            "  python3 ttclock.py dwell --barrier square --n 11\n"
            "  python3 ttclock.py conditioned --theta pi/2-pi/8 --out cond.csv\n"
            "  python3 ttclock.py figure fig3a --format json\n"
            "  python3 ttclock.py figure --list\n"
            "  python3 ttclock.py verify --barrier quadratic --a 88.83"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command in SWEEP_COMMANDS:
        columns = ", ".join(COMMAND_OUTPUTS[command])
        subparser = subparsers.add_parser(command, help=f"Sweep k and write {columns}")
        add_config_arguments(subparser)

    figure = subparsers.add_parser("figure", help="Write the data behind a figure preset")
    figure.add_argument("name", nargs="?", help=f"Preset name: {', '.join(FIGURE_PRESETS)}")
    figure.add_argument("--list", action="store_true", help="List the presets and exit")
    add_config_arguments(figure)

    verify = subparsers.add_parser("verify", help="Check every analytic identity over the k grid")
    add_config_arguments(verify)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {name: getattr(args, name, None) for name in OVERRIDE_FIELDS}


def resolve_config(args: argparse.Namespace, layers: Sequence[Dict[str, Any]] = ()) -> SweepConfig:
    file_values: Dict[str, Any] = {}
    for layer in layers:
        file_values.update(layer)
    if args.config:
        file_values.update(load_config_file(args.config))

    default_outputs = COMMAND_OUTPUTS.get(args.command, COMMAND_OUTPUTS["dwell"])
    return build_config(file_values, collect_overrides(args), default_outputs)


@contextmanager
def open_output(path: Optional[str]) -> Iterator[TextIO]:
    if not path:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        yield handle


def print_status_counter(title: str, statuses: Counter) -> None:
    if not statuses:
        return

    print(title, file=sys.stderr)
    for key, count in sorted(statuses.items()):
        print(f"  - {key}: {count}", file=sys.stderr)


def sweep_exit_code(statuses: Counter) -> int:
    if statuses.get(STATUS_NUMERICAL):
        return EXIT_NUMERICAL_FAILURE
    if any(status != STATUS_OK for status in statuses):
        return EXIT_PARTIAL
    return EXIT_OK


def run_sweep_command(config: SweepConfig, out: Optional[str]) -> int:
    print(f"Sweeping {config.n} k point(s) over a {config.barrier.describe()}...", file=sys.stderr)
    rows = run_sweep(config)
    with open_output(out) as stream:
        write_rows(rows, config.outputs, config.format, stream)

    statuses = status_counts(rows)
    print("\nSummary:", file=sys.stderr)
    print(f"- rows written: {len(rows)}", file=sys.stderr)
    print_status_counter("- rows by status:", statuses)
    return sweep_exit_code(statuses)


def write_reports(reports: Sequence[IdentityReport], output_format: str, stream: TextIO):
    if output_format == "json":
        json.dump([report.to_dict() for report in reports], stream, indent=2, ensure_ascii=False)
        stream.write("\n")
        return

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for report in reports:
        writer.writerow(
            [
                report.name,
                format_number(report.k),
                format_number(report.abs_residual),
                format_number(report.tolerance),
                str(report.passed).lower(),
                str(report.skipped).lower(),
                report.reason,
            ]
        )


def run_verify_command(config: SweepConfig, out: Optional[str]) -> int:
    print(f"Verifying identities at {config.n} k point(s) on a {config.barrier.describe()}...", file=sys.stderr)
    reports = run_all_identities(
        config.barrier,
        config.ks,
        config.spin,
        config.omega,
        probe_omega=config.probe_omega,
        slices=config.slices,
        seed=config.seed,
    )
    with open_output(out) as stream:
        write_reports(reports, config.format, stream)

    counts = summarize(reports)
    print("\nSummary:", file=sys.stderr)
    for key in ("passed", "failed", "skipped"):
        print(f"- {key}: {counts[key]}", file=sys.stderr)
    print_status_counter(
        "- failed checks:", Counter(report.name for report in reports if not report.passed)
    )
    return EXIT_VERIFY_FAILED if counts["failed"] else EXIT_OK


def list_figures() -> int:
    print("Figure presets:")
    for name, description in FIGURE_DESCRIPTIONS.items():
        print(f"  - {name}: {description}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv(override=True)
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "figure" and args.list:
        return list_figures()

    try:
        layers = []
        if args.command == "figure":
            if not args.name:
                raise ConfigError(["figure: a preset name is required (see figure --list)"])
            layers.append(figure_preset_values(args.name))
        config = resolve_config(args, layers)
    except ConfigError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if args.command == "verify":
        return run_verify_command(config, args.out)
    return run_sweep_command(config, args.out)


if __name__ == "__main__":
    sys.exit(main())
