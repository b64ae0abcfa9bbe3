import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from dotenv import load_dotenv  # noqa: E402

from src.sweep import FIGURE_PRESETS, ConfigError, figure_preset, run_sweep, status_counts, write_rows  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Write the data behind every figure preset into a directory, one file per preset.",
        epilog=(
            "Examples:\n"
            "  python3 helpers/export_figures.py --out-dir figures\n"
            "  python3 helpers/export_figures.py --out-dir figures --only fig3a fig3b --format json"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--out-dir", default="figures", help="Target directory (default: figures)")
    parser.add_argument(
        "--only",
        nargs="+",
        choices=sorted(FIGURE_PRESETS),
        help="Export only these presets.",
    )
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="Output format (default: csv)")
    return parser.parse_args()


def main() -> int:
    load_dotenv(override=True)
    args = parse_args()
    names = args.only or list(FIGURE_PRESETS)
    os.makedirs(args.out_dir, exist_ok=True)

    exit_code = 0
    for name in names:
        try:
            config = figure_preset(name)
        except ConfigError as exc:
            print(f"Error: {exc}", file=sys.stderr)
            return 2

        path = os.path.join(args.out_dir, f"{name}.{args.format}")
        print(f"Exporting {name} to {path}...")
        rows = run_sweep(config)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            write_rows(rows, config.outputs, args.format, handle)

        statuses = status_counts(rows)
        not_ok = {status: count for status, count in statuses.items() if status != "ok"}
        if not_ok:
            exit_code = 4
            for status, count in sorted(not_ok.items()):
                print(f"Warning: {name}: {count} row(s) with status {status}", file=sys.stderr)

    print(f"\nDone. Wrote {len(names)} preset file(s).")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
