#!/usr/bin/env python3
"""Rewrite tests/golden from the current commands. Review the diff before committing it."""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path[:0] = [str(ROOT), str(ROOT / "tests")]

# The golden outputs assume the built-in defaults.
for name in ("DONOR_PARAMS", "STARK_PRESET"):
    os.environ.pop(name, None)

from donor_sim import create_app  # noqa: E402
from golden_cases import GOLDEN_CASES, GOLDEN_DIR, run_case  # noqa: E402


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Regenerate the golden command outputs.")
    parser.add_argument("--golden-dir", default=str(GOLDEN_DIR), help="output directory (default: tests/golden)")
    parser.add_argument("names", nargs="*", help="only these golden files (default: all)")
    args = parser.parse_args(argv)

    wanted = set(args.names)
    unknown = wanted - {case.name for case in GOLDEN_CASES}
    if unknown:
        print(f"ERROR: unknown golden files: {', '.join(sorted(unknown))}")
        return 1

    target = Path(args.golden_dir).resolve()
    target.mkdir(parents=True, exist_ok=True)
    runner = create_app("testing").test_cli_runner()
    with tempfile.TemporaryDirectory() as scratch:
        for case in GOLDEN_CASES:
            if wanted and case.name not in wanted:
                continue
            result = run_case(runner, case, Path(scratch))
            if result.exit_code != 0:
                print(f"ERROR: {case.name}: {result.output}")
                return 1
            path = target / case.name
            path.write_text(result.stdout, encoding="utf-8")
            print(f"Wrote: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
