"""Command lines whose output is pinned under tests/golden.

Shared by the golden-file test and scripts/generate_golden.py. Every case is deterministic:
decay runs use zero noise, the benchmark uses exact probabilities.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

GOLDEN_DIR = Path(__file__).resolve().parent / "golden"
INPUT = "{input}"

DECAY_ARGS = (
    "--transition",
    "m-7/2:m-5/2",
    "--detuning",
    "300",
    "--tau-max",
    "0.002",
    "--points",
    "5",
    "--draws",
    "100",
    "--seed",
    "3",
)


@dataclass(frozen=True)
class GoldenCase:
    name: str
    args: Tuple[str, ...]
    # Runs first with INPUT pointing at a scratch file, for commands that read a table.
    source: Optional[Tuple[str, ...]] = None


GOLDEN_CASES = (
    GoldenCase("spectrum_nmr_plus.csv", ("spectrum", "-m", "nmr+")),
    GoldenCase("spectrum_esr.csv", ("spectrum", "-m", "esr")),
    GoldenCase("rabi_ner1_plus.csv", ("rabi", "-m", "ner1+")),
    GoldenCase("stark_scan_nmr_plus.csv", ("stark-scan", "-m", "nmr+", "--points", "3")),
    GoldenCase("stark_echo_unipolar.csv", ("stark-echo", "--pulse", "unipolar", "--tau-max", "1e-05", "--points", "41")),
    GoldenCase("ramsey.csv", ("ramsey",) + DECAY_ARGS),
    GoldenCase("hahn.csv", ("hahn",) + DECAY_ARGS),
    GoldenCase("plan_init.json", ("plan-init", "--target", "+1/2", "--current=-1/2")),
    GoldenCase("route.json", ("route", "--from=d-7/2", "--to=d+7/2")),
    GoldenCase("gst.json", ("gst", "--depth", "1", "--shots", "0", "--seed", "5", "--over-rotation", "X=0.1")),
    GoldenCase(
        "extract_nmr_plus.json",
        ("extract", "--input", INPUT, "-m", "nmr+"),
        source=("spectrum", "-m", "nmr+", "-o", INPUT),
    ),
)


def run_case(runner, case: GoldenCase, workdir: Path):
    """Invoke ``case`` (and its source command) with a Flask CLI runner; returns the click Result."""
    scratch = str(workdir / f"{Path(case.name).stem}.input.csv")

    def expand(args):
        return [scratch if arg == INPUT else arg for arg in args]

    if case.source is not None:
        prepared = runner.invoke(args=expand(case.source))
        if prepared.exit_code != 0:
            raise RuntimeError(f"{' '.join(case.source)} failed: {prepared.output}")
    return runner.invoke(args=expand(case.args))
