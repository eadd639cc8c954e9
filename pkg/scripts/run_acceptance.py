"""
Helper script that runs the acceptance subcommands one after another, each into its own
directory below a common output root, and prints the exit status of each.

Usage:
    python scripts/run_acceptance.py

Configuration (environment variables):
    ACCEPTANCE_OUTPUT    Output root (default: ./runs/acceptance)
    ACCEPTANCE_CONFIG    Optional RunConfig JSON used for every subcommand except `bound`
    HEATKERNEL_LOG_LEVEL Log level passed through to the toolkit (default: INFO)
"""

import os
import sys
from pathlib import Path

from anisotropic_heat_kernel.main import EXIT_OK, main as run_cli

RUNS: list[tuple[str, list[str]]] = [
    ("schemas", []),
    ("report", ["--preset", "smooth-Q-sweep"]),
    ("algebra-verify", []),
    ("distance", ["--preset", "constant", "--param", "beta=-0.5"]),
    ("kernel", ["--method", "krylov", "--times", "0.001,0.01", "--svg"]),
    ("bound", []),
    ("bound", ["--preset", "constant", "--param", "beta=5"]),
    ("bound", ["--preset", "smooth-Q-sweep", "--param", "profile=linear", "--method", "krylov"]),
]


def main() -> None:
    output_root = Path(os.getenv("ACCEPTANCE_OUTPUT", "./runs/acceptance"))
    config = os.getenv("ACCEPTANCE_CONFIG")

    failures = 0
    for index, (subcommand, extra) in enumerate(RUNS):
        output = output_root / f"{index:02d}_{subcommand}"
        argv = [subcommand, "--output", str(output), *extra]
        if config and subcommand != "bound":
            argv += ["--config", config]
        print(f"$ anisotropic-heat-kernel {' '.join(argv)}")
        status = run_cli(argv)
        print(f"  exit {status}")
        if status != EXIT_OK:
            failures += 1

    print()
    print(f"{len(RUNS) - failures}/{len(RUNS)} runs passed; artifacts in {output_root}")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
