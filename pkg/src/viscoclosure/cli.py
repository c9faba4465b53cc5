"""Command-line entry point.

Usage: viscoclosure <density|relax|moments|stress|flow|coupled|sweep>
           --config <path> [--paper-scale] [--out <dir>]

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical aborts.
The environment variable VISCO_THREADS caps the worker/thread count.
"""

import argparse
import sys

import numpy as np

from . import asymptotic_closure as ac
from . import micro_solvers as ms
from . import scenarios as sc

_COMMANDS = {
    "density": ("density_benchmark", sc.run_density_benchmark),
    "relax": ("", sc.run_relax),
    "moments": ("", sc.run_moments),
    "stress": ("", sc.run_stress),
    "flow": ("induced_vorticity", sc.run_induced_vorticity),
    "coupled": ("coupled", sc.run_coupled),
    "sweep": ("", sc.run_sweep),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="viscoclosure", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="TOML config (or JSON run metadata)")
    parser.add_argument("--paper-scale", action="store_true", help="use the full paper-scale settings")
    parser.add_argument("--out", help="output directory (overrides config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    scenario_name, runner = _COMMANDS[args.command]

    try:
        if args.config:
            config = sc.load_config(args.config)
        else:
            config = sc.default_config(scenario=scenario_name)
        if scenario_name and config.scenario and config.scenario != scenario_name:
            raise sc.ConfigError(
                f"config declares scenario '{config.scenario}' but command is '{args.command}'"
            )
        if not config.scenario:
            config.scenario = scenario_name
        if args.paper_scale:
            config = sc.apply_paper_scale(config)
        if args.out:
            config.output["dir"] = args.out
    except (sc.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"viscoclosure: config error: {exc}", file=sys.stderr)
        return 2

    try:
        run_dir = runner(config)
    except (ms.StepSizeError, ac.IllPosedTruncationError, RuntimeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"viscoclosure: numerical abort: {exc}", file=sys.stderr)
        return 3

    print(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
