"""Command line entry: python -m figures <panel> <run_dir> [--out DIR]."""

import argparse
import sys

import figures


_PANELS = {
    "density": figures.plot_density_panel,
    "scaling": figures.plot_scaling,
    "flow": figures.plot_flow_panels,
    "energy": figures.plot_energy,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="figures", description=__doc__)
    parser.add_argument("panel", choices=sorted(_PANELS))
    parser.add_argument("run_dir")
    parser.add_argument("--out", default="figures_out", help="image output directory")
    args = parser.parse_args(argv)
    try:
        written = _PANELS[args.panel](args.run_dir, out=args.out)
    except figures.FigureDataError as exc:
        print(f"figure data error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
