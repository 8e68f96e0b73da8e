"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import exprlang
from .config import ConfigError, load_config
from .mesh import MeshError, read_mesh
from .solver import LinearSolveError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icefem", description="Least-squares finite elements for sea-ice dynamics.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config")
    run.add_argument("--output", help="override the configured output directory")

    study = sub.add_parser("study", help="uniform-refinement convergence study")
    study.add_argument("config")
    study.add_argument("--levels", type=int, help="number of mesh levels")
    study.add_argument("--output", help="override the configured output directory")

    info = sub.add_parser("mesh-info", help="summarize a mesh file")
    info.add_argument("meshfile")
    return p


def _mesh_info(path) -> int:
    T = read_mesh(path)
    tags = list(T.boundary_tags.values())
    areas = T.cell_areas()
    print(f"points          {T.n_points}")
    print(f"cells           {T.n_cells}")
    print(f"edges           {T.n_edges}")
    print(f"boundary edges  {len(tags)} (D: {tags.count('D')}, N: {tags.count('N')})")
    print(f"area            {float(areas.sum())!r}")
    print(f"h_max           {T.h_max()!r}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    from . import experiment

    try:
        if args.command == "mesh-info":
            return _mesh_info(args.meshfile)
        cfg = load_config(args.config)
        if args.command == "run":
            res = experiment.run_experiment(cfg, args.output)
            last = res.steps[-1]
            print(f"{len(res.steps)} step(s), final functional {last.functional:.6e}, "
                  f"GN iterations per step: {' '.join(str(s.gn_iterations) for s in res.steps)}")
            if not all(s.converged for s in res.steps):
                print("warning: Gauss-Newton reached max_iter in some steps", file=sys.stderr)
            return EXIT_OK
        if args.levels is not None and args.levels < 1:
            raise ConfigError("--levels must be at least 1")
        report = experiment.run_convergence_study(cfg, args.levels, args.output)
        for rec, rate in zip(report.levels, report.rates()):
            r = "" if rate is None else f"  rate {rate:.3f}"
            print(f"level {rec.level}: h_max {rec.h_max:.6g}  H {rec.functional:.6e}  dofs {rec.n_dofs}{r}")
        slope = report.slope
        print("fitted slope: " + ("undefined (functional at quadrature floor)" if slope is None else f"{slope:.4f}"))
        return EXIT_OK
    except (ConfigError, exprlang.ParseError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as err:
        print(f"mesh error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (LinearSolveError, exprlang.EvalError, ValueError, FloatingPointError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
