#  Copyright 2024 Hkxs
#
#  Permission is hereby granted, free of charge, to any person obtaining a copy
#  of this software and associated documentation files (the “Software”), to deal
#  in the Software without restriction, including without limitation the rights
#  to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
#  copies of the Software, and to permit persons to whom the Software is
#  furnished to do so, subject to the following conditions:
#
#  The above copyright notice and this permission notice shall be included in
#  all copies or substantial portions of the Software.
#
#  THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
#  IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
#  FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
#  AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
#  LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
#  OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
#  SOFTWARE.

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from oct_levelset.cli.config import load_config
from oct_levelset.cli.config import parse_config
from oct_levelset.cli.config import thread_count
from oct_levelset.cli.results import export_plot
from oct_levelset.cli.results import ResultDocument
from oct_levelset.core.quantum_core import map_scale
from oct_levelset.core.quantum_core import ScaleVector
from oct_levelset.dynamics.propagator import propagation_counter
from oct_levelset.levelset.levelset import fit
from oct_levelset.levelset.levelset import geometry
from oct_levelset.levelset.levelset import predict
from oct_levelset.levelset.levelset import SheetInterpolant
from oct_levelset.levelset.levelset import sweep
from oct_levelset.optimize.optimizer import multistart
from oct_levelset.optimize.optimizer import optimize
from oct_levelset.utils.errors import OctLevelsetError
from oct_levelset.utils.errors import OutOfHullError
from oct_levelset.utils.utils import atomic_write_text

logger = logging.getLogger("oct_levelset")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def parse_args(argv: list[str] | None = None):
    parser = argparse.ArgumentParser(prog="oct_levelset")
    parser.description = "Optimal control of an observable's expectation value with level-set continuation"
    parser.add_argument("-d", "--debug", action="store_true", help="Enable debug messages")
    commands = parser.add_subparsers(dest="command", required=True)

    command = commands.add_parser("optimize", help="Optimize the control field of a configuration")
    command.add_argument("--config", type=Path, required=True, help="JSON run configuration")
    command.add_argument("--out", type=Path, required=True, help="Result document to write")
    command.add_argument("--seed", type=int, help="Override the configuration seed")
    command.add_argument("--threads", type=int, help="Worker threads, default from $OCT_LEVELSET_THREADS or 1")
    command.set_defaults(handler=cmd_optimize)

    command = commands.add_parser("sweep", help="Optimize every node of the configured sweep grid")
    command.add_argument("--config", type=Path, required=True, help="JSON run configuration with a sweep section")
    command.add_argument("--out", type=Path, required=True, help="Sheet result document to write")
    command.add_argument("--seed", type=int, help="Override the configuration seed")
    command.add_argument("--threads", type=int, help="Worker threads, default from $OCT_LEVELSET_THREADS or 1")
    command.set_defaults(handler=cmd_sweep)

    command = commands.add_parser("predict", help="Read the control at a new (s, c) off a sweep result")
    command.add_argument("--sheet", type=Path, required=True, help="Result document of a sweep")
    command.add_argument("--s", type=float, nargs="+", required=True, help="Scale vector of the query")
    command.add_argument("--c", type=float, nargs="+", help="Unscaled parameters, default from the configuration")
    command.add_argument("--branch", type=int, help="Branch id, default is the first branch covering the query")
    command.add_argument("--out", type=Path, required=True, help="Prediction document to write")
    command.add_argument("--extrapolate", action="store_true", help="Allow queries outside the swept hull")
    command.add_argument("--refine", action="store_true", help="Polish the prediction with a short descent")
    command.add_argument("--refine-iters", type=int, default=5, help=f"Descent steps of --refine, default '{5}'")
    command.add_argument("--seed", type=int, help="Override the configuration seed")
    command.add_argument("--threads", type=int, help="Worker threads, default from $OCT_LEVELSET_THREADS or 1")
    command.set_defaults(handler=cmd_predict)

    command = commands.add_parser("validate", help="Check a configuration without running it")
    command.add_argument("--config", type=Path, required=True, help="JSON run configuration")
    command.set_defaults(handler=cmd_validate)

    command = commands.add_parser("export-plot", help="Write plot data of a result document as CSV")
    command.add_argument("--result", type=Path, required=True, help="Result document")
    command.add_argument("--kind", required=True, help="trajectory, trace or sheet")
    command.add_argument("--out", type=Path, required=True, help="CSV file to write")
    command.set_defaults(handler=cmd_export_plot)

    args = parser.parse_args(argv)

    logging.basicConfig(handlers=[logging.StreamHandler()],
                        format="%(asctime)s [%(levelname)s] %(message)s")

    return args


def cmd_optimize(args) -> int:
    config = load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    settings = config.settings(thread_count(args.threads), seed)
    model = config.build_model()
    logger.info(f"Optimizing '{model.name}' towards <{model.observable_name}> = {config.cost.theta0}")
    propagation_counter.reset()
    start = time.perf_counter()
    result = multistart(model, config.system_params(model), config.time_grid(), config.weights(), settings,
                        config.b_init())
    document = ResultDocument("optimize", config.text, seed, {"result": result.to_dict()},
                              propagation_counter.snapshot(), time.perf_counter() - start)
    document.save(args.out)
    logger.info(f"Total cost {result.cost.total:.6e} after {result.iterations} iterations ({result.status})")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    settings = config.settings(thread_count(args.threads), seed)
    model = config.build_model()
    grid = config.sweep_grid()
    logger.info(f"Sweeping '{model.name}' over a {grid.shape} grid")
    propagation_counter.reset()
    start = time.perf_counter()
    sheet = sweep(model, grid, config.time_grid(), config.weights(), settings, config.b_init(),
                  warm_start=config.sweep.warm_start, continuity_threshold=config.sweep.continuity_threshold)
    document = ResultDocument("sweep", config.text, seed, {"sheet": sheet.to_dict()},
                              propagation_counter.snapshot(), time.perf_counter() - start)
    document.save(args.out)
    if sheet.failed_nodes:
        logger.warning(f"{len(sheet.failed_nodes)} node(s) did not converge: {sheet.failed_nodes}")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _covering_branch(interp: SheetInterpolant, s: list[float], c: list[float] | None, extrapolate: bool) -> int:
    branches = sorted(interp.branches)
    for branch in branches:
        try:
            interp.locate(s, c, branch)
            return branch
        except OutOfHullError:
            continue
    if extrapolate and branches:
        return branches[0]
    if not branches and interp.unfitted:
        raise interp.unfitted[min(interp.unfitted)]
    raise OutOfHullError(f"No branch covers s={s}, c={c}, enable extrapolation to predict there", s=s, c=c)


def cmd_predict(args) -> int:
    source = ResultDocument.load(args.sheet)
    config = parse_config(source.config)
    sheet = source.sheet()
    seed = config.seed if args.seed is None else args.seed
    propagation_counter.reset()
    start = time.perf_counter()
    interp = fit(sheet, config.sweep.metric_scale if config.sweep is not None else None)
    branch = args.branch if args.branch is not None else _covering_branch(interp, args.s, args.c, args.extrapolate)
    prediction = predict(interp, args.s, args.c, branch, extrapolate=args.extrapolate)
    outputs = {
        "query": {"s": args.s, "c": args.c},
        "prediction": prediction.to_dict(),
        "geometry": geometry(interp, args.s, args.c, branch, extrapolate=args.extrapolate).to_dict(),
    }
    logger.info(f"Predicted control on branch {branch}{' (extrapolated)' if prediction.extrapolated else ''}")
    if args.refine:
        model = config.build_model()
        c = model.c_values if args.c is None else args.c
        a = map_scale(model, ScaleVector(args.s), c)
        settings = replace(config.settings(thread_count(args.threads), seed), max_iters=args.refine_iters)
        refined = optimize(model, a, prediction.b, config.time_grid(), config.weights(), settings)
        outputs["refined"] = refined.to_dict()
        logger.info(f"Refined cost {refined.cost.total:.6e} after {refined.iterations} iterations")
    document = ResultDocument("predict", source.config, seed, outputs, propagation_counter.snapshot(),
                              time.perf_counter() - start)
    document.save(args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = load_config(args.config)
    logger.info(f"Configuration '{args.config}' is valid (model '{config.model.name}', "
                f"{config.field.pulse_count} pulse(s){', with sweep' if config.sweep else ''})")
    return EXIT_OK


def cmd_export_plot(args) -> int:
    document = ResultDocument.load(args.result)
    atomic_write_text(args.out, export_plot(document, args.kind))
    logger.info(f"Exported {args.kind} data to '{args.out.resolve()}'")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logger.setLevel(level=logging.DEBUG if args.debug else logging.INFO)
    try:
        return args.handler(args)
    except OctLevelsetError as error:
        logger.error(error.message)
    except (OSError, ValueError, KeyError) as error:
        logger.error(f"{type(error).__name__}: {error}")
    return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
