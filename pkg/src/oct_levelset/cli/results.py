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

import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from oct_levelset.cli.config import parse_config
from oct_levelset.dynamics.propagator import propagate_forward
from oct_levelset.levelset.levelset import SolutionSheet
from oct_levelset.optimize.optimizer import OptResult
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.utils import atomic_write_text

logger = logging.getLogger(__name__)

RESULT_FORMAT_VERSION = 1
EXPORT_KINDS = ("trajectory", "trace", "sheet")


@dataclass
class ResultDocument:
    """
    Output of one command.

    Attributes
    ----------
    command : str
        Subcommand that produced the document.
    config : str
        The configuration text exactly as it was read.
    seed : int
        Seed actually used, after command line overrides.
    outputs : dict
        Command specific payload.
    propagations : dict
        Forward and backward propagations counted during the command.
    wall_clock : float
        Seconds spent, the only field that differs between identical runs.
    format_version : int
        Layout version of the document.
    """
    command: str
    config: str
    seed: int
    outputs: dict
    propagations: dict
    wall_clock: float = 0.0
    format_version: int = RESULT_FORMAT_VERSION

    def to_json(self) -> str:
        return json.dumps({
            "format_version": self.format_version,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "outputs": self.outputs,
            "propagations": self.propagations,
            "wall_clock": self.wall_clock,
        }, indent=2) + "\n"

    def save(self, filename: Path) -> None:
        atomic_write_text(filename, self.to_json())
        logger.info(f"Result written to '{Path(filename).resolve()}'")

    @classmethod
    def load(cls, filename: Path) -> "ResultDocument":
        data = json.loads(Path(filename).read_bytes().decode("utf-8"))
        version = data.get("format_version")
        if version != RESULT_FORMAT_VERSION:
            raise InvalidParameterError(f"Unsupported result format version {version!r} in '{filename}'")
        return cls(command=data["command"], config=data["config"], seed=data["seed"], outputs=data["outputs"],
                   propagations=data["propagations"], wall_clock=data["wall_clock"], format_version=version)

    def opt_result(self) -> OptResult:
        if "result" not in self.outputs:
            raise InvalidParameterError(f"A '{self.command}' result holds no optimization result")
        return OptResult.from_dict(self.outputs["result"])

    def sheet(self) -> SolutionSheet:
        if "sheet" not in self.outputs:
            raise InvalidParameterError(f"A '{self.command}' result holds no solution sheet")
        return SolutionSheet.from_dict(self.outputs["sheet"])


def _csv(array: np.ndarray, header: list[str]) -> str:
    buffer = io.StringIO()
    np.savetxt(buffer, array, delimiter=",", header=",".join(header), comments="")
    return buffer.getvalue()


def trace_csv(result: OptResult) -> str:
    """
    Columns iteration, total, grad_norm, step.
    """
    rows = np.array([[e.iteration, e.total, e.grad_norm, e.step] for e in result.trace], dtype=np.float64)
    return _csv(rows.reshape(-1, 4), ["iteration", "total", "grad_norm", "step"])


def sheet_csv(sheet: SolutionSheet) -> str:
    """
    One row per node: grid coordinates, branch, converged flag, each b
    component, total and deviation cost.
    """
    names = [f"b_{i}" for i in range(sheet.pulse_count * 4)]
    header = sheet.grid.axis_names + ["branch", "converged"] + names + ["total", "deviation"]
    rows = []
    for index, entry in sorted(sheet.entries.items()):
        coordinates = sheet.grid.point_coordinates(entry.s, entry.c)
        rows.append(np.concatenate([coordinates, [entry.branch, float(entry.converged)], entry.b,
                                    [entry.total, entry.deviation]]))
    return _csv(np.array(rows).reshape(-1, len(header)), header)


def trajectory_csv(document: ResultDocument) -> str:
    """
    Re-propagate the optimized control of an optimize result and dump the
    trajectory with the observable expectation.
    """
    config = parse_config(document.config)
    model = config.build_model()
    trajectory = propagate_forward(model, config.system_params(model), document.opt_result().b_opt,
                                   config.time_grid())
    buffer = io.StringIO()
    trajectory.save_csv(buffer, model.observable)
    return buffer.getvalue()


def export_plot(document: ResultDocument, kind: str) -> str:
    """
    Columnar text of a result document for external plotting.

    Parameters
    ----------
    document : ResultDocument
        An optimize result (trajectory, trace) or a sweep result (sheet).
    kind : str
        One of 'trajectory', 'trace' or 'sheet'.

    Returns
    -------
    str
        CSV text with a header line.
    """
    if kind == "trace":
        return trace_csv(document.opt_result())
    if kind == "sheet":
        return sheet_csv(document.sheet())
    if kind == "trajectory":
        return trajectory_csv(document)
    raise InvalidParameterError(f"Unknown export kind '{kind}', available: {list(EXPORT_KINDS)}", kind=kind)
