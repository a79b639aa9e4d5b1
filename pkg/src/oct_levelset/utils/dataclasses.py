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

from dataclasses import asdict
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt


@dataclass(frozen=True)
class CostBreakdown:
    """
    The terms of the cost functional at one control setting.

    Attributes
    ----------
    deviation : float
        K * (theta_T - theta0)^2.
    intensity : float
        L * integral of E(t)^2.
    total : float
        deviation + intensity, the Schroedinger constraint term vanishes on-shell.
    theta_T : float
        Expectation value of the observable at the final time.
    """
    deviation: float
    intensity: float
    total: float
    theta_T: float

    @classmethod
    def from_terms(cls, deviation: float, intensity: float, theta_T: float) -> "CostBreakdown":
        return cls(float(deviation), float(intensity), float(deviation + intensity), float(theta_T))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceEntry:
    """
    One accepted optimizer iteration.
    """
    iteration: int
    total: float
    grad_norm: float
    step: float

    def __str__(self):
        return f"{self.iteration}, {self.total}, {self.grad_norm}"


@dataclass(frozen=True)
class SheetEntry:
    """
    Optimization outcome stored at one node of a parameter sweep.

    Attributes
    ----------
    index : tuple of int
        Node index, s axes first then c axes.
    s : npt.NDArray
        Scale vector at the node.
    c : npt.NDArray
        Unscaled parameters at the node.
    b : npt.NDArray
        Flattened optimal control parameters.
    total : float
        Total cost at ``b``.
    deviation : float
        Deviation part of the cost.
    converged : bool
        Whether the node optimization converged; others are excluded from fitting.
    branch : int
        Branch label, -1 for excluded nodes.
    status : str
        Optimizer termination code, or the error code of a failed node.
    """
    index: tuple[int, ...]
    s: npt.NDArray
    c: npt.NDArray
    b: npt.NDArray
    total: float
    deviation: float
    converged: bool
    branch: int
    status: str

    def to_dict(self) -> dict:
        return {
            "index": list(self.index),
            "s": [float(v) for v in self.s],
            "c": [float(v) for v in self.c],
            "b": [float(v) for v in self.b],
            "total": self.total,
            "deviation": self.deviation,
            "converged": self.converged,
            "branch": self.branch,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SheetEntry":
        return cls(index=tuple(int(i) for i in data["index"]),
                   s=np.asarray(data["s"], dtype=np.float64),
                   c=np.asarray(data["c"], dtype=np.float64),
                   b=np.asarray(data["b"], dtype=np.float64),
                   total=float(data["total"]),
                   deviation=float(data["deviation"]),
                   converged=bool(data["converged"]),
                   branch=int(data["branch"]),
                   status=str(data["status"]))
