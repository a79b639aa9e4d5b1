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

import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import numpy.typing as npt
from oct_levelset.control.control_field import ControlParams
from oct_levelset.control.control_field import field_value
from oct_levelset.core.quantum_core import expectation
from oct_levelset.core.quantum_core import HermitianOperator
from oct_levelset.core.quantum_core import QuantumModel
from oct_levelset.core.quantum_core import QuantumState
from oct_levelset.core.quantum_core import SystemParams
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import NonFiniteError

logger = logging.getLogger(__name__)


class PropagationCounter:
    """
    Thread safe tally of forward and backward propagations.

    Every command reports it, it is how the cost of re-optimizing is
    compared with the cost of reading a prediction off a solution sheet.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.forward = 0
        self.backward = 0

    def add_forward(self, count: int = 1) -> None:
        with self._lock:
            self.forward += count

    def add_backward(self, count: int = 1) -> None:
        with self._lock:
            self.backward += count

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {"forward": self.forward, "backward": self.backward}

    def reset(self) -> None:
        with self._lock:
            self.forward = 0
            self.backward = 0


propagation_counter = PropagationCounter()


@dataclass(frozen=True)
class TimeGrid:
    """
    Uniform grid t_k = k * dt, k = 0..steps, on [0, T].
    """
    T: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise InvalidParameterError(f"Horizon T must be positive, got {self.T}", T=self.T)
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidParameterError(f"At least 2 time steps are required, got {self.steps}", steps=self.steps)
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> npt.NDArray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def midpoints(self) -> npt.NDArray:
        return (np.arange(self.steps) + 0.5) * self.dt


@dataclass(frozen=True, eq=False)
class StepPropagators:
    """
    Spectral data of the midpoint Hamiltonians of every step.

    Attributes
    ----------
    energies : npt.NDArray
        Eigenvalues, shape (steps, N).
    eigenvectors : npt.NDArray
        Eigenvectors as columns, shape (steps, N, N).
    unitaries : npt.NDArray
        exp(-i dt H(t_k + dt/2)), shape (steps, N, N).
    fields : npt.NDArray
        Midpoint field values, shape (steps,).
    """
    energies: npt.NDArray
    eigenvectors: npt.NDArray
    unitaries: npt.NDArray
    fields: npt.NDArray


def step_propagators(model: QuantumModel, a: SystemParams, b: ControlParams, grid: TimeGrid) -> StepPropagators:
    """
    Diagonalize the midpoint Hamiltonian of every step (exponential midpoint rule).

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    a : SystemParams
        System parameters.
    b : ControlParams
        Control parameters.
    grid : TimeGrid
        Time grid.

    Returns
    -------
    StepPropagators
    """
    fields = np.asarray(field_value(b, grid.midpoints))
    if not np.all(np.isfinite(fields)):
        raise NonFiniteError("Control field is not finite on the time grid")
    hamiltonians = model.h0(a)[None, :, :] + fields[:, None, None] * model.coupling[None, :, :]
    energies, eigenvectors = np.linalg.eigh(hamiltonians)
    phases = np.exp(-1j * grid.dt * energies)
    unitaries = np.einsum("kij,kj,klj->kil", eigenvectors, phases, eigenvectors.conj())
    return StepPropagators(energies, eigenvectors, unitaries, fields)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Forward solution psi(t_k) of the Schroedinger equation.

    Attributes
    ----------
    states : npt.NDArray
        Normalized amplitudes at every node, shape (steps + 1, N).
    grid : TimeGrid
        Time grid.
    propagators : StepPropagators
        Step data, reused by the backward pass.
    """
    states: npt.NDArray
    grid: TimeGrid
    propagators: StepPropagators

    def state(self, k: int) -> QuantumState:
        return QuantumState(self.states[k])

    @property
    def final_state(self) -> QuantumState:
        return self.state(-1)

    def expectations(self, op: HermitianOperator) -> npt.NDArray:
        """
        <psi(t_k)|op|psi(t_k)> at every node.
        """
        return np.einsum("ki,ij,kj->k", self.states.conj(), op.matrix, self.states).real

    def max_norm_error(self) -> float:
        return float(np.max(np.abs(1 - np.linalg.norm(self.states, axis=1))))

    def save_csv(self, filename: Path | TextIO, op: HermitianOperator) -> None:
        """
        Save the trajectory as comma separated columns:
        t, re_0, im_0, ..., re_N-1, im_N-1, expectation

        Parameters
        ----------
        filename : Path or TextIO
            Output file or open text stream.
        op : HermitianOperator
            Observable of the last column.
        """
        dim = self.states.shape[1]
        header = ",".join(["t"] + [f"{part}_{i}" for i in range(dim) for part in ("re", "im")] + ["expectation"])
        columns = [self.grid.times]
        for i in range(dim):
            columns.extend([self.states[:, i].real, self.states[:, i].imag])
        columns.append(self.expectations(op))
        logger.debug(f"Saving trajectory to '{filename}'")
        np.savetxt(filename, np.column_stack(columns), delimiter=",", header=header, comments="")


@dataclass(frozen=True, eq=False)
class CostateTrajectory:
    """
    Backward solution lambda(t_k); not normalized, its norm is constant.
    """
    costates: npt.NDArray
    grid: TimeGrid

    def overlaps(self, trajectory: Trajectory) -> npt.NDArray:
        """
        <lambda(t_k)|psi(t_k)> at every node.
        """
        return np.einsum("ki,ki->k", self.costates.conj(), trajectory.states)


def propagate_forward(model: QuantumModel, a: SystemParams, b: ControlParams, grid: TimeGrid) -> Trajectory:
    """
    Integrate i d/dt psi = H(t) psi from model.psi0 with the exponential
    midpoint rule psi_{k+1} = exp(-i dt H(t_k + dt/2)) psi_k.

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    a : SystemParams
        System parameters.
    b : ControlParams
        Control parameters.
    grid : TimeGrid
        Time grid.

    Returns
    -------
    Trajectory
    """
    propagators = step_propagators(model, a, b, grid)
    states = np.empty((grid.steps + 1, model.dim), dtype=np.complex128)
    states[0] = model.psi0.amplitudes
    psi = states[0]
    for k, unitary in enumerate(propagators.unitaries):
        psi = unitary @ psi
        states[k + 1] = psi
    propagation_counter.add_forward()
    logger.debug(f"Forward propagation: {grid.steps} steps, final norm {np.linalg.norm(psi):.15f}")
    return Trajectory(states, grid, propagators)


def propagate_backward(model: QuantumModel, a: SystemParams, b: ControlParams, lambda_T: npt.ArrayLike,
                       grid: TimeGrid, propagators: StepPropagators | None = None) -> CostateTrajectory:
    """
    Integrate the costate from t = T down to t = 0 applying the exact
    adjoint of each forward step, lambda_k = exp(+i dt H(t_k + dt/2)) lambda_{k+1}.

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    a : SystemParams
        System parameters.
    b : ControlParams
        Control parameters.
    lambda_T : npt.ArrayLike
        Terminal costate.
    grid : TimeGrid
        Time grid.
    propagators : StepPropagators, optional
        Step data of a forward pass with the same inputs, recomputed when omitted.

    Returns
    -------
    CostateTrajectory
    """
    lambda_T = np.asarray(lambda_T, dtype=np.complex128).ravel()
    if lambda_T.size != model.dim:
        raise DimensionMismatchError(f"Terminal costate has dimension {lambda_T.size}, expected {model.dim}")
    if not np.all(np.isfinite(lambda_T)):
        raise NonFiniteError("Terminal costate must be finite")
    if propagators is None:
        propagators = step_propagators(model, a, b, grid)
    costates = np.empty((grid.steps + 1, model.dim), dtype=np.complex128)
    costates[-1] = lambda_T
    costate = lambda_T
    for k in range(grid.steps - 1, -1, -1):
        costate = propagators.unitaries[k].conj().T @ costate
        costates[k] = costate
    propagation_counter.add_backward()
    return CostateTrajectory(costates, grid)


def final_expectation(trajectory: Trajectory, op: HermitianOperator) -> float:
    """
    Expectation value of ``op`` at the final time.
    """
    return expectation(op, trajectory.final_state)
