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
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from oct_levelset.control.control_field import ControlParams
from oct_levelset.control.control_field import field_gradient
from oct_levelset.control.control_field import field_value
from oct_levelset.core.quantum_core import QuantumModel
from oct_levelset.core.quantum_core import QuantumState
from oct_levelset.core.quantum_core import SystemParams
from oct_levelset.dynamics.propagator import CostateTrajectory
from oct_levelset.dynamics.propagator import final_expectation
from oct_levelset.dynamics.propagator import propagate_backward
from oct_levelset.dynamics.propagator import propagate_forward
from oct_levelset.dynamics.propagator import StepPropagators
from oct_levelset.dynamics.propagator import TimeGrid
from oct_levelset.dynamics.propagator import Trajectory
from oct_levelset.utils.dataclasses import CostBreakdown
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.utils import central_difference_gradient
from oct_levelset.utils.utils import grid_integral
from oct_levelset.utils.utils import relative_error

logger = logging.getLogger(__name__)

QUADRATURES = ("step", "trapezoid")


@dataclass(frozen=True)
class CostWeights:
    """
    Weights of the cost functional.

    Attributes
    ----------
    K : float
        Deviation weight.
    L : float
        Intensity weight.
    theta0 : float
        Set value of the observable.
    """
    K: float
    L: float
    theta0: float

    def __post_init__(self):
        for name in ("K", "L", "theta0"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.K < 0 or self.L < 0:
            raise InvalidParameterError(f"Weights must be non-negative, got K={self.K}, L={self.L}")
        if self.K == 0 and self.L == 0:
            raise InvalidParameterError("K and L cannot both be zero")


def deviation_cost(theta_T: float, w: CostWeights) -> float:
    """
    Least squares departure of the final expectation value from the set value.
    """
    return float(w.K * (theta_T - w.theta0) ** 2)


def intensity_cost(b: ControlParams, grid: TimeGrid, w: CostWeights) -> float:
    """
    L times the fluence of the field, integral of E(t)^2 by the trapezoid rule.
    """
    values = np.asarray(field_value(b, grid.times))
    return float(w.L * grid_integral(values ** 2, grid.dt))


def terminal_costate(model: QuantumModel, psi_T: QuantumState, theta_T: float, w: CostWeights) -> npt.NDArray:
    """
    lambda(T) = (2K / i) (theta_T - theta0) Theta |psi(T)>

    Parameters
    ----------
    model : QuantumModel
        Supplies the observable Theta.
    psi_T : QuantumState
        Final state.
    theta_T : float
        <psi(T)|Theta|psi(T)>.
    w : CostWeights
        Cost weights.

    Returns
    -------
    npt.NDArray
        Complex terminal costate.
    """
    return (2 * w.K / 1j) * (theta_T - w.theta0) * (model.observable.matrix @ psi_T.amplitudes)


def _breakdown(model: QuantumModel, b: ControlParams, grid: TimeGrid, w: CostWeights,
               trajectory: Trajectory) -> CostBreakdown:
    theta_T = final_expectation(trajectory, model.observable)
    return CostBreakdown.from_terms(deviation_cost(theta_T, w), intensity_cost(b, grid, w), theta_T)


def evaluate_cost(model: QuantumModel, a: SystemParams, b: ControlParams, grid: TimeGrid,
                  w: CostWeights) -> CostBreakdown:
    """
    Cost of one control setting, a single forward propagation.
    """
    return _breakdown(model, b, grid, w, propagate_forward(model, a, b, grid))


def _step_sensitivities(model: QuantumModel, grid: TimeGrid, propagators: StepPropagators,
                        trajectory: Trajectory, costate: npt.NDArray) -> npt.NDArray:
    # 2 Re <costate_{k+1}| dU_k/dE |psi_k>, dU_k/dE taken exactly in the eigenbasis of the step
    dt = grid.dt
    energies = propagators.energies
    vectors = propagators.eigenvectors
    costate_eig = np.einsum("kji,kj->ki", vectors.conj(), costate[1:])
    state_eig = np.einsum("kji,kj->ki", vectors.conj(), trajectory.states[:-1])
    coupling_eig = np.einsum("kji,jl,klm->kim", vectors.conj(), model.coupling, vectors)
    gap = energies[:, :, None] - energies[:, None, :]
    mean = 0.5 * (energies[:, :, None] + energies[:, None, :])
    divided_difference = -1j * dt * np.exp(-1j * dt * mean) * np.sinc(dt * gap / (2 * np.pi))
    values = np.einsum("kj,kjl,kl->k", costate_eig.conj(), divided_difference * coupling_eig, state_eig)
    return 2 * values.real


def cost_and_gradient(model: QuantumModel, a: SystemParams, b: ControlParams, grid: TimeGrid, w: CostWeights,
                      quadrature: str = "step") -> tuple[CostBreakdown, npt.NDArray]:
    """
    Total cost and its adjoint gradient with respect to the flat control vector.

    One forward propagation, the terminal costate, one backward
    propagation, then

        grad = 2L int E dE/db dt + 2 int Im<i lambda|mu|psi> dE/db dt

    The factor i on lambda cancels the 1/i of the terminal costate.

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
    w : CostWeights
        Cost weights.
    quadrature : str, optional
        'step' (default) integrates the costate term step by step with the
        exact derivative of each step exponential, which is the gradient of
        the discretized cost. 'trapezoid' uses the node values and the
        trapezoid rule.

    Returns
    -------
    tuple of CostBreakdown and npt.NDArray
        Cost terms and the gradient of the total cost (length m).
    """
    if quadrature not in QUADRATURES:
        raise InvalidParameterError(f"Unknown quadrature '{quadrature}', expected one of {QUADRATURES}")
    trajectory = propagate_forward(model, a, b, grid)
    cost = _breakdown(model, b, grid, w, trajectory)

    times = grid.times
    fields = np.asarray(field_value(b, times))
    gradient = 2 * w.L * grid_integral(fields[:, None] * field_gradient(b, times), grid.dt)

    lambda_T = terminal_costate(model, trajectory.final_state, cost.theta_T, w)
    if np.any(lambda_T):
        costate: CostateTrajectory = propagate_backward(model, a, b, lambda_T, grid, trajectory.propagators)
        physical = 1j * costate.costates
        if quadrature == "step":
            sensitivities = _step_sensitivities(model, grid, trajectory.propagators, trajectory, physical)
            gradient = gradient + sensitivities @ field_gradient(b, grid.midpoints)
        else:
            matrix_elements = np.einsum("ki,ij,kj->k", physical.conj(), model.coupling, trajectory.states).imag
            gradient = gradient + 2 * grid_integral(matrix_elements[:, None] * field_gradient(b, times), grid.dt)
    logger.debug(f"Cost {cost.total:.6e} (D={cost.deviation:.3e}, I={cost.intensity:.3e}), "
                 f"|grad|_inf={np.max(np.abs(gradient)):.3e}")
    return cost, gradient


@dataclass(frozen=True, eq=False)
class GradientCheck:
    """
    Adjoint gradient next to its finite difference estimate.
    """
    adjoint: npt.NDArray
    numerical: npt.NDArray
    relative_errors: npt.NDArray

    @property
    def max_relative_error(self) -> float:
        return float(np.max(self.relative_errors))


def check_gradient(model: QuantumModel, a: SystemParams, b: ControlParams, grid: TimeGrid, w: CostWeights,
                   step: float = 1e-5, floor: float = 1e-8, quadrature: str = "step") -> GradientCheck:
    """
    Compare the adjoint gradient with central differences of the total cost.

    Parameters
    ----------
    step : float, optional
        Finite difference step (default is 1e-5).
    floor : float, optional
        Absolute floor of the relative error denominator (default is 1e-8).

    Returns
    -------
    GradientCheck
    """
    _, adjoint = cost_and_gradient(model, a, b, grid, w, quadrature=quadrature)

    def total(values: npt.NDArray) -> float:
        return evaluate_cost(model, a, ControlParams.from_array(values), grid, w).total

    numerical = central_difference_gradient(total, b.to_array(), step)
    errors = relative_error(adjoint, numerical, floor)
    logger.debug(f"Gradient check: max relative error {np.max(errors):.3e}")
    return GradientCheck(adjoint, numerical, errors)
