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
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
import numpy.typing as npt
from oct_levelset.control.control_field import ControlParams
from oct_levelset.control.control_field import PULSE_FIELDS
from oct_levelset.core.quantum_core import QuantumModel
from oct_levelset.core.quantum_core import SystemParams
from oct_levelset.dynamics.cost_adjoint import cost_and_gradient
from oct_levelset.dynamics.cost_adjoint import CostWeights
from oct_levelset.dynamics.propagator import TimeGrid
from oct_levelset.utils.dataclasses import CostBreakdown
from oct_levelset.utils.dataclasses import TraceEntry
from oct_levelset.utils.errors import AllStartsFailedError
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import OctLevelsetError
from oct_levelset.utils.errors import OutOfBoundsError

logger = logging.getLogger(__name__)

MIN_WIDTH = 1e-6

# termination codes
GRADIENT = "gradient"
STAGNATION = "stagnation"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILED = "line_search_failed"
CONVERGED_STATUSES = (GRADIENT, STAGNATION)


def default_bounds(pulse_count: int) -> npt.NDArray:
    """
    Unbounded box except for the pulse widths, kept strictly positive.
    """
    bounds = np.tile([-np.inf, np.inf], (pulse_count * len(PULSE_FIELDS), 1))
    bounds[PULSE_FIELDS.index("width")::len(PULSE_FIELDS), 0] = MIN_WIDTH
    return bounds


@dataclass(frozen=True, eq=False)
class OptSettings:
    """
    Settings of the descent and of the random restarts.

    Attributes
    ----------
    max_iters : int
        Maximum number of accepted steps.
    grad_tol : float
        Convergence threshold on the infinity norm of the projected gradient.
    cost_rel_tol : float
        Relative cost change counted as stagnation.
    backtrack : float
        Step reduction factor of the line search, in (0, 1).
    armijo : float
        Sufficient decrease constant, in (0, 1).
    restarts : int
        Number of random starting points added to the configured one.
    rng_seed : int
        Seed of the restart draws.
    b_bounds : npt.NDArray, optional
        [lo, hi] per control parameter, ``default_bounds`` when omitted.
    frozen : tuple of int
        Indices of control parameters kept fixed.
    initial_step : float
        First trial step of the first line search.
    max_step : float
        Upper limit of the trial step.
    max_halvings : int
        Step reductions tried before the line search gives up.
    stagnation_window : int
        Consecutive stagnant steps that stop the descent.
    scaled : bool
        Descend in coordinates normalized to the bound widths, components
        with an infinite or empty box keep their own units.
    max_move : float
        Largest trial move of a bounded component, as a fraction of its
        bound width.
    quadrature : str
        Gradient quadrature, see ``cost_and_gradient``.
    threads : int
        Worker threads used for the restarts.
    """
    max_iters: int = 200
    grad_tol: float = 1e-6
    cost_rel_tol: float = 1e-10
    backtrack: float = 0.5
    armijo: float = 1e-4
    restarts: int = 0
    rng_seed: int = 0
    b_bounds: npt.NDArray | None = None
    frozen: tuple[int, ...] = ()
    initial_step: float = 1.0
    max_step: float = 1e3
    max_halvings: int = 40
    stagnation_window: int = 3
    scaled: bool = True
    max_move: float = 0.1
    quadrature: str = "step"
    threads: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidParameterError(f"max_iters must be at least 1, got {self.max_iters}")
        if not 0 < self.backtrack < 1:
            raise InvalidParameterError(f"backtrack factor must be in (0, 1), got {self.backtrack}")
        if not 0 < self.armijo < 1:
            raise InvalidParameterError(f"Armijo constant must be in (0, 1), got {self.armijo}")
        if self.restarts < 0:
            raise InvalidParameterError(f"restarts must be non-negative, got {self.restarts}")
        if self.grad_tol < 0 or self.cost_rel_tol < 0:
            raise InvalidParameterError("Tolerances must be non-negative")
        if self.initial_step <= 0 or self.max_step <= 0:
            raise InvalidParameterError("Step sizes must be positive")
        if not 0 < self.max_move <= 1:
            raise InvalidParameterError(f"max_move must be in (0, 1], got {self.max_move}")
        if self.threads < 1:
            raise InvalidParameterError(f"threads must be at least 1, got {self.threads}")
        if self.b_bounds is not None:
            bounds = np.asarray(self.b_bounds, dtype=np.float64).reshape(-1, 2)
            if np.any(bounds[:, 0] > bounds[:, 1]):
                raise InvalidParameterError("b_bounds has a lower bound above its upper bound")
            object.__setattr__(self, "b_bounds", bounds)
        object.__setattr__(self, "frozen", tuple(int(i) for i in self.frozen))

    def bounds_for(self, m: int) -> npt.NDArray:
        if self.b_bounds is None:
            return default_bounds(m // len(PULSE_FIELDS))
        if len(self.b_bounds) != m:
            raise DimensionMismatchError(f"b_bounds has {len(self.b_bounds)} rows for {m} control parameters")
        return self.b_bounds

    def free_mask(self, m: int) -> npt.NDArray:
        mask = np.ones(m, dtype=bool)
        if any(i < 0 or i >= m for i in self.frozen):
            raise DimensionMismatchError(f"Frozen indices {self.frozen} out of range for {m} control parameters")
        mask[list(self.frozen)] = False
        return mask


@dataclass(frozen=True, eq=False)
class OptResult:
    """
    Outcome of a descent run.

    Attributes
    ----------
    b_opt : ControlParams
        Best accepted control parameters.
    cost : CostBreakdown
        Cost terms at ``b_opt``.
    grad_inf_norm : float
        Infinity norm of the projected gradient at ``b_opt``.
    iterations : int
        Accepted steps.
    converged : bool
        True when the gradient or the stagnation rule stopped the descent.
    trace : list of TraceEntry
        Iteration 0 is the starting point, the rest are accepted steps.
    restart_index : int
        Which starting point produced this result, 0 is the configured one.
    status : str
        Termination code: gradient, stagnation, max_iters or line_search_failed.
    forward_propagations : int
        Forward propagations spent, summed over all starts for multistart.
    failed_starts : list of dict
        Starting points that raised, with their error.
    """
    b_opt: ControlParams
    cost: CostBreakdown
    grad_inf_norm: float
    iterations: int
    converged: bool
    trace: list[TraceEntry]
    restart_index: int = 0
    status: str = GRADIENT
    forward_propagations: int = 0
    failed_starts: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "b_opt": [float(v) for v in self.b_opt.to_array()],
            "parameter_names": self.b_opt.names(),
            "cost": self.cost.to_dict(),
            "grad_inf_norm": self.grad_inf_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "restart_index": self.restart_index,
            "forward_propagations": self.forward_propagations,
            "failed_starts": self.failed_starts,
            "trace": [[e.iteration, e.total, e.grad_norm, e.step] for e in self.trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OptResult":
        return cls(b_opt=ControlParams.from_array(data["b_opt"]),
                   cost=CostBreakdown(**data["cost"]),
                   grad_inf_norm=float(data["grad_inf_norm"]),
                   iterations=int(data["iterations"]),
                   converged=bool(data["converged"]),
                   trace=[TraceEntry(int(i), float(c), float(g), float(s)) for i, c, g, s in data["trace"]],
                   restart_index=int(data["restart_index"]),
                   status=str(data["status"]),
                   forward_propagations=int(data["forward_propagations"]),
                   failed_starts=list(data.get("failed_starts", [])))


def projected_gradient(x: npt.NDArray, gradient: npt.NDArray, bounds: npt.NDArray,
                       free: npt.NDArray) -> npt.NDArray:
    """
    Zero the frozen components and those pushing out of an active bound.
    """
    projected = np.where(free, gradient, 0.0)
    projected[(x <= bounds[:, 0]) & (projected > 0)] = 0.0
    projected[(x >= bounds[:, 1]) & (projected < 0)] = 0.0
    return projected


def bound_widths(bounds: npt.NDArray) -> npt.NDArray:
    """
    Width of each box, 1 where the box is infinite or empty.
    """
    widths = bounds[:, 1] - bounds[:, 0]
    return np.where(np.isfinite(widths) & (widths > 0), widths, 1.0)


def step_cap(direction: npt.NDArray, bounds: npt.NDArray, max_move: float) -> float:
    """
    Largest step along ``direction`` that moves no bounded component by more
    than ``max_move`` of its bound width.
    """
    widths = bounds[:, 1] - bounds[:, 0]
    bounded = np.isfinite(widths) & (widths > 0) & (direction != 0)
    if not np.any(bounded):
        return np.inf
    return float(max_move / np.max(np.abs(direction[bounded]) / widths[bounded]))


def optimize(model: QuantumModel, a: SystemParams, b_init: ControlParams, grid: TimeGrid, w: CostWeights,
             settings: OptSettings) -> OptResult:
    """
    Projected steepest descent with Armijo backtracking on the total cost.

    With ``settings.scaled`` the descent runs in coordinates normalized to
    the bound widths, so parameters in different units move comparable
    fractions of their boxes. Every first trial step is capped at
    ``settings.max_move`` of the bound widths.

    Stops when the projected gradient norm drops to ``grad_tol``, when the
    relative cost change stays below ``cost_rel_tol`` for
    ``stagnation_window`` accepted steps, after ``max_iters`` steps, or when
    the line search fails after ``max_halvings`` reductions (the best point
    so far is returned with ``converged=False``).

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    a : SystemParams
        System parameters.
    b_init : ControlParams
        Starting point, must lie inside the bounds.
    grid : TimeGrid
        Time grid.
    w : CostWeights
        Cost weights.
    settings : OptSettings
        Descent settings.

    Returns
    -------
    OptResult
    """
    x = b_init.to_array()
    bounds = settings.bounds_for(x.size)
    free = settings.free_mask(x.size)
    scale = bound_widths(bounds) ** 2 if settings.scaled else np.ones(x.size)
    outside = np.flatnonzero((x < bounds[:, 0]) | (x > bounds[:, 1]))
    if outside.size:
        names = [b_init.names()[i] for i in outside]
        raise OutOfBoundsError(f"Initial control parameters {names} are outside their bounds", parameters=names)

    cost, gradient = cost_and_gradient(model, a, b_init, grid, w, settings.quadrature)
    evaluations = 1
    projected = projected_gradient(x, gradient, bounds, free)
    norm = float(np.max(np.abs(projected)))
    trace = [TraceEntry(0, cost.total, norm, 0.0)]
    step = settings.initial_step
    stagnant = 0
    iterations = 0
    status = GRADIENT if norm <= settings.grad_tol else MAX_ITERS

    while status == MAX_ITERS and iterations < settings.max_iters:
        direction = scale * projected
        alpha = min(step, step_cap(direction, bounds, settings.max_move))
        accepted = None
        for _ in range(settings.max_halvings + 1):
            x_new = np.clip(x - alpha * direction, bounds[:, 0], bounds[:, 1])
            delta = x_new - x
            if np.any(delta):
                trial_cost, trial_gradient = cost_and_gradient(model, a, ControlParams.from_array(x_new), grid, w,
                                                               settings.quadrature)
                evaluations += 1
                if trial_cost.total <= cost.total + settings.armijo * float(gradient @ delta):
                    accepted = (x_new, trial_cost, trial_gradient)
                    break
            alpha *= settings.backtrack
        if accepted is None:
            logger.debug(f"Line search failed at iteration {iterations + 1}, cost {cost.total:.6e}")
            status = LINE_SEARCH_FAILED
            break

        previous = cost.total
        x, cost, gradient = accepted
        iterations += 1
        projected = projected_gradient(x, gradient, bounds, free)
        norm = float(np.max(np.abs(projected)))
        trace.append(TraceEntry(iterations, cost.total, norm, alpha))
        logger.debug(f"Iteration {iterations}: cost {cost.total:.6e}, |grad| {norm:.3e}, step {alpha:.3e}")
        step = min(alpha / settings.backtrack, settings.max_step)

        change = (previous - cost.total) / max(abs(previous), np.finfo(float).tiny)
        stagnant = stagnant + 1 if change <= settings.cost_rel_tol else 0
        if norm <= settings.grad_tol:
            status = GRADIENT
        elif stagnant >= settings.stagnation_window:
            status = STAGNATION

    converged = status in CONVERGED_STATUSES
    logger.debug(f"Descent finished ({status}) after {iterations} iterations, cost {cost.total:.6e}")
    return OptResult(b_opt=ControlParams.from_array(x), cost=cost, grad_inf_norm=norm, iterations=iterations,
                     converged=converged, trace=trace, status=status, forward_propagations=evaluations)


def starting_points(b_init: ControlParams, settings: OptSettings) -> list[ControlParams]:
    """
    The configured start followed by ``settings.restarts`` uniform draws
    inside the bounds; frozen parameters keep their configured values.
    """
    x0 = b_init.to_array()
    bounds = settings.bounds_for(x0.size)
    free = settings.free_mask(x0.size)
    starts = [b_init]
    if settings.restarts == 0:
        return starts
    if not np.all(np.isfinite(bounds[free])):
        raise InvalidParameterError("Random restarts need finite bounds on every free control parameter")
    rng = np.random.default_rng(settings.rng_seed)
    for _ in range(settings.restarts):
        draw = rng.uniform(np.where(free, bounds[:, 0], 0.0), np.where(free, bounds[:, 1], 0.0))
        starts.append(ControlParams.from_array(np.where(free, draw, x0)))
    return starts


def multistart(model: QuantumModel, a: SystemParams, grid: TimeGrid, w: CostWeights, settings: OptSettings,
               b_init: ControlParams) -> OptResult:
    """
    Run ``optimize`` from several starting points and keep the best.

    The winner is the lowest total cost, ties broken by the lower gradient
    norm and then by the lower restart index, so the outcome does not depend
    on the order in which the threads finish.

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    a : SystemParams
        System parameters.
    grid : TimeGrid
        Time grid.
    w : CostWeights
        Cost weights.
    settings : OptSettings
        Descent and restart settings.
    b_init : ControlParams
        Configured starting point.

    Returns
    -------
    OptResult
        Best run, ``forward_propagations`` counts all runs.
    """
    starts = starting_points(b_init, settings)
    logger.debug(f"Multistart with {len(starts)} starting points (seed {settings.rng_seed})")

    def run(start: ControlParams) -> OptResult | OctLevelsetError:
        try:
            return optimize(model, a, start, grid, w, settings)
        except OctLevelsetError as error:
            return error

    if settings.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            outcomes = list(pool.map(run, starts))
    else:
        outcomes = [run(start) for start in starts]

    failed = [{"restart_index": i, **outcome.to_dict()} for i, outcome in enumerate(outcomes)
              if isinstance(outcome, OctLevelsetError)]
    for failure in failed:
        logger.debug(f"Start {failure['restart_index']} failed: {failure['message']}")
    candidates = [(outcome.cost.total, outcome.grad_inf_norm, i, outcome) for i, outcome in enumerate(outcomes)
                  if isinstance(outcome, OptResult)]
    if not candidates:
        raise AllStartsFailedError(f"All {len(starts)} starting points failed", failures=failed)
    total, _, index, best = min(candidates, key=lambda item: item[:3])
    spent = sum(candidate[3].forward_propagations for candidate in candidates)
    logger.debug(f"Multistart winner: start {index}, cost {total:.6e}")
    return replace(best, restart_index=index, forward_propagations=spent, failed_starts=failed)
