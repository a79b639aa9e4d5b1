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

import itertools

import numpy as np
import pytest

from oct_levelset.control.control_field import ControlParams
from oct_levelset.core.quantum_core import build_model
from oct_levelset.core.quantum_core import SystemParams
from oct_levelset.dynamics.cost_adjoint import cost_and_gradient
from oct_levelset.dynamics.cost_adjoint import CostWeights
from oct_levelset.dynamics.cost_adjoint import evaluate_cost
from oct_levelset.dynamics.propagator import TimeGrid
from oct_levelset.optimize import optimizer
from oct_levelset.optimize.optimizer import bound_widths
from oct_levelset.optimize.optimizer import GRADIENT
from oct_levelset.optimize.optimizer import LINE_SEARCH_FAILED
from oct_levelset.optimize.optimizer import MAX_ITERS
from oct_levelset.optimize.optimizer import multistart
from oct_levelset.optimize.optimizer import optimize
from oct_levelset.optimize.optimizer import OptResult
from oct_levelset.optimize.optimizer import OptSettings
from oct_levelset.optimize.optimizer import projected_gradient
from oct_levelset.optimize.optimizer import STAGNATION
from oct_levelset.optimize.optimizer import starting_points
from oct_levelset.optimize.optimizer import step_cap
from oct_levelset.utils.dataclasses import CostBreakdown
from oct_levelset.utils.errors import AllStartsFailedError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import NonFiniteError
from oct_levelset.utils.errors import OutOfBoundsError

BOUNDS = [[-1.0, 1.0], [0.0, 4.0], [0.2, 2.0], [0.0, 3.0]]


class TestOptSettings:

    @pytest.mark.parametrize("kwargs", [{"max_iters": 0}, {"backtrack": 1.0}, {"backtrack": 0.0}, {"armijo": 1.0},
                                        {"restarts": -1}, {"threads": 0}, {"b_bounds": [[1.0, 0.0]]},
                                        {"max_move": 0.0}, {"max_move": 1.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            OptSettings(**kwargs)

    def test_default_bounds_keep_widths_positive(self):
        bounds = OptSettings().bounds_for(8)
        assert bounds[2, 0] > 0
        assert bounds[6, 0] > 0
        assert np.isinf(bounds[0]).all()

    def test_projected_gradient(self):
        x = np.array([0.0, 1.0, 0.5])
        bounds = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
        gradient = np.array([1.0, -1.0, 2.0])
        free = np.array([True, True, False])
        # descending moves against the gradient, so both bound components would leave the box
        np.testing.assert_array_equal(projected_gradient(x, gradient, bounds, free), [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(projected_gradient(x, -gradient, bounds, free), [-1.0, 1.0, 0.0])

    def test_bound_widths(self):
        np.testing.assert_allclose(bound_widths(np.array(BOUNDS)), [2.0, 4.0, 1.8, 3.0])
        np.testing.assert_array_equal(bound_widths(OptSettings().bounds_for(4)), np.ones(4))
        np.testing.assert_array_equal(bound_widths(np.array([[2.5, 2.5]])), [1.0])

    def test_step_cap(self):
        bounds = np.array([[0.0, 10.0], [-np.inf, np.inf]])
        assert step_cap(np.array([50.0, 1e6]), bounds, 0.1) == pytest.approx(0.02)
        assert step_cap(np.array([0.0, 1.0]), bounds, 0.1) == np.inf


class TestOptimize:

    a = SystemParams(np.array([1.0]))
    grid = TimeGrid(4.0, 400)
    w = CostWeights(10.0, 0.01, -1.0)

    @pytest.fixture(scope="class")
    def model(self):
        return build_model("two_level", observable="sigma_z")

    @pytest.fixture(scope="class")
    def result(self, model):
        b = ControlParams.from_array([0.2, 2.0, 1.0, 1.0])
        return optimize(model, self.a, b, self.grid, self.w, OptSettings(max_iters=40, b_bounds=BOUNDS))

    def test_fixed_point(self, model):
        b = ControlParams.from_array([0.0, 1.0, 0.5, 1.0])
        result = optimize(model, self.a, b, self.grid, CostWeights(0.0, 1.0, 0.0), OptSettings())
        assert result.iterations == 0
        assert result.converged
        assert result.status == GRADIENT
        assert result.b_opt == b
        assert len(result.trace) == 1

    def test_monotone_descent(self, result):
        totals = [entry.total for entry in result.trace]
        assert all(later <= earlier for earlier, later in zip(totals, totals[1:]))
        assert result.cost.total < totals[0]

    def test_within_bounds(self, result):
        x = result.b_opt.to_array()
        bounds = np.array(BOUNDS)
        assert np.all(x >= bounds[:, 0]) and np.all(x <= bounds[:, 1])

    def test_convergence_flag(self, result):
        if result.converged:
            assert result.grad_inf_norm <= 1e-6 or result.status == STAGNATION
        else:
            assert result.status in (MAX_ITERS, LINE_SEARCH_FAILED)

    def test_counts_propagations(self, result):
        assert result.forward_propagations >= result.iterations + 1

    def test_max_iters(self, model):
        b = ControlParams.from_array([0.05, 3.5, 0.3, 0.1])
        result = optimize(model, self.a, b, self.grid, self.w, OptSettings(max_iters=1, b_bounds=BOUNDS))
        assert result.iterations <= 1
        assert not result.converged
        assert result.status == MAX_ITERS

    def test_frozen_parameters(self, model):
        b = ControlParams.from_array([0.2, 2.0, 1.0, 1.0])
        settings = OptSettings(max_iters=10, b_bounds=BOUNDS, frozen=(1, 2))
        result = optimize(model, self.a, b, self.grid, self.w, settings)
        x = result.b_opt.to_array()
        assert x[1] == 2.0
        assert x[2] == 1.0
        assert result.iterations > 0

    def test_first_step_capped(self, model):
        b = ControlParams.from_array([0.05, 3.5, 0.3, 0.1])
        result = optimize(model, self.a, b, self.grid, self.w, OptSettings(max_iters=1, b_bounds=BOUNDS))
        moved = np.abs(result.b_opt.to_array() - b.to_array())
        assert np.all(moved <= 0.1 * bound_widths(np.array(BOUNDS)) + 1e-12)
        assert result.cost.total < result.trace[0].total

    def test_unscaled_descent(self, model):
        b = ControlParams.from_array([0.2, 2.0, 1.0, 1.0])
        result = optimize(model, self.a, b, self.grid, self.w, OptSettings(max_iters=10, b_bounds=BOUNDS, scaled=False))
        totals = [entry.total for entry in result.trace]
        assert all(later <= earlier for earlier, later in zip(totals, totals[1:]))
        assert result.iterations > 0

    def test_out_of_bounds_start(self, model):
        b = ControlParams.from_array([5.0, 2.0, 1.0, 1.0])
        with pytest.raises(OutOfBoundsError):
            optimize(model, self.a, b, self.grid, self.w, OptSettings(b_bounds=BOUNDS))

    def test_line_search_failure(self, model, mocker):
        gradient = np.ones(4)
        costs = iter([CostBreakdown.from_terms(1.0, 0.0, 0.0)] + [CostBreakdown.from_terms(2.0, 0.0, 0.0)] * 100)
        mocker.patch.object(optimizer, "cost_and_gradient", side_effect=lambda *args: (next(costs), gradient))
        b = ControlParams.from_array([0.2, 2.0, 1.0, 1.0])
        result = optimize(model, self.a, b, self.grid, self.w, OptSettings())
        assert result.status == LINE_SEARCH_FAILED
        assert not result.converged
        assert result.b_opt == b
        assert result.forward_propagations == 42

    def test_serialization(self, result):
        restored = OptResult.from_dict(result.to_dict())
        assert restored.b_opt == result.b_opt
        assert restored.cost == result.cost
        assert restored.trace == result.trace
        assert restored.status == result.status

    def test_gradient_at_result(self, model, result):
        _, gradient = cost_and_gradient(model, self.a, result.b_opt, self.grid, self.w)
        bounds = np.array(BOUNDS)
        free = np.ones(4, dtype=bool)
        projected = projected_gradient(result.b_opt.to_array(), gradient, bounds, free)
        assert np.max(np.abs(projected)) == pytest.approx(result.grad_inf_norm)


class TestMultistart:

    a = SystemParams(np.array([1.0]))
    grid = TimeGrid(4.0, 200)
    w = CostWeights(10.0, 0.01, -1.0)
    b_init = ControlParams.from_array([0.2, 2.0, 1.0, 1.0])

    @pytest.fixture(scope="class")
    def model(self):
        return build_model("two_level", observable="sigma_z")

    def settings(self, **kwargs):
        return OptSettings(**{"max_iters": 15, "b_bounds": BOUNDS, "restarts": 3, "rng_seed": 5, **kwargs})

    def test_no_restarts(self, model):
        settings = self.settings(restarts=0)
        single = optimize(model, self.a, self.b_init, self.grid, self.w, settings)
        best = multistart(model, self.a, self.grid, self.w, settings, self.b_init)
        assert np.array_equal(best.b_opt.to_array(), single.b_opt.to_array())
        assert best.cost == single.cost
        assert best.restart_index == 0

    def test_deterministic(self, model):
        first = multistart(model, self.a, self.grid, self.w, self.settings(), self.b_init)
        second = multistart(model, self.a, self.grid, self.w, self.settings(), self.b_init)
        assert np.array_equal(first.b_opt.to_array(), second.b_opt.to_array())
        assert first.restart_index == second.restart_index
        assert first.forward_propagations == second.forward_propagations

    def test_threads_do_not_change_the_winner(self, model):
        serial = multistart(model, self.a, self.grid, self.w, self.settings(), self.b_init)
        threaded = multistart(model, self.a, self.grid, self.w, self.settings(threads=3), self.b_init)
        assert np.array_equal(serial.b_opt.to_array(), threaded.b_opt.to_array())
        assert serial.restart_index == threaded.restart_index

    def test_winner_is_lowest_cost(self, model):
        settings = self.settings()
        best = multistart(model, self.a, self.grid, self.w, settings, self.b_init)
        for start in starting_points(self.b_init, settings):
            assert best.cost.total <= optimize(model, self.a, start, self.grid, self.w, settings).cost.total

    def test_starting_points(self):
        settings = self.settings(restarts=5, frozen=(1,))
        starts = starting_points(self.b_init, settings)
        assert len(starts) == 6
        assert starts[0] == self.b_init
        bounds = np.array(BOUNDS)
        for start in starts[1:]:
            x = start.to_array()
            assert x[1] == 2.0
            assert np.all(x >= bounds[:, 0]) and np.all(x <= bounds[:, 1])

    def test_restarts_need_finite_bounds(self):
        with pytest.raises(InvalidParameterError):
            starting_points(self.b_init, OptSettings(restarts=1))

    def test_failed_start_is_skipped(self, model, mocker):
        original = optimizer.optimize
        calls = itertools.count()

        def flaky(*args):
            if next(calls) == 0:
                raise NonFiniteError("Control field is not finite on the time grid")
            return original(*args)

        mocker.patch.object(optimizer, "optimize", side_effect=flaky)
        best = multistart(model, self.a, self.grid, self.w, self.settings(), self.b_init)
        assert len(best.failed_starts) == 1
        assert best.failed_starts[0]["restart_index"] == 0
        assert best.restart_index != 0

    def test_all_starts_failed(self, model, mocker):
        mocker.patch.object(optimizer, "optimize", side_effect=NonFiniteError("boom"))
        with pytest.raises(AllStartsFailedError):
            multistart(model, self.a, self.grid, self.w, self.settings(), self.b_init)


@pytest.mark.slow
class TestOptimizationSuccess:

    def test_inversion(self):
        model = build_model("two_level", observable="sigma_z")
        a = SystemParams(np.array([1.0]))
        grid = TimeGrid(10.0, 1000)
        w = CostWeights(100.0, 1e-3, -1.0)
        b_init = ControlParams.from_array([0.2, 5.0, 2.0, 1.0])
        bounds = [[-2.0, 2.0], [0.0, 10.0], [0.2, 5.0], [0.0, 3.0]]
        reached = 0
        for seed in range(10):
            settings = OptSettings(max_iters=200, restarts=2, rng_seed=seed, b_bounds=bounds)
            result = multistart(model, a, grid, w, settings, b_init)
            assert result.iterations <= 200
            totals = [entry.total for entry in result.trace]
            assert all(later <= earlier for earlier, later in zip(totals, totals[1:]))
            reached += result.cost.deviation <= 1e-3
        assert reached >= 8

    def test_brute_force_dominance(self):
        model = build_model("two_level", observable="sigma_z")
        a = SystemParams(np.array([1.0]))
        grid = TimeGrid(5.0, 200)
        w = CostWeights(10.0, 0.01, -1.0)
        bounds = [[-1.0, 1.0], [2.5, 2.5], [1.0, 1.0], [0.0, 2.0]]
        b_init = ControlParams.from_array([0.1, 2.5, 1.0, 1.0])
        settings = OptSettings(max_iters=500, restarts=10, rng_seed=3, b_bounds=bounds, frozen=(1, 2))
        result = multistart(model, a, grid, w, settings, b_init)
        brute = min(evaluate_cost(model, a, ControlParams.from_array([amplitude, 2.5, 1.0, carrier]), grid, w).total
                    for amplitude in np.linspace(-1.0, 1.0, 101) for carrier in np.linspace(0.0, 2.0, 101))
        assert result.cost.total <= brute + 1e-6
