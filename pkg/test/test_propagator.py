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

import numpy as np
import pytest

from oct_levelset.control.control_field import ControlParams
from oct_levelset.core.quantum_core import build_model
from oct_levelset.core.quantum_core import SystemParams
from oct_levelset.dynamics.propagator import final_expectation
from oct_levelset.dynamics.propagator import propagate_backward
from oct_levelset.dynamics.propagator import propagate_forward
from oct_levelset.dynamics.propagator import propagation_counter
from oct_levelset.dynamics.propagator import TimeGrid
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import NonFiniteError


def random_pulse(rng, T):
    return ControlParams.from_array([rng.uniform(-1.5, 1.5), rng.uniform(0, T), rng.uniform(0.3, 2.0),
                                     rng.uniform(0, 3)])


class TestTimeGrid:

    def test_nodes(self):
        grid = TimeGrid(2.0, 4)
        assert grid.dt == pytest.approx(0.5)
        np.testing.assert_allclose(grid.times, [0, 0.5, 1.0, 1.5, 2.0])
        np.testing.assert_allclose(grid.midpoints, [0.25, 0.75, 1.25, 1.75])

    @pytest.mark.parametrize("T, steps", [(0.0, 10), (-1.0, 10), (1.0, 1), (np.inf, 10)])
    def test_invalid(self, T, steps):
        with pytest.raises(InvalidParameterError):
            TimeGrid(T, steps)


class TestForward:

    a = SystemParams(np.array([1.0]))

    @pytest.fixture(scope="class")
    def model(self):
        return build_model("two_level", observable="sigma_z")

    def test_zero_field_is_stationary(self, model):
        b = ControlParams.from_array([0.0, 1.0, 1.0, 1.0])
        trajectory = propagate_forward(model, self.a, b, TimeGrid(5.0, 500))
        assert len(trajectory.states) == 501
        np.testing.assert_allclose(trajectory.expectations(model.observable), 1.0, atol=1e-12)
        assert trajectory.max_norm_error() <= 1e-12

    def test_rabi_oscillation(self, model):
        drive = 0.5
        detuning = 0.5
        rabi = np.sqrt(detuning ** 2 + drive ** 2)
        T = np.pi / (2 * np.sqrt(0.5))
        b = ControlParams.from_array([drive, 0.0, 1e6, 0.0])
        trajectory = propagate_forward(model, self.a, b, TimeGrid(T, 4000))
        excited = abs(trajectory.final_state.amplitudes[1]) ** 2
        expected = drive ** 2 / rabi ** 2 * np.sin(rabi * T) ** 2
        assert excited == pytest.approx(expected, abs=1e-6)
        assert excited == pytest.approx(0.5, abs=1e-6)
        assert final_expectation(trajectory, model.observable) == pytest.approx(0.0, abs=2e-6)

    def test_norm_conservation(self, model):
        rng = np.random.default_rng(17)
        trajectory = propagate_forward(model, self.a, random_pulse(rng, 10.0), TimeGrid(10.0, 10000))
        assert trajectory.max_norm_error() <= 1e-9

    def test_norm_conservation_ladder(self):
        model = build_model("three_level_ladder")
        rng = np.random.default_rng(18)
        a = SystemParams(np.array([1.0, 0.9]))
        trajectory = propagate_forward(model, a, random_pulse(rng, 10.0), TimeGrid(10.0, 10000))
        assert trajectory.max_norm_error() <= 1e-9

    def test_second_order_convergence(self, model):
        b = ControlParams.from_array([0.8, 2.0, 0.7, 1.0])
        finals = [propagate_forward(model, self.a, b, TimeGrid(4.0, steps)).final_state.amplitudes
                  for steps in (1000, 2000, 4000)]
        coarse = np.linalg.norm(finals[0] - finals[1])
        fine = np.linalg.norm(finals[1] - finals[2])
        assert np.log2(coarse / fine) == pytest.approx(2.0, abs=0.2)

    def test_non_finite_field(self, model):
        b = ControlParams.from_array([1e308, 0.5, 1.0, 0.0, 1e308, 0.5, 1.0, 0.0])
        with pytest.raises(NonFiniteError):
            propagate_forward(model, self.a, b, TimeGrid(1.0, 10))

    def test_counter(self, model, mocker):
        mocker.patch.object(propagation_counter, "forward", 0)
        b = ControlParams.from_array([0.1, 1.0, 1.0, 1.0])
        propagate_forward(model, self.a, b, TimeGrid(1.0, 10))
        propagate_forward(model, self.a, b, TimeGrid(1.0, 10))
        assert propagation_counter.forward == 2

    def test_save_csv(self, model, tmp_path):
        b = ControlParams.from_array([0.3, 1.0, 0.4, 1.0])
        trajectory = propagate_forward(model, self.a, b, TimeGrid(2.0, 20))
        trajectory.save_csv(tmp_path / "trajectory.csv", model.observable)
        with open(tmp_path / "trajectory.csv") as f:
            assert f.readline().strip() == "t,re_0,im_0,re_1,im_1,expectation"
        data = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
        assert data.shape == (21, 6)
        np.testing.assert_allclose(data[:, 0], trajectory.grid.times)
        np.testing.assert_allclose(data[:, -1], trajectory.expectations(model.observable))

    @pytest.mark.subjective
    def test_plot_rabi(self, model):
        import matplotlib.pyplot as plt
        b = ControlParams.from_array([0.5, 0.0, 1e6, 0.0])
        trajectory = propagate_forward(model, self.a, b, TimeGrid(20.0, 2000))
        plt.plot(trajectory.grid.times, trajectory.expectations(model.observable))
        plt.show()


class TestBackward:

    a = SystemParams(np.array([1.0]))
    grid = TimeGrid(3.0, 3000)

    @pytest.fixture(scope="class")
    def model(self):
        return build_model("two_level", observable="sigma_z")

    @pytest.fixture(scope="class")
    def control(self):
        return ControlParams.from_array([0.7, 1.5, 0.5, 2.0])

    def test_zero_costate(self, model, control):
        costates = propagate_backward(model, self.a, control, np.zeros(2), self.grid)
        assert not costates.costates.any()

    def test_round_trip(self, model, control):
        trajectory = propagate_forward(model, self.a, control, self.grid)
        costates = propagate_backward(model, self.a, control, trajectory.final_state.amplitudes, self.grid)
        np.testing.assert_allclose(costates.costates[0], model.psi0.amplitudes, atol=1e-10)

    def test_round_trip_with_stored_steps(self, model, control):
        trajectory = propagate_forward(model, self.a, control, self.grid)
        costates = propagate_backward(model, self.a, control, trajectory.final_state.amplitudes, self.grid,
                                      propagators=trajectory.propagators)
        np.testing.assert_allclose(costates.costates[0], model.psi0.amplitudes, atol=1e-10)

    def test_overlap_is_constant(self, model):
        rng = np.random.default_rng(23)
        for _ in range(20):
            control = random_pulse(rng, self.grid.T)
            lambda_T = rng.normal(size=2) + 1j * rng.normal(size=2)
            trajectory = propagate_forward(model, self.a, control, self.grid)
            costates = propagate_backward(model, self.a, control, lambda_T, self.grid, trajectory.propagators)
            overlaps = costates.overlaps(trajectory)
            assert np.max(np.abs(overlaps - overlaps[-1])) <= 1e-8 * abs(overlaps[-1])
            norms = np.linalg.norm(costates.costates, axis=1)
            assert np.max(np.abs(norms - norms[-1])) <= 1e-8 * norms[-1]

    def test_dimension_mismatch(self, model, control):
        with pytest.raises(DimensionMismatchError):
            propagate_backward(model, self.a, control, np.zeros(3), self.grid)

    def test_non_finite(self, model, control):
        with pytest.raises(NonFiniteError):
            propagate_backward(model, self.a, control, np.array([np.nan, 0]), self.grid)
