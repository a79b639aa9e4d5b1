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
from oct_levelset.control.control_field import field_gradient
from oct_levelset.control.control_field import field_value
from oct_levelset.control.control_field import parameter_names
from oct_levelset.control.control_field import Pulse
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import NonFiniteError
from oct_levelset.utils.utils import central_difference_gradient


def random_control(rng, pulse_count=1):
    rows = [[rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.3, 2), rng.uniform(0, 3)]
            for _ in range(pulse_count)]
    return ControlParams.from_array(np.array(rows).ravel())


class TestControlParams:

    def test_flat_order(self):
        b = ControlParams((Pulse(1.0, 2.0, 3.0, 4.0), Pulse(5.0, 6.0, 7.0, 8.0)))
        np.testing.assert_array_equal(b.to_array(), np.arange(1.0, 9.0))
        assert b.m == 8
        assert b.pulse_count == 2
        assert b.names()[:4] == ["amplitude_0", "center_0", "width_0", "carrier_0"]
        assert parameter_names(2)[-1] == "carrier_1"

    def test_from_array(self):
        b = ControlParams.from_array([0.3, 1.0, 0.4, 1.0])
        assert b.pulses[0] == Pulse(0.3, 1.0, 0.4, 1.0)

    def test_invalid_length(self):
        with pytest.raises(DimensionMismatchError):
            ControlParams.from_array([1.0, 2.0, 3.0])
        with pytest.raises(DimensionMismatchError):
            ControlParams(())

    def test_invalid_pulse(self):
        with pytest.raises(InvalidParameterError):
            Pulse(1.0, 0.0, 0.0, 1.0)
        with pytest.raises(InvalidParameterError):
            Pulse(1.0, 0.0, -1.0, 1.0)
        with pytest.raises(NonFiniteError):
            Pulse(np.inf, 0.0, 1.0, 1.0)


class TestFieldValue:

    @pytest.fixture(scope="class")
    def pulse(self):
        return ControlParams((Pulse(1.0, 0.0, 1.0, 0.0),))

    def test_envelope_peak(self, pulse):
        assert field_value(pulse, 0.0) == pytest.approx(1.0)

    def test_one_width(self, pulse):
        assert field_value(pulse, 1.0) == pytest.approx(np.exp(-0.5))
        assert field_value(pulse, 1.0) == pytest.approx(0.60653, abs=1e-5)

    def test_pulses_add_up(self, pulse):
        double = ControlParams(pulse.pulses * 2)
        assert field_value(double, 0.0) == pytest.approx(2 * field_value(pulse, 0.0))

    def test_vectorized(self, pulse):
        times = np.linspace(-2, 2, 7)
        values = field_value(pulse, times)
        assert values.shape == times.shape
        np.testing.assert_allclose(values, [field_value(pulse, t) for t in times])

    def test_linear_in_amplitude(self):
        rng = np.random.default_rng(5)
        b = random_control(rng)
        scaled = b.to_array()
        scaled[0] *= 3.0
        times = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(field_value(ControlParams.from_array(scaled), times), 3 * field_value(b, times),
                                   atol=1e-14)


class TestFieldGradient:

    def test_stationary_peak(self):
        b = ControlParams((Pulse(1.0, 0.0, 1.0, 0.0),))
        np.testing.assert_allclose(field_gradient(b, 0.0), [1.0, 0.0, 0.0, 0.0], atol=1e-15)

    def test_width_derivative(self):
        b = ControlParams((Pulse(2.0, 0.0, 1.0, 0.0),))
        assert field_gradient(b, 1.0)[2] == pytest.approx(2 * np.exp(-0.5))
        assert field_gradient(b, 1.0)[2] == pytest.approx(1.21306, abs=1e-5)

    def test_shape(self):
        b = random_control(np.random.default_rng(0), pulse_count=3)
        assert field_gradient(b, 0.5).shape == (12,)
        assert field_gradient(b, np.zeros((5, 2))).shape == (5, 2, 12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            b = random_control(rng, pulse_count=int(rng.integers(1, 3)))
            t = rng.uniform(-3, 3)
            numerical = central_difference_gradient(lambda x: field_value(ControlParams.from_array(x), t),
                                                    b.to_array(), step=1e-6)
            np.testing.assert_allclose(field_gradient(b, t), numerical, rtol=1e-6, atol=1e-9)

    def test_fixed_time(self):
        b = random_control(np.random.default_rng(9), pulse_count=2)
        numerical = central_difference_gradient(lambda x: field_value(ControlParams.from_array(x), 0.7),
                                                b.to_array(), step=1e-6)
        np.testing.assert_allclose(field_gradient(b, 0.7), numerical, rtol=1e-6, atol=1e-9)
