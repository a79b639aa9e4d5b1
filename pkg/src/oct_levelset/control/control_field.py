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
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import NonFiniteError

logger = logging.getLogger(__name__)

# flattened order of the parameters of one pulse inside b
PULSE_FIELDS = ("amplitude", "center", "width", "carrier")


@dataclass(frozen=True)
class Pulse:
    """
    Gaussian envelope times a cosine carrier:
    A * exp(-(t - t_c)^2 / (2 sigma_w^2)) * cos(omega t)

    Attributes
    ----------
    amplitude : float
        Peak field A.
    center : float
        Envelope center t_c.
    width : float
        Envelope width sigma_w, strictly positive.
    carrier : float
        Carrier angular frequency omega.
    """
    amplitude: float
    center: float
    width: float
    carrier: float

    def __post_init__(self):
        values = (self.amplitude, self.center, self.width, self.carrier)
        if not all(np.isfinite(values)):
            raise NonFiniteError(f"Pulse parameters must be finite, got {values}")
        if self.width <= 0:
            raise InvalidParameterError(f"Pulse width must be positive, got {self.width}", width=self.width)


@dataclass(frozen=True)
class ControlParams:
    """
    Control parameter vector b as an ordered list of pulses.

    The flat representation is (A, t_c, sigma_w, omega) per pulse, pulses
    in declaration order, so ``m = 4 * len(pulses)``.
    """
    pulses: tuple[Pulse, ...]

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if not self.pulses:
            raise DimensionMismatchError("At least one pulse is required")

    @property
    def m(self) -> int:
        return len(PULSE_FIELDS) * len(self.pulses)

    @property
    def pulse_count(self) -> int:
        return len(self.pulses)

    def to_array(self) -> npt.NDArray:
        return np.array([[p.amplitude, p.center, p.width, p.carrier] for p in self.pulses],
                        dtype=np.float64).ravel()

    @classmethod
    def from_array(cls, values: npt.ArrayLike) -> "ControlParams":
        """
        Rebuild the pulse list from the flat vector b.

        Parameters
        ----------
        values : npt.ArrayLike
            Flat vector, its length must be a multiple of 4.

        Returns
        -------
        ControlParams
        """
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size == 0 or values.size % len(PULSE_FIELDS):
            raise DimensionMismatchError(f"Control vector length {values.size} is not a positive multiple of "
                                         f"{len(PULSE_FIELDS)}", length=int(values.size))
        rows = values.reshape(-1, len(PULSE_FIELDS))
        return cls(tuple(Pulse(*(float(v) for v in row)) for row in rows))

    def names(self) -> list[str]:
        return parameter_names(self.pulse_count)


def parameter_names(pulse_count: int) -> list[str]:
    """
    Names of the flattened control parameters, e.g. ``amplitude_0``.
    """
    return [f"{name}_{j}" for j in range(pulse_count) for name in PULSE_FIELDS]


def _pulse_terms(b: ControlParams, t: npt.ArrayLike):
    rows = b.to_array().reshape(-1, len(PULSE_FIELDS))
    amplitude, center, width, carrier = rows.T
    t = np.asarray(t, dtype=np.float64)[..., None]
    envelope = np.exp(-(t - center) ** 2 / (2 * width ** 2))
    return t, amplitude, center, width, carrier, envelope


def field_value(b: ControlParams, t: npt.ArrayLike) -> float | npt.NDArray:
    """
    Field E(t; b) summed over the pulses.

    Parameters
    ----------
    b : ControlParams
        Control parameters.
    t : float or npt.ArrayLike
        Time(s).

    Returns
    -------
    float or npt.NDArray
        E with the shape of ``t``.
    """
    t, amplitude, _, _, carrier, envelope = _pulse_terms(b, t)
    values = np.sum(amplitude * envelope * np.cos(carrier * t), axis=-1)
    return float(values) if values.ndim == 0 else values


def field_gradient(b: ControlParams, t: npt.ArrayLike) -> npt.NDArray:
    """
    Closed form gradient of E(t; b) with respect to the flat vector b.

    Parameters
    ----------
    b : ControlParams
        Control parameters.
    t : float or npt.ArrayLike
        Time(s).

    Returns
    -------
    npt.NDArray
        Shape ``t.shape + (m,)``, ordered as ``b.to_array()``.
    """
    t, amplitude, center, width, carrier, envelope = _pulse_terms(b, t)
    cosine = np.cos(carrier * t)
    shaped = envelope * cosine
    offset = t - center
    partials = np.stack([
        shaped,
        amplitude * shaped * offset / width ** 2,
        amplitude * shaped * offset ** 2 / width ** 3,
        -amplitude * envelope * np.sin(carrier * t) * t,
    ], axis=-1)
    return partials.reshape(partials.shape[:-2] + (b.m,))
