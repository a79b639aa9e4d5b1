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

import numpy as np
import numpy.typing as npt
from scipy.interpolate import CubicSpline
from scipy.interpolate import RegularGridInterpolator

logger = logging.getLogger(__name__)

# axes up to this count use cubic splines, above it multilinear cells
MAX_SPLINE_AXES = 2


class BranchInterpolant:
    """
    Exact interpolant of control vectors on a rectangular block of nodes.

    One axis uses a natural cubic spline, two axes a tensor product of
    natural cubic splines built by successive one dimensional fits, more
    axes a multilinear interpolant whose derivative is the divided
    difference across the enclosing cell. Queries outside the block are
    extrapolated by the same pieces.

    Parameters
    ----------
    axes : list of npt.NDArray
        Strictly increasing node coordinates, at least two per axis.
    values : npt.NDArray
        Control vectors, shape (n_1, ..., n_d, m).
    """

    def __init__(self, axes: list[npt.NDArray], values: npt.NDArray):
        self.axes = [np.asarray(axis, dtype=np.float64) for axis in axes]
        self.values = np.asarray(values, dtype=np.float64)
        self.ndim = len(self.axes)
        if self.ndim <= MAX_SPLINE_AXES:
            # splines along the last axis, evaluated first at query time
            self._inner = CubicSpline(self.axes[-1], self.values, axis=self.ndim - 1, bc_type="natural")
            self._linear = None
        else:
            self._inner = None
            self._linear = RegularGridInterpolator(tuple(self.axes), self.values, method="linear",
                                                   bounds_error=False, fill_value=None)

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def _spline(self, coordinates: npt.NDArray, derivatives: tuple[int, ...]) -> npt.NDArray:
        rows = self._inner(coordinates[-1], derivatives[-1])
        if self.ndim == 1:
            return rows
        outer = CubicSpline(self.axes[0], rows, axis=0, bc_type="natural")
        return outer(coordinates[0], derivatives[0])

    def evaluate(self, coordinates: npt.ArrayLike) -> npt.NDArray:
        """
        Control vector at a point given along the block axes.
        """
        coordinates = np.asarray(coordinates, dtype=np.float64)
        if self._linear is not None:
            return self._linear(coordinates[None, :])[0]
        return self._spline(coordinates, (0,) * self.ndim)

    def jacobian(self, coordinates: npt.ArrayLike) -> npt.NDArray:
        """
        Derivatives of the control vector along each axis, shape (m, d).
        """
        coordinates = np.asarray(coordinates, dtype=np.float64)
        columns = []
        for axis in range(self.ndim):
            if self._linear is None:
                order = tuple(1 if k == axis else 0 for k in range(self.ndim))
                columns.append(self._spline(coordinates, order))
                continue
            nodes = self.axes[axis]
            cell = int(np.clip(np.searchsorted(nodes, coordinates[axis], side="right") - 1, 0, nodes.size - 2))
            lower, upper = coordinates.copy(), coordinates.copy()
            lower[axis], upper[axis] = nodes[cell], nodes[cell + 1]
            difference = self._linear(np.stack([upper, lower]))
            columns.append((difference[0] - difference[1]) / (nodes[cell + 1] - nodes[cell]))
        return np.stack(columns, axis=1)
