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
import os
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np
import numpy.typing as npt
from scipy.integrate import trapezoid

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12


def hermitian_residual(matrix: npt.NDArray) -> float:
    """
    Largest element of |M - M^dagger|.

    Parameters
    ----------
    matrix : npt.NDArray
        Square complex matrix.

    Returns
    -------
    float
        The residual, 0 for an exactly Hermitian matrix.
    """
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


def is_hermitian(matrix: npt.NDArray, tol: float = HERMITIAN_TOL) -> bool:
    """
    Check Hermiticity, the tolerance is scaled by the largest element for
    matrices with entries bigger than one.
    """
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    return hermitian_residual(matrix) <= tol * scale


def grid_integral(values: npt.NDArray, dt: float, axis: int = 0) -> npt.NDArray | float:
    """
    Trapezoid rule on a uniform grid.

    Parameters
    ----------
    values : npt.NDArray
        Samples on the grid nodes along ``axis``.
    dt : float
        Node spacing.
    axis : int, optional
        Integration axis (default is 0).

    Returns
    -------
    npt.NDArray or float
        The integral, with ``axis`` removed.
    """
    return trapezoid(values, dx=dt, axis=axis)


def central_difference_gradient(func: Callable[[npt.NDArray], float], x0: npt.NDArray,
                                step: float = 1e-6) -> npt.NDArray:
    """
    Centered finite difference gradient of a scalar function.

    Parameters
    ----------
    func : Callable
        Scalar function of a real vector.
    x0 : npt.NDArray
        Evaluation point.
    step : float, optional
        Absolute perturbation applied to each component (default is 1e-6).

    Returns
    -------
    npt.NDArray
        Gradient estimate with the shape of ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for j in range(x0.size):
        x = x0.copy()
        x[j] = x0[j] + step
        f_plus = func(x)
        x[j] = x0[j] - step
        f_minus = func(x)
        grad[j] = (f_plus - f_minus) / (2 * step)
    return grad


def relative_error(value: npt.NDArray, reference: npt.NDArray, floor: float = 1e-8) -> npt.NDArray:
    """
    Component-wise |value - reference| / max(|reference|, floor).
    """
    value = np.asarray(value, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    return np.abs(value - reference) / np.maximum(np.abs(reference), floor)


def atomic_write_text(filename: Path, text: str) -> None:
    """
    Write a text file through a temporary file in the same directory and
    rename it over the target, so readers never see a partial document.

    Parameters
    ----------
    filename : Path
        Target file.
    text : str
        File content.
    """
    filename = Path(filename)
    logger.debug(f"Writing '{filename}'")
    fd, tmp_name = tempfile.mkstemp(dir=filename.parent, prefix=f".{filename.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp_name, filename)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
