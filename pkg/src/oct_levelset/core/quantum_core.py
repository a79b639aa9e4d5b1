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
from dataclasses import field
from dataclasses import replace
from typing import Callable

import numpy as np
import numpy.typing as npt
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import NonFiniteError
from oct_levelset.utils.errors import NonHermitianError
from oct_levelset.utils.errors import OutOfBoundsError
from oct_levelset.utils.utils import hermitian_residual
from oct_levelset.utils.utils import is_hermitian

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12


def _frozen_array(values, dtype) -> npt.NDArray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class QuantumState:
    """
    Normalized state vector of a finite dimensional system.

    The amplitudes are normalized on construction, a zero vector is rejected.

    Parameters
    ----------
    amplitudes : npt.ArrayLike
        Complex amplitudes, at least two of them.
    """
    amplitudes: npt.NDArray

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if amplitudes.size < 2:
            raise DimensionMismatchError(f"A state needs at least 2 amplitudes, got {amplitudes.size}",
                                         dim=int(amplitudes.size))
        if not np.all(np.isfinite(amplitudes)):
            raise NonFiniteError("State amplitudes must be finite")
        norm = np.linalg.norm(amplitudes)
        if norm == 0:
            raise InvalidParameterError("Cannot normalize a zero state vector")
        object.__setattr__(self, "amplitudes", _frozen_array(amplitudes / norm, np.complex128))

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    @classmethod
    def from_pairs(cls, pairs: list) -> "QuantumState":
        """
        Build a state from a list of (re, im) pairs, as stored in config documents.
        """
        return cls(np.array([complex(re, im) for re, im in pairs]))

    @classmethod
    def basis(cls, dim: int, index: int) -> "QuantumState":
        amplitudes = np.zeros(dim, dtype=np.complex128)
        amplitudes[index] = 1.0
        return cls(amplitudes)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """
    Hermitian N x N matrix, energies in units with hbar = 1.
    """
    matrix: npt.NDArray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Operator must be square, got shape {matrix.shape}", shape=matrix.shape)
        if not np.all(np.isfinite(matrix)):
            raise NonFiniteError("Operator entries must be finite")
        if not is_hermitian(matrix):
            raise NonHermitianError(f"Operator is not Hermitian (residual {hermitian_residual(matrix):.3e})",
                                    residual=hermitian_residual(matrix))
        object.__setattr__(self, "matrix", _frozen_array(matrix, np.complex128))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def eigenvalue_bounds(self) -> tuple[float, float]:
        eigenvalues = np.linalg.eigvalsh(self.matrix)
        return float(eigenvalues[0]), float(eigenvalues[-1])


@dataclass(frozen=True, eq=False)
class SystemParams:
    """
    System parameters ``a`` entering H_o and the unscaled parameters ``c``
    they were derived from.
    """
    a: npt.NDArray
    c: npt.NDArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen_array(np.atleast_1d(self.a), np.float64))
        object.__setattr__(self, "c", _frozen_array(np.atleast_1d(self.c), np.float64))


@dataclass(frozen=True, eq=False)
class ScaleVector:
    """
    Dimensionless scale parameters ``s``.
    """
    s: npt.NDArray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=np.float64))
        if s.size < 1:
            raise DimensionMismatchError("A scale vector needs at least one component")
        if not np.all(np.isfinite(s)):
            raise NonFiniteError("Scale components must be finite")
        object.__setattr__(self, "s", _frozen_array(s, np.float64))

    @property
    def p(self) -> int:
        return int(self.s.size)


@dataclass(frozen=True, eq=False)
class QuantumModel:
    """
    A driven quantum system: H(a, E) = H_o(a) + dipole_sign * mu * E.

    Attributes
    ----------
    name : str
        Library name of the model.
    h0_builder : Callable
        Map from the system parameter vector ``a`` to H_o(a).
    dipole : HermitianOperator
        Dipole operator mu, independent of ``a`` and of the control.
    observable : HermitianOperator
        Controlled observable Theta.
    psi0 : QuantumState
        Initial state.
    s_to_a : Callable
        Map (s, c) -> a given by the physics of the system.
    a_names, c_names : tuple of str
        Parameter names, used by configs and result documents.
    a_bounds, c_bounds, s_bounds : npt.NDArray
        Admissible [lo, hi] per component.
    c_values : npt.NDArray
        Default unscaled parameters, used when a sweep does not vary c.
    dipole_sign : int
        +1 (H_c = mu E) or -1 (H_c = -mu E).
    observable_name : str
        Name of the selected observable.
    """
    name: str
    h0_builder: Callable[[npt.NDArray], npt.NDArray]
    dipole: HermitianOperator
    observable: HermitianOperator
    psi0: QuantumState
    s_to_a: Callable[[npt.NDArray, npt.NDArray], npt.NDArray]
    a_names: tuple[str, ...]
    c_names: tuple[str, ...]
    a_bounds: npt.NDArray
    c_bounds: npt.NDArray
    s_bounds: npt.NDArray
    c_values: npt.NDArray
    dipole_sign: int = 1
    observable_name: str = ""

    def __post_init__(self):
        if self.dipole_sign not in (1, -1):
            raise InvalidParameterError(f"dipole_sign must be +1 or -1, got {self.dipole_sign}")
        dims = {self.dipole.dim, self.observable.dim, self.psi0.dim}
        if len(dims) != 1:
            raise DimensionMismatchError(f"Inconsistent model dimensions {sorted(dims)}")
        for attribute in ("a_bounds", "c_bounds", "s_bounds"):
            bounds = np.asarray(getattr(self, attribute), dtype=np.float64).reshape(-1, 2)
            if np.any(bounds[:, 0] > bounds[:, 1]):
                raise InvalidParameterError(f"{attribute} has a lower bound above its upper bound")
            object.__setattr__(self, attribute, _frozen_array(bounds, np.float64))
        if len(self.a_bounds) != len(self.a_names) or len(self.c_bounds) != len(self.c_names):
            raise DimensionMismatchError("Parameter bounds do not match parameter names")
        object.__setattr__(self, "c_values", _frozen_array(np.atleast_1d(self.c_values), np.float64))

    @property
    def dim(self) -> int:
        return self.psi0.dim

    @property
    def p(self) -> int:
        return int(len(self.s_bounds))

    @property
    def coupling(self) -> npt.NDArray:
        """dipole_sign * mu, the operator multiplying E(t) in H."""
        return self.dipole_sign * self.dipole.matrix

    def h0(self, a: SystemParams) -> npt.NDArray:
        values = np.asarray(a.a, dtype=np.float64)
        if values.size != len(self.a_names):
            raise DimensionMismatchError(f"Model '{self.name}' expects {len(self.a_names)} system parameters, "
                                         f"got {values.size}")
        return np.asarray(self.h0_builder(values), dtype=np.complex128)

    def with_observable(self, name: str) -> "QuantumModel":
        observables = observable_library(self.name)
        if name not in observables:
            raise InvalidParameterError(f"Unknown observable '{name}' for model '{self.name}'", observable=name)
        return replace(self, observable=observables[name], observable_name=name)


def expectation(op: HermitianOperator | npt.NDArray, psi: QuantumState) -> float:
    """
    Expectation value <psi|op|psi>.

    Parameters
    ----------
    op : HermitianOperator or npt.NDArray
        Observable, raw matrices are validated first.
    psi : QuantumState
        Normalized state.

    Returns
    -------
    float
        Real part of the expectation value.
    """
    if not isinstance(op, HermitianOperator):
        op = HermitianOperator(op)
    if op.dim != psi.dim:
        raise DimensionMismatchError(f"Operator dimension {op.dim} does not match state dimension {psi.dim}",
                                     operator_dim=op.dim, state_dim=psi.dim)
    value = np.vdot(psi.amplitudes, op.matrix @ psi.amplitudes)
    scale = max(1.0, float(np.max(np.abs(op.matrix))))
    if abs(value.imag) > NORM_TOL * scale:
        raise NonHermitianError(f"Expectation value has an imaginary part {value.imag:.3e}", imag=float(value.imag))
    return float(value.real)


def build_hamiltonian(model: QuantumModel, a: SystemParams, field_value: float) -> HermitianOperator:
    """
    Total Hamiltonian H_o(a) + dipole_sign * mu * E at one field value.

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    a : SystemParams
        System parameters.
    field_value : float
        Instantaneous field E.

    Returns
    -------
    HermitianOperator
    """
    if not np.isfinite(field_value):
        raise NonFiniteError(f"Field value must be finite, got {field_value}")
    return HermitianOperator(model.h0(a) + field_value * model.coupling)


def _check_bounds(kind: str, values: npt.NDArray, bounds: npt.NDArray, names: tuple[str, ...] | None = None):
    if values.size != len(bounds):
        raise DimensionMismatchError(f"Expected {len(bounds)} {kind} components, got {values.size}")
    for index, (value, (lo, hi)) in enumerate(zip(values, bounds)):
        name = names[index] if names else f"{kind}[{index}]"
        if not np.isfinite(value):
            raise NonFiniteError(f"{name} must be finite")
        if not lo <= value <= hi:
            raise OutOfBoundsError(f"{name} = {value} is outside [{lo}, {hi}]", name=name, value=float(value),
                                   bounds=[float(lo), float(hi)])


def map_scale(model: QuantumModel, s: ScaleVector, c: npt.ArrayLike) -> SystemParams:
    """
    Evaluate the physics map (s, c) -> a.

    Parameters
    ----------
    model : QuantumModel
        The driven system.
    s : ScaleVector
        Scale parameters, checked against the model's s bounds.
    c : npt.ArrayLike
        Unscaled parameters, checked against the model's c bounds.

    Returns
    -------
    SystemParams
        ``a`` together with the ``c`` it was computed from.
    """
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    _check_bounds("s", s.s, model.s_bounds)
    _check_bounds("c", c, model.c_bounds, model.c_names)
    a = np.atleast_1d(np.asarray(model.s_to_a(s.s, c), dtype=np.float64))
    _check_bounds("a", a, model.a_bounds, model.a_names)
    return SystemParams(a=a, c=c)


# Built-in model library

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def _two_level_h0(a: npt.NDArray) -> npt.NDArray:
    return 0.5 * a[0] * SIGMA_Z


def _two_level_s_to_a(s: npt.NDArray, c: npt.NDArray) -> npt.NDArray:
    # omega0 = omega_base * s
    return np.array([c[0] * s[0]])


def _ladder_h0(a: npt.NDArray) -> npt.NDArray:
    return np.diag([0.0, a[0], a[0] + a[1]]).astype(np.complex128)


def _ladder_s_to_a(s: npt.NDArray, c: npt.NDArray) -> npt.NDArray:
    # second spacing is the scaled first spacing minus the anharmonicity
    omega1 = c[0] * s[0]
    return np.array([omega1, omega1 - c[1]])


def _populations(dim: int) -> dict[str, npt.NDArray]:
    projectors = {}
    for level in range(dim):
        projector = np.zeros((dim, dim), dtype=np.complex128)
        projector[level, level] = 1.0
        projectors[f"population_{level}"] = projector
    return projectors


@dataclass(frozen=True, eq=False)
class ModelTemplate:
    """
    Static description of a library model: operators and maps, no bounds.
    """
    dim: int
    h0_builder: Callable[[npt.NDArray], npt.NDArray]
    dipole: npt.NDArray
    s_to_a: Callable[[npt.NDArray, npt.NDArray], npt.NDArray]
    a_names: tuple[str, ...]
    c_names: tuple[str, ...]
    c_defaults: tuple[float, ...]
    p: int
    observables: dict[str, npt.NDArray]


MODEL_LIBRARY: dict[str, ModelTemplate] = {
    "two_level": ModelTemplate(
        dim=2,
        h0_builder=_two_level_h0,
        dipole=SIGMA_X,
        s_to_a=_two_level_s_to_a,
        a_names=("omega0",),
        c_names=("omega_base",),
        c_defaults=(1.0,),
        p=1,
        observables={"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z, **_populations(2)},
    ),
    "three_level_ladder": ModelTemplate(
        dim=3,
        h0_builder=_ladder_h0,
        dipole=np.array([[0, 1, 0], [1, 0, np.sqrt(2)], [0, np.sqrt(2), 0]], dtype=np.complex128),
        s_to_a=_ladder_s_to_a,
        a_names=("omega1", "omega2"),
        c_names=("omega_base", "anharmonicity"),
        c_defaults=(1.0, 0.1),
        p=1,
        observables={"number": np.diag([0.0, 1.0, 2.0]).astype(np.complex128), **_populations(3)},
    ),
}


def observable_library(model_name: str) -> dict[str, HermitianOperator]:
    """
    Named observables available for a library model.
    """
    if model_name not in MODEL_LIBRARY:
        raise InvalidParameterError(f"Unknown model '{model_name}'", model=model_name)
    return {name: HermitianOperator(matrix) for name, matrix in MODEL_LIBRARY[model_name].observables.items()}


def build_model(name: str,
                observable: str | None = None,
                a_bounds: npt.ArrayLike | None = None,
                c_bounds: npt.ArrayLike | None = None,
                c_values: npt.ArrayLike | None = None,
                s_bounds: npt.ArrayLike | None = None,
                dipole_sign: int = 1,
                psi0: QuantumState | None = None) -> QuantumModel:
    """
    Instantiate a model from the built-in library.

    Parameters
    ----------
    name : str
        'two_level' (H_o = omega0/2 sigma_z, mu = sigma_x) or
        'three_level_ladder' (nearest neighbour dipole couplings).
    observable : str, optional
        Observable name, defaults to the first one of the model.
    a_bounds, c_bounds, s_bounds : npt.ArrayLike, optional
        [lo, hi] per component, unbounded by default.
    c_values : npt.ArrayLike, optional
        Default unscaled parameters.
    dipole_sign : int, optional
        Sign of the control term (default is +1).
    psi0 : QuantumState, optional
        Initial state, the ground basis state |0> by default.

    Returns
    -------
    QuantumModel
    """
    if name not in MODEL_LIBRARY:
        raise InvalidParameterError(f"Unknown model '{name}', available: {sorted(MODEL_LIBRARY)}", model=name)
    template = MODEL_LIBRARY[name]
    observables = observable_library(name)
    default = next(iter(observables))
    unbounded = [-np.inf, np.inf]
    logger.debug(f"Building model '{name}' observing '{observable or default}'")
    model = QuantumModel(
        name=name,
        h0_builder=template.h0_builder,
        dipole=HermitianOperator(template.dipole),
        observable=observables[default],
        psi0=psi0 if psi0 is not None else QuantumState.basis(template.dim, 0),
        s_to_a=template.s_to_a,
        a_names=template.a_names,
        c_names=template.c_names,
        a_bounds=np.asarray(a_bounds if a_bounds is not None else [unbounded] * len(template.a_names)),
        c_bounds=np.asarray(c_bounds if c_bounds is not None else [unbounded] * len(template.c_names)),
        s_bounds=np.asarray(s_bounds if s_bounds is not None else [unbounded] * template.p),
        c_values=np.asarray(c_values if c_values is not None else template.c_defaults),
        dipole_sign=dipole_sign,
        observable_name=default,
    )
    return model.with_observable(observable or default)
