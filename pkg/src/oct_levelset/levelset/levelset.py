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
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
import numpy.typing as npt
import scipy.linalg
from oct_levelset.control.control_field import ControlParams
from oct_levelset.core.quantum_core import map_scale
from oct_levelset.core.quantum_core import QuantumModel
from oct_levelset.core.quantum_core import ScaleVector
from oct_levelset.dynamics.cost_adjoint import CostWeights
from oct_levelset.dynamics.propagator import TimeGrid
from oct_levelset.levelset.interpolation import BranchInterpolant
from oct_levelset.optimize.optimizer import multistart
from oct_levelset.optimize.optimizer import OptSettings
from oct_levelset.utils.dataclasses import SheetEntry
from oct_levelset.utils.errors import DimensionMismatchError
from oct_levelset.utils.errors import InvalidParameterError
from oct_levelset.utils.errors import OctLevelsetError
from oct_levelset.utils.errors import OutOfHullError
from oct_levelset.utils.errors import SheetFitError
from oct_levelset.utils.errors import SweepFailedError
from oct_levelset.utils.errors import UnknownBranchError

logger = logging.getLogger(__name__)

SHEET_FORMAT_VERSION = 1
HULL_TOL = 1e-12


def _axis(values) -> npt.NDArray:
    axis = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if axis.ndim != 1 or axis.size < 1:
        raise InvalidParameterError("Sweep axes must be non-empty lists of numbers")
    if not np.all(np.isfinite(axis)):
        raise InvalidParameterError("Sweep axis nodes must be finite")
    if np.any(np.diff(axis) <= 0):
        raise InvalidParameterError(f"Sweep axis nodes must be strictly increasing, got {axis.tolist()}")
    axis.setflags(write=False)
    return axis


@dataclass(frozen=True, eq=False)
class SweepGrid:
    """
    Tensor grid over the scale parameters s and the unscaled parameters c.

    Attributes
    ----------
    s_axes : tuple of npt.NDArray
        One strictly increasing node list per scale component.
    c_axes : tuple of npt.NDArray
        Node lists of the swept c components, possibly none.
    s_components : tuple of int, optional
        Scale component of each s axis, declaration order by default.
    c_components : tuple of int, optional
        c component of each c axis, declaration order by default.
    """
    s_axes: tuple[npt.NDArray, ...]
    c_axes: tuple[npt.NDArray, ...] = ()
    s_components: tuple[int, ...] | None = None
    c_components: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "s_axes", tuple(_axis(axis) for axis in self.s_axes))
        object.__setattr__(self, "c_axes", tuple(_axis(axis) for axis in self.c_axes))
        if not self.s_axes:
            raise InvalidParameterError("A sweep needs at least one s axis")
        for name, axes in (("s_components", self.s_axes), ("c_components", self.c_axes)):
            components = getattr(self, name)
            components = tuple(range(len(axes))) if components is None else tuple(int(c) for c in components)
            if len(components) != len(axes) or len(set(components)) != len(components):
                raise InvalidParameterError(f"{name} must name one distinct component per axis")
            object.__setattr__(self, name, components)

    @property
    def axes(self) -> tuple[npt.NDArray, ...]:
        return self.s_axes + self.c_axes

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.size for axis in self.axes)

    @property
    def axis_names(self) -> list[str]:
        return [f"s[{i}]" for i in self.s_components] + [f"c[{i}]" for i in self.c_components]

    def nodes(self) -> list[tuple[int, ...]]:
        """
        Node indices in lexicographic order.
        """
        return list(itertools.product(*(range(n) for n in self.shape)))

    def wavefronts(self) -> list[list[tuple[int, ...]]]:
        """
        Nodes grouped by the sum of their indices. Every node of a front has
        an index neighbour in the previous front.
        """
        fronts: dict[int, list[tuple[int, ...]]] = {}
        for index in self.nodes():
            fronts.setdefault(sum(index), []).append(index)
        return [fronts[key] for key in sorted(fronts)]

    def neighbors(self, index: tuple[int, ...]) -> list[tuple[int, ...]]:
        result = []
        for axis, n in enumerate(self.shape):
            for offset in (-1, 1):
                position = index[axis] + offset
                if 0 <= position < n:
                    result.append(index[:axis] + (position,) + index[axis + 1:])
        return result

    def coordinates(self, index: tuple[int, ...], c_fixed: npt.NDArray) -> tuple[npt.NDArray, npt.NDArray]:
        """
        Full (s, c) vectors at a node; c components without an axis take ``c_fixed``.
        """
        s = np.empty(len(self.s_axes))
        for axis, component in enumerate(self.s_components):
            s[component] = self.s_axes[axis][index[axis]]
        c = np.array(c_fixed, dtype=np.float64)
        offset = len(self.s_axes)
        for axis, component in enumerate(self.c_components):
            c[component] = self.c_axes[axis][index[offset + axis]]
        return s, c

    def point_coordinates(self, s: npt.ArrayLike, c: npt.ArrayLike) -> npt.NDArray:
        """
        Position of a full (s, c) point along the grid axes.
        """
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        return np.array([s[i] for i in self.s_components] + [c[i] for i in self.c_components])

    def to_dict(self) -> dict:
        return {"s_axes": [axis.tolist() for axis in self.s_axes],
                "c_axes": [axis.tolist() for axis in self.c_axes],
                "s_components": list(self.s_components),
                "c_components": list(self.c_components)}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepGrid":
        return cls(s_axes=tuple(data["s_axes"]), c_axes=tuple(data.get("c_axes", ())),
                   s_components=data.get("s_components"), c_components=data.get("c_components"))


def _number_or_none(value: float) -> float | None:
    return float(value) if np.isfinite(value) else None


@dataclass(eq=False)
class SolutionSheet:
    """
    Optimal control vectors over a sweep grid, labelled by branch.

    Attributes
    ----------
    grid : SweepGrid
        The swept grid.
    entries : dict
        Node index -> SheetEntry.
    pulse_count : int
        Pulses of every stored control vector.
    b_bounds : npt.NDArray
        Box bounds of the control parameters, used to clip predictions.
    c_fixed : npt.NDArray
        c components not swept take these values.
    continuity_threshold : float
        Largest infinity norm jump between neighbours of one branch.
    forward_propagations : int
        Forward propagations spent by the sweep.
    warm_start : bool
        Whether nodes were started from solved neighbours.
    """
    grid: SweepGrid
    entries: dict[tuple[int, ...], SheetEntry]
    pulse_count: int
    b_bounds: npt.NDArray
    c_fixed: npt.NDArray
    continuity_threshold: float = np.inf
    forward_propagations: int = 0
    warm_start: bool = True
    failed_nodes: list[tuple[int, ...]] = field(default_factory=list)

    def branches(self) -> list[int]:
        return sorted({entry.branch for entry in self.entries.values() if entry.branch >= 0})

    def valid_entries(self, branch: int | None = None) -> list[SheetEntry]:
        return [entry for index, entry in sorted(self.entries.items())
                if entry.converged and entry.branch >= 0 and (branch is None or entry.branch == branch)]

    def neighbor_jumps(self) -> list[tuple[tuple[int, ...], tuple[int, ...], float, bool]]:
        """
        Infinity norm jumps between adjacent valid nodes, with whether both
        nodes belong to the same branch.
        """
        jumps = []
        for index, entry in sorted(self.entries.items()):
            if not entry.converged:
                continue
            for other in self.grid.neighbors(index):
                neighbor = self.entries.get(other)
                if other > index and neighbor is not None and neighbor.converged:
                    gap = float(np.max(np.abs(entry.b - neighbor.b)))
                    jumps.append((index, other, gap, entry.branch == neighbor.branch))
        return jumps

    def to_dict(self) -> dict:
        entries = []
        for index, entry in sorted(self.entries.items()):
            data = entry.to_dict()
            data["total"] = _number_or_none(entry.total)
            data["deviation"] = _number_or_none(entry.deviation)
            entries.append(data)
        return {
            "format_version": SHEET_FORMAT_VERSION,
            "grid": self.grid.to_dict(),
            "pulse_count": self.pulse_count,
            "b_bounds": [[_number_or_none(lo), _number_or_none(hi)] for lo, hi in self.b_bounds],
            "c_fixed": [float(v) for v in self.c_fixed],
            "continuity_threshold": _number_or_none(self.continuity_threshold),
            "forward_propagations": self.forward_propagations,
            "warm_start": self.warm_start,
            "branches": self.branches(),
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolutionSheet":
        version = data.get("format_version")
        if version != SHEET_FORMAT_VERSION:
            raise InvalidParameterError(f"Unsupported sheet format version {version}", version=version)
        entries = {}
        for item in data["entries"]:
            item = dict(item)
            item["total"] = np.nan if item["total"] is None else item["total"]
            item["deviation"] = np.nan if item["deviation"] is None else item["deviation"]
            entry = SheetEntry.from_dict(item)
            entries[entry.index] = entry
        bounds = np.array([[-np.inf if lo is None else lo, np.inf if hi is None else hi]
                           for lo, hi in data["b_bounds"]], dtype=np.float64)
        threshold = data.get("continuity_threshold")
        return cls(grid=SweepGrid.from_dict(data["grid"]),
                   entries=entries,
                   pulse_count=int(data["pulse_count"]),
                   b_bounds=bounds,
                   c_fixed=np.asarray(data["c_fixed"], dtype=np.float64),
                   continuity_threshold=np.inf if threshold is None else float(threshold),
                   forward_propagations=int(data.get("forward_propagations", 0)),
                   warm_start=bool(data.get("warm_start", True)),
                   failed_nodes=[index for index, entry in sorted(entries.items()) if not entry.converged])


def _earlier_valid(index: tuple[int, ...], valid: set[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """
    Nearest valid node before ``index`` along each axis, skipping excluded ones.
    """
    found = []
    for axis, position in enumerate(index):
        for step in range(position - 1, -1, -1):
            other = index[:axis] + (step,) + index[axis + 1:]
            if other in valid:
                found.append(other)
                break
    return found


def default_continuity_threshold(grid: SweepGrid, entries: dict[tuple[int, ...], SheetEntry]) -> float:
    """
    Ten times the median infinity norm jump between converged nodes adjacent
    along an axis once excluded nodes are skipped.
    """
    valid = {index for index, entry in entries.items() if entry.converged}
    gaps = [float(np.max(np.abs(entries[index].b - entries[other].b)))
            for index in grid.nodes() if index in valid for other in _earlier_valid(index, valid)]
    return 10 * float(np.median(gaps)) if gaps else np.inf


def label_branches(grid: SweepGrid, entries: dict[tuple[int, ...], SheetEntry],
                   threshold: float) -> dict[tuple[int, ...], SheetEntry]:
    """
    Assign branch ids by continuity in b-space.

    Nodes are labelled in lexicographic order. Along each axis a node is
    compared with the nearest earlier converged node, excluded nodes in
    between are skipped. It joins the lowest branch whose compared nodes are
    all within ``threshold``, otherwise it opens a new branch. Branches are
    never merged. Excluded nodes get branch -1.
    """
    labels: dict[tuple[int, ...], int] = {}
    labelled: set[tuple[int, ...]] = set()
    next_branch = 0
    for index in grid.nodes():
        entry = entries.get(index)
        if entry is None or not entry.converged:
            labels[index] = -1
            continue
        earlier = _earlier_valid(index, labelled)
        gaps = {other: float(np.max(np.abs(entry.b - entries[other].b))) for other in earlier}
        chosen = None
        for branch in sorted({labels[other] for other in earlier}):
            members = [other for other in earlier if labels[other] == branch]
            if all(gaps[other] <= threshold for other in members):
                chosen = branch
                break
        if chosen is None:
            chosen = next_branch
            next_branch += 1
            if earlier:
                logger.debug(f"Branch split at node {index}: jumps {sorted(gaps.values())} over {threshold:.3e}")
        labels[index] = chosen
        labelled.add(index)
    return {index: replace(entry, branch=labels[index]) for index, entry in entries.items()}



def _node_seed(seed: int, flat_index: int) -> int:
    return int(np.random.SeedSequence([seed, flat_index]).generate_state(1)[0])


def _warm_start_source(index: tuple[int, ...], entries: dict[tuple[int, ...], SheetEntry]) -> tuple[int, ...] | None:
    solved = [other for other, entry in entries.items() if entry.converged]
    if not solved:
        return None
    return min(solved, key=lambda other: (sum(abs(i - j) for i, j in zip(index, other)), other))


def sweep(model: QuantumModel, grid: SweepGrid, time_grid: TimeGrid, w: CostWeights, settings: OptSettings,
          b_init: ControlParams, warm_start: bool = True,
          continuity_threshold: float | None = None) -> SolutionSheet:
    """
    Optimize the control at every node of a sweep grid.

    Nodes are processed by wavefronts of constant index sum. Each node runs
    ``multistart`` from the b of the nearest converged node solved in an
    earlier wavefront (or ``b_init`` when there is none, or when
    ``warm_start`` is off); the restarts of a node are seeded from the
    configured seed and the node position, so the sheet does not depend on
    the thread count. Nodes of one wavefront run concurrently when
    ``settings.threads > 1``.

    Parameters
    ----------
    model : QuantumModel
        The driven system; its maps must be defined on every node.
    grid : SweepGrid
        Sweep grid, one s axis per scale component.
    time_grid : TimeGrid
        Propagation grid.
    w : CostWeights
        Cost weights.
    settings : OptSettings
        Descent and restart settings.
    b_init : ControlParams
        Start of the first node.
    warm_start : bool, optional
        Start nodes from solved neighbours (default is True).
    continuity_threshold : float, optional
        Branch split threshold, ``default_continuity_threshold`` when omitted.

    Returns
    -------
    SolutionSheet
    """
    if len(grid.s_axes) != model.p or sorted(grid.s_components) != list(range(model.p)):
        raise DimensionMismatchError(f"Model '{model.name}' has {model.p} scale parameter(s), the sweep grid "
                                     f"declares s components {list(grid.s_components)}")
    if any(component >= len(model.c_names) for component in grid.c_components):
        raise DimensionMismatchError(f"Model '{model.name}' has {len(model.c_names)} unscaled parameter(s)")
    bounds = settings.bounds_for(b_init.m)
    nodes = grid.nodes()
    flat = {index: position for position, index in enumerate(nodes)}
    entries: dict[tuple[int, ...], SheetEntry] = {}
    spent = 0

    def solve(index: tuple[int, ...], start: ControlParams) -> tuple[SheetEntry, int]:
        s, c = grid.coordinates(index, model.c_values)
        node_settings = replace(settings, rng_seed=_node_seed(settings.rng_seed, flat[index]), threads=1)
        try:
            a = map_scale(model, ScaleVector(s), c)
            result = multistart(model, a, time_grid, w, node_settings, start)
        except OctLevelsetError as error:
            logger.info(f"Node {index} failed: {error.message}")
            return SheetEntry(index, s, c, start.to_array(), np.nan, np.nan, False, -1, error.code), 0
        if not result.converged:
            logger.info(f"Node {index} did not converge ({result.status})")
        entry = SheetEntry(index, s, c, result.b_opt.to_array(), result.cost.total, result.cost.deviation,
                           result.converged, 0, result.status)
        return entry, result.forward_propagations

    for front in grid.wavefronts():
        starts = []
        for index in front:
            source = _warm_start_source(index, entries) if warm_start else None
            starts.append(ControlParams.from_array(entries[source].b) if source is not None else b_init)
            logger.debug(f"Node {index}: start from {'b_init' if source is None else source}")
        if settings.threads > 1 and len(front) > 1:
            with ThreadPoolExecutor(max_workers=settings.threads) as pool:
                outcomes = list(pool.map(solve, front, starts))
        else:
            outcomes = [solve(index, start) for index, start in zip(front, starts)]
        for index, (entry, count) in zip(front, outcomes):
            entries[index] = entry
            spent += count

    failed = [index for index in nodes if not entries[index].converged]
    if len(failed) > len(nodes) / 2:
        raise SweepFailedError(f"{len(failed)} of {len(nodes)} sweep nodes failed", failed=[list(i) for i in failed])
    threshold = default_continuity_threshold(grid, entries) if continuity_threshold is None else continuity_threshold
    entries = label_branches(grid, entries, threshold)
    sheet = SolutionSheet(grid=grid, entries=entries, pulse_count=b_init.pulse_count, b_bounds=bounds,
                          c_fixed=np.array(model.c_values), continuity_threshold=threshold,
                          forward_propagations=spent, warm_start=warm_start, failed_nodes=failed)
    logger.info(f"Sweep finished: {len(nodes)} nodes, {len(failed)} failed, branches {sheet.branches()}, "
                f"{spent} forward propagations")
    return sheet


class SheetInterpolant:
    """
    Per-branch interpolant of a solution sheet.

    Each branch covering a rectangular block of at least two nodes per axis
    is interpolated exactly through its nodes: tensor product natural cubic
    splines for up to two axes, multilinear above. Branches that cannot be
    fitted are kept in ``unfitted`` and raise their SheetFitError when
    queried, the other branches stay usable.

    Parameters
    ----------
    sheet : SolutionSheet
        The sheet to interpolate.
    metric_scale : npt.ArrayLike, optional
        Per-component divisor applied to b before measuring normals and speeds.
    """

    def __init__(self, sheet: SolutionSheet, metric_scale: npt.ArrayLike | None = None):
        self.sheet = sheet
        m = sheet.pulse_count * 4
        self.metric_scale = np.ones(m) if metric_scale is None else np.asarray(metric_scale, dtype=np.float64)
        if self.metric_scale.shape != (m,) or np.any(self.metric_scale <= 0):
            raise InvalidParameterError(f"metric_scale must hold {m} positive numbers")
        self.branches: dict[int, BranchInterpolant] = {}
        self.unfitted: dict[int, SheetFitError] = {}
        for branch in sheet.branches():
            try:
                self.branches[branch] = self._fit_branch(branch)
            except SheetFitError as error:
                logger.warning(f"Branch {branch} left out of the interpolant: {error.message}")
                self.unfitted[branch] = error

    def _fit_branch(self, branch: int) -> BranchInterpolant:
        grid = self.sheet.grid
        members = {entry.index: entry for entry in self.sheet.valid_entries(branch)}
        used = [sorted({index[axis] for index in members}) for axis in range(len(grid.shape))]
        for axis, positions in enumerate(used):
            if len(positions) < 2:
                raise SheetFitError(f"Branch {branch} has {len(positions)} valid node(s) on axis "
                                    f"'{grid.axis_names[axis]}', at least 2 are needed",
                                    branch=branch, axis=grid.axis_names[axis])
        values = np.empty(tuple(len(p) for p in used) + (self.sheet.pulse_count * 4,))
        for local in itertools.product(*(range(len(p)) for p in used)):
            index = tuple(used[axis][i] for axis, i in enumerate(local))
            if index not in members:
                axis = next(axis for axis in range(len(used))
                            if any(index[:axis] + (p,) + index[axis + 1:] not in members for p in used[axis]))
                raise SheetFitError(f"Branch {branch} does not cover node {index}, its nodes along axis "
                                    f"'{grid.axis_names[axis]}' are incomplete",
                                    branch=branch, axis=grid.axis_names[axis], node=list(index))
            values[local] = members[index].b
        axes = [grid.axes[axis][positions] for axis, positions in enumerate(used)]
        logger.debug(f"Fitting branch {branch} on a {values.shape[:-1]} block")
        return BranchInterpolant(axes, values)

    def branch(self, branch: int) -> BranchInterpolant:
        if branch in self.unfitted:
            raise self.unfitted[branch]
        if branch not in self.branches:
            raise UnknownBranchError(f"Unknown branch {branch}, available: {sorted(self.branches)}", branch=branch)
        return self.branches[branch]

    def locate(self, s: npt.ArrayLike, c: npt.ArrayLike | None, branch: int,
               extrapolate: bool = False) -> tuple[npt.NDArray, bool]:
        """
        Grid coordinates of (s, c) and whether they lie outside the branch hull.

        Raises
        ------
        OutOfHullError
            Outside the hull when ``extrapolate`` is off.
        """
        interpolant = self.branch(branch)
        c = self.sheet.c_fixed if c is None else np.atleast_1d(np.asarray(c, dtype=np.float64))
        if c.size != self.sheet.c_fixed.size:
            raise DimensionMismatchError(f"Expected {self.sheet.c_fixed.size} unscaled parameters, got {c.size}")
        coordinates = self.sheet.grid.point_coordinates(s, c)
        outside = [name for name, value, axis in zip(self.sheet.grid.axis_names, coordinates, interpolant.axes)
                   if not axis[0] - HULL_TOL * max(1.0, abs(axis[0])) <= value
                   <= axis[-1] + HULL_TOL * max(1.0, abs(axis[-1]))]
        swept = set(self.sheet.grid.c_components)
        outside += [f"c[{i}]" for i in range(c.size)
                    if i not in swept and abs(c[i] - self.sheet.c_fixed[i]) > HULL_TOL * max(1.0, abs(c[i]))]
        if outside and not extrapolate:
            raise OutOfHullError(f"Query lies outside branch {branch} along {outside}, enable extrapolation to "
                                 f"predict there", branch=branch, axes=outside)
        return coordinates, bool(outside)


def fit(sheet: SolutionSheet, metric_scale: npt.ArrayLike | None = None) -> SheetInterpolant:
    """
    Interpolate every branch of a solution sheet.

    A branch with fewer than two valid nodes on an axis, or not covering a
    rectangular block of nodes, is recorded in ``unfitted`` and raises
    SheetFitError once queried.
    """
    return SheetInterpolant(sheet, metric_scale)


@dataclass(frozen=True, eq=False)
class FrontGeometry:
    """
    Local geometry of the optimal-control level set at a query point.

    Attributes
    ----------
    s, c : npt.NDArray
        Query point.
    branch : int
        Branch id.
    tangents : npt.NDArray
        db/dc_j as columns, shape (m, q).
    normal_basis : npt.NDArray
        Orthonormal basis of the complement of the tangent space, shape (m, m - rank).
    speeds : npt.NDArray
        db/ds_i as columns, shape (m, p).
    normal_speeds : npt.NDArray
        Speeds minus their projection on the tangent space, shape (m, p).
    normal_speed_magnitudes : npt.NDArray
        Euclidean norms of the normal speeds, shape (p,).
    orthogonality_residual : float
        Largest |tangent . normal speed|.
    extrapolated : bool
        The query lies outside the branch hull.
    """
    s: npt.NDArray
    c: npt.NDArray
    branch: int
    tangents: npt.NDArray
    normal_basis: npt.NDArray
    speeds: npt.NDArray
    normal_speeds: npt.NDArray
    normal_speed_magnitudes: npt.NDArray
    orthogonality_residual: float
    extrapolated: bool

    def to_dict(self) -> dict:
        return {
            "s": self.s.tolist(),
            "c": self.c.tolist(),
            "branch": self.branch,
            "tangents": self.tangents.T.tolist(),
            "normal_basis": self.normal_basis.T.tolist(),
            "speeds": self.speeds.T.tolist(),
            "normal_speeds": self.normal_speeds.T.tolist(),
            "normal_speed_magnitudes": self.normal_speed_magnitudes.tolist(),
            "orthogonality_residual": self.orthogonality_residual,
            "extrapolated": self.extrapolated,
        }


def geometry(interp: SheetInterpolant, s: npt.ArrayLike, c: npt.ArrayLike | None, branch: int,
             extrapolate: bool = False) -> FrontGeometry:
    """
    Tangents, normals and normal speeds of a branch at (s, c).

    The level set at fixed s is spanned by db/dc; its motion with s is
    db/ds. Both come from the analytic derivatives of the interpolant and
    are measured in b-space divided by ``interp.metric_scale``. With no
    swept c the level set is a point and the whole velocity is normal.

    Parameters
    ----------
    interp : SheetInterpolant
        Fitted sheet.
    s : npt.ArrayLike
        Scale vector.
    c : npt.ArrayLike or None
        Unscaled parameters, the sheet's fixed values when None.
    branch : int
        Branch id.
    extrapolate : bool, optional
        Allow queries outside the branch hull (default is False).

    Returns
    -------
    FrontGeometry
    """
    coordinates, extrapolated = interp.locate(s, c, branch, extrapolate)
    jacobian = interp.branch(branch).jacobian(coordinates) / interp.metric_scale[:, None]
    p = len(interp.sheet.grid.s_axes)
    speeds, tangents = jacobian[:, :p], jacobian[:, p:]
    m = jacobian.shape[0]
    if tangents.shape[1] == 0:
        tangent_basis = np.zeros((m, 0))
        normal_basis = np.eye(m)
        normal_speeds = speeds.copy()
    else:
        tangent_basis = scipy.linalg.orth(tangents)
        normal_basis = scipy.linalg.null_space(tangents.T)
        normal_speeds = speeds - tangent_basis @ (tangent_basis.T @ speeds)
        # second pass removes the rounding left by the first projection
        normal_speeds = normal_speeds - tangent_basis @ (tangent_basis.T @ normal_speeds)
    residual = float(np.max(np.abs(tangents.T @ normal_speeds))) if tangents.size else 0.0
    c_value = interp.sheet.c_fixed if c is None else np.atleast_1d(np.asarray(c, dtype=np.float64))
    return FrontGeometry(s=np.atleast_1d(np.asarray(s, dtype=np.float64)), c=np.array(c_value), branch=branch,
                         tangents=tangents, normal_basis=normal_basis, speeds=speeds, normal_speeds=normal_speeds,
                         normal_speed_magnitudes=np.linalg.norm(normal_speeds, axis=0),
                         orthogonality_residual=residual, extrapolated=extrapolated)


@dataclass(frozen=True, eq=False)
class Prediction:
    """
    Control parameters read off a solution sheet.
    """
    b: ControlParams
    branch: int
    extrapolated: bool

    def to_dict(self) -> dict:
        return {"b": [float(v) for v in self.b.to_array()], "parameter_names": self.b.names(),
                "branch": self.branch, "extrapolated": self.extrapolated}


def predict(interp: SheetInterpolant, s: npt.ArrayLike, c: npt.ArrayLike | None, branch: int,
            extrapolate: bool = False) -> Prediction:
    """
    Interpolated control parameters at (s, c), clipped to the sheet's bounds.

    Parameters
    ----------
    interp : SheetInterpolant
        Fitted sheet.
    s : npt.ArrayLike
        Scale vector.
    c : npt.ArrayLike or None
        Unscaled parameters, the sheet's fixed values when None.
    branch : int
        Branch id.
    extrapolate : bool, optional
        Allow queries outside the branch hull, flagged in the result (default is False).

    Returns
    -------
    Prediction
    """
    coordinates, extrapolated = interp.locate(s, c, branch, extrapolate)
    values = interp.branch(branch).evaluate(coordinates)
    bounds = interp.sheet.b_bounds
    values = np.clip(values, bounds[:, 0], bounds[:, 1])
    if extrapolated:
        logger.info(f"Prediction at s={np.atleast_1d(s).tolist()} is extrapolated")
    return Prediction(ControlParams.from_array(values), branch, extrapolated)
