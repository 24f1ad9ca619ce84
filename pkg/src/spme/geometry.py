"""Structured box domains with tagged boundaries and trapezoidal quadrature.

The simulation domain is a d-dimensional box (d = 1, 2, or 3) discretized
by a node-centered tensor grid.  The last coordinate axis is the depth
axis (increasing downward); the boundary face whose outward normal points
against the depth axis is tagged SURFACE, every other face UNDERGROUND.
Volume and boundary integrals are composite trapezoidal sums, exact for
affine integrands.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "BoundaryTag",
    "BoundaryFace",
    "GridDomain",
    "DiscreteField",
    "build_grid",
    "quad_volume",
    "quad_boundary",
    "depth_coordinate",
    "bump_field",
]


class BoundaryTag(Enum):
    SURFACE = "surface"
    UNDERGROUND = "underground"


@dataclass(frozen=True)
class BoundaryFace:
    """One face of the box boundary: flat node indices plus face quadrature."""

    axis: int
    side: int  # 0 = low coordinate end, 1 = high end
    tag: BoundaryTag
    nodes: np.ndarray  # flat indices into the nodal vector
    weights: np.ndarray  # trapezoidal face weights, same length as nodes

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


def _trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = w[-1] = h / 2.0
    return w


class GridDomain:
    """Immutable structured grid over the box ``prod_k [0, extent_k]``.

    Attributes
    ----------
    d : int
        Spatial dimension.
    extents, cells : tuple
        Box edge lengths and cell counts per axis; nodes per axis is
        ``cells[k] + 1``.
    axes : list of ndarray
        Nodal coordinates per axis.
    volume_weights : ndarray
        Flat trapezoidal volume weights (C-order over the node lattice).
    faces : tuple of BoundaryFace
        The 2*d tagged boundary faces.
    """

    def __init__(self, d, extents, cells):
        self.d = int(d)
        self.extents = tuple(float(e) for e in extents)
        self.cells = tuple(int(c) for c in cells)
        self.shape = tuple(c + 1 for c in self.cells)
        self.spacing = tuple(e / c for e, c in zip(self.extents, self.cells))
        self.axes = [
            np.linspace(0.0, e, n) for e, n in zip(self.extents, self.shape)
        ]
        self.node_count = int(np.prod(self.shape))
        axis_w = [
            _trapezoid_weights(n, h) for n, h in zip(self.shape, self.spacing)
        ]
        w = axis_w[0]
        for wk in axis_w[1:]:
            w = np.multiply.outer(w, wk)
        self.volume_weights = np.ascontiguousarray(w).reshape(-1)
        self.gravity_axis = self.d - 1
        self.faces = tuple(self._build_faces(axis_w))

    def _build_faces(self, axis_w):
        faces = []
        idx_grids = np.meshgrid(
            *[np.arange(n) for n in self.shape], indexing="ij"
        )
        flat_index = np.ravel_multi_index(
            [g.reshape(-1) for g in idx_grids], self.shape
        ).reshape(self.shape)
        for axis in range(self.d):
            for side in (0, 1):
                sel = [slice(None)] * self.d
                sel[axis] = 0 if side == 0 else self.shape[axis] - 1
                nodes = flat_index[tuple(sel)].reshape(-1)
                if self.d == 1:
                    weights = np.array([1.0])  # point mass
                else:
                    other = [axis_w[k] for k in range(self.d) if k != axis]
                    fw = other[0]
                    for wk in other[1:]:
                        fw = np.multiply.outer(fw, wk)
                    weights = np.ascontiguousarray(fw).reshape(-1)
                tag = (
                    BoundaryTag.SURFACE
                    if (axis == self.gravity_axis and side == 0)
                    else BoundaryTag.UNDERGROUND
                )
                faces.append(
                    BoundaryFace(axis, side, tag, nodes.copy(), weights)
                )
        return faces

    def tagged_faces(self, tag: BoundaryTag):
        return [f for f in self.faces if f.tag == tag]

    def coordinate(self, axis: int) -> np.ndarray:
        """Flat array of the ``axis`` coordinate at every node."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.ascontiguousarray(grids[axis]).reshape(-1)

    def grid_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.d).tobytes())
        for a in self.axes:
            h.update(a.tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        return (
            isinstance(other, GridDomain)
            and self.d == other.d
            and self.extents == other.extents
            and self.cells == other.cells
        )

    def __hash__(self):
        return hash((self.d, self.extents, self.cells))

    def __repr__(self):
        return f"GridDomain(d={self.d}, extents={self.extents}, cells={self.cells})"


def build_grid(d, extents, cells) -> GridDomain:
    """Build a GridDomain; scalars are broadcast across axes.

    Rejects ``d`` outside {1, 2, 3}, non-positive extents, and fewer than
    two cells per axis.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    extents = np.atleast_1d(np.asarray(extents, dtype=float))
    cells = np.atleast_1d(np.asarray(cells))
    if extents.size == 1:
        extents = np.repeat(extents, d)
    if cells.size == 1:
        cells = np.repeat(cells, d)
    if extents.size != d or cells.size != d:
        raise ValueError("extents and cells must match the dimension")
    if np.any(extents <= 0):
        raise ValueError(f"extents must be positive, got {extents.tolist()}")
    if np.any(cells < 2) or not np.issubdtype(cells.dtype, np.integer):
        raise ValueError(f"need at least 2 cells per axis, got {cells.tolist()}")
    return GridDomain(d, extents, cells)


class DiscreteField:
    """Nodal scalar field on a GridDomain.

    Values are stored flat in C-order over the node lattice.  Fields are
    combinable only when they live on the same domain, and public
    constructors reject non-finite values.
    """

    __slots__ = ("domain", "values")

    def __init__(self, domain: GridDomain, values, validate: bool = True):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != domain.node_count:
            raise ValueError(
                f"field length {values.size} != node count {domain.node_count}"
            )
        if validate and not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        self.domain = domain
        self.values = values

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.node_count), validate=False)

    @classmethod
    def constant(cls, domain, value):
        return cls(domain, np.full(domain.node_count, float(value)))

    @classmethod
    def from_function(cls, domain, fn):
        """Sample ``fn(*coords)`` at the nodes."""
        coords = [domain.coordinate(k) for k in range(domain.d)]
        return cls(domain, fn(*coords))

    # -- arithmetic ---------------------------------------------------

    def _check(self, other):
        if other.domain != self.domain:
            raise ValueError("fields live on different domains")

    def __add__(self, other):
        self._check(other)
        return DiscreteField(self.domain, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return DiscreteField(self.domain, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, DiscreteField):
            self._check(other)
            return DiscreteField(self.domain, self.values * other.values)
        return DiscreteField(self.domain, self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return DiscreteField(self.domain, -self.values)

    def copy(self):
        return DiscreteField(self.domain, self.values.copy(), validate=False)

    def reshape(self) -> np.ndarray:
        """Values as a d-dimensional array on the node lattice."""
        return self.values.reshape(self.domain.shape)

    def __repr__(self):
        return f"DiscreteField({self.domain!r}, n={self.values.size})"


def quad_volume(f: DiscreteField) -> float:
    """Trapezoidal volume integral of ``f`` over the box."""
    return float(f.domain.volume_weights @ f.values)


def quad_boundary(f: DiscreteField, tag: BoundaryTag) -> float:
    """Trapezoidal integral of the trace of ``f`` over the tagged boundary."""
    total = 0.0
    for face in f.domain.tagged_faces(tag):
        total += float(face.weights @ f.values[face.nodes])
    return total


def depth_coordinate(domain: GridDomain) -> DiscreteField:
    """The depth coordinate (last axis) as a field; used for the center of mass."""
    return DiscreteField(domain, domain.coordinate(domain.gravity_axis))


def bump_field(domain, center, radius, amplitude=1.0) -> DiscreteField:
    """Smooth compactly supported bump: amp * exp(1 - 1/(1 - s^2)) for s < 1.

    ``s`` is the scaled distance to ``center``; the bump vanishes with all
    derivatives at distance ``radius``.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    s2 = np.zeros(domain.node_count)
    for k in range(domain.d):
        s2 += (domain.coordinate(k) - center[k]) ** 2
    s2 /= radius**2
    vals = np.zeros(domain.node_count)
    inside = s2 < 1.0
    vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return DiscreteField(domain, vals)
