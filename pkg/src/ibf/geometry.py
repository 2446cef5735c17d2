"""Point sets, dyadic trees, Chebyshev grids and Lagrange interpolation.

Boxes at level ``l`` of a ``d``-dimensional tree are indexed in Morton
(bit-interleaved) order, so the children of box ``p`` are
``p * 2**d + k`` for ``k = 0 .. 2**d - 1`` and the parent of box ``i`` is
``i >> d``.  Bit ``b`` of the child number ``k`` selects the upper half
along dimension ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "Box",
    "DyadicTree",
    "ChebGrid",
    "as_points",
    "build_tree",
    "default_depth",
    "cheb_nodes",
    "cheb_grid",
    "lagrange_matrix",
    "lagrange_1d",
    "morton_encode",
    "morton_decode",
    "child_offsets",
]


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Return ``points`` as a float array of shape ``(n, d)``.

    One-dimensional input of shape ``(n,)`` is read as ``n`` points in 1D
    unless ``dim`` says otherwise.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim is None or dim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.size == dim:
            arr = arr.reshape(1, dim)
        elif arr.size == 0:
            arr = arr.reshape(0, dim)
        else:
            raise ParameterError(f"cannot read array of shape {arr.shape} as {dim}-d points")
    elif arr.ndim != 2:
        raise ParameterError(f"points must be (n, d), got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ParameterError(f"expected {dim}-d points, got {arr.shape[1]}-d")
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``[center - width/2, center + width/2)``."""

    center: np.ndarray
    width: np.ndarray
    level: int = 0
    index: int = 0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float)).copy()
        w = np.atleast_1d(np.asarray(self.width, dtype=float)).copy()
        if w.shape == (1,) and c.shape[0] > 1:
            w = np.full_like(c, w[0])
        if c.shape != w.shape or c.ndim != 1:
            raise ParameterError("box center and width must be 1-d arrays of equal length")
        if not np.all(w > 0) or not np.all(np.isfinite(c)):
            raise ParameterError("box width must be positive and center finite")
        if self.level < 0 or not 0 <= self.index < 2 ** (c.size * self.level):
            raise ParameterError(f"box index {self.index} out of range at level {self.level}")
        c.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "width", w)

    @classmethod
    def from_bounds(cls, lo, hi) -> "Box":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        return cls(center=(lo + hi) / 2, width=hi - lo)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.width / 2

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.width / 2

    def __repr__(self):
        return (f"Box(center={self.center.tolist()}, width={self.width.tolist()}, "
                f"level={self.level}, index={self.index})")


def morton_encode(coords: np.ndarray, level: int) -> np.ndarray:
    """Interleave integer cell coordinates ``(n, d)`` into Morton indices."""
    coords = np.asarray(coords, dtype=np.int64)
    n, d = coords.shape
    out = np.zeros(n, dtype=np.int64)
    for m in range(level):
        for b in range(d):
            out |= ((coords[:, b] >> m) & 1) << (m * d + b)
    return out


def morton_decode(index: np.ndarray, level: int, dim: int) -> np.ndarray:
    """Inverse of :func:`morton_encode`."""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros(index.shape + (dim,), dtype=np.int64)
    for m in range(level):
        for b in range(dim):
            out[..., b] |= ((index >> (m * dim + b)) & 1) << m
    return out


def child_offsets(dim: int) -> np.ndarray:
    """Offsets of child centers from the parent center, in parent widths.

    Row ``k`` is the offset of child ``k``; entries are ``+-1/4``.
    """
    k = np.arange(2 ** dim)
    bits = (k[:, None] >> np.arange(dim)[None, :]) & 1
    return (bits - 0.5) / 2


@dataclass(eq=False)
class DyadicTree:
    """Dyadic partition of a point set into ``2**(d*l)`` boxes per level.

    ``box_ids[l][p]`` is the Morton index of the level-``l`` box holding
    point ``p``.  ``order`` lists point indices sorted by leaf (stable), and
    ``leaf_offsets`` delimits the leaves inside ``order``.
    """

    domain: Box
    depth: int
    points: np.ndarray
    box_ids: list = field(repr=False)
    order: np.ndarray = field(repr=False)
    leaf_offsets: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def npoints(self) -> int:
        return self.points.shape[0]

    def nboxes(self, level: int) -> int:
        return 2 ** (self.dim * level)

    def width(self, level: int) -> np.ndarray:
        return self.domain.width / 2 ** level

    def centers(self, level: int) -> np.ndarray:
        """Centers of all boxes at ``level``, shape ``(nboxes, d)``."""
        cells = morton_decode(np.arange(self.nboxes(level)), level, self.dim)
        return self.domain.lo + (cells + 0.5) * self.width(level)

    def box(self, level: int, index: int) -> Box:
        cell = morton_decode(np.array([index]), level, self.dim)[0]
        w = self.width(level)
        return Box(self.domain.lo + (cell + 0.5) * w, w, level, int(index))

    def boxes(self, level: int) -> list[Box]:
        return [self.box(level, i) for i in range(self.nboxes(level))]

    @property
    def leaf_counts(self) -> np.ndarray:
        return np.diff(self.leaf_offsets)

    def leaf_members(self, index: int) -> np.ndarray:
        return self.order[self.leaf_offsets[index]:self.leaf_offsets[index + 1]]

    def members(self, level: int, index: int) -> np.ndarray:
        """Indices of the points inside box ``index`` at ``level`` (sorted)."""
        return np.flatnonzero(self.box_ids[level] == index)

    def counts(self, level: int) -> np.ndarray:
        return np.bincount(self.box_ids[level], minlength=self.nboxes(level))


def build_tree(points, domain: Box, depth: int) -> DyadicTree:
    """Partition ``points`` over ``domain`` into a dyadic tree of ``depth`` levels.

    Boxes are half-open per dimension; the topmost box along each axis also
    holds points on the upper edge of the domain.
    """
    if not isinstance(depth, (int, np.integer)) or depth < 1:
        raise ParameterError(f"tree depth must be a positive integer, got {depth!r}")
    depth = int(depth)
    pts = as_points(points, domain.dim)
    lo, hi = domain.lo, domain.hi
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise DomainError(f"point {pts[bad].tolist()} lies outside the domain [{lo.tolist()}, {hi.tolist()}]")
    nleaf = 2 ** depth
    cells = np.floor((pts - lo) / domain.width * nleaf).astype(np.int64)
    np.clip(cells, 0, nleaf - 1, out=cells)
    box_ids = [morton_encode(cells >> (depth - lev), lev) for lev in range(depth + 1)]
    leaf = box_ids[depth]
    order = np.argsort(leaf, kind="stable")
    counts = np.bincount(leaf, minlength=2 ** (domain.dim * depth))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    pts = pts.copy()
    pts.flags.writeable = False
    return DyadicTree(domain, depth, pts, box_ids, order, offsets)


def default_depth(x_domain: Box, xi_domain: Box, min_depth: int = 2) -> int:
    """Smallest depth at which every box pair has width product at most one.

    A level-``l`` box of the x tree paired with a level-``L - l`` box of the
    frequency tree then spans ``w_x * w_xi / 2**L <= 1`` per dimension,
    which keeps the interpolation rank independent of the problem size.
    """
    prod = float(np.max(x_domain.width * xi_domain.width))
    need = math.ceil(math.log2(prod) - 1e-9) if prod > 1 else 0
    return max(min_depth, need)


def _cheb_1d(q: int) -> np.ndarray:
    if q < 2:
        raise ParameterError(f"Chebyshev order must be >= 2, got {q}")
    z = 0.5 * np.cos(np.arange(q) * np.pi / (q - 1))
    # cos(pi/2) is 6e-17; snap to the exact symmetric value
    z[np.abs(z) < 1e-15] = 0.0
    return z


def cheb_nodes(q: int, dim: int = 1) -> np.ndarray:
    """Tensor Chebyshev nodes of order ``q`` on ``[-1/2, 1/2]**dim``.

    Returns ``(q**dim, dim)``; node ``t`` has per-axis indices given by the
    C-order unravel of ``t`` (axis 0 slowest).
    """
    z = _cheb_1d(q)
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


@dataclass(frozen=True, eq=False)
class ChebGrid:
    order: int
    box: Box
    axes: tuple
    nodes: np.ndarray

    @property
    def dim(self) -> int:
        return self.box.dim

    def __len__(self):
        return self.nodes.shape[0]


def cheb_grid(q: int, box: Box) -> ChebGrid:
    """Chebyshev grid of order ``q`` adapted to ``box`` by shift and scale."""
    ref = cheb_nodes(q, box.dim)
    z = _cheb_1d(q)
    axes = tuple(box.center[b] + box.width[b] * z for b in range(box.dim))
    nodes = box.center + box.width * ref
    return ChebGrid(q, box, axes, nodes)


def lagrange_1d(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Matrix of Lagrange basis values ``L[s, t] = M_t(targets[s])``."""
    nodes = np.asarray(nodes, dtype=float)
    targets = np.asarray(targets, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0):
        raise ParameterError("interpolation nodes are not distinct")
    denom = np.prod(diff, axis=1)
    q = nodes.size
    out = np.empty((targets.size, q))
    for t in range(q):
        others = np.delete(nodes, t)
        out[:, t] = np.prod(targets[:, None] - others[None, :], axis=1) / denom[t]
    return out


def lagrange_matrix(grid: ChebGrid, targets) -> np.ndarray:
    """Lagrange interpolation matrix from ``grid`` to ``targets``.

    Entry ``(s, t)`` is the value at ``targets[s]`` of the tensor Lagrange
    polynomial that is one at node ``t`` and zero at the other nodes.
    """
    pts = as_points(targets, grid.dim)
    out = np.ones((pts.shape[0], 1))
    for b, ax in enumerate(grid.axes):
        lb = lagrange_1d(ax, pts[:, b])
        out = (out[:, :, None] * lb[:, None, :]).reshape(pts.shape[0], out.shape[1] * lb.shape[1])
    return out
