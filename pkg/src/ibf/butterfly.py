"""Preliminary interpolative butterfly factorization.

For a depth-``L`` pair of trees the kernel is written as

    K ~ U^L G^{L-1} ... G^h M^h H^h ... H^1 V^0,      h = L // 2,

where every factor is block sparse and is assembled directly from closed
formulas (no intermediate coefficients are computed).  Coefficient vectors
at level ``l`` hold ``r = q**d`` values per box pair ``(A, B)`` with ``A`` a
level-``l`` box of the space tree and ``B`` a level-``(L - l)`` box of the
frequency tree.  Up to the switch level they are ordered frequency-major
(block ``j * nA + i``), after it space-major (block ``i * nB + j``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocksparse import BlockSparseMatrix, Factorization, FactorMeta, block_diag
from .errors import ParameterError
from .geometry import (Box, DyadicTree, as_points, build_tree, cheb_nodes, child_offsets,
                       default_depth, lagrange_1d)
from .kernels import TWO_PI, PhaseSpec, phase_matrix

__all__ = [
    "BuildPlan",
    "make_plan",
    "transfer_matrices",
    "build_v0",
    "build_h_level",
    "build_switch",
    "build_g_level",
    "build_uL",
    "build_preliminary",
    "h_level_chunks",
    "g_level_chunks",
    "switch_chunks",
]

# entries per generated chunk; bounds the transient memory of the builders
CHUNK_ENTRIES = 1 << 20


@dataclass(eq=False)
class BuildPlan:
    """Everything needed to assemble the factors of one kernel matrix.

    Attributes
    ----------
    spec : PhaseSpec
    x_tree, xi_tree : DyadicTree
        Trees of depth ``L`` over the space and frequency points.
    q : int
        Chebyshev order per dimension; the interpolation rank is ``q**d``.
    """

    spec: PhaseSpec
    x_tree: DyadicTree
    xi_tree: DyadicTree
    q: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.x_tree.depth != self.xi_tree.depth:
            raise ParameterError("space and frequency trees must have the same depth")
        if self.x_tree.dim != self.xi_tree.dim or self.x_tree.dim != self.spec.dim:
            raise ParameterError("trees and phase must share the dimension")
        if self.q < 2:
            raise ParameterError(f"Chebyshev order must be >= 2, got {self.q}")

    @property
    def d(self) -> int:
        return self.spec.dim

    @property
    def L(self) -> int:
        return self.x_tree.depth

    @property
    def h(self) -> int:
        return self.L // 2

    @property
    def rank(self) -> int:
        return self.q ** self.d

    @property
    def nchild(self) -> int:
        return 2 ** self.d

    def n_x(self, level: int) -> int:
        return 2 ** (self.d * level)

    @property
    def meta(self) -> FactorMeta:
        return FactorMeta(self.xi_tree.npoints, self.d, self.L, self.q, 0.0, self.spec.phase_id)

    @property
    def ref_nodes(self) -> np.ndarray:
        if "ref" not in self._cache:
            self._cache["ref"] = cheb_nodes(self.q, self.d)
        return self._cache["ref"]

    def x_centers(self, level: int) -> np.ndarray:
        return self.x_tree.centers(level)

    def xi_centers(self, level: int) -> np.ndarray:
        return self.xi_tree.centers(level)

    def x_grids(self, level: int, sl=slice(None)) -> np.ndarray:
        """Chebyshev nodes of the space boxes, shape ``(nboxes, r, d)``."""
        c = self.x_centers(level)[sl]
        return c[:, None, :] + self.x_tree.width(level) * self.ref_nodes[None]

    def xi_grids(self, level: int, sl=slice(None)) -> np.ndarray:
        c = self.xi_centers(level)[sl]
        return c[:, None, :] + self.xi_tree.width(level) * self.ref_nodes[None]

    def transfer(self) -> np.ndarray:
        if "T" not in self._cache:
            self._cache["T"] = transfer_matrices(self.q, self.d)
        return self._cache["T"]


def make_plan(spec: PhaseSpec, x, xi, q: int, x_domain: Box, xi_domain: Box,
              depth: int | None = None) -> BuildPlan:
    """Build both trees and bundle them into a :class:`BuildPlan`.

    ``depth`` defaults to :func:`ibf.geometry.default_depth`.
    """
    if depth is None:
        depth = default_depth(x_domain, xi_domain)
    xt = build_tree(as_points(x, spec.dim), x_domain, depth)
    wt = build_tree(as_points(xi, spec.dim), xi_domain, depth)
    return BuildPlan(spec, xt, wt, q)


def transfer_matrices(q: int, d: int) -> np.ndarray:
    """Lagrange values of a parent grid at its children's grids.

    Returns ``T`` of shape ``(2**d, q**d, q**d)`` with
    ``T[k, s, t] = M_t^parent(g_s^child k)``.
    """
    z = cheb_nodes(q, 1)[:, 0]
    halves = [lagrange_1d(z, z / 2 - 0.25), lagrange_1d(z, z / 2 + 0.25)]
    offs = child_offsets(d)
    out = []
    for k in range(2 ** d):
        m = np.ones((1, 1))
        for b in range(d):
            lb = halves[int(offs[k, b] > 0)]
            m = np.einsum("ab,cd->acbd", m, lb).reshape(m.shape[0] * q, m.shape[1] * q)
        out.append(m)
    return np.stack(out)


def _expi(phi: np.ndarray, sign: float = 1.0) -> np.ndarray:
    return np.exp((sign * TWO_PI * 1j) * phi)


def _chunks(total: int, per_item: int):
    step = max(1, CHUNK_ENTRIES // max(per_item, 1))
    for a in range(0, total, step):
        yield a, min(total, a + step)


# ------------------------------------------------------------------ leaves

def _leaf_local(tree: DyadicTree) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted points, their leaf ids and their coordinates relative to the leaf."""
    L = tree.depth
    pts = tree.points[tree.order]
    leaf = tree.box_ids[L][tree.order]
    local = (pts - tree.centers(L)[leaf]) / tree.width(L)
    return pts, leaf, local


def _ref_lagrange(plan: BuildPlan, local: np.ndarray) -> np.ndarray:
    z = cheb_nodes(plan.q, 1)[:, 0]
    out = np.ones((local.shape[0], 1))
    for b in range(plan.d):
        lb = lagrange_1d(z, local[:, b])
        out = (out[:, :, None] * lb[:, None, :]).reshape(local.shape[0], out.shape[1] * lb.shape[1])
    return out


def build_v0(plan: BuildPlan) -> BlockSparseMatrix:
    """Rightmost factor: frequency points to leaf coefficients.

    Block ``j`` is ``(r, n_j)`` with entries
    ``exp(-2 pi i Phi(c_X, g_t)) M_t(xi) exp(2 pi i Phi(c_X, xi))`` where
    ``c_X`` is the center of the space domain and ``g`` the grid of leaf
    ``j``.
    """
    tree, L = plan.xi_tree, plan.L
    pts, leaf, local = _leaf_local(tree)
    ca = plan.x_tree.domain.center[None, :]
    lag = _ref_lagrange(plan, local)
    grids = plan.xi_grids(L)
    left = _expi(phase_matrix(plan.spec, ca, grids.reshape(-1, plan.d)), -1).reshape(-1, plan.rank)
    right = _expi(phase_matrix(plan.spec, ca, pts))[0]
    vals = left[leaf] * lag * right[:, None]  # (npts, r)
    blocks = [vals[a:b].T for a, b in zip(tree.leaf_offsets[:-1], tree.leaf_offsets[1:])]
    return block_diag(blocks, "V", 0)


def build_uL(plan: BuildPlan) -> BlockSparseMatrix:
    """Leftmost factor: leaf coefficients to space points.

    Block ``i`` is ``(n_i, r)`` with entries
    ``exp(2 pi i Phi(x, c_W)) M_t(x) exp(-2 pi i Phi(g_t, c_W))``, ``c_W``
    the center of the frequency domain.
    """
    tree, L = plan.x_tree, plan.L
    pts, leaf, local = _leaf_local(tree)
    cb = plan.xi_tree.domain.center[None, :]
    lag = _ref_lagrange(plan, local)
    grids = plan.x_grids(L)
    right = _expi(phase_matrix(plan.spec, grids.reshape(-1, plan.d), cb), -1).reshape(-1, plan.rank)
    left = _expi(phase_matrix(plan.spec, pts, cb))[:, 0]
    vals = left[:, None] * lag * right[leaf]
    blocks = [vals[a:b] for a, b in zip(tree.leaf_offsets[:-1], tree.leaf_offsets[1:])]
    return block_diag(blocks, "U", L)


# ------------------------------------------------------------------ middle

def h_level_chunks(plan: BuildPlan, level: int):
    """Yield ``(rows, cols, data)`` stacks of the factor ``H^level``.

    ``H^level`` maps level ``level - 1`` coefficients to level ``level``
    (both frequency-major).  Chunks cover whole ranges of frequency boxes
    ``j`` so that every column of the factor lies in exactly one chunk.
    """
    if not 1 <= level <= plan.h:
        raise ParameterError(f"H levels run over 1..{plan.h}, got {level}")
    d, r, nc = plan.d, plan.rank, plan.nchild
    nA, nP = plan.n_x(level), plan.n_x(level - 1)
    nB = plan.n_x(plan.L - level)
    T = np.swapaxes(plan.transfer(), 1, 2)  # T[k, t, s] = M_t^B(g_s^C)
    cA = plan.x_centers(level)
    i = np.arange(nA)
    for j0, j1 in _chunks(nB, nA * nc * r * r):
        nj = j1 - j0
        gB = plan.xi_grids(plan.L - level, slice(j0, j1)).reshape(-1, d)
        gC = plan.xi_grids(plan.L - level + 1, slice(j0 * nc, j1 * nc)).reshape(-1, d)
        e1 = _expi(phase_matrix(plan.spec, cA, gB), -1).reshape(nA, nj, 1, r)
        e2 = _expi(phase_matrix(plan.spec, cA, gC)).reshape(nA, nj, nc, r)
        # data[j, i, k, t, s]
        data = (np.swapaxes(e1, 0, 1)[:, :, :, :, None] * T[None, None]
                * np.swapaxes(e2, 0, 1)[:, :, :, None, :])
        jj = np.arange(j0, j1)[:, None, None]
        kk = np.arange(nc)[None, None, :]
        rows = np.broadcast_to(jj * nA + i[None, :, None], (nj, nA, nc))
        cols = (jj * nc + kk) * nP + (i[None, :, None] >> d)
        yield rows.reshape(-1), cols.reshape(-1), data.reshape(-1, r, r)


def g_level_chunks(plan: BuildPlan, level: int):
    """Yield stacks of ``G^level``, mapping level ``level`` to ``level + 1``.

    Chunks cover whole ranges of space boxes ``i`` at level ``level + 1``,
    i.e. whole block rows.
    """
    if not plan.h <= level <= plan.L - 1:
        raise ParameterError(f"G levels run over {plan.h}..{plan.L - 1}, got {level}")
    d, r, nc = plan.d, plan.rank, plan.nchild
    nA = plan.n_x(level + 1)
    nB = plan.n_x(plan.L - level - 1)
    nC = nB * nc
    T = plan.transfer()  # T[k, t, s] = M_s^P(g_t^A)
    cC = plan.xi_centers(plan.L - level)
    j = np.arange(nB)
    for i0, i1 in _chunks(nA, nB * nc * r * r):
        ni = i1 - i0
        p0, p1 = i0 >> d, ((i1 - 1) >> d) + 1
        gA = plan.x_grids(level + 1, slice(i0, i1)).reshape(-1, d)
        gP = plan.x_grids(level, slice(p0, p1)).reshape(-1, d)
        f1 = _expi(phase_matrix(plan.spec, gA, cC)).reshape(ni, r, nB, nc)
        f2 = _expi(phase_matrix(plan.spec, gP, cC), -1).reshape(p1 - p0, r, nB, nc)
        ii = np.arange(i0, i1)
        f2 = f2[(ii >> d) - p0]
        kA = ii & (nc - 1)
        # data[i, j, k, t, s]
        data = (np.transpose(f1, (0, 2, 3, 1))[..., None] * T[kA][:, None, None]
                * np.transpose(f2, (0, 2, 3, 1))[..., None, :])
        rows = np.broadcast_to(ii[:, None, None] * nB + j[None, :, None], (ni, nB, nc))
        cols = (ii[:, None, None] >> d) * nC + j[None, :, None] * nc + np.arange(nc)[None, None, :]
        yield rows.reshape(-1), cols.reshape(-1), data.reshape(-1, r, r)


def switch_chunks(plan: BuildPlan):
    """Yield stacks of the switch factor ``M^h``.

    Block ``(i * nB + j, j * nA + i)`` is ``exp(2 pi i Phi(g_t^A, g_s^B))``.
    """
    d, r, h = plan.d, plan.rank, plan.h
    nA, nB = plan.n_x(h), plan.n_x(plan.L - h)
    gB = plan.xi_grids(plan.L - h).reshape(-1, d)
    j = np.arange(nB)
    for i0, i1 in _chunks(nA, nB * r * r):
        ni = i1 - i0
        gA = plan.x_grids(h, slice(i0, i1)).reshape(-1, d)
        k = _expi(phase_matrix(plan.spec, gA, gB)).reshape(ni, r, nB, r)
        data = np.transpose(k, (0, 2, 1, 3)).reshape(-1, r, r)
        ii = np.arange(i0, i1)[:, None]
        rows = (ii * nB + j[None, :]).reshape(-1)
        cols = (j[None, :] * nA + ii).reshape(-1)
        yield rows, cols, data


def _assemble(plan: BuildPlan, chunks, label: str, level: int) -> BlockSparseMatrix:
    n = plan.n_x(plan.L)
    sizes = np.full(n, plan.rank)
    return BlockSparseMatrix(sizes, sizes, label=label, level=level, groups=list(chunks))


def build_h_level(plan: BuildPlan, level: int) -> BlockSparseMatrix:
    """Factor ``H^level`` mapping level ``level - 1`` coefficients to level ``level``."""
    return _assemble(plan, h_level_chunks(plan, level), "H", level)


def build_g_level(plan: BuildPlan, level: int) -> BlockSparseMatrix:
    """Factor ``G^level`` mapping level ``level`` coefficients to level ``level + 1``."""
    return _assemble(plan, g_level_chunks(plan, level), "G", level)


def build_switch(plan: BuildPlan) -> BlockSparseMatrix:
    """Switch factor ``M^h`` (kernel on grid pairs plus the reordering)."""
    return _assemble(plan, switch_chunks(plan), "M", plan.h)


def build_preliminary(plan: BuildPlan) -> Factorization:
    """Assemble all ``L + 3`` factors of the preliminary factorization."""
    L, h = plan.L, plan.h
    factors = [build_uL(plan)]
    factors += [build_g_level(plan, lev) for lev in range(L - 1, h - 1, -1)]
    factors.append(build_switch(plan))
    factors += [build_h_level(plan, lev) for lev in range(h, 0, -1)]
    factors.append(build_v0(plan))
    return Factorization(factors, "preliminary", plan.meta,
                         row_order=plan.x_tree.order.copy(), col_order=plan.xi_tree.order.copy())
