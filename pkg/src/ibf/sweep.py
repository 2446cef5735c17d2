"""Rank-revealing recompression of a preliminary factorization.

Everything here is built on one primitive, :func:`sp_compress`: given a
block-sparse ``S`` and a block-diagonal ``D`` it refactors ``S @ D`` as
``D~ @ S~`` block row by block row, where ``D~`` is block diagonal and ``S~``
keeps the sparsity pattern of ``S``.  The middle factor is split first
(:func:`factor_middle`), the resulting outer bases are pushed towards both
ends of the chain (:func:`sweep_out`), and finally the ends are compressed
and the bases pushed back into the middle (:func:`sweep_in`).

All singular values are split evenly (``sqrt(s)`` on both sides), and
ranks use a cutoff relative to the largest singular value of each block
row, capped at ``max_rank``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .blocksparse import BlockSparseMatrix, Factorization, bsm_matmul
from .butterfly import BuildPlan, build_switch, build_uL, build_v0, g_level_chunks, h_level_chunks
from .errors import ParameterError, StructureError
from .lowrank import select_rank

__all__ = [
    "Pencil",
    "sp_compress",
    "factor_middle",
    "sweep_out",
    "sweep_in",
    "optimize",
    "build_optimal",
]


@dataclass(frozen=True, eq=False)
class Pencil:
    """The product ``S @ D`` of a block-sparse and a block-diagonal matrix.

    ``D = None`` stands for the block identity matching the columns of
    ``S``.  ``orientation`` records whether the pencil came from the space
    side (``'left'``, ``G C``) or the frequency side (``'right'``,
    ``(H R)^*``); it does not change the arithmetic.
    """

    S: BlockSparseMatrix
    D: BlockSparseMatrix | None = None
    orientation: str = "left"

    def __post_init__(self):
        if self.orientation not in ("left", "right"):
            raise ParameterError(f"unknown pencil orientation {self.orientation!r}")
        if self.D is not None:
            if not self.D.is_block_diagonal():
                raise StructureError("pencil D must be block diagonal")
            if not np.array_equal(self.S.col_sizes, self.D.row_sizes):
                raise StructureError("pencil S and D partitions do not match")

    @property
    def col_sizes(self) -> np.ndarray:
        return self.S.col_sizes if self.D is None else self.D.col_sizes


def _diag_blocks(D: BlockSparseMatrix) -> dict:
    return {int(r): data[k] for rows, _, data in D.groups for k, r in enumerate(rows)}


class _RowCompressor:
    """Accumulates :func:`sp_compress` results over chunks of block rows."""

    def __init__(self, row_sizes, col_sizes, tol: float, max_rank: int | None):
        if not 0 < tol < 1:
            raise ParameterError(f"tol must lie in (0, 1), got {tol}")
        self.row_sizes = np.asarray(row_sizes, dtype=np.int64)
        self.col_sizes = np.asarray(col_sizes, dtype=np.int64)
        self.tol = tol
        self.max_rank = max_rank
        self.ranks = np.zeros(self.row_sizes.size, dtype=np.int64)
        self.dblocks = {}
        self.sblocks = []
        self.done = np.zeros(self.row_sizes.size, dtype=bool)

    def add(self, S: BlockSparseMatrix, Dblocks: dict | None):
        # products P_ij = S_ij D_jj, grouped per block row
        per_row = {}
        for rows, cols, data in S.groups:
            if Dblocks is None:
                prods = data
            else:
                widths = np.array([Dblocks[int(c)].shape[1] for c in cols])
                prods = [None] * rows.size
                for w in np.unique(widths):
                    sel = np.flatnonzero(widths == w)
                    dstack = np.stack([Dblocks[int(cols[k])] for k in sel])
                    out = np.matmul(data[sel], dstack)
                    for n, k in enumerate(sel):
                        prods[k] = out[n]
            for k in range(rows.size):
                per_row.setdefault(int(rows[k]), []).append((int(cols[k]), prods[k]))
        # batch rows with identical concatenated shapes through one SVD call
        byshape = {}
        for i, items in per_row.items():
            items.sort(key=lambda t: t[0])
            m = int(self.row_sizes[i])
            key = (m,) + tuple(p.shape[1] for _, p in items)
            byshape.setdefault(key, []).append((i, items))
        for key, entries in byshape.items():
            m, widths = key[0], key[1:]
            n = sum(widths)
            edges = np.concatenate([[0], np.cumsum(widths)])
            if m == 0 or n == 0:
                for i, items in entries:
                    self._store(i, np.zeros((m, 0), complex), items, edges, None, None)
                continue
            stack = np.stack([np.concatenate([p for _, p in items], axis=1) for _, items in entries])
            U, s, Vh = np.linalg.svd(stack, full_matrices=False)
            for n_, (i, items) in enumerate(entries):
                r = select_rank(s[n_], self.tol, self.max_rank)
                root = np.sqrt(s[n_, :r])
                self._store(i, U[n_, :, :r] * root, items, edges, root[:, None] * Vh[n_, :r], r)

    def _store(self, i, dt, items, edges, right, r):
        r = 0 if r is None else r
        self.ranks[i] = r
        self.dblocks[i] = dt
        for n, (j, p) in enumerate(items):
            if right is None:
                blk = np.zeros((0, p.shape[1]), complex)
            else:
                blk = right[:, edges[n]:edges[n + 1]]
            self.sblocks.append((i, j, blk))
        self.done[i] = True

    def finish(self, label_d: str, label_s: str, level: int, adjoint_s: bool = False):
        """Assemble ``(D~, S~)``; with ``adjoint_s`` return ``S~^*`` instead of ``S~``."""
        for i in np.flatnonzero(~self.done):
            self.dblocks[int(i)] = np.zeros((int(self.row_sizes[i]), 0), complex)
        Dt = BlockSparseMatrix(self.row_sizes, self.ranks,
                               [(i, i, b) for i, b in sorted(self.dblocks.items())], label_d, level)
        sblocks, self.sblocks, self.dblocks = self.sblocks, [], {}
        if adjoint_s:
            St = BlockSparseMatrix(self.col_sizes, self.ranks,
                                   ((j, i, b.conj().T) for i, j, b in sblocks), label_s, level)
        else:
            St = BlockSparseMatrix(self.ranks, self.col_sizes, sblocks, label_s, level)
        return Dt, St


def sp_compress(p: Pencil, tol: float, max_rank: int | None = None,
                labels: tuple[str, str] = ("", ""), level: int | None = None):
    """Structure-preserving compression ``S @ D ~ D~ @ S~``.

    For every block row ``i`` the products ``S_ij D_jj`` are concatenated
    and truncated with :func:`ibf.lowrank.select_rank`; the left factor
    ``U sqrt(s)`` becomes the diagonal block ``D~_i`` and the right factor
    ``sqrt(s) V^*`` is cut back into blocks ``S~_ij`` on the pattern of
    ``S``.  Block rows without any data get rank zero.

    Returns
    -------
    D_tilde : BlockSparseMatrix
        Block diagonal, ``S.row_sizes`` by the new ranks.
    S_tilde : BlockSparseMatrix
        New ranks by ``D.col_sizes``, same pattern as ``S``.
    """
    S = p.S
    lev = S.level if level is None else level
    comp = _RowCompressor(S.row_sizes, p.col_sizes, tol, max_rank)
    comp.add(S, None if p.D is None else _diag_blocks(p.D))
    return comp.finish(labels[0], labels[1] or S.label, lev)


def factor_middle(M: BlockSparseMatrix, tol: float, max_rank: int | None = None):
    """Split every block of the switch factor as ``M_ij ~ C_i I R_j^*``.

    Returns ``(C, M_bar, R)`` with ``M ~ C @ M_bar @ R.H``: ``C`` is block
    diagonal over the rows of ``M``, ``R`` block diagonal over its columns
    and ``M_bar`` has identity blocks on the pattern of ``M`` (the singular
    values are absorbed into ``C`` and ``R``).
    """
    if not 0 < tol < 1:
        raise ParameterError(f"tol must lie in (0, 1), got {tol}")
    nr, nc = M.block_shape
    rrank = np.zeros(nr, dtype=np.int64)
    crank = np.zeros(nc, dtype=np.int64)
    cblocks, rblocks, mblocks = {}, {}, []
    seen_r, seen_c = set(), set()
    for rows, cols, data in M.groups:
        if data.shape[1] == 0 or data.shape[2] == 0:
            continue
        U, s, Vh = np.linalg.svd(data, full_matrices=False)
        for k in range(rows.size):
            i, j = int(rows[k]), int(cols[k])
            if i in seen_r or j in seen_c:
                raise StructureError("middle factor must have one block per block row and column")
            seen_r.add(i)
            seen_c.add(j)
            r = select_rank(s[k], tol, max_rank)
            root = np.sqrt(s[k, :r])
            rrank[i] = crank[j] = r
            cblocks[i] = U[k, :, :r] * root
            rblocks[j] = Vh[k, :r].conj().T * root
            mblocks.append((i, j, np.eye(r, dtype=complex)))
    for i in range(nr):
        cblocks.setdefault(i, np.zeros((int(M.row_sizes[i]), 0), complex))
    for j in range(nc):
        rblocks.setdefault(j, np.zeros((int(M.col_sizes[j]), 0), complex))
    C = BlockSparseMatrix(M.row_sizes, rrank, [(i, i, cblocks[i]) for i in range(nr)], "C", M.level)
    R = BlockSparseMatrix(M.col_sizes, crank, [(j, j, rblocks[j]) for j in range(nc)], "R", M.level)
    Mbar = BlockSparseMatrix(rrank, crank, mblocks, "M", M.level)
    return C, Mbar, R


def _split_chain(F: Factorization):
    L = F.meta.L
    h = L // 2
    fac = F.factors
    if len(fac) != L + 3:
        raise StructureError(f"expected {L + 3} factors, got {len(fac)}")
    U = fac[0]
    G = fac[1:L - h + 1]          # G^{L-1} .. G^h
    M = fac[L - h + 1]
    H = fac[L - h + 2:L + 2]      # H^h .. H^1
    V = fac[L + 2]
    return U, G, M, H, V


def _sweep_out_from(U, G_chunks, M, H_chunks, V, tol, max_rank, levels_g, levels_h):
    """Shared sweep-out driver; ``*_chunks`` yield lists of S matrices per level."""
    C, Mbar, R = factor_middle(M, tol, max_rank)
    Gbar = []
    for lev, parts in zip(levels_g, G_chunks):
        comp = None
        Dblocks = _diag_blocks(C)
        for S in parts:
            if comp is None:
                comp = _RowCompressor(S.row_sizes, C.col_sizes, tol, max_rank)
            comp.add(S, Dblocks)
        C, Gb = comp.finish("C", "G", lev)
        Gbar.append(Gb)
    Hbar = []
    for lev, parts in zip(levels_h, H_chunks):
        comp = None
        Dblocks = _diag_blocks(R)
        for S in parts:
            if comp is None:
                comp = _RowCompressor(S.row_sizes, R.col_sizes, tol, max_rank)
            comp.add(S, Dblocks)
        R, Hb = comp.finish("R", "H", lev, adjoint_s=True)
        Hbar.append(Hb)
    Ubar = bsm_matmul(U, C, "U", U.level)
    Vbar = bsm_matmul(R.H, V, "V", V.level)
    # chain order: U, G^{L-1}..G^h, M, H^h..H^1, V
    return [Ubar] + Gbar[::-1] + [Mbar] + Hbar + [Vbar]


def sweep_out(F: Factorization, tol: float, max_rank: int | None = None) -> Factorization:
    """Compress a preliminary factorization from the middle outwards.

    ``max_rank`` defaults to the interpolation rank ``q**d``.
    """
    if F.stage != "preliminary":
        raise ParameterError(f"sweep_out needs a preliminary factorization, got {F.stage}")
    if max_rank is None:
        max_rank = F.meta.q ** F.meta.d
    U, G, M, H, V = _split_chain(F)
    L, h = F.meta.L, F.meta.L // 2
    factors = _sweep_out_from(U, ([g] for g in reversed(G)), M, ([x.H] for x in H), V, tol, max_rank,
                              range(h, L), range(h, 0, -1))
    out = F.with_stage(factors, "swept_out", nnz_preliminary=F.nnz)
    out.meta = _with_tol(F.meta, tol)
    return out


def _with_tol(meta, tol):
    return replace(meta, tol=float(tol))


def sweep_in(F: Factorization, tol: float, max_rank: int | None = None) -> Factorization:
    """Compress the outer factors of a swept-out factorization and merge inwards."""
    if F.stage != "swept_out":
        raise ParameterError(f"sweep_in needs a swept-out factorization, got {F.stage}")
    if max_rank is None:
        max_rank = F.meta.q ** F.meta.d
    Ubar, Gbar, Mbar, Hbar, Vbar = _split_chain(F)
    Udot, Cb = sp_compress(Pencil(Ubar), tol, max_rank, ("U", "C"))
    Gdot = []
    for Gb in Gbar:                       # G^{L-1} .. G^h
        Dt, St = sp_compress(Pencil(Gb.H, Cb.H), tol, max_rank, ("C", "G"), Gb.level)
        Gdot.append(St.H)
        Cb = Dt.H
    Rstar, Vdot = sp_compress(Pencil(Vbar), tol, max_rank, ("R", "V"))
    Hdot = []
    for Hb in reversed(Hbar):             # H^1 .. H^h
        Rstar, Hd = sp_compress(Pencil(Hb, Rstar), tol, max_rank, ("R", "H"), Hb.level)
        Hdot.append(Hd)
    Mdot = bsm_matmul(bsm_matmul(Cb, Mbar), Rstar, "M", Mbar.level)
    factors = [Udot] + Gdot + [Mdot] + Hdot[::-1] + [Vdot]
    factors[-1] = factors[-1].with_label("V", 0)
    factors[0] = factors[0].with_label("U", F.meta.L)
    out = F.with_stage(factors, "optimal", nnz_swept_out=F.nnz)
    return out


def optimize(F: Factorization, tol: float, max_rank: int | None = None) -> Factorization:
    """``sweep_in(sweep_out(F))``."""
    return sweep_in(sweep_out(F, tol, max_rank), tol, max_rank)


def _chunk_matrices(plan: BuildPlan, gen, counter: list, transpose: bool):
    n = plan.n_x(plan.L)
    sizes = np.full(n, plan.rank)
    for rows, cols, data in gen:
        counter[0] += data.size
        S = BlockSparseMatrix(sizes, sizes, groups=[(rows, cols, data)])
        yield S.H if transpose else S


def build_optimal(plan: BuildPlan, tol: float, max_rank: int | None = None,
                  stage: str = "optimal") -> Factorization:
    """Build and compress without ever holding the preliminary factors.

    Each level of the preliminary factorization is generated in chunks of
    whole block rows and compressed immediately, so peak memory is bounded
    by one chunk plus the compressed factors.  The result equals
    ``optimize(build_preliminary(plan), tol, max_rank)`` (or the swept-out
    factorization when ``stage='swept_out'``); the preliminary entry count
    is recorded in ``info['nnz_preliminary']``.
    """
    if stage not in ("swept_out", "optimal"):
        raise ParameterError(f"build_optimal produces swept_out or optimal, not {stage}")
    if max_rank is None:
        max_rank = plan.rank
    L, h = plan.L, plan.h
    counter = [0]
    U, V = build_uL(plan), build_v0(plan)
    M = build_switch(plan)
    counter[0] += U.nnz + V.nnz + M.nnz
    G_parts = (_chunk_matrices(plan, g_level_chunks(plan, lev), counter, False) for lev in range(h, L))
    H_parts = (_chunk_matrices(plan, h_level_chunks(plan, lev), counter, True) for lev in range(h, 0, -1))
    factors = _sweep_out_from(U, G_parts, M, H_parts, V, tol, max_rank, range(h, L), range(h, 0, -1))
    meta = _with_tol(plan.meta, tol)
    F = Factorization(factors, "swept_out", meta, plan.x_tree.order.copy(), plan.xi_tree.order.copy(),
                      info={"nnz_preliminary": int(counter[0])})
    if stage == "swept_out":
        return F
    return sweep_in(F, tol, max_rank)
