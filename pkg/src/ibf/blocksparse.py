"""Block-sparse complex matrices, factor chains and their binary format.

A :class:`BlockSparseMatrix` is a grid of row and column blocks of given
sizes holding dense complex blocks at a sparse set of positions ``(i, j)``.
Internally the blocks are stored in canonical *groups*: all blocks of one
shape are stacked in a single ``(nb, m, n)`` array, groups are ordered by
shape and blocks inside a group by ``(i, j)``.  The canonical layout makes
matrix-vector products vectorised and bit-for-bit reproducible regardless
of how a matrix was assembled.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable

import numpy as np

from .errors import FormatError, ParameterError, StructureError

__all__ = [
    "BlockSparseMatrix",
    "FactorMeta",
    "Factorization",
    "STAGES",
    "block_diag",
    "identity",
    "bsm_matmul",
    "apply_factorization",
    "nnz",
    "serialize",
    "deserialize",
    "dumps",
    "loads",
]

STAGES = ("preliminary", "swept_out", "optimal")


def _sizes(sizes) -> np.ndarray:
    arr = np.asarray(sizes, dtype=np.int64).reshape(-1)
    if np.any(arr < 0):
        raise ParameterError("partition sizes must be non-negative")
    return arr


class BlockSparseMatrix:
    """Partitioned matrix with dense complex blocks at sparse positions.

    Parameters
    ----------
    row_sizes, col_sizes : sequence of int
        Block partition of the rows and columns.
    blocks : iterable of (i, j, array), optional
        Dense blocks; block ``(i, j)`` must have shape
        ``(row_sizes[i], col_sizes[j])``.
    label : str
        One-letter factor role tag (``V``, ``H``, ``M``, ``G``, ``U``, ``C``,
        ``R``, ...).
    level : int
        Tree level the factor belongs to.
    """

    def __init__(self, row_sizes, col_sizes, blocks: Iterable = (), label: str = "",
                 level: int = 0, *, groups=None):
        self.row_sizes = _sizes(row_sizes)
        self.col_sizes = _sizes(col_sizes)
        self.row_offsets = np.concatenate([[0], np.cumsum(self.row_sizes)]).astype(np.int64)
        self.col_offsets = np.concatenate([[0], np.cumsum(self.col_sizes)]).astype(np.int64)
        self.label = label
        self.level = int(level)
        stacks = [] if groups is None else list(groups)
        singles = {}
        for i, j, b in blocks:
            b = np.asarray(b, dtype=complex)
            singles.setdefault(b.shape, []).append((int(i), int(j), b))
        for shape, items in singles.items():
            items.sort(key=lambda t: (t[0], t[1]))
            rows = np.array([t[0] for t in items], dtype=np.int64)
            cols = np.array([t[1] for t in items], dtype=np.int64)
            data = np.stack([t[2] for t in items]) if items else np.zeros((0,) + shape, complex)
            stacks.append((rows, cols, data))
        self._groups = self._canonical(stacks)
        self._lookup = None

    # ------------------------------------------------------------------ layout
    def _canonical(self, stacks):
        byshape = {}
        for rows, cols, data in stacks:
            rows = np.asarray(rows, dtype=np.int64)
            cols = np.asarray(cols, dtype=np.int64)
            data = np.asarray(data, dtype=complex)
            if data.ndim != 3 or data.shape[0] != rows.size or rows.size != cols.size:
                raise StructureError("block group arrays are inconsistent")
            if rows.size == 0:
                continue
            byshape.setdefault(data.shape[1:], []).append((rows, cols, data))
        groups = []
        seen = 0
        for shape in sorted(byshape):
            parts = byshape[shape]
            if len(parts) == 1:
                rows, cols, data = parts[0]
            else:
                rows = np.concatenate([p[0] for p in parts])
                cols = np.concatenate([p[1] for p in parts])
                data = np.concatenate([p[2] for p in parts])
            if rows.min() < 0 or rows.max() >= self.row_sizes.size:
                raise StructureError("block row index out of range")
            if cols.min() < 0 or cols.max() >= self.col_sizes.size:
                raise StructureError("block column index out of range")
            if np.any(self.row_sizes[rows] != shape[0]) or np.any(self.col_sizes[cols] != shape[1]):
                raise StructureError(f"block of shape {shape} does not match the partition")
            key = rows * self.col_sizes.size + cols
            if np.any(key[1:] < key[:-1]):
                perm = np.argsort(key, kind="stable")
                rows, cols, data, key = rows[perm], cols[perm], data[perm], key[perm]
            groups.append((rows, cols, data))
            seen += rows.size
        if seen:
            allkeys = np.concatenate([g[0] * self.col_sizes.size + g[1] for g in groups])
            if np.unique(allkeys).size != allkeys.size:
                raise StructureError("duplicate block position")
        return groups

    @property
    def groups(self) -> list:
        """Canonical ``(rows, cols, data)`` stacks, one per block shape."""
        return self._groups

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.row_offsets[-1]), int(self.col_offsets[-1])

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.row_sizes.size, self.col_sizes.size

    @property
    def nblocks(self) -> int:
        return sum(g[0].size for g in self._groups)

    @property
    def nnz(self) -> int:
        """Total number of stored dense entries."""
        return int(sum(g[2].size for g in self._groups))

    def blocks(self) -> list:
        """All blocks as ``(i, j, array)`` sorted by ``(i, j)``."""
        out = [(int(r), int(c), d[k]) for r_, c_, d in self._groups
               for k, (r, c) in enumerate(zip(r_, c_))]
        out.sort(key=lambda t: (t[0], t[1]))
        return out

    def pattern(self) -> set:
        return {(i, j) for i, j, _ in self.blocks()}

    def block(self, i: int, j: int):
        """Block ``(i, j)`` or ``None`` if it is not stored."""
        if self._lookup is None:
            self._lookup = {(i_, j_): b for i_, j_, b in self.blocks()}
        return self._lookup.get((int(i), int(j)))

    def row_blocks(self) -> dict:
        """Map block row ``i`` to its sorted list of ``(j, array)``."""
        out = {}
        for i, j, b in self.blocks():
            out.setdefault(i, []).append((j, b))
        return out

    def is_block_diagonal(self) -> bool:
        return all(np.array_equal(r, c) for r, c, _ in self._groups)

    def max_block_dims(self) -> tuple[int, int]:
        if not self._groups:
            return 0, 0
        return (max(g[2].shape[1] for g in self._groups), max(g[2].shape[2] for g in self._groups))

    def __repr__(self):
        return (f"BlockSparseMatrix(label={self.label!r}, level={self.level}, shape={self.shape}, "
                f"blocks={self.nblocks}, nnz={self.nnz})")

    # -------------------------------------------------------------- algebra
    @property
    def H(self) -> "BlockSparseMatrix":
        """Conjugate transpose."""
        groups = [(c, r, np.conj(np.swapaxes(d, 1, 2))) for r, c, d in self._groups]
        return BlockSparseMatrix(self.col_sizes, self.row_sizes, label=self.label,
                                 level=self.level, groups=groups)

    def todense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        for i, j, b in self.blocks():
            r0, c0 = self.row_offsets[i], self.col_offsets[j]
            out[r0:r0 + b.shape[0], c0:c0 + b.shape[1]] = b
        return out

    def matvec(self, v) -> np.ndarray:
        """Product with a vector ``(n,)`` or a stack of columns ``(n, k)``."""
        v = np.asarray(v)
        if v.ndim not in (1, 2) or v.shape[0] != self.shape[1]:
            raise ParameterError(f"operand of shape {v.shape} does not match matrix {self.shape}")
        out = np.zeros((self.shape[0],) + v.shape[1:], dtype=np.result_type(v.dtype, complex))
        for rows, cols, data in self._groups:
            m, n = data.shape[1:]
            if m == 0:
                continue
            ridx = self.row_offsets[rows][:, None] + np.arange(m)
            if n == 0:
                continue
            cidx = self.col_offsets[cols][:, None] + np.arange(n)
            x = v[cidx]
            if v.ndim == 1:
                y = np.einsum("bmn,bn->bm", data, x)
            else:
                y = np.einsum("bmn,bnk->bmk", data, x)
            if np.unique(rows).size == rows.size:
                out[ridx] += y
            else:
                np.add.at(out, ridx, y)
        return out

    def __matmul__(self, other):
        if isinstance(other, BlockSparseMatrix):
            return bsm_matmul(self, other)
        return self.matvec(other)

    def with_label(self, label: str, level: int | None = None) -> "BlockSparseMatrix":
        return BlockSparseMatrix(self.row_sizes, self.col_sizes, label=label,
                                 level=self.level if level is None else level, groups=self._groups)


def block_diag(blocks, label: str = "", level: int = 0) -> BlockSparseMatrix:
    """Block-diagonal matrix from a sequence of dense blocks (any shapes)."""
    blocks = [np.asarray(b, dtype=complex) for b in blocks]
    rs = [b.shape[0] for b in blocks]
    cs = [b.shape[1] for b in blocks]
    return BlockSparseMatrix(rs, cs, [(k, k, b) for k, b in enumerate(blocks)], label, level)


def identity(sizes, label: str = "I", level: int = 0) -> BlockSparseMatrix:
    """Block identity with square diagonal blocks of the given sizes."""
    return block_diag([np.eye(s) for s in _sizes(sizes)], label, level)


def bsm_matmul(A: BlockSparseMatrix, B: BlockSparseMatrix, label: str | None = None,
               level: int | None = None) -> BlockSparseMatrix:
    """Block-sparse product ``A @ B``; partitions must match on the inner side."""
    if not np.array_equal(A.col_sizes, B.row_sizes):
        raise StructureError("inner block partitions do not match")
    brows = B.row_blocks()
    acc = {}
    for i, j, a in A.blocks():
        for k, b in brows.get(j, ()):
            prod = a @ b
            if (i, k) in acc:
                acc[i, k] = acc[i, k] + prod
            else:
                acc[i, k] = prod
    blocks = [(i, k, m) for (i, k), m in sorted(acc.items())]
    return BlockSparseMatrix(A.row_sizes, B.col_sizes, blocks,
                             A.label if label is None else label,
                             A.level if level is None else level)


# --------------------------------------------------------------------------
# factor chains


@dataclass(frozen=True)
class FactorMeta:
    """Build parameters recorded with a factorization."""

    N: int
    d: int
    L: int
    q: int
    tol: float = 0.0
    phase_id: int = 0

    @property
    def h(self) -> int:
        return self.L // 2


@dataclass(eq=False)
class Factorization:
    """Product ``factors[0] @ factors[1] @ ... @ factors[-1]``.

    ``row_order`` and ``col_order`` map the internal (tree leaf) ordering to
    the caller's ordering: row ``k`` of the chain is output point
    ``row_order[k]`` and column ``k`` consumes input entry ``col_order[k]``.
    """

    factors: list
    stage: str = "preliminary"
    meta: FactorMeta | None = None
    row_order: np.ndarray | None = None
    col_order: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ParameterError(f"unknown stage {self.stage!r}")
        if not self.factors:
            raise StructureError("a factorization needs at least one factor")
        for a, b in zip(self.factors[:-1], self.factors[1:]):
            if a.shape[1] != b.shape[0]:
                raise StructureError(f"factor {a!r} cannot multiply {b!r}")
        m, n = self.shape
        if self.row_order is not None and np.asarray(self.row_order).size != m:
            raise StructureError("row_order length does not match the chain")
        if self.col_order is not None and np.asarray(self.col_order).size != n:
            raise StructureError("col_order length does not match the chain")

    @property
    def shape(self) -> tuple[int, int]:
        return self.factors[0].shape[0], self.factors[-1].shape[1]

    @property
    def nnz(self) -> int:
        return sum(f.nnz for f in self.factors)

    def apply(self, g) -> np.ndarray:
        return apply_factorization(self, g)

    def todense(self) -> np.ndarray:
        """Dense matrix in the caller's ordering (small problems only)."""
        return self.apply(np.eye(self.shape[1], dtype=complex))

    def with_stage(self, factors, stage: str, **info) -> "Factorization":
        return replace(self, factors=list(factors), stage=stage, info={**self.info, **info})


def nnz(obj) -> int:
    """Stored entry count of a matrix or factorization."""
    return obj.nnz


def apply_factorization(F: Factorization, g) -> np.ndarray:
    """Evaluate ``F @ g`` right to left, honouring the point orderings."""
    g = np.asarray(g)
    if g.shape[:1] != (F.shape[1],):
        raise ParameterError(f"input of length {g.shape[:1]} does not match {F.shape[1]} columns")
    v = g[F.col_order] if F.col_order is not None else g
    for f in reversed(F.factors):
        if f.shape[1] != v.shape[0]:
            raise StructureError("factor chain is not dimension compatible")
        v = f.matvec(v)
    if F.row_order is not None:
        out = np.empty_like(v)
        out[F.row_order] = v
        return out
    return v


# --------------------------------------------------------------------------
# serialization

MAGIC = b"IBF1"
VERSION = 1
_TRAILER = b"PERM"


def _read(stream: BinaryIO, n: int) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise FormatError("unexpected end of stream")
    return buf


def _label_byte(label: str) -> int:
    if not label:
        return 0
    b = label[0].encode("ascii", errors="replace")[0]
    return b


def serialize(F: Factorization, stream: BinaryIO) -> None:
    """Write ``F`` to a binary stream (little-endian)."""
    meta = F.meta or FactorMeta(F.shape[1], 1, 0, 0)
    stream.write(MAGIC)
    stream.write(struct.pack("<I", VERSION))
    stream.write(struct.pack("<QIIIdBH", meta.N, meta.d, meta.L, meta.q, meta.tol,
                             STAGES.index(F.stage), meta.phase_id))
    stream.write(struct.pack("<I", len(F.factors)))
    for f in F.factors:
        stream.write(struct.pack("<BH", _label_byte(f.label), f.level))
        stream.write(struct.pack("<II", f.row_sizes.size, f.col_sizes.size))
        stream.write(f.row_sizes.astype("<u4").tobytes())
        stream.write(f.col_sizes.astype("<u4").tobytes())
        blocks = f.blocks()
        stream.write(struct.pack("<Q", len(blocks)))
        for i, j, b in blocks:
            stream.write(struct.pack("<II", i, j))
            stream.write(np.asarray(b, dtype="<c16").ravel(order="F").tobytes())
    if F.row_order is not None or F.col_order is not None:
        m, n = F.shape
        ro = np.arange(m) if F.row_order is None else np.asarray(F.row_order)
        co = np.arange(n) if F.col_order is None else np.asarray(F.col_order)
        stream.write(_TRAILER)
        stream.write(struct.pack("<Q", ro.size) + ro.astype("<u8").tobytes())
        stream.write(struct.pack("<Q", co.size) + co.astype("<u8").tobytes())


def deserialize(stream: BinaryIO) -> Factorization:
    """Read a factorization written by :func:`serialize`."""
    if _read(stream, 4) != MAGIC:
        raise FormatError("bad magic: not an IBF stream")
    (version,) = struct.unpack("<I", _read(stream, 4))
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    N, d, L, q, tol, stage, pid = struct.unpack("<QIIIdBH", _read(stream, struct.calcsize("<QIIIdBH")))
    if stage >= len(STAGES):
        raise FormatError(f"bad stage code {stage}")
    (nfac,) = struct.unpack("<I", _read(stream, 4))
    factors = []
    for _ in range(nfac):
        lab, lev = struct.unpack("<BH", _read(stream, 3))
        nr, nc = struct.unpack("<II", _read(stream, 8))
        rs = np.frombuffer(_read(stream, 4 * nr), dtype="<u4").astype(np.int64)
        cs = np.frombuffer(_read(stream, 4 * nc), dtype="<u4").astype(np.int64)
        (nb,) = struct.unpack("<Q", _read(stream, 8))
        blocks = []
        for _ in range(nb):
            i, j = struct.unpack("<II", _read(stream, 8))
            if i >= nr or j >= nc:
                raise FormatError("block index out of range")
            m, n = int(rs[i]), int(cs[j])
            vals = np.frombuffer(_read(stream, 16 * m * n), dtype="<c16")
            blocks.append((i, j, vals.reshape((m, n), order="F").astype(complex)))
        label = chr(lab) if lab else ""
        try:
            factors.append(BlockSparseMatrix(rs, cs, blocks, label, lev))
        except StructureError as exc:
            raise FormatError(f"inconsistent factor: {exc}") from exc
    row_order = col_order = None
    tag = stream.read(4)
    if tag:
        if tag != _TRAILER:
            raise FormatError("unknown trailing data")
        (m,) = struct.unpack("<Q", _read(stream, 8))
        row_order = np.frombuffer(_read(stream, 8 * m), dtype="<u8").astype(np.int64)
        (n,) = struct.unpack("<Q", _read(stream, 8))
        col_order = np.frombuffer(_read(stream, 8 * n), dtype="<u8").astype(np.int64)
    meta = FactorMeta(int(N), int(d), int(L), int(q), float(tol), int(pid))
    try:
        return Factorization(factors, STAGES[stage], meta, row_order, col_order)
    except StructureError as exc:
        raise FormatError(f"inconsistent factor chain: {exc}") from exc


def dumps(F: Factorization) -> bytes:
    buf = io.BytesIO()
    serialize(F, buf)
    return buf.getvalue()


def loads(data: bytes) -> Factorization:
    return deserialize(io.BytesIO(data))
