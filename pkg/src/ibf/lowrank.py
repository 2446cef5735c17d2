"""Truncated SVDs, their splittings, and interpolative kernel factors.

The interpolative factors come from Chebyshev interpolation of the kernel
after recentering its phase on a box pair ``(A, B)``: in the frequency
variable (for small ``B``)

    K(x, xi) ~ sum_t K(x, g_t) * beta_t(xi),
    beta_t(xi) = exp(-2 pi i Phi(c_A, g_t)) M_t(xi) exp(2 pi i Phi(c_A, xi)),

and symmetrically in the space variable (for small ``A``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError
from .geometry import Box, ChebGrid, as_points, cheb_grid, lagrange_matrix
from .kernels import TWO_PI, PhaseSpec, phase_matrix

__all__ = [
    "SVDResult",
    "LowRankFactors",
    "InterpBlock",
    "truncated_svd",
    "select_rank",
    "split",
    "split_balanced",
    "interp_factor_xi",
    "interp_factor_x",
]


class SVDResult(NamedTuple):
    """Truncated SVD ``Z ~ U @ diag(s) @ V.conj().T``."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.size

    @property
    def degenerate(self) -> bool:
        """True when the input was all zeros (``s == (0,)``)."""
        return self.s.size == 1 and self.s[0] == 0.0


@dataclass(frozen=True, eq=False)
class LowRankFactors:
    """``left @ right.conj().T`` approximates the source matrix."""

    left: np.ndarray
    right: np.ndarray
    tol_used: float = 0.0

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[0], self.right.shape[0]

    def todense(self) -> np.ndarray:
        return self.left @ self.right.conj().T


def select_rank(s: np.ndarray, tol: float, max_rank: int | None = None) -> int:
    """Number of singular values above ``tol * s[0]``, capped at ``max_rank``."""
    if s.size == 0 or s[0] == 0:
        return 0
    r = int(np.count_nonzero(s > tol * s[0]))
    if max_rank is not None:
        r = min(r, max_rank)
    return max(r, 1)


def truncated_svd(Z, tol: float, max_rank: int | None = None) -> SVDResult:
    """Truncated SVD of ``Z`` relative to its largest singular value.

    Keeps ``r = min(max_rank, #{s_i > tol * s_1})`` terms.  An all-zero
    input yields rank-one zero factors with ``s = (0,)``, reported by
    :attr:`SVDResult.degenerate`.

    Parameters
    ----------
    Z : (m, n) array_like
    tol : float
        Relative cutoff in ``(0, 1)``.
    max_rank : int, optional
        Upper bound on the kept rank.
    """
    if not 0 < tol < 1:
        raise ParameterError(f"tol must lie in (0, 1), got {tol}")
    if max_rank is not None and max_rank < 1:
        raise ParameterError(f"max_rank must be >= 1, got {max_rank}")
    Z = np.asarray(Z)
    if Z.ndim != 2:
        raise ParameterError("truncated_svd expects a matrix")
    m, n = Z.shape
    dtype = np.result_type(Z.dtype, np.float64)
    if m == 0 or n == 0 or not np.any(Z):
        U = np.zeros((m, 1), dtype=dtype)
        V = np.zeros((n, 1), dtype=dtype)
        return SVDResult(U, np.zeros(1), V)
    U, s, Vh = np.linalg.svd(Z, full_matrices=False)
    r = select_rank(s, tol, max_rank)
    return SVDResult(U[:, :r], s[:r], Vh[:r].conj().T)


def split(U0, s, V0, side: str = "balanced", tol_used: float = 0.0) -> LowRankFactors:
    """Distribute the singular values of ``U0 diag(s) V0^*`` over two factors.

    ``side='balanced'`` puts ``sqrt(s)`` on both sides, ``'left'`` keeps
    ``s`` in the left factor (``right = V0``) and ``'right'`` keeps it in
    the right factor (``left = U0``).
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ParameterError("singular values must be non-negative")
    if side == "balanced":
        root = np.sqrt(s)
        return LowRankFactors(U0 * root, V0 * root, tol_used)
    if side == "left":
        return LowRankFactors(U0 * s, V0.copy(), tol_used)
    if side == "right":
        return LowRankFactors(U0.copy(), V0 * s, tol_used)
    raise ParameterError(f"unknown split side {side!r}")


def split_balanced(U0, s, V0, tol_used: float = 0.0) -> LowRankFactors:
    return split(U0, s, V0, "balanced", tol_used)


class InterpBlock(NamedTuple):
    block: np.ndarray
    grid: ChebGrid

    @property
    def empty(self) -> bool:
        return self.block.size == 0


def interp_factor_xi(spec: PhaseSpec, A: Box, B: Box, q: int, xi) -> InterpBlock:
    """Frequency-side interpolative factor of the box pair ``(A, B)``.

    Parameters
    ----------
    spec : PhaseSpec
    A, B : Box
        Space and frequency boxes; only the center of ``A`` is used.
    q : int
        Chebyshev order per dimension.
    xi : (n_B, d) array_like
        Frequency points inside ``B``.

    Returns
    -------
    InterpBlock
        ``block[t, k] = exp(-2 pi i Phi(c_A, g_t)) M_t(xi_k) exp(2 pi i Phi(c_A, xi_k))``
        of shape ``(q**d, n_B)`` together with the grid ``g`` on ``B``.
    """
    grid = cheb_grid(q, B)
    xi = as_points(xi, B.dim)
    ca = A.center[None, :]
    left = np.exp(-1j * TWO_PI * phase_matrix(spec, ca, grid.nodes))[0]
    right = np.exp(1j * TWO_PI * phase_matrix(spec, ca, xi))[0]
    block = left[:, None] * lagrange_matrix(grid, xi).T * right[None, :]
    return InterpBlock(block, grid)


def interp_factor_x(spec: PhaseSpec, A: Box, B: Box, q: int, x) -> InterpBlock:
    """Space-side interpolative factor of the box pair ``(A, B)``.

    ``block[k, t] = exp(2 pi i Phi(x_k, c_B)) M_t(x_k) exp(-2 pi i Phi(g_t, c_B))``
    of shape ``(n_A, q**d)`` with ``g`` the grid on ``A``.
    """
    grid = cheb_grid(q, A)
    x = as_points(x, A.dim)
    cb = B.center[None, :]
    left = np.exp(1j * TWO_PI * phase_matrix(spec, x, cb))[:, 0]
    right = np.exp(-1j * TWO_PI * phase_matrix(spec, grid.nodes, cb))[:, 0]
    block = left[:, None] * lagrange_matrix(grid, x) * right[None, :]
    return InterpBlock(block, grid)
