"""Multiscale factorization for 2-d kernels singular at the frequency origin.

The frequency grid is split into max-norm annuli (coronas)

    Omega_t = { n / 2**(t+2) < max(|xi_1|, |xi_2|) <= n / 2**(t+1) }

plus the remaining center square.  Each corona gets its own compressed
butterfly factorization over the box ``[-W/2, W/2]**2``, ``W = n / 2**t``,
and the center is applied densely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocksparse import Factorization
from .butterfly import make_plan, build_preliminary
from .errors import ParameterError
from .geometry import Box, as_points
from .kernels import PhaseSpec, kernel_matrix
from .sweep import build_optimal, optimize, sweep_out

__all__ = ["CoronaDecomposition", "MIBF", "corona_decompose", "build_mibf", "apply_mibf"]


@dataclass(frozen=True, eq=False)
class CoronaDecomposition:
    """Index sets of the coronas and of the center square.

    ``coronas[t]`` holds indices into the frequency point array; ``widths[t]``
    is the side ``W = n / 2**t`` of the box enclosing corona ``t``.
    ``direct_only`` flags grids too small for any corona.
    """

    n: int
    coronas: tuple
    center: np.ndarray
    widths: tuple

    @property
    def t_max(self) -> int:
        return len(self.coronas) - 1

    @property
    def direct_only(self) -> bool:
        return not self.coronas

    def __len__(self):
        return len(self.coronas)


def corona_decompose(omega, n: int | None = None, center_cap: int = 16) -> CoronaDecomposition:
    """Partition the 2-d frequency points into coronas and a center.

    Corona ``t`` exists while ``n / 2**t > center_cap``; everything not in a
    corona belongs to the center, so the cover is exact.  For ``n < 32``
    (with the default cap) there is no corona and ``direct_only`` is set.
    """
    omega = as_points(omega, 2)
    if n is None:
        n = int(round(np.sqrt(omega.shape[0])))
    if n < 1:
        raise ParameterError("grid size must be positive")
    rad = np.max(np.abs(omega), axis=1)
    coronas, widths = [], []
    taken = np.zeros(omega.shape[0], dtype=bool)
    t = 0
    while n / 2 ** t > center_cap:
        inside = (rad > n / 2 ** (t + 2)) & (rad <= n / 2 ** (t + 1)) & ~taken
        coronas.append(np.flatnonzero(inside))
        widths.append(n / 2 ** t)
        taken |= inside
        t += 1
    return CoronaDecomposition(int(n), tuple(coronas), np.flatnonzero(~taken), tuple(widths))


@dataclass(eq=False)
class MIBF:
    """Per-corona factorizations plus the dense center block."""

    spec: PhaseSpec
    decomposition: CoronaDecomposition
    factorizations: list
    center_block: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        nx = self.center_block.shape[0]
        return nx, sum(c.size for c in self.decomposition.coronas) + self.decomposition.center.size

    @property
    def nnz(self) -> int:
        return self.center_block.size + sum(F.nnz for F in self.factorizations)

    @property
    def nnz_preliminary(self) -> int:
        return self.center_block.size + sum(_pre_nnz(F) for F in self.factorizations)

    def apply(self, g) -> np.ndarray:
        return apply_mibf(self, g)


def _pre_nnz(F: Factorization) -> int:
    return F.info.get("nnz_preliminary", F.nnz) if F.stage != "preliminary" else F.nnz


def build_mibf(spec: PhaseSpec, x, omega, q: int, tol: float, n: int | None = None,
               stage: str = "optimal", center_cap: int = 16, streaming: bool = True) -> MIBF:
    """Factor the kernel corona by corona.

    Parameters
    ----------
    spec : PhaseSpec
        A 2-d phase.
    x : (N, 2) array_like
        Space points in ``[0, 1]**2``.
    omega : (N_w, 2) array_like
        Integer frequency grid.
    q, tol : int, float
        Chebyshev order and compression tolerance.
    stage : {'preliminary', 'swept_out', 'optimal'}
    streaming : bool
        Compress each level while building it (bounded memory); ignored for
        ``stage='preliminary'``.
    """
    if spec.dim != 2:
        raise ParameterError("the multiscale factorization is 2-d only")
    x = as_points(x, 2)
    omega = as_points(omega, 2)
    dec = corona_decompose(omega, n, center_cap)
    facs = []
    for idx, W in zip(dec.coronas, dec.widths):
        plan = make_plan(spec, x, omega[idx], q, Box.from_bounds([0, 0], [1, 1]),
                         Box([0.0, 0.0], [W, W]))
        if stage == "preliminary":
            F = build_preliminary(plan)
        elif streaming:
            F = build_optimal(plan, tol, stage=stage)
        else:
            pre = build_preliminary(plan)
            F = sweep_out(pre, tol) if stage == "swept_out" else optimize(pre, tol)
            F.info["nnz_preliminary"] = pre.nnz
        facs.append(F)
    center = kernel_matrix(spec, x, omega[dec.center])
    return MIBF(spec, dec, facs, center, {"stage": stage})


def apply_mibf(build: MIBF, g) -> np.ndarray:
    """``u = K_C g_C + sum_t F_t g_t`` over the disjoint restrictions of ``g``."""
    g = np.asarray(g)
    if g.shape[:1] != (build.shape[1],):
        raise ParameterError(f"input of length {g.shape[:1]} does not match {build.shape[1]} frequencies")
    dec = build.decomposition
    u = build.center_block @ g[dec.center]
    for idx, F in zip(dec.coronas, build.factorizations):
        u = u + F.apply(g[idx])
    return u
