"""Phase functions and oscillatory kernels ``K(x, xi) = exp(2 pi i Phi(x, xi))``.

All evaluators broadcast over leading axes; the trailing axis of ``x`` and
``xi`` holds the coordinates.  One-dimensional callers may pass plain
scalars or 1-d arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError

__all__ = [
    "PhaseSpec",
    "NUFFT1D",
    "FIO1D",
    "FIO2D",
    "custom",
    "zero_phase",
    "phase",
    "kernel",
    "residual_phase",
    "kernel_matrix",
    "phase_matrix",
]

TWO_PI = 2.0 * np.pi

_VARIANTS = {"nufft1d": (1, 1), "fio1d": (1, 2), "fio2d": (2, 3), "custom": (None, 0)}


@dataclass(frozen=True)
class PhaseSpec:
    """Which phase function to use.

    ``variant`` is one of ``nufft1d``, ``fio1d``, ``fio2d`` or ``custom``.
    A custom phase supplies ``rule(x, xi)`` taking arrays with a trailing
    coordinate axis of length ``dim``; homogeneity in ``xi`` is the caller's
    responsibility.
    """

    variant: str
    dim: int = 1
    rule: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ParameterError(f"unknown phase variant {self.variant!r}")
        fixed = _VARIANTS[self.variant][0]
        if fixed is not None and self.dim != fixed:
            raise ParameterError(f"{self.variant} is {fixed}-dimensional")
        if self.variant == "custom" and self.rule is None:
            raise ParameterError("custom phase needs a rule")
        if self.dim not in (1, 2):
            raise ParameterError("only 1-d and 2-d phases are supported")

    @property
    def phase_id(self) -> int:
        return _VARIANTS[self.variant][1]


NUFFT1D = PhaseSpec("nufft1d", 1)
FIO1D = PhaseSpec("fio1d", 1)
FIO2D = PhaseSpec("fio2d", 2)


def custom(rule: Callable, dim: int = 1, name: str = "") -> PhaseSpec:
    return PhaseSpec("custom", dim, rule, name)


def zero_phase(dim: int = 1) -> PhaseSpec:
    """The constant phase ``Phi = 0`` (all-ones kernel, rank one)."""
    return custom(lambda x, xi: np.zeros(np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])), dim, "zero")


def _coords(a, dim: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if dim == 1 and (a.ndim == 0 or a.shape[-1] != 1):
        return a[..., None]
    if a.ndim == 0 or a.shape[-1] != dim:
        raise ParameterError(f"expected a trailing coordinate axis of length {dim}, got shape {a.shape}")
    return a


def _phase_coords(spec: PhaseSpec, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    v = spec.variant
    if v == "nufft1d":
        return -x[..., 0] * xi[..., 0]
    if v == "fio1d":
        c = (2.0 + np.sin(TWO_PI * x[..., 0])) / 8.0
        return x[..., 0] * xi[..., 0] + c * np.abs(xi[..., 0])
    if v == "fio2d":
        s1, s2 = np.sin(TWO_PI * x[..., 0]), np.sin(TWO_PI * x[..., 1])
        k1, k2 = np.cos(TWO_PI * x[..., 0]), np.cos(TWO_PI * x[..., 1])
        c1 = (2.0 + s1 * s2) / 32.0
        c2 = (2.0 + k1 * k2) / 32.0
        dot = x[..., 0] * xi[..., 0] + x[..., 1] * xi[..., 1]
        # radical is exactly 0 at xi = 0
        return dot + np.sqrt((c1 * xi[..., 0]) ** 2 + (c2 * xi[..., 1]) ** 2)
    return np.asarray(spec.rule(x, xi), dtype=float)


def phase(spec: PhaseSpec, x, xi):
    """Evaluate ``Phi(x, xi)`` with broadcasting over leading axes."""
    xa = _coords(x, spec.dim)
    xia = _coords(xi, spec.dim)
    out = _phase_coords(spec, xa, xia)
    if np.ndim(out) == 0:
        return float(out)
    return out


def kernel(spec: PhaseSpec, x, xi):
    """Evaluate ``exp(2 pi i Phi(x, xi))``."""
    out = np.exp(1j * TWO_PI * np.asarray(phase(spec, x, xi)))
    if np.ndim(out) == 0:
        return complex(out)
    return out


def residual_phase(spec: PhaseSpec, x, xi, c_a, c_b):
    """Phase left after recentering on ``(c_a, c_b)``.

    ``Phi(x, xi) - Phi(c_a, xi) - Phi(x, c_b) + Phi(c_a, c_b)``; it vanishes
    on ``x = c_a`` and on ``xi = c_b``.
    """
    return (phase(spec, x, xi) - phase(spec, c_a, xi)
            - phase(spec, x, c_b) + phase(spec, c_a, c_b))


def phase_matrix(spec: PhaseSpec, x, xi) -> np.ndarray:
    """``Phi`` on all pairs of two point sets, shape ``(len(x), len(xi))``."""
    xa = _coords(x, spec.dim).reshape(-1, spec.dim)
    xia = _coords(xi, spec.dim).reshape(-1, spec.dim)
    return np.asarray(_phase_coords(spec, xa[:, None, :], xia[None, :, :]), dtype=float).reshape(
        xa.shape[0], xia.shape[0])


def kernel_matrix(spec: PhaseSpec, x, xi) -> np.ndarray:
    """Dense kernel block ``K[a, b] = exp(2 pi i Phi(x_a, xi_b))``."""
    return np.exp(1j * TWO_PI * phase_matrix(spec, x, xi))
