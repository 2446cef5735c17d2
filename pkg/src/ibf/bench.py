"""Direct evaluation, error and compression metrics, and the benchmark runner."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .blocksparse import deserialize, serialize
from .butterfly import BuildPlan, build_preliminary, make_plan
from .errors import AccuracyError, ParameterError
from .geometry import Box
from .kernels import FIO1D, FIO2D, NUFFT1D, PhaseSpec, kernel_matrix
from .multiscale import build_mibf
from .sweep import sweep_in, sweep_out

__all__ = [
    "Problem",
    "BenchConfig",
    "BenchRecord",
    "CSV_FIELDS",
    "TRANSFORMS",
    "STAGE_NAMES",
    "default_tol",
    "make_problem",
    "random_input",
    "direct_apply",
    "relative_error",
    "compression_ratio",
    "preliminary_nnz",
    "run_benchmark",
    "write_csv",
]

log = logging.getLogger(__name__)

TRANSFORMS = {"nufft1d": NUFFT1D, "fio1d": FIO1D, "fio2d": FIO2D}
STAGE_NAMES = {"prelim": "preliminary", "sweepout": "swept_out", "optimal": "optimal"}
CSV_FIELDS = ("transform", "N", "d", "q", "tol", "stage", "eps", "r_comp", "nnz_pre",
              "nnz_opt", "t_factor_s", "t_apply_s", "seed")


def default_tol(q: int) -> float:
    """Truncation tolerance matched to the interpolation accuracy of order ``q``."""
    return 3e-4 if q <= 7 else 1e-8


# --------------------------------------------------------------------- inputs

@dataclass(frozen=True, eq=False)
class Problem:
    """Point sets and domains of one benchmark transform."""

    transform: str
    spec: PhaseSpec
    x: np.ndarray
    xi: np.ndarray
    x_domain: Box
    xi_domain: Box

    @property
    def N(self) -> int:
        return self.xi.shape[0]

    @property
    def d(self) -> int:
        return self.spec.dim


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def make_problem(transform: str, N: int, seed: int = 0) -> Problem:
    """Points of the benchmark transforms.

    ``nufft1d`` draws ``N`` uniform space points on ``[0, 1)``; ``fio1d``
    uses the grid ``k / N``; ``fio2d`` takes ``N = n**2`` grid points.
    Frequencies are the integers ``[-n/2, n/2)`` per dimension.
    """
    if transform not in TRANSFORMS:
        raise ParameterError(f"unknown transform {transform!r}; choose from {sorted(TRANSFORMS)}")
    spec = TRANSFORMS[transform]
    if spec.dim == 1:
        if not _is_pow2(N) or N < 4:
            raise ParameterError(f"N must be a power of 2 (>= 4) for {transform}, got {N}")
        if transform == "nufft1d":
            x = np.random.default_rng(seed).random(N)
        else:
            x = np.arange(N) / N
        xi = np.arange(-N // 2, N // 2, dtype=float)
        return Problem(transform, spec, x[:, None], xi[:, None], Box.from_bounds(0, 1),
                       Box.from_bounds(-N / 2, N / 2))
    n = int(round(np.sqrt(N)))
    if n * n != N or not _is_pow2(n) or n < 4:
        raise ParameterError(f"N must be the square of a power of 2 for {transform}, got {N}")
    g = np.arange(n) / n
    x = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    w = np.arange(-n // 2, n // 2, dtype=float)
    xi = np.stack(np.meshgrid(w, w, indexing="ij"), axis=-1).reshape(-1, 2)
    return Problem(transform, spec, x, xi, Box.from_bounds([0, 0], [1, 1]),
                   Box.from_bounds([-n / 2] * 2, [n / 2] * 2))


def random_input(N: int, seed: int = 0) -> np.ndarray:
    """Unit-variance complex Gaussian vector."""
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)


# -------------------------------------------------------------------- metrics

def direct_apply(spec: PhaseSpec, x, xi, g, rows=None, chunk: int = 1 << 20) -> np.ndarray:
    """Exact ``u(x) = sum_xi K(x, xi) g(xi)``, optionally only at ``rows``.

    Rows are evaluated in blocks so the kernel is never held in full.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if xi.ndim == 1:
        xi = xi[:, None]
    g = np.asarray(g)
    if g.shape[0] != xi.shape[0]:
        raise ParameterError(f"g has {g.shape[0]} entries but there are {xi.shape[0]} frequencies")
    if rows is not None:
        x = x[np.asarray(rows)]
    out = np.zeros(x.shape[0], dtype=complex)
    step = max(1, chunk // max(xi.shape[0], 1))
    for a in range(0, x.shape[0], step):
        out[a:a + step] = kernel_matrix(spec, x[a:a + step], xi) @ g
    return out


def relative_error(u_approx, u_exact: Callable | np.ndarray, sample_size: int = 256,
                   seed: int = 0) -> float:
    """Sampled relative 2-norm error.

    Parameters
    ----------
    u_approx : (N,) array_like
    u_exact : callable or array_like
        Either the exact vector or a function returning the exact values at
        an index array (only the sampled rows are ever requested).
    sample_size : int
        Rows drawn uniformly without replacement; all rows if ``N`` is
        smaller.
    seed : int

    Raises
    ------
    AccuracyError
        If the exact values vanish on the whole sample.
    """
    u_approx = np.asarray(u_approx)
    N = u_approx.shape[0]
    if sample_size < 1:
        raise ParameterError("sample_size must be positive")
    if N <= sample_size:
        rows = np.arange(N)
    else:
        rows = np.sort(np.random.default_rng(seed).choice(N, size=sample_size, replace=False))
    exact = u_exact(rows) if callable(u_exact) else np.asarray(u_exact)[rows]
    den = np.sum(np.abs(exact) ** 2)
    if den == 0:
        raise AccuracyError("exact values vanish on the sample; relative error undefined")
    return float(np.sqrt(np.sum(np.abs(u_approx[rows] - exact) ** 2) / den))


def _nnz_of(obj) -> int:
    return int(obj) if isinstance(obj, (int, np.integer)) else int(obj.nnz)


def compression_ratio(F_pre, F_opt) -> float:
    """``nnz(F_pre) / nnz(F_opt)`` (factorizations, MIBF builds or counts)."""
    den = _nnz_of(F_opt)
    if den == 0:
        raise AccuracyError("compressed factorization stores no entries")
    return _nnz_of(F_pre) / den


def preliminary_nnz(plan: BuildPlan) -> int:
    """Closed-form entry count of the preliminary factorization of ``plan``."""
    r = plan.rank
    pairs = plan.n_x(plan.L)
    ends = r * (plan.x_tree.npoints + plan.xi_tree.npoints)
    return ends + pairs * r * r * (1 + plan.nchild * plan.L)


# --------------------------------------------------------------------- runner

@dataclass
class BenchConfig:
    transform: str = "nufft1d"
    sizes: Sequence[int] = (256,)
    orders: Sequence[int] = (6,)
    tol: float | None = None
    seed: int = 0
    stage: str = "optimal"
    sample: int = 256
    depth: int | None = None
    out: str | None = None
    save: str | None = None
    load: str | None = None

    def validate(self):
        if self.transform not in TRANSFORMS:
            raise ParameterError(f"unknown transform {self.transform!r}")
        if self.stage not in STAGE_NAMES:
            raise ParameterError(f"unknown stage {self.stage!r}; choose from {sorted(STAGE_NAMES)}")
        if self.tol is not None and not 0 < self.tol < 1:
            raise ParameterError(f"tol must lie in (0, 1), got {self.tol}")
        if self.sample < 1:
            raise ParameterError("sample must be positive")
        if any(q < 2 for q in self.orders):
            raise ParameterError("Chebyshev order must be >= 2")
        if self.depth is not None and self.depth < 1:
            raise ParameterError("depth must be positive")
        if self.depth is not None and TRANSFORMS[self.transform].dim != 1:
            raise ParameterError("--depth applies to 1-d transforms only")
        if (self.save or self.load) and TRANSFORMS[self.transform].dim != 1:
            raise ParameterError("--save/--load are supported for 1-d transforms only")
        if (self.save or self.load) and len(self.sizes) * len(self.orders) != 1:
            raise ParameterError("--save/--load need a single N and q")
        for N in self.sizes:
            make_problem(self.transform, N, self.seed)


@dataclass
class BenchRecord:
    transform: str
    N: int
    d: int
    q: int
    tol: float
    stage: str
    eps: float
    r_comp: float
    nnz_pre: int
    nnz_opt: int
    t_factor_s: float
    t_apply_s: float
    seed: int
    stage_times: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


def _factor_1d(prob: Problem, q: int, tol: float, stage: str, depth: int | None):
    times = {}
    t0 = time.perf_counter()
    plan = make_plan(prob.spec, prob.x, prob.xi, q, prob.x_domain, prob.xi_domain, depth)
    F = build_preliminary(plan)
    times["preliminary"] = time.perf_counter() - t0
    nnz_pre = F.nnz
    if stage != "preliminary":
        t = time.perf_counter()
        F = sweep_out(F, tol)
        times["swept_out"] = time.perf_counter() - t
        if stage == "optimal":
            t = time.perf_counter()
            F = sweep_in(F, tol)
            times["optimal"] = time.perf_counter() - t
    return F, nnz_pre, times


def _factor_2d(prob: Problem, q: int, tol: float, stage: str):
    t0 = time.perf_counter()
    n = int(round(np.sqrt(prob.N)))
    B = build_mibf(prob.spec, prob.x, prob.xi, q, tol, n=n, stage=stage)
    return B, B.nnz_preliminary, {stage: time.perf_counter() - t0}


def _load(path: str, prob: Problem, q: int, depth: int | None):
    with open(path, "rb") as fh:
        F = deserialize(fh)
    m = F.meta
    if m.N != prob.N or m.q != q or m.d != prob.d or m.phase_id != prob.spec.phase_id:
        raise ParameterError(f"{path} holds a different problem (N={m.N}, q={m.q}, d={m.d})")
    plan = make_plan(prob.spec, prob.x, prob.xi, q, prob.x_domain, prob.xi_domain, depth or m.L)
    if plan.L != m.L or F.shape != (prob.x.shape[0], prob.N):
        raise ParameterError(f"{path} was built with a different tree depth")
    return F, preliminary_nnz(plan)


def run_one(config: BenchConfig, N: int, q: int) -> BenchRecord:
    prob = make_problem(config.transform, N, config.seed)
    tol = config.tol if config.tol is not None else default_tol(q)
    stage = STAGE_NAMES[config.stage]
    t0 = time.perf_counter()
    if config.load:
        F, nnz_pre = _load(config.load, prob, q, config.depth)
        stage, tol = F.stage, F.meta.tol or tol
        times = {"load": time.perf_counter() - t0}
    elif prob.d == 1:
        F, nnz_pre, times = _factor_1d(prob, q, tol, stage, config.depth)
    else:
        F, nnz_pre, times = _factor_2d(prob, q, tol, stage)
    t_factor = time.perf_counter() - t0
    if config.save:
        with open(config.save, "wb") as fh:
            serialize(F, fh)
    g = random_input(prob.N, config.seed)
    t = time.perf_counter()
    u = F.apply(g)
    t_apply = time.perf_counter() - t
    eps = relative_error(u, lambda rows: direct_apply(prob.spec, prob.x, prob.xi, g, rows),
                         config.sample, config.seed)
    rec = BenchRecord(config.transform, N, prob.d, q, tol, stage, eps,
                      compression_ratio(nnz_pre, F), int(nnz_pre), int(F.nnz),
                      t_factor, t_apply, config.seed, times)
    log.info("%s N=%d q=%d %s: eps=%.3e r_comp=%.3f t_factor=%.2fs", rec.transform, N, q,
             stage, eps, rec.r_comp, t_factor)
    return rec


def run_benchmark(config: BenchConfig) -> list[BenchRecord]:
    """Run every ``(N, q)`` combination and optionally write the CSV."""
    config.validate()
    records = [run_one(config, N, q) for N in config.sizes for q in config.orders]
    if config.out:
        write_csv(records, config.out)
    return records


def write_csv(records, out) -> str | None:
    """Write records to a path or text stream; returns the text for ``out=None``."""
    if out is None:
        buf = io.StringIO()
        _write(records, buf)
        return buf.getvalue()
    if hasattr(out, "write"):
        _write(records, out)
        return None
    with open(Path(out), "w", newline="") as fh:
        _write(records, fh)
    return None


def _write(records, fh):
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        row = r.row()
        row["eps"] = f"{row['eps']:.6e}"
        row["r_comp"] = f"{row['r_comp']:.6f}"
        row["tol"] = f"{row['tol']:.3e}"
        row["t_factor_s"] = f"{row['t_factor_s']:.6f}"
        row["t_apply_s"] = f"{row['t_apply_s']:.6f}"
        w.writerow(row)
