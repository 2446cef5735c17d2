"""Interpolative butterfly factorization of oscillatory kernels.

Typical use::

    from ibf import NUFFT1D, make_problem, make_plan, build_preliminary, optimize

    prob = make_problem("nufft1d", 1024)
    plan = make_plan(prob.spec, prob.x, prob.xi, 6, prob.x_domain, prob.xi_domain)
    F = optimize(build_preliminary(plan), tol=3e-4)
    u = F.apply(g)
"""

from .bench import (BenchConfig, BenchRecord, compression_ratio, default_tol, direct_apply,
                    make_problem, random_input, relative_error, run_benchmark)
from .blocksparse import (BlockSparseMatrix, Factorization, FactorMeta, apply_factorization,
                          block_diag, bsm_matmul, deserialize, identity, nnz, serialize)
from .butterfly import (BuildPlan, build_g_level, build_h_level, build_preliminary, build_switch,
                        build_uL, build_v0, make_plan)
from .errors import (AccuracyError, DomainError, FormatError, IBFError, ParameterError,
                     StructureError)
from .geometry import Box, ChebGrid, DyadicTree, build_tree, cheb_grid, default_depth, lagrange_matrix
from .kernels import FIO1D, FIO2D, NUFFT1D, PhaseSpec, custom, kernel, phase, residual_phase, zero_phase
from .lowrank import (LowRankFactors, interp_factor_x, interp_factor_xi, split, split_balanced,
                      truncated_svd)
from .multiscale import MIBF, CoronaDecomposition, apply_mibf, build_mibf, corona_decompose
from .sweep import Pencil, build_optimal, factor_middle, optimize, sp_compress, sweep_in, sweep_out

__version__ = "0.1.0"
