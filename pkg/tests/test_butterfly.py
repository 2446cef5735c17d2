"""Preliminary factorization: structure, closed-form sizes and accuracy."""

import numpy as np
import pytest

from ibf import NUFFT1D, FIO1D, build_preliminary, zero_phase
from ibf.bench import preliminary_nnz, random_input
from ibf.butterfly import (build_g_level, build_h_level, build_switch, build_uL, build_v0,
                           transfer_matrices)
from ibf.errors import ParameterError
from ibf.geometry import Box, cheb_grid, cheb_nodes, child_offsets, lagrange_matrix
from ibf.kernels import kernel_matrix

from conftest import line_plan, plan_for, rel


def test_chain_length_and_labels(fio256_q6):
    _, plan, F = fio256_q6
    assert len(F.factors) == plan.L + 3
    labels = "".join(f.label for f in F.factors)
    assert labels == "U" + "G" * (plan.L - plan.h) + "M" + "H" * plan.h + "V"
    assert F.shape == (256, 256)


def test_zero_phase_exact():
    x, xi, plan = line_plan(zero_phase(1), 64, 4, depth=2)
    assert plan.L == 2
    F = build_preliminary(plan)
    np.testing.assert_allclose(F.todense(), np.ones((64, 64)), atol=1e-12)


def test_polynomial_transfers_exact_for_zero_phase():
    # with a constant kernel every factor reduces to a pure Lagrange transfer,
    # so the whole chain must reproduce the all-ones matrix at any depth
    for N, q in [(128, 3), (256, 5)]:
        _, _, plan = line_plan(zero_phase(1), N, q)
        F = build_preliminary(plan)
        g = random_input(N, 1)
        np.testing.assert_allclose(F.apply(g), np.full(N, g.sum()), rtol=1e-11)


def test_transfer_matrix_definition():
    q = 4
    T = transfer_matrices(q, 2)
    parent = cheb_grid(q, Box([0.0, 0.0], [1.0, 1.0]))
    ref = cheb_nodes(q, 2)
    offs = child_offsets(2)
    for k in range(4):
        child_nodes = ref / 2 + offs[k]
        np.testing.assert_allclose(T[k], lagrange_matrix(parent, child_nodes), atol=1e-13)


def test_fio1d_q10_accuracy(dense_fio256):
    prob, plan = plan_for("fio1d", 256, 10)
    F = build_preliminary(plan)
    assert rel(F.todense(), dense_fio256) <= 1e-4


def test_nufft_random_accuracy():
    prob, plan = plan_for("nufft1d", 256, 6, seed=3)
    F = build_preliminary(plan)
    K = kernel_matrix(prob.spec, prob.x, prob.xi)
    g = random_input(256, 4)
    assert rel(F.apply(g), K @ g) <= 5e-3


def test_error_nonincreasing_in_q(dense_fio256):
    errs = []
    for q in (4, 6, 8, 10):
        _, plan = plan_for("fio1d", 256, q)
        errs.append(rel(build_preliminary(plan).todense(), dense_fio256))
    assert all(b <= a * 1.05 for a, b in zip(errs, errs[1:])), errs


@pytest.mark.parametrize("transform,N,q", [("fio1d", 256, 6), ("nufft1d", 512, 4),
                                           ("fio2d", 32 * 32, 3)])
def test_closed_form_nnz(transform, N, q):
    prob, plan = plan_for(transform, N, q)
    d, r, L, h = plan.d, plan.rank, plan.L, plan.h
    nbox = 2 ** (d * L)
    for lev in range(1, h + 1):
        assert build_h_level(plan, lev).nnz == nbox * 2 ** d * r * r
    for lev in range(h, L):
        assert build_g_level(plan, lev).nnz == nbox * 2 ** d * r * r
    assert build_switch(plan).nnz == nbox * r * r
    assert build_uL(plan).nnz == N * r and build_v0(plan).nnz == N * r
    assert build_preliminary(plan).nnz == preliminary_nnz(plan)


def test_block_patterns(fio256_q6):
    _, plan, F = fio256_q6
    d, L, h = plan.d, plan.L, plan.h
    nc = 2 ** d
    for f in F.factors[1:-1]:
        rows = f.row_blocks()
        if f.label == "M":
            assert all(len(v) == 1 for v in rows.values())
            continue
        assert all(len(v) == nc for v in rows.values())
        lev = f.level
        if f.label == "H":
            nA, nP = 2 ** (d * lev), 2 ** (d * (lev - 1))
            for (row, col) in f.pattern():
                j, i = divmod(row, nA)
                c, p = divmod(col, nP)
                assert p == i >> d and c >> d == j
        else:
            nB = 2 ** (d * (L - lev - 1))
            nC = nB * nc
            for (row, col) in f.pattern():
                i, j = divmod(row, nB)
                p, c = divmod(col, nC)
                assert p == i >> d and c >> d == j
    assert F.factors[0].is_block_diagonal() and F.factors[-1].is_block_diagonal()


def test_switch_entries_are_kernel_values():
    _, plan = plan_for("fio1d", 256, 5)
    M = build_switch(plan)
    h, d = plan.h, plan.d
    nA, nB = 2 ** (d * h), 2 ** (d * (plan.L - h))
    rng = np.random.default_rng(0)
    for _ in range(10):
        i, j = int(rng.integers(nA)), int(rng.integers(nB))
        gA = plan.x_grids(h)[i]
        gB = plan.xi_grids(plan.L - h)[j]
        np.testing.assert_allclose(M.block(i * nB + j, j * nA + i),
                                   kernel_matrix(plan.spec, gA, gB), atol=1e-12)


def test_level_range_checks():
    _, plan = plan_for("fio1d", 256, 4)
    with pytest.raises(ParameterError):
        build_h_level(plan, 0)
    with pytest.raises(ParameterError):
        build_g_level(plan, plan.L)


def test_odd_depth_supported():
    x, xi, plan = line_plan(FIO1D, 32, 8)
    assert plan.L == 5 and plan.h == 2
    F = build_preliminary(plan)
    assert len(F.factors) == 8
    assert rel(F.todense(), kernel_matrix(FIO1D, x, xi)) <= 1e-3


def test_clustered_points_leave_empty_leaves():
    N = 256
    x = np.sort(np.random.default_rng(0).random(N)) * 0.25
    x, xi, plan = line_plan(NUFFT1D, N, 8, x=x)
    F = build_preliminary(plan)
    assert any(b.shape[0] == 0 for _, _, b in F.factors[0].blocks()) or F.factors[0].nblocks < 2 ** plan.L
    assert rel(F.todense(), kernel_matrix(NUFFT1D, x, xi)) <= 1e-4
