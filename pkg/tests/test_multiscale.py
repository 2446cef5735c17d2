"""Corona decomposition and the multiscale 2-d factorization."""

import numpy as np
import pytest

from ibf import FIO2D, NUFFT1D, make_problem
from ibf.bench import direct_apply, random_input, relative_error
from ibf.errors import ParameterError
from ibf.kernels import kernel_matrix
from ibf.multiscale import apply_mibf, build_mibf, corona_decompose


def grid(n):
    w = np.arange(-n // 2, n // 2, dtype=float)
    return np.stack(np.meshgrid(w, w, indexing="ij"), axis=-1).reshape(-1, 2)


def radius(pts):
    return np.max(np.abs(pts), axis=1)


def test_n32_one_corona():
    om = grid(32)
    dec = corona_decompose(om)
    assert len(dec) == 1 and not dec.direct_only and dec.t_max == 0
    rad = radius(om)
    np.testing.assert_array_equal(dec.coronas[0], np.flatnonzero((rad > 8) & (rad <= 16)))
    np.testing.assert_array_equal(dec.center, np.flatnonzero(rad <= 8))
    assert dec.widths == (32.0,)


def test_n64_two_coronas():
    om = grid(64)
    dec = corona_decompose(om)
    assert len(dec) == 2
    rad = radius(om)
    assert np.all((rad[dec.coronas[0]] > 16) & (rad[dec.coronas[0]] <= 32))
    assert np.all((rad[dec.coronas[1]] > 8) & (rad[dec.coronas[1]] <= 16))
    assert rad[dec.center].max() <= 8


@pytest.mark.parametrize("n", [4, 8, 16, 32, 64, 128, 256])
def test_exact_cover(n):
    om = grid(n)
    dec = corona_decompose(om)
    allidx = np.concatenate(list(dec.coronas) + [dec.center])
    assert allidx.size == n * n
    np.testing.assert_array_equal(np.sort(allidx), np.arange(n * n))
    assert len(dec) == max(0, int(np.log2(n)) - 4)


def test_small_grid_is_direct_only():
    dec = corona_decompose(grid(16))
    assert dec.direct_only and dec.center.size == 256


@pytest.fixture(scope="module")
def mibf32():
    prob = make_problem("fio2d", 32 * 32)
    return prob, build_mibf(prob.spec, prob.x, prob.xi, 6, 3e-4)


def test_mibf_structure_and_accuracy(mibf32):
    prob, B = mibf32
    assert B.shape == (1024, 1024)
    assert len(B.factorizations) == 1
    F = B.factorizations[0]
    assert len(F.factors) == F.meta.L + 3 and F.stage == "optimal"
    assert B.center_block.shape == (1024, B.decomposition.center.size)
    assert B.nnz_preliminary > B.nnz
    g = random_input(1024, 3)
    u = B.apply(g)
    assert relative_error(u, lambda r: direct_apply(prob.spec, prob.x, prob.xi, g, r)) <= 2e-2


def test_center_only_input(mibf32):
    prob, B = mibf32
    g = np.zeros(1024, complex)
    c = B.decomposition.center
    g[c] = random_input(c.size, 1)
    np.testing.assert_array_equal(apply_mibf(B, g), B.center_block @ g[c])
    np.testing.assert_allclose(B.center_block, kernel_matrix(FIO2D, prob.x, prob.xi[c]), atol=1e-13)


def test_support_additivity(mibf32):
    prob, B = mibf32
    g = random_input(1024, 2)
    dec = B.decomposition
    parts = []
    for idx in list(dec.coronas) + [dec.center]:
        gi = np.zeros_like(g)
        gi[idx] = g[idx]
        parts.append(apply_mibf(B, gi))
    u = apply_mibf(B, g)
    assert np.linalg.norm(u - sum(parts)) <= 1e-12 * np.linalg.norm(u)
    one = np.zeros_like(g)
    one[dec.coronas[0]] = g[dec.coronas[0]]
    np.testing.assert_allclose(apply_mibf(B, one), B.factorizations[0].apply(g[dec.coronas[0]]),
                               atol=1e-12)


def test_multiple_coronas_preliminary():
    prob = make_problem("fio2d", 64 * 64)
    B = build_mibf(prob.spec, prob.x, prob.xi, 4, 1e-3, stage="preliminary")
    assert len(B.factorizations) == 2
    assert B.nnz == B.nnz_preliminary
    g = random_input(4096, 0)
    err = relative_error(B.apply(g), lambda r: direct_apply(prob.spec, prob.x, prob.xi, g, r), 128)
    assert err <= 1e-1


def test_mibf_errors():
    prob = make_problem("fio2d", 32 * 32)
    with pytest.raises(ParameterError):
        build_mibf(NUFFT1D, prob.x, prob.xi, 4, 1e-3)
    B = build_mibf(prob.spec, prob.x, prob.xi, 3, 1e-2, stage="swept_out")
    with pytest.raises(ParameterError):
        B.apply(np.ones(5))
    B2 = build_mibf(prob.spec, prob.x, prob.xi, 3, 1e-2, stage="swept_out", streaming=False)
    assert B.nnz == B2.nnz
