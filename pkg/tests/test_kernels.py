"""Phase functions, kernels and the recentered residual phase."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibf.errors import ParameterError
from ibf.kernels import (FIO1D, FIO2D, NUFFT1D, PhaseSpec, custom, kernel, kernel_matrix, phase,
                         phase_matrix, residual_phase, zero_phase)

coord = st.floats(-50, 50, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)


def test_phase_values():
    assert phase(NUFFT1D, 0.5, 1) == pytest.approx(-0.5)
    assert phase(FIO1D, 0.0, 4) == pytest.approx(1.0)
    assert phase(FIO1D, 0.25, -2) == pytest.approx(0.25)


def test_kernel_values():
    assert kernel(FIO1D, 0.0, 4) == pytest.approx(1.0)
    assert kernel(FIO1D, 0.25, -2) == pytest.approx(1j)
    for xi in (-7.0, 0.0, 3.5):
        assert kernel(NUFFT1D, 0.0, xi) == pytest.approx(1.0)


def test_fio2d_at_origin_and_formula():
    assert phase(FIO2D, [0.3, 0.8], [0.0, 0.0]) == 0.0
    x, xi = np.array([0.1, 0.7]), np.array([3.0, -5.0])
    c1 = (2 + np.sin(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1])) / 32
    c2 = (2 + np.cos(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1])) / 32
    want = x @ xi + np.sqrt((c1 * xi[0]) ** 2 + (c2 * xi[1]) ** 2)
    assert phase(FIO2D, x, xi) == pytest.approx(want, rel=1e-14)


def test_dimension_mismatch():
    with pytest.raises(ParameterError):
        phase(FIO2D, [0.1, 0.2, 0.3], [1.0, 2.0])
    with pytest.raises(ParameterError):
        PhaseSpec("fio2d", 1)
    with pytest.raises(ParameterError):
        PhaseSpec("bogus")
    with pytest.raises(ParameterError):
        PhaseSpec("custom", 1)


def test_custom_and_zero_phase():
    spec = custom(lambda x, xi: x[..., 0] * xi[..., 0] ** 2)
    assert phase(spec, 2.0, 3.0) == pytest.approx(18.0)
    np.testing.assert_array_equal(kernel_matrix(zero_phase(), [0.1, 0.2], [1, 2, 3]), np.ones((2, 3)))


def test_phase_matrix_matches_pointwise():
    x = np.random.default_rng(0).random((5, 2))
    xi = np.random.default_rng(1).integers(-8, 8, (7, 2)).astype(float)
    pm = phase_matrix(FIO2D, x, xi)
    for a in range(5):
        for b in range(7):
            assert pm[a, b] == pytest.approx(phase(FIO2D, x[a], xi[b]), abs=1e-13)


@pytest.mark.parametrize("spec", [NUFFT1D, FIO1D])
@settings(max_examples=50, deadline=None)
@given(unit, coord)
def test_unit_modulus(spec, x, xi):
    assert abs(abs(kernel(spec, x, xi)) - 1) <= 1e-14


@settings(max_examples=50, deadline=None)
@given(unit, unit, coord, coord)
def test_unit_modulus_2d(x1, x2, w1, w2):
    assert abs(abs(kernel(FIO2D, [x1, x2], [w1, w2])) - 1) <= 1e-14


@pytest.mark.parametrize("spec", [NUFFT1D, FIO1D])
@settings(max_examples=50, deadline=None)
@given(unit, coord, unit, coord)
def test_residual_vanishes_on_center_lines(spec, x, xi, ca, cb):
    assert abs(residual_phase(spec, ca, xi, ca, cb)) <= 1e-12
    assert abs(residual_phase(spec, x, cb, ca, cb)) <= 1e-12


def test_residual_bilinear_nufft():
    rng = np.random.default_rng(7)
    for _ in range(100):
        x, ca = rng.random(2)
        xi, cb = rng.uniform(-64, 64, 2)
        want = (x - ca) * (cb - xi)
        got = residual_phase(NUFFT1D, x, xi, ca, cb)
        assert got == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("spec,d", [(NUFFT1D, 1), (FIO1D, 1), (FIO2D, 2)])
def test_recentering_identity(spec, d):
    rng = np.random.default_rng(3)
    x, ca = rng.random((2, 50, d))
    xi, cb = rng.uniform(-32, 32, (2, 50, d))
    e = lambda p: np.exp(2j * np.pi * p)
    lhs = kernel(spec, x, xi)
    rhs = (e(phase(spec, ca, xi)) * e(phase(spec, x, cb)) * e(-phase(spec, ca, cb))
           * e(residual_phase(spec, x, xi, ca, cb)))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
