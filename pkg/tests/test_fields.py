import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blochobs.fields import ModeSet, TorusField, lp_norm, multiply, toeplitz_matrix


def test_modeset_lex_order_and_index():
    m = ModeSet(2, 1)
    assert m.indices.tolist()[:4] == [[-1, -1], [-1, 0], [-1, 1], [0, -1]]
    for i, n in enumerate(m.indices):
        assert m.flat_index(n) == i
    assert m.size == 9


def test_plane_wave_outside_rejected():
    with pytest.raises(ValueError):
        TorusField.plane_wave(ModeSet(1, 2), (3,))


def test_l4_of_unimodular_and_binomial():
    m = ModeSet(1, 2)
    assert lp_norm(TorusField.plane_wave(m, (1,)), 4) == pytest.approx((2 * np.pi) ** 0.25, rel=1e-14)
    u = TorusField.from_dict(m, {(0,): 1, (1,): 1})
    # |1+e^{ix}|^4 = 6 + 8cos x + 2cos 2x
    assert lp_norm(u, 4) ** 4 == pytest.approx(12 * np.pi, rel=1e-13)


def test_lp_rejects_small_p():
    with pytest.raises(ValueError):
        lp_norm(TorusField.zeros(ModeSet(1, 1)), 0.5)


def test_multiply_cos_plane_wave():
    m = ModeSet(1, 1)
    c = TorusField.from_dict(m, {(1,): 0.5, (-1,): 0.5})
    p = multiply(c, TorusField.plane_wave(m, (1,)))
    assert p.coefficient((2,)) == pytest.approx(0.5)
    assert p.coefficient((0,)) == pytest.approx(0.5)
    assert abs(p.coefficient((1,))) < 1e-15


def test_l2_norm_parseval(rng):
    u = TorusField.random(ModeSet(2, 3), rng)
    assert lp_norm(u, 2) == pytest.approx(2 * np.pi * np.linalg.norm(u.coeffs))
    # quadrature agrees with Parseval
    g = u.grid_values(32)
    assert math.sqrt((2 * np.pi / 32) ** 2 * np.sum(np.abs(g) ** 2)) == pytest.approx(u.norm(), rel=1e-12)


@given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_serialization_roundtrips(d, N, seed):
    u = TorusField.random(ModeSet(d, N), np.random.default_rng(seed))
    v = TorusField.from_json(u.to_json())
    w = TorusField.from_bytes(u.to_bytes())
    assert np.array_equal(u.coeffs, v.coeffs) and np.array_equal(u.coeffs, w.coeffs)
    assert u.digest() == w.digest()


@given(st.integers(0, 2**32 - 1))
def test_multiply_matches_pointwise_product(seed):
    r = np.random.default_rng(seed)
    a = TorusField.random(ModeSet(2, 2), r)
    u = TorusField.random(ModeSet(2, 3), r)
    p = multiply(a, u)
    M = 4 * p.modes.N + 2
    assert np.allclose(p.grid_values(M), a.grid_values(M) * u.grid_values(M), atol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_l4_exact_matches_fine_grid(seed):
    u = TorusField.random(ModeSet(2, 2), np.random.default_rng(seed))
    g = u.grid_values(64)
    quad = ((2 * np.pi / 64) ** 2 * np.sum(np.abs(g) ** 4)) ** 0.25
    assert lp_norm(u, 4) == pytest.approx(quad, rel=1e-12)


def test_toeplitz_is_truncated_multiplication(rng):
    a = TorusField.random(ModeSet(1, 2), rng)
    m = ModeSet(1, 5)
    u = TorusField.random(m, rng)
    direct = multiply(a, u).resample(m)
    assert np.allclose(toeplitz_matrix(a, m) @ u.coeffs, direct.coeffs, atol=1e-13)
    assert np.allclose(toeplitz_matrix(a, m, sparse=True).toarray(), toeplitz_matrix(a, m))
