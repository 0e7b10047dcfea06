import numpy as np
import pytest
from hypothesis import given, strategies as st

from blochobs.fields import ModeSet, TorusField
from blochobs.potentials import from_tag
from blochobs.spectral import (
    assemble_operator,
    check_norm_equivalence,
    eigendecompose,
    functional_calculus,
    resolvent_apply,
    sobolev_norm,
)


def test_free_spectrum_d1():
    E = eigendecompose(assemble_operator(ModeSet(1, 2), (0.0,)))
    assert E.values.tolist() == [0, 1, 1, 4, 4]


def test_half_theta_degenerate():
    E = eigendecompose(assemble_operator(ModeSet(1, 1), (0.5,)))
    assert np.allclose(E.values, [0.25, 0.25, 2.25])


def test_quadratic_form_oracle():
    m = ModeSet(2, 3)
    th = np.array([0.3, 0.7])
    V = from_tag("cosx_cosy", 2)
    H = assemble_operator(m, th, V)
    # <H e_n, e_m> from |grad|^2-type form and V's Fourier coefficients, built entry by entry
    Q = np.zeros((m.size, m.size), complex)
    for i, n in enumerate(m.indices):
        for j, k in enumerate(m.indices):
            val = np.sum((n - th) ** 2) if i == j else 0.0
            diff = n - k
            if np.all(np.abs(diff) <= 1):
                val += V.coefficient(diff)
            Q[i, j] = val
    assert np.max(np.abs(H.matrix - Q)) < 1e-15
    assert np.allclose(np.linalg.eigvalsh(Q), eigendecompose(H).values, atol=1e-12)


def test_mathieu_refinement():
    V = from_tag("cosx", 1).scale(2.0)
    lo4 = eigendecompose(assemble_operator(ModeSet(1, 4), (0.0,), V)).values[0]
    lo16 = eigendecompose(assemble_operator(ModeSet(1, 16), (0.0,), V)).values[0]
    assert abs(lo4 - lo16) < 1e-6


def test_non_real_potential_rejected():
    V = TorusField.plane_wave(ModeSet(1, 1), (1,))
    with pytest.raises(ValueError):
        assemble_operator(ModeSet(1, 3), (0.0,), V)
    with pytest.raises(ValueError):
        assemble_operator(ModeSet(1, 3), (1.5,))


@given(st.floats(0, 1), st.floats(0, 1))
def test_diagonalization(t1, t2):
    E = eigendecompose(assemble_operator(ModeSet(2, 2), (t1, t2), from_tag("cosx_cosy", 2)))
    H = E.operator.matrix
    D = E.vectors.conj().T @ H @ E.vectors
    assert np.max(np.abs(D - np.diag(E.values))) < 1e-9
    assert np.all(np.diff(E.values) >= 0)


def test_functional_calculus_examples():
    E = eigendecompose(assemble_operator(ModeSet(1, 4), (0.3,), from_tag("cosx", 1)))
    assert np.allclose(functional_calculus(E, np.ones_like), np.eye(E.dim), atol=1e-12)
    assert np.allclose(functional_calculus(E, lambda x: x), E.operator.matrix, atol=1e-10)
    R = 0.5 * (E.values[3] + E.values[4])
    P = functional_calculus(E, lambda x: (x > R).astype(float))
    assert np.allclose(P @ P, P, atol=1e-10)
    assert np.linalg.matrix_rank(P, tol=1e-8) == E.dim - 4


def test_sobolev_examples(rng):
    E = eigendecompose(assemble_operator(ModeSet(1, 8), (0.3,), from_tag("cosx", 1)))
    u = TorusField.random(E.modes, rng)
    assert sobolev_norm(E, u, 0) == pytest.approx(u.norm() / np.sqrt(2 * np.pi))
    psi = E.eigenfunction(0)
    assert sobolev_norm(E, psi, -2) == pytest.approx((1 + E.values[0] ** 2) ** -0.5)


def test_norm_equivalence_uniform_window(rng):
    windows = []
    for th in (0.3, 0.7):
        E = eigendecompose(assemble_operator(ModeSet(1, 8), (th,), from_tag("cosx", 1)))
        samples = [TorusField.random(E.modes, rng) for _ in range(100)]
        windows.append(check_norm_equivalence(E, -2, samples))
    lo = min(w[0] for w in windows)
    hi = max(w[1] for w in windows)
    assert 0 < lo <= hi < 10


def test_resolvent_examples(rng):
    m = ModeSet(2, 2)
    H0 = assemble_operator(m, (0.3, 0.7))
    f = TorusField.plane_wave(m, (1, -1))
    u = resolvent_apply(H0, 1.0 + 0j, f)
    assert u.coefficient((1, -1)) == pytest.approx(1 / (1 + 1j * np.sum((np.array([1, -1]) - [0.3, 0.7]) ** 2)))
    H = assemble_operator(m, (0.3, 0.7), from_tag("cosx_cosy", 2))
    E = eigendecompose(H)
    f = TorusField.random(m, rng)
    u = resolvent_apply(H, 1.0 + 0j, f)
    ref = E.apply_function(lambda lam: 1 / (1 + 1j * lam), f)
    assert np.allclose(u.coeffs, ref.coeffs, atol=1e-10)
    with pytest.raises(ValueError):
        resolvent_apply(H0, -1j * E.operator.diagonal[0] * 0 - 1j * np.sum((np.array([0, 0]) - [0.3, 0.7]) ** 2), f)


def test_resolvent_convergence_under_mollification(rng):
    from blochobs.potentials import smoothed_indicator

    m = ModeSet(1, 10)
    f = TorusField.random(m, rng)
    target = resolvent_apply(assemble_operator(m, (0.4,), smoothed_indicator(1, 0.0, np.pi, 10)), 1.0 + 0j, f)
    errs = []
    for r, th in ((2, 0.1), (4, 0.25), (6, 0.35), (8, 0.39)):
        u = resolvent_apply(assemble_operator(m, (th,), smoothed_indicator(1, 0.0, np.pi, r)), 1.0 + 0j, f)
        errs.append((u - target).norm())
    assert all(a > b for a, b in zip(errs, errs[1:]))
