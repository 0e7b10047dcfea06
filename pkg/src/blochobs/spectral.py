"""The Bloch-shifted operator H_theta,V = -Laplacian + 2i theta.grad + |theta|^2 + V on T^d.

On exp(i n.x) the free part acts by |n - theta|^2, so in the Fourier basis the
Galerkin matrix is  H[n, m] = |n - theta|^2 delta_nm + V^(n - m).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable

import numpy as np

from .fields import ModeSet, TorusField, toeplitz_matrix

HERMITIAN_TOL = 1e-12


def as_theta(theta, d: int) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    if th.shape != (d,):
        raise ValueError(f"theta must have {d} components")
    if np.any(th < 0) or np.any(th > 1):
        raise ValueError("theta components must lie in [0, 1]")
    th.setflags(write=False)
    return th


def free_symbol(modes: ModeSet, theta) -> np.ndarray:
    return np.sum((modes.indices - np.asarray(theta)) ** 2, axis=1).astype(float)


@dataclass(frozen=True, eq=False)
class BlochOperator:
    modes: ModeSet
    theta: np.ndarray
    potential: TorusField | None = None

    @property
    def is_diagonal(self) -> bool:
        return self.potential is None or not np.any(self.potential.coeffs)

    @cached_property
    def diagonal(self) -> np.ndarray:
        diag = free_symbol(self.modes, self.theta)
        if self.potential is not None:
            diag = diag + self.potential.coefficient((0,) * self.modes.d).real
        return diag

    @cached_property
    def matrix(self) -> np.ndarray:
        if self.is_diagonal:
            H = np.diag(self.diagonal.astype(complex))
        else:
            H = toeplitz_matrix(self.potential, self.modes)
            H[np.diag_indices_from(H)] += free_symbol(self.modes, self.theta)
        H.setflags(write=False)
        return H

    def sparse_matrix(self):
        import scipy.sparse as sp

        D = sp.diags(free_symbol(self.modes, self.theta).astype(complex))
        if self.is_diagonal:
            return D.tocsr()
        return (D + toeplitz_matrix(self.potential, self.modes, sparse=True)).tocsr()

    def diagonal_entry(self, n, exact: bool = False):
        """|n - theta|^2 (+ V^(0)) for a single frequency, without building the matrix.

        With exact=True the value is a Fraction computed from the binary values
        of theta, so differences of large entries lose nothing to rounding.
        """
        n = [int(v) for v in np.atleast_1d(n)]
        if max(abs(v) for v in n) > self.modes.N:
            raise ValueError("frequency outside the mode set")
        v0 = self.potential.coefficient((0,) * self.modes.d).real if self.potential is not None else 0.0
        if exact:
            val = sum((Fraction(a) - Fraction(float(t))) ** 2 for a, t in zip(n, self.theta))
            return val + Fraction(v0)
        return float(sum((a - t) ** 2 for a, t in zip(n, self.theta)) + v0)

    def apply(self, u: TorusField) -> TorusField:
        if u.modes != self.modes:
            raise ValueError("mode-set mismatch")
        return TorusField(self.modes, self.matrix @ u.coeffs)


def assemble_operator(modes: ModeSet, theta, V: TorusField | None = None) -> BlochOperator:
    th = as_theta(theta, modes.d)
    if V is not None:
        if V.modes.d != modes.d:
            raise ValueError("potential lives on a different dimension than the mode set")
        scale = max(1.0, float(np.max(np.abs(V.coeffs), initial=0.0)))
        if not V.is_real(1e-10 * scale):
            raise ValueError("potential must be real-valued")
    return BlochOperator(modes, th, V)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    modes: ModeSet
    theta: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    operator: BlochOperator | None = field(default=None, repr=False)

    def __post_init__(self):
        for a in (self.values, self.vectors):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.values.size

    def coefficients(self, u: TorusField) -> np.ndarray:
        """Eigen-coordinates <psi_k, u> in coefficient l2."""
        if u.modes != self.modes:
            raise ValueError("mode-set mismatch")
        return self.vectors.conj().T @ u.coeffs

    def synthesize(self, a: np.ndarray) -> TorusField:
        return TorusField(self.modes, self.vectors @ a)

    def eigenfunction(self, k: int) -> TorusField:
        return TorusField(self.modes, self.vectors[:, k])

    def apply_function(self, g: Callable, u: TorusField) -> TorusField:
        return self.synthesize(np.asarray(g(self.values)) * self.coefficients(u))

    def residual(self) -> float:
        H = self.operator.matrix
        return float(np.linalg.norm(H @ self.vectors - self.vectors * self.values, 2))


def eigendecompose(H: BlochOperator) -> EigenSystem:
    if H.is_diagonal:
        order = np.argsort(H.diagonal, kind="stable")
        vecs = np.zeros((H.modes.size, H.modes.size), complex)
        vecs[order, np.arange(order.size)] = 1.0
        return EigenSystem(H.modes, H.theta, H.diagonal[order].copy(), vecs, H)
    M = H.matrix
    asym = np.max(np.abs(M - M.conj().T))
    if asym > HERMITIAN_TOL * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"operator is not Hermitian (defect {asym:.2e})")
    vals, vecs = np.linalg.eigh(M)
    return EigenSystem(H.modes, H.theta, vals, vecs, H)


def functional_calculus(E: EigenSystem, g: Callable) -> np.ndarray:
    """Matrix Phi g(Lambda) Phi^*."""
    gv = np.asarray(g(E.values))
    if not np.all(np.isfinite(gv)):
        raise ValueError("g is not finite on the spectrum")
    return (E.vectors * gv) @ E.vectors.conj().T


def sobolev_norm(E: EigenSystem, u: TorusField, s: float) -> float:
    a = E.coefficients(u)
    w = (1.0 + E.values**2) ** (s / 2)
    return float(np.sqrt(np.sum(w * np.abs(a) ** 2)))


def fourier_sobolev_norm(u: TorusField, s: float) -> float:
    w = (1.0 + np.sum(u.modes.indices**2, axis=1)) ** s
    return float(np.sqrt(np.sum(w * np.abs(u.coeffs) ** 2)))


def check_norm_equivalence(E: EigenSystem, s: float, samples) -> tuple[float, float]:
    """Extremal ratios sobolev_norm / Fourier-side H^s norm over the samples."""
    r = [sobolev_norm(E, u, s) / fourier_sobolev_norm(u, s) for u in samples]
    return float(min(r)), float(max(r))


def resolvent_apply(H: BlochOperator, lam: complex, f: TorusField) -> TorusField:
    """Solve (lam I + i H) u = f."""
    if f.modes != H.modes:
        raise ValueError("mode-set mismatch")
    if lam.real <= 0:
        # i H has purely imaginary spectrum; reject lam sitting on -i * spectrum
        ev = np.linalg.eigvalsh(H.matrix)
        if np.min(np.abs(lam + 1j * ev)) < 1e-12:
            raise ValueError("lambda lies on -i * spectrum")
    A = lam * np.eye(H.modes.size) + 1j * H.matrix
    u = np.linalg.solve(A, f.coeffs)
    res = np.linalg.norm(A @ u - f.coeffs)
    if res > 1e-9 * max(np.linalg.norm(f.coeffs), 1e-300):
        raise RuntimeError(f"resolvent residual too large: {res:.2e}")
    return TorusField(H.modes, u)
