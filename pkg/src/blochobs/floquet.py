"""Discrete Floquet-Bloch transform on a K-cell periodic box [0, 2 pi K]^d.

A big-domain field is u(x) = sum_m c_m exp(i m.x / K).  We index the
frequencies as m = K n - j with n in the cell mode set and j in {0..K-1}^d,
so coefficients are stored as an array c[j, n].  With theta_j = j / K,

    Fu(y, theta_j)  = sum_k exp(2 i pi theta_j.k) u(y + 2 pi k)
    F~u(y, theta_j) = exp(i theta_j.y) Fu(y, theta_j) = K^d sum_n c[j, n] e^{i n.y},

and ||u||^2 = K^-d sum_j ||F~u(., theta_j)||^2.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import ModeSet, TorusField
from .observability import LAMBDA_FLOOR, gramian, observability_constant, time_integrated_form
from .spectral import assemble_operator, eigendecompose


def theta_grid(d: int, K: int) -> np.ndarray:
    """All j in {0..K-1}^d in lex order."""
    return np.array(list(itertools.product(range(K), repeat=d)), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class CellLattice:
    K: int
    cell_modes: ModeSet
    coeffs: np.ndarray  # shape (K^d, cell size)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (self.K**self.d, self.cell_modes.size):
            raise ValueError("coefficient array does not match K and the cell mode set")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.cell_modes.d

    @property
    def dof(self) -> int:
        return self.coeffs.size

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Integer m (frequency m/K) for each stored coefficient, flattened in (j, n) order."""
        J = theta_grid(self.d, self.K)
        n = self.cell_modes.indices
        return (self.K * n[None, :, :] - J[:, None, :]).reshape(-1, self.d)

    @classmethod
    def random(cls, K: int, cell_modes: ModeSet, rng: np.random.Generator):
        shape = (K**cell_modes.d, cell_modes.size)
        return cls(K, cell_modes, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    @classmethod
    def plane_wave(cls, K: int, cell_modes: ModeSet, m) -> "CellLattice":
        m = np.atleast_1d(np.asarray(m, dtype=np.int64))
        j = (-m) % K
        n = (m + j) // K
        c = np.zeros((K**cell_modes.d, cell_modes.size), complex)
        if not cell_modes.contains(n):
            raise ValueError("frequency not representable")
        jflat = int(np.ravel_multi_index(tuple(j), (K,) * cell_modes.d))
        c[jflat, cell_modes.flat_index(n)] = 1.0
        return cls(K, cell_modes, c)

    def norm(self) -> float:
        return float((2 * np.pi * self.K) ** (self.d / 2) * np.linalg.norm(self.coeffs))

    # -- sampled representation ---------------------------------------------
    def grid_size(self, M: int | None = None) -> int:
        M = M or 2 * self.cell_modes.N + 2
        if M < 2 * self.cell_modes.N + 1:
            raise ValueError("per-cell grid too coarse")
        return M

    def big_grid_values(self, M: int | None = None) -> np.ndarray:
        """u at x = 2 pi i / M, i in 0 .. K M - 1 per axis."""
        M = self.grid_size(M)
        L = self.K * M
        A = np.zeros((L,) * self.d, complex)
        pos = self.frequencies % L
        A[tuple(pos.T)] = self.coeffs.reshape(-1)
        return np.fft.ifftn(A) * L**self.d

    def to_cells(self, M: int | None = None) -> np.ndarray:
        """Array (K^d, M^d): the restriction of u to each cell 2 pi k + [0, 2 pi)^d."""
        M = self.grid_size(M)
        U = self.big_grid_values(M)
        out = []
        for k in theta_grid(self.d, self.K):
            sl = tuple(slice(ki * M, (ki + 1) * M) for ki in k)
            out.append(U[sl].reshape(-1))
        return np.array(out)

    @classmethod
    def from_cells(cls, cells: np.ndarray, K: int, cell_modes: ModeSet) -> "CellLattice":
        d = cell_modes.d
        M = round(cells.shape[1] ** (1.0 / d))
        L = K * M
        U = np.zeros((L,) * d, complex)
        for row, k in zip(cells, theta_grid(d, K)):
            sl = tuple(slice(ki * M, (ki + 1) * M) for ki in k)
            U[sl] = row.reshape((M,) * d)
        F = np.fft.fftn(U) / L**d
        tmp = cls(K, cell_modes, np.zeros((K**d, cell_modes.size)))
        pos = tmp.frequencies % L
        return cls(K, cell_modes, F[tuple(pos.T)].reshape(K**d, cell_modes.size))


@dataclass(frozen=True, eq=False)
class FloquetArray:
    K: int
    d: int
    fibers: tuple  # TorusField per theta_j, storing the periodic factor F~u
    modified: bool = True

    @property
    def thetas(self) -> np.ndarray:
        return theta_grid(self.d, self.K) / self.K

    def fiber_values(self, j: int, M: int) -> np.ndarray:
        """Samples of the fiber on the cell grid (F~u if modified, else Fu)."""
        vals = self.fibers[j].grid_values(M)
        if self.modified:
            return vals.reshape(-1)
        axes = [2 * np.pi * np.arange(M) / M] * self.d
        Y = np.meshgrid(*axes, indexing="ij")
        phase = sum(t * y for t, y in zip(self.thetas[j], Y))
        return (np.exp(-1j * phase) * vals).reshape(-1)

    def total_norm_sq(self) -> float:
        return float(sum(f.norm() ** 2 for f in self.fibers))

    def to_json(self) -> str:
        return json.dumps(
            {
                "K": self.K,
                "d": self.d,
                "fibers": [
                    {"theta": [float(t) for t in th], "field": json.loads(f.to_json())}
                    for th, f in zip(self.thetas, self.fibers)
                ],
            }
        )


def floquet_forward(u: CellLattice, modified: bool = True) -> FloquetArray:
    scale = u.K**u.d
    fibers = tuple(TorusField(u.cell_modes, scale * row) for row in u.coeffs)
    return FloquetArray(u.K, u.d, fibers, modified)


def floquet_inverse(F: FloquetArray) -> CellLattice:
    if len(F.fibers) != F.K**F.d:
        raise ValueError("fiber count does not match the cell lattice")
    modes = F.fibers[0].modes
    c = np.array([f.coeffs for f in F.fibers]) / F.K**F.d
    return CellLattice(F.K, modes, c)


def floquet_direct(u: CellLattice, M: int | None = None, modified: bool = True) -> np.ndarray:
    """Fibers from the defining sum over cells, sampled on the cell grid.

    Independent of the coefficient bookkeeping in floquet_forward; used as an oracle.
    """
    cells = u.to_cells(M)
    M = u.grid_size(M)
    J = theta_grid(u.d, u.K)
    ks = theta_grid(u.d, u.K)
    axes = [2 * np.pi * np.arange(M) / M] * u.d
    Y = np.meshgrid(*axes, indexing="ij")
    out = []
    for j in J:
        th = j / u.K
        acc = sum(np.exp(2j * np.pi * th @ k) * cells[i] for i, k in enumerate(ks))
        if modified:
            acc = acc * np.exp(1j * sum(t * y for t, y in zip(th, Y))).reshape(-1)
        out.append(acc)
    return np.array(out)


# --------------------------------------------------------------------------
# big-domain operator, assembled directly on the frequencies m / K


def big_domain_matrix(u: CellLattice, V: TorusField | None = None, weight_only: bool = False) -> np.ndarray:
    """Galerkin matrix of -Laplacian + V (or of multiplication by V) on the big box."""
    m = u.frequencies
    K = u.K
    diff = m[:, None, :] - m[None, :, :]
    H = np.zeros(diff.shape[:2], complex)
    if V is not None:
        ok = np.all(diff % K == 0, axis=-1)
        p = diff // K
        ok &= np.all(np.abs(p) <= V.modes.N, axis=-1)
        H[ok] = V.coeffs[V.modes.flat_index(p[ok])]
    if not weight_only:
        H[np.diag_indices_from(H)] += np.sum((m / K) ** 2, axis=1)
    return H


def check_intertwine(u: CellLattice, V: TorusField | None = None) -> float:
    """max_j || F~((-Lap + V) u)(., theta_j) - H_{theta_j,V} F~u(., theta_j) ||."""
    Hbig = big_domain_matrix(u, V)
    Hu = CellLattice(u.K, u.cell_modes, (Hbig @ u.coeffs.reshape(-1)).reshape(u.coeffs.shape))
    lhs = floquet_forward(Hu)
    rhs = floquet_forward(u)
    worst = 0.0
    for j, th in enumerate(rhs.thetas):
        Hj = assemble_operator(u.cell_modes, th, V)
        r = lhs.fibers[j] - Hj.apply(rhs.fibers[j])
        worst = max(worst, r.norm())
    return worst


def big_domain_evolve(u: CellLattice, V: TorusField | None, t: float, sign: float = -1.0) -> CellLattice:
    vals, vecs = np.linalg.eigh(big_domain_matrix(u, V))
    c = vecs @ (np.exp(1j * sign * t * vals) * (vecs.conj().T @ u.coeffs.reshape(-1)))
    return CellLattice(u.K, u.cell_modes, c.reshape(u.coeffs.shape))


@dataclass
class LiftReport:
    lhs: float
    rhs: float
    gap: float
    fiber_terms: list


def lift_identity(u0: CellLattice, V: TorusField | None, b: TorusField, T: float) -> LiftReport:
    """Observation integral on the big box versus the K^-d weighted sum of fiber integrals."""
    d, K = u0.d, u0.K
    # big box: eigen-propagation of the full matrix, closed-form time integral
    vals, vecs = np.linalg.eigh(big_domain_matrix(u0, V))
    Mb = big_domain_matrix(u0, b, weight_only=True)
    B = vecs.conj().T @ Mb @ vecs
    a = vecs.conj().T @ u0.coeffs.reshape(-1)
    G = time_integrated_form(vals, B, T)
    lhs = float((2 * np.pi * K) ** d * np.real(np.vdot(a, G @ a)))
    # fibers
    F = floquet_forward(u0)
    terms = []
    for th, f in zip(F.thetas, F.fibers):
        E = eigendecompose(assemble_operator(u0.cell_modes, th, V))
        terms.append(gramian(E, b, T).form(f))
    rhs = float(sum(terms) / K**d)
    return LiftReport(lhs, rhs, abs(lhs - rhs) / max(abs(lhs), 1e-300), terms)


@dataclass
class PlaneCertificate:
    constant: float
    valid: bool
    fiber_constants: list
    worst_fiber: int
    probe_ratios: list

    @property
    def holds(self) -> bool:
        return self.valid and all(r <= self.constant * (1 + 1e-9) for r in self.probe_ratios)


def lift_observability(K: int, cell_modes: ModeSet, V, b: TorusField, T: float, probes=()) -> PlaneCertificate:
    """C = max_j C(theta_j), checked against ||u0||^2 / (observation integral) on probes."""
    consts = []
    for j in theta_grid(cell_modes.d, K):
        E = eigendecompose(assemble_operator(cell_modes, j / K, V))
        rep = observability_constant(gramian(E, b, T))
        consts.append(rep.c_obs)
    valid = all(math.isfinite(c) for c in consts)
    cert = max(consts)
    ratios = []
    for u0 in probes:
        rep = lift_identity(u0, V, b, T)
        ratios.append(u0.norm() ** 2 / rep.lhs)
    return PlaneCertificate(cert, valid, consts, int(np.argmax(consts)), ratios)


def worst_fiber_datum(K: int, cell_modes: ModeSet, V, b, T: float, j: int) -> CellLattice:
    """Big-domain datum living in fiber j only, equal there to its extremal Gramian vector."""
    th = theta_grid(cell_modes.d, K)[j] / K
    E = eigendecompose(assemble_operator(cell_modes, th, V))
    rep = observability_constant(gramian(E, b, T))
    c = np.zeros((K**cell_modes.d, cell_modes.size), complex)
    c[j] = rep.vector
    return CellLattice(K, cell_modes, c)


__all__ = [
    "CellLattice",
    "FloquetArray",
    "LAMBDA_FLOOR",
    "floquet_forward",
    "floquet_inverse",
    "floquet_direct",
    "check_intertwine",
    "lift_identity",
    "lift_observability",
    "big_domain_evolve",
    "theta_grid",
]
