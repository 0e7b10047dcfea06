"""Weyl quantization on T^d and finite-h phase-space diagnostics.

A symbol is stored through its x-Fourier coefficients,
    a(x, xi) = sum_p a_p(xi) e^{i p.x},
and quantized with the midpoint rule
    Op_h(a) e^{i n.x} = sum_p a_p(h (n + p/2)) e^{i (n+p).x}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import ModeSet, TorusField
from .observability import time_integrated_form
from .spectral import EigenSystem, assemble_operator, eigendecompose

XiFun = Callable[[np.ndarray], np.ndarray]


def _const(c):
    return lambda xi: np.full(xi.shape[:-1], c, dtype=complex)


@dataclass(frozen=True)
class Symbol:
    d: int
    terms: dict  # p (tuple) -> callable on xi arrays of shape (..., d)
    xi_support: float | None = None  # sup-norm radius of the xi support, if compact
    tag: str = ""

    # -- constructors ----------------------------------------------------
    @classmethod
    def constant(cls, d, c=1.0):
        return cls(d, {(0,) * d: _const(c)}, None, f"const({c})")

    @classmethod
    def of_x(cls, a: TorusField, tag="a(x)"):
        terms = {}
        for p, c in zip(a.modes.indices, a.coeffs):
            if c != 0:
                terms[tuple(int(v) for v in p)] = _const(complex(c))
        return cls(a.modes.d, terms, None, tag)

    @classmethod
    def of_xi(cls, g: XiFun, d: int, support=None, tag="g(xi)"):
        return cls(d, {(0,) * d: g}, support, tag)

    @classmethod
    def tensor(cls, a: TorusField, g: XiFun, support=None, tag="a(x)g(xi)"):
        terms = {}
        for p, c in zip(a.modes.indices, a.coeffs):
            if c != 0:
                terms[tuple(int(v) for v in p)] = (lambda cc: (lambda xi: cc * g(xi)))(complex(c))
        return cls(a.modes.d, terms, support, tag)

    @classmethod
    def xi_monomial(cls, alpha):
        alpha = tuple(alpha)
        g = lambda xi: np.prod([xi[..., i] ** k for i, k in enumerate(alpha)], axis=0).astype(complex)
        return cls(len(alpha), {(0,) * len(alpha): g}, None, f"xi^{alpha}")

    # -- algebra ---------------------------------------------------------
    def __add__(self, other: "Symbol") -> "Symbol":
        terms = dict(self.terms)
        for p, f in other.terms.items():
            if p in terms:
                f0 = terms[p]
                terms[p] = (lambda a, b: (lambda xi: a(xi) + b(xi)))(f0, f)
            else:
                terms[p] = f
        sup = None if self.xi_support is None or other.xi_support is None else max(self.xi_support, other.xi_support)
        return Symbol(self.d, terms, sup, f"{self.tag}+{other.tag}")

    def scale(self, c) -> "Symbol":
        return Symbol(self.d, {p: (lambda f: (lambda xi: c * f(xi)))(f) for p, f in self.terms.items()}, self.xi_support, self.tag)

    def x_derivative_along(self, F: Callable[[np.ndarray], np.ndarray], tag="") -> "Symbol":
        """Symbol F(xi) . grad_x a, with F returning (..., d)."""
        terms = {}
        for p, f in self.terms.items():
            pv = np.array(p, dtype=float)
            terms[p] = (lambda f, pv: (lambda xi: 1j * (F(xi) @ pv) * f(xi)))(f, pv)
        return Symbol(self.d, terms, self.xi_support, tag or f"F.dx({self.tag})")

    def coefficient(self, p, xi) -> np.ndarray:
        f = self.terms.get(tuple(p))
        xi = np.asarray(xi, float)
        return np.zeros(xi.shape[:-1], complex) if f is None else np.asarray(f(xi), complex)

    def sample(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """a(x, xi) on an outer product of x points (X, d) and xi points (Y, d)."""
        out = np.zeros((len(x), len(xi)), complex)
        for p, f in self.terms.items():
            out += np.exp(1j * x @ np.array(p, float))[:, None] * np.asarray(f(xi), complex)[None, :]
        return out

    def phase_grid(self, Mx: int = 32, Mxi: int = 81, radius: float | None = None):
        r = radius or (self.xi_support or 4.0)
        xs = 2 * np.pi * np.arange(Mx) / Mx
        ks = np.linspace(-r, r, Mxi)
        X = np.stack(np.meshgrid(*([xs] * self.d), indexing="ij"), -1).reshape(-1, self.d)
        K = np.stack(np.meshgrid(*([ks] * self.d), indexing="ij"), -1).reshape(-1, self.d)
        return X, K

    def sup_norm(self, **kw) -> float:
        X, K = self.phase_grid(**kw)
        return float(np.max(np.abs(self.sample(X, K))))

    def is_real(self, tol=1e-12, **kw) -> bool:
        X, K = self.phase_grid(**kw)
        return float(np.max(np.abs(self.sample(X, K).imag), initial=0.0)) <= tol


@dataclass(frozen=True, eq=False)
class QuantizedOperator:
    h: float
    symbol: Symbol
    modes: ModeSet
    matrix: np.ndarray
    dropped_terms: int = 0

    def hermitian_defect(self) -> float:
        M = self.matrix
        return float(np.max(np.abs(M - M.conj().T), initial=0.0))


def weyl_matrix(a: Symbol, h: float, modes: ModeSet, sparse: bool = False):
    idx = modes.indices
    rows, cols, vals = [], [], []
    dropped = 0
    for p, f in a.terms.items():
        pv = np.array(p, dtype=np.int64)
        if np.max(np.abs(pv)) > 2 * modes.N:
            dropped += 1
            continue
        tgt = idx + pv
        ok = modes.contains(tgt)
        src = np.nonzero(ok)[0]
        xi = h * (idx[ok] + pv / 2.0)
        rows.append(modes.flat_index(tgt[ok]))
        cols.append(src)
        vals.append(np.broadcast_to(np.asarray(f(xi), complex), (src.size,)))
    if sparse:
        import scipy.sparse as sp

        if not rows:
            return sp.csr_matrix((modes.size, modes.size), dtype=complex), dropped
        return (
            sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(modes.size,) * 2),
            dropped,
        )
    M = np.zeros((modes.size, modes.size), complex)
    for r, c, v in zip(rows, cols, vals):
        M[r, c] += v
    return M, dropped


def weyl_quantize(a: Symbol, h: float, modes: ModeSet) -> QuantizedOperator:
    if a.d != modes.d:
        raise ValueError("dimension mismatch")
    M, dropped = weyl_matrix(a, h, modes)
    return QuantizedOperator(h, a, modes, M, dropped)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticP:
    """P(xi) = c + b.xi + xi.A xi."""

    c: float
    b: tuple
    A: tuple  # d x d nested tuple

    @property
    def d(self):
        return len(self.b)

    def __call__(self, xi):
        A, b = np.array(self.A, float), np.array(self.b, float)
        return self.c + xi @ b + np.einsum("...i,ij,...j->...", xi, A, xi)

    def grad(self, xi):
        A, b = np.array(self.A, float), np.array(self.b, float)
        return b + xi @ (A + A.T)

    @classmethod
    def laplacian(cls, d):
        return cls(0.0, (0.0,) * d, tuple(tuple(float(i == j) for j in range(d)) for i in range(d)))


def poisson_with_quadratic(a: Symbol, P: QuadraticP) -> Symbol:
    """{a, P} = grad_xi a . grad_x P - grad_x a . grad_xi P = -grad_xi P . grad_x a."""
    return a.x_derivative_along(P.grad).scale(-1.0)


def commutator_check(a: Symbol, P: QuadraticP, h: float, modes: ModeSet, margin: int | None = None) -> float:
    """||[Op a, Op P] - (h/i) Op({a,P})|| / ||Op a|| on interior modes."""
    A = weyl_quantize(a, h, modes).matrix
    D = np.diag(P(h * modes.indices.astype(float)).astype(complex))
    lhs = A @ D - D @ A
    rhs = (h / 1j) * weyl_quantize(poisson_with_quadratic(a, P), h, modes).matrix
    pmax = max((max(abs(v) for v in p) for p in a.terms), default=0)
    margin = pmax if margin is None else margin
    inner = np.nonzero(np.max(np.abs(modes.indices), axis=1) <= modes.N - margin)[0]
    blk = np.ix_(inner, inner)
    na = np.linalg.norm(A[blk], 2)
    res = np.linalg.norm((lhs - rhs)[blk], 2)
    return float(res / na) if na > 0 else float(res)


def modes_for_symbol(a: Symbol, h: float, pad: int = 4) -> ModeSet:
    r = a.xi_support if a.xi_support is not None else 2.0
    return ModeSet(a.d, int(math.ceil(r / h)) + pad)


@dataclass
class GardingRow:
    h: float
    min_eig: float
    C: float


def garding_check(a: Symbol, hs, modes_for=None) -> tuple[list, float]:
    """Min eigenvalue of the Hermitian part of Op_h(a) per h, and the fitted exponent
    of the negative part (nan when no h produces a negative eigenvalue)."""
    X, K = a.phase_grid()
    if np.min(a.sample(X, K).real) < -1e-12:
        raise ValueError("symbol is not nonnegative on the sampling grid")
    modes_for = modes_for or (lambda h: modes_for_symbol(a, h))
    rows = []
    for h in hs:
        M = weyl_quantize(a, h, modes_for(h)).matrix
        lo = float(np.linalg.eigvalsh(0.5 * (M + M.conj().T))[0])
        rows.append(GardingRow(h, lo, max(0.0, -lo) / h))
    neg = [(r.h, -r.min_eig) for r in rows if r.min_eig < -1e-14]
    if len(neg) >= 2:
        hh, dd = np.log([v[0] for v in neg]), np.log([v[1] for v in neg])
        expo = float(np.polyfit(hh, dd, 1)[0])
    else:
        expo = math.nan
    return rows, expo


def calderon_vaillancourt_trend(a: Symbol, hs, modes_for=None):
    """Spectral norms of Op_h(a) and the fit ||Op_h a|| ~ c0 + c1 h^(1/2).

    Returns (rows, c0, c1, sup|a|)."""
    modes_for = modes_for or (lambda h: modes_for_symbol(a, h))
    rows = []
    for h in hs:
        M = weyl_quantize(a, h, modes_for(h)).matrix
        rows.append((h, float(np.linalg.norm(M, 2))))
    hs_ = np.array([r[0] for r in rows])
    ns = np.array([r[1] for r in rows])
    if len(rows) >= 2:
        c1, c0 = np.polyfit(np.sqrt(hs_), ns, 1)
    else:
        c0, c1 = ns[0], 0.0
    return rows, float(c0), float(c1), a.sup_norm()


def h_oscillation_deficit(E: EigenSystem, u: TorusField, h: float, R: float) -> tuple[float, float]:
    """(||1_(R,inf)(h^2 H) u||, ||1_(R,inf)(-h^2 Lap) u||) in L2."""
    t1 = E.apply_function(lambda lam: (h * h * lam > R).astype(float), u).norm()
    lap = np.sum(u.modes.indices**2, axis=1)
    c = np.where(h * h * lap > R, u.coeffs, 0)
    t2 = TorusField(u.modes, c).norm()
    return float(t1), float(t2)


# --------------------------------------------------------------------------
# Wigner pairings


def spectral_window_packet(E: EigenSystem, u: TorusField, h: float, rho: float) -> TorusField:
    """1_[1-rho, 1+rho](h^2 H) u."""
    return E.apply_function(lambda lam: (np.abs(h * h * lam - 1) <= rho).astype(float), u)


def time_averaged_pairing(E: EigenSystem, M: np.ndarray, u0: TorusField, T: float) -> complex:
    """(1/T) int_0^T <M psi(t), psi(t)>_{l2}, psi(t) = e^{-itH} u0, in closed form."""
    a = E.coefficients(u0)
    B = E.vectors.conj().T @ M @ E.vectors
    G = time_integrated_form(E.values, B, T)
    return complex(np.vdot(a, G @ a) / T)


def pairings(E: EigenSystem, M: np.ndarray, u0: TorusField, times) -> np.ndarray:
    a = E.coefficients(u0)
    out = []
    # M may be dense or scipy.sparse
    for t in times:
        c = E.vectors @ (np.exp(-1j * t * E.values) * a)
        out.append(np.vdot(c, M @ c))
    return np.array(out)


@dataclass
class WignerRecord:
    h: float
    rho: float
    T: float
    times: np.ndarray
    symbol_tags: list
    pairing_values: np.ndarray  # (n_symbols, n_times), normalized by ||psi||^2
    x_cells: int
    xi_edges: np.ndarray
    mass_table: np.ndarray  # (x_cells^d, len(xi_edges)+1), fractions of ||psi||^2
    outside_fraction: float
    annulus: tuple
    flow_deficit: float
    flow_constant: float
    C_annulus: float

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "h": self.h,
                "rho": self.rho,
                "T": self.T,
                "binning": {"x_cells": self.x_cells, "xi_edges": [float(e) for e in self.xi_edges], "rho": self.rho, "h": self.h},
                "symbols": self.symbol_tags,
                "times": [float(t) for t in self.times],
                "pairings": [[[float(z.real), float(z.imag)] for z in row] for row in self.pairing_values],
                "mass_table": [[float(v) for v in row] for row in self.mass_table],
                "outside_fraction": self.outside_fraction,
                "annulus": list(self.annulus),
                "flow_deficit": self.flow_deficit,
                "flow_constant": self.flow_constant,
                "C_annulus": self.C_annulus,
            },
            sort_keys=True,
        )


def xi_shell_mass(u: TorusField, h: float, lo: float, hi: float) -> float:
    """<1_{lo <= |xi| < hi}(hD) u, u> / ||u||^2, i.e. Op_h of a xi-only indicator."""
    r = h * np.linalg.norm(u.modes.indices, axis=1)
    w = np.abs(u.coeffs) ** 2
    return float(w[(r >= lo) & (r < hi)].sum() / w.sum())


def flow_deficit(E: EigenSystem, a: Symbol, u0: TorusField, h: float, T: float) -> float:
    """|(1/T) int <Op_h(xi.grad_x a) psi, psi> dt| / ||u0||^2 through the commutator

    Op_h(xi.grad_x a) = -(i / 2h) [Op_h a, Op_h |xi|^2],
    exact because |xi|^2 is quadratic.
    """
    modes = E.modes
    A, _ = weyl_matrix(a, h, modes, sparse=True)
    d2 = h * h * np.sum(modes.indices**2, axis=1)
    M = A.multiply(d2[None, :]) - A.multiply(d2[:, None])
    M = -(1j / (2 * h)) * M.tocsr()
    coef = E.coefficients(u0)
    S = np.nonzero(coef)[0]  # eigen-support of the packet; everything else drops out
    Phi = E.vectors[:, S]
    B = Phi.conj().T @ (M @ Phi)
    G = time_integrated_form(E.values[S], B, T)
    a = coef[S]
    val = np.vdot(a, G @ a) / T
    return float(abs(val) / u0.l2_coeff_norm() ** 2)


def x_cell_weights(d: int, cells: int, order: int) -> list[TorusField]:
    """Fejer-smoothed indicators of the x-cells [2 pi i / cells, 2 pi (i+1) / cells)^d; they sum to 1."""
    from .potentials import fejer_weights, interval_coefficients

    w = fejer_weights(order)
    one_d = [interval_coefficients(2 * np.pi * i / cells, 2 * np.pi * (i + 1) / cells, order) * w for i in range(cells)]
    out = []
    if d == 1:
        for c in one_d:
            out.append(TorusField(ModeSet(1, order), c))
    else:
        for c1 in one_d:
            for c2 in one_d:
                out.append(TorusField(ModeSet(2, order), np.outer(c1, c2).reshape(-1)))
    return out


def wigner_scan(
    E: EigenSystem,
    u0: TorusField,
    h: float,
    rho: float,
    T: float,
    symbols: list[Symbol],
    flow_symbol: Symbol | None = None,
    times=None,
    x_cells: int = 2,
    x_order: int = 8,
    xi_edges=None,
    C_annulus: float = 2.0,
) -> WignerRecord:
    if u0.l2_coeff_norm() == 0:
        raise ValueError("rank-0 packet")
    times = np.linspace(0, T, 5) if times is None else np.asarray(times, float)
    norm2 = u0.l2_coeff_norm() ** 2
    vals = []
    for a in symbols:
        M, _ = weyl_matrix(a, h, E.modes, sparse=True)
        vals.append(pairings(E, M, u0, times) / norm2)
    # phase-space mass: smooth x-cells times sharp |xi| shells, averaged over the time grid
    xi_edges = np.array([1 - 2 * rho, 1 + 2 * rho] if xi_edges is None else xi_edges, float)
    edges = np.concatenate([[0.0], xi_edges, [np.inf]])
    table = np.zeros((x_cells**E.modes.d, edges.size - 1))
    for i, wx in enumerate(x_cell_weights(E.modes.d, x_cells, x_order)):
        for j in range(edges.size - 1):
            g = (lambda lo, hi: (lambda xi: ((np.linalg.norm(xi, axis=-1) >= lo) & (np.linalg.norm(xi, axis=-1) < hi)).astype(complex)))(edges[j], edges[j + 1])
            Mx, _ = weyl_matrix(Symbol.tensor(wx, g), h, E.modes, sparse=True)
            table[i, j] = float(np.mean(pairings(E, Mx, u0, times).real) / norm2)
    lo, hi = 1 - 2 * rho - C_annulus * h, 1 + 2 * rho + C_annulus * h
    outside = 0.0
    for t in times:
        from .propagator import evolve

        outside = max(outside, 1.0 - xi_shell_mass(evolve(E, u0, t), h, lo, hi))
    fd = flow_deficit(E, flow_symbol, u0, h, T) if flow_symbol is not None else math.nan
    return WignerRecord(
        h, rho, T, times, [s.tag for s in symbols], np.array(vals), x_cells, xi_edges, table,
        float(outside), (lo, hi), float(fd), float(fd / (h + rho)) if flow_symbol is not None else math.nan, C_annulus,
    )


# --------------------------------------------------------------------------
# rational directions: z = F(x) = x1 zeta_perp + x2 zeta


@dataclass(frozen=True, eq=False)
class RotatedField:
    """Field on the torus (A Z)^2, A = 2 pi r, with frequencies j / r for integer j."""

    p: int
    q: int
    indices: np.ndarray  # (P, 2) integer j
    coeffs: np.ndarray

    @property
    def r(self) -> float:
        return math.hypot(self.p, self.q)

    @property
    def period(self) -> float:
        return 2 * np.pi * self.r

    def lookup(self) -> dict:
        return {tuple(int(v) for v in j): c for j, c in zip(self.indices, self.coeffs)}

    def l2_coeff_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def mean_square_norm(self) -> float:
        """(|box|^-1 int |u|^2)^(1/2), equal to the coefficient l2 norm."""
        return self.l2_coeff_norm()


def rotation_matrix(p: int, q: int) -> np.ndarray:
    """Integer matrix j = Rn with j / r the frequency of F^* e^{i n.z}."""
    return np.array([[q, -p], [p, q]], dtype=np.int64)


def rotate_to_rational_direction(u: TorusField, p: int, q: int):
    """Pull back by F(x) = x1 zeta_perp + x2 zeta, zeta = (p,q)/r, zeta_perp = (q,-p)/r.

    Returns the rotated field and the map theta -> F^{-1} theta."""
    if u.modes.d != 2:
        raise ValueError("rotation needs d=2")
    if math.gcd(p, q) != 1:
        raise ValueError("(p, q) must be coprime")
    R = rotation_matrix(p, q)
    j = u.modes.indices @ R.T
    rot = RotatedField(p, q, j, u.coeffs.copy())
    return rot


def rotate_theta(theta, p: int, q: int) -> np.ndarray:
    r = math.hypot(p, q)
    return rotation_matrix(p, q) @ np.asarray(theta, float) / r


def rotated_operator(u_like: RotatedField, theta_rot, V_rot: RotatedField | None) -> np.ndarray:
    """-Lap + 2i theta'.grad + |theta'|^2 + V' on the frequencies j / r of u_like."""
    j = u_like.indices
    r = u_like.r
    H = np.zeros((len(j), len(j)), complex)
    H[np.diag_indices_from(H)] = np.sum((j / r - np.asarray(theta_rot)) ** 2, axis=1)
    if V_rot is not None:
        table = V_rot.lookup()
        pos = {tuple(int(v) for v in row): i for i, row in enumerate(j)}
        for a, ja in enumerate(j):
            for key, c in table.items():
                b = pos.get((int(ja[0] - key[0]), int(ja[1] - key[1])))
                if b is not None:
                    H[a, b] += c
    return H


def rotation_conjugation_defect(u: TorusField, V: TorusField | None, theta, p: int, q: int, t: float) -> float:
    """|| rotate(e^{-itH} u) - e^{-itH'} rotate(u) || in coefficient l2."""
    from .propagator import evolve

    E = eigendecompose(assemble_operator(u.modes, theta, V))
    lhs = rotate_to_rational_direction(evolve(E, u, t), p, q)
    ru = rotate_to_rational_direction(u, p, q)
    Vr = rotate_to_rational_direction(V.resample(ModeSet(2, max(V.modes.N, 1))), p, q) if V is not None else None
    Hr = rotated_operator(ru, rotate_theta(theta, p, q), Vr)
    vals, vecs = np.linalg.eigh(Hr)
    rhs = vecs @ (np.exp(-1j * t * vals) * (vecs.conj().T @ ru.coeffs))
    return float(np.linalg.norm(lhs.coeffs - rhs))
