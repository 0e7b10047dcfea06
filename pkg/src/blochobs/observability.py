"""Observation Gramians, observability constants, HUM controls and frequency cutoffs.

For u(t) = e^{-itH} u0 with eigen-coordinates a = Phi^* u0,

    int_0^T int b |u|^2 dx dt = (2 pi)^d  a^* G a,
    G_jk = B_jk tau(lam_j - lam_k, T),   B = Phi^* M_b Phi,
    tau(w, T) = int_0^T e^{iwt} dt.

The (2 pi)^d cancels against ||u0||^2 = (2 pi)^d |a|^2, so C_obs = 1 / lam_min(G).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import ModeSet, TorusField, toeplitz_matrix
from .propagator import SourceTerm, evolve_inhomogeneous, gauss_panels
from .spectral import EigenSystem

LAMBDA_FLOOR = 1e-13


def tau(omega, T: float) -> np.ndarray:
    """(e^{i w T} - 1)/(i w) = T e^{i w T/2} sinc(w T/2), evaluated in the sinc form.

    The sinc form has no cancellation near w = 0, where near-degenerate
    eigenvalue pairs put most of the weight.
    """
    z = np.asarray(omega, dtype=float) * T
    return T * np.exp(0.5j * z) * np.sinc(z / (2 * np.pi))


def time_integrated_form(values: np.ndarray, B: np.ndarray, T: float) -> np.ndarray:
    return B * tau(values[:, None] - values[None, :], T)


def check_weight(b: TorusField, tol: float = 1e-10):
    if not b.is_real(1e-10 * max(1.0, np.abs(b.coeffs).max(initial=0.0))):
        raise ValueError("weight must be real-valued")
    vals = b.grid_values(max(8 * b.modes.N + 4, 16)).real
    if vals.min() < -tol * max(1.0, vals.max()):
        raise ValueError(f"weight takes negative values (min {vals.min():.3e})")


@dataclass(frozen=True, eq=False)
class Gramian:
    E: EigenSystem
    weight: TorusField
    T: float
    matrix: np.ndarray  # eigen coordinates
    B: np.ndarray = field(repr=False)

    def form(self, u0: TorusField) -> float:
        """int_0^T int b |e^{-itH} u0|^2, the observation integral."""
        a = self.E.coefficients(u0)
        return float((2 * np.pi) ** self.E.modes.d * np.real(np.vdot(a, self.matrix @ a)))

    def eigh(self):
        return np.linalg.eigh(self.matrix)

    def compressed(self, keep: np.ndarray) -> np.ndarray:
        return self.matrix[np.ix_(keep, keep)]


def gramian(E: EigenSystem, b: TorusField, T: float, check: bool = True) -> Gramian:
    if T <= 0:
        raise ValueError("T must be positive")
    if check:
        check_weight(b)
    Mb = toeplitz_matrix(b, E.modes)
    B = E.vectors.conj().T @ Mb @ E.vectors
    B = 0.5 * (B + B.conj().T)
    G = time_integrated_form(E.values, B, T)
    G = 0.5 * (G + G.conj().T)
    return Gramian(E, b, T, G, B)


def quadrature_gramian(E: EigenSystem, b: TorusField, T: float, points: int = 512) -> np.ndarray:
    """Reference Gramian from composite Gauss-Legendre in time (`points` nodes)."""
    order = 16
    nodes, weights = gauss_panels(0.0, T, points // order, order)
    Mb = toeplitz_matrix(b, E.modes)
    B = E.vectors.conj().T @ Mb @ E.vectors
    G = np.zeros_like(B)
    for t, w in zip(nodes, weights):
        ph = np.exp(1j * t * E.values)
        G += w * (ph[:, None] * B * ph.conj()[None, :])
    return G


@dataclass
class ObservabilityReport:
    lambda_min: float
    lambda_max: float
    vector: np.ndarray  # extremal initial datum, Fourier coefficients, unit l2
    c_obs: float
    observable: bool
    theta: tuple
    T: float
    N: int
    potential_tag: str = ""
    weight_tag: str = ""
    packet: dict | None = None

    @property
    def condition(self) -> float:
        return self.lambda_max / self.lambda_min if self.lambda_min > 0 else math.inf

    def to_json(self) -> str:
        obj = {
            "theta": [float(t) for t in self.theta],
            "potential_tag": self.potential_tag,
            "weight_tag": self.weight_tag,
            "T": self.T,
            "N": self.N,
            "lambda_min": self.lambda_min,
            "c_obs": self.c_obs if self.observable else None,
        }
        if self.packet is not None:
            obj["packet"] = self.packet
        return json.dumps(obj, sort_keys=True)


def observability_constant(G: Gramian, potential_tag: str = "", weight_tag: str = "") -> ObservabilityReport:
    vals, vecs = G.eigh()
    lam = float(vals[0])
    ok = lam > LAMBDA_FLOOR
    v = G.E.vectors @ vecs[:, 0]
    return ObservabilityReport(
        lambda_min=lam,
        lambda_max=float(vals[-1]),
        vector=v / np.linalg.norm(v),
        c_obs=1.0 / lam if ok else math.inf,
        observable=ok,
        theta=tuple(float(t) for t in G.E.theta),
        T=G.T,
        N=G.E.modes.N,
        potential_tag=potential_tag,
        weight_tag=weight_tag,
    )


# --------------------------------------------------------------------------
# HUM


@dataclass
class HumControl:
    E: EigenSystem
    weight: TorusField
    T: float
    z: np.ndarray  # eigen coordinates of the adjoint final datum
    W: np.ndarray  # controllability Gramian, eigen coordinates
    target: TorusField
    cost_formula: float
    _Mb: np.ndarray = field(repr=False, default=None)

    def adjoint_state(self, t: float) -> np.ndarray:
        """phi(t) = e^{-i(t-T)H} z in Fourier coefficients."""
        return self.E.vectors @ (np.exp(-1j * (t - self.T) * self.E.values) * self.z)

    def control(self, t: float) -> TorusField:
        return TorusField(self.E.modes, self._Mb @ self.adjoint_state(t))

    def source(self) -> SourceTerm:
        return SourceTerm(self.control, "continuous")

    def cost_quadrature(self, points: int = 512) -> float:
        """int_0^T int b |phi|^2 by time quadrature, independent of the Gramian algebra."""
        nodes, weights = gauss_panels(0.0, self.T, points // 16, 16)
        acc = 0.0
        for t, w in zip(nodes, weights):
            p = self.adjoint_state(t)
            acc += w * np.real(np.vdot(p, self._Mb @ p))
        return float((2 * np.pi) ** self.E.modes.d * acc)

    def replay(self, steps: int = 64, order: int = 12):
        zero = TorusField.zeros(self.E.modes)
        return evolve_inhomogeneous(self.E, zero, self.source(), self.T, steps, order)


def hum_control(E: EigenSystem, b: TorusField, T: float, y1: TorusField) -> HumControl:
    """Minimal-cost forcing b(x) phi(t) steering i y' = H y + b phi from 0 to y1.

    phi(t) = e^{-i(t-T)H} z solves the adjoint equation; with the
    controllability Gramian W = int_0^T e^{-isH} M_b e^{isH} ds (unitarily
    equivalent to the observability Gramian) one needs z = i W^{-1} y1 and the
    cost int int b |phi|^2 equals <W^{-1} y1, y1>.
    """
    G = gramian(E, b, T)
    lam = E.values
    ph = np.exp(-1j * T * lam)
    W = ph[:, None] * G.matrix * ph.conj()[None, :]
    if np.linalg.eigvalsh(W)[0] <= LAMBDA_FLOOR:
        raise ValueError("Gramian is not invertible at this truncation")
    yt = E.coefficients(y1)
    x = np.linalg.solve(W, yt)
    z = 1j * x
    cost = float((2 * np.pi) ** E.modes.d * np.real(np.vdot(yt, x)))
    return HumControl(E, b, T, z, W, y1, cost, toeplitz_matrix(b, E.modes))


# --------------------------------------------------------------------------
# cutoffs


def smooth_step(t):
    """0 for t <= 0, 1 for t >= 1, C-infinity in between (exp(-1/t) construction)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class BumpFunction:
    plateau: float = 0.5
    support: float = 1.0

    def __post_init__(self):
        if not 0 < self.plateau < self.support:
            raise ValueError("need 0 < plateau < support")

    def __call__(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        return 1.0 - smooth_step((s - self.plateau) / (self.support - self.plateau))


def packet_function(h: float, rho: float, chi: BumpFunction):
    return lambda lam: chi((h * h * np.asarray(lam) - 1.0) / rho)


def frequency_cutoff(E: EigenSystem, h: float, rho: float, u0: TorusField, chi: BumpFunction | None = None) -> TorusField:
    """chi((h^2 H - 1)/rho) u0."""
    if h <= 0 or rho <= 0:
        raise ValueError("h and rho must be positive")
    chi = chi or BumpFunction()
    return E.apply_function(packet_function(h, rho, chi), u0)


@dataclass
class PacketRow:
    h: float
    rho: float
    rank: int
    lambda_min: float
    constant: float
    skipped: bool = False


def packet_observability_scan(E: EigenSystem, b: TorusField, T: float, chi: BumpFunction, hs, rhos) -> list[PacketRow]:
    G = gramian(E, b, T)
    rows = []
    for h in hs:
        for rho in rhos:
            keep = np.nonzero(np.abs(packet_function(h, rho, chi)(E.values)) > 0)[0]
            if keep.size == 0:
                rows.append(PacketRow(h, rho, 0, math.nan, math.nan, True))
                continue
            lam = float(np.linalg.eigvalsh(G.compressed(keep))[0])
            c = 1.0 / lam if lam > LAMBDA_FLOOR else math.inf
            rows.append(PacketRow(h, rho, int(keep.size), lam, c))
    return rows


# --------------------------------------------------------------------------
# dyadic partition


@dataclass(frozen=True)
class DyadicPartition:
    """phi0^2 + sum_{k>=1} phi^2(R^-k r) = 1.

    S(r) is a smooth step in log r equal to 1 for r <= 1 and 0 for r >= sqrt(R);
    phi0^2 = S and phi^2(s) = S(s) - S(R s), which is supported in (1/R, sqrt R).
    """

    R: float = 4.0

    def __post_init__(self):
        if self.R <= 1:
            raise ValueError("R must exceed 1")

    def S(self, r):
        r = np.asarray(r, dtype=float)
        pos = np.where(r > 0, r, 1.0)
        t = np.where(r > 0, np.log(pos) / (0.5 * np.log(self.R)), -1.0)
        return 1.0 - smooth_step(t)

    def phi0(self, r):
        return np.sqrt(self.S(r))

    def phi(self, s):
        return np.sqrt(np.clip(self.S(s) - self.S(self.R * np.asarray(s, float)), 0.0, None))

    def phi_k(self, k: int, r):
        """phi^2(R^-k r)."""
        r = np.asarray(r, dtype=float)
        return np.clip(self.S(r * self.R ** (-k)) - self.S(r * self.R ** (1 - k)), 0.0, None)

    def k_max(self, r_max: float) -> int:
        return max(1, int(math.ceil(math.log(max(r_max, 1.0)) / math.log(self.R))) + 1)

    def pieces(self, r, k_max: int | None = None) -> np.ndarray:
        """Rows: phi0^2, phi_1, ..., phi_kmax evaluated at r."""
        r = np.asarray(r, dtype=float)
        k_max = k_max or self.k_max(float(np.max(np.abs(r), initial=1.0)))
        return np.array([self.S(r)] + [self.phi_k(k, r) for k in range(1, k_max + 1)])

    def sample(self, M: int = 1024):
        s = np.linspace(0.0, self.R, M)
        return s, self.phi0(s), self.phi(s)


def dyadic_partition(R: float = 4.0) -> DyadicPartition:
    return DyadicPartition(R)


def dyadic_energies(E: EigenSystem, u: TorusField, P: DyadicPartition) -> np.ndarray:
    """e_0 = ||phi0(H) u||^2, e_k = <phi_k(H) u, u> in coefficient l2."""
    a2 = np.abs(E.coefficients(u)) ** 2
    return P.pieces(E.values, P.k_max(float(np.abs(E.values).max()))) @ a2


def check_dyadic_equivalence(E: EigenSystem, s: float, samples, P: DyadicPartition | None = None):
    """Extremal ratios of sum_k R^{ks} e_k against the Fourier-side ||u||^2_{H^s}."""
    from .spectral import fourier_sobolev_norm

    P = P or DyadicPartition()
    ratios = []
    for u in samples:
        e = dyadic_energies(E, u, P)
        w = P.R ** (s * np.arange(e.size))
        ratios.append(float(w @ e) / fourier_sobolev_norm(u, s) ** 2)
    return min(ratios), max(ratios)


# --------------------------------------------------------------------------


def unique_continuation_probe(E: EigenSystem, b: TorusField, count: int, tol: float = 1e-9):
    """min over eigenfunctions psi among the first `count` of int b|psi|^2 / ||psi||^2.

    Degenerate eigenspaces are handled as a whole (the minimum over the
    eigenspace), so the answer does not depend on the solver's basis.
    """
    if b.l2_coeff_norm() < 1e-14:
        raise ValueError("weight is numerically zero")
    Mb = toeplitz_matrix(b, E.modes)
    lam = E.values
    stop = min(count, E.dim)
    while stop < E.dim and abs(lam[stop] - lam[stop - 1]) <= tol * max(1.0, abs(lam[stop])):
        stop += 1
    best, arg, k = math.inf, -1, 0
    while k < stop:
        j = k + 1
        while j < stop and abs(lam[j] - lam[k]) <= tol * max(1.0, abs(lam[k])):
            j += 1
        P = E.vectors[:, k:j]
        v = float(np.linalg.eigvalsh(P.conj().T @ Mb @ P)[0])
        if v < best:
            best, arg = v, k
        k = j
    return best, arg
