"""Normal-form conjugation that averages a 2D potential along y, and the y-fiber reduction.

With S = sigma(h D_y) / (h D_y) (extended by zero at D_y = 0),

    Q = (i/2) Vt S,   W = -(d_x Vt) S,
    R = (Q V - <V> Q) chi + ((i/2) Lap Vt + theta . grad Vt) S chi,

the identity (I + hQ) H chi = (H' (I + hQ) + h W D_x) chi + h R holds exactly at any
truncation, where H' carries <V>_y in place of V and Vt is the y-primitive of V - <V>_y
vanishing at y = 0.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import norm as spnorm, svds

from .fields import ModeSet, TorusField, toeplitz_matrix
from .observability import BumpFunction, smooth_step
from .spectral import as_theta, assemble_operator, eigendecompose


def y_average(V: TorusField) -> TorusField:
    keep = V.modes.indices[:, 1] == 0
    return TorusField(V.modes, np.where(keep, V.coeffs, 0))


def y_primitive(V: TorusField) -> TorusField:
    """Vt with d_y Vt = V - <V>_y and Vt(x, 0) = 0."""
    idx = V.modes.indices
    c = np.zeros(V.modes.size, complex)
    for (q1, q2), v in zip(idx, V.coeffs):
        if q2 == 0 or v == 0:
            continue
        c[V.modes.flat_index((q1, q2))] += v / (1j * q2)
        c[V.modes.flat_index((q1, 0))] -= v / (1j * q2)
    return TorusField(V.modes, c)


def spectral_derivative(u: TorusField, axis: int) -> TorusField:
    return TorusField(u.modes, 1j * u.modes.indices[:, axis] * u.coeffs)


def laplacian(u: TorusField) -> TorusField:
    return TorusField(u.modes, -np.sum(u.modes.indices**2, axis=1) * u.coeffs)


@lru_cache(maxsize=8)
def _soft_min_table(a: float, points: int = 20001):
    """Samples of m(t) = int_0^t psi, psi = 1 - smooth_step((s - a)/(b - a)), b = 2 - a.

    m(t) = t for t <= a, m(t) = 1 for t >= b, and t -> m(t) is increasing with m(t) <= min(t, 1).
    """
    b = 2.0 - a
    t = np.linspace(a, b, points)
    psi = 1.0 - smooth_step((t - a) / (b - a))
    m = a + cumulative_trapezoid(psi, t, initial=0.0)
    m[-1] = 1.0  # exact by the symmetry smooth_step(u) + smooth_step(1 - u) = 1
    return t, m


@dataclass(frozen=True)
class SigmaCutoff:
    """Smooth cutoff on (0, inf) with values in [0, 1]: equal to 1 on [lo, hi], 0 below floor/2 and above 2 hi.

    With knee set, sigma(eta) = m(eta / knee) for a smooth m with m(t) = t below the
    transition and m(t) <= min(t, 1) everywhere.  Hence sigma(eta)/eta <= 1/knee with
    equality on a whole band [floor, a knee], a = 2 - lo/knee, so the sup of sigma/eta
    over the sampled modes h n2 does not depend on h.
    """

    lo: float
    hi: float
    knee: float | None = None
    floor: float | None = None

    def __post_init__(self):
        if self.knee is not None and not (self.knee < self.lo < 2 * self.knee):
            raise ValueError("need knee < lo < 2 knee")

    def __call__(self, eta):
        eta = np.asarray(eta, float)
        f0 = self.lo if self.floor is None else self.floor
        rise = smooth_step((eta - f0 / 2) / (f0 / 2))
        fall = 1.0 - smooth_step((eta - self.hi) / self.hi)
        if self.knee is None:
            core = 1.0
        else:
            a = 2.0 - self.lo / self.knee
            tt, mm = _soft_min_table(round(a, 12))
            t = eta / self.knee
            core = np.where(t <= a, t, np.interp(t, tt, mm, right=1.0))
        return np.where(eta > 0, rise * fall * core, 0.0)

    def over_eta(self, eta):
        eta = np.asarray(eta, float)
        safe = np.where(eta == 0, 1.0, eta)
        return np.where(eta == 0, 0.0, self(eta) / safe)

    @classmethod
    def for_ball(cls, eps: float, flat: bool = True) -> "SigmaCutoff":
        # y-projection of B((0,1); eps) is (1 - eps, 1 + eps)
        if flat:
            return cls(0.98 * (1 - eps), 2 * (1 + eps), knee=0.8 * (1 - eps), floor=0.1)
        return cls(0.5 * (1 - eps), 2 * (1 + eps))


@dataclass(frozen=True)
class BallCutoff:
    """chi_eps(xi) supported in the open ball B((0,1); eps)."""

    eps: float
    plateau: float = 0.5

    def __call__(self, xi):
        r = np.linalg.norm(np.asarray(xi, float) - np.array([0.0, 1.0]), axis=-1) / self.eps
        return BumpFunction(self.plateau, 1.0)(r)


@dataclass(eq=False)
class NormalFormOperators:
    h: float
    tag: str
    theta: np.ndarray
    modes: ModeSet
    Q: sp.csr_matrix
    W: sp.csr_matrix
    R: sp.csr_matrix
    R1: sp.csr_matrix
    R2: sp.csr_matrix
    chi: np.ndarray
    sigma: np.ndarray
    Vt: TorusField
    V_mean: TorusField
    defect: float
    norm_Q: float = math.nan
    norm_W: float = math.nan
    norm_R: float = math.nan


def _opnorm(M) -> float:
    if M.nnz == 0:
        return 0.0
    v0 = np.ones(min(M.shape), dtype=float)
    return float(svds(M, k=1, return_singular_vectors=False, v0=v0, tol=1e-10)[0])


def normal_form_operators(
    V: TorusField, h: float, theta=(0.0, 0.0), eps: float = 0.25, N: int | None = None,
    sigma: SigmaCutoff | None = None, chi: BallCutoff | None = None, tag: str = "", norms: bool = True,
) -> NormalFormOperators:
    if V.modes.d != 2:
        raise ValueError("normal form is two-dimensional")
    if not V.is_real():
        raise ValueError("potential must be real")
    theta = as_theta(theta, 2)
    chi = chi or BallCutoff(eps)
    sigma = sigma or SigmaCutoff.for_ball(chi.eps)
    if N is None:
        # cover supp chi and the plateau of sigma(eta)/eta near its small end
        N = int(math.ceil((1 + chi.eps) / h)) + 2 * V.modes.N + 1
    modes = ModeSet(2, N)
    idx = modes.indices.astype(float)
    chi_v = chi(h * idx)
    sig_v = sigma(h * idx[:, 1])
    if np.max(np.abs((1 - sig_v) * chi_v)) > 0:
        raise ValueError("(1 - sigma) chi_eps does not vanish: cutoffs are incompatible")
    s_v = sigma.over_eta(h * idx[:, 1])

    Vt = y_primitive(V)
    Vm = y_average(V)
    band = V.modes
    T = lambda f: toeplitz_matrix(f, modes, sparse=True).tocsr()
    MV, MVm, MVt = T(V), T(Vm), T(Vt)
    S, X = sp.diags(s_v), sp.diags(chi_v)
    Dx = sp.diags(idx[:, 0])
    grad_theta = TorusField(band, theta[0] * spectral_derivative(Vt, 0).coeffs + theta[1] * spectral_derivative(Vt, 1).coeffs)

    Q = (0.5j * MVt @ S).tocsr()
    W = (-T(spectral_derivative(Vt, 0)) @ S).tocsr()
    R1 = ((Q @ MV - MVm @ Q) @ X).tocsr()
    R2 = ((0.5j * T(laplacian(Vt)) + T(grad_theta)) @ S @ X).tocsr()
    R = (R1 + R2).tocsr()

    H = assemble_operator(modes, theta, V).sparse_matrix()
    Hm = assemble_operator(modes, theta, Vm).sparse_matrix()
    I = sp.identity(modes.size, format="csr")
    lhs = (I + h * Q) @ H @ X
    rhs = (Hm @ (I + h * Q) + h * W @ Dx) @ X + h * R
    diff = lhs - rhs
    scale = spnorm(lhs)
    defect = float(spnorm(diff) / scale) if diff.nnz else 0.0

    out = NormalFormOperators(h, tag, theta, modes, Q, W, R, R1, R2, chi_v, sig_v, Vt, Vm, defect)
    if norms:
        out.norm_Q, out.norm_W, out.norm_R = _opnorm(Q), _opnorm(W), _opnorm(R)
    return out


def normal_form(V: TorusField, hs, theta=(0.0, 0.0), eps: float = 0.25, tag: str = "", **kw) -> list[NormalFormOperators]:
    return [normal_form_operators(V, h, theta, eps, tag=tag, **kw) for h in hs]


def normal_form_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "norm_Q", "norm_W", "norm_R", "defect"])
    for r in reports:
        w.writerow([f"{r.h:.12g}", f"{r.norm_Q:.12g}", f"{r.norm_W:.12g}", f"{r.norm_R:.12g}", f"{r.defect:.12g}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# y-fibers


def fiber_decompose(w: TorusField) -> dict[int, TorusField]:
    """w = sum_k w_k(x) e^{iky}; keys are the k carrying a nonzero fiber."""
    if w.modes.d != 2:
        raise ValueError("fiber decomposition needs d=2")
    side = w.modes.side
    c = w.coeffs.reshape(side, side)  # lex order: first index is n1
    m1 = ModeSet(1, w.modes.N)
    out = {}
    for col, k in enumerate(range(-w.modes.N, w.modes.N + 1)):
        if np.any(c[:, col] != 0):
            out[k] = TorusField(m1, c[:, col].copy())
    return out


def fiber_recompose(fibers: dict[int, TorusField], modes: ModeSet) -> TorusField:
    side = modes.side
    c = np.zeros((side, side), complex)
    for k, f in fibers.items():
        c[:, k + modes.N] = f.resample(ModeSet(1, modes.N)).coeffs
    return TorusField(modes, c.reshape(-1))


def fiber_parseval_defect(w: TorusField) -> float:
    """| 2 pi sum_k ||w_k||^2_{L2(T)} - ||w||^2_{L2(T^2)} | / ||w||^2."""
    fib = fiber_decompose(w)
    tot = 2 * np.pi * sum(f.norm() ** 2 for f in fib.values())
    ref = w.norm() ** 2
    return abs(tot - ref) / ref if ref else abs(tot)


def fiber_evolve(fibers: dict, V_mean_1d: TorusField | None, theta, t: float) -> dict:
    """Evolve fiber k under -d^2 + 2i theta1 d + theta1^2 + <V>(x) + (k - theta2)^2."""
    theta = as_theta(theta, 2)
    out = {}
    eig = {}
    for k, f in fibers.items():
        E = eig.get(f.modes.N)
        if E is None:
            E = eig[f.modes.N] = eigendecompose(assemble_operator(f.modes, (theta[0],), V_mean_1d))
        from .propagator import evolve

        out[k] = evolve(E, f, t).scale(np.exp(-1j * t * (k - theta[1]) ** 2))
    return out


def mean_to_1d(V: TorusField) -> TorusField:
    """<V>_y as a field in x alone."""
    Vm = y_average(V)
    m1 = ModeSet(1, V.modes.N)
    c = np.array([Vm.coefficient((n, 0)) for n in range(-V.modes.N, V.modes.N + 1)])
    return TorusField(m1, c)


def fiber_commutation_defect(w: TorusField, V: TorusField | None, theta, t: float) -> float:
    """Relative l2 gap between evolve-then-decompose and decompose-then-evolve."""
    from .propagator import evolve

    Vm = y_average(V) if V is not None else None
    E = eigendecompose(assemble_operator(w.modes, theta, Vm))
    path_a = evolve(E, w, t)
    fib = fiber_evolve(fiber_decompose(w), mean_to_1d(V) if V is not None else None, theta, t)
    path_b = fiber_recompose(fib, w.modes)
    return float(np.linalg.norm(path_a.coeffs - path_b.coeffs) / np.linalg.norm(w.coeffs))
