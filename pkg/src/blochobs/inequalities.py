"""Lattice clusters in Z^2 and empirical checks of L4 / resolvent bounds.

Cluster kinds around the shifted origin theta:
    sphere(lam):  |n - theta|^2 = lam
    annulusB:     |h^2 |n - theta|^2 - 1| <= kappa^2 h^2
    annulusA:     |h |n - theta| - 1|     <= kappa^2 h^2
Membership is decided in exact rational arithmetic on the binary values of
theta, lam, kappa and h; floats only pre-filter candidates.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fields import ModeSet, TorusField, self_convolution_l4
from .spectral import BlochOperator, assemble_operator, eigendecompose

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class ClusterParams:
    theta: tuple
    kappa: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if self.kappa < 0 or not (0 < self.h <= 1):
            raise ValueError("need kappa >= 0 and 0 < h <= 1")
        if any(not 0 <= t <= 1 for t in self.theta):
            raise ValueError("theta must lie in [0,1]^2")


@dataclass(frozen=True, eq=False)
class ClusterSet:
    kind: str
    params: ClusterParams
    points: np.ndarray  # (P, 2) int, lex order
    lam: float | None = None

    def __len__(self):
        return len(self.points)

    def as_set(self) -> set:
        return {tuple(p) for p in self.points}


def _box(theta, radius: int) -> np.ndarray:
    c = np.round(np.asarray(theta)).astype(int)
    r = np.arange(-radius, radius + 1)
    g = np.stack(np.meshgrid(r + c[0], r + c[1], indexing="ij"), -1).reshape(-1, 2)
    return g


def _exact_sq_dist(n, theta) -> Fraction:
    return sum((Fraction(int(a)) - Fraction(float(t))) ** 2 for a, t in zip(n, theta))


def enumerate_cluster(kind: str, params: ClusterParams, lam: float | None = None, radius: int | None = None) -> ClusterSet:
    theta = np.asarray(params.theta, float)
    kappa, h = params.kappa, params.h
    if kind == "sphere":
        if lam is None or lam < 0:
            raise ValueError("sphere clusters need lam >= 0")
        need = math.ceil(math.sqrt(lam)) + 2
    elif kind in ("annulusA", "annulusB"):
        need = math.ceil((1 + kappa * h) / h) + 2
    else:
        raise ValueError(f"unknown cluster kind {kind!r}")
    radius = need if radius is None else radius
    cand = _box(theta, radius)
    r2 = np.sum((cand - theta) ** 2, axis=1)
    slack = 1e-9
    if kind == "sphere":
        pre = np.abs(r2 - lam) <= slack * max(1.0, lam)
        L = Fraction(float(lam))
        test = lambda q: q == L
    elif kind == "annulusB":
        pre = np.abs(h * h * r2 - 1) <= kappa**2 * h**2 + slack
        H2, K2 = Fraction(float(h)) ** 2, Fraction(float(kappa)) ** 2
        test = lambda q: abs(H2 * q - 1) <= K2 * H2
    else:
        pre = np.abs(h * np.sqrt(r2) - 1) <= kappa**2 * h**2 + slack
        H, K2 = Fraction(float(h)), Fraction(float(kappa)) ** 2
        lo, hi = 1 - K2 * H * H, 1 + K2 * H * H

        def test(q):
            v = H * H * q
            return v <= hi * hi and (lo <= 0 or v >= lo * lo)

    pts = [tuple(n) for n in cand[pre] if test(_exact_sq_dist(n, theta))]
    pts.sort()
    arr = np.array(pts, dtype=np.int64).reshape(-1, 2)
    if len(arr) and np.max(np.abs(arr - np.round(theta).astype(int))) >= radius:
        raise ValueError("search box too small: cluster touches its boundary")
    return ClusterSet(kind, params, arr, lam)


# --------------------------------------------------------------------------
# L4 norms of lattice trigonometric polynomials


def _dense_layout(points: np.ndarray):
    lo = points.min(axis=0)
    shape = tuple(points.max(axis=0) - lo + 1)
    return lo, shape


def l4_norm_points(points: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """||sum c_n e^{in.x}||_{L4(T^2)} for one or several coefficient vectors (last axis)."""
    coeffs = np.atleast_2d(coeffs)
    lo, shape = _dense_layout(points)
    pos = points - lo
    grid = np.zeros((coeffs.shape[0],) + shape, complex)
    grid[:, pos[:, 0], pos[:, 1]] = coeffs
    fshape = tuple(int(2 ** np.ceil(np.log2(2 * s - 1))) if s > 1 else 1 for s in shape)
    F = np.fft.fft2(grid, fshape)
    sq = np.fft.ifft2(F * F)
    s = np.sum(np.abs(sq) ** 2, axis=(1, 2))
    return (TWO_PI**2 * s) ** 0.25


def l4_norm_grid(points: np.ndarray, coeffs: np.ndarray, M: int = 256) -> float:
    """Dense-grid quadrature of the same L4 norm (oracle)."""
    A = np.zeros((M, M), complex)
    np.add.at(A, (points[:, 0] % M, points[:, 1] % M), coeffs)
    vals = np.fft.ifft2(A) * M * M
    return float(((TWO_PI / M) ** 2 * np.sum(np.abs(vals) ** 4)) ** 0.25)


@dataclass
class ZygmundResult:
    ratio: float
    coeffs: np.ndarray
    label: str


def zygmund_ratio(cluster: ClusterSet, rng: np.random.Generator, n_random: int = 200) -> ZygmundResult:
    """max over (unit, random-phase, single-point) coefficients of ||u||_4 / ||c||_l2."""
    P = len(cluster)
    if P == 0:
        raise ValueError("empty cluster")
    pts = cluster.points
    best = ZygmundResult(-1.0, np.zeros(P), "")
    unit = np.ones(P, complex)
    phases = np.exp(TWO_PI * 1j * rng.random((n_random, P)))
    batch = np.vstack([unit, phases])
    r = l4_norm_points(pts, batch) / np.sqrt(P)
    i = int(np.argmax(r))
    best = ZygmundResult(float(r[i]), batch[i], "unit" if i == 0 else f"random[{i - 1}]")
    # a single exponential: the same for every point, evaluated once per point class
    single = float(l4_norm_points(pts[:1], np.ones(1))[0])
    if single > best.ratio:
        e = np.zeros(P, complex)
        e[0] = 1
        best = ZygmundResult(single, e, "indicator")
    return best


def regime_shape(kappa: float, h: float) -> float:
    if kappa <= 1.0 / h:
        return (1 + kappa) ** 0.25 * (1 + kappa**2 * h) ** 0.25
    return (1 + kappa) ** 0.5


@dataclass
class ClusterRow:
    theta: tuple
    kappa: float
    h: float
    size: int
    ratio: float
    shape: float
    normalized: float
    skipped: bool = False


def cluster_bound_check(thetas, kappas, hs, rng: np.random.Generator, n_random: int = 200, max_points: int = 5000):
    rows = []
    for th in thetas:
        for kappa in kappas:
            for h in hs:
                C = enumerate_cluster("annulusB", ClusterParams(tuple(th), kappa, h))
                if len(C) == 0 or len(C) > max_points:
                    rows.append(ClusterRow(tuple(th), kappa, h, len(C), math.nan, regime_shape(kappa, h), math.nan, True))
                    continue
                z = zygmund_ratio(C, rng, n_random)
                sh = regime_shape(kappa, h)
                rows.append(ClusterRow(tuple(th), kappa, h, len(C), z.ratio, sh, z.ratio / sh))
    return rows


SWEEP_COLUMNS = ("theta1", "theta2", "kappa", "h", "metric", "value", "oracle_value", "flag")


def sweep_csv(rows) -> str:
    """Cluster sweep rows as CSV; oracle_value is the regime shape the ratio is normalized by."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        flag = "skipped" if r.skipped else "lower-bound"
        w.writerow([repr(float(r.theta[0])), repr(float(r.theta[1])), repr(float(r.kappa)), repr(float(r.h)),
                    "cluster_l4_ratio", repr(float(r.ratio)), repr(float(r.shape)), flag])
    return buf.getvalue()


# --------------------------------------------------------------------------
# sectors


@dataclass
class SectorDecomposition:
    params: ClusterParams
    count: int  # N_{kappa,h}; sectors are indexed 0..count
    sectors: list  # list of (P_a, 2) arrays
    quadrant: np.ndarray

    def counts(self) -> np.ndarray:
        return np.array([len(s) for s in self.sectors])

    def count_constant(self) -> float:
        k, h = self.params.kappa, self.params.h
        return float(self.counts().max(initial=0) / ((1 + k) * (1 + 3 * k * k * h)))


def sector_decomposition(params: ClusterParams) -> SectorDecomposition:
    if params.kappa <= 0:
        raise ValueError("sectors need kappa > 0")
    A = enumerate_cluster("annulusA", params)
    th = np.asarray(params.theta)
    rel = A.points - th
    q = A.points[(rel[:, 0] >= 0) & (rel[:, 1] >= 0)]
    width = params.h * params.kappa
    count = int(math.floor(math.pi / (2 * width)))
    ang = np.arctan2(q[:, 1] - th[1], q[:, 0] - th[0])
    idx = np.floor(ang / width).astype(int)
    sectors = [q[idx == a] for a in range(count + 1)]
    if sum(len(s) for s in sectors) != len(q):
        raise RuntimeError("sector assignment lost points")
    return SectorDecomposition(params, count, sectors, q)


@dataclass
class InteractionReport:
    Q: int
    witnesses: list
    violations: list = field(default_factory=list)
    quadruples: int = 0


def sector_interaction_check(decomp: SectorDecomposition, Q_bound: int | None = None) -> InteractionReport:
    """Smallest Q with: (A_a + A_b) meets (A_a' + A_b')  =>  |a-a'|+|b-b'| <= Q or |a-b'|+|b-a'| <= Q."""
    if decomp.count + 1 > 60:
        raise ValueError("too many sectors for brute force")
    owners = defaultdict(set)
    secs = decomp.sectors
    for a in range(len(secs)):
        for b in range(a, len(secs)):
            if len(secs[a]) == 0 or len(secs[b]) == 0:
                continue
            s = (secs[a][:, None, :] + secs[b][None, :, :]).reshape(-1, 2)
            for v in {tuple(x) for x in s}:
                owners[v].add((a, b))
    Q, wit, viol, seen = 0, [], [], set()
    for pairs in owners.values():
        pairs = sorted(pairs)
        for i, (a, b) in enumerate(pairs):
            for a2, b2 in pairs[i:]:
                key = (a, b, a2, b2)
                if key in seen:
                    continue
                seen.add(key)
                dist = min(abs(a - a2) + abs(b - b2), abs(a - b2) + abs(b - a2))
                if dist > Q:
                    Q, wit = dist, [key]
                elif dist == Q:
                    wit.append(key)
                if Q_bound is not None and dist > Q_bound:
                    viol.append(key)
    return InteractionReport(Q, wit[:10], viol, len(seen))


# --------------------------------------------------------------------------
# resolvent-type operators


def _modes_for(theta, level: float) -> ModeSet:
    return ModeSet(2, int(math.ceil(math.sqrt(max(level, 0.0)) + 2)))


def spectral_projector_bound(theta, tau: complex, rng: np.random.Generator, shells: int = 12, n_random: int = 20):
    """Lower bound for ||P_{theta,tau}||_{L2 -> L4}, P f = sum f_n (|n-theta|^2 - tau)^(-1/2) e^{in.x}.

    Test inputs: unit coefficients on each dyadic shell 2^(j-1) <= ||n-theta|^2 - Re tau| < 2^j
    (j = 0 meaning < 1), plus random coefficients. The ratio uses the l2 norm
    of the coefficients of f.
    """
    if abs(tau.imag) < 1:
        raise ValueError("need |Im tau| >= 1")
    modes = _modes_for(theta, tau.real + 2**shells)
    n = modes.indices
    lam = np.sum((n - np.asarray(theta)) ** 2, axis=1)
    mult = 1.0 / np.sqrt(lam - tau + 0j)
    dist = np.abs(lam - tau.real)
    best, rows = 0.0, []
    for j in range(shells + 1):
        sel = dist < 1 if j == 0 else (dist >= 2.0 ** (j - 1)) & (dist < 2.0**j)
        if not np.any(sel):
            continue
        r = float(l4_norm_points(n[sel], mult[sel])[0] / math.sqrt(sel.sum()))
        rows.append((j, int(sel.sum()), r))
        best = max(best, r)
    near = dist < 2.0**shells
    f = rng.standard_normal((n_random, near.sum())) + 1j * rng.standard_normal((n_random, near.sum()))
    rr = l4_norm_points(n[near], f * mult[near]) / np.linalg.norm(f, axis=1)
    best = max(best, float(rr.max()))
    return best, rows


@dataclass
class ResolventEstimate:
    ratio: float
    iterations: int
    converged: bool
    energy_residual: float
    energy_slack: float
    history: list = field(repr=False, default_factory=list)


class _Lp:
    """L^p norms of band-limited fields on an alias-free grid for |f|^2 and |u|^4 integrands."""

    def __init__(self, modes: ModeSet, oversample: int = 4):
        self.modes = modes
        self.M = max(oversample * (2 * modes.N + 1), 4 * modes.N + 2)
        self.pos = tuple((modes.indices % self.M).T)
        self.vol = (TWO_PI / self.M) ** modes.d

    def values(self, c):
        A = np.zeros((self.M,) * self.modes.d, complex)
        A[self.pos] = c
        return np.fft.ifftn(A) * self.M**self.modes.d

    def project(self, vals):
        return (np.fft.fftn(vals) / self.M**self.modes.d)[self.pos]

    def norm(self, c, p):
        v = np.abs(self.values(c))
        return float((self.vol * np.sum(v**p)) ** (1 / p))


def resolvent_norm_estimate(
    H: BlochOperator,
    tau: complex,
    rng: np.random.Generator | None = None,
    f0: TorusField | None = None,
    max_iter: int = 200,
    tol: float = 1e-6,
    E=None,
) -> ResolventEstimate:
    """Lower bound on ||(H - tau)^{-1}||_{L^{4/3} -> L^4} by duality-map power iteration."""
    if abs(tau.imag) < 1:
        raise ValueError("need |Im tau| >= 1")
    E = E or eigendecompose(H)
    Phi, lam = E.vectors, E.values
    solve = lambda c: Phi @ ((Phi.conj().T @ c) / (lam - tau))
    solve_adj = lambda c: Phi @ ((Phi.conj().T @ c) / (lam - np.conj(tau)))
    lp = _Lp(H.modes)
    if f0 is None:
        rng = rng or np.random.default_rng(0)
        f = rng.standard_normal(H.modes.size) + 1j * rng.standard_normal(H.modes.size)
    else:
        f = np.array(f0.coeffs)
    f = f / lp.norm(f, 4 / 3)
    hist, best, best_f, prev, conv, it = [], -1.0, f, None, False, 0
    for it in range(1, max_iter + 1):
        u = solve(f)
        r = lp.norm(u, 4) / lp.norm(f, 4 / 3)
        hist.append(r)
        if r > best:
            best, best_f = r, f
        if prev is not None and abs(r - prev) <= tol * r:
            conv = True
            break
        prev = r
        uv = lp.values(u)
        w = solve_adj(lp.project(np.abs(uv) ** 2 * uv))
        wv = lp.values(w)
        f = lp.project(np.abs(wv) ** 2 * wv)
        nf = lp.norm(f, 4 / 3)
        if nf == 0:
            break
        f = f / nf
    # energy identity on the best iterate: -Im tau ||u||^2 = Im <f, u>
    u = solve(best_f)
    vol = TWO_PI**H.modes.d
    u2 = vol * np.vdot(u, u).real
    pair = vol * np.vdot(u, best_f)
    lhs = abs(tau.imag) * u2
    resid = abs(lhs - abs(pair.imag)) / lhs
    slack = lp.norm(u, 4) * lp.norm(best_f, 4 / 3) - lhs
    return ResolventEstimate(best, it, conv, float(resid), float(slack), hist)


def resolvent_upper_bound(modes: ModeSet, tau: complex) -> float:
    """Rigorous bound for the truncated operator P_N (H - tau)^{-1} P_N from L^{4/3} to L^4.

    For a band-limited h with D modes, ||h||_inf <= sqrt(D) (2 pi)^{-d/2} ||h||_2, hence
    ||h||_4 <= c ||h||_2 with c = (D / (2 pi)^d)^{1/4}; duality gives the same c for
    L^{4/3} -> L^2, and ||(H - tau)^{-1}||_{2->2} <= 1/|Im tau|.  Crude, but it holds
    at every truncation, unlike the power-iteration values which are lower bounds.
    """
    if abs(tau.imag) < 1:
        raise ValueError("need |Im tau| >= 1")
    return math.sqrt(modes.size / TWO_PI**modes.d) / abs(tau.imag)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GapWitness:
    theta: tuple
    k: int
    l: int
    n: tuple
    m: tuple
    gap: float
    box: int

    def exact_gap(self) -> Fraction:
        return 4 * abs(self.k * Fraction(self.theta[0]) + self.l * Fraction(self.theta[1]))

    def identities_hold(self) -> bool:
        n, m, k, l = self.n, self.m, self.k, self.l
        sq = lambda v: v[0] * v[0] + v[1] * v[1]
        return (
            sq(n) == sq(m) == 5 * (k * k + l * l)
            and (n[0] - m[0], n[1] - m[1]) == (2 * k, 2 * l)
            and self.exact_gap() > 0
        )

    def operator_gap(self) -> float:
        """|lam_n - lam_m| of the V = 0 operator, from exact diagonal entries."""
        N = max(max(abs(v) for v in self.n), max(abs(v) for v in self.m))
        H = assemble_operator(ModeSet(2, N), self.theta)
        return float(abs(H.diagonal_entry(self.n, exact=True) - H.diagonal_entry(self.m, exact=True)))


def gap_failure_witness(theta, eps: float, K_max: int = 1 << 13) -> GapWitness:
    """Smallest (k^2 + l^2, k, l) with 0 < 4|k theta1 + l theta2| < eps, box doubled until found."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    t1, t2 = float(theta[0]), float(theta[1])
    K = 1
    while K <= K_max:
        r = np.arange(-K, K + 1)
        k, l = np.meshgrid(r, r, indexing="ij")
        val = 4 * np.abs(k * t1 + l * t2)
        ok = (val < eps) & (val > 0)
        if np.any(ok):
            cand = sorted(zip((k[ok] ** 2 + l[ok] ** 2).tolist(), k[ok].tolist(), l[ok].tolist()))
            for _, kk, ll in cand:
                if kk * Fraction(t1) + ll * Fraction(t2) == 0:
                    continue  # exact cancellation: no gap
                n = (kk + 2 * ll, ll - 2 * kk)
                m = (2 * ll - kk, -ll - 2 * kk)
                return GapWitness((t1, t2), kk, ll, n, m, float(4 * abs(kk * t1 + ll * t2)), K)
        K *= 2
    raise RuntimeError("no witness within the search box")


def rational_directions(m: int):
    """Coprime (p, q) with p^2 + q^2 <= m, ordered by angle, with unit vectors."""
    if m < 1:
        raise ValueError("m must be >= 1")
    r = int(math.isqrt(m))
    pq = [
        (p, q)
        for p in range(-r, r + 1)
        for q in range(-r, r + 1)
        if (p, q) != (0, 0) and p * p + q * q <= m and math.gcd(p, q) == 1
    ]
    pq.sort(key=lambda v: (math.atan2(v[1], v[0]) % (2 * math.pi), v))
    vecs = np.array([(p / math.hypot(p, q), q / math.hypot(p, q)) for p, q in pq])
    return pq, vecs
