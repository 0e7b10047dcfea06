"""Named experiments. Each returns metric rows, checks and optional artifact files."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .. import floquet as fq
from .. import inequalities as iq
from .. import normal_form as nf
from .. import observability as ob
from .. import semiclassical as sc
from ..fields import ModeSet, TorusField
from ..potentials import from_tag
from ..propagator import Trajectory, evolve, evolve_many
from ..spectral import assemble_operator, free_symbol
from .cache import EigenCache
from .config import ExperimentConfig
from .envelope import Check, ResultEnvelope, Row


@dataclass
class Context:
    cfg: ExperimentConfig
    rng: np.random.Generator
    cache: EigenCache
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    def row(self, metric, key, value, oracle=""):
        self.rows.append(Row(metric, key, float(value), oracle))

    def check(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def eig(self, modes, theta, V):
        return self.cache.get(modes, theta, V)


@dataclass(frozen=True)
class Experiment:
    name: str
    fn: Callable[[Context], None]
    defaults: dict
    criterion: int


REGISTRY: dict[str, Experiment] = {}


def experiment(name, criterion, **defaults):
    def deco(fn):
        REGISTRY[name] = Experiment(name, fn, defaults, criterion)
        return fn

    return deco


def th_key(theta) -> str:
    return ",".join(f"{t:.6g}" for t in theta)


def pot(tag: str, d: int) -> TorusField | None:
    return None if tag == "zero" else from_tag(tag, d)


# --------------------------------------------------------------------------


@experiment("exact-spectrum", 1, N=4, samples=25, potentials=["zero"])
def exact_spectrum(ctx: Context):
    cfg = ctx.cfg
    worst = 0.0
    for d in (1, 2):
        modes = ModeSet(d, cfg.N if d == 2 else 2 * cfg.N)
        for _ in range(cfg.samples):
            th = tuple(ctx.rng.random(d))
            H = assemble_operator(modes, th)
            ref = np.sort(free_symbol(modes, th))
            E = ctx.eig(modes, th, None)
            e1 = float(np.max(np.abs(E.values - ref)))
            e2 = float(np.max(np.abs(np.linalg.eigvalsh(H.matrix) - ref)))
            key = f"d={d};theta={th_key(th)}"
            ctx.row("spectrum_error", key, e1)
            ctx.row("dense_spectrum_error", key, e2)
            worst = max(worst, e1, e2)
    ctx.check("exact spectrum 1e-12", worst < 1e-12, f"max error {worst:.3g}")


@experiment("conservation", 2, d=2, N=4, samples=50, potentials=["cosx_cosy"], thetas=[[0.3, 0.7], [0.0, 0.0], [0.5, 0.25]])
def conservation(ctx: Context):
    cfg = ctx.cfg
    modes = ModeSet(cfg.d, cfg.N)
    V = pot(cfg.potentials[0], cfg.d)
    thetas = cfg.theta_list()
    drift = group = 0.0
    for i in range(cfg.samples):
        th = thetas[i % len(thetas)]
        E = ctx.eig(modes, th, V)
        u0 = TorusField.random(modes, ctx.rng)
        t, s = ctx.rng.uniform(-5, 5, size=2)
        ut = evolve(E, u0, t)
        dn = abs(ut.norm() - u0.norm()) / u0.norm()
        gl = (evolve(E, u0, t + s) - evolve(E, ut, s)).norm() / u0.norm()
        key = f"sample={i}"
        ctx.row("norm_drift", key, dn)
        ctx.row("group_law_defect", key, gl)
        drift, group = max(drift, dn), max(group, gl)
    ctx.check("norm drift 1e-10", drift < 1e-10, f"{drift:.3g}")
    ctx.check("group law 1e-9", group < 1e-9, f"{group:.3g}")
    # one trajectory for the CSV artifact
    E = ctx.eig(modes, thetas[0], V)
    u0 = TorusField.random(modes, np.random.default_rng(cfg.seed))
    times = np.linspace(0.0, 2.0, 21)
    tr = Trajectory(times, evolve_many(E, u0, times), modes)
    lines = ["t,norm_l2"] + [f"{t:.12g},{n:.12g}" for t, n in zip(tr.times, tr.norms())]
    ctx.artifacts["trajectory.csv"] = "\n".join(lines) + "\n"


@experiment(
    "floquet-lift", 3, K=[2, 3], samples=20, T=[1.0],
    potentials=["cosx", "cosx_cosy"], weights=["smoothed_indicator(0,3.141592653589793,4)"],
    params={"N1": 4, "N2": 2},
)
def floquet_lift(ctx: Context):
    cfg = ctx.cfg
    worst = {"isometry_gap": 0.0, "direct_sum_gap": 0.0, "intertwine_gap": 0.0, "lift_gap": 0.0}
    for d in (1, 2):
        cell = ModeSet(d, cfg.params["N1"] if d == 1 else cfg.params["N2"])
        V = pot(cfg.potentials[d - 1], d)
        b = from_tag(cfg.weights[0], d)
        for K in cfg.K:
            for i in range(cfg.samples):
                u = fq.CellLattice.random(K, cell, ctx.rng)
                F = fq.floquet_forward(u)
                iso = abs(u.norm() ** 2 - F.total_norm_sq() / K**d) / u.norm() ** 2
                direct = fq.floquet_direct(u)
                ref = np.array([F.fiber_values(j, u.grid_size()) for j in range(K**d)])
                ds = float(np.max(np.abs(direct - ref)) / np.max(np.abs(ref)))
                Hu = fq.CellLattice(K, cell, (fq.big_domain_matrix(u, V) @ u.coeffs.reshape(-1)).reshape(u.coeffs.shape))
                scale = max(f.norm() for f in fq.floquet_forward(Hu).fibers)
                tw = fq.check_intertwine(u, V) / scale
                lift = fq.lift_identity(u, V, b, cfg.T[0]).gap
                key = f"d={d};K={K};sample={i}"
                for m, v in (("isometry_gap", iso), ("direct_sum_gap", ds), ("intertwine_gap", tw), ("lift_gap", lift)):
                    ctx.row(m, key, v)
                    worst[m] = max(worst[m], v)
    for m, v in worst.items():
        ctx.check(f"{m} 1e-8", v < 1e-8, f"{v:.3g}")


@experiment(
    "gramian-sweep", 4, d=1, N=6, thetas=[[0.3]], potentials=["cosx"], T=[0.5, 1.0, 2.0, 4.0],
    weights=["smoothed_indicator(0,1.5707963267948966,6)", "smoothed_indicator(0,3.141592653589793,6)",
             "smoothed_indicator(0,4.71238898038469,6)"],
)
def gramian_sweep(ctx: Context):
    cfg = ctx.cfg
    modes = ModeSet(cfg.d, cfg.N)
    one = from_tag("const(1)", cfg.d)
    unit_err = quad = 0.0
    for th in cfg.theta_list():
        for tag in cfg.potentials:
            E = ctx.eig(modes, th, pot(tag, cfg.d))
            for T in cfg.T:
                rep = ob.observability_constant(ob.gramian(E, one, T))
                e = abs(rep.c_obs - 1 / T) * T
                ctx.row("c_obs", f"V={tag};theta={th_key(th)};b=const(1);T={T:g}", rep.c_obs)
                ctx.row("c_obs_unit_error", f"V={tag};theta={th_key(th)};T={T:g}", e)
                unit_err = max(unit_err, e)
            table = np.zeros((len(cfg.weights), len(cfg.T)))
            for i, w in enumerate(cfg.weights):
                b = from_tag(w, cfg.d)
                for j, T in enumerate(cfg.T):
                    G = ob.gramian(E, b, T)
                    rep = ob.observability_constant(G)
                    table[i, j] = rep.c_obs
                    ctx.row("c_obs", f"V={tag};theta={th_key(th)};b={w};T={T:g}", rep.c_obs)
                    Gq = ob.quadrature_gramian(E, b, T, points=512)
                    q = float(np.max(np.abs(Gq - G.matrix)) / np.max(np.abs(G.matrix)))
                    ctx.row("quadrature_gap", f"V={tag};theta={th_key(th)};b={w};T={T:g}", q)
                    quad = max(quad, q)
            # larger T or larger b can only lower C_obs
            t_ex = float(np.max((table[:, 1:] - table[:, :-1]) / table[:, :-1]))
            b_ex = float(np.max((table[1:, :] - table[:-1, :]) / table[:-1, :]))
            ctx.row("t_monotone_excess", f"V={tag};theta={th_key(th)}", t_ex)
            ctx.row("b_monotone_excess", f"V={tag};theta={th_key(th)}", b_ex)
            ctx.check(f"T-monotone V={tag} theta={th_key(th)}", t_ex <= 1e-12, f"{t_ex:.3g}")
            ctx.check(f"b-monotone V={tag} theta={th_key(th)}", b_ex <= 1e-12, f"{b_ex:.3g}")
    ctx.check("b=1 gives C_obs=1/T to 1e-10", unit_err < 1e-10, f"{unit_err:.3g}")
    ctx.check("closed form vs quadrature 1e-7", quad < 1e-7, f"{quad:.3g}")


@experiment(
    "hum-roundtrip", 5, d=1, N=6, thetas=[[0.3]], potentials=["cosx"], T=[2.0], samples=10,
    weights=["smoothed_indicator(0,3.141592653589793,6)"], params={"steps": 64, "order": 12},
)
def hum_roundtrip(ctx: Context):
    cfg = ctx.cfg
    modes = ModeSet(cfg.d, cfg.N)
    E = ctx.eig(modes, cfg.theta_list()[0], pot(cfg.potentials[0], cfg.d))
    b = from_tag(cfg.weights[0], cfg.d)
    T = cfg.T[0]
    rep_w = rep_c = 0.0
    for i in range(cfg.samples):
        y1 = TorusField.random(modes, ctx.rng)
        hc = ob.hum_control(E, b, T, y1)
        traj = hc.replay(cfg.params["steps"], cfg.params["order"])
        err = (traj.final - y1).norm() / y1.norm()
        cq = hc.cost_quadrature()
        ce = abs(cq - hc.cost_formula) / hc.cost_formula
        key = f"target={i}"
        ctx.row("hum_replay_error", key, err)
        ctx.row("hum_cost_error", key, ce)
        ctx.row("hum_cost", key, hc.cost_formula)
        rep_w, rep_c = max(rep_w, err), max(rep_c, ce)
    ctx.check("replay reaches target 1e-6", rep_w < 1e-6, f"{rep_w:.3g}")
    ctx.check("cost matches <G^-1 y, y> 1e-8", rep_c < 1e-8, f"{rep_c:.3g}")


@experiment(
    "theta-uniformity", 6, d=2, N=4, theta_grid=6, potentials=["zero", "cosx_cosy"], T=[1.0],
    weights=["smoothed_indicator(0,3.141592653589793,4)"],
)
def theta_uniformity(ctx: Context):
    cfg = ctx.cfg
    modes = ModeSet(cfg.d, cfg.N)
    b = from_tag(cfg.weights[0], cfg.d)
    cs = []
    reports = []
    for tag in cfg.potentials:
        for th in cfg.theta_list():
            E = ctx.eig(modes, th, pot(tag, cfg.d))
            rep = ob.observability_constant(ob.gramian(E, b, cfg.T[0]), tag, cfg.weights[0])
            ctx.row("c_obs", f"V={tag};theta={th_key(th)}", rep.c_obs)
            cs.append(rep.c_obs)
            reports.append(rep.to_json())
    cs = np.array(cs)
    finite = bool(np.all(np.isfinite(cs)))
    ratio = float(cs.max() / cs.min()) if finite else math.inf
    ctx.row("c_obs_ratio", "all", ratio)
    ctx.check("all C_obs finite", finite)
    ctx.check("max/min C_obs < 10", ratio < 10, f"{ratio:.4g}")
    ctx.artifacts["observability.jsonl"] = "\n".join(reports) + "\n"


def _brute_sphere(theta, lam) -> set:
    """Fraction scan of a box; independent of enumerate_cluster's prefilter."""
    R = math.isqrt(int(math.ceil(lam))) + 3
    t1, t2, L = Fraction(theta[0]), Fraction(theta[1]), Fraction(lam)
    c1, c2 = round(theta[0]), round(theta[1])
    return {
        (a, b)
        for a in range(c1 - R, c1 + R + 1)
        for b in range(c2 - R, c2 + R + 1)
        if (a - t1) ** 2 + (b - t2) ** 2 == L
    }


@experiment(
    "zygmund", 7, samples=200,
    thetas=[[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.25, 0.75], [0.125, 0.375]],
    kappas=[1.0, 2.0, 4.0, 8.0], hs=[0.125, 0.0625, 0.03125], theta_grid=3,
    params={"lams": [25, 325, 1105], "probe_points": [[3, 4], [5, -1], [7, 2], [10, 10]], "cluster_random": 50},
)
def zygmund(ctx: Context):
    cfg = ctx.cfg
    bad = 0
    for th in cfg.theta_list()[:5]:
        for n0 in cfg.params["probe_points"]:
            lam = float((n0[0] - Fraction(th[0])) ** 2 + (n0[1] - Fraction(th[1])) ** 2)
            got = enumerate_cluster_set(th, lam)
            ref = _brute_sphere(th, lam)
            mism = len(got ^ ref)
            ctx.row("enumeration_mismatch", f"theta={th_key(th)};lam={lam:g}", mism)
            bad += mism
    ctx.check("sphere enumeration matches brute force (20 pairs)", bad == 0, f"{bad} mismatches")
    ratios = []
    for lam in cfg.params["lams"]:
        C = iq.enumerate_cluster("sphere", iq.ClusterParams((0.0, 0.0)), lam=lam)
        z = iq.zygmund_ratio(C, ctx.rng, cfg.samples)
        ctx.row("cluster_size", f"lam={lam}", len(C))
        ctx.row("zygmund_ratio", f"lam={lam}", z.ratio)
        ratios.append(z.ratio)
    growth = max(ratios) / ratios[0]
    ctx.row("zygmund_growth", "max/base", growth)
    ctx.check("Zygmund ratio within 2x of lam=25 baseline", growth <= 2.0, f"{growth:.4g}")
    n = cfg.params.get("grid_n", 3)
    thetas = [(i / n, j / n) for i in range(n) for j in range(n)]
    rows = iq.cluster_bound_check(thetas, cfg.kappas, cfg.hs, ctx.rng, cfg.params["cluster_random"])
    vals = []
    for r in rows:
        if not r.skipped:
            ctx.row("cluster_normalized", f"theta={th_key(r.theta)};kappa={r.kappa:g};h={r.h:g}", r.normalized)
            vals.append(r.normalized)
    spread = max(vals) / min(vals)
    ctx.row("cluster_spread", "max/min", spread)
    ctx.notes.append("cluster ratios are lower bounds from random-phase and structured probes")
    ctx.artifacts["cluster_sweep.csv"] = iq.sweep_csv(rows)


def enumerate_cluster_set(theta, lam) -> set:
    return iq.enumerate_cluster("sphere", iq.ClusterParams(tuple(theta)), lam=lam).as_set()


@experiment(
    "sectors", 7, thetas=[[0.0, 0.0], [0.3, 0.7], [0.5, 0.5]], kappas=[2.0], hs=[0.0625],
    params={"count_grid": [[1.0, 0.125], [2.0, 0.0625], [4.0, 0.03125], [2.0, 0.03125]]},
)
def sectors(ctx: Context):
    cfg = ctx.cfg
    Cmax = 0.0
    for th in cfg.theta_list():
        for kappa, h in cfg.params["count_grid"]:
            dec = iq.sector_decomposition(iq.ClusterParams(th, kappa, h))
            c = dec.count_constant()
            ctx.row("sector_constant", f"theta={th_key(th)};kappa={kappa:g};h={h:g}", c)
            Cmax = max(Cmax, c)
    ctx.check("per-sector counts with C < 20", Cmax < 20, f"C = {Cmax:.4g}")
    Qs = []
    for th in cfg.theta_list():
        for kappa in cfg.kappas:
            for h in cfg.hs:
                rep = iq.sector_interaction_check(iq.sector_decomposition(iq.ClusterParams(th, kappa, h)))
                ctx.row("interaction_Q", f"theta={th_key(th)};kappa={kappa:g};h={h:g}", rep.Q)
                Qs.append(rep.Q)
    spread = max(Qs) - min(Qs)
    ctx.row("interaction_Q_spread", "max-min", spread)
    # "stable +-1": every Q within one of a common integer
    ctx.check("interaction Q finite and stable +-1", spread <= 2, f"Q values {Qs}")


@experiment(
    "resolvent-sweep", 8, d=2, N=18, thetas=[[a, b] for a in (0.0, 0.35, 0.7) for b in (0.0, 0.35, 0.7)],
    potentials=["zero", "cosx_cosy"], params={"re_tau": [10.0, 100.0, 200.0], "im_tau": 1.0, "max_iter": 200},
)
def resolvent_sweep(ctx: Context):
    cfg = ctx.cfg
    modes = ModeSet(cfg.d, cfg.N)
    vals, worst_res, all_conv, below = [], 0.0, True, True
    for tag in cfg.potentials:
        V = pot(tag, cfg.d)
        for th in cfg.theta_list():
            E = ctx.eig(modes, th, V)
            for re in cfg.params["re_tau"]:
                tau = complex(re, cfg.params["im_tau"])
                r = iq.resolvent_norm_estimate(E.operator, tau, rng=ctx.rng, max_iter=cfg.params["max_iter"], E=E)
                key = f"V={tag};theta={th_key(th)};tau={re:g}+{cfg.params['im_tau']:g}i"
                ctx.row("resolvent_ratio", key, r.ratio)
                ctx.row("resolvent_energy_residual", key, r.energy_residual)
                ctx.row("resolvent_converged", key, r.converged)
                up = iq.resolvent_upper_bound(modes, tau)
                ctx.row("resolvent_upper_bound", key, up)
                below &= r.ratio <= up
                vals.append(r.ratio)
                worst_res = max(worst_res, r.energy_residual)
                all_conv &= r.converged
    v = np.array(vals)
    med = float(np.median(v))
    hi, lo = float(v.max() / med), float(med / v.min())
    ctx.row("resolvent_max_over_median", "all", hi)
    ctx.row("resolvent_median_over_min", "all", lo)
    ctx.check("estimates within 4x of the median", hi <= 4 and lo <= 4, f"max/med {hi:.3g}, med/min {lo:.3g}")
    ctx.check("energy identity residual < 1e-8", worst_res < 1e-8, f"{worst_res:.3g}")
    ctx.check("lower-bound estimates stay below the truncation upper bound", below)
    if not all_conv:
        ctx.notes.append("some power iterations hit max_iter; their ratio is the best iterate")


@experiment("gap-witness", 9, thetas=[[0.7071067811865476, 0.5773502691896258]], params={"eps": [1e-2, 1e-3]})
def gap_witness(ctx: Context):
    th = ctx.cfg.theta_list()[0]
    for eps in ctx.cfg.params["eps"]:
        w = iq.gap_failure_witness(th, eps)
        key = f"eps={eps:g}"
        ok = w.identities_hold()
        err = abs(w.operator_gap() - float(w.exact_gap()))
        for m, v in (("witness_k", w.k), ("witness_l", w.l), ("witness_box", w.box),
                     ("witness_identities", ok), ("witness_gap", w.gap), ("witness_gap_error", err)):
            ctx.row(m, key, v)
        ctx.check(f"witness eps={eps:g}: identities exact, gap to 1e-12", ok and err < 1e-12 and w.gap < eps,
                  f"(k,l)=({w.k},{w.l}) gap {w.gap:.3g} err {err:.2g}")


# --------------------------------------------------------------------------
# semiclassical


def _bump(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def garding_family() -> dict[str, sc.Symbol]:
    """Nonnegative smooth symbols with a genuinely negative Weyl quantization."""
    half_cos = TorusField.from_dict(ModeSet(1, 1), {(0,): 0.5, (1,): 0.25, (-1,): 0.25})
    sin2 = TorusField.from_dict(ModeSet(1, 2), {(0,): 0.5, (2,): -0.25, (-2,): -0.25})
    return {
        "(1+cos x)/2*bump(xi-1)": sc.Symbol.tensor(half_cos, lambda xi: _bump(xi[..., 0] - 1).astype(complex), support=2.0),
        "(1+cos x)/2*xi^2*bump(xi/2)": sc.Symbol.tensor(half_cos, lambda xi: (xi[..., 0] ** 2 * _bump(xi[..., 0] / 2)).astype(complex), support=2.0),
        "sin^2 x*(xi-1)^2*bump(xi/3)": sc.Symbol.tensor(sin2, lambda xi: ((xi[..., 0] - 1) ** 2 * _bump(xi[..., 0] / 3)).astype(complex), support=3.0),
    }


@experiment(
    "weyl", 10, hs=[0.25, 0.125, 0.0625, 0.03125, 0.015625],
    params={"tail_R": [2, 4, 8, 16], "tail_h": 0.125, "tail_N": 48, "tail_theta": [0.3]},
)
def weyl(ctx: Context):
    cfg = ctx.cfg
    h = 0.1
    # special cases
    m1 = ModeSet(1, 8)
    m2 = ModeSet(2, 5)
    cx = from_tag("cosx", 1)
    errs = {}
    Mx = sc.weyl_quantize(sc.Symbol.of_x(cx), h, m1).matrix
    from ..fields import toeplitz_matrix

    errs["multiplication"] = np.max(np.abs(Mx - toeplitz_matrix(cx, m1)))
    Mxi = sc.weyl_quantize(sc.Symbol.xi_monomial((1, 0)), h, m2).matrix
    errs["xi1"] = np.max(np.abs(Mxi - np.diag(h * m2.indices[:, 0])))
    Mxi2 = sc.weyl_quantize(sc.Symbol.xi_monomial((1, 1)), h, m2).matrix
    errs["xi1*xi2"] = np.max(np.abs(Mxi2 - np.diag(h * h * m2.indices[:, 0] * m2.indices[:, 1])))
    Mc = sc.weyl_quantize(sc.Symbol.constant(1, 2.5), h, m1).matrix
    errs["constant"] = np.max(np.abs(Mc - 2.5 * np.eye(m1.size)))
    Mm = sc.weyl_quantize(sc.Symbol.tensor(cx, lambda xi: xi[..., 0].astype(complex)), h, m1).matrix
    n = m1.indices[:, 0]
    ref = np.zeros_like(Mm)
    for j, nn in enumerate(n):
        if j + 1 < len(n):
            ref[j + 1, j] = 0.5 * h * (nn + 0.5)
        if j >= 1:
            ref[j - 1, j] = 0.5 * h * (nn - 0.5)
    errs["cos x * xi midpoint"] = np.max(np.abs(Mm - ref))
    for k, v in errs.items():
        ctx.row("quantization_error", k, v)
    ctx.check("quantization special cases exact", max(errs.values()) < 1e-14, f"{max(errs.values()):.3g}")
    herm = 0.0
    for name, a in garding_family().items():
        d = sc.weyl_quantize(a, 0.05, sc.modes_for_symbol(a, 0.05)).hermitian_defect()
        ctx.row("hermitian_defect", name, d)
        herm = max(herm, d)
    ctx.check("real symbol gives Hermitian matrix 1e-10", herm < 1e-10, f"{herm:.3g}")
    # commutators with quadratic P
    g = lambda xi: np.exp(-np.sum(xi**2, -1)).astype(complex)
    cases = {
        "a(x), P=|xi|^2": (sc.Symbol.of_x(from_tag("cosx_cosy", 2)), sc.QuadraticP.laplacian(2)),
        "e^{ip.x}g(xi), P=xi1": (sc.Symbol.tensor(TorusField.plane_wave(ModeSet(2, 2), (1, -1)), g), sc.QuadraticP(0.0, (1.0, 0.0), ((0, 0), (0, 0)))),
        "e^{ip.x}g(xi), general quadratic": (sc.Symbol.tensor(TorusField.plane_wave(ModeSet(2, 2), (2, 1)), g), sc.QuadraticP(1.0, (0.3, -1.0), ((1, 0.2), (0.2, 2)))),
        "constant": (sc.Symbol.constant(2, 3.0), sc.QuadraticP.laplacian(2)),
    }
    worst = 0.0
    for name, (a, P) in cases.items():
        r = sc.commutator_check(a, P, 0.1, ModeSet(2, 6))
        ctx.row("commutator_residual", name, r)
        worst = max(worst, r)
    ctx.check("quadratic-P commutator identity < 1e-10", worst < 1e-10, f"{worst:.3g}")
    # Garding
    exps = []
    for name, a in garding_family().items():
        rows, expo = sc.garding_check(a, cfg.hs)
        for r in rows:
            ctx.row("garding_min_eig", f"{name};h={r.h:g}", r.min_eig)
        ctx.row("garding_exponent", name, expo)
        exps.append(expo)
    in_band = [0.8 <= e <= 1.2 for e in exps]
    ctx.check("Garding deficit exponent in [0.8, 1.2]", all(in_band), "fitted exponents " + ", ".join(f"{e:.3g}" for e in exps))
    # Calderon-Vaillancourt
    osc = TorusField.from_dict(ModeSet(1, 3), {(3,): 0.5, (-3,): 0.5, (1,): 0.25j, (-1,): -0.25j})
    cv = {
        "multiplication cos x": sc.Symbol.of_x(cx),
        "oscillatory bounded": sc.Symbol.tensor(osc, lambda xi: np.cos(3 * xi[..., 0]).astype(complex) * _bump(xi[..., 0] / 3), support=3.0),
    }
    for name, a in cv.items():
        rows, c0, c1, sup = sc.calderon_vaillancourt_trend(a, cfg.hs)
        for hh, nrm in rows:
            ctx.row("cv_norm", f"{name};h={hh:g}", nrm)
        ctx.row("cv_intercept_ratio", name, c0 / sup)
        ctx.check(f"CV intercept <= 4 sup|a| ({name})", c0 <= 4 * sup, f"intercept/sup = {c0 / sup:.3g}")
    # h-oscillation tails
    mt = ModeSet(1, cfg.params["tail_N"])
    E = ctx.eig(mt, tuple(cfg.params["tail_theta"]), from_tag("cosx", 1))
    u = TorusField.random(mt, ctx.rng, decay=1.0)
    worst_ratio = 1.0
    for R in cfg.params["tail_R"]:
        t1, t2 = sc.h_oscillation_deficit(E, u, cfg.params["tail_h"], R)
        ctx.row("tail_H", f"R={R}", t1)
        ctx.row("tail_free", f"R={R}", t2)
        ratio = max(t1, t2) / min(t1, t2) if min(t1, t2) > 0 else (1.0 if t1 == t2 else math.inf)
        ctx.row("tail_ratio", f"R={R}", ratio)
        if R >= 4:
            worst_ratio = max(worst_ratio, ratio)
    ctx.check("h-oscillation tails within 2x for R >= 4", worst_ratio <= 2, f"{worst_ratio:.4g}")


def _shell_bump(xi):
    r = np.linalg.norm(xi, axis=-1)
    return np.exp(-(((r - 1) / 0.5) ** 2)).astype(complex)


@experiment(
    "wigner", 10, d=2, thetas=[[0.3, 0.7]], potentials=["cosx_cosy"], hs=[0.0625], rhos=[0.125], T=[1.0],
    params={"flow_hs": [0.125, 0.0625, 0.03125], "flow_theta": [0.5, 0.0], "C_annulus": 2.0},
)
def wigner(ctx: Context):
    cfg = ctx.cfg
    h, rho, T = cfg.hs[0], cfg.rhos[0], cfg.T[0]
    modes = ModeSet(2, int(math.ceil(1.3 / h)) + 2)
    E = ctx.eig(modes, cfg.theta_list()[0], pot(cfg.potentials[0], 2))
    u = sc.spectral_window_packet(E, TorusField.random(modes, ctx.rng), h, rho)
    a_flow = sc.Symbol.tensor(TorusField.plane_wave(ModeSet(2, 1), (1, 0)), _shell_bump, tag="e^{ix1}g(|xi|)")
    syms = [sc.Symbol.constant(2, 1.0), a_flow]
    rec = sc.wigner_scan(E, u, h, rho, T, syms, flow_symbol=a_flow, C_annulus=cfg.params["C_annulus"])
    unit = float(np.max(np.abs(rec.pairing_values[0] - 1.0)))
    ctx.row("unit_pairing_error", "a=1", unit)
    ctx.row("mass_total_error", "table", abs(rec.mass_table.sum() - 1.0))
    ctx.row("outside_fraction", f"h={h:g};rho={rho:g}", rec.outside_fraction)
    ctx.row("flow_deficit", f"window packet;h={h:g}", rec.flow_deficit)
    ctx.check("pairing of a=1 equals ||psi||^2", unit < 1e-12, f"{unit:.3g}")
    ctx.check("outside-annulus mass < 5% at h=1/16, rho=1/8", rec.outside_fraction < 0.05, f"{rec.outside_fraction:.3g}")
    ctx.artifacts["wigner.json"] = rec.to_json() + "\n"
    # flow deficit trend on a resonant packet
    th = tuple(cfg.params["flow_theta"])
    ds = []
    for hh in cfg.params["flow_hs"]:
        m = ModeSet(2, int(math.ceil(1.3 / hh)) + 2)
        Eh = ctx.eig(m, th, None)
        k = round(1 / hh)
        u0 = TorusField.from_dict(m, {(0, k): 1.0, (1, k): 1.0})
        d = sc.flow_deficit(Eh, a_flow, u0, hh, T)
        ctx.row("flow_deficit", f"resonant packet;h={hh:g}", d)
        ds.append(d)
    ratios = [ds[i] / ds[i + 1] for i in range(len(ds) - 1)]
    for i, r in enumerate(ratios):
        ctx.row("flow_halving_ratio", f"h={cfg.params['flow_hs'][i]:g}->{cfg.params['flow_hs'][i + 1]:g}", r)
    ok = all(1.8 <= r <= 2.2 for r in ratios)
    ctx.check("flow-invariance deficit halves with h", ok, "ratios " + ", ".join(f"{r:.4g}" for r in ratios))


@experiment(
    "normal-form", 11, thetas=[[0.3, 0.7]], potentials=["cosy", "cosx_times_cosy"], hs=[0.125, 0.0625, 0.03125],
    params={"eps": 0.25, "fiber_N": 6, "fiber_t": 0.7, "fiber_V": "cosx", "rotation": [[0, 1], [1, 0], [1, 2], [2, -3]]},
)
def normal_form(ctx: Context):
    cfg = ctx.cfg
    th = cfg.theta_list()[0]
    worst = 0.0
    csv_parts = []
    for tag in cfg.potentials:
        reps = nf.normal_form(from_tag(tag, 2), cfg.hs, th, cfg.params["eps"], tag=tag)
        for r in reps:
            key = f"V={tag};h={r.h:g}"
            ctx.row("nf_defect", key, r.defect)
            ctx.row("norm_Q", key, r.norm_Q)
            ctx.row("norm_W", key, r.norm_W)
            ctx.row("norm_R", key, r.norm_R)
            worst = max(worst, r.defect)
        q = [r.norm_Q for r in reps]
        rr = [r.norm_R for r in reps]
        qs, rs = max(q) / min(q), max(rr) / min(rr)
        ctx.row("norm_Q_spread", f"V={tag}", qs)
        ctx.row("norm_R_spread", f"V={tag}", rs)
        ctx.check(f"||Q|| h-independent within 10% (V={tag})", qs <= 1.1, f"max/min {qs:.4g}")
        ctx.check(f"||R|| within 2x across h (V={tag})", rs <= 2, f"max/min {rs:.4g}")
        body = nf.normal_form_csv(reps)
        csv_parts.append(body if not csv_parts else body.split("\n", 1)[1])
    ctx.check("normal-form identity defect < 1e-9", worst < 1e-9, f"{worst:.3g}")
    ctx.artifacts["normal_form.csv"] = "".join(csv_parts)
    # fibers
    fm = ModeSet(2, cfg.params["fiber_N"])
    w = TorusField.random(fm, ctx.rng)
    par = nf.fiber_parseval_defect(w)
    com = nf.fiber_commutation_defect(w, from_tag(cfg.params["fiber_V"], 2), th, cfg.params["fiber_t"])
    ctx.row("fiber_parseval", "random", par)
    ctx.row("fiber_commutation", f"V={cfg.params['fiber_V']}", com)
    ctx.check("fiber Parseval 1e-12", par < 1e-12, f"{par:.3g}")
    ctx.check("fiber evolution commutation 1e-9", com < 1e-9, f"{com:.3g}")
    # rational-direction change of variables
    rm = ModeSet(2, 3)
    worst_iso = worst_conj = 0.0
    for p, q in cfg.params["rotation"]:
        u = TorusField.random(rm, ctx.rng)
        ru = sc.rotate_to_rational_direction(u, p, q)
        iso = abs(ru.l2_coeff_norm() - u.l2_coeff_norm()) / u.l2_coeff_norm()
        conj = sc.rotation_conjugation_defect(u, from_tag("cosx_cosy", 2), th, p, q, 0.7) / u.l2_coeff_norm()
        ctx.row("rotation_isometry", f"(p,q)=({p},{q})", iso)
        ctx.row("rotation_conjugation", f"(p,q)=({p},{q})", conj)
        worst_iso, worst_conj = max(worst_iso, iso), max(worst_conj, conj)
    ctx.check("rotation isometry 1e-12", worst_iso < 1e-12, f"{worst_iso:.3g}")
    ctx.check("rotation conjugation 1e-9", worst_conj < 1e-9, f"{worst_conj:.3g}")


# --------------------------------------------------------------------------


def run(cfg: ExperimentConfig, cache: EigenCache | None = None) -> tuple[ResultEnvelope, dict]:
    if cfg.experiment not in REGISTRY:
        raise KeyError(f"unknown experiment {cfg.experiment!r}; known: {sorted(REGISTRY)}")
    exp = REGISTRY[cfg.experiment]
    cfg = cfg.with_defaults(exp.defaults).validate()
    ctx = Context(cfg, np.random.default_rng(cfg.seed), cache or EigenCache())
    exp.fn(ctx)
    conf = asdict(cfg)
    conf.pop("out")
    env = ResultEnvelope(cfg.experiment, cfg.digest(), conf, ctx.rows, ctx.checks, ctx.notes)
    return env, ctx.artifacts
