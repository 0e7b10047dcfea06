import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blochobs import inequalities as iq
from blochobs.fields import ModeSet, TorusField
from blochobs.spectral import assemble_operator

SQRT_2PI = math.sqrt(2 * math.pi)


def test_sphere_25():
    C = iq.enumerate_cluster("sphere", iq.ClusterParams((0.0, 0.0)), lam=25)
    expect = {(5, 0), (-5, 0), (0, 5), (0, -5)} | {(a, b) for a in (3, -3, 4, -4) for b in (3, -3, 4, -4) if abs(a) != abs(b)}
    assert C.as_set() == expect and len(C) == 12
    assert [tuple(p) for p in C.points] == sorted(expect)


def test_sphere_half_shift():
    C = iq.enumerate_cluster("sphere", iq.ClusterParams((0.5, 0.0)), lam=0.25)
    assert C.as_set() == {(0, 0), (1, 0)}


def test_enumeration_errors():
    with pytest.raises(ValueError):
        iq.enumerate_cluster("sphere", iq.ClusterParams((0.0, 0.0)))
    with pytest.raises(ValueError):
        iq.enumerate_cluster("disc", iq.ClusterParams((0.0, 0.0)), lam=1)
    with pytest.raises(ValueError):
        iq.enumerate_cluster("sphere", iq.ClusterParams((0.0, 0.0)), lam=25, radius=4)
    with pytest.raises(ValueError):
        iq.ClusterParams((0.0, 0.0), -1.0, 0.5)
    with pytest.raises(ValueError):
        iq.ClusterParams((1.5, 0.0))


def _brute(kind, th, kappa, h):
    R = int(2 / h) + 3
    t1, t2 = Fraction(th[0]), Fraction(th[1])
    H, K2 = Fraction(h), Fraction(kappa) ** 2
    out = set()
    for a in range(-R, R + 1):
        for b in range(-R, R + 1):
            q = (a - t1) ** 2 + (b - t2) ** 2
            if kind == "annulusB":
                ok = abs(H * H * q - 1) <= K2 * H * H
            else:
                # |h r - 1| <= kappa^2 h^2, squared carefully
                lo, hi = 1 - K2 * H * H, 1 + K2 * H * H
                ok = H * H * q <= hi * hi and (lo <= 0 or H * H * q >= lo * lo)
            if ok:
                out.add((a, b))
    return out


@pytest.mark.parametrize("th,kappa,h", [((0.0, 0.0), 1.0, 0.25), ((0.3, 0.7), 2.0, 0.125), ((0.5, 0.5), 0.5, 0.5)])
def test_annuli_match_brute_force(th, kappa, h):
    for kind in ("annulusA", "annulusB"):
        got = iq.enumerate_cluster(kind, iq.ClusterParams(th, kappa, h)).as_set()
        assert got == _brute(kind, th, kappa, h)


@given(
    st.floats(0, 1), st.floats(0, 1),
    st.sampled_from([0.5, 1.0, 2.0, 3.0]), st.sampled_from([1 / 4, 1 / 8, 1 / 16]),
)
def test_B_subset_A_and_monotone(t1, t2, kappa, h):
    if kappa * h > 1:
        return
    p = iq.ClusterParams((t1, t2), kappa, h)
    B = iq.enumerate_cluster("annulusB", p).as_set()
    A = iq.enumerate_cluster("annulusA", p).as_set()
    assert B <= A
    B2 = iq.enumerate_cluster("annulusB", iq.ClusterParams((t1, t2), kappa * 1.5, h)).as_set()
    assert B <= B2


def test_single_point_ratio():
    C = iq.enumerate_cluster("sphere", iq.ClusterParams((0.5, 0.0)), lam=0.25)
    one = iq.ClusterSet("sphere", C.params, C.points[:1], 0.25)
    z = iq.zygmund_ratio(one, np.random.default_rng(0), 10)
    assert abs(z.ratio - SQRT_2PI) < 1e-12


def test_l4_self_convolution_vs_grid(rng):
    C = iq.enumerate_cluster("sphere", iq.ClusterParams((0.0, 0.0)), lam=25)
    unit = np.ones(len(C))
    a = iq.l4_norm_points(C.points, unit)[0]
    b = iq.l4_norm_grid(C.points, unit, 256)
    assert abs(a - b) / b < 1e-3
    c = rng.standard_normal(len(C)) + 1j * rng.standard_normal(len(C))
    assert abs(iq.l4_norm_points(C.points, c)[0] - iq.l4_norm_grid(C.points, c)) / iq.l4_norm_grid(C.points, c) < 1e-3


def test_l4_hand_oracle():
    # u = 1 + e^{ix}: ||u||_4^4 = 2 pi * 2 pi * 6 on T^2
    pts = np.array([[0, 0], [1, 0]])
    val = iq.l4_norm_points(pts, np.ones(2))[0]
    assert abs(val**4 - 4 * math.pi**2 * 6) < 1e-9


def test_zygmund_growth_bounded():
    rng = np.random.default_rng(0)
    rs = []
    for lam in (25, 325, 1105):
        C = iq.enumerate_cluster("sphere", iq.ClusterParams((0.0, 0.0)), lam=lam)
        rs.append(iq.zygmund_ratio(C, rng, 200).ratio)
    assert max(rs) / rs[0] <= 2


def test_cluster_bound_rows_and_csv(rng):
    rows = iq.cluster_bound_check([(0.0, 0.0)], [0.0, 1.0], [1.0, 0.25], rng, 20)
    assert len(rows) == 4
    kappa0 = [r for r in rows if r.kappa == 0.0]
    # kappa = 0, h = 1 is the unit circle |n| = 1
    assert kappa0[0].size == 4
    base = [r for r in rows if r.kappa == 1.0 and r.h == 1.0][0]
    assert math.isfinite(base.normalized)
    text = iq.sweep_csv(rows)
    rd = list(csv.reader(io.StringIO(text)))
    assert tuple(rd[0]) == iq.SWEEP_COLUMNS
    assert len(rd) == 5 and all(r[-1] in ("lower-bound", "skipped") for r in rd[1:])


def test_regime_shape_branches():
    assert iq.regime_shape(1.0, 0.5) == pytest.approx(2**0.25 * 1.5**0.25)
    assert iq.regime_shape(4.0, 0.5) == pytest.approx(5**0.5)


# --- sectors ----------------------------------------------------------------


@pytest.mark.parametrize("th", [(0.0, 0.0), (0.3, 0.7), (0.5, 0.5)])
def test_sector_partition(th):
    dec = iq.sector_decomposition(iq.ClusterParams(th, 2.0, 1 / 16))
    assert dec.count == math.floor(math.pi / (2 * 2.0 / 16))
    allpts = np.vstack([s for s in dec.sectors if len(s)])
    assert len(allpts) == len(dec.quadrant) == len({tuple(p) for p in allpts})
    assert dec.count_constant() < 20


def test_sector_needs_kappa():
    with pytest.raises(ValueError):
        iq.sector_decomposition(iq.ClusterParams((0.0, 0.0), 0.0, 0.5))


def test_interaction_Q_stable():
    Qs = [
        iq.sector_interaction_check(iq.sector_decomposition(iq.ClusterParams(th, 2.0, 1 / 16))).Q
        for th in [(0.0, 0.0), (0.3, 0.7), (0.5, 0.5)]
    ]
    assert all(q < math.inf for q in Qs)
    assert max(Qs) - min(Qs) <= 2


def test_interaction_trivial_and_bound():
    dec = iq.sector_decomposition(iq.ClusterParams((0.0, 0.0), 2.0, 1 / 8))
    rep = iq.sector_interaction_check(dec, Q_bound=0)
    assert rep.Q >= 0 and rep.quadruples > 0
    assert (rep.Q == 0) == (not rep.violations)
    rep2 = iq.sector_interaction_check(dec, Q_bound=rep.Q)
    assert rep2.violations == []


# --- projector / resolvent -----------------------------------------------------


def test_projector_bound_dominates_single_modes():
    tau = complex(100, 1)
    best, rows = iq.spectral_projector_bound((0.0, 0.0), tau, np.random.default_rng(0))
    lam = np.array([a * a + b * b for a in range(-12, 13) for b in range(-12, 13)], float)
    single = SQRT_2PI / np.sqrt(np.abs(lam - tau)).min()
    assert best >= single * (1 - 1e-12)
    assert math.isfinite(best) and rows[0][0] == 0
    with pytest.raises(ValueError):
        iq.spectral_projector_bound((0.0, 0.0), complex(10, 0.5), np.random.default_rng(0))


def test_projector_tau_sweep_varies_little():
    vals = [iq.spectral_projector_bound((0.0, 0.0), complex(r, 1), np.random.default_rng(0), shells=8)[0] for r in (10, 100, 1000)]
    assert max(vals) / min(vals) < 4


def test_resolvent_single_mode_closed_form():
    m = ModeSet(2, 3)
    H = assemble_operator(m, (0.0, 0.0))
    tau = complex(5, 1)
    f0 = TorusField.plane_wave(m, (1, 2))
    r = iq.resolvent_norm_estimate(H, tau, f0=f0, max_iter=1)
    # ||e^{inx}||_4 / ||e^{inx}||_{4/3} = (2pi)^{2(1/4 - 3/4)}
    expect = (2 * math.pi) ** (-1.0) / abs(5 - tau)
    assert abs(r.history[0] - expect) / expect < 1e-12
    assert r.energy_residual < 1e-12


def test_resolvent_vs_sampling_oracle():
    m = ModeSet(2, 8)
    H = assemble_operator(m, (0.0, 0.0))
    tau = complex(50, 1)
    r = iq.resolvent_norm_estimate(H, tau, rng=np.random.default_rng(0))
    # sampling oracle: random inputs plus single modes near the resonance
    rng = np.random.default_rng(1)
    lp = iq._Lp(m)
    from blochobs.spectral import eigendecompose

    E = eigendecompose(H)
    solve = lambda c: E.vectors @ ((E.vectors.conj().T @ c) / (E.values - tau))
    best = 0.0
    for _ in range(500):
        f = rng.standard_normal(m.size) + 1j * rng.standard_normal(m.size)
        best = max(best, lp.norm(solve(f), 4) / lp.norm(f, 4 / 3))
    for k in range(m.size):
        e = np.zeros(m.size, complex)
        e[k] = 1
        best = max(best, lp.norm(solve(e), 4) / lp.norm(e, 4 / 3))
    assert r.ratio >= best * 0.9
    assert r.ratio <= iq.resolvent_upper_bound(m, tau)
    assert r.energy_residual < 1e-8 and r.energy_slack >= -1e-9


def test_resolvent_rejects_small_imag():
    H = assemble_operator(ModeSet(2, 2), (0.0, 0.0))
    with pytest.raises(ValueError):
        iq.resolvent_norm_estimate(H, complex(3, 0.1))
    with pytest.raises(ValueError):
        iq.resolvent_upper_bound(ModeSet(2, 2), complex(3, 0.1))


# --- gap witnesses ---------------------------------------------------------------


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_gap_witness_irrational(eps):
    th = (0.7071067811865476, 0.5773502691896258)
    w = iq.gap_failure_witness(th, eps)
    assert w.identities_hold()
    assert 0 < w.gap < eps
    assert abs(w.operator_gap() - float(w.exact_gap())) < 1e-12
    n, m = w.n, w.m
    assert n[0] ** 2 + n[1] ** 2 == m[0] ** 2 + m[1] ** 2 == 5 * (w.k**2 + w.l**2)


def test_gap_witness_known_values():
    th = (0.7071067811865476, 0.5773502691896258)
    assert (abs(iq.gap_failure_witness(th, 1e-2).k), iq.gap_failure_witness(th, 1e-3).box) == (89, 2048)


def test_gap_witness_skips_exact_zero():
    w = iq.gap_failure_witness((0.5, 0.25), 2.0)
    assert (w.k, w.l) != (1, -2) and w.gap > 0
    assert w.k * 0.5 + w.l * 0.25 != 0
    with pytest.raises(ValueError):
        iq.gap_failure_witness((0.5, 0.25), 0.0)
    with pytest.raises(RuntimeError):
        iq.gap_failure_witness((0.5, 0.5), 1e-3, K_max=64)


# --- rational directions ---------------------------------------------------------


def test_rational_directions_small():
    pq, v = iq.rational_directions(1)
    assert set(pq) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    pq2, v2 = iq.rational_directions(2)
    assert set(pq2) == set(pq) | {(1, 1), (1, -1), (-1, 1), (-1, -1)}
    assert np.allclose(np.linalg.norm(v2, axis=1), 1)


def test_rational_directions_25_brute():
    pq, _ = iq.rational_directions(25)
    brute = {(p, q) for p in range(-5, 6) for q in range(-5, 6) if p * p + q * q <= 25 and math.gcd(p, q) == 1}
    assert len(pq) == len(set(pq)) == len(brute)
    assert set(pq) == brute
    # symmetric under the 8 lattice symmetries
    for p, q in pq:
        assert {(q, p), (-p, q), (p, -q)} <= set(pq)
    with pytest.raises(ValueError):
        iq.rational_directions(0)
