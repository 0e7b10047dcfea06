"""Exact eigen-propagation e^{-itH}, Duhamel solutions and mixed-norm ratios."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import ModeSet, TorusField
from .spectral import EigenSystem, assemble_operator, eigendecompose


def evolve(E: EigenSystem, u0: TorusField, t: float) -> TorusField:
    a = E.coefficients(u0)
    return E.synthesize(np.exp(-1j * t * E.values) * a)


def evolve_many(E: EigenSystem, u0: TorusField, times) -> np.ndarray:
    """Coefficient snapshots, shape (len(times), dim)."""
    a = E.coefficients(u0)
    ph = np.exp(-1j * np.outer(np.asarray(times, float), E.values))
    return (ph * a) @ E.vectors.T


@dataclass(frozen=True)
class SourceTerm:
    evaluator: Callable[[float], TorusField]
    regularity: str = "continuous"  # or "piecewise-constant"

    def __call__(self, t: float) -> TorusField:
        return self.evaluator(t)


@dataclass
class Trajectory:
    times: np.ndarray
    coeffs: np.ndarray  # (n_times, dim)
    modes: ModeSet
    meta: dict = field(default_factory=dict)

    @property
    def states(self) -> list[TorusField]:
        return [TorusField(self.modes, c) for c in self.coeffs]

    def norms(self) -> np.ndarray:
        return (2 * np.pi) ** (self.modes.d / 2) * np.linalg.norm(self.coeffs, axis=1)

    @property
    def final(self) -> TorusField:
        return TorusField(self.modes, self.coeffs[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm_l2"])
            for t, n in zip(self.times, self.norms()):
                w.writerow([f"{t:.12g}", f"{n:.12g}"])


def gauss_panels(a: float, b: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def evolve_inhomogeneous(
    E: EigenSystem, u0: TorusField, f: SourceTerm | None, T: float, steps: int, order: int = 8
) -> Trajectory:
    """Solve i u' = H u + f(t) on [0, T].

    Between snapshots the free flow is exact; the Duhamel integral over each
    step uses `order`-point Gauss-Legendre nodes.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if steps < 2:
        raise ValueError("need at least 2 steps")
    times = np.linspace(0.0, T, steps + 1)
    lam = E.values
    a = E.coefficients(u0)
    out = [a]
    gx, gw = np.polynomial.legendre.leggauss(order)
    f_l1 = 0.0
    for k in range(steps):
        t0, t1 = times[k], times[k + 1]
        dt = t1 - t0
        a = np.exp(-1j * dt * lam) * a
        if f is not None:
            s = 0.5 * dt * gx + 0.5 * (t0 + t1)
            w = 0.5 * dt * gw
            acc = np.zeros_like(a)
            for sq, wq in zip(s, w):
                fq = f(sq)
                acc += wq * np.exp(-1j * (t1 - sq) * lam) * E.coefficients(fq)
                f_l1 += wq * fq.norm()
            a = a - 1j * acc
        out.append(a)
    coeffs = np.array(out) @ E.vectors.T
    traj = Trajectory(times, coeffs, E.modes, {"steps": steps, "gauss_order": order})
    sup = float(traj.norms().max())
    bound = u0.norm() + f_l1
    traj.meta.update(sup_norm=sup, duhamel_bound=bound, bound_ok=bool(sup <= bound + 1e-8))
    return traj


def propagator_stability(modes: ModeSet, sequence, reference, probes: Sequence[TorusField], times) -> np.ndarray:
    """max_{t, phi} ||(e^{-itH_j} - e^{-itH}) phi|| for each (theta_j, V_j) in the sequence."""
    if not probes:
        raise ValueError("empty probe set")
    E = eigendecompose(assemble_operator(modes, *reference))
    ref = [evolve_many(E, p, times) for p in probes]
    out = []
    for theta_j, V_j in sequence:
        Ej = eigendecompose(assemble_operator(modes, theta_j, V_j))
        dev = 0.0
        for p, r in zip(probes, ref):
            diff = evolve_many(Ej, p, times) - r
            dev = max(dev, float(np.max(np.linalg.norm(diff, axis=1))) * (2 * np.pi) ** (modes.d / 2))
        out.append(dev)
    return np.array(out)


@dataclass(frozen=True)
class StrichartzResult:
    ratio: float
    time_nodes: int
    gauss_order: int
    grid: int
    mode: str


def time_l2_density(E: EigenSystem, v0: TorusField, T: float, grid: int, order: int = 16):
    """g(x) = int_0^T |u(t,x)|^2 dt on a uniform grid, by composite Gauss-Legendre."""
    spread = float(E.values.max() - E.values.min()) if E.dim else 0.0
    panels = max(4, math.ceil(spread * T / 8.0))
    nodes, weights = gauss_panels(0.0, T, panels, order)
    C = evolve_many(E, v0, nodes)
    d = E.modes.d
    g = np.zeros((grid,) * d)
    pos = E.modes.indices % grid
    for c, w in zip(C, weights):
        A = np.zeros((grid,) * d, complex)
        A[tuple(pos.T)] = c
        vals = np.fft.ifftn(A) * grid**d
        g += w * np.abs(vals) ** 2
    return g, nodes.size, order


def strichartz_ratio(E: EigenSystem, v0: TorusField, T: float, mode: str, oversample: int = 4) -> StrichartzResult:
    """Mixed norm of e^{-itH} v0 over the l2 norm of the coefficients of v0.

    LinfL2_1d:  sup_x (int_0^T |u|^2 dt)^(1/2)        (d = 1)
    L4L2_2d:    (int_{T^2} (int_0^T |u|^2 dt)^2 dx)^(1/4)   (d = 2)
    """
    d = E.modes.d
    if (mode == "LinfL2_1d") != (d == 1) or mode not in ("LinfL2_1d", "L4L2_2d"):
        raise ValueError(f"mode {mode} does not match dimension {d}")
    grid = max(oversample * (2 * E.modes.N + 1), 4 * E.modes.N + 2)
    g, nt, order = time_l2_density(E, v0, T, grid)
    if mode == "LinfL2_1d":
        val = math.sqrt(float(g.max()))
    else:
        val = float(((2 * np.pi / grid) ** 2 * np.sum(g**2)) ** 0.25)
    return StrichartzResult(val / v0.l2_coeff_norm(), nt, order, grid, mode)
