"""Closed-form potentials and observation weights, addressed by short text tags.

Tags:  zero | const(c) | cosx | cosy | cosx_cosy (cos x + cos y) |
       cosx_times_cosy | cos(k1,k2) | smoothed_indicator(a1,a2,r) | file:<path>

smoothed_indicator(a1,a2,r) is the Fejer mean of order r of the indicator of
(a1,a2) in each coordinate (a cube in d=2).  Fejer means of a [0,1]-valued
function stay in [0,1], which keeps observation Gramians positive.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .fields import ModeSet, TorusField


def interval_coefficients(a: float, b: float, r: int) -> np.ndarray:
    """Exact Fourier coefficients of 1_(a,b) on T, frequencies -r..r."""
    p = np.arange(-r, r + 1)
    c = np.empty(p.size, complex)
    nz = p != 0
    c[~nz] = (b - a) / (2 * np.pi)
    pp = p[nz]
    c[nz] = (np.exp(-1j * pp * a) - np.exp(-1j * pp * b)) / (2j * np.pi * pp)
    return c


def fejer_weights(r: int) -> np.ndarray:
    p = np.arange(-r, r + 1)
    return 1.0 - np.abs(p) / (r + 1.0)


def smoothed_indicator(d: int, a: float, b: float, r: int) -> TorusField:
    c1 = interval_coefficients(a, b, r) * fejer_weights(r)
    if d == 1:
        return TorusField(ModeSet(1, r), c1)
    return TorusField(ModeSet(2, r), np.outer(c1, c1).reshape(-1))


def cosine(d: int, k) -> TorusField:
    k = tuple(int(v) for v in np.atleast_1d(k))
    if len(k) != d:
        raise ValueError("frequency dimension mismatch")
    N = max(abs(v) for v in k)
    return TorusField.from_dict(ModeSet(d, max(N, 1)), {k: 0.5, tuple(-v for v in k): 0.5})


def constant(d: int, c: float) -> TorusField:
    return TorusField.from_dict(ModeSet(d, 0), {(0,) * d: c})


_CALL = re.compile(r"^(\w+)\((.*)\)$")


def from_tag(tag: str, d: int) -> TorusField:
    tag = tag.strip()
    if tag.startswith("file:"):
        f = TorusField.from_json(Path(tag[5:]).read_text())
        if f.modes.d != d:
            raise ValueError("custom coefficient file has wrong dimension")
        return f
    m = _CALL.match(tag)
    name, args = (m.group(1), [float(s) for s in m.group(2).split(",") if s.strip()]) if m else (tag, [])
    if name == "zero":
        return constant(d, 0.0)
    if name == "const":
        return constant(d, args[0])
    if name == "cosx":
        return cosine(d, (1,) + (0,) * (d - 1))
    if name == "cosy":
        if d != 2:
            raise ValueError("cosy needs d=2")
        return cosine(2, (0, 1))
    if name == "cos":
        return cosine(d, [int(v) for v in args])
    if name == "cosx_cosy":
        return cosine(2, (1, 0)) + cosine(2, (0, 1))
    if name == "cosx_times_cosy":
        # cos x cos y = (cos(x+y) + cos(x-y)) / 2
        return TorusField.from_dict(
            ModeSet(2, 1), {(1, 1): 0.25, (-1, -1): 0.25, (1, -1): 0.25, (-1, 1): 0.25}
        )
    if name == "smoothed_indicator":
        a, b, r = args
        return smoothed_indicator(d, a, b, int(r))
    raise ValueError(f"unknown potential/weight tag {tag!r}")
