"""Truncated Fourier representation of functions on the torus T^d = R^d / 2piZ^d.

A field is u(x) = sum_n c_n exp(i n.x) over a box of integer frequencies
|n|_inf <= N.  With this convention ||u||_{L2}^2 = (2pi)^d sum |c_n|^2.
"""
from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

_MAGIC = b"BLOB"


@dataclass(frozen=True)
class ModeSet:
    """Lexicographically ordered frequencies n in Z^d with |n|_inf <= N."""

    d: int
    N: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"only d=1,2 supported, got d={self.d}")
        if self.N < 0:
            raise ValueError("cutoff N must be nonnegative")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def size(self) -> int:
        return self.side**self.d

    def __len__(self):
        return self.size

    @cached_property
    def indices(self) -> np.ndarray:
        rng = range(-self.N, self.N + 1)
        idx = np.array(list(itertools.product(rng, repeat=self.d)), dtype=np.int64)
        idx.setflags(write=False)
        return idx

    def contains(self, n) -> np.ndarray:
        n = np.asarray(n)
        return np.all(np.abs(n) <= self.N, axis=-1)

    def flat_index(self, n) -> np.ndarray:
        """Position of frequency n (array (..., d)) in the lex order. No bounds check."""
        n = np.asarray(n, dtype=np.int64) + self.N
        if self.d == 1:
            return n[..., 0]
        return n[..., 0] * self.side + n[..., 1]

    def doubled(self) -> "ModeSet":
        return ModeSet(self.d, 2 * self.N)

    def grid_shape(self):
        return (self.side,) * self.d


@dataclass(frozen=True, eq=False)
class TorusField:
    modes: ModeSet
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (self.modes.size,):
            raise ValueError(f"expected {self.modes.size} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # --- constructors -------------------------------------------------
    @classmethod
    def zeros(cls, modes: ModeSet) -> "TorusField":
        return cls(modes, np.zeros(modes.size, complex))

    @classmethod
    def plane_wave(cls, modes: ModeSet, n, amplitude=1.0) -> "TorusField":
        c = np.zeros(modes.size, complex)
        n = np.atleast_1d(np.asarray(n))
        if not modes.contains(n):
            raise ValueError(f"frequency {tuple(n)} outside the mode set")
        c[modes.flat_index(n)] = amplitude
        return cls(modes, c)

    @classmethod
    def from_dict(cls, modes: ModeSet, entries: dict) -> "TorusField":
        c = np.zeros(modes.size, complex)
        for n, v in entries.items():
            n = np.atleast_1d(np.asarray(n))
            if modes.contains(n):
                c[modes.flat_index(n)] += v
        return cls(modes, c)

    @classmethod
    def random(cls, modes: ModeSet, rng: np.random.Generator, decay: float = 0.0):
        c = rng.standard_normal(modes.size) + 1j * rng.standard_normal(modes.size)
        if decay:
            c = c * (1.0 + np.sum(modes.indices**2, axis=1)) ** (-decay / 2)
        return cls(modes, c)

    @classmethod
    def from_grid(cls, values: np.ndarray, N: int) -> "TorusField":
        """Fourier coefficients with |n|_inf <= N from samples on a uniform grid."""
        values = np.asarray(values)
        d = values.ndim
        M = values.shape[0]
        if M < 2 * N + 1:
            raise ValueError("grid too coarse for the requested cutoff")
        F = np.fft.fftn(values) / M**d
        modes = ModeSet(d, N)
        pos = modes.indices % M
        return cls(modes, F[tuple(pos.T)])

    # --- basic algebra ------------------------------------------------
    def _check(self, other):
        if other.modes != self.modes:
            raise ValueError("mode-set mismatch")

    def __add__(self, other):
        self._check(other)
        return TorusField(self.modes, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return TorusField(self.modes, self.coeffs - other.coeffs)

    def scale(self, s) -> "TorusField":
        return TorusField(self.modes, s * self.coeffs)

    def conj(self) -> "TorusField":
        # conj(u)^(n) = conj(u^(-n)); reversal of the lex order maps n -> -n
        return TorusField(self.modes, np.conj(self.coeffs[::-1]))

    def coefficient(self, n) -> complex:
        n = np.atleast_1d(np.asarray(n))
        if not self.modes.contains(n):
            return 0j
        return complex(self.coeffs[self.modes.flat_index(n)])

    def l2_coeff_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def norm(self) -> float:
        """L2(T^d) norm (Parseval)."""
        return float((2 * np.pi) ** (self.modes.d / 2) * np.linalg.norm(self.coeffs))

    def inner(self, other) -> complex:
        """L2 inner product <self, other> (linear in the first slot)."""
        self._check(other)
        return complex((2 * np.pi) ** self.modes.d * np.vdot(other.coeffs, self.coeffs))

    def resample(self, modes: ModeSet) -> "TorusField":
        """Zero-pad or truncate to another cutoff of the same dimension."""
        if modes.d != self.modes.d:
            raise ValueError("dimension mismatch")
        c = np.zeros(modes.size, complex)
        keep = modes.contains(self.modes.indices)
        c[modes.flat_index(self.modes.indices[keep])] = self.coeffs[keep]
        return TorusField(modes, c)

    def grid_values(self, M: int) -> np.ndarray:
        """Samples on the uniform grid x_j = 2 pi j / M (per axis)."""
        if M < 2 * self.modes.N + 1:
            raise ValueError("grid too coarse, would alias")
        A = np.zeros((M,) * self.modes.d, complex)
        pos = self.modes.indices % M
        A[tuple(pos.T)] = self.coeffs
        return np.fft.ifftn(A) * M**self.modes.d

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return np.exp(1j * x @ self.modes.indices.T) @ self.coeffs

    def max_imag_sample(self) -> float:
        vals = self.grid_values(max(4 * self.modes.N + 2, 8))
        return float(np.max(np.abs(vals.imag))) if vals.size else 0.0

    def is_real(self, tol=1e-10) -> bool:
        return bool(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1])), initial=0.0) <= tol)

    # --- serialization ------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.modes.d,
                "N": self.modes.N,
                "order": "lex",
                "coeffs": [[float(z.real), float(z.imag)] for z in self.coeffs],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TorusField":
        obj = json.loads(text)
        if obj.get("order", "lex") != "lex":
            raise ValueError("only lex order is supported")
        modes = ModeSet(int(obj["d"]), int(obj["N"]))
        c = np.array([complex(a, b) for a, b in obj["coeffs"]])
        return cls(modes, c)

    def to_bytes(self) -> bytes:
        header = _MAGIC + struct.pack("<II", self.modes.d, self.modes.N) + b"\0" * 4
        body = np.ascontiguousarray(self.coeffs).view("<f8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TorusField":
        if blob[:4] != _MAGIC:
            raise ValueError("bad magic")
        d, N = struct.unpack("<II", blob[4:12])
        modes = ModeSet(d, N)
        data = np.frombuffer(blob[16:], dtype="<f8")
        if data.size != 2 * modes.size:
            raise ValueError("payload length does not match header")
        return cls(modes, data.view(np.complex128).copy())

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]


def toeplitz_matrix(a: TorusField, modes: ModeSet, sparse: bool = False):
    """Matrix of u -> P_N(a u) on `modes`: entry [n, m] = a^(n - m)."""
    if a.modes.d != modes.d:
        raise ValueError("dimension mismatch")
    idx = modes.indices
    if sparse:
        import scipy.sparse as sp

        rows, cols, vals = [], [], []
        nz = np.nonzero(a.coeffs)[0]
        for j in nz:
            p = a.modes.indices[j]
            tgt = idx + p
            ok = modes.contains(tgt)
            rows.append(modes.flat_index(tgt[ok]))
            cols.append(np.nonzero(ok)[0])
            vals.append(np.full(ok.sum(), a.coeffs[j]))
        if not rows:
            return sp.csr_matrix((modes.size, modes.size), dtype=complex)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(modes.size, modes.size),
        )
    diff = idx[:, None, :] - idx[None, :, :]
    inside = np.all(np.abs(diff) <= a.modes.N, axis=-1)
    out = np.zeros(inside.shape, complex)
    out[inside] = a.coeffs[a.modes.flat_index(diff[inside])]
    return out


def multiply(a: TorusField, u: TorusField) -> TorusField:
    """Exact product on the sum band (no aliasing, no truncation)."""
    if a.modes.d != u.modes.d:
        raise ValueError("dimension mismatch")
    d = a.modes.d
    out = ModeSet(d, a.modes.N + u.modes.N)
    A = np.zeros(out.grid_shape(), complex)
    B = np.zeros(out.grid_shape(), complex)
    A[tuple((a.modes.indices + out.N).T)] = a.coeffs
    B[tuple((u.modes.indices + out.N).T)] = u.coeffs
    C = fftconvolve(A, B)
    # A index i <-> freq i - out.N ; convolution index k <-> freq k - 2 out.N
    sl = tuple(slice(out.N, out.N + out.side) for _ in range(d))
    c = C[sl].reshape(-1)
    return TorusField(out, c)


def self_convolution_l4(coeffs_grid: np.ndarray) -> float:
    """sum_s |sum_{n+m=s} c_n c_m|^2 for coefficients laid out on a dense array."""
    sq = fftconvolve(coeffs_grid, coeffs_grid)
    return float(np.sum(np.abs(sq) ** 2))


def lp_norm(u: TorusField, p: float, oversample: int = 4) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    d = u.modes.d
    if p == 2:
        return u.norm()
    if p == 4:
        grid = u.coeffs.reshape(u.modes.grid_shape())
        return float(((2 * np.pi) ** d * self_convolution_l4(grid)) ** 0.25)
    M = max(oversample * (2 * u.modes.N + 1), 8)
    vals = np.abs(u.grid_values(M))
    if np.isinf(p):
        return float(vals.max())
    vol = (2 * np.pi / M) ** d
    return float((vol * np.sum(vals**p)) ** (1.0 / p))

