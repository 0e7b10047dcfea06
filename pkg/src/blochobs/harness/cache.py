"""On-disk cache of eigensystems keyed by (d, N, theta, V)."""
from __future__ import annotations

import hashlib
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from ..fields import ModeSet, TorusField
from ..spectral import EigenSystem, assemble_operator, eigendecompose, as_theta


def default_cache_dir() -> Path:
    env = os.environ.get("BLOCHOBS_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "blochobs"


def cache_key(modes: ModeSet, theta, V: TorusField | None) -> str:
    h = hashlib.sha256()
    h.update(f"{modes.d}:{modes.N}:".encode())
    h.update(np.asarray(as_theta(theta, modes.d), dtype="<f8").tobytes())
    h.update(b"V:" + (V.to_bytes() if V is not None else b"none"))
    return h.hexdigest()[:32]


def _digest(values, vectors) -> str:
    return hashlib.sha256(np.ascontiguousarray(values).tobytes() + np.ascontiguousarray(vectors).tobytes()).hexdigest()


class EigenCache:
    def __init__(self, root: str | Path | None = None, enabled: bool = True):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.enabled = enabled
        self.hits = self.misses = self.corrupt = 0

    def path(self, key: str) -> Path:
        return self.root / f"eig-{key}.npz"

    def get(self, modes: ModeSet, theta, V: TorusField | None) -> EigenSystem:
        H = assemble_operator(modes, theta, V)
        if not self.enabled:
            return eigendecompose(H)
        p = self.path(cache_key(modes, theta, V))
        if p.exists():
            try:
                with np.load(p) as z:
                    values, vectors, dig = z["values"], z["vectors"], str(z["digest"])
                if dig == _digest(values, vectors) and vectors.shape == (modes.size, modes.size):
                    self.hits += 1
                    return EigenSystem(modes, H.theta, values, vectors, H)
            except Exception:  # unreadable file is treated like a hash mismatch
                pass
            self.corrupt += 1
            warnings.warn(f"eigensystem cache entry {p.name} failed verification; recomputing")
        self.misses += 1
        E = eigendecompose(H)
        self._store(p, E)
        return E

    def _store(self, p: Path, E: EigenSystem):
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, values=E.values, vectors=E.vectors, digest=np.array(_digest(E.values, E.vectors)))
            os.replace(tmp, p)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
