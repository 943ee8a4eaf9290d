from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Pmf:
    """Finite distribution over backoff values ``0..support_len-1``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty 1-D sequence")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probs must be finite and non-negative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probs sum to {total!r}, expected 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, weights) -> Pmf:
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @property
    def support_len(self) -> int:
        return self.probs.size

    def padded(self, support_len: int) -> Pmf:
        if support_len < self.support_len:
            if np.any(self.probs[support_len:] > 0):
                raise ValueError("cannot truncate non-zero mass")
            return Pmf(self.probs[:support_len])
        out = np.zeros(support_len)
        out[: self.support_len] = self.probs
        return Pmf(out)

    def __getitem__(self, k):
        return self.probs[k]

    def __len__(self):
        return self.support_len

    def __eq__(self, other):
        return isinstance(other, Pmf) and np.array_equal(self.probs, other.probs)

    def __repr__(self):
        nz = np.flatnonzero(self.probs)
        last = int(nz[-1]) if nz.size else -1
        return f"Pmf(support_len={self.support_len}, last_nonzero={last})"
