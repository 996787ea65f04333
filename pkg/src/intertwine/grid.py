"""Uniform tensor grids used as evidence grids and FD meshes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    box: tuple  # ((lo, hi), ...)
    counts: tuple  # nodes per axis, endpoints included

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        counts = self.counts
        if np.isscalar(counts):
            counts = (int(counts),) * len(box)
        counts = tuple(int(n) for n in counts)
        if len(counts) != len(box):
            raise ValueError("box and counts disagree on dimension")
        if any(n < 2 for n in counts) or any(hi <= lo for lo, hi in box):
            raise ValueError("degenerate grid")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def cube(cls, half_width, n, dim):
        return cls(((-half_width, half_width),) * dim, (n,) * dim)

    @property
    def dim(self):
        return len(self.box)

    @property
    def spacing(self):
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.box, self.counts))

    def axes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.box, self.counts)]

    def nodes(self):
        """All nodes, shape (N, d), last axis varying fastest."""
        return np.array(list(itertools.product(*self.axes())))

    def uniform(self, n, seed=0):
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        return lo + (hi - lo) * rng.uniform(size=(n, self.dim))

    def describe(self) -> dict:
        return {"box": [list(b) for b in self.box], "counts": list(self.counts)}
