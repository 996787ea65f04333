"""Reference spectral gap of -L from a flux-form finite-difference discretisation.

The discrete Dirichlet form is ``sum_edges c_e (f_i - f_j)^2`` with edge
conductances ``exp(-V(midpoint)) * cross_section / h``; masses are
``exp(-V(node)) * cell_volume``. The generalised problem K f = lambda D f is
symmetrised to ``D^{-1/2} K D^{-1/2}``, whose null vector is ``D^{1/2} 1``.
Reflecting (Neumann) truncation falls out of simply omitting outside edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimensionTooLarge, NoConvergence
from .grid import GridSpec
from .potential import Potential


@dataclass(frozen=True)
class GridOperator:
    grid: GridSpec
    matrix: sp.csr_matrix  # D^{-1/2} K D^{-1/2}
    sqrt_mass: np.ndarray  # D^{1/2}, the ground vector
    boundary: str = "neumann"

    @property
    def n(self):
        return self.matrix.shape[0]

    def quadratic_form(self, f):
        """sum c_e (f_i - f_j)^2 for a function given by its node values."""
        g = self.sqrt_mass * np.asarray(f, dtype=float)
        return float(g @ (self.matrix @ g))


@dataclass(frozen=True)
class GapResult:
    lambda1: float
    residual: float  # relative Ritz residual of the shift-inverted operator
    true_residual: float  # |K y - lambda1 y| for the unit Ritz vector
    iterations: int
    n: int
    box: tuple
    smallest_ritz: float

    def as_dict(self):
        return {"lambda1": self.lambda1, "residual": self.residual,
                "true_residual": self.true_residual, "n": self.n,
                "box": [list(b) for b in self.box], "iterations": self.iterations}


def _trapezoid_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def assemble(p: Potential, grid: GridSpec) -> GridOperator:
    d = grid.dim
    if d > 2 or p.dim != d:
        raise DimensionTooLarge("finite-difference reference supports d in {1, 2}")
    axes = grid.axes()
    h = grid.spacing
    shape = tuple(len(a) for a in axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    v_nodes = p.value(mesh)
    v_ref = float(v_nodes.min())
    vol = np.ones(shape)
    for k in range(d):
        w = _trapezoid_weights(shape[k]) * h[k]
        vol = vol * w.reshape([-1 if j == k else 1 for j in range(d)])
    mass = np.exp(-(v_nodes - v_ref)) * vol

    idx = np.arange(np.prod(shape)).reshape(shape)
    rows, cols, vals = [], [], []
    for k in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        mid = 0.5 * (mesh[tuple(lo)] + mesh[tuple(hi)])
        cross = np.ones(mid.shape[:-1])
        for j in range(d):
            if j != k:
                w = _trapezoid_weights(shape[j]) * h[j]
                cross = cross * w.reshape([-1 if i == j else 1 for i in range(d)])
        cond = np.exp(-(p.value(mid) - v_ref)) * cross / h[k]
        i, j, c = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel(), cond.ravel()
        rows += [i, j]
        cols += [j, i]
        vals += [-c, -c]
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    n = idx.size
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    k_mat = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    s = 1 / np.sqrt(mass.ravel())
    sym = sp.diags(s) @ k_mat @ sp.diags(s)
    sym = (0.5 * (sym + sym.T)).tocsr()
    return GridOperator(grid, sym, np.sqrt(mass.ravel()))


def lanczos_smallest_nonzero(matrix, ground, shift=1e-2, tol=1e-8, max_iter=300, seed=0):
    """Second-smallest eigenpair of a PSD matrix whose null vector is ``ground``.

    Lanczos with full reorthogonalisation on ``(matrix + shift I)^{-1}``,
    keeping every Krylov vector orthogonal to the known ground vector.
    Returns ``(lambda1, vector, ritz_residual, iterations)``; the Ritz
    residual is measured for the shift-inverted operator, relative to its
    eigenvalue.
    """
    n = matrix.shape[0]
    q0 = ground / np.linalg.norm(ground)
    lu = splu((matrix + shift * sp.identity(n, format="csc")).tocsc())

    def op(v):
        w = lu.solve(v)
        return w - q0 * (q0 @ w)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v -= q0 * (q0 @ v)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas, betas = [], []
    for k in range(min(max_iter, n - 1)):
        w = op(basis[-1])
        alpha = basis[-1] @ w
        w -= alpha * basis[-1]
        if k > 0:
            w -= betas[-1] * basis[-2]
        q = np.array(basis)
        w -= q.T @ (q @ w)
        w -= q0 * (q0 @ w)
        beta = np.linalg.norm(w)
        alphas.append(alpha)
        t = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        theta, s = np.linalg.eigh(t)
        resid = abs(beta * s[-1, -1])
        if resid <= tol * abs(theta[-1]) or beta < 1e-300:
            y = q.T @ s[:, -1]
            return 1 / theta[-1] - shift, y / np.linalg.norm(y), resid / theta[-1], k + 1
        betas.append(beta)
        basis.append(w / beta)
    raise NoConvergence(f"Lanczos did not converge in {max_iter} iterations", residual=resid)


def lambda1(op: GridOperator, tol: float = 1e-8, max_iter: int = 300) -> GapResult:
    """Spectral gap of the discretised -L (smallest nonzero eigenvalue)."""
    lam, vec, ritz_resid, iters = lanczos_smallest_nonzero(
        op.matrix, op.sqrt_mass, tol=tol, max_iter=max_iter)
    true_resid = float(np.linalg.norm(op.matrix @ vec - lam * vec))
    # smallest Ritz value of the full operator is the deflated ground state
    q0 = op.sqrt_mass / np.linalg.norm(op.sqrt_mass)
    ground_ritz = float(q0 @ (op.matrix @ q0))
    return GapResult(float(lam), float(ritz_resid), true_resid, iters, op.n, op.grid.box,
                     min(ground_ritz, float(lam)))


def gap(p: Potential, box, resolution) -> GapResult:
    grid = GridSpec(box, resolution)
    return lambda1(assemble(p, grid))
