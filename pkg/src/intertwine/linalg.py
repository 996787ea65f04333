"""Smallest eigenvalues of batched small symmetric matrices."""

import numpy as np

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def smallest_eig_2x2(m):
    """Closed form for 2x2 symmetric ``m``: (X+Y)/2 - sqrt(((X-Y)/2)^2 + b^2)."""
    x, y, b = m[..., 0, 0], m[..., 1, 1], m[..., 0, 1]
    return 0.5 * (x + y) - np.hypot(0.5 * (x - y), b)


def jacobi_eigenvalues(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues of symmetric matrices by cyclic Jacobi rotations.

    Works on a batch ``(..., d, d)``. Sweeps stop once the off-diagonal
    Frobenius norm drops below ``tol`` times the matrix norm.
    """
    a = np.array(m, dtype=float, copy=True)
    d = a.shape[-1]
    batch = a.shape[:-2]
    a = a.reshape((-1, d, d))
    scale = np.maximum(np.sqrt(np.einsum("nij,nij->n", a, a)), np.finfo(float).tiny)
    iu = np.triu_indices(d, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2 * np.sum(a[:, iu[0], iu[1]] ** 2, axis=1))
        if np.all(off <= tol * scale):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                active = np.abs(apq) > 0
                if not np.any(active):
                    continue
                app, aqq = a[:, p, p], a[:, q, q]
                theta = np.where(active, (aqq - app) / (2 * np.where(active, apq, 1.0)), 0.0)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta**2 + 1))
                t = np.where(theta == 0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                # rotate rows and columns p, q
                ap = a[:, :, p].copy()
                aq = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * ap - s[:, None] * aq
                a[:, :, q] = s[:, None] * ap + c[:, None] * aq
                ap = a[:, p, :].copy()
                aq = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * ap - s[:, None] * aq
                a[:, q, :] = s[:, None] * ap + c[:, None] * aq
    return np.sort(np.diagonal(a, axis1=1, axis2=2), axis=-1).reshape(batch + (d,))


def smallest_eigenvalue(m):
    m = np.asarray(m, dtype=float)
    d = m.shape[-1]
    if d == 1:
        return m[..., 0, 0].copy()
    if d == 2:
        return smallest_eig_2x2(m)
    return jacobi_eigenvalues(m).min(axis=-1)
