"""Independent reference computations used by the tests.

None of these reuse the package's solvers: the projection oracle works in an
orthonormal basis of ``span{x, u}`` with a dense 2x2 solve and a scalar root
find; the KKT oracle recovers multipliers by non-negative least squares.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq, nnls


def projection_2d(x: np.ndarray, u: np.ndarray, b: float) -> np.ndarray:
    """Nearest point to ``x`` in ``{z : |u^H z|^2 <= b}``, solved inside ``span{x, u}``."""
    if abs(np.vdot(u, x)) ** 2 <= b:
        return x.copy()
    q, _ = np.linalg.qr(np.stack([x, u], axis=1))  # n x min(n, 2)
    xc = q.conj().T @ x
    uc = q.conj().T @ u
    outer = np.outer(uc, uc.conj())

    def z_of(lam):
        return np.linalg.solve(np.eye(len(xc)) + lam * outer, xc)

    def excess(lam):
        return abs(np.vdot(uc, z_of(lam))) ** 2 / b - 1.0

    hi = 1.0 / np.vdot(uc, uc).real
    while excess(hi) > 0:
        hi *= 4.0
    lam = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return q @ z_of(lam)


def kkt_residual(us: np.ndarray, bs: np.ndarray, d: np.ndarray, x: np.ndarray) -> float:
    """Worst normalized KKT violation of ``x`` for ``min ||d - x||^2 s.t. |u_m^H x|^2 <= b_m``.

    Stationarity requires ``d - x = sum_m mu_m u_m (u_m^H x)`` with ``mu >= 0``;
    the multipliers are the NNLS fit of that identity.
    """
    us = np.atleast_2d(us)
    w = us.conj() @ x
    cols = (us * w[:, None]).T
    lhs = np.concatenate([cols.real, cols.imag])
    rhs = np.concatenate([(d - x).real, (d - x).imag])
    mu, _ = nnls(lhs, rhs)
    scale = np.linalg.norm(d)
    stationarity = np.linalg.norm(d - x - cols @ mu) / scale
    ratio = np.abs(w) ** 2 / bs
    primal = max(0.0, float(np.max(ratio - 1.0)))
    norms = np.sum(np.abs(us) ** 2, axis=1)
    slackness = float(np.max(np.abs(mu * norms * (ratio - 1.0))))
    return max(stationarity, primal, slackness)


def random_feasible_points(us, bs, center, n_points, rng, scales=(1e-4, 1.0)):
    """``n_points`` strictly feasible points scattered around ``center`` at log-uniform radii."""
    us = np.atleast_2d(us)
    n = center.shape[0]
    base = np.linalg.norm(center)
    out = []
    while sum(len(o) for o in out) < n_points:
        k = 4 * n_points
        r = base * 10 ** rng.uniform(np.log10(scales[0]), np.log10(scales[1]), size=k)
        dirs = rng.normal(size=(k, n)) + 1j * rng.normal(size=(k, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        z = center + r[:, None] * dirs
        ok = np.all(np.abs(z @ us.conj().T) ** 2 < bs, axis=1)
        out.append(z[ok])
    return np.concatenate(out)[:n_points]
