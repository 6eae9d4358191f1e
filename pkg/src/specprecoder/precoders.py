"""Spectral precoders for mask-constrained OOB emission control.

All iterative solvers target

    minimize ||d - x||^2   subject to   |a_m^T x|^2 <= gamma_m,  m = 1..M

written as M rank-1 quadratic constraints ``|u_m^H x|^2 <= b_m`` with
``u_m = conj(a_m)`` and ``b_m = gamma_m``.

NSP, POCS, ADMM and the Dykstra reference accept a single data vector or a
batch with leading axes; SSP keeps per-symbol multipliers and takes one
vector at a time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg.blas import zgerc

from .leakage import LeakageMatrix, MaskSpec

__all__ = [
    "AdmmState",
    "ConvergenceTrace",
    "NumericalError",
    "PrecoderResult",
    "Rank1Constraint",
    "SspState",
    "admm_precode",
    "constraints_from",
    "dense_inverse_calls",
    "dykstra_oracle",
    "max_violation_db",
    "nsp_matrix",
    "nsp_precode",
    "pocs_precode",
    "project_rank1",
    "sherman_morrison_apply",
    "ssp_precode",
]

log = logging.getLogger(__name__)

DB_FLOOR = -400.0
SM_DENOMINATOR_MIN = 1e-12
NSP_COND_MAX = 1e12

# incremented whenever SSP falls back to a dense solve
_dense_calls = 0


def dense_inverse_calls() -> int:
    """Number of dense fallback solves performed by SSP in this process."""
    return _dense_calls


class NumericalError(ArithmeticError):
    """Raised when a closed-form update is numerically singular."""


@dataclass(frozen=True)
class Rank1Constraint:
    """``|u^H x|^2 <= b``, i.e. one mask point with ``u = conj(a(nu))``, ``b = gamma``."""

    u: np.ndarray
    b: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        object.__setattr__(self, "u", u)
        if u.ndim != 1 or not np.linalg.norm(u) > 0:
            raise ValueError("u must be a non-zero vector")
        if not self.b > 0:
            raise ValueError("b must be positive")

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.u, self.u).real)


def constraints_from(A: LeakageMatrix | np.ndarray, mask: MaskSpec | Sequence[float]) -> list[Rank1Constraint]:
    """One rank-1 constraint per row of ``A`` with the mask thresholds."""
    mat = A.matrix if isinstance(A, LeakageMatrix) else np.asarray(A)
    gamma = mask.gamma if isinstance(mask, MaskSpec) else tuple(mask)
    if len(gamma) != mat.shape[0]:
        raise ValueError(f"{mat.shape[0]} operator rows but {len(gamma)} thresholds")
    return [Rank1Constraint(np.conj(row), g) for row, g in zip(mat, gamma)]


def _stack(constraints: Sequence[Rank1Constraint], n: int):
    """Rows ``a_m = conj(u_m)`` as an ``(M, n)`` matrix and thresholds ``(M,)``."""
    if not constraints:
        return np.zeros((0, n), dtype=complex), np.zeros(0)
    rows = np.array([np.conj(c.u) for c in constraints])
    if rows.shape[1] != n:
        raise ValueError(f"constraint length {rows.shape[1]} does not match data length {n}")
    return rows, np.array([c.b for c in constraints], dtype=float)


def _violation_db(rows: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-constraint ``10 log10(|a_m^T x|^2 / b_m)``, shape ``x.shape[:-1] + (M,)``."""
    p = np.abs(x @ rows.T) ** 2
    with np.errstate(divide="ignore"):
        v = 10.0 * np.log10(p / b)
    return np.maximum(v, DB_FLOOR)


def max_violation_db(constraints: Sequence[Rank1Constraint], x: np.ndarray) -> float:
    """Worst ``10 log10(|u^H x|^2 / b)`` over constraints (and batch); ``DB_FLOOR`` if M = 0."""
    x = np.asarray(x)
    rows, b = _stack(constraints, x.shape[-1])
    if not len(b):
        return DB_FLOOR
    return float(_violation_db(rows, b, x).max())


def _evm_pct(d: np.ndarray, x: np.ndarray) -> float:
    ref = np.vdot(d, d).real
    if ref == 0:
        return 0.0
    return 100.0 * math.sqrt(np.vdot(d - x, d - x).real / ref)


@dataclass
class ConvergenceTrace:
    """Per-iteration objective, worst violation and (ADMM) primal residual."""

    iteration: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    violation_db: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)

    def append(self, iteration: int, objective: float, violation_db: float, residual: float = math.nan):
        if self.iteration and iteration <= self.iteration[-1]:
            raise ValueError("iteration indices must increase")
        self.iteration.append(int(iteration))
        self.objective.append(float(objective))
        self.violation_db.append(float(violation_db))
        self.residual.append(float(residual))

    def __len__(self):
        return len(self.iteration)

    def first_compliant(self, tol_db: float = 0.01) -> int | None:
        """First recorded iteration whose worst violation is within ``tol_db``."""
        for it, v in zip(self.iteration, self.violation_db):
            if v <= tol_db:
                return it
        return None


@dataclass
class AdmmState:
    """Local copies ``y`` and scaled duals ``z``, shape ``(M,) + d.shape``."""

    y: np.ndarray
    z: np.ndarray
    rho: float


@dataclass
class SspState:
    mu: np.ndarray
    g_inv: np.ndarray
    phi: float = 0.0


@dataclass
class PrecoderResult:
    """Output of a precoder.

    ``evm_pct`` is the aggregate ``||d - d_bar|| / ||d||`` over the whole
    input (batch included); ``max_violation_db`` is the worst constraint
    ratio, negative when compliant.
    """

    d_bar: np.ndarray
    trace: ConvergenceTrace
    evm_pct: float
    max_violation_db: float
    iterations: int = 0
    converged: bool = True
    state: AdmmState | SspState | None = None
    diagnostics: list[str] = field(default_factory=list)


def _finish(d, x, trace, rows, b, iterations, converged, state=None, diagnostics=None):
    viol = float(_violation_db(rows, b, x).max()) if len(b) else DB_FLOOR
    return PrecoderResult(
        d_bar=x,
        trace=trace,
        evm_pct=_evm_pct(d, x),
        max_violation_db=viol,
        iterations=iterations,
        converged=converged,
        state=state,
        diagnostics=diagnostics or [],
    )


# -- rank-1 projection ------------------------------------------------------


def project_rank1(x: np.ndarray, c: Rank1Constraint) -> np.ndarray:
    """Euclidean projection onto ``{z : |u^H z|^2 <= b}``.

    Points already inside the set are returned unchanged; otherwise the
    component along ``u`` is shrunk so that ``|u^H z| = sqrt(b)``. Batched
    inputs project every vector along the last axis.
    """
    x = np.asarray(x, dtype=complex)
    w = x @ np.conj(c.u)
    mag = np.abs(w)
    outside = mag * mag > c.b
    if not np.any(outside):
        return x.copy()
    safe = np.where(outside, mag, 1.0)
    coef = np.where(outside, (math.sqrt(c.b) - mag) / (c.norm_sq * safe), 0.0) * w
    return x + coef[..., None] * c.u


def _project_rows(v: np.ndarray, rows: np.ndarray, b: np.ndarray, norm_sq: np.ndarray) -> np.ndarray:
    """Project ``v[m]`` onto constraint ``m`` for every m at once; ``v`` is ``(M, ..., n)``."""
    # u_m^H v_m = a_m^T v_m
    w = np.einsum("m...n,mn->m...", v, rows)
    mag = np.abs(w)
    bb = b.reshape((-1,) + (1,) * (w.ndim - 1))
    nn = norm_sq.reshape(bb.shape)
    outside = mag * mag > bb
    safe = np.where(outside, mag, 1.0)
    coef = np.where(outside, (np.sqrt(bb) - mag) / (nn * safe), 0.0) * w
    u = np.conj(rows).reshape((rows.shape[0],) + (1,) * (v.ndim - 2) + (rows.shape[1],))
    return v + coef[..., None] * u


# -- NSP --------------------------------------------------------------------


def _nsp_gram(mat: np.ndarray) -> np.ndarray:
    gram = mat @ mat.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > NSP_COND_MAX:
        raise np.linalg.LinAlgError(
            f"A A^H is ill-conditioned (cond = {cond:.3g}); drop duplicate or clustered frequency points"
        )
    return gram


def nsp_matrix(A: LeakageMatrix | np.ndarray) -> np.ndarray:
    """Dense notch projector ``I - A^H (A A^H)^{-1} A``."""
    mat = A.matrix if isinstance(A, LeakageMatrix) else np.asarray(A)
    n = mat.shape[1]
    if mat.shape[0] == 0:
        return np.eye(n, dtype=complex)
    gram = _nsp_gram(mat)
    return np.eye(n) - mat.conj().T @ np.linalg.solve(gram, mat)


def nsp_precode(A: LeakageMatrix | np.ndarray, d: np.ndarray, mask: MaskSpec | None = None) -> PrecoderResult:
    """Notch precoder: project ``d`` onto the null space of ``A``.

    ``mask`` only affects the reported violation figure.
    """
    mat = A.matrix if isinstance(A, LeakageMatrix) else np.asarray(A)
    d = np.asarray(d, dtype=complex)
    if d.shape[-1] != mat.shape[1]:
        raise ValueError(f"data length {d.shape[-1]} does not match operator width {mat.shape[1]}")
    if mat.shape[0] == 0:
        x = d.copy()
    else:
        gram = _nsp_gram(mat)
        coef = np.linalg.solve(gram, (d @ mat.T).reshape(-1, mat.shape[0]).T).T
        x = d - (coef @ mat.conj()).reshape(d.shape)
    rows = mat
    b = np.array(mask.gamma) if mask is not None else np.ones(mat.shape[0])
    trace = ConvergenceTrace()
    res = _finish(d, x, trace, rows, b, 1, True)
    trace.append(1, np.vdot(d - x, d - x).real, res.max_violation_db)
    return res


# -- POCS -------------------------------------------------------------------


def pocs_precode(
    constraints: Sequence[Rank1Constraint],
    d: np.ndarray,
    max_iter: int = 3000,
    tol_db: float | None = None,
    record_trace: bool = True,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> PrecoderResult:
    """Cyclic projections ``x <- P_M(...P_1(x))`` starting from ``d``.

    Stops after ``max_iter`` sweeps, or earlier once the worst violation is
    at most ``tol_db`` (when given).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    d = np.asarray(d, dtype=complex)
    rows, b = _stack(constraints, d.shape[-1])
    norm_sq = np.einsum("mn,mn->m", rows, rows.conj()).real
    sqrt_b = np.sqrt(b)
    u = np.conj(rows)
    x = d.copy()
    trace = ConvergenceTrace()
    converged = tol_db is None
    prev = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        for m in range(len(b)):
            w = x @ rows[m]
            mag = np.abs(w)
            outside = mag > sqrt_b[m]
            if np.ndim(w) == 0:
                if outside:
                    x += ((sqrt_b[m] - mag) / (norm_sq[m] * mag) * w) * u[m]
            elif np.any(outside):
                coef = np.where(outside, (sqrt_b[m] - mag) / (norm_sq[m] * np.where(outside, mag, 1.0)), 0.0)
                x += (coef * w)[..., None] * u[m]
        if callback is not None:
            callback(it, x)
        if record_trace or tol_db is not None:
            viol = float(_violation_db(rows, b, x).max()) if len(b) else DB_FLOOR
            if record_trace:
                trace.append(it, np.vdot(d - x, d - x).real, viol)
                if viol > prev + 1e-9:
                    log.debug("POCS sweep %d: worst violation rose from %.4f to %.4f dB", it, prev, viol)
                prev = viol
            if tol_db is not None and viol <= tol_db:
                converged = True
                break
    return _finish(d, x, trace, rows, b, it, converged)


# -- consensus ADMM ---------------------------------------------------------


def admm_precode(
    constraints: Sequence[Rank1Constraint],
    d: np.ndarray,
    rho: float = 10.0,
    max_iter: int = 800,
    tol_db: float | None = None,
    residual_tol: float | None = 1e-6,
    state: AdmmState | None = None,
    record_trace: bool = True,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> PrecoderResult:
    """Scaled-form consensus ADMM with one local copy per rank-1 constraint.

    Each iteration performs::

        x   = (d + rho * sum_m (y_m + z_m)) / (1 + rho M)
        y_m = P_m(x - z_m)
        z_m = z_m + y_m - x

    starting from ``y_m = z_m = 0`` unless ``state`` is supplied. With
    ``tol_db`` set, iteration stops once the worst violation of ``x`` is
    within ``tol_db`` and both the primal residual ``max_m ||y_m - x||`` and
    the dual residual ``rho sqrt(M) ||x - x_prev||`` are at most
    ``residual_tol * ||d||`` (the residual tests are skipped when
    ``residual_tol`` is None).
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    d = np.asarray(d, dtype=complex)
    rows, b = _stack(constraints, d.shape[-1])
    M = len(b)
    norm_sq = np.einsum("mn,mn->m", rows, rows.conj()).real
    if state is None:
        y = np.zeros((M,) + d.shape, dtype=complex)
        z = np.zeros_like(y)
    else:
        if state.y.shape != (M,) + d.shape or state.z.shape != (M,) + d.shape:
            raise ValueError("ADMM state shape does not match (M,) + d.shape")
        y, z = state.y.copy(), state.z.copy()
    d_norm = math.sqrt(np.vdot(d, d).real)
    trace = ConvergenceTrace()
    converged = tol_db is None
    scale = 1.0 / (1.0 + rho * M)
    x = d.copy()
    it = 0
    for it in range(1, max_iter + 1):
        x_prev = x
        x = scale * (d + rho * (y + z).sum(axis=0)) if M else d.copy()
        if M:
            y = _project_rows(x - z, rows, b, norm_sq)
            z += y - x
        if callback is not None:
            callback(it, x)
        if record_trace or tol_db is not None:
            viol = float(_violation_db(rows, b, x).max()) if M else DB_FLOOR
            resid = float(np.sqrt(np.max(np.sum(np.abs(y - x) ** 2, axis=-1)))) if M else 0.0
            dual = rho * math.sqrt(M) * float(np.sqrt(np.max(np.sum(np.abs(x - x_prev) ** 2, axis=-1))))
            if record_trace:
                trace.append(it, np.vdot(d - x, d - x).real, viol, resid)
            if tol_db is not None and viol <= tol_db and (
                residual_tol is None
                or (resid <= residual_tol * d_norm and dual <= residual_tol * d_norm)
            ):
                converged = True
                break
    return _finish(d, x, trace, rows, b, it, converged, AdmmState(y, z, rho))


# -- SSP (dual coordinate ascent with Sherman-Morrison bookkeeping) ---------


def sherman_morrison_apply(g_inv: np.ndarray, u: np.ndarray, delta_mu: float) -> np.ndarray:
    """Inverse of ``G + delta_mu u u^H`` given the Hermitian ``g_inv = G^{-1}``."""
    if delta_mu == 0:
        return g_inv.copy()
    gu = g_inv @ u
    den = 1.0 + delta_mu * np.vdot(u, gu).real
    if abs(den) < SM_DENOMINATOR_MIN:
        raise NumericalError(f"Sherman-Morrison denominator {den:.3g} is numerically zero")
    out = np.array(g_inv, dtype=complex, order="C", copy=True)
    _rank1_update(out, gu, -delta_mu / den)
    return out


def _sm_inplace(g_inv: np.ndarray, u: np.ndarray, delta_mu: float) -> None:
    gu = g_inv @ u
    den = 1.0 + delta_mu * np.vdot(u, gu).real
    if abs(den) < SM_DENOMINATOR_MIN:
        raise NumericalError(f"Sherman-Morrison denominator {den:.3g} is numerically zero")
    _rank1_update(g_inv, gu, -delta_mu / den)


def _rank1_update(a: np.ndarray, v: np.ndarray, c: float) -> None:
    """``a += c v v^H`` in place, without N x N temporaries."""
    if a.dtype == np.complex128 and a.flags.c_contiguous:
        # the transpose of a C-ordered array is Fortran-ordered, which BLAS
        # updates in place: a^T += c conj(v) conj(v)^H
        vc = np.ascontiguousarray(np.conj(v), dtype=np.complex128)
        zgerc(c, vc, vc, a=a.T, overwrite_a=1)
    else:
        a += c * np.outer(v, v.conj())


def _dense_g_inv(u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    global _dense_calls
    _dense_calls += 1
    n = u.shape[1]
    g = np.eye(n, dtype=complex) + (u.T * mu) @ u.conj()
    return np.linalg.inv(g)


def ssp_precode(
    constraints: Sequence[Rank1Constraint],
    d: np.ndarray,
    n_iter: int = 3,
    tol_db: float | None = None,
    align_phase: bool = True,
    record_trace: bool = True,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> PrecoderResult:
    """Semi-analytic precoder: coordinate ascent on the Lagrange multipliers.

    Multipliers start from the single-constraint solution
    ``mu_m = (|a_m^T d| / sqrt(gamma_m) - 1) / ||a_m||^2``. A coordinate step
    on ``m`` evaluates, with ``G_m = I + sum_{n != m} mu_n a_n^* a_n^T``::

        alpha1 = a_m^T G_m^{-1} d,   alpha2 = a_m^T G_m^{-1} a_m^*
        mu_m   = max(0, Re{alpha1 exp(-j phi) - sqrt(gamma_m)} / (sqrt(gamma_m) alpha2))

    where ``phi = arg(alpha1)`` when ``align_phase`` (so the numerator uses
    ``|alpha1|``) and ``phi = 0`` otherwise. The running inverse of
    ``I + sum mu_n a_n^* a_n^T`` is kept up to date with one Sherman-Morrison
    update per coordinate step; ``G_m^{-1}`` quantities are recovered from it
    in closed form. The output is ``(I + sum mu_m a_m^* a_m^T)^{-1} d``.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    d = np.asarray(d, dtype=complex)
    if d.ndim != 1:
        raise ValueError("ssp_precode takes one data vector at a time")
    n = d.shape[0]
    rows, b = _stack(constraints, n)
    M = len(b)
    u = np.conj(rows)
    sqrt_b = np.sqrt(b)
    lam = np.einsum("mn,mn->m", rows, rows.conj()).real
    diagnostics: list[str] = []

    mu = np.maximum((np.abs(rows @ d) * np.sqrt(lam / b) - 1.0) / lam, 0.0) if M else np.zeros(0)
    g_inv = np.eye(n, dtype=complex)
    for m in range(M):
        if mu[m] > 0:
            _sm_inplace(g_inv, u[m], mu[m])

    trace = ConvergenceTrace()
    converged = tol_db is None
    x = d.copy()
    it = 0
    for it in range(1, n_iter + 1):
        for m in range(M):
            gu = g_inv @ u[m]
            beta2 = np.vdot(u[m], gu).real
            beta1 = np.vdot(gu, d)  # u^H G^{-1} d, G^{-1} Hermitian
            # remove the m-th term: G_m^{-1} u = G^{-1} u / (1 - mu_m beta2)
            shrink = 1.0 - mu[m] * beta2
            if shrink < SM_DENOMINATOR_MIN:
                g_inv = _dense_g_inv(u, np.where(np.arange(M) == m, 0.0, mu))
                diagnostics.append(f"sweep {it}, constraint {m}: dense solve (downdate denominator {shrink:.3g})")
                gu = g_inv @ u[m]
                alpha2 = np.vdot(u[m], gu).real
                alpha1 = np.vdot(gu, d)
                mu_old = 0.0
            else:
                alpha2 = beta2 / shrink
                alpha1 = beta1 / shrink
                mu_old = mu[m]
            num = abs(alpha1) if align_phase else alpha1.real
            mu_new = max((num - sqrt_b[m]) / (sqrt_b[m] * alpha2), 0.0)
            delta = mu_new - mu_old
            if delta != 0.0:
                try:
                    _sm_inplace(g_inv, u[m], delta)
                except NumericalError as exc:
                    mu[m] = mu_new
                    g_inv = _dense_g_inv(u, mu)
                    diagnostics.append(f"sweep {it}, constraint {m}: dense solve ({exc})")
            mu[m] = mu_new
        x = g_inv @ d
        if callback is not None:
            callback(it, x)
        if record_trace or tol_db is not None:
            viol = float(_violation_db(rows, b, x).max()) if M else DB_FLOOR
            if record_trace:
                trace.append(it, np.vdot(d - x, d - x).real, viol)
            if tol_db is not None and viol <= tol_db:
                converged = True
                break
    if diagnostics:
        log.info("SSP used %d dense fallback solves", len(diagnostics))
    return _finish(d, x, trace, rows, b, it, converged, SspState(mu.copy(), g_inv), diagnostics)


# -- Dykstra reference ------------------------------------------------------


def dykstra_oracle(
    constraints: Sequence[Rank1Constraint],
    d: np.ndarray,
    max_iter: int = 100_000,
    tol: float = 1e-12,
) -> PrecoderResult:
    """Nearest point to ``d`` in the intersection of all constraint sets.

    Dykstra's cyclic projections with correction terms. Every projection
    moves the iterate along its own ``u_m``, so iterates stay in
    ``d + span{u_1..u_M}`` and the algorithm runs on the M coefficients of
    that span using the Gram matrix ``u_m^H u_n``. Stops when the per-cycle
    displacement falls below ``tol * ||d||`` for every vector in the batch;
    otherwise the result is flagged ``converged=False``.
    """
    d = np.asarray(d, dtype=complex)
    rows, b = _stack(constraints, d.shape[-1])
    M = len(b)
    trace = ConvergenceTrace()
    if M == 0:
        return _finish(d, d.copy(), trace, rows, b, 0, True)
    batch = d.reshape(-1, d.shape[-1])
    u = np.conj(rows)
    gram = rows @ u.T  # gram[m, n] = u_m^H u_n
    sqrt_b = np.sqrt(b)
    lam = np.real(np.diag(gram))
    w0 = batch @ rows.T  # u_m^H d, shape (S, M)
    c = np.zeros_like(w0)  # x = d + c @ u
    corr = np.zeros_like(w0)  # Dykstra increments, as coefficients on u_m
    w = w0.copy()
    d_norm = np.sqrt(np.sum(np.abs(batch) ** 2, axis=-1))
    thresh = tol * np.maximum(d_norm, np.finfo(float).tiny)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        c_prev = c.copy()
        for m in range(M):
            # y = x + q_m, then x = P_m(y), q_m = y - x
            c[:, m] += corr[:, m]
            w += corr[:, m, None] * gram[None, :, m]
            wm = w[:, m]
            mag = np.abs(wm)
            outside = mag > sqrt_b[m]
            t = np.where(outside, (sqrt_b[m] - mag) / (lam[m] * np.where(outside, mag, 1.0)), 0.0) * wm
            c[:, m] += t
            w += t[:, None] * gram[None, :, m]
            corr[:, m] = -t
        w = w0 + c @ gram.T
        dc = c - c_prev
        disp = np.sqrt(np.maximum(np.einsum("sm,mn,sn->s", dc.conj(), gram, dc).real, 0.0))
        if it % 100 == 0 or it == 1:
            x = batch + c @ u
            trace.append(
                it,
                float(np.sum(np.abs(batch - x) ** 2)),
                float(_violation_db(rows, b, x).max()),
                float(disp.max()),
            )
        if np.all(disp < thresh):
            converged = True
            break
    x = (batch + c @ u).reshape(d.shape)
    diagnostics = [] if converged else [f"Dykstra budget of {max_iter} cycles exhausted"]
    res = _finish(d, x, trace, rows, b, it, converged, diagnostics=diagnostics)
    # multipliers: d - x = sum_m mu_m u_m (u_m^H x)  =>  mu_m = -c_m / (u_m^H x)
    wx = np.where(np.abs(w) > 0, w, 1.0)
    res.state = SspState(mu=np.real(-c / wx).reshape(d.shape[:-1] + (M,)), g_inv=np.empty((0, 0)))
    return res
