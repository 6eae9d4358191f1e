"""Per-iteration timing of the iterative precoders versus problem size.

Each size ``(n_alloc, M)`` gets a synthetic carrier (FFT size the next power
of two at or above ``2 n_alloc``, centered allocation) with ``M`` leakage rows
just outside the band and thresholds low enough that every constraint binds.

POCS and ADMM are timed on a batch of symbols whose total size is fixed
(``batch_elems`` complex entries), so interpreter overhead stays a constant
fraction across sizes; the reported figure is seconds per iteration per
symbol, from the difference of two runs with different iteration counts.
SSP is timed per symbol as ``(t(1 + k sweeps) - t(1 sweep)) / k``.
"""

from __future__ import annotations

import csv
import gc
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .leakage import build_leakage_matrix
from .precoders import Rank1Constraint, admm_precode, dense_inverse_calls, pocs_precode, ssp_precode
from .signal import CarrierConfig, ConstellationSpec, centered_allocation, gen_ofdm_symbols

__all__ = ["BenchReport", "BenchRow", "bench_problem", "benchmark", "loglog_slope"]

DEFAULT_SIZES = ((128, 8), (256, 8), (512, 8), (1024, 8))


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    n_alloc: int
    m: int
    batch: int
    median_s_per_iter: float
    samples_s_per_iter: tuple[float, ...]


@dataclass
class BenchReport:
    rows: list[BenchRow]
    slopes: dict[str, dict[str, float | None]]
    reps: int
    dense_fallbacks: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) | {"samples_s_per_iter": list(r.samples_s_per_iter)} for r in self.rows],
            "slopes": self.slopes,
            "reps": self.reps,
            "dense_fallbacks": self.dense_fallbacks,
            "params": self.params,
        }

    def median(self, algorithm: str, n_alloc: int, m: int) -> float:
        for r in self.rows:
            if (r.algorithm, r.n_alloc, r.m) == (algorithm, n_alloc, m):
                return r.median_s_per_iter
        raise KeyError((algorithm, n_alloc, m))

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"bench.csv": out / "bench.csv", "bench.json": out / "bench.json"}
        with paths["bench.csv"].open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("algorithm", "n_alloc", "m", "batch", "median_s_per_iter"))
            for r in self.rows:
                w.writerow((r.algorithm, r.n_alloc, r.m, r.batch, repr(r.median_s_per_iter)))
        paths["bench.json"].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return paths


def bench_problem(n_alloc: int, m: int, n_symbols: int, seed: int = 0, order: int = 16):
    """Binding constraints and random data for one benchmark size."""
    fft = max(64, 1 << int(np.ceil(np.log2(2 * n_alloc))))
    cfg = CarrierConfig(fft, fft * 36 // 512, centered_allocation(fft, n_alloc))
    d = gen_ofdm_symbols(cfg, ConstellationSpec(order), n_symbols, seed)
    if m == 0:
        return [], d
    edge = n_alloc // 2 + 1
    pts = [(-1) ** j * (edge + 4 * (j // 2)) for j in range(m)]
    A = build_leakage_matrix(cfg, pts).matrix
    # threshold well below the typical leakage so every constraint is active
    gamma = 1e-4 * np.mean(np.abs(d[: min(n_symbols, 64)] @ A.T) ** 2, axis=0)
    return [Rank1Constraint(np.conj(A[i]), float(gamma[i])) for i in range(m)], d


def _timed(fn: Callable[[], object]) -> float:
    """Wall-clock seconds for one call, with the garbage collector paused as ``timeit`` does."""
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        t = time.perf_counter()
        fn()
        return time.perf_counter() - t
    finally:
        if was_enabled:
            gc.enable()


def loglog_slope(n: Sequence[float], t: Sequence[float]) -> float | None:
    """Least-squares slope of ``log t`` against ``log n``; None when undefined."""
    n = np.asarray(n, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(np.unique(n)) < 2 or np.any(t <= 0):
        return None
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def benchmark(
    sizes: Sequence[tuple[int, int]] = DEFAULT_SIZES,
    algorithms: Sequence[str] = ("pocs", "admm", "ssp"),
    reps: int = 5,
    rho: float = 10.0,
    seed: int = 0,
    order: int = 16,
    batch_elems: int = 1 << 18,
    iters: tuple[int, int] = (2, 12),
    ssp_sweeps: int = 5,
) -> BenchReport:
    """Median per-iteration wall-clock time for every (algorithm, size).

    Parameters
    ----------
    sizes : sequence of (n_alloc, M)
    reps : int
        Repetitions per size (at least 5 for a stable median).
    batch_elems : int
        Approximate ``batch * n_alloc`` for the POCS/ADMM timing batch.
    iters : (int, int)
        Iteration counts whose time difference gives the POCS/ADMM figure.
    ssp_sweeps : int
        Extra sweeps whose time difference gives the SSP figure.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    unknown = set(algorithms) - {"pocs", "admm", "ssp"}
    if unknown:
        raise ValueError(f"cannot benchmark {sorted(unknown)}")
    k1, k2 = iters
    if not 1 <= k1 < k2:
        raise ValueError("iters must satisfy 1 <= k1 < k2")
    rows: list[BenchRow] = []
    dense_before = dense_inverse_calls()
    for n_alloc, m in sizes:
        batch = max(1, batch_elems // n_alloc)
        constraints, d = bench_problem(n_alloc, m, max(batch, reps), seed, order)
        for algo in algorithms:
            samples = []
            # untimed warm-up so first-touch allocation does not land in a sample
            if algo == "ssp":
                ssp_precode(constraints, d[0], n_iter=1 + ssp_sweeps, record_trace=False)
            elif algo == "pocs":
                pocs_precode(constraints, d[:batch], max_iter=k1, record_trace=False)
            else:
                admm_precode(constraints, d[:batch], rho=rho, max_iter=k1, record_trace=False)
            for r in range(reps):
                if algo == "ssp":
                    x = d[r]
                    t_lo = _timed(lambda: ssp_precode(constraints, x, n_iter=1, record_trace=False))
                    t_hi = _timed(lambda: ssp_precode(constraints, x, n_iter=1 + ssp_sweeps, record_trace=False))
                    samples.append(max(t_hi - t_lo, 0.0) / ssp_sweeps)
                    continue
                xb = d[:batch]
                if algo == "pocs":
                    run = lambda k: pocs_precode(constraints, xb, max_iter=k, record_trace=False)  # noqa: E731
                else:
                    run = lambda k: admm_precode(constraints, xb, rho=rho, max_iter=k, record_trace=False)  # noqa: E731
                t_lo, t_hi = _timed(lambda: run(k1)), _timed(lambda: run(k2))
                samples.append(max(t_hi - t_lo, 0.0) / (k2 - k1) / batch)
            rows.append(BenchRow(algo, n_alloc, m, 1 if algo == "ssp" else batch, float(np.median(samples)), tuple(samples)))

    slopes: dict[str, dict[str, float | None]] = {}
    for algo in algorithms:
        by_m: dict[str, float | None] = {}
        for m in sorted({r.m for r in rows if r.algorithm == algo}):
            sel = [r for r in rows if r.algorithm == algo and r.m == m]
            by_m[str(m)] = loglog_slope([r.n_alloc for r in sel], [r.median_s_per_iter for r in sel])
        slopes[algo] = by_m
    params = {"rho": rho, "seed": seed, "order": order, "batch_elems": batch_elems, "iters": list(iters), "ssp_sweeps": ssp_sweeps}
    return BenchReport(rows, slopes, reps, dense_inverse_calls() - dense_before, params)
