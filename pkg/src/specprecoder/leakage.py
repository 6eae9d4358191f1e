"""Out-of-band leakage operator and spectral emission masks.

The leakage of subcarrier ``k`` at a frequency ``nu`` (in units of the
subcarrier spacing, relative to DC) is the DTFT of the rectangular-windowed
CP-OFDM basis function. On a grid oversampled by ``O`` it reads::

    a(nu, k) = 1/(O sqrt(N)) * sum_{n=0}^{O(N+Ncp)-1} exp(j 2 pi (s_k - nu)(n - O Ncp) / (O N))

which has the Dirichlet-kernel closed form evaluated by
:func:`leakage_coefficient`. For ``O = 1`` this is the classic discrete-form
expression with ``1/sqrt(N)`` scaling; for any ``O`` the zero-offset value is
``(N + Ncp) / sqrt(N)``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .signal import CarrierConfig

__all__ = [
    "EmissionMask",
    "LeakageMatrix",
    "MaskSpec",
    "SEM1",
    "SEM2",
    "SIGNAL_PSD_DBM_PER_100KHZ",
    "build_leakage_matrix",
    "leakage_coefficient",
    "leakage_direct_sum",
    "mask_to_gamma",
    "oobe_amplitudes",
    "read_mask_file",
    "write_mask_file",
]

log = logging.getLogger(__name__)

# in-band reference level the masks are normalized against
SIGNAL_PSD_DBM_PER_100KHZ = -21.5

_DEGENERATE_SIN = 1e-12


def leakage_coefficient(cfg: CarrierConfig, nu, k):
    """Leakage amplitude of grid subcarrier ``k`` at frequency ``nu``.

    Vectorized over broadcastable ``nu`` and ``k``. Offsets where the
    denominator sine vanishes return the analytic limit ``(N + Ncp)/sqrt(N)``.
    """
    nu = np.asarray(nu, dtype=float)
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k >= cfg.fft_size):
        raise ValueError("subcarrier index out of range [0, fft_size)")
    if not np.all(np.isfinite(nu)):
        raise ValueError("frequency must be finite")
    n, ncp, o = cfg.fft_size, cfg.cp_len, cfg.oversampling
    big_n = o * n
    # reduce the offset to one period; the kernel is exactly big_n-periodic
    x = (nu - cfg.signed_index(k)) / big_n
    r = x - np.round(x)
    den = np.sin(np.pi * r)
    degenerate = np.abs(den) < _DEGENERATE_SIN
    safe_den = np.where(degenerate, 1.0, den)
    ratio = np.where(degenerate, o * (n + ncp), np.sin(np.pi * r * o * (n + ncp)) / safe_den)
    phase = np.exp(1j * np.pi * r * (o * ncp - big_n + 1))
    out = phase * ratio / (o * np.sqrt(n))
    return out[()] if out.ndim == 0 else out


def leakage_direct_sum(cfg: CarrierConfig, nu: float, k: int) -> complex:
    """Leakage amplitude by explicit summation over the symbol's samples.

    Independent of the closed form; evaluated in extended precision.
    """
    n, ncp, o = cfg.fft_size, cfg.cp_len, cfg.oversampling
    s = int(cfg.signed_index(k))
    t = np.arange(o * (n + ncp), dtype=np.longdouble) - o * ncp
    offset = np.longdouble(s) - np.longdouble(nu)
    ph = 2 * np.pi * offset * t / np.longdouble(o * n)
    total = np.sum(np.cos(ph)) + 1j * np.sum(np.sin(ph))
    return complex(total / (o * np.sqrt(np.longdouble(n))))


@dataclass(frozen=True)
class MaskSpec:
    """Discrete mask: frequency points (subcarrier units) with linear power thresholds."""

    points: tuple[float, ...]
    gamma: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.points) != len(self.gamma):
            raise ValueError("points and gamma must have equal length")
        if any(not np.isfinite(p) for p in self.points):
            raise ValueError("mask points must be finite")
        if any(not g > 0 for g in self.gamma):
            raise ValueError("gamma thresholds must be positive")

    def __len__(self):
        return len(self.points)

    def permuted(self, order: Sequence[int]) -> "MaskSpec":
        order = list(order)
        if sorted(order) != list(range(len(self))):
            raise ValueError("ordering must be a permutation of the mask points")
        return MaskSpec(
            tuple(self.points[i] for i in order), tuple(self.gamma[i] for i in order), self.label
        )


@dataclass(frozen=True)
class LeakageMatrix:
    """The ``M x n_alloc`` operator mapping allocated data to OOB amplitudes."""

    matrix: np.ndarray
    points: tuple[float, ...]
    carrier: CarrierConfig

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __len__(self):
        return self.matrix.shape[0]

    def row(self, m: int) -> np.ndarray:
        return self.matrix[m]


def build_leakage_matrix(cfg: CarrierConfig, points: Iterable[float], warn_inband: bool = True) -> LeakageMatrix:
    """Evaluate the leakage kernel at every (mask point, allocated subcarrier) pair.

    Points inside the allocated band are legal (a warning is logged unless
    ``warn_inband`` is False), since the operator is also used to measure
    in-band power.
    """
    points = tuple(float(p) for p in points)
    if not points:
        raise ValueError("at least one frequency point is required")
    lo, hi = cfg.allocated_freqs.min(), cfg.allocated_freqs.max()
    inside = [p for p in points if lo - 0.5 <= p <= hi + 0.5]
    if inside and warn_inband:
        log.warning("%d frequency point(s) lie inside the allocated band [%d, %d], e.g. %g", len(inside), lo, hi, inside[0])
    nu = np.array(points)[:, None]
    k = np.array(cfg.allocated)[None, :]
    return LeakageMatrix(np.asarray(leakage_coefficient(cfg, nu, k)), points, cfg)


def oobe_amplitudes(A: LeakageMatrix | np.ndarray, d: np.ndarray) -> np.ndarray:
    """OOB amplitudes ``A d``; ``d`` may carry leading batch axes."""
    mat = A.matrix if isinstance(A, LeakageMatrix) else np.asarray(A)
    d = np.asarray(d)
    if d.shape[-1] != mat.shape[1]:
        raise ValueError(f"data length {d.shape[-1]} does not match operator width {mat.shape[1]}")
    return d @ mat.T


def mask_to_gamma(mask_dbm_per_100khz, signal_psd_dbm_per_100khz: float, per_point_calibration) -> np.ndarray:
    """Linear per-point thresholds from absolute mask levels.

    ``per_point_calibration`` is the value of ``|a(nu)^T d|^2`` that corresponds
    to the signal PSD reference level.
    """
    mask = np.atleast_1d(np.asarray(mask_dbm_per_100khz, dtype=float))
    cal = np.broadcast_to(np.asarray(per_point_calibration, dtype=float), mask.shape)
    if np.ndim(per_point_calibration) and np.shape(per_point_calibration) != mask.shape:
        raise ValueError("calibration and mask vectors must have equal length")
    return cal * 10.0 ** ((mask - signal_psd_dbm_per_100khz) / 10.0)


@dataclass(frozen=True)
class EmissionMask:
    """Absolute emission mask as listed in a mask file."""

    frequency_khz: tuple[float, ...]
    level_dbm_per_100khz: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frequency_khz", tuple(float(f) for f in self.frequency_khz))
        object.__setattr__(self, "level_dbm_per_100khz", tuple(float(v) for v in self.level_dbm_per_100khz))
        if len(self.frequency_khz) != len(self.level_dbm_per_100khz):
            raise ValueError("frequency and level lists must have equal length")
        if not self.frequency_khz:
            raise ValueError("mask must list at least one point")

    def points(self, subcarrier_spacing_hz: float) -> tuple[float, ...]:
        """Frequencies in subcarrier-spacing units."""
        return tuple(f * 1e3 / subcarrier_spacing_hz for f in self.frequency_khz)

    def to_mask_spec(
        self,
        subcarrier_spacing_hz: float,
        point_power: float,
        signal_psd_dbm_per_100khz: float = SIGNAL_PSD_DBM_PER_100KHZ,
    ) -> MaskSpec:
        gamma = mask_to_gamma(self.level_dbm_per_100khz, signal_psd_dbm_per_100khz, point_power)
        return MaskSpec(self.points(subcarrier_spacing_hz), tuple(gamma), self.label)


_FAR_TO_NEAR_KHZ = (5010.0, 4995.0, 2565.0, 2550.0)


def _two_sided(levels: Sequence[float], label: str) -> EmissionMask:
    # points listed as (-f, +f) pairs, far to near
    freqs = tuple(x for f in _FAR_TO_NEAR_KHZ for x in (-f, f))
    return EmissionMask(freqs, tuple(v for v in levels for _ in range(2)), label)


SEM1 = _two_sided((-75.0, -75.0, -65.0, -65.0), "SEM1")
SEM2 = _two_sided((-85.0, -85.0, -75.0, -75.0), "SEM2")


_HEADER = ("frequency_khz", "mask_dbm_per_100khz")


def write_mask_file(mask: EmissionMask, path: str | Path | None = None) -> str:
    """Serialize a mask as CSV (``# label`` comment, header row, one point per line)."""
    buf = io.StringIO()
    if mask.label:
        buf.write(f"# {mask.label}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_HEADER)
    for f, v in zip(mask.frequency_khz, mask.level_dbm_per_100khz):
        w.writerow([repr(f), repr(v)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_mask_file(source: str | Path) -> EmissionMask:
    """Parse a mask CSV from a path or from its text content."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text(encoding="utf-8")
        default_label = Path(source).stem
    else:
        text = str(source)
        default_label = ""
    label = default_label
    rows = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if not rows and not header_seen:
                label = s.lstrip("#").strip() or label
            continue
        fields = [c.strip() for c in s.split(",")]
        if not header_seen:
            if tuple(fields) != _HEADER:
                raise ValueError(f"line {lineno}: expected header {','.join(_HEADER)!r}")
            header_seen = True
            continue
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected 2 fields, got {len(fields)}")
        try:
            rows.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field in {s!r}") from None
    if not rows:
        raise ValueError("mask file lists no points")
    f, v = zip(*rows)
    return EmissionMask(f, v, label)
