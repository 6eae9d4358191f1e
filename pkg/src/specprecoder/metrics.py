"""In-band (EVM) and out-of-band (PSD, ACLR, SEM margin) measurements."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .leakage import LeakageMatrix, MaskSpec
from .signal import CarrierConfig

__all__ = [
    "DB_CAP",
    "EvmReport",
    "PeriodogramAccumulator",
    "PsdEstimate",
    "aclr_first_adjacent",
    "evm",
    "inband_level",
    "psd_periodogram",
    "sem_margin",
    "sem_margin_per_symbol",
]

DB_FLOOR = -400.0
DB_CAP = 400.0
PRB_SIZE = 12


def _db(x):
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(x), DB_FLOOR)


@dataclass(frozen=True)
class EvmReport:
    overall_pct: float
    per_prb_pct: np.ndarray
    prb_weight: np.ndarray

    def edge_vs_center(self) -> tuple[float, float]:
        """Mean EVM of the first and last PRB, and of the two PRBs nearest the middle."""
        p = self.per_prb_pct
        lo = (len(p) - 2) // 2
        return float(p[[0, -1]].mean()), float(p[lo : lo + 2].mean())


def evm(d: np.ndarray, d_bar: np.ndarray, prb_size: int = PRB_SIZE) -> EvmReport:
    """EVM of ``d_bar`` against the reference ``d``, overall and per resource block.

    Both arrays may carry leading batch axes; errors and reference powers are
    pooled over the batch before the ratio is taken.
    """
    d = np.asarray(d)
    d_bar = np.asarray(d_bar)
    if d.shape != d_bar.shape:
        raise ValueError(f"shape mismatch {d.shape} vs {d_bar.shape}")
    err = np.abs(d - d_bar) ** 2
    ref = np.abs(d) ** 2
    err_sc = err.reshape(-1, d.shape[-1]).sum(axis=0)
    ref_sc = ref.reshape(-1, d.shape[-1]).sum(axis=0)
    total = ref_sc.sum()
    if total == 0:
        raise ValueError("reference vector has zero norm")
    starts = np.arange(0, d.shape[-1], prb_size)
    err_prb = np.add.reduceat(err_sc, starts)
    ref_prb = np.add.reduceat(ref_sc, starts)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_prb = np.where(ref_prb > 0, 100.0 * np.sqrt(err_prb / ref_prb), 0.0)
    return EvmReport(
        overall_pct=float(100.0 * np.sqrt(err_sc.sum() / total)),
        per_prb_pct=per_prb,
        prb_weight=ref_prb / total,
    )


@dataclass(frozen=True)
class PsdEstimate:
    """Averaged periodogram.

    ``density`` is the uncalibrated power per Hz (sums to the mean sample
    power over the band); ``psd_dbm_per_100khz`` integrates it over the
    resolution bandwidth and adds ``calibration`` dB.
    """

    freqs_hz: np.ndarray
    psd_dbm_per_100khz: np.ndarray
    n_symbols_averaged: int
    calibration: float
    density: np.ndarray
    bin_hz: float
    rbw_hz: float

    def band_power(self, lo_hz: float, hi_hz: float) -> float:
        sel = (self.freqs_hz >= lo_hz) & (self.freqs_hz <= hi_hz)
        return float(self.density[sel].sum() * self.bin_hz)


class PeriodogramAccumulator:
    """Running sum of rectangular-window periodograms of whole OFDM symbols.

    Each waveform is one CP-OFDM symbol at ``cfg.sample_rate_hz``. The FFT is
    zero-padded to ``nfft`` (default: next power of two of twice the symbol
    length), so bins sample the symbol's DTFT exactly.
    """

    def __init__(self, cfg: CarrierConfig, nfft: int | None = None):
        self.cfg = cfg
        self.n_samples = cfg.symbol_len
        if nfft is None:
            nfft = 1 << int(np.ceil(np.log2(2 * self.n_samples)))
        if nfft < self.n_samples:
            raise ValueError("nfft must be at least the symbol length")
        self.nfft = nfft
        self.count = 0
        self._acc = np.zeros(nfft)

    def add(self, waveforms: np.ndarray, chunk: int = 512) -> None:
        w = np.asarray(waveforms)
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2 or w.shape[1] != self.n_samples:
            raise ValueError(f"waveforms must have {self.n_samples} samples each, got shape {w.shape}")
        for i in range(0, w.shape[0], chunk):
            spec = np.fft.fft(w[i : i + chunk], n=self.nfft, axis=-1)
            self._acc += np.sum(np.abs(spec) ** 2, axis=0)
        self.count += w.shape[0]

    def estimate(self, rbw_hz: float = 100e3, calibration: float = 0.0) -> PsdEstimate:
        if self.count < 1:
            raise ValueError("at least one waveform is required")
        fs = self.cfg.sample_rate_hz
        nfft = self.nfft
        bin_hz = fs / nfft
        if rbw_hz < bin_hz:
            raise ValueError(f"rbw {rbw_hz} Hz is finer than the {bin_hz:.1f} Hz bin width")
        density = np.fft.fftshift(self._acc / (self.count * self.n_samples * fs))
        freqs = np.fft.fftshift(np.fft.fftfreq(nfft, d=1.0 / fs))
        width = int(round(rbw_hz / bin_hz))
        width += 1 - width % 2
        # circular moving average keeps the total power unchanged
        kernel = np.zeros(nfft)
        kernel[: width // 2 + 1] = 1.0 / width
        kernel[nfft - width // 2 :] = 1.0 / width
        smoothed = np.maximum(np.real(np.fft.ifft(np.fft.fft(density) * np.fft.fft(kernel))), 0.0)
        psd = _db(smoothed * rbw_hz)
        psd = np.where(psd > DB_FLOOR, psd + calibration, DB_FLOOR)
        return PsdEstimate(freqs, psd, self.count, float(calibration), density, bin_hz, float(rbw_hz))


def psd_periodogram(
    waveforms: Sequence[np.ndarray] | np.ndarray,
    cfg: CarrierConfig,
    rbw_hz: float = 100e3,
    calibration: float = 0.0,
    nfft: int | None = None,
) -> PsdEstimate:
    """Averaged periodogram of a batch of CP-OFDM symbols, in dBm per ``rbw_hz``.

    ``calibration`` (dB) is added to the integrated levels; see
    :class:`PeriodogramAccumulator` for the estimator.
    """
    w = np.asarray(waveforms)
    if w.ndim == 1:
        w = w[None, :]
    if w.ndim != 2 or w.shape[0] < 1:
        raise ValueError("waveforms must be a non-empty sequence of equal-length vectors")
    if w.shape[1] != cfg.symbol_len:
        raise ValueError(f"waveform length {w.shape[1]} does not match symbol length {cfg.symbol_len}")
    acc = PeriodogramAccumulator(cfg, nfft)
    acc.add(w)
    return acc.estimate(rbw_hz, calibration)


def inband_level(psd: PsdEstimate, cfg: CarrierConfig, fraction: float = 0.5) -> float:
    """Mean calibrated PSD (dBm/100 kHz, power-averaged) over the central part of the allocation."""
    f = cfg.allocated_freqs * cfg.subcarrier_spacing_hz
    center = 0.5 * (f.min() + f.max())
    half = 0.5 * fraction * (f.max() - f.min())
    sel = np.abs(psd.freqs_hz - center) <= half
    lin = 10.0 ** (psd.psd_dbm_per_100khz[sel] / 10.0)
    return float(10.0 * np.log10(lin.mean()))


def aclr_first_adjacent(
    psd: PsdEstimate,
    cfg: CarrierConfig,
    channel_bw_hz: float = 4.5e6,
    channel_spacing_hz: float = 5e6,
) -> float:
    """Worse of the lower/upper first-adjacent-channel leakage ratios, in dB.

    Power in the assigned channel (``channel_bw_hz`` around DC) over power in a
    channel of equal width centered ``channel_spacing_hz`` away. Capped at
    ``DB_CAP`` when the adjacent channel is empty.
    """
    half = 0.5 * channel_bw_hz
    top = channel_spacing_hz + half
    if psd.freqs_hz[0] > -top + psd.bin_hz or psd.freqs_hz[-1] < top - psd.bin_hz:
        raise ValueError(
            f"PSD span [{psd.freqs_hz[0]:.0f}, {psd.freqs_hz[-1]:.0f}] Hz does not cover the adjacent channels "
            f"(needs +/-{top:.0f} Hz; raise the oversampling factor)"
        )
    main = psd.band_power(-half, half)
    worst = DB_CAP
    for c in (-channel_spacing_hz, channel_spacing_hz):
        adj = psd.band_power(c - half, c + half)
        ratio = DB_CAP if adj <= 0 else min(DB_CAP, 10.0 * np.log10(main / adj)) if main > 0 else DB_FLOOR
        worst = min(worst, ratio)
    return float(worst)


def _mask_arrays(A: LeakageMatrix | np.ndarray, mask: MaskSpec):
    mat = A.matrix if isinstance(A, LeakageMatrix) else np.asarray(A)
    gamma = np.asarray(mask.gamma)
    if mat.shape[0] != gamma.shape[0]:
        raise ValueError(f"{mat.shape[0]} operator rows but {gamma.shape[0]} mask points")
    return mat, gamma


def sem_margin_per_symbol(A: LeakageMatrix | np.ndarray, mask: MaskSpec, symbols: np.ndarray) -> np.ndarray:
    """``10 log10(|a_m^T d_bar|^2 / gamma_m)`` for every symbol, shape ``(S, M)``."""
    mat, gamma = _mask_arrays(A, mask)
    x = np.atleast_2d(np.asarray(symbols))
    return _db(np.abs(x @ mat.T) ** 2 / gamma)


def sem_margin(A: LeakageMatrix | np.ndarray, mask: MaskSpec, symbols: np.ndarray) -> np.ndarray:
    """Per-point margin of the symbol-averaged emission against the mask, in dB."""
    mat, gamma = _mask_arrays(A, mask)
    x = np.atleast_2d(np.asarray(symbols))
    return _db(np.mean(np.abs(x @ mat.T) ** 2, axis=0) / gamma)
