"""OFDM signal model: carrier numerology, QAM data generation and CP-OFDM modulation.

Subcarrier indices follow the FFT convention: grid index ``k`` in ``[0, N)``
carries the baseband frequency ``s(k) * subcarrier_spacing`` where
``s(k) = k`` for ``k < N/2`` and ``k - N`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CarrierConfig",
    "ConstellationSpec",
    "centered_allocation",
    "qam_constellation",
    "symbol_rng",
    "gen_ofdm_symbol",
    "gen_ofdm_symbols",
    "ofdm_modulate",
]


@dataclass(frozen=True)
class CarrierConfig:
    """OFDM numerology.

    Attributes
    ----------
    fft_size : int
        Number of subcarriers ``N`` of the base grid.
    cp_len : int
        Cyclic prefix length in base-rate samples.
    allocated : tuple of int
        Occupied grid indices in ``[0, N)``, in the order used for data vectors.
    subcarrier_spacing_hz : float
    oversampling : int
        Zero-padded IFFT factor used by the modulator and the leakage model.
    """

    fft_size: int
    cp_len: int
    allocated: tuple[int, ...]
    subcarrier_spacing_hz: float = 15e3
    oversampling: int = 1

    def __post_init__(self):
        object.__setattr__(self, "allocated", tuple(int(k) for k in self.allocated))
        if self.fft_size <= 0:
            raise ValueError("fft_size must be positive")
        if not 0 <= self.cp_len < self.fft_size:
            raise ValueError("cp_len must satisfy 0 <= cp_len < fft_size")
        if not self.allocated:
            raise ValueError("allocated must be non-empty")
        if any(k < 0 or k >= self.fft_size for k in self.allocated):
            raise ValueError("allocated indices must lie in [0, fft_size)")
        if len(set(self.allocated)) != len(self.allocated):
            raise ValueError("allocated indices must be unique")
        if self.subcarrier_spacing_hz <= 0:
            raise ValueError("subcarrier_spacing_hz must be positive")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")

    @property
    def n_alloc(self) -> int:
        return len(self.allocated)

    @property
    def symbol_len(self) -> int:
        """Samples per CP-OFDM symbol at the oversampled rate."""
        return self.oversampling * (self.fft_size + self.cp_len)

    @property
    def sample_rate_hz(self) -> float:
        return self.oversampling * self.fft_size * self.subcarrier_spacing_hz

    def signed_index(self, k) -> np.ndarray:
        """Signed subcarrier number ``s(k)`` of grid index ``k``."""
        k = np.asarray(k)
        return np.where(k < self.fft_size // 2 + self.fft_size % 2, k, k - self.fft_size)

    @property
    def allocated_freqs(self) -> np.ndarray:
        """Signed subcarrier numbers of the allocated indices."""
        return self.signed_index(np.array(self.allocated))


def centered_allocation(fft_size: int, n_used: int) -> tuple[int, ...]:
    """Grid indices of ``n_used`` contiguous subcarriers centered on DC.

    The DC subcarrier is included. For even ``n_used`` the extra subcarrier
    sits on the negative side, i.e. signed numbers ``-n_used//2 .. n_used//2 - 1``.
    Indices are returned in ascending frequency order.
    """
    if not 0 < n_used <= fft_size:
        raise ValueError("n_used must be in (0, fft_size]")
    signed = np.arange(-(n_used // 2), n_used - n_used // 2)
    return tuple(int(s) % fft_size for s in signed)


@dataclass(frozen=True)
class ConstellationSpec:
    """Gray-mapped square QAM with unit average energy."""

    order: int = 16
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in (4, 16, 64):
            raise ValueError(f"unsupported QAM order {self.order}; use 4, 16 or 64")
        object.__setattr__(self, "points", qam_constellation(self.order))


def _gray_decode(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def qam_constellation(order: int) -> np.ndarray:
    """Unit-energy square QAM points; entry ``i`` is the symbol for Gray label ``i``."""
    m = int(round(np.sqrt(order)))
    if m * m != order or m < 2:
        raise ValueError("order must be a square of an integer >= 2")
    bits_per_axis = m.bit_length() - 1
    labels = np.arange(order)
    i_level = _gray_decode(labels >> bits_per_axis)
    q_level = _gray_decode(labels & (m - 1))
    pts = (2 * i_level - (m - 1)) + 1j * (2 * q_level - (m - 1))
    return pts / np.sqrt(2.0 * (order - 1) / 3.0)


def symbol_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for symbol ``index`` of a run seeded with ``seed``.

    Streams are derived with ``SeedSequence`` spawn keys, so symbol ``i`` gets the
    same data whether a batch is generated serially or split across workers.
    """
    entropy = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(int(index),)))


def gen_ofdm_symbol(cfg: CarrierConfig, spec: ConstellationSpec, seed: int, index: int = 0) -> np.ndarray:
    """Draw i.i.d. uniform constellation points for the allocated subcarriers."""
    rng = symbol_rng(seed, index)
    return spec.points[rng.integers(0, spec.order, size=cfg.n_alloc)]


def gen_ofdm_symbols(cfg: CarrierConfig, spec: ConstellationSpec, n_symbols: int, seed: int) -> np.ndarray:
    """Batch of ``n_symbols`` data vectors, shape ``(n_symbols, n_alloc)``."""
    out = np.empty((n_symbols, cfg.n_alloc), dtype=complex)
    for i in range(n_symbols):
        out[i] = gen_ofdm_symbol(cfg, spec, seed, i)
    return out


def ofdm_modulate(cfg: CarrierConfig, d: Sequence[complex] | np.ndarray) -> np.ndarray:
    """CP-OFDM modulation of one data vector or a batch (last axis = subcarriers).

    The grid of size ``oversampling * N`` is zero-filled outside the allocated
    subcarriers and transformed with a unitary IFFT, so the energy of the
    symbol body (without cyclic prefix) equals ``||d||^2`` for any
    oversampling factor; the prefix adds ``N_CP / N`` of that on average. The
    last ``oversampling * N_CP`` body samples are prepended as cyclic prefix.
    """
    d = np.asarray(d, dtype=complex)
    if d.shape[-1] != cfg.n_alloc:
        raise ValueError(f"data length {d.shape[-1]} does not match {cfg.n_alloc} allocated subcarriers")
    big_n = cfg.oversampling * cfg.fft_size
    grid = np.zeros(d.shape[:-1] + (big_n,), dtype=complex)
    grid[..., cfg.allocated_freqs % big_n] = d
    body = np.fft.ifft(grid, axis=-1, norm="ortho")
    ncp = cfg.oversampling * cfg.cp_len
    if ncp == 0:
        return body
    return np.concatenate([body[..., big_n - ncp:], body], axis=-1)
