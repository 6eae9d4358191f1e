"""Link between periodogram levels (dBm/100 kHz) and per-point leakage power.

Mask levels are specified in dBm/100 kHz relative to a signal PSD reference,
while the precoder constraints bound ``|a(nu)^T d|^2`` at single frequency
points. Both scales are pinned by measuring the unprecoded signal once per
carrier configuration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .leakage import SIGNAL_PSD_DBM_PER_100KHZ, build_leakage_matrix
from .metrics import PeriodogramAccumulator, inband_level
from .signal import CarrierConfig, ConstellationSpec, gen_ofdm_symbol, ofdm_modulate

__all__ = ["Calibration", "inband_test_points", "measure_calibration"]


@dataclass(frozen=True)
class Calibration:
    """Measured scale factors for one carrier configuration.

    Attributes
    ----------
    point_power : float
        Mean ``|a(nu)^T d|^2`` at in-band points; the constraint-scale value of
        the signal PSD reference level.
    psd_offset_db : float
        Added to ``10 log10(density * rbw)`` so the in-band plateau reads
        ``reference_dbm``.
    """

    point_power: float
    psd_offset_db: float
    reference_dbm: float
    n_symbols: int
    seed: int
    rbw_hz: float

    def to_dict(self) -> dict:
        return asdict(self)


def inband_test_points(cfg: CarrierConfig, n_base: int = 8, n_frac: int = 8) -> np.ndarray:
    """In-band frequencies over the central half of the allocation.

    Each of ``n_base`` positions is visited at ``n_frac`` evenly spaced
    fractional offsets, since the CP-OFDM spectrum ripples between subcarriers.
    """
    f = cfg.allocated_freqs
    span = f.max() - f.min()
    base = np.round(np.linspace(f.min() + 0.25 * span, f.max() - 0.25 * span, n_base))
    frac = (np.arange(n_frac) + 0.5) / n_frac
    return (base[:, None] + frac[None, :]).ravel()


def measure_calibration(
    cfg: CarrierConfig,
    constellation: ConstellationSpec,
    n_symbols: int = 10_000,
    seed: int = 0,
    reference_dbm: float = SIGNAL_PSD_DBM_PER_100KHZ,
    rbw_hz: float = 100e3,
    chunk: int = 1000,
) -> Calibration:
    """Measure both scale factors from ``n_symbols`` unprecoded symbols."""
    if n_symbols < 1:
        raise ValueError("n_symbols must be positive")
    A = build_leakage_matrix(cfg, inband_test_points(cfg), warn_inband=False).matrix
    acc = PeriodogramAccumulator(cfg)
    power = 0.0
    for start in range(0, n_symbols, chunk):
        d = np.array([gen_ofdm_symbol(cfg, constellation, seed, i) for i in range(start, min(start + chunk, n_symbols))])
        power += float(np.sum(np.abs(d @ A.T) ** 2))
        acc.add(ofdm_modulate(cfg, d))
    level = inband_level(acc.estimate(rbw_hz), cfg)
    return Calibration(
        point_power=power / (n_symbols * A.shape[0]),
        psd_offset_db=reference_dbm - level,
        reference_dbm=reference_dbm,
        n_symbols=n_symbols,
        seed=int(seed),
        rbw_hz=rbw_hz,
    )
