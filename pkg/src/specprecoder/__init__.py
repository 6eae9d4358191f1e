"""Low-complexity mask-compliant spectral precoding for CP-OFDM.

Modules
-------
signal
    Carrier numerology, QAM data and CP-OFDM modulation.
leakage
    Closed-form out-of-band leakage operator and emission masks.
precoders
    NSP, POCS, consensus ADMM, SSP and a Dykstra reference solver.
metrics
    EVM, averaged periodogram PSD, ACLR and mask margins.
scenario, cli
    Config parsing, reproducible experiment runs and benchmarks.
"""

from .leakage import (
    SEM1,
    SEM2,
    EmissionMask,
    LeakageMatrix,
    MaskSpec,
    build_leakage_matrix,
    leakage_coefficient,
    leakage_direct_sum,
    mask_to_gamma,
    oobe_amplitudes,
    read_mask_file,
    write_mask_file,
)
from .metrics import EvmReport, PsdEstimate, aclr_first_adjacent, evm, psd_periodogram, sem_margin
from .precoders import (
    PrecoderResult,
    Rank1Constraint,
    admm_precode,
    constraints_from,
    dense_inverse_calls,
    dykstra_oracle,
    nsp_precode,
    pocs_precode,
    project_rank1,
    sherman_morrison_apply,
    ssp_precode,
)
from .signal import CarrierConfig, ConstellationSpec, centered_allocation, gen_ofdm_symbol, ofdm_modulate

__version__ = "0.1.0"

__all__ = [
    "CarrierConfig",
    "ConstellationSpec",
    "EmissionMask",
    "EvmReport",
    "LeakageMatrix",
    "MaskSpec",
    "PrecoderResult",
    "PsdEstimate",
    "Rank1Constraint",
    "SEM1",
    "SEM2",
    "__version__",
    "aclr_first_adjacent",
    "admm_precode",
    "build_leakage_matrix",
    "centered_allocation",
    "constraints_from",
    "dense_inverse_calls",
    "dykstra_oracle",
    "evm",
    "gen_ofdm_symbol",
    "leakage_coefficient",
    "leakage_direct_sum",
    "mask_to_gamma",
    "nsp_precode",
    "ofdm_modulate",
    "oobe_amplitudes",
    "pocs_precode",
    "project_rank1",
    "psd_periodogram",
    "read_mask_file",
    "sem_margin",
    "sherman_morrison_apply",
    "ssp_precode",
    "write_mask_file",
]
