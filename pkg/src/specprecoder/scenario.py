"""Scenario configs and reproducible experiment runs.

A scenario is a YAML document::

    schema_version: 1
    preset: sem2_16qam          # optional base document, overridden key by key
    name: my-run
    carrier: {fft_size: 512, cp_len: 36, n_prb: 25, subcarrier_spacing_hz: 15000, oversampling: 4}
    modulation: 16
    mask: SEM2                  # preset name, {file: path.csv} or inline lists
    algorithm: {name: ssp, n_iter: 3}
    n_symbols: 200
    seed: 0
    output_dir: runs/my-run
    measurement: {rbw_hz: 100000, calibration_symbols: 10000}

Unknown keys are rejected. :func:`run_scenario` precodes every symbol
independently, reduces results in symbol order and writes ``manifest.json``,
``convergence.csv``, ``psd.csv``, ``evm.csv`` and ``summary.json``.
"""

from __future__ import annotations

import copy
import csv
import functools
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import yaml

from . import __version__
from .calibration import Calibration, measure_calibration
from .leakage import SEM1, SEM2, EmissionMask, MaskSpec, build_leakage_matrix, read_mask_file
from .metrics import (
    PeriodogramAccumulator,
    aclr_first_adjacent,
    evm,
    inband_level,
    sem_margin,
    sem_margin_per_symbol,
)
from .precoders import (
    ConvergenceTrace,
    PrecoderResult,
    admm_precode,
    constraints_from,
    dykstra_oracle,
    max_violation_db,
    nsp_precode,
    pocs_precode,
    ssp_precode,
)
from .signal import CarrierConfig, ConstellationSpec, centered_allocation, gen_ofdm_symbols, ofdm_modulate

__all__ = [
    "ALGORITHMS",
    "AlgorithmParams",
    "PRESETS",
    "RunResult",
    "SCHEMA_VERSION",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "parse_scenario",
    "preset_document",
    "run_scenario",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ALGORITHMS = ("none", "nsp", "pocs", "admm", "ssp", "oracle")
MASK_PRESETS = {"SEM1": SEM1, "SEM2": SEM2}
PRB_SIZE = 12

# default iteration budgets when max_iter is not given
_DEFAULT_MAX_ITER = {"pocs": 3000, "admm": 800, "oracle": 100_000}
# symbols per work item; iterative solvers stop per symbol, so they get one each
_CHUNK = {"none": 64, "nsp": 64, "oracle": 50, "pocs": 1, "admm": 1, "ssp": 1}


class ScenarioError(ValueError):
    """Invalid scenario document.

    ``field`` is the dotted key path at fault (``None`` for syntax errors),
    ``line`` the 1-based line in the document when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"'{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class AlgorithmParams:
    """Solver knobs; fields irrelevant to the chosen algorithm are ignored.

    ``max_iter`` of ``None`` selects the per-algorithm default (POCS 3000,
    ADMM 800, oracle 100000). ``tol_db`` enables early stopping for POCS and
    ADMM only; SSP always runs ``n_iter`` sweeps. ``ordering`` permutes the
    mask points before the constraints are built.
    """

    max_iter: int | None = None
    rho: float = 10.0
    tol_db: float | None = 0.01
    residual_tol: float | None = 1e-6
    n_iter: int = 3
    align_phase: bool = True
    oracle_tol: float = 1e-12
    ordering: tuple[int, ...] | None = None

    def budget(self, algorithm: str) -> int:
        if algorithm == "ssp":
            return self.n_iter
        if algorithm in _DEFAULT_MAX_ITER:
            return self.max_iter if self.max_iter is not None else _DEFAULT_MAX_ITER[algorithm]
        return 1


@dataclass(frozen=True)
class Measurement:
    rbw_hz: float = 100e3
    channel_bw_hz: float = 4.5e6
    channel_spacing_hz: float = 5e6
    calibration_symbols: int = 10_000
    calibration_seed: int = 20240
    checkpoints: int = 25


@dataclass(frozen=True)
class Scenario:
    """Fully resolved experiment description."""

    name: str
    carrier: CarrierConfig
    constellation: ConstellationSpec
    mask: EmissionMask
    algorithm: str = "ssp"
    params: AlgorithmParams = field(default_factory=AlgorithmParams)
    n_symbols: int = 200
    seed: int = 0
    output_dir: Path = Path("out")
    measurement: Measurement = field(default_factory=Measurement)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}", "algorithm.name")
        if self.n_symbols < 1:
            raise ScenarioError("must be >= 1", "n_symbols")
        if self.params.ordering is not None and sorted(self.params.ordering) != list(range(len(self.mask.frequency_khz))):
            raise ScenarioError("must be a permutation of the mask point indices", "algorithm.ordering")

    def to_dict(self) -> dict:
        c = self.carrier
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "carrier": {
                "fft_size": c.fft_size,
                "cp_len": c.cp_len,
                "subcarrier_spacing_hz": c.subcarrier_spacing_hz,
                "oversampling": c.oversampling,
                "allocated": list(c.allocated),
            },
            "modulation": self.constellation.order,
            "mask": {
                "label": self.mask.label,
                "frequency_khz": list(self.mask.frequency_khz),
                "level_dbm_per_100khz": list(self.mask.level_dbm_per_100khz),
            },
            "algorithm": {
                "name": self.algorithm,
                **{k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.params).items()},
                "effective_max_iter": self.params.budget(self.algorithm),
            },
            "n_symbols": self.n_symbols,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "measurement": asdict(self.measurement),
        }


# -- presets ----------------------------------------------------------------


def _preset(mask: str, order: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"{mask.lower()}_{order}qam",
        "carrier": {"fft_size": 512, "cp_len": 36, "n_prb": 25, "subcarrier_spacing_hz": 15000.0, "oversampling": 4},
        "modulation": order,
        "mask": mask,
        "algorithm": {"name": "ssp", "rho": 10.0, "n_iter": 3},
        "n_symbols": 200,
        "seed": 0,
    }


PRESETS: dict[str, tuple[str, dict]] = {
    "sem1_16qam": ("25 PRBs at 15 kHz, 16-QAM, SEM1 mask (-75/-65 dBm per 100 kHz)", _preset("SEM1", 16)),
    "sem2_16qam": ("25 PRBs at 15 kHz, 16-QAM, SEM2 mask (-85/-75 dBm per 100 kHz)", _preset("SEM2", 16)),
    "sem1_64qam": ("25 PRBs at 15 kHz, 64-QAM, SEM1 mask", _preset("SEM1", 64)),
    "sem2_64qam": ("25 PRBs at 15 kHz, 64-QAM, SEM2 mask", _preset("SEM2", 64)),
}


def preset_document(name: str) -> dict:
    """A deep copy of the named preset document."""
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}", "preset")
    return copy.deepcopy(PRESETS[name][1])


# -- parsing ----------------------------------------------------------------

_TOP_KEYS = {
    "schema_version", "preset", "name", "carrier", "modulation", "mask",
    "algorithm", "n_symbols", "seed", "output_dir", "measurement",
}
_CARRIER_KEYS = {"fft_size", "cp_len", "n_prb", "n_subcarriers", "allocated", "subcarrier_spacing_hz", "oversampling"}
_ALGO_KEYS = {"name"} | set(AlgorithmParams.__dataclass_fields__)
_MASK_KEYS = {"file", "label", "frequency_khz", "level_dbm_per_100khz"}
_MEAS_KEYS = set(Measurement.__dataclass_fields__)


def _key_lines(node, prefix: tuple = (), out: dict | None = None) -> dict:
    """Map dotted key paths to the 1-based line of the key in the source."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (str(k.value),)
            out[".".join(key)] = k.start_mark.line + 1
            _key_lines(v, key, out)
    return out


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


class _Reader:
    """Typed accessors that raise :class:`ScenarioError` naming the field."""

    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: str, message: str):
        raise ScenarioError(message, path, self.lines.get(path))

    def check_keys(self, doc: Any, allowed: set, path: str = ""):
        if not isinstance(doc, dict):
            self.fail(path or "<document>", "expected a mapping")
        for k in doc:
            if k not in allowed:
                p = f"{path}.{k}" if path else str(k)
                self.fail(p, f"unknown key (allowed: {', '.join(sorted(allowed))})")

    def integer(self, doc: dict, key: str, path: str, default=None, minimum=None):
        p = f"{path}.{key}" if path else key
        v = doc.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(p, f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            self.fail(p, f"must be >= {minimum}, got {v}")
        return v

    def real(self, doc: dict, key: str, path: str, default=None, positive=False, allow_none=False):
        p = f"{path}.{key}" if path else key
        v = doc.get(key, default)
        if v is None:
            if allow_none:
                return None
            self.fail(p, "is required")
        if isinstance(v, bool):
            self.fail(p, f"expected a number, got {v!r}")
        try:
            x = float(v)  # YAML 1.1 reads '4.5e6' as a string
        except (TypeError, ValueError):
            self.fail(p, f"expected a number, got {v!r}")
        if not math.isfinite(x):
            self.fail(p, f"must be finite, got {v!r}")
        if positive and not x > 0:
            self.fail(p, f"must be positive, got {v!r}")
        return x


def _parse_carrier(r: _Reader, doc: dict) -> CarrierConfig:
    r.check_keys(doc, _CARRIER_KEYS, "carrier")
    n = r.integer(doc, "fft_size", "carrier", 512, minimum=1)
    ncp = r.integer(doc, "cp_len", "carrier", 36, minimum=0)
    given = [k for k in ("n_prb", "n_subcarriers", "allocated") if k in doc]
    if len(given) > 1:
        r.fail(f"carrier.{given[1]}", f"conflicts with carrier.{given[0]}; give exactly one allocation key")
    if "allocated" in doc:
        alloc = doc["allocated"]
        if not isinstance(alloc, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in alloc):
            r.fail("carrier.allocated", "expected a list of integer grid indices")
        allocated = tuple(alloc)
    else:
        if "n_subcarriers" in doc:
            n_used = r.integer(doc, "n_subcarriers", "carrier", minimum=1)
        else:
            n_used = PRB_SIZE * r.integer(doc, "n_prb", "carrier", 25, minimum=1)
        if n_used > n:
            r.fail(f"carrier.{given[0] if given else 'n_prb'}", f"{n_used} subcarriers exceed fft_size {n}")
        allocated = centered_allocation(n, n_used)
    scs = r.real(doc, "subcarrier_spacing_hz", "carrier", 15e3, positive=True)
    o = r.integer(doc, "oversampling", "carrier", 4, minimum=1)
    try:
        return CarrierConfig(n, ncp, allocated, scs, o)
    except ValueError as exc:
        r.fail("carrier", str(exc))


def _parse_mask(r: _Reader, spec: Any, base_dir: Path | None) -> EmissionMask:
    if isinstance(spec, str):
        if spec.upper() not in MASK_PRESETS:
            r.fail("mask", f"unknown mask preset {spec!r}; available: {', '.join(MASK_PRESETS)}")
        return MASK_PRESETS[spec.upper()]
    r.check_keys(spec, _MASK_KEYS, "mask")
    if "file" in spec:
        if set(spec) - {"file", "label"}:
            r.fail("mask.file", "a mask file cannot be combined with inline points")
        path = Path(str(spec["file"]))
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            mask = read_mask_file(path)
        except (OSError, ValueError) as exc:
            r.fail("mask.file", f"{path}: {exc}")
        return replace(mask, label=str(spec.get("label", mask.label)))
    for key in ("frequency_khz", "level_dbm_per_100khz"):
        if not isinstance(spec.get(key), list) or not spec[key]:
            r.fail(f"mask.{key}", "expected a non-empty list of numbers")
    try:
        return EmissionMask(
            tuple(float(f) for f in spec["frequency_khz"]),
            tuple(float(v) for v in spec["level_dbm_per_100khz"]),
            str(spec.get("label", "inline")),
        )
    except (TypeError, ValueError) as exc:
        r.fail("mask", str(exc))


def _parse_algorithm(r: _Reader, spec: Any) -> tuple[str, AlgorithmParams]:
    if isinstance(spec, str):
        spec = {"name": spec}
    r.check_keys(spec, _ALGO_KEYS, "algorithm")
    name = spec.get("name", "ssp")
    if name not in ALGORITHMS:
        r.fail("algorithm.name", f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    p = "algorithm"
    ordering = spec.get("ordering")
    if ordering is not None:
        if not isinstance(ordering, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in ordering):
            r.fail("algorithm.ordering", "expected a list of integer point indices")
        ordering = tuple(ordering)
    align = spec.get("align_phase", True)
    if not isinstance(align, bool):
        r.fail("algorithm.align_phase", f"expected true/false, got {align!r}")
    return name, AlgorithmParams(
        max_iter=r.integer(spec, "max_iter", p, None, minimum=1),
        rho=r.real(spec, "rho", p, 10.0, positive=True),
        tol_db=r.real(spec, "tol_db", p, 0.01, allow_none=True),
        residual_tol=r.real(spec, "residual_tol", p, 1e-6, positive=True, allow_none=True),
        n_iter=r.integer(spec, "n_iter", p, 3, minimum=1),
        align_phase=align,
        oracle_tol=r.real(spec, "oracle_tol", p, 1e-12, positive=True),
        ordering=ordering,
    )


def _parse_measurement(r: _Reader, spec: Any) -> Measurement:
    r.check_keys(spec, _MEAS_KEYS, "measurement")
    p = "measurement"
    d = Measurement()
    return Measurement(
        rbw_hz=r.real(spec, "rbw_hz", p, d.rbw_hz, positive=True),
        channel_bw_hz=r.real(spec, "channel_bw_hz", p, d.channel_bw_hz, positive=True),
        channel_spacing_hz=r.real(spec, "channel_spacing_hz", p, d.channel_spacing_hz, positive=True),
        calibration_symbols=r.integer(spec, "calibration_symbols", p, d.calibration_symbols, minimum=1),
        calibration_seed=r.integer(spec, "calibration_seed", p, d.calibration_seed, minimum=0),
        checkpoints=r.integer(spec, "checkpoints", p, d.checkpoints, minimum=1),
    )


def parse_scenario(text: str, base_dir: str | Path | None = None) -> Scenario:
    """Parse and validate a scenario document.

    Missing keys take the defaults shown in the module docstring; a
    ``preset`` key starts from that preset's document. Relative mask file
    paths resolve against ``base_dir``.

    Raises
    ------
    ScenarioError
        On YAML syntax errors (with line), unknown keys, wrong types or
        out-of-range values (naming the dotted field path).
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML parse error: {getattr(exc, 'problem', None) or exc}",
                            line=mark.line + 1 if mark else None) from None
    if doc is None:
        doc = {}
    r = _Reader(_key_lines(node) if node is not None else {})
    r.check_keys(doc, _TOP_KEYS)
    if "schema_version" not in doc:
        r.fail("schema_version", f"is required (current version: {SCHEMA_VERSION})")
    if doc["schema_version"] != SCHEMA_VERSION:
        r.fail("schema_version", f"unsupported version {doc['schema_version']!r}; expected {SCHEMA_VERSION}")
    if "preset" in doc:
        if not isinstance(doc["preset"], str) or doc["preset"] not in PRESETS:
            r.fail("preset", f"unknown preset {doc['preset']!r}; available: {', '.join(PRESETS)}")
        doc = _deep_merge(preset_document(doc["preset"]), doc)

    carrier_doc = doc.get("carrier", {})
    carrier = _parse_carrier(r, carrier_doc if carrier_doc is not None else {})
    order = r.integer(doc, "modulation", "", 16)
    try:
        constellation = ConstellationSpec(order)
    except ValueError as exc:
        r.fail("modulation", str(exc))
    mask = _parse_mask(r, doc.get("mask", "SEM2"), Path(base_dir) if base_dir is not None else None)
    algorithm, params = _parse_algorithm(r, doc.get("algorithm", {}))
    n_symbols = r.integer(doc, "n_symbols", "", 200, minimum=1)
    seed = r.integer(doc, "seed", "", 0, minimum=0)
    name = doc.get("name", doc.get("preset", "scenario"))
    if not isinstance(name, str) or not name:
        r.fail("name", "expected a non-empty string")
    output_dir = doc.get("output_dir", f"runs/{name}")
    if not isinstance(output_dir, str):
        r.fail("output_dir", "expected a path string")
    measurement = _parse_measurement(r, doc.get("measurement", {}) or {})
    if params.ordering is not None and sorted(params.ordering) != list(range(len(mask.frequency_khz))):
        r.fail("algorithm.ordering", f"must be a permutation of 0..{len(mask.frequency_khz) - 1}")
    return Scenario(name, carrier, constellation, mask, algorithm, params, n_symbols, seed, Path(output_dir), measurement)


def load_scenario(source: str | Path) -> Scenario:
    """Parse a scenario file, or build a preset when ``source`` names one."""
    path = Path(source)
    if not path.exists() and str(source) in PRESETS:
        return parse_scenario(yaml.safe_dump(preset_document(str(source))))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read config: {exc}") from None
    return parse_scenario(text, base_dir=path.parent)


# -- running ----------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _cached_calibration(cfg: CarrierConfig, order: int, n_symbols: int, seed: int, rbw_hz: float) -> Calibration:
    return measure_calibration(cfg, ConstellationSpec(order), n_symbols=n_symbols, seed=seed, rbw_hz=rbw_hz)


def scenario_calibration(s: Scenario) -> Calibration:
    m = s.measurement
    return _cached_calibration(s.carrier, s.constellation.order, m.calibration_symbols, m.calibration_seed, m.rbw_hz)


def scenario_mask(s: Scenario, cal: Calibration) -> MaskSpec:
    mask = s.mask.to_mask_spec(s.carrier.subcarrier_spacing_hz, cal.point_power, cal.reference_dbm)
    return mask.permuted(s.params.ordering) if s.params.ordering is not None else mask


def checkpoint_iterations(budget: int, n_points: int) -> list[int]:
    """Roughly log-spaced iteration indices in ``[1, budget]``, always including both ends."""
    if budget <= n_points:
        return list(range(1, budget + 1))
    pts = np.unique(np.round(np.logspace(0, np.log10(budget), n_points)).astype(int))
    return sorted(set(pts.tolist()) | {1, budget})


@dataclass
class _ChunkOutput:
    start: int
    d_bar: np.ndarray
    iterations: list[int]
    converged: list[bool]
    snapshots: dict[int, np.ndarray]  # checkpoint -> (chunk, n_alloc) iterate
    diagnostics: list[str]


def _run_one(s: Scenario, constraints, A, d: np.ndarray, checkpoints: list[int]) -> tuple[PrecoderResult, dict]:
    snaps: dict[int, np.ndarray] = {}
    wanted = set(checkpoints)

    def grab(it, x):
        if it in wanted:
            snaps[it] = np.array(x, copy=True)

    p = s.params
    algo = s.algorithm
    if algo == "none":
        res = PrecoderResult(d.copy(), ConvergenceTrace(), 0.0, max_violation_db(constraints, d), 0, True)
    elif algo == "nsp":
        res = nsp_precode(A, d)
    elif algo == "pocs":
        res = pocs_precode(constraints, d, max_iter=p.budget(algo), tol_db=p.tol_db, record_trace=False, callback=grab)
    elif algo == "admm":
        res = admm_precode(constraints, d, rho=p.rho, max_iter=p.budget(algo), tol_db=p.tol_db,
                           residual_tol=p.residual_tol, record_trace=False, callback=grab)
    elif algo == "ssp":
        res = ssp_precode(constraints, d, n_iter=p.n_iter, align_phase=p.align_phase, record_trace=False, callback=grab)
    else:
        res = dykstra_oracle(constraints, d, max_iter=p.budget(algo), tol=p.oracle_tol)
    return res, snaps


def _process_chunk(s, constraints, A, data, start, stop, checkpoints) -> _ChunkOutput:
    d = data[start:stop]
    if _CHUNK[s.algorithm] > 1:
        # closed-form or batch solvers: the whole chunk at once
        res, snaps = _run_one(s, constraints, A, d, checkpoints)
        n = stop - start
        return _ChunkOutput(start, res.d_bar, [res.iterations] * n, [res.converged] * n, snaps, res.diagnostics)
    d_bar = np.empty_like(d)
    iters, conv, diags = [], [], []
    per_symbol: list[dict] = []
    for i in range(d.shape[0]):
        res, snaps = _run_one(s, constraints, A, d[i], checkpoints)
        d_bar[i] = res.d_bar
        iters.append(res.iterations)
        conv.append(res.converged)
        diags.extend(f"symbol {start + i}: {m}" for m in res.diagnostics)
        per_symbol.append(snaps)
    # a symbol that stopped before checkpoint c keeps its final iterate
    snapshots = {c: np.array([snaps.get(c, d_bar[i]) for i, snaps in enumerate(per_symbol)]) for c in checkpoints}
    return _ChunkOutput(start, d_bar, iters, conv, snapshots, diags)


def _ordered_chunks(s, constraints, A, data, checkpoints, threads) -> Iterator[_ChunkOutput]:
    """Chunk outputs in symbol order; chunk boundaries do not depend on ``threads``."""
    size = _CHUNK[s.algorithm]
    bounds = [(a, min(a + size, len(data))) for a in range(0, len(data), size)]
    if threads <= 1:
        for a, b in bounds:
            yield _process_chunk(s, constraints, A, data, a, b, checkpoints)
        return
    window = 4 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for w in range(0, len(bounds), window):
            futures = [pool.submit(_process_chunk, s, constraints, A, data, a, b, checkpoints) for a, b in bounds[w : w + window]]
            for f in futures:
                yield f.result()


@dataclass
class RunResult:
    summary: dict
    manifest: dict
    output_dir: Path
    files: dict[str, Path]
    d: np.ndarray = field(repr=False)
    d_bar: np.ndarray = field(repr=False)


def _write_csv(path: Path, header: tuple, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _json_dump(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def run_scenario(s: Scenario, threads: int = 1, output_dir: str | Path | None = None, write: bool = True) -> RunResult:
    """Precode ``s.n_symbols`` random symbols and measure the outcome.

    Work is split into fixed chunks (one symbol for the iterative solvers)
    that a thread pool processes; chunk results are reduced in symbol order,
    so every non-timing output is independent of ``threads``.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    t0 = time.perf_counter()
    out = Path(output_dir) if output_dir is not None else s.output_dir
    cfg = s.carrier
    cal = scenario_calibration(s)
    t_cal = time.perf_counter() - t0

    mask = scenario_mask(s, cal)
    A = build_leakage_matrix(cfg, mask.points)
    constraints = constraints_from(A, mask)
    data = gen_ofdm_symbols(cfg, s.constellation, s.n_symbols, s.seed)

    if s.algorithm in ("pocs", "admm", "ssp"):
        checkpoints = checkpoint_iterations(s.params.budget(s.algorithm), s.measurement.checkpoints)
    else:
        checkpoints = []
    accs = {c: PeriodogramAccumulator(cfg) for c in checkpoints}
    obj = {c: 0.0 for c in checkpoints}
    viol = {c: -math.inf for c in checkpoints}

    d_bar = np.empty_like(data)
    iterations = np.zeros(s.n_symbols, dtype=int)
    converged = np.zeros(s.n_symbols, dtype=bool)
    diagnostics: list[str] = []
    t1 = time.perf_counter()
    try:
        for chunk in _ordered_chunks(s, constraints, A, data, checkpoints, threads):
            a = chunk.start
            b = a + chunk.d_bar.shape[0]
            d_bar[a:b] = chunk.d_bar
            iterations[a:b] = chunk.iterations
            converged[a:b] = chunk.converged
            diagnostics.extend(chunk.diagnostics)
            for c, x in chunk.snapshots.items():
                accs[c].add(ofdm_modulate(cfg, x))
                obj[c] += float(np.sum(np.abs(data[a:b] - x) ** 2))
                viol[c] = max(viol[c], max_violation_db(constraints, x))
    except Exception as exc:
        raise RuntimeError(f"scenario {s.name!r} ({s.algorithm}) failed: {exc}") from exc
    t_precode = time.perf_counter() - t1

    m = s.measurement
    psd_ref = _psd(cfg, data, cal, m.rbw_hz)
    psd_out = _psd(cfg, d_bar, cal, m.rbw_hz)
    aclr = aclr_first_adjacent(psd_out, cfg, m.channel_bw_hz, m.channel_spacing_hz)
    aclr_ref = aclr_first_adjacent(psd_ref, cfg, m.channel_bw_hz, m.channel_spacing_hz)
    report = evm(data, d_bar)
    per_symbol_evm = 100.0 * np.sqrt(np.sum(np.abs(data - d_bar) ** 2, axis=1) / np.sum(np.abs(data) ** 2, axis=1))
    margins = sem_margin(A, mask, d_bar)
    margins_sym = sem_margin_per_symbol(A, mask, d_bar)
    edge, center = report.edge_vs_center()

    conv_rows = [(0, 0.0, max_violation_db(constraints, data), aclr_ref)]
    for c in checkpoints:
        est = accs[c].estimate(m.rbw_hz, cal.psd_offset_db)
        conv_rows.append((c, obj[c] / s.n_symbols, viol[c],
                          aclr_first_adjacent(est, cfg, m.channel_bw_hz, m.channel_spacing_hz)))
    if not checkpoints and s.algorithm != "none":
        conv_rows.append((int(iterations.max()), float(np.mean(np.sum(np.abs(data - d_bar) ** 2, axis=1))),
                          max_violation_db(constraints, d_bar), aclr))

    total_iters = int(iterations.sum())
    summary = {
        "scenario": s.name,
        "algorithm": s.algorithm,
        "n_symbols": s.n_symbols,
        "seed": s.seed,
        "aclr_db": aclr,
        "aclr_unprecoded_db": aclr_ref,
        "inband_level_dbm_per_100khz": inband_level(psd_out, cfg),
        "evm_overall_pct": report.overall_pct,
        "evm_symbol_max_pct": float(per_symbol_evm.max()),
        "evm_edge_prb_pct": edge,
        "evm_center_prb_pct": center,
        "max_sem_margin_db": float(margins.max()),
        "max_sem_margin_symbol_db": float(margins_sym.max()),
        "sem_margin_db": [float(v) for v in margins],
        "iterations": {
            "median": float(np.median(iterations)),
            "max": int(iterations.max()),
            "total": total_iters,
        },
        "converged_symbols": int(converged.sum()),
        "dense_fallbacks": len(diagnostics),
        "timing": {
            "calibration_s": t_cal,
            "precode_s": t_precode,
            "total_s": time.perf_counter() - t0,
            "per_iteration_s": t_precode / total_iters if total_iters else 0.0,
        },
    }
    manifest = {
        "library_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "scenario": s.to_dict(),
        "seed": s.seed,
        "threads": threads,
        "chunk_size": _CHUNK[s.algorithm],
        "calibration": cal.to_dict(),
        "mask_points_subcarriers": list(mask.points),
        "mask_gamma": list(mask.gamma),
        "checkpoints": checkpoints,
    }
    files: dict[str, Path] = {}
    if write:
        try:
            out.mkdir(parents=True, exist_ok=True)
            files = {k: out / k for k in ("manifest.json", "convergence.csv", "psd.csv", "evm.csv", "summary.json")}
            _json_dump(manifest, files["manifest.json"])
            _write_csv(files["convergence.csv"], ("iteration", "objective", "violation_db", "aclr_db"), conv_rows)
            _write_csv(files["psd.csv"], ("freq_hz", "psd_dbm_per_100khz", "psd_unprecoded_dbm_per_100khz"),
                       zip(psd_out.freqs_hz, psd_out.psd_dbm_per_100khz, psd_ref.psd_dbm_per_100khz))
            _write_csv(files["evm.csv"], ("prb_index", "evm_pct"), enumerate(report.per_prb_pct))
            _json_dump(summary, files["summary.json"])
        except OSError as exc:
            raise OSError(f"scenario {s.name!r}: cannot write outputs to {out}: {exc}") from exc
        if diagnostics:
            log.info("%d numerical fallbacks; first: %s", len(diagnostics), diagnostics[0])
    return RunResult(summary, manifest, out, files, data, d_bar)


def _psd(cfg, symbols, cal: Calibration, rbw_hz: float):
    acc = PeriodogramAccumulator(cfg)
    for a in range(0, len(symbols), 256):
        acc.add(ofdm_modulate(cfg, symbols[a : a + 256]))
    return acc.estimate(rbw_hz, cal.psd_offset_db)


def summary_without_timing(summary: dict) -> dict:
    return {k: v for k, v in summary.items() if k != "timing"}
