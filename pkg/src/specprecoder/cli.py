"""Command-line entry point: ``specprecoder run|bench|presets``.

Exit codes: 0 success, 2 invalid config or arguments, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import __version__
from .bench import DEFAULT_SIZES, benchmark
from .scenario import ALGORITHMS, PRESETS, ScenarioError, load_scenario, preset_document, run_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

log = logging.getLogger("specprecoder")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 as well; keep its usage text
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _sizes(text: str) -> list[tuple[int, int]]:
    """Parse ``128x8,256x8`` into ``[(128, 8), (256, 8)]``."""
    out = []
    for item in text.split(","):
        try:
            n, m = item.lower().split("x")
            out.append((int(n), int(m)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad size {item!r}; expected N_ALLOCxM, e.g. 256x8") from None
        if out[-1][0] < 1 or out[-1][1] < 0:
            raise argparse.ArgumentTypeError(f"bad size {item!r}; need N_ALLOC >= 1 and M >= 0")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specprecoder", description="Mask-compliant spectral precoding experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", help="scenario YAML file or preset name")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--out", type=Path, help="output directory (default: the scenario's output_dir)")

    run = sub.add_parser("run", help="precode a symbol batch and write traces and metrics")
    common(run)
    run.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on this)")
    run.add_argument("--algorithm", choices=ALGORITHMS, help="override the scenario algorithm")
    run.add_argument("--n-symbols", type=int, help="override the number of symbols")

    bench = sub.add_parser("bench", help="per-iteration timing versus problem size")
    common(bench)
    bench.add_argument("--threads", type=int, default=1, help="accepted for symmetry; timing runs serially")
    bench.add_argument("--sizes", type=_sizes, default=list(DEFAULT_SIZES), help="comma list of N_ALLOCxM (default 128x8,...,1024x8)")
    bench.add_argument("--reps", type=int, default=5, help="repetitions per size (median reported)")

    presets = sub.add_parser("presets", help="list or show the shipped scenarios")
    psub = presets.add_subparsers(dest="action", required=True, parser_class=_Parser)
    psub.add_parser("list", help="names and descriptions")
    show = psub.add_parser("show", help="print a preset as YAML")
    show.add_argument("name", choices=sorted(PRESETS))
    return p


def _cmd_run(args) -> int:
    s = load_scenario(args.config)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    if args.algorithm is not None:
        s = replace(s, algorithm=args.algorithm)
    if args.n_symbols is not None:
        if args.n_symbols < 1:
            raise ScenarioError("must be >= 1", "n_symbols")
        s = replace(s, n_symbols=args.n_symbols)
    if args.threads < 1:
        raise ScenarioError("must be >= 1", "threads")
    result = run_scenario(s, threads=args.threads, output_dir=args.out)
    sm = result.summary
    print(
        f"{s.name} [{s.algorithm}] {s.n_symbols} symbols: ACLR {sm['aclr_db']:.2f} dB "
        f"(unprecoded {sm['aclr_unprecoded_db']:.2f}), EVM {sm['evm_overall_pct']:.3f}%, "
        f"max SEM margin {sm['max_sem_margin_db']:.3f} dB, median iterations {sm['iterations']['median']:g}"
    )
    print(f"outputs written to {result.output_dir}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    s = load_scenario(args.config)
    seed = s.seed if args.seed is None else args.seed
    if args.reps < 1:
        raise ScenarioError("must be >= 1", "reps")
    report = benchmark(args.sizes, reps=args.reps, rho=s.params.rho, seed=seed, order=s.constellation.order)
    out = args.out if args.out is not None else s.output_dir / "bench"
    report.write(out)
    for r in report.rows:
        print(f"{r.algorithm:5s} N={r.n_alloc:5d} M={r.m:3d}  {r.median_s_per_iter:.3e} s/iter")
    print("log-log slopes:", json.dumps(report.slopes, sort_keys=True))
    print(f"dense fallbacks: {report.dense_fallbacks}; outputs written to {out}")
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name, (desc, _) in PRESETS.items():
            print(f"{name:12s} {desc}")
    else:
        print(yaml.safe_dump(preset_document(args.name), sort_keys=False), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "bench": _cmd_bench, "presets": _cmd_presets}
    try:
        return handlers[args.command](args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - report any failure with a distinct exit code
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
