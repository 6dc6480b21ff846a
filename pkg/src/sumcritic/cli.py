"""Command-line entry point: ``sumcritic train | emit-hist | oracle-check``.

Exit status is 0 on success, 1 for usage errors (bad arguments, bad spec,
missing data) and 2 for infrastructure errors (unwritable output, worker
crashes). Failed training runs are recorded in the summary, not in the exit
status.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import artifacts, oracle
from .datasets import IngestionError, SourceKind, make_source
from .experiment import Cell, ExperimentSpec, SpecError, load_spec
from .metrics import BIN_COUNT, RANGE, Histogram, build_histogram
from .runtime import configure_allocator
from .training import TrainConfig, train

log = logging.getLogger("sumcritic")

OUTPUT_ENV = "SUMCRITIC_OUTPUT_DIR"
DEFAULT_OUTPUT = "sumcritic-results"
HIST_SAMPLES = 1_000_000
EXIT_OK, EXIT_USAGE, EXIT_INFRA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_key(cfg: TrainConfig):
    return cfg.source, cfg.data_seed, cfg.cities_path


def _provenance(cfg: TrainConfig, origin: str) -> dict:
    data = {"source": cfg.source, "data_seed": cfg.data_seed, "count": 10_000}
    if cfg.source == SourceKind.CITIES.value:
        data.update(origin=origin, sampling="uniform with the data seed; with replacement if the file has fewer rows")
    return {
        "data": data,
        "evaluation": {"bins": cfg.bins, "range": list(RANGE), "samples": cfg.eval_samples,
                       "ground_distance": "absolute difference of bin centers",
                       "emd": "closed form via cumulative masses"},
    }


def run_cell(cell: Cell, out_dir: str, reuse: bool = False) -> artifacts.CellRecord:
    """Train one cell and write its run file and best-generator histogram."""
    cfg = cell.config
    path = Path(out_dir) / "runs" / f"{cell.name}.json"
    result = None
    if reuse and path.exists():
        try:
            cached = artifacts.read_run_result(path)
        except (ValueError, KeyError, json.JSONDecodeError):
            cached = None
        if cached is not None and cached.config == cfg.to_dict():
            log.info("%s: reusing %s", cell.name, path)
            result = cached
    if result is None:
        data = make_source(cfg.source, cfg.data_seed, cities_path=cfg.cities_path or None)
        log.info("%s: training", cell.name)
        result = train(cfg, data)
        artifacts.write_run_result(path, result, _provenance(cfg, data.origin))
        log.info("%s: best emd %.5f at %d (%.0fs)%s", cell.name, result.best_emd, result.best_iteration,
                 result.wall_clock_seconds, " FAILED: " + result.message if result.failed else "")
    if result.best_histogram is not None:
        artifacts.write_histogram(Path(out_dir) / "hists" / f"{cell.name}.csv",
                                  Histogram(result.best_histogram, *RANGE))
    return artifacts.CellRecord(cfg.model, cfg.source, cfg.seed, result.best_emd,
                                result.best_iteration, result.failed)


def _worker_init():
    configure_allocator()


def run_experiment(spec: ExperimentSpec, out_dir, workers: int = 1, reuse: bool = False):
    """Run every cell of ``spec`` and write the summary files. Returns the cell records."""
    out_dir = Path(out_dir)
    for key in {_data_key(c.config) for c in spec.cells}:
        source, data_seed, cities = key
        try:
            make_source(source, data_seed, count=2, cities_path=cities or None)
        except IngestionError as exc:
            raise UsageError(str(exc)) from None
    out_dir.mkdir(parents=True, exist_ok=True)
    if workers <= 1 or len(spec.cells) <= 1:
        records = [run_cell(c, str(out_dir), reuse) for c in spec.cells]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as pool:
            records = list(pool.map(run_cell, spec.cells, [str(out_dir)] * len(spec.cells),
                                    [reuse] * len(spec.cells)))
    artifacts._atomic_write(out_dir / "cells.csv", artifacts.cells_to_csv(records))
    artifacts._atomic_write(out_dir / "summary.csv", artifacts.summary_to_csv(records))
    artifacts._atomic_write(out_dir / "summary.txt", artifacts.format_summary(records))
    return records


def _split_overrides(extra):
    overrides = {}
    for token in extra:
        if not token.startswith("--") or "=" not in token:
            raise UsageError(f"unrecognized argument {token!r}; overrides look like --key=value")
        key, value = token[2:].split("=", 1)
        overrides[key.replace("-", "_")] = value
    return overrides


def cmd_train(args, extra) -> int:
    overrides = _split_overrides(extra)
    spec = load_spec(args.spec, overrides)
    out = args.out or overrides.get("output") or os.environ.get(OUTPUT_ENV) or spec.output or DEFAULT_OUTPUT
    workers = args.workers or int(overrides.get("workers", spec.workers))
    records = run_experiment(spec, out, workers, args.reuse)
    sys.stdout.write(artifacts.format_summary(records) if records else "no cells\n")
    failed = sum(r.failed for r in records)
    if failed:
        log.warning("%d of %d runs diverged; see %s", failed, len(records), Path(out) / "cells.csv")
    return EXIT_OK


def cmd_emit_hist(args, extra) -> int:
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    kinds = [k.value for k in SourceKind]
    if args.source in kinds:
        data = make_source(args.source, args.seed, count=HIST_SAMPLES, cities_path=args.cities_path)
        hist = build_histogram(data.samples, args.bins)
    elif Path(args.source).is_file():
        try:
            result = artifacts.read_run_result(args.source)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"{args.source} is not a run result: {exc}") from None
        if result.best_histogram is None:
            raise UsageError(f"{args.source} has no stored histogram")
        hist = Histogram(result.best_histogram)
    else:
        raise UsageError(f"unknown source {args.source!r}; use one of {', '.join(kinds)} or a run-result file")
    artifacts.write_histogram(args.out, hist)
    log.info("wrote %d bins to %s", hist.bin_count, args.out)
    return EXIT_OK


def cmd_oracle_check(args, extra) -> int:
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    report = oracle.oracle_check(seed=args.seed, bounds_scale=args.corrupt_bounds)
    for line in report.lines():
        print(line)
    print("all checks passed" if report.passed else "oracle check FAILED")
    return EXIT_OK if report.passed else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sumcritic", description="Summable-critic GAN experiments in one dimension.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run every cell of an experiment spec",
                       description="Run an experiment spec. Extra --key=value flags override spec settings.")
    t.add_argument("spec", help="INI experiment spec")
    t.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV}, spec 'output', or {DEFAULT_OUTPUT})")
    t.add_argument("--workers", type=int, help="parallel worker processes (default: spec value or 1)")
    t.add_argument("--reuse", action="store_true",
                   help="skip cells whose run file already holds the same configuration")
    t.set_defaults(fn=cmd_train)

    h = sub.add_parser("emit-hist", help="write a histogram CSV for a data source or a run result")
    h.add_argument("source", help="sawtooth, discrete, mixture, cities, or a run-result JSON path")
    h.add_argument("out", help="CSV path to write")
    h.add_argument("--seed", type=int, default=0, help="sampling seed for data sources")
    h.add_argument("--bins", type=int, default=BIN_COUNT)
    h.add_argument("--cities-path", help="cities CSV (default: bundled fixture)")
    h.set_defaults(fn=cmd_emit_hist)

    o = sub.add_parser("oracle-check", help="compare the fast solvers with independent oracles")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--corrupt-bounds", type=float, default=1.0, help=argparse.SUPPRESS)
    o.set_defaults(fn=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    configure_allocator()
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args, extra)
    except (UsageError, SpecError, IngestionError) as exc:
        print(f"sumcritic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError) as exc:
        print(f"sumcritic: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
