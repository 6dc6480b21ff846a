"""Run-result, summary and histogram files.

Run results are JSON documents with every float stored as ``float.hex`` so a
read-back is bit-identical. Wall-clock time lives in a sidecar file, which
keeps the main document byte-identical across reruns of the same cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import Histogram, histogram_from_csv, histogram_to_csv
from .training import RunResult

FORMAT = "sumcritic.run/1"


def _hex(x) -> str:
    return float(x).hex()


def _unhex(s) -> float:
    return float.fromhex(s)


def _array_out(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [_hex(v) for v in a.ravel()]}


def _array_in(d) -> np.ndarray:
    return np.array([_unhex(v) for v in d["data"]], dtype=np.float64).reshape(d["shape"])


def run_result_to_dict(result: RunResult, provenance: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "config": result.config,
        "provenance": provenance or {},
        "failed": result.failed,
        "message": result.message,
        "best_emd": _hex(result.best_emd),
        "best_iteration": result.best_iteration,
        "trajectory": [[it, _hex(v)] for it, v in result.trajectory],
        "surrogate_trajectory": [[it, _hex(v)] for it, v in result.surrogate_trajectory],
        "best_histogram": None if result.best_histogram is None else _array_out(result.best_histogram),
        "critic_params": {k: _array_out(v) for k, v in result.critic_params.items()},
        "generator_params": {k: _array_out(v) for k, v in result.generator_params.items()},
    }


def run_result_from_dict(d: dict) -> RunResult:
    if d.get("format") != FORMAT:
        raise ValueError(f"not a run result document (format {d.get('format')!r})")
    hist = d["best_histogram"]
    return RunResult(
        config=d["config"],
        trajectory=[(int(it), _unhex(v)) for it, v in d["trajectory"]],
        surrogate_trajectory=[(int(it), _unhex(v)) for it, v in d["surrogate_trajectory"]],
        best_emd=_unhex(d["best_emd"]),
        best_iteration=int(d["best_iteration"]),
        best_histogram=None if hist is None else _array_in(hist),
        critic_params={k: _array_in(v) for k, v in d["critic_params"].items()},
        generator_params={k: _array_in(v) for k, v in d["generator_params"].items()},
        failed=bool(d["failed"]),
        message=d["message"],
    )


def dumps_run_result(result: RunResult, provenance: dict | None = None) -> str:
    return json.dumps(run_result_to_dict(result, provenance), indent=1, sort_keys=True) + "\n"


def loads_run_result(text: str) -> RunResult:
    return run_result_from_dict(json.loads(text))


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def timing_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".timing.json")


def write_run_result(path, result: RunResult, provenance: dict | None = None):
    path = Path(path)
    _atomic_write(path, dumps_run_result(result, provenance))
    _atomic_write(timing_path(path), json.dumps({"wall_clock_seconds": result.wall_clock_seconds}) + "\n")


def read_run_result(path) -> RunResult:
    path = Path(path)
    result = loads_run_result(path.read_text(encoding="utf-8"))
    tpath = timing_path(path)
    if tpath.exists():
        result.wall_clock_seconds = json.loads(tpath.read_text())["wall_clock_seconds"]
    return result


def read_provenance(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("provenance", {})


def write_histogram(path, hist: Histogram):
    _atomic_write(Path(path), histogram_to_csv(hist))


def read_histogram(path) -> Histogram:
    return histogram_from_csv(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class CellRecord:
    model: str
    source: str
    seed: int
    best_emd: float
    best_iteration: int
    failed: bool


CELL_FIELDS = ["model", "source", "seed", "best_emd", "best_iteration", "failed"]


def cells_to_csv(cells) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_FIELDS)
    for c in cells:
        w.writerow([c.model, c.source, c.seed, repr(c.best_emd), c.best_iteration, int(c.failed)])
    return buf.getvalue()


def cells_from_csv(text: str) -> list[CellRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CELL_FIELDS:
        raise ValueError(f"cells CSV header must be {','.join(CELL_FIELDS)}")
    return [CellRecord(r["model"], r["source"], int(r["seed"]), float(r["best_emd"]),
                       int(r["best_iteration"]), bool(int(r["failed"]))) for r in reader]


def summary_table(cells) -> dict:
    """``{model: {source: {"seeds": {seed: emd}, "mean": emd}}}``, in first-seen order."""
    table: dict = {}
    for c in cells:
        entry = table.setdefault(c.model, {}).setdefault(c.source, {"seeds": {}})
        entry["seeds"][c.seed] = c.best_emd
    for row in table.values():
        for entry in row.values():
            entry["mean"] = float(np.mean(list(entry["seeds"].values())))
    return table


def summary_to_csv(cells) -> str:
    """Wide table: one row per (model, seed) plus a ``mean`` row, one column per domain."""
    table = summary_table(cells)
    sources = list(dict.fromkeys(c.source for c in cells))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "seed", *sources])
    for model, row in table.items():
        seeds = sorted({s for e in row.values() for s in e["seeds"]})
        for label in [*seeds, "mean"]:
            values = []
            for src in sources:
                entry = row.get(src)
                if entry is None:
                    values.append("")
                elif label == "mean":
                    values.append(repr(entry["mean"]))
                else:
                    v = entry["seeds"].get(label)
                    values.append("" if v is None else repr(v))
            w.writerow([model, label, *values])
    return buf.getvalue()


def summary_from_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["model", "seed"]:
        raise ValueError("summary CSV must start with 'model,seed'")
    sources = rows[0][2:]
    table: dict = {}
    for model, label, *values in rows[1:]:
        row = table.setdefault(model, {})
        for src, v in zip(sources, values):
            if v == "":
                continue
            entry = row.setdefault(src, {"seeds": {}})
            if label == "mean":
                entry["mean"] = float(v)
            else:
                entry["seeds"][int(label)] = float(v)
    return table


def format_summary(cells) -> str:
    """Plain-text table of per-domain means (failed runs flagged with ``!``)."""
    table = summary_table(cells)
    sources = list(dict.fromkeys(c.source for c in cells))
    failed = {(c.model, c.source) for c in cells if c.failed}
    lines = ["model".ljust(10) + "".join(s.rjust(12) for s in sources)]
    for model, row in table.items():
        cols = []
        for src in sources:
            if src not in row:
                cols.append("-".rjust(12))
                continue
            mark = "!" if (model, src) in failed else ""
            m = row[src]["mean"]
            cols.append(((f"{m:.4f}" if math.isfinite(m) else "nan") + mark).rjust(12))
        lines.append(model.ljust(10) + "".join(cols))
    return "\n".join(lines) + "\n"
