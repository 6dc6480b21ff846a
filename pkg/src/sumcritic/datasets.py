"""The four one-dimensional data sources, all supported on [-1, 1]."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DATASET_SIZE = 10_000
MIXTURE_MEANS = (0.5, -0.5)
MIXTURE_SD = 0.05


class SourceKind(str, Enum):
    SAWTOOTH = "sawtooth"
    DISCRETE = "discrete"
    MIXTURE = "mixture"
    CITIES = "cities"


class IngestionError(ValueError):
    """The cities CSV could not be turned into a usable dataset."""

    def __init__(self, message, diagnostics=()):
        self.diagnostics = list(diagnostics)
        detail = "".join(f"\n  line {ln}: {why}" for ln, why in self.diagnostics[:20])
        super().__init__(message + detail)


def sawtooth_from_uniform(u):
    return np.sqrt(u) - 1.0


def discrete_from_uniform(y):
    y = np.asarray(y, dtype=np.float64)
    return 0.5 * (-(y < 0.25).astype(np.float64) + (y > 0.75).astype(np.float64))


def mixture_from_draws(b, n1, n2):
    b = np.asarray(b, dtype=np.float64)
    return np.clip(b * n1 + (1.0 - b) * n2, -1.0, 1.0)


def sample_sawtooth(rng, count):
    # 1 - U is uniform on (0, 1], so the upper endpoint 0 is reachable
    return sawtooth_from_uniform(1.0 - rng.uniform(size=count))


def sample_discrete(rng, count):
    return discrete_from_uniform(rng.uniform(size=count))


def sample_mixture(rng, count):
    b = rng.integers(0, 2, size=count)
    n1 = rng.normal(MIXTURE_MEANS[0], MIXTURE_SD, size=count)
    n2 = rng.normal(MIXTURE_MEANS[1], MIXTURE_SD, size=count)
    return mixture_from_draws(b, n1, n2)


SAMPLERS = {
    SourceKind.SAWTOOTH: sample_sawtooth,
    SourceKind.DISCRETE: sample_discrete,
    SourceKind.MIXTURE: sample_mixture,
}


@dataclass
class CitiesTable:
    values: np.ndarray  # normalized log-populations in [-1, 1]
    rows_read: int
    skipped: list = field(default_factory=list)  # (line number, reason)


def _find_population_column(header, column):
    if column is not None:
        if isinstance(column, int):
            if not 0 <= column < len(header):
                raise IngestionError(f"column index {column} out of range for {len(header)} columns")
            return column
        names = [h.strip().lower() for h in header]
        if column.lower() in names:
            return names.index(column.lower())
        raise IngestionError(f"no column named {column!r} in header {header!r}")
    for i, h in enumerate(header):
        if h.strip().lower() == "population":
            return i
    raise IngestionError(f"no 'Population' column in header {header!r}")


def load_cities(path, column=None) -> CitiesTable:
    """Read populations from a CSV, log them and map [min, max] onto [-1, 1].

    Rows with a missing, unparsable, zero or negative population are skipped
    and listed in ``CitiesTable.skipped``.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read cities file {path}: {exc}") from exc
    pops, skipped, rows = [], [], 0
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path} is empty") from None
        col = _find_population_column(header, column)
        for row in reader:
            rows += 1
            line = reader.line_num
            raw = row[col].strip() if col < len(row) else ""
            if not raw:
                skipped.append((line, "missing population"))
                continue
            try:
                value = float(raw)
            except ValueError:
                skipped.append((line, f"unparsable population {raw!r}"))
                continue
            if not np.isfinite(value) or value <= 0:
                skipped.append((line, f"nonpositive population {raw!r}"))
                continue
            pops.append(value)
    if len(pops) < 2:
        raise IngestionError(f"{path}: need at least 2 valid populations, found {len(pops)}", skipped)
    logs = np.log(np.asarray(pops))
    lo, hi = logs.min(), logs.max()
    if hi == lo:
        raise IngestionError(f"{path}: all populations are equal; cannot normalize", skipped)
    values = np.clip(2.0 * (logs - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    if skipped:
        log.info("%s: skipped %d of %d rows", path, len(skipped), rows)
    return CitiesTable(values=values, rows_read=rows, skipped=skipped)


def bundled_cities_path() -> Path:
    return Path(str(resources.files("sumcritic").joinpath("data/cities_fixture.csv")))


@dataclass
class DataSource:
    kind: SourceKind
    samples: np.ndarray
    seed: int
    origin: str = ""  # file the samples came from, for cities


def make_source(kind, seed=0, count=DATASET_SIZE, cities_path=None) -> DataSource:
    """Build the fixed training set for one source.

    Synthetic sources are regenerated from ``seed``. Cities are loaded from
    ``cities_path`` (the bundled fixture when omitted) and subsampled to
    ``count`` points with ``seed``; sampling is with replacement when the file
    has fewer rows.
    """
    kind = SourceKind(kind)
    rng = np.random.default_rng(np.random.SeedSequence([seed, list(SourceKind).index(kind)]))
    if kind is SourceKind.CITIES:
        path = Path(cities_path) if cities_path else bundled_cities_path()
        values = load_cities(path).values
        idx = rng.choice(values.size, size=count, replace=values.size < count)
        return DataSource(kind, values[idx], seed, origin=str(path))
    return DataSource(kind, SAMPLERS[kind](rng, count), seed)
