"""Experiment spec files: an INI document describing a grid of training cells.

Example::

    [experiment]
    preset = desk          ; desk (3x64, 20k iterations) or full (3x500, 100k)
    workers = 2
    iterations = 20000     ; any TrainConfig field may be set here

    [grid summable]
    models = taylor, fourier
    sources = sawtooth, discrete, mixture, cities
    seeds = 1-4

Every section other than ``[experiment]`` is a cell group. A group may also
override TrainConfig fields for its own cells.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .training import MODELS, PRESETS, TrainConfig

EXPERIMENT_KEYS = {"preset", "workers", "output"}
GROUP_KEYS = {"models", "sources", "seeds"}
CELL_FIELDS = {"model", "source", "seed"}


class SpecError(ValueError):
    """A spec file or override that cannot be used; the message names the line."""


@dataclass(frozen=True)
class Cell:
    group: str
    config: TrainConfig

    @property
    def name(self) -> str:
        c = self.config
        return f"{c.model}-{c.source}-s{c.seed}"


@dataclass
class ExperimentSpec:
    cells: list = field(default_factory=list)
    preset: str = "desk"
    workers: int = 1
    output: str = ""
    overrides: dict = field(default_factory=dict)


def convert_value(key: str, raw: str):
    """Turn a text value into the type of TrainConfig field ``key``."""
    types = TrainConfig.field_types()
    if key not in types:
        raise KeyError(key)
    kind = types[key]
    raw = raw.strip()
    if kind is tuple:
        return tuple(int(v) for v in re.split(r"[,x\s]+", raw) if v)
    if kind is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return kind(raw)


def parse_seeds(raw: str) -> list[int]:
    seeds = []
    for part in filter(None, (p.strip() for p in raw.split(","))):
        m = re.fullmatch(r"(-?\d+)\s*-\s*(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    return seeds


def _split(raw):
    return [v.strip() for v in raw.split(",") if v.strip()]


def _syntax_message(exc: configparser.Error, source: str) -> str:
    if isinstance(exc, configparser.MissingSectionHeaderError):
        return f"{source}:{exc.lineno}: expected a [section] header before {exc.line.strip()!r}"
    if isinstance(exc, configparser.ParsingError):
        return "; ".join(f"{source}:{ln}: cannot parse {line.strip()!r} (expected key = value)"
                         for ln, line in exc.errors)
    lineno = getattr(exc, "lineno", None)
    return f"{source}:{lineno}: {exc.message}" if lineno else f"{source}: {exc.message}"


def _line_of(text: str, section: str, key: str | None = None) -> int:
    """1-based line of ``key`` inside ``[section]`` (or of the header); 0 if not found."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            if k == key.lower():
                return i
    return 0


def _fail(source: str, text: str, section: str, key: str | None, msg: str):
    line = _line_of(text, section, key)
    where = f"{source}:{line}" if line else source
    raise SpecError(f"{where}: [{section}] {msg}")


def parse_spec(text: str, source: str = "<spec>", overrides: dict | None = None) -> ExperimentSpec:
    """Parse spec text; ``overrides`` (TrainConfig field -> text) beat the file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise SpecError(_syntax_message(exc, source)) from None

    spec = ExperimentSpec()
    shared = {}
    if parser.has_section("experiment"):
        sec = parser["experiment"]
        for key, raw in sec.items():
            if key == "preset":
                if raw not in PRESETS:
                    _fail(source, text, "experiment", key, f"unknown preset {raw!r}; choose from {sorted(PRESETS)}")
                spec.preset = raw
            elif key == "workers":
                try:
                    spec.workers = int(raw)
                except ValueError:
                    spec.workers = 0
                if spec.workers < 1:
                    _fail(source, text, "experiment", key, f"workers must be a positive integer, got {raw!r}")
            elif key == "output":
                spec.output = raw
            else:
                shared[key] = _convert_or_fail(source, text, "experiment", key, raw)

    command_line = {}
    for key, raw in (overrides or {}).items():
        if key in EXPERIMENT_KEYS:
            continue
        if key in CELL_FIELDS:
            raise SpecError(f"--{key}: set per cell; edit the spec's groups instead")
        try:
            command_line[key] = convert_value(key, raw)
        except KeyError:
            raise SpecError(f"--{key}: unknown setting") from None
        except ValueError as exc:
            raise SpecError(f"--{key}={raw}: {exc}") from None
    spec.overrides = {**shared, **command_line}

    for name in parser.sections():
        if name == "experiment":
            continue
        sec = parser[name]
        missing = GROUP_KEYS - set(sec)
        if missing:
            _fail(source, text, name, None, f"missing {', '.join(sorted(missing))}")
        group = {}
        for key, raw in sec.items():
            if key not in GROUP_KEYS:
                group[key] = _convert_or_fail(source, text, name, key, raw)
        models = _split(sec["models"])
        for m in models:
            if m not in MODELS:
                _fail(source, text, name, "models", f"unknown model {m!r}; choose from {', '.join(MODELS)}")
        sources = _split(sec["sources"])
        try:
            seeds = parse_seeds(sec["seeds"])
        except ValueError as exc:
            _fail(source, text, name, "seeds", f"bad seeds: {exc}")
        if len(set(seeds)) != len(seeds):
            _fail(source, text, name, "seeds", "seeds must be distinct within a group")
        settings = {**shared, **group, **command_line}
        for m in models:
            for src in sources:
                for seed in seeds:
                    try:
                        cfg = TrainConfig.preset(spec.preset, **settings, model=m, source=src, seed=seed)
                    except ValueError as exc:
                        _fail(source, text, name, None, str(exc))
                    spec.cells.append(Cell(name, cfg))
    names = [c.name for c in spec.cells]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SpecError(f"{source}: cells listed more than once: {', '.join(dupes)}")
    return spec


def _convert_or_fail(source, text, section, key, raw):
    if key in CELL_FIELDS:
        _fail(source, text, section, key, f"{key!r} is set per cell; use models/sources/seeds in a group")
    try:
        return convert_value(key, raw)
    except KeyError:
        _fail(source, text, section, key, f"unknown setting {key!r}")
    except ValueError as exc:
        _fail(source, text, section, key, f"bad value for {key!r}: {exc}")


def load_spec(path, overrides: dict | None = None) -> ExperimentSpec:
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from None
    return parse_spec(text, str(path), overrides)
