"""Run configuration loaded from a TOML file."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ParameterError, SchemaError
from .ingest import ColumnMap
from .methods import MethodSpec, parse_method


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    data_path: Path | None = None
    delimiter: str = ","
    columns: ColumnMap = field(default_factory=ColumnMap)
    species: list[str] = field(default_factory=list)
    max_distance_km: float = 0.25
    exclude_hotspots: bool = True
    train_years: list[int] = field(default_factory=list)
    test_years: list[int] = field(default_factory=list)
    methods: list[MethodSpec] = field(default_factory=list)
    tune: dict[str, Any] = field(default_factory=dict)
    restarts: int = 5
    repeats: int = 25
    hex_spacing_m: float = 5000.0
    map: dict[str, Any] = field(default_factory=dict)
    simulate: dict[str, Any] = field(default_factory=dict)
    workers: int = 1

    @property
    def has_split(self) -> bool:
        return bool(self.train_years) and bool(self.test_years)


def _resolve(base: Path, p: str | None) -> Path | None:
    if p is None:
        return None
    path = Path(p)
    return path if path.is_absolute() else (base / path)


def load_config(path: str | Path, seed: int | None = None, out: str | None = None, workers: int | None = None,
                require_data: bool = True) -> RunConfig:
    """Parse and validate a run configuration.

    Relative paths resolve against the config file's directory. ``seed`` and
    ``out`` override the file; a seed must come from one or the other.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent

    seed = seed if seed is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("no seed: set 'seed' in the config or pass --seed")
    out_dir = Path(out) if out is not None else _resolve(base, raw.get("out", "out"))

    data = raw.get("data", {})
    data_path = _resolve(base, data.get("path"))
    if require_data:
        if data_path is None:
            raise ConfigError("config needs [data] path")
        if not data_path.exists():
            raise ConfigError(f"input file not found: {data_path}")

    try:
        columns = ColumnMap.from_mapping(raw.get("columns", {}))
    except SchemaError as exc:
        raise ConfigError(str(exc)) from None
    species = list(data.get("species", columns.species or []))
    if species and columns.species is None:
        columns = replace(columns, species=tuple(species))

    mraw = raw.get("methods", {})
    names = mraw.get("names", [])
    per_params = mraw.get("params", {})
    methods = []
    try:
        for n in names:
            methods.append(parse_method(n, per_params.get(n)))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None

    map_cfg = dict(raw.get("map", {}))
    if "covariates" in map_cfg:
        map_cfg["covariates"] = str(_resolve(base, map_cfg["covariates"]))

    flt = raw.get("filter", {})
    split = raw.get("split", {})
    bench = raw.get("benchmark", {})
    return RunConfig(
        seed=int(seed),
        out_dir=out_dir,
        data_path=data_path,
        delimiter=data.get("delimiter", ","),
        columns=columns,
        species=species,
        max_distance_km=float(flt.get("max_distance_km", 0.25)),
        exclude_hotspots=bool(flt.get("exclude_hotspots", True)),
        train_years=[int(y) for y in split.get("train", [])],
        test_years=[int(y) for y in split.get("test", [])],
        methods=methods,
        tune=raw.get("tune", {}),
        restarts=int(raw.get("fit", {}).get("restarts", 5)),
        repeats=int(bench.get("repeats", 25)),
        hex_spacing_m=float(bench.get("hex_spacing_m", 5000.0)),
        map=map_cfg,
        simulate=raw.get("simulate", {}),
        workers=int(workers if workers is not None else raw.get("workers", 1)),
    )
