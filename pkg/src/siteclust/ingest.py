"""Loading, validation, filtering and temporal splitting of checklist tables."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import EmptyInputError, SchemaError, SplitError

log = logging.getLogger(__name__)

DETECTION_FEATURES = (
    "day_of_year",
    "time_observations_started",
    "duration_minutes",
    "effort_distance_km",
    "number_observers",
)
OCCUPANCY_FEATURES = ("elevation", "TCB", "TCG", "TCW", "TCA")

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n", ""}


@dataclass(frozen=True)
class Checklist:
    id: str
    latitude: float
    longitude: float
    observer_id: str
    date: date
    effort_distance_km: float
    is_hotspot: bool
    detection_features: tuple[float, ...]
    occupancy_features: tuple[float, ...]
    detections: Mapping[str, int] = field(default_factory=dict, compare=True)

    @property
    def coord(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


@dataclass(frozen=True)
class ColumnMap:
    """Maps logical checklist fields onto the header names of an input table.

    ``species=None`` means every header not claimed by another field is a
    species column holding 0/1 detection flags.
    """

    id: str = "checklist_id"
    latitude: str = "latitude"
    longitude: str = "longitude"
    observer_id: str = "observer_id"
    date: str = "observation_date"
    effort_distance_km: str = "effort_distance_km"
    is_hotspot: str = "is_hotspot"
    detection_features: tuple[str, ...] = DETECTION_FEATURES
    occupancy_features: tuple[str, ...] = OCCUPANCY_FEATURES
    species: tuple[str, ...] | None = None

    @classmethod
    def from_mapping(cls, m: Mapping) -> "ColumnMap":
        kw = dict(m)
        for key in ("detection_features", "occupancy_features", "species"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        unknown = set(kw) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown column-map keys: {sorted(unknown)}")
        return cls(**kw)

    def scalar_columns(self) -> list[str]:
        return [
            self.id,
            self.latitude,
            self.longitude,
            self.observer_id,
            self.date,
            self.effort_distance_km,
            self.is_hotspot,
        ]

    def claimed_columns(self) -> list[str]:
        cols = self.scalar_columns() + list(self.detection_features) + list(self.occupancy_features)
        return list(dict.fromkeys(cols))


@dataclass(frozen=True)
class RowDiagnostic:
    row: int  # 1-based data row (header excluded)
    message: str


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[Checklist, ...]
    test: tuple[Checklist, ...]
    train_label: str = "train"
    test_label: str = "test"


def _finite(text: str, name: str) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise ValueError(f"{name}: non-finite value {text!r}")
    return v


def _flag(text: str, name: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"{name}: cannot parse {text!r} as a boolean")


def _detection(text: str, name: str) -> int:
    v = _finite(text, name)
    if v not in (0.0, 1.0):
        raise ValueError(f"{name}: detection flag must be 0 or 1, got {text!r}")
    return int(v)


def parse_row(row: Mapping[str, str], schema: ColumnMap, species: Sequence[str]) -> Checklist:
    lat = _finite(row[schema.latitude], schema.latitude)
    lon = _finite(row[schema.longitude], schema.longitude)
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"{schema.latitude}: {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"{schema.longitude}: {lon} outside [-180, 180]")
    dist = _finite(row[schema.effort_distance_km], schema.effort_distance_km)
    if dist < 0:
        raise ValueError(f"{schema.effort_distance_km}: negative distance {dist}")
    try:
        d = date.fromisoformat(row[schema.date].strip())
    except ValueError:
        raise ValueError(f"{schema.date}: cannot parse {row[schema.date]!r} as YYYY-MM-DD") from None
    return Checklist(
        id=row[schema.id],
        latitude=lat,
        longitude=lon,
        observer_id=row[schema.observer_id],
        date=d,
        effort_distance_km=dist,
        is_hotspot=_flag(row[schema.is_hotspot], schema.is_hotspot),
        detection_features=tuple(_finite(row[c], c) for c in schema.detection_features),
        occupancy_features=tuple(_finite(row[c], c) for c in schema.occupancy_features),
        detections={s: _detection(row[s], s) for s in species},
    )


def load_checklists(
    path: str | Path, schema: ColumnMap = ColumnMap(), delimiter: str = ","
) -> tuple[list[Checklist], list[RowDiagnostic]]:
    """Read a delimited checklist table.

    Returns the parsed checklists and one diagnostic per rejected row.
    Rejected rows are also logged at WARNING level.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames
        if not header:
            raise EmptyInputError(f"{path}: empty file (no header row)")
        missing = [c for c in schema.claimed_columns() if c not in header]
        if schema.species is not None:
            missing += [s for s in schema.species if s not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
        claimed = set(schema.claimed_columns())
        species = list(schema.species) if schema.species is not None else [
            h for h in header if h not in claimed
        ]

        checklists, diagnostics, seen = [], [], set()
        for i, row in enumerate(reader, start=1):
            try:
                if None in row or any(v is None for v in row.values()):
                    raise ValueError("wrong number of fields")
                c = parse_row(row, schema, species)
                if c.id in seen:
                    raise ValueError(f"duplicate checklist id {c.id!r}")
            except (ValueError, KeyError) as exc:
                diag = RowDiagnostic(i, str(exc))
                log.warning("%s row %d rejected: %s", path, i, exc)
                diagnostics.append(diag)
                continue
            seen.add(c.id)
            checklists.append(c)
    if not checklists and not diagnostics:
        raise EmptyInputError(f"{path}: no data rows")
    return checklists, diagnostics


def write_checklists(
    path: str | Path, cs: Iterable[Checklist], schema: ColumnMap = ColumnMap(), delimiter: str = ","
) -> None:
    cs = list(cs)
    species = list(schema.species) if schema.species is not None else sorted(
        {s for c in cs for s in c.detections}
    )
    header = schema.claimed_columns() + species
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for c in cs:
            values = {
                schema.id: c.id,
                schema.latitude: repr(c.latitude),
                schema.longitude: repr(c.longitude),
                schema.observer_id: c.observer_id,
                schema.date: c.date.isoformat(),
                schema.effort_distance_km: repr(c.effort_distance_km),
                schema.is_hotspot: "1" if c.is_hotspot else "0",
            }
            values.update({k: repr(v) for k, v in zip(schema.detection_features, c.detection_features)})
            values.update({k: repr(v) for k, v in zip(schema.occupancy_features, c.occupancy_features)})
            values.update({s: str(c.detections[s]) for s in species})
            w.writerow([values[h] for h in header])


def filter_checklists(
    cs: Iterable[Checklist], max_distance_km: float = 0.25, exclude_hotspots: bool = True
) -> list[Checklist]:
    """Keep checklists with distance <= ``max_distance_km`` (inclusive) that
    are not hotspots when ``exclude_hotspots``. Order is preserved."""
    if max_distance_km < 0:
        raise ValueError("max_distance_km must be >= 0")
    return [
        c
        for c in cs
        if c.effort_distance_km <= max_distance_km and not (exclude_hotspots and c.is_hotspot)
    ]


def year_rule(labels: Mapping[int | str, str]) -> Callable[[date], str | None]:
    """Label rule by calendar year; unmapped years are discarded."""
    table = {int(k): v for k, v in labels.items()}
    for v in table.values():
        if v not in ("train", "test"):
            raise ValueError(f"year label must be 'train' or 'test', got {v!r}")
    return lambda d: table.get(d.year)


def split_by_label(
    cs: Iterable[Checklist],
    rule: Callable[[date], str | None],
    train_label: str = "train",
    test_label: str = "test",
) -> DatasetSplit:
    train, test = [], []
    for c in cs:
        label = rule(c.date)
        if label == "train":
            train.append(c)
        elif label == "test":
            test.append(c)
        elif label is not None:
            raise SplitError(f"rule returned unknown label {label!r} for checklist {c.id}")
    if not train or not test:
        raise SplitError(f"split produced {len(train)} train and {len(test)} test checklists")
    return DatasetSplit(tuple(train), tuple(test), train_label, test_label)


def species_codes(cs: Sequence[Checklist]) -> list[str]:
    return sorted({s for c in cs for s in c.detections})
