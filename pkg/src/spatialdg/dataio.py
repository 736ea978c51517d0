"""CSV ingestion, per-location grouping, feature scaling and synthetic data."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .downstream import CLASSIFICATION, REGRESSION
from .errors import (
    BadCount,
    ConfigError,
    EmptyFile,
    MissingColumn,
    NonBinaryLabel,
    UnparsableNumber,
)
from .spatial_graph import Location

STD_FLOOR = 1e-8


@dataclass
class DomainSamples:
    location: Location
    xs: np.ndarray
    ys: np.ndarray
    # raw (lat, lon) text the rows were grouped by
    key: tuple[str, str] = ("", "")

    @property
    def n(self) -> int:
        return len(self.ys)

    @property
    def lat(self) -> float:
        return self.location.coord[1]

    @property
    def lon(self) -> float:
        return self.location.coord[0]


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, xs: np.ndarray) -> np.ndarray:
        return (xs - self.mean) / self.std


@dataclass
class Dataset:
    domains: list[DomainSamples]
    feature_names: list[str]
    kind: str = REGRESSION
    stats: Optional[FeatureStats] = None
    schema: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def coords(self) -> np.ndarray:
        return np.array([d.location.coord for d in self.domains], dtype=float).reshape(-1, 2)

    def subset(self, ids: Sequence[int]) -> "Dataset":
        doms = [self.domains[i] for i in ids]
        doms = [replace(d, location=Location(n, d.location.coord)) for n, d in enumerate(doms)]
        return replace(self, domains=doms)


def _fmt(v: float) -> str:
    return repr(float(v))


def _parse(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise UnparsableNumber(row, col, text) from None
    if not math.isfinite(v):
        raise UnparsableNumber(row, col, text)
    return v


def load_csv(path, lat_col: str = "lat", lon_col: str = "lon", target_col: str = "y",
             feature_cols: Optional[Sequence[str]] = None, kind: str = REGRESSION) -> Dataset:
    """Read a header-first CSV and group its rows by exact (lat, lon) text.

    ``feature_cols=None`` takes every column other than the coordinates and
    the target. Row indices in errors count data rows from 1.
    """
    if kind not in (REGRESSION, CLASSIFICATION):
        raise ConfigError(f"unknown task kind {kind!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        rows = list(reader)
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path} has a header but no data rows")

    if feature_cols is None:
        feature_cols = [h for h in header if h not in (lat_col, lon_col, target_col)]
    for col in (lat_col, lon_col, target_col, *feature_cols):
        if col not in header:
            raise MissingColumn(f"column {col!r} not found in header {header}")
    if not feature_cols:
        raise MissingColumn("no feature columns")
    pos = {h: i for i, h in enumerate(header)}

    groups: dict[tuple[str, str], tuple[list, list]] = {}
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise UnparsableNumber(r, "<row>", ",".join(row))
        key = (row[pos[lat_col]].strip(), row[pos[lon_col]].strip())
        lat = _parse(key[0], r, lat_col)
        lon = _parse(key[1], r, lon_col)
        x = [_parse(row[pos[c]].strip(), r, c) for c in feature_cols]
        y = _parse(row[pos[target_col]].strip(), r, target_col)
        if kind == CLASSIFICATION and y not in (0.0, 1.0):
            raise NonBinaryLabel(f"row {r}: label {row[pos[target_col]]!r} is not 0 or 1")
        xs, ys = groups.setdefault(key, ([], [], (lon, lat)))[:2]
        xs.append(x)
        ys.append(y)

    domains = []
    for i, (key, (xs, ys, coord)) in enumerate(groups.items()):
        domains.append(DomainSamples(Location(i, coord), np.array(xs, dtype=float),
                                     np.array(ys, dtype=float), key))
    schema = dict(lat_col=lat_col, lon_col=lon_col, target_col=target_col,
                  feature_cols=list(feature_cols))
    return Dataset(domains, list(feature_cols), kind, schema=schema)


def dataset_to_csv(dataset: Dataset) -> str:
    """CSV text with columns ``lat, lon, <features>, y`` (or the stored schema names)."""
    schema = dataset.schema or {}
    lat_col = schema.get("lat_col", "lat")
    lon_col = schema.get("lon_col", "lon")
    target_col = schema.get("target_col", "y")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([lat_col, lon_col, *dataset.feature_names, target_col])
    for d in dataset.domains:
        lat_txt, lon_txt = d.key if d.key != ("", "") else (_fmt(d.lat), _fmt(d.lon))
        for x, y in zip(d.xs, d.ys):
            w.writerow([lat_txt, lon_txt, *(_fmt(v) for v in x), _fmt(y)])
    return buf.getvalue()


def save_csv(dataset: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8")


def standardize(dataset: Dataset, train_ids: Sequence[int]) -> Dataset:
    """Z-score every feature with statistics from the training domains only."""
    if len(train_ids) == 0:
        raise ValueError("train_ids must be nonempty")
    pooled = np.concatenate([dataset.domains[i].xs for i in train_ids])
    stats = FeatureStats(pooled.mean(axis=0), np.maximum(pooled.std(axis=0), STD_FLOOR))
    domains = [replace(d, xs=stats.apply(d.xs)) for d in dataset.domains]
    return replace(dataset, domains=domains, stats=stats)


# ------------------------------------------------------------- synthetic


def _form(j: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # four base shapes, frequency shifts by one step every full cycle
    c = 1 + j // 4
    base = j % 4
    if base == 0:
        return np.sin(2 * np.pi * c * x) * np.cos(np.pi * y)
    if base == 1:
        return np.cos(2 * np.pi * c * y)
    if base == 2:
        return np.sin(np.pi * c * (x + y)) * np.cos(np.pi * x)
    return np.cos(np.pi * c * (x - y))


def coefficient_field(coords, p: int, field: str = "heterogeneous") -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth coefficients ``w(s)`` of shape ``(n, p)`` and bias ``b(s)``.

    ``field="constant"`` returns the heterogeneous field evaluated at the
    center of the unit square for every location.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if field == "constant":
        w, b = coefficient_field(np.full_like(coords, CONSTANT_FIELD_AT), p)
        return w, b
    if field != "heterogeneous":
        raise ConfigError(f"unknown field {field!r}")
    x, y = coords[:, 0], coords[:, 1]
    w = np.stack([_form(j, x, y) for j in range(p)], axis=1)
    b = np.sin(np.pi * (x + y))
    return w, b


CONSTANT_FIELD_AT = 0.5


def synth_generate(n_locations: int, samples_per_location: int, p: int, noise_std: float = 0.1,
                   kind: str = REGRESSION, seed: int = 0, field: str = "heterogeneous") -> Dataset:
    """Spatially heterogeneous benchmark on the unit square.

    Locations are uniform on ``[0, 1]^2`` (x is longitude, y latitude) and
    features standard normal. Regression targets are ``w(s).x + b(s)`` plus
    Gaussian noise; classification labels are Bernoulli with probability
    ``sigmoid(w(s).x + b(s))``.
    """
    if n_locations < 1:
        raise BadCount(f"n_locations must be >= 1, got {n_locations}")
    if samples_per_location < 1:
        raise BadCount(f"samples_per_location must be >= 1, got {samples_per_location}")
    if p < 2:
        raise BadCount(f"p must be >= 2, got {p}")
    if noise_std < 0:
        raise BadCount(f"noise_std must be >= 0, got {noise_std}")
    if kind not in (REGRESSION, CLASSIFICATION):
        raise ConfigError(f"unknown task kind {kind!r}")

    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(n_locations, 2))
    w, b = coefficient_field(coords, p, field)
    xs = rng.standard_normal((n_locations, samples_per_location, p))
    signal = np.einsum("nsp,np->ns", xs, w) + b[:, None]
    if kind == REGRESSION:
        ys = signal + noise_std * rng.standard_normal(signal.shape) if noise_std > 0 else signal
    else:
        prob = 1.0 / (1.0 + np.exp(-signal))
        ys = (rng.uniform(size=signal.shape) < prob).astype(float)

    domains = []
    for i in range(n_locations):
        lon, lat = coords[i]
        domains.append(DomainSamples(Location(i, (float(lon), float(lat))), xs[i], ys[i],
                                     (_fmt(lat), _fmt(lon))))
    names = [f"x{j}" for j in range(p)]
    schema = dict(lat_col="lat", lon_col="lon", target_col="y", feature_cols=names)
    return Dataset(domains, names, kind, schema=schema)
