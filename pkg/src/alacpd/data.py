"""Loading, standardizing, windowing and synthesizing time series.

Indices are 0-based everywhere: ``values[t]`` is the observation at time
``t`` and a window ending at ``t`` covers rows ``t - w + 1 .. t``.
"""
from __future__ import annotations

import configparser
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed input file or invalid series."""


@dataclass(frozen=True)
class TimeSeries:
    name: str
    values: np.ndarray
    labels: tuple = ()
    time: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise DataError(f"series {self.name!r} must be a non-empty n x D array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"series {self.name!r} contains missing or non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"V{i + 1}" for i in range(v.shape[1])))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.name, values, self.labels, self.time)


def _forward_fill(col: list, label: str) -> list:
    out = []
    last = None
    for v in col:
        if v is None:
            if last is None:
                raise DataError(f"series {label!r}: cannot forward-fill a leading missing value")
            v = last
        out.append(v)
        last = v
    return out


def load_benchmark_json(path, forward_fill: bool = False) -> TimeSeries:
    """Read a dataset in the change-point benchmark JSON layout.

    Expected keys: ``name``, ``n_obs``, ``n_dim``, optional ``time`` and a
    ``series`` list whose entries carry ``label`` and ``raw``.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: top level must be an object")
    for key in ("name", "n_obs", "series"):
        if key not in doc:
            raise DataError(f"{path}: missing field '{key}'")
    n_obs = doc["n_obs"]
    series = doc["series"]
    if not isinstance(series, list) or not series:
        raise DataError(f"{path}: 'series' must be a non-empty list")
    if "n_dim" in doc and doc["n_dim"] != len(series):
        raise DataError(f"{path}: n_dim={doc['n_dim']} but {len(series)} series given")
    columns, labels = [], []
    for k, s in enumerate(series):
        label = s.get("label", f"V{k + 1}")
        if "raw" not in s:
            raise DataError(f"{path}: series[{k}] ({label}) has no 'raw' field")
        raw = s["raw"]
        if len(raw) != n_obs:
            raise DataError(
                f"{path}: series[{k}] ({label}) has {len(raw)} values but n_obs={n_obs}"
            )
        for i, v in enumerate(raw):
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise DataError(f"{path}: series[{k}].raw[{i}] ({label}) is not numeric: {v!r}")
        if any(v is None for v in raw):
            if not forward_fill:
                raise DataError(f"{path}: series[{k}] ({label}) has missing values")
            raw = _forward_fill(raw, label)
        columns.append(raw)
        labels.append(label)
    time = None
    if isinstance(doc.get("time"), dict) and "raw" in doc["time"]:
        time = tuple(doc["time"]["raw"])
    values = np.array(columns, dtype=np.float64).T
    return TimeSeries(doc["name"], values, tuple(labels), time)


def load_csv(path, name: Optional[str] = None, forward_fill: bool = False) -> TimeSeries:
    """Header row names the dimensions; one row per time step."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one data row")
    header = rows[0]
    columns = [[] for _ in header]
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {r} has {len(row)} fields, header has {len(header)}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("nan", "na"):
                columns[c].append(None)
                continue
            try:
                columns[c].append(float(cell))
            except ValueError:
                raise DataError(f"{path}: line {r}, column {header[c]!r} is not numeric: {cell!r}") from None
    for c, col in enumerate(columns):
        if any(v is None for v in col):
            if not forward_fill:
                raise DataError(f"{path}: column {header[c]!r} has missing values")
            columns[c] = _forward_fill(col, header[c])
    return TimeSeries(name or path.stem, np.array(columns, dtype=np.float64).T, tuple(header))


def load_series(path, forward_fill: bool = False) -> TimeSeries:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path, forward_fill=forward_fill)
    return load_benchmark_json(path, forward_fill=forward_fill)


def to_benchmark_json(series: TimeSeries) -> dict:
    return {
        "name": series.name,
        "longname": series.name,
        "n_obs": series.n,
        "n_dim": series.n_dims,
        "time": {"index": list(range(series.n))},
        "series": [
            {"label": label, "type": "float", "raw": series.values[:, d].tolist()}
            for d, label in enumerate(series.labels)
        ],
    }


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    fit_range: str = "init_prefix"

    @classmethod
    def fit(cls, values, fit_range: str = "init_prefix", n_prefix: Optional[int] = None):
        values = np.asarray(values, dtype=np.float64)
        if fit_range == "init_prefix":
            if n_prefix is None:
                raise ValueError("init_prefix standardization needs n_prefix")
            ref = values[:n_prefix]
        elif fit_range == "full_series":
            ref = values
        else:
            raise ValueError(f"unknown fit_range {fit_range!r}")
        mean = ref.mean(axis=0)
        std = ref.std(axis=0)  # population std
        flat = std <= 1e-12
        if np.any(flat):
            logger.warning("constant dimension(s) %s in fit range; using std=1", np.flatnonzero(flat).tolist())
            std = np.where(flat, 1.0, std)
        return cls(mean, std, fit_range)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def standardize(series: TimeSeries, fit_range: str = "init_prefix", n_prefix: Optional[int] = None):
    scaler = Standardizer.fit(series.values, fit_range, n_prefix)
    return series.with_values(scaler.transform(series.values)), scaler


@dataclass(frozen=True)
class WindowView:
    end: int
    values: np.ndarray


def windows(series, w: int) -> Iterator[WindowView]:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    if w < 1 or n < w:
        raise DataError(f"series of length {n} is shorter than window {w}")
    for t in range(w - 1, n):
        yield WindowView(t, values[t - w + 1 : t + 1])


# -- synthetic piecewise-stationary series -------------------------------------


@dataclass(frozen=True)
class Segment:
    length: int
    mean: Sequence[float] | float = 0.0
    std: float = 1.0
    ar_coef: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    segments: Sequence[Segment]
    n_dims: int = 1
    spikes: Sequence[tuple] = ()
    seed: int = 0
    name: str = "synthetic"
    min_segment: int = 1

    def validate(self) -> None:
        if not self.segments:
            raise ValueError("synthetic spec needs at least one segment")
        if self.n_dims < 1:
            raise ValueError("n_dims must be >= 1")
        n = 0
        for k, seg in enumerate(self.segments):
            if seg.length < max(1, self.min_segment):
                raise ValueError(f"segment {k} length {seg.length} < minimum {max(1, self.min_segment)}")
            if seg.std < 0:
                raise ValueError(f"segment {k} has negative std")
            if not -1.0 < seg.ar_coef < 1.0:
                raise ValueError(f"segment {k} AR coefficient must lie in (-1, 1)")
            if np.ndim(seg.mean) and len(seg.mean) != self.n_dims:
                raise ValueError(f"segment {k} mean has {len(seg.mean)} entries for {self.n_dims} dims")
            n += seg.length
        for idx, _ in self.spikes:
            if not 0 <= idx < n:
                raise ValueError(f"spike index {idx} outside [0, {n})")


def generate_synthetic(spec: SyntheticSpec) -> tuple[TimeSeries, list[int]]:
    """Concatenate AR(1) segments; ``std`` is the stationary (marginal) std.

    Returns the series and the first index of every segment after the first.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    D = spec.n_dims
    parts, truth = [], []
    start = 0
    for seg in spec.segments:
        if start > 0:
            truth.append(start)
        phi = seg.ar_coef
        innov = seg.std * math.sqrt(1.0 - phi * phi)
        e = np.empty((seg.length, D))
        e[0] = rng.normal(0.0, seg.std, size=D)
        for t in range(1, seg.length):
            e[t] = phi * e[t - 1] + rng.normal(0.0, innov, size=D)
        parts.append(e + np.broadcast_to(np.asarray(seg.mean, dtype=np.float64), (D,)))
        start += seg.length
    values = np.vstack(parts)
    for idx, mag in spec.spikes:
        values[idx] += mag
    return TimeSeries(spec.name, values), truth


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split("|")]


def read_synthetic_spec(path) -> SyntheticSpec:
    """Parse the ``[synthetic]`` section of a key-value config file.

    ``segments`` lists ``length,mean,std,ar_coef`` entries separated by ``;``
    (a per-dimension mean is written ``m1|m2``); ``spikes`` lists
    ``index:magnitude`` entries separated by ``;``.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise DataError(f"synthetic spec not found: {path}")
    if "synthetic" not in parser:
        raise DataError(f"{path}: missing [synthetic] section")
    sec = parser["synthetic"]
    n_dims = sec.getint("n_dims", 1)
    segments = []
    for item in sec.get("segments", "").split(";"):
        item = item.strip()
        if not item:
            continue
        fields = [f.strip() for f in item.split(",")]
        if len(fields) != 4:
            raise DataError(f"{path}: segment {item!r} needs length,mean,std,ar_coef")
        mean = _floats(fields[1])
        segments.append(Segment(int(fields[0]), mean if len(mean) > 1 else mean[0], float(fields[2]), float(fields[3])))
    spikes = []
    for item in sec.get("spikes", "").split(";"):
        item = item.strip()
        if item:
            idx, mag = item.split(":")
            mag = _floats(mag)
            spikes.append((int(idx), mag if len(mag) > 1 else mag[0]))
    return SyntheticSpec(
        segments=tuple(segments),
        n_dims=n_dims,
        spikes=tuple(spikes),
        seed=sec.getint("seed", 0),
        name=sec.get("name", Path(path).stem),
    )
