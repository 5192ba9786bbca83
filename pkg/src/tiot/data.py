"""Dataset readers and synthetic series generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import DataError, InvalidInputError
from .measures import TimeSeries, zscore_normalize

YEAR = 365


@dataclass(frozen=True)
class LabeledDataset:
    """Equal-length labeled series, e.g. one split of a UCR dataset.

    ``raw`` keeps the values exactly as read so a split can be written back
    out; ``series`` holds the (optionally z-scored) series used for
    distances.
    """

    series: tuple[TimeSeries, ...]
    name: str = ""
    split: Literal["train", "test", ""] = ""
    raw: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(self.series))
        if self.series:
            shape = self.series[0].values.shape
            for k, s in enumerate(self.series):
                if s.values.shape != shape:
                    raise InvalidInputError(f"series {k} has shape {s.values.shape}, expected {shape}")
                if s.label is None:
                    raise InvalidInputError(f"series {k} has no label")

    def __len__(self) -> int:
        return len(self.series)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.series], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        raw = None if self.raw is None else self.raw[np.asarray(indices, dtype=int)]
        return LabeledDataset(tuple(self.series[i] for i in indices), self.name, self.split, raw)


def _parse_label(text: str, path, lineno) -> int:
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"non-numeric label {text!r}", path, lineno) from None
    if not math.isfinite(val) or val != int(val):
        raise DataError(f"label {text!r} is not an integer", path, lineno)
    return int(val)


def _split_fields(line: str) -> list[str]:
    if "\t" in line:
        return line.split("\t")
    if "," in line:
        return line.split(",")
    return line.split()


def read_ucr_tsv(path, normalize: bool = True, has_label: bool = True, split: str = "") -> LabeledDataset:
    """Read a UCR 2018 style file: one series per line, label first.

    Timestamps are ``1..L``. With ``normalize`` both values and timestamps
    are z-scored per series.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read file: {exc}", path) from exc
    rows, labels = [], []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = _split_fields(line)
        if has_label:
            labels.append(_parse_label(fields[0], path, lineno))
            fields = fields[1:]
        else:
            labels.append(0)
        if width is None:
            width = len(fields)
            if width == 0:
                raise DataError("row has no values", path, lineno)
        elif len(fields) != width:
            raise DataError(f"ragged row: {len(fields)} values, expected {width}", path, lineno)
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise DataError("non-numeric field", path, lineno) from None
    if not rows:
        raise DataError("file contains no series", path)
    raw = np.array(rows)
    if not np.all(np.isfinite(raw)):
        raise DataError("file contains NaN or infinite values (missing-value variants are unsupported)", path)
    series = []
    for values, label in zip(raw, labels):
        s = TimeSeries.from_values(values, label=label)
        series.append(zscore_normalize(s) if normalize else s)
    if not split:
        upper = path.name.upper()
        split = "train" if "TRAIN" in upper else "test" if "TEST" in upper else ""
    name = path.stem.rsplit("_", 1)[0] if "_" in path.stem else path.stem
    return LabeledDataset(tuple(series), name, split, raw)


def write_ucr_tsv(dataset: LabeledDataset, path) -> None:
    """Write the unnormalized view of ``dataset`` in UCR TSV layout."""
    if dataset.raw is None:
        raw = np.array([s.values[:, 0] for s in dataset.series])
    else:
        raw = dataset.raw
    with open(path, "w") as fh:
        for label, row in zip(dataset.labels, raw):
            fh.write("\t".join([str(int(label))] + [repr(float(x)) for x in row]) + "\n")


def read_series_file(path, has_label: bool = True, normalize: bool = True) -> TimeSeries:
    """Read a single series.

    Accepted layouts: a one-row UCR file, one value per line (timestamps
    ``1..L``), or ``time value`` pairs per line.
    """
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read file: {exc}", path) from exc
    if not lines:
        raise DataError("file is empty", path)
    if len(lines) == 1 and len(_split_fields(lines[0])) > 1:
        ds = read_ucr_tsv(path, normalize=normalize, has_label=has_label)
        return ds.series[0]
    fields = [_split_fields(ln) for ln in lines]
    width = len(fields[0])
    if width not in (1, 2) or any(len(f) != width for f in fields):
        raise DataError("expected one value or one 'time value' pair per line", path)
    try:
        cols = np.array([[float(x) for x in f] for f in fields])
    except ValueError:
        raise DataError("non-numeric field", path) from None
    if not np.all(np.isfinite(cols)):
        raise DataError("file contains NaN or infinite values", path)
    if width == 1:
        s = TimeSeries.from_values(cols[:, 0])
    else:
        s = TimeSeries(cols[:, 1], cols[:, 0])
    return zscore_normalize(s) if normalize else s


def gaussian_bumps(t: np.ndarray, centers: tuple[float, float]) -> np.ndarray:
    """``0.2 exp(-(t-c1)^2 / (2*7^2)) + exp(-(t-c2)^2 / (2*10^2))``."""
    c1, c2 = centers
    return 0.2 * np.exp(-((t - c1) ** 2) / (2 * 7.0**2)) + np.exp(-((t - c2) ** 2) / (2 * 10.0**2))


def gen_gaussian_pair(seed: int, n: int = 200, noise: float = 0.01) -> tuple[TimeSeries, TimeSeries]:
    """Two noisy two-bump series, the second shifted by 25 time units.

    Samples sit on ``n`` evenly spaced times spanning ``[1, 200]`` (so
    ``n = 200`` gives ``t_i = i``). Output is raw, not z-scored.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    t = np.linspace(1.0, 200.0, n) if n > 1 else np.array([1.0])
    rng = np.random.default_rng(seed)
    x = gaussian_bumps(t, (50.0, 140.0))
    y = gaussian_bumps(t, (75.0, 165.0))
    if noise > 0:
        x = x + rng.normal(0.0, noise, n)
        y = y + rng.normal(0.0, noise, n)
    return TimeSeries(x, t), TimeSeries(y, t)


def read_climate_csv(path, column: str = "meantemp") -> TimeSeries:
    """Read a daily climate CSV (header with ``date`` and ``meantemp``)."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or column not in [f.strip() for f in reader.fieldnames]:
                raise DataError(f"missing {column!r} column in header {reader.fieldnames}", path)
            key = next(f for f in reader.fieldnames if f.strip() == column)
            values = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    values.append(float(row[key]))
                except (TypeError, ValueError):
                    raise DataError(f"bad {column} value {row[key]!r}", path, lineno) from None
    except OSError as exc:
        raise DataError(f"cannot read file: {exc}", path) from exc
    if not values:
        raise DataError("no data rows", path)
    return TimeSeries.from_values(values)


def lag_window(series: TimeSeries, ell: int, length: int = YEAR) -> TimeSeries:
    """Samples ``ell .. ell+length-1`` (1-based), re-timestamped ``1..length``."""
    if ell < 1 or ell + length - 1 > len(series):
        raise InvalidInputError(
            f"window start {ell} with length {length} does not fit a series of length {len(series)}"
        )
    vals = series.values[ell - 1 : ell - 1 + length]
    return TimeSeries(vals, np.arange(1, length + 1, dtype=float), series.label)
