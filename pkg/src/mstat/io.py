"""Data ingestion, run configuration and report/series emission."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .moments import NullMoments

MODES = ("offline", "online", "threshold", "simulate", "moments")


class DataFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class Dataset:
    rows: np.ndarray  # (n, d), time order preserved
    source: str = ""
    header: list | None = None

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return int(self.rows.shape[0])


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path) -> Dataset:
    """Read a comma-separated numeric file, one sample per row.

    A first row that contains any non-numeric cell is taken as a header. Blank
    lines are skipped; line numbers in error messages are 1-based file lines.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    header = None
    values: list[list[float]] = []
    d = None
    with path.open(newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in raw]
            if not cells or all(c == "" for c in cells):
                continue
            if d is None and header is None and not values and not all(_is_number(c) for c in cells):
                header = cells
                d = len(cells)
                continue
            if d is None:
                d = len(cells)
            if len(cells) != d:
                raise DataFormatError(
                    f"{path}: line {lineno} has {len(cells)} fields, expected {d}")
            row = []
            for col, c in enumerate(cells, start=1):
                try:
                    v = float(c)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric value {c!r} at line {lineno}, column {col}") from None
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{path}: non-finite value {c!r} at line {lineno}, column {col}")
                row.append(v)
            values.append(row)
    if not values:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.asarray(values, dtype=np.float64), str(path), header)


def fmt17(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, rows, header=None) -> None:
    """Write a 2-D array (or 1-D series) with 17 significant digits, so it reads back bit-exactly."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for r in arr:
            w.writerow([fmt17(v) for v in r])


def write_series(path, columns: dict) -> None:
    """Named equal-length columns to CSV with a header row."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=np.float64) for k in names])
    write_csv(path, data, header=names)


@dataclass
class RunConfig:
    """Settings for one CLI run; loaded from JSON and overridable by flags."""

    mode: str
    seed: int | None = None
    bandwidth: float | str = "median"
    N: int | None = None
    B_max: int | None = None
    B0: int | None = None
    alpha: float | None = None
    arl: float | None = None
    corrected: bool = False
    convention: str = "theorem"
    n_draws: int = 10_000
    workers: int = 1
    contiguous: bool = False
    data: str | None = None
    ref: str | None = None
    out: str | None = None
    format: str = "json"
    moments_cache: str | None = None
    experiment: str | None = None
    params: dict = field(default_factory=dict)

    _REQUIRED = {
        "offline": ("N", "B_max", "alpha", "data", "ref"),
        "online": ("N", "B0", "arl", "data", "ref"),
        "threshold": (),
        "simulate": ("experiment",),
        "moments": ("N", "ref"),
    }

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.seed is None and self.mode != "threshold":
            raise ConfigError("a seed is required (set 'seed' in the config or pass --seed)")
        missing = [k for k in self._REQUIRED[self.mode] if getattr(self, k) is None]
        if self.mode == "threshold":
            if self.alpha is not None:
                missing += [] if self.B_max is not None else ["B_max"]
            elif self.arl is not None:
                missing += [] if self.B0 is not None else ["B0"]
            else:
                missing.append("alpha or arl")
        if self.mode == "moments" and self.B_max is None and self.B0 is None:
            missing.append("B_max or B0")
        if missing:
            raise ConfigError(f"mode {self.mode!r} needs: {', '.join(missing)}")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be 'json' or 'csv'")
        if not (self.bandwidth == "median" or isinstance(self.bandwidth, (int, float))):
            raise ConfigError("bandwidth must be a positive number or 'median'")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


# --- moments cache ---------------------------------------------------------


def pool_hash(pool: np.ndarray) -> str:
    a = np.ascontiguousarray(pool, dtype=np.float64)
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()[:16]


def cache_key(pool: np.ndarray, bandwidth: float, n_draws: int, seed: int) -> str:
    return f"{pool_hash(pool)}-{fmt17(bandwidth)}-{n_draws}-{seed}"


class MomentsCache:
    """Directory of h-moment estimates keyed by (pool hash, bandwidth, draws, seed).

    Only the h-moments are stored; variance and skewness for a given ``N`` and
    block range are reassembled on load, which is cheap.
    """

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.dir / f"moments-{key}.json"

    def get(self, key: str, N: int, block_sizes) -> NullMoments | None:
        p = self._path(key)
        if not p.is_file():
            return None
        stored = NullMoments.from_json(p.read_text())
        return NullMoments.build(stored.h, N, block_sizes)

    def put(self, key: str, moments: NullMoments) -> Path:
        p = self._path(key)
        p.write_text(moments.to_json())
        return p
