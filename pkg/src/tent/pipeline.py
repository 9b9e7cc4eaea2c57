"""Station CSV ingestion, feature engineering, scaling and windowing.

Input layout
------------
* data CSV: first column an ISO-8601 timestamp, other columns named
  ``station:feature``;
* coordinates CSV: columns ``station,lat,lon`` (degrees).

Features per station are the raw measurements, then the Cartesian coordinates
``x, y, z`` of the station, then calendar features (``day_of_year`` and, for
hourly data, ``hour``).  Everything is min-max scaled with extrema taken from
the training block only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

CARTESIAN = ("x", "y", "z")


class IngestionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# feature engineering


def latlon_to_cartesian(lat: float, lon: float) -> tuple[float, float, float]:
    """Unit-sphere coordinates for latitude/longitude in degrees."""
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude {lon} outside [-180, 180]")
    phi, lam = math.radians(lat), math.radians(lon)
    return (math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi))


def periodicity_names(granularity: str) -> tuple[str, ...]:
    if granularity == "hourly":
        return ("day_of_year", "hour")
    if granularity == "daily":
        return ("day_of_year",)
    raise ValueError(f"granularity must be 'hourly' or 'daily', got {granularity!r}")


def add_periodicity(frame: pd.DataFrame, granularity: str = "hourly") -> pd.DataFrame:
    """Append day-of-year (1-366) and, for hourly data, hour-of-day (0-23)."""
    names = periodicity_names(granularity)
    idx = pd.DatetimeIndex(frame.index)
    out = frame.copy()
    out["day_of_year"] = idx.dayofyear.astype(np.float64)
    if "hour" in names:
        out["hour"] = idx.hour.astype(np.float64)
    return out


@dataclass
class StationSeries:
    station: str
    lat: float
    lon: float
    frame: pd.DataFrame  # index: timestamps, columns: features

    def __post_init__(self):
        check_uniform(self.frame.index)


def check_uniform(index) -> pd.Timedelta:
    idx = pd.DatetimeIndex(index)
    if len(idx) < 2:
        return pd.Timedelta(0)
    diffs = np.diff(idx.asi8)
    if diffs[0] <= 0 or not np.all(diffs == diffs[0]):
        raise IngestionError("timestamps must be strictly increasing and uniformly spaced")
    return pd.Timedelta(int(diffs[0]), unit="ns")


# ---------------------------------------------------------------------------
# scaling


@dataclass
class ScalingSpec:
    """Per-(station, feature) minima and maxima, shape ``(C, F)``."""

    mins: np.ndarray
    maxs: np.ndarray
    stations: list[str]
    features: list[str]

    @classmethod
    def fit(cls, values: np.ndarray, stations, features, pooled=()) -> "ScalingSpec":
        """Fit on an ``(N, C, F)`` block.

        Features named in ``pooled`` share one min/max across all stations;
        station-constant features such as coordinates need this, otherwise
        every station would scale them to 0.
        """
        values = np.asarray(values, dtype=np.float64)
        mins, maxs = values.min(axis=0), values.max(axis=0)
        features = list(features)
        for name in pooled:
            f = features.index(name)
            mins[:, f] = mins[:, f].min()
            maxs[:, f] = maxs[:, f].max()
        return cls(mins, maxs, list(stations), features)

    @property
    def span(self) -> np.ndarray:
        return self.maxs - self.mins

    def transform(self, values: np.ndarray) -> np.ndarray:
        """``(x - min) / (max - min)``; constant features map to 0."""
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(values, dtype=np.float64) - self.mins) / safe
        return np.where(span > 0, out, 0.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.span + self.mins

    def inverse_one(self, scaled, station: int, feature: int):
        return (np.asarray(scaled, dtype=np.float64) * self.span[station, feature]
                + self.mins[station, feature])

    def to_dict(self) -> dict:
        return {
            "stations": self.stations,
            "features": self.features,
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingSpec":
        return cls(np.array(d["mins"], dtype=np.float64), np.array(d["maxs"], dtype=np.float64),
                   list(d["stations"]), list(d["features"]))


def minmax_scale(values: np.ndarray, spec: ScalingSpec) -> np.ndarray:
    return spec.transform(values)


# ---------------------------------------------------------------------------
# ingestion


def read_data_csv(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    frame = pd.read_csv(path)
    ts = pd.to_datetime(frame.iloc[:, 0], utc=True)
    frame = frame.iloc[:, 1:]
    frame.index = pd.DatetimeIndex(ts, name="timestamp")
    bad = [c for c in frame.columns if ":" not in c]
    if bad:
        raise IngestionError(f"columns must be named 'station:feature': {bad}")
    return frame


def read_coordinates(path) -> dict[str, tuple[float, float]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"coordinates file not found: {path}")
    df = pd.read_csv(path)
    missing = {"station", "lat", "lon"} - set(df.columns)
    if missing:
        raise IngestionError(f"coordinates file lacks columns {sorted(missing)}")
    return {str(r.station): (float(r.lat), float(r.lon)) for r in df.itertuples()}


def split_columns(frame: pd.DataFrame) -> dict[str, list[str]]:
    """Map station -> feature names in column order."""
    out: dict[str, list[str]] = {}
    for col in frame.columns:
        station, feature = col.split(":", 1)
        out.setdefault(station, []).append(feature)
    return out


def impute(frame: pd.DataFrame) -> tuple[pd.DataFrame, pd.DatetimeIndex]:
    """Forward- then backward-fill each column; drop rows still missing.

    Returns the filled frame and the index of dropped rows.
    """
    for col in frame.columns:
        if frame[col].isna().all():
            station, _, feature = col.partition(":")
            raise IngestionError(f"feature {feature!r} of station {station!r} is entirely missing")
    filled = frame.ffill().bfill()
    bad = filled.isna().any(axis=1)
    return filled[~bad], filled.index[bad]


def numeric_features(frame: pd.DataFrame, station: str) -> list[str]:
    cols = [c for c in frame.columns if c.split(":", 1)[0] == station]
    return [c.split(":", 1)[1] for c in cols if pd.api.types.is_numeric_dtype(frame[c])]


def station_series(frame: pd.DataFrame, coords: dict, features: Sequence[str] | None = None,
                   stations: Sequence[str] | None = None) -> list[StationSeries]:
    """Split a wide frame into per-station series with a shared feature list."""
    layout = split_columns(frame)
    stations = list(stations) if stations is not None else list(layout)
    if features is None:
        common = [set(numeric_features(frame, st)) for st in stations[1:]]
        features = [f for f in numeric_features(frame, stations[0])
                    if all(f in c for c in common)]
    features = list(features)
    out = []
    for st in stations:
        if st not in coords:
            raise IngestionError(f"no coordinates for station {st!r}")
        cols = [f"{st}:{f}" for f in features]
        missing = [c for c in cols if c not in frame.columns]
        if missing:
            raise IngestionError(f"missing columns {missing}")
        sub = frame[cols].astype(np.float64)
        sub.columns = features
        lat, lon = coords[st]
        out.append(StationSeries(st, lat, lon, sub))
    return out


def feature_tensor(series: Sequence[StationSeries], granularity: str = "hourly",
                   cartesian: bool = True, periodicity: bool = True):
    """Stack stations into an ``(N, C, F)`` raw tensor plus feature names."""
    blocks, names = [], None
    for s in series:
        f = s.frame
        if cartesian:
            f = f.copy()
            for name, v in zip(CARTESIAN, latlon_to_cartesian(s.lat, s.lon)):
                f[name] = v
        if periodicity:
            f = add_periodicity(f, granularity)
        if names is None:
            names = list(f.columns)
        blocks.append(f.to_numpy(dtype=np.float64))
    return np.stack(blocks, axis=1), names


# ---------------------------------------------------------------------------
# windowing


def n_windows(N: int, lag: int, horizon: int) -> int:
    return N - lag - horizon + 1


def window(values: np.ndarray, lag: int, horizon: int, target: tuple[int, int]):
    """Stride-1 supervised windows over an ``(N, C, F)`` tensor.

    Sample ``k`` covers rows ``k .. k+lag-1``; its target is
    ``values[k+lag-1+horizon, target]``.
    """
    values = np.asarray(values)
    N = len(values)
    if lag < 1 or horizon < 1:
        raise ValueError("lag and horizon must be >= 1")
    n = n_windows(N, lag, horizon)
    if n < 1:
        raise ValueError(f"series of length {N} too short: need at least {lag + horizon}")
    idx = np.arange(n)[:, None] + np.arange(lag)[None, :]
    X = values[idx]
    c, f = target
    y = values[np.arange(n) + lag - 1 + horizon, c, f]
    return X, y


@dataclass
class WindowedDataset:
    X: np.ndarray  # (n, T, C, F), scaled
    y: np.ndarray  # (n,), scaled target
    y_raw: np.ndarray  # (n,), target in physical units
    timestamps: pd.DatetimeIndex  # time of each target
    lag: int
    horizon: int
    target_station: str
    target_feature: str

    def __len__(self):
        return len(self.y)


@dataclass
class PipelineConfig:
    lag: int = 16
    horizon: int = 4
    target_station: str = "Vancouver"
    target_feature: str = "temperature"
    features: list[str] | None = None
    stations: list[str] | None = None
    split_sizes: list[int | None] = field(default_factory=lambda: [35362, 1024, 7997])
    granularity: str = "hourly"
    cartesian: bool = True
    periodicity: bool = True


@dataclass
class PreparedData:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    spec: ScalingSpec
    stations: list[str]
    raw_features: list[str]
    features: list[str]
    coords: dict[str, tuple[float, float]]
    target_index: tuple[int, int]
    step: pd.Timedelta
    dropped: pd.DatetimeIndex

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.train.X.shape[1:]

    def inverse_target(self, scaled) -> np.ndarray:
        return self.spec.inverse_one(scaled, *self.target_index)


def block_rows(sizes: Sequence[int | None], N: int, lag: int, horizon: int) -> list[tuple[int, int]]:
    """Row ranges of consecutive train/val/test blocks.

    Each block is windowed on its own so no sample straddles a boundary; a
    block yielding ``n`` samples needs ``n + lag + horizon - 1`` rows.  A final
    size of ``None`` takes whatever rows remain.
    """
    need = lag + horizon - 1
    ranges, start = [], 0
    for i, n in enumerate(sizes):
        if n is None:
            if i != len(sizes) - 1:
                raise ValueError("only the last split size may be None")
            n = N - start - need
        if n < 1:
            raise ValueError(f"split {i} would have {n} samples")
        stop = start + n + need
        if stop > N:
            total = sum(s for s in sizes if s is not None) + need * len(sizes)
            raise ValueError(f"series has {N} rows; splits {list(sizes)} need at least {total}")
        ranges.append((start, stop))
        start = stop
    return ranges


def prepare(frame: pd.DataFrame, coords: dict, cfg: PipelineConfig,
            spec: ScalingSpec | None = None) -> PreparedData:
    """Impute, engineer features, fit scaling on the train block, and window.

    Passing ``spec`` reuses a previously fitted scaling instead of refitting.
    """
    if len(cfg.split_sizes) != 3:
        raise ValueError("split_sizes must list train, validation and test sizes")
    frame, dropped = impute(frame)
    step = check_uniform(frame.index)
    series = station_series(frame, coords, cfg.features, cfg.stations)
    raw, names = feature_tensor(series, cfg.granularity, cfg.cartesian, cfg.periodicity)
    stations = [s.station for s in series]
    raw_features = list(series[0].frame.columns)
    if cfg.target_station not in stations:
        raise IngestionError(f"target station {cfg.target_station!r} not in data")
    if cfg.target_feature not in raw_features:
        raise IngestionError(f"target feature {cfg.target_feature!r} not among {raw_features}")
    target = (stations.index(cfg.target_station), names.index(cfg.target_feature))

    ranges = block_rows(cfg.split_sizes, len(raw), cfg.lag, cfg.horizon)
    if spec is None:
        lo, hi = ranges[0]
        pooled = CARTESIAN if cfg.cartesian else ()
        spec = ScalingSpec.fit(raw[lo:hi], stations, names, pooled)
    elif spec.stations != stations or spec.features != names:
        raise IngestionError("scaling spec does not match the data layout")
    scaled = spec.transform(raw)

    parts = []
    for lo, hi in ranges:
        X, y = window(scaled[lo:hi], cfg.lag, cfg.horizon, target)
        _, y_raw = window(raw[lo:hi], cfg.lag, cfg.horizon, target)
        ts = frame.index[lo + cfg.lag - 1 + cfg.horizon: hi]
        parts.append(WindowedDataset(X, y, y_raw, ts, cfg.lag, cfg.horizon,
                                     cfg.target_station, cfg.target_feature))
    coords_used = {s.station: (s.lat, s.lon) for s in series}
    return PreparedData(parts[0], parts[1], parts[2], spec, stations, raw_features, names,
                        coords_used, target, step, dropped)


def prepare_files(data_csv, coords_csv, cfg: PipelineConfig,
                  spec: ScalingSpec | None = None) -> PreparedData:
    return prepare(read_data_csv(data_csv), read_coordinates(coords_csv), cfg, spec)


def window_features(frame: pd.DataFrame, data: "PreparedData | dict", granularity: str,
                    cartesian: bool = True, periodicity: bool = True) -> np.ndarray:
    """Scaled ``(N, C, F)`` features for an arbitrary frame using fitted metadata.

    ``data`` supplies ``stations``, ``raw_features``, ``coords`` and ``spec``.
    """
    get = data.get if isinstance(data, dict) else lambda k: getattr(data, k)
    frame, _ = impute(frame)
    series = station_series(frame, get("coords"), get("raw_features"), get("stations"))
    raw, _ = feature_tensor(series, granularity, cartesian, periodicity)
    return get("spec").transform(raw)


def manifest(data: PreparedData, cfg: PipelineConfig, sources: dict | None = None) -> dict:
    return {
        "sources": sources or {},
        "stations": data.stations,
        "raw_features": data.raw_features,
        "features": data.features,
        "coordinates": {k: list(v) for k, v in data.coords.items()},
        "lag": cfg.lag,
        "horizon": cfg.horizon,
        "granularity": cfg.granularity,
        "cartesian": cfg.cartesian,
        "periodicity": cfg.periodicity,
        "target": {"station": cfg.target_station, "feature": cfg.target_feature},
        "split_sizes": {"train": len(data.train), "val": len(data.val), "test": len(data.test)},
        "step_seconds": data.step.total_seconds(),
        "dropped_rows": len(data.dropped),
        "scaling": data.spec.to_dict(),
    }
