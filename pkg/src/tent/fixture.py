"""Small synthetic multi-station dataset bundled with the package.

Three hourly stations with ``temperature`` and ``pressure``.  Latent series
live in "scaled units" (roughly [0, 1]); temperatures are ``30 u - 5`` degC.
The target station's latent temperature is

    u_charlie(t) = 0.5 u_alpha(t - 4) + 0.5 u_bravo(t - 8) + N(0, 0.1^2)

so a model with lag >= 8 and horizon 4 can predict it up to the noise, while
the persistence forecast cannot.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

STATIONS = ("alpha", "bravo", "charlie")
COORDS = {"alpha": (52.37, 4.90), "bravo": (50.85, 5.69), "charlie": (51.92, 4.48)}
TARGET = ("charlie", "temperature")
START = "2016-01-01T00:00:00Z"


def _ar1(rng, n, phi=0.7, std=0.15, mean=0.5):
    innov = rng.normal(0.0, std * np.sqrt(1 - phi * phi), size=n)
    x = np.empty(n)
    x[0] = mean
    for t in range(1, n):
        x[t] = mean + phi * (x[t - 1] - mean) + innov[t]
    return x


def make_fixture(n_steps: int = 2000, seed: int = 7, noise: float = 0.1):
    """Return ``(frame, coords)`` in the canonical wide layout."""
    rng = np.random.default_rng(seed)
    ua = _ar1(rng, n_steps)
    ub = _ar1(rng, n_steps)
    lag_a = np.concatenate([np.full(4, 0.5), ua[:-4]])
    lag_b = np.concatenate([np.full(8, 0.5), ub[:-8]])
    uc = 0.5 * lag_a + 0.5 * lag_b + rng.normal(0.0, noise, size=n_steps)
    index = pd.date_range(START, periods=n_steps, freq="h")
    cols = {}
    for name, u in zip(STATIONS, (ua, ub, uc)):
        cols[f"{name}:temperature"] = np.round(30.0 * u - 5.0, 6)
        cols[f"{name}:pressure"] = np.round(1000.0 + 20.0 * _ar1(rng, n_steps, phi=0.95), 6)
    frame = pd.DataFrame(cols, index=pd.DatetimeIndex(index, name="timestamp"))
    return frame, dict(COORDS)


def write_fixture(directory, **kwargs) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame, coords = make_fixture(**kwargs)
    data = directory / "fixture.csv"
    out = frame.copy()
    out.index = out.index.strftime("%Y-%m-%dT%H:%M:%SZ")
    out.to_csv(data, index_label="timestamp")
    coord_path = directory / "fixture_coords.csv"
    pd.DataFrame(
        [(s, *coords[s]) for s in STATIONS], columns=["station", "lat", "lon"]
    ).to_csv(coord_path, index=False)
    return data, coord_path


def fixture_paths() -> tuple[Path, Path]:
    """Paths of the bundled fixture CSVs."""
    base = resources.files("tent") / "resources"
    return Path(str(base / "fixture.csv")), Path(str(base / "fixture_coords.csv"))
