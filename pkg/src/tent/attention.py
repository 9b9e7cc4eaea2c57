"""Attention scores per head and city, and their JSON/SVG export.

``as_ch[h, c]`` is the attention mass head ``h`` puts on city ``c`` summed
over all (query time, key time) pairs; ``as_c`` sums it over heads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from html import escape
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import ModelConfig, forward
from .tensor import DimensionError

MODES = ("test-mean", "per-sample")


def head_city_scores(S: Sequence[np.ndarray]) -> np.ndarray:
    """``(H, C)`` matrix of ``sum_t sum_t' S^h[t, t', c]``.

    Sums run sequentially in (t, t') row-major order, so results are
    reproducible bit for bit.
    """
    S = [np.asarray(s, dtype=np.float64) for s in S]
    if not S:
        raise DimensionError("need at least one head")
    shape = S[0].shape
    if len(shape) != 3 or any(s.shape != shape for s in S):
        raise DimensionError(f"heads must share one (T, T', C) shape, got {[s.shape for s in S]}")
    out = np.zeros((len(S), shape[2]))
    for h, s in enumerate(S):
        acc = np.zeros(shape[2])
        for row in s.reshape(-1, shape[2]):
            acc = acc + row
        out[h] = acc
    return out


def city_scores(as_ch: np.ndarray) -> np.ndarray:
    as_ch = np.asarray(as_ch, dtype=np.float64)
    if as_ch.ndim != 2 or as_ch.shape[0] < 1:
        raise DimensionError(f"expected an (H, C) matrix, got {as_ch.shape}")
    total = as_ch[0].copy()
    for row in as_ch[1:]:
        total = total + row
    return total


@dataclass
class AttentionRecord:
    S: np.ndarray  # (H, T, T', C)
    stations: list[str]
    horizon: int
    target: str
    coords: dict[str, tuple[float, float]] = field(default_factory=dict)
    as_ch: np.ndarray = field(init=False)
    as_c: np.ndarray = field(init=False)

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        if self.S.shape[-1] != len(self.stations):
            raise DimensionError(f"{len(self.stations)} stations for S of shape {self.S.shape}")
        self.as_ch = head_city_scores(list(self.S))
        self.as_c = city_scores(self.as_ch)

    @property
    def heads(self) -> int:
        return self.S.shape[0]


def collect_attention(X: np.ndarray, params: dict, cfg: ModelConfig, *, mode: str = "test-mean",
                      sample: int = 0, layer: int = 0, batch_size: int = 256) -> np.ndarray:
    """Attention tensors ``(H, T, T', C)`` of one encoder layer.

    ``test-mean`` averages S over all samples of ``X``; ``per-sample`` returns
    the attention of sample ``sample``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    X = np.asarray(X, dtype=np.float64)
    if mode == "per-sample":
        X = X[sample:sample + 1]
    total = None
    for start in range(0, len(X), batch_size):
        _, recs = forward(X[start:start + batch_size], params, cfg)
        S = np.stack([r.S.sum(axis=0) for r in recs if r.layer == layer])
        total = S if total is None else total + S
    if total is None:
        raise ValueError("no samples to aggregate")
    return total / len(X)


def top_edges(as_ch: np.ndarray, stations: Sequence[str], k: int = 10) -> list[dict]:
    """The ``k`` largest head->station scores, ties broken by (head, station)."""
    H, C = as_ch.shape
    order = sorted(((h, c) for h in range(H) for c in range(C)),
                   key=lambda hc: (-as_ch[hc], hc))
    return [{"head": h, "station": stations[c], "weight": float(as_ch[h, c])}
            for h, c in order[:max(k, 0)]]


def to_json(record: AttentionRecord, k: int = 10) -> dict:
    doc = {
        "target": record.target,
        "horizon": record.horizon,
        "stations": list(record.stations),
        "heads": record.heads,
        "as_ch": record.as_ch.tolist(),
        "as_c": record.as_c.tolist(),
        "edges": top_edges(record.as_ch, record.stations, k),
    }
    if record.coords:
        doc["coordinates"] = {s: list(record.coords[s]) for s in record.stations
                              if s in record.coords}
    return doc


def schema() -> dict:
    text = resources.files("tent").joinpath("attention.schema.json").read_text()
    return json.loads(text)


def render_svg(record: AttentionRecord, k: int = 10, size: int = 640) -> str:
    """Circular graph: stations on the rim (alphabetical), heads inside.

    Edge width is proportional to ``as_ch``, station radius to ``as_c``; the
    target station is filled red.
    """
    cx = cy = size / 2
    r_station, r_head = size * 0.38, size * 0.16
    order = sorted(range(len(record.stations)), key=lambda c: record.stations[c])
    pos = {}
    for j, c in enumerate(order):
        a = 2 * math.pi * j / len(order) - math.pi / 2
        pos[c] = (cx + r_station * math.cos(a), cy + r_station * math.sin(a))
    hpos = {}
    for h in range(record.heads):
        a = 2 * math.pi * h / record.heads - math.pi / 2
        hpos[h] = (cx + r_head * math.cos(a), cy + r_head * math.sin(a))

    edges = top_edges(record.as_ch, record.stations, k)
    wmax = max((e["weight"] for e in edges), default=0.0)
    amax = float(record.as_c.max()) if record.as_c.size else 0.0
    index = {s: c for c, s in enumerate(record.stations)}

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<title>attention for {escape(record.target)}, horizon {record.horizon}</title>',
           '<g class="edges" stroke="#4a6fa5" stroke-opacity="0.7">']
    for e in edges:
        (x1, y1), (x2, y2) = hpos[e["head"]], pos[index[e["station"]]]
        w = 8.0 * e["weight"] / wmax if wmax > 0 else 0.0
        out.append(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" '
                   f'stroke-width="{w:.6f}" data-head="{e["head"]}" '
                   f'data-station="{escape(e["station"])}"/>')
    out.append('</g>')
    out.append('<g class="stations">')
    for c in order:
        x, y = pos[c]
        name = record.stations[c]
        r = 3.0 + 17.0 * record.as_c[c] / amax if amax > 0 else 3.0
        fill = "#d62728" if name == record.target else "#7f7f7f"
        out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{r:.6f}" fill="{fill}" '
                   f'data-station="{escape(name)}"/>')
        out.append(f'<text x="{x:.3f}" y="{y - r - 4:.3f}" font-size="11" '
                   f'text-anchor="middle">{escape(name)}</text>')
    out.append('</g>')
    out.append('<g class="heads">')
    for h, (x, y) in hpos.items():
        out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="9" fill="#ffffff" stroke="#333333"/>')
        out.append(f'<text x="{x:.3f}" y="{y + 4:.3f}" font-size="10" '
                   f'text-anchor="middle">{h + 1}</text>')
    out.append('</g>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def export_attention(record: AttentionRecord, json_path, svg_path=None, k: int = 10) -> None:
    Path(json_path).write_text(json.dumps(to_json(record, k), indent=2))
    if svg_path is not None:
        Path(svg_path).write_text(render_svg(record, k))
