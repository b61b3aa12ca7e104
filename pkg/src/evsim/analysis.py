"""Validation statistics and spatial analysis of simulated episodes.

Spatial agreement uses a Pearson correlation over per-charger usage minutes;
temporal agreement a lagged cross-correlation of in-use counts sampled every
15 minutes. SOC observations are binned on a flat-top hexagonal grid, and
nodes combining low passing SOC with few nearby chargers are flagged by a
three-cluster k-means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .clustering import ClusterModel, FeatureMatrix, classify, jenks_breaks, kmeans
from .errors import InsufficientOverlap, KeyMismatch, TooFewValues, ZeroVariance
from .road_network import RoadGraph
from .scenario import Charger

HEX_AREA_FINE = 5.2
HEX_AREA_COARSE = 36.1
SQRT3 = math.sqrt(3.0)


# -- correlation -------------------------------------------------------------------

def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise KeyMismatch(f"lengths {x.shape} and {y.shape} differ")
    if len(x) < 2:
        raise InsufficientOverlap("need at least two paired values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sum(dx * dx))
    sy = float(np.sum(dy * dy))
    if sx <= 0 or sy <= 0:
        raise ZeroVariance("a series has zero variance")
    r = float(np.sum(dx * dy) / math.sqrt(sx * sy))
    return min(1.0, max(-1.0, r))


def spatial_correlation(sim: Mapping, ref: Mapping) -> float:
    """Pearson r between two usage maps over the same spatial units."""
    if set(sim) != set(ref):
        missing = sorted(set(sim) ^ set(ref), key=str)[:5]
        raise KeyMismatch(f"usage maps cover different units, e.g. {missing}")
    keys = sorted(sim, key=str)
    return pearson([sim[k] for k in keys], [ref[k] for k in keys])


def temporal_cross_correlation(z: Sequence[float], x: Sequence[float], lag: int) -> float:
    """Correlation of ``z[t]`` with ``x[t + lag]`` over the overlapping samples,
    each series centred on its own mean within that overlap."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(z) != len(x):
        raise KeyMismatch(f"series lengths {len(z)} and {len(x)} differ")
    n = len(z)
    if lag >= 0:
        a, b = z[: n - lag], x[lag:]
    else:
        a, b = z[-lag:], x[: n + lag]
    if len(a) < 2:
        raise InsufficientOverlap(f"lag {lag} leaves {max(len(a), 0)} overlapping samples")
    return pearson(a, b)


def lag_scan(z: Sequence[float], x: Sequence[float], max_lag: int) -> tuple[int, float, list]:
    """Cross-correlation for every lag in ``[-max_lag, max_lag]``; returns the
    best lag, its r, and the full ``(lag, r)`` list. Lags whose overlap has
    zero variance are skipped."""
    scan = []
    for lag in range(-max_lag, max_lag + 1):
        try:
            scan.append((lag, temporal_cross_correlation(z, x, lag)))
        except (ZeroVariance, InsufficientOverlap):
            continue
    if not scan:
        raise ZeroVariance("no lag yields a defined correlation")
    best = max(scan, key=lambda t: (t[1], -abs(t[0])))
    return best[0], best[1], scan


# -- usage maps and series --------------------------------------------------------------

def _windows(usage) -> dict:
    """Accept a ``UsagePattern``, its dict form, or ``{charger_id: [(start, end), ...]}``."""
    if hasattr(usage, "windows"):
        return {c: [(s, e) for _, s, e in w] for c, w in usage.windows.items()}
    if isinstance(usage, Mapping) and "chargers" in usage:
        return {c["charger_id"]: [tuple(w) for w in c["busy_windows"]] for c in usage["chargers"]}
    return {c: [tuple(w[-2:]) for w in ws] for c, ws in usage.items()}


def usage_map(usage, charger_ids: Sequence[str], window: tuple = (0.0, 1440.0)) -> dict:
    """Busy minutes per charger inside ``window``; chargers without sessions get 0."""
    lo, hi = window
    win = _windows(usage)
    out = {}
    for cid in charger_ids:
        total = 0.0
        for s, e in win.get(cid, []):
            total += max(0.0, min(e, hi) - max(s, lo))
        out[cid] = total
    return out


def usage_series(usage, interval: float = 15.0, horizon: float = 1440.0) -> np.ndarray:
    """Number of sessions in progress at each sample time ``k * interval``."""
    if interval <= 0:
        raise ValueError("interval must be positive")
    times = np.arange(0.0, horizon, interval)
    counts = np.zeros(len(times))
    for ws in _windows(usage).values():
        for s, e in ws:
            counts += (times >= s) & (times < e)
    return counts


@dataclass
class CurvePoint:
    episode: int
    spatial_r: float
    temporal_r_peak: float
    lag: int


def validation_curve(episodes: Sequence[tuple], reference, charger_ids: Sequence[str],
                     interval: float = 15.0, max_lag: int = 8) -> list:
    """Spatial and peak temporal correlation of each ``(episode, usage)`` against ``reference``.

    Undefined correlations (for example an episode with no charging) are NaN.
    """
    ref_map = usage_map(reference, charger_ids)
    ref_series = usage_series(reference, interval)
    out = []
    for ep, usage in episodes:
        try:
            sr = spatial_correlation(usage_map(usage, charger_ids), ref_map)
        except (ZeroVariance, InsufficientOverlap):
            sr = float("nan")
        try:
            lag, tr, _ = lag_scan(usage_series(usage, interval), ref_series, max_lag)
        except ZeroVariance:
            lag, tr = 0, float("nan")
        out.append(CurvePoint(int(ep), sr, tr, int(lag)))
    return out


# -- hexagonal binning --------------------------------------------------------------

def hex_edge(cell_area_km2: float) -> float:
    """Edge length of a regular hexagon with the given area."""
    if cell_area_km2 <= 0:
        raise ValueError("cell area must be positive")
    return math.sqrt(2.0 * cell_area_km2 / (3.0 * SQRT3))


def hex_cell(x: float, y: float, edge: float) -> tuple[int, int]:
    """Axial ``(q, r)`` of the flat-top hexagon containing the point."""
    q = (2.0 / 3.0 * x) / edge
    r = (-1.0 / 3.0 * x + SQRT3 / 3.0 * y) / edge
    s = -q - r
    rq, rr, rs = round(q), round(r), round(s)
    dq, dr, ds = abs(rq - q), abs(rr - r), abs(rs - s)
    if dq > dr and dq > ds:
        rq = -rr - rs
    elif dr > ds:
        rr = -rq - rs
    return int(rq), int(rr)


def hex_center(q: int, r: int, edge: float) -> tuple[float, float]:
    return edge * 1.5 * q, edge * SQRT3 * (r + q / 2.0)


def hex_polygon(q: int, r: int, edge: float) -> list:
    cx, cy = hex_center(q, r, edge)
    pts = [(cx + edge * math.cos(math.pi / 3 * i), cy + edge * math.sin(math.pi / 3 * i)) for i in range(6)]
    return pts + [pts[0]]


@dataclass
class HexSocMap:
    cell_area_km2: float
    edge_km: float
    cells: dict = field(default_factory=dict)  # (q, r) -> (mean soc, count)

    def means(self) -> dict:
        return {k: v[0] for k, v in self.cells.items()}

    def to_geojson(self, labels: Mapping | None = None) -> dict:
        feats = []
        for (q, r), (mean, count) in sorted(self.cells.items()):
            props = {"q": q, "r": r, "mean_soc": mean, "count": count}
            if labels is not None:
                props["category"] = labels.get((q, r))
            feats.append({"type": "Feature", "properties": props,
                          "geometry": {"type": "Polygon", "coordinates": [[list(p) for p in hex_polygon(q, r, self.edge_km)]]}})
        return {"type": "FeatureCollection", "cell_area_km2": self.cell_area_km2, "features": feats}


def hex_aggregate(observations: Sequence[tuple], cell_area_km2: float = HEX_AREA_FINE) -> HexSocMap:
    """Mean SOC per hexagonal cell from ``(x_km, y_km, soc)`` observations."""
    edge = hex_edge(cell_area_km2)
    sums: dict = {}
    for x, y, soc in observations:
        key = hex_cell(x, y, edge)
        s, n = sums.get(key, (0.0, 0))
        sums[key] = (s + float(soc), n + 1)
    cells = {k: (s / n, n) for k, (s, n) in sums.items()}
    return HexSocMap(cell_area_km2, edge, cells)


def node_observations(graph: RoadGraph, soc_observations: Sequence) -> list:
    """Turn ``(node, soc)`` pairs into ``(x, y, soc)`` points."""
    return [(*graph.coords(n), s) for n, s in soc_observations]


@dataclass
class SocCategories:
    breaks: list
    labels: dict  # cell -> class index, 0 is the lowest SOC class
    lowest: list


def low_soc_categories(hexmap: HexSocMap, classes: int = 5) -> SocCategories:
    means = hexmap.means()
    if len(set(means.values())) < classes:
        raise TooFewValues(f"{len(set(means.values()))} distinct cell means for {classes} classes")
    breaks = jenks_breaks(list(means.values()), classes)
    keys = sorted(means)
    idx = classify([means[k] for k in keys], breaks)
    labels = dict(zip(keys, idx))
    return SocCategories(breaks, labels, [k for k in keys if labels[k] == 0])


# -- risk areas ---------------------------------------------------------------------------

def node_mean_soc(soc_observations: Sequence) -> list:
    acc: dict = {}
    for n, s in soc_observations:
        t, c = acc.get(n, (0.0, 0))
        acc[n] = (t + float(s), c + 1)
    return sorted((n, t / c) for n, (t, c) in acc.items())


def buffer_counts(points_km: np.ndarray, chargers_km: np.ndarray, buffer_m: float) -> np.ndarray:
    """Chargers within ``buffer_m`` (Euclidean) of each point."""
    if len(chargers_km) == 0:
        return np.zeros(len(points_km), dtype=int)
    d = np.hypot(points_km[:, None, 0] - chargers_km[None, :, 0], points_km[:, None, 1] - chargers_km[None, :, 1])
    return (d * 1000.0 <= buffer_m + 1e-9).sum(axis=1)


@dataclass
class RiskReport:
    buffer_m: float
    nodes: list
    counts: list
    mean_soc: list
    model: ClusterModel
    high_risk_cluster: int
    high_risk_nodes: list

    def to_dict(self) -> dict:
        return {
            "buffer_m": self.buffer_m,
            "nodes": [{"node": n, "charger_count": int(c), "mean_soc": s, "cluster": int(k)}
                      for n, c, s, k in zip(self.nodes, self.counts, self.mean_soc, self.model.assignments)],
            "centroids_normalized": self.model.centroids.tolist(),
            "high_risk_cluster": self.high_risk_cluster,
            "high_risk_nodes": self.high_risk_nodes,
        }


def risk_areas(node_soc: Sequence[tuple], chargers: Sequence[Charger], graph: RoadGraph,
               buffer_m: float = 1000.0, seed: int = 0, k: int = 3) -> RiskReport:
    """Cluster nodes on (nearby charger count, mean SOC); the high-risk cluster has
    the smallest sum of normalised centroid coordinates."""
    if buffer_m <= 0:
        raise ValueError("buffer must be positive")
    nodes = [n for n, _ in node_soc]
    soc = np.array([s for _, s in node_soc], dtype=float)
    pts = np.array([graph.coords(n) for n in nodes], dtype=float).reshape(-1, 2)
    cxy = np.array([graph.coords(c.node_id) for c in chargers], dtype=float).reshape(-1, 2)
    counts = buffer_counts(pts, cxy, buffer_m)
    fm = FeatureMatrix(np.column_stack([counts, soc]), ("charger_count", "mean_soc")).normalized()
    model = kmeans(fm, k, seed)
    high = int(np.argmin(model.centroids.sum(axis=1)))
    members = [n for n, a in zip(nodes, model.assignments) if a == high]
    return RiskReport(buffer_m, nodes, counts.tolist(), soc.tolist(), model, high, members)
