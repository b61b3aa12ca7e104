"""k-means, elbow scan, driver grouping and exact natural-breaks classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TooFewPoints, TooFewValues
from .scenario import PURPOSES, DriverAgent

log = logging.getLogger(__name__)

DRIVER_FEATURES = ("total_distance", "initial_soc", "tcd", "cd")

# Cluster numbering follows the driver-type table: profile name -> number.
DRIVER_PROFILES = {
    "mid_distance_sparse": 1,
    "long_distance_low_battery": 2,
    "mid_distance_dense": 3,
    "long_distance_sparse": 4,
    "short_distance_dense": 5,
}


@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: tuple
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.values), -1) if len(self.values) else np.zeros((0, len(self.columns)))
        if self.values.shape[1] != len(self.columns):
            raise ValueError("column names do not match feature width")

    @property
    def is_normalized(self) -> bool:
        return self.mins is not None

    def normalized(self) -> "FeatureMatrix":
        """Per-column min-max scaling; constant columns map to 0."""
        if len(self.values) == 0:
            z = np.zeros(len(self.columns))
            return FeatureMatrix(self.values.copy(), self.columns, z, z.copy())
        lo = self.values.min(axis=0)
        hi = self.values.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        scaled = np.where(hi > lo, (self.values - lo) / span, 0.0)
        if self.is_normalized:
            # compose with the existing record so denormalize still reaches raw units
            old_span = self.maxs - self.mins
            lo, hi = self.mins + lo * old_span, self.mins + hi * old_span
        return FeatureMatrix(scaled, self.columns, lo, hi)

    def denormalize(self, values: np.ndarray | None = None) -> np.ndarray:
        v = self.values if values is None else np.asarray(values, dtype=float)
        if not self.is_normalized:
            return v.copy()
        return self.mins + v * (self.maxs - self.mins)


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    n_iter: int = 0
    history: list = field(default_factory=list)


def _as_array(points) -> np.ndarray:
    if isinstance(points, FeatureMatrix):
        return points.values
    return np.asarray(points, dtype=float)


def _assign(x: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    lab = np.argmin(d2, axis=1)
    return lab, d2[np.arange(len(x)), lab]


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int) -> ClusterModel:
    k = len(centroids)
    c = centroids.copy()
    lab, d2 = _assign(x, c)
    history = [float(d2.sum())]
    it = 0
    for it in range(1, max_iter + 1):
        new_c = c.copy()
        counts = np.bincount(lab, minlength=k)
        for j in range(k):
            if counts[j]:
                new_c[j] = x[lab == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            # reseed an empty cluster on the point worst served by its centroid
            far = int(np.argmax(d2))
            new_c[j] = x[far]
            d2[far] = 0.0
            lab[far] = j
        new_lab, new_d2 = _assign(x, new_c)
        inertia = float(new_d2.sum())
        scale = max(1.0, history[-1])
        assert inertia <= history[-1] + 1e-9 * scale, "k-means inertia increased"
        history.append(inertia)
        c = new_c
        if np.array_equal(new_lab, lab):
            lab, d2 = new_lab, new_d2
            break
        lab, d2 = new_lab, new_d2
    return ClusterModel(k, c, lab, float(d2.sum()), it, history)


def kmeans(points, k: int, seed: int, max_iter: int = 300, n_init: int = 10,
           init: np.ndarray | None = None) -> ClusterModel:
    """Lloyd's algorithm from random data points; best of ``n_init`` restarts.

    ``init`` adds one extra warm start from the given centroids.
    """
    x = _as_array(points)
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise TooFewPoints(f"k={k} exceeds {n} points")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    rng = np.random.default_rng(seed)
    best = None
    starts = [x[rng.choice(n, size=k, replace=False)] for _ in range(max(1, n_init))]
    if init is not None:
        starts.append(np.asarray(init, dtype=float))
    for c0 in starts:
        m = _lloyd(x, c0, max_iter)
        if best is None or m.inertia < best.inertia - 1e-12:
            best = m
    return best


def elbow_scan(points, k_range: Sequence[int], seed: int, n_init: int = 10) -> list:
    """Inertia for every k; each k also warm-starts from the previous solution
    plus its worst-served point, so inertia never rises with k."""
    ks = list(k_range)
    if not ks:
        raise ValueError("empty k range")
    x = _as_array(points)
    out = []
    prev = None
    for k in sorted(ks):
        init = None
        if prev is not None and prev.k == k - 1:
            _, d2 = _assign(x, prev.centroids)
            init = np.vstack([prev.centroids, x[int(np.argmax(d2))]])
        m = kmeans(x, k, seed, n_init=n_init, init=init)
        out.append((k, m.inertia))
        prev = m
    return out


def suggest_elbow(scan: Sequence[tuple]) -> int:
    """k after which the inertia curve flattens most sharply.

    Scores each interior k by the ratio of the drop arriving at k to the drop
    leaving it. Unlike a raw second difference this does not favour k = 2 when
    one cluster sits far from the rest.
    """
    scan = sorted(scan)
    if len(scan) < 3:
        return scan[0][0]
    scale = max(abs(scan[0][1]), 1e-300)
    best_k, best = scan[1][0], -np.inf
    for (_, a), (k, b), (_, c) in zip(scan, scan[1:], scan[2:]):
        before, after = (a - b) / scale, (b - c) / scale
        if before <= 1e-12:
            score = 0.0
        else:
            score = before / max(after, 1e-12)
        if score > best + 1e-12:
            best_k, best = k, score
    return best_k


# -- driver groups ------------------------------------------------------------

@dataclass
class DriverGroups:
    groups: dict
    cluster_of: dict
    labels: dict
    features: FeatureMatrix
    model: ClusterModel
    centroid_index: dict

    @property
    def keys(self) -> list:
        return sorted(self.groups)

    def centroids_normalized(self) -> dict:
        return {c: self.model.centroids[i].tolist() for c, i in self.centroid_index.items()}

    def centroids_raw(self) -> dict:
        return {c: self.features.denormalize(self.model.centroids[i]).tolist() for c, i in self.centroid_index.items()}

    def clusters_labelled(self, label: str) -> list:
        return [c for c, name in self.labels.items() if name == label]

    def members(self, cluster: int) -> list:
        return sorted(a for (c, _), ids in self.groups.items() if c == cluster for a in ids)


def driver_features(agents: Sequence[DriverAgent]) -> FeatureMatrix:
    rows = [(a.total_distance, a.soc, a.tcd, a.cd) for a in agents]
    return FeatureMatrix(np.array(rows, dtype=float).reshape(len(rows), 4), DRIVER_FEATURES)


def profile_clusters(centroids: np.ndarray) -> list:
    """Name five normalised centroids (distance, soc, tcd, cd) after the driver types."""
    left = set(range(len(centroids)))
    names = [None] * len(centroids)

    def take(name, key):
        i = min(left, key=key)
        names[i] = name
        left.discard(i)

    dist, soc, tcd, cd = centroids.T
    take("short_distance_dense", lambda i: (-cd[i], dist[i], i))
    take("mid_distance_dense", lambda i: (-(cd[i] + tcd[i]), i))
    take("long_distance_low_battery", lambda i: (soc[i], i))
    take("long_distance_sparse", lambda i: (-dist[i], i))
    take("mid_distance_sparse", lambda i: i)
    return names


def cluster_drivers(agents: Sequence[DriverAgent], seed: int, k: int = 5) -> DriverGroups:
    """Min-max normalise the four driver features, run k-means, then split
    each cluster by the purpose of every agent's first trip."""
    if not agents:
        raise TooFewPoints("no agents to cluster")
    purposes = {a.purpose for a in agents}
    if len(agents) < k:
        log.warning("only %d agents; clustering with k=%d", len(agents), len(agents))
        k = len(agents)
    if len(purposes) < 2:
        log.warning("agents carry a single trip purpose; half of the groups will be empty")
    fm = driver_features(agents).normalized()
    model = kmeans(fm, k, seed)
    if k == 5:
        names = profile_clusters(model.centroids)
        number = {i: DRIVER_PROFILES[n] for i, n in enumerate(names)}
        labels = {DRIVER_PROFILES[n]: n for n in names}
    else:
        order = sorted(range(k), key=lambda i: (model.centroids[i, 0], i))
        number = {i: r + 1 for r, i in enumerate(order)}
        labels = {r + 1: f"cluster_{r + 1}" for r in range(k)}
    groups = {(c, p): [] for c in range(1, k + 1) for p in PURPOSES}
    cluster_of = {}
    for a, lab in zip(agents, model.assignments):
        c = number[int(lab)]
        cluster_of[a.agent_id] = c
        groups[(c, a.purpose)].append(a.agent_id)
    for ids in groups.values():
        ids.sort()
    centroid_index = {c: i for c, i in sorted((c, i) for i, c in number.items())}
    return DriverGroups(groups, cluster_of, labels, fm, model, centroid_index)


# -- natural breaks -------------------------------------------------------------

def jenks_breaks(values: Sequence[float], classes: int) -> list:
    """Exact minimum within-class sum of squares partition of sorted values.

    Returns the upper bound of each class in ascending order.
    """
    if classes < 1:
        raise ValueError("classes must be >= 1")
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n < classes:
        raise TooFewValues(f"{n} values for {classes} classes")
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def ssd(i, j):  # values x[i:j]
        m = j - i
        return max(0.0, (s2[j] - s2[i]) - (s1[j] - s1[i]) ** 2 / m)

    inf = np.inf
    cost = np.full((classes + 1, n + 1), inf)
    arg = np.zeros((classes + 1, n + 1), dtype=int)
    cost[0, 0] = 0.0
    for c in range(1, classes + 1):
        for j in range(c, n - (classes - c) + 1):
            best, bi = inf, c - 1
            for i in range(c - 1, j):
                v = cost[c - 1, i] + ssd(i, j)
                if v < best - 1e-12:
                    best, bi = v, i
            cost[c, j] = best
            arg[c, j] = bi
    ends = []
    j = n
    for c in range(classes, 0, -1):
        ends.append(j)
        j = arg[c, j]
    return [float(x[e - 1]) for e in reversed(ends)]


def classify(values: Sequence[float], breaks: Sequence[float]) -> list:
    """Class index for each value: the first class whose upper bound covers it."""
    b = np.asarray(breaks, dtype=float)
    idx = np.searchsorted(b, np.asarray(values, dtype=float), side="left")
    return np.minimum(idx, len(b) - 1).tolist()
