"""Drivers, vehicles, chargers and trips, plus the synthetic world generator.

The generator stands in for travel-survey, postcode and charger-registry
inputs: it lays out a jittered grid road network with a charger-dense city
block and a sparse rural block, then draws drivers from configurable
feature regimes (trip distance, initial SOC, local charger supply).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidConfig, NoPath, SamplingError, ZeroLengthPath
from .road_network import (
    KM_PER_MILE,
    Path,
    RoadGraph,
    distance_matrix,
    path_from_matrix,
    path_xy,
    point_polyline_km,
    polyline_distance_km,
)

SCHEMA_VERSION = 1
BUFFER_M = 500.0


@dataclass(frozen=True)
class EVSpec:
    name: str
    battery_kwh: float
    consumption_wh_per_mi: float

    def __post_init__(self):
        if not (self.battery_kwh > 0 and self.consumption_wh_per_mi > 0):
            raise InvalidConfig(f"EV {self.name!r} needs positive battery and consumption", field="ev_catalog")

    def range_mi(self, soc: float) -> float:
        return soc * self.battery_kwh * 1000.0 / self.consumption_wh_per_mi

    def soc_per_mile(self) -> float:
        return self.consumption_wh_per_mi / (self.battery_kwh * 1000.0)


# Top UK models in 2022.
EV_CATALOG = (
    EVSpec("Tesla Model Y", 57.5, 267.0),
    EVSpec("Tesla Model 3", 57.5, 221.0),
    EVSpec("Kia Niro EV", 64.8, 270.0),
    EVSpec("Volkswagen ID.3", 59.0, 268.0),
    EVSpec("Nissan Leaf", 39.0, 269.0),
)

# Public charger attribute ranges.
CHARGER_RANGES = {
    "ports": (1, 12),
    "price_gbp_per_kwh": (0.3, 1.1),
    "speed_kw": (6.4, 300.2),
    "initial_parking_fee_gbp": (0.0, 0.6),
    "additional_parking_fee_gbp_per_h": (1.2, 24.0),
}

# Survey trip purposes folded into the two behavioural labels.
PURPOSE_MAP = {
    "Commuting": "work",
    "Personal business": "work",
    "Business": "work",
    "Education/escort education": "leisure",
    "Other escort": "leisure",
    "Shopping": "leisure",
    "Leisure": "leisure",
}
PURPOSES = ("work", "leisure")


def reclassify_purpose(original: str) -> str:
    try:
        return PURPOSE_MAP[original]
    except KeyError:
        raise InvalidConfig(f"unknown trip purpose {original!r}", field="purpose") from None


@dataclass(frozen=True)
class Charger:
    charger_id: str
    node_id: int
    ports: int
    price_gbp_per_kwh: float
    speed_kw: float
    initial_parking_fee_gbp: float
    additional_parking_fee_gbp_per_h: float

    def __post_init__(self):
        if self.ports < 1:
            raise InvalidConfig(f"charger {self.charger_id} has no ports", field="ports")


@dataclass(frozen=True)
class Trip:
    origin: int
    destination: int
    purpose: str
    start_time: float
    planned_distance: float
    survey_purpose: str = ""

    def __post_init__(self):
        if self.purpose not in PURPOSES:
            raise InvalidConfig(f"trip purpose {self.purpose!r}", field="purpose")
        if not 0 <= self.start_time < 1440:
            raise InvalidConfig(f"start time {self.start_time} outside the day", field="start_time")


@dataclass(frozen=True)
class DriverAgent:
    agent_id: str
    ev: EVSpec
    soc: float
    soc_threshold: float
    trips: tuple
    cluster_id: int | None = None
    cd: float = 0.0
    tcd: float = 0.0

    def __post_init__(self):
        if not 0 <= self.soc <= 1:
            raise InvalidConfig(f"agent {self.agent_id} soc {self.soc}", field="soc")
        if not 0 < self.soc_threshold < 1:
            raise InvalidConfig(f"agent {self.agent_id} threshold {self.soc_threshold}", field="soc_threshold")
        if not self.trips:
            raise InvalidConfig(f"agent {self.agent_id} has no trips", field="trips")
        if self.cd < 0 or self.tcd < 0:
            raise InvalidConfig(f"agent {self.agent_id} negative density", field="cd")

    @property
    def total_distance(self) -> float:
        return float(sum(t.planned_distance for t in self.trips))

    @property
    def purpose(self) -> str:
        return self.trips[0].purpose


@dataclass
class Scenario:
    graph: RoadGraph
    chargers: list
    agents: list
    seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in self.chargers:
            if c.node_id not in self.graph:
                raise InvalidConfig(f"charger {c.charger_id} on missing node", field="chargers")
        for a in self.agents:
            for t in a.trips:
                if t.origin not in self.graph or t.destination not in self.graph:
                    raise InvalidConfig(f"agent {a.agent_id} trip endpoint missing", field="agents")

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def charger(self, charger_id) -> Charger:
        return self._by_id[charger_id]

    @property
    def _by_id(self) -> dict:
        cache = self.__dict__.get("_charger_cache")
        if cache is None:
            cache = {c.charger_id: c for c in self.chargers}
            self.__dict__["_charger_cache"] = cache
        return cache

    def agent(self, agent_id) -> DriverAgent:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    # -- file format ---------------------------------------------------
    def to_dict(self) -> dict:
        graph = self.graph.to_dict()
        graph.pop("chargers")
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
            "graph": graph,
            "chargers": [asdict(c) for c in self.chargers],
            "agents": [
                {
                    "agent_id": a.agent_id,
                    "ev": asdict(a.ev),
                    "soc": a.soc,
                    "soc_threshold": a.soc_threshold,
                    "cluster_id": a.cluster_id,
                    "cd": a.cd,
                    "tcd": a.tcd,
                    "trips": [asdict(t) for t in a.trips],
                }
                for a in self.agents
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        chargers = [Charger(**c) for c in data["chargers"]]
        graph = RoadGraph.from_dict({**data["graph"], "chargers": [
            {"node_id": c.node_id, "charger_id": c.charger_id} for c in chargers
        ]})
        agents = [
            DriverAgent(
                agent_id=a["agent_id"],
                ev=EVSpec(**a["ev"]),
                soc=a["soc"],
                soc_threshold=a["soc_threshold"],
                trips=tuple(Trip(**t) for t in a["trips"]),
                cluster_id=a.get("cluster_id"),
                cd=a["cd"],
                tcd=a["tcd"],
            )
            for a in data["agents"]
        ]
        return cls(graph, chargers, agents, data["seed"], data.get("config", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- operations -------------------------------------------------------------

def select_od(graph: RoadGraph, zones: Mapping, origin_zone, dest_zone, trip_distance: float,
              rng: np.random.Generator, dist: np.ndarray | None = None):
    """Draw an origin uniformly from ``origin_zone`` and pick the destination
    whose network distance from it is closest to ``trip_distance``.

    ``dest_zone`` may also be a sequence of zone ids: the zone whose most
    central node best matches the distance is chosen first, then the node.
    """
    if trip_distance <= 0:
        raise ValueError("trip distance must be positive")
    origins = sorted(zones[origin_zone])
    if not origins:
        raise ValueError(f"zone {origin_zone!r} is empty")
    origin = origins[int(rng.integers(len(origins)))]
    o = graph.index[origin]
    row = dist[o] if dist is not None else None
    if row is None:
        from .road_network import _dijkstra

        row = _dijkstra(graph, o)

    if isinstance(dest_zone, (list, set, frozenset)):
        candidates_z = [z for z in dest_zone if zones[z]]
        scored = []
        for z in candidates_z:
            centre = zone_centre(graph, zones[z])
            d = row[graph.index[centre]]
            if math.isfinite(d):
                scored.append((abs(d - trip_distance), str(z), z))
        if not scored:
            raise NoPath(f"no destination zone reachable from {origin!r}")
        dest_zone = min(scored)[2]

    dests = sorted(zones[dest_zone])
    if not dests:
        raise ValueError(f"zone {dest_zone!r} is empty")
    best = None
    for n in dests:
        d = row[graph.index[n]]
        if not math.isfinite(d):
            continue
        key = (abs(d - trip_distance), n)
        if best is None or key < best:
            best = key
    if best is None:
        raise NoPath(f"no node of zone {dest_zone!r} reachable from {origin!r}")
    return origin, best[1]


def zone_centre(graph: RoadGraph, nodes) -> int:
    nodes = sorted(nodes)
    pts = graph.xy[[graph.index[n] for n in nodes]]
    c = pts.mean(axis=0)
    return nodes[int(np.argmin(np.hypot(*(pts - c).T)))]


def compute_cd(path: Path, chargers: Sequence[Charger], graph: RoadGraph, buffer_m: float = BUFFER_M) -> float:
    """Chargers within ``buffer_m`` of the route per route mile."""
    if path.total_length <= 0:
        raise ZeroLengthPath("charger density needs a route of positive length")
    if not chargers:
        return 0.0
    poly = path_xy(graph, path)
    limit = buffer_m / 1000.0
    n = sum(1 for c in chargers if point_polyline_km(graph.coords(c.node_id), poly) <= limit)
    return n / path.total_length


def windows_overlap(a: tuple, b: tuple) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def compute_tcd(path: Path, own_window: tuple, other_trips: Sequence[tuple], graph: RoadGraph,
                buffer_m: float = BUFFER_M) -> float:
    """Concurrent trips whose route enters the route's buffer, per route mile."""
    if path.total_length <= 0:
        raise ZeroLengthPath("trip co-occurrence density needs a route of positive length")
    if own_window[0] > own_window[1]:
        raise ValueError("window start after end")
    poly = path_xy(graph, path)
    limit = buffer_m / 1000.0
    lo, hi = poly.min(axis=0) - limit, poly.max(axis=0) + limit
    n = 0
    for other, window in other_trips:
        if window[0] > window[1]:
            raise ValueError("window start after end")
        if not windows_overlap(own_window, window):
            continue
        opoly = path_xy(graph, other)
        if (opoly.max(axis=0) < lo).any() or (opoly.min(axis=0) > hi).any():
            continue
        if polyline_distance_km(poly, opoly) <= limit:
            n += 1
    return n / path.total_length


def sample_initial_soc(rng: np.random.Generator, mean: float, sd: float,
                       low: float = 0.0, high: float = 1.0, max_tries: int = 10_000) -> float:
    """Normal(mean, sd) restricted to the open interval (low, high) by rejection."""
    if sd <= 0:
        raise ValueError("sd must be positive")
    for _ in range(max_tries):
        x = float(rng.normal(mean, sd))
        if low < x < high:
            return x
    raise SamplingError(f"no draw inside ({low}, {high}) after {max_tries} tries")


# -- generator --------------------------------------------------------------

@dataclass
class RegimeConfig:
    name: str
    weight: float
    total_distance_mi: float
    distance_sd_mi: float
    soc_mean: float
    soc_sd: float
    area: str
    n_trips: int = 2


def default_regimes() -> list:
    return [
        RegimeConfig("mid_distance_sparse", 0.8, 20.0, 1.5, 0.45, 0.03, "rural"),
        RegimeConfig("long_distance_low_battery", 0.8, 34.0, 1.5, 0.08, 0.02, "rural"),
        RegimeConfig("mid_distance_dense", 1.3, 20.0, 1.5, 0.45, 0.03, "city"),
        RegimeConfig("long_distance_sparse", 0.8, 34.0, 1.5, 0.85, 0.03, "rural"),
        RegimeConfig("short_distance_dense", 1.3, 8.0, 0.5, 0.85, 0.03, "core"),
    ]


@dataclass
class ScenarioConfig:
    grid_cols: int = 30
    grid_rows: int = 10
    spacing_km: float = 2.0
    jitter_km: float = 0.25
    detour_min: float = 1.0
    detour_max: float = 1.1
    city_cols: int = 10
    core_cols: tuple = (2, 8)
    core_rows: tuple = (2, 8)
    zone_size: int = 5
    chargers_core: int = 30
    chargers_city: int = 36
    chargers_rural: int = 12
    n_agents: int = 60
    work_share: float = 0.5
    ev_catalog: list = field(default_factory=lambda: [asdict(e) for e in EV_CATALOG])
    regimes: list = field(default_factory=lambda: [asdict(r) for r in default_regimes()])
    soc_threshold_mean: float = 0.2
    soc_threshold_sd: float = 0.05
    soc_threshold_low: float = 0.05
    soc_threshold_high: float = 0.5
    work_start_mean: float = 480.0
    leisure_start_mean: float = 600.0
    start_sd: float = 45.0
    work_dwell_mean: float = 480.0
    leisure_dwell_mean: float = 180.0
    dwell_sd: float = 45.0
    speed_mph: float = 40.0
    buffer_m: float = BUFFER_M

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "ScenarioConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        for k in data:
            if k not in known:
                raise InvalidConfig(f"unknown scenario key {k!r}", field=f"scenario.{k}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise InvalidConfig(msg, field=f"scenario.{name}")

        need(self.grid_cols >= 2 and self.grid_rows >= 2, "grid_cols", "grid must be at least 2x2")
        need(self.spacing_km > 0, "spacing_km", "spacing must be positive")
        need(0 <= self.jitter_km < self.spacing_km / 2, "jitter_km", "jitter must be below half the spacing")
        need(1.0 <= self.detour_min <= self.detour_max, "detour_min", "detour factors must satisfy 1 <= min <= max")
        need(0 <= self.city_cols <= self.grid_cols, "city_cols", "city block wider than grid")
        need(self.zone_size >= 1, "zone_size", "zone size must be positive")
        self.core_cols, self.core_rows = tuple(self.core_cols), tuple(self.core_rows)
        need(0 <= self.core_cols[0] <= self.core_cols[1] <= self.city_cols, "core_cols", "core must sit inside the city columns")
        need(0 <= self.core_rows[0] <= self.core_rows[1] <= self.grid_rows, "core_rows", "core must sit inside the grid rows")
        counts = {a: len(v) for a, v in area_nodes(self).items()}
        for a in ("core", "city", "rural"):
            n = getattr(self, f"chargers_{a}")
            need(0 <= n <= counts[a], f"chargers_{a}", f"{n} {a} chargers for {counts[a]} {a} nodes")
        need(self.n_agents >= 0, "n_agents", "agent count must be >= 0")
        need(0 <= self.work_share <= 1, "work_share", "work share must be a fraction")
        need(len(self.ev_catalog) > 0, "ev_catalog", "EV catalog is empty")
        for e in self.ev_catalog:
            try:
                EVSpec(**e)
            except TypeError as exc:
                raise InvalidConfig(str(exc), field="scenario.ev_catalog") from None
        need(len(self.regimes) > 0, "regimes", "at least one regime required")
        for r in self.regimes:
            try:
                r = RegimeConfig(**r)
            except TypeError as exc:
                raise InvalidConfig(str(exc), field="scenario.regimes") from None
            need(r.area in ("core", "city", "rural"), "regimes", f"regime {r.name}: area must be core, city or rural")
            need(r.weight > 0, "regimes", f"regime {r.name}: weight must be positive")
            need(r.total_distance_mi > 0 and r.distance_sd_mi >= 0, "regimes", f"regime {r.name}: bad distance")
            need(0 < r.soc_mean < 1 and r.soc_sd > 0, "regimes", f"regime {r.name}: bad SOC distribution")
            need(r.n_trips >= 1, "regimes", f"regime {r.name}: needs a trip")
            need(counts[r.area] > 0 or (r.area == "city" and counts["core"] > 0), "regimes",
                 f"regime {r.name}: the {r.area} area has no nodes")
        need(0 < self.soc_threshold_low < self.soc_threshold_high < 1, "soc_threshold_low", "threshold bounds")
        need(self.soc_threshold_sd > 0, "soc_threshold_sd", "threshold sd must be positive")
        need(self.start_sd >= 0 and self.dwell_sd >= 0, "start_sd", "spreads must be >= 0")
        need(self.speed_mph > 0, "speed_mph", "speed must be positive")
        need(self.buffer_m > 0, "buffer_m", "buffer must be positive")


def build_grid(cfg: ScenarioConfig, rng: np.random.Generator) -> RoadGraph:
    nodes, edges = [], []
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            jx, jy = rng.uniform(-cfg.jitter_km, cfg.jitter_km, size=2)
            nodes.append((r * cfg.grid_cols + c, c * cfg.spacing_km + jx, r * cfg.spacing_km + jy))
    xy = {n: (x, y) for n, x, y in nodes}
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            a = r * cfg.grid_cols + c
            for b in ((a + 1) if c + 1 < cfg.grid_cols else None, (a + cfg.grid_cols) if r + 1 < cfg.grid_rows else None):
                if b is None:
                    continue
                euclid = math.hypot(xy[a][0] - xy[b][0], xy[a][1] - xy[b][1]) / KM_PER_MILE
                edges.append((a, b, euclid * float(rng.uniform(cfg.detour_min, cfg.detour_max))))
    return RoadGraph(nodes, edges)


def node_area(cfg: ScenarioConfig, r: int, c: int) -> str:
    if c >= cfg.city_cols:
        return "rural"
    if cfg.core_rows[0] <= r < cfg.core_rows[1] and cfg.core_cols[0] <= c < cfg.core_cols[1]:
        return "core"
    return "city"


def area_nodes(cfg: ScenarioConfig) -> dict:
    out = {"core": [], "city": [], "rural": []}
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            out[node_area(cfg, r, c)].append(r * cfg.grid_cols + c)
    return out


def grid_zones(cfg: ScenarioConfig) -> tuple[dict, dict]:
    """Blocks of ``zone_size`` x ``zone_size`` nodes cut separately per area type."""
    zones: dict[str, list] = {}
    area: dict[str, str] = {}
    prefix = {"core": "K", "city": "C", "rural": "R"}
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            a = node_area(cfg, r, c)
            cc = c - cfg.city_cols if a == "rural" else c
            zid = f"{prefix[a]}{r // cfg.zone_size}_{cc // cfg.zone_size}"
            zones.setdefault(zid, []).append(r * cfg.grid_cols + c)
            area[zid] = a
    return zones, area


def _sample_chargers(cfg: ScenarioConfig, rng: np.random.Generator) -> list:
    nodes = area_nodes(cfg)
    picked = []
    for a in ("core", "city", "rural"):
        n = getattr(cfg, f"chargers_{a}")
        if n:
            picked += sorted(rng.choice(nodes[a], size=n, replace=False).tolist())
    out = []
    for i, node in enumerate(picked):
        out.append(Charger(
            charger_id=f"C{i:03d}",
            node_id=int(node),
            ports=int(rng.choice([1, 2, 2, 4, 6, 12])),
            price_gbp_per_kwh=round(float(rng.uniform(0.3, 1.1)), 4),
            speed_kw=float(rng.choice([7.4, 22.0, 50.0, 150.0, 300.0], p=[0.35, 0.2, 0.3, 0.1, 0.05])),
            initial_parking_fee_gbp=round(float(rng.uniform(0.0, 0.6)), 2),
            additional_parking_fee_gbp_per_h=round(float(rng.triangular(1.2, 1.2, 24.0)), 2),
        ))
    return out


def _allocate(weights: Sequence[float], n: int) -> list:
    w = np.asarray(weights, dtype=float)
    raw = w / w.sum() * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def generate_scenario(config: ScenarioConfig | Mapping | None, seed: int) -> Scenario:
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config)
    cfg.validate()
    rng = np.random.default_rng(seed)
    graph = build_grid(cfg, rng)
    chargers = _sample_chargers(cfg, rng)
    graph = graph.with_chargers({c.node_id: c.charger_id for c in chargers})
    dist = distance_matrix(graph)
    zones, zone_area = grid_zones(cfg)
    catalog = [EVSpec(**e) for e in cfg.ev_catalog]
    regimes = [RegimeConfig(**r) for r in cfg.regimes]
    work_labels = [k for k, v in PURPOSE_MAP.items() if v == "work"]
    leisure_labels = [k for k, v in PURPOSE_MAP.items() if v == "leisure"]

    regime_of = []
    for i, c in enumerate(_allocate([r.weight for r in regimes], cfg.n_agents)):
        regime_of += [i] * c
    regime_of = [regime_of[i] for i in rng.permutation(len(regime_of))]

    drafts = []
    for idx, ri in enumerate(regime_of):
        reg = regimes[ri]
        ev = catalog[int(rng.integers(len(catalog)))]
        soc = sample_initial_soc(rng, reg.soc_mean, reg.soc_sd)
        threshold = sample_initial_soc(rng, cfg.soc_threshold_mean, cfg.soc_threshold_sd,
                                       cfg.soc_threshold_low, cfg.soc_threshold_high)
        is_work = bool(rng.random() < cfg.work_share)
        labels = work_labels if is_work else leisure_labels
        survey = labels[int(rng.integers(len(labels)))]
        purpose = reclassify_purpose(survey)
        total = max(1.0, float(rng.normal(reg.total_distance_mi, reg.distance_sd_mi)))
        leg = total / reg.n_trips
        wanted = ("core", "city") if reg.area == "city" else (reg.area,)
        area_zones = sorted(z for z, a in zone_area.items() if a in wanted)
        oz = area_zones[int(rng.integers(len(area_zones)))]
        home, away = select_od(graph, zones, oz, area_zones, leg, rng, dist)
        start_mean = cfg.work_start_mean if is_work else cfg.leisure_start_mean
        dwell_mean = cfg.work_dwell_mean if is_work else cfg.leisure_dwell_mean
        t = float(np.clip(rng.normal(start_mean, cfg.start_sd), 0, 1439))
        trips = []
        here, there = home, away
        for _ in range(reg.n_trips):
            path = path_from_matrix(graph, dist, here, there)
            trips.append(Trip(here, there, purpose, round(t, 3), path.total_length, survey))
            t = t + path.total_length / cfg.speed_mph * 60 + max(0.0, float(rng.normal(dwell_mean, cfg.dwell_sd)))
            t = min(t, 1439.0)
            here, there = there, here
        drafts.append((f"A{idx:03d}", ev, soc, threshold, trips))

    # environmental densities on the shortest routes
    routes = []
    for ai, (_, _, _, _, trips) in enumerate(drafts):
        for t in trips:
            path = path_from_matrix(graph, dist, t.origin, t.destination)
            window = (t.start_time, t.start_time + path.total_length / cfg.speed_mph * 60)
            routes.append((ai, path, window))
    agents = []
    for ai, (aid, ev, soc, threshold, trips) in enumerate(drafts):
        own = [r for r in routes if r[0] == ai]
        others = [(p, w) for j, p, w in routes if j != ai]
        length = sum(p.total_length for _, p, _ in own)
        if length > 0:
            cd = sum(compute_cd(p, chargers, graph, cfg.buffer_m) * p.total_length for _, p, _ in own if p.total_length > 0) / length
            tcd = sum(compute_tcd(p, w, others, graph, cfg.buffer_m) * p.total_length for _, p, w in own if p.total_length > 0) / length
        else:
            cd = tcd = 0.0
        agents.append(DriverAgent(aid, ev, soc, threshold, tuple(trips), None, cd, tcd))

    return Scenario(graph, chargers, agents, int(seed), cfg.to_dict())


def with_clusters(scenario: Scenario, cluster_of: Mapping) -> Scenario:
    agents = [replace(a, cluster_id=cluster_of.get(a.agent_id)) for a in scenario.agents]
    return Scenario(scenario.graph, scenario.chargers, agents, scenario.seed, scenario.config)
