import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from evsim.analysis import (
    HEX_AREA_FINE,
    HexSocMap,
    buffer_counts,
    hex_aggregate,
    hex_cell,
    hex_center,
    hex_edge,
    lag_scan,
    low_soc_categories,
    node_mean_soc,
    pearson,
    risk_areas,
    spatial_correlation,
    temporal_cross_correlation,
    usage_map,
    usage_series,
    validation_curve,
)
from evsim.errors import InsufficientOverlap, KeyMismatch, TooFewValues, ZeroVariance
from evsim.orchestrator import UsagePattern
from evsim.road_network import RoadGraph
from evsim.scenario import Charger


def series(seed, n=96):
    return np.random.default_rng(seed).normal(size=n)


# -- correlation ------------------------------------------------------------------

def test_identity_and_reversal():
    x = {f"c{i}": v for i, v in enumerate(series(0, 30))}
    assert abs(spatial_correlation(x, x) - 1.0) < 1e-9
    y = {k: 7.0 - 2.0 * v for k, v in x.items()}
    assert abs(spatial_correlation(x, y) + 1.0) < 1e-9


def test_hand_three_point_case():
    # means 2 and 13/3; sxy = 5, sxx = 2, syy = 38/3
    expected = 5 / math.sqrt(2 * 38 / 3)
    assert pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(expected, abs=1e-12)
    assert pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(0.99339, abs=1e-5)


def test_independent_series_uncorrelated():
    a = np.random.default_rng(1).normal(size=1000)
    b = np.random.default_rng(2).normal(size=1000)
    assert abs(pearson(a, b)) < 0.2
    assert abs(temporal_cross_correlation(a, b, 0)) < 0.2


def test_degenerate_inputs():
    with pytest.raises(ZeroVariance):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(KeyMismatch):
        spatial_correlation({"a": 1, "b": 2}, {"a": 1, "c": 2})
    with pytest.raises(ZeroVariance):
        temporal_cross_correlation(np.ones(10), series(0, 10), 0)
    with pytest.raises(InsufficientOverlap):
        temporal_cross_correlation(series(0, 5), series(1, 5), 4)


def test_zero_lag_identity():
    z = series(3)
    assert abs(temporal_cross_correlation(z, z, 0) - 1.0) < 1e-9


def test_lag_scan_finds_shift():
    base = series(4, 120)
    z = base[4:100]
    x = base[:96]  # x[t + 4] == z[t]
    lag, r, scan = lag_scan(z, x, 8)
    assert lag == 4
    assert r == pytest.approx(1.0, abs=1e-9)
    assert len(scan) == 17


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=25), st.floats(0.1, 50), st.floats(-50, 50), st.integers(0, 1000))
def test_pearson_symmetric_scale_invariant_bounded(xs, a, b, seed):
    x = np.array(xs)
    y = np.random.default_rng(seed).normal(size=len(x))
    assume(np.ptp(x) > 1e-3)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert pearson(y, x) == pytest.approx(r, abs=1e-9)
    assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 40))
def test_zero_lag_equals_spatial_form(seed, n):
    z, x = series(seed, n), series(seed + 1, n)
    as_maps = spatial_correlation(dict(enumerate(z)), dict(enumerate(x)))
    assert temporal_cross_correlation(z, x, 0) == pytest.approx(as_maps, abs=1e-12)


# -- usage maps -------------------------------------------------------------------

def test_usage_map_and_series():
    u = UsagePattern(0, {"a": [(0, 100.0, 130.0), (1, 120.0, 150.0)], "b": [(0, 1420.0, 1460.0)]})
    m = usage_map(u, ["a", "b", "c"])
    assert m == {"a": 60.0, "b": 20.0, "c": 0.0}  # clipped to the day
    s = usage_series(u, 15.0)
    assert len(s) == 96
    assert s[6] == 0  # t = 90
    assert s[7] == 1  # t = 105
    assert s[8] == 2  # t = 120, both sessions of charger a
    assert s[10] == 0  # t = 150, end times are exclusive
    assert s[95] == 1  # t = 1425


def test_validation_curve_against_itself():
    rng = np.random.default_rng(0)
    eps = []
    for e in range(3):
        w = {f"c{i}": [(0, float(s), float(s) + 40.0)] for i, s in enumerate(rng.uniform(0, 1300, size=6))}
        eps.append((e, UsagePattern(e, w)))
    ids = [f"c{i}" for i in range(6)]
    pts = validation_curve(eps, eps[2][1], ids)
    assert pts[2].spatial_r == pytest.approx(1.0)
    assert pts[2].temporal_r_peak == pytest.approx(1.0)
    assert pts[2].lag == 0
    empty = validation_curve([(9, UsagePattern(9, {}))], eps[0][1], ids)
    assert math.isnan(empty[0].temporal_r_peak)


# -- hexagons ----------------------------------------------------------------------

def test_hex_edge_for_area():
    a = hex_edge(HEX_AREA_FINE)
    assert 3 * math.sqrt(3) / 2 * a * a == pytest.approx(HEX_AREA_FINE)


def test_single_and_pair_observations():
    m = hex_aggregate([(1.0, 1.0, 0.3)])
    assert list(m.means().values()) == [0.3]
    m = hex_aggregate([(1.0, 1.0, 0.2), (1.01, 1.0, 0.6)])
    assert list(m.means().values()) == [pytest.approx(0.4)]
    assert hex_aggregate([]).cells == {}


def test_hex_cell_contains_point():
    rng = np.random.default_rng(0)
    edge = hex_edge(HEX_AREA_FINE)
    for x, y in rng.uniform(-30, 30, size=(2000, 2)):
        q, r = hex_cell(x, y, edge)
        cx, cy = hex_center(q, r, edge)
        # the containing cell centre is the nearest centre among its neighbours
        d0 = math.hypot(x - cx, y - cy)
        for dq, dr in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]:
            nx, ny = hex_center(q + dq, r + dr, edge)
            assert d0 <= math.hypot(x - nx, y - ny) + 1e-9


def test_hex_counts_proportional_to_area():
    rng = np.random.default_rng(7)
    edge = hex_edge(HEX_AREA_FINE)
    pts = rng.uniform(0, 60, size=(10_000, 2))
    m = hex_aggregate([(x, y, 0.5) for x, y in pts], HEX_AREA_FINE)
    # interior cells lie fully inside the square
    interior = [n for (q, r), (_, n) in m.cells.items()
                if all(edge <= c <= 60 - edge for c in hex_center(q, r, edge))]
    expected = 10_000 * HEX_AREA_FINE / 3600.0
    assert len(interior) > 200
    assert abs(np.mean(interior) / expected - 1) < 0.1


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.sampled_from([5.2, 36.1]))
def test_rebinning_cell_centre_is_idempotent(x, y, area):
    edge = hex_edge(area)
    q, r = hex_cell(x, y, edge)
    assert hex_cell(*hex_center(q, r, edge), edge) == (q, r)


def test_geojson_polygons_close():
    doc = hex_aggregate([(0.0, 0.0, 0.1), (10.0, 10.0, 0.9)]).to_geojson()
    assert doc["type"] == "FeatureCollection"
    for f in doc["features"]:
        ring = f["geometry"]["coordinates"][0]
        assert len(ring) == 7 and ring[0] == ring[-1]


# -- natural-break categories --------------------------------------------------------

def hexmap(values):
    return HexSocMap(5.2, hex_edge(5.2), {(i, 0): (v, 1) for i, v in enumerate(values)})


def test_five_values_one_per_class():
    cats = low_soc_categories(hexmap([0.1, 0.3, 0.5, 0.7, 0.9]))
    assert sorted(cats.labels.values()) == [0, 1, 2, 3, 4]
    assert cats.lowest == [(0, 0)]


def test_bimodal_low_mode_is_lowest_class():
    low = [0.05, 0.06, 0.07, 0.08]
    high = [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
    cats = low_soc_categories(hexmap(low + high))
    assert cats.lowest == [(i, 0) for i in range(len(low))]


def test_equal_means_rejected():
    with pytest.raises(TooFewValues):
        low_soc_categories(hexmap([0.4] * 8))


# -- risk areas ------------------------------------------------------------------------

def corridor_world():
    """A 3 x 12 grid; the top row is charger-free and carries low SOC."""
    nodes, edges = [], []
    for r in range(3):
        for c in range(12):
            nodes.append((r * 12 + c, c * 1.0, r * 1.0))
            if c:
                edges.append((r * 12 + c - 1, r * 12 + c, 0.7))
            if r:
                edges.append(((r - 1) * 12 + c, r * 12 + c, 0.7))
    g = RoadGraph(nodes, edges)
    chargers = [Charger(f"c{c}", c, 2, 0.3, 50, 0.5, 2.0) for c in range(12)]
    node_soc = [(n, 0.08 if n >= 24 else (0.8 if n < 12 else 0.55)) for n in range(36)]
    return g, chargers, node_soc


def test_corridor_is_high_risk():
    g, chargers, node_soc = corridor_world()
    rep = risk_areas(node_soc, chargers, g, buffer_m=1000, seed=0)
    assert len(set(rep.model.assignments.tolist())) == 3
    assert sorted(rep.high_risk_nodes) == list(range(24, 36))


def test_buffer_counts_brute_force_and_monotone():
    rng = np.random.default_rng(3)
    for _ in range(50):
        pts = rng.uniform(0, 5, size=(20, 2))
        cs = rng.uniform(0, 5, size=(8, 2))
        for b in (500.0, 1000.0, 1500.0):
            naive = [sum(math.hypot(*(p - c)) * 1000 <= b for c in cs) for p in pts]
            assert buffer_counts(pts, cs, b).tolist() == naive
        c5, c10, c15 = (buffer_counts(pts, cs, b) for b in (500, 1000, 1500))
        assert np.all(c5 <= c10) and np.all(c10 <= c15)


def test_node_mean_soc():
    assert node_mean_soc([(1, 0.2), (2, 0.5), (1, 0.4)]) == [(1, pytest.approx(0.3)), (2, 0.5)]
