import filecmp
import json

import pytest
from hypothesis import given, settings, strategies as st

from evsim.clustering import cluster_drivers
from evsim.errors import InvalidConfig, PortOverflow
from evsim.orchestrator import (
    CampaignConfig,
    EpisodeResult,
    UsagePattern,
    assign_ports,
    fold_usage,
    jitter_scenario,
    load_results,
    make_policies,
    moving_average,
    representatives,
    run_campaign,
    run_episode,
    simulate,
)
from evsim.rl_core import RLConfig, load_checkpoint
from evsim.scenario import generate_scenario


@pytest.fixture(scope="module")
def small_scenario():
    return generate_scenario({"n_agents": 20}, 2)


def small_cfg(**kw):
    rl = RLConfig(hidden=(16, 16), batch_size=8, learning_starts=8, learning_rate=1e-3, optimizer="adam")
    return CampaignConfig(**{"episodes": 3, "seed": 5, "rl": rl, "checkpoint_every": 2, **kw})


def result_with(sessions):
    return EpisodeResult(0, 0.0, {}, {}, {}, {}, {}, sessions, [], [], {})


# -- usage folding ------------------------------------------------------------------

def test_no_sessions_empty_pattern():
    u = fold_usage(result_with([]), {"c": 2})
    assert u.windows == {}
    assert u.busy_windows("c") == []


def test_overlapping_sessions_use_two_ports():
    s = [{"charger_id": "c", "start": 100.0, "end": 130.0}, {"charger_id": "c", "start": 120.0, "end": 150.0}]
    assert fold_usage(result_with(s), {"c": 2}).windows["c"] == [(0, 100.0, 130.0), (1, 120.0, 150.0)]
    with pytest.raises(PortOverflow):
        fold_usage(result_with(s), {"c": 1})


def test_abutting_sessions_share_a_port():
    s = [{"charger_id": "c", "start": 100.0, "end": 130.0}, {"charger_id": "c", "start": 130.0, "end": 160.0}]
    assert fold_usage(result_with(s), {"c": 1}).windows["c"] == [(0, 100.0, 130.0), (0, 130.0, 160.0)]


def test_usage_round_trip():
    u = UsagePattern(4, {"a": [(0, 1.0, 2.0), (1, 1.5, 3.0)]})
    assert UsagePattern.from_dict(json.loads(json.dumps(u.to_dict()))) == u


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1400), st.floats(1, 120)), max_size=25), st.integers(1, 4))
def test_port_assignment_never_double_books(raw, ports):
    sessions = [(s, s + d) for s, d in raw]
    try:
        out = assign_ports(sessions, ports)
    except PortOverflow:
        # some instant must then really be covered by more than ``ports`` sessions
        starts = sorted(s for s, _ in sessions)
        assert any(sum(1 for s, e in sessions if s <= t < e) > ports for t in starts)
        return
    for p in range(ports):
        mine = sorted((s, e) for q, s, e in out if q == p)
        assert all(a[1] <= b[0] for a, b in zip(mine, mine[1:]))


# -- episodes ---------------------------------------------------------------------------

def test_representatives_are_members(small_scenario):
    g = cluster_drivers(small_scenario.agents, 0)
    reps = representatives(g, 2, seed=3)
    for (c, p), ids in g.groups.items():
        key = f"{c}-{p}"
        if ids:
            assert len(reps[key]) == 2 and set(reps[key]) <= set(ids)
        else:
            assert key not in reps


def test_single_episode(small_scenario):
    results, _ = run_campaign(small_cfg(episodes=1), small_scenario)
    assert len(results) == 1
    r = results[0]
    assert r.episode == 0 and r.epsilon == 0.99
    for k, v in r.completion_rate.items():
        assert v is None or 0.0 <= v <= 1.0


def test_empty_group_has_empty_metrics():
    scen = generate_scenario({"n_agents": 12, "work_share": 1.0}, 3)
    g = cluster_drivers(scen.agents, 0)
    cfg = small_cfg(episodes=1)
    res = run_episode(scen, g, make_policies(g, cfg), None, 0, cfg)
    leisure = [k for k in res.completion_rate if k.endswith("leisure")]
    assert leisure and all(res.completion_rate[k] is None for k in leisure)
    assert all(k not in res.train_reward for k in leisure)
    assert all(v is not None for k, v in res.completion_rate.items() if k.endswith("work"))


def test_episode_is_deterministic(small_scenario):
    cfg = small_cfg()
    g = cluster_drivers(small_scenario.agents, cfg.seed)
    a = run_episode(small_scenario, g, make_policies(g, cfg), None, 0, cfg)
    b = run_episode(small_scenario, g, make_policies(g, cfg), None, 0, cfg)
    assert a.to_dict() == b.to_dict()


def test_jitter_changes_only_later_sets(small_scenario):
    assert jitter_scenario(small_scenario, 1, 0, 15.0) is small_scenario
    moved = jitter_scenario(small_scenario, 1, 1, 15.0)
    starts = [t.start_time for a in moved.agents for t in a.trips]
    orig = [t.start_time for a in small_scenario.agents for t in a.trips]
    assert starts != orig and all(0 <= s < 1440 for s in starts)


def test_usage_replayed_into_next_episode(small_scenario, tmp_path):
    results, _ = run_campaign(small_cfg(episodes=2), small_scenario, tmp_path)
    for r in results:
        u = UsagePattern.from_dict(r.usage)
        total = sum(len(w) for w in u.windows.values())
        assert total == len(r.sessions)
    assert load_results(tmp_path)[1].to_dict() == results[1].to_dict()


# -- campaigns ------------------------------------------------------------------------------

def test_identical_runs_write_identical_files(small_scenario, tmp_path):
    cfg = small_cfg()
    run_campaign(cfg, small_scenario, tmp_path / "a")
    run_campaign(cfg, small_scenario, tmp_path / "b")
    for e in range(cfg.episodes):
        for name in ("result.json", "usage.json", "traces.ndjson"):
            assert filecmp.cmp(tmp_path / "a" / "episodes" / f"{e:04d}" / name,
                               tmp_path / "b" / "episodes" / f"{e:04d}" / name, shallow=False)


def test_resume_matches_uninterrupted(small_scenario, tmp_path):
    cfg = small_cfg(episodes=4, checkpoint_every=2)
    full, _ = run_campaign(cfg, small_scenario, tmp_path / "full")
    run_campaign(cfg, small_scenario, tmp_path / "part", stop_after=2)
    _, extra = load_checkpoint(tmp_path / "part" / "checkpoints" / "latest.npz")
    assert extra["next_episode"] == 2
    resumed, _ = run_campaign(cfg, small_scenario, tmp_path / "part")
    assert [r.to_dict() for r in resumed] == [r.to_dict() for r in full]


def test_simulate_from_checkpoint(small_scenario, tmp_path):
    cfg = small_cfg(episodes=2)
    _, policies = run_campaign(cfg, small_scenario, tmp_path)
    loaded, _ = load_checkpoint(tmp_path / "checkpoints" / "latest.npz")
    a = simulate(small_scenario, policies, cfg)["result"].to_dict()
    b = simulate(small_scenario, loaded, cfg)["result"].to_dict()
    assert a == b


def test_campaign_config_validation():
    with pytest.raises(InvalidConfig) as err:
        CampaignConfig(episodes=0)
    assert err.value.field == "campaign.episodes"


def test_moving_average():
    assert moving_average([1, 2, 3, 4], 2).tolist() == [1.5, 2.5, 3.5]
    assert moving_average([2, 4], 20).tolist() == [3.0]
