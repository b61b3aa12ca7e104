"""Multi-stage training and simulation loop.

Each episode has two phases. In the training phase one representative agent
per group (or several, one per training set) drives its day alone while the
chargers replay the previous episode's usage as background occupancy; every
transition trains the group's policy. In the simulation phase every agent
drives with its group's frozen greedy policy in one shared world, and the
resulting charging sessions become the next episode's background.
"""

from __future__ import annotations

import json
import logging
import os
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path as FsPath
from typing import Mapping, Sequence

import numpy as np

from .clustering import DriverGroups, cluster_drivers
from .environment import EnvConfig, World
from .errors import CheckpointError, InvalidConfig, PortOverflow
from .io import atomic_write_text, dump_json, read_json
from .rl_core import Experience, Policy, RLConfig, epsilon_at, load_checkpoint, save_checkpoint
from .road_network import distance_matrix
from .scenario import SCHEMA_VERSION, Scenario

log = logging.getLogger(__name__)


def group_key(cluster: int, purpose: str) -> str:
    return f"{cluster}-{purpose}"


@dataclass
class CampaignConfig:
    episodes: int = 200
    training_sets: int = 2
    simulation_sets: int = 1
    seed: int = 0
    start_jitter_min: float = 15.0
    redraw_representatives: bool = False
    checkpoint_every: int = 10
    write_traces: bool = True
    rl: RLConfig = field(default_factory=RLConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    def __post_init__(self):
        if isinstance(self.rl, Mapping):
            d = dict(self.rl)
            if "hidden" in d:
                d["hidden"] = tuple(d["hidden"])
            self.rl = RLConfig(**d)
        if isinstance(self.env, Mapping):
            self.env = EnvConfig(**self.env)
        self.validate()

    def validate(self) -> None:
        if self.episodes < 1:
            raise InvalidConfig("episodes must be >= 1", field="campaign.episodes")
        if self.training_sets < 1:
            raise InvalidConfig("need at least one training set", field="campaign.training_sets")
        if self.simulation_sets < 1:
            raise InvalidConfig("need at least one simulation set", field="campaign.simulation_sets")
        if self.checkpoint_every < 1:
            raise InvalidConfig("checkpoint_every must be >= 1", field="campaign.checkpoint_every")
        if self.start_jitter_min < 0:
            raise InvalidConfig("jitter must be >= 0", field="campaign.start_jitter_min")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rl"]["hidden"] = list(self.rl.hidden)
        d["env"]["reward"]["class_bounds"] = list(self.env.reward.class_bounds)
        return d


# -- usage -------------------------------------------------------------------------

@dataclass
class UsagePattern:
    """Per-charger busy windows ``(port, start_min, end_min)`` from one episode."""
    episode: int
    windows: dict = field(default_factory=dict)

    def busy_windows(self, charger_id: str) -> list:
        return [(s, e) for _, s, e in self.windows.get(charger_id, [])]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "episode": self.episode,
            "chargers": [
                {"charger_id": cid, "busy_windows": [[s, e] for _, s, e in w], "ports": [p for p, _, _ in w]}
                for cid, w in sorted(self.windows.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UsagePattern":
        windows = {}
        for c in d.get("chargers", []):
            ports = c.get("ports") or [0] * len(c["busy_windows"])
            windows[c["charger_id"]] = [(int(p), float(s), float(e)) for p, (s, e) in zip(ports, c["busy_windows"])]
        return cls(int(d.get("episode", -1)), windows)


def assign_ports(sessions: Sequence[tuple], ports: int, charger_id: str = "") -> list:
    """Give each ``(start, end)`` session the lowest port free at its start."""
    free_at = [-np.inf] * ports
    out = []
    for s, e in sorted(sessions):
        for p in range(ports):
            if free_at[p] <= s:
                free_at[p] = e
                out.append((p, s, e))
                break
        else:
            raise PortOverflow(f"{charger_id}: more than {ports} concurrent sessions at {s}")
    return out


def fold_usage(result: "EpisodeResult", ports: Mapping[str, int]) -> UsagePattern:
    """Merge the simulation-phase charging sessions into per-charger windows."""
    by_charger: dict = {}
    for sess in result.sessions:
        by_charger.setdefault(sess["charger_id"], []).append((float(sess["start"]), float(sess["end"])))
    windows = {cid: assign_ports(w, int(ports[cid]), cid) for cid, w in sorted(by_charger.items())}
    return UsagePattern(result.episode, windows)


# -- episode -----------------------------------------------------------------------

@dataclass
class EpisodeResult:
    episode: int
    epsilon: float
    train_reward: dict
    train_completion: dict
    completion_rate: dict
    sim_reward: dict
    histograms: dict
    sessions: list
    soc_observations: list
    sim_sets: list
    losses: dict
    usage: dict = field(default_factory=dict)
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("traces")
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EpisodeResult":
        d = dict(d)
        d.pop("schema_version", None)
        return cls(**d)


def _round(x: float) -> float:
    return float(round(x, 10))


def representatives(groups: DriverGroups, n_sets: int, seed: int, episode: int = 0,
                    redraw: bool = False) -> dict:
    """One seeded random member per group and training set."""
    reps = {}
    for (c, purpose), ids in sorted(groups.groups.items()):
        if not ids:
            continue
        picks = []
        for t in range(n_sets):
            key = [seed, 7001, t] + ([episode] if redraw else [])
            rng = np.random.default_rng(key)
            picks.append(ids[int(rng.integers(len(ids)))])
        reps[group_key(c, purpose)] = picks
    return reps


def agent_group_map(groups: DriverGroups, scenario: Scenario) -> dict:
    return {a.agent_id: group_key(groups.cluster_of[a.agent_id], a.purpose) for a in scenario.agents}


def jitter_scenario(scenario: Scenario, seed: int, sim_set: int, jitter_min: float) -> Scenario:
    """Simulation set ``k > 0`` shifts every agent's trip start times by seeded noise."""
    if sim_set == 0 or jitter_min == 0:
        return scenario
    rng = np.random.default_rng([seed, 9001, sim_set])
    agents = []
    for a in scenario.agents:
        shift = float(rng.normal(0.0, jitter_min))
        trips = tuple(replace(t, start_time=float(min(max(t.start_time + shift, 0.0), 1439.0))) for t in a.trips)
        agents.append(replace(a, trips=trips))
    return Scenario(scenario.graph, scenario.chargers, agents, scenario.seed, scenario.config)


def train_phase(scenario: Scenario, reps: Mapping, policies: Mapping, prev_usage: UsagePattern | None,
                epsilon: float, env: EnvConfig, dist: np.ndarray) -> tuple[dict, dict]:
    """Each representative drives alone against the replayed background; returns
    per-group mean cumulative reward and completion rate."""
    background = prev_usage.windows if prev_usage else {}
    rewards, completion = {}, {}
    for key in sorted(reps):
        pol = policies[key]
        tot_r, done, planned = 0.0, 0, 0
        for aid in reps[key]:
            world = World(scenario, [aid], env, dist, background, record=False)
            while (who := world.next_decision()) is not None:
                mask, _ = world.legal(who)
                state = world.observe(who).vector(env)
                world.apply(who, pol.act(state, mask, epsilon))
                for tr in world.transitions:
                    tot_r += tr.reward
                    pol.learn(Experience(tr.state, tr.action, tr.reward, tr.next_state, tr.terminal, tr.next_mask))
                world.transitions.clear()
            rt = world.agents[aid]
            done += rt.completed
            planned += len(rt.agent.trips)
        rewards[key] = _round(tot_r / len(reps[key]))
        completion[key] = _round(done / planned)
    return rewards, completion


def simulate_phase(scenario: Scenario, group_of: Mapping, policies: Mapping, env: EnvConfig,
                   dist: np.ndarray, record: bool = True) -> dict:
    """All agents in one live world, each acting greedily for its group."""
    world = World(scenario, None, env, dist, None, record=record)
    hist = {k: Counter() for k in policies}
    while (aid := world.next_decision()) is not None:
        key = group_of[aid]
        mask, _ = world.legal(aid)
        state = world.observe(aid).vector(env)
        world.apply(aid, policies[key].greedy(state, mask))
    for aid, label in world.decision_log:
        hist[group_of[aid]][label] += 1
    reward = Counter()
    for tr in world.transitions:
        reward[group_of[tr.agent_id]] += tr.reward
    done, planned = Counter(), Counter()
    for aid, rt in world.agents.items():
        done[group_of[aid]] += rt.completed
        planned[group_of[aid]] += len(rt.agent.trips)
    return {"world": world, "histograms": hist, "reward": reward, "done": done, "planned": planned}


def run_episode(scenario: Scenario, groups: DriverGroups, policies: Mapping, prev_usage: UsagePattern | None,
                episode: int, cfg: CampaignConfig, dist: np.ndarray | None = None,
                reps: Mapping | None = None) -> EpisodeResult:
    dist = distance_matrix(scenario.graph) if dist is None else dist
    env = cfg.env
    eps = epsilon_at(cfg.rl.schedule(), episode)
    if reps is None:
        reps = representatives(groups, cfg.training_sets, cfg.seed, episode, cfg.redraw_representatives)
    train_r, train_c = train_phase(scenario, reps, policies, prev_usage, eps, env, dist)

    group_of = agent_group_map(groups, scenario)
    keys = sorted(policies)
    sets = []
    first = None
    for s in range(cfg.simulation_sets):
        scen = jitter_scenario(scenario, cfg.seed + episode, s, cfg.start_jitter_min)
        out = simulate_phase(scen, group_of, policies, env, dist, record=(s == 0))
        if s == 0:
            first = out
        planned = sum(out["planned"].values())
        sets.append({"set": s, "completion_rate": _round(sum(out["done"].values()) / planned) if planned else None,
                     "reward": _round(sum(out["reward"].values()))})
    world = first["world"]
    completion = {k: (_round(first["done"][k] / first["planned"][k]) if first["planned"][k] else None) for k in keys}
    histograms = {k: dict(sorted(first["histograms"][k].items())) for k in keys}
    result = EpisodeResult(
        episode=episode,
        epsilon=_round(eps),
        train_reward=train_r,
        train_completion=train_c,
        completion_rate=completion,
        sim_reward={k: _round(first["reward"][k]) for k in keys},
        histograms=histograms,
        sessions=[{**s, "start": _round(s["start"]), "end": _round(s["end"])} for s in world.sessions],
        soc_observations=[[int(n), _round(v)] for n, v in world.soc_observations],
        sim_sets=sets,
        losses={k: (None if np.isnan(policies[k].last_loss) else _round(policies[k].last_loss)) for k in keys},
        traces=world.traces,
    )
    ports = {c.charger_id: c.ports for c in scenario.chargers}
    result.usage = fold_usage(result, ports).to_dict()
    result.usage["episode"] = episode
    return result


# -- campaign -----------------------------------------------------------------------

def make_policies(groups: DriverGroups, cfg: CampaignConfig) -> dict:
    out = {}
    for i, (c, purpose) in enumerate(sorted(groups.groups)):
        out[group_key(c, purpose)] = Policy(cfg.rl, seed=cfg.seed * 1009 + 31 * i + 1)
    return out


def _episode_dir(out: FsPath, e: int) -> FsPath:
    return out / "episodes" / f"{e:04d}"


def write_episode(out: FsPath, result: EpisodeResult, write_traces: bool) -> None:
    d = _episode_dir(out, result.episode)
    d.mkdir(parents=True, exist_ok=True)
    atomic_write_text(d / "result.json", dump_json(result.to_dict()))
    atomic_write_text(d / "usage.json", dump_json(result.usage))
    if write_traces:
        lines = "".join(json.dumps(t, sort_keys=True) + "\n" for t in result.traces)
        atomic_write_text(d / "traces.ndjson", lines)


def load_results(out) -> list:
    out = FsPath(out)
    res = []
    for d in sorted((out / "episodes").glob("[0-9]" * 4)):
        if (d / "result.json").exists():
            res.append(EpisodeResult.from_dict(read_json(d / "result.json")))
    return res


def run_campaign(cfg: CampaignConfig, scenario: Scenario, out: str | os.PathLike | None = None,
                 resume: bool = True, stop_after: int | None = None,
                 progress=None) -> tuple[list, dict]:
    """Run ``cfg.episodes`` episodes; returns ``(results, policies)``.

    With ``out`` set, per-episode files and periodic checkpoints are written and
    an interrupted campaign continues from its latest checkpoint. ``stop_after``
    ends the run early after that many episodes (used to exercise resumption).
    """
    groups = cluster_drivers(scenario.agents, cfg.seed)
    dist = distance_matrix(scenario.graph)
    policies = make_policies(groups, cfg)
    prev_usage: UsagePattern | None = None
    start = 0
    results: list = []
    ckpt = None
    if out is not None:
        out = FsPath(out)
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "config.json", dump_json({
            "schema_version": SCHEMA_VERSION, "campaign": cfg.to_dict(),
            "scenario_config_hash": scenario.config_hash, "scenario_seed": scenario.seed,
        }))
        ckpt = out / "checkpoints" / "latest.npz"
        if resume and ckpt.exists():
            loaded, extra = load_checkpoint(ckpt)
            if sorted(loaded) != sorted(policies):
                raise CheckpointError("checkpoint groups do not match the scenario clustering")
            policies = loaded
            start = int(extra["next_episode"])
            prev_usage = UsagePattern.from_dict(extra["prev_usage"]) if extra.get("prev_usage") else None
            results = [r for r in load_results(out) if r.episode < start]
            log.info("resuming campaign at episode %d", start)
    ports = {c.charger_id: c.ports for c in scenario.chargers}
    end = cfg.episodes if stop_after is None else min(cfg.episodes, start + stop_after)
    for e in range(start, end):
        t0 = time.perf_counter()
        res = run_episode(scenario, groups, policies, prev_usage, e, cfg, dist)
        prev_usage = fold_usage(res, ports)
        results.append(res)
        if out is not None:
            write_episode(out, res, cfg.write_traces)
            if (e + 1) % cfg.checkpoint_every == 0 or e + 1 == cfg.episodes:
                save_checkpoint(ckpt, policies, {"next_episode": e + 1, "prev_usage": prev_usage.to_dict()})
        if progress:
            progress(res, time.perf_counter() - t0)
    return results, policies


def simulate(scenario: Scenario, policies: Mapping, cfg: CampaignConfig, episode: int = 0) -> dict:
    """Simulation phase only, under fixed policies (for example from a checkpoint)."""
    groups = cluster_drivers(scenario.agents, cfg.seed)
    dist = distance_matrix(scenario.graph)
    out = simulate_phase(scenario, agent_group_map(groups, scenario), policies, cfg.env, dist)
    world = out["world"]
    keys = sorted(policies)
    sessions = [{**s, "start": _round(s["start"]), "end": _round(s["end"])} for s in world.sessions]
    res = EpisodeResult(episode, 0.0, {}, {},
                        {k: (_round(out["done"][k] / out["planned"][k]) if out["planned"][k] else None) for k in keys},
                        {k: _round(out["reward"][k]) for k in keys},
                        {k: dict(sorted(out["histograms"][k].items())) for k in keys},
                        sessions, [[int(n), _round(v)] for n, v in world.soc_observations], [], {},
                        traces=world.traces)
    res.usage = fold_usage(res, {c.charger_id: c.ports for c in scenario.chargers}).to_dict()
    return {"result": res, "world": world}


# -- campaign metrics -----------------------------------------------------------------

def moving_average(x: Sequence[float], window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) < window:
        return np.array([x.mean()]) if len(x) else x
    return np.convolve(x, np.ones(window) / window, mode="valid")


def pooled(results: Sequence[EpisodeResult], groups: Sequence[str], attr: str) -> list:
    """Per-episode mean of a per-group metric over the listed group keys."""
    out = []
    for r in results:
        vals = [getattr(r, attr)[g] for g in groups if getattr(r, attr).get(g) is not None]
        out.append(float(np.mean(vals)) if vals else float("nan"))
    return out


def pooled_completion(results: Sequence[EpisodeResult], groups: Sequence[str], planned: Mapping[str, int]) -> list:
    """Trip-weighted simulation completion rate over several groups."""
    out = []
    for r in results:
        num = sum(r.completion_rate[g] * planned[g] for g in groups if r.completion_rate.get(g) is not None)
        den = sum(planned[g] for g in groups if r.completion_rate.get(g) is not None)
        out.append(num / den if den else float("nan"))
    return out


def pooled_histogram(results: Sequence[EpisodeResult], groups: Sequence[str]) -> Counter:
    h = Counter()
    for r in results:
        for g in groups:
            h.update(r.histograms.get(g, {}))
    return h


def profile_keys(groups: DriverGroups, profile: str) -> list:
    """Group keys (both purposes) of the clusters carrying a driver-profile label."""
    return [group_key(c, p) for c in groups.clusters_labelled(profile) for p in ("work", "leisure")
            if groups.groups.get((c, p))]


def planned_trips(groups: DriverGroups, scenario: Scenario) -> dict:
    out: Counter = Counter()
    for a in scenario.agents:
        out[group_key(groups.cluster_of[a.agent_id], a.purpose)] += len(a.trips)
    return dict(out)


def learning_summary(results: Sequence[EpisodeResult], groups: DriverGroups, scenario: Scenario,
                     window: int = 20, tail: int = 10) -> dict:
    """Trend and behaviour statistics of a campaign for the two contrasting profiles.

    Completion is the trip-weighted simulation rate; the reward curve is the
    representatives' mean cumulative training reward, smoothed over ``window``
    episodes. Action shares use the greedy simulations of the last ``tail``
    episodes.
    """
    low = profile_keys(groups, "long_distance_low_battery")
    short = profile_keys(groups, "short_distance_dense")
    n = len(results)
    decile = max(1, n // 10)
    comp = pooled_completion(results, low, planned_trips(groups, scenario))
    ma = moving_average(pooled(results, low, "train_reward"), window)
    ma_decile = max(1, len(ma) // 10)
    last = results[-tail:]
    hs = pooled_histogram(last, short)
    hl = pooled_histogram(last, low)
    charges = {k: v for k, v in hl.items() if k != "proceed"}
    n_charges = sum(charges.values())
    return {
        "low_battery_groups": low,
        "short_dense_groups": short,
        "completion_first": float(np.nanmean(comp[:decile])),
        "completion_last": float(np.nanmean(comp[-decile:])),
        "ma_reward_first": float(ma[:ma_decile].mean()),
        "ma_reward_last": float(ma[-ma_decile:].mean()),
        "short_proceed_share": hs.get("proceed", 0) / max(1, sum(hs.values())),
        "low_charge_decisions": n_charges,
        "low_large_charge_share": sum(v for k, v in charges.items() if int(k) >= 70) / n_charges if n_charges else 0.0,
        "low_histogram": dict(sorted(hl.items())),
        "short_histogram": dict(sorted(hs.items())),
    }
