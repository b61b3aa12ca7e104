"""The driving-and-charging MDP.

A ``World`` owns the clock, the charger runtimes and every agent's position.
It is advanced by a deterministic event loop: ``next_decision`` runs events
until some agent stands on a node and must choose, the caller picks an action
index, and ``apply`` starts the resulting movement. A transition is closed,
and its reward computed, when that agent next has to decide or finishes its
day. Closed transitions accumulate in ``World.transitions``.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    IllegalAction,
    InternalInconsistency,
    InvalidConfig,
    NoActiveTrip,
    NonFiniteReward,
)
from .rl_core import AMOUNTS, action_head_size
from .road_network import distance_matrix, next_hop
from .scenario import Charger, DriverAgent, EVSpec, Scenario

# event priorities at equal times: releases first so a freed port is visible
# to an arrival at the same instant, decisions last
CHARGE_DONE, BG_FREE, ARRIVE_CHARGER, START_TRIP, DECIDE = 0, 0, 1, 2, 3

FAILED, CONTINUING, ARRIVED = -1, 0, 1


# -- configuration -------------------------------------------------------------

@dataclass
class RewardConfig:
    epsilon_u: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma_r: float = 1.0
    rho: float = 1.0
    class_bounds: tuple = (15.0, 25.0)
    # lower bound on the charging-difficulty term; guards a zero log argument
    d_charge_floor: float = 0.5

    def __post_init__(self):
        self.class_bounds = tuple(self.class_bounds)
        self.validate()

    def validate(self) -> None:
        for name in ("epsilon_u", "alpha", "beta", "gamma_r", "rho", "d_charge_floor"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidConfig(f"{name} must be positive", field=f"reward.{name}")
        b = self.class_bounds
        if len(b) != 2 or not 0 < b[0] < b[1]:
            raise InvalidConfig("class bounds must be strictly increasing", field="reward.class_bounds")


@dataclass
class EnvConfig:
    speed_mph: float = 40.0
    k_max: int = 5
    strict_availability: bool = False
    max_trip_distance: float = 40.0
    max_trips: int = 4
    horizon_min: float = 2880.0
    max_decisions: int = 300
    tcd_floor: float = 0.01
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if isinstance(self.reward, Mapping):
            self.reward = RewardConfig(**self.reward)
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.speed_mph > 0, "speed_mph"),
            (self.k_max >= 1, "k_max"),
            (self.max_trip_distance > 0, "max_trip_distance"),
            (self.max_trips >= 1, "max_trips"),
            (self.horizon_min > 0, "horizon_min"),
            (self.max_decisions >= 1, "max_decisions"),
            (self.tcd_floor > 0, "tcd_floor"),
        ]
        for ok, name in checks:
            if not ok:
                raise InvalidConfig(f"invalid {name}", field=f"env.{name}")
        self.reward.validate()

    @property
    def n_actions(self) -> int:
        return action_head_size(self.k_max)


# -- types ---------------------------------------------------------------------

@dataclass(frozen=True)
class EnvState:
    soc: float
    dist: float
    time: float
    stations: float
    trips_remaining: int

    def vector(self, cfg: EnvConfig) -> np.ndarray:
        """Bounded network input."""
        return np.array([
            min(max(self.soc, 0.0), 1.0),
            min(self.dist / cfg.max_trip_distance, 1.0),
            min(self.time / 1440.0, 1.0),
            self.stations,
            min(self.trips_remaining / cfg.max_trips, 1.0),
        ])


@dataclass(frozen=True)
class Action:
    kind: str
    charger_id: str | None = None
    amount: int = 0

    def __post_init__(self):
        if self.kind == "charge":
            if self.amount not in AMOUNTS:
                raise IllegalAction(f"charge amount {self.amount} is not a multiple of 10 in [10, 100]")
        elif self.kind != "proceed":
            raise IllegalAction(f"unknown action kind {self.kind!r}")

    @property
    def label(self) -> str:
        return "proceed" if self.kind == "proceed" else str(self.amount)


PROCEED = Action("proceed")


def action_index(k: int, amount: int) -> int:
    return 1 + k * len(AMOUNTS) + (amount // 10 - 1)


def decode_action(index: int, candidates: Sequence[str]) -> Action:
    if index == 0:
        return PROCEED
    k, r = divmod(index - 1, len(AMOUNTS))
    if k >= len(candidates):
        raise IllegalAction(f"action {index} names candidate {k} of {len(candidates)}")
    return Action("charge", candidates[k], AMOUNTS[r])


@dataclass
class StepOutcome:
    next_state: EnvState
    reward: float
    status: int
    done: bool


@dataclass
class Transition:
    agent_id: str
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    next_mask: np.ndarray
    status: int
    label: str


@dataclass
class RewardContext:
    soc: float
    threshold: float
    charged: bool = False
    timing_charge: float = 0.0
    chance_charge: float = 0.0
    status_battery: float = 0.0
    payment: float = 0.0
    t_travel: float = 0.0
    t_charge: float = 0.0
    n_charges: int = 0
    distance_class: int = 1
    status: int = 0


# -- physics and reward -------------------------------------------------------------

def charging_time(ev: EVSpec, charger: Charger, n: float) -> float:
    """Minutes needed to add ``n`` percent of the battery at the charger's rate."""
    return (n / 100.0 * ev.battery_kwh) / charger.speed_kw * 60.0


def charging_payment(charger: Charger, energy_kwh: float, total_dwell_h: float) -> float:
    """Energy cost plus a first-hour parking fee and a fee for each further started hour."""
    if energy_kwh < 0 or total_dwell_h < 0:
        raise ValueError("energy and dwell must be non-negative")
    pay = energy_kwh * charger.price_gbp_per_kwh
    if total_dwell_h > 0:
        hours = math.ceil(total_dwell_h - 1e-9)
        pay += charger.initial_parking_fee_gbp + charger.additional_parking_fee_gbp_per_h * max(0, hours - 1)
    return pay


def distance_class(total_distance_mi: float, cfg: RewardConfig) -> int:
    lo, hi = cfg.class_bounds
    if total_distance_mi < lo:
        return 1
    return 2 if total_distance_mi <= hi else 3


def reward_terms(ctx: RewardContext | Mapping, cfg: RewardConfig) -> dict:
    c = ctx if isinstance(ctx, RewardContext) else RewardContext(**ctx)
    if c.distance_class not in (1, 2, 3):
        raise ValueError("distance class must be 1, 2 or 3")
    d_soc = c.soc - c.threshold
    ind = 1.0 if c.charged else 0.0
    if c.charged:
        d_charge = cfg.epsilon_u * math.log(c.timing_charge * c.chance_charge * c.status_battery + 1.0)
        d_charge = max(d_charge, cfg.d_charge_floor)
    else:
        d_charge = 1.0
    base = cfg.alpha * math.log(1.0 + c.payment * ind) + cfg.beta * math.log(1.0 + c.t_travel + c.t_charge * ind) + 1.0
    d_cost = base ** (c.n_charges / c.distance_class)
    r = cfg.gamma_r * d_soc / (d_charge * d_cost) + cfg.rho * c.status
    return {"d_soc": d_soc, "d_charge": d_charge, "d_cost": d_cost, "reward": r}


def compute_reward(ctx: RewardContext | Mapping, cfg: RewardConfig) -> float:
    try:
        r = reward_terms(ctx, cfg)["reward"]
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        if isinstance(exc, ValueError) and "distance class" in str(exc):
            raise
        raise NonFiniteReward(f"reward undefined: {exc}") from None
    if not math.isfinite(r):
        raise NonFiniteReward(f"reward {r}")
    return r


# -- charger runtime -------------------------------------------------------------

class ChargerRuntime:
    """Live port occupancy, FIFO queue and optional replayed background windows."""

    def __init__(self, charger: Charger, background: Sequence[tuple] = ()):
        self.charger = charger
        self.ports: list = [None] * charger.ports
        self.queue: deque = deque()
        self.background = [[] for _ in range(charger.ports)]
        for port, start, end in background:
            self.background[int(port) % charger.ports].append((float(start), float(end)))
        for w in self.background:
            w.sort()

    @property
    def charger_id(self) -> str:
        return self.charger.charger_id

    def busy_ports(self) -> int:
        return sum(p is not None for p in self.ports)

    def _bg_busy(self, port: int, t: float) -> float | None:
        for s, e in self.background[port]:
            if s <= t < e:
                return e
        return None

    def free_port(self, t: float) -> int | None:
        for i, occ in enumerate(self.ports):
            if occ is None and self._bg_busy(i, t) is None:
                return i
        return None

    def available(self, t: float) -> bool:
        return not self.queue and self.free_port(t) is not None

    def next_background_release(self, t: float) -> float | None:
        ends = [e for i, occ in enumerate(self.ports) if occ is None and (e := self._bg_busy(i, t)) is not None]
        return min(ends) if ends else None

    def check(self) -> None:
        if self.busy_ports() > len(self.ports):
            raise InternalInconsistency(f"{self.charger_id}: more sessions than ports")


# -- agent runtime ---------------------------------------------------------------

@dataclass
class _Pending:
    state: np.ndarray
    action: int
    label: str
    t_travel: float = 0.0
    t_charge: float = 0.0
    charged: bool = False
    payment: float = 0.0
    timing: float = 0.0
    status: int = CONTINUING


@dataclass
class AgentRuntime:
    agent: DriverAgent
    soc: float
    node: int
    time: float = 0.0
    trip_idx: int = 0
    phase: str = "waiting"
    trip_start: float = 0.0
    decisions: int = 0
    n_charges: int = 0
    completed: int = 0
    consumed: float = 0.0
    charged: float = 0.0
    pending: _Pending | None = None
    charge_target: tuple | None = None
    arrival_time: float = 0.0
    charge_start: float = 0.0
    port: int = -1
    chance: float = 0.0
    m: int = 1

    @property
    def trip(self):
        if self.trip_idx >= len(self.agent.trips) or self.phase in ("done", "failed"):
            return None
        return self.agent.trips[self.trip_idx]

    @property
    def finished(self) -> bool:
        return self.phase in ("done", "failed")


# -- world ---------------------------------------------------------------------------

class World:
    """One simulated day for a set of agents sharing the scenario's chargers."""

    def __init__(self, scenario: Scenario, agent_ids: Sequence[str] | None = None,
                 cfg: EnvConfig | None = None, dist: np.ndarray | None = None,
                 background: Mapping | None = None, record: bool = True):
        self.scenario = scenario
        self.graph = scenario.graph
        self.cfg = cfg or EnvConfig()
        self.dist = distance_matrix(self.graph) if dist is None else dist
        background = background or {}
        self.chargers = {c.charger_id: ChargerRuntime(c, background.get(c.charger_id, ())) for c in scenario.chargers}
        self._charger_idx = {c.charger_id: self.graph.index[c.node_id] for c in scenario.chargers}
        self._cids = sorted(self._charger_idx)
        self._cnode = np.array([self._charger_idx[c] for c in self._cids], dtype=int)
        ids = [a.agent_id for a in scenario.agents] if agent_ids is None else list(agent_ids)
        self.agents: dict[str, AgentRuntime] = {}
        self._events: list = []
        self._seq = 0
        self.time = 0.0
        self.awaiting: str | None = None
        self.transitions: list = []
        self.record = record
        self.traces: list = []
        self.sessions: list = []
        self.soc_observations: list = []
        self.decision_log: list = []
        for aid in ids:
            a = scenario.agent(aid)
            rt = AgentRuntime(a, a.soc, a.trips[0].origin)
            rt.chance = a.cd / max(a.tcd, self.cfg.tcd_floor)
            rt.m = distance_class(a.total_distance, self.cfg.reward)
            self.agents[aid] = rt
            self._push(a.trips[0].start_time, START_TRIP, aid)

    # -- event plumbing -------------------------------------------------
    def _push(self, t: float, kind: int, aid: str | None, payload=None) -> None:
        heapq.heappush(self._events, (float(t), kind, self._seq, aid, payload))
        self._seq += 1

    def _idx(self, node) -> int:
        return self.graph.index[node]

    def next_decision(self) -> str | None:
        """Run events until an agent must choose; ``None`` once every agent is finished."""
        if self.awaiting is not None:
            return self.awaiting
        while self._events:
            t, kind, _, aid, payload = heapq.heappop(self._events)
            self.time = t
            if payload is not None and payload[0] == "bg":
                self._serve_queue(payload[1], t)
            elif kind == CHARGE_DONE:
                self._charge_done(aid, t)
            elif kind == ARRIVE_CHARGER:
                self._arrive_charger(aid, t)
            elif kind == START_TRIP:
                self._start_trip(aid, t)
            elif kind == DECIDE:
                if self._begin_decision(aid, t):
                    return aid
        return None

    # -- observation ------------------------------------------------------
    def _reachable(self, rt: AgentRuntime) -> tuple[np.ndarray, np.ndarray]:
        rng_mi = rt.agent.ev.range_mi(rt.soc)
        d = self.dist[self._idx(rt.node), self._cnode]
        ok = np.flatnonzero(d <= rng_mi)
        return ok, d[ok]

    def _snapshot(self, rt: AgentRuntime) -> EnvState:
        trip = rt.trip
        if trip is None:
            dist = 0.0
        else:
            dist = float(self.dist[self._idx(rt.node), self._idx(trip.destination)])
        ok, _ = self._reachable(rt)
        if len(ok):
            avail = sum(self.chargers[self._cids[i]].available(rt.time) for i in ok)
            stations = avail / len(ok)
        else:
            stations = 0.0
        remaining = len(rt.agent.trips) - rt.completed if not rt.finished else 0
        return EnvState(float(rt.soc), dist, float(rt.time), float(stations), int(remaining))

    def observe(self, aid: str) -> EnvState:
        rt = self.agents[aid]
        if rt.trip is None:
            raise NoActiveTrip(f"agent {aid} has no active trip")
        return self._snapshot(rt)

    def candidates(self, aid: str) -> list:
        """The nearest reachable chargers (distance, then id), at most ``k_max``."""
        rt = self.agents[aid]
        ok, d = self._reachable(rt)
        order = sorted(zip(d.tolist(), (self._cids[i] for i in ok)))
        if self.cfg.strict_availability:
            order = [(x, c) for x, c in order if self.chargers[c].available(rt.time)]
        return [c for _, c in order[: self.cfg.k_max]]

    def legal(self, aid: str) -> tuple[np.ndarray, list]:
        rt = self.agents[aid]
        if rt.trip is None:
            raise NoActiveTrip(f"agent {aid} has no active trip")
        cands = self.candidates(aid)
        mask = np.zeros(self.cfg.n_actions, dtype=bool)
        mask[0] = True
        for k in range(len(cands)):
            for n in AMOUNTS:
                if rt.soc + n / 100.0 <= 1.0 + 1e-12:
                    mask[action_index(k, n)] = True
        return mask, cands

    def legal_actions(self, aid: str) -> list:
        mask, cands = self.legal(aid)
        return [decode_action(int(i), cands) for i in np.flatnonzero(mask)]

    def _terminal_mask(self) -> np.ndarray:
        m = np.zeros(self.cfg.n_actions, dtype=bool)
        m[0] = True
        return m

    # -- transitions ------------------------------------------------------
    def _close(self, rt: AgentRuntime, terminal: bool) -> None:
        p = rt.pending
        if p is None:
            return
        rt.pending = None
        ctx = RewardContext(
            soc=rt.soc, threshold=rt.agent.soc_threshold, charged=p.charged,
            timing_charge=p.timing, chance_charge=rt.chance, status_battery=rt.agent.soc,
            payment=p.payment, t_travel=p.t_travel, t_charge=p.t_charge,
            n_charges=rt.n_charges, distance_class=rt.m, status=p.status,
        )
        reward = compute_reward(ctx, self.cfg.reward)
        snap = self._snapshot(rt)
        if terminal:
            nmask = self._terminal_mask()
        else:
            nmask, _ = self.legal(rt.agent.agent_id)
        aid = rt.agent.agent_id
        self.transitions.append(Transition(aid, p.state, p.action, reward, snap.vector(self.cfg),
                                           terminal, nmask, p.status, p.label))
        if self.record:
            self.traces.append({"time": round(rt.time, 6), "agent_id": aid, "node": rt.node,
                                "soc": round(rt.soc, 9), "action": p.label, "reward": reward,
                                "status": p.status})

    def _begin_decision(self, aid: str, t: float) -> bool:
        rt = self.agents[aid]
        rt.time = t
        if rt.decisions >= self.cfg.max_decisions or t > self.cfg.horizon_min:
            self._fail(rt)
            return False
        self._close(rt, terminal=False)
        rt.phase = "deciding"
        self.awaiting = aid
        return True

    def apply(self, aid: str, index: int) -> None:
        if aid != self.awaiting:
            raise IllegalAction(f"agent {aid} is not awaiting a decision")
        rt = self.agents[aid]
        mask, cands = self.legal(aid)
        if not (0 <= index < len(mask)) or not mask[index]:
            raise IllegalAction(f"action {index} is masked for agent {aid}")
        action = decode_action(index, cands)
        state = self._snapshot(rt).vector(self.cfg)
        rt.pending = _Pending(state, int(index), action.label)
        rt.decisions += 1
        self.awaiting = None
        self.decision_log.append((aid, action.label))
        if action.kind == "proceed":
            if self._move_edge(rt, rt.trip.destination):
                self._after_move(rt)
        else:
            self._travel_to_charger(rt, action)

    # -- movement ---------------------------------------------------------
    def _move_edge(self, rt: AgentRuntime, dest) -> bool:
        """Traverse one edge toward ``dest``; False when the battery runs out on it."""
        nxt, w = next_hop(self.graph, self.dist, rt.node, dest)
        need = w * rt.agent.ev.soc_per_mile()
        minutes = w / self.cfg.speed_mph * 60.0
        if need > rt.soc:
            frac = rt.soc / need
            rt.consumed += rt.soc
            rt.soc = 0.0
            rt.time += frac * minutes
            if rt.pending:
                rt.pending.t_travel += frac * minutes
            self._fail(rt)
            return False
        rt.soc -= need
        rt.consumed += need
        rt.time += minutes
        rt.node = nxt
        if rt.pending:
            rt.pending.t_travel += minutes
        if self.record:
            self.soc_observations.append((nxt, rt.soc))
        return True

    def _after_move(self, rt: AgentRuntime) -> None:
        if rt.node == rt.trip.destination:
            self._arrive(rt)
        else:
            self._push(rt.time, DECIDE, rt.agent.agent_id)

    def _start_trip(self, aid: str, t: float) -> None:
        rt = self.agents[aid]
        trip = rt.trip
        rt.time = t
        rt.trip_start = t
        rt.phase = "driving"
        if rt.node != trip.origin:
            raise InternalInconsistency(f"agent {aid} starts trip away from its origin")
        if trip.origin == trip.destination:
            self._arrive(rt)
            return
        # no decision at the origin: the first edge is always driven
        if self._move_edge(rt, trip.destination):
            self._after_move(rt)

    def _arrive(self, rt: AgentRuntime) -> None:
        rt.completed += 1
        rt.trip_idx += 1
        if rt.pending:
            rt.pending.status = ARRIVED
        if rt.trip_idx >= len(rt.agent.trips):
            rt.phase = "done"
            self._close(rt, terminal=True)
            return
        rt.phase = "waiting"
        nxt = rt.agent.trips[rt.trip_idx]
        self._push(max(rt.time, nxt.start_time), START_TRIP, rt.agent.agent_id)

    def _fail(self, rt: AgentRuntime) -> None:
        rt.phase = "failed"
        if rt.pending:
            rt.pending.status = FAILED
        self._close(rt, terminal=True)

    # -- charging -----------------------------------------------------------
    def _travel_to_charger(self, rt: AgentRuntime, action: Action) -> None:
        cid = action.charger_id
        target = self.chargers[cid].charger.node_id
        while rt.node != target:
            if not self._move_edge(rt, target):
                return
        rt.charge_target = (cid, action.amount)
        rt.phase = "to_charger"
        self._push(rt.time, ARRIVE_CHARGER, rt.agent.agent_id)

    def _arrive_charger(self, aid: str, t: float) -> None:
        rt = self.agents[aid]
        cid, _ = rt.charge_target
        run = self.chargers[cid]
        rt.arrival_time = t
        port = None if run.queue else run.free_port(t)
        if port is None:
            run.queue.append(aid)
            rt.phase = "queued"
            rel = run.next_background_release(t)
            if rel is not None:
                self._push(rel, BG_FREE, None, ("bg", cid))
        else:
            self._start_charging(rt, run, port, t)

    def _start_charging(self, rt: AgentRuntime, run: ChargerRuntime, port: int, t: float) -> None:
        if run.ports[port] is not None:
            raise InternalInconsistency(f"port {port} of {run.charger_id} already occupied")
        _, n = rt.charge_target
        gain = min(n / 100.0, 1.0 - rt.soc)
        dur = charging_time(rt.agent.ev, run.charger, gain * 100.0)
        run.ports[port] = (rt.agent.agent_id, t + dur)
        run.check()
        rt.port = port
        rt.charge_start = t
        rt.phase = "charging"
        self._push(t + dur, CHARGE_DONE, rt.agent.agent_id)

    def _charge_done(self, aid: str, t: float) -> None:
        rt = self.agents[aid]
        cid, n = rt.charge_target
        run = self.chargers[cid]
        occ = run.ports[rt.port]
        if occ is None or occ[0] != aid:
            raise InternalInconsistency(f"{aid} is not on port {rt.port} of {cid}")
        run.ports[rt.port] = None
        gain = min(n / 100.0, 1.0 - rt.soc)
        rt.soc += gain
        rt.charged += gain
        rt.n_charges += 1
        dwell = t - rt.charge_start
        energy = gain * rt.agent.ev.battery_kwh
        p = rt.pending
        p.charged = True
        p.payment += charging_payment(run.charger, energy, dwell / 60.0)
        p.t_charge += t - rt.arrival_time
        p.timing = rt.charge_start - rt.trip_start
        self.sessions.append({"charger_id": cid, "agent_id": aid, "port": rt.port,
                              "start": rt.charge_start, "end": t, "amount": n})
        rt.time = t
        rt.charge_target = None
        rt.port = -1
        self._serve_queue(cid, t)
        rt.phase = "driving"
        if rt.node == rt.trip.destination:
            self._arrive(rt)
        elif self._move_edge(rt, rt.trip.destination):
            # the charge action ends by rejoining the route for one edge
            self._after_move(rt)

    def _serve_queue(self, cid: str, t: float) -> None:
        run = self.chargers[cid]
        while run.queue:
            port = run.free_port(t)
            if port is None:
                rel = run.next_background_release(t)
                if rel is not None and rel > t:
                    self._push(rel, BG_FREE, None, ("bg", cid))
                return
            aid = run.queue.popleft()
            self._start_charging(self.agents[aid], run, port, t)

    # -- summaries -------------------------------------------------------------
    def run(self, choose) -> None:
        """Drive the loop with ``choose(world, agent_id, mask, candidates) -> index``."""
        while (aid := self.next_decision()) is not None:
            mask, cands = self.legal(aid)
            self.apply(aid, int(choose(self, aid, mask, cands)))

    def energy_residual(self, aid: str) -> float:
        rt = self.agents[aid]
        return rt.soc - (rt.agent.soc - rt.consumed + rt.charged)


def step(world: World, agent_id: str, action: int | Action) -> StepOutcome:
    """Apply one decision for ``agent_id`` and run until it must decide again or stops.

    Other agents that need a decision in the meantime proceed.
    """
    if world.awaiting is None:
        world.next_decision()
    if isinstance(action, Action):
        mask, cands = world.legal(agent_id)
        if action.kind == "proceed":
            action = 0
        elif action.charger_id in cands:
            action = action_index(cands.index(action.charger_id), action.amount)
        else:
            raise IllegalAction(f"charger {action.charger_id} is not a current candidate")
    start = len(world.transitions)
    world.apply(agent_id, int(action))
    while True:
        mine = [t for t in world.transitions[start:] if t.agent_id == agent_id]
        if mine:
            tr = mine[0]
            rt = world.agents[agent_id]
            return StepOutcome(world._snapshot(rt), tr.reward, tr.status, tr.terminal)
        aid = world.next_decision()
        if aid is None:  # pragma: no cover - the agent always closes its transition
            raise InternalInconsistency("event queue drained with an open transition")
        if aid != agent_id:
            world.apply(aid, 0)
