"""Deep Q-learning from scratch on numpy.

The Q-network is a plain ReLU multilayer perceptron with a hand-written
backward pass. One network output per discrete action; illegal actions are
masked at selection time and in the bootstrap target.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    ArchitectureMismatch,
    BufferTooSmall,
    CheckpointError,
    DimensionMismatch,
    InvalidConfig,
    NoLegalAction,
    NonFiniteLoss,
)

STATE_DIM = 5
AMOUNTS = tuple(range(10, 101, 10))
CHECKPOINT_VERSION = 1


def action_head_size(k_max: int) -> int:
    return 1 + len(AMOUNTS) * k_max


# -- networks ---------------------------------------------------------------

class QNetwork:
    """ReLU MLP mapping a state vector to one Q-value per action.

    Hidden layers use He-normal weights and zero biases. With
    ``zero_output=True`` the last layer starts at exactly zero, so an
    untrained network ties every action and greedy selection falls back to
    the lowest legal index.
    """

    def __init__(self, sizes: Sequence[int] = (STATE_DIM, 64, 64, action_head_size(5)),
                 seed: int = 0, zero_output: bool = True):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights, self.biases = [], []
        last = len(self.sizes) - 2
        for li, (n_in, n_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            if li == last and zero_output:
                w = np.zeros((n_in, n_out))
            else:
                w = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out))
            self.weights.append(w)
            self.biases.append(np.zeros(n_out))

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        if [p.shape for p in params] != [p.shape for p in self.params]:
            raise ArchitectureMismatch("parameter shapes differ")
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self) -> "QNetwork":
        twin = QNetwork.__new__(QNetwork)
        twin.sizes, twin.seed = self.sizes, self.seed
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < n - 1:
                h = np.maximum(h, 0.0)
        return h

    def forward_cache(self, x: np.ndarray):
        acts = [x]
        pre = []
        h = x
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < n - 1 else z
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, dout: np.ndarray) -> list:
        """Gradients of sum(dout * output) w.r.t. [W1, b1, W2, b2, ...]."""
        acts, pre = cache
        grads_w, grads_b = [], []
        g = dout
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(acts[i].T @ g)
            grads_b.append(g.sum(axis=0))
            if i:
                g = (g @ self.weights[i].T) * (pre[i - 1] > 0)
        out = []
        for w, b in zip(reversed(grads_w), reversed(grads_b)):
            out += [w, b]
        return out


class TargetNetwork:
    def __init__(self, net: QNetwork):
        self.net = net.copy()
        self.sync_counter = 0

    @property
    def params(self) -> list:
        return self.net.params

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)


def q_forward(net: QNetwork | TargetNetwork, state) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    inner = net.net if isinstance(net, TargetNetwork) else net
    if s.shape != (inner.sizes[0],):
        raise DimensionMismatch(f"state of shape {s.shape}, network expects ({inner.sizes[0]},)")
    return inner.forward(s[None, :])[0]


def sync_target(net: QNetwork, target: TargetNetwork) -> None:
    if net.sizes != target.net.sizes:
        raise ArchitectureMismatch(f"{net.sizes} vs {target.net.sizes}")
    target.net.set_params([p.copy() for p in net.params])
    target.sync_counter += 1


def select_action(q: np.ndarray, legal_mask: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy over legal entries; greedy ties go to the lowest index."""
    legal = np.flatnonzero(legal_mask)
    if legal.size == 0:
        raise NoLegalAction("every action is masked")
    if rng.random() < epsilon:
        return int(legal[rng.integers(legal.size)])
    return int(legal[np.argmax(np.asarray(q)[legal])])


# -- replay -----------------------------------------------------------------

@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    next_mask: np.ndarray | None = None


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    next_masks: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest experience is overwritten first."""

    def __init__(self, capacity: int = 10_000, state_dim: int = STATE_DIM, n_actions: int = action_head_size(5)):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self.next_masks = np.ones((capacity, n_actions), dtype=bool)
        self.count = 0

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def push(self, e: Experience) -> None:
        if not 0 <= e.action < self.n_actions:
            raise DimensionMismatch(f"action {e.action} outside head of {self.n_actions}")
        if not math.isfinite(e.reward):
            raise NonFiniteLoss(f"non-finite reward {e.reward}")
        i = self.count % self.capacity
        self.states[i] = e.state
        self.actions[i] = e.action
        self.rewards[i] = e.reward
        self.next_states[i] = e.next_state
        self.terminals[i] = e.terminal
        self.next_masks[i] = True if e.next_mask is None else e.next_mask
        self.count += 1

    def _order(self) -> np.ndarray:
        n = len(self)
        start = self.count % self.capacity if self.count > self.capacity else 0
        return (start + np.arange(n)) % self.capacity

    def _get(self, i: int) -> Experience:
        return Experience(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                          self.next_states[i].copy(), bool(self.terminals[i]), self.next_masks[i].copy())

    def contents(self) -> list:
        """Stored experiences, oldest first."""
        return [self._get(i) for i in self._order()]

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) < n:
            raise BufferTooSmall(f"{len(self)} stored, {n} requested")
        return rng.choice(len(self), size=n, replace=False)

    def sample_minibatch(self, n: int, rng: np.random.Generator) -> list:
        return [self._get(i) for i in self.sample_indices(n, rng)]

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(n, rng)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx], self.next_masks[idx])

    def state_dict(self, include_contents: bool = True) -> dict:
        d = {"capacity": self.capacity, "count": self.count,
             "state_dim": self.state_dim, "n_actions": self.n_actions}
        if include_contents:
            d.update(states=self.states, actions=self.actions, rewards=self.rewards,
                     next_states=self.next_states, terminals=self.terminals, next_masks=self.next_masks)
        return d

    @classmethod
    def from_state_dict(cls, d: dict) -> "ReplayBuffer":
        buf = cls(int(d["capacity"]), int(d["state_dim"]), int(d["n_actions"]))
        if "states" in d:
            buf.states[:] = d["states"]
            buf.actions[:] = d["actions"]
            buf.rewards[:] = d["rewards"]
            buf.next_states[:] = d["next_states"]
            buf.terminals[:] = d["terminals"]
            buf.next_masks[:] = d["next_masks"]
            buf.count = int(d["count"])
        return buf


def as_batch(batch) -> Batch:
    if isinstance(batch, Batch):
        return batch
    if not batch:
        raise ValueError("empty batch")
    n_act = None
    for e in batch:
        if e.next_mask is not None:
            n_act = len(e.next_mask)
            break
    masks = np.array([
        e.next_mask if e.next_mask is not None else np.ones(n_act or 1, dtype=bool) for e in batch
    ], dtype=bool) if n_act is not None else None
    return Batch(
        np.array([e.state for e in batch], dtype=float),
        np.array([e.action for e in batch], dtype=np.int64),
        np.array([e.reward for e in batch], dtype=float),
        np.array([e.next_state for e in batch], dtype=float),
        np.array([e.terminal for e in batch], dtype=bool),
        masks,
    )


# -- exploration ------------------------------------------------------------

@dataclass
class ExplorationSchedule:
    epsilon_start: float = 0.99
    decay: float = 0.995
    epsilon_floor: float = 0.05

    def __post_init__(self):
        if not (0 <= self.epsilon_floor <= self.epsilon_start <= 1 and 0 < self.decay <= 1):
            raise ValueError("need 0 <= floor <= start <= 1 and 0 < decay <= 1")


def epsilon_at(schedule: ExplorationSchedule, episode: int) -> float:
    if episode < 0:
        raise ValueError("episode must be >= 0")
    return max(schedule.epsilon_floor, schedule.epsilon_start * schedule.decay ** episode)


# -- learning ---------------------------------------------------------------

class SGD:
    name = "sgd"

    def update(self, params: list, grads: list, lr: float) -> None:
        for p, g in zip(params, grads):
            p -= lr * g

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, d: dict) -> None:
        pass


class Adam:
    name = "adam"

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: list | None = None
        self.v: list | None = None
        self.t = 0

    def update(self, params: list, grads: list, lr: float) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        d = {"t": self.t}
        if self.m is not None:
            for i, (m, v) in enumerate(zip(self.m, self.v)):
                d[f"m{i}"], d[f"v{i}"] = m, v
        return d

    def load_state_dict(self, d: dict) -> None:
        self.t = int(d.get("t", 0))
        keys = sorted((k for k in d if k.startswith("m") and k[1:].isdigit()), key=lambda k: int(k[1:]))
        if keys:
            self.m = [np.array(d[k]) for k in keys]
            self.v = [np.array(d["v" + k[1:]]) for k in keys]


def make_optimizer(name: str):
    if name == "sgd":
        return SGD()
    if name == "adam":
        return Adam()
    raise ValueError(f"unknown optimizer {name!r}")


def td_targets(target: TargetNetwork | QNetwork, batch: Batch, gamma: float) -> np.ndarray:
    q_next = target.forward(batch.next_states)
    if batch.next_masks is not None:
        q_next = np.where(batch.next_masks, q_next, -np.inf)
    best = q_next.max(axis=1)
    best = np.where(np.isfinite(best), best, 0.0)  # no legal successor behaves as terminal
    return batch.rewards + np.where(batch.terminals, 0.0, gamma * best)


def loss_and_grads(net: QNetwork, target: TargetNetwork | QNetwork, batch, gamma: float):
    """Mean squared TD error and its gradient w.r.t. the online parameters."""
    b = as_batch(batch)
    y = td_targets(target, b, gamma)
    q, cache = net.forward_cache(b.states)
    rows = np.arange(len(b.actions))
    err = q[rows, b.actions] - y
    loss = float(np.mean(err ** 2))
    dq = np.zeros_like(q)
    dq[rows, b.actions] = 2.0 * err / len(err)
    return loss, net.backward(cache, dq)


def train_step(net: QNetwork, target: TargetNetwork, batch, lr: float, gamma: float,
               optimizer=None) -> float:
    """One gradient step on the TD loss; returns the loss before the update."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0, 1]")
    loss, grads = loss_and_grads(net, target, batch, gamma)
    if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise NonFiniteLoss(f"loss {loss}")
    (optimizer or SGD()).update(net.params, grads, lr)
    return loss


# -- policy bundle ------------------------------------------------------------

@dataclass
class RLConfig:
    hidden: tuple = (64, 64)
    k_max: int = 5
    learning_rate: float = 0.0001
    discount: float = 0.95
    batch_size: int = 32
    buffer_capacity: int = 10_000
    learning_starts: int = 32
    updates_per_step: int = 1
    sync_every: int = 200
    optimizer: str = "sgd"
    epsilon_start: float = 0.99
    epsilon_decay: float = 0.995
    epsilon_floor: float = 0.05
    zero_output_init: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        checks = [
            (len(self.hidden) >= 1 and min(self.hidden) >= 1, "hidden"),
            (self.k_max >= 1, "k_max"),
            (self.learning_rate > 0, "learning_rate"),
            (0 <= self.discount <= 1, "discount"),
            (self.batch_size >= 1, "batch_size"),
            (self.buffer_capacity >= self.batch_size, "buffer_capacity"),
            (self.learning_starts >= 0, "learning_starts"),
            (self.updates_per_step >= 1, "updates_per_step"),
            (self.sync_every >= 1, "sync_every"),
            (self.optimizer in ("sgd", "adam"), "optimizer"),
            (0 <= self.epsilon_floor <= self.epsilon_start <= 1, "epsilon_start"),
            (0 < self.epsilon_decay <= 1, "epsilon_decay"),
        ]
        for ok, name in checks:
            if not ok:
                raise InvalidConfig(f"invalid {name}", field=f"rl.{name}")

    def schedule(self) -> ExplorationSchedule:
        return ExplorationSchedule(self.epsilon_start, self.epsilon_decay, self.epsilon_floor)


class Policy:
    """Network, target, replay buffer, optimiser state and RNG for one driver group."""

    def __init__(self, cfg: RLConfig, seed: int):
        self.cfg = cfg
        n_actions = action_head_size(cfg.k_max)
        self.net = QNetwork((STATE_DIM, *cfg.hidden, n_actions), seed=seed, zero_output=cfg.zero_output_init)
        self.target = TargetNetwork(self.net)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, STATE_DIM, n_actions)
        self.optimizer = make_optimizer(cfg.optimizer)
        self.rng = np.random.default_rng(seed + 1)
        self.train_steps = 0
        self.last_loss = float("nan")

    def act(self, state_vec: np.ndarray, mask: np.ndarray, epsilon: float) -> int:
        return select_action(self.net.forward(state_vec[None, :])[0], mask, epsilon, self.rng)

    def greedy(self, state_vec: np.ndarray, mask: np.ndarray) -> int:
        legal = np.flatnonzero(mask)
        if legal.size == 0:
            raise NoLegalAction("every action is masked")
        q = self.net.forward(state_vec[None, :])[0]
        return int(legal[np.argmax(q[legal])])

    def learn(self, e: Experience) -> float | None:
        self.buffer.push(e)
        if len(self.buffer) < max(self.cfg.batch_size, self.cfg.learning_starts):
            return None
        for _ in range(self.cfg.updates_per_step):
            batch = self.buffer.sample_batch(self.cfg.batch_size, self.rng)
            loss = train_step(self.net, self.target, batch, self.cfg.learning_rate, self.cfg.discount, self.optimizer)
            self.train_steps += 1
            self.last_loss = loss
            if self.train_steps % self.cfg.sync_every == 0:
                sync_target(self.net, self.target)
        return loss

    # -- persistence ------------------------------------------------------
    def state_arrays(self, prefix: str, include_buffer: bool = True) -> tuple[dict, dict]:
        arrays = {}
        for i, p in enumerate(self.net.params):
            arrays[f"{prefix}theta{i}"] = p
        for i, p in enumerate(self.target.params):
            arrays[f"{prefix}target{i}"] = p
        for k, v in self.optimizer.state_dict().items():
            if isinstance(v, np.ndarray):
                arrays[f"{prefix}opt_{k}"] = v
        buf = self.buffer.state_dict(include_buffer)
        for k, v in buf.items():
            if isinstance(v, np.ndarray):
                arrays[f"{prefix}buf_{k}"] = v
        meta = {
            "sizes": list(self.net.sizes),
            "seed": self.net.seed,
            "train_steps": self.train_steps,
            "sync_counter": self.target.sync_counter,
            "optimizer": self.optimizer.name,
            "optimizer_t": self.optimizer.state_dict().get("t", 0),
            "buffer": {k: v for k, v in buf.items() if not isinstance(v, np.ndarray)},
            "buffer_included": include_buffer,
            "rng": self.rng.bit_generator.state,
        }
        return arrays, meta

    def load_arrays(self, prefix: str, arrays, meta: dict) -> None:
        if tuple(meta["sizes"]) != self.net.sizes:
            raise ArchitectureMismatch(f"checkpoint sizes {meta['sizes']} vs {self.net.sizes}")
        n = len(self.net.params)
        self.net.set_params([arrays[f"{prefix}theta{i}"] for i in range(n)])
        self.target.net.set_params([arrays[f"{prefix}target{i}"] for i in range(n)])
        self.target.sync_counter = int(meta["sync_counter"])
        self.train_steps = int(meta["train_steps"])
        opt = {"t": meta.get("optimizer_t", 0)}
        for k in arrays.files if hasattr(arrays, "files") else arrays:
            if k.startswith(f"{prefix}opt_"):
                opt[k[len(prefix) + 4:]] = arrays[k]
        self.optimizer.load_state_dict(opt)
        buf = dict(meta["buffer"])
        if meta.get("buffer_included"):
            for k in ("states", "actions", "rewards", "next_states", "terminals", "next_masks"):
                buf[k] = arrays[f"{prefix}buf_{k}"]
        self.buffer = ReplayBuffer.from_state_dict(buf)
        self.rng = np.random.default_rng()
        self.rng.bit_generator.state = meta["rng"]


def save_checkpoint(path, policies: dict, extra: dict, include_buffer: bool = True) -> None:
    """Write every policy plus campaign metadata into one ``.npz`` file."""
    from .io import atomic_write_bytes

    arrays, metas = {}, {}
    for i, (key, pol) in enumerate(sorted(policies.items())):
        a, m = pol.state_arrays(f"p{i}_", include_buffer)
        arrays.update(a)
        metas[f"p{i}_"] = {"key": list(key) if isinstance(key, tuple) else key, **m,
                           "rl_config": asdict(pol.cfg)}
    header = {"version": CHECKPOINT_VERSION, "policies": metas, "extra": extra}
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    bio = io.BytesIO()
    np.savez_compressed(bio, **arrays)
    atomic_write_bytes(path, bio.getvalue())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(policies, extra)`` from a file written by ``save_checkpoint``."""
    try:
        data = np.load(path, allow_pickle=False)
        header = json.loads(bytes(data["__header__"]).decode())
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    policies = {}
    for prefix, meta in header["policies"].items():
        cfg_d = dict(meta["rl_config"])
        cfg_d["hidden"] = tuple(cfg_d["hidden"])
        pol = Policy(RLConfig(**cfg_d), int(meta["seed"]))
        pol.load_arrays(prefix, data, meta)
        key = tuple(meta["key"]) if isinstance(meta["key"], list) else meta["key"]
        policies[key] = pol
    return policies, header["extra"]
