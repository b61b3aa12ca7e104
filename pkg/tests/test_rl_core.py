import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evsim.errors import (
    ArchitectureMismatch,
    BufferTooSmall,
    DimensionMismatch,
    InvalidConfig,
    NoLegalAction,
    NonFiniteLoss,
)
from evsim.rl_core import (
    Batch,
    ExplorationSchedule,
    Experience,
    Policy,
    QNetwork,
    ReplayBuffer,
    RLConfig,
    TargetNetwork,
    action_head_size,
    epsilon_at,
    load_checkpoint,
    loss_and_grads,
    q_forward,
    save_checkpoint,
    select_action,
    sync_target,
    train_step,
)

from oracles import CHAIN_GAMMA, CHAIN_STATES, chain_step, finite_difference_error, train_chain, value_iteration


def one_hot(i, n=5):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def exp(i, a=0, r=0.0, terminal=False):
    return Experience(np.full(5, float(i)), a, r, np.full(5, float(i) + 0.5), terminal)


# -- network ------------------------------------------------------------------

def test_head_size():
    assert action_head_size(5) == 51
    assert QNetwork().n_actions == 51


def test_zero_network_outputs_zero():
    net = QNetwork((5, 8, 3), seed=0)
    net.set_params([np.zeros_like(p) for p in net.params])
    assert np.all(net.forward(np.ones((2, 5))) == 0.0)


def test_hand_set_one_hidden_unit():
    net = QNetwork((2, 1, 2), seed=0)
    net.set_params([np.array([[0.5], [-1.0]]), np.array([0.25]), np.array([[2.0, -3.0]]), np.array([0.1, 0.2])])
    x = np.array([3.0, 0.5])
    h = max(0.0, 0.5 * 3.0 - 1.0 * 0.5 + 0.25)
    expected = np.array([2.0 * h + 0.1, -3.0 * h + 0.2])
    assert np.max(np.abs(q_forward(net, x) - expected)) < 1e-12


def test_untrained_policy_prefers_lowest_index():
    net = QNetwork(seed=3)
    q = q_forward(net, np.array([0.3, 2.0, 100.0, 0.5, 1.0]))
    assert q.shape == (51,) and np.all(q == 0.0)


def test_state_dimension_checked():
    with pytest.raises(DimensionMismatch):
        q_forward(QNetwork(), np.zeros(4))


def test_sync_copies_and_checks_shape():
    net = QNetwork((5, 4, 3), seed=1, zero_output=False)
    tgt = TargetNetwork(net)
    net.weights[0] += 1.0
    assert not np.allclose(tgt.params[0], net.params[0])
    sync_target(net, tgt)
    assert all(np.array_equal(a, b) for a, b in zip(tgt.params, net.params))
    with pytest.raises(ArchitectureMismatch):
        sync_target(QNetwork((5, 3, 3)), tgt)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5), st.integers(0, 100))
def test_forward_is_finite(state, seed):
    q = q_forward(QNetwork(seed=seed, zero_output=False), np.array(state))
    assert q.shape == (51,) and np.all(np.isfinite(q))


# -- action selection ---------------------------------------------------------

def test_greedy_picks_legal_argmax():
    q = np.array([5.0, 1.0, 3.0, 2.0])
    mask = np.array([False, True, True, False])
    assert select_action(q, mask, 0.0, np.random.default_rng(0)) == 2


def test_uniform_exploration():
    rng = np.random.default_rng(0)
    mask = np.array([True, False, True, True, False])
    counts = np.zeros(5, dtype=int)
    for _ in range(30_000):
        counts[select_action(np.zeros(5), mask, 1.0, rng)] += 1
    assert counts[1] == counts[4] == 0
    for i in (0, 2, 3):
        assert abs(counts[i] - 10_000) <= 500


def test_all_masked():
    with pytest.raises(NoLegalAction):
        select_action(np.zeros(3), np.zeros(3, dtype=bool), 0.5, np.random.default_rng(0))


# -- replay -------------------------------------------------------------------

def test_fifo_eviction():
    buf = ReplayBuffer(2, 5, 3)
    for i in (1, 2, 3):
        buf.push(exp(i))
    assert [e.state[0] for e in buf.contents()] == [2.0, 3.0]


def test_full_sample_is_permutation():
    buf = ReplayBuffer(10, 5, 3)
    for i in range(7):
        buf.push(exp(i))
    got = sorted(e.state[0] for e in buf.sample_minibatch(7, np.random.default_rng(1)))
    assert got == list(map(float, range(7)))
    with pytest.raises(BufferTooSmall):
        buf.sample_batch(8, np.random.default_rng(0))


def test_uniform_inclusion_frequency():
    buf = ReplayBuffer(100, 5, 3)
    for i in range(100):
        buf.push(exp(i))
    rng = np.random.default_rng(2)
    counts = np.zeros(100)
    for _ in range(10_000):
        counts[buf.sample_indices(10, rng)] += 1
    assert np.all(np.abs(counts - 1000) <= 100)


def test_push_rejects_bad_entries():
    buf = ReplayBuffer(4, 5, 3)
    with pytest.raises(DimensionMismatch):
        buf.push(exp(0, a=3))
    with pytest.raises(NonFiniteLoss):
        buf.push(exp(0, r=float("nan")))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 60))
def test_buffer_keeps_latest(capacity, pushes):
    buf = ReplayBuffer(capacity, 5, 3)
    for i in range(pushes):
        buf.push(exp(i))
    kept = [int(e.state[0]) for e in buf.contents()]
    assert kept == list(range(max(0, pushes - capacity), pushes))


# -- exploration ----------------------------------------------------------------

def test_epsilon_schedule():
    s = ExplorationSchedule(0.99, 0.995, 0.05)
    assert epsilon_at(s, 0) == 0.99
    assert epsilon_at(s, 100) == pytest.approx(0.99 * 0.995 ** 100)
    # 0.99 * 0.995**100 = 0.59971...; the commonly quoted 0.6005 is a rounding slip
    assert epsilon_at(s, 100) == pytest.approx(0.59971, abs=1e-5)
    assert epsilon_at(s, 10_000) == 0.05


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2000))
def test_epsilon_non_increasing(e):
    s = ExplorationSchedule()
    assert s.epsilon_floor <= epsilon_at(s, e + 1) <= epsilon_at(s, e) <= s.epsilon_start


# -- loss and gradients -------------------------------------------------------

def test_terminal_loss_hand_case():
    net = QNetwork((5, 4, 2), seed=0)  # zero output layer => Q(s, a) = 0
    batch = [Experience(np.ones(5), 1, 2.0, np.ones(5), True)]
    loss, _ = loss_and_grads(net, TargetNetwork(net), batch, 0.95)
    assert loss == pytest.approx(4.0)


def test_fixed_point_has_no_update():
    net = QNetwork((5, 4, 2), seed=0)
    tgt = TargetNetwork(net)
    before = [p.copy() for p in net.params]
    batch = [Experience(np.ones(5), 0, 0.0, np.ones(5), False)]
    assert train_step(net, tgt, batch, 0.1, 0.9) == 0.0
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params))


def test_masked_successor_ignored():
    net = QNetwork((5, 4, 3), seed=0)
    net.biases[-1][:] = [1.0, 50.0, 2.0]
    mask = np.array([True, False, True])
    b = Batch(np.zeros((1, 5)), np.array([0]), np.array([0.0]), np.zeros((1, 5)), np.array([False]), mask[None])
    loss, _ = loss_and_grads(net, TargetNetwork(net), b, 1.0)
    assert loss == pytest.approx((1.0 - 2.0) ** 2)


def test_gradients_match_finite_differences():
    worst = [w for w in (finite_difference_error(s) for s in range(100)) if w is not None]
    assert len(worst) >= 90
    assert max(worst) < 1e-4


# -- end-to-end learning ----------------------------------------------------------

def test_dqn_matches_value_iteration():
    t0 = time.perf_counter()
    q = train_chain()
    ref = value_iteration(chain_step, CHAIN_STATES, 2, CHAIN_GAMMA)
    assert np.max(np.abs(q - ref)) < 0.05
    assert time.perf_counter() - t0 < 60


# -- policy and checkpoints ----------------------------------------------------------

def test_config_validation_names_field():
    with pytest.raises(InvalidConfig) as err:
        RLConfig(learning_rate=0.0)
    assert err.value.field == "rl.learning_rate"
    with pytest.raises(InvalidConfig):
        RLConfig(optimizer="rmsprop")


def test_policy_warm_up():
    pol = Policy(RLConfig(batch_size=4, learning_starts=10), seed=0)
    mask = np.ones(51, dtype=bool)
    losses = [pol.learn(Experience(np.ones(5) * i, 0, 1.0, np.ones(5), False, mask)) for i in range(12)]
    assert losses[:9] == [None] * 9
    assert all(l is not None for l in losses[9:])
    assert pol.train_steps == 3


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
def test_checkpoint_round_trip(tmp_path, optimizer):
    cfg = RLConfig(batch_size=4, learning_starts=4, optimizer=optimizer, learning_rate=1e-2)
    pol = Policy(cfg, seed=5)
    rng = np.random.default_rng(0)
    mask = np.ones(51, dtype=bool)
    for _ in range(20):
        pol.learn(Experience(rng.normal(size=5), int(rng.integers(51)), float(rng.normal()), rng.normal(size=5), False, mask))
    save_checkpoint(tmp_path / "c.npz", {"2-work": pol}, {"next_episode": 3})
    loaded, extra = load_checkpoint(tmp_path / "c.npz")
    assert extra == {"next_episode": 3}
    twin = loaded["2-work"]
    assert all(np.array_equal(a, b) for a, b in zip(pol.net.params, twin.net.params))
    assert len(twin.buffer) == len(pol.buffer)
    # both continue identically
    e = Experience(np.ones(5), 3, 1.0, np.ones(5), True, mask)
    assert pol.learn(e) == twin.learn(e)
    assert all(np.array_equal(a, b) for a, b in zip(pol.net.params, twin.net.params))
