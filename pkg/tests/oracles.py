"""Independent reference implementations used as test oracles."""

import numpy as np

# Five-state chain, actions 0 = left, 1 = right. Moving right out of state 3
# reaches the goal (reward 1, episode ends); moving left out of state 0 takes a
# small consolation exit (reward 0.2, episode ends). Every other step costs 0.05.
CHAIN_STATES = 5
CHAIN_GAMMA = 0.9


def chain_step(s: int, a: int):
    """(next_state, reward, terminal) of the deterministic chain."""
    if a == 1:
        if s == 3:
            return 4, 1.0, True
        if s == 4:
            return 4, 0.0, True
        return s + 1, -0.05, False
    if s == 0:
        return 0, 0.2, True
    if s == 4:
        return 4, 0.0, True
    return s - 1, -0.05, False


def value_iteration(step, n_states: int, n_actions: int, gamma: float, tol: float = 1e-12):
    """Q* by repeated Bellman backups with plain Python loops."""
    q = [[0.0] * n_actions for _ in range(n_states)]
    while True:
        delta = 0.0
        new = [[0.0] * n_actions for _ in range(n_states)]
        for s in range(n_states):
            for a in range(n_actions):
                s2, r, done = step(s, a)
                new[s][a] = r if done else r + gamma * max(q[s2])
                delta = max(delta, abs(new[s][a] - q[s][a]))
        q = new
        if delta < tol:
            return np.array(q)


def reward_reference(soc, threshold, charged, timing, chance, status_battery, payment,
                     t_travel, t_charge, n_charges, m, status,
                     eps=1.0, alpha=1.0, beta=1.0, gamma_r=1.0, rho=1.0, floor=0.0):
    """Scalar evaluation of the reward with natural logarithms."""
    import math

    d_soc = soc - threshold
    if charged:
        d_charge = max(floor, eps * math.log(timing * chance * status_battery + 1.0))
    else:
        d_charge = 1.0
    ind = 1.0 if charged else 0.0
    base = alpha * math.log(1.0 + payment * ind) + beta * math.log(1.0 + t_travel + t_charge * ind) + 1.0
    d_cost = base ** (n_charges / m)
    return gamma_r * d_soc / (d_charge * d_cost) + rho * status


# -- routing ---------------------------------------------------------------------

def all_simple_paths_best(adj: dict, source):
    """Depth-first enumeration of every simple path from ``source``.

    Returns {dest: (length, node tuple)} keeping the shortest path, with the
    lexicographically smallest node sequence among equal lengths.
    """
    best = {source: (0.0, (source,))}
    stack = [(source, 0.0, (source,))]
    while stack:
        node, length, seq = stack.pop()
        for nxt, w in adj[node]:
            if nxt in seq:
                continue
            cand = (length + w, seq + (nxt,))
            cur = best.get(nxt)
            if cur is None or cand[0] < cur[0] - 1e-9 or (abs(cand[0] - cur[0]) <= 1e-9 and cand[1] < cur[1]):
                best[nxt] = cand
            stack.append((nxt, cand[0], cand[1]))
    return best


# -- geometry ----------------------------------------------------------------------

def _pt_seg(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0:
        return ((px - ax) ** 2 + (py - ay) ** 2) ** 0.5
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = 0.0 if t < 0 else (1.0 if t > 1 else t)
    qx, qy = ax + t * dx, ay + t * dy
    return ((px - qx) ** 2 + (py - qy) ** 2) ** 0.5


def point_route_km(p, pts):
    if len(pts) == 1:
        return ((p[0] - pts[0][0]) ** 2 + (p[1] - pts[0][1]) ** 2) ** 0.5
    return min(_pt_seg(p[0], p[1], *a, *b) for a, b in zip(pts, pts[1:]))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _proper_intersect(a, b, c, d):
    d1, d2, d3, d4 = _cross(c, d, a), _cross(c, d, b), _cross(a, b, c), _cross(a, b, d)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4)


def route_route_km(p, q):
    """Minimum distance between two polylines given as point lists."""
    if len(p) == 1:
        return point_route_km(p[0], q)
    if len(q) == 1:
        return point_route_km(q[0], p)
    best = float("inf")
    for a, b in zip(p, p[1:]):
        for c, d in zip(q, q[1:]):
            if _proper_intersect(a, b, c, d):
                return 0.0
            best = min(best, _pt_seg(*a, *c, *d), _pt_seg(*b, *c, *d), _pt_seg(*c, *a, *b), _pt_seg(*d, *a, *b))
    return best


def cd_brute(route_pts, length_mi, charger_pts, buffer_m=500.0):
    n = sum(1 for c in charger_pts if point_route_km(c, route_pts) * 1000.0 <= buffer_m)
    return n / length_mi


def tcd_brute(route_pts, length_mi, window, others, buffer_m=500.0):
    n = 0
    for pts, (s, e) in others:
        if s <= window[1] and window[0] <= e and route_route_km(route_pts, pts) * 1000.0 <= buffer_m:
            n += 1
    return n / length_mi


# -- natural breaks ---------------------------------------------------------------------

def jenks_brute_cost(values, classes):
    """Minimum within-class sum of squares over every split of the sorted values."""
    import itertools

    x = sorted(values)
    n = len(x)
    best = float("inf")
    for cuts in itertools.combinations(range(1, n), classes - 1):
        bounds = (0, *cuts, n)
        cost = 0.0
        for a, b in zip(bounds, bounds[1:]):
            part = x[a:b]
            m = sum(part) / len(part)
            cost += sum((v - m) ** 2 for v in part)
        best = min(best, cost)
    return best


# -- learning --------------------------------------------------------------------------

def train_chain(steps=20_000, seed=0):
    """DQN on the chain with every transition stored; returns the learned Q table."""
    from evsim.rl_core import Adam, Experience, QNetwork, ReplayBuffer, TargetNetwork, sync_target, train_step

    eye = np.eye(CHAIN_STATES)
    rng = np.random.default_rng(seed)
    net = QNetwork((CHAIN_STATES, 32, 2), seed=seed)
    tgt = TargetNetwork(net)
    opt = Adam()
    buf = ReplayBuffer(1000, CHAIN_STATES, 2)
    for s in range(CHAIN_STATES):
        for a in range(2):
            s2, r, done = chain_step(s, a)
            buf.push(Experience(eye[s], a, r, eye[s2], done))
    for step in range(1, steps + 1):
        train_step(net, tgt, buf.sample_batch(8, rng), 1e-3, CHAIN_GAMMA, opt)
        if step % 100 == 0:
            sync_target(net, tgt)
    return net.forward(eye)


def finite_difference_error(seed, h=1e-5):
    """Worst per-parameter relative error of the analytic TD-loss gradient on a
    one-hidden-unit network; ``None`` when a pre-activation sits on the ReLU kink."""
    from evsim.rl_core import Batch, QNetwork, TargetNetwork, loss_and_grads

    rng = np.random.default_rng(seed)
    net = QNetwork((5, 1, 3), seed=seed, zero_output=False)
    net.set_params([rng.normal(size=p.shape) for p in net.params])
    tgt = TargetNetwork(QNetwork((5, 1, 3), seed=seed + 1, zero_output=False))
    states = rng.normal(size=(4, 5))
    if np.min(np.abs(states @ net.weights[0] + net.biases[0])) < 1e-3:
        return None
    batch = Batch(states, rng.integers(0, 3, size=4), rng.normal(size=4), rng.normal(size=(4, 5)),
                  rng.random(4) < 0.3, None)
    _, grads = loss_and_grads(net, tgt, batch, 0.9)
    worst = 0.0
    for p, g in zip(net.params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = loss_and_grads(net, tgt, batch, 0.9)
            p[idx] = old - h
            down, _ = loss_and_grads(net, tgt, batch, 0.9)
            p[idx] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num) + abs(g[idx]), 1e-7))
    return worst
