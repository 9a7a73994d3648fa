"""Compiled inner loops shared by the public energy/env/learning API.

Hardware parameters travel as a flat float64 vector (see ``HW_*`` indices)
so the same functions serve scalar Python calls and the training kernels.
"""

import math

import numpy as np
from numba import njit

HW_C, HW_VMAX, HW_VMIN, HW_VRESTART, HW_R, HW_SLEEP, HW_EVENT, HW_ETA, HW_VINIT = range(9)

# Sampling period in seconds for performance states 0..3.
PERIODS = np.array([900.0, 300.0, 60.0, 15.0])
DEPLETION_PENALTY = -300.0
LUX_PER_LEVEL = 200.0
N_LEVELS = 11
N_ACTIONS = 4
START_RESET, START_CARRY, START_RANDOM = 0, 1, 2
# Guards floor() against representation error, e.g. (3.8 - 2.1) / 3.4 * 10.
_FLOOR_EPS = 1e-9


@njit(cache=True)
def light_level(lux):
    level = int(math.floor(lux / LUX_PER_LEVEL + _FLOOR_EPS))
    return min(max(level, 0), N_LEVELS - 1)


@njit(cache=True)
def storage_level(v, vmin, vmax):
    level = int(math.floor((v - vmin) / (vmax - vmin) * 10.0 + _FLOOR_EPS))
    return min(max(level, 0), N_LEVELS - 1)


@njit(cache=True)
def load_energy(period, dt, v, alive, hw):
    divider = v * v / hw[HW_R] * dt
    if not alive:
        return divider
    return (dt / period) * hw[HW_EVENT] + hw[HW_SLEEP] * dt + divider


@njit(cache=True)
def advance(v, alive, lux, period, dt, hw):
    """One constant-power interval of length ``dt``.

    Returns (v', alive', depleted, completed_events).
    """
    c = hw[HW_C]
    vmin = hw[HW_VMIN]
    e0 = 0.5 * c * v * v
    e_min = 0.5 * c * vmin * vmin
    harvest = hw[HW_ETA] * lux * dt
    load = load_energy(period, dt, v, alive, hw)
    e1 = e0 + harvest - load
    events = dt / period if alive else 0.0

    depleted = False
    if alive and e1 <= e_min and load > harvest:
        depleted = True
        t_cross = max(e0 - e_min, 0.0) / ((load - harvest) / dt)
        events = min(math.floor(t_cross / period + _FLOOR_EPS), events)

    v1 = math.sqrt(2.0 * max(e1, 0.0) / c)
    v1 = min(max(v1, vmin), hw[HW_VMAX])
    if depleted:
        alive1 = False
    elif alive:
        alive1 = True
    else:
        alive1 = v1 >= hw[HW_VRESTART]
    return v1, alive1, depleted, events


@njit(cache=True)
def slot_transition(v, alive, lux, action, dt, hw):
    """Advance one decision slot; returns (v', alive', reward, depleted, samples)."""
    if not alive:
        v1, alive1, _, _ = advance(v, False, lux, PERIODS[0], dt, hw)
        return v1, alive1, 0.0, False, 0
    v1, alive1, depleted, events = advance(v, True, lux, PERIODS[action], dt, hw)
    reward = DEPLETION_PENALTY if depleted else float(action)
    return v1, alive1, reward, depleted, int(events)


@njit(cache=True)
def _greedy(q, li, si, wi):
    row = q[li, si, wi]
    best = row[0]
    for a in range(1, row.shape[0]):
        if row[a] > best:
            best = row[a]
    n_ties = 0
    for a in range(row.shape[0]):
        if row[a] == best:
            n_ties += 1
    pick = 0 if n_ties == 1 else np.random.randint(n_ties)
    for a in range(row.shape[0]):
        if row[a] == best:
            if pick == 0:
                return a
            pick -= 1
    return 0


@njit(cache=True)
def train_kernel(q, visited, ep_lux, ep_weekend, ep_len, ep_track, hw, dt,
                 gamma, eps_max, eps_min, eps_dec, alpha,
                 window, tol, max_episodes, seed, means, start_mode):
    """Replay day-episodes round-robin with epsilon-greedy Q-learning.

    ``ep_lux``/``ep_weekend`` have one extra trailing column holding the
    observation that follows the last slot. With ``START_CARRY`` each
    track (source trace) keeps its node state from one of its episodes to
    the next. ``means`` receives the mean of the whole table (absent
    entries count as 0) after each episode. Returns the episode count.
    """
    np.random.seed(seed)
    vmin = hw[HW_VMIN]
    vmax = hw[HW_VMAX]
    n_ep = ep_lux.shape[0]
    n_tracks = 0
    for e in range(n_ep):
        n_tracks = max(n_tracks, ep_track[e] + 1)
    track_v = np.full(n_tracks, hw[HW_VINIT])
    track_alive = np.ones(n_tracks, dtype=np.bool_)
    # epsilon follows eps_max - n * eps_dec from the step count n, which
    # lands exactly on eps_min instead of drifting by repeated subtraction
    n_dec = 0
    eps = eps_max
    for k in range(max_episodes):
        e = k % n_ep
        if start_mode == START_CARRY:
            v = track_v[ep_track[e]]
            alive = track_alive[ep_track[e]]
        elif start_mode == START_RANDOM:
            v = vmin + (vmax - vmin) * np.random.random()
            alive = True
        else:
            v = hw[HW_VINIT]
            alive = True
        for t in range(ep_len[e]):
            lux = ep_lux[e, t]
            if not alive:
                v, alive, _, _ = advance(v, False, lux, PERIODS[0], dt, hw)
                continue
            li = light_level(lux)
            si = storage_level(v, vmin, vmax)
            wi = 1 if ep_weekend[e, t] else 0
            if np.random.random() < eps:
                a = np.random.randint(N_ACTIONS)
            else:
                a = _greedy(q, li, si, wi)
            v, alive, r, _, _ = slot_transition(v, alive, lux, a, dt, hw)
            lj = light_level(ep_lux[e, t + 1])
            sj = storage_level(v, vmin, vmax)
            wj = 1 if ep_weekend[e, t + 1] else 0
            nxt = q[lj, sj, wj]
            best = nxt[0]
            for b in range(1, N_ACTIONS):
                if nxt[b] > best:
                    best = nxt[b]
            predict = q[li, si, wi, a]
            q[li, si, wi, a] = predict + alpha * (r + gamma * best - predict)
            visited[li, si, wi, a] = True
            n_dec += 1
            eps = max(eps_max - n_dec * eps_dec, eps_min)
        track_v[ep_track[e]] = v
        track_alive[ep_track[e]] = alive
        means[k] = q.mean()
        if k + 1 >= window:
            lo = means[k]
            hi = means[k]
            for j in range(k + 1 - window, k + 1):
                lo = min(lo, means[j])
                hi = max(hi, means[j])
            if hi - lo <= tol * max(abs(means[k]), 1e-12):
                return k + 1
    return max_episodes


@njit(cache=True)
def run_kernel(q, lux, weekend, v, alive, hw, dt, fixed_action, seed,
               rewards, depleted, samples, actions, volts):
    """Execute a policy over consecutive slots without learning.

    A ``fixed_action`` >= 0 overrides the table. ``actions`` is -1 for slots
    where the node was dead. Returns the final (v, alive).
    """
    np.random.seed(seed)
    vmin = hw[HW_VMIN]
    vmax = hw[HW_VMAX]
    for t in range(rewards.shape[0]):
        volts[t] = v
        if not alive:
            v, alive, _, _ = advance(v, False, lux[t], PERIODS[0], dt, hw)
            rewards[t] = 0.0
            depleted[t] = False
            samples[t] = 0
            actions[t] = -1
            continue
        if fixed_action >= 0:
            a = fixed_action
        else:
            a = _greedy(q, light_level(lux[t]), storage_level(v, vmin, vmax),
                        1 if weekend[t] else 0)
        v, alive, r, dep, n = slot_transition(v, alive, lux[t], a, dt, hw)
        rewards[t] = r
        depleted[t] = dep
        samples[t] = n
        actions[t] = a
    return v, alive


@njit(cache=True)
def explicit_q_kernel(cum_p, rewards, q, gamma, alpha, epsilon, steps, state, seed):
    """Q-learning on an explicit MDP given cumulative transition rows.

    Behaviour is epsilon-greedy with uniform tie-breaking; the update is the
    same one-step rule used for traces. Returns the final state.
    """
    np.random.seed(seed)
    n_actions = q.shape[1]
    for _ in range(steps):
        if np.random.random() < epsilon:
            a = np.random.randint(n_actions)
        else:
            best = q[state, 0]
            count = 1
            a = 0
            for b in range(1, n_actions):
                if q[state, b] > best:
                    best = q[state, b]
                    a = b
                    count = 1
                elif q[state, b] == best:
                    count += 1
                    if np.random.randint(count) == 0:
                        a = b
        u = np.random.random()
        nxt = 0
        while nxt < cum_p.shape[2] - 1 and u >= cum_p[state, a, nxt]:
            nxt += 1
        best = q[nxt, 0]
        for b in range(1, n_actions):
            best = max(best, q[nxt, b])
        q[state, a] += alpha * (rewards[state, a] + gamma * best - q[state, a])
        state = nxt
    return state
