"""Compiled inner loops: random stream, reset, step, observation, policy, episode.

All state lives in flat numpy arrays so one episode runs entirely inside
numba. The public wrappers in ``engine`` and ``policy`` call these same
functions, so there is a single implementation of the game rules.
"""

import numpy as np
from numba import njit

# actions
NOOP, MOVE_N, MOVE_E, MOVE_S, MOVE_W, TURN_LEFT, TURN_RIGHT, FIRE = range(8)
N_ACTIONS = 8
# observation cell codes; resource of type t is RESOURCE + t
OBS_FLOOR, OBS_WALL, OBS_SELF, OBS_OTHER, OBS_RESOURCE = 0, 1, 2, 3, 4
# terrain codes (see scenario.py)
T_WALL = 1
# agent record columns
A_Y, A_X, A_FACING, A_COUNTDOWN, A_COOLDOWN = range(5)
# rules vector
R_RADIUS, R_RESPAWN, R_REGEN, R_BEAM_RANGE, R_BEAM_COOLDOWN = range(5)
# events vector
E_COLLECT0, E_COLLECT1, E_INTERACTION, E_FIRED, E_HIT, E_RESPAWNED = range(6)
N_EVENTS = 6
INTERACTION_NONE, INTERACTION_PAYOFF, INTERACTION_INERT = 0, 1, 2

DY = np.array([-1, 0, 1, 0], dtype=np.int64)
DX = np.array([0, 1, 0, -1], dtype=np.int64)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def next_u64(rng):
    # splitmix64
    rng[0] += _GOLDEN
    z = rng[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def next_float(rng):
    return np.float64(next_u64(rng) >> _S11) * _INV53


@njit(cache=True)
def next_int(rng, n):
    v = np.int64(next_float(rng) * n)
    return v if v < n else n - 1


@njit(cache=True)
def reset_kernel(terrain, res_pos, res_opts, res_nopt, spawns, res_type, res_present, regen, agents, inv, acc, rng):
    res_type[:, :] = -1
    res_present[:, :] = 0
    regen[:, :] = 0
    for i in range(res_pos.shape[0]):
        t = res_opts[i, next_int(rng, res_nopt[i])]
        res_type[res_pos[i, 0], res_pos[i, 1]] = t
        res_present[res_pos[i, 0], res_pos[i, 1]] = 1
    n = spawns.shape[0]
    s0 = next_int(rng, n)
    s1 = next_int(rng, n - 1)
    if s1 >= s0:
        s1 += 1
    for i, s in ((0, s0), (1, s1)):
        agents[i, A_Y] = spawns[s, 0]
        agents[i, A_X] = spawns[s, 1]
        agents[i, A_FACING] = next_int(rng, 4)
        agents[i, A_COUNTDOWN] = 0
        agents[i, A_COOLDOWN] = 0
    inv[:, :] = 0
    acc[:] = 0.0


@njit(cache=True)
def _passable(terrain, y, x):
    return 0 <= y < terrain.shape[0] and 0 <= x < terrain.shape[1] and terrain[y, x] != T_WALL


@njit(cache=True)
def _beam_hits(terrain, agents, i, beam_range):
    j = 1 - i
    if agents[j, A_COUNTDOWN] > 0:
        return False
    f = agents[i, A_FACING]
    y = agents[i, A_Y]
    x = agents[i, A_X]
    for _ in range(beam_range):
        y += DY[f]
        x += DX[f]
        if not _passable(terrain, y, x):
            return False
        if y == agents[j, A_Y] and x == agents[j, A_X]:
            return True
    return False


@njit(cache=True)
def _interaction_payoff(inv, payoff, mode, rng, out):
    k = payoff.shape[0]
    t0 = 0
    t1 = 0
    for t in range(k):
        t0 += inv[0, t]
        t1 += inv[1, t]
    if t0 == 0 or t1 == 0:
        return False
    if mode == 0:
        r_row = 0.0
        r_col = 0.0
        for a in range(k):
            nu_a = inv[0, a] / t0
            for b in range(k):
                w = nu_a * (inv[1, b] / t1)
                r_row += w * payoff[a, b]
                r_col += w * payoff[b, a]
        out[0] = r_row
        out[1] = r_col
    else:
        u = next_float(rng) * t0
        a = 0
        c = np.float64(inv[0, 0])
        while u >= c and a < k - 1:
            a += 1
            c += inv[0, a]
        u = next_float(rng) * t1
        b = 0
        c = np.float64(inv[1, 0])
        while u >= c and b < k - 1:
            b += 1
            c += inv[1, b]
        out[0] = payoff[a, b]
        out[1] = payoff[b, a]
    return True


@njit(cache=True)
def step_kernel(
    terrain, res_pos, spawns, rules, payoff, mode,
    res_type, res_present, regen, agents, inv, acc, rng,
    tick, actions, rewards, events,
):
    rewards[:] = 0.0
    events[E_COLLECT0] = -1
    events[E_COLLECT1] = -1
    events[E_INTERACTION] = INTERACTION_NONE
    events[E_FIRED] = 0
    events[E_HIT] = 0
    events[E_RESPAWNED] = 0

    was_waiting = np.zeros(2, dtype=np.bool_)
    active = np.zeros(2, dtype=np.bool_)
    for i in range(2):
        was_waiting[i] = agents[i, A_COUNTDOWN] > 0
        active[i] = not was_waiting[i]
        if agents[i, A_COOLDOWN] > 0:
            agents[i, A_COOLDOWN] -= 1

    # regeneration first so a cell collected this step waits the full delay
    for r in range(res_pos.shape[0]):
        y = res_pos[r, 0]
        x = res_pos[r, 1]
        if regen[y, x] > 0:
            regen[y, x] -= 1
            if regen[y, x] == 0:
                occupied = False
                for i in range(2):
                    if active[i] and agents[i, A_Y] == y and agents[i, A_X] == x:
                        occupied = True
                if occupied:
                    regen[y, x] = 1
                else:
                    res_present[y, x] = 1

    # facing changes and intended moves
    ty = np.zeros(2, dtype=np.int64)
    tx = np.zeros(2, dtype=np.int64)
    for i in range(2):
        ty[i] = agents[i, A_Y]
        tx[i] = agents[i, A_X]
        if not active[i]:
            continue
        a = actions[i]
        if MOVE_N <= a <= MOVE_W:
            d = a - MOVE_N
            agents[i, A_FACING] = d
            ny = ty[i] + DY[d]
            nx = tx[i] + DX[d]
            if _passable(terrain, ny, nx):
                ty[i] = ny
                tx[i] = nx
        elif a == TURN_LEFT:
            agents[i, A_FACING] = (agents[i, A_FACING] + 3) % 4
        elif a == TURN_RIGHT:
            agents[i, A_FACING] = (agents[i, A_FACING] + 1) % 4

    if active[0] and active[1]:
        moving0 = ty[0] != agents[0, A_Y] or tx[0] != agents[0, A_X]
        moving1 = ty[1] != agents[1, A_Y] or tx[1] != agents[1, A_X]
        if ty[0] == ty[1] and tx[0] == tx[1]:
            if moving0 and moving1:
                loser = 1 - (tick % 2)
            elif moving0:
                loser = 0
            else:
                loser = 1
            ty[loser] = agents[loser, A_Y]
            tx[loser] = agents[loser, A_X]
        elif (
            ty[0] == agents[1, A_Y] and tx[0] == agents[1, A_X]
            and ty[1] == agents[0, A_Y] and tx[1] == agents[0, A_X]
        ):
            # swap through each other: both blocked
            for i in range(2):
                ty[i] = agents[i, A_Y]
                tx[i] = agents[i, A_X]

    for i in range(2):
        if not active[i]:
            continue
        moved = ty[i] != agents[i, A_Y] or tx[i] != agents[i, A_X]
        agents[i, A_Y] = ty[i]
        agents[i, A_X] = tx[i]
        if moved and res_present[ty[i], tx[i]] == 1:
            t = res_type[ty[i], tx[i]]
            inv[i, t] += 1
            res_present[ty[i], tx[i]] = 0
            regen[ty[i], tx[i]] = rules[R_REGEN]
            events[E_COLLECT0 + i] = t

    # beams, resolved on post-move positions
    hit = False
    for i in range(2):
        if active[i] and actions[i] == FIRE and agents[i, A_COOLDOWN] == 0:
            agents[i, A_COOLDOWN] = rules[R_BEAM_COOLDOWN]
            events[E_FIRED] |= 1 << i
            if _beam_hits(terrain, agents, i, rules[R_BEAM_RANGE]):
                events[E_HIT] |= 1 << i
                hit = True
    if hit:
        if _interaction_payoff(inv, payoff, mode, rng, rewards):
            events[E_INTERACTION] = INTERACTION_PAYOFF
            for i in range(2):
                acc[i] += rewards[i]
                agents[i, A_COUNTDOWN] = rules[R_RESPAWN]
        else:
            events[E_INTERACTION] = INTERACTION_INERT

    # re-entry of agents that were already waiting at the start of the step
    for i in range(2):
        if not was_waiting[i]:
            continue
        agents[i, A_COUNTDOWN] -= 1
        if agents[i, A_COUNTDOWN] > 0:
            continue
        j = 1 - i
        n = spawns.shape[0]
        free = np.zeros(n, dtype=np.int64)
        nfree = 0
        for s in range(n):
            if agents[j, A_COUNTDOWN] == 0 and spawns[s, 0] == agents[j, A_Y] and spawns[s, 1] == agents[j, A_X]:
                continue
            free[nfree] = s
            nfree += 1
        s = free[next_int(rng, nfree)]
        agents[i, A_Y] = spawns[s, 0]
        agents[i, A_X] = spawns[s, 1]
        agents[i, A_FACING] = next_int(rng, 4)
        agents[i, A_COOLDOWN] = 0
        inv[i, :] = 0
        events[E_RESPAWNED] |= 1 << i


@njit(cache=True)
def observe_kernel(terrain, res_type, res_present, agents, i, radius, window):
    if agents[i, A_COUNTDOWN] > 0:
        window[:, :] = OBS_WALL
        return
    j = 1 - i
    other = agents[j, A_COUNTDOWN] == 0
    cy = agents[i, A_Y]
    cx = agents[i, A_X]
    h = terrain.shape[0]
    w = terrain.shape[1]
    for dy in range(-radius, radius + 1):
        y = cy + dy
        for dx in range(-radius, radius + 1):
            x = cx + dx
            if y < 0 or y >= h or x < 0 or x >= w or terrain[y, x] == T_WALL:
                code = OBS_WALL
            elif dy == 0 and dx == 0:
                code = OBS_SELF
            elif other and y == agents[j, A_Y] and x == agents[j, A_X]:
                code = OBS_OTHER
            elif res_present[y, x] == 1:
                code = OBS_RESOURCE + res_type[y, x]
            else:
                code = OBS_FLOOR
            window[dy + radius, dx + radius] = code


@njit(cache=True)
def _in_line(window, c, f, oy, ox):
    y = c
    x = c
    n = window.shape[0]
    while True:
        y += DY[f]
        x += DX[f]
        if y < 0 or y >= n or x < 0 or x >= n or window[y, x] == OBS_WALL:
            return False
        if y == oy and x == ox:
            return True


@njit(cache=True)
def act_kernel(params, window, inv, facing, rng):
    """Heuristic policy; ``params`` = resource weights (k), zap, temperature, approach."""
    k = inv.shape[0]
    zap = params[k]
    temperature = params[k + 1]
    approach = params[k + 2]
    n = window.shape[0]
    c = n // 2

    oy = -1
    ox = -1
    nres = 0
    ry = np.empty(n * n, dtype=np.int64)
    rx = np.empty(n * n, dtype=np.int64)
    rw = np.empty(n * n, dtype=np.float64)
    for y in range(n):
        for x in range(n):
            code = window[y, x]
            if code == OBS_OTHER:
                oy = y
                ox = x
            elif code >= OBS_RESOURCE and code - OBS_RESOURCE < k:
                ry[nres] = y
                rx[nres] = x
                rw[nres] = params[code - OBS_RESOURCE]
                nres += 1
    holding = 0
    for t in range(k):
        holding += inv[t]
    armed = oy >= 0 and holding > 0

    if armed and _in_line(window, c, facing, oy, ox):
        if next_float(rng) < zap:
            return FIRE

    base = 0.0
    if nres > 0:
        base = -np.inf
        for r in range(nres):
            v = rw[r] / (1.0 + abs(ry[r] - c) + abs(rx[r] - c))
            if v > base:
                base = v

    scores = np.zeros(FIRE, dtype=np.float64)
    for a in range(MOVE_N, MOVE_W + 1):
        d = a - MOVE_N
        ny = c + DY[d]
        nx = c + DX[d]
        code = window[ny, nx]
        if code == OBS_WALL:
            scores[a] = -1.0
        elif code == OBS_OTHER:
            scores[a] = zap if armed else 0.0
        else:
            s = 0.0
            if nres > 0:
                best = -np.inf
                for r in range(nres):
                    v = rw[r] / (1.0 + abs(ry[r] - ny) + abs(rx[r] - nx))
                    if v > best:
                        best = v
                s = best - base
            if oy >= 0:
                s += approach * (abs(oy - c) + abs(ox - c) - abs(oy - ny) - abs(ox - nx))
            scores[a] = s
    for a, nf in ((TURN_LEFT, (facing + 3) % 4), (TURN_RIGHT, (facing + 1) % 4)):
        if armed and _in_line(window, c, nf, oy, ox):
            scores[a] = zap
        else:
            scores[a] = -0.05

    top = scores[0]
    for a in range(1, FIRE):
        if scores[a] > top:
            top = scores[a]
    probs = np.empty(FIRE, dtype=np.float64)
    total = 0.0
    for a in range(FIRE):
        probs[a] = np.exp((scores[a] - top) / temperature)
        total += probs[a]
    u = next_float(rng) * total
    acc = 0.0
    for a in range(FIRE):
        acc += probs[a]
        if u < acc:
            return a
    # u == total after rounding: last action with positive mass
    for a in range(FIRE - 1, -1, -1):
        if probs[a] > 0.0:
            return a
    return NOOP


@njit(cache=True)
def episode_kernel(
    terrain, res_pos, res_opts, res_nopt, spawns, rules, payoff, mode,
    params0, params1, env_seed, seed0, seed1, length, discount, out,
):
    """Play one episode of at most ``length`` steps.

    out = [reward0, reward1, discounted0, discounted1, steps, interactions]
    """
    h = terrain.shape[0]
    w = terrain.shape[1]
    k = payoff.shape[0]
    res_type = np.empty((h, w), dtype=np.int64)
    res_present = np.empty((h, w), dtype=np.int8)
    regen = np.empty((h, w), dtype=np.int64)
    agents = np.zeros((2, 5), dtype=np.int64)
    inv = np.zeros((2, k), dtype=np.int64)
    acc = np.zeros(2, dtype=np.float64)
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = env_seed
    rng0 = np.empty(1, dtype=np.uint64)
    rng0[0] = seed0
    rng1 = np.empty(1, dtype=np.uint64)
    rng1[0] = seed1
    reset_kernel(terrain, res_pos, res_opts, res_nopt, spawns, res_type, res_present, regen, agents, inv, acc, rng)

    radius = rules[R_RADIUS]
    size = 2 * radius + 1
    win0 = np.empty((size, size), dtype=np.int8)
    win1 = np.empty((size, size), dtype=np.int8)
    zero_inv = np.zeros(k, dtype=np.int64)
    actions = np.zeros(2, dtype=np.int64)
    rewards = np.zeros(2, dtype=np.float64)
    events = np.zeros(N_EVENTS, dtype=np.int64)
    disc0 = 0.0
    disc1 = 0.0
    g = 1.0
    interactions = 0
    for t in range(length):
        observe_kernel(terrain, res_type, res_present, agents, 0, radius, win0)
        observe_kernel(terrain, res_type, res_present, agents, 1, radius, win1)
        inv0 = zero_inv if agents[0, A_COUNTDOWN] > 0 else inv[0]
        inv1 = zero_inv if agents[1, A_COUNTDOWN] > 0 else inv[1]
        actions[0] = act_kernel(params0, win0, inv0, agents[0, A_FACING], rng0)
        actions[1] = act_kernel(params1, win1, inv1, agents[1, A_FACING], rng1)
        step_kernel(
            terrain, res_pos, spawns, rules, payoff, mode,
            res_type, res_present, regen, agents, inv, acc, rng,
            t, actions, rewards, events,
        )
        if events[E_INTERACTION] == INTERACTION_PAYOFF:
            interactions += 1
            disc0 += g * rewards[0]
            disc1 += g * rewards[1]
        g *= discount
    out[0] = acc[0]
    out[1] = acc[1]
    out[2] = disc0
    out[3] = disc1
    out[4] = length
    out[5] = interactions
