"""Door-Key gridworld: generation, dynamics, observation models and expert demos.

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row; ``y``
grows downward. The border is wall. A vertical wall at column ``wall_x``
splits the grid; its single door cell starts closed. The agent and the key
start left of the wall, the goal lies right of it.

The agent picks the key up by standing on the key cell, and opens the door
with ``toggle`` from a 4-neighbour cell while holding the key. An open door
is walkable. The goal predicate is "agent on the goal cell".
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .nn.layers import Conv2d, Linear, leaky_relu, leaky_relu_grad

ACTIONS = ("up", "down", "left", "right", "pickup", "toggle")
MOVES = {0: (0, -1), 1: (0, 1), 2: (-1, 0), 3: (1, 0)}
PICKUP, TOGGLE = 4, 5

# image-like observation channels
CH_WALL, CH_AGENT, CH_KEY, CH_DOOR, CH_DOOR_OPEN, CH_GOAL = range(6)
CHANNELS = ("wall", "agent", "key", "door", "door_open", "goal")
X_DIM = 7


class UnsolvableError(RuntimeError):
    """No action sequence reaches the goal."""


@dataclass(frozen=True)
class GridConfig:
    size: int
    walls: frozenset
    key: tuple
    door: tuple
    goal: tuple
    agent_start: tuple
    seed: int | None = None

    @property
    def wall_x(self) -> int:
        return self.door[0]

    def is_wall(self, cell) -> bool:
        return cell in self.walls

    def to_dict(self):
        return {"size": self.size, "seed": self.seed, "key": list(self.key), "door": list(self.door),
                "goal": list(self.goal), "agent_start": list(self.agent_start),
                "walls": sorted([list(w) for w in self.walls])}

    @classmethod
    def from_dict(cls, d):
        return cls(d["size"], frozenset(tuple(w) for w in d["walls"]), tuple(d["key"]),
                   tuple(d["door"]), tuple(d["goal"]), tuple(d["agent_start"]), d.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class EnvState:
    agent: tuple
    has_key: bool = False
    door_open: bool = False


def initial_state(config: GridConfig, start=None) -> EnvState:
    return EnvState(tuple(start) if start is not None else config.agent_start, False, False)


def is_goal(config: GridConfig, state: EnvState) -> bool:
    return state.agent == config.goal


def _walls(size: int, wall_x: int, door_y: int) -> frozenset:
    cells = set()
    for i in range(size):
        cells |= {(i, 0), (i, size - 1), (0, i), (size - 1, i)}
    cells |= {(wall_x, y) for y in range(1, size - 1) if y != door_y}
    return frozenset(cells)


def left_cells(config: GridConfig):
    return [(x, y) for x in range(1, config.wall_x) for y in range(1, config.size - 1)]


def right_cells(config: GridConfig):
    return [(x, y) for x in range(config.wall_x + 1, config.size - 1) for y in range(1, config.size - 1)]


def generate_env(seed: int, size: int = 8, max_attempts: int = 100) -> GridConfig:
    """Random solvable layout, deterministic per seed."""
    if size < 5:
        raise ValueError("size must be >= 5")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        wall_x = int(rng.integers(2, size - 2))
        door_y = int(rng.integers(1, size - 1))
        walls = _walls(size, wall_x, door_y)
        left = [(x, y) for x in range(1, wall_x) for y in range(1, size - 1)]
        right = [(x, y) for x in range(wall_x + 1, size - 1) for y in range(1, size - 1)]
        if len(left) < 2 or not right:
            continue
        k, a = rng.choice(len(left), size=2, replace=False)
        goal = right[int(rng.integers(len(right)))]
        cfg = GridConfig(size, walls, left[int(k)], (wall_x, door_y), goal, left[int(a)], seed)
        try:
            expert_actions(cfg)
        except UnsolvableError:
            continue
        return cfg
    raise UnsolvableError(f"no solvable layout after {max_attempts} attempts (seed {seed})")


def generate_envs(count: int, seed: int = 0, size: int = 8) -> list:
    """``count`` distinct layouts from consecutive sub-seeds."""
    out, seen, s = [], set(), seed
    while len(out) < count:
        cfg = generate_env(s, size)
        sig = (cfg.walls, cfg.key, cfg.door, cfg.goal, cfg.agent_start)
        if sig not in seen:
            seen.add(sig)
            out.append(cfg)
        s += 1
    return out


def step_env(config: GridConfig, state: EnvState, action: int) -> EnvState:
    """Deterministic dynamics; impossible actions leave the state unchanged."""
    if action in MOVES:
        dx, dy = MOVES[action]
        nxt = (state.agent[0] + dx, state.agent[1] + dy)
        if config.is_wall(nxt) or (nxt == config.door and not state.door_open):
            return state
        if not (0 <= nxt[0] < config.size and 0 <= nxt[1] < config.size):
            return state
        return replace(state, agent=nxt)
    if action == PICKUP:
        if state.agent == config.key and not state.has_key:
            return replace(state, has_key=True)
        return state
    if action == TOGGLE:
        ax, ay = state.agent
        adjacent = abs(ax - config.door[0]) + abs(ay - config.door[1]) == 1
        if adjacent and state.has_key and not state.door_open:
            return replace(state, door_open=True)
        return state
    return state


def successors(config: GridConfig, state: EnvState):
    """``(action, next_state)`` pairs that change the state."""
    out = []
    for a in range(len(ACTIONS)):
        n = step_env(config, state, a)
        if n != state:
            out.append((a, n))
    return out


def reachable_states(config: GridConfig, start=None) -> list:
    s0 = initial_state(config, start)
    seen = {s0}
    order = [s0]
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        for _, n in successors(config, s):
            if n not in seen:
                seen.add(n)
                order.append(n)
                queue.append(n)
    return order


def all_states(config: GridConfig) -> list:
    """Every consistent state (agent on a free cell, door open only with the key)."""
    free = [(x, y) for y in range(config.size) for x in range(config.size)
            if (x, y) not in config.walls]
    out = []
    for cell in free:
        for hk, do in ((False, False), (True, False), (True, True)):
            if cell == config.door and not do:
                continue
            out.append(EnvState(cell, hk, do))
    return out


# ---------------------------------------------------------------- observations

def observe_x(config: GridConfig, state: EnvState) -> np.ndarray:
    """Agent x,y; key x,y (0,0 once picked up); goal x,y; door flag, all in [0, 1]."""
    s = config.size - 1
    key = (0.0, 0.0) if state.has_key else (config.key[0] / s, config.key[1] / s)
    return np.array([state.agent[0] / s, state.agent[1] / s, key[0], key[1],
                     config.goal[0] / s, config.goal[1] / s, float(state.door_open)])


def decode_x(config: GridConfig, obs) -> EnvState:
    """Inverse of :func:`observe_x` on consistent states."""
    s = config.size - 1
    agent = (int(round(obs[0] * s)), int(round(obs[1] * s)))
    has_key = bool(obs[2] == 0.0 and obs[3] == 0.0)
    return EnvState(agent, has_key, bool(obs[6] > 0.5))


def observe_v(config: GridConfig, state: EnvState) -> np.ndarray:
    """Semantic grid of shape (6, size, size).

    Static content (wall, key, door, goal) is one-hot per cell; the agent
    channel and the door-open bit are overlays on top of it.
    """
    n = config.size
    v = np.zeros((len(CHANNELS), n, n))
    for (x, y) in config.walls:
        v[CH_WALL, y, x] = 1.0
    if not state.has_key:
        v[CH_KEY, config.key[1], config.key[0]] = 1.0
    v[CH_DOOR, config.door[1], config.door[0]] = 1.0
    if state.door_open:
        v[CH_DOOR_OPEN, config.door[1], config.door[0]] = 1.0
    v[CH_GOAL, config.goal[1], config.goal[0]] = 1.0
    v[CH_AGENT, state.agent[1], state.agent[0]] = 1.0
    return v


def observe(config: GridConfig, state: EnvState, mode: str) -> np.ndarray:
    """Flat observation vector for ``mode`` in {"x", "v"}."""
    if mode == "x":
        return observe_x(config, state)
    if mode == "v":
        return observe_v(config, state).ravel()
    raise ValueError(f"unknown observation mode {mode!r}")


def obs_dim(mode: str, size: int = 8) -> int:
    return X_DIM if mode == "x" else len(CHANNELS) * size * size


def render(config: GridConfig, state: EnvState | None = None) -> str:
    """Plain-text grid: # wall, K key, D/d door closed/open, G goal, A agent."""
    state = state or initial_state(config)
    rows = []
    for y in range(config.size):
        row = []
        for x in range(config.size):
            c = (x, y)
            ch = "."
            if c in config.walls:
                ch = "#"
            elif c == config.door:
                ch = "d" if state.door_open else "D"
            elif c == config.goal:
                ch = "G"
            elif c == config.key and not state.has_key:
                ch = "K"
            if c == state.agent:
                ch = "A"
            row.append(ch)
        rows.append("".join(row))
    return "\n".join(rows)


# ---------------------------------------------------------------- expert

def expert_actions(config: GridConfig, start=None) -> list:
    """Shortest action sequence to the goal by BFS over the product state space."""
    s0 = initial_state(config, start)
    parent = {s0: None}
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        if is_goal(config, s):
            acts = []
            while parent[s] is not None:
                prev, a = parent[s]
                acts.append(a)
                s = prev
            return acts[::-1]
        for a, n in successors(config, s):
            if n not in parent:
                parent[n] = (s, a)
                queue.append(n)
    raise UnsolvableError("goal unreachable")


def replay(config: GridConfig, actions, start=None) -> list:
    """States visited by ``actions``, including the initial one."""
    s = initial_state(config, start)
    states = [s]
    for a in actions:
        s = step_env(config, s, a)
        states.append(s)
    return states


@dataclass
class Demo:
    actions: list
    states: list
    obs_x: np.ndarray     # (K+1, 7)
    obs_v: np.ndarray     # (K+1, 6*size*size)


def expert_solve(config: GridConfig, start=None) -> Demo:
    """Optimal demonstration with aligned x- and v-observation sequences."""
    acts = expert_actions(config, start)
    states = replay(config, acts, start)
    return Demo(acts, states, np.stack([observe(config, s, "x") for s in states]),
                np.stack([observe(config, s, "v") for s in states]))


def observation_sampler(configs, mode: str):
    """Negative-step sampler: uniform draws from observations reachable in the
    environment the demonstration came from. ``configs[j]`` is the layout of
    positive ``j``; layouts may repeat."""
    cache = {}
    tables = []
    for c in configs:
        if c not in cache:
            cache[c] = np.stack([observe(c, s, mode) for s in reachable_states(c)])
        tables.append(cache[c])

    def sample(rng, n, source_id):
        t = tables[source_id]
        return t[rng.integers(len(t), size=n)]
    return sample


# ---------------------------------------------------------------- conv encoder

class ConvEncoder:
    """One conv layer (``filters`` channels, same padding) + leaky ReLU, then a
    linear projection with tanh to ``out`` dimensions.

    Inputs are flat ``(..., channels*size*size)`` vectors.
    """

    def __init__(self, params, name: str, channels: int, size: int, filters: int = 5,
                 kernel: int = 3, out: int = 16, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels, self.size, self.filters = channels, size, filters
        self.conv = Conv2d(params, f"{name}.conv", channels, filters, kernel, rng)
        self.proj = Linear(params, f"{name}.proj", filters * size * size, out, rng)
        self.out_dim = out

    @property
    def in_dim(self) -> int:
        return self.channels * self.size * self.size

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"conv encoder expects {self.in_dim} features, got {x.shape[-1]}")
        lead = x.shape[:-1]
        img = x.reshape(-1, self.channels, self.size, self.size)
        z, cc = self.conv.forward(img)
        a = leaky_relu(z)
        flat = a.reshape(len(img), -1)
        y, pc = self.proj.forward(flat)
        t = np.tanh(y)
        return t.reshape(*lead, self.out_dim), (lead, z, cc, flat, pc, t)

    def backward(self, cache, dy):
        lead, z, cc, flat, pc, t = cache
        dy = dy.reshape(-1, self.out_dim) * (1 - t * t)
        dflat = self.proj.backward(pc, dy)
        dz = dflat.reshape(z.shape) * leaky_relu_grad(z)
        dimg = self.conv.backward(cc, dz)
        return dimg.reshape(*lead, self.in_dim)
