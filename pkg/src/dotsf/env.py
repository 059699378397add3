"""DotWorld: a deterministic pixel gridworld with a moving agent dot,
an optional goal beacon, and a dynamics-irrelevant distractor channel.

Observations are G x G x 3 arrays in [0, 1]:
  channel 0 - agent, a bilinear splat of the continuous position
  channel 1 - goal beacon (zeros unless a task is attached)
  channel 2 - distractor, driven by its own stream, independent of the agent

The underlying physical state (position, velocity) is exposed separately
for reward labeling and linear probing; it is never part of observations.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .rng import Stream

TASKS = ("reach-TL", "reach-TR", "reach-BL", "reach-BR", "run-right")
REACH_CORNERS = {
    "reach-TL": (0.0, 1.0),
    "reach-TR": (1.0, 1.0),
    "reach-BL": (0.0, 0.0),
    "reach-BR": (1.0, 0.0),
}
REACH_RADIUS = 0.3
N_CHANNELS = 3
ACTION_DIM = 2


class UnknownTaskError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    grid_size: int = 12
    episode_len: int = 100
    distractor_mode: str = "static-pattern"  # or "flicker"
    v_max: float = 0.15
    dt: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.grid_size < 4:
            raise ValueError(f"grid_size must be >= 4, got {self.grid_size}")
        if self.episode_len < 1:
            raise ValueError(f"episode_len must be >= 1, got {self.episode_len}")
        if self.distractor_mode not in ("static-pattern", "flicker"):
            raise ValueError(f"unknown distractor_mode {self.distractor_mode!r}")

    def hash(self):
        blob = json.dumps(vars(self) | {"dataclass": "EnvConfig"}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class PhysState:
    pos: np.ndarray  # (2,) in [0, 1]^2
    vel: np.ndarray  # (2,) in [-v_max, v_max]^2

    def vector(self):
        return np.concatenate([self.pos, self.vel])


def splat(pos, grid_size):
    """Bilinear splat of a [0,1]^2 position onto a G x G grid (mass 1)."""
    g = grid_size
    col = pos[0] * (g - 1)
    row = (1.0 - pos[1]) * (g - 1)
    c0, r0 = int(np.floor(col)), int(np.floor(row))
    fc, fr = col - c0, row - r0
    img = np.zeros((g, g))
    for dr, dc, w in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        if w > 0.0:
            img[min(r0 + dr, g - 1), min(c0 + dc, g - 1)] += w
    return img


def task_reward(task, state, v_max=0.15):
    """Reward in [0, 1] from the physical state; raises on unknown tasks."""
    if task in REACH_CORNERS:
        dist = float(np.linalg.norm(state.pos - np.asarray(REACH_CORNERS[task])))
        return max(0.0, 1.0 - dist / REACH_RADIUS)
    if task == "run-right":
        return max(0.0, float(state.vel[0])) / v_max
    raise UnknownTaskError(f"unknown task {task!r}; known: {TASKS}")


def _beacon(task, grid_size):
    img = np.zeros((grid_size, grid_size))
    if task in REACH_CORNERS:
        x, y = REACH_CORNERS[task]
        r = 0 if y == 1.0 else grid_size - 2
        c = 0 if x == 0.0 else grid_size - 2
        img[r:r + 2, c:c + 2] = 1.0
    elif task == "run-right":
        mid = grid_size // 2 - 1
        img[mid:mid + 2, grid_size - 2:] = 1.0
    return img


class DotWorld:
    """Value-object environment; all state is returned, none is hidden.

    The distractor stream is owned per episode so renders are a pure
    function of (physical state, distractor state).  Attaching a task only
    changes the goal channel and the reward definition.
    """

    V_MAX_DEFAULT = 0.15

    def __init__(self, config, task=None):
        if task is not None and task not in TASKS:
            raise UnknownTaskError(f"unknown task {task!r}; known: {TASKS}")
        self.config = config
        self.task = task
        self._goal_img = _beacon(task, config.grid_size) if task else None
        self._distractor = None
        self._distractor_stream = None
        self.clamp_warnings = 0

    # -- episode lifecycle ---------------------------------------------------

    def reset(self, seed):
        """Start an episode: uniform position, zero velocity, fresh pattern."""
        root = Stream(self.config.seed).child("episode", int(seed))
        agent_stream = root.child("agent")
        self._distractor_stream = root.child("distractor")
        pos = agent_stream.uniform(0.0, 1.0, 2)
        state = PhysState(pos=pos, vel=np.zeros(2))
        self._distractor = self._draw_distractor()
        return state, self.render(state)

    def _draw_distractor(self):
        g = self.config.grid_size
        return self._distractor_stream.uniform(0.0, 1.0, (g, g))

    def step(self, state, action):
        """vel <- clamp(0.8 vel + 0.2 a v_max); pos <- clamp(pos + vel dt)."""
        action = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(action) > 1.0):
            self.clamp_warnings += 1
            action = np.clip(action, -1.0, 1.0)
        vmax = self.config.v_max
        vel = np.clip(0.8 * state.vel + 0.2 * action * vmax, -vmax, vmax)
        pos = np.clip(state.pos + vel * self.config.dt, 0.0, 1.0)
        nxt = PhysState(pos=pos, vel=vel)
        if self.config.distractor_mode == "flicker":
            self._distractor = self._draw_distractor()
        return nxt, self.render(nxt)

    def render(self, state):
        g = self.config.grid_size
        obs = np.zeros((g, g, N_CHANNELS))
        obs[:, :, 0] = splat(state.pos, g)
        if self._goal_img is not None:
            obs[:, :, 1] = self._goal_img
        if self._distractor is not None:
            obs[:, :, 2] = self._distractor
        return obs

    def reward(self, state):
        if self.task is None:
            raise UnknownTaskError("environment has no task attached")
        return task_reward(self.task, state, self.config.v_max)


def write_ppm(path, obs):
    """Dump an observation as binary PPM (P6), for manual inspection."""
    img = np.clip(obs, 0.0, 1.0)
    data = (img * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())
