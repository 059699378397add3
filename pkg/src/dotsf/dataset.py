"""Offline reward-free datasets: generation, sampling, labeling, and a
checksummed binary file format (.srds).

The learner-facing sampling API returns only (obs, action, next_obs);
ground-truth physical states and rewards live behind separate eval-side
accessors so the pretraining path cannot touch them.
"""

import dataclasses
import json
import struct
import zlib

import numpy as np

from .env import DotWorld, EnvConfig, task_reward
from .rng import Stream

MAGIC = b"SRDS"
VERSION = 1
GENERATORS = ("uniform-random", "ou-noise", "goal-sweep")


class DatasetFormatError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class PretrainBatch:
    """What the representation/successor/policy learners are allowed to see."""
    obs: np.ndarray        # (b, G, G, 3) f64
    action: np.ndarray     # (b, 2) f64
    next_obs: np.ndarray   # (b, G, G, 3) f64


@dataclasses.dataclass(frozen=True)
class LabeledSlice:
    """Eval-side view: observations plus rewards for skill inference."""
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    rewards: np.ndarray
    task: str


class OfflineDataset:
    def __init__(self, obs, action, next_obs, states, boundaries, meta, rewards=None):
        self.obs = obs                  # (n, G, G, 3) f32
        self.action = action            # (n, 2) f64
        self.next_obs = next_obs        # (n, G, G, 3) f32
        self._states = states           # (n, 4) f64, firewalled
        self.boundaries = list(boundaries)
        self.meta = dict(meta)
        self.rewards = rewards          # (n,) f64 or None
        if len(self.obs) < 1:
            raise DatasetFormatError("dataset must contain at least one transition")

    def __len__(self):
        return len(self.obs)

    # -- learner-facing ------------------------------------------------------

    def sample_batch(self, batch_size, stream, full_enumeration=False):
        """Uniform i.i.d. with replacement; no states or rewards exposed."""
        if full_enumeration:
            if batch_size != len(self):
                raise ValueError("full enumeration needs batch_size == len(dataset)")
            idx = np.arange(len(self))
        else:
            if batch_size > len(self):
                raise ValueError(
                    f"batch_size {batch_size} exceeds dataset size {len(self)}"
                )
            idx = stream.integers(0, len(self), batch_size)
        return PretrainBatch(
            obs=self.obs[idx].astype(np.float64),
            action=self.action[idx].copy(),
            next_obs=self.next_obs[idx].astype(np.float64),
        )

    def sample_batch_pair(self, batch_size, stream):
        """Transition batch plus the independent target-pair batch."""
        return (
            self.sample_batch(batch_size, stream.child("transitions")),
            self.sample_batch(batch_size, stream.child("targets")),
        )

    # -- eval-side -----------------------------------------------------------

    def state_vectors(self):
        """Ground-truth (x, y, vx, vy); for probing and labeling only."""
        return self._states.copy()

    def label_rewards(self, indices, task):
        """Pure labeling pass over a slice; the dataset itself is untouched."""
        idx = np.asarray(indices)
        if idx.size == 0:
            raise ValueError("cannot label an empty slice")
        v_max = float(self.meta.get("v_max", 0.15))
        rewards = np.array([
            task_reward(task, _StateView(self._states[i]), v_max) for i in idx
        ])
        return LabeledSlice(
            obs=self.obs[idx].astype(np.float64),
            action=self.action[idx].copy(),
            next_obs=self.next_obs[idx].astype(np.float64),
            rewards=rewards,
            task=task,
        )


class _StateView:
    __slots__ = ("pos", "vel")

    def __init__(self, vec):
        self.pos = vec[:2]
        self.vel = vec[2:]


# ---------------------------------------------------------------------------
# generation

def _policy_uniform(stream, state, t):
    return stream.uniform(-1.0, 1.0, 2)


class _OUNoise:
    """Ornstein-Uhlenbeck action process, reset per episode."""

    def __init__(self, theta=0.15, sigma=0.3):
        self.theta, self.sigma = theta, sigma
        self.x = np.zeros(2)

    def __call__(self, stream, state, t):
        self.x = self.x - self.theta * self.x + self.sigma * stream.normal(0, 1, 2)
        return np.clip(self.x, -1.0, 1.0)


class _GoalSweep:
    """P-controller cycling random waypoints; guarantees broad coverage."""

    def __init__(self, gain=8.0, switch_radius=0.06, max_hold=25):
        self.gain = gain
        self.switch_radius = switch_radius
        self.max_hold = max_hold
        self.waypoint = None
        self.held = 0

    def __call__(self, stream, state, t):
        near = (
            self.waypoint is not None
            and np.linalg.norm(state.pos - self.waypoint) < self.switch_radius
        )
        if self.waypoint is None or near or self.held >= self.max_hold:
            self.waypoint = stream.uniform(0.0, 1.0, 2)
            self.held = 0
        self.held += 1
        err = self.waypoint - state.pos
        return np.clip(self.gain * err - 4.0 * state.vel / 0.15, -1.0, 1.0)


def _make_policy(generator):
    if generator == "uniform-random":
        return _policy_uniform
    if generator == "ou-noise":
        return _OUNoise()
    if generator == "goal-sweep":
        return _GoalSweep()
    raise ValueError(f"unknown generator {generator!r}; known: {GENERATORS}")


def generate_dataset(env_config, generator, n_transitions, seed):
    """Roll episodes until n_transitions are collected (deterministic)."""
    if n_transitions < env_config.episode_len:
        raise ValueError("need n_transitions >= episode_len")
    env = DotWorld(env_config)
    g = env_config.grid_size
    obs = np.empty((n_transitions, g, g, 3), dtype=np.float32)
    nxt = np.empty_like(obs)
    act = np.empty((n_transitions, 2))
    states = np.empty((n_transitions, 4))
    boundaries = []
    visited = np.zeros((g, g), dtype=bool)
    root = Stream(seed).child("dataset", generator)

    i = 0
    episode = 0
    while i < n_transitions:
        policy = _make_policy(generator)
        ep_stream = root.child("ep", episode)
        state, o = env.reset(seed=Stream(seed).child("reset", episode).integers(0, 2**31))
        boundaries.append(i)
        for t in range(env_config.episode_len):
            if i >= n_transitions:
                break
            a = policy(ep_stream, state, t)
            nstate, no = env.step(state, a)
            obs[i] = o
            act[i] = a
            nxt[i] = no
            states[i] = state.vector()
            bx = min(int(state.pos[0] * g), g - 1)
            by = min(int(state.pos[1] * g), g - 1)
            visited[by, bx] = True
            state, o = nstate, no
            i += 1
        episode += 1

    meta = {
        "env_hash": env_config.hash(),
        "generator": generator,
        "seed": int(seed),
        "count": int(n_transitions),
        "grid_size": int(g),
        "episode_len": int(env_config.episode_len),
        "v_max": float(env_config.v_max),
        "coverage": float(visited.mean()),
        "has_rewards": False,
    }
    return OfflineDataset(obs, act, nxt, states, boundaries, meta)


# ---------------------------------------------------------------------------
# serialization: MAGIC | u32 version | u32 json_len | meta json |
#   obs f32 | action f64 | next_obs f32 | states f64 | [rewards f64] | crc32

def save(dataset, path):
    meta = dict(dataset.meta)
    meta["boundaries"] = dataset.boundaries
    meta["has_rewards"] = dataset.rewards is not None
    meta_blob = json.dumps(meta, sort_keys=True).encode()
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(meta_blob))
    buf += meta_blob
    n, g = len(dataset), dataset.meta["grid_size"]
    buf += struct.pack("<IQ", g, n)
    buf += np.ascontiguousarray(dataset.obs, "<f4").tobytes()
    buf += np.ascontiguousarray(dataset.action, "<f8").tobytes()
    buf += np.ascontiguousarray(dataset.next_obs, "<f4").tobytes()
    buf += np.ascontiguousarray(dataset._states, "<f8").tobytes()
    if dataset.rewards is not None:
        buf += np.ascontiguousarray(dataset.rewards, "<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(buf))


def load(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise DatasetFormatError(f"file too short ({len(raw)} bytes)")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    actual_crc = zlib.crc32(raw[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise DatasetFormatError(
            f"checksum mismatch at byte {len(raw) - 4}: "
            f"stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(raw) - 4:
            raise DatasetFormatError(f"truncated at byte {off} reading {what}")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise DatasetFormatError("bad magic bytes; not a dataset file")
    version, meta_len = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    meta = json.loads(take(meta_len, "metadata"))
    g, n = struct.unpack("<IQ", take(12, "dims"))
    obs = np.frombuffer(take(n * g * g * 3 * 4, "obs"), "<f4").reshape(n, g, g, 3)
    act = np.frombuffer(take(n * 2 * 8, "actions"), "<f8").reshape(n, 2)
    nxt = np.frombuffer(take(n * g * g * 3 * 4, "next_obs"), "<f4").reshape(n, g, g, 3)
    states = np.frombuffer(take(n * 4 * 8, "states"), "<f8").reshape(n, 4)
    rewards = None
    if meta.get("has_rewards"):
        rewards = np.frombuffer(take(n * 8, "rewards"), "<f8").copy()
    if off != len(raw) - 4:
        raise DatasetFormatError(f"trailing garbage at byte {off}")
    boundaries = meta.pop("boundaries")
    return OfflineDataset(
        obs.copy(), act.copy(), nxt.copy(), states.copy(), boundaries, meta, rewards
    )
