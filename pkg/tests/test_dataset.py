"""Dataset generation, sampling statistics, labeling, and the .srds format."""

import numpy as np
import pytest

from dotsf import dataset as ds
from dotsf.env import EnvConfig
from dotsf.rng import Stream

CFG = EnvConfig(grid_size=8, episode_len=50, seed=0)


@pytest.fixture(scope="module")
def small():
    return ds.generate_dataset(CFG, "uniform-random", 200, seed=1)


def test_exact_episode_arithmetic(small):
    assert len(small) == 200
    assert small.boundaries == [0, 50, 100, 150]


def test_chaining_invariant(small):
    bset = set(small.boundaries)
    for i in range(len(small) - 1):
        if i + 1 in bset:
            continue
        assert np.array_equal(small.next_obs[i], small.obs[i + 1])


def test_generation_deterministic(tmp_path):
    a = ds.generate_dataset(CFG, "ou-noise", 100, seed=7)
    b = ds.generate_dataset(CFG, "ou-noise", 100, seed=7)
    pa, pb = tmp_path / "a.srds", tmp_path / "b.srds"
    ds.save(a, pa)
    ds.save(b, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_goal_sweep_coverage():
    data = ds.generate_dataset(CFG, "goal-sweep", 10_000, seed=3)
    assert data.meta["coverage"] >= 0.9


def test_unknown_generator():
    with pytest.raises(ValueError, match="unknown generator"):
        ds.generate_dataset(CFG, "dreamer", 100, seed=0)


# -- sampling ----------------------------------------------------------------

def test_full_enumeration(small):
    batch = small.sample_batch(len(small), Stream(0), full_enumeration=True)
    assert np.array_equal(batch.obs, small.obs.astype(np.float64))


def test_sampling_reproducible(small):
    b1 = small.sample_batch(16, Stream(5).child("x"))
    b2 = small.sample_batch(16, Stream(5).child("x"))
    assert np.array_equal(b1.action, b2.action)


def test_batch_is_reward_free(small):
    batch = small.sample_batch(8, Stream(1))
    assert set(batch.__dataclass_fields__) == {"obs", "action", "next_obs"}
    assert not hasattr(batch, "rewards")
    assert not hasattr(batch, "states")


def test_sampling_uniform_chi_square():
    data = ds.generate_dataset(EnvConfig(grid_size=6, episode_len=50, seed=0),
                               "uniform-random", 100, seed=2)
    stream = Stream(11)
    counts = np.zeros(100)
    draws = 100_000
    idx = stream.integers(0, 100, draws)
    for i in idx:
        counts[i] += 1
    expected = draws / 100
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # chi2 inverse survival at p=0.001 with 99 dof
    assert chi2 < 148.23
    del data


def test_sample_batch_pair_independent(small):
    b1, b2 = small.sample_batch_pair(32, Stream(4))
    assert not np.array_equal(b1.obs, b2.obs)


def test_batch_size_precondition(small):
    with pytest.raises(ValueError):
        small.sample_batch(5 * len(small), Stream(0))


# -- labeling ----------------------------------------------------------------

def test_label_rewards_pure(small):
    idx = np.arange(20)
    s1 = small.label_rewards(idx, "reach-TL")
    s2 = small.label_rewards(idx, "reach-TL")
    assert np.array_equal(s1.rewards, s2.rewards)
    assert small.rewards is None


def test_label_rewards_at_corner():
    # Construct a transition whose source state sits exactly at the corner.
    data = ds.generate_dataset(CFG, "uniform-random", 50, seed=4)
    data._states[0] = np.array([0.0, 1.0, 0.0, 0.0])
    s = data.label_rewards([0], "reach-TL")
    assert s.rewards[0] == 1.0


def test_label_unknown_task(small):
    from dotsf.env import UnknownTaskError
    with pytest.raises(UnknownTaskError):
        small.label_rewards([0, 1], "swim")


def test_mean_reach_reward_range():
    data = ds.generate_dataset(CFG, "uniform-random", 5000, seed=9)
    s = data.label_rewards(np.arange(5000), "reach-TL")
    assert 0.0 < s.rewards.mean() < 0.25


def test_empty_slice_rejected(small):
    with pytest.raises(ValueError):
        small.label_rewards([], "reach-TL")


# -- serialization -----------------------------------------------------------

def test_roundtrip_bit_exact(tmp_path, small):
    p = tmp_path / "d.srds"
    ds.save(small, p)
    loaded = ds.load(p)
    assert np.array_equal(loaded.obs, small.obs)
    assert np.array_equal(loaded.action, small.action)
    assert np.array_equal(loaded.next_obs, small.next_obs)
    assert np.array_equal(loaded.state_vectors(), small.state_vectors())
    assert loaded.boundaries == small.boundaries
    assert loaded.meta["env_hash"] == small.meta["env_hash"]
    p2 = tmp_path / "d2.srds"
    ds.save(loaded, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_truncated_file_rejected(tmp_path, small):
    p = tmp_path / "d.srds"
    ds.save(small, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-100])
    with pytest.raises(ds.DatasetFormatError, match="checksum"):
        ds.load(p)


def test_flipped_byte_rejected(tmp_path, small):
    p = tmp_path / "d.srds"
    ds.save(small, p)
    raw = bytearray(p.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(ds.DatasetFormatError, match="checksum"):
        ds.load(p)


def test_bad_magic_rejected(tmp_path, small):
    import struct
    import zlib
    body = b"XXXX" + struct.pack("<II", 1, 2) + b"{}"
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    p = tmp_path / "d.srds"
    p.write_bytes(body)
    with pytest.raises(ds.DatasetFormatError, match="magic"):
        ds.load(p)
