"""Input-gradient saliency masks.

The per-pixel score is |dQ/do| with Q = psi(f(o), a, z)^T z, taken
channel-wise with no pooling.  A mask keeps the ceil(k_frac * P) highest
scores (ties broken toward the lowest flat index) and zeroes the rest.
The gradient pass is isolated on its own tape, so parameter gradients are
never touched.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T


class SaliencyError(RuntimeError):
    pass


@dataclass
class SaliencyMask:
    mask: np.ndarray            # same shape as the observation, values 0/1
    k_frac: float
    source: dict = field(default_factory=dict)

    @property
    def n_retained(self):
        return int(self.mask.sum())


def mask_cardinality(k_frac, n_pixels):
    if not 0.0 < k_frac <= 1.0:
        raise ValueError(f"k_frac must be in (0, 1], got {k_frac}")
    return math.ceil(k_frac * n_pixels)


def input_gradients(model, obs_flat, actions, skills):
    """|dQ/do| per observation entry, batched; (b, P) in, (b, P) out.

    Summing the per-sample Q values gives every row its own gradient in a
    single reverse pass because samples do not interact.
    """
    with T.tape_scope() as tape:
        o = T.Tensor(obs_flat, requires_grad=True)
        s = model.encode(o)
        psi = model.successor(s, T.Tensor(actions), T.Tensor(skills))
        q = T.tsum(T.mul(psi, T.Tensor(skills)))
        grads = tape.gradients(q, [o])
    g = grads[o]
    if not np.all(np.isfinite(g)):
        bad = int(np.argmin(np.isfinite(g).reshape(-1)))
        raise SaliencyError(f"non-finite saliency gradient at pixel index {bad}")
    return np.abs(g)


def topk_mask(scores_flat, k):
    """Indicator of the k largest scores; ties keep the lowest flat index."""
    order = np.argsort(-scores_flat, kind="stable")
    mask = np.zeros_like(scores_flat)
    mask[order[:k]] = 1.0
    return mask


def compute_saliency(model, obs, action, skill, k_frac):
    """Mask for a single observation (G, G, 3)."""
    masks = compute_saliency_batch(
        model, obs[None], np.atleast_2d(action), np.atleast_2d(skill), k_frac
    )
    return masks[0]


def compute_saliency_batch(model, obs, actions, skills, k_frac):
    """Masks for a batch of observations (b, G, G, 3)."""
    b = obs.shape[0]
    shape = obs.shape[1:]
    n_pix = int(np.prod(shape))
    k = mask_cardinality(k_frac, n_pix)
    scores = input_gradients(model, obs.reshape(b, -1), actions, skills)
    out = []
    for i in range(b):
        m = topk_mask(scores[i], k).reshape(shape)
        out.append(SaliencyMask(mask=m, k_frac=k_frac, source={"index": i}))
    return out


def apply_mask(obs, mask):
    """Elementwise product; masked entries are exactly zero."""
    m = mask.mask if isinstance(mask, SaliencyMask) else mask
    if obs.shape != m.shape:
        raise T.ShapeMismatchError(
            f"apply_mask: observation {obs.shape} vs mask {m.shape}"
        )
    return obs * m


def attention_mass(mask, obs):
    """Fraction of retained entries that sit on the agent's nonzero pixels.

    The footprint is the agent channel's support, so a uniform random mask
    scores about footprint_size / P and a mask equal to the footprint
    scores exactly 1.
    """
    m = mask.mask if isinstance(mask, SaliencyMask) else mask
    footprint = np.zeros_like(m)
    footprint[:, :, 0] = obs[:, :, 0] > 0.0
    retained = m.sum()
    if retained == 0:
        return 0.0
    return float((m * footprint).sum() / retained)
