"""Saliency-guided dynamics representation learning.

An encoder maps flattened pixels to a compact latent; a forward model
predicts the next latent from (latent, action) and an inverse model
predicts the action from (latent, next latent).  Both heads are trained
twice per batch: once on clean observations and once on saliency-masked
ones, with the masked branch weighted by beta.

Gradient flow: next-state latents are treated as fixed regression targets
for the forward losses (otherwise a constant encoder trivially wins) but
as differentiable inputs for the inverse losses.
"""

import numpy as np

from . import tensor as T
from .nn import MLP, Module


class RepModel(Module):
    def __init__(self, obs_dim, latent_dim, stream, action_dim=2,
                 enc_hidden=256, dyn_hidden=128):
        self.obs_dim = obs_dim
        self.latent_dim = latent_dim
        self.encoder = MLP(
            [obs_dim, enc_hidden, enc_hidden, latent_dim],
            stream.child("encoder"), hidden_act="tanh", out_layernorm=True,
        )
        self.forward_dyn = MLP(
            [latent_dim + action_dim, dyn_hidden, dyn_hidden, latent_dim],
            stream.child("forward"),
        )
        self.inverse_dyn = MLP(
            [2 * latent_dim, dyn_hidden, dyn_hidden, action_dim],
            stream.child("inverse"), out_tanh=True,
        )

    def encode(self, obs):
        """obs: Tensor (b, obs_dim) in [0,1] -> latent Tensor (b, latent_dim)."""
        return self.encoder(obs)

    def encode_np(self, obs_flat):
        """Gradient-free latent for numpy inputs (b, obs_dim) -> (b, m)."""
        with T.tape_scope():
            return self.encoder(T.Tensor(obs_flat)).data


def _msq(x, n):
    return T.scale(T.sqnorm(x), 1.0 / n)


def rep_losses(model, obs, action, next_obs, masked_obs, beta):
    """The four dynamics losses and their weighted total.

    All inputs are numpy arrays with flattened observations; the total is
    built as d1 + i1 + beta*(d2 + i2) so the beta=0 identity is exact.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    n = obs.shape[0]
    o = T.Tensor(obs)
    oa = T.Tensor(masked_obs)
    a = T.Tensor(action)
    s = model.encode(o)
    s_alpha = model.encode(oa)
    s_next = model.encode(T.Tensor(next_obs))
    s_next_tgt = s_next.detach()

    d1 = _msq(T.sub(model.forward_dyn(T.concat([s, a])), s_next_tgt), n)
    i1 = _msq(T.sub(model.inverse_dyn(T.concat([s, s_next])), a), n)
    d2 = _msq(T.sub(model.forward_dyn(T.concat([s_alpha, a])), s_next_tgt), n)
    i2 = _msq(T.sub(model.inverse_dyn(T.concat([s_alpha, s_next])), a), n)
    total = T.add(T.add(d1, i1), T.scale(T.add(d2, i2), beta))
    return {"d1": d1, "i1": i1, "d2": d2, "i2": i2, "total": total}


def rep_update(model, optimizer, obs, action, next_obs, masked_obs, beta):
    """One Adam step on the representation parameters only."""
    with T.tape_scope():
        losses = rep_losses(model, obs, action, next_obs, masked_obs, beta)
        values = {k: v.item() for k, v in losses.items()}
        if not np.isfinite(values["total"]):
            raise FloatingPointError(f"non-finite representation loss: {values}")
        T.backward(losses["total"])
    optimizer.step()
    return values
