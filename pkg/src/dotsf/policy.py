"""Skill-conditioned consistency policy with classifier-free guidance.

A single denoiser maps (latent, noisy action, noise scale, skill) to a
clean action in one evaluation.  The unconditional branch replaces the
skill embedding with a learned null token plus a flag channel, and the
final action extrapolates between the two branches:

    a = g(s, a_t, null) + omega * (g(s, a_t, z) - g(s, a_t, null))

Action synthesis is single-step: one conditioned plus one unconditional
denoiser evaluation per action, counted and asserted in tests.
"""

import numpy as np

from . import tensor as T
from .nn import MLP, Linear, Module
from .successor import sample_skills

EXPLORE_STD = 0.2
EXPLORE_CLIP = 0.3


class NoiseSchedule:
    """Strictly increasing noise scales sigma_1 < ... < sigma_N."""

    def __init__(self, sigmas):
        sig = np.asarray(sigmas, dtype=np.float64)
        if sig.ndim != 1 or len(sig) < 2:
            raise ValueError("need at least two noise levels")
        if np.any(sig <= 0) or np.any(np.diff(sig) <= 0):
            raise ValueError(f"sigmas must be positive and increasing: {sig}")
        self.sigmas = sig

    @classmethod
    def geometric(cls, n_levels=8, low=0.01, high=1.0):
        return cls(np.geomspace(low, high, n_levels))

    def __len__(self):
        return len(self.sigmas)

    def sigma(self, level):
        """1-based level -> scale; invalid levels are an error."""
        if not 1 <= level <= len(self.sigmas):
            raise ValueError(f"level {level} outside [1, {len(self.sigmas)}]")
        return float(self.sigmas[level - 1])


def perturb(action, sigma, eps):
    """a + sigma * eps, unclamped (the denoiser re-bounds its output)."""
    return np.asarray(action) + sigma * np.asarray(eps)


class ConsistencyPolicy(Module):
    def __init__(self, latent_dim, skill_dim, stream, action_dim=2,
                 hidden=128, embed_dim=16):
        self.skill_dim = skill_dim
        self.action_dim = action_dim
        self.skill_embed = Linear(skill_dim, embed_dim, stream.child("embed"))
        self.null_embed = T.Tensor(
            stream.child("null").normal(0.0, 0.1, (1, embed_dim)), requires_grad=True
        )
        self.trunk = MLP(
            [latent_dim + action_dim + 1 + embed_dim + 1, hidden, hidden, action_dim],
            stream.child("trunk"), first_layer_norm=True, out_tanh=True,
        )
        self.eval_count = 0

    def denoise(self, s, a_t, sigma_col, z=None):
        """One denoiser evaluation over a batch.

        z is a Tensor (b, d) for the conditioned branch or None for the
        unconditional one; the flag channel separates the two regardless
        of the embedding values.
        """
        b = s.shape[0]
        ones = T.Tensor(np.ones((b, 1)))
        if z is None:
            emb = T.matmul(ones, self.null_embed)
            flag = ones
        else:
            emb = self.skill_embed(z)
            flag = T.Tensor(np.zeros((b, 1)))
        sig = sigma_col if isinstance(sigma_col, T.Tensor) else T.Tensor(sigma_col)
        self.eval_count += 1
        return self.trunk(T.concat([s, a_t, sig, emb, flag]))


def cfg_action(policy, s, a_t, sigma_col, z, omega):
    """Classifier-free-guided denoising, clamped to the action box."""
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    g_cond = policy.denoise(s, a_t, sigma_col, z)
    g_unc = policy.denoise(s, a_t, sigma_col, None)
    guided = T.add(g_unc, T.scale(T.sub(g_cond, g_unc), omega))
    return T.clip(guided, -1.0, 1.0)


def act(policy, schedule, latent, skill, omega, stream, mode="eval"):
    """Single-step action synthesis from the top noise level.

    Exactly one conditioned + one unconditional denoiser evaluation; train
    mode adds clipped Gaussian exploration noise.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    latent = np.atleast_2d(latent)
    b = latent.shape[0]
    sigma_top = schedule.sigma(len(schedule))
    a_n = stream.normal(0.0, sigma_top, (b, policy.action_dim))
    skill = np.atleast_2d(skill)
    if skill.shape[0] == 1 and b > 1:
        skill = np.repeat(skill, b, axis=0)
    with T.tape_scope():
        a = cfg_action(
            policy, T.Tensor(latent), T.Tensor(a_n),
            np.full((b, 1), sigma_top), T.Tensor(skill), omega,
        ).data
    if mode == "train":
        noise = np.clip(
            stream.normal(0.0, EXPLORE_STD, a.shape), -EXPLORE_CLIP, EXPLORE_CLIP
        )
        a = np.clip(a + noise, -1.0, 1.0)
    return a[0] if b == 1 else a


# ---------------------------------------------------------------------------
# training losses

def q_loss(policy, successor_model, s, z, omega, schedule, stream):
    """L_Q = -mean psi(s, pi(s, z), z)^T z; gradients reach the policy only
    through the synthesized action."""
    n = s.shape[0]
    sigma_top = schedule.sigma(len(schedule))
    a_n = stream.normal(0.0, sigma_top, (n, policy.action_dim))
    st, zt = T.Tensor(s), T.Tensor(z)
    a_pi = cfg_action(policy, st, T.Tensor(a_n), np.full((n, 1), sigma_top), zt, omega)
    psi = successor_model.successor(st, a_pi, zt)
    return T.scale(T.tsum(T.mul(psi, zt)), -1.0 / n)


def _distinct_levels(stream, n, n_levels):
    a = stream.integers(0, n_levels, n)
    b = (a + stream.integers(1, n_levels, n)) % n_levels
    return a + 1, b + 1


def _paired_noisy(base, schedule, t1, t2, eps):
    """Two perturbations of the same actions along one noise ray; returns
    the lower/higher scale versions and their sigma columns."""
    s1 = schedule.sigmas[t1 - 1]
    s2 = schedule.sigmas[t2 - 1]
    lo = np.minimum(s1, s2)
    hi = np.maximum(s1, s2)
    return (
        perturb(base, lo[:, None], eps), lo[:, None],
        perturb(base, hi[:, None], eps), hi[:, None],
    )


def bc1_loss(policy, policy_target, s, a_data, z, schedule, stream):
    """Conditioned behavior consistency across two noise levels of the same
    perturbation; the lower-noise branch is the EMA anchor."""
    n = s.shape[0]
    t1, t2 = _distinct_levels(stream, n, len(schedule))
    eps = stream.normal(0.0, 1.0, (n, policy.action_dim))
    a_lo, sig_lo, a_hi, sig_hi = _paired_noisy(a_data, schedule, t1, t2, eps)
    st, zt = T.Tensor(s), T.Tensor(z)
    anchor = policy_target.denoise(st, T.Tensor(a_lo), sig_lo, zt).data
    online = policy.denoise(st, T.Tensor(a_hi), sig_hi, zt)
    return T.scale(T.sqnorm(T.sub(online, T.Tensor(anchor))), 1.0 / n)


def bc2_loss(policy, policy_target, s, schedule, stream, omega):
    """Unconditional consistency on noisy actions drawn from the EMA policy
    under fresh random skills; only the null branch receives gradients."""
    n = s.shape[0]
    z_rand = sample_skills(stream.child("z"), n, policy.skill_dim)
    sigma_top = schedule.sigma(len(schedule))
    a_n = stream.normal(0.0, sigma_top, (n, policy.action_dim))
    st = T.Tensor(s)
    a_rand = cfg_action(
        policy_target, st, T.Tensor(a_n), np.full((n, 1), sigma_top),
        T.Tensor(z_rand), omega,
    ).data
    t1, t2 = _distinct_levels(stream, n, len(schedule))
    eps = stream.normal(0.0, 1.0, (n, policy.action_dim))
    a_lo, sig_lo, a_hi, sig_hi = _paired_noisy(a_rand, schedule, t1, t2, eps)
    anchor = policy_target.denoise(st, T.Tensor(a_lo), sig_lo, None).data
    online = policy.denoise(st, T.Tensor(a_hi), sig_hi, None)
    return T.scale(T.sqnorm(T.sub(online, T.Tensor(anchor))), 1.0 / n)


def policy_update(policy, policy_target, successor_model, optimizer,
                  s, z, a_data, omega, lambda1, lambda2, schedule, stream):
    """One Adam step on the policy parameters from the combined objective
    L_Q + lambda1 * L_bc1 + lambda2 * L_bc2."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be >= 0")
    with T.tape_scope():
        l_q = q_loss(policy, successor_model, s, z, omega, schedule,
                     stream.child("q"))
        l_b1 = bc1_loss(policy, policy_target, s, a_data, z, schedule,
                        stream.child("bc1"))
        l_b2 = bc2_loss(policy, policy_target, s, schedule,
                        stream.child("bc2"), omega)
        total = T.add(T.add(l_q, T.scale(l_b1, lambda1)), T.scale(l_b2, lambda2))
        vals = {"q": l_q.item(), "bc1": l_b1.item(), "bc2": l_b2.item(),
                "total": total.item()}
        if not all(np.isfinite(v) for v in vals.values()):
            raise FloatingPointError(f"non-finite policy loss: {vals}")
        T.backward(total)
    optimizer.step()
    return vals
