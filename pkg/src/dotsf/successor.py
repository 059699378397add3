"""Basic features, successor features, skill sampling, and closed-form
skill inference.

The basic feature nets come in twins; each induces a goal-conditioned
value V_i(s, g) = -||phi_i(s) - phi_i(g)|| that is nonpositive and exactly
zero at s = g.  The successor net is trained toward the one-step Bellman
target phi(s') + gamma * psi_target(s', a', z).
"""

import numpy as np

from . import tensor as T
from .nn import MLP, Module


class SingularSystemError(np.linalg.LinAlgError):
    pass


class SuccessorModel(Module):
    def __init__(self, latent_dim, skill_dim, stream, action_dim=2, hidden=128):
        self.latent_dim = latent_dim
        self.skill_dim = skill_dim
        sizes = [latent_dim, hidden, hidden, skill_dim]
        self.phi1 = MLP(sizes, stream.child("phi1"))
        self.phi2 = MLP(sizes, stream.child("phi2"))
        self.psi = MLP(
            [latent_dim + action_dim + skill_dim, hidden, hidden, skill_dim],
            stream.child("psi"),
        )
        # Targets hold requires_grad=False tensors: excluded from optimizers
        # by named_parameters, still present in named_state for checkpoints.
        self.phi1_target = self.phi1.copy_as_target()
        self.phi2_target = self.phi2.copy_as_target()
        self.psi_target = self.psi.copy_as_target()

    def features(self, latents):
        """Gradient-free phi_1 features of numpy latents: (n, m) -> (n, d)."""
        with T.tape_scope():
            return self.phi1(T.Tensor(latents)).data

    def successor(self, s, a, z):
        """Online psi(s, a, z) as a Tensor graph node."""
        return self.psi(T.concat([s, a, z]))


def sample_skill(stream, dim):
    """Uniform draw from the unit sphere S^{d-1}."""
    z = stream.normal(0.0, 1.0, dim)
    return z / np.linalg.norm(z)


def sample_skills(stream, n, dim):
    z = stream.normal(0.0, 1.0, (n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def value_heads(phi_net, s, g):
    """V(s, g) = -||phi(s) - phi(g)||_2 rowwise, as a Tensor graph."""
    return T.scale(T.l2norm_rows(T.sub(phi_net(s), phi_net(g))), -1.0)


def squared_td(reach, v_next, v, gamma):
    """The per-sample temporal-difference residual squared (plain arrays).

    target = r + gamma * (1 - r) * v_next  with r the goal-reach indicator;
    shared between the network loss below and the tabular oracle tests.
    """
    target = reach + gamma * (1.0 - reach) * v_next
    return (target - v) ** 2


def hilp_loss(model, s, s_next, goals, gamma, reach_threshold=0.1):
    """Twin goal-conditioned value loss over latent batches (Tensors built
    from numpy inputs); bootstraps from the min of the target twins."""
    n = s.shape[0]
    reach = (
        np.linalg.norm(s_next - goals, axis=1) < reach_threshold
    ).astype(np.float64)
    st, gt = T.Tensor(s), T.Tensor(goals)
    snt = T.Tensor(s_next)
    # Target values never enter the graph (target nets are untracked).
    v1_next = value_heads(model.phi1_target, snt, gt).data
    v2_next = value_heads(model.phi2_target, snt, gt).data
    v_next = np.minimum(v1_next, v2_next)
    target = T.Tensor(reach + gamma * (1.0 - reach) * v_next)
    loss = None
    for phi in (model.phi1, model.phi2):
        term = T.scale(T.sqnorm(T.sub(value_heads(phi, st, gt), target)), 1.0 / n)
        loss = term if loss is None else T.add(loss, term)
    return loss, {"reach_rate": float(reach.mean())}


def successor_loss(model, s, a, s_next, a_next, z, gamma):
    """Bellman-consistency loss for psi: the basic feature is a fixed
    target here and the bootstrap comes from the EMA successor net."""
    n = s.shape[0]
    with T.tape_scope():
        phi_next = model.phi1(T.Tensor(s_next)).data
    psi_next = model.psi_target(
        T.concat([T.Tensor(s_next), T.Tensor(a_next), T.Tensor(z)])
    ).data
    target = T.Tensor(phi_next + gamma * psi_next)
    psi = model.successor(T.Tensor(s), T.Tensor(a), T.Tensor(z))
    return T.scale(T.sqnorm(T.sub(psi, target)), 1.0 / n)


def successor_update(model, optimizer, s, a, s_next, a_next, goals, z, gamma,
                     reach_threshold=0.1):
    """One joint Adam step on (phi twins, psi); encoder latents come in as
    plain arrays so the encoder cannot receive gradients here."""
    with T.tape_scope():
        l_nu, info = hilp_loss(model, s, s_next, goals, gamma, reach_threshold)
        l_psi = successor_loss(model, s, a, s_next, a_next, z, gamma)
        vals = {"hilp": l_nu.item(), "psi": l_psi.item(), **info}
        if not all(np.isfinite(v) for v in vals.values()):
            raise FloatingPointError(f"non-finite successor loss: {vals}")
        T.backward(T.add(l_nu, l_psi))
    optimizer.step()
    return vals


def infer_skill(features, rewards, ridge_eps=1e-6, normalize=False):
    """Closed-form skill inference: (E[phi phi^T] + eps I)^{-1} E[phi r].

    With all-zero rewards the solution is exactly the zero vector.  A
    singular moment matrix with ridge_eps=0 raises SingularSystemError.
    """
    phis = np.asarray(features, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    if phis.ndim != 2 or phis.shape[0] != r.shape[0]:
        raise ValueError(f"features {phis.shape} do not align with rewards {r.shape}")
    if ridge_eps < 0:
        raise ValueError(f"ridge_eps must be >= 0, got {ridge_eps}")
    n, d = phis.shape
    moment = phis.T @ phis / n + ridge_eps * np.eye(d)
    cross = phis.T @ r / n
    try:
        z = np.linalg.solve(moment, cross)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "feature second-moment matrix is singular; pass ridge_eps > 0"
        ) from exc
    if normalize:
        norm = np.linalg.norm(z)
        if norm > 0:
            z = z / norm
    return z
