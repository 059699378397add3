"""Exact finite-MDP ground truth.

Successor measures by direct linear solve over state-action pairs, exact
Q-functions via both the measure route and Bellman evaluation, and machine
checks of the two classical bounds plus the successor-feature
generalization bound.  Policies are deterministic tables (greedy with
lowest-index tie-breaking) or stochastic (S, A) matrices.

Dual-norm convention: the L2 norm on feature errors pairs with the L2 norm
of the skill vector (self-dual), and every report records this.
"""

from dataclasses import dataclass, field

import numpy as np

VI_TOL = 1e-12
VI_MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class TabularMDP:
    transitions: np.ndarray   # (S, A, S), rows sum to 1
    features: np.ndarray      # (S*A, d) or (S, d)
    gamma: float

    def __post_init__(self):
        p = self.transitions
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition tensor must be (S, A, S), got {p.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("each P[s, a] must be a probability vector")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be inside (0, 1), got {self.gamma}")

    @property
    def n_states(self):
        return self.transitions.shape[0]

    @property
    def n_actions(self):
        return self.transitions.shape[1]

    def features_on_pairs(self):
        """Features broadcast to state-action pairs, (S*A, d)."""
        if self.features.shape[0] == self.n_states * self.n_actions:
            return self.features
        return np.repeat(self.features, self.n_actions, axis=0)


def random_mdp(stream, n_states=5, n_actions=3, feature_dim=4, gamma=0.95,
               features_on="sa"):
    """Dirichlet transition rows and standard-normal features."""
    raw = stream.gen.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    rows = n_states * n_actions if features_on == "sa" else n_states
    feats = stream.normal(0.0, 1.0, (rows, feature_dim))
    return TabularMDP(transitions=raw, features=feats, gamma=gamma)


def uniform_policy(mdp):
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def policy_table(policy, n_states, n_actions):
    """Accept a deterministic (S,) action index array or an (S, A) matrix."""
    pol = np.asarray(policy)
    if pol.ndim == 1:
        table = np.zeros((n_states, n_actions))
        table[np.arange(n_states), pol.astype(int)] = 1.0
        return table
    return pol.astype(np.float64)


def pair_transition_matrix(mdp, policy):
    """P_pi over state-action pairs: (sa) -> (s'a') with a' ~ pi(s')."""
    s, a = mdp.n_states, mdp.n_actions
    pol = policy_table(policy, s, a)
    p = mdp.transitions.reshape(s * a, s)
    return (p[:, :, None] * pol[None, :, :]).reshape(s * a, s * a)


def exact_successor_measure(mdp, policy):
    """M = sum_t gamma^t P_t over pairs, t = 0 included: (I - gamma P)^-1."""
    p_pi = pair_transition_matrix(mdp, policy)
    n = p_pi.shape[0]
    return np.linalg.solve(np.eye(n) - mdp.gamma * p_pi, np.eye(n))


def successor_features(mdp, policy, convention="include-current"):
    """Exact successor features of a policy, (S*A, d).

    "include-current" sums features from t = 0 (the measure convention);
    "next-state" starts the sum at the next state (the TD convention whose
    one-step identity is psi = E[phi(s') + gamma psi(s', a')]).
    """
    phi = mdp.features_on_pairs()
    m = exact_successor_measure(mdp, policy)
    if convention == "include-current":
        return m @ phi
    if convention != "next-state":
        raise ValueError(f"unknown convention {convention!r}")
    p_pi = pair_transition_matrix(mdp, policy)
    rhs = p_pi @ phi
    n = p_pi.shape[0]
    return np.linalg.solve(np.eye(n) - mdp.gamma * p_pi, rhs)


def exact_q(mdp, policy, reward_sa):
    """Q = M r over pairs; reward is (S, A) or flat (S*A,)."""
    r = np.asarray(reward_sa, dtype=np.float64).reshape(-1)
    m = exact_successor_measure(mdp, policy)
    return (m @ r).reshape(mdp.n_states, mdp.n_actions)


def policy_evaluation(mdp, policy, reward_sa, tol=VI_TOL, max_sweeps=VI_MAX_SWEEPS):
    """Independent Bellman-iteration route to the same Q (Prop. 1 check)."""
    s, a = mdp.n_states, mdp.n_actions
    pol = policy_table(policy, s, a)
    r = np.asarray(reward_sa, dtype=np.float64).reshape(s, a)
    q = np.zeros((s, a))
    for _ in range(max_sweeps):
        v = (pol * q).sum(axis=1)
        nxt = r + mdp.gamma * mdp.transitions @ v
        if np.max(np.abs(nxt - q)) < tol:
            return nxt
        q = nxt
    return q


def value_iteration(mdp, reward_sa, tol=VI_TOL, max_sweeps=VI_MAX_SWEEPS):
    s, a = mdp.n_states, mdp.n_actions
    r = np.asarray(reward_sa, dtype=np.float64).reshape(s, a)
    q = np.zeros((s, a))
    for _ in range(max_sweeps):
        nxt = r + mdp.gamma * mdp.transitions @ q.max(axis=1)
        if np.max(np.abs(nxt - q)) < tol:
            return nxt
        q = nxt
    return q


def greedy(q):
    """Deterministic argmax with lowest-index tie-breaking."""
    return np.argmax(q, axis=1)


# ---------------------------------------------------------------------------
# verification reports

@dataclass
class Prop1Report:
    max_abs_diff: float
    passed: bool


def verify_prop1(mdp, policy, reward_sa, tol=1e-8):
    """Measure route vs Bellman route to the Q-function must coincide."""
    q_measure = exact_q(mdp, policy, reward_sa)
    q_bellman = policy_evaluation(mdp, policy, reward_sa)
    diff = float(np.max(np.abs(q_measure - q_bellman)))
    return Prop1Report(max_abs_diff=diff, passed=diff < tol)


@dataclass
class Prop2Report:
    sup_f_qstar: float
    sup_f_qpif: float
    sup_qpif_qstar: float
    slack_first: float
    slack_second: float
    passed: bool


def verify_prop2(mdp, f_table, reward_sa):
    """Both greedy-policy error bounds for an arbitrary score table f."""
    f = np.asarray(f_table, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    pi_f = greedy(f)
    q_star = value_iteration(mdp, reward_sa)
    q_pif = policy_evaluation(mdp, pi_f, reward_sa)
    sup_f_qstar = float(np.max(np.abs(f - q_star)))
    sup_f_qpif = float(np.max(np.abs(f - q_pif)))
    sup_qpif_qstar = float(np.max(np.abs(q_pif - q_star)))
    c = 1.0 / (1.0 - mdp.gamma)
    slack1 = 2.0 * c * sup_f_qpif - sup_f_qstar
    slack2 = 3.0 * c * sup_f_qpif - sup_qpif_qstar
    return Prop2Report(
        sup_f_qstar=sup_f_qstar,
        sup_f_qpif=sup_f_qpif,
        sup_qpif_qstar=sup_qpif_qstar,
        slack_first=slack1,
        slack_second=slack2,
        passed=slack1 >= -1e-10 and slack2 >= -1e-10,
    )


@dataclass
class TheoremReport:
    value_gap: float            # ||V^{pi_hat} - V*||_inf
    q_gap: float                # sup |psi_hat^T z - Q*|
    feature_error: float        # sup_sa ||psi_hat - psi^{pi_hat}||_2
    bound_value: float          # 3 ||z||_2 / (1 - gamma) * feature_error
    bound_q: float              # 2 ||z||_2 / (1 - gamma) * feature_error
    tightness_value: float      # value_gap / bound_value (0 when both 0)
    tightness_q: float
    dual_norm: str = "l2"
    passed: bool = False
    details: dict = field(default_factory=dict)


def _ratio(lhs, rhs):
    if rhs == 0.0:
        return 0.0 if lhs == 0.0 else np.inf
    return lhs / rhs


def verify_theorem(mdp, z, perturbation_scale, stream):
    """Generalization bound check with reward r = Phi z.

    The perturbation is applied around the exact successor features of the
    optimal policy, the greedy policy is re-derived from the perturbed
    features, and all quantities on both sides are computed exactly.
    """
    phi = mdp.features_on_pairs()
    z = np.asarray(z, dtype=np.float64)
    reward = phi @ z
    q_star = value_iteration(mdp, reward)
    pi_star = greedy(q_star)
    psi_base = successor_features(mdp, pi_star, convention="include-current")
    noise = stream.normal(0.0, 1.0, psi_base.shape) if perturbation_scale else 0.0
    psi_hat = psi_base + perturbation_scale * noise

    scores = (psi_hat @ z).reshape(mdp.n_states, mdp.n_actions)
    pi_hat = greedy(scores)
    psi_true = successor_features(mdp, pi_hat, convention="include-current")
    q_pi_hat = exact_q(mdp, pi_hat, reward)

    v_star = q_star.max(axis=1)
    v_hat = q_pi_hat[np.arange(mdp.n_states), pi_hat]
    value_gap = float(np.max(np.abs(v_hat - v_star)))
    q_gap = float(np.max(np.abs(scores - q_star)))
    feature_error = float(np.max(np.linalg.norm(psi_hat - psi_true, axis=1)))
    c = np.linalg.norm(z) / (1.0 - mdp.gamma)
    bound_value = 3.0 * c * feature_error
    bound_q = 2.0 * c * feature_error
    return TheoremReport(
        value_gap=value_gap,
        q_gap=q_gap,
        feature_error=feature_error,
        bound_value=bound_value,
        bound_q=bound_q,
        tightness_value=_ratio(value_gap, bound_value),
        tightness_q=_ratio(q_gap, bound_q),
        passed=(value_gap <= bound_value + 1e-10) and (q_gap <= bound_q + 1e-10),
        details={"perturbation_scale": perturbation_scale},
    )


def run_theory_suite(stream, n_mdps=10, n_perturbations=10,
                     scales=(0.01, 0.1, 1.0), n_prop2=200):
    """The full battery used by the verify-theory CLI command."""
    results = {"prop1": [], "prop2": [], "theorem": [], "dual_norm": "l2"}
    for i in range(n_mdps):
        s = stream.child("mdp", i)
        mdp = random_mdp(
            s.child("build"),
            n_states=int(s.child("ns").integers(3, 9)),
            n_actions=int(s.child("na").integers(2, 5)),
            gamma=float(s.child("gamma").uniform(0.8, 0.99)),
        )
        reward = s.child("reward").normal(0, 1, mdp.n_states * mdp.n_actions)
        pol = uniform_policy(mdp)
        results["prop1"].append(verify_prop1(mdp, pol, reward))
        for j in range(max(1, n_prop2 // n_mdps)):
            f = s.child("f", j).normal(0, 2, (mdp.n_states, mdp.n_actions))
            results["prop2"].append(verify_prop2(mdp, f, reward))
        z = s.child("z").normal(0, 1, mdp.features.shape[1])
        for scale in scales:
            for j in range(max(1, n_perturbations // len(scales))):
                results["theorem"].append(
                    verify_theorem(mdp, z, scale, s.child("pert", str(scale), j))
                )
    results["all_passed"] = (
        all(r.passed for r in results["prop1"])
        and all(r.passed for r in results["prop2"])
        and all(r.passed for r in results["theorem"])
    )
    return results
