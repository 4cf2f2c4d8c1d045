"""Inverse-RL gradient estimators for goal-conditioned route choice.

One family, four entry points:

- ``receding_horizon_gradient``: H softmax backups from max-reward values,
  then a deterministic greedy tail.  The horizon trades gradient quality
  against planning cost.
- ``maxent_gradient``: fully converged softmax values (the H -> inf limit),
  with selectable backward initialization.
- ``birl_gradient``: one softmax step on top of max-reward values (H = 1).
- ``mmp_gradient``: margin-augmented best-path matching (H = 0, no
  temperature).

All estimators return ascent directions: step the model parameters by
``+lr * gradient`` to increase demonstration likelihood (or decrease margin
loss).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InfeasibilityError, ValidationError
from .graph import GoalView, RoadGraph, Trajectory
from .planners import (Policy, dijkstra_values, greedy_path, greedy_policy,
                       policy_from_q, power_iteration_backward, rollout,
                       slot_rewards, softmax_backup)
from .rewards import RewardModel, backprop, edge_rewards

_ALGS = ("receding_horizon", "maxent", "birl", "mmp")
_INITS = ("onehot", "dijkstra")


@dataclass
class IrlConfig:
    algorithm: str = "receding_horizon"
    horizon: float = 10.0          # receding_horizon only; nonnegative int or inf
    temperature: float = 1.0
    margin: float = 1.0            # mmp only
    init: str = "dijkstra"         # maxent backward initialization
    tol: float = 1e-9
    max_iters: int | None = None

    def __post_init__(self):
        if self.algorithm not in _ALGS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive")
        if self.margin < 0:
            raise ValidationError("margin must be nonnegative")
        if self.init not in _INITS:
            raise ValidationError(f"unknown init {self.init!r}")
        h = self.horizon
        if not (math.isinf(h) or (h >= 0 and float(h).is_integer())):
            raise ValidationError("horizon must be a nonnegative integer or inf")


@dataclass
class GradientReport:
    gradient: np.ndarray | None
    nll: float | None = None       # negative log-likelihood when defined
    loss: float | None = None      # margin loss (mmp)
    skipped: bool = False
    reason: str = ""
    converged: bool = True
    backward_iters: int = 0
    rollout_steps: int = 0
    truncated: bool = False


def _skipped(reason: str) -> GradientReport:
    return GradientReport(gradient=None, skipped=True, reason=reason, converged=False)


def state_mass(g: RoadGraph, nodes) -> np.ndarray:
    m = np.zeros(g.num_nodes)
    np.add.at(m, np.fromiter(nodes, dtype=np.int64), 1.0)
    return m


def edge_mass_of(g: RoadGraph, edges) -> np.ndarray:
    m = np.zeros(g.num_edges)
    np.add.at(m, np.fromiter(edges, dtype=np.int64), 1.0)
    return m


def trajectory_nll(g: RoadGraph, traj: Trajectory,
                   policy_at: "list[Policy] | Policy") -> float:
    """-sum_t log pi_t(a_t | s_t); policies may vary per step."""
    nll = 0.0
    for t, e in enumerate(traj.edges):
        pol = policy_at[t] if isinstance(policy_at, list) else policy_at
        p = pol.probs[g.edge_src[e], g.edge_slot[e]]
        if p <= 0.0:
            return math.inf
        nll -= math.log(p)
    return nll


def _check_demo(g: RoadGraph, traj: Trajectory) -> None:
    traj.validate(g)
    if len(traj.edges) < 1:
        raise ValidationError("demonstration has no edges")


# ---------------------------------------------------------------------------
# fully converged softmax values (the infinite-horizon limit)


def maxent_gradient(model: RewardModel, g: RoadGraph, traj: Trajectory,
                    cfg: IrlConfig) -> GradientReport:
    _check_demo(g, traj)
    gv = GoalView(g, traj.nodes[-1])
    r = edge_rewards(model, g)
    v, iters, conv = power_iteration_backward(
        gv, r, temperature=cfg.temperature, init=cfg.init,
        tol=cfg.tol, max_iters=cfg.max_iters)
    if not conv:
        rep = _skipped("backward pass did not converge")
        rep.backward_iters = iters
        return rep
    origin = traj.nodes[0]
    if np.isneginf(v[origin]):
        return _skipped("origin cannot reach destination")
    q, v_pol = softmax_backup(gv, slot_rewards(gv, r), v, cfg.temperature)
    pol = policy_from_q(gv, q, v_pol)
    roll = rollout(gv, [(pol, None)], state_mass(g, [origin]))
    residual = (edge_mass_of(g, traj.edges) - roll.edge_mass) / cfg.temperature
    grad = backprop(model, g, residual)
    nll = trajectory_nll(g, traj, pol)
    return GradientReport(gradient=grad, nll=nll, converged=True,
                          backward_iters=iters, rollout_steps=roll.steps,
                          truncated=roll.truncated)


# ---------------------------------------------------------------------------
# one softmax step over max-reward values


def birl_gradient(model: RewardModel, g: RoadGraph, traj: Trajectory,
                  cfg: IrlConfig) -> GradientReport:
    _check_demo(g, traj)
    gv = GoalView(g, traj.nodes[-1])
    r = edge_rewards(model, g)
    v_best = dijkstra_values(gv, r)
    origin = traj.nodes[0]
    if np.isneginf(v_best[origin]):
        return _skipped("origin cannot reach destination")
    # softmax over optimal action values: Q = (r + v_best(s')) / T
    rs = slot_rewards(gv, r)
    tgt = np.where(gv.slot_valid, g.slot_target, 0)
    q = (rs + v_best[tgt]) / cfg.temperature
    q[~gv.slot_valid] = -np.inf
    v_soft = logsumexp(q, axis=1)
    v_soft[gv.destination] = 0.0
    pol_soft = policy_from_q(gv, q, v_soft)
    pol_greedy = greedy_policy(gv, r, v_best)
    demo_states = state_mass(g, traj.nodes)
    suffix_states = state_mass(g, traj.nodes[1:])
    roll_theta = rollout(gv, [(pol_soft, 1), (pol_greedy, None)], demo_states)
    roll_star = rollout(gv, [(pol_greedy, None)], suffix_states)
    rho_star = roll_star.edge_mass + edge_mass_of(g, traj.edges)
    residual = (rho_star - roll_theta.edge_mass) / cfg.temperature
    grad = backprop(model, g, residual)
    nll = trajectory_nll(g, traj, pol_soft)
    return GradientReport(gradient=grad, nll=nll, converged=True,
                          rollout_steps=roll_theta.steps + roll_star.steps,
                          truncated=roll_theta.truncated or roll_star.truncated)


# ---------------------------------------------------------------------------
# margin-augmented best-path matching (temperature-free)


def mmp_gradient(model: RewardModel, g: RoadGraph, traj: Trajectory,
                 cfg: IrlConfig) -> GradientReport:
    _check_demo(g, traj)
    gv = GoalView(g, traj.nodes[-1])
    r = edge_rewards(model, g)
    margins = np.full(g.num_edges, cfg.margin)
    margins[g.connector_flags] = 0.0
    margins[list(traj.edges)] = 0.0
    r_aug = r + margins
    v_aug = dijkstra_values(gv, r_aug)
    origin = traj.nodes[0]
    if np.isneginf(v_aug[origin]):
        return _skipped("origin cannot reach destination")
    best = greedy_path(gv, r_aug, origin, v=v_aug)
    if best is None:
        return _skipped("greedy walk failed to reach the destination")
    rho_tau = edge_mass_of(g, traj.edges)
    rho_best = edge_mass_of(g, best.edges)
    loss = float(r_aug @ rho_best - r @ rho_tau)
    grad = backprop(model, g, rho_tau - rho_best)
    return GradientReport(gradient=grad, loss=loss, converged=True,
                          rollout_steps=len(best.edges))


# ---------------------------------------------------------------------------
# the general receding-horizon estimator


def receding_horizon_gradient(model: RewardModel, g: RoadGraph,
                              traj: Trajectory, cfg: IrlConfig) -> GradientReport:
    _check_demo(g, traj)
    horizon = cfg.horizon
    gv = GoalView(g, traj.nodes[-1])
    r = edge_rewards(model, g)
    v_best = dijkstra_values(gv, r)
    origin = traj.nodes[0]
    if np.isneginf(v_best[origin]):
        return _skipped("origin cannot reach destination")
    pol_greedy = greedy_policy(gv, r, v_best)
    rs = slot_rewards(gv, r)
    backward_iters = 0
    pol_soft: Policy | None = None
    if math.isinf(horizon):
        v, backward_iters, conv = power_iteration_backward(
            gv, r, temperature=cfg.temperature, init="dijkstra",
            tol=cfg.tol, max_iters=cfg.max_iters)
        if not conv:
            rep = _skipped("backward pass did not converge")
            rep.backward_iters = backward_iters
            return rep
        q, v_pol = softmax_backup(gv, rs, v, cfg.temperature)
        pol_soft = policy_from_q(gv, q, v_pol)
    elif horizon >= 1:
        v = v_best / cfg.temperature
        v[gv.destination] = 0.0
        backward_iters = int(horizon)
        for _ in range(backward_iters):
            q, v = softmax_backup(gv, rs, v, cfg.temperature)
        pol_soft = policy_from_q(gv, q, v)

    demo_states = state_mass(g, traj.nodes)
    suffix_states = state_mass(g, traj.nodes[1:])

    def schedule(soft_steps: float) -> list[tuple[Policy, int | None]]:
        out: list[tuple[Policy, int | None]] = []
        if pol_soft is not None and soft_steps != 0:
            out.append((pol_soft, None if math.isinf(soft_steps) else int(soft_steps)))
        if not math.isinf(soft_steps):
            out.append((pol_greedy, None))
        return out

    roll_theta = rollout(gv, schedule(horizon), demo_states)
    roll_star = rollout(gv, schedule(horizon - 1 if horizon >= 1 else 0),
                        suffix_states)
    rho_star = roll_star.edge_mass + edge_mass_of(g, traj.edges)
    residual = (rho_star - roll_theta.edge_mass) / cfg.temperature
    grad = backprop(model, g, residual)

    # diagnostic likelihood of the demo under the time-varying policy:
    # softmax for the first `horizon` steps, greedy afterwards
    per_step = [pol_soft if (pol_soft is not None and t < horizon) else pol_greedy
                for t in range(len(traj.edges))]
    nll = trajectory_nll(g, traj, per_step)
    return GradientReport(gradient=grad, nll=nll, converged=True,
                          backward_iters=backward_iters,
                          rollout_steps=roll_theta.steps + roll_star.steps,
                          truncated=roll_theta.truncated or roll_star.truncated)


ALGORITHMS = {
    "receding_horizon": receding_horizon_gradient,
    "maxent": maxent_gradient,
    "birl": birl_gradient,
    "mmp": mmp_gradient,
}


def demo_gradient(model: RewardModel, g: RoadGraph, traj: Trajectory,
                  cfg: IrlConfig) -> GradientReport:
    return ALGORITHMS[cfg.algorithm](model, g, traj, cfg)


def batch_gradient(model: RewardModel, g: RoadGraph,
                   trajectories: list[Trajectory], cfg: IrlConfig
                   ) -> tuple[np.ndarray | None, list[GradientReport]]:
    """Mean ascent direction over the non-skipped demos, in input order."""
    reports = [demo_gradient(model, g, traj, cfg) for traj in trajectories]
    grads = [rep.gradient for rep in reports if not rep.skipped]
    if not grads:
        return None, reports
    return np.mean(grads, axis=0), reports


# ---------------------------------------------------------------------------
# sampling synthetic demonstrations from a reward table


def sample_demonstrations(model: RewardModel, g: RoadGraph, num_demos: int, *,
                          rng_seed: int = 0, temperature: float = 1.0,
                          max_len: int | None = None,
                          pairs: list[tuple[int, int]] | None = None
                          ) -> list[Trajectory]:
    """Draw loop-free demo paths from the converged stochastic policy
    (or the deterministic best path at temperature 0).  Deterministic under
    the seed.  Walks that revisit a node, dead-end, or overrun max_len are
    rejected and resampled.
    """
    rng = np.random.default_rng(rng_seed)
    r = edge_rewards(model, g)
    if max_len is None:
        max_len = 4 * g.num_nodes
    fixed_pairs = pairs is not None
    if fixed_pairs and len(pairs) != num_demos:
        raise ValidationError("pairs length != num_demos")
    policies: dict[int, Policy] = {}
    values: dict[int, np.ndarray] = {}

    def policy_for(dest: int) -> tuple[Policy, np.ndarray]:
        if dest not in policies:
            gv = GoalView(g, dest)
            if temperature == 0.0:
                v = dijkstra_values(gv, r)
                pol = greedy_policy(gv, r, v)
            else:
                v, _, conv = power_iteration_backward(
                    gv, r, temperature=temperature, init="dijkstra")
                if not conv:
                    raise InfeasibilityError(
                        f"softmax values for destination {dest} did not converge")
                pol = policy_from_values_cached(gv, v)
            policies[dest] = pol
            values[dest] = v
        return policies[dest], values[dest]

    def policy_from_values_cached(gv: GoalView, v: np.ndarray) -> Policy:
        q, v_pol = softmax_backup(gv, slot_rewards(gv, r), v, temperature)
        return policy_from_q(gv, q, v_pol)

    out: list[Trajectory] = []
    failures = 0
    while len(out) < num_demos:
        if failures > 1000 + 50 * num_demos:
            raise InfeasibilityError("could not sample demonstrations "
                                     "(rewards may be near the feasibility boundary)")
        if fixed_pairs:
            origin, dest = pairs[len(out)]
        else:
            origin, dest = (int(x) for x in rng.choice(g.num_nodes, size=2, replace=False))
        pol, v = policy_for(dest)
        if np.isneginf(v[origin]):
            if fixed_pairs:
                raise ValidationError(f"pair ({origin}, {dest}) is disconnected")
            failures += 1
            continue
        walk = _sample_walk(g, pol, origin, dest, rng, max_len)
        if walk is None:
            failures += 1
            continue
        out.append(walk)
    return out


def _sample_walk(g: RoadGraph, pol: Policy, origin: int, dest: int,
                 rng: np.random.Generator, max_len: int) -> Trajectory | None:
    node = origin
    seen = {origin}
    nodes = [origin]
    edges: list[int] = []
    for _ in range(max_len):
        if node == dest:
            return Trajectory(nodes=tuple(nodes), edges=tuple(edges))
        if pol.dead[node]:
            return None
        row = pol.probs[node]
        total = row.sum()
        if total <= 0:
            return None
        slot = int(rng.choice(g.max_out_degree, p=row / total))
        nxt = int(g.slot_target[node, slot])
        if nxt in seen:
            return None
        edges.append(int(g.slot_edge[node, slot]))
        nodes.append(nxt)
        seen.add(nxt)
        node = nxt
    return None
