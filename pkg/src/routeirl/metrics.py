"""Route-prediction metrics and the two-proportion significance test.

A prediction is the deterministic highest-reward path (greedy walk over
max-reward values), never a stochastic sample.  Exact-match accuracy compares
full edge sequences; IoU compares unique edge-id sets.  When the evaluation
graph came out of compression, both the demo and the prediction are expanded
back to original edge ids first, so metrics are invariant under compression.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ValidationError
from .graph import GoalView, MergeMap, RoadGraph, Trajectory
from .planners import (dijkstra_values, greedy_path, power_iteration_backward,
                       trajectory_policy_nll)
from .rewards import RewardModel, edge_rewards


@dataclass
class Metrics:
    acc: float
    iou: float
    nll: float | None
    n: int
    unreachable: int

    def to_dict(self) -> dict:
        return {"acc": self.acc, "iou": self.iou, "nll": self.nll,
                "n": self.n, "unreachable": self.unreachable}


def _reward_table(model_or_table, g: RoadGraph) -> np.ndarray:
    if isinstance(model_or_table, RewardModel):
        return edge_rewards(model_or_table, g)
    table = np.asarray(model_or_table, dtype=np.float64)
    if table.shape[0] != g.num_edges:
        raise ValidationError("reward table length != edge count")
    return table


def evaluate(model_or_table, demos: list[Trajectory], g: RoadGraph, *,
             temperature: float = 1.0, nll: bool = True,
             merge_map: MergeMap | None = None) -> Metrics:
    """Greedy highest-reward predictions scored against demos.

    nll=True additionally reports the mean demo NLL under the converged
    softmax policy; it is omitted (None) when any required backward pass
    fails to converge, mirroring algorithms for which the likelihood is
    undefined.
    """
    if not demos:
        raise ValidationError("no demos to evaluate")
    rew = _reward_table(model_or_table, g)

    def expand(edges) -> list[int]:
        if merge_map is None:
            return [int(e) for e in edges]
        return [int(e) for e in merge_map.expand_edges(edges)]

    values: dict[int, np.ndarray] = {}
    soft_values: dict[int, np.ndarray | None] = {}
    acc_sum = 0.0
    iou_sum = 0.0
    nll_sum = 0.0
    nll_ok = nll
    unreachable = 0
    for traj in demos:
        dest = traj.nodes[-1]
        origin = traj.nodes[0]
        if dest not in values:
            values[dest] = dijkstra_values(GoalView(g, dest), rew)
        v = values[dest]
        pred = None
        if not np.isneginf(v[origin]):
            pred = greedy_path(GoalView(g, dest), rew, origin, v=v)
        if pred is None:
            unreachable += 1
        else:
            demo_edges = expand(traj.edges)
            pred_edges = expand(pred.edges)
            if demo_edges == pred_edges:
                acc_sum += 1.0
            a, b = set(demo_edges), set(pred_edges)
            iou_sum += len(a & b) / len(a | b)
        if nll_ok:
            if dest not in soft_values:
                gv = GoalView(g, dest)
                sv, _, conv = power_iteration_backward(
                    gv, rew, temperature=temperature, init="dijkstra")
                soft_values[dest] = sv if conv else None
            sv = soft_values[dest]
            if sv is None:
                nll_ok = False
            else:
                nll_sum += trajectory_policy_nll(GoalView(g, dest), rew, sv,
                                                 traj, temperature)
    n = len(demos)
    return Metrics(acc=acc_sum / n, iou=iou_sum / n,
                   nll=(nll_sum / n) if nll_ok else None,
                   n=n, unreachable=unreachable)


@dataclass
class SignificanceResult:
    z: float
    p_value: float
    degenerate: bool = False


def diff_of_proportions(p1: float, p2: float, n: int) -> SignificanceResult:
    """Two-sided pooled two-proportion z test with equal group sizes n."""
    if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
        raise ValidationError("proportions must lie in [0, 1]")
    if n <= 0:
        raise ValidationError("n must be positive")
    pooled = 0.5 * (p1 + p2)
    if pooled <= 0.0 or pooled >= 1.0:
        return SignificanceResult(z=0.0, p_value=1.0, degenerate=True)
    se = math.sqrt(pooled * (1.0 - pooled) * 2.0 / n)
    z = (p1 - p2) / se
    p = 2.0 * float(norm.sf(abs(z)))
    return SignificanceResult(z=z, p_value=p)
