"""Sharded mixture-of-experts training.

The global problem is partitioned into geographic cells; each cell gets its
own expert reward model trained only on demonstrations whose destination
lies in the cell.  The global reward table is assembled edge-by-edge from the
expert owning the edge's source node.

The training loop wraps the per-demo gradient estimators with the practical
guard rails that keep the softmax family inside its feasible region: linear
learning-rate warmup, nonpositivity projection after every step, a per-epoch
spectral bound that halves the learning rate near the feasibility boundary,
and a hard per-sample skip whenever a converged backward pass cannot be
certified.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .algorithms import IrlConfig, demo_gradient
from .errors import ValidationError
from .graph import GoalView, RoadGraph, Trajectory, extract_subgraph
from .metrics import evaluate
from .rewards import (RewardModel, edge_rewards, project_nonpositive,
                      save_checkpoint)
from .spectral import cheap_bounds


@dataclass
class Shard:
    cell: int
    subgraph: RoadGraph
    node_ids: np.ndarray            # global node id per local node
    edge_ids: np.ndarray            # global edge id per local edge
    owned_nodes: np.ndarray         # global ids of nodes inside the cell
    demos: list[Trajectory]         # training demos, local ids
    eval_demos: list[Trajectory]    # held-out demos, local ids


@dataclass
class TrainConfig:
    algorithm: str = "receding_horizon"
    horizon: float = 10.0
    temperature: float = 1.0
    margin: float = 1.0
    init: str = "dijkstra"
    optimizer: str = "auto"         # auto | sgd | adam
    lr: float | None = None         # None -> per-model-kind default
    beta1: float = 0.99
    beta2: float = 0.999
    eps: float = 1e-7
    warmup: int = 100
    epochs: int = 200
    steps_per_epoch: int = 100
    batch_size: int = 8
    guard_margin: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.lr is not None and self.lr < 0:
            raise ValidationError("learning rate must be nonnegative")
        if self.warmup < 0 or self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValidationError("bad schedule configuration")
        if self.warmup > self.epochs * self.steps_per_epoch:
            raise ValidationError("warmup exceeds the total step budget")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        if self.optimizer not in ("auto", "sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")

    def irl_config(self) -> IrlConfig:
        return IrlConfig(algorithm=self.algorithm, horizon=self.horizon,
                         temperature=self.temperature, margin=self.margin,
                         init=self.init)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """Flat `key = value` text config; unknown keys are rejected."""
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{ln}: expected `key = value`")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ValidationError(f"{path}:{ln}: unknown key {key!r}")
            kwargs[key] = _parse_value(key, value)
        return cls(**kwargs)


def _parse_value(key: str, value: str):
    if key in ("algorithm", "init", "optimizer"):
        return value
    if key in ("warmup", "epochs", "steps_per_epoch", "batch_size", "rng_seed"):
        return int(value)
    if key == "lr" and value.lower() == "none":
        return None
    return float(value)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray, scale: float) -> np.ndarray:
        return params + (scale * self.lr) * grad


class Adam:
    """Adaptive-moment ascent with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.99, beta2: float = 0.999,
                 eps: float = 1e-7):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, scale: float) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return params + (scale * self.lr) * mhat / (np.sqrt(vhat) + self.eps)


_SGD_LR = {"linear": 0.05, "dense": 0.01}
_ADAM_LR = 1e-5


def make_optimizers(model: RewardModel, cfg: TrainConfig):
    """One optimizer per parameter slice: plain SGD for feature models,
    adaptive moments for per-edge sparse parameters (unless overridden)."""
    out = []
    for kind, sl in model.param_slices():
        if cfg.optimizer == "sgd":
            opt = SGD(cfg.lr if cfg.lr is not None else _SGD_LR.get(kind, 0.05))
        elif cfg.optimizer == "adam":
            opt = Adam(cfg.lr if cfg.lr is not None else _ADAM_LR,
                       cfg.beta1, cfg.beta2, cfg.eps)
        elif kind == "sparse":
            opt = Adam(cfg.lr if cfg.lr is not None else _ADAM_LR,
                       cfg.beta1, cfg.beta2, cfg.eps)
        else:
            opt = SGD(cfg.lr if cfg.lr is not None else _SGD_LR.get(kind, 0.05))
        out.append((sl, opt))
    return out


@dataclass
class TrainHistory:
    steps: list[dict] = field(default_factory=list)
    epoch_bounds: list[float] = field(default_factory=list)
    guard_halvings: int = 0
    early_stopped: bool = False
    checkpoints: list[str] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [rec["loss"] for rec in self.steps]

    def to_csv(self, path: str | Path) -> None:
        cols = ["step", "epoch", "loss", "grad_norm", "skips", "lr_scale",
                "bound", "wall_clock"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for rec in self.steps:
                w.writerow([repr(rec[c]) if isinstance(rec[c], float) else rec[c]
                            for c in cols])


def shard_bound(subgraph: RoadGraph, rew: np.ndarray, destinations,
                temperature: float) -> float:
    """Worst certified upper bound over the shard's demo destinations:
    max over destinations of min(row bound, col bound)."""
    worst = 0.0
    for dest in destinations:
        row, col = cheap_bounds(GoalView(subgraph, dest), rew, temperature)
        worst = max(worst, min(row, col))
    return worst


def _needs_converged_backward(cfg: TrainConfig) -> bool:
    return cfg.algorithm == "maxent" or (
        cfg.algorithm == "receding_horizon" and math.isinf(cfg.horizon))


def train_expert(shard: Shard, model_init: RewardModel, cfg: TrainConfig,
                 checkpoint_dir: str | Path | None = None
                 ) -> tuple[RewardModel, TrainHistory]:
    """Minibatch ascent on the shard's demos; deterministic under the seed.

    Per epoch the spectral bound over the shard's destinations is checked and
    the learning rate halves whenever the bound exceeds 1 - guard_margin.
    Per sample, algorithms that need a converged backward pass are skipped
    outright when the bound cannot certify feasibility (bound >= 1).  An
    epoch in which every sample was skipped stops training early.
    """
    if not shard.demos:
        raise ValidationError("shard has no training demos")
    model = model_init.clone()
    icfg = cfg.irl_config()
    rng = np.random.default_rng(cfg.rng_seed)
    optimizers = make_optimizers(model, cfg)
    history = TrainHistory()
    dests = sorted({traj.nodes[-1] for traj in shard.demos})
    lr_scale = 1.0
    t = 0
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    for epoch in range(cfg.epochs):
        rew = edge_rewards(model, shard.subgraph)
        bound = shard_bound(shard.subgraph, rew, dests, cfg.temperature)
        history.epoch_bounds.append(bound)
        if bound > 1.0 - cfg.guard_margin:
            lr_scale *= 0.5
            history.guard_halvings += 1
        epoch_had_update = False
        for _ in range(cfg.steps_per_epoch):
            t += 1
            t0 = time.perf_counter()
            idx = rng.choice(len(shard.demos), size=cfg.batch_size, replace=True)
            rew = edge_rewards(model, shard.subgraph)
            guard = _needs_converged_backward(cfg)
            bound_by_dest: dict[int, float] = {}
            grads = []
            losses = []
            skips = 0
            for i in idx:
                traj = shard.demos[int(i)]
                dest = traj.nodes[-1]
                if guard:
                    if dest not in bound_by_dest:
                        row, col = cheap_bounds(GoalView(shard.subgraph, dest),
                                                rew, cfg.temperature)
                        bound_by_dest[dest] = min(row, col)
                    if bound_by_dest[dest] >= 1.0:
                        skips += 1
                        continue
                rep = demo_gradient(model, shard.subgraph, traj, icfg)
                if rep.skipped or rep.gradient is None:
                    skips += 1
                    continue
                grads.append(rep.gradient)
                losses.append(rep.nll if rep.nll is not None else rep.loss)
            warm = min(1.0, t / cfg.warmup) if cfg.warmup > 0 else 1.0
            scale = warm * lr_scale
            grad_norm = float("nan")
            loss = float("nan")
            if grads:
                epoch_had_update = True
                batch_grad = np.mean(grads, axis=0)
                grad_norm = float(np.linalg.norm(batch_grad))
                finite = [x for x in losses if x is not None and math.isfinite(x)]
                loss = float(np.mean(finite)) if finite else float("nan")
                params = model.get_params().copy()
                for sl, opt in optimizers:
                    params[sl] = opt.step(params[sl], batch_grad[sl], scale)
                model.set_params(params)
                project_nonpositive(model)
            history.steps.append({
                "step": t, "epoch": epoch, "loss": loss,
                "grad_norm": grad_norm, "skips": skips, "lr_scale": scale,
                "bound": bound, "wall_clock": time.perf_counter() - t0,
            })
        if checkpoint_dir is not None:
            ckpt = str(Path(checkpoint_dir) / f"{epoch}.ckpt")
            save_checkpoint(model, ckpt, metadata={"epoch": epoch})
            history.checkpoints.append(ckpt)
        if not epoch_had_update:
            history.early_stopped = True
            break
    return model, history


# ---------------------------------------------------------------------------
# sharding


def _axis_cells(coords: np.ndarray, bins: int) -> np.ndarray:
    """Balanced assignment of nodes to `bins` intervals along one axis."""
    order = np.argsort(coords, kind="stable")
    cell = np.empty(coords.shape[0], dtype=np.int64)
    for b, chunk in enumerate(np.array_split(order, bins)):
        cell[chunk] = b
    return cell


def partition_geographic(g: RoadGraph, demos: list[Trajectory], m: int, *,
                         eval_fraction: float = 0.0, rng_seed: int = 0
                         ) -> tuple[list[Shard], list[Trajectory]]:
    """Split the graph into m balanced coordinate cells and assign each demo
    to the cell of its destination.  Demos not fully contained in their
    shard's subgraph are dropped (and returned).  Deterministic.
    """
    if m < 1:
        raise ValidationError("need at least one cell")
    if m > g.num_nodes:
        raise ValidationError("more cells than nodes")
    mx = 1
    for d in range(1, int(math.isqrt(m)) + 1):
        if m % d == 0:
            mx = d
    my = m // mx
    bx = _axis_cells(g.coords[:, 0], my)   # my columns along x
    by = _axis_cells(g.coords[:, 1], mx)
    node_cell = bx * mx + by
    rng = np.random.default_rng(rng_seed)
    shards: list[Shard] = []
    dropped: list[Trajectory] = []
    demos_by_cell: dict[int, list[Trajectory]] = {c: [] for c in range(m)}
    for traj in demos:
        demos_by_cell[int(node_cell[traj.nodes[-1]])].append(traj)
    for cell in range(m):
        owned = np.nonzero(node_cell == cell)[0]
        sub, node_ids, edge_ids = extract_subgraph(g, owned)
        node_local = {int(n): i for i, n in enumerate(node_ids)}
        edge_local = {int(e): i for i, e in enumerate(edge_ids)}
        local_demos: list[Trajectory] = []
        for traj in demos_by_cell[cell]:
            if all(n in node_local for n in traj.nodes) and \
               all(e in edge_local for e in traj.edges):
                local_demos.append(Trajectory(
                    nodes=tuple(node_local[n] for n in traj.nodes),
                    edges=tuple(edge_local[e] for e in traj.edges)))
            else:
                dropped.append(traj)
        if eval_fraction > 0:
            n_eval = int(math.ceil(eval_fraction * len(local_demos)))
            perm = rng.permutation(len(local_demos))
            eval_demos = [local_demos[int(i)] for i in perm[:n_eval]]
            train_demos = [local_demos[int(i)] for i in perm[n_eval:]]
        else:
            eval_demos = []
            train_demos = local_demos
        shards.append(Shard(cell=cell, subgraph=sub, node_ids=node_ids,
                            edge_ids=edge_ids, owned_nodes=owned,
                            demos=train_demos, eval_demos=eval_demos))
    return shards, dropped


def globalize_trajectory(shard: Shard, traj: Trajectory) -> Trajectory:
    return Trajectory(nodes=tuple(int(shard.node_ids[n]) for n in traj.nodes),
                      edges=tuple(int(shard.edge_ids[e]) for e in traj.edges))


def assemble_global(g: RoadGraph, shards: list[Shard],
                    models: list[RewardModel]) -> np.ndarray:
    """Global reward table: each edge scored by the expert owning the edge's
    source node.  Raises if any edge ends up unowned."""
    if len(shards) != len(models):
        raise ValidationError("one model per shard required")
    table = np.full(g.num_edges, np.nan)
    for shard, model in zip(shards, models):
        rew = edge_rewards(model, shard.subgraph)
        owned_nodes = set(int(n) for n in shard.owned_nodes)
        src_global = shard.node_ids[shard.subgraph.edge_src]
        owned_edge = np.fromiter((int(s) in owned_nodes for s in src_global),
                                 dtype=bool, count=src_global.shape[0])
        table[shard.edge_ids[owned_edge]] = rew[owned_edge]
    if np.any(np.isnan(table)):
        missing = int(np.isnan(table).sum())
        raise ValidationError(f"{missing} edges not covered by any shard")
    return table


def cross_region_eval(shards: list[Shard], models: list[RewardModel], *,
                      temperature: float = 1.0) -> np.ndarray:
    """m x m exact-match accuracy: entry (i, j) evaluates expert i on shard
    j's held-out demos."""
    m = len(shards)
    if len(models) != m:
        raise ValidationError("one model per shard required")
    acc = np.zeros((m, m))
    for j, shard in enumerate(shards):
        demos = shard.eval_demos if shard.eval_demos else shard.demos
        for i, model in enumerate(models):
            res = evaluate(model, demos, shard.subgraph,
                           temperature=temperature, nll=False)
            acc[i, j] = res.acc
    return acc
