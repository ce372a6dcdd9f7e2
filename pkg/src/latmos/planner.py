"""Best-first task planning in the Door-Key environment guided by a task model.

Each search node carries the latent state reached by feeding the model the
observations along its root-to-node path. Expanding a node advances its
latent once, in a single batched call, for all successor observations.

Node value: ``gamma = score - lam * depth``, maximized (the open list is a
min-heap on ``-gamma``). The score is

* ``latmos_x`` / ``latmos_v``: the model's acceptance probability for the node;
* ``o_l2``: minus the l2 distance between the node's and the goal's grid view;
* ``dijkstra``: zero, which reduces the search to breadth-first order.

Ties pop in insertion order. The goal test is the environment's goal
predicate, checked when a node is popped; the popped goal node is not counted
as an expansion.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import doorkey as dk
from .model import LatentState, LatmosModel

log = logging.getLogger(__name__)

HEURISTICS = ("latmos_x", "latmos_v", "dijkstra", "o_l2")
_OBS_MODE = {"latmos_x": "x", "latmos_v": "v", "dijkstra": "v", "o_l2": "v"}


@dataclass
class SearchNode:
    state: dk.EnvState
    depth: int
    obs: np.ndarray
    latent: LatentState | None
    score: float
    parent: "SearchNode | None" = None
    action: int | None = None
    priority: float = 0.0

    def path(self) -> list:
        node, out = self, []
        while node is not None:
            out.append(node)
            node = node.parent
        return out[::-1]


@dataclass
class PlanResult:
    heuristic: str
    lam: float
    success: bool
    actions: list
    observations: np.ndarray
    explored: int
    plan_length: int
    wall_time: float = 0.0
    latents: list = field(default_factory=list)   # per-step h along the plan

    def to_dict(self, with_time: bool = False) -> dict:
        d = {"heuristic": self.heuristic, "lam": self.lam, "success": self.success,
             "actions": [int(a) for a in self.actions], "explored": self.explored,
             "plan_length": self.plan_length,
             "efficiency": search_efficiency(self) if self.success and self.plan_length else None}
        if with_time:
            d["wall_time"] = self.wall_time
        return d


def heuristic_gamma(model: LatmosModel | None, node: SearchNode, lam: float) -> float:
    """``p_accept(latent) - lam * depth`` for a model, ``score - lam * depth`` otherwise."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    p = model.acceptance_prob(node.latent)[0] if model is not None and node.latent is not None \
        else node.score
    return p - lam * node.depth


def goal_observation(config: dk.GridConfig) -> np.ndarray:
    return dk.observe(config, dk.EnvState(config.goal, True, True), "v")


def astar_plan(config: dk.GridConfig, model: LatmosModel | None, heuristic: str,
               lam: float = 0.05, start=None, budget: int = 5000,
               goal_test: str = "env", goal_threshold: float = 0.5) -> PlanResult:
    """Best-first search from ``start`` to the goal.

    A state reached again at equal or greater depth is pruned. ``budget``
    bounds the number of expansions. ``goal_test="decoder"`` stops instead
    at the first popped node whose acceptance probability reaches
    ``goal_threshold`` (for settings without a goal predicate).
    """
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}; choose from {HEURISTICS}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    uses_model = heuristic.startswith("latmos")
    if uses_model and model is None:
        raise ValueError(f"heuristic {heuristic} needs a trained model")
    if goal_test not in ("env", "decoder") or (goal_test == "decoder" and not uses_model):
        raise ValueError("decoder goal test needs a model-guided heuristic")
    mode = _OBS_MODE[heuristic]
    target = goal_observation(config) if heuristic == "o_l2" else None
    t0 = time.perf_counter()

    def score_of(obs_batch, latents):
        if uses_model:
            return model.accept_probs(np.stack([l.h for l in latents]))
        if heuristic == "o_l2":
            return -np.linalg.norm(obs_batch - target, axis=1)
        return np.zeros(len(obs_batch))

    s0 = dk.initial_state(config, start)
    o0 = dk.observe(config, s0, mode)
    lat0 = model.advance(model.encode(o0), model.initial_state()) if uses_model else None
    root = SearchNode(s0, 0, o0, lat0, float(score_of(o0[None], [lat0])[0]))
    counter = itertools.count()
    root.priority = lam * 0 - root.score
    heap = [(root.priority, next(counter), root)]
    best_depth = {s0: 0}
    explored = 0

    def done(node):
        if goal_test == "env":
            return dk.is_goal(config, node.state)
        return node.score >= goal_threshold

    while heap:
        _, _, node = heapq.heappop(heap)
        if node.depth > best_depth[node.state]:
            continue                      # stale entry, a shallower copy exists
        if done(node):
            return _result(heuristic, lam, node, explored, t0)
        if explored >= budget:
            break
        explored += 1
        kids = [(a, s) for a, s in dk.successors(config, node.state)
                if best_depth.get(s, node.depth + 2) > node.depth + 1]
        if not kids:
            continue
        obs = np.stack([dk.observe(config, s, mode) for _, s in kids])
        lats = model.advance_many(model.encode(obs), node.latent) if uses_model else [None] * len(kids)
        scores = score_of(obs, lats)
        for (a, s), o, l, sc in zip(kids, obs, lats, scores):
            child = SearchNode(s, node.depth + 1, o, l, float(sc), node, a)
            child.priority = lam * child.depth - child.score
            best_depth[s] = child.depth
            heapq.heappush(heap, (child.priority, next(counter), child))
    return PlanResult(heuristic, lam, False, [], np.empty((0, len(o0))), explored, 0,
                      time.perf_counter() - t0)


def _result(heuristic, lam, node, explored, t0) -> PlanResult:
    path = node.path()
    actions = [n.action for n in path[1:]]
    obs = np.stack([n.obs for n in path])
    lats = [np.array(n.latent.h) for n in path] if path[0].latent is not None else []
    return PlanResult(heuristic, lam, True, actions, obs, explored, len(actions),
                      time.perf_counter() - t0, lats)


def search_efficiency(result: PlanResult) -> float:
    """Expansions per plan step; 1.0 for a search that never leaves the plan."""
    if not result.success:
        raise ValueError("efficiency is undefined for a failed search")
    if result.plan_length == 0:
        raise ValueError("efficiency is undefined for an empty plan")
    return result.explored / result.plan_length


def verify_plan(config: dk.GridConfig, model: LatmosModel | None, result: PlanResult,
                threshold: float = 0.5, start=None, mode: str | None = None) -> bool:
    """The plan reaches the goal in the environment and the model accepts its
    observation sequence. Disagreements between the two are logged."""
    states = dk.replay(config, result.actions, start)
    env_ok = bool(result.actions) or dk.is_goal(config, states[0])
    env_ok = env_ok and dk.is_goal(config, states[-1])
    if model is None:
        return env_ok
    mode = mode or ("x" if model.config.obs_dim == dk.X_DIM else "v")
    obs = np.stack([dk.observe(config, s, mode) for s in states])
    model_ok = model.model_check(obs, threshold)
    if env_ok != model_ok:
        log.info("model/environment disagreement: env=%s model=%s (%d actions)",
                 env_ok, model_ok, len(result.actions))
    return env_ok and model_ok


def latent_trajectory(model: LatmosModel, observations) -> np.ndarray:
    """(T, d) latent vectors after each observation, recomputed from scratch."""
    return np.stack([s.h for s in model.rollout(observations)])
