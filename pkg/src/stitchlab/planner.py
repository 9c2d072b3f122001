"""Inference strategies over a trained denoiser and closed-loop execution.

Whole-sequence planning draws one diffusion sample with the start (and
optionally a goal block) inpainted. N-fold replanning regenerates a
full-horizon plan every T/N environment steps, conditioning only on the
current state. Execution tracks the plan through the environment with the
inverse-dynamics model: a_t = invdyn(s_t, plan[t + offset]).

Rollout batches step every live environment in lockstep so that plan
generation and inverse dynamics run as single batched model calls.
model_queries counts exactly one query per trajectory per reverse-diffusion
generation; the executor itself never queries the model.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gridworld
from . import metrics
from . import models as mdl
from .datagen import NormMap
from .diffusion import DiffusionSchedule, InpaintMask, goal_mask, sample, start_mask
from .gridworld import EnvConfig


@dataclass
class RolloutResult:
    states: np.ndarray  # executed positions incl. the start, [K, 2]
    plans: list = field(default_factory=list)  # world-unit plans, in order used
    status: str = gridworld.RUNNING
    replans_used: int = 0
    model_queries: int = 0

    @property
    def success(self) -> bool:
        return self.status == gridworld.REACHED_GOAL


def plan_batch(
    model: mdl.Model,
    schedule: DiffusionSchedule,
    norm: NormMap,
    starts: np.ndarray,
    rng,
    goal=None,
    n: int | None = None,
    horizon: int = 512,
    temperature: float = 0.5,
    goal_repeats: int = 25,
    chunk: int = 128,
) -> np.ndarray:
    """Sample plans in world units, [n, H, 2]; one model query per plan.

    `starts` is a single point (shared by all plans) or [n, 2] per-plan
    current states. A goal adds the repeated-goal block to the mask.
    """
    starts = np.asarray(starts, dtype=float)
    goal_n = norm.encode(np.asarray(goal, dtype=float)) if goal is not None else None
    if starts.ndim == 1:
        if n is None:
            raise ValueError("n is required with a shared start")
        if goal_n is not None:
            mask = goal_mask(norm.encode(starts), goal_n, horizon, goal_repeats)
        else:
            mask = start_mask(norm.encode(starts), horizon)
    else:
        n = len(starts)
        if goal_n is not None:
            base = goal_mask(norm.encode(starts[0]), goal_n, horizon, goal_repeats)
        else:
            base = start_mask(norm.encode(starts[0]), horizon)
        values = base.values[None].repeat(n, axis=0)
        values[:, :, 0] = norm.encode(starts)
        mask = InpaintMask(mask=base.mask, values=values)
    z = sample(model, schedule, n, rng, temperature=temperature, mask=mask, horizon=horizon, chunk=chunk)
    return norm.decode(np.moveaxis(z, 1, 2))  # [n, H, 2] world units


def plan_whole(
    model: mdl.Model,
    schedule: DiffusionSchedule,
    norm: NormMap,
    start,
    rng,
    goal=None,
    horizon: int = 512,
    temperature: float = 0.5,
    goal_repeats: int = 25,
) -> np.ndarray:
    """One whole-sequence plan [H, 2] in world units (one model query)."""
    return plan_batch(
        model, schedule, norm, np.asarray(start), rng, goal=goal, n=1,
        horizon=horizon, temperature=temperature, goal_repeats=goal_repeats,
    )[0]


def _advance(env, states, plans, invdyn, offset, budget, traces, start_step):
    """Step every live environment up to `budget` steps, batching invdyn."""
    H = plans.shape[1]
    for i_step in range(budget):
        alive = [i for i, s in enumerate(states) if s.status == gridworld.RUNNING]
        if not alive:
            break
        cur = np.asarray([states[i].position for i in alive])
        tgt = plans[alive, min(start_step + i_step + offset, H - 1)]
        acts = invdyn.act_batch(cur, tgt)
        for j, i in enumerate(alive):
            states[i] = gridworld.step(env, states[i], acts[j])
            traces[i].append(states[i].position)
    return states


def execute_batch(
    env: EnvConfig,
    plans: np.ndarray,
    invdyn: mdl.InvDynModel,
    offset: int = 1,
    starts=None,
) -> list:
    """Execute [n, H, 2] plans closed-loop until terminal; one result each.

    Environments reset at `starts` (default: each plan's first position).
    """
    plans = np.asarray(plans, dtype=float)
    n, H, _ = plans.shape
    if H < env.T:
        raise ValueError(f"plan horizon {H} shorter than the episode budget {env.T}")
    if starts is None:
        starts = plans[:, 0]
    states = [gridworld.reset(env, starts[i]) for i in range(n)]
    traces = [[s.position] for s in states]
    states = _advance(env, states, plans, invdyn, offset, env.T, traces, start_step=0)
    return [
        RolloutResult(
            states=np.asarray(traces[i]),
            plans=[plans[i]],
            status=states[i].status,
        )
        for i in range(n)
    ]


def execute(env: EnvConfig, plan: np.ndarray, invdyn: mdl.InvDynModel, offset: int = 1) -> RolloutResult:
    return execute_batch(env, np.asarray(plan)[None], invdyn, offset=offset)[0]


def rollout_whole_batch(
    env: EnvConfig,
    model: mdl.Model,
    schedule: DiffusionSchedule,
    norm: NormMap,
    invdyn: mdl.InvDynModel,
    start,
    n_rollouts: int,
    rng,
    goal=None,
    horizon: int = 512,
    temperature: float = 0.5,
    goal_repeats: int = 25,
    offset: int = 1,
    chunk: int = 128,
) -> list:
    """Whole-sequence planning + execution; model_queries = 1 per rollout."""
    plans = plan_batch(
        model, schedule, norm, np.asarray(start), rng, goal=goal, n=n_rollouts,
        horizon=horizon, temperature=temperature, goal_repeats=goal_repeats, chunk=chunk,
    )
    results = execute_batch(env, plans, invdyn, offset=offset, starts=np.tile(start, (n_rollouts, 1)))
    for r in results:
        r.model_queries = 1
        r.replans_used = 1
    return results


def replan_batch(
    env: EnvConfig,
    model: mdl.Model,
    schedule: DiffusionSchedule,
    norm: NormMap,
    invdyn: mdl.InvDynModel,
    N: int,
    n_rollouts: int,
    start,
    rng,
    goal=None,
    horizon: int = 512,
    temperature: float = 0.5,
    goal_repeats: int = 25,
    offset: int = 1,
    chunk: int = 128,
) -> list:
    """N-fold replanning with single-state history for a batch of rollouts.

    Every T/N environment steps each live rollout receives a fresh
    full-horizon plan inpainted only at its current state (H_P = 1); the last
    segment absorbs any remainder of T.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    A = env.T // N
    start = np.asarray(start, dtype=float)
    states = [gridworld.reset(env, start) for _ in range(n_rollouts)]
    results = [RolloutResult(states=np.asarray([start])) for _ in range(n_rollouts)]
    traces = [[tuple(start)] for _ in range(n_rollouts)]
    executed = 0
    while executed < env.T:
        alive = [i for i, s in enumerate(states) if s.status == gridworld.RUNNING]
        if not alive:
            break
        cur = np.asarray([states[i].position for i in alive])
        plans_alive = plan_batch(
            model, schedule, norm, cur, rng, goal=goal, horizon=horizon,
            temperature=temperature, goal_repeats=goal_repeats, chunk=chunk,
        )
        for j, i in enumerate(alive):
            results[i].plans.append(plans_alive[j])
            results[i].replans_used += 1
            results[i].model_queries += 1
        budget = min(A, env.T - executed)
        if budget <= 0:
            break
        live_states = [states[i] for i in alive]
        live_traces = [traces[i] for i in alive]
        live_states = _advance(
            env, live_states, plans_alive, invdyn, offset, budget, live_traces, start_step=0
        )
        for j, i in enumerate(alive):
            states[i] = live_states[j]
        executed += budget
    for i in range(n_rollouts):
        results[i].status = states[i].status
        results[i].states = np.asarray(traces[i])
    return results


def replan_rollout(
    env: EnvConfig,
    model: mdl.Model,
    schedule: DiffusionSchedule,
    norm: NormMap,
    invdyn: mdl.InvDynModel,
    N: int,
    start,
    rng,
    **kw,
) -> RolloutResult:
    return replan_batch(env, model, schedule, norm, invdyn, N, 1, start, rng, **kw)[0]


def evaluate_pairs(
    env: EnvConfig,
    model: mdl.Model,
    schedule: DiffusionSchedule,
    norm: NormMap,
    invdyn: mdl.InvDynModel,
    pairs,
    seed: int,
    n_per_pair: int = 500,
    horizon: int = 512,
    temperature: float = 0.5,
    goal_repeats: int = 25,
    offset: int = 1,
    chunk: int = 128,
) -> list:
    """Whole-sequence goal-conditioned evaluation over (start, goal) pairs.

    Returns one record per pair: completion stats over n_per_pair rollouts
    and the number of topologically unique successful executions. Each pair
    draws from an RNG stream derived from (seed, pair coordinates), so
    identical pairs produce identical statistics under a fixed seed.
    """
    records = []
    for start, goal in pairs:
        start = np.asarray(start, dtype=float)
        goal = np.asarray(goal, dtype=float)
        pair_key = [int(round(100 * v)) for v in (*start, *goal)]
        rng = np.random.default_rng(np.random.SeedSequence([seed, *pair_key]))
        env_goal = gridworld.with_goal(env, goal)
        results = rollout_whole_batch(
            env_goal, model, schedule, norm, invdyn, start, n_per_pair, rng,
            goal=goal, horizon=horizon, temperature=temperature,
            goal_repeats=goal_repeats, offset=offset, chunk=chunk,
        )
        succ = [r for r in results if r.success]
        sigs = set()
        for r in succ:
            sigs.add(
                metrics.signature(r.states, env.geometry, start, goal, env.goal_radius)
            )
        stats = metrics.completion_stats([r.success for r in results])
        records.append(
            {
                "start": tuple(start),
                "goal": tuple(goal),
                "n": n_per_pair,
                "completion": stats.rate,
                "sigma": stats.sigma,
                "unique_success": len(sigs),
                "queries": sum(r.model_queries for r in results),
            }
        )
    return records
