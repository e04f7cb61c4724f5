"""Reward assembly and group-standardized advantages.

The integrated step reward blends the episode outcome with the mean of
the sampled step labels, R = O + (lam/m) * sum_j S_j.  Policy
advantages standardize R across the trajectories of a group at the same
step index; reward-model advantages standardize R * S_j across the m
labels of a single step.  Standardization always uses the population
standard deviation and maps constant groups to all-zero advantages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

SIGMA_FLOOR = 1e-12

REWARD_MODES = ("integrated", "outcome_only", "step_only")


@dataclass(frozen=True)
class StepReward:
    value: float
    outcome_part: float
    step_part: float
    lam: float


@dataclass(frozen=True)
class AdvantageSet:
    """Standardized advantages keyed by trajectory/step/label indices."""

    policy: Dict[Tuple[int, int], float]
    rm: Dict[Tuple[int, int, int], float]


def _check_outcome(outcome) -> float:
    if outcome not in (-1, 1):
        raise ValueError(f"outcome must be -1 or +1, got {outcome!r}")
    return float(outcome)


def _check_labels(labels) -> np.ndarray:
    arr = np.asarray(labels, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("labels must be a non-empty 1-d sequence")
    if not np.all(np.isin(arr, (-1.0, 1.0))):
        raise ValueError(f"labels must be -1 or +1, got {labels!r}")
    return arr


def integrated_step_reward(outcome, labels, lam: float = 1.0) -> StepReward:
    """R = O + (lam/m) * sum_j S_j with O, S_j in {-1, +1} and lam > 0."""
    o = _check_outcome(outcome)
    arr = _check_labels(labels)
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    step_part = lam * float(arr.sum()) / arr.size
    return StepReward(o + step_part, o, step_part, float(lam))


def consistency_reward(step_reward, label) -> float:
    """Reward-model target R * S for a single sampled label."""
    if label not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {label!r}")
    value = step_reward.value if isinstance(step_reward, StepReward) else float(step_reward)
    return value * float(label)


def reward_mode_select(mode: str, outcome, labels, lam: float = 1.0) -> float:
    """Scalar step reward under an ablation reward mode."""
    if mode == "integrated":
        return integrated_step_reward(outcome, labels, lam).value
    if mode == "outcome_only":
        return _check_outcome(outcome)
    if mode == "step_only":
        arr = _check_labels(labels)
        if not lam > 0:
            raise ValueError(f"lam must be positive, got {lam}")
        return lam * float(arr.sum()) / arr.size
    raise ValueError(f"unknown reward mode {mode!r}; expected one of {REWARD_MODES}")


def standardize(values) -> np.ndarray:
    """(v - mean) / population_std; all zeros when the spread is < 1e-12."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("standardize expects a non-empty 1-d sequence")
    centered = arr - arr.mean()
    sigma = np.sqrt(np.mean(centered**2))
    if sigma < SIGMA_FLOOR:
        return np.zeros_like(arr)
    return centered / sigma


def standardize_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Vectorized standardize along one axis of a float array."""
    arr = np.asarray(arr, dtype=float)
    mean = arr.mean(axis=axis, keepdims=True)
    centered = arr - mean
    sigma = np.sqrt(np.mean(centered**2, axis=axis, keepdims=True))
    safe = np.where(sigma < SIGMA_FLOOR, 1.0, sigma)
    out = centered / safe
    return np.where(sigma < SIGMA_FLOOR, 0.0, out)


def step_rewards_array(outcomes: np.ndarray, labels: np.ndarray,
                       lam: float, mode: str = "integrated") -> np.ndarray:
    """Per-(trajectory, step) rewards from outcome (n,) and label (n, T, m) arrays."""
    if mode not in REWARD_MODES:
        raise ValueError(f"unknown reward mode {mode!r}; expected one of {REWARD_MODES}")
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    o = np.asarray(outcomes, dtype=float)[:, None]
    step_part = lam * np.asarray(labels, dtype=float).mean(axis=2)
    if mode == "integrated":
        return o + step_part
    if mode == "outcome_only":
        return np.broadcast_to(o, step_part.shape).copy()
    return step_part


def rm_advantages_array(rewards: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Standardize R * S_j across the label axis for every step."""
    products = rewards[:, :, None] * np.asarray(labels, dtype=float)
    return standardize_axis(products, axis=2)


def build_advantages(group, evals: Sequence, lam: float = 1.0) -> AdvantageSet:
    """Both advantage families for one trajectory group.

    `group` is a TrajectoryGroup; `evals` holds one StepEvaluation per
    (trajectory, step) with a common label count m.  Policy advantages
    standardize R across trajectories sharing a step index; groups of
    size one get advantage zero through the constant rule.
    """
    eval_map = {}
    m = None
    for ev in evals:
        key = (ev.trajectory_index, ev.step_index)
        if key in eval_map:
            raise ValueError(f"duplicate evaluation for trajectory {key[0]} step {key[1]}")
        if m is None:
            m = len(ev.labels)
        elif len(ev.labels) != m:
            raise ValueError(
                f"evaluation at trajectory {key[0]} step {key[1]} has "
                f"{len(ev.labels)} labels, expected {m}"
            )
        eval_map[key] = ev

    rewards: Dict[Tuple[int, int], float] = {}
    for t_idx, traj in enumerate(group.trajectories):
        for s_idx in range(len(traj.steps)):
            ev = eval_map.get((t_idx, s_idx))
            if ev is None:
                raise ValueError(
                    f"missing evaluation for trajectory {t_idx} step {s_idx}"
                )
            rewards[(t_idx, s_idx)] = integrated_step_reward(
                traj.outcome, ev.labels, lam
            ).value

    policy_adv: Dict[Tuple[int, int], float] = {}
    max_len = max((len(t.steps) for t in group.trajectories), default=0)
    for s_idx in range(max_len):
        members = [
            t_idx
            for t_idx, traj in enumerate(group.trajectories)
            if s_idx < len(traj.steps)
        ]
        standardized = standardize([rewards[(t_idx, s_idx)] for t_idx in members])
        for t_idx, adv in zip(members, standardized):
            policy_adv[(t_idx, s_idx)] = float(adv)

    rm_adv: Dict[Tuple[int, int, int], float] = {}
    for (t_idx, s_idx), reward in rewards.items():
        ev = eval_map[(t_idx, s_idx)]
        cons = [consistency_reward(reward, s) for s in ev.labels]
        for j, adv in enumerate(standardize(cons)):
            rm_adv[(t_idx, s_idx, j)] = float(adv)

    return AdvantageSet(policy=policy_adv, rm=rm_adv)
