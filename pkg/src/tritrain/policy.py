"""Linear-softmax policy over task step features.

Parameters are a single (FEATURE_DIM, K_MAX) weight matrix shared by
all tasks; per-task action masking restricts the softmax to the first
`action_arity` columns.  Updates take one ascent step on a clipped
surrogate objective with an optional forward-KL penalty against the
parameter snapshot; with clip_epsilon=inf and kl_beta=0 the first
iterate reduces to the plain policy gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import json

import numpy as np

from . import rng
from .tasks import (
    FEATURE_DIM,
    K_MAX,
    _CONTEXT_BASE,
    TaskSpec,
    Step,
    Trajectory,
    compute_outcome,
    observe,
    task_features,
)

ARGMAX_TEMPERATURE = 1e-6
_ARITY_SCALAR_INDEX = 25  # feature slot holding action_arity / K_MAX


@dataclass
class PolicyParams:
    weights: np.ndarray
    step_count: int = 0
    snapshot: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (FEATURE_DIM, K_MAX):
            raise ValueError(
                f"policy weights must have shape {(FEATURE_DIM, K_MAX)}, "
                f"got {self.weights.shape}"
            )
        if self.snapshot is not None:
            self.snapshot = np.asarray(self.snapshot, dtype=float)
            if self.snapshot.shape != self.weights.shape:
                raise ValueError("snapshot shape must match weights shape")


@dataclass(frozen=True, eq=False)
class TrajectoryGroup:
    task_id: str
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        if len(self.trajectories) < 2:
            raise ValueError("a trajectory group needs at least 2 trajectories")
        if any(t.task_id != self.task_id for t in self.trajectories):
            raise ValueError("all trajectories in a group must share the task_id")


def init_policy_params() -> PolicyParams:
    """Uniform policy: all-zero weights."""
    return PolicyParams(np.zeros((FEATURE_DIM, K_MAX)))


def hint_following_params(scale: float = 40.0) -> PolicyParams:
    """Reference policy that reads the hint block and is uniform elsewhere."""
    w = np.zeros((FEATURE_DIM, K_MAX))
    for a in range(K_MAX):
        w[_CONTEXT_BASE + a, a] = scale
    return PolicyParams(w)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def action_probs(weights: np.ndarray, features: np.ndarray, arity: int,
                 temperature: float = 1.0) -> np.ndarray:
    """Masked softmax over the first `arity` actions; rows sum to 1.

    Temperatures below 1e-6 collapse to a point mass on the argmax
    (first index on ties).
    """
    if not 2 <= arity <= K_MAX:
        raise ValueError(f"arity must be in [2, {K_MAX}], got {arity}")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    logits = np.asarray(features, dtype=float) @ np.asarray(weights, dtype=float)
    logits = logits[..., :arity]
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits in action_probs")
    if temperature < ARGMAX_TEMPERATURE:
        probs = np.zeros_like(logits)
        idx = logits.argmax(axis=-1)
        np.put_along_axis(probs, idx[..., None], 1.0, axis=-1)
        return probs
    return _softmax(logits / temperature)


def _actions_from_uniforms(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; probs is (T, K), u is (..., T)."""
    cum = np.cumsum(probs, axis=-1)
    cum[..., -1] = 1.0
    out = np.empty(u.shape, dtype=np.int64)
    for t in range(probs.shape[0]):
        out[..., t] = np.searchsorted(cum[t], u[..., t], side="right")
    return out


def group_arrays(params: PolicyParams, task: TaskSpec, n: int,
                 temperature: float = 1.0, seed: int = 0) -> dict:
    """Vectorized rollout of n trajectories on one task.

    Action draws are keyed by (seed, task_id, trajectory_index,
    step_index), so each trajectory's stream is independent of n and of
    how the batch is partitioned across workers.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    feats = task_features(task)
    probs = action_probs(params.weights, feats, task.action_arity, temperature)
    key = rng.stream_key(seed, task.task_id, "action")
    u = rng.uniforms(key, np.arange(n)[:, None], np.arange(task.length)[None, :])
    actions = _actions_from_uniforms(probs, u)
    correct = actions == np.asarray(task.target_sequence)[None, :]
    outcomes = np.where(correct.sum(axis=1) >= task.required_correct, 1, -1)
    return {
        "actions": actions,
        "correct": correct,
        "outcomes": outcomes,
        "probs": probs,
        "features": feats,
    }


def _build_trajectory(task: TaskSpec, observations, actions_row, correct_row) -> Trajectory:
    steps = tuple(
        Step(observations[i], int(actions_row[i]), bool(correct_row[i]))
        for i in range(task.length)
    )
    return Trajectory(task.task_id, steps, compute_outcome(task, correct_row))


def sample_trajectory(params: PolicyParams, task: TaskSpec,
                      temperature: float = 1.0, seed: int = 0,
                      trajectory_index: int = 0) -> Trajectory:
    """Roll out one complete trajectory; deterministic in all arguments."""
    feats = task_features(task)
    probs = action_probs(params.weights, feats, task.action_arity, temperature)
    key = rng.stream_key(seed, task.task_id, "action")
    u = rng.uniforms(key, np.full(task.length, trajectory_index), np.arange(task.length))
    actions = _actions_from_uniforms(probs, u)
    correct = actions == np.asarray(task.target_sequence)
    observations = [observe(task, i) for i in range(task.length)]
    return _build_trajectory(task, observations, actions, correct)


def sample_group(params: PolicyParams, task: TaskSpec, n: int,
                 temperature: float = 1.0, seed: int = 0) -> TrajectoryGroup:
    """Group of n >= 2 trajectories sharing one task and parameter snapshot."""
    if n < 2:
        raise ValueError("a group needs n >= 2 trajectories")
    arrays = group_arrays(params, task, n, temperature, seed)
    observations = [observe(task, i) for i in range(task.length)]
    trajectories = tuple(
        _build_trajectory(task, observations, arrays["actions"][t], arrays["correct"][t])
        for t in range(n)
    )
    return TrajectoryGroup(task.task_id, trajectories)


def _coerce_batch(batch):
    if isinstance(batch, dict):
        feats = np.asarray(batch["features"], dtype=float)
        actions = np.asarray(batch["actions"], dtype=np.int64)
        advantages = np.asarray(batch["advantages"], dtype=float)
    else:
        rows = list(batch)
        if not rows:
            return None
        feats = np.stack([np.asarray(r[0], dtype=float) for r in rows])
        actions = np.asarray([int(r[1]) for r in rows], dtype=np.int64)
        advantages = np.asarray([float(r[2]) for r in rows], dtype=float)
    if feats.ndim != 2 or feats.shape[1] != FEATURE_DIM:
        raise ValueError(f"batch features must be (B, {FEATURE_DIM})")
    if feats.shape[0] == 0:
        return None
    if not (len(actions) == len(advantages) == feats.shape[0]):
        raise ValueError("batch fields must have equal length")
    return feats, actions, advantages


def clipped_coefficients(advantages: np.ndarray, ratios: np.ndarray,
                         clip_epsilon: Optional[float]) -> np.ndarray:
    """Per-sample gradient coefficient of min(r*A, clip(r, 1 +- eps)*A).

    Where the min selects the clipped constant the derivative is zero;
    elsewhere it is A * r (times grad log-prob downstream).
    """
    if clip_epsilon is None or np.isinf(clip_epsilon):
        return advantages * ratios
    if clip_epsilon <= 0:
        raise ValueError("clip_epsilon must be positive")
    active = np.where(
        advantages >= 0, ratios <= 1.0 + clip_epsilon, ratios >= 1.0 - clip_epsilon
    )
    return advantages * ratios * active


def surrogate_objective(weights: np.ndarray, snapshot: np.ndarray, batch,
                        clip_epsilon: Optional[float] = 0.2,
                        kl_beta: float = 0.0) -> float:
    """Mean clipped-surrogate value minus kl_beta * mean forward KL.

    Exposed so gradient checks can difference the exact objective the
    update ascends.
    """
    coerced = _coerce_batch(batch)
    if coerced is None:
        return 0.0
    feats, actions, advantages = coerced
    arities = np.rint(feats[:, _ARITY_SCALAR_INDEX] * K_MAX).astype(int)
    total = 0.0
    for a in np.unique(arities):
        rows = np.nonzero(arities == a)[0]
        p_new = action_probs(weights, feats[rows], int(a))
        p_old = action_probs(snapshot, feats[rows], int(a))
        sel = np.arange(len(rows))
        r = p_new[sel, actions[rows]] / np.maximum(p_old[sel, actions[rows]], 1e-300)
        adv = advantages[rows]
        if clip_epsilon is None or np.isinf(clip_epsilon):
            clipped = r * adv
        else:
            clipped = np.minimum(
                r * adv, np.clip(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv
            )
        total += clipped.sum()
        if kl_beta:
            logs = np.log(np.maximum(p_old, 1e-300)) - np.log(np.maximum(p_new, 1e-300))
            total -= kl_beta * (p_old * logs).sum(axis=1).sum()
    return float(total / feats.shape[0])


def policy_update(params: PolicyParams, batch, learning_rate: float,
                  clip_epsilon: Optional[float] = 0.2,
                  kl_beta: float = 0.01) -> PolicyParams:
    """One ascent step on the clipped surrogate; snapshot refreshed after.

    `batch` is a sequence of (feature, action, advantage) rows or a dict
    of stacked arrays.  The action mask of each row is recovered from
    the arity scalar inside its feature vector.  An all-zero-advantage
    batch leaves the weights unchanged (KL against the snapshot has zero
    gradient at equality).
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    coerced = _coerce_batch(batch)
    if coerced is None:
        return PolicyParams(params.weights.copy(), params.step_count,
                            params.weights.copy())
    feats, actions, advantages = coerced
    snapshot = params.snapshot if params.snapshot is not None else params.weights
    arities = np.rint(feats[:, _ARITY_SCALAR_INDEX] * K_MAX).astype(int)
    grad = np.zeros_like(params.weights)
    for a in np.unique(arities):
        rows = np.nonzero(arities == a)[0]
        f = feats[rows]
        acts = actions[rows]
        if np.any(acts >= a) or np.any(acts < 0):
            raise ValueError(f"action outside arity {a} in update batch")
        p_new = action_probs(params.weights, f, int(a))
        p_old = action_probs(snapshot, f, int(a))
        sel = np.arange(len(rows))
        ratios = p_new[sel, acts] / np.maximum(p_old[sel, acts], 1e-300)
        coef = clipped_coefficients(advantages[rows], ratios, clip_epsilon)
        onehot_minus_p = -p_new
        onehot_minus_p[sel, acts] += 1.0
        contrib = coef[:, None] * onehot_minus_p
        if kl_beta:
            contrib += kl_beta * (p_old - p_new)
        grad[:, :a] += f.T @ contrib
    grad /= feats.shape[0]
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient in policy_update")
    new_w = params.weights + learning_rate * grad
    return PolicyParams(new_w, params.step_count + 1, new_w.copy())


def save_policy(params: PolicyParams, path) -> None:
    payload = {
        "shape": list(params.weights.shape),
        "weights": [float(v) for v in params.weights.ravel()],
        "step_count": params.step_count,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_policy(path) -> PolicyParams:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    shape = tuple(payload["shape"])
    weights = np.asarray(payload["weights"], dtype=float).reshape(shape)
    return PolicyParams(weights, int(payload.get("step_count", 0)))
