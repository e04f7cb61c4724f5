"""Generative step evaluator trained from consistency feedback.

The model is a logistic head over step evidence; evidence concatenates
the step's feature encoding with a two-slot correctness channel that is
flipped with probability `evidence_noise` before the model sees it, so
even a perfect channel reader saturates at accuracy 1 - evidence_noise.
For each step it samples m labels in {-1, +1}; training reinforces
labels whose sign agrees with the integrated step reward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng
from .policy import PolicyParams, clipped_coefficients, group_arrays
from .tasks import FEATURE_DIM, TaskSpec, Trajectory, task_features

EVIDENCE_DIM = FEATURE_DIM + 2
_CH_INCORRECT = FEATURE_DIM      # evidence slot lit when the channel says "incorrect"
_CH_CORRECT = FEATURE_DIM + 1


class DegenerateProbeError(Exception):
    """The probe rollouts are missing one outcome class entirely."""


@dataclass
class RMParams:
    weights: np.ndarray
    evidence_noise: float = 0.15
    m: int = 3

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (EVIDENCE_DIM,):
            raise ValueError(
                f"reward-model weights must have shape ({EVIDENCE_DIM},), "
                f"got {self.weights.shape}"
            )
        if not 0.0 <= self.evidence_noise < 0.5:
            raise ValueError("evidence_noise must lie in [0, 0.5)")
        if self.m < 1:
            raise ValueError("m must be at least 1")


@dataclass(frozen=True, eq=False)
class StepEvaluation:
    task_id: str
    trajectory_index: int
    step_index: int
    labels: tuple[int, ...]
    label_probs: tuple[float, ...]  # P(S_j = +1) at sampling time
    evidence: np.ndarray


@dataclass(frozen=True)
class AccuracyReport:
    p_plus: float
    p_minus: float
    process_acc: float
    outcome_acc: float

    @property
    def mu(self) -> float:
        """p_plus + p_minus; the label precision margin (above 1 is informative)."""
        return self.p_plus + self.p_minus

    def to_dict(self) -> dict:
        return {
            "p_plus": self.p_plus,
            "p_minus": self.p_minus,
            "process_acc": self.process_acc,
            "outcome_acc": self.outcome_acc,
        }


def init_rm_params(m: int = 3, evidence_noise: float = 0.15,
                   channel_lean: float = 0.4) -> RMParams:
    """Default evaluator: zero weights plus a small lean on the channel.

    The lean keeps the initial labeler better than a coin flip, which
    anchors self-consistency training to the correct polarity.
    """
    w = np.zeros(EVIDENCE_DIM)
    w[_CH_INCORRECT] = -channel_lean
    w[_CH_CORRECT] = channel_lean
    return RMParams(w, evidence_noise, m)


def oracle_rm_params(scale: float = 20.0, m: int = 3,
                     evidence_noise: float = 0.15) -> RMParams:
    """Saturated channel reader; its accuracy ceiling is 1 - evidence_noise."""
    w = np.zeros(EVIDENCE_DIM)
    w[_CH_INCORRECT] = -scale
    w[_CH_CORRECT] = scale
    return RMParams(w, evidence_noise, m)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def build_evidence(task: TaskSpec, trajectory: Trajectory, step_index: int,
                   evidence_noise: float, seed: int = 0,
                   trajectory_index: int = 0) -> np.ndarray:
    """Evidence vector for one step: features plus the noisy channel.

    The channel flip is keyed by (seed, task_id, trajectory_index,
    step_index, "evidence") and is therefore reproducible independently
    of batching.
    """
    if not 0.0 <= evidence_noise < 0.5:
        raise ValueError("evidence_noise must lie in [0, 0.5)")
    if not 0 <= step_index < len(trajectory.steps):
        raise IndexError(f"step_index {step_index} outside trajectory")
    correct = trajectory.steps[step_index].correct
    key = rng.stream_key(seed, task.task_id, "evidence")
    flip = rng.uniform(key, trajectory_index, step_index) < evidence_noise
    says_correct = bool(correct) ^ bool(flip)
    vec = np.zeros(EVIDENCE_DIM)
    vec[:FEATURE_DIM] = trajectory.steps[step_index].observation.features
    vec[_CH_CORRECT if says_correct else _CH_INCORRECT] = 1.0
    return vec


def evaluate_step(rm: RMParams, evidence: np.ndarray, seed: int = 0,
                  task_id: str = "", trajectory_index: int = 0,
                  step_index: int = 0) -> StepEvaluation:
    """Sample the m labels for one step from the current head."""
    evidence = np.asarray(evidence, dtype=float)
    if evidence.shape != (EVIDENCE_DIM,):
        raise ValueError(f"evidence must have shape ({EVIDENCE_DIM},)")
    p = float(_sigmoid(evidence @ rm.weights))
    key = rng.stream_key(seed, task_id, "label")
    u = rng.uniforms(key, np.full(rm.m, trajectory_index),
                     np.full(rm.m, step_index), np.arange(rm.m))
    labels = tuple(1 if v < p else -1 for v in u)
    return StepEvaluation(task_id, trajectory_index, step_index, labels,
                          (p,) * rm.m, evidence)


def label_prob_table(rm: RMParams, task: TaskSpec) -> np.ndarray:
    """P(S=+1) per (step, channel-bit); shape (length, 2)."""
    feats = task_features(task)
    base = feats @ rm.weights[:FEATURE_DIM]
    z = np.stack([base + rm.weights[_CH_INCORRECT],
                  base + rm.weights[_CH_CORRECT]], axis=1)
    return _sigmoid(z)


def evaluation_arrays(rm: RMParams, task: TaskSpec, correct: np.ndarray,
                      seed: int = 0) -> dict:
    """Vectorized channel draws and labels for an (n, length) rollout block.

    Element-for-element identical to build_evidence + evaluate_step with
    the same seed, indices, and parameters.
    """
    correct = np.asarray(correct, dtype=bool)
    n, length = correct.shape
    traj = np.arange(n)
    steps = np.arange(length)
    key_e = rng.stream_key(seed, task.task_id, "evidence")
    flip = rng.uniforms(key_e, traj[:, None], steps[None, :]) < rm.evidence_noise
    channel = correct ^ flip
    ptab = label_prob_table(rm, task)
    p = ptab[steps[None, :], channel.astype(int)]
    key_l = rng.stream_key(seed, task.task_id, "label")
    u = rng.uniforms(key_l, traj[:, None, None], steps[None, :, None],
                     np.arange(rm.m)[None, None, :])
    labels = np.where(u < p[:, :, None], 1, -1)
    return {"channel": channel, "p": p, "labels": labels}


def evidence_matrix(task: TaskSpec, channel: np.ndarray) -> np.ndarray:
    """Evidence rows for an (n, length) channel block, shape (n, length, 50).

    Row (i, t) equals build_evidence for that step given the same
    channel verdict; stacking here avoids re-drawing the flips.
    """
    channel = np.asarray(channel, dtype=bool)
    n, length = channel.shape
    if length != task.length:
        raise ValueError("channel block does not match task length")
    ev = np.zeros((n, length, EVIDENCE_DIM))
    ev[:, :, :FEATURE_DIM] = task_features(task)[None, :, :]
    idx = np.where(channel, _CH_CORRECT, _CH_INCORRECT)
    ev[np.arange(n)[:, None], np.arange(length)[None, :], idx] = 1.0
    return ev


def _coerce_rm_batch(batch):
    if isinstance(batch, dict):
        ev = np.asarray(batch["evidence"], dtype=float)
        labels = np.asarray(batch["labels"], dtype=np.int64)
        adv = np.asarray(batch["advantages"], dtype=float)
    else:
        rows = list(batch)
        if not rows:
            return None
        ev = np.stack([np.asarray(r[0], dtype=float) for r in rows])
        labels = np.asarray([int(r[1]) for r in rows], dtype=np.int64)
        adv = np.asarray([float(r[2]) for r in rows], dtype=float)
    if ev.ndim != 2 or ev.shape[1] != EVIDENCE_DIM:
        raise ValueError(f"evidence batch must be (B, {EVIDENCE_DIM})")
    if ev.shape[0] == 0:
        return None
    if not np.all(np.isin(labels, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    return ev, labels, adv


def rm_update(rm: RMParams, batch, learning_rate: float,
              clip_epsilon: Optional[float] = None, kl_beta: float = 0.0,
              snapshot_weights: Optional[np.ndarray] = None) -> RMParams:
    """One ascent step on the label-level surrogate.

    Shares the clipping rule with policy_update; defaults disable both
    the clip and the KL term, giving the plain score-function step
    lr * mean(A * grad log P(S | evidence)).
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    coerced = _coerce_rm_batch(batch)
    if coerced is None:
        return RMParams(rm.weights.copy(), rm.evidence_noise, rm.m)
    ev, labels, adv = coerced
    snap = rm.weights if snapshot_weights is None else np.asarray(snapshot_weights, float)
    p_new = _sigmoid(ev @ rm.weights)
    p_snap = _sigmoid(ev @ snap)
    y = (labels + 1) / 2.0
    chosen_new = np.where(labels == 1, p_new, 1.0 - p_new)
    chosen_snap = np.where(labels == 1, p_snap, 1.0 - p_snap)
    ratios = chosen_new / np.maximum(chosen_snap, 1e-300)
    coef = clipped_coefficients(adv, ratios, clip_epsilon)
    grad = (coef * (y - p_new)) @ ev
    if kl_beta:
        grad += kl_beta * ((p_snap - p_new) @ ev)
    grad /= ev.shape[0]
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient in rm_update")
    return RMParams(rm.weights + learning_rate * grad, rm.evidence_noise, rm.m)


def rm_objective(weights: np.ndarray, snapshot: np.ndarray, batch,
                 clip_epsilon: Optional[float] = None, kl_beta: float = 0.0) -> float:
    """Scalar surrogate matching rm_update's gradient, for difference checks."""
    coerced = _coerce_rm_batch(batch)
    if coerced is None:
        return 0.0
    ev, labels, adv = coerced
    p_new = _sigmoid(ev @ np.asarray(weights, float))
    p_snap = _sigmoid(ev @ np.asarray(snapshot, float))
    chosen_new = np.where(labels == 1, p_new, 1.0 - p_new)
    chosen_snap = np.where(labels == 1, p_snap, 1.0 - p_snap)
    r = chosen_new / np.maximum(chosen_snap, 1e-300)
    if clip_epsilon is None or np.isinf(clip_epsilon):
        value = r * adv
    else:
        value = np.minimum(r * adv, np.clip(r, 1 - clip_epsilon, 1 + clip_epsilon) * adv)
    total = value.sum()
    if kl_beta:
        q, p = p_snap, p_new
        kl = q * (np.log(np.maximum(q, 1e-300)) - np.log(np.maximum(p, 1e-300)))
        kl += (1 - q) * (np.log(np.maximum(1 - q, 1e-300))
                         - np.log(np.maximum(1 - p, 1e-300)))
        total -= kl_beta * kl.sum()
    return float(total / ev.shape[0])


def measure_accuracy(rm: RMParams, probe_tasks: Sequence[TaskSpec],
                     probe_policy: PolicyParams, n_rollouts: int = 8,
                     seed: int = 0, temperature: float = 1.0) -> AccuracyReport:
    """Label quality of the evaluator on frozen probe rollouts.

    p_plus / p_minus condition on the episode outcome; process accuracy
    scores sign(mean label) against each step's true correctness (ties
    count as wrong); outcome accuracy scores the sign of the summed mean
    labels against the episode outcome per trajectory.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be at least 1")
    if not probe_tasks:
        raise ValueError("probe_tasks must be non-empty")
    plus_hits = plus_total = minus_hits = minus_total = 0
    proc_hits = proc_total = 0
    out_hits = out_total = 0
    for task in probe_tasks:
        arr = group_arrays(probe_policy, task, n_rollouts, temperature, seed)
        evals = evaluation_arrays(rm, task, arr["correct"], seed)
        labels = evals["labels"]
        outcomes = arr["outcomes"]
        succ = outcomes == 1
        plus_hits += int((labels[succ] == 1).sum())
        plus_total += labels[succ].size
        minus_hits += int((labels[~succ] == -1).sum())
        minus_total += labels[~succ].size
        mean_labels = labels.mean(axis=2)
        truth = np.where(arr["correct"], 1.0, -1.0)
        proc_hits += int((np.sign(mean_labels) == truth).sum())
        proc_total += mean_labels.size
        verdict = np.sign(mean_labels.sum(axis=1))
        out_hits += int((verdict == outcomes).sum())
        out_total += len(outcomes)
    if plus_total == 0:
        raise DegenerateProbeError("probe produced no successful trajectories")
    if minus_total == 0:
        raise DegenerateProbeError("probe produced no failing trajectories")
    return AccuracyReport(
        p_plus=plus_hits / plus_total,
        p_minus=minus_hits / minus_total,
        process_acc=proc_hits / proc_total,
        outcome_acc=out_hits / out_total,
    )


def save_rm(rm: RMParams, path) -> None:
    payload = {
        "shape": [EVIDENCE_DIM],
        "weights": [float(v) for v in rm.weights],
        "evidence_noise": rm.evidence_noise,
        "m": rm.m,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_rm(path) -> RMParams:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    weights = np.asarray(payload["weights"], dtype=float)
    return RMParams(weights, float(payload.get("evidence_noise", 0.15)),
                    int(payload.get("m", 3)))
