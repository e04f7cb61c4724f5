"""Synthetic chain tasks: the adaptive environment side of the loop.

A task is a fixed-length sequence of decision points.  At each step the
actor picks one of `action_arity` actions; the step is correct when the
pick matches the hidden target.  The episode succeeds (outcome +1) when
at least `required_correct` steps are correct, otherwise it fails (-1).
Hinted steps expose their target inside the feature encoding, so a
policy can solve them only by learning to read that block; there is no
hard override anywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from . import rng

L_MAX = 24          # hard cap on task length (one-hot block size)
K_MAX = 16          # hard cap on action arity (hint one-hot block size)
FEATURE_DIM = 48    # 24 step one-hot + 4 scalars + 20 context
CONTEXT_DIM = 20
CONTEXT_SCALE = 0.4  # amplitude of the seeded per-(task, step) context

_SCALAR_BASE = L_MAX
_CONTEXT_BASE = L_MAX + 4
HINT_BIT_INDEX = _SCALAR_BASE + 3
_DIRECTIONS = ("none", "easier", "harder")


class SaturationError(Exception):
    """No applicable mutation remains in the requested direction."""


@dataclass(frozen=True)
class TaskSpec:
    """Immutable description of one chain task."""

    task_id: str
    parent_id: Optional[str]
    length: int
    action_arity: int
    target_sequence: tuple[int, ...]
    hint_mask: tuple[bool, ...]
    required_correct: int
    generation: int = 0
    direction_of_last_mutation: str = "none"

    def __post_init__(self):
        if not self.task_id:
            raise ValueError("task_id must be a non-empty string")
        if not 1 <= self.length <= L_MAX:
            raise ValueError(f"length must be in [1, {L_MAX}], got {self.length}")
        if not 2 <= self.action_arity <= K_MAX:
            raise ValueError(
                f"action_arity must be in [2, {K_MAX}], got {self.action_arity}"
            )
        if len(self.target_sequence) != self.length:
            raise ValueError("target_sequence length must equal task length")
        if any(not 0 <= t < self.action_arity for t in self.target_sequence):
            raise ValueError("every target must lie in [0, action_arity)")
        if len(self.hint_mask) != self.length:
            raise ValueError("hint_mask length must equal task length")
        if not 1 <= self.required_correct <= self.length:
            raise ValueError("required_correct must be in [1, length]")
        if self.generation < 0:
            raise ValueError("generation must be non-negative")
        if self.direction_of_last_mutation not in _DIRECTIONS:
            raise ValueError(
                f"direction_of_last_mutation must be one of {_DIRECTIONS}"
            )

    @property
    def hint_count(self) -> int:
        return sum(self.hint_mask)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "parent_id": self.parent_id,
            "length": self.length,
            "action_arity": self.action_arity,
            "target_sequence": list(self.target_sequence),
            "hint_mask": list(self.hint_mask),
            "required_correct": self.required_correct,
            "generation": self.generation,
            "direction_of_last_mutation": self.direction_of_last_mutation,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "TaskSpec":
        return cls(
            task_id=record["task_id"],
            parent_id=record.get("parent_id"),
            length=int(record["length"]),
            action_arity=int(record["action_arity"]),
            target_sequence=tuple(int(t) for t in record["target_sequence"]),
            hint_mask=tuple(bool(h) for h in record["hint_mask"]),
            required_correct=int(record["required_correct"]),
            generation=int(record.get("generation", 0)),
            direction_of_last_mutation=record.get(
                "direction_of_last_mutation", "none"
            ),
        )


@dataclass(frozen=True, eq=False)
class Observation:
    step_index: int
    features: np.ndarray
    hint_value: Optional[int]


@dataclass(frozen=True, eq=False)
class Step:
    observation: Observation
    action: int
    correct: bool


@dataclass(frozen=True, eq=False)
class Trajectory:
    task_id: str
    steps: tuple[Step, ...]
    outcome: int

    def __post_init__(self):
        if self.outcome not in (-1, 1):
            raise ValueError("outcome must be -1 or +1")


def context_vector(task_id: str, step_index: int) -> np.ndarray:
    """Seeded pseudo-random context, a pure function of (task_id, step)."""
    key = rng.stream_key("task-context", task_id)
    u = rng.uniforms(key, np.full(CONTEXT_DIM, step_index), np.arange(CONTEXT_DIM))
    return (2.0 * u - 1.0) * CONTEXT_SCALE


def feature_encode(task: TaskSpec, step_index: int) -> np.ndarray:
    """Encode one decision point as a FEATURE_DIM vector.

    Layout: one-hot of step_index (24), then four scalars (length/L_MAX,
    arity/K_MAX, required/length, hint bit), then the 20-dim context.
    On hinted steps the first K_MAX context entries are replaced by the
    one-hot of the target action (the rest zeroed), which is the only
    place the hint value is exposed.
    """
    if not 0 <= step_index < task.length:
        raise IndexError(f"step_index {step_index} outside task of length {task.length}")
    vec = np.zeros(FEATURE_DIM)
    vec[step_index] = 1.0
    vec[_SCALAR_BASE + 0] = task.length / L_MAX
    vec[_SCALAR_BASE + 1] = task.action_arity / K_MAX
    vec[_SCALAR_BASE + 2] = task.required_correct / task.length
    if task.hint_mask[step_index]:
        vec[HINT_BIT_INDEX] = 1.0
        vec[_CONTEXT_BASE + task.target_sequence[step_index]] = 1.0
    else:
        vec[_CONTEXT_BASE:_CONTEXT_BASE + CONTEXT_DIM] = context_vector(
            task.task_id, step_index
        )
    return vec


@lru_cache(maxsize=4096)
def task_features(task: TaskSpec) -> np.ndarray:
    """All step encodings of a task as a read-only (length, FEATURE_DIM) matrix."""
    mat = np.stack([feature_encode(task, i) for i in range(task.length)])
    mat.setflags(write=False)
    return mat


def observe(task: TaskSpec, step_index: int) -> Observation:
    hint = task.target_sequence[step_index] if task.hint_mask[step_index] else None
    return Observation(step_index, feature_encode(task, step_index), hint)


def run_step(task: TaskSpec, step_index: int, action: int) -> bool:
    """Whether `action` solves the step; range-checks both arguments."""
    if not 0 <= step_index < task.length:
        raise IndexError(f"step_index {step_index} outside task of length {task.length}")
    if not 0 <= action < task.action_arity:
        raise IndexError(
            f"action {action} outside arity {task.action_arity} of task {task.task_id}"
        )
    return action == task.target_sequence[step_index]


def compute_outcome(task: TaskSpec, steps) -> int:
    """Episode outcome from a complete step record (+1 success, -1 failure).

    `steps` may be a Trajectory, a sequence of Step, or a boolean array of
    per-step correctness.
    """
    if isinstance(steps, Trajectory):
        flags = [s.correct for s in steps.steps]
    elif len(steps) and isinstance(steps[0], Step):
        flags = [s.correct for s in steps]
    else:
        flags = [bool(v) for v in steps]
    if len(flags) != task.length:
        raise RuntimeError(
            f"incomplete trajectory: {len(flags)} steps recorded, task length {task.length}"
        )
    return 1 if sum(flags) >= task.required_correct else -1


def uniform_success_probability(task: TaskSpec, hint_following: bool = False) -> float:
    """Closed-form success probability of a uniform-random actor.

    With hint_following=True hinted steps count as certain successes and
    the remaining steps stay uniform, i.e. the binomial tail over the
    unhinted steps only.
    """
    p = 1.0 / task.action_arity
    if hint_following:
        free = task.length - task.hint_count
        need = task.required_correct - task.hint_count
    else:
        free = task.length
        need = task.required_correct
    if need <= 0:
        return 1.0
    return float(
        sum(
            math.comb(free, k) * p**k * (1.0 - p) ** (free - k)
            for k in range(need, free + 1)
        )
    )


def _child_id(task: TaskSpec, direction: str, seed: int) -> str:
    tag = "e" if direction == "easier" else "h"
    return f"{task.task_id}~{tag}{task.generation + 1}.{int(seed) % 10000:04d}"


def perturb_task(task, direction, critic_summary=None, seed: int = 0) -> TaskSpec:
    """Propose a mutated child task in the given difficulty direction.

    easier: hint the most-flagged unhinted steps (at most ceil(T/3) new
    hints per call, ties to the lowest index; unflagged lowest-index
    steps when nothing is flagged); once every step is hinted, decrement
    required_correct (floor 1).
    harder: clear one hinted step (least-flagged, lowest index); else
    bump action_arity (cap K_MAX); else append one seeded step (cap
    L_MAX).  Raises SaturationError when no mutation applies.
    """
    if direction not in ("easier", "harder"):
        raise ValueError(f"direction must be 'easier' or 'harder', got {direction!r}")
    flags = dict(critic_summary.flagged_steps) if critic_summary is not None else {}
    common = dict(
        task_id=_child_id(task, direction, seed),
        parent_id=task.task_id,
        generation=task.generation + 1,
        direction_of_last_mutation=direction,
    )

    if direction == "easier":
        unhinted = [i for i in range(task.length) if not task.hint_mask[i]]
        if not unhinted:
            if task.required_correct <= 1:
                raise SaturationError(
                    f"task {task.task_id} cannot be made easier: fully hinted, required_correct=1"
                )
            return replace(task, required_correct=task.required_correct - 1, **common)
        cap = math.ceil(task.length / 3)
        flagged = [i for i in unhinted if flags.get(i, 0) > 0]
        pool = flagged if flagged else unhinted
        chosen = sorted(pool, key=lambda i: (-flags.get(i, 0), i))[:cap]
        mask = list(task.hint_mask)
        for i in chosen:
            mask[i] = True
        return replace(task, hint_mask=tuple(mask), **common)

    hinted = [i for i in range(task.length) if task.hint_mask[i]]
    if hinted:
        drop = min(hinted, key=lambda i: (flags.get(i, 0), i))
        mask = list(task.hint_mask)
        mask[drop] = False
        return replace(task, hint_mask=tuple(mask), **common)
    if task.action_arity < K_MAX:
        return replace(task, action_arity=task.action_arity + 1, **common)
    if task.length < L_MAX:
        new_target = int(
            rng.integers(rng.stream_key("task-extend", task.task_id, seed),
                         task.action_arity)
        )
        return replace(
            task,
            length=task.length + 1,
            target_sequence=task.target_sequence + (new_target,),
            hint_mask=task.hint_mask + (False,),
            **common,
        )
    raise SaturationError(
        f"task {task.task_id} cannot be made harder: no hints, arity and length at caps"
    )


def save_tasks(tasks: Iterable[TaskSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in tasks], fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_tasks(path) -> list[TaskSpec]:
    with open(path, encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError("task file must contain a JSON array of task records")
    return [TaskSpec.from_dict(r) for r in records]
