"""Difficulty adaptation: propose, gate, and commit task mutations.

Tasks whose measured group accuracy falls outside [alpha_low,
alpha_high] get a mutated child proposed in the corrective direction.
The child is evaluated with fresh rollouts on the following iteration
and replaces its parent only if its accuracy strictly improves on the
parent's in the intended direction while staying inside the band edge:
harder needs alpha_low < acc_child < acc_parent, easier needs
acc_parent < acc_child < alpha_high.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .tasks import SaturationError, TaskSpec, perturb_task

ALPHA_LOW_DEFAULT = 0.2
ALPHA_HIGH_DEFAULT = 0.8


@dataclass(frozen=True)
class CriticSummary:
    """Per-step counts of negative labels across a group's evaluations."""

    task_id: str
    flagged_steps: Dict[int, int]
    total_rollouts: int


@dataclass(frozen=True)
class AdaptationProposal:
    original: TaskSpec
    proposed: TaskSpec
    direction: str
    acc_original: float
    acc_proposed: Optional[float] = None
    verdict: str = "pending"  # pending | accepted | rejected


@dataclass
class TaskPool:
    """Single-writer container for the active tasks and pending proposals."""

    active: Dict[str, TaskSpec] = field(default_factory=dict)
    pending: Dict[str, AdaptationProposal] = field(default_factory=dict)
    accepted_log: List[dict] = field(default_factory=list)

    @classmethod
    def from_tasks(cls, tasks: Sequence[TaskSpec]) -> "TaskPool":
        pool = cls()
        for t in tasks:
            if t.task_id in pool.active:
                raise ValueError(f"duplicate task_id {t.task_id!r} in pool")
            pool.active[t.task_id] = t
        return pool

    def sorted_ids(self) -> list[str]:
        return sorted(self.active)


def _check_alphas(alpha_low: float, alpha_high: float) -> None:
    if not 0.0 <= alpha_low < alpha_high <= 1.0:
        raise ValueError(
            f"need 0 <= alpha_low < alpha_high <= 1, got ({alpha_low}, {alpha_high})"
        )


def estimate_accuracy(outcomes) -> float:
    """Fraction of successful trajectories in a group."""
    if hasattr(outcomes, "trajectories"):
        values = [t.outcome for t in outcomes.trajectories]
    else:
        values = list(np.asarray(outcomes).ravel())
    if not values:
        raise ValueError("cannot estimate accuracy of an empty group")
    return float(np.mean([1.0 if v == 1 else 0.0 for v in values]))


def decide_direction(acc: float, alpha_low: float = ALPHA_LOW_DEFAULT,
                     alpha_high: float = ALPHA_HIGH_DEFAULT) -> Optional[str]:
    """'easier' below the band, 'harder' above it, None inside."""
    _check_alphas(alpha_low, alpha_high)
    if not 0.0 <= acc <= 1.0:
        raise ValueError(f"accuracy must lie in [0, 1], got {acc}")
    if acc < alpha_low:
        return "easier"
    if acc > alpha_high:
        return "harder"
    return None


def summarize_errors(group, evals) -> CriticSummary:
    """Count negative labels per step index over all trajectories and labels."""
    counts: Dict[int, int] = {}
    for ev in evals:
        neg = sum(1 for s in ev.labels if s == -1)
        if neg:
            counts[ev.step_index] = counts.get(ev.step_index, 0) + neg
    return CriticSummary(group.task_id, counts, len(group.trajectories))


def summarize_errors_array(task_id: str, labels: np.ndarray) -> CriticSummary:
    """Array-path critic: labels has shape (n, length, m)."""
    neg = (np.asarray(labels) == -1).sum(axis=(0, 2))
    counts = {int(i): int(c) for i, c in enumerate(neg) if c > 0}
    return CriticSummary(task_id, counts, int(labels.shape[0]))


def propose(pool: TaskPool, task: TaskSpec, direction: str,
            critic: Optional[CriticSummary] = None,
            seed: int = 0) -> Optional[AdaptationProposal]:
    """Register a pending mutation of `task`; None when saturated.

    Raises RuntimeError when the task already has a pending proposal and
    KeyError when it is not in the pool.
    """
    if task.task_id not in pool.active:
        raise KeyError(f"task {task.task_id!r} is not in the active pool")
    if task.task_id in pool.pending:
        raise RuntimeError(f"task {task.task_id!r} already has a pending proposal")
    try:
        child = perturb_task(task, direction, critic, seed)
    except SaturationError:
        return None
    proposal = AdaptationProposal(task, child, direction, float("nan"))
    pool.pending[task.task_id] = proposal
    return proposal


def propose_with_accuracy(pool: TaskPool, task: TaskSpec, acc: float,
                          direction: str, critic: Optional[CriticSummary],
                          seed: int = 0) -> Optional[AdaptationProposal]:
    """propose() with the parent's measured accuracy recorded for gating."""
    proposal = propose(pool, task, direction, critic, seed)
    if proposal is None:
        return None
    proposal = replace(proposal, acc_original=float(acc))
    pool.pending[task.task_id] = proposal
    return proposal


def gate_predicate(direction: str, acc_original: float, acc_proposed: float,
                   alpha_low: float = ALPHA_LOW_DEFAULT,
                   alpha_high: float = ALPHA_HIGH_DEFAULT) -> bool:
    """Strict acceptance test for a measured child accuracy."""
    _check_alphas(alpha_low, alpha_high)
    if direction == "harder":
        return alpha_low < acc_proposed < acc_original
    if direction == "easier":
        return acc_original < acc_proposed < alpha_high
    raise ValueError(f"direction must be 'easier' or 'harder', got {direction!r}")


def gate(proposal: AdaptationProposal, acc_proposed: float,
         alpha_low: float = ALPHA_LOW_DEFAULT,
         alpha_high: float = ALPHA_HIGH_DEFAULT) -> AdaptationProposal:
    """Fill in the child's measured accuracy and decide the verdict."""
    if proposal.verdict != "pending":
        raise RuntimeError(f"proposal already decided: {proposal.verdict}")
    ok = gate_predicate(proposal.direction, proposal.acc_original,
                        acc_proposed, alpha_low, alpha_high)
    return replace(proposal, acc_proposed=float(acc_proposed),
                   verdict="accepted" if ok else "rejected")


def commit(pool: TaskPool, proposal: AdaptationProposal, step: int,
           alpha_low: float = ALPHA_LOW_DEFAULT,
           alpha_high: float = ALPHA_HIGH_DEFAULT) -> Optional[TaskSpec]:
    """Apply a decided proposal to the pool.

    Accepted proposals replace the original task and append a replayable
    record to the accepted log; either way the pending slot is cleared.
    Returns the newly active child for accepted proposals, else None.
    """
    if proposal.verdict == "pending":
        raise RuntimeError("cannot commit an undecided proposal")
    original_id = proposal.original.task_id
    pool.pending.pop(original_id, None)
    if proposal.verdict != "accepted":
        return None
    if original_id not in pool.active:
        raise KeyError(f"original task {original_id!r} missing from pool")
    del pool.active[original_id]
    pool.active[proposal.proposed.task_id] = proposal.proposed
    pool.accepted_log.append({
        "step": int(step),
        "direction": proposal.direction,
        "acc_original": proposal.acc_original,
        "acc_proposed": proposal.acc_proposed,
        "alpha_low": alpha_low,
        "alpha_high": alpha_high,
        "original": proposal.original.to_dict(),
        "proposed": proposal.proposed.to_dict(),
    })
    return proposal.proposed


def replay_accepted_records(records: Sequence[dict]) -> list[str]:
    """Re-validate every accepted-log record; returns violation messages."""
    violations = []
    last_step = -1
    for idx, rec in enumerate(records):
        where = f"record {idx}"
        try:
            original = TaskSpec.from_dict(rec["original"])
            proposed = TaskSpec.from_dict(rec["proposed"])
        except (KeyError, ValueError) as exc:
            violations.append(f"{where}: invalid task spec ({exc})")
            continue
        if rec["step"] < last_step:
            violations.append(f"{where}: step index decreased")
        last_step = max(last_step, rec["step"])
        if proposed.parent_id != original.task_id:
            violations.append(f"{where}: lineage broken")
        if proposed.direction_of_last_mutation != rec["direction"]:
            violations.append(f"{where}: direction mismatch")
        if not gate_predicate(rec["direction"], rec["acc_original"],
                              rec["acc_proposed"], rec["alpha_low"],
                              rec["alpha_high"]):
            violations.append(
                f"{where}: gate predicate fails "
                f"({rec['direction']}, {rec['acc_original']}, {rec['acc_proposed']})"
            )
    return violations
