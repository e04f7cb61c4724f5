"""
Task perturbation, the acceptance gate, and the audit log
=========================================================

When a task's measured accuracy leaves the [alpha_low, alpha_high]
band, the pool proposes a perturbed child: hints on the most-flagged
steps when the task is too hard, fewer hints / wider arity when it is
too easy. The child replaces its parent only if its accuracy lands
strictly inside the band on the right side of the parent's. Every
accepted replacement is logged with enough detail to re-check the gate
offline.
"""

from tritrain import (
    CriticSummary,
    TaskPool,
    commit,
    decide_direction,
    gate,
    propose_with_accuracy,
    replay_accepted_records,
)
from tritrain.presets import reference_tasks
from tritrain.tasks import uniform_success_probability

pool = TaskPool.from_tasks(reference_tasks())

# ref-h1 is far below the band under the uniform policy
task = pool.active["ref-h1"]
acc = uniform_success_probability(task)
direction = decide_direction(acc, 0.2, 0.8)
print(f"{task.task_id}: acc={acc:.4f} -> direction={direction}")

# pretend the labeler flagged steps 2 and 4 most often
critic = CriticSummary(task_id=task.task_id,
                       flagged_steps={2: 6, 4: 5, 0: 1}, total_rollouts=8)
proposal = propose_with_accuracy(pool, task, acc, direction, critic, seed=3)
child = proposal.proposed
print(f"proposed child {child.task_id}")
print(f"  parent hints: {task.hint_mask}")
print(f"  child hints:  {child.hint_mask}   (most-flagged steps first)")

# gate on the child's measured accuracy; here the closed form for a
# hint-following actor stands in for a rollout estimate
child_acc = uniform_success_probability(child, hint_following=True)
decided = gate(proposal, child_acc, 0.2, 0.8)
print(f"  child acc={child_acc:.4f} -> verdict={decided.verdict}")

committed = commit(pool, decided, step=0)
if committed is not None:
    print(f"  {task.task_id} replaced by {committed.task_id}; pool size "
          f"unchanged at {len(pool.active)}")
else:
    print(f"  rejected; {task.task_id} stays in the pool")

# The log alone is enough to re-validate every accepted replacement.
violations = replay_accepted_records(pool.accepted_log)
print(f"\nreplay of {len(pool.accepted_log)} accepted record(s): "
      f"{len(violations)} violation(s)")

# Tamper with the log and the replay notices.
if pool.accepted_log:
    pool.accepted_log[0]["acc_proposed"] = 0.99
    tampered = replay_accepted_records(pool.accepted_log)
    print(f"after tampering with acc_proposed: {len(tampered)} violation(s)")
    print(" ", tampered[0])
