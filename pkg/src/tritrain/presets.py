"""Canonical task sets: the 16-task reference suite and the probe set.

The reference suite spans success probabilities from ~0.009 to ~0.94
under the uniform initial policy: two easy tasks above the adaptation
band, eight mid tasks inside it (two of which carry hints so the actor
meets hint features early), and six hard tasks below it.

The probe set measures labeler quality and is built so the two label
classes are pure.  Probed by the scripted hint follower, the two pass
tasks (fully hinted, every step required) always succeed with every
step correct, and the two fail tasks (no hints, one correct step would
suffice) always fail with every step wrong: their targets sit on the
follower's least likely action per step, so a stray hit has probability
under 1e-6.  A perfect channel reader therefore scores p_plus = p_minus
= 1 - evidence_noise on this set, which is the measurement ceiling.
"""

from __future__ import annotations

import json
from importlib import resources

from .tasks import TaskSpec

REFERENCE_DATA_FILE = "reference_tasks.json"

# (id, length, arity, targets, hinted steps, required_correct)
_REFERENCE_TABLE = (
    ("ref-e1", 4, 2, (1, 0, 1, 1), (), 1),
    ("ref-e2", 6, 2, (0, 1, 1, 0, 1, 0), (), 2),
    ("ref-m1", 6, 2, (1, 1, 0, 1, 0, 0), (), 3),
    ("ref-m2", 6, 2, (0, 0, 1, 0, 1, 1), (), 4),
    ("ref-m3", 8, 2, (1, 0, 0, 1, 1, 0, 1, 0), (), 5),
    ("ref-m4", 4, 4, (2, 0, 3, 1), (), 1),
    ("ref-m5", 6, 4, (3, 1, 0, 2, 3, 0), (), 2),
    ("ref-m6", 8, 4, (0, 2, 1, 3, 0, 1, 2, 3), (), 2),
    ("ref-m7", 4, 4, (1, 3, 2, 0), (0,), 2),
    ("ref-m8", 6, 2, (1, 0, 1, 1, 0, 1), (0, 3), 4),
    ("ref-h1", 6, 6, (4, 0, 5, 2, 1, 3), (), 4),
    ("ref-h2", 6, 4, (2, 3, 0, 1, 2, 0), (), 4),
    ("ref-h3", 8, 4, (1, 0, 3, 2, 1, 3, 0, 2), (), 5),
    ("ref-h4", 6, 8, (6, 1, 4, 0, 7, 3), (), 3),
    ("ref-h5", 8, 6, (0, 5, 2, 4, 1, 3, 5, 2), (), 4),
    ("ref-h6", 8, 8, (3, 6, 0, 2, 7, 1, 5, 4), (), 4),
)

# Fail-task targets are frozen argmin actions of hint_following_params(40)
# on each step's context; regenerating contexts would invalidate them.
_PROBE_TABLE = (
    ("probe-pass-1", 6, 8, (3, 6, 1, 4, 0, 5), (0, 1, 2, 3, 4, 5), 6),
    ("probe-pass-2", 4, 4, (2, 0, 3, 1), (0, 1, 2, 3), 4),
    ("probe-fail-1", 6, 8, (5, 4, 0, 4, 0, 1), (), 1),
    ("probe-fail-2", 4, 4, (0, 3, 1, 1), (), 1),
)


def _build(table) -> list[TaskSpec]:
    tasks = []
    for task_id, length, arity, targets, hinted, required in table:
        mask = tuple(i in hinted for i in range(length))
        tasks.append(TaskSpec(
            task_id=task_id, parent_id=None, length=length,
            action_arity=arity, target_sequence=targets,
            hint_mask=mask, required_correct=required,
        ))
    return tasks


def reference_tasks() -> list[TaskSpec]:
    """The 16-task training suite, rebuilt from the in-code table."""
    return _build(_REFERENCE_TABLE)


def probe_tasks() -> list[TaskSpec]:
    """Held-out pass/fail task pairs for labeler accuracy measurements."""
    return _build(_PROBE_TABLE)


def load_reference_tasks() -> list[TaskSpec]:
    """The packaged copy of the reference suite (what the CLI defaults to)."""
    payload = json.loads(
        (resources.files("tritrain") / "data" / REFERENCE_DATA_FILE).read_text()
    )
    return [TaskSpec.from_dict(entry) for entry in payload]
