"""Closed-loop co-training of a policy, a step labeler, and a task pool.

Everything runs on small parametric models over synthetic tasks, on one
CPU, fully deterministically: every random draw is keyed by purpose and
counter, so repeated runs and different worker counts produce identical
outputs. The theory module carries exact and Monte-Carlo checks of the
label-precision bound and the objective identity the training design
rests on.
"""

from .adaptation import (
    AdaptationProposal,
    CriticSummary,
    TaskPool,
    commit,
    decide_direction,
    estimate_accuracy,
    gate,
    gate_predicate,
    propose,
    propose_with_accuracy,
    replay_accepted_records,
    summarize_errors,
    summarize_errors_array,
)
from .coding import (
    CodingParams,
    equivalence_sweep,
    label_populations,
    remark2_equivalence,
    synth_coding_instance,
)
from .feedback import (
    REWARD_MODES,
    AdvantageSet,
    StepReward,
    build_advantages,
    integrated_step_reward,
    reward_mode_select,
    rm_advantages_array,
    standardize,
    standardize_axis,
    step_rewards_array,
)
from .harness import (
    MODES,
    MetricsRecord,
    RunConfig,
    TrainResult,
    ablate,
    parse_mode_label,
    summarize_run,
    train,
)
from .policy import (
    PolicyParams,
    hint_following_params,
    init_policy_params,
    load_policy,
    policy_update,
    sample_group,
    sample_trajectory,
    save_policy,
)
from .presets import load_reference_tasks, probe_tasks, reference_tasks
from .reward_model import (
    AccuracyReport,
    DegenerateProbeError,
    RMParams,
    build_evidence,
    evaluate_step,
    evaluation_arrays,
    init_rm_params,
    load_rm,
    measure_accuracy,
    oracle_rm_params,
    rm_update,
    save_rm,
)
from .tasks import TaskSpec, load_tasks, perturb_task, save_tasks
from .theory import (
    IdentityReport,
    PrecisionGridReport,
    PrecisionQuery,
    exact_precision,
    hoeffding_bound,
    lambda_conditions,
    mc_objective_identity,
    verify_theorem1,
    verify_theorem2,
    weight_ratio_curve,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport", "AdaptationProposal", "AdvantageSet", "CodingParams",
    "CriticSummary", "DegenerateProbeError", "IdentityReport", "MODES",
    "MetricsRecord", "PolicyParams", "PrecisionGridReport", "PrecisionQuery",
    "REWARD_MODES", "RMParams", "RunConfig", "StepReward", "TaskPool",
    "TaskSpec", "TrainResult", "ablate", "build_advantages", "build_evidence",
    "commit", "decide_direction", "equivalence_sweep", "estimate_accuracy",
    "evaluate_step", "evaluation_arrays", "exact_precision", "gate",
    "gate_predicate", "hint_following_params", "hoeffding_bound",
    "init_policy_params", "init_rm_params", "integrated_step_reward",
    "label_populations", "lambda_conditions", "load_policy",
    "load_reference_tasks", "load_rm", "load_tasks", "mc_objective_identity",
    "measure_accuracy", "oracle_rm_params", "parse_mode_label",
    "perturb_task", "policy_update", "probe_tasks", "propose",
    "propose_with_accuracy", "reference_tasks", "remark2_equivalence",
    "replay_accepted_records", "reward_mode_select", "rm_advantages_array",
    "rm_update", "sample_group", "sample_trajectory", "save_policy",
    "save_rm", "save_tasks", "standardize", "standardize_axis",
    "step_rewards_array", "summarize_errors", "summarize_errors_array",
    "summarize_run", "synth_coding_instance", "train", "verify_theorem1",
    "verify_theorem2", "weight_ratio_curve",
]
