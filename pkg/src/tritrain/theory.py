"""Exact and Monte-Carlo checks of the labeler-precision guarantees.

Two questions are answered numerically.  First: if a step labeler has
true-positive rate p_plus and true-negative rate p_minus, how often
does the mean of m labels rank a good step above a bad one?  The
pairwise margin is a sum of i.i.d. variables in {+2, 0, -2}, so the
answer comes from an exact convolution, which is then compared against
its closed-form exponential lower bound.  Second: the consistency
objective used to train the labeler equals, sample for sample, a
weighted sum of outcome-gated importance terms plus a constant; a
paired Monte-Carlo estimator confirms the identity and traces how the
weight mass migrates between the success and failure branches as task
difficulty moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng
from .policy import (
    PolicyParams,
    _actions_from_uniforms,
    action_probs,
    hint_following_params,
    init_policy_params,
)
from .reward_model import RMParams, init_rm_params, label_prob_table, oracle_rm_params
from .tasks import TaskSpec, task_features

DEFAULT_P_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_M_GRID = (1, 2, 4, 8, 16, 32, 64, 128, 256)
_REL_ERROR_FLOOR = 1e-9
_LOW_SAMPLE_THRESHOLD = 10**4


@dataclass(frozen=True)
class PrecisionQuery:
    p_plus: float
    p_minus: float
    m: int

    def __post_init__(self):
        if not 0.0 <= self.p_plus <= 1.0 or not 0.0 <= self.p_minus <= 1.0:
            raise ValueError("label rates must lie in [0, 1]")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def mu(self) -> float:
        return self.p_plus + self.p_minus


@dataclass(frozen=True)
class IdentityReport:
    lhs_estimate: float
    rhs_estimate: float
    c_constant: float
    n_samples: int
    rel_error: float
    std_error: float
    low_sample_warning: bool


def exact_precision(query: PrecisionQuery) -> tuple[float, float]:
    """Exact (P(margin > 0), P(margin = 0)) for the m-label comparison.

    The per-label margin takes +2 with probability p_plus * p_minus,
    -2 with (1 - p_plus)(1 - p_minus), and 0 otherwise; the m-fold
    distribution is built by direct convolution.
    """
    pp, pm, m = query.p_plus, query.p_minus, query.m
    p_up = pp * pm
    p_down = (1.0 - pp) * (1.0 - pm)
    kernel = np.array([p_down, 1.0 - p_up - p_down, p_up])
    dist = np.array([1.0])
    for _ in range(m):
        dist = np.convolve(dist, kernel)
    a_strict = float(math.fsum(dist[m + 1:]))
    p_tie = float(dist[m])
    return a_strict, p_tie


def hoeffding_bound(mu: float, m: int) -> float:
    """Closed-form lower bound 1 - exp(-m (mu-1)^2 / 4), valid for mu > 1."""
    if not mu > 1.0:
        raise ValueError(f"the bound needs mu > 1, got {mu}")
    if m < 1:
        raise ValueError("m must be at least 1")
    return 1.0 - math.exp(-m * (mu - 1.0) ** 2 / 4.0)


@dataclass(frozen=True)
class PrecisionGridReport:
    rows: tuple[dict, ...]
    violations: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_theorem1(p_grid: Sequence[float] = DEFAULT_P_GRID,
                    m_grid: Sequence[int] = DEFAULT_M_GRID) -> PrecisionGridReport:
    """Grid check of the precision formula against its guarantees.

    For every (p_plus, p_minus) pair: above mu = 1 the exact value must
    dominate the exponential bound at every m, increase along the m
    grid, and exceed 0.999 by m = 256 once mu >= 1.2; at mu = 1 the
    strict-win probability equals (1 - tie) / 2 by symmetry; below
    mu = 0.8 it must collapse under 0.001 by m = 256.
    """
    if not p_grid or not m_grid:
        raise ValueError("grids must be non-empty")
    m_list = sorted(int(m) for m in m_grid)
    rows = []
    violations = []
    for pp in p_grid:
        for pm in p_grid:
            mu = pp + pm
            a_by_m = {}
            tie_by_m = {}
            for m in m_list:
                a, tie = exact_precision(PrecisionQuery(pp, pm, m))
                a_by_m[m] = a
                tie_by_m[m] = tie
            regime = "mu=1" if abs(mu - 1.0) < 1e-9 else ("mu>1" if mu > 1 else "mu<1")
            row = {"p_plus": pp, "p_minus": pm, "mu": mu, "regime": regime,
                   "a_strict": dict(a_by_m), "p_tie": dict(tie_by_m)}
            if regime == "mu>1":
                bounds = {m: hoeffding_bound(mu, m) for m in m_list}
                row["bound"] = bounds
                for m in m_list:
                    # 1e-12 absorbs convolution roundoff when both sides sit at 1
                    if a_by_m[m] < bounds[m] - 1e-12:
                        violations.append(
                            f"bound violated at (p+={pp}, p-={pm}, m={m}): "
                            f"{a_by_m[m]:.6f} < {bounds[m]:.6f}"
                        )
                for lo, hi in zip(m_list, m_list[1:]):
                    if a_by_m[hi] < a_by_m[lo] - 1e-12:
                        violations.append(
                            f"precision not non-decreasing at (p+={pp}, p-={pm}): "
                            f"m={lo} -> {hi} fell {a_by_m[lo]:.6f} -> {a_by_m[hi]:.6f}"
                        )
                if mu >= 1.2 and a_by_m[m_list[-1]] <= 0.999:
                    violations.append(
                        f"precision stuck at (p+={pp}, p-={pm}): "
                        f"a({m_list[-1]}) = {a_by_m[m_list[-1]]:.6f} <= 0.999"
                    )
            elif regime == "mu<1":
                if mu <= 0.8 and a_by_m[m_list[-1]] >= 0.001:
                    violations.append(
                        f"precision failed to vanish at (p+={pp}, p-={pm}): "
                        f"a({m_list[-1]}) = {a_by_m[m_list[-1]]:.6f} >= 0.001"
                    )
            else:
                for m in m_list:
                    expected = (1.0 - tie_by_m[m]) / 2.0
                    if abs(a_by_m[m] - expected) > 1e-12:
                        violations.append(
                            f"symmetry identity broken at (p+={pp}, p-={pm}, m={m}): "
                            f"{a_by_m[m]!r} vs {expected!r}"
                        )
            rows.append(row)
    return PrecisionGridReport(tuple(rows), tuple(violations))


def format_theorem1_report(report: PrecisionGridReport, max_rows: int = 12) -> str:
    lines = [f"{'p+':>4} {'p-':>4} {'mu':>4} {'regime':>6}  a(min m)  a(max m)"]
    for row in report.rows[:max_rows]:
        ms = sorted(row["a_strict"])
        lines.append(
            f"{row['p_plus']:>4} {row['p_minus']:>4} {row['mu']:>4.1f} "
            f"{row['regime']:>6}  {row['a_strict'][ms[0]]:.6f}  "
            f"{row['a_strict'][ms[-1]]:.6f}"
        )
    if len(report.rows) > max_rows:
        lines.append(f"... {len(report.rows) - max_rows} more rows")
    lines.append(f"violations: {len(report.violations)}")
    lines.extend(report.violations)
    return "\n".join(lines)


def lambda_conditions(lam: float, p_old_plus: float,
                      p_old_minus: float) -> tuple[float, float, bool]:
    """Importance weights 1 + 2*lam*p - lam for both branches.

    Both must be non-negative for the mixing weight lam to keep the
    objective aligned; that fails exactly when a branch probability
    drops below (lam - 1) / (2 * lam).
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    for p in (p_old_plus, p_old_minus):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probabilities must lie in [0, 1], got {p}")
    f_plus = 1.0 + 2.0 * lam * p_old_plus - lam
    f_minus = 1.0 + 2.0 * lam * p_old_minus - lam
    return f_plus, f_minus, bool(f_plus >= 0.0 and f_minus >= 0.0)


def _rollout_chunk(policy: PolicyParams, task: TaskSpec, offset: int, count: int,
                   seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Correctness matrix and outcomes for trajectories [offset, offset+count)."""
    feats = task_features(task)
    probs = action_probs(policy.weights, feats, task.action_arity, 1.0)
    key = rng.stream_key(seed, task.task_id, "action")
    traj = (offset + np.arange(count))[:, None]
    u = rng.uniforms(key, traj, np.arange(task.length)[None, :])
    actions = _actions_from_uniforms(probs, u)
    correct = actions == np.asarray(task.target_sequence)[None, :]
    outcomes = np.where(correct.sum(axis=1) >= task.required_correct, 1, -1)
    return correct, outcomes


def _label_probs_chunk(rm: RMParams, task: TaskSpec, correct: np.ndarray,
                       offset: int, seed: int) -> np.ndarray:
    """P(S=+1) per step after the noisy channel, same keying as training."""
    n, length = correct.shape
    key_e = rng.stream_key(seed, task.task_id, "evidence")
    traj = (offset + np.arange(n))[:, None]
    flip = rng.uniforms(key_e, traj, np.arange(length)[None, :]) < rm.evidence_noise
    channel = correct ^ flip
    ptab = label_prob_table(rm, task)
    return ptab[np.arange(length)[None, :], channel.astype(int)]


def mc_objective_identity(task: TaskSpec, policy: PolicyParams, rm: RMParams,
                          lam: float = 1.0, n_samples: int = 10**6,
                          seed: int = 0, chunk: int = 8192) -> IdentityReport:
    """Paired Monte-Carlo check of the consistency-objective identity.

    Left side: expected consistency reward per sampled label; the m
    labels inside the integrated reward are sampled exactly as in
    training, while the scored label's conditional mean (2p - 1) is
    applied in closed form.  Right side, on the same trajectories:
    4 * (p^2 on successes + (1-p)^2 on failures) plus the constant
    C = -2 * E[p on successes + (1-p) on failures].  n_samples counts
    per-step paired draws; trajectory streams are nested, so enlarging
    n_samples extends the same sample path.
    """
    if lam != 1.0:
        raise ValueError("the identity is stated at lam = 1; see lambda_conditions")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    length = task.length
    n_traj = -(-n_samples // length)
    m = rm.m
    sums = {"lhs": 0.0, "rhs": 0.0, "c": 0.0, "diff": 0.0, "diff2": 0.0}
    key_l = rng.stream_key(seed, task.task_id, "label")
    steps = np.arange(length)
    for offset in range(0, n_traj, chunk):
        count = min(chunk, n_traj - offset)
        correct, outcomes = _rollout_chunk(policy, task, offset, count, seed)
        p = _label_probs_chunk(rm, task, correct, offset, seed)
        traj = (offset + np.arange(count))[:, None, None]
        u = rng.uniforms(key_l, traj, steps[None, :, None],
                         np.arange(m)[None, None, :])
        labels = np.where(u < p[:, :, None], 1.0, -1.0)
        reward = outcomes[:, None] + lam * labels.mean(axis=2)
        lhs = reward * (2.0 * p - 1.0)
        succ = (outcomes == 1)[:, None]
        rhs_weight = np.where(succ, 4.0 * p * p, 4.0 * (1.0 - p) * (1.0 - p))
        c_term = -2.0 * np.where(succ, p, 1.0 - p)
        rhs = rhs_weight + c_term
        diff = lhs - rhs
        sums["lhs"] += float(lhs.sum())
        sums["rhs"] += float(rhs.sum())
        sums["c"] += float(c_term.sum())
        sums["diff"] += float(diff.sum())
        sums["diff2"] += float((diff * diff).sum())
    n = n_traj * length
    lhs_mean = sums["lhs"] / n
    rhs_mean = sums["rhs"] / n
    diff_mean = sums["diff"] / n
    var_diff = max(sums["diff2"] / n - diff_mean**2, 0.0)
    return IdentityReport(
        lhs_estimate=lhs_mean,
        rhs_estimate=rhs_mean,
        c_constant=sums["c"] / n,
        n_samples=n,
        rel_error=abs(lhs_mean - rhs_mean)
        / max(abs(lhs_mean), abs(rhs_mean), _REL_ERROR_FLOOR),
        std_error=math.sqrt(var_diff / n),
        low_sample_warning=n < _LOW_SAMPLE_THRESHOLD,
    )


def weight_ratio_curve(tasks: Sequence[TaskSpec], policy: PolicyParams,
                       rm: RMParams, n_samples: int = 20000,
                       seed: int = 0, chunk: int = 8192) -> list[dict]:
    """Empirical L2 mass of the two outcome-gated weight branches per task.

    For each task the success branch collects p over steps of successful
    trajectories and the failure branch collects (1 - p) over steps of
    failing ones; the row reports both norms, their ratio (+inf when no
    failures were sampled), and the sample split.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rows = []
    for task in tasks:
        sq_plus = sq_minus = 0.0
        n_success = n_fail = 0
        for offset in range(0, n_samples, chunk):
            count = min(chunk, n_samples - offset)
            correct, outcomes = _rollout_chunk(policy, task, offset, count, seed)
            p = _label_probs_chunk(rm, task, correct, offset, seed)
            succ = outcomes == 1
            sq_plus += float((p[succ] ** 2).sum())
            sq_minus += float(((1.0 - p[~succ]) ** 2).sum())
            n_success += int(succ.sum())
            n_fail += int(count - succ.sum())
        norm_plus = math.sqrt(sq_plus)
        norm_minus = math.sqrt(sq_minus)
        if norm_minus == 0.0:
            ratio = math.inf
        else:
            ratio = norm_plus / norm_minus
        rows.append({
            "task_id": task.task_id,
            "p_success": n_success / n_samples,
            "n_success": n_success,
            "n_fail": n_fail,
            "norm_plus": norm_plus,
            "norm_minus": norm_minus,
            "ratio": ratio,
        })
    return rows


def reference_identity_configs() -> dict:
    """Three fixed (task, policy, rm) triples spanning the outcome skew."""
    balanced_task = TaskSpec(
        task_id="identity-balanced", parent_id=None, length=5, action_arity=2,
        target_sequence=(0, 1, 0, 1, 1), hint_mask=(False,) * 5,
        required_correct=3,
    )
    hard_task = TaskSpec(
        task_id="identity-hard", parent_id=None, length=6, action_arity=4,
        target_sequence=(2, 0, 3, 1, 1, 0), hint_mask=(False,) * 6,
        required_correct=4,
    )
    easy_task = TaskSpec(
        task_id="identity-easy", parent_id=None, length=6, action_arity=2,
        target_sequence=(1, 0, 0, 1, 0, 1), hint_mask=(False,) * 6,
        required_correct=2,
    )
    mixed_rm = init_rm_params()
    mixed_rm.weights[24:28] = (0.2, -0.3, 0.1, 0.25)
    return {
        "balanced": (balanced_task, init_policy_params(), init_rm_params()),
        "hard": (hard_task, init_policy_params(), oracle_rm_params(scale=2.0)),
        "easy": (easy_task, init_policy_params(), mixed_rm),
    }


def reference_ratio_sweep() -> tuple[list[TaskSpec], PolicyParams, RMParams]:
    """Hard / balanced / easy tasks and the fixed actor and labeler.

    The actor reads hints at scale 3.0, so a hinted step succeeds with
    probability ~0.87 while an unhinted wide-arity step is close to a
    blind guess; hint coverage and the pass threshold tune the success
    rate from ~1e-10 (hard) through ~0.43 (balanced) to ~1 (easy).
    """
    hard = TaskSpec(
        task_id="ratio-hard", parent_id=None, length=8, action_arity=16,
        target_sequence=(3, 7, 1, 12, 5, 9, 0, 14), hint_mask=(False,) * 8,
        required_correct=8,
    )
    balanced = TaskSpec(
        task_id="ratio-balanced", parent_id=None, length=6, action_arity=4,
        target_sequence=(1, 3, 0, 2, 1, 0), hint_mask=(True,) * 6,
        required_correct=6,
    )
    easy = TaskSpec(
        task_id="ratio-easy", parent_id=None, length=6, action_arity=4,
        target_sequence=(2, 0, 1, 3, 2, 1), hint_mask=(True,) * 6,
        required_correct=1,
    )
    return [hard, balanced, easy], hint_following_params(3.0), init_rm_params()


def verify_theorem2(n_samples: int = 10**6, ratio_samples: int = 20000,
                    seed: int = 0, rel_tol: float = 0.03) -> dict:
    """Identity check on the three reference configs plus the ratio sweep."""
    identity = {}
    violations = []
    for name, (task, policy, rm) in reference_identity_configs().items():
        report = mc_objective_identity(task, policy, rm, lam=1.0,
                                       n_samples=n_samples, seed=seed)
        identity[name] = report
        if report.rel_error >= rel_tol:
            violations.append(
                f"identity rel_error {report.rel_error:.5f} >= {rel_tol} on {name}"
            )
    tasks, policy, rm = reference_ratio_sweep()
    rows = weight_ratio_curve(tasks, policy, rm, ratio_samples, seed)
    by_id = {row["task_id"]: row for row in rows}
    hard, bal, easy = (by_id["ratio-hard"], by_id["ratio-balanced"],
                       by_id["ratio-easy"])
    if not hard["ratio"] < 0.1 * bal["ratio"]:
        violations.append(
            f"ratio(hard)={hard['ratio']:.4f} not < 0.1 * ratio(balanced)="
            f"{bal['ratio']:.4f}"
        )
    if not (math.isinf(easy["ratio"]) or 0.1 * bal["ratio"] < 0.01 * easy["ratio"]):
        violations.append(
            f"0.1 * ratio(balanced)={bal['ratio']:.4f} not < 0.01 * ratio(easy)="
            f"{easy['ratio']:.4f}"
        )
    return {"identity": identity, "ratio_rows": rows, "violations": violations,
            "passed": not violations}
