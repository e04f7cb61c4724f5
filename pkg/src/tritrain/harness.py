"""Training orchestration: the co-training loop, ablations, and metrics.

A run owns three pieces of mutable state: the actor, the step labeler,
and the task pool.  Each step samples a slice of the active pool plus
any pending task proposals, rolls everything out against immutable
parameter snapshots (fan-out safe), gates and commits proposals, then
applies the actor and labeler updates serially in a fixed order.
Every random draw derives from (run seed, purpose tag, step index), so
metrics streams are byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rng
from .adaptation import (
    TaskPool,
    commit,
    decide_direction,
    estimate_accuracy,
    gate,
    propose_with_accuracy,
    summarize_errors_array,
)
from .coding import label_populations, remark2_equivalence, synth_coding_instance
from .feedback import (
    REWARD_MODES,
    rm_advantages_array,
    standardize_axis,
    step_rewards_array,
)
from .policy import (
    PolicyParams,
    group_arrays,
    hint_following_params,
    init_policy_params,
    policy_update,
    save_policy,
)
from .presets import load_reference_tasks, probe_tasks
from .reward_model import (
    AccuracyReport,
    RMParams,
    evaluation_arrays,
    evidence_matrix,
    init_rm_params,
    load_rm,
    measure_accuracy,
    rm_update,
    save_rm,
)
from .tasks import TaskSpec, load_tasks, save_tasks

MODES = ("policy_only", "policy_reward", "policy_reward_env",
         "outcome_only", "step_only")
PROBE_ROLLOUTS = 8


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; every field round-trips through JSON."""

    mode: str = "policy_reward_env"
    lambda_policy: float = 1.0
    lambda_rm: float = 1.0
    m: int = 3
    group_size: int = 8
    tasks_per_step: int = 16
    alpha_low: float = 0.2
    alpha_high: float = 0.8
    steps: int = 300
    seeds: tuple = (0,)
    policy_lr: float = 0.3
    rm_lr: float = 1.0
    clip_epsilon: float = 0.2
    kl_beta: float = 0.01
    temperature: float = 1.0
    evidence_noise: float = 0.1
    reward_mode: str = "integrated"
    coding: bool = False
    tasks_path: Optional[str] = None
    rm_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.lambda_policy <= 0 or self.lambda_rm <= 0:
            raise ValueError("lambda_policy and lambda_rm must be positive")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2 to standardize")
        if self.tasks_per_step < 1 or self.steps < 1:
            raise ValueError("tasks_per_step and steps must be positive")
        if not 0.0 <= self.alpha_low < self.alpha_high <= 1.0:
            raise ValueError("need 0 <= alpha_low < alpha_high <= 1")
        if self.policy_lr <= 0 or self.rm_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.clip_epsilon is not None and self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive or null")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.evidence_noise < 0.5:
            raise ValueError("evidence_noise must lie in [0, 0.5)")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ValueError("seeds must be a non-empty list of integers")
        if self.mode == "step_only" and not self.rm_checkpoint:
            raise ValueError("step_only mode requires rm_checkpoint")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def effective_reward_mode(self) -> str:
        if self.mode == "outcome_only":
            return "outcome_only"
        if self.mode == "step_only":
            return "step_only"
        return self.reward_mode

    @property
    def trains_rm(self) -> bool:
        return self.mode in ("policy_reward", "policy_reward_env")

    @property
    def adapts_tasks(self) -> bool:
        return self.mode == "policy_reward_env"

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "seeds" in data:
            data["seeds"] = tuple(data["seeds"])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class MetricsRecord:
    """One line of metrics.jsonl; wall_time is logged to a sidecar so the
    metrics stream itself stays byte-identical across reruns."""

    step: int
    task_accuracy: dict
    success_rate: float
    mean_outcome: float
    rm_accuracy: dict
    accepted_count: int
    pending_count: int
    mean_abs_advantage: float
    wall_time: float = 0.0
    coding_max_deviation: Optional[float] = None

    def to_json_dict(self) -> dict:
        out = {
            "step": self.step,
            "task_accuracy": {k: self.task_accuracy[k]
                              for k in sorted(self.task_accuracy)},
            "success_rate": self.success_rate,
            "mean_outcome": self.mean_outcome,
            "rm_accuracy": self.rm_accuracy,
            "accepted_count": self.accepted_count,
            "pending_count": self.pending_count,
            "mean_abs_advantage": self.mean_abs_advantage,
        }
        if self.coding_max_deviation is not None:
            out["coding_max_deviation"] = self.coding_max_deviation
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "MetricsRecord":
        return cls(
            step=data["step"],
            task_accuracy=data["task_accuracy"],
            success_rate=data["success_rate"],
            mean_outcome=data["mean_outcome"],
            rm_accuracy=data["rm_accuracy"],
            accepted_count=data["accepted_count"],
            pending_count=data["pending_count"],
            mean_abs_advantage=data["mean_abs_advantage"],
            coding_max_deviation=data.get("coding_max_deviation"),
        )


@dataclass
class TrainResult:
    config: RunConfig
    seed: int
    policy: PolicyParams
    rm: RMParams
    pool: TaskPool
    metrics: list
    initial_rm_accuracy: AccuracyReport


def _rollout_bundle(policy: PolicyParams, rm: RMParams, n: int,
                    temperature: float, seed: int, task: TaskSpec) -> dict:
    """Pure rollout + evaluation for one task against frozen snapshots."""
    group = group_arrays(policy, task, n, temperature, seed)
    evals = evaluation_arrays(rm, task, group["correct"], seed)
    return {"task": task, "group": group, "evals": evals,
            "acc": estimate_accuracy(group["outcomes"])}


def _fan_out(policy, rm, tasks, n, temperature, seed, executor) -> list:
    """Rollout bundles in fixed task order; identical for any worker count."""
    if executor is None:
        return [_rollout_bundle(policy, rm, n, temperature, seed, t)
                for t in tasks]
    job = partial(_rollout_bundle, policy, rm, n, temperature, seed)
    return list(executor.map(job, tasks))


def _resolve_tasks(config: RunConfig, tasks: Optional[Sequence[TaskSpec]]):
    if tasks is not None:
        return list(tasks)
    if config.tasks_path:
        return load_tasks(config.tasks_path)
    return load_reference_tasks()


def _initial_rm(config: RunConfig) -> RMParams:
    if config.mode == "step_only":
        rm = load_rm(config.rm_checkpoint)
        if rm.m != config.m:
            raise ValueError(
                f"rm_checkpoint has m={rm.m} but config.m={config.m}"
            )
        return rm
    return init_rm_params(m=config.m, evidence_noise=config.evidence_noise)


def _policy_batch(bundles, train_ids, lam, reward_mode):
    feats, actions, advs = [], [], []
    for b in bundles:
        task = b["task"]
        if task.task_id not in train_ids:
            continue
        group = b["group"]
        rewards = step_rewards_array(group["outcomes"], b["evals"]["labels"],
                                     lam, reward_mode)
        adv = standardize_axis(rewards, axis=0)
        n = group["actions"].shape[0]
        feats.append(np.broadcast_to(
            group["features"], (n,) + group["features"].shape
        ).reshape(-1, group["features"].shape[1]))
        actions.append(group["actions"].reshape(-1))
        advs.append(adv.reshape(-1))
    if not feats:
        return None, 0.0
    batch = {
        "features": np.concatenate(feats),
        "actions": np.concatenate(actions),
        "advantages": np.concatenate(advs),
    }
    return batch, float(np.mean(np.abs(batch["advantages"])))


def _rm_batch(bundles, train_ids, lam, alpha_low, alpha_high):
    evid, labels, advs = [], [], []
    for b in bundles:
        task = b["task"]
        if task.task_id not in train_ids:
            continue
        if not alpha_low <= b["acc"] <= alpha_high:
            continue
        lab = b["evals"]["labels"]
        rewards = step_rewards_array(b["group"]["outcomes"], lab, lam,
                                     "integrated")
        adv = rm_advantages_array(rewards, lab)
        ev = evidence_matrix(task, b["evals"]["channel"])
        m = lab.shape[2]
        evid.append(np.repeat(ev.reshape(-1, ev.shape[2]), m, axis=0))
        labels.append(lab.reshape(-1))
        advs.append(adv.reshape(-1))
    if not evid:
        return None
    return {
        "evidence": np.concatenate(evid),
        "labels": np.concatenate(labels),
        "advantages": np.concatenate(advs),
    }


def _sample_ids(pool: TaskPool, tasks_per_step: int, seed: int, step: int):
    active_ids = pool.sorted_ids()
    if len(active_ids) <= tasks_per_step:
        return active_ids
    u = rng.uniforms(rng.stream_key(seed, "sample", step),
                     np.arange(len(active_ids)))
    order = np.argsort(u, kind="stable")
    return sorted(active_ids[i] for i in order[:tasks_per_step])


def _coding_deviation(seed: int, step: int) -> Optional[float]:
    codes, uts, gt = synth_coding_instance(
        seed=int(rng.stream_key(seed, "coding", step))
    )
    labeled_codes, labeled_uts, degenerate = label_populations(codes, uts, gt)
    if degenerate:
        return None
    return remark2_equivalence(labeled_uts, labeled_codes).max_deviation


def train(config: RunConfig, seed: int, out_dir=None, workers: int = 1,
          tasks: Optional[Sequence[TaskSpec]] = None) -> TrainResult:
    """Run the closed loop for config.steps steps at one seed.

    Per step: sample tasks, roll out together with pending proposals,
    gate and commit proposals, form new proposals (adaptive mode only),
    update the actor on sampled + newly committed tasks, update the
    labeler on the subset of those inside the accuracy band, then probe
    labeler quality on the held-out set with a frozen uniform policy.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    initial_tasks = _resolve_tasks(config, tasks)
    pool = TaskPool.from_tasks(initial_tasks)
    policy = init_policy_params()
    rm = _initial_rm(config)
    probe_set = probe_tasks()
    # the probe tasks' pass/fail classes are pure only under this policy
    probe_policy = hint_following_params(40.0)

    out_path = None
    metrics_fh = timing_fh = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        config.save(out_path / "config.json")
        metrics_fh = open(out_path / "metrics.jsonl", "w", encoding="utf-8")
        timing_fh = open(out_path / "timing.jsonl", "w", encoding="utf-8")

    initial_report = measure_accuracy(
        rm, probe_set, probe_policy, PROBE_ROLLOUTS,
        seed=int(rng.stream_key(seed, "probe", -1)),
    )
    executor = None
    metrics: list[MetricsRecord] = []
    try:
        if workers > 1:
            executor = ProcessPoolExecutor(max_workers=workers)
        for step in range(config.steps):
            t0 = time.perf_counter()
            rollout_seed = int(rng.stream_key(seed, "rollout", step))
            sampled_ids = _sample_ids(pool, config.tasks_per_step, seed, step)
            pending = [pool.pending[pid] for pid in sorted(pool.pending)]
            rollout_tasks = ([pool.active[tid] for tid in sampled_ids]
                             + [pr.proposed for pr in pending])
            bundles = _fan_out(policy, rm, rollout_tasks, config.group_size,
                               config.temperature, rollout_seed, executor)
            by_id = {b["task"].task_id: b for b in bundles}
            acc = {tid: b["acc"] for tid, b in by_id.items()}

            newly_committed = []
            for proposal in pending:
                decided = gate(proposal, acc[proposal.proposed.task_id],
                               config.alpha_low, config.alpha_high)
                child = commit(pool, decided, step,
                               config.alpha_low, config.alpha_high)
                if child is not None:
                    newly_committed.append(child)

            if config.adapts_tasks:
                for tid in sampled_ids:
                    if tid not in pool.active or tid in pool.pending:
                        continue
                    direction = decide_direction(acc[tid], config.alpha_low,
                                                 config.alpha_high)
                    if direction is None:
                        continue
                    critic = summarize_errors_array(
                        tid, by_id[tid]["evals"]["labels"]
                    )
                    propose_with_accuracy(
                        pool, pool.active[tid], acc[tid], direction, critic,
                        seed=int(rng.stream_key(seed, "perturb", step, tid)),
                    )

            train_ids = set(sampled_ids) | {t.task_id for t in newly_committed}
            pbatch, mean_abs_adv = _policy_batch(
                bundles, train_ids, config.lambda_policy,
                config.effective_reward_mode,
            )
            if pbatch is not None:
                policy = policy_update(policy, pbatch, config.policy_lr,
                                       config.clip_epsilon, config.kl_beta)
            if config.trains_rm:
                rbatch = _rm_batch(bundles, train_ids, config.lambda_rm,
                                   config.alpha_low, config.alpha_high)
                if rbatch is not None:
                    rm = rm_update(rm, rbatch, config.rm_lr)

            report = measure_accuracy(
                rm, probe_set, probe_policy, PROBE_ROLLOUTS,
                seed=int(rng.stream_key(seed, "probe", step)),
            )
            sampled_outcomes = [by_id[tid]["group"]["outcomes"]
                                for tid in sampled_ids]
            record = MetricsRecord(
                step=step,
                task_accuracy={tid: acc[tid] for tid in by_id},
                success_rate=float(np.mean([acc[t] for t in sampled_ids])),
                mean_outcome=float(np.mean(np.concatenate(sampled_outcomes))),
                rm_accuracy=report.to_dict(),
                accepted_count=len(pool.accepted_log),
                pending_count=len(pool.pending),
                mean_abs_advantage=mean_abs_adv,
                wall_time=time.perf_counter() - t0,
                coding_max_deviation=(
                    _coding_deviation(seed, step) if config.coding else None
                ),
            )
            metrics.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record.to_json_dict(),
                                            sort_keys=True) + "\n")
                timing_fh.write(json.dumps(
                    {"step": step, "wall_time": record.wall_time}
                ) + "\n")
    finally:
        if executor is not None:
            executor.shutdown()
        if metrics_fh is not None:
            metrics_fh.close()
            timing_fh.close()

    if out_path is not None:
        save_policy(policy, out_path / "policy_final.json")
        save_rm(rm, out_path / "rm_final.json")
        save_tasks(sorted(pool.active.values(), key=lambda t: t.task_id),
                   out_path / "tasks_final.json")
        with open(out_path / "accepted_tasks.jsonl", "w",
                  encoding="utf-8") as fh:
            for rec in pool.accepted_log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(out_path / "initial_probe.json", "w",
                  encoding="utf-8") as fh:
            json.dump(initial_report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return TrainResult(config, seed, policy, rm, pool, metrics, initial_report)


def final_window(metrics: Sequence[MetricsRecord]) -> list:
    """The last 10% of records (at least one)."""
    if not metrics:
        raise ValueError("metrics must be non-empty")
    k = max(1, int(np.ceil(0.1 * len(metrics))))
    return list(metrics[-k:])


def summarize_run(result: TrainResult) -> dict:
    """Final-window averages used by the ablation summary."""
    window = final_window(result.metrics)
    rm_fields = ("p_plus", "p_minus", "process_acc", "outcome_acc")
    rm_means = {f: float(np.mean([rec.rm_accuracy[f] for rec in window]))
                for f in rm_fields}
    mu_final = rm_means["p_plus"] + rm_means["p_minus"]
    mu_init = result.initial_rm_accuracy.mu
    return {
        "success": float(np.mean([rec.success_rate for rec in window])),
        "mean_outcome": float(np.mean([rec.mean_outcome for rec in window])),
        "mu_init": mu_init,
        "mu_final": mu_final,
        "mu_gain": mu_final - mu_init,
        "process_acc": rm_means["process_acc"],
        "outcome_acc": rm_means["outcome_acc"],
        "accepted": result.metrics[-1].accepted_count,
    }


def parse_mode_label(label: str) -> tuple[str, dict]:
    """Split 'mode' or 'mode:key=value,key=value' into mode + overrides.

    Override values are coerced by the config field's current type, so
    numeric fields stay numeric (e.g. 'policy_reward:lambda_rm=4').
    """
    mode, sep, tail = label.partition(":")
    overrides = {}
    if sep:
        numeric = {f.name for f in fields(RunConfig)
                   if f.name not in ("mode", "seeds", "reward_mode",
                                     "tasks_path", "rm_checkpoint", "coding")}
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            if not eq or key not in numeric:
                raise ValueError(f"bad mode override {item!r} in {label!r}")
            number = float(value)
            overrides[key] = int(number) if number == int(number) and key in (
                "m", "group_size", "tasks_per_step", "steps") else number
    return mode, overrides


SUMMARY_COLUMNS = ("label", "seed", "success", "mean_outcome", "mu_init",
                   "mu_final", "mu_gain", "process_acc", "outcome_acc",
                   "accepted")


def ablate(config: RunConfig, modes: Sequence[str], seeds: Sequence[int],
           out_dir=None, workers: int = 1,
           tasks: Optional[Sequence[TaskSpec]] = None) -> list:
    """Cross product of mode labels and seeds; per-seed and mean rows.

    Row order is deterministic: labels in the given order, seeds
    ascending, then one mean row per label.  Any run failure aborts the
    sweep with the failing (label, seed) named.
    """
    if len(modes) < 2:
        raise ValueError("ablate needs at least two modes")
    if len(seeds) < 5:
        raise ValueError("ablate needs at least five seeds")
    seeds = sorted(int(s) for s in seeds)
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
    rows = []
    for label in modes:
        mode, overrides = parse_mode_label(label)
        run_config = replace(config, mode=mode, seeds=tuple(seeds), **overrides)
        per_seed = []
        for seed in seeds:
            run_out = None
            if out_path is not None:
                run_out = out_path / label.replace(":", "_").replace("=", "-") \
                    / f"seed-{seed}"
            try:
                result = train(run_config, seed, out_dir=run_out,
                               workers=workers, tasks=tasks)
            except Exception as exc:
                raise RuntimeError(
                    f"ablation run failed for mode={label!r} seed={seed}"
                ) from exc
            summary = summarize_run(result)
            per_seed.append(summary)
            rows.append({"label": label, "seed": seed, **summary})
        mean_row = {"label": label, "seed": "mean"}
        for key in SUMMARY_COLUMNS[2:]:
            mean_row[key] = float(np.mean([s[key] for s in per_seed]))
        rows.append(mean_row)
    if out_path is not None:
        with open(out_path / "summary.csv", "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
