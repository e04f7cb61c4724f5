"""Run configuration, the training loop, and the ablation sweep."""

import json

import numpy as np
import pytest

from tritrain.harness import (
    MODES,
    MetricsRecord,
    RunConfig,
    SUMMARY_COLUMNS,
    ablate,
    final_window,
    parse_mode_label,
    summarize_run,
    train,
)
from tritrain.presets import reference_tasks
from tritrain.reward_model import init_rm_params, save_rm

TINY = dict(steps=3, tasks_per_step=4, group_size=4)


def tiny_config(**kw):
    merged = {**TINY, **kw}
    return RunConfig(**merged)


def tiny_tasks():
    return reference_tasks()[:4]


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(mode="nope")
        with pytest.raises(ValueError):
            RunConfig(reward_mode="nope")
        with pytest.raises(ValueError):
            RunConfig(group_size=1)
        with pytest.raises(ValueError):
            RunConfig(alpha_low=0.8, alpha_high=0.2)
        with pytest.raises(ValueError):
            RunConfig(evidence_noise=0.5)
        with pytest.raises(ValueError):
            RunConfig(seeds=())
        with pytest.raises(ValueError):
            RunConfig(mode="step_only")

    def test_round_trip(self, tmp_path):
        config = tiny_config(mode="policy_reward", lambda_rm=2.5, seeds=(3, 1))
        assert RunConfig.from_dict(config.to_dict()) == config
        path = tmp_path / "config.json"
        config.save(path)
        assert RunConfig.from_file(path) == config

    def test_unknown_keys_rejected(self):
        data = RunConfig().to_dict()
        data["learning_rate"] = 0.1
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.from_dict(data)

    def test_mode_properties(self):
        assert RunConfig(mode="outcome_only").effective_reward_mode == "outcome_only"
        assert RunConfig(mode="policy_reward").effective_reward_mode == "integrated"
        assert not RunConfig(mode="policy_only").trains_rm
        assert RunConfig(mode="policy_reward").trains_rm
        assert RunConfig(mode="policy_reward_env").adapts_tasks
        assert not RunConfig(mode="policy_reward").adapts_tasks

    def test_known_modes(self):
        assert MODES == ("policy_only", "policy_reward", "policy_reward_env",
                         "outcome_only", "step_only")


class TestMetricsRecord:
    def test_json_dict_has_no_wall_time(self):
        record = MetricsRecord(step=0, task_accuracy={"b": 0.5, "a": 1.0},
                               success_rate=0.75, mean_outcome=0.5,
                               rm_accuracy={"mu": 1.0}, accepted_count=0,
                               pending_count=0, mean_abs_advantage=0.1,
                               wall_time=12.5)
        data = record.to_json_dict()
        assert "wall_time" not in data
        assert "coding_max_deviation" not in data
        assert list(data["task_accuracy"]) == ["a", "b"]

    def test_round_trip(self):
        record = MetricsRecord(step=2, task_accuracy={"a": 1.0},
                               success_rate=1.0, mean_outcome=1.0,
                               rm_accuracy={"mu": 1.4}, accepted_count=1,
                               pending_count=2, mean_abs_advantage=0.3,
                               coding_max_deviation=1e-16)
        back = MetricsRecord.from_json_dict(record.to_json_dict())
        assert back.step == 2 and back.coding_max_deviation == 1e-16
        assert back.wall_time == 0.0


class TestModeLabels:
    def test_plain_label(self):
        assert parse_mode_label("policy_only") == ("policy_only", {})

    def test_numeric_overrides(self):
        mode, overrides = parse_mode_label("policy_reward:lambda_rm=4,steps=10")
        assert mode == "policy_reward"
        assert overrides == {"lambda_rm": 4.0, "steps": 10}
        assert isinstance(overrides["steps"], int)

    def test_bad_overrides(self):
        with pytest.raises(ValueError):
            parse_mode_label("policy_reward:reward_mode=step_only")
        with pytest.raises(ValueError):
            parse_mode_label("policy_reward:lambda_rm")


class TestTrainLoop:
    def test_policy_only_never_touches_the_labeler(self):
        config = tiny_config(mode="policy_only")
        result = train(config, seed=0, tasks=tiny_tasks())
        fresh = init_rm_params(m=config.m, evidence_noise=config.evidence_noise)
        assert np.array_equal(result.rm.weights, fresh.weights)

    def test_fixed_pool_modes_never_commit(self):
        config = tiny_config(mode="policy_reward")
        result = train(config, seed=0, tasks=tiny_tasks())
        assert result.pool.accepted_log == []
        assert all(rec.accepted_count == 0 for rec in result.metrics)

    def test_same_seed_same_metrics_stream(self, tmp_path):
        config = tiny_config(mode="policy_reward_env")
        train(config, seed=1, out_dir=tmp_path / "a", tasks=tiny_tasks())
        train(config, seed=1, out_dir=tmp_path / "b", tasks=tiny_tasks())
        a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
        b = (tmp_path / "b" / "metrics.jsonl").read_bytes()
        assert a == b

    def test_worker_count_does_not_change_metrics(self, tmp_path):
        config = tiny_config(mode="policy_reward")
        train(config, seed=2, out_dir=tmp_path / "w1", workers=1,
              tasks=tiny_tasks())
        train(config, seed=2, out_dir=tmp_path / "w2", workers=2,
              tasks=tiny_tasks())
        assert ((tmp_path / "w1" / "metrics.jsonl").read_bytes()
                == (tmp_path / "w2" / "metrics.jsonl").read_bytes())

    def test_output_files(self, tmp_path):
        config = tiny_config(mode="policy_reward_env")
        train(config, seed=0, out_dir=tmp_path, tasks=tiny_tasks())
        for name in ("config.json", "metrics.jsonl", "timing.jsonl",
                     "policy_final.json", "rm_final.json", "tasks_final.json",
                     "accepted_tasks.jsonl", "initial_probe.json"):
            assert (tmp_path / name).exists(), name
        metrics_lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
        assert len(metrics_lines) == config.steps
        for line in metrics_lines:
            assert "wall_time" not in json.loads(line)
        for line in (tmp_path / "timing.jsonl").read_text().splitlines():
            assert "wall_time" in json.loads(line)

    def test_step_only_needs_matching_checkpoint(self, tmp_path):
        ckpt = tmp_path / "rm.json"
        save_rm(init_rm_params(m=3), ckpt)
        config = tiny_config(mode="step_only", m=4, rm_checkpoint=str(ckpt))
        with pytest.raises(ValueError, match="m=3"):
            train(config, seed=0, tasks=tiny_tasks())

    def test_step_only_runs_from_checkpoint(self, tmp_path):
        ckpt = tmp_path / "rm.json"
        save_rm(init_rm_params(m=3), ckpt)
        config = tiny_config(mode="step_only", rm_checkpoint=str(ckpt))
        result = train(config, seed=0, tasks=tiny_tasks())
        assert len(result.metrics) == config.steps
        # frozen labeler: weights stay at the checkpoint values
        assert np.array_equal(result.rm.weights, init_rm_params(m=3).weights)

    def test_workers_validation(self):
        with pytest.raises(ValueError):
            train(tiny_config(), seed=0, workers=0, tasks=tiny_tasks())

    def test_coding_mode_logs_deviation(self):
        config = tiny_config(mode="policy_only", coding=True)
        result = train(config, seed=0, tasks=tiny_tasks())
        deviations = [rec.coding_max_deviation for rec in result.metrics
                      if rec.coding_max_deviation is not None]
        assert deviations and all(d <= 1e-12 for d in deviations)


class TestSummaries:
    def test_final_window_is_last_tenth(self):
        records = [MetricsRecord(step=i, task_accuracy={}, success_rate=i,
                                 mean_outcome=0.0, rm_accuracy={},
                                 accepted_count=0, pending_count=0,
                                 mean_abs_advantage=0.0) for i in range(30)]
        window = final_window(records)
        assert [rec.step for rec in window] == [27, 28, 29]
        assert len(final_window(records[:5])) == 1
        with pytest.raises(ValueError):
            final_window([])

    def test_summarize_run_fields(self):
        result = train(tiny_config(mode="policy_reward"), seed=0,
                       tasks=tiny_tasks())
        summary = summarize_run(result)
        assert set(summary) == set(SUMMARY_COLUMNS[2:])
        assert summary["mu_gain"] == pytest.approx(
            summary["mu_final"] - summary["mu_init"])


class TestAblate:
    def test_needs_two_modes_five_seeds(self):
        config = tiny_config()
        with pytest.raises(ValueError):
            ablate(config, ["policy_only"], range(5))
        with pytest.raises(ValueError):
            ablate(config, ["policy_only", "policy_reward"], range(4))

    def test_rows_and_csv(self, tmp_path):
        config = tiny_config(steps=2, tasks_per_step=2, group_size=2)
        modes = ["policy_only", "policy_reward:lambda_rm=4"]
        rows = ablate(config, modes, seeds=range(5), out_dir=tmp_path,
                      tasks=tiny_tasks())
        assert len(rows) == 2 * (5 + 1)
        assert [r["label"] for r in rows[:6]] == ["policy_only"] * 6
        assert [r["seed"] for r in rows[:6]] == [0, 1, 2, 3, 4, "mean"]
        csv_lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert csv_lines[0] == ",".join(SUMMARY_COLUMNS)
        assert len(csv_lines) == 1 + len(rows)
        assert (tmp_path / "policy_reward_lambda_rm-4" / "seed-0"
                / "metrics.jsonl").exists()
