"""Step labeler: evidence, sampled judgments, updates, probe accuracy."""

import numpy as np
import pytest

from tritrain.policy import group_arrays, hint_following_params, sample_trajectory
from tritrain.presets import probe_tasks
from tritrain.reward_model import (
    DegenerateProbeError,
    RMParams,
    build_evidence,
    evaluate_step,
    evaluation_arrays,
    evidence_matrix,
    init_rm_params,
    load_rm,
    measure_accuracy,
    oracle_rm_params,
    rm_objective,
    rm_update,
    save_rm,
)
from tritrain.tasks import FEATURE_DIM, TaskSpec

EVIDENCE_DIM = FEATURE_DIM + 2
CH_INCORRECT, CH_CORRECT = FEATURE_DIM, FEATURE_DIM + 1


def make_task(tid="rt", length=4, arity=3, targets=(0, 1, 2, 0),
              hints=(), required=2):
    return TaskSpec(task_id=tid, parent_id=None, length=length,
                    action_arity=arity, target_sequence=targets,
                    hint_mask=tuple(i in hints for i in range(length)),
                    required_correct=required)


def random_rm(seed=0, noise=0.1, m=3):
    g = np.random.default_rng(seed)
    return RMParams(g.normal(0, 0.4, EVIDENCE_DIM), noise, m)


class TestEvidence:
    def test_structure(self):
        t = make_task()
        traj = sample_trajectory(hint_following_params(), t, seed=0)
        ev = build_evidence(t, traj, 1, evidence_noise=0.0, seed=0)
        assert ev.shape == (EVIDENCE_DIM,)
        assert np.array_equal(ev[:FEATURE_DIM],
                              traj.steps[1].observation.features)
        channel = ev[FEATURE_DIM:]
        assert channel.sum() == 1.0 and set(channel) <= {0.0, 1.0}

    def test_zero_noise_channel_is_truth(self):
        t = make_task()
        traj = sample_trajectory(hint_following_params(), t, seed=1)
        for i, step in enumerate(traj.steps):
            ev = build_evidence(t, traj, i, evidence_noise=0.0, seed=0)
            expected = CH_CORRECT if step.correct else CH_INCORRECT
            assert ev[expected] == 1.0

    def test_flip_rate_approximates_noise(self):
        t = make_task(length=8, arity=2, targets=(0,) * 8, required=4)
        noise = 0.2
        arr = group_arrays(hint_following_params(), t, 400, 1.0, seed=0)
        evals = evaluation_arrays(RMParams(np.zeros(EVIDENCE_DIM), noise, 3),
                                  t, arr["correct"], seed=0)
        flips = (evals["channel"] != arr["correct"]).mean()
        assert abs(flips - noise) < 0.02

    def test_rejects_out_of_range_noise(self):
        t = make_task()
        traj = sample_trajectory(hint_following_params(), t, seed=0)
        with pytest.raises(ValueError):
            build_evidence(t, traj, 0, evidence_noise=0.5)


class TestEvaluation:
    def test_vectorized_matches_scalar_path(self):
        t = make_task()
        rm = random_rm(3)
        traj = sample_trajectory(hint_following_params(), t, seed=7)
        correct = np.array([[s.correct for s in traj.steps]])
        arrays = evaluation_arrays(rm, t, correct, seed=7)
        for step_idx in range(t.length):
            ev = build_evidence(t, traj, step_idx, rm.evidence_noise, seed=7,
                                trajectory_index=0)
            ev_step = evaluate_step(rm, ev, seed=7, task_id=t.task_id,
                                    trajectory_index=0, step_index=step_idx)
            assert ev_step.labels == tuple(arrays["labels"][0, step_idx])
            assert abs(ev_step.label_probs[0] - arrays["p"][0, step_idx]) < 1e-12

    def test_labels_in_pm_one(self):
        t = make_task()
        arr = group_arrays(hint_following_params(), t, 5, 1.0, seed=2)
        evals = evaluation_arrays(random_rm(), t, arr["correct"], seed=2)
        assert set(np.unique(evals["labels"])) <= {-1, 1}
        assert evals["labels"].shape == (5, t.length, 3)

    def test_label_frequency_tracks_probability(self):
        t = make_task(length=1, arity=2, targets=(0,), required=1)
        rm = random_rm(5, m=1)
        correct = np.ones((20000, 1), dtype=bool)
        evals = evaluation_arrays(rm, t, correct, seed=9)
        freq = (evals["labels"] == 1).mean()
        assert abs(freq - evals["p"].mean()) < 0.02

    def test_evidence_matrix_matches_build_evidence(self):
        t = make_task()
        rm = random_rm(1)
        traj = sample_trajectory(hint_following_params(), t, seed=4)
        correct = np.array([[s.correct for s in traj.steps]])
        evals = evaluation_arrays(rm, t, correct, seed=4)
        mat = evidence_matrix(t, evals["channel"])
        for i in range(t.length):
            ev = build_evidence(t, traj, i, rm.evidence_noise, seed=4,
                                trajectory_index=0)
            assert np.array_equal(mat[0, i], ev)


class TestUpdate:
    def test_single_sample_closed_form(self):
        # positive label, unit advantage: delta = lr * (1 - p) * evidence
        rm = random_rm(2)
        ev = np.zeros(EVIDENCE_DIM)
        ev[:FEATURE_DIM] = np.random.default_rng(0).normal(0, 0.3, FEATURE_DIM)
        ev[CH_CORRECT] = 1.0
        p = 1.0 / (1.0 + np.exp(-(ev @ rm.weights)))
        lr = 0.07
        batch = {"evidence": ev[None, :], "labels": np.array([1]),
                 "advantages": np.array([1.0])}
        new = rm_update(rm, batch, lr, clip_epsilon=None, kl_beta=0.0)
        assert np.allclose(new.weights - rm.weights, lr * (1 - p) * ev,
                           atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rm = random_rm(6)
        g = np.random.default_rng(3)
        n = 10
        ev = g.normal(0, 0.4, (n, EVIDENCE_DIM))
        batch = {"evidence": ev, "labels": g.choice((-1, 1), n),
                 "advantages": g.normal(size=n)}
        new = rm_update(rm, batch, 1.0, clip_epsilon=None, kl_beta=0.0)
        grad = new.weights - rm.weights
        h = 1e-5
        for i in g.integers(0, EVIDENCE_DIM, 20):
            wp, wm = rm.weights.copy(), rm.weights.copy()
            wp[i] += h
            wm[i] -= h
            fd = (rm_objective(wp, rm.weights, batch, None, 0.0)
                  - rm_objective(wm, rm.weights, batch, None, 0.0)) / (2 * h)
            denom = max(abs(fd), abs(grad[i]), 1e-8)
            assert abs(grad[i] - fd) / denom < 1e-4

    def test_empty_batch_is_identity(self):
        rm = random_rm(7)
        new = rm_update(rm, [], 0.5)
        assert np.array_equal(new.weights, rm.weights)

    def test_rejects_nonpositive_lr(self):
        rm = random_rm(8)
        with pytest.raises(ValueError):
            rm_update(rm, [], 0.0)


class TestProbeAccuracy:
    def test_oracle_hits_noise_ceiling(self):
        # saturated channel reader measures 1 - e on both classes
        noise = 0.1
        rm = oracle_rm_params(scale=25.0, evidence_noise=noise)
        report = measure_accuracy(rm, probe_tasks(), hint_following_params(40.0),
                                  n_rollouts=600, seed=0)
        n_steps = 600 * 20 * 3  # rollouts x probe steps x labels
        sigma = np.sqrt(noise * (1 - noise) / (n_steps / 2))
        assert abs(report.p_plus - (1 - noise)) < 3 * sigma + 0.003
        assert abs(report.p_minus - (1 - noise)) < 3 * sigma + 0.003

    def test_perfect_labeler_process_accuracy(self):
        rm = oracle_rm_params(scale=25.0, evidence_noise=0.0)
        report = measure_accuracy(rm, probe_tasks(), hint_following_params(40.0),
                                  n_rollouts=32, seed=1)
        assert report.process_acc == 1.0
        assert report.outcome_acc == 1.0
        assert report.mu == 2.0

    def test_uninformative_labeler_mu_one(self):
        rm = RMParams(np.zeros(EVIDENCE_DIM), 0.1, 3)
        report = measure_accuracy(rm, probe_tasks(), hint_following_params(40.0),
                                  n_rollouts=400, seed=2)
        assert abs(report.mu - 1.0) < 0.03

    def test_degenerate_probe_raises(self):
        passes = [t for t in probe_tasks() if t.task_id.startswith("probe-pass")]
        with pytest.raises(DegenerateProbeError):
            measure_accuracy(random_rm(), passes, hint_following_params(40.0),
                             n_rollouts=4, seed=0)

    def test_measurement_deterministic(self):
        rm = random_rm(4)
        a = measure_accuracy(rm, probe_tasks(), hint_following_params(40.0),
                             n_rollouts=8, seed=5)
        b = measure_accuracy(rm, probe_tasks(), hint_following_params(40.0),
                             n_rollouts=8, seed=5)
        assert a == b


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        rm = random_rm(11, noise=0.2, m=5)
        path = tmp_path / "rm.json"
        save_rm(rm, path)
        loaded = load_rm(path)
        assert np.array_equal(loaded.weights, rm.weights)
        assert loaded.evidence_noise == rm.evidence_noise
        assert loaded.m == rm.m
