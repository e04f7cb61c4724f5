"""Actor: masked softmax, keyed rollouts, and the clipped update."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tritrain.policy import (
    PolicyParams,
    action_probs,
    clipped_coefficients,
    group_arrays,
    hint_following_params,
    init_policy_params,
    load_policy,
    policy_update,
    sample_group,
    sample_trajectory,
    save_policy,
    surrogate_objective,
)
from tritrain.tasks import FEATURE_DIM, K_MAX, TaskSpec, feature_encode


def make_task(tid="pt", length=4, arity=3, targets=(0, 1, 2, 0),
              hints=(), required=2):
    return TaskSpec(task_id=tid, parent_id=None, length=length,
                    action_arity=arity, target_sequence=targets,
                    hint_mask=tuple(i in hints for i in range(length)),
                    required_correct=required)


def random_params(seed=0, scale=0.5):
    g = np.random.default_rng(seed)
    return PolicyParams(g.normal(0, scale, (FEATURE_DIM, K_MAX)))


class TestActionProbs:
    def test_rows_sum_to_one_and_mask(self):
        t = make_task(arity=3)
        feats = np.stack([feature_encode(t, i) for i in range(t.length)])
        p = action_probs(random_params().weights, feats, 3)
        assert p.shape == (4, 3)
        assert np.allclose(p.sum(axis=1), 1.0)
        assert np.all(p > 0)

    def test_uniform_at_zero_weights(self):
        t = make_task(arity=4, targets=(0, 1, 2, 3))
        feats = np.stack([feature_encode(t, i) for i in range(t.length)])
        p = action_probs(init_policy_params().weights, feats, 4)
        assert np.allclose(p, 0.25)

    def test_argmax_at_tiny_temperature(self):
        t = make_task()
        feats = np.stack([feature_encode(t, i) for i in range(t.length)])
        w = random_params(3).weights
        p = action_probs(w, feats, 3, temperature=1e-9)
        assert np.all(np.isin(p, (0.0, 1.0)))
        assert np.array_equal(p.argmax(axis=1),
                              action_probs(w, feats, 3).argmax(axis=1))

    @given(st.floats(0.1, 5.0))
    def test_temperature_sharpens(self, tau):
        t = make_task()
        feats = np.stack([feature_encode(t, i) for i in range(t.length)])
        w = random_params(5).weights
        base = action_probs(w, feats, 3, 1.0)
        cooled = action_probs(w, feats, 3, tau)
        if tau < 1.0:
            assert np.all(cooled.max(axis=1) >= base.max(axis=1) - 1e-12)

    def test_rejects_bad_arity(self):
        with pytest.raises(ValueError):
            action_probs(random_params().weights, np.zeros((1, FEATURE_DIM)), 1)


class TestRollouts:
    def test_group_arrays_deterministic(self):
        t = make_task()
        a = group_arrays(random_params(), t, 6, 1.0, seed=11)
        b = group_arrays(random_params(), t, 6, 1.0, seed=11)
        for key in ("actions", "correct", "outcomes"):
            assert np.array_equal(a[key], b[key])

    def test_prefix_stability_in_n(self):
        # enlarging the group must not disturb earlier trajectories
        t = make_task()
        small = group_arrays(random_params(), t, 4, 1.0, seed=2)
        big = group_arrays(random_params(), t, 9, 1.0, seed=2)
        assert np.array_equal(small["actions"], big["actions"][:4])

    def test_outcome_consistency(self):
        t = make_task(required=2)
        arr = group_arrays(random_params(7), t, 32, 1.0, seed=3)
        want = np.where(arr["correct"].sum(axis=1) >= 2, 1, -1)
        assert np.array_equal(arr["outcomes"], want)

    def test_object_form_matches_arrays(self):
        t = make_task()
        params = random_params(9)
        arr = group_arrays(params, t, 3, 1.0, seed=5)
        group = sample_group(params, t, 3, temperature=1.0, seed=5)
        for i, traj in enumerate(group.trajectories):
            assert [s.action for s in traj.steps] == arr["actions"][i].tolist()
            assert traj.outcome == arr["outcomes"][i]

    def test_single_trajectory(self):
        t = make_task()
        traj = sample_trajectory(random_params(), t, seed=4)
        assert len(traj.steps) == t.length

    def test_hint_following_obeys_hints(self):
        t = make_task(length=4, arity=4, targets=(1, 3, 0, 2),
                      hints=(0, 1, 2, 3), required=4)
        arr = group_arrays(hint_following_params(40.0), t, 16, 1.0, seed=0)
        assert np.all(arr["correct"])


class TestUpdate:
    def _singleton_batch(self, task, action=1, advantage=1.0):
        feats = feature_encode(task, 0)[None, :]
        return {"features": feats, "actions": np.array([action]),
                "advantages": np.array([advantage])}

    def test_single_sample_matches_score_function(self):
        # lr * grad log pi(a|s) when A=1, eps=inf, beta=0
        t = make_task()
        params = random_params(1)
        batch = self._singleton_batch(t)
        lr = 0.05
        new = policy_update(params, batch, lr, clip_epsilon=None, kl_beta=0.0)
        feats = batch["features"][0]
        p = action_probs(params.weights, feats[None, :], 3)[0]
        onehot = np.zeros(K_MAX)
        onehot[1] = 1.0
        grad = np.outer(feats, onehot[:3] - p)
        assert np.allclose((new.weights - params.weights)[:, :3], lr * grad,
                           atol=1e-12)
        assert np.all(new.weights[:, 3:] == params.weights[:, 3:])

    def test_gradient_matches_finite_differences(self):
        t = make_task()
        params = random_params(2, scale=0.3)
        g = np.random.default_rng(8)
        n = 12
        feats = np.stack([feature_encode(t, i % t.length) for i in range(n)])
        batch = {"features": feats,
                 "actions": g.integers(0, 3, n),
                 "advantages": g.normal(size=n)}
        lr = 1.0
        new = policy_update(params, batch, lr, clip_epsilon=None, kl_beta=0.0)
        grad = new.weights - params.weights
        h = 1e-5
        for _ in range(20):
            i, j = g.integers(0, FEATURE_DIM), g.integers(0, 3)
            wp, wm = params.weights.copy(), params.weights.copy()
            wp[i, j] += h
            wm[i, j] -= h
            fd = (surrogate_objective(wp, params.weights, batch, None, 0.0)
                  - surrogate_objective(wm, params.weights, batch, None, 0.0)) / (2 * h)
            denom = max(abs(fd), abs(grad[i, j]), 1e-8)
            assert abs(grad[i, j] - fd) / denom < 1e-4

    def test_zero_advantages_leave_weights(self):
        t = make_task()
        params = random_params(3)
        batch = self._singleton_batch(t, advantage=0.0)
        new = policy_update(params, batch, 0.1)
        assert np.array_equal(new.weights, params.weights)

    def test_update_increases_surrogate(self):
        t = make_task()
        params = random_params(4, scale=0.2)
        g = np.random.default_rng(0)
        feats = np.stack([feature_encode(t, i % t.length) for i in range(8)])
        batch = {"features": feats, "actions": g.integers(0, 3, 8),
                 "advantages": g.normal(size=8)}
        new = policy_update(params, batch, 0.01, clip_epsilon=None,
                            kl_beta=0.0)
        before = surrogate_objective(params.weights, params.weights, batch,
                                     None, 0.0)
        after = surrogate_objective(new.weights, params.weights, batch,
                                    None, 0.0)
        assert after > before

    def test_snapshot_refreshed(self):
        t = make_task()
        new = policy_update(random_params(5), self._singleton_batch(t), 0.1)
        assert np.array_equal(new.snapshot, new.weights)
        assert new.step_count == 1

    def test_rejects_action_outside_arity(self):
        t = make_task(arity=3)
        with pytest.raises(ValueError):
            policy_update(random_params(), self._singleton_batch(t, action=3),
                          0.1)

    def test_rejects_nonpositive_lr(self):
        t = make_task()
        with pytest.raises(ValueError):
            policy_update(random_params(), self._singleton_batch(t), 0.0)


class TestClipping:
    @given(st.floats(-3, 3), st.floats(0.01, 3.0))
    def test_coefficient_zero_outside_trust_region(self, adv, ratio):
        coef = clipped_coefficients(np.array([adv]), np.array([ratio]), 0.2)[0]
        if adv >= 0 and ratio > 1.2:
            assert coef == 0.0
        elif adv < 0 and ratio < 0.8:
            assert coef == 0.0
        else:
            assert abs(coef - adv * ratio) < 1e-12

    def test_no_clip_when_epsilon_none(self):
        adv = np.array([2.0, -1.0])
        ratio = np.array([5.0, 0.1])
        assert np.allclose(clipped_coefficients(adv, ratio, None), adv * ratio)


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        params = random_params(6)
        updated = policy_update(
            params,
            {"features": feature_encode(make_task(), 0)[None, :],
             "actions": np.array([0]), "advantages": np.array([1.0])},
            0.1)
        path = tmp_path / "policy.json"
        save_policy(updated, path)
        loaded = load_policy(path)
        assert np.array_equal(loaded.weights, updated.weights)
        assert loaded.step_count == updated.step_count
