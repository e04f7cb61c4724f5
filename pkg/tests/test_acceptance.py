"""End-to-end acceptance checks.

The heavy fixtures run the full 16-task suite for 20 seeds per mode and
are shared across checks; expect a few minutes of wall time for this
module alone.
"""

import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from tritrain.adaptation import replay_accepted_records
from tritrain.coding import equivalence_sweep
from tritrain.harness import RunConfig, summarize_run, train
from tritrain.policy import PolicyParams, policy_update, surrogate_objective
from tritrain.reward_model import RMParams, rm_objective, rm_update
from tritrain.tasks import FEATURE_DIM, K_MAX, TaskSpec, feature_encode
from tritrain.theory import (
    DEFAULT_M_GRID,
    DEFAULT_P_GRID,
    PrecisionQuery,
    exact_precision,
    hoeffding_bound,
    mc_objective_identity,
    reference_identity_configs,
    reference_ratio_sweep,
    verify_theorem1,
    weight_ratio_curve,
)

SEEDS = tuple(range(20))
EVIDENCE_DIM = FEATURE_DIM + 2


def _run_summaries(config, with_audit=False):
    """Train across SEEDS; keep summaries plus audit trails and timings."""
    rows = []
    for seed in SEEDS:
        t0 = time.perf_counter()
        result = train(config, seed)
        elapsed = time.perf_counter() - t0
        row = {"summary": summarize_run(result), "elapsed": elapsed}
        if with_audit:
            row["accepted_log"] = result.pool.accepted_log
            row["accepted_counts"] = [rec.accepted_count
                                      for rec in result.metrics]
        rows.append(row)
    return rows


@pytest.fixture(scope="session")
def mode_grid():
    base = RunConfig()
    return {
        "policy_only": _run_summaries(replace(base, mode="policy_only")),
        "outcome_only": _run_summaries(replace(base, mode="outcome_only")),
        "policy_reward": _run_summaries(replace(base, mode="policy_reward")),
        "policy_reward_env": _run_summaries(
            replace(base, mode="policy_reward_env"), with_audit=True),
    }


@pytest.fixture(scope="session")
def lambda_endpoints():
    base = RunConfig(mode="policy_reward")
    return {lam: _run_summaries(replace(base, lambda_rm=lam))
            for lam in (0.5, 4.0)}


def _mean(rows, key):
    return float(np.mean([r["summary"][key] for r in rows]))


class TestPrecisionGuarantee:
    def test_full_grid_clean_and_fast(self):
        t0 = time.perf_counter()
        report = verify_theorem1(DEFAULT_P_GRID, DEFAULT_M_GRID)
        elapsed = time.perf_counter() - t0
        assert report.violations == ()
        assert elapsed < 10.0

    def test_extremes_at_largest_m(self):
        m = DEFAULT_M_GRID[-1]
        a_low, _ = exact_precision(PrecisionQuery(0.3, 0.3, m))
        a_high, _ = exact_precision(PrecisionQuery(0.7, 0.8, m))
        assert a_low < 0.001
        assert a_high > 0.999

    def test_symmetry_at_unit_mu(self):
        for pp, pm in ((0.5, 0.5), (0.1, 0.9), (0.3, 0.7)):
            for m in DEFAULT_M_GRID:
                a, tie = exact_precision(PrecisionQuery(pp, pm, m))
                assert abs(a - (1.0 - tie) / 2.0) <= 1e-12


class TestPrecisionSpotValues:
    def test_against_rational_enumeration(self):
        pp, pm, m = Fraction(0.8), Fraction(0.7), 3
        q_up, q_down = pp * pm, (1 - pp) * (1 - pm)
        q_zero = 1 - q_up - q_down
        win = Fraction(0)
        for k_up in range(m + 1):
            for k_down in range(m - k_up + 1):
                if k_up <= k_down:
                    continue
                k_zero = m - k_up - k_down
                win += (math.comb(m, k_up) * math.comb(m - k_up, k_down)
                        * q_up**k_up * q_down**k_down * q_zero**k_zero)
        a, _ = exact_precision(PrecisionQuery(0.8, 0.7, 3))
        assert abs(a - float(win)) <= 1e-12
        assert abs(a - 0.83216) <= 1e-12

    def test_bound_spot_value(self):
        assert abs(hoeffding_bound(1.5, 16) - (1.0 - math.exp(-1.0))) <= 1e-12


class TestObjectiveIdentity:
    def test_million_sample_identity_and_ratio_ordering(self):
        t0 = time.perf_counter()
        for name, (task, policy, rm) in reference_identity_configs().items():
            report = mc_objective_identity(task, policy, rm, lam=1.0,
                                           n_samples=10**6, seed=0)
            assert report.rel_error < 0.03, (name, report.rel_error)
        tasks, policy, rm = reference_ratio_sweep()
        rows = weight_ratio_curve(tasks, policy, rm, n_samples=20000, seed=0)
        by_id = {r["task_id"]: r for r in rows}
        hard = by_id["ratio-hard"]["ratio"]
        bal = by_id["ratio-balanced"]["ratio"]
        easy = by_id["ratio-easy"]["ratio"]
        assert hard < 0.1 * bal
        assert math.isinf(easy) or 0.1 * bal < 0.01 * easy
        assert time.perf_counter() - t0 < 120.0


class TestRewardFormEquivalence:
    def test_thousand_instance_sweep(self):
        out = equivalence_sweep(n_instances=1000, seed0=0)
        assert out["max_deviation"] < 1e-12
        assert out["degenerate_fraction"] < 0.05
        assert out["passed"]


class TestGradientChecks:
    H = 1e-5
    REL_TOL = 1e-4
    CASES = 100

    @staticmethod
    def _random_policy_batch(g):
        # rows must be real encoded steps so the update can read the arity
        arity = int(g.integers(2, K_MAX + 1))
        length = int(g.choice((4, 6, 8)))
        task = TaskSpec(
            task_id=f"grad-{g.integers(1 << 30)}", parent_id=None,
            length=length, action_arity=arity,
            target_sequence=tuple(int(a) for a in g.integers(0, arity, length)),
            hint_mask=tuple(bool(b) for b in g.integers(0, 2, length)),
            required_correct=int(g.integers(1, length + 1)),
        )
        n = int(g.integers(4, 24))
        steps = g.integers(0, length, n)
        return {
            "features": np.stack([feature_encode(task, int(s)) for s in steps]),
            "actions": g.integers(0, arity, n),
            "advantages": g.normal(size=n),
        }

    def test_policy_gradient_100_cases(self):
        g = np.random.default_rng(2024)
        for _ in range(self.CASES):
            params = PolicyParams(g.normal(0, 0.4, (FEATURE_DIM, K_MAX)))
            batch = self._random_policy_batch(g)
            grad = policy_update(params, batch, 1.0, clip_epsilon=None,
                                 kl_beta=0.0).weights - params.weights
            i = int(g.integers(0, FEATURE_DIM))
            j = int(g.integers(0, K_MAX))
            wp, wm = params.weights.copy(), params.weights.copy()
            wp[i, j] += self.H
            wm[i, j] -= self.H
            fd = (surrogate_objective(wp, params.weights, batch, None, 0.0)
                  - surrogate_objective(wm, params.weights, batch, None, 0.0)
                  ) / (2 * self.H)
            denom = max(abs(fd), abs(grad[i, j]), 1e-8)
            assert abs(grad[i, j] - fd) / denom < self.REL_TOL

    def test_rm_gradient_100_cases(self):
        g = np.random.default_rng(4048)
        for _ in range(self.CASES):
            rm = RMParams(g.normal(0, 0.4, EVIDENCE_DIM), 0.1, 3)
            n = int(g.integers(4, 24))
            batch = {
                "evidence": g.normal(0, 0.5, (n, EVIDENCE_DIM)),
                "labels": g.choice((-1, 1), n),
                "advantages": g.normal(size=n),
            }
            grad = rm_update(rm, batch, 1.0, clip_epsilon=None,
                             kl_beta=0.0).weights - rm.weights
            i = int(g.integers(0, EVIDENCE_DIM))
            wp, wm = rm.weights.copy(), rm.weights.copy()
            wp[i] += self.H
            wm[i] -= self.H
            fd = (rm_objective(wp, rm.weights, batch, None, 0.0)
                  - rm_objective(wm, rm.weights, batch, None, 0.0)
                  ) / (2 * self.H)
            denom = max(abs(fd), abs(grad[i]), 1e-8)
            assert abs(grad[i] - fd) / denom < self.REL_TOL


class TestModeOrdering:
    def test_runs_stay_under_a_minute(self, mode_grid):
        worst = max(r["elapsed"] for rows in mode_grid.values() for r in rows)
        assert worst < 60.0

    def test_final_window_success_ordering(self, mode_grid):
        env = _mean(mode_grid["policy_reward_env"], "success")
        rew = _mean(mode_grid["policy_reward"], "success")
        pol = _mean(mode_grid["policy_only"], "success")
        out = _mean(mode_grid["outcome_only"], "success")
        assert env >= rew + 0.03, (env, rew)
        assert rew + 0.03 >= pol + 0.06, (rew, pol)
        assert rew >= out + 0.03, (rew, out)


class TestLabelerImprovement:
    def test_probe_mu_gain(self, mode_grid):
        gain_rew = _mean(mode_grid["policy_reward"], "mu_gain")
        gain_env = _mean(mode_grid["policy_reward_env"], "mu_gain")
        assert gain_rew >= 0.05, gain_rew
        assert gain_env > gain_rew, (gain_env, gain_rew)


class TestAdaptationAudit:
    def test_accepted_log_replays_clean(self, mode_grid):
        for row in mode_grid["policy_reward_env"]:
            assert replay_accepted_records(row["accepted_log"]) == []

    def test_accepted_count_monotone(self, mode_grid):
        for row in mode_grid["policy_reward_env"]:
            counts = row["accepted_counts"]
            assert all(a <= b for a, b in zip(counts, counts[1:]))

    def test_lambda_rm_direction(self, lambda_endpoints):
        # sign of the trend only: more mixing weight on the step labels
        # buys process accuracy at the cost of outcome accuracy
        proc_lo = _mean(lambda_endpoints[0.5], "process_acc")
        proc_hi = _mean(lambda_endpoints[4.0], "process_acc")
        out_lo = _mean(lambda_endpoints[0.5], "outcome_acc")
        out_hi = _mean(lambda_endpoints[4.0], "outcome_acc")
        assert proc_hi > proc_lo, (proc_lo, proc_hi)
        assert out_hi < out_lo, (out_lo, out_hi)


class TestDeterminism:
    def test_metrics_bytes_survive_worker_count(self, tmp_path):
        config = RunConfig(mode="policy_reward_env", steps=60)
        train(config, seed=0, out_dir=tmp_path / "w1", workers=1)
        train(config, seed=0, out_dir=tmp_path / "w3", workers=3)
        a = (tmp_path / "w1" / "metrics.jsonl").read_bytes()
        b = (tmp_path / "w3" / "metrics.jsonl").read_bytes()
        assert a == b and len(a) > 0
