"""Single-turn code / unit-test populations scored against each other.

A synthetic instance holds a population of candidate code solutions and
a population of candidate unit tests, plus a small set of dataset
tests that define ground truth.  A code is marked gt when it passes
every dataset test; a generated unit test is marked gt when every gt
code passes it.  Unit tests earn rewards for discriminating: a gt test
is paid for the non-gt codes it fails, a non-gt test is charged for the
non-gt codes it lets through.  The count form, the rate form, and the
correctness-plus-detection form are affinely related per instance, so
all three standardize to the same advantage vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import rng
from .feedback import standardize

EQUIVALENCE_TOL = 1e-12


@dataclass(frozen=True)
class CodingParams:
    """Generator knobs for one synthetic instance.

    Codes are latent boolean bug vectors over `bug_dims` dimensions;
    each of the `n_gt_uts` dataset tests probes its own pair of fixed
    dimensions, so dims beyond 2 * n_gt_uts are invisible to ground
    truth and gt codes may still carry bugs there.
    """

    n_codes: int = 32
    n_uts: int = 32
    n_gt_uts: int = 4
    bug_dims: int = 12
    bug_prob: float = 0.12
    max_probe: int = 3

    def __post_init__(self):
        if self.n_codes < 1 or self.n_uts < 1:
            raise ValueError("need at least one code and one unit test")
        if self.n_gt_uts < 1:
            raise ValueError("need at least one dataset-provided test")
        if self.bug_dims < 2 * self.n_gt_uts:
            raise ValueError(
                "bug_dims must cover the dataset tests: need >= 2 * n_gt_uts"
            )
        if not 0.0 < self.bug_prob < 1.0:
            raise ValueError("bug_prob must lie in (0, 1)")
        if not 1 <= self.max_probe <= self.bug_dims:
            raise ValueError("max_probe must lie in [1, bug_dims]")


@dataclass(frozen=True)
class CodeSample:
    """One candidate solution with its verdicts on the dataset tests."""

    code_id: str
    verdicts_on_gt_uts: tuple[bool, ...]
    is_gt: Optional[bool] = None

    def __post_init__(self):
        verdicts = tuple(bool(v) for v in self.verdicts_on_gt_uts)
        object.__setattr__(self, "verdicts_on_gt_uts", verdicts)
        gt = all(verdicts)
        if self.is_gt is None:
            object.__setattr__(self, "is_gt", gt)
        elif bool(self.is_gt) != gt:
            raise ValueError("is_gt must equal the AND of verdicts_on_gt_uts")


@dataclass(frozen=True)
class UnitTestSample:
    """One candidate test; label fields stay None until labeling runs."""

    ut_id: str
    verdicts_on_codes: dict  # code_id -> True when that code passes
    is_gt: Optional[bool] = None
    detect_rate: Optional[float] = None
    correctness: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "verdicts_on_codes",
                           {k: bool(v) for k, v in self.verdicts_on_codes.items()})
        if self.detect_rate is not None and not 0.0 <= self.detect_rate <= 1.0:
            raise ValueError("detect_rate must lie in [0, 1]")

    @property
    def labeled(self) -> bool:
        return self.is_gt is not None


def _require_labeled(ut: UnitTestSample) -> None:
    if not ut.labeled:
        raise ValueError(f"unit test {ut.ut_id!r} has not been labeled yet")


def label_populations(codes: Sequence[CodeSample], uts: Sequence[UnitTestSample],
                      gt_uts: Sequence) -> tuple[list[CodeSample], list[UnitTestSample], bool]:
    """Label codes first, then unit tests against the gt codes.

    Returns (codes, uts, degenerate).  The degenerate flag is raised
    when the instance has no gt code (test labeling is then vacuously
    true) or no non-gt code (detect rates fall back to 0); such
    instances carry no usable training signal and callers skip them.
    """
    if not gt_uts:
        raise ValueError("gt_uts must be non-empty")
    n_gt_uts = len(gt_uts)
    labeled_codes = []
    for code in codes:
        if len(code.verdicts_on_gt_uts) != n_gt_uts:
            raise ValueError(
                f"code {code.code_id!r} has {len(code.verdicts_on_gt_uts)} "
                f"dataset verdicts, expected {n_gt_uts}"
            )
        labeled_codes.append(CodeSample(code.code_id, code.verdicts_on_gt_uts))
    gt_ids = [c.code_id for c in labeled_codes if c.is_gt]
    non_gt_ids = [c.code_id for c in labeled_codes if not c.is_gt]
    degenerate = not gt_ids or not non_gt_ids
    labeled_uts = []
    for ut in uts:
        missing = [cid for cid in gt_ids + non_gt_ids if cid not in ut.verdicts_on_codes]
        if missing:
            raise ValueError(f"unit test {ut.ut_id!r} lacks verdicts for {missing}")
        gt_flag = all(ut.verdicts_on_codes[cid] for cid in gt_ids)
        if non_gt_ids:
            failed = sum(1 for cid in non_gt_ids if not ut.verdicts_on_codes[cid])
            rate = failed / len(non_gt_ids)
        else:
            rate = 0.0
        labeled_uts.append(replace(ut, is_gt=gt_flag, detect_rate=rate,
                                   correctness=gt_flag))
    return labeled_codes, labeled_uts, degenerate


def ut_reward_counts(ut: UnitTestSample, codes: Sequence[CodeSample]) -> int:
    """+(non-gt codes failed) for a gt test, -(non-gt codes passed) otherwise."""
    _require_labeled(ut)
    non_gt = [c for c in codes if not c.is_gt]
    if ut.is_gt:
        return sum(1 for c in non_gt if not ut.verdicts_on_codes[c.code_id])
    return -sum(1 for c in non_gt if ut.verdicts_on_codes[c.code_id])


def ut_reward_rates(ut: UnitTestSample, codes: Sequence[CodeSample]) -> float:
    """1 - p for a gt test and -p otherwise, p = pass rate on non-gt codes.

    Returns 0 on instances without non-gt codes (the degenerate case).
    """
    _require_labeled(ut)
    non_gt = [c for c in codes if not c.is_gt]
    if not non_gt:
        return 0.0
    passed = sum(1 for c in non_gt if ut.verdicts_on_codes[c.code_id])
    p = passed / len(non_gt)
    return 1.0 - p if ut.is_gt else -p


def ut_reward_combined(ut: UnitTestSample) -> float:
    """correctness + detect_rate - 1 with correctness as a 0/1 indicator."""
    _require_labeled(ut)
    return float(ut.correctness) + float(ut.detect_rate) - 1.0


def code_reward(code: CodeSample, gt_uts: Sequence) -> float:
    """Fraction of the dataset tests the code passes."""
    if not gt_uts:
        raise ValueError("gt_uts must be non-empty")
    if len(code.verdicts_on_gt_uts) != len(gt_uts):
        raise ValueError(
            f"code {code.code_id!r} has {len(code.verdicts_on_gt_uts)} "
            f"dataset verdicts, expected {len(gt_uts)}"
        )
    return sum(code.verdicts_on_gt_uts) / len(gt_uts)


@dataclass(frozen=True)
class EquivalenceReport:
    """Per-instance comparison of the three standardized reward forms."""

    n_uts: int
    non_gt_codes: int
    counts: tuple[int, ...]
    rates: tuple[float, ...]
    combined: tuple[float, ...]
    max_deviation: float
    passed: bool


def remark2_equivalence(uts: Sequence[UnitTestSample], codes: Sequence[CodeSample],
                        tol: float = EQUIVALENCE_TOL) -> EquivalenceReport:
    """Check that all three reward forms standardize identically.

    counts = Nng * (correctness + detect_rate - 1) and rates =
    correctness + detect_rate - 1 hold exactly per test, so the three
    standardized vectors must agree element-wise; constant vectors all
    collapse to zeros and still agree.
    """
    if len(uts) < 2:
        raise ValueError("equivalence needs at least two unit tests")
    counts = np.asarray([ut_reward_counts(ut, codes) for ut in uts], dtype=float)
    rates = np.asarray([ut_reward_rates(ut, codes) for ut in uts], dtype=float)
    combined = np.asarray([ut_reward_combined(ut) for ut in uts], dtype=float)
    s_counts = standardize(counts)
    s_rates = standardize(rates)
    s_combined = standardize(combined)
    deviation = float(
        max(
            np.abs(s_counts - s_rates).max(),
            np.abs(s_counts - s_combined).max(),
            np.abs(s_rates - s_combined).max(),
        )
    )
    non_gt = sum(1 for c in codes if not c.is_gt)
    return EquivalenceReport(
        n_uts=len(uts),
        non_gt_codes=non_gt,
        counts=tuple(int(v) for v in counts),
        rates=tuple(float(v) for v in rates),
        combined=tuple(float(v) for v in combined),
        max_deviation=deviation,
        passed=deviation <= tol,
    )


def _probe_dims(params: CodingParams, seed: int) -> list[np.ndarray]:
    """Seeded probe set per generated test: size then distinct dimensions."""
    key_size = rng.stream_key(seed, "ut-probe-size")
    sizes = 1 + rng.integers(key_size, params.max_probe, np.arange(params.n_uts))
    key_rank = rng.stream_key(seed, "ut-probe-dims")
    scores = rng.uniforms(key_rank, np.arange(params.n_uts)[:, None],
                          np.arange(params.bug_dims)[None, :])
    order = np.argsort(scores, axis=1, kind="stable")
    return [order[j, : sizes[j]] for j in range(params.n_uts)]


def synth_coding_instance(params: Optional[CodingParams] = None, seed: int = 0):
    """Deterministic synthetic instance: (codes, uts, gt_uts).

    Each code is a boolean bug vector; a code passes a test iff the test
    probes no buggy dimension.  Dataset test i probes the fixed pair
    (2i, 2i+1); generated tests probe seeded subsets of all dimensions.
    """
    params = params if params is not None else CodingParams()
    key_bugs = rng.stream_key(seed, "code-bugs")
    bugs = rng.uniforms(key_bugs, np.arange(params.n_codes)[:, None],
                        np.arange(params.bug_dims)[None, :]) < params.bug_prob

    code_ids = [f"code{c:02d}" for c in range(params.n_codes)]
    ut_ids = [f"ut{j:02d}" for j in range(params.n_uts)]
    gt_ids = [f"gt{g}" for g in range(params.n_gt_uts)]

    gt_probes = [np.array([2 * g, 2 * g + 1]) for g in range(params.n_gt_uts)]
    gt_verdicts = np.stack([~bugs[:, dims].any(axis=1) for dims in gt_probes], axis=1)

    codes = [
        CodeSample(code_ids[c], tuple(bool(v) for v in gt_verdicts[c]))
        for c in range(params.n_codes)
    ]
    gt_uts = [
        UnitTestSample(gt_ids[g], {code_ids[c]: bool(gt_verdicts[c, g])
                                   for c in range(params.n_codes)})
        for g in range(params.n_gt_uts)
    ]
    uts = []
    for j, dims in enumerate(_probe_dims(params, seed)):
        passes = ~bugs[:, dims].any(axis=1)
        uts.append(UnitTestSample(ut_ids[j], {code_ids[c]: bool(passes[c])
                                              for c in range(params.n_codes)}))
    return codes, uts, gt_uts


def equivalence_sweep(n_instances: int = 1000,
                      params: Optional[CodingParams] = None,
                      seed0: int = 0, tol: float = EQUIVALENCE_TOL) -> dict:
    """Run the standardized-equivalence check over many seeded instances.

    Degenerate instances (no gt or no non-gt code) are skipped and
    counted; the report carries the worst deviation among the rest.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be positive")
    worst = 0.0
    degenerate = 0
    checked = 0
    for k in range(n_instances):
        codes, uts, gt_uts = synth_coding_instance(params, seed0 + k)
        codes, uts, flagged = label_populations(codes, uts, gt_uts)
        if flagged:
            degenerate += 1
            continue
        report = remark2_equivalence(uts, codes, tol)
        worst = max(worst, report.max_deviation)
        checked += 1
    return {
        "instances": n_instances,
        "checked": checked,
        "degenerate": degenerate,
        "degenerate_fraction": degenerate / n_instances,
        "max_deviation": worst,
        "tol": tol,
        "passed": bool(checked > 0 and worst <= tol),
    }


def _verdict_bits(ut: UnitTestSample, code_ids: Sequence[str]) -> str:
    return "".join("1" if ut.verdicts_on_codes[cid] else "0" for cid in code_ids)


def save_instance(codes, uts, gt_uts, path) -> None:
    """Serialize an instance with verdict matrices as bitstrings."""
    code_ids = [c.code_id for c in codes]
    payload = {
        "code_ids": code_ids,
        "codes_gt_verdicts": [
            "".join("1" if v else "0" for v in c.verdicts_on_gt_uts) for c in codes
        ],
        "uts": [{"ut_id": u.ut_id, "verdicts": _verdict_bits(u, code_ids)}
                for u in uts],
        "gt_uts": [{"ut_id": u.ut_id, "verdicts": _verdict_bits(u, code_ids)}
                   for u in gt_uts],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    code_ids = payload["code_ids"]

    def unpack(record):
        bits = record["verdicts"]
        return UnitTestSample(record["ut_id"],
                              {cid: bit == "1" for cid, bit in zip(code_ids, bits)})

    codes = [
        CodeSample(cid, tuple(bit == "1" for bit in row))
        for cid, row in zip(code_ids, payload["codes_gt_verdicts"])
    ]
    uts = [unpack(r) for r in payload["uts"]]
    gt_uts = [unpack(r) for r in payload["gt_uts"]]
    return codes, uts, gt_uts
