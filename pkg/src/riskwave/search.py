"""Grid search over (T, k, P, h, Th) and the expansion/compression ablation."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .evaluate import (
    EvalProtocol,
    EvalReport,
    EvaluationError,
    EvaluationTimeout,
    PipelineConfig,
    ProtocolKind,
    classify,
    leave_one_out,
    rates,
    regular_split,
)
from .neuralnet import TrainingError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class SearchSpace:
    """Candidate values; ``h_values=None`` means every h in 3..k."""

    T_values: tuple = (3, 5, 7)
    k_values: tuple = (3, 5, 7, 9)
    P_values: tuple = (0.7, 0.8)
    h_values: Optional[tuple] = None
    Th_values: tuple = DEFAULT_THRESHOLDS
    seed: int = 0

    def hidden_for(self, k: int) -> list[int]:
        hs = range(3, k + 1) if self.h_values is None else self.h_values
        return [h for h in hs if h <= k]

    def trainings(self) -> list[tuple[int, int, float, int]]:
        """Every (T, k, P, h) with h <= k; the threshold needs no retraining."""
        out = []
        for T, k, P in itertools.product(self.T_values, self.k_values, self.P_values):
            out.extend((T, k, P, h) for h in self.hidden_for(k))
        return out

    def combinations(self) -> list[tuple[int, int, float, int, float]]:
        return [(*c, th) for c in self.trainings() for th in self.Th_values]


@dataclass(frozen=True)
class LeaderboardRow:
    T: int
    k: int
    P: float
    h: int
    Th: float
    tpr: float = math.nan
    fpr: float = math.nan
    auc: float = math.nan
    status: str = "ok"
    reason: str = ""

    @property
    def youden(self) -> float:
        return self.tpr - self.fpr

    @property
    def params(self) -> tuple:
        return self.T, self.k, self.P, self.h, self.Th


def youden_key(row: LeaderboardRow) -> tuple:
    """Sort key: best first. Ties go to higher TPR, then smaller k, h, T, P, Th."""
    return (-row.youden, -row.tpr, row.k, row.h, row.T, row.P, row.Th)


def tpr_at_fpr_key(bound: float) -> Callable[[LeaderboardRow], tuple]:
    """Maximize TPR among rows with FPR <= bound; infeasible rows rank last."""

    def key(row: LeaderboardRow) -> tuple:
        return (row.fpr > bound, -row.tpr, row.fpr, row.k, row.h, row.T, row.P, row.Th)

    return key


def objective_key(name: str, fpr_bound: float = 0.1) -> Callable[[LeaderboardRow], tuple]:
    if name == "youden":
        return youden_key
    if name == "tpr_at_fpr":
        return tpr_at_fpr_key(fpr_bound)
    raise ValueError(f"unknown objective {name!r}")


@dataclass
class SearchResult:
    best: tuple
    best_metrics: tuple  # (tpr, fpr, auc)
    leaderboard: list
    failures: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)  # (T, k, P, h) -> EvalReport

    def rows(self) -> list[LeaderboardRow]:
        """Leaderboard followed by failed or timed-out combinations."""
        return list(self.leaderboard) + list(self.failures)


def _evaluate(X, labels, config, protocol, ids, eval_set, deadline, jobs=1) -> EvalReport:
    if protocol.kind is ProtocolKind.LEAVE_ONE_OUT:
        return leave_one_out(X, labels, config, protocol, ids, jobs=jobs, deadline=deadline)
    if eval_set is None:
        raise ValueError("the regular protocol needs an evaluation set")
    X_eval, eval_labels, eval_ids = eval_set
    report = regular_split(X, labels, X_eval, eval_labels, config, protocol, ids, eval_ids)
    if deadline is not None and time.monotonic() > deadline:
        raise EvaluationTimeout("regular split exceeded its time budget")
    return report


def grid_search(
    X,
    labels,
    space: SearchSpace,
    protocol: EvalProtocol,
    base: PipelineConfig = PipelineConfig(),
    patient_ids: Optional[Sequence[str]] = None,
    eval_set=None,
    objective: str = "youden",
    fpr_bound: float = 0.1,
    time_budget: Optional[float] = None,
    jobs: int = 1,
) -> SearchResult:
    """Evaluate every combination in ``space`` and pick the best under ``objective``.

    Each (T, k, P, h) is trained once; the scores are then thresholded at
    every Th. All combinations share ``space.seed`` so they see the same
    splits and initial weights. ``time_budget`` caps the seconds spent on
    one (T, k, P, h); overruns are marked ``timed-out``. ``jobs`` runs the
    leave-one-out folds of each combination in parallel.
    """
    trainings = space.trainings()
    if not trainings or not space.Th_values:
        raise ValueError("search space is empty after applying h <= k")
    key = objective_key(objective, fpr_bound)
    rows, failures, reports = [], [], {}
    for T, k, P, h in trainings:
        config = replace(base, window=T, rank=k, hidden=h, threshold=base.threshold)
        proto = replace(protocol, p_train=P, seed=space.seed)
        deadline = None if time_budget is None else time.monotonic() + time_budget
        try:
            report = _evaluate(X, labels, config, proto, patient_ids, eval_set, deadline, jobs)
        except (EvaluationError, TrainingError, ValueError, np.linalg.LinAlgError) as exc:
            status = "timed-out" if isinstance(exc, EvaluationTimeout) else "failed"
            log.warning("combination T=%s k=%s P=%s h=%s %s: %s", T, k, P, h, status, exc)
            failures.extend(
                LeaderboardRow(T, k, P, h, th, status=status, reason=str(exc)) for th in space.Th_values
            )
            continue
        reports[(T, k, P, h)] = report
        for th in space.Th_values:
            tpr, fpr = rates([classify(s, th) for s in report.scores], report.truths)
            rows.append(LeaderboardRow(T, k, P, h, th, tpr, fpr, report.auc))
    if not rows:
        raise EvaluationError("every combination failed")
    rows.sort(key=key)
    best = rows[0]
    return SearchResult(best.params, (best.tpr, best.fpr, best.auc), rows, failures, reports)


def ablation(
    X,
    labels,
    params: tuple,
    protocol: EvalProtocol,
    base: PipelineConfig = PipelineConfig(),
    patient_ids: Optional[Sequence[str]] = None,
    eval_set=None,
) -> tuple[float, float]:
    """AUC with the wavelet/SVD front end and with raw centered expression.

    Both arms share the protocol, seeds and network size.
    """
    T, k, P, h, th = params
    with_cfg = replace(base, window=T, rank=k, hidden=h, threshold=th, expand=True)
    proto = replace(protocol, p_train=P)
    auc_with = _evaluate(X, labels, with_cfg, proto, patient_ids, eval_set, None).auc
    m = np.asarray(X).shape[0]
    if h > m:
        raise ValueError(f"hidden units {h} exceed the gene count {m}")
    auc_without = _evaluate(X, labels, replace(with_cfg, expand=False), proto, patient_ids, eval_set, None).auc
    return auc_with, auc_without
