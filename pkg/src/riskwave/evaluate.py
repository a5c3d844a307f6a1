"""Threshold classification, ROC analysis and the two evaluation protocols.

The positive class throughout is *low-risk*: TPR is the fraction of true
low-risk patients called low-risk, FPR the fraction of true high-risk
patients called low-risk. Network scores estimate the high-risk
probability, so a patient is called low-risk when its score is at or
below the threshold.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .compress import CompressedFeatures, fit_compressor, project
from .neuralnet import NetConfig, NetModel, TrainingError, init_model, predict, train
from .survival import Risk, RiskLabel
from .wavelet import MexicanHatParams, expand_cohort

log = logging.getLogger(__name__)

#: Fraction of skipped LOO folds above which a report is flagged.
SKIPPED_FOLD_ALERT = 0.05


class EvaluationError(RuntimeError):
    pass


class EvaluationTimeout(EvaluationError):
    pass


# ---------------------------------------------------------------------------
# classification and rates


def classify(score: float, threshold: float) -> RiskLabel:
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return RiskLabel(Risk.HIGH if score > threshold else Risk.LOW)


def _risk(x) -> Risk:
    return x.value if isinstance(x, RiskLabel) else Risk(x) if isinstance(x, str) else x


def _is_low(labels) -> np.ndarray:
    return np.array([_risk(x) is Risk.LOW for x in labels], dtype=bool)


def rates(predictions, truths) -> tuple[float, float]:
    """(TPR, FPR) with low-risk as the positive class."""
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    pred, true = _is_low(predictions), _is_low(truths)
    if true.all() or not true.any():
        raise ValueError("truths must contain both low-risk and high-risk patients")
    return float(np.mean(pred[true])), float(np.mean(pred[~true]))


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def point_at(self, threshold: float) -> tuple[float, float]:
        """(fpr, tpr) of the classifier ``score <= threshold -> low-risk``."""
        i = np.searchsorted(self.thresholds, threshold, side="right") - 1
        if i < 0:
            return 0.0, 0.0
        return float(self.fpr[i]), float(self.tpr[i])


def roc(scores, truths) -> RocCurve:
    """Sweep ``score <= threshold`` over every distinct score plus sentinels.

    Tied scores change class together, so the trapezoidal area gives half
    credit to ties, matching the Mann-Whitney statistic.
    """
    scores = np.asarray(scores, dtype=float)
    low = _is_low(truths)
    if scores.shape != low.shape:
        raise ValueError("scores and truths differ in length")
    n_pos, n_neg = int(low.sum()), int((~low).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both low-risk and high-risk patients")

    distinct = np.unique(scores)
    lo = min(0.0, float(np.nextafter(distinct[0], -np.inf)))
    hi = max(1.0, float(distinct[-1]))
    thresholds = np.unique(np.concatenate(([lo], distinct, [hi])))

    order = np.sort(scores[low]), np.sort(scores[~low])
    tpr = np.searchsorted(order[0], thresholds, side="right") / n_pos
    fpr = np.searchsorted(order[1], thresholds, side="right") / n_neg
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def mann_whitney_auc(scores, truths) -> float:
    """P(low-risk score < high-risk score) + half the tie probability, by brute force."""
    scores = np.asarray(scores, dtype=float)
    low = _is_low(truths)
    pos, neg = scores[low], scores[~low]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a < b else 0.5 if a == b else 0.0
    return wins / (pos.size * neg.size)


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class PipelineConfig:
    """Expansion, compression and network settings.

    ``expand=False`` skips the wavelet and SVD stages and feeds centered
    raw expression columns to the network (the ablation arm).
    ``standardize`` divides every network input by its training-set
    standard deviation, so projected rows of size ~sigma_i do not saturate
    the tanh layer.
    """

    window: int = 5
    rank: int = 7
    hidden: int = 3
    threshold: float = 0.83
    sigma: float = 1.0
    scale_mode: str = "multi"
    fixed_scale: float = 1.0
    learning_rate: float = 0.05
    max_epochs: int = 5000
    patience: int = 200
    expand: bool = True
    standardize: bool = True

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.hidden < 1 or self.rank < 1 or self.window < 1:
            raise ValueError("window, rank and hidden must be positive")


class ProtocolKind(enum.Enum):
    LEAVE_ONE_OUT = "loo"
    REGULAR_SPLIT = "regular"


@dataclass(frozen=True)
class EvalProtocol:
    kind: ProtocolKind = ProtocolKind.LEAVE_ONE_OUT
    p_train: float = 0.8
    undersample_high_risk_to: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.p_train < 1:
            raise ValueError(f"p_train must lie in (0, 1), got {self.p_train}")


@dataclass(frozen=True)
class FittedPipeline:
    config: PipelineConfig
    model: NetModel
    compressor: Optional[CompressedFeatures] = None
    raw_means: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None

    def inputs(self, M) -> np.ndarray:
        """Network inputs for already-expanded columns ``M``."""
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = M[:, None]
        Z = project(self.compressor, M) if self.config.expand else M - self.raw_means[:, None]
        return Z if self.input_scale is None else Z / self.input_scale[:, None]

    def features(self, X) -> np.ndarray:
        return self.inputs(expand_matrix(X, self.config))

    def score(self, X) -> np.ndarray:
        return np.atleast_1d(predict(self.model, self.features(X)))


def expand_matrix(X, config: PipelineConfig) -> np.ndarray:
    """What the pipeline feeds to centering: H when expanding, X otherwise."""
    X = np.asarray(X, dtype=float)
    if not config.expand:
        return X
    return expand_cohort(
        X, config.window, MexicanHatParams(config.sigma), config.scale_mode, config.fixed_scale
    ).coefficients


def stratified_split(y, p_train: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per class, put round(p * count) patients on the training side.

    Both sides get each class when the class has at least two members; a
    singleton class stays on the training side.
    """
    y = np.asarray(y)
    train_idx, val_idx = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        if idx.size == 1:
            n_train = 1
        else:
            n_train = min(max(int(round(p_train * idx.size)), 1), idx.size - 1)
        train_idx.extend(idx[:n_train])
        val_idx.extend(idx[n_train:])
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(val_idx, dtype=int))


def fit_from_matrix(
    M, y, config: PipelineConfig, p_train: float, seed: int, n_genes: Optional[int] = None
) -> FittedPipeline:
    """Fit centering/SVD and the network on pre-expanded training columns ``M``.

    ``y`` holds 1 for high-risk and 0 for low-risk.
    """
    M = np.asarray(M, dtype=float)
    y = np.asarray(y, dtype=int)
    if np.unique(y).size < 2:
        raise TrainingError("training set has a single class")
    if config.expand:
        cf = fit_compressor(M, config.rank)
        Z, raw_means, dim = cf.features, None, config.rank
    else:
        cf = None
        raw_means = M.mean(axis=1)
        Z, dim = M - raw_means[:, None], M.shape[0]
    if config.hidden > dim:
        raise ValueError(f"hidden ({config.hidden}) must not exceed input dimension ({dim})")
    scale = None
    if config.standardize:
        scale = Z.std(axis=1)
        scale[scale == 0] = 1.0
        Z = Z / scale[:, None]
    tr, va = stratified_split(y, p_train, np.random.default_rng(seed))
    net = init_model(
        NetConfig(dim, config.hidden, config.learning_rate, config.max_epochs, config.patience, seed)
    )
    net = train(net, Z[:, tr], y[tr], Z[:, va], y[va])
    return FittedPipeline(config, net, cf, raw_means, scale)


def fit_pipeline(X, labels, config: PipelineConfig, p_train: float = 0.8, seed: int = 0) -> FittedPipeline:
    """Fit the full pipeline on raw expression columns ``X`` (m x n)."""
    y = np.array([_risk(l).code for l in labels], dtype=int)
    return fit_from_matrix(expand_matrix(X, config), y, config, p_train, seed)


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    patient_ids: list
    scores: np.ndarray
    truths: list
    roc: RocCurve
    threshold: float
    tpr: float
    fpr: float
    skipped: list = field(default_factory=list)  # (patient_id, reason)
    n_folds: int = 0
    retained_ids: Optional[list] = None

    @property
    def per_patient_scores(self) -> list[tuple[str, float, Risk]]:
        return list(zip(self.patient_ids, self.scores.tolist(), self.truths))

    @property
    def operating_point(self) -> tuple[float, float, float]:
        return self.threshold, self.tpr, self.fpr

    @property
    def auc(self) -> float:
        return self.roc.auc

    @property
    def skipped_alert(self) -> bool:
        return self.n_folds > 0 and len(self.skipped) / self.n_folds > SKIPPED_FOLD_ALERT


def build_report(ids, scores, truths, threshold, **extra) -> EvalReport:
    scores = np.asarray(scores, dtype=float)
    truths = [_risk(t) for t in truths]
    if len(set(truths)) < 2:
        # only reachable when skipped folds remove a whole class
        log.warning("scored patients cover a single class; ROC is undefined")
        empty = np.array([])
        curve = RocCurve(empty, empty, empty, math.nan)
        return EvalReport(list(ids), scores, truths, curve, threshold, math.nan, math.nan, **extra)
    curve = roc(scores, truths)
    preds = [classify(s, threshold) for s in scores]
    tpr, fpr = rates(preds, truths)
    return EvalReport(list(ids), scores, truths, curve, threshold, tpr, fpr, **extra)


# ---------------------------------------------------------------------------
# leave-one-out


def fold_seed(seed: int, fold: int) -> int:
    return seed + fold


def loo_fold(M, y, held_out: int, config: PipelineConfig, p_train: float, seed: int):
    """Fit on every column but ``held_out`` and score that column.

    ``M`` is the (already expanded) matrix; expansion acts column by column,
    so no information about the held-out patient reaches the fit.
    """
    keep = np.delete(np.arange(M.shape[1]), held_out)
    fitted = fit_from_matrix(M[:, keep], y[keep], config, p_train, fold_seed(seed, held_out))
    return fitted, float(predict(fitted.model, fitted.inputs(M[:, held_out])[:, 0]))


def _run_fold(args):
    M, y, i, config, p_train, seed = args
    try:
        return i, loo_fold(M, y, i, config, p_train, seed)[1], None
    except TrainingError as exc:
        return i, None, str(exc)


def leave_one_out(
    X,
    labels,
    config: PipelineConfig,
    protocol: EvalProtocol = EvalProtocol(),
    patient_ids: Optional[Sequence[str]] = None,
    jobs: int = 1,
    deadline: Optional[float] = None,
) -> EvalReport:
    """Train n pipelines, each without one patient, and score that patient.

    ``deadline`` is a ``time.monotonic()`` value; passing it aborts the run
    with :class:`EvaluationTimeout`.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    truths = [_risk(l) for l in labels]
    if n < 3 or len(truths) != n:
        raise ValueError("leave-one-out needs n >= 3 and one label per column")
    y = np.array([t.code for t in truths], dtype=int)
    if np.unique(y).size < 2:
        raise ValueError("leave-one-out needs both classes")
    ids = list(patient_ids) if patient_ids is not None else [str(j) for j in range(n)]
    M = expand_matrix(X, config)
    tasks = [(M, y, i, config, protocol.p_train, protocol.seed) for i in range(n)]

    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_fold, tasks):
                results.append(res)
                if deadline is not None and time.monotonic() > deadline:
                    pool.shutdown(cancel_futures=True)
                    raise EvaluationTimeout("leave-one-out exceeded its time budget")
    else:
        for t in tasks:
            if deadline is not None and time.monotonic() > deadline:
                raise EvaluationTimeout("leave-one-out exceeded its time budget")
            results.append(_run_fold(t))

    kept, skipped = [], []
    for i, score, err in sorted(results, key=lambda r: r[0]):
        if err is None:
            kept.append((i, score))
        else:
            skipped.append((ids[i], err))
            log.warning("fold %s skipped: %s", ids[i], err)
    idx = [i for i, _ in kept]
    report = build_report(
        [ids[i] for i in idx], [s for _, s in kept], [truths[i] for i in idx],
        config.threshold, skipped=skipped, n_folds=n,
    )
    if report.skipped_alert:
        log.warning("%d of %d folds skipped", len(skipped), n)
    return report


# ---------------------------------------------------------------------------
# undersampled single split


def undersample(labels, target: Optional[int], rng: np.random.Generator) -> np.ndarray:
    """Indices kept after drawing ``target`` high-risk patients without replacement."""
    risks = [_risk(l) for l in labels]
    high = np.array([j for j, r in enumerate(risks) if r is Risk.HIGH], dtype=int)
    low = np.array([j for j, r in enumerate(risks) if r is Risk.LOW], dtype=int)
    if target is None:
        return np.arange(len(risks))
    if target > high.size:
        raise ValueError(f"cannot keep {target} high-risk patients; only {high.size} available")
    if target < 0:
        raise ValueError("undersample target must be non-negative")
    chosen = np.sort(rng.choice(high, size=target, replace=False))
    return np.sort(np.concatenate([low, chosen]))


def regular_split(
    X_train,
    train_labels,
    X_eval,
    eval_labels,
    config: PipelineConfig,
    protocol: EvalProtocol,
    train_ids: Optional[Sequence[str]] = None,
    eval_ids: Optional[Sequence[str]] = None,
) -> EvalReport:
    """Undersample the high-risk pool, train once, score a disjoint evaluation set.

    High-risk training patients not drawn are dropped from the analysis.
    """
    if protocol.kind is not ProtocolKind.REGULAR_SPLIT:
        raise ValueError("regular_split needs a RegularSplit protocol")
    X_train = np.asarray(X_train, dtype=float)
    X_eval = np.asarray(X_eval, dtype=float)
    n_tr = X_train.shape[1]
    train_ids = list(train_ids) if train_ids is not None else [f"train{j}" for j in range(n_tr)]
    eval_ids = list(eval_ids) if eval_ids is not None else [f"eval{j}" for j in range(X_eval.shape[1])]
    if set(train_ids) & set(eval_ids):
        raise ValueError("training and evaluation sets must be disjoint")

    rng = np.random.default_rng(protocol.seed)
    keep = undersample(train_labels, protocol.undersample_high_risk_to, rng)
    fitted = fit_pipeline(
        X_train[:, keep], [train_labels[j] for j in keep], config, protocol.p_train, protocol.seed
    )
    scores = fitted.score(X_eval)
    return build_report(
        eval_ids, scores, eval_labels, config.threshold,
        retained_ids=[train_ids[j] for j in keep],
    )
