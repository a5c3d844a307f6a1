"""Kaplan-Meier estimation and survival-based risk labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

#: 5 x 365.25 days, rounded.
FIVE_YEARS_DAYS = 1826.0
#: Minimum conditional probability of surviving past the horizon for a low-risk call.
LOW_RISK_MIN_PROB = 0.75
#: An uncensored patient dying exactly at the horizon is neither "more than" nor
#: "less than" five years; this policy puts them in the low-risk group.
HORIZON_TIE_IS_LOW_RISK = True


class UndefinedConditionalError(ArithmeticError):
    """cdf(t) == 1, so survival past ``t`` has zero estimated mass."""


class Risk(enum.Enum):
    LOW = "LowRisk"
    HIGH = "HighRisk"

    @property
    def code(self) -> int:
        # Network targets: high-risk is the "larger output" class.
        return 1 if self is Risk.HIGH else 0


class Basis(enum.Enum):
    DIRECT = "DirectRule"
    CONDITIONAL = "ConditionalCdf"


@dataclass(frozen=True)
class RiskLabel:
    value: Risk
    basis: Basis = Basis.DIRECT
    conditional_prob: Optional[float] = None
    undefined_conditional: bool = False

    def __post_init__(self):
        if (self.conditional_prob is not None) != (self.basis is Basis.CONDITIONAL):
            if not self.undefined_conditional:
                raise ValueError("conditional_prob must be set iff basis is ConditionalCdf")


@dataclass(frozen=True)
class KmCurve:
    event_times: np.ndarray
    cdf: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.event_times, dtype=float)
        cdf = np.asarray(self.cdf, dtype=float)
        if times.shape != cdf.shape or times.ndim != 1:
            raise ValueError("event_times and cdf must be 1-D and of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("event_times must be strictly increasing")
        if np.any(np.diff(cdf) < 0) or np.any(cdf < 0) or np.any(cdf > 1):
            raise ValueError("cdf must be non-decreasing within [0, 1]")
        for name, arr in (("event_times", times), ("cdf", cdf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("n_at_risk", "n_events"):
            arr = np.asarray(getattr(self, name), dtype=int)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def survival(self) -> np.ndarray:
        return 1.0 - self.cdf


def km_fit(records) -> KmCurve:
    """Product-limit estimate of the survival-time CDF.

    ``records`` is a sequence of objects with ``survival_time`` and
    ``censored`` attributes. Events at a time are removed from the risk set
    before censorings at the same time. The running product is kept as an
    exact fraction so tie-free uncensored data reproduces the empirical CDF
    bit for bit.
    """
    records = list(records)
    if not records:
        raise ValueError("km_fit needs at least one record")
    times = np.array([r.survival_time for r in records], dtype=float)
    dead = np.array([not r.censored for r in records], dtype=bool)
    if not dead.any():
        raise ValueError("km_fit needs at least one uncensored record")

    event_times = np.unique(times[dead])
    surv = Fraction(1)
    cdf, at_risk, events = [], [], []
    for t in event_times:
        r = int(np.count_nonzero(times >= t))
        d = int(np.count_nonzero(dead & (times == t)))
        surv *= Fraction(r - d, r)
        cdf.append(float(1 - surv))
        at_risk.append(r)
        events.append(d)
    return KmCurve(event_times, np.array(cdf), np.array(at_risk), np.array(events))


def km_eval_cdf(curve: KmCurve, t: float) -> float:
    """Right-continuous step evaluation of P(ST <= t)."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    idx = np.searchsorted(curve.event_times, t, side="right")
    return 0.0 if idx == 0 else float(curve.cdf[idx - 1])


def conditional_survival(curve: KmCurve, t: float, horizon: float = FIVE_YEARS_DAYS) -> float:
    """P(ST >= horizon | ST >= t) = (1 - cdf(horizon)) / (1 - cdf(t))."""
    if not 0 <= t < horizon:
        raise ValueError(f"need 0 <= t < horizon, got t={t}, horizon={horizon}")
    at_t = km_eval_cdf(curve, t)
    if at_t >= 1.0:
        raise UndefinedConditionalError(f"cdf({t}) = 1; conditional survival undefined")
    return (1.0 - km_eval_cdf(curve, horizon)) / (1.0 - at_t)


def label_patient(curve: KmCurve, record, horizon: float = FIVE_YEARS_DAYS) -> RiskLabel:
    t = record.survival_time
    if t > horizon or (t == horizon and HORIZON_TIE_IS_LOW_RISK):
        return RiskLabel(Risk.LOW)
    if not record.censored:
        return RiskLabel(Risk.HIGH)
    try:
        prob = conditional_survival(curve, t, horizon)
    except UndefinedConditionalError:
        return RiskLabel(Risk.HIGH, Basis.CONDITIONAL, None, undefined_conditional=True)
    value = Risk.LOW if prob >= LOW_RISK_MIN_PROB else Risk.HIGH
    return RiskLabel(value, Basis.CONDITIONAL, prob)


def label_cohort(cohort_or_records, horizon: float = FIVE_YEARS_DAYS) -> tuple[list[RiskLabel], KmCurve]:
    """Fit KM on every record, then label each patient against that curve.

    Accepts a ``Cohort`` or a plain sequence of clinical records.
    """
    records: Sequence = getattr(cohort_or_records, "patients", cohort_or_records)
    curve = km_fit(records)
    return [label_patient(curve, r, horizon) for r in records], curve


def label_codes(labels: Sequence[RiskLabel]) -> np.ndarray:
    """1 for high-risk, 0 for low-risk."""
    return np.array([lab.value.code for lab in labels], dtype=int)
