"""Cohort containers, CSV readers/writers and a seeded synthetic cohort generator."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .survival import FIVE_YEARS_DAYS, Risk, RiskLabel, label_cohort


class CohortError(ValueError):
    """Raised for malformed or inconsistent cohort input."""


@dataclass(frozen=True)
class ClinicalRecord:
    patient_id: str
    survival_time: float
    censored: bool

    def __post_init__(self):
        if not self.survival_time >= 0:
            raise CohortError(
                f"patient {self.patient_id}: survival_time must be >= 0, got {self.survival_time}"
            )


@dataclass(frozen=True)
class Cohort:
    """Expression matrix (genes x patients) with one clinical record per column."""

    expression: np.ndarray
    gene_ids: tuple[str, ...]
    patients: tuple[ClinicalRecord, ...]

    def __post_init__(self):
        expr = np.array(self.expression, dtype=float)
        if expr.ndim != 2:
            raise CohortError("expression must be a 2-D matrix")
        m, n = expr.shape
        if m < 1 or n < 2:
            raise CohortError(f"need at least 1 gene and 2 patients, got {m} x {n}")
        if len(self.gene_ids) != m:
            raise CohortError(f"{len(self.gene_ids)} gene ids for {m} rows")
        if len(self.patients) != n:
            raise CohortError(f"{len(self.patients)} clinical records for {n} columns")
        _check_unique(self.gene_ids, "gene id")
        _check_unique([p.patient_id for p in self.patients], "patient id")
        bad = np.argwhere(~np.isfinite(expr))
        if bad.size:
            r, c = bad[0]
            raise CohortError(
                f"non-finite expression value at row {r + 1}, col {c + 1} "
                f"(gene {self.gene_ids[r]}, patient {self.patients[c].patient_id})"
            )
        expr.setflags(write=False)
        object.__setattr__(self, "expression", expr)
        object.__setattr__(self, "gene_ids", tuple(self.gene_ids))
        object.__setattr__(self, "patients", tuple(self.patients))

    @property
    def n_genes(self) -> int:
        return self.expression.shape[0]

    @property
    def n_patients(self) -> int:
        return self.expression.shape[1]

    @property
    def patient_ids(self) -> list[str]:
        return [p.patient_id for p in self.patients]

    def subset(self, columns: Sequence[int]) -> "Cohort":
        columns = list(columns)
        return Cohort(
            self.expression[:, columns],
            self.gene_ids,
            tuple(self.patients[j] for j in columns),
        )


def _check_unique(ids, what):
    seen = set()
    for pos, i in enumerate(ids):
        if i in seen:
            raise CohortError(f"duplicate {what} {i!r} at position {pos + 1}")
        seen.add(i)


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise CohortError(f"non-numeric value {text!r} at {where}") from None
    return value


def read_expression(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read an expression CSV.

    Returns ``(gene_ids, patient_ids, matrix)``. Row/column numbers in
    error messages count data rows and patient columns from 1.
    """
    if not os.path.isfile(path):
        raise CohortError(f"expression file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise CohortError(f"{path}: expected a header row and at least one gene row")
    header = [h.strip() for h in rows[0]]
    patient_ids = header[1:]
    _check_unique(patient_ids, "patient id in expression header")
    gene_ids = []
    values = np.empty((len(rows) - 1, len(patient_ids)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise CohortError(
                f"{path}: row {i} has {len(row) - 1} values, header has {len(patient_ids)} patients"
            )
        gene_ids.append(row[0].strip())
        for j, cell in enumerate(row[1:], start=1):
            v = _parse_float(cell, f"{path}: row {i}, col {j}")
            if not math.isfinite(v):
                raise CohortError(f"{path}: missing/non-finite value {cell!r} at row {i}, col {j}")
            values[i - 1, j - 1] = v
    _check_unique(gene_ids, "gene id")
    return gene_ids, patient_ids, values


def read_clinical(path) -> list[ClinicalRecord]:
    if not os.path.isfile(path):
        raise CohortError(f"clinical file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"patient_id", "survival_time_days", "censored"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise CohortError(f"{path}: header must contain {sorted(need)}")
        records = []
        for i, row in enumerate(reader, start=1):
            t = _parse_float(row["survival_time_days"], f"{path}: row {i}, column survival_time_days")
            flag = row["censored"].strip()
            if flag not in ("0", "1"):
                raise CohortError(f"{path}: row {i}, column censored must be 0 or 1, got {flag!r}")
            if not math.isfinite(t) or t < 0:
                raise CohortError(f"{path}: row {i}, invalid survival time {t}")
            records.append(ClinicalRecord(row["patient_id"].strip(), t, flag == "1"))
    _check_unique([r.patient_id for r in records], "patient id in clinical file")
    return records


def load_cohort(expression_path, clinical_path) -> Cohort:
    """Load and align an expression matrix with its clinical table.

    Columns of the returned cohort follow the clinical file's row order.
    """
    gene_ids, patient_ids, values = read_expression(expression_path)
    records = read_clinical(clinical_path)
    col_of = {p: j for j, p in enumerate(patient_ids)}
    clinical_ids = {r.patient_id for r in records}
    for i, r in enumerate(records, start=1):
        if r.patient_id not in col_of:
            raise CohortError(
                f"patient {r.patient_id} (clinical row {i}) not found in expression header"
            )
    for j, p in enumerate(patient_ids, start=1):
        if p not in clinical_ids:
            raise CohortError(f"patient {p} (expression col {j}) missing from clinical file")
    order = [col_of[r.patient_id] for r in records]
    return Cohort(values[:, order], gene_ids, records)


def write_cohort(cohort: Cohort, expression_path, clinical_path) -> None:
    with open(expression_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gene_id", *cohort.patient_ids])
        for gid, row in zip(cohort.gene_ids, cohort.expression):
            w.writerow([gid, *(repr(float(v)) for v in row)])
    with open(clinical_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "survival_time_days", "censored"])
        for p in cohort.patients:
            w.writerow([p.patient_id, repr(float(p.survival_time)), int(p.censored)])


@dataclass(frozen=True)
class SpectralEffect:
    """Smooth Gaussian bump added to low-risk expression columns.

    ``center`` is a fraction of the gene axis, ``width`` is in genes and
    ``jitter`` is the standard deviation (genes) of a per-patient shift of
    the bump center. With ``polarity="random"`` each low-risk patient gets
    the bump with an independent random sign, so the classes differ in
    variance along the bump rather than in mean.
    """

    amplitude: float = 3.0
    center: float = 0.5
    width: float = 4.0
    jitter: float = 0.0
    noise_sd: float = 1.0
    polarity: str = "random"

    def __post_init__(self):
        if self.polarity not in ("fixed", "random"):
            raise CohortError(f"polarity must be 'fixed' or 'random', got {self.polarity!r}")
        if not self.width > 0 or self.noise_sd < 0:
            raise CohortError("effect width must be positive and noise_sd non-negative")

    def profile(self, m: int, shift: float = 0.0) -> np.ndarray:
        g = np.arange(m, dtype=float)
        c = self.center * (m - 1) + shift
        return self.amplitude * np.exp(-0.5 * ((g - c) / self.width) ** 2)


DEFAULT_EFFECT = SpectralEffect()

_LOW_RISK_RANGE = (FIVE_YEARS_DAYS + 30.0, 4000.0)
_HIGH_RISK_RANGE = (30.0, FIVE_YEARS_DAYS - 30.0)


def generate_synthetic_cohort(
    m: int,
    n: int,
    low_risk_fraction: float,
    effect: SpectralEffect = DEFAULT_EFFECT,
    seed: int = 0,
    censored_fraction: float = 0.3,
) -> tuple[Cohort, list[RiskLabel]]:
    """Draw a cohort whose survival-based labels are known in advance.

    Exactly ``round(low_risk_fraction * n)`` patients are low-risk. Censored
    high-risk patients get censoring times early enough that the
    conditional-survival rule still labels them high-risk; if no such time
    exists the patient is left uncensored.
    """
    if m < 8 or n < 10:
        raise CohortError(f"need m >= 8 and n >= 10, got m={m}, n={n}")
    if not 0 < low_risk_fraction < 1:
        raise CohortError(f"low_risk_fraction must lie in (0, 1), got {low_risk_fraction}")
    if not 0 <= censored_fraction < 1:
        raise CohortError(f"censored_fraction must lie in [0, 1), got {censored_fraction}")
    n_low = int(round(low_risk_fraction * n))
    if n_low == 0 or n_low == n:
        raise CohortError(f"low_risk_fraction {low_risk_fraction} leaves a single class for n={n}")
    rng = np.random.default_rng(seed)

    is_low = np.zeros(n, dtype=bool)
    is_low[rng.choice(n, size=n_low, replace=False)] = True

    expr = effect.noise_sd * rng.standard_normal((m, n))
    shifts = effect.jitter * rng.standard_normal(n)
    signs = rng.choice([-1.0, 1.0], size=n) if effect.polarity == "random" else np.ones(n)
    for j in np.flatnonzero(is_low):
        expr[:, j] += signs[j] * effect.profile(m, shifts[j])

    latent = np.where(
        is_low,
        rng.uniform(*_LOW_RISK_RANGE, size=n),
        rng.uniform(*_HIGH_RISK_RANGE, size=n),
    )
    censored = np.zeros(n, dtype=bool)
    censored[rng.choice(n, size=int(round(censored_fraction * n)), replace=False)] = True
    u = rng.uniform(0.05, 1.0, size=n)
    times = latent.copy()
    times[censored & is_low] = FIVE_YEARS_DAYS + u[censored & is_low] * (
        latent[censored & is_low] - FIVE_YEARS_DAYS
    )
    times[censored & ~is_low] = u[censored & ~is_low] * latent[censored & ~is_low]
    times = np.round(times, 1)

    gene_ids = [f"G{i + 1:03d}" for i in range(m)]
    width = max(3, len(str(n)))
    pids = [f"P{j + 1:0{width}d}" for j in range(n)]
    truth = [Risk.LOW if low else Risk.HIGH for low in is_low]

    def build():
        recs = [ClinicalRecord(pids[j], float(times[j]), bool(censored[j])) for j in range(n)]
        return Cohort(expr, gene_ids, recs)

    # Pull offending censored high-risk times earlier until the label rule agrees.
    for _ in range(64):
        cohort = build()
        labels, _ = label_cohort(cohort.patients)
        wrong = [j for j in range(n) if labels[j].value is not truth[j]]
        if not wrong:
            break
        for j in wrong:
            if censored[j] and not is_low[j]:
                times[j] = np.round(times[j] / 2.0, 1)
                if times[j] < 1.0:
                    censored[j] = False
                    times[j] = np.round(latent[j], 1)
    else:  # pragma: no cover - loop always settles well before the cap
        raise CohortError("could not construct consistent censoring times")
    return cohort, [RiskLabel(v) for v in truth]
