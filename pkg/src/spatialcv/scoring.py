"""Log predictive scores and model-selection statistics.

A fold is scored two ways from the same predictive density: jointly (one
multivariate log density at the observed test block) and pointwise (sum of
univariate log densities under the marginal mean/variance of each test
coordinate).  Summing over folds gives the two CV estimates; differencing
two models' estimates gives the pairwise selection statistic; replicated
experiments summarize the statistic's distribution by its accuracy (share
of positive draws) and the ratio of its mean to its standard deviation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .models import GaussianDensity

_LOG_2PI = math.log(2.0 * math.pi)

MODES = ("joint", "pointwise")


class UndefinedStatisticError(Exception):
    """The statistic's denominator is zero."""


class IncompleteReplicationError(Exception):
    """A failed fold makes the replication's CV estimate undefined."""


@dataclass(frozen=True)
class FoldScore:
    fold_id: int
    n_test: int
    joint: float
    pointwise: float
    failed: bool = False

    def by_mode(self, mode: str) -> float:
        if mode == "joint":
            return self.joint
        if mode == "pointwise":
            return self.pointwise
        raise ValueError(f"unknown mode {mode!r}")


def score_fold(pred: GaussianDensity, y_test: np.ndarray, fold_id: int = 0) -> FoldScore:
    """Joint and pointwise log scores of a test block under its predictive."""
    y_test = np.asarray(y_test, dtype=float).ravel()
    if y_test.size != pred.dim:
        raise ValueError(f"predictive has dim {pred.dim}, y_test has {y_test.size}")
    joint = pred.log_density(y_test)
    var = pred.marginal_variances()
    pointwise = float(np.sum(-0.5 * (_LOG_2PI + np.log(var)) - (y_test - pred.mean) ** 2 / (2.0 * var)))
    return FoldScore(fold_id=int(fold_id), n_test=y_test.size, joint=joint, pointwise=pointwise)


def failed_fold(fold_id: int, n_test: int) -> FoldScore:
    return FoldScore(fold_id=int(fold_id), n_test=int(n_test), joint=np.nan, pointwise=np.nan, failed=True)


def elpd_cv(scores, mode: str) -> float:
    """Sum of fold scores in the requested mode; any failed fold aborts."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    scores = list(scores)
    if any(s.failed for s in scores):
        raise IncompleteReplicationError("cannot aggregate a replication with failed folds")
    return float(sum(s.by_mode(mode) for s in scores))


def pairwise_stat(elpd_a: float, elpd_b: float) -> float:
    """Selection statistic: positive values favor model A."""
    return float(elpd_a) - float(elpd_b)


def sample_z(deltas) -> float:
    """Single-dataset selection statistic scaled by its Gaussian-approximation
    standard deviation.

    With K fold contributions d_1..d_K:  sum(d) / sqrt(K/(K-1) * sum((d - dbar)^2)).
    """
    d = np.asarray(deltas, dtype=float).ravel()
    k = d.size
    if k < 2:
        raise ValueError(f"need at least 2 fold deltas, got {k}")
    centered = d - d.mean()
    denom_sq = (k / (k - 1.0)) * float(centered @ centered)
    if denom_sq <= 0.0:
        raise UndefinedStatisticError("fold deltas have zero spread")
    return float(d.sum() / math.sqrt(denom_sq))


@dataclass(frozen=True)
class PopulationSummary:
    """Distribution summary of selection statistics across replications."""

    mode: str
    mean: float
    sd: float
    z: float | None            # mean / sd; None when sd == 0
    accuracy: float            # share of untrimmed statistics > 0
    n_total: int
    n_used: int                # after trimming
    trim: float | None = None


def population_summary(stats, trim: float | None = None, mode: str = "joint") -> PopulationSummary:
    """Mean, spread, mean/sd ratio and selection accuracy across replications.

    ``trim`` keeps the central fraction (e.g. 0.98 drops the ceil(N*0.01)
    smallest and largest values before computing moments).  Accuracy is
    always computed on the untrimmed statistics; exact zeros count as
    incorrect selections.
    """
    stats = np.asarray(stats, dtype=float).ravel()
    n = stats.size
    if n < 2:
        raise ValueError(f"need at least 2 replications, got {n}")
    accuracy = float(np.mean(stats > 0.0))
    kept = np.sort(stats)
    if trim is not None:
        if not (0.0 < trim <= 1.0):
            raise ValueError(f"trim fraction must be in (0, 1], got {trim}")
        # epsilon guards the ceil against float noise in n * (1 - trim) / 2
        drop = max(0, math.ceil(n * (1.0 - trim) / 2.0 - 1e-9))
        if n - 2 * drop < 2:
            raise ValueError(f"trim {trim} leaves fewer than 2 of {n} values")
        kept = kept[drop : n - drop]
    mean = float(kept.mean())
    sd = float(kept.std(ddof=1))
    z = mean / sd if sd > 0.0 else None
    return PopulationSummary(
        mode=mode, mean=mean, sd=sd, z=z, accuracy=accuracy,
        n_total=n, n_used=kept.size, trim=trim,
    )


@dataclass(frozen=True, eq=False)
class SelectionRecord:
    """One replication's pairwise comparison in both evaluation modes."""

    replication: int
    elpd_a: dict
    elpd_b: dict
    deltas: dict
    statistic: dict
    correct: dict


def selection_record(replication: int, scores_a, scores_b) -> SelectionRecord:
    """Assemble the per-replication record from two models' fold scores.

    Both lists must cover the same folds with no failures; the statistic is
    oriented so that positive values select model A.
    """
    scores_a = list(scores_a)
    scores_b = list(scores_b)
    if len(scores_a) != len(scores_b):
        raise ValueError("fold score lists differ in length")
    for sa, sb in zip(scores_a, scores_b):
        if sa.fold_id != sb.fold_id or sa.n_test != sb.n_test:
            raise ValueError("fold score lists are not aligned")
    elpd_a, elpd_b, deltas, statistic, correct = {}, {}, {}, {}, {}
    for mode in MODES:
        ea = elpd_cv(scores_a, mode)
        eb = elpd_cv(scores_b, mode)
        elpd_a[mode] = ea
        elpd_b[mode] = eb
        deltas[mode] = np.array([sa.by_mode(mode) - sb.by_mode(mode) for sa, sb in zip(scores_a, scores_b)])
        statistic[mode] = pairwise_stat(ea, eb)
        correct[mode] = statistic[mode] > 0.0
    return SelectionRecord(
        replication=int(replication),
        elpd_a=elpd_a, elpd_b=elpd_b, deltas=deltas,
        statistic=statistic, correct=correct,
    )


def write_score_table(path, rows, extra_fields=()) -> None:
    """CSV score table: one row per (replication, fold, model, mode)."""
    fields = list(extra_fields) + ["replication", "fold", "model", "mode", "n_test", "score"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k)) for k in fields})


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v
