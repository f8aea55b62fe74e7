"""Model-selection metrics and delta-rule verdicts.

AIC and BIC are penalized log-likelihood criteria; lower is better.  A
pairwise difference above 10 is read, per the usual convention, as strong
support that the compared models genuinely differ; smaller differences are
"equivalent support".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

VERDICT_DISTINCT = "distinct"
VERDICT_EQUIVALENT = "equivalent-support"

#: Conventional strong-evidence threshold for AIC/BIC differences.
DELTA_THRESHOLD = 10.0


def information_criteria(loglik: float, n_params: int, n_obs: int) -> tuple[float, float]:
    """Return (AIC, BIC) = (2k - 2LL, k ln n - 2LL).

    ``n_obs`` counts persons (the sampling unit), not person-item responses.
    """
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    if n_params < 0:
        raise ValueError("n_params must be nonnegative")
    aic = 2.0 * n_params - 2.0 * loglik
    bic = n_params * math.log(n_obs) - 2.0 * loglik
    return aic, bic


def free_param_count(model: str, layout: Sequence) -> int:
    """Count free item parameters for a model over a category layout.

    ``layout`` gives, per item, either the number of categories or the
    category list itself.  Per item with m categories: GRM has 1 + (m-1),
    GGUM has 2 + (m-1), and NRM has 2(m-1) under its sum-to-zero
    identification.
    """
    sizes = [entry if isinstance(entry, int) else len(entry) for entry in layout]
    if any(m < 2 for m in sizes):
        raise ValueError("every item needs at least two categories")
    if model == "grm":
        return sum(1 + (m - 1) for m in sizes)
    if model == "ggum":
        return sum(2 + (m - 1) for m in sizes)
    if model == "nrm":
        return sum(2 * (m - 1) for m in sizes)
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True)
class DeltaVerdict:
    """Absolute metric difference and its reading."""

    delta: float
    verdict: str

    @property
    def delta_2dp(self) -> float:
        return round(self.delta, 2)


def delta_verdict(metric_a: float, metric_b: float, threshold: float = DELTA_THRESHOLD) -> DeltaVerdict:
    """Compare two AIC (or BIC) values: delta = |a - b|, distinct iff delta > threshold."""
    if not (math.isfinite(metric_a) and math.isfinite(metric_b)):
        raise ValueError("metrics must be finite")
    delta = abs(metric_a - metric_b)
    verdict = VERDICT_DISTINCT if delta > threshold else VERDICT_EQUIVALENT
    return DeltaVerdict(delta=delta, verdict=verdict)


@dataclass(frozen=True)
class FitMetrics:
    """One fitted model's selection metrics."""

    model: str
    loglik: float
    n_params: int
    n_persons: int
    aic: float
    bic: float
    converged: bool = True
    n_iter: int = 0


@dataclass(frozen=True)
class ModelComparison:
    """Ranked metrics with deltas against the best (lowest) model."""

    metrics: tuple[FitMetrics, ...]
    best_aic: str
    best_bic: str
    delta_aic: dict[str, float]
    delta_bic: dict[str, float]
    verdicts: dict[str, str]


def compare_metrics(metrics: Sequence[FitMetrics]) -> ModelComparison:
    """Rank models by AIC/BIC and attach delta-vs-best verdicts."""
    if not metrics:
        raise ValueError("no metrics to compare")
    best_aic = min(metrics, key=lambda m: m.aic)
    best_bic = min(metrics, key=lambda m: m.bic)
    delta_aic = {m.model: abs(m.aic - best_aic.aic) for m in metrics}
    delta_bic = {m.model: abs(m.bic - best_bic.bic) for m in metrics}
    verdicts = {m.model: delta_verdict(m.aic, best_aic.aic).verdict for m in metrics}
    return ModelComparison(
        metrics=tuple(sorted(metrics, key=lambda m: m.aic)),
        best_aic=best_aic.model,
        best_bic=best_bic.model,
        delta_aic=delta_aic,
        delta_bic=delta_bic,
        verdicts=verdicts,
    )


_METRICS_FIELDS = ["model", "loglik", "n_params", "n_persons", "aic", "bic", "converged", "n_iter"]


def write_metrics_csv(metrics: Sequence[FitMetrics], path, header_lines: Sequence[str] = ()) -> None:
    """Write a fit-metrics table; ``header_lines`` become leading # comments."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(_METRICS_FIELDS)
        for m in metrics:
            writer.writerow(
                [
                    m.model,
                    repr(m.loglik),
                    m.n_params,
                    m.n_persons,
                    repr(m.aic),
                    repr(m.bic),
                    int(m.converged),
                    m.n_iter,
                ]
            )


def read_metrics_csv(path) -> list[FitMetrics]:
    """Read a fit-metrics table written by :func:`write_metrics_csv`."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    out = []
    for row in reader:
        try:
            out.append(
                FitMetrics(
                    model=row["model"],
                    loglik=float(row["loglik"]),
                    n_params=int(row["n_params"]),
                    n_persons=int(row["n_persons"]),
                    aic=float(row["aic"]),
                    bic=float(row["bic"]),
                    converged=bool(int(row.get("converged", 1))),
                    n_iter=int(row.get("n_iter", 0)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed metrics row {row!r}") from exc
    if not out:
        raise ValueError(f"{path}: no metric rows")
    return out
