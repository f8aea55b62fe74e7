"""Survey-weighted subgroup summaries, crosstabs, and CI-overlap flags.

Standard errors use the weighted sample size directly, mirroring
weighted-N reporting conventions; a Kish effective-N correction is
available behind a flag for more conservative uncertainty.  Significance
reads are CI-based: a group is flagged when its 95% interval excludes the
overall weighted mean, and a pair when their intervals are disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .ingest import ResponseMatrix

Z95 = 1.96


@dataclass(frozen=True)
class GroupSummary:
    """Weighted mean of one subgroup with its 95% confidence interval.

    ``suppressed`` marks groups whose weighted size is too small (W <= 1)
    to support a variance estimate; their se and CI are NaN.
    """

    group: str
    n_unweighted: int
    n_weighted: float
    mean: float
    se: float
    ci_low: float
    ci_high: float
    suppressed: bool = False


def _summarize_one(label: str, x: NDArray, w: NDArray, use_effective_n: bool) -> GroupSummary:
    w_total = float(w.sum())
    mean = float((w * x).sum() / w_total)
    if w_total <= 1.0:
        return GroupSummary(
            group=label,
            n_unweighted=int(x.size),
            n_weighted=w_total,
            mean=mean,
            se=float("nan"),
            ci_low=float("nan"),
            ci_high=float("nan"),
            suppressed=True,
        )
    var_w = float((w * (x - mean) ** 2).sum() / (w_total - 1.0))
    n_eff = float(w_total**2 / (w**2).sum()) if use_effective_n else w_total
    se = float(np.sqrt(var_w / n_eff))
    return GroupSummary(
        group=label,
        n_unweighted=int(x.size),
        n_weighted=w_total,
        mean=mean,
        se=se,
        ci_low=mean - Z95 * se,
        ci_high=mean + Z95 * se,
    )


def weighted_summary(
    scores,
    weights,
    labels,
    *,
    use_effective_n: bool = False,
) -> list[GroupSummary]:
    """Per-group weighted means, SEs, and 95% CIs, sorted by group label.

    Weighted mean is sum(w x)/sum(w); weighted variance divides by W - 1
    with W the group's summed weight, and SE = sqrt(variance / W).  Persons
    with a NaN score or an empty/None label are left out.  Groups with
    W <= 1 are returned suppressed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    labels = np.asarray(labels, dtype=object)
    if not (scores.shape == weights.shape == labels.shape):
        raise ValueError("scores, weights, and labels must align")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    usable = ~np.isnan(scores)
    usable &= np.array([lab is not None and str(lab) != "" for lab in labels])
    out = []
    for label in sorted({str(lab) for lab in labels[usable]}):
        members = usable & (np.array([str(lab) for lab in labels]) == label)
        out.append(_summarize_one(label, scores[members], weights[members], use_effective_n))
    return out


def overall_summary(scores, weights, *, use_effective_n: bool = False) -> GroupSummary:
    """Weighted summary over all persons with a score."""
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    usable = ~np.isnan(scores)
    if not usable.any():
        raise ValueError("no scored persons")
    return _summarize_one("overall", scores[usable], weights[usable], use_effective_n)


@dataclass(frozen=True)
class CrossTab:
    """Unweighted counts of persons by (group, category), missing included."""

    item: str
    group_var: str
    row_labels: tuple[str, ...]
    category_codes: tuple[int, ...]
    counts: NDArray[np.int_]  # rows x (categories + 1); last column is missing

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def column_names(self) -> list[str]:
        return [str(c) for c in self.category_codes] + ["missing"]


def crosstab(
    matrix: ResponseMatrix,
    group_var: str,
    item: str,
    levels: Sequence[str] | None = None,
) -> CrossTab:
    """Frequency table of one item's categories by one grouping variable.

    Row labels come from the observed group values unless ``levels`` pins
    them explicitly (allowing empty rows).
    """
    if group_var not in matrix.groups:
        raise ValueError(f"unknown group column {group_var!r}")
    j = matrix.item_index(item)
    labels = np.array([str(lab) for lab in matrix.groups[group_var]])
    rows = tuple(levels) if levels is not None else tuple(sorted(set(labels.tolist())))
    codes = matrix.categories[j]
    counts = np.zeros((len(rows), len(codes) + 1), dtype=np.int64)
    obs = matrix.observed[:, j]
    col = matrix.codes[:, j]
    for r, label in enumerate(rows):
        members = labels == label
        for k, code in enumerate(codes):
            counts[r, k] = int((members & obs & (col == code)).sum())
        counts[r, -1] = int((members & ~obs).sum())
    return CrossTab(
        item=item,
        group_var=group_var,
        row_labels=rows,
        category_codes=codes,
        counts=counts,
    )


@dataclass(frozen=True)
class OverlapFlags:
    """CI-based significance reads for a set of group summaries."""

    excludes_overall: dict[str, bool]
    disjoint_pairs: tuple[tuple[str, str], ...]


def nonoverlap_flags(summaries: Sequence[GroupSummary], overall: GroupSummary) -> OverlapFlags:
    """Flag groups whose 95% CI excludes the overall mean and pairs with disjoint CIs.

    Suppressed summaries are never flagged.
    """
    excludes = {}
    for s in summaries:
        excludes[s.group] = (not s.suppressed) and (
            overall.mean < s.ci_low or overall.mean > s.ci_high
        )
    pairs = []
    usable = [s for s in summaries if not s.suppressed]
    for i, s1 in enumerate(usable):
        for s2 in usable[i + 1 :]:
            if s1.ci_high < s2.ci_low or s2.ci_high < s1.ci_low:
                pairs.append((s1.group, s2.group))
    return OverlapFlags(excludes_overall=excludes, disjoint_pairs=tuple(pairs))
