"""Classical standardized composite scores used as baselines.

Two standardizations of the same recoded responses: ``z_score_b``
standardizes the per-person composite after summation, ``z_score_w``
standardizes each item first and averages the per-item z-scores.  When
items differ in category range the first is dominated by the widest item;
the second gives every item equal weight.  Both use sample standard
deviations (N-1) and are computed over each person's observed items only,
so partial missingness does not drop anyone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .ingest import ResponseMatrix


@dataclass
class ClassicalScores:
    """Both baseline scores plus the moments used to standardize them.

    Scores are NaN for persons with no observed item among those scored.
    """

    items: list[str]
    z_b: NDArray[np.float64]
    z_w: NDArray[np.float64]
    composite_mean: float
    composite_sd: float
    item_means: NDArray[np.float64]
    item_sds: NDArray[np.float64]


def _select(matrix: ResponseMatrix, items: Sequence[str] | None):
    names = list(matrix.items) if items is None else list(items)
    cols = [matrix.item_index(it) for it in names]
    codes = matrix.codes[:, cols].astype(np.float64)
    obs = matrix.observed[:, cols]
    return names, codes, obs


def z_score_b(matrix: ResponseMatrix, items: Sequence[str] | None = None) -> NDArray[np.float64]:
    """Standardize the summed composite: (x_n - mean) / sd.

    The composite for a person is the sum of recoded codes over that
    person's observed items.  Requires at least two scored persons and a
    nonzero composite spread.
    """
    _, codes, obs = _select(matrix, items)
    scored = obs.any(axis=1)
    composite = np.where(obs, codes, 0.0).sum(axis=1)
    vals = composite[scored]
    if vals.size < 2:
        raise ValueError("need at least two persons with an observed item")
    mu = vals.mean()
    sd = vals.std(ddof=1)
    if sd == 0:
        raise ValueError("zero variance in composite scores")
    out = np.full(matrix.n_persons, np.nan)
    out[scored] = (composite[scored] - mu) / sd
    return out


def z_score_w(matrix: ResponseMatrix, items: Sequence[str] | None = None) -> NDArray[np.float64]:
    """Standardize each item, then average a person's item z-scores.

    Item moments use each item's observed responses; the average divides by
    the number of items the person actually answered.  Any item with zero
    variance is an error.
    """
    names, codes, obs = _select(matrix, items)
    z = np.zeros_like(codes)
    for j, name in enumerate(names):
        col = codes[obs[:, j], j]
        if col.size < 2:
            raise ValueError(f"item {name!r}: need at least two observed responses")
        sd = col.std(ddof=1)
        if sd == 0:
            raise ValueError(f"item {name!r}: zero variance")
        z[:, j] = (codes[:, j] - col.mean()) / sd
    n_obs = obs.sum(axis=1)
    out = np.full(matrix.n_persons, np.nan)
    scored = n_obs > 0
    out[scored] = np.where(obs, z, 0.0).sum(axis=1)[scored] / n_obs[scored]
    return out


def classical_scores(
    matrix: ResponseMatrix, items: Sequence[str] | None = None
) -> ClassicalScores:
    """Compute both baseline scores and record the moments behind them."""
    names, codes, obs = _select(matrix, items)
    scored = obs.any(axis=1)
    composite = np.where(obs, codes, 0.0).sum(axis=1)[scored]
    item_means = np.array([codes[obs[:, j], j].mean() for j in range(len(names))])
    item_sds = np.array([codes[obs[:, j], j].std(ddof=1) for j in range(len(names))])
    return ClassicalScores(
        items=names,
        z_b=z_score_b(matrix, items),
        z_w=z_score_w(matrix, items),
        composite_mean=float(composite.mean()),
        composite_sd=float(composite.std(ddof=1)),
        item_means=item_means,
        item_sds=item_sds,
    )
