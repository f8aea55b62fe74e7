"""Synthetic response generation and parameter-recovery reporting.

Simulation draws traits from the scale prior and response categories from
the model's category distribution at each trait value.  Randomness comes
from numpy's PCG64 streams: each person gets a generator seeded by
(seed, person index), so results are reproducible and independent of any
scheduling, and trait draws go through the inverse normal CDF so that
antithetic variates remain possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtri

from .estimate import FitResult, ParameterSet, import_params
from .ingest import ResponseMatrix
from .models import GgumItemParams, GrmItemParams, NrmItemParams, category_probs


@dataclass(frozen=True)
class SimSpec:
    """Recipe for one synthetic dataset.

    ``group_rule`` optionally maps a person's trait value to a group label
    (Python API only; it is not serialized).
    """

    params: ParameterSet
    n: int
    seed: int = 0
    missing_rate: float = 0.0
    group_rule: Callable[[float], str] | None = None
    group_name: str = "group"

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must be in [0, 1)")


def simulate_responses(spec: SimSpec) -> ResponseMatrix:
    """Generate a response matrix from known parameters.

    Per person: draw theta from the prior by inverse CDF, then each item's
    category from its distribution at that theta, then apply cellwise
    missingness.  Identical specs produce identical matrices.
    """
    entries = spec.params.items
    n_items = len(entries)
    codes = np.zeros((spec.n, n_items), dtype=np.int64)
    observed = np.ones((spec.n, n_items), dtype=bool)
    thetas = np.empty(spec.n)
    for person in range(spec.n):
        rng = np.random.default_rng([spec.seed, person])
        theta = spec.params.prior_mean + spec.params.prior_sd * ndtri(rng.uniform())
        thetas[person] = theta
        for j, entry in enumerate(entries):
            cum = np.cumsum(category_probs(entry.params, theta))
            k = int(np.searchsorted(cum, rng.uniform()))
            codes[person, j] = entry.categories[min(k, len(entry.categories) - 1)]
        if spec.missing_rate > 0.0:
            observed[person] = rng.uniform(size=n_items) >= spec.missing_rate

    groups = {}
    if spec.group_rule is not None:
        groups[spec.group_name] = np.array(
            [spec.group_rule(t) for t in thetas], dtype=object
        )
    return ResponseMatrix(
        items=[e.item for e in entries],
        codes=codes,
        observed=observed,
        categories=[e.categories for e in entries],
        weights=np.ones(spec.n),
        groups=groups,
    )


def save_simspec(spec: SimSpec, path) -> None:
    """Write the spec as JSON: the parameter file plus n, seed, missing_rate."""
    import json

    from .estimate import _item_payload, _layout_checksum

    params = spec.params
    payload = {
        "model": params.model,
        "prior": {"mean": params.prior_mean, "sd": params.prior_sd},
        "scale_note": params.scale_note,
        "items": [_item_payload(params.model, e) for e in params.items],
        "layout_checksum": _layout_checksum(
            params.model, [(e.item, e.categories) for e in params.items]
        ),
        "n": spec.n,
        "seed": spec.seed,
        "missing_rate": spec.missing_rate,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_simspec(path) -> SimSpec:
    """Read a spec written by :func:`save_simspec`."""
    import json

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    params = import_params(path)
    return SimSpec(
        params=params,
        n=int(payload["n"]),
        seed=int(payload.get("seed", 0)),
        missing_rate=float(payload.get("missing_rate", 0.0)),
    )


@dataclass(frozen=True)
class ParamRecovery:
    """Bias and RMSE for one named parameter block of one item."""

    item: str
    block: str  # "a", "d", "c", or "tau"
    true: NDArray[np.float64]
    est: NDArray[np.float64]

    @property
    def bias(self) -> NDArray[np.float64]:
        return self.est - self.true

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean((self.est - self.true) ** 2)))


@dataclass(frozen=True)
class RecoveryReport:
    rows: tuple[ParamRecovery, ...]
    sign_flipped: bool = False

    def rmse(self, block: str) -> float:
        vals = [np.asarray(r.est - r.true) for r in self.rows if r.block == block]
        if not vals:
            raise ValueError(f"no parameter block {block!r}")
        stacked = np.concatenate([v.ravel() for v in vals])
        return float(np.sqrt(np.mean(stacked**2)))

    def max_abs_bias(self) -> float:
        return float(max(np.max(np.abs(r.bias)) for r in self.rows))


def _blocks(model: str, p) -> dict[str, NDArray]:
    if model == "grm":
        return {"a": np.atleast_1d(p.a), "d": p.d}
    if model == "ggum":
        return {"a": np.atleast_1d(p.a), "d": np.atleast_1d(p.d), "tau": p.tau}
    return {"a": p.a, "c": p.c}


def _nrm_aligned(true: NrmItemParams, est: NrmItemParams, perm: Sequence[int], sign: int):
    perm = list(perm)
    return NrmItemParams(a=sign * est.a[perm], c=est.c[perm])


def recovery_report(spec: SimSpec, fit: FitResult | ParameterSet) -> RecoveryReport:
    """Compare fitted parameters against the generating truth.

    Items are matched by name and category lists must agree.  For the
    nominal model, the fit is aligned to the truth over the invariances the
    likelihood cannot distinguish: a global trait-direction flip and, per
    item, the category permutation minimizing squared error (the best
    match is the identity when labels were untouched).
    """
    from itertools import permutations

    fitted = fit.params if isinstance(fit, FitResult) else fit
    if fitted.model != spec.params.model:
        raise ValueError("fit and spec use different models")

    pairs = []
    for true_entry in spec.params.items:
        est_entry = fitted.entry(true_entry.item)
        if est_entry.categories != true_entry.categories:
            raise ValueError(
                f"item {true_entry.item!r}: fitted categories {est_entry.categories} "
                f"do not match simulated layout {true_entry.categories}"
            )
        pairs.append((true_entry, est_entry))

    model = spec.params.model
    sign_flipped = False
    if model == "nrm":
        best = None
        for sign in (1, -1):
            cost = 0.0
            aligned = []
            for true_entry, est_entry in pairs:
                t, e = true_entry.params, est_entry.params
                item_best = None
                for perm in permutations(range(t.n_categories)):
                    cand = _nrm_aligned(t, e, perm, sign)
                    c = float(((cand.a - t.a) ** 2).sum() + ((cand.c - t.c) ** 2).sum())
                    if item_best is None or c < item_best[0]:
                        item_best = (c, cand)
                cost += item_best[0]
                aligned.append(item_best[1])
            if best is None or cost < best[0]:
                best = (cost, sign, aligned)
        _, sign, aligned_params = best
        sign_flipped = sign < 0
        pairs = [
            (true_entry, ItemEntryView(est_entry.item, p))
            for (true_entry, est_entry), p in zip(pairs, aligned_params)
        ]

    rows = []
    for true_entry, est_entry in pairs:
        true_blocks = _blocks(model, true_entry.params)
        est_blocks = _blocks(model, est_entry.params)
        for block, tv in true_blocks.items():
            rows.append(
                ParamRecovery(
                    item=true_entry.item, block=block, true=tv, est=est_blocks[block]
                )
            )
    return RecoveryReport(rows=tuple(rows), sign_flipped=sign_flipped)


@dataclass(frozen=True)
class ItemEntryView:
    """Aligned stand-in for an ItemEntry during recovery comparison."""

    item: str
    params: object
