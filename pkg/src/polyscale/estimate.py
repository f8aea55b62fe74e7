"""Item-parameter estimation, person scoring, and parameter files.

Fitting integrates the latent trait out over a fixed standard-normal prior
on a rectangular quadrature grid and alternates posterior-weight updates
(E-step) with per-item maximization of the expected complete-data
log-likelihood (M-step).  Persons are then located by the posterior mode
(MAP) under the same prior.  Trait values are logits, so ``exp(theta)`` is
an odds against the scale center and differences in theta are log
odds-ratios anywhere on the scale.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq, minimize
from scipy.special import expit, logsumexp, ndtri

from . import compare
from .ingest import ResponseMatrix
from .models import (
    GgumItemParams,
    GrmItemParams,
    NrmItemParams,
    category_logprobs,
    dtheta_category_logprobs,
    person_loglik,
    person_loglik_dtheta,
)

MODELS = ("grm", "ggum", "nrm")

_SCALE_NOTE = (
    "Trait scores are logits centered at 0 (prior mean) with SD 1; "
    "exp(theta) is the odds relative to the scale center."
)

_TINY_LOGP = -690.0  # log of the smallest normal double, used as a floor


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureGrid:
    """Equally spaced trait nodes with normalized prior masses."""

    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=np.float64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must be matching 1-D arrays")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must sum to 1")

    @property
    def bound(self) -> float:
        return float(max(abs(self.nodes[0]), abs(self.nodes[-1])))


def make_grid(n_points: int = 61, bound: float = 6.0) -> QuadratureGrid:
    """Rectangular grid on [-bound, bound] with standard-normal masses.

    Weights are proportional to the normal density at each node and
    renormalized to sum to one.
    """
    if n_points < 11:
        raise ValueError("need at least 11 quadrature points")
    if bound <= 0:
        raise ValueError("bound must be positive")
    nodes = np.linspace(-bound, bound, n_points)
    dens = np.exp(-0.5 * nodes**2)
    return QuadratureGrid(nodes=nodes, weights=dens / dens.sum())


# ---------------------------------------------------------------------------
# Parameter bundles
# ---------------------------------------------------------------------------

_PARAM_TYPES = {"grm": GrmItemParams, "ggum": GgumItemParams, "nrm": NrmItemParams}


@dataclass(frozen=True)
class ItemEntry:
    """One item's fitted parameters plus the category codes they cover."""

    item: str
    categories: tuple[int, ...]
    params: GrmItemParams | GgumItemParams | NrmItemParams

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(int(c) for c in self.categories))
        if len(self.categories) != self.params.n_categories:
            raise ValueError(
                f"item {self.item!r}: {len(self.categories)} categories but parameters "
                f"cover {self.params.n_categories}"
            )


@dataclass(frozen=True)
class ParameterSet:
    """A model's full item-parameter bundle, the unit of export/import."""

    model: str
    items: tuple[ItemEntry, ...]
    prior_mean: float = 0.0
    prior_sd: float = 1.0
    scale_note: str = _SCALE_NOTE

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.items:
            raise ValueError("parameter set needs at least one item")
        want = _PARAM_TYPES[self.model]
        for entry in self.items:
            if not isinstance(entry.params, want):
                raise ValueError(
                    f"item {entry.item!r}: {type(entry.params).__name__} does not "
                    f"belong to model {self.model!r}"
                )
        if self.prior_sd <= 0:
            raise ValueError("prior sd must be positive")

    @property
    def item_names(self) -> list[str]:
        return [e.item for e in self.items]

    def layout(self) -> list[int]:
        return [len(e.categories) for e in self.items]

    def entry(self, item: str) -> ItemEntry:
        for e in self.items:
            if e.item == item:
                return e
        raise ValueError(f"no parameters for item {item!r}")


@dataclass
class FitResult:
    """Outcome of an EM fit: parameters, fit metrics, and the LL trace."""

    params: ParameterSet
    loglik: float
    n_params: int
    n_persons: int
    aic: float
    bic: float
    n_iter: int
    converged: bool
    loglik_trace: NDArray[np.float64]
    dropped: dict[str, list[int]] = field(default_factory=dict)

    @property
    def model(self) -> str:
        return self.params.model

    def metrics(self) -> compare.FitMetrics:
        return compare.FitMetrics(
            model=self.model,
            loglik=self.loglik,
            n_params=self.n_params,
            n_persons=self.n_persons,
            aic=self.aic,
            bic=self.bic,
            converged=self.converged,
            n_iter=self.n_iter,
        )


@dataclass(frozen=True)
class PersonScore:
    """MAP trait estimate with a curvature-based standard error."""

    theta: float
    se: float
    n_observed: int
    multimodal: bool = False


# ---------------------------------------------------------------------------
# Per-model M-step machinery
# ---------------------------------------------------------------------------
#
# Each family packs its item parameters into an unconstrained (or box-bounded)
# vector, evaluates the negative expected complete-data log-likelihood with
# its analytic gradient, and provides deterministic starting values from the
# item's observed category counts.


class _GrmFamily:
    model = "grm"

    @staticmethod
    def start(counts: NDArray, grid: QuadratureGrid) -> GrmItemParams:
        total = counts.sum()
        p_ge = np.clip(counts[::-1].cumsum()[::-1][1:] / total, 0.02, 0.98)
        d = -ndtri(p_ge)
        for j in range(1, d.size):
            d[j] = max(d[j], d[j - 1] + 0.01)
        return GrmItemParams(a=1.0, d=d)

    @staticmethod
    def pack(p: GrmItemParams) -> NDArray:
        gaps = np.diff(p.d)
        return np.concatenate(([np.log(p.a), p.d[0]], np.log(gaps)))

    @staticmethod
    def unpack(x: NDArray, m: int) -> GrmItemParams:
        a = np.exp(x[0])
        d = x[1] + np.concatenate(([0.0], np.cumsum(np.exp(x[2:]))))
        return GrmItemParams(a=a, d=d)

    @staticmethod
    def bounds(m: int):
        return [(-7.0, 7.0), (-50.0, 50.0)] + [(-30.0, 10.0)] * (m - 2)

    @staticmethod
    def neg_value_grad(x: NDArray, thetas: NDArray, r: NDArray):
        m = r.shape[1]
        a = np.exp(x[0])
        gaps = np.exp(x[2:])
        d = x[1] + np.concatenate(([0.0], np.cumsum(gaps)))
        params = GrmItemParams(a=a, d=d)
        logp = np.maximum(category_logprobs(params, thetas), _TINY_LOGP)
        value = float(np.where(r > 0, r * logp, 0.0).sum())

        z = a * (thetas[:, None] - d[None, :])
        s = np.exp(-np.logaddexp(0.0, -z) - np.logaddexp(0.0, z))
        probs = np.maximum(np.exp(logp), 1e-300)
        omega = np.where(r > 0, r / probs, 0.0)
        d_omega = omega[:, 1:] - omega[:, :-1]  # boundary b sits between cats b-1, b
        t_term = s * (thetas[:, None] - d[None, :])
        df_da = float((t_term * d_omega).sum())
        df_dd = -a * (s * d_omega).sum(axis=0)

        grad = np.empty_like(x)
        grad[0] = a * df_da
        tail = np.cumsum(df_dd[::-1])[::-1]
        grad[1] = tail[0]
        grad[2:] = gaps * tail[1:]
        return -value, -grad


class _GgumFamily:
    model = "ggum"

    @staticmethod
    def start(counts: NDArray, grid: QuadratureGrid) -> GgumItemParams:
        c = counts.size - 1
        return GgumItemParams(a=1.0, d=0.0, tau=np.full(c, -1.0))

    @staticmethod
    def pack(p: GgumItemParams) -> NDArray:
        return np.concatenate(([np.log(p.a), p.d], p.tau))

    @staticmethod
    def unpack(x: NDArray, m: int) -> GgumItemParams:
        return GgumItemParams(a=np.exp(x[0]), d=x[1], tau=x[2:].copy())

    @staticmethod
    def bounds(m: int):
        return [(-7.0, 7.0), (-50.0, 50.0)] + [(-50.0, 50.0)] * (m - 1)

    @staticmethod
    def neg_value_grad(x: NDArray, thetas: NDArray, r: NDArray):
        m = r.shape[1]
        c = m - 1
        m_top = 2 * c + 1
        a = np.exp(x[0])
        d = x[1]
        tau = x[2:]
        params = GgumItemParams(a=a, d=d, tau=tau)

        steps = np.cumsum(params.full_tau())
        w = np.arange(m_top + 1, dtype=np.float64)
        g = a * (w[None, :] * (thetas[:, None] - d) - steps[None, :])
        log_norm = logsumexp(g, axis=1, keepdims=True)
        log_phi = g - log_norm
        phi = np.exp(log_phi)

        lo_log = log_phi[:, : c + 1]
        hi_log = log_phi[:, ::-1][:, : c + 1]
        logp = np.maximum(np.logaddexp(lo_log, hi_log), _TINY_LOGP)
        value = float(np.where(r > 0, r * logp, 0.0).sum())

        # Derivatives of the subjective log-numerators g_w, stacked per free
        # parameter p: dgs[p] has shape (Q, M+1).  With a = e^alpha the
        # alpha-derivative of g is g itself.
        n_par = x.size
        dgs = np.empty((n_par, thetas.size, m_top + 1))
        dgs[0] = g
        dgs[1] = np.broadcast_to(-a * w, g.shape)
        ks = np.arange(1, c + 1)[:, None]
        step = (w[None, :] >= ks).astype(np.float64) - (w[None, :] >= m_top - ks + 1)
        dgs[2:] = -a * step[:, None, :]

        # pair weight of the low-side subjective response w = z vs w = M - z
        lo = expit(lo_log - hi_log)
        pair = lo[None] * dgs[:, :, : c + 1] + (1.0 - lo)[None] * dgs[:, :, ::-1][:, :, : c + 1]
        mean = np.einsum("qw,pqw->pq", phi, dgs)
        grad = np.einsum("qz,pqz->p", r, pair) - r.sum(axis=1) @ mean.T
        return -value, -grad


class _NrmFamily:
    model = "nrm"

    @staticmethod
    def start(counts: NDArray, grid: QuadratureGrid) -> NrmItemParams:
        # Exactly-zero slopes with log-proportion intercepts are a fixed
        # point of EM (the M-step gradient vanishes there), so seed a small
        # ascending ramp to break the symmetry deterministically.
        m = counts.size
        ramp = 0.2 * (np.arange(m) - (m - 1) / 2.0)
        logp = np.log(counts / counts.sum())
        return NrmItemParams(a=ramp, c=logp - logp.mean())

    @staticmethod
    def pack(p: NrmItemParams) -> NDArray:
        return np.concatenate((p.a, p.c))

    @staticmethod
    def unpack(x: NDArray, m: int) -> NrmItemParams:
        return NrmItemParams(a=x[:m].copy(), c=x[m:].copy())

    @staticmethod
    def bounds(m: int):
        return [(-50.0, 50.0)] * (2 * m)

    @staticmethod
    def neg_value_grad(x: NDArray, thetas: NDArray, r: NDArray):
        # Optimized in the redundant 2m space: the objective is flat along
        # constant shifts of slopes or intercepts and its gradient has no
        # component along them, so the iterates never leave the identified
        # slice up to rounding; centering happens on unpack.
        m = r.shape[1]
        a = x[:m]
        c = x[m:]
        logits = thetas[:, None] * a[None, :] + c[None, :]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - log_norm
        value = float(np.where(r > 0, r * logp, 0.0).sum())

        probs = np.exp(logp)
        resid = r - r.sum(axis=1, keepdims=True) * probs
        grad = np.empty_like(x)
        grad[:m] = thetas @ resid
        grad[m:] = resid.sum(axis=0)
        return -value, -grad


_FAMILIES = {"grm": _GrmFamily, "ggum": _GgumFamily, "nrm": _NrmFamily}


def _mstep_item(family, params, thetas: NDArray, r: NDArray, probe: bool, grid: QuadratureGrid):
    m = r.shape[1]
    x0 = family.pack(params)
    starts = [x0]
    if family.model == "ggum" and probe:
        # The unfolding objective is multimodal in the item location; probe
        # deterministic quartile locations alongside the warm start.
        q = grid.nodes.size
        for node in (grid.nodes[q // 4], grid.nodes[q // 2], grid.nodes[3 * q // 4]):
            alt = x0.copy()
            alt[1] = node
            starts.append(alt)
    f0, _ = family.neg_value_grad(x0, thetas, r)
    best_x, best_f = x0, f0
    for start in starts:
        res = minimize(
            family.neg_value_grad,
            start,
            args=(thetas, r),
            jac=True,
            method="L-BFGS-B",
            bounds=family.bounds(m),
            options={"maxiter": 80},
        )
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = res.x, res.fun
    return family.unpack(best_x, m)


# ---------------------------------------------------------------------------
# Data preparation shared by fitting and likelihood evaluation
# ---------------------------------------------------------------------------


@dataclass
class _ItemData:
    item: str
    categories: tuple[int, ...]
    idx: NDArray[np.int_]  # (N,) category index, filler 0 where unobserved
    obs: NDArray[np.bool_]
    counts: NDArray[np.int_]


def _prepare_items(matrix: ResponseMatrix, drop_unobserved: bool) -> tuple[list[_ItemData], dict[str, list[int]]]:
    prepared = []
    dropped: dict[str, list[int]] = {}
    for j, item in enumerate(matrix.items):
        col = matrix.codes[:, j]
        obs = matrix.observed[:, j]
        cats = list(matrix.categories[j])
        counts = np.array([(col[obs] == code).sum() for code in cats])
        if drop_unobserved and np.any(counts == 0):
            gone = [c for c, n in zip(cats, counts) if n == 0]
            dropped[item] = gone
            warnings.warn(
                f"item {item!r}: categories {gone} never observed; dropped from the fit layout"
            )
            cats = [c for c, n in zip(cats, counts) if n > 0]
            counts = counts[counts > 0]
        if len(cats) < 2:
            raise ValueError(f"item {item!r}: fewer than two observed categories")
        lookup = {code: k for k, code in enumerate(cats)}
        idx = np.zeros(matrix.n_persons, dtype=np.int64)
        idx[obs] = np.array([lookup[c] for c in col[obs].tolist()], dtype=np.int64)
        prepared.append(
            _ItemData(item=item, categories=tuple(cats), idx=idx, obs=obs, counts=counts)
        )
    return prepared, dropped


def _grid_loglik(param_list, data: list[_ItemData], grid: QuadratureGrid):
    """Per-node log-likelihood matrix (Q, N) and the marginal log-likelihood."""
    n = data[0].idx.size
    ll_grid = np.zeros((grid.nodes.size, n))
    for params, item in zip(param_list, data):
        logp = category_logprobs(params, grid.nodes)
        ll_grid += np.where(item.obs[None, :], logp[:, item.idx], 0.0)
    joint = ll_grid + np.log(grid.weights)[:, None]
    log_marg = logsumexp(joint, axis=0)
    return ll_grid, joint, log_marg


def marginal_loglik(params: ParameterSet, matrix: ResponseMatrix, grid: QuadratureGrid) -> float:
    """Marginal log-likelihood of ``matrix`` at fixed parameters.

    Persons are integrated over the grid prior; items are matched by name
    and every observed code must appear in the parameter layout.
    """
    data = _match_items(params, matrix)
    _, _, log_marg = _grid_loglik([e.params for e in params.items], data, grid)
    return float(log_marg.sum())


def _match_items(params: ParameterSet, matrix: ResponseMatrix) -> list[_ItemData]:
    data = []
    for entry in params.items:
        j = matrix.item_index(entry.item)
        col = matrix.codes[:, j]
        obs = matrix.observed[:, j]
        lookup = {code: k for k, code in enumerate(entry.categories)}
        observed_codes = set(col[obs].tolist())
        unknown = observed_codes - set(entry.categories)
        if unknown:
            raise ValueError(
                f"item {entry.item!r}: response categories {sorted(unknown)} absent "
                f"from parameter layout"
            )
        idx = np.zeros(matrix.n_persons, dtype=np.int64)
        idx[obs] = np.array([lookup[c] for c in col[obs].tolist()], dtype=np.int64)
        counts = np.array([(col[obs] == code).sum() for code in entry.categories])
        data.append(
            _ItemData(
                item=entry.item,
                categories=entry.categories,
                idx=idx,
                obs=obs,
                counts=counts,
            )
        )
    return data


# ---------------------------------------------------------------------------
# EM fitting
# ---------------------------------------------------------------------------


def _person_lists(data: list[_ItemData]) -> list[list[NDArray]]:
    return [
        [np.flatnonzero(item.obs & (item.idx == cat)) for cat in range(len(item.categories))]
        for item in data
    ]


def _em_loop(family, param_list, data, grid, *, tol, max_iter):
    """Alternate E- and M-steps until the marginal LL settles.

    Multimodal M-steps (ggum) are probed with restarts on a dense-early,
    sparse-late schedule; convergence is only declared on the heels of a
    probed pass, so the sparse phase cannot stop on an unescaped plateau.
    """
    person_lists = _person_lists(data)
    param_list = list(param_list)
    trace: list[float] = []
    converged = False
    n_iter = 0
    ll_prev = -np.inf
    probed_last = True
    force_probe = False
    for iteration in range(max_iter + 1):
        _, joint, log_marg = _grid_loglik(param_list, data, grid)
        ll = float(log_marg.sum())
        trace.append(ll)
        if iteration > 0 and abs(ll - ll_prev) < tol:
            if probed_last:
                converged = True
                break
            force_probe = True
        if iteration == max_iter:
            break
        probe = (
            family.model != "ggum" or iteration < 10 or iteration % 5 == 0 or force_probe
        )
        force_probe = False
        posterior = np.exp(joint - log_marg[None, :])
        for i, item in enumerate(data):
            r = np.column_stack([posterior[:, idx].sum(axis=1) for idx in person_lists[i]])
            param_list[i] = _mstep_item(family, param_list[i], grid.nodes, r, probe, grid)
        probed_last = probe
        ll_prev = ll
        n_iter = iteration + 1
    last_change = abs(trace[-1] - ll_prev) if len(trace) > 1 else float("inf")
    return param_list, trace, converged, n_iter, last_change


def fit_em(
    matrix: ResponseMatrix,
    model: str,
    grid: QuadratureGrid | None = None,
    *,
    tol: float = 1e-5,
    max_iter: int = 500,
) -> FitResult:
    """Fit item parameters by marginal maximum likelihood (EM).

    The E-step turns the current parameters into posterior node weights per
    person; the M-step maximizes each item's expected complete-data
    log-likelihood with a bounded quasi-Newton ascent and analytic
    gradients.  Iteration stops when the marginal log-likelihood changes by
    less than ``tol`` or after ``max_iter`` M-steps, whichever comes first.

    Categories never observed for an item are dropped from its layout with
    a warning; items with fewer than two observed categories are an error.
    The marginal log-likelihood is non-decreasing across iterations and the
    reported value corresponds exactly to the returned parameters.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    if grid is None:
        grid = make_grid()
    family = _FAMILIES[model]
    data, dropped = _prepare_items(matrix, drop_unobserved=True)

    n = matrix.n_persons
    k = compare.free_param_count(model, [len(d.categories) for d in data])
    if n < 10 * k:
        warnings.warn(
            f"only {n} persons for {k} free parameters; estimates may be unstable"
        )

    param_list = [family.start(item.counts, grid) for item in data]
    if model == "ggum":
        # A cold start can collapse every unfolding item to a flat curve (a
        # self-consistent EM fixed point where the posterior equals the
        # prior).  Seed the items against the posterior of a short graded
        # prefit instead, probing each item's location on both sides.
        pre_params, *_ = _em_loop(
            _FAMILIES["grm"],
            [_GrmFamily.start(item.counts, grid) for item in data],
            data,
            grid,
            tol=max(tol, 1e-3),
            max_iter=50,
        )
        _, joint, log_marg = _grid_loglik(pre_params, data, grid)
        posterior = np.exp(joint - log_marg[None, :])
        person_lists = _person_lists(data)
        param_list = [
            _mstep_item(
                family,
                params,
                grid.nodes,
                np.column_stack([posterior[:, idx].sum(axis=1) for idx in person_lists[i]]),
                True,
                grid,
            )
            for i, params in enumerate(param_list)
        ]

    param_list, trace, converged, n_iter, last_change = _em_loop(
        family, param_list, data, grid, tol=tol, max_iter=max_iter
    )
    if not converged:
        warnings.warn(
            f"{model} fit did not converge in {max_iter} iterations "
            f"(last change {last_change:.3g})"
        )

    aic, bic = compare.information_criteria(trace[-1], k, n)
    params = ParameterSet(
        model=model,
        items=tuple(
            ItemEntry(item=item.item, categories=item.categories, params=p)
            for item, p in zip(data, param_list)
        ),
    )
    return FitResult(
        params=params,
        loglik=trace[-1],
        n_params=k,
        n_persons=n,
        aic=aic,
        bic=bic,
        n_iter=n_iter,
        converged=converged,
        loglik_trace=np.array(trace),
        dropped=dropped,
    )


# ---------------------------------------------------------------------------
# MAP scoring
# ---------------------------------------------------------------------------


def _codes_to_indices(params: ParameterSet, responses) -> list[int | None]:
    if isinstance(responses, Mapping):
        responses = [responses.get(e.item) for e in params.items]
    if len(responses) != len(params.items):
        raise ValueError("responses must align with the parameter set's items")
    out: list[int | None] = []
    for entry, code in zip(params.items, responses):
        if code is None:
            out.append(None)
            continue
        try:
            out.append(entry.categories.index(int(code)))
        except ValueError:
            raise ValueError(
                f"item {entry.item!r}: response category {code} absent from "
                f"parameter layout"
            ) from None
    return out


def map_score(
    params: ParameterSet,
    responses,
    *,
    bound: float = 6.0,
    n_scan: int = 201,
    tol: float = 1e-6,
) -> PersonScore:
    """MAP trait estimate for one response vector.

    ``responses`` is a sequence of category codes aligned with the
    parameter set's items (or a mapping item -> code); ``None`` marks a
    missing response.  The log posterior (normal prior times response
    likelihood) is scanned on [-bound-1, bound+1] to bracket every local
    mode, each bracket is polished by root-finding on the derivative, and
    the highest mode wins.  Near-exact ties go to the mode closer to 0 and
    any multimodality is flagged.
    """
    idx = _codes_to_indices(params, responses)
    item_params = [e.params for e in params.items]
    mu, sd = params.prior_mean, params.prior_sd

    def logpost(t):
        return -0.5 * ((t - mu) / sd) ** 2 + person_loglik(item_params, idx, t)

    def dlogpost(t):
        return -(t - mu) / sd**2 + float(person_loglik_dtheta(item_params, idx, t))

    lo, hi = -bound - 1.0, bound + 1.0
    scan = np.linspace(lo, hi, n_scan)
    values = logpost(scan)

    interior = np.zeros(n_scan, dtype=bool)
    interior[1:-1] = (values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])
    interior[0] = values[0] > values[1]
    interior[-1] = values[-1] > values[-2]
    candidates = []
    for i in np.flatnonzero(interior):
        left = scan[max(i - 1, 0)]
        right = scan[min(i + 1, n_scan - 1)]
        g_left, g_right = dlogpost(left), dlogpost(right)
        if g_left > 0 > g_right:
            root = brentq(dlogpost, left, right, xtol=tol)
        else:
            root = float(scan[i])
        candidates.append((root, float(logpost(root))))
    if not candidates:
        i = int(np.argmax(values))
        candidates.append((float(scan[i]), float(values[i])))

    # Merge refinements that landed on the same mode.
    modes: list[tuple[float, float]] = []
    for root, val in sorted(candidates):
        if modes and abs(root - modes[-1][0]) < 10 * tol:
            if val > modes[-1][1]:
                modes[-1] = (root, val)
            continue
        modes.append((root, val))
    best_val = max(v for _, v in modes)
    near_best = [m for m in modes if m[1] >= best_val - 1e-8]
    theta = min(near_best, key=lambda m: abs(m[0]))[0]

    h = 1e-4
    curvature = (dlogpost(theta + h) - dlogpost(theta - h)) / (2 * h)
    se = float(1.0 / np.sqrt(-curvature)) if curvature < 0 else float("nan")
    return PersonScore(
        theta=float(theta),
        se=se,
        n_observed=sum(1 for k in idx if k is not None),
        multimodal=len(modes) > 1,
    )


def map_score_all(
    params: ParameterSet,
    matrix: ResponseMatrix,
    *,
    bound: float = 6.0,
    tol: float = 1e-6,
    threads: int | None = None,
) -> list[PersonScore]:
    """Score every person in a matrix; items are matched by name.

    Persons are independent, so the work may be chunked across threads;
    results do not depend on the thread count.
    """
    cols = {e.item: matrix.item_index(e.item) for e in params.items}
    rows = []
    for nrow in range(matrix.n_persons):
        rows.append(
            [
                int(matrix.codes[nrow, cols[e.item]])
                if matrix.observed[nrow, cols[e.item]]
                else None
                for e in params.items
            ]
        )
    out: list[PersonScore | None] = [None] * matrix.n_persons

    def run(span):
        for i in span:
            out[i] = map_score(params, rows[i], bound=bound, tol=tol)

    if threads and threads > 1:
        chunks = np.array_split(np.arange(matrix.n_persons), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, chunks))
    else:
        run(range(matrix.n_persons))
    return out  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Odds utilities
# ---------------------------------------------------------------------------


def odds(theta: float) -> float:
    """Odds of association with the construct relative to the scale center: e**theta."""
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    return float(np.exp(theta))


def odds_ratio(theta_a: float, theta_b: float) -> float:
    """Odds ratio between two scale positions: e**(theta_a - theta_b).

    Depends only on the difference, which is what makes equal trait gaps
    mean the same thing anywhere on the scale.
    """
    if not (np.isfinite(theta_a) and np.isfinite(theta_b)):
        raise ValueError("thetas must be finite")
    return float(np.exp(theta_a - theta_b))


# ---------------------------------------------------------------------------
# Parameter files
# ---------------------------------------------------------------------------


def _layout_checksum(model: str, items: Sequence[tuple[str, Sequence[int]]]) -> str:
    payload = json.dumps(
        {"model": model, "items": [[name, list(cats)] for name, cats in items]},
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _item_payload(model: str, entry: ItemEntry) -> dict:
    base = {"id": entry.item, "categories": list(entry.categories)}
    p = entry.params
    if model == "grm":
        base.update({"a": float(p.a), "d": [float(v) for v in p.d]})
    elif model == "ggum":
        base.update({"a": float(p.a), "d": float(p.d), "tau": [float(v) for v in p.tau]})
    else:
        base.update(
            {
                "a": [float(v) for v in p.a],
                "c": [float(v) for v in p.c],
                "d": [float(v) for v in p.locations],
            }
        )
    return base


def export_params(fit: FitResult | ParameterSet, path) -> None:
    """Write a parameter file (JSON) with full double precision.

    The file carries the model id, per-item category labels, all
    parameters, the prior, and a checksum of the category layout.  Export
    is deterministic: exporting an imported file reproduces it byte for
    byte.
    """
    params = fit.params if isinstance(fit, FitResult) else fit
    payload = {
        "model": params.model,
        "prior": {"mean": params.prior_mean, "sd": params.prior_sd},
        "scale_note": params.scale_note,
        "items": [_item_payload(params.model, e) for e in params.items],
        "layout_checksum": _layout_checksum(
            params.model, [(e.item, e.categories) for e in params.items]
        ),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def import_params(path, expect_model: str | None = None) -> ParameterSet:
    """Read and validate a parameter file written by :func:`export_params`.

    Raises if the model does not match ``expect_model``, if the layout
    checksum fails, or if any parameter violates its model's constraints.
    """
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        model = payload["model"]
        raw_items = payload["items"]
        prior = payload.get("prior", {"mean": 0.0, "sd": 1.0})
    except KeyError as exc:
        raise ValueError(f"{path}: parameter file lacks field {exc}") from None
    if model not in MODELS:
        raise ValueError(f"{path}: unknown model {model!r}")
    if expect_model is not None and model != expect_model:
        raise ValueError(f"{path}: file is for model {model!r}, expected {expect_model!r}")

    entries = []
    for raw in raw_items:
        cats = tuple(int(c) for c in raw["categories"])
        if model == "grm":
            p = GrmItemParams(a=raw["a"], d=np.asarray(raw["d"], dtype=np.float64))
        elif model == "ggum":
            p = GgumItemParams(
                a=raw["a"], d=raw["d"], tau=np.asarray(raw["tau"], dtype=np.float64)
            )
        else:
            p = NrmItemParams(
                a=np.asarray(raw["a"], dtype=np.float64),
                c=np.asarray(raw["c"], dtype=np.float64),
            )
        entries.append(ItemEntry(item=raw["id"], categories=cats, params=p))

    stored = payload.get("layout_checksum")
    computed = _layout_checksum(model, [(e.item, e.categories) for e in entries])
    if stored is not None and stored != computed:
        raise ValueError(f"{path}: category layout checksum mismatch")
    return ParameterSet(
        model=model,
        items=tuple(entries),
        prior_mean=float(prior.get("mean", 0.0)),
        prior_sd=float(prior.get("sd", 1.0)),
        scale_note=payload.get("scale_note", _SCALE_NOTE),
    )
