"""Category-probability kernels for three polytomous latent-trait models.

All three models map a scalar trait value theta (in logits) to a probability
distribution over an item's response categories:

* GRM - graded response model: cumulative-boundary logistic curves for
  ordered categories.
* GGUM - generalized graded unfolding model: single-peaked curves where
  endorsement probability peaks at theta = d and falls off symmetrically.
* NRM - nominal response model: a softmax over categories with no order
  assumption.

Functions here are stateless and accept a scalar theta or a 1-D array of
thetas; with an array they return one distribution per row.  Computations
run in log space wherever exponentials could overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import singledispatch
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit, log_expit, logsumexp

__all__ = [
    "GrmItemParams",
    "GgumItemParams",
    "NrmItemParams",
    "grm_cumulative",
    "grm_category_probs",
    "ggum_category_probs",
    "nrm_category_probs",
    "category_probs",
    "category_logprobs",
    "dtheta_category_logprobs",
    "person_loglik",
    "person_loglik_dtheta",
]

_CENTER_TOL = 1e-12


@dataclass(frozen=True)
class GrmItemParams:
    """Graded response model item: discrimination ``a`` and increasing
    boundary locations ``d`` (length m-1 for m categories)."""

    a: float
    d: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "d", np.atleast_1d(np.asarray(self.d, dtype=np.float64)))
        if not np.isfinite(self.a) or self.a <= 0:
            raise ValueError("GRM discrimination must be positive and finite")
        if self.d.ndim != 1 or self.d.size < 1 or not np.all(np.isfinite(self.d)):
            raise ValueError("GRM boundary locations must be a finite 1-D vector")
        if np.any(np.diff(self.d) <= 0):
            raise ValueError("GRM boundary locations must be strictly increasing")

    @property
    def n_categories(self) -> int:
        return self.d.size + 1


@dataclass(frozen=True)
class GgumItemParams:
    """Unfolding model item: discrimination ``a``, location ``d``, and
    threshold vector ``tau`` for steps k = 1..C.

    C is the number of observable categories minus one; the model works on
    M + 1 = 2C + 2 subjective responses.  The implied full threshold vector
    is [0, tau_1..tau_C, 0, -tau_C..-tau_1]: the step at the neutral
    position is fixed at zero and opposing steps mirror each other, so only
    tau_1..tau_C are free.
    """

    a: float
    d: float
    tau: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "tau", np.atleast_1d(np.asarray(self.tau, dtype=np.float64)))
        if not np.isfinite(self.a) or self.a <= 0:
            raise ValueError("GGUM discrimination must be positive and finite")
        if not np.isfinite(self.d):
            raise ValueError("GGUM location must be finite")
        if self.tau.ndim != 1 or self.tau.size < 1 or not np.all(np.isfinite(self.tau)):
            raise ValueError("GGUM thresholds must be a finite 1-D vector")

    @property
    def n_categories(self) -> int:
        return self.tau.size + 1

    def full_tau(self) -> NDArray[np.float64]:
        """Threshold vector over all subjective responses w = 0..M."""
        return np.concatenate(([0.0], self.tau, [0.0], -self.tau[::-1]))


@dataclass(frozen=True)
class NrmItemParams:
    """Nominal model item: per-category slopes ``a`` and intercepts ``c``.

    The softmax is invariant to adding a constant to all slopes or all
    intercepts, so both vectors are centered to sum to zero on
    construction.  Category locations in slope-location form are exposed
    via :attr:`locations` (d_k = -c_k / a_k, taken as 0 where the slope
    vanishes).
    """

    a: NDArray[np.float64]
    c: NDArray[np.float64]

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        if a.shape != c.shape or a.ndim != 1 or a.size < 2:
            raise ValueError("NRM slopes and intercepts must be equal-length vectors (m >= 2)")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(c))):
            raise ValueError("NRM parameters must be finite")
        # Idempotent centering: leave already-centered vectors bit-identical.
        if abs(a.mean()) > _CENTER_TOL:
            a = a - a.mean()
        if abs(c.mean()) > _CENTER_TOL:
            c = c - c.mean()
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @classmethod
    def from_locations(cls, a, d) -> "NrmItemParams":
        """Build from slope-location form, c_k = -a_k * d_k."""
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        d = np.atleast_1d(np.asarray(d, dtype=np.float64))
        return cls(a=a, c=-a * d)

    @property
    def locations(self) -> NDArray[np.float64]:
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(np.abs(self.a) > _CENTER_TOL, -self.c / self.a, 0.0)
        return d

    @property
    def n_categories(self) -> int:
        return self.a.size


def _theta_rows(theta):
    arr = np.asarray(theta, dtype=np.float64)
    return np.atleast_1d(arr), arr.ndim == 0


def grm_cumulative(params: GrmItemParams, theta, x: int):
    """Probability of responding with category ``x`` or greater.

    ``x`` is the 1-based category index.  The lowest category or greater is
    certain (x = 1 gives 1); one past the top (x = m + 1) gives 0; interior
    boundaries follow the logistic curve exp(a(theta-d)) / (1+exp(a(theta-d))).
    """
    t, scalar = _theta_rows(theta)
    m = params.n_categories
    if not 1 <= x <= m + 1:
        raise ValueError(f"boundary index {x} outside 1..{m + 1}")
    if x == 1:
        out = np.ones_like(t)
    elif x == m + 1:
        out = np.zeros_like(t)
    else:
        out = expit(params.a * (t - params.d[x - 2]))
    return float(out[0]) if scalar else out


def _grm_logprobs(params: GrmItemParams, t: NDArray) -> NDArray:
    # log(sigma(z_k) - sigma(z_{k+1})) expanded as
    # log sigma(z_k) + log sigma(-z_{k+1}) + log(1 - e^{-(z_k - z_{k+1})}),
    # which never subtracts two saturated logistic values.
    a, d = params.a, params.d
    z = a * (t[:, None] - d[None, :])
    m = params.n_categories
    out = np.empty((t.size, m))
    out[:, 0] = log_expit(-z[:, 0])
    out[:, m - 1] = log_expit(z[:, m - 2])
    if m > 2:
        gap = a * np.diff(d)
        with np.errstate(divide="ignore"):
            log_gap = np.log(-np.expm1(-gap))
        out[:, 1 : m - 1] = log_expit(z[:, : m - 2]) + log_expit(-z[:, 1:]) + log_gap[None, :]
    return out


def _grm_dtheta(params: GrmItemParams, t: NDArray) -> NDArray:
    a, d = params.a, params.d
    z = a * (t[:, None] - d[None, :])
    s = np.exp(log_expit(z) + log_expit(-z))  # logistic density at each boundary
    m = params.n_categories
    probs = np.maximum(np.exp(_grm_logprobs(params, t)), 1e-300)
    num = np.empty((t.size, m))
    num[:, 0] = -s[:, 0]
    num[:, m - 1] = s[:, m - 2]
    if m > 2:
        num[:, 1 : m - 1] = s[:, : m - 2] - s[:, 1:]
    return a * num / probs


def _ggum_log_f(params: GgumItemParams, t: NDArray) -> NDArray:
    steps = np.cumsum(params.full_tau())
    m_sub = steps.size  # M + 1 subjective responses
    w = np.arange(m_sub)
    return params.a * (w[None, :] * (t[:, None] - params.d) - steps[None, :])


def _ggum_logprobs(params: GgumItemParams, t: NDArray) -> NDArray:
    g = _ggum_log_f(params, t)
    log_phi = g - logsumexp(g, axis=1, keepdims=True)
    c = params.tau.size
    return np.logaddexp(log_phi[:, : c + 1], log_phi[:, ::-1][:, : c + 1])


def _ggum_dtheta(params: GgumItemParams, t: NDArray) -> NDArray:
    g = _ggum_log_f(params, t)
    log_phi = g - logsumexp(g, axis=1, keepdims=True)
    phi = np.exp(log_phi)
    c = params.tau.size
    m_top = 2 * c + 1
    w = np.arange(m_top + 1, dtype=np.float64)
    mean_w = phi @ w
    z = np.arange(c + 1, dtype=np.float64)
    # weight of the low-side subjective response within its mirror pair
    lo = expit(log_phi[:, : c + 1] - log_phi[:, ::-1][:, : c + 1])
    pair_w = lo * z[None, :] + (1.0 - lo) * (m_top - z)[None, :]
    return params.a * (pair_w - mean_w[:, None])


def _nrm_logits(params: NrmItemParams, t: NDArray) -> NDArray:
    return t[:, None] * params.a[None, :] + params.c[None, :]


def _nrm_logprobs(params: NrmItemParams, t: NDArray) -> NDArray:
    logits = _nrm_logits(params, t)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _nrm_dtheta(params: NrmItemParams, t: NDArray) -> NDArray:
    probs = np.exp(_nrm_logprobs(params, t))
    return params.a[None, :] - (probs @ params.a)[:, None]


@singledispatch
def category_logprobs(params, theta):
    """Log category probabilities at theta; rows sum (in probability) to 1."""
    raise TypeError(f"unsupported item parameter type: {type(params).__name__}")


@category_logprobs.register
def _(params: GrmItemParams, theta):
    t, scalar = _theta_rows(theta)
    out = _grm_logprobs(params, t)
    return out[0] if scalar else out


@category_logprobs.register
def _(params: GgumItemParams, theta):
    t, scalar = _theta_rows(theta)
    out = _ggum_logprobs(params, t)
    return out[0] if scalar else out


@category_logprobs.register
def _(params: NrmItemParams, theta):
    t, scalar = _theta_rows(theta)
    out = _nrm_logprobs(params, t)
    return out[0] if scalar else out


@singledispatch
def dtheta_category_logprobs(params, theta):
    """Derivative of each log category probability with respect to theta."""
    raise TypeError(f"unsupported item parameter type: {type(params).__name__}")


@dtheta_category_logprobs.register
def _(params: GrmItemParams, theta):
    t, scalar = _theta_rows(theta)
    out = _grm_dtheta(params, t)
    return out[0] if scalar else out


@dtheta_category_logprobs.register
def _(params: GgumItemParams, theta):
    t, scalar = _theta_rows(theta)
    out = _ggum_dtheta(params, t)
    return out[0] if scalar else out


@dtheta_category_logprobs.register
def _(params: NrmItemParams, theta):
    t, scalar = _theta_rows(theta)
    out = _nrm_dtheta(params, t)
    return out[0] if scalar else out


def category_probs(params, theta):
    """Category probabilities at theta (any model); each row sums to 1."""
    return np.exp(category_logprobs(params, theta))


def grm_category_probs(params: GrmItemParams, theta):
    """GRM category probabilities: adjacent differences of the cumulative curve."""
    return category_probs(params, theta)


def ggum_category_probs(params: GgumItemParams, theta):
    """Unfolding-model probabilities over observable categories z = 0..C.

    Each observable category combines the two subjective responses w = z
    and w = M - z: P(z) = (f(z) + f(M-z)) / sum_w f(w), with
    f(w) = exp(a * (w (theta - d) - sum_{k<=w} tau_k)) over the full mirrored
    threshold vector.  Summing the mirror pair keeps every probability
    positive and the distribution normalized.
    """
    return category_probs(params, theta)


def nrm_category_probs(params: NrmItemParams, theta):
    """Nominal-model probabilities: softmax of a_k * theta + c_k (max-subtracted)."""
    return category_probs(params, theta)


def _check_response(params, k: int, item: int) -> None:
    m = params.n_categories
    if not 0 <= k < m:
        raise ValueError(f"item {item}: category index {k} outside 0..{m - 1}")


def person_loglik(item_params: Sequence, responses: Sequence[int | None], theta):
    """Log-likelihood of one response vector at theta.

    ``responses`` holds 0-based category indices aligned with
    ``item_params``; ``None`` marks a missing response, which contributes
    nothing.  Accepts a scalar or array theta.
    """
    if len(item_params) != len(responses):
        raise ValueError("responses and item parameters must align")
    t, scalar = _theta_rows(theta)
    total = np.zeros(t.size)
    for i, (params, k) in enumerate(zip(item_params, responses)):
        if k is None:
            continue
        _check_response(params, int(k), i)
        total += category_logprobs(params, t)[:, int(k)]
    return float(total[0]) if scalar else total


def person_loglik_dtheta(item_params: Sequence, responses: Sequence[int | None], theta):
    """Derivative of :func:`person_loglik` with respect to theta."""
    if len(item_params) != len(responses):
        raise ValueError("responses and item parameters must align")
    t, scalar = _theta_rows(theta)
    total = np.zeros(t.size)
    for i, (params, k) in enumerate(zip(item_params, responses)):
        if k is None:
            continue
        _check_response(params, int(k), i)
        total += dtheta_category_logprobs(params, t)[:, int(k)]
    return float(total[0]) if scalar else total
