"""State-domain variance estimation by local-linear kernel regression.

Responses (squared residuals or squared returns) are regressed on the state
level with a compactly supported kernel; the fitted intercept at the query
point is the variance estimate. The equivalent-weight representation

    xi_i(x0) = W_i * (V2 - (x_i - x0) V1) / (V0 V2 - V1^2),
    V_j = sum_i (x_i - x0)^j W_i,

reproduces the intercept as sum_i xi_i * response_i and satisfies
sum xi_i = 1 and sum xi_i (x_i - x0) = 0 exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateSeriesError, NoCoverageError,
                     SingularDesignError, TooFewPointsError)

# relative determinant tolerance for declaring a local design singular
DET_RTOL = 1e-12

# multiplicative grid of bandwidth candidates around the rule of thumb
CV_GRID = (0.5, 1.0 / math.sqrt(2.0), 1.0, math.sqrt(2.0), 2.0)


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    out = 0.75 * (1.0 - u * u)
    return np.where(np.abs(u) <= 1.0, out, 0.0)


_KERNELS = {"epanechnikov": (_epanechnikov, 0.6)}


@dataclass(frozen=True)
class KernelSpec:
    """Compactly supported symmetric kernel; nu0 is int W(u)^2 du."""

    kind: str = "epanechnikov"

    def __post_init__(self):
        if self.kind not in _KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")

    @property
    def nu0(self) -> float:
        return _KERNELS[self.kind][1]

    def weights(self, u) -> np.ndarray:
        return _KERNELS[self.kind][0](np.asarray(u, dtype=float))


@dataclass(frozen=True)
class StatePairs:
    """Historical (state level, response) pairs for the kernel fit."""

    x: np.ndarray
    resp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "resp", np.asarray(self.resp, dtype=float))
        if self.x.shape != self.resp.shape or self.x.ndim != 1:
            raise ValueError("x and resp must be 1-d arrays of equal length")

    @property
    def count(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class StateVarianceEstimate:
    """Kernel variance estimate with its own sampling-variance estimate.

    var_hat = 2 * sigma2_hat^2 * sum(xi^2); effective_n = 1 / sum(xi^2).
    """

    sigma2_hat: float
    xi_sq_sum: float
    var_hat: float
    bandwidth_used: float = float("nan")

    def __post_init__(self):
        if self.sigma2_hat < 0 or self.var_hat < 0 or self.xi_sq_sum <= 0:
            raise ValueError("invalid state variance estimate")

    @property
    def effective_n(self) -> float:
        return 1.0 / self.xi_sq_sum


def _moments(x: np.ndarray, x0: float, h: float, kernel: KernelSpec):
    d = x - x0
    w = kernel.weights(d / h)
    v0 = float(w.sum())
    wd = w * d
    v1 = float(wd.sum())
    v2 = float((wd * d).sum())
    return d, w, v0, v1, v2


def _check_coverage(x: np.ndarray, x0: float, v0: float) -> None:
    if x.size == 0 or x0 < x.min() or x0 > x.max():
        raise NoCoverageError(f"query {x0} outside historical range")
    if v0 <= 0.0:
        raise NoCoverageError(f"no kernel mass at {x0}")


def local_linear_fit(pairs: StatePairs, x0: float, h: float,
                     kernel: KernelSpec = KernelSpec()) -> tuple[float, float]:
    """Weighted local-linear fit of the response at x0.

    Returns (intercept, slope). A zero-spread neighborhood (all weighted
    points at x0) degrades to the locally constant fit with slope 0; an
    ill-conditioned design raises SingularDesignError.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    d, w, v0, v1, v2 = _moments(pairs.x, x0, h, kernel)
    _check_coverage(pairs.x, x0, v0)
    if v2 == 0.0:
        return float(np.dot(w, pairs.resp) / v0), 0.0
    det = v0 * v2 - v1 * v1
    if det < DET_RTOL * h * h * v0 * v0:
        raise SingularDesignError(f"local design singular at {x0}")
    b0 = float(np.dot(w, pairs.resp))
    b1 = float(np.dot(w * d, pairs.resp))
    return (v2 * b0 - v1 * b1) / det, (v0 * b1 - v1 * b0) / det


def locally_constant_fit(pairs: StatePairs, x0: float, h: float,
                         kernel: KernelSpec = KernelSpec()) -> float:
    """Kernel-weighted mean of the response at x0 (fallback for singular fits)."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    _, w, v0, _, _ = _moments(pairs.x, x0, h, kernel)
    _check_coverage(pairs.x, x0, v0)
    return float(np.dot(w, pairs.resp) / v0)


def locally_constant_weights(pairs: StatePairs, x0: float, h: float,
                             kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    _, w, v0, _, _ = _moments(pairs.x, x0, h, kernel)
    _check_coverage(pairs.x, x0, v0)
    return w / v0


def xi_weights(pairs: StatePairs, x0: float, h: float,
               kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    """Equivalent local-linear weights at x0.

    dot(xi, resp) equals the local-linear intercept; sum(xi) == 1 and
    sum(xi * (x - x0)) == 0. A zero-spread neighborhood returns the
    normalized kernel weights (both identities still hold).
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    d, w, v0, v1, v2 = _moments(pairs.x, x0, h, kernel)
    _check_coverage(pairs.x, x0, v0)
    if v2 == 0.0:
        return w / v0
    det = v0 * v2 - v1 * v1
    if det < DET_RTOL * h * h * v0 * v0:
        raise SingularDesignError(f"local design singular at {x0}")
    return w * (v2 - d * v1) / det


def estimate_drift(pairs_raw: StatePairs, x0: float, h1: float,
                   kernel: KernelSpec = KernelSpec()) -> float:
    """Local-linear conditional-mean estimate (responses are raw returns)."""
    return local_linear_fit(pairs_raw, x0, h1, kernel)[0]


def residual_squares(y: np.ndarray, drift_at_x: np.ndarray) -> np.ndarray:
    """Squared residuals (y - drift)^2; with drift identically 0 this is y^2."""
    y = np.asarray(y, dtype=float)
    drift_at_x = np.asarray(drift_at_x, dtype=float)
    if y.shape != drift_at_x.shape:
        raise ValueError("y and drift_at_x must have equal shapes")
    r = y - drift_at_x
    return r * r


def state_variance(sigma2_hat: float, xi: np.ndarray,
                   bandwidth: float = float("nan")) -> StateVarianceEstimate:
    """Package a variance estimate with var_hat = 2 sigma2_hat^2 sum(xi^2)."""
    if sigma2_hat < 0:
        raise ValueError("sigma2_hat must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    s = float(np.dot(xi, xi))
    if s <= 0:
        raise ValueError("xi weights must not be all zero")
    return StateVarianceEstimate(sigma2_hat, s, 2.0 * sigma2_hat**2 * s, bandwidth)


def s2_squared(sigma2: float, density_at_x: float,
               kernel: KernelSpec = KernelSpec()) -> float:
    """Asymptotic variance factor 2 nu0 sigma^4 / p(x) for the kernel fit."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if not density_at_x > 0:
        raise ValueError("density_at_x must be positive")
    return 2.0 * kernel.nu0 * sigma2 * sigma2 / density_at_x


def kernel_density(x: np.ndarray, x0: float, kernel: KernelSpec = KernelSpec(),
                   h: float | None = None) -> float:
    """Kernel density estimate at x0; bandwidth defaults to the rule of thumb."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = rule_of_thumb_bandwidth(x)
    return float(kernel.weights((x - x0) / h).sum() / (x.size * h))


def rule_of_thumb_bandwidth(x: np.ndarray) -> float:
    """h = 1.06 * std(x) * N^(-1/5); requires at least 2 distinct values."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise TooFewPointsError("need at least 2 points")
    s = float(np.std(x))
    if s <= 0:
        raise DegenerateSeriesError("states are constant")
    return 1.06 * s * x.size ** (-0.2)


def _intercepts_at_data(x: np.ndarray, resp: np.ndarray, h: float,
                        kernel: KernelSpec, loo: bool,
                        chunk: int = 1024) -> np.ndarray:
    """Local-linear intercept at every design point, vectorized in chunks.

    With loo=True the point's own observation is excluded (used by
    cross-validation). Points whose design is empty or singular get NaN.
    """
    n = x.size
    out = np.full(n, np.nan)
    tol_scale = DET_RTOL * h * h
    for start in range(0, n, chunk):
        xe = x[start:start + chunk]
        d = x[:, None] - xe[None, :]
        w = kernel.weights(d / h)
        if loo:
            idx = np.arange(start, min(start + chunk, n))
            w[idx, np.arange(idx.size)] = 0.0
        v0 = w.sum(axis=0)
        wd = w * d
        v1 = wd.sum(axis=0)
        v2 = (wd * d).sum(axis=0)
        b0 = resp @ w
        b1 = resp @ wd
        det = v0 * v2 - v1 * v1
        ok = (v0 > 0) & (det >= tol_scale * v0 * v0) & (v2 > 0)
        col = np.full(xe.size, np.nan)
        col[ok] = (v2[ok] * b0[ok] - v1[ok] * b1[ok]) / det[ok]
        # zero-spread columns degrade to the locally constant fit
        flat = (v0 > 0) & (v2 == 0.0)
        col[flat] = b0[flat] / v0[flat]
        out[start:start + chunk] = col
    return out


def _cv_bandwidth(x: np.ndarray, resp: np.ndarray, kernel: KernelSpec,
                  grid: tuple[float, ...]) -> float:
    """Leave-one-out CV over a multiplicative grid around the rule of thumb.

    Candidates where more than 20% of points have no valid fit are skipped;
    if all are skipped the rule of thumb is returned.
    """
    rot = rule_of_thumb_bandwidth(x)
    best_h, best_loss = rot, math.inf
    for f in grid:
        h = rot * f
        pred = _intercepts_at_data(x, resp, h, kernel, loo=True)
        ok = np.isfinite(pred)
        if ok.sum() < 0.8 * x.size:
            continue
        loss = float(np.mean((resp[ok] - pred[ok]) ** 2))
        if loss < best_loss:
            best_h, best_loss = h, loss
    return best_h


def select_bandwidth(x: np.ndarray, y: np.ndarray,
                     kernel: KernelSpec = KernelSpec(),
                     grid: tuple[float, ...] = CV_GRID) -> tuple[float, float]:
    """Bandwidths (h1 for the mean fit, h for the variance fit).

    Both are picked independently by the same rule: leave-one-out CV on a
    small multiplicative grid around 1.06*std(x)*N^(-1/5). The variance
    bandwidth is selected against squared residuals from the h1 mean fit.

    Requires at least 20 pairs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 20:
        raise TooFewPointsError("need at least 20 pairs")
    if x.shape != y.shape:
        raise ValueError("x and y must have equal shapes")
    h1 = _cv_bandwidth(x, y, kernel, grid)
    drift = _intercepts_at_data(x, y, h1, kernel, loo=False)
    drift = np.where(np.isfinite(drift), drift, 0.0)
    resid2 = residual_squares(y, drift)
    h = _cv_bandwidth(x, resid2, kernel, grid)
    return h1, h
