"""Combining time-domain and state-domain variance estimates.

Two routes are provided. The dynamic route weights the two estimators by
their estimated sampling variances, so the weight adapts every step. The
Bayesian route treats the state-domain estimate as the mean of an
inverse-gamma prior on the variance and shrinks the window estimate toward
it; with moment-matched hyperparameters the posterior-mean weights become a
fixed function of the smoothing parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCaseWarning

MODES = ("Dynamic", "Bayesian", "TimeOnly", "StateOnly")


@dataclass(frozen=True)
class IgPrior:
    """Inverse-gamma prior on the variance; mean b/(a-1), needs a > 2 for a
    finite prior variance. b = 0 is a degenerate (point-at-zero-mean) prior."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 2.0:
            raise ValueError("shape a must exceed 2")
        if self.b < 0.0:
            raise ValueError("rate b must be nonnegative")

    @property
    def mean(self) -> float:
        return self.b / (self.a - 1.0)

    @property
    def variance(self) -> float:
        return self.b**2 / ((self.a - 1.0) ** 2 * (self.a - 2.0))


@dataclass(frozen=True)
class IntegratedEstimate:
    """Convex combination of the two estimators; w_time is the weight on the
    time-domain component."""

    sigma2_hat: float
    w_time: float
    var_time: float = float("nan")
    var_state: float = float("nan")
    mode: str = "Dynamic"

    def __post_init__(self):
        if not (0.0 <= self.w_time <= 1.0):
            raise ValueError("w_time must lie in [0, 1]")
        if self.sigma2_hat < 0:
            raise ValueError("sigma2_hat must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


def dynamic_weight(var_time: float, var_state: float) -> float:
    """Weight on the time-domain estimator: var_state/(var_time + var_state).

    Both variances zero is a degenerate tie; 0.5 is returned with a warning.
    """
    if var_time < 0 or var_state < 0:
        raise ValueError("variances must be nonnegative")
    total = var_time + var_state
    if total == 0.0:
        warnings.warn("both variance estimates are zero; weight set to 0.5",
                      DegenerateCaseWarning, stacklevel=2)
        return 0.5
    return min(max(var_state / total, 0.0), 1.0)


def integrate(time_est: float, state_est: float, w: float,
              var_time: float = float("nan"), var_state: float = float("nan"),
              mode: str = "Dynamic") -> IntegratedEstimate:
    """Combine two variance estimates with weight w on the time-domain one."""
    if not (0.0 <= w <= 1.0):
        raise ValueError("w must lie in [0, 1]")
    if time_est < 0 or state_est < 0:
        raise ValueError("estimates must be nonnegative")
    sigma2 = w * time_est + (1.0 - w) * state_est
    return IntegratedEstimate(sigma2, w, var_time, var_state, mode)


def combine_estimates(tve, sve) -> IntegratedEstimate:
    """Variance-weighted combination of a TimeVarianceEstimate and a
    StateVarianceEstimate."""
    w = dynamic_weight(tve.var_hat, sve.var_hat)
    return integrate(tve.sigma2_hat, sve.sigma2_hat, w,
                     var_time=tve.var_hat, var_state=sve.var_hat)


def ig_posterior(prior: IgPrior, window: np.ndarray) -> IgPrior:
    """Posterior after observing zero-mean normal data with unknown variance:
    a' = a + n/2, b' = b + sum(y^2)/2."""
    y = np.asarray(window, dtype=float)
    return IgPrior(prior.a + 0.5 * y.size, prior.b + 0.5 * float(np.dot(y, y)))


def _blend(est: float, prior_mean: float, m: float, a: float) -> float:
    k = 2.0 * (a - 1.0)
    return (m / (m + k)) * est + (k / (m + k)) * prior_mean


def bayes_ma(ma_est: float, prior_mean: float, n: int, a: float) -> float:
    """Posterior-mean shrinkage of the moving average toward the prior mean;
    weights n/(n + 2(a-1)) and 2(a-1)/(n + 2(a-1))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if a <= 1.0:
        raise ValueError("a must exceed 1")
    if ma_est < 0 or prior_mean < 0:
        raise ValueError("estimates must be nonnegative")
    return _blend(ma_est, prior_mean, float(n), a)


def effective_n(lam: float, n: int) -> float:
    """Equivalent window size of the smoother: (1 - lam^n)/(1 - lam); lam = 1
    gives exactly n."""
    if not (0.0 < lam <= 1.0):
        raise ValueError("lam must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    if lam == 1.0:
        return float(n)
    return (1.0 - lam**n) / (1.0 - lam)


def bayes_es(es_est: float, prior_mean: float, lam: float, n: int,
             a: float) -> float:
    """Shrinkage of the smoothed estimator using the equivalent window size
    in place of n; identical to bayes_ma when lam = 1."""
    if a <= 1.0:
        raise ValueError("a must exceed 1")
    if es_est < 0 or prior_mean < 0:
        raise ValueError("estimates must be nonnegative")
    return _blend(es_est, prior_mean, effective_n(lam, n), a)


def match_hyperparams(state_est: float) -> IgPrior:
    """Moment-matched prior centered at the state-domain estimate: matching
    mean b/(a-1) = s and variance b^2/((a-1)^2 (a-2)) = 2 s^2 gives a = 2.5,
    b = 1.5 s."""
    if state_est < 0:
        raise ValueError("state_est must be nonnegative")
    if state_est == 0.0:
        warnings.warn("state estimate is zero; prior is degenerate",
                      DegenerateCaseWarning, stacklevel=2)
    return IgPrior(2.5, 1.5 * state_est)


def nonbayes_static(es_est: float, state_est: float, lam: float, n: int) -> float:
    """Static-weight combination implied by the moment-matched prior:

        (1-lam^n) ES + 3 (1-lam) S
        --------------------------
          (1-lam^n) + 3 (1-lam)

    lam = 1 makes the state weight vanish; the smoothed estimate is returned
    with a warning.
    """
    if es_est < 0 or state_est < 0:
        raise ValueError("estimates must be nonnegative")
    if not (0.0 < lam <= 1.0):
        raise ValueError("lam must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    if lam == 1.0:
        warnings.warn("lam = 1 degenerates to the pure smoothed estimator",
                      DegenerateCaseWarning, stacklevel=2)
        return es_est
    num = 1.0 - lam**n
    denom = num + 3.0 * (1.0 - lam)
    return (num * es_est + 3.0 * (1.0 - lam) * state_est) / denom


def efficiency_ratios(d: float, s1_sq: float, s2_sq: float) -> tuple[float, float]:
    """Asymptotic efficiency of the integrated estimator over each component:
    (1 + d s2^2/s1^2, 1 + s1^2/(d s2^2)). The two excesses multiply to 1."""
    if not (d > 0 and s1_sq > 0 and s2_sq > 0):
        raise ValueError("d, s1_sq, s2_sq must all be positive")
    r = d * s2_sq / s1_sq
    return 1.0 + r, 1.0 + 1.0 / r
