"""Synthetic diffusion paths and return construction.

Three generators are provided: a square-root mean-reverting rate model
(Milstein scheme with reflection at zero), a stochastic-variance model whose
returns are conditionally Gaussian given the substep-averaged variance, and
geometric Brownian motion sampled from its exact log-normal transition law.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import IngestionError

MODEL_TAGS = ("CIR", "SV", "GBM", "External")

# post-step floor keeping square-root diffusions strictly positive
POSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class RngStream:
    """Deterministic randomness source: one independent substream per id.

    The same (seed, stream_id) pair always yields the same draws, and
    distinct stream ids give statistically independent streams, so
    replications can run in any order or in parallel.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class SamplePath:
    """Discretely observed path: values at an equally spaced time grid."""

    values: np.ndarray
    delta: float
    model_tag: str = "External"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("path needs at least one observation")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.model_tag not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {self.model_tag!r}")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class ReturnSeries:
    """Scaled one-step differences y_i = (v_{i+1} - v_i) / sqrt(delta)."""

    y: np.ndarray
    delta: float
    source_len: int

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.y.size != self.source_len - 1:
            raise ValueError("length of y must be source_len - 1")

    def __len__(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class CirParams:
    """Square-root mean-reverting model dr = kappa(theta - r)dt + sigma sqrt(r)dW."""

    kappa: float
    theta: float
    sigma: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0 and self.sigma > 0):
            raise ValueError("kappa, theta, sigma must all be positive")
        # keeps the process strictly positive (boundary unattainable)
        if 2.0 * self.kappa * self.theta < self.sigma**2:
            raise ValueError("requires 2*kappa*theta >= sigma^2")


@dataclass(frozen=True)
class SvParams:
    """Stochastic-variance model: dV = kappa(theta - V)dt + alpha V dW.

    The stationary law of V is inverse-gamma with shape a = 1 + 2 kappa/alpha2
    and rate b = 2 theta kappa / alpha2; a > 2 is required so the stationary
    variance is finite.
    """

    kappa: float
    theta: float
    alpha2: float
    substeps: int = 30

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0 and self.alpha2 > 0):
            raise ValueError("kappa, theta, alpha2 must all be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.shape_a <= 2.0:
            raise ValueError("stationary shape 1 + 2*kappa/alpha2 must exceed 2")

    @property
    def shape_a(self) -> float:
        return 1.0 + 2.0 * self.kappa / self.alpha2

    @property
    def rate_b(self) -> float:
        return 2.0 * self.theta * self.kappa / self.alpha2


@dataclass(frozen=True)
class GbmParams:
    """Geometric Brownian motion dr = mu r dt + sigma r dW."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def simulate_cir(params: CirParams, delta: float, n_obs: int, rng: RngStream,
                 r0: float | None = None) -> SamplePath:
    """Simulate the square-root rate model with a Milstein step.

    Parameters
    ----------
    params : CirParams
    delta : float
        Time step between observations.
    n_obs : int
        Number of observations, >= 2.
    rng : RngStream
    r0 : float, optional
        Starting level. Defaults to a draw from the stationary gamma law
        with shape 2*kappa*theta/sigma^2 and scale sigma^2/(2*kappa).

    Returns
    -------
    SamplePath
        Strictly positive path of length n_obs.
    """
    if n_obs < 2:
        raise ValueError("n_obs must be >= 2")
    if not delta > 0:
        raise ValueError("delta must be positive")
    gen = rng.generator()
    k, th, sg = params.kappa, params.theta, params.sigma
    if r0 is None:
        shape = 2.0 * k * th / sg**2
        scale = sg**2 / (2.0 * k)
        r = float(gen.gamma(shape, scale))
    else:
        if not r0 > 0:
            raise ValueError("r0 must be positive")
        r = float(r0)
    eps = gen.standard_normal(n_obs - 1)
    sqdt = math.sqrt(delta)
    quarter = 0.25 * sg**2 * delta
    out = np.empty(n_obs)
    out[0] = max(r, POSITIVITY_FLOOR)
    for i in range(n_obs - 1):
        e = eps[i]
        r = (r + k * (th - r) * delta
             + sg * math.sqrt(max(r, 0.0)) * sqdt * e
             + quarter * (e * e - 1.0))
        r = max(r, POSITIVITY_FLOOR)
        out[i + 1] = r
    return SamplePath(out, delta, "CIR")


def sv_inner_path(params: SvParams, v0: float, eps: np.ndarray,
                  dstar: float) -> np.ndarray:
    """Advance the latent-variance scheme through len(eps) substeps of size
    dstar, starting at v0. Returns len(eps) + 1 values including v0."""
    if not (v0 > 0 and dstar > 0):
        raise ValueError("v0 and dstar must be positive")
    k, th = params.kappa, params.theta
    alpha = math.sqrt(params.alpha2)
    sqdstar = math.sqrt(dstar)
    half_a2 = 0.5 * params.alpha2 * dstar
    out = np.empty(eps.size + 1)
    v = float(v0)
    out[0] = v
    for j in range(eps.size):
        e = eps[j]
        v = (v + k * (th - v) * dstar
             + alpha * v * sqdstar * e
             + half_a2 * v * (e * e - 1.0))
        v = max(v, POSITIVITY_FLOOR)
        out[j + 1] = v
    return out


def simulate_sv(params: SvParams, delta: float, n_obs: int,
                rng: RngStream) -> tuple[ReturnSeries, np.ndarray]:
    """Simulate n_obs conditionally Gaussian returns and their true variances.

    The latent variance runs on a grid of `substeps` inner Milstein steps per
    observation interval; each return is drawn as N(0, vbar_i) where vbar_i
    is the average of the variance over the interval's substeps. The initial
    variance is drawn from the stationary inverse-gamma law.

    Returns
    -------
    (ReturnSeries, np.ndarray)
        The returns and the per-interval averaged variance path (length n_obs).
    """
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    if not delta > 0:
        raise ValueError("delta must be positive")
    gen = rng.generator()
    m = params.substeps
    dstar = delta / m
    # stationary draw: V = 1/G with G ~ Gamma(shape=a, rate=b)
    v = 1.0 / float(gen.gamma(params.shape_a, 1.0 / params.rate_b))
    eps = gen.standard_normal((n_obs, m))
    zeta = gen.standard_normal(n_obs)
    vbar = np.empty(n_obs)
    for i in range(n_obs):
        inner = sv_inner_path(params, v, eps[i], dstar)
        vbar[i] = float(np.mean(inner[:-1]))
        v = float(inner[-1])
    y = np.sqrt(vbar) * zeta
    return ReturnSeries(y, delta, n_obs + 1), vbar


def simulate_gbm(params: GbmParams, delta: float, n_obs: int, rng: RngStream,
                 r0: float = 1.0) -> SamplePath:
    """Simulate geometric Brownian motion by exact log-normal increments.

    Log increments are iid N((mu - sigma^2/2)*delta, sigma^2*delta).
    """
    if n_obs < 2:
        raise ValueError("n_obs must be >= 2")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    gen = rng.generator()
    z = gen.standard_normal(n_obs - 1)
    drift = (params.mu - 0.5 * params.sigma**2) * delta
    vol = params.sigma * math.sqrt(delta)
    log_incr = drift + vol * z
    log_path = np.concatenate(([0.0], np.cumsum(log_incr)))
    return SamplePath(r0 * np.exp(log_path), delta, "GBM")


def to_returns(path: SamplePath) -> ReturnSeries:
    """Scaled differences of a path: y_i = (v_{i+1} - v_i)/sqrt(delta)."""
    v = path.values
    if v.size < 2:
        raise ValueError("need at least two observations")
    y = np.diff(v) / math.sqrt(path.delta)
    return ReturnSeries(y, path.delta, v.size)


def levels_from_returns(rs: ReturnSeries, r0: float = 0.0) -> np.ndarray:
    """Inverse of to_returns: rebuild the level path from scaled differences."""
    steps = rs.y * math.sqrt(rs.delta)
    return r0 + np.concatenate(([0.0], np.cumsum(steps)))


def path_to_csv(path: SamplePath, file) -> None:
    """Write a path as CSV rows `t,value` with t the step index."""
    _write_indexed(file, "value", path.values)


def returns_to_csv(rs: ReturnSeries, file) -> None:
    """Write a return series as CSV rows `t,y`."""
    _write_indexed(file, "y", rs.y)


def path_from_csv(file, delta: float, model_tag: str = "External") -> SamplePath:
    return SamplePath(_read_indexed(file, "value"), delta, model_tag)


def returns_from_csv(file, delta: float) -> ReturnSeries:
    y = _read_indexed(file, "y")
    return ReturnSeries(y, delta, y.size + 1)


def _write_indexed(file, colname: str, values: np.ndarray) -> None:
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="") if own else file
    try:
        w = csv.writer(fh)
        w.writerow(["t", colname])
        for t, v in enumerate(values):
            w.writerow([t, repr(float(v))])
    finally:
        if own:
            fh.close()


def _read_indexed(file, colname: str) -> np.ndarray:
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "r", newline="") if own else file
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    if not rows or rows[0][:2] != ["t", colname]:
        raise IngestionError(f"expected header 't,{colname}'")
    bad = []
    vals = []
    for num, row in enumerate(rows[1:], start=2):
        try:
            vals.append(float(row[1]))
        except (IndexError, ValueError):
            bad.append(num)
    if bad:
        raise IngestionError(f"unparsable rows: {bad}")
    return np.asarray(vals)
