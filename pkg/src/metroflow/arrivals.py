"""Scalar state-space model of station arrivals.

The observed count is modeled as a deviation from the cluster centroid with
an exogenous correction: d_t = y_t - m(t) - beta.x_t follows a latent AR(1)
level observed in Gaussian noise. One Kalman step per bin; maximum
likelihood by prediction-error decomposition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import ExogenousVector, StationId, TimeBin

VAR_FLOOR = 1e-6
DIFFUSE_P0 = 1e7


@dataclass(frozen=True)
class StateSpaceParams:
    phi: float
    sigma2_eps: float
    sigma2_eta: float
    beta: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.phi < 1.0:
            raise ValueError(f"phi must be in [0, 1), got {self.phi}")
        if self.sigma2_eps <= 0:
            raise ValueError("sigma2_eps must be > 0")
        if self.sigma2_eta < 0:
            raise ValueError("sigma2_eta must be >= 0")

    def to_json(self) -> dict:
        return {"phi": self.phi, "s2_eps": self.sigma2_eps,
                "s2_eta": self.sigma2_eta, "beta": list(self.beta)}

    @classmethod
    def from_json(cls, doc: dict | str) -> "StateSpaceParams":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(phi=float(doc["phi"]), sigma2_eps=float(doc["s2_eps"]),
                   sigma2_eta=float(doc["s2_eta"]),
                   beta=tuple(float(b) for b in doc.get("beta", ())))


@dataclass(frozen=True)
class FilterState:
    mu: float = 0.0
    P: float = 0.0
    last_bin: TimeBin | None = None

    def __post_init__(self):
        if self.P < 0:
            raise ValueError("P must be >= 0")


def stationary_state(params: StateSpaceParams) -> FilterState:
    """Initial state: stationary level prior (diffuse if phi were 1)."""
    if params.phi < 1.0:
        P0 = params.sigma2_eta / (1.0 - params.phi ** 2)
    else:
        P0 = DIFFUSE_P0
    return FilterState(mu=0.0, P=P0)


@dataclass(frozen=True)
class ArrivalForecast:
    station: StationId
    target_bin: TimeBin
    horizon: int
    point: float
    variance: float

    @property
    def clamped_point(self) -> float:
        return max(0.0, self.point)


def _beta_dot(params: StateSpaceParams, x: ExogenousVector | None) -> float:
    if x is None or not params.beta:
        return 0.0
    return float(np.dot(params.beta, x.values))


def filter_update(state: FilterState, params: StateSpaceParams, y: float,
                  m: float, x: ExogenousVector | None = None,
                  target_bin: TimeBin | None = None) -> tuple[FilterState, float]:
    """One scalar Kalman step on the deviation d = y - m - beta.x."""
    d = y - m - _beta_dot(params, x)
    if not math.isfinite(d):
        raise ValueError("non-finite observation")
    mu_prior = params.phi * state.mu
    P_prior = params.phi ** 2 * state.P + params.sigma2_eta
    nu = d - mu_prior
    K = P_prior / (P_prior + params.sigma2_eps)
    mu_post = mu_prior + K * nu
    P_post = (1.0 - K) * P_prior
    return FilterState(mu=mu_post, P=P_post, last_bin=target_bin), nu


def predict(state: FilterState, params: StateSpaceParams, m_future: float,
            x_future: ExogenousVector | None, h: int,
            station: StationId = "", target_bin: TimeBin | None = None,
            ) -> ArrivalForecast:
    """h-step forecast (h in {1, 2}) from the current filtered state."""
    if h not in (1, 2):
        raise ValueError("horizon must be 1 or 2")
    phi = params.phi
    point = m_future + phi ** h * state.mu + _beta_dot(params, x_future)
    if h == 1:
        variance = phi ** 2 * state.P + params.sigma2_eta + params.sigma2_eps
    else:
        variance = phi ** 4 * state.P + (phi ** 2 + 1) * params.sigma2_eta + params.sigma2_eps
    return ArrivalForecast(station=station, target_bin=target_bin, horizon=h,
                           point=point, variance=variance)


def loglik(params: StateSpaceParams,
           series: list[tuple[float, float, ExogenousVector | None]],
           init_state: FilterState | None = None) -> float:
    """Gaussian log-likelihood via the prediction-error decomposition."""
    if not series:
        raise ValueError("series must be non-empty")
    state = init_state if init_state is not None else stationary_state(params)
    ll = 0.0
    for (y, m, x) in series:
        d = y - m - _beta_dot(params, x)
        mu_prior = params.phi * state.mu
        P_prior = params.phi ** 2 * state.P + params.sigma2_eta
        F = P_prior + params.sigma2_eps
        if F <= 0:
            raise ValueError("non-positive innovation variance")
        nu = d - mu_prior
        ll += -0.5 * (math.log(2 * math.pi * F) + nu * nu / F)
        K = P_prior / F
        state = FilterState(mu=mu_prior + K * nu, P=(1 - K) * P_prior)
    return ll


def _unpack(theta: np.ndarray, n_beta: int) -> StateSpaceParams:
    phi = 0.999 / (1.0 + math.exp(-theta[0]))
    s2_eps = max(VAR_FLOOR, math.exp(theta[1]))
    s2_eta = math.exp(theta[2])
    beta = tuple(theta[3:3 + n_beta])
    return StateSpaceParams(phi=phi, sigma2_eps=s2_eps, sigma2_eta=s2_eta, beta=beta)


def fit_mle(day_series: list[list[tuple[float, float, ExogenousVector | None]]],
            n_beta: int = 0, seed: int = 0,
            cluster_label: str = "") -> StateSpaceParams:
    """Fit (phi, variances, beta) by simplex search over concatenated days.

    The filter state resets to the stationary prior at each day boundary.
    Fewer than 5 days falls back to the centroid-only model.
    """
    day_series = [s for s in day_series if s]
    deviations = np.array([y - m for s in day_series for (y, m, _) in s])
    if len(day_series) < 5:
        var = float(np.var(deviations)) if deviations.size else 1.0
        return StateSpaceParams(phi=0.0, sigma2_eps=max(VAR_FLOOR, var),
                                sigma2_eta=0.0, beta=(0.0,) * n_beta)

    def objective(theta: np.ndarray) -> float:
        try:
            params = _unpack(theta, n_beta)
            total = 0.0
            for s in day_series:
                total += loglik(params, s)
        except (ValueError, OverflowError):
            return 1e12
        if not math.isfinite(total):
            return 1e12
        return -total

    var0 = max(VAR_FLOOR, float(np.var(deviations))) if deviations.size else 1.0
    theta0 = np.concatenate([[0.0, math.log(var0), math.log(var0 * 0.5)],
                             np.zeros(n_beta)])
    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(3):
        start = theta0 if attempt == 0 else theta0 + rng.normal(0, 0.5, size=theta0.shape)
        res = optimize.minimize(objective, start, method="Nelder-Mead",
                                options={"maxiter": 2000, "xatol": 1e-6, "fatol": 1e-8})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not math.isfinite(best.fun) or best.fun >= 1e12:
        raise RuntimeError(f"MLE failed for cluster {cluster_label!r}: non-finite objective")
    fitted = _unpack(best.x, n_beta)
    if fitted.sigma2_eta < 1e-8 * fitted.sigma2_eps:
        # with no level innovation the state is identically zero and phi is
        # unidentified; canonicalize to the equivalent phi=0 model
        fitted = StateSpaceParams(phi=0.0, sigma2_eps=fitted.sigma2_eps,
                                  sigma2_eta=fitted.sigma2_eta, beta=fitted.beta)
    return fitted


@dataclass
class FilterCheckpoint:
    mu: float
    P: float
    bin: str

    def to_json(self) -> dict:
        return {"mu": self.mu, "P": self.P, "bin": self.bin}
