"""Renyi-DP accounting for noisy-threshold sequential tests.

Curves are plain callables ``alpha -> epsilon(alpha)`` wrapped with a
provenance string. The private SPRT budget depends on moments of the
conditional expected stopping time given the threshold noise; those are
estimated by Monte Carlo over the noise in :func:`estimate_ta_tb`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .mechanisms import ParameterError
from .models import HypothesisPair, as_trunc, drift_constants
from .rng import RngStream
from .sequential_private import PrivTestConfig
from .sprt import SprtThresholds

ALPHA_MIN = 1.01
ALPHA_MAX = 512.0
# 64 log-spaced orders in (ALPHA_MIN, ALPHA_MAX]
ALPHA_GRID = np.geomspace(ALPHA_MIN, ALPHA_MAX, 65)[1:]
GAMMA_GRID = (1.1, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0)
MIN_NOISE_DRAWS = 1000


@dataclass(frozen=True)
class RdpCurve:
    evaluator: Callable[[float], float]
    provenance: str = ""

    def __call__(self, alpha: float) -> float:
        if not alpha > 1:
            raise ValueError(f"RDP order must exceed 1, got {alpha}")
        return float(self.evaluator(alpha))

    def on_grid(self, alphas: Sequence[float]) -> np.ndarray:
        return np.array([self(a) for a in alphas])


ZERO_CURVE = RdpCurve(lambda alpha: 0.0, "zero")


def constant_curve(eps: float) -> RdpCurve:
    return RdpCurve(lambda alpha: eps, f"constant({eps:g})")


def gaussian_rdp_curve(sigma: float, sensitivity: float) -> RdpCurve:
    """``alpha * sens^2 / (2 sigma^2)``; infinite when ``sigma == 0``."""
    if sigma < 0 or sensitivity < 0:
        raise ParameterError("sigma", "sigma and sensitivity must be non-negative")
    if sigma == 0:
        return RdpCurve(lambda alpha: math.inf, "gaussian(sigma=0, non-private)")
    k = sensitivity * sensitivity / (2.0 * sigma * sigma)
    return RdpCurve(lambda alpha: alpha * k, f"gaussian(sigma={sigma:g}, sens={sensitivity:g})")


def compose_rdp(curves: Sequence[RdpCurve]) -> RdpCurve:
    curves = tuple(curves)
    if not curves:
        raise ValueError("compose_rdp needs at least one curve")
    if len(curves) == 1:
        return curves[0]
    return RdpCurve(lambda alpha: math.fsum(c(alpha) for c in curves),
                    "compose(" + ", ".join(c.provenance for c in curves) + ")")


def _dp_objective(curve: RdpCurve, log_inv_delta: float) -> Callable[[float], float]:
    return lambda alpha: curve(alpha) + log_inv_delta / (alpha - 1.0)


def rdp_to_dp(
    curve: RdpCurve,
    delta: float,
    alphas: Optional[Sequence[float]] = None,
    refine: bool = True,
) -> tuple[float, float]:
    """Smallest ``eps(alpha) + log(1/delta)/(alpha-1)`` over the order grid.

    The grid minimum is polished by a bounded scalar search between its
    neighbours; the refined point is kept only if it is better.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta", f"must lie in (0, 1), got {delta}")
    grid = np.asarray(ALPHA_GRID if alphas is None else alphas, dtype=float)
    obj = _dp_objective(curve, math.log(1.0 / delta))
    vals = np.array([obj(a) for a in grid])
    finite = np.isfinite(vals)
    if not finite.any():
        raise ValueError(f"RDP curve {curve.provenance!r} is infinite at every order")
    i = int(np.argmin(np.where(finite, vals, np.inf)))
    best_eps, best_alpha = float(vals[i]), float(grid[i])
    if refine and len(grid) > 2:
        lo = float(grid[max(i - 1, 0)])
        hi = float(grid[min(i + 1, len(grid) - 1)])
        if hi > lo:
            res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10 * hi})
            if res.success and math.isfinite(res.fun) and res.fun < best_eps:
                best_eps, best_alpha = float(res.fun), float(res.x)
    return best_eps, best_alpha


# -- generic above-threshold bound --------------------------------------------


@dataclass(frozen=True)
class SupForm:
    """Stopping term given as ``sup_z E[T | Z1 = z]``."""

    sup_expected_t: float


@dataclass(frozen=True)
class MomentForm:
    """Stopping term given as the moment ``E_Z[E[T | Z1]^gamma]``."""

    gamma: float
    moment: float


def gen_above_thresh_rdp(
    alpha: float,
    eps1: RdpCurve,
    eps2: RdpCurve,
    stopping_term: Union[SupForm, MomentForm],
) -> float:
    """RDP of the generic above-threshold test at order ``alpha``.

    ``eps1`` is the threshold mechanism's curve and ``eps2`` the query
    mechanism's. With a sup-form term the bound is
    ``eps1(a) + eps2(a) + log(sup)/(a-1)``; with a moment-form term the
    threshold curve is evaluated at ``gamma*a/(gamma-1)`` with coefficient
    ``(a - (gamma-1)/gamma)/(a-1)`` and the log-moment is divided by
    ``gamma*(a-1)``.
    """
    if not alpha > 1:
        raise ValueError(f"RDP order must exceed 1, got {alpha}")
    if isinstance(stopping_term, SupForm):
        s = stopping_term.sup_expected_t
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"stopping term must be finite and positive, got {s}")
        return eps1(alpha) + eps2(alpha) + math.log(s) / (alpha - 1.0)
    g, m = stopping_term.gamma, stopping_term.moment
    if not g > 1:
        raise ParameterError("gamma", f"must exceed 1, got {g}")
    if not (math.isfinite(m) and m > 0):
        raise ValueError(f"stopping moment must be finite and positive, got {m}")
    coef = (alpha - (g - 1.0) / g) / (alpha - 1.0)
    return coef * eps1(g * alpha / (g - 1.0)) + eps2(alpha) + math.log(m) / (g * (alpha - 1.0))


# -- stopping-time moments ----------------------------------------------------


@dataclass(frozen=True)
class StoppingMoment:
    gamma: float
    value: float
    stderr: float
    log_value: float

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "value": self.value, "stderr": self.stderr, "log_value": self.log_value}


def _rho(mu: float, a_trunc: float, c: float) -> float:
    return -math.expm1(-(1.0 - c) * mu * mu / (2.0 * a_trunc * a_trunc))


def _moment(threshold: float, mu: float, rho: float, sigma1: float, sigma2: float,
            gamma: float, z: Optional[np.ndarray]) -> StoppingMoment:
    base = 1.0 + 1.0 / rho + 3.0 * math.sqrt(2.0) * sigma2 / (2.0 * mu)
    if z is None:
        bracket = max(base + 5.0 * threshold / (2.0 * mu), 1.0)
        lv = gamma * math.log(bracket)
        return StoppingMoment(gamma, math.exp(lv), 0.0, lv)
    bracket = np.maximum(base + 5.0 * (threshold + sigma1 * z) / (2.0 * mu), 1.0)
    logs = gamma * np.log(bracket)
    n = len(logs)
    lv = float(logsumexp(logs) - math.log(n))
    top = float(logs.max())
    scaled = np.exp(logs - top)
    se = math.exp(top) * float(scaled.std(ddof=1)) / math.sqrt(n)
    return StoppingMoment(gamma, math.exp(lv), se, lv)


def estimate_ta_tb(
    pair: HypothesisPair,
    thresholds: SprtThresholds,
    trunc,
    sigma1: float,
    sigma2: float,
    gamma: float,
    c: float = 0.5,
    n_draws: int = 10_000,
    seed: int = 0,
) -> tuple[StoppingMoment, StoppingMoment]:
    """Monte Carlo estimates of the lower- and upper-side stopping moments.

    Lower side: ``E_Z[1 + 1/rho1 + (5(a+Z) + 3 sqrt2 sigma2)/(2 mu0)]^gamma``
    with ``rho1 = 1 - exp(-(1-c) mu0^2/(2A^2))``; the upper side swaps in
    ``b`` and ``mu1``. ``Z ~ N(0, sigma1^2)``. The bracket bounds a
    conditional expected stopping time and is floored at 1.
    """
    a_trunc = as_trunc(trunc).a_trunc
    if not math.isfinite(a_trunc):
        raise ParameterError("A", "stopping moments need a finite truncation level")
    if not 0 < c < 1:
        raise ParameterError("c", f"must lie in (0, 1), got {c}")
    if not gamma >= 1:
        raise ParameterError("gamma", f"must be >= 1, got {gamma}")
    if n_draws < MIN_NOISE_DRAWS:
        raise ParameterError("n_draws", f"need at least {MIN_NOISE_DRAWS} noise draws, got {n_draws}")
    dc = drift_constants(pair, a_trunc)
    if not (dc.mu0 > 0 and dc.mu1 > 0):
        raise ValueError("drift constants must be positive")
    rho1 = _rho(dc.mu0, a_trunc, c)
    rho0 = _rho(dc.mu1, a_trunc, c)
    za = zb = None
    if sigma1 > 0:
        root = RngStream(seed, (0x7A,))
        za = root.child(0).normals(n_draws)
        zb = root.child(1).normals(n_draws)
    ta = _moment(thresholds.a, dc.mu0, rho1, sigma1, sigma2, gamma, za)
    tb = _moment(thresholds.b, dc.mu1, rho0, sigma1, sigma2, gamma, zb)
    return ta, tb


# -- the private SPRT budget --------------------------------------------------


def privsprt_rdp_curve(
    pair: HypothesisPair,
    cfg: PrivTestConfig,
    gamma: float,
    ta_tb: tuple[StoppingMoment, StoppingMoment],
) -> RdpCurve:
    """``((a g/(g-1) - 1)/(a-1)) 2aA^2/s1^2 + 4aA^2/s2^2 + 2 log max(TA,TB)/(g(a-1))``."""
    if not gamma > 1:
        raise ParameterError("gamma", f"must exceed 1, got {gamma}")
    A, s1, s2 = cfg.a_trunc, cfg.sigma1, cfg.sigma2
    if s1 == 0 or s2 == 0:
        return RdpCurve(lambda alpha: math.inf, "privsprt(non-private)")
    log_m = max(ta_tb[0].log_value, ta_tb[1].log_value)
    A2 = A * A

    def ev(alpha: float) -> float:
        am1 = alpha - 1.0
        first = (alpha * gamma / (gamma - 1.0) - 1.0) / am1 * (2.0 * alpha * A2 / (s1 * s1))
        return first + 4.0 * alpha * A2 / (s2 * s2) + 2.0 * log_m / (gamma * am1)

    return RdpCurve(ev, f"privsprt(A={A:g}, sigma1={s1:g}, sigma2={s2:g}, gamma={gamma:g}, {pair.label()})")


def calibrated_privsprt_rdp_curve(
    epsilon_prime: float,
    delta: float,
    gamma: float,
    ta_tb: tuple[StoppingMoment, StoppingMoment],
) -> RdpCurve:
    """Same budget written in ``(eps', delta)`` for the standard noise calibration.

    With ``L = ln(1.25/delta)`` the first two terms become
    ``((a g/(g-1) - 1)/(a-1)) a eps'^2/(16 L)`` and ``a eps'^2/(32 L)``;
    the truncation level cancels.
    """
    if not gamma > 1:
        raise ParameterError("gamma", f"must exceed 1, got {gamma}")
    L = math.log(1.25 / delta)
    e2 = epsilon_prime * epsilon_prime
    log_m = max(ta_tb[0].log_value, ta_tb[1].log_value)

    def ev(alpha: float) -> float:
        am1 = alpha - 1.0
        coef = (alpha * gamma / (gamma - 1.0) - 1.0) / am1
        return coef * alpha * e2 / (16.0 * L) + alpha * e2 / (32.0 * L) + 2.0 * log_m / (gamma * am1)

    return RdpCurve(ev, f"privsprt-calibrated(eps'={epsilon_prime:g}, delta={delta:g}, gamma={gamma:g})")


def headline_rdp(alpha: float, gamma: float, epsilon_prime: float, log_max_t: float) -> float:
    """The coarse ``((a g/(g-1)-1)/(a-1) + 1) eps' + 2 log max(TA,TB)/(a-1)`` summary."""
    coef = (alpha * gamma / (gamma - 1.0) - 1.0) / (alpha - 1.0)
    return (coef + 1.0) * epsilon_prime + 2.0 * log_max_t / (alpha - 1.0)


def headline_dp_epsilon(alpha: float, gamma: float, epsilon_prime: float, delta: float) -> float:
    """The coarse ``((a g/(g-1)-1)/(a-1) + 1) eps' + 4 log(1/delta)/(a-1)`` summary."""
    coef = (alpha * gamma / (gamma - 1.0) - 1.0) / (alpha - 1.0)
    return (coef + 1.0) * epsilon_prime + 4.0 * math.log(1.0 / delta) / (alpha - 1.0)


def bounded_horizon_curve(cfg: PrivTestConfig, t_max: int) -> RdpCurve:
    """Two composed above-threshold instances with the stopping term ``1 + t_max``."""
    A, s1, s2 = cfg.a_trunc, cfg.sigma1, cfg.sigma2
    if s1 == 0 or s2 == 0:
        return RdpCurve(lambda alpha: math.inf, "bounded-horizon(non-private)")
    e1 = gaussian_rdp_curve(s1, 2.0 * A)
    e2 = gaussian_rdp_curve(s2, 2.0 * A)
    one = RdpCurve(lambda alpha: gen_above_thresh_rdp(alpha, e1, e2, SupForm(1.0 + t_max)),
                   f"above-threshold(t_max={t_max})")
    return compose_rdp([one, one])


@dataclass
class PrivacyReport:
    epsilon: float
    delta: float
    alpha_star: float
    gamma_star: Optional[float]
    t_a: Optional[StoppingMoment]
    t_b: Optional[StoppingMoment]
    sigma1: float
    sigma2: float
    a_trunc: float
    non_private: bool = False
    epsilon_prime: Optional[float] = None
    headline_epsilon: Optional[float] = None
    bounded_horizon_epsilon: Optional[float] = None
    bounded_horizon_alpha: Optional[float] = None
    t_max: Optional[int] = None
    per_gamma: list = field(default_factory=list)
    curve_samples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "alpha_star": self.alpha_star,
            "gamma_star": self.gamma_star,
            "t_a": self.t_a.to_dict() if self.t_a else None,
            "t_b": self.t_b.to_dict() if self.t_b else None,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "A": self.a_trunc,
            "non_private": self.non_private,
            "eps_prime": self.epsilon_prime,
            "headline_epsilon": self.headline_epsilon,
            "bounded_horizon_epsilon": self.bounded_horizon_epsilon,
            "bounded_horizon_alpha": self.bounded_horizon_alpha,
            "t_max": self.t_max,
            "per_gamma": self.per_gamma,
            "curve_samples": self.curve_samples,
        }


def best_dp_report(
    pair: HypothesisPair,
    cfg: PrivTestConfig,
    delta: float,
    gammas: Sequence[float] = GAMMA_GRID,
    alphas: Optional[Sequence[float]] = None,
    n_draws: int = 10_000,
    seed: int = 0,
    t_max: Optional[int] = None,
) -> PrivacyReport:
    """Best ``(eps, delta)`` guarantee over the ``(alpha, gamma)`` grids."""
    if not 0 < delta < 1:
        raise ParameterError("delta", f"must lie in (0, 1), got {delta}")
    if not cfg.is_private:
        return PrivacyReport(math.inf, delta, math.nan, None, None, None, cfg.sigma1, cfg.sigma2,
                             cfg.a_trunc, non_private=True, epsilon_prime=cfg.epsilon)
    alphas = ALPHA_GRID if alphas is None else np.asarray(alphas, dtype=float)
    best = None
    per_gamma = []
    for g in gammas:
        ta, tb = estimate_ta_tb(pair, cfg.thresholds, cfg.a_trunc, cfg.sigma1, cfg.sigma2, g,
                                n_draws=n_draws, seed=seed)
        curve = privsprt_rdp_curve(pair, cfg, g, (ta, tb))
        eps, alpha = rdp_to_dp(curve, delta, alphas)
        per_gamma.append({"gamma": g, "epsilon": eps, "alpha": alpha})
        if best is None or eps < best[0]:
            best = (eps, alpha, g, ta, tb, curve)
    eps, alpha, g, ta, tb, curve = best
    report = PrivacyReport(eps, delta, alpha, g, ta, tb, cfg.sigma1, cfg.sigma2, cfg.a_trunc,
                           epsilon_prime=cfg.epsilon, per_gamma=per_gamma)
    report.curve_samples = [{"alpha": float(a), "rdp": curve(float(a))} for a in alphas]
    if cfg.epsilon is not None and math.isfinite(cfg.epsilon):
        report.headline_epsilon = headline_dp_epsilon(alpha, g, cfg.epsilon, delta)
    if t_max is not None:
        report.t_max = int(t_max)
        report.bounded_horizon_epsilon, report.bounded_horizon_alpha = rdp_to_dp(
            bounded_horizon_curve(cfg, int(t_max)), delta, alphas)
    return report
