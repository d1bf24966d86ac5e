"""Wald's sequential probability ratio test and its classical approximations."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from . import _fallback
from .models import Hypothesis, HypothesisPair, kl_divergence, llr, sample
from .rng import RngStream

DEFAULT_T_MAX = 10**6


class Decision(enum.IntEnum):
    ACCEPT_H0 = _fallback.ACCEPT
    REJECT_H0 = _fallback.REJECT
    CENSORED = _fallback.CENSORED


@dataclass(frozen=True)
class SprtThresholds:
    """Stop below ``-a`` (accept H0) or above ``b`` (reject H0)."""

    a: float
    b: float

    def __post_init__(self):
        for name in ("a", "b"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"threshold {name} must be positive and finite, got {v}")

    @classmethod
    def symmetric(cls, x: float) -> "SprtThresholds":
        return cls(x, x)


@dataclass
class TrialOutcome:
    decision: Decision
    stopping_time: int
    importance_weight: float = 1.0
    trajectory: Optional[list[tuple[int, float]]] = None
    statistic: float = 0.0
    llr_sum: float = 0.0


def simulate_one(
    pair: HypothesisPair,
    hypothesis: Hypothesis,
    rng: RngStream,
    a_trunc: float,
    a: float,
    b: float,
    noisy: bool,
    threshold_noise,
    query_noise,
    t_max: int,
    record_trajectory: bool = False,
    importance: bool = False,
) -> TrialOutcome:
    """One trial of the (possibly noisy, possibly truncated) threshold test.

    With ``importance=True`` the outcome carries ``prod f_other(x) / f_sampled(x)``
    over the observed samples.
    """
    h = Hypothesis.parse(hypothesis)
    traj = [] if record_trajectory else None
    d, t, raw, ell = _fallback.run_trial(
        lambda stream: sample(pair, h, stream),
        lambda x: llr(pair, x),
        a_trunc, a, b, noisy, threshold_noise, query_noise, t_max, rng, traj,
    )
    weight = 1.0
    if importance:
        weight = math.exp(-raw if h == Hypothesis.H1 else raw)
    return TrialOutcome(Decision(d), t, weight, traj, ell, raw)


def run_sprt(
    pair: HypothesisPair,
    thresholds: SprtThresholds,
    hypothesis: Hypothesis,
    rng: RngStream,
    t_max: int = DEFAULT_T_MAX,
    record_trajectory: bool = False,
    importance: bool = False,
) -> TrialOutcome:
    """Non-private SPRT on the exact (untruncated) log-likelihood ratio."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    none = _fallback.noise_fn(_fallback.NOISE_NONE, 0.0)
    return simulate_one(pair, hypothesis, rng, math.inf, thresholds.a, thresholds.b, False,
                        none, none, t_max, record_trajectory, importance)


def wald_error_approx(thresholds: SprtThresholds) -> tuple[float, float]:
    """Wald's approximations to the Type I and Type II errors."""
    a, b = thresholds.a, thresholds.b
    # written with e^-x only so that large thresholds do not overflow
    denom = -math.expm1(-(a + b))
    type1 = -math.expm1(-a) * math.exp(-b) / denom
    type2 = math.exp(-a) * -math.expm1(-b) / denom
    return type1, type2


def wald_expected_t(
    thresholds: SprtThresholds,
    pair: HypothesisPair | None = None,
    kl_forward: float | None = None,
    kl_reverse: float | None = None,
) -> tuple[float, float]:
    """Wald's approximate ``(E0[T], E1[T])``.

    The divergences default to the pair's KL divergences; passing other
    per-step drifts (e.g. truncated ones) evaluates the same formula with them.
    """
    if kl_forward is None or kl_reverse is None:
        if pair is None:
            raise ValueError("need a pair or explicit divergences")
        fwd = kl_divergence(pair, "forward")
        rev = kl_divergence(pair, "reverse")
        kl_forward = fwd[0] if isinstance(fwd, tuple) else fwd
        kl_reverse = rev[0] if isinstance(rev, tuple) else rev
    if not (kl_forward > 0 and kl_reverse > 0):
        raise ValueError("expected sample size needs strictly positive divergences")
    a, b = thresholds.a, thresholds.b
    type1, type2 = wald_error_approx(thresholds)
    e1 = (b * (1.0 - type2) - a * type2) / kl_forward
    e0 = (a * (1.0 - type1) - b * type1) / kl_reverse
    return e0, e1
