"""Simple-vs-simple hypothesis pairs and their log-likelihood ratio calculus."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional

import numpy as np
from scipy.special import ndtr

from .mechanisms import ParameterError
from .rng import RngStream


class Hypothesis(enum.IntEnum):
    H0 = 0
    H1 = 1

    @property
    def other(self) -> "Hypothesis":
        return Hypothesis(1 - self)

    @classmethod
    def parse(cls, value: Any) -> "Hypothesis":
        if isinstance(value, Hypothesis):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


class UnsupportedOperation(Exception):
    """Raised when a Custom pair lacks what an operation needs (e.g. a sampler)."""


LogDensity = Callable[[Any], float]
Sampler = Callable[[RngStream], Any]


@dataclass(frozen=True)
class HypothesisPair:
    """Two fully specified observation distributions ``f0`` (null) and ``f1``.

    Build instances with :meth:`bernoulli`, :meth:`gaussian_mean` or
    :meth:`custom` rather than calling the constructor.
    """

    kind: str
    params: tuple[float, float] = (math.nan, math.nan)
    logpdf0: Optional[LogDensity] = None
    logpdf1: Optional[LogDensity] = None
    sampler0: Optional[Sampler] = None
    sampler1: Optional[Sampler] = None
    llr_range: Optional[float] = None

    @classmethod
    def bernoulli(cls, theta0: float, theta1: float) -> "HypothesisPair":
        for name, v in (("theta0", theta0), ("theta1", theta1)):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if theta0 == theta1:
            raise ValueError("theta0 and theta1 must differ")
        return cls("bernoulli", (float(theta0), float(theta1)))

    @classmethod
    def gaussian_mean(cls, mu0: float, mu1: float) -> "HypothesisPair":
        if not (math.isfinite(mu0) and math.isfinite(mu1)):
            raise ValueError("means must be finite")
        if mu0 == mu1:
            raise ValueError("mu0 and mu1 must differ")
        return cls("gaussian_mean", (float(mu0), float(mu1)))

    @classmethod
    def custom(
        cls,
        logpdf0: LogDensity,
        logpdf1: LogDensity,
        sampler0: Optional[Sampler] = None,
        sampler1: Optional[Sampler] = None,
        llr_range: Optional[float] = None,
    ) -> "HypothesisPair":
        """A pair given by two log-densities and optional samplers.

        ``llr_range`` is the known span ``max llr - min llr`` if finite; it is
        only used by :func:`sensitivity`.
        """
        return cls("custom", logpdf0=logpdf0, logpdf1=logpdf1, sampler0=sampler0,
                   sampler1=sampler1, llr_range=llr_range)

    @property
    def is_builtin(self) -> bool:
        return self.kind in ("bernoulli", "gaussian_mean")

    def label(self) -> str:
        if self.kind == "bernoulli":
            return f"bernoulli({self.params[0]:g},{self.params[1]:g})"
        if self.kind == "gaussian_mean":
            return f"gaussian_mean({self.params[0]:g},{self.params[1]:g})"
        return "custom"

    def to_dict(self) -> dict:
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "theta0": self.params[0], "theta1": self.params[1]}
        if self.kind == "gaussian_mean":
            return {"kind": "gaussian_mean", "mu0": self.params[0], "mu1": self.params[1]}
        raise UnsupportedOperation("custom pairs are not serialisable")

    @classmethod
    def from_dict(cls, d: dict) -> "HypothesisPair":
        kind = d.get("kind")
        if kind == "bernoulli":
            return cls.bernoulli(float(d["theta0"]), float(d["theta1"]))
        if kind == "gaussian_mean":
            return cls.gaussian_mean(float(d["mu0"]), float(d["mu1"]))
        raise ValueError(f"unknown pair kind {kind!r}")

    def log_density(self, hypothesis: Hypothesis, x: Any) -> float:
        h = Hypothesis.parse(hypothesis)
        if self.kind == "bernoulli":
            th = self.params[h]
            if x == 1:
                return math.log(th)
            if x == 0:
                return math.log1p(-th)
            return -math.inf
        if self.kind == "gaussian_mean":
            mu = self.params[h]
            return -0.5 * (x - mu) ** 2 - 0.5 * math.log(2 * math.pi)
        fn = self.logpdf1 if h == Hypothesis.H1 else self.logpdf0
        return float(fn(x))


@dataclass(frozen=True)
class TruncationSpec:
    """Clip level ``A`` for per-observation log-likelihood ratios."""

    a_trunc: float

    def __post_init__(self):
        if not (self.a_trunc > 0) or math.isnan(self.a_trunc):
            raise ParameterError("A", f"truncation level must be > 0, got {self.a_trunc}")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.a_trunc)


NO_TRUNCATION = TruncationSpec(math.inf)


def as_trunc(trunc: TruncationSpec | float) -> TruncationSpec:
    return trunc if isinstance(trunc, TruncationSpec) else TruncationSpec(float(trunc))


@dataclass(frozen=True)
class DriftConstants:
    """``mu0 = -E0[clipped llr]`` and ``mu1 = E1[clipped llr]`` (with MC errors for Custom pairs)."""

    mu0: float
    mu1: float
    mu0_se: float = 0.0
    mu1_se: float = 0.0


def bernoulli_llr_values(pair: HypothesisPair) -> tuple[float, float]:
    """LLR at ``x = 1`` and at ``x = 0``."""
    t0, t1 = pair.params
    return math.log(t1 / t0), math.log((1.0 - t1) / (1.0 - t0))


def gaussian_llr_coefficients(pair: HypothesisPair) -> tuple[float, float]:
    """``(slope, offset)`` with ``llr(x) = slope * x - offset``."""
    m0, m1 = pair.params
    return m1 - m0, 0.5 * (m1 * m1 - m0 * m0)


def llr(pair: HypothesisPair, x: Any) -> float:
    """Per-observation log-likelihood ratio ``log f1(x) - log f0(x)``."""
    if pair.kind == "bernoulli":
        one, zero = bernoulli_llr_values(pair)
        if x == 1:
            return one
        if x == 0:
            return zero
        raise ValueError(f"observation {x!r} outside the Bernoulli support")
    if pair.kind == "gaussian_mean":
        slope, offset = gaussian_llr_coefficients(pair)
        value = slope * x - offset
    else:
        value = float(pair.logpdf1(x)) - float(pair.logpdf0(x))
    if not math.isfinite(value):
        raise ValueError(f"log-likelihood ratio is not finite at {x!r}")
    return value


def clip(value: float, a_trunc: float) -> float:
    # inclusive band: +-A pass through unchanged
    if value > a_trunc:
        return a_trunc
    if value < -a_trunc:
        return -a_trunc
    return value


def truncated_llr(pair: HypothesisPair, x: Any, trunc: TruncationSpec | float) -> float:
    return clip(llr(pair, x), as_trunc(trunc).a_trunc)


def cumulative_truncated_llr(pair: HypothesisPair, xs: Iterable[Any], trunc: TruncationSpec | float) -> float:
    a_trunc = as_trunc(trunc).a_trunc
    total = 0.0
    for x in xs:
        total += clip(llr(pair, x), a_trunc)
    return total


def _clipped_normal_mean(m: float, s: float, a_trunc: float) -> float:
    """``E[clip(Y, -A, A)]`` for ``Y ~ N(m, s^2)``."""
    if math.isinf(a_trunc):
        return m
    lo = (-a_trunc - m) / s
    hi = (a_trunc - m) / s
    p_lo = float(ndtr(lo))
    p_hi = float(ndtr(hi))
    phi_lo = math.exp(-0.5 * lo * lo) / math.sqrt(2 * math.pi)
    phi_hi = math.exp(-0.5 * hi * hi) / math.sqrt(2 * math.pi)
    inside = m * (p_hi - p_lo) + s * (phi_lo - phi_hi)
    return -a_trunc * p_lo + a_trunc * (1.0 - p_hi) + inside


def drift_constants(
    pair: HypothesisPair,
    trunc: TruncationSpec | float,
    n_samples: int = 200_000,
    seed: int = 0,
) -> DriftConstants:
    a_trunc = as_trunc(trunc).a_trunc
    if pair.kind == "bernoulli":
        t0, t1 = pair.params
        one, zero = bernoulli_llr_values(pair)
        c1, c0 = clip(one, a_trunc), clip(zero, a_trunc)
        return DriftConstants(mu0=-(t0 * c1 + (1 - t0) * c0), mu1=t1 * c1 + (1 - t1) * c0)
    if pair.kind == "gaussian_mean":
        m0, m1 = pair.params
        s = abs(m1 - m0)
        half_kl = 0.5 * s * s
        # llr ~ N(-half_kl, s^2) under H0 and N(+half_kl, s^2) under H1
        return DriftConstants(
            mu0=-_clipped_normal_mean(-half_kl, s, a_trunc),
            mu1=_clipped_normal_mean(half_kl, s, a_trunc),
        )
    means, ses = [], []
    for h in (Hypothesis.H0, Hypothesis.H1):
        stream = RngStream(seed, (h,))
        vals = np.array([truncated_llr(pair, sample(pair, h, stream), a_trunc) for _ in range(n_samples)])
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / math.sqrt(n_samples))
    return DriftConstants(mu0=-means[0], mu1=means[1], mu0_se=ses[0], mu1_se=ses[1])


def kl_divergence(
    pair: HypothesisPair,
    direction: str = "forward",
    n_samples: int = 200_000,
    seed: int = 0,
) -> float | tuple[float, float]:
    """``forward`` is D(f1 || f0), ``reverse`` is D(f0 || f1).

    Closed form for built-in pairs; for Custom pairs a Monte Carlo
    ``(estimate, standard_error)`` tuple is returned.
    """
    if direction not in ("forward", "reverse"):
        raise ValueError("direction must be 'forward' or 'reverse'")
    if pair.kind == "bernoulli":
        t0, t1 = pair.params
        p, q = (t1, t0) if direction == "forward" else (t0, t1)
        return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))
    if pair.kind == "gaussian_mean":
        d = pair.params[1] - pair.params[0]
        return 0.5 * d * d
    h = Hypothesis.H1 if direction == "forward" else Hypothesis.H0
    stream = RngStream(seed, (h, 7))
    sign = 1.0 if h == Hypothesis.H1 else -1.0
    vals = np.array([sign * llr(pair, sample(pair, h, stream)) for _ in range(n_samples)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


def sensitivity(pair: HypothesisPair, trunc: TruncationSpec | float) -> float:
    """``min(max llr - min llr, 2A)``."""
    a_trunc = as_trunc(trunc).a_trunc
    if pair.kind == "bernoulli":
        one, zero = bernoulli_llr_values(pair)
        raw = abs(one - zero)
    elif pair.kind == "custom" and pair.llr_range is not None:
        raw = pair.llr_range
    else:
        raw = math.inf
    return min(raw, 2.0 * a_trunc)


def sample(pair: HypothesisPair, hypothesis: Hypothesis, rng: RngStream) -> Any:
    """One draw from ``f0`` or ``f1``."""
    h = Hypothesis.parse(hypothesis)
    if pair.kind == "bernoulli":
        return 1 if rng.uniform() < pair.params[h] else 0
    if pair.kind == "gaussian_mean":
        return pair.params[h] + rng.normal()
    sampler = pair.sampler1 if h == Hypothesis.H1 else pair.sampler0
    if sampler is None:
        raise UnsupportedOperation(f"custom pair has no sampler for {h.name}")
    return sampler(rng)
