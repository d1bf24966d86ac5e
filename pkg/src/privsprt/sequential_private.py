"""Noisy-threshold sequential tests: the generic above-threshold primitive,
the Gaussian private SPRT and the Laplace above-threshold baseline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from . import _fallback
from .mechanisms import (
    NoiseMechanism,
    ParameterError,
    laplace_scale_for_abovethresh,
    privsprt_sigmas,
)
from .models import Hypothesis, HypothesisPair, drift_constants
from .rng import ROLE_QUERY, ROLE_THRESHOLD, RngStream
from .sprt import SprtThresholds, TrialOutcome, simulate_one, wald_expected_t

T_MAX_FACTOR = 50


class TestMode(str, enum.Enum):
    GAUSSIAN_PRIVSPRT = "privsprt"
    LAPLACE_ABOVETHRESH = "laplace"
    NON_PRIVATE = "sprt"

    __test__ = False  # not a pytest class


class Answer(enum.IntEnum):
    BOTTOM = 0
    TOP = 1


@dataclass(frozen=True)
class PrivTestConfig:
    """Thresholds, truncation and noise for one two-sided noisy test.

    ``sigma1`` / ``sigma2`` are the threshold and query noise scales (the
    standard deviation for Gaussian noise, the Laplace scale for the
    baseline). ``t_max=None`` means "derive from the pair", see
    :func:`default_t_max`.
    """

    thresholds: SprtThresholds
    a_trunc: float
    sigma1: float = 0.0
    sigma2: float = 0.0
    t_max: Optional[int] = None
    mode: TestMode = TestMode.GAUSSIAN_PRIVSPRT
    epsilon: Optional[float] = None
    delta: Optional[float] = None

    __test__ = False

    def __post_init__(self):
        if not (self.a_trunc > 0):
            raise ParameterError("A", f"truncation must be > 0, got {self.a_trunc}")
        for name in ("sigma1", "sigma2"):
            v = getattr(self, name)
            if not v >= 0 or math.isnan(v):
                raise ParameterError(name, f"must be non-negative, got {v}")
        if self.t_max is not None and self.t_max < 1:
            raise ParameterError("t_max", "must be >= 1")
        object.__setattr__(self, "mode", TestMode(self.mode))

    @classmethod
    def gaussian(cls, thresholds: SprtThresholds, a_trunc: float, epsilon_prime: float,
                 delta: float, t_max: Optional[int] = None) -> "PrivTestConfig":
        """Noise from two ``(eps'/2, delta)`` Gaussian mechanisms."""
        s1, s2 = privsprt_sigmas(epsilon_prime, delta, a_trunc)
        return cls(thresholds, a_trunc, s1, s2, t_max, TestMode.GAUSSIAN_PRIVSPRT, epsilon_prime, delta)

    @classmethod
    def laplace(cls, thresholds: SprtThresholds, a_trunc: float, epsilon: float,
                t_max: Optional[int] = None) -> "PrivTestConfig":
        """Laplace baseline; scales ``(2*Delta/eps, 4*Delta/eps)`` with ``Delta = 2A``."""
        s1, s2 = laplace_scale_for_abovethresh(epsilon, 2.0 * a_trunc)
        return cls(thresholds, a_trunc, s1, s2, t_max, TestMode.LAPLACE_ABOVETHRESH, epsilon, None)

    @classmethod
    def non_private(cls, thresholds: SprtThresholds, a_trunc: float = math.inf,
                    t_max: Optional[int] = None) -> "PrivTestConfig":
        return cls(thresholds, a_trunc, 0.0, 0.0, t_max, TestMode.NON_PRIVATE)

    def with_thresholds(self, a: float, b: float) -> "PrivTestConfig":
        return replace(self, thresholds=SprtThresholds(a, b))

    @property
    def noise_kind(self) -> int:
        if self.mode == TestMode.GAUSSIAN_PRIVSPRT:
            return _fallback.NOISE_GAUSSIAN
        if self.mode == TestMode.LAPLACE_ABOVETHRESH:
            return _fallback.NOISE_LAPLACE
        return _fallback.NOISE_NONE

    @property
    def noisy(self) -> bool:
        return self.mode != TestMode.NON_PRIVATE

    @property
    def is_private(self) -> bool:
        return self.noisy and self.sigma1 > 0 and self.sigma2 > 0


def default_t_max(pair: HypothesisPair, cfg: PrivTestConfig) -> int:
    """Time cap used when ``cfg.t_max`` is unset.

    Non-private tests get 10**6. Noisy tests get 50 times the larger Wald
    expected sample size evaluated with the truncated drifts.
    """
    if cfg.t_max is not None:
        return cfg.t_max
    if not cfg.noisy:
        return 10**6
    if pair.is_builtin:
        dc = drift_constants(pair, cfg.a_trunc)
    else:
        dc = drift_constants(pair, cfg.a_trunc, n_samples=20_000)
    e0, e1 = wald_expected_t(cfg.thresholds, kl_forward=dc.mu1, kl_reverse=dc.mu0)
    return max(1, math.ceil(T_MAX_FACTOR * max(e0, e1)))


def gen_above_thresh(
    queries: Iterable[float],
    sensitivity: float,
    threshold: float,
    m1: NoiseMechanism,
    m2: NoiseMechanism,
    rng: RngStream,
    t_max: Optional[int] = None,
) -> tuple[Optional[int], list[Answer]]:
    """Generic above-noisy-threshold test.

    ``sensitivity`` is carried for the caller's accounting; the mechanisms are
    expected to be calibrated already. The threshold is perturbed once; each
    query is perturbed independently and compared. Returns the 1-based index
    of the first TOP answer (``None`` if the stream or ``t_max`` ran out) and
    the answers emitted.
    """
    if sensitivity < 0:
        raise ParameterError("sensitivity", "must be non-negative")
    noisy_threshold = threshold + m1.draw(rng.child(ROLE_THRESHOLD))
    qstream = rng.child(ROLE_QUERY)
    answers: list[Answer] = []
    for i, q in enumerate(queries, start=1):
        if t_max is not None and i > t_max:
            break
        if q + m2.draw(qstream) > noisy_threshold:
            answers.append(Answer.TOP)
            return i, answers
        answers.append(Answer.BOTTOM)
    return None, answers


def _run_noisy(pair, cfg, hypothesis, rng, record_trajectory, importance) -> TrialOutcome:
    kind = cfg.noise_kind
    return simulate_one(
        pair, hypothesis, rng, cfg.a_trunc, cfg.thresholds.a, cfg.thresholds.b, True,
        _fallback.noise_fn(kind, cfg.sigma1), _fallback.noise_fn(kind, cfg.sigma2),
        default_t_max(pair, cfg), record_trajectory, importance,
    )


def run_privsprt(
    pair: HypothesisPair,
    cfg: PrivTestConfig,
    hypothesis: Hypothesis,
    rng: RngStream,
    record_trajectory: bool = False,
    importance: bool = False,
) -> TrialOutcome:
    """One run of the Gaussian private SPRT.

    Thresholds ``-a`` and ``b`` are perturbed once with independent
    ``N(0, sigma1^2)`` draws. At every step the truncated statistic gets two
    independent ``N(0, sigma2^2)`` perturbations, one per side; the upper
    comparison is checked first, so a step where both fire rejects H0.
    """
    if cfg.mode != TestMode.GAUSSIAN_PRIVSPRT:
        raise ParameterError("mode", f"expected privsprt, got {cfg.mode.value}")
    return _run_noisy(pair, cfg, hypothesis, rng, record_trajectory, importance)


def run_laplace_abovethresh_test(
    pair: HypothesisPair,
    cfg: PrivTestConfig,
    hypothesis: Hypothesis,
    rng: RngStream,
    record_trajectory: bool = False,
    importance: bool = False,
) -> TrialOutcome:
    """Same two-sided structure as :func:`run_privsprt` with Laplace noise."""
    if cfg.mode != TestMode.LAPLACE_ABOVETHRESH:
        raise ParameterError("mode", f"expected laplace, got {cfg.mode.value}")
    return _run_noisy(pair, cfg, hypothesis, rng, record_trajectory, importance)


def run_test(pair, cfg: PrivTestConfig, hypothesis, rng, record_trajectory=False, importance=False):
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == TestMode.NON_PRIVATE:
        none = _fallback.noise_fn(_fallback.NOISE_NONE, 0.0)
        return simulate_one(pair, hypothesis, rng, cfg.a_trunc, cfg.thresholds.a, cfg.thresholds.b,
                            False, none, none, default_t_max(pair, cfg), record_trajectory, importance)
    return _run_noisy(pair, cfg, hypothesis, rng, record_trajectory, importance)
