"""Closed-form upper bounds on the expected sample size and error rates of the
Gaussian private SPRT, minimised over a partition count ``k`` and a slack ``c``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mechanisms import ParameterError
from .models import HypothesisPair, as_trunc, drift_constants

K_MAX = 64
C_GRID = np.linspace(0.005, 0.995, 199)


@dataclass(frozen=True)
class BoundResult:
    value: float
    k_star: int
    c_star: float
    components: dict = field(default_factory=dict)
    exceeds_one: bool = False

    def to_dict(self) -> dict:
        return {"value": self.value, "k_star": self.k_star, "c_star": self.c_star,
                "components": dict(self.components), "exceeds_one": self.exceeds_one}


def _check(threshold: float, mu: float, a_trunc: float):
    if not threshold > 0:
        raise ParameterError("threshold", f"must be > 0, got {threshold}")
    if not mu > 0:
        raise ParameterError("mu", f"must be > 0, got {mu}")
    if not a_trunc > 0:
        raise ParameterError("A", f"must be > 0, got {a_trunc}")


def _rho(mu, a_trunc, c):
    return -np.expm1(-(1.0 - c) * mu * mu / (2.0 * a_trunc * a_trunc))


def sample_size_components(threshold: float, mu: float, a_trunc: float, sigma1: float,
                           sigma2: float, k: int, c: float) -> dict:
    """Terms of the sample-size bound at one ``(k, c)``; they sum to the bound."""
    m = (1.0 - c) * mu
    rho = float(_rho(mu, a_trunc, c))
    return {
        "one": 1.0,
        "main": threshold / m,
        "partition": threshold / (2.0 * (k + 1) * m),
        "rho": (k + 1) / rho,
        "noise": 3.0 * math.sqrt(2.0 * (sigma1 ** 2 + sigma2 ** 2)) / (4.0 * m),
    }


def error_rate_components(threshold: float, mu: float, a_trunc: float, sigma1: float,
                          sigma2: float, k: int, c: float) -> dict:
    """Terms of the error-rate bound at one ``(k, c)``; they sum to the bound."""
    m = (1.0 - c) * mu
    rho = float(_rho(mu, a_trunc, c))
    lead = 2.0 / rho * math.exp(-2.0 * threshold * m / (a_trunc * a_trunc))
    return {
        "exponential": lead,
        "partition_early": lead * k * math.exp(1.0 / (8.0 * k)),
        "partition_late": lead * k * math.exp(1.0 / (4.0 * k + 3.0)),
        "noise": math.sqrt(2.0 * (sigma1 ** 2 + sigma2 ** 2)) / (4.0 * m),
    }


def _grid(c_grid: Optional[Sequence[float]], k_max: int, extra_c: Sequence[float] = ()):
    cs = np.asarray(C_GRID if c_grid is None else c_grid, dtype=float)
    extra = [c for c in extra_c if 0 < c < 1]
    if extra:
        cs = np.concatenate([cs, extra])
    if np.any((cs <= 0) | (cs >= 1)):
        raise ParameterError("c", "grid points must lie in (0, 1)")
    if k_max < 1:
        raise ParameterError("k_max", "must be >= 1")
    ks = np.arange(1, k_max + 1, dtype=float)
    return ks[:, None], cs[None, :]


def _finish(table: np.ndarray, ks, cs, components_fn) -> BoundResult:
    i, j = np.unravel_index(int(np.argmin(table)), table.shape)
    k, c = int(ks[i, 0]), float(cs[0, j])
    comps = components_fn(k, c)
    value = math.fsum(comps.values())
    return BoundResult(value, k, c, comps, value > 1.0)


def sample_size_bound(
    threshold: float,
    mu: float,
    trunc,
    sigma1: float = 0.0,
    sigma2: float = 0.0,
    which: str = "H1",
    k_max: int = K_MAX,
    c_grid: Optional[Sequence[float]] = None,
) -> BoundResult:
    """Grid minimum of the expected-sample-size bound.

    Pass ``(b, mu1)`` for the bound on ``E1[T]`` and ``(a, mu0)`` for
    ``E0[T]``; ``which`` only labels the side.
    """
    a_trunc = as_trunc(trunc).a_trunc
    _check(threshold, mu, a_trunc)
    if which not in ("H0", "H1"):
        raise ParameterError("which", f"expected H0 or H1, got {which!r}")
    ks, cs = _grid(c_grid, k_max)
    m = (1.0 - cs) * mu
    noise = 3.0 * math.sqrt(2.0 * (sigma1 ** 2 + sigma2 ** 2)) / (4.0 * m)
    table = 1.0 + threshold / m + threshold / (2.0 * (ks + 1) * m) + (ks + 1) / _rho(mu, a_trunc, cs) + noise
    return _finish(table, ks, cs,
                   lambda k, c: sample_size_components(threshold, mu, a_trunc, sigma1, sigma2, k, c))


def error_rate_bound(
    threshold: float,
    mu: float,
    trunc,
    sigma1: float = 0.0,
    sigma2: float = 0.0,
    which: str = "type1",
    k_max: int = K_MAX,
    c_grid: Optional[Sequence[float]] = None,
) -> BoundResult:
    """Grid minimum of the error-rate bound.

    Pass ``(b, mu0)`` for the Type I bound and ``(a, mu1)`` for Type II.
    The value is an upper bound and may exceed 1; ``exceeds_one`` flags that.
    The slack ``c = 1 - A^2/(2 mu)`` joins the grid when it lies in (0, 1).
    """
    a_trunc = as_trunc(trunc).a_trunc
    _check(threshold, mu, a_trunc)
    if which not in ("type1", "type2"):
        raise ParameterError("which", f"expected type1 or type2, got {which!r}")
    ks, cs = _grid(c_grid, k_max, extra_c=(1.0 - a_trunc * a_trunc / (2.0 * mu),))
    m = (1.0 - cs) * mu
    lead = 2.0 / _rho(mu, a_trunc, cs) * np.exp(-2.0 * threshold * m / (a_trunc * a_trunc))
    mult = 1.0 + ks * np.exp(1.0 / (8.0 * ks)) + ks * np.exp(1.0 / (4.0 * ks + 3.0))
    table = lead * mult + math.sqrt(2.0 * (sigma1 ** 2 + sigma2 ** 2)) / (4.0 * m)
    return _finish(table, ks, cs,
                   lambda k, c: error_rate_components(threshold, mu, a_trunc, sigma1, sigma2, k, c))


def sample_size_at(threshold, mu, trunc, sigma1, sigma2, k: int, c: float) -> float:
    a_trunc = as_trunc(trunc).a_trunc
    return math.fsum(sample_size_components(threshold, mu, a_trunc, sigma1, sigma2, k, c).values())


def error_rate_at(threshold, mu, trunc, sigma1, sigma2, k: int, c: float) -> float:
    a_trunc = as_trunc(trunc).a_trunc
    return math.fsum(error_rate_components(threshold, mu, a_trunc, sigma1, sigma2, k, c).values())


def sample_size_shorthand(threshold: float, mu: float, trunc, sigma1: float = 0.0, sigma2: float = 0.0) -> float:
    """``1 + 1/rho + 5b/(2mu) + 3 sqrt(2(s1^2+s2^2))/(2mu)`` with ``rho`` at ``c = 1/2``.

    This is the commonly quoted simplification for one partition and
    ``c = 1/2``. The general bound at that point counts the ``rho`` term
    twice, so this value is smaller than :func:`sample_size_at` there.
    """
    a_trunc = as_trunc(trunc).a_trunc
    _check(threshold, mu, a_trunc)
    rho = float(_rho(mu, a_trunc, 0.5))
    return 1.0 + 1.0 / rho + 5.0 * threshold / (2.0 * mu) + 3.0 * math.sqrt(2.0 * (sigma1 ** 2 + sigma2 ** 2)) / (2.0 * mu)


def error_rate_shorthand(threshold: float, mu: float, trunc, sigma1: float = 0.0,
                         sigma2: float = 0.0) -> Optional[float]:
    """Quoted simplification at ``k = 1``, ``c = 1 - A^2/(2mu)``.

    ``2/rho (1 + e^{1/8}) e^{-b} + sqrt(2(s1^2+s2^2))/(2A^2) + e^{1/7}``;
    ``None`` when that ``c`` is outside (0, 1).
    """
    a_trunc = as_trunc(trunc).a_trunc
    _check(threshold, mu, a_trunc)
    c = 1.0 - a_trunc * a_trunc / (2.0 * mu)
    if not 0 < c < 1:
        return None
    rho = float(_rho(mu, a_trunc, c))
    return (2.0 / rho * (1.0 + math.exp(0.125)) * math.exp(-threshold)
            + math.sqrt(2.0 * (sigma1 ** 2 + sigma2 ** 2)) / (2.0 * a_trunc * a_trunc) + math.exp(1.0 / 7.0))


def bounds_report(pair: HypothesisPair, a: float, b: float, trunc, sigma1: float, sigma2: float) -> dict:
    """Both sides of both bounds, their minimisers and the quoted shorthands."""
    a_trunc = as_trunc(trunc).a_trunc
    dc = drift_constants(pair, a_trunc)
    out = {"mu0": dc.mu0, "mu1": dc.mu1}
    out["sample_size_H0"] = sample_size_bound(a, dc.mu0, a_trunc, sigma1, sigma2, "H0").to_dict()
    out["sample_size_H1"] = sample_size_bound(b, dc.mu1, a_trunc, sigma1, sigma2, "H1").to_dict()
    out["type1"] = error_rate_bound(b, dc.mu0, a_trunc, sigma1, sigma2, "type1").to_dict()
    out["type2"] = error_rate_bound(a, dc.mu1, a_trunc, sigma1, sigma2, "type2").to_dict()
    out["fixed_choice"] = {
        "sample_size_H0_k1_c05": sample_size_at(a, dc.mu0, a_trunc, sigma1, sigma2, 1, 0.5),
        "sample_size_H1_k1_c05": sample_size_at(b, dc.mu1, a_trunc, sigma1, sigma2, 1, 0.5),
        "sample_size_H0_shorthand": sample_size_shorthand(a, dc.mu0, a_trunc, sigma1, sigma2),
        "sample_size_H1_shorthand": sample_size_shorthand(b, dc.mu1, a_trunc, sigma1, sigma2),
        "type1_k1": error_rate_at(b, dc.mu0, a_trunc, sigma1, sigma2, 1, 0.5),
        "type2_k1": error_rate_at(a, dc.mu1, a_trunc, sigma1, sigma2, 1, 0.5),
        "type1_shorthand": error_rate_shorthand(b, dc.mu0, a_trunc, sigma1, sigma2),
        "type2_shorthand": error_rate_shorthand(a, dc.mu1, a_trunc, sigma1, sigma2),
    }
    return out
