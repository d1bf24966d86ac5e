"""Noise-adding mechanisms and their privacy calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .rng import RngStream


class ParameterError(ValueError):
    """Invalid privacy or noise parameter; ``field`` names the offending input."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class NoiseMechanism:
    """Additive noise descriptor: ``gaussian`` (scale = sigma), ``laplace`` (scale = b) or ``none``."""

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "none"):
            raise ParameterError("mechanism", f"unknown kind {self.kind!r}")
        if not self.scale >= 0:
            raise ParameterError("scale", f"must be non-negative, got {self.scale}")

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseMechanism":
        return cls("gaussian", float(sigma))

    @classmethod
    def laplace(cls, scale: float) -> "NoiseMechanism":
        return cls("laplace", float(scale))

    @property
    def is_passthrough(self) -> bool:
        return self.kind == "none" or self.scale == 0.0

    def draw(self, rng: RngStream) -> float:
        if self.is_passthrough:
            return 0.0
        if self.kind == "gaussian":
            return self.scale * rng.normal()
        return rng.laplace(self.scale)


NO_NOISE = NoiseMechanism()


def gaussian_sigma(epsilon: float, delta: float, sensitivity: float) -> float:
    """Classic Gaussian-mechanism scale ``sqrt(2 ln(1.25/delta)) * sensitivity / epsilon``."""
    if not epsilon > 0:
        raise ParameterError("epsilon", f"must be > 0, got {epsilon}")
    if not 0 < delta < 1:
        raise ParameterError("delta", f"must lie in (0, 1), got {delta}")
    if not sensitivity > 0:
        raise ParameterError("sensitivity", f"must be > 0, got {sensitivity}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) * sensitivity / epsilon


def privsprt_sigmas(epsilon_prime: float, delta: float, a_trunc: float) -> tuple[float, float]:
    """Threshold and query noise for two ``(epsilon'/2, delta)`` Gaussian mechanisms.

    The threshold mechanism is calibrated to sensitivity ``2A`` and the query
    mechanism to ``4A``, giving ``sigma1^2 = 32 ln(1.25/delta) A^2 / eps'^2``
    and ``sigma2^2 = 128 ln(1.25/delta) A^2 / eps'^2``.
    """
    if math.isinf(epsilon_prime):
        return 0.0, 0.0
    half = epsilon_prime / 2.0
    return (gaussian_sigma(half, delta, 2.0 * a_trunc), gaussian_sigma(half, delta, 4.0 * a_trunc))


def perturb(mech: NoiseMechanism, value: float, rng: RngStream) -> float:
    return value + mech.draw(rng)


def laplace_scale_for_abovethresh(epsilon: float, sensitivity: float) -> tuple[float, float]:
    """Laplace scales ``(threshold, query) = (2*sens/eps, 4*sens/eps)`` for sparse-vector style tests."""
    if not epsilon > 0:
        raise ParameterError("epsilon", f"must be > 0, got {epsilon}")
    if not sensitivity > 0:
        raise ParameterError("sensitivity", f"must be > 0, got {sensitivity}")
    return 2.0 * sensitivity / epsilon, 4.0 * sensitivity / epsilon
