"""Pure-Python trial loops.

``run_trials`` mirrors the compiled kernel in ``_kernels.pyx`` statement for
statement, so both produce bit-identical outputs for the same arguments.
``run_trial`` is the general single-trial loop used for Custom pairs and for
trajectory recording.
"""

from __future__ import annotations

from typing import Any, Callable, Optional

import numpy as np

from .rng import ROLE_OBS, ROLE_QUERY, ROLE_THRESHOLD, RngStream

# decision codes shared with the kernel
ACCEPT = 0
REJECT = 1
CENSORED = 2

OBS_BERNOULLI = 0
OBS_GAUSSIAN = 1

NOISE_NONE = 0
NOISE_GAUSSIAN = 1
NOISE_LAPLACE = 2


def _noise(stream: RngStream, kind: int, scale: float) -> float:
    if kind == NOISE_GAUSSIAN:
        return scale * stream.normal()
    return stream.laplace(scale)


def run_trials(
    obs_kind: int,
    param_h: float,
    llr_p: float,
    llr_q: float,
    a_trunc: float,
    a: float,
    b: float,
    noisy: int,
    noise_kind: int,
    s1: float,
    s2: float,
    t_max: int,
    seed: int,
    start: int,
    dec: np.ndarray,
    stop: np.ndarray,
    llr_sum: np.ndarray,
    stat: np.ndarray,
) -> None:
    """Run ``len(dec)`` trials with indices ``start, start+1, ...`` into the output arrays.

    Bernoulli: ``llr = llr_p if x == 1 else llr_q``; Gaussian: ``llr = llr_p * x - llr_q``.
    """
    thr_on = noisy and noise_kind != NOISE_NONE and s1 > 0.0
    qry_on = noisy and noise_kind != NOISE_NONE and s2 > 0.0
    for i in range(len(dec)):
        trial = start + i
        obs = RngStream(seed, (trial, ROLE_OBS))
        lo = -a
        hi = b
        if thr_on:
            thr = RngStream(seed, (trial, ROLE_THRESHOLD))
            lo = -a + _noise(thr, noise_kind, s1)
            hi = b + _noise(thr, noise_kind, s1)
        if qry_on:
            qry = RngStream(seed, (trial, ROLE_QUERY))
        ell = 0.0
        raw = 0.0
        d = CENSORED
        t = 0
        while t < t_max:
            t += 1
            if obs_kind == OBS_BERNOULLI:
                v = llr_p if obs.uniform() < param_h else llr_q
            else:
                x = param_h + obs.normal()
                v = llr_p * x - llr_q
            raw += v
            if v > a_trunc:
                v = a_trunc
            elif v < -a_trunc:
                v = -a_trunc
            ell += v
            if not noisy:
                if ell >= hi:
                    d = REJECT
                    break
                if ell <= lo:
                    d = ACCEPT
                    break
            else:
                qa = ell
                qb = ell
                if qry_on:
                    qa = ell + _noise(qry, noise_kind, s2)
                    qb = ell + _noise(qry, noise_kind, s2)
                if qb > hi:
                    d = REJECT
                    break
                if qa < lo:
                    d = ACCEPT
                    break
        dec[i] = d
        stop[i] = t
        llr_sum[i] = raw
        stat[i] = ell


def run_trial(
    draw_obs: Callable[[RngStream], Any],
    llr_fn: Callable[[Any], float],
    a_trunc: float,
    a: float,
    b: float,
    noisy: bool,
    threshold_noise: Callable[[RngStream], float],
    query_noise: Callable[[RngStream], float],
    t_max: int,
    rng: RngStream,
    trajectory: Optional[list] = None,
) -> tuple[int, int, float, float]:
    """General single trial. Returns ``(decision, stopping_time, raw_llr_sum, statistic)``."""
    obs = rng.child(ROLE_OBS)
    lo, hi = -a, b
    if noisy:
        thr = rng.child(ROLE_THRESHOLD)
        lo = -a + threshold_noise(thr)
        hi = b + threshold_noise(thr)
        qry = rng.child(ROLE_QUERY)
    ell = 0.0
    raw = 0.0
    t = 0
    while t < t_max:
        t += 1
        v = llr_fn(draw_obs(obs))
        raw += v
        if v > a_trunc:
            v = a_trunc
        elif v < -a_trunc:
            v = -a_trunc
        ell += v
        if trajectory is not None:
            trajectory.append((t, ell))
        if not noisy:
            if ell >= hi:
                return REJECT, t, raw, ell
            if ell <= lo:
                return ACCEPT, t, raw, ell
        else:
            qa = ell + query_noise(qry)
            qb = ell + query_noise(qry)
            if qb > hi:
                return REJECT, t, raw, ell
            if qa < lo:
                return ACCEPT, t, raw, ell
    return CENSORED, t, raw, ell


def noise_fn(kind: int, scale: float) -> Callable[[RngStream], float]:
    if kind == NOISE_NONE or scale == 0.0:
        return lambda stream: 0.0
    if kind == NOISE_GAUSSIAN:
        return lambda stream: scale * stream.normal()
    return lambda stream: stream.laplace(scale)
