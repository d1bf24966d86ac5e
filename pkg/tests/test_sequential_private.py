import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privsprt.mechanisms import NO_NOISE, NoiseMechanism, ParameterError
from privsprt.models import Hypothesis, HypothesisPair
from privsprt.rng import RngStream
from privsprt.sequential_private import (
    Answer,
    PrivTestConfig,
    TestMode,
    default_t_max,
    gen_above_thresh,
    run_laplace_abovethresh_test,
    run_privsprt,
    run_test,
)
from privsprt.simulation import run_batch
from privsprt.sprt import Decision, SprtThresholds, run_sprt, simulate_one

GAUSS01 = HypothesisPair.gaussian_mean(0.0, 1.0)
BERN = HypothesisPair.bernoulli(0.7, 0.2)


def test_gen_above_thresh_noiseless_example():
    stop, answers = gen_above_thresh([1.0, 2.0, 3.0], 1.0, 2.5, NO_NOISE, NO_NOISE, RngStream(0))
    assert stop == 3
    assert answers == [Answer.BOTTOM, Answer.BOTTOM, Answer.TOP]


def test_gen_above_thresh_runs_out():
    stop, answers = gen_above_thresh([0.0] * 10, 1.0, 5.0, NO_NOISE, NO_NOISE, RngStream(0), t_max=4)
    assert stop is None and len(answers) == 4


def test_gen_above_thresh_negative_sensitivity():
    with pytest.raises(ParameterError):
        gen_above_thresh([1.0], -1.0, 0.0, NO_NOISE, NO_NOISE, RngStream(0))


def test_gen_above_thresh_halts_half_the_time_at_equal_level():
    n = 4000
    m2 = NoiseMechanism.gaussian(1.0)
    hits = sum(gen_above_thresh([0.0], 1.0, 0.0, NO_NOISE, m2, RngStream(9, (i,)))[0] == 1 for i in range(n))
    assert abs(hits / n - 0.5) < 3 * math.sqrt(0.25 / n)


def _zero_noise_cfg(th, mode=TestMode.GAUSSIAN_PRIVSPRT):
    return PrivTestConfig(th, math.inf, 0.0, 0.0, t_max=10**6, mode=mode)


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.floats(0.3, 6), st.floats(0.3, 6), st.sampled_from([0, 1]))
def test_zero_noise_matches_plain_sprt(seed, a, b, h):
    th = SprtThresholds(a, b)
    ref = run_sprt(GAUSS01, th, h, RngStream(seed, (0,)))
    for mode, fn in ((TestMode.GAUSSIAN_PRIVSPRT, run_privsprt),
                     (TestMode.LAPLACE_ABOVETHRESH, run_laplace_abovethresh_test)):
        out = fn(GAUSS01, _zero_noise_cfg(th, mode), h, RngStream(seed, (0,)))
        assert (out.decision, out.stopping_time) == (ref.decision, ref.stopping_time)


def test_wrong_mode_rejected():
    th = SprtThresholds(1, 1)
    with pytest.raises(ParameterError):
        run_privsprt(GAUSS01, PrivTestConfig.laplace(th, 0.5, 1.0), 0, RngStream(0))
    with pytest.raises(ParameterError):
        run_laplace_abovethresh_test(GAUSS01, PrivTestConfig.gaussian(th, 0.5, 1.0, 1e-5), 0, RngStream(0))


def test_config_validation():
    th = SprtThresholds(1, 1)
    with pytest.raises(ParameterError):
        PrivTestConfig(th, 0.0)
    with pytest.raises(ParameterError):
        PrivTestConfig(th, 1.0, sigma1=-1.0)
    with pytest.raises(ParameterError):
        PrivTestConfig(th, 1.0, t_max=0)
    with pytest.raises(ParameterError):
        PrivTestConfig.gaussian(th, 1.0, 1.0, 1.5)


def test_noise_draw_counts():
    calls = {"thr": 0, "qry": 0}

    def thr(stream):
        calls["thr"] += 1
        return 0.3 * stream.normal()

    def qry(stream):
        calls["qry"] += 1
        return 0.3 * stream.normal()

    for seed in range(50):
        calls.update(thr=0, qry=0)
        out = simulate_one(BERN, Hypothesis.H0, RngStream(seed), 0.5, 3.0, 3.0, True, thr, qry, 10_000)
        assert calls["thr"] == 2
        assert calls["qry"] == 2 * out.stopping_time


def test_noiseless_branch_draws_nothing():
    def boom(stream):
        raise AssertionError("noise drawn in the noiseless branch")

    out = simulate_one(BERN, Hypothesis.H0, RngStream(1), 0.5, 3.0, 3.0, False, boom, boom, 10_000)
    assert out.decision != Decision.CENSORED


def test_reject_checked_before_accept():
    seq = iter([-10.0, 10.0])
    out = simulate_one(GAUSS01, Hypothesis.H0, RngStream(0), math.inf, 1.0, 1.0, True,
                       lambda s: 0.0, lambda s: next(seq), 100)
    assert out.decision == Decision.REJECT_H0 and out.stopping_time == 1


@settings(max_examples=15)
@given(st.integers(0, 2**31), st.floats(0.5, 8), st.floats(0.5, 8), st.floats(0.01, 4),
       st.sampled_from([0, 1]))
def test_raising_b_never_shortens_a_trial(seed, a, b, extra, h):
    # common random numbers: the per-trial streams do not depend on thresholds
    base = PrivTestConfig.gaussian(SprtThresholds(a, b), 0.5, 2.0, 1e-5, t_max=5000)
    hi = base.with_thresholds(a, b + extra)
    lo_b = run_batch(BERN, base, h, 300, seed=seed)
    hi_b = run_batch(BERN, hi, h, 300, seed=seed)
    assert np.all(hi_b.stops >= lo_b.stops)
    assert np.all((hi_b.decisions == Decision.REJECT_H0) <= (lo_b.decisions == Decision.REJECT_H0))


def test_default_t_max():
    th = SprtThresholds(5, 5)
    assert default_t_max(BERN, PrivTestConfig.non_private(th)) == 10**6
    assert default_t_max(BERN, PrivTestConfig.gaussian(th, 0.5, 1.0, 1e-5, t_max=77)) == 77
    cap = default_t_max(BERN, PrivTestConfig.gaussian(th, 0.5, 1.0, 1e-5))
    assert 50 * 5 / 0.3 < cap < 10**6


def test_dispatch_matches_direct_runner():
    th = SprtThresholds(4, 4)
    cfg = PrivTestConfig.gaussian(th, 0.5, 1.0, 1e-5)
    for i in range(20):
        assert run_test(BERN, cfg, 1, RngStream(2, (i,))) == run_privsprt(BERN, cfg, 1, RngStream(2, (i,)))


def test_importance_weight_for_noisy_trials():
    cfg = PrivTestConfig.gaussian(SprtThresholds(3, 3), 0.5, 1.0, 1e-5)
    out = run_privsprt(BERN, cfg, Hypothesis.H0, RngStream(5, (0,)), importance=True)
    assert out.importance_weight == pytest.approx(math.exp(out.llr_sum))


def test_statistic_is_clipped_sum():
    cfg = PrivTestConfig.gaussian(SprtThresholds(20, 20), 0.25, 1.0, 1e-5, t_max=50)
    out = run_privsprt(GAUSS01, cfg, Hypothesis.H1, RngStream(3), record_trajectory=True)
    steps = np.diff([0.0] + [s for _, s in out.trajectory])
    assert np.all(np.abs(steps) <= 0.25 + 1e-12)
