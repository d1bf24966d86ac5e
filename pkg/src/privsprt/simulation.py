"""Monte Carlo engine: batched trials, naive and importance-sampled error
estimates, stopping-time estimates, threshold calibration and sweeps.

Trial ``i`` always draws from streams keyed on ``(master_seed, i, role)``, so
results do not depend on the thread count or chunking, and different
thresholds or noise levels see common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _backend, _fallback
from .mechanisms import ParameterError
from .models import (
    Hypothesis,
    HypothesisPair,
    UnsupportedOperation,
    bernoulli_llr_values,
    gaussian_llr_coefficients,
    sensitivity,
)
from .rng import RngStream
from .sequential_private import PrivTestConfig, TestMode, default_t_max, run_test
from .sprt import SprtThresholds

CHUNK = 2048
DEFAULT_PROBE_TRIALS = 10_000
DEFAULT_FINAL_TRIALS = 100_000

CSV_COLUMNS = ("quantity", "pair", "A", "eps_prime", "delta", "sigma1", "sigma2", "a", "b",
               "hypothesis", "estimator", "mean", "stderr", "n", "censored")


class CalibrationError(RuntimeError):
    """Threshold search ran out of probes; ``best`` holds the closest state seen."""

    def __init__(self, message: str, best: "CalibrationResult"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_trials: int
    estimator: str = "naive"
    censored: int = 0
    quantity: str = ""
    hypothesis: Optional[str] = None

    @property
    def flagged(self) -> bool:
        return self.censored > 0

    @property
    def censored_rate(self) -> float:
        return self.censored / self.n_trials


@dataclass(frozen=True)
class ExperimentConfig:
    pair: HypothesisPair
    test: PrivTestConfig
    n_trials: int = DEFAULT_FINAL_TRIALS
    master_seed: int = 0
    record_trajectories: bool = False
    noise_source: str = "calibrated"  # or "explicit"

    def __post_init__(self):
        if self.n_trials < 1:
            raise ParameterError("n_trials", "must be >= 1")
        if self.master_seed < 0:
            raise ParameterError("seed", "must be non-negative")


@dataclass
class TrialBatch:
    hypothesis: Hypothesis
    decisions: np.ndarray
    stops: np.ndarray
    llr_sums: np.ndarray
    stats: np.ndarray
    t_max: int
    trajectories: Optional[list] = None

    @property
    def n(self) -> int:
        return len(self.decisions)

    @property
    def censored(self) -> int:
        return int(np.count_nonzero(self.decisions == _fallback.CENSORED))


def _kernel_params(pair: HypothesisPair, h: Hypothesis) -> tuple[int, float, float, float]:
    if pair.kind == "bernoulli":
        one, zero = bernoulli_llr_values(pair)
        return _fallback.OBS_BERNOULLI, pair.params[h], one, zero
    slope, offset = gaussian_llr_coefficients(pair)
    return _fallback.OBS_GAUSSIAN, pair.params[h], slope, offset


def run_batch(
    pair: HypothesisPair,
    test: PrivTestConfig,
    hypothesis,
    n_trials: int,
    seed: int = 0,
    threads: int = 1,
    backend: Optional[str] = None,
    record_trajectories: bool = False,
) -> TrialBatch:
    """Run ``n_trials`` independent trials under ``hypothesis``."""
    h = Hypothesis.parse(hypothesis)
    t_max = default_t_max(pair, test)
    dec = np.empty(n_trials, dtype=np.int8)
    stop = np.empty(n_trials, dtype=np.int64)
    raw = np.empty(n_trials, dtype=np.float64)
    stat = np.empty(n_trials, dtype=np.float64)
    if not pair.is_builtin or record_trajectories:
        trajs = [] if record_trajectories else None
        for i in range(n_trials):
            out = run_test(pair, test, h, RngStream(seed, (i,)), record_trajectory=record_trajectories)
            dec[i], stop[i], raw[i], stat[i] = int(out.decision), out.stopping_time, out.llr_sum, out.statistic
            if trajs is not None:
                trajs.append(out.trajectory)
        return TrialBatch(h, dec, stop, raw, stat, t_max, trajs)

    runner = _backend.get_runner(backend)
    obs_kind, param_h, llr_p, llr_q = _kernel_params(pair, h)
    a, b = test.thresholds.a, test.thresholds.b

    def work(lo: int) -> None:
        hi = min(lo + CHUNK, n_trials)
        runner(obs_kind, param_h, llr_p, llr_q, test.a_trunc, a, b, int(test.noisy), test.noise_kind,
               test.sigma1, test.sigma2, t_max, seed, lo, dec[lo:hi], stop[lo:hi], raw[lo:hi], stat[lo:hi])

    starts = range(0, n_trials, CHUNK)
    if threads <= 1 or n_trials <= CHUNK:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return TrialBatch(h, dec, stop, raw, stat, t_max)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(np.sum(values) / n)
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def error_from_batch(batch: TrialBatch, which: str, estimator: str) -> McEstimate:
    """Type I / II error estimate from a batch sampled under the matching hypothesis.

    Naive Type I needs H0 samples, importance Type I needs H1 samples (and the
    mirror for Type II). Censored trials count as "no error" and are reported.
    """
    which = which.lower()
    if which not in ("type1", "type2"):
        raise ParameterError("which", f"expected type1 or type2, got {which!r}")
    if estimator not in ("naive", "importance"):
        raise ParameterError("estimator", f"expected naive or importance, got {estimator!r}")
    target = _fallback.REJECT if which == "type1" else _fallback.ACCEPT
    needed = {("type1", "naive"): Hypothesis.H0, ("type1", "importance"): Hypothesis.H1,
              ("type2", "naive"): Hypothesis.H1, ("type2", "importance"): Hypothesis.H0}[(which, estimator)]
    if batch.hypothesis != needed:
        raise ParameterError("hypothesis", f"{estimator} {which} estimate needs trials sampled under {needed.name}")
    hit = batch.decisions == target
    if estimator == "naive":
        values = hit.astype(np.float64)
    else:
        # likelihood ratio of the other hypothesis, from the raw log-ratio sum
        log_w = -batch.llr_sums if batch.hypothesis == Hypothesis.H1 else batch.llr_sums
        values = np.where(hit, np.exp(np.where(hit, log_w, 0.0)), 0.0)
    mean, se = _mean_se(values)
    return McEstimate(mean, se, batch.n, estimator, batch.censored, which, batch.hypothesis.name)


def stopping_time_from_batch(batch: TrialBatch) -> McEstimate:
    mean, se = _mean_se(batch.stops.astype(np.float64))
    return McEstimate(mean, se, batch.n, "naive", batch.censored, "expected_t", batch.hypothesis.name)


def estimate_error(cfg: ExperimentConfig, which: str, estimator: str = "importance",
                   threads: int = 1, backend: Optional[str] = None) -> McEstimate:
    if estimator == "importance" and cfg.pair.kind == "custom" and (
            cfg.pair.logpdf0 is None or cfg.pair.logpdf1 is None):
        raise UnsupportedOperation("importance sampling needs both densities")
    h = {("type1", "naive"): Hypothesis.H0, ("type1", "importance"): Hypothesis.H1,
         ("type2", "naive"): Hypothesis.H1, ("type2", "importance"): Hypothesis.H0}.get((which, estimator))
    if h is None:
        raise ParameterError("estimator", f"unknown combination {which!r}/{estimator!r}")
    batch = run_batch(cfg.pair, cfg.test, h, cfg.n_trials, cfg.master_seed, threads, backend)
    return error_from_batch(batch, which, estimator)


def estimate_expected_t(cfg: ExperimentConfig, hypothesis, threads: int = 1,
                        backend: Optional[str] = None) -> McEstimate:
    batch = run_batch(cfg.pair, cfg.test, hypothesis, cfg.n_trials, cfg.master_seed, threads, backend)
    return stopping_time_from_batch(batch)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, backend: Optional[str] = None) -> list[McEstimate]:
    """All six estimates from one batch per hypothesis.

    Order: E0[T], naive Type I, importance Type II (H0 batch), then E1[T],
    naive Type II, importance Type I (H1 batch).
    """
    out = []
    for h in (Hypothesis.H0, Hypothesis.H1):
        batch = run_batch(cfg.pair, cfg.test, h, cfg.n_trials, cfg.master_seed, threads, backend)
        out.append(stopping_time_from_batch(batch))
        naive = "type1" if h == Hypothesis.H0 else "type2"
        other = "type2" if h == Hypothesis.H0 else "type1"
        out.append(error_from_batch(batch, naive, "naive"))
        out.append(error_from_batch(batch, other, "importance"))
    return out


# -- calibration ---------------------------------------------------------------


@dataclass
class CalibrationResult:
    thresholds: SprtThresholds
    type1: float
    type2: float
    probes: int
    history: list = field(default_factory=list)


def _in_window(value: float, target: float) -> bool:
    return target / 2.0 <= value <= 2.0 * target


def calibrate_thresholds(
    pair: HypothesisPair,
    template: PrivTestConfig,
    target_type1: float,
    target_type2: float,
    n_trials_per_probe: int = DEFAULT_PROBE_TRIALS,
    symmetric: bool = True,
    seed: int = 0,
    max_probes: int = 60,
    threads: int = 1,
    backend: Optional[str] = None,
) -> CalibrationResult:
    """Search thresholds whose importance-sampled errors land in ``[t/2, 2t]``.

    Symmetric mode bisects a common ``a = b`` geometrically on the geometric
    mean of the two error ratios. Otherwise ``b`` is tuned for Type I and
    ``a`` for Type II in alternating rounds. The first probe is the larger of
    ``(sensitivity/2) log(1/t)`` and ``sqrt(sigma1^2 + sigma2^2) sqrt(2 log(1/t))``.
    """
    for name, t in (("target_type1", target_type1), ("target_type2", target_type2)):
        if not 0 < t < 0.5:
            raise ParameterError(name, f"must lie in (0, 0.5), got {t}")
    half_sens = sensitivity(pair, template.a_trunc) / 2.0
    if not math.isfinite(half_sens) or half_sens <= 0:
        half_sens = 1.0
    noise = math.hypot(template.sigma1, template.sigma2)

    def start(target: float) -> float:
        # drift-driven (Wald-like) or noise-tail-driven, whichever is larger
        log_inv = math.log(1.0 / target)
        return max(half_sens * log_inv, noise * math.sqrt(2.0 * log_inv))

    history: list = []
    state = {"best": None, "probes": 0}

    def probe(a: float, b: float) -> tuple[float, float]:
        if state["probes"] >= max_probes:
            raise _Exhausted
        state["probes"] += 1
        cfg = template.with_thresholds(a, b)
        h1 = run_batch(pair, cfg, Hypothesis.H1, n_trials_per_probe, seed, threads, backend)
        h0 = run_batch(pair, cfg, Hypothesis.H0, n_trials_per_probe, seed, threads, backend)
        e1 = error_from_batch(h1, "type1", "importance").mean
        e2 = error_from_batch(h0, "type2", "importance").mean
        history.append((a, b, e1, e2))
        score = abs(math.log(max(e1, 1e-300) / target_type1)) + abs(math.log(max(e2, 1e-300) / target_type2))
        if state["best"] is None or score < state["best"][0]:
            state["best"] = (score, a, b, e1, e2)
        return e1, e2

    def result() -> CalibrationResult:
        _, a, b, e1, e2 = state["best"]
        return CalibrationResult(SprtThresholds(a, b), e1, e2, state["probes"], history)

    def ok(e1, e2) -> bool:
        return _in_window(e1, target_type1) and _in_window(e2, target_type2)

    try:
        if symmetric:
            def ratio(x):
                e1, e2 = probe(x, x)
                if ok(e1, e2):
                    return 0.0
                return 0.5 * (math.log(max(e1, 1e-300) / target_type1)
                              + math.log(max(e2, 1e-300) / target_type2))
            _bisect(ratio, start(math.sqrt(target_type1 * target_type2)))
        else:
            a = b = start(min(target_type1, target_type2))
            for _ in range(6):
                b = _bisect(lambda x: _side(probe(a, x)[0], target_type1), b)
                a = _bisect(lambda x: _side(probe(x, b)[1], target_type2), a)
                e1, e2 = probe(a, b)
                if ok(e1, e2):
                    break
    except _Exhausted:
        pass
    best = result()
    if not ok(best.type1, best.type2):
        raise CalibrationError(
            f"no thresholds within [t/2, 2t] after {best.probes} probes "
            f"(best a={best.thresholds.a:.6g}, b={best.thresholds.b:.6g}, "
            f"type1={best.type1:.3g}, type2={best.type2:.3g})", best)
    return best


class _Exhausted(Exception):
    pass


def _side(err: float, target: float) -> float:
    if _in_window(err, target):
        return 0.0
    return math.log(max(err, 1e-300) / target)


def _bisect(f, x0: float) -> float:
    """Geometric root search of a decreasing ``f``; 0 means "accept"."""
    v = f(x0)
    if v == 0.0:
        return x0
    lo = hi = x0
    if v > 0:  # errors too large: move thresholds up
        while v > 0:
            lo, hi = hi, hi * 2.0
            v = f(hi)
        if v == 0.0:
            return hi
    else:
        while v < 0:
            lo, hi = lo / 2.0, lo
            v = f(lo)
        if v == 0.0:
            return lo
    while True:
        if hi <= lo * (1.0 + 1e-6):
            # the estimate jumps across the window between adjacent floats
            raise _Exhausted
        mid = math.sqrt(lo * hi)
        v = f(mid)
        if v == 0.0:
            return mid
        if v > 0:
            lo = mid
        else:
            hi = mid


# -- sweeps and output --------------------------------------------------------


def oc_asn_sweep(
    pair: HypothesisPair,
    template: PrivTestConfig,
    threshold_grid: Iterable,
    hypotheses: Sequence = (Hypothesis.H0, Hypothesis.H1),
    n_trials: int = DEFAULT_PROBE_TRIALS,
    seed: int = 0,
    threads: int = 1,
    backend: Optional[str] = None,
) -> list[dict]:
    """One row per grid point and hypothesis with E[T] and the error under it.

    Grid entries are either a scalar (``a = b``) or an ``(a, b)`` pair. Under
    H0 the error is Type I, under H1 it is Type II; both naive and
    importance-sampled values are given (the latter from the other
    hypothesis' batch on the same random numbers).
    """
    rows = []
    for point in threshold_grid:
        a, b = (point, point) if np.isscalar(point) else point
        cfg = template.with_thresholds(float(a), float(b))
        batches = {h: run_batch(pair, cfg, h, n_trials, seed, threads, backend)
                   for h in (Hypothesis.H0, Hypothesis.H1)}
        for hyp in hypotheses:
            h = Hypothesis.parse(hyp)
            which = "type1" if h == Hypothesis.H0 else "type2"
            et = stopping_time_from_batch(batches[h])
            naive = error_from_batch(batches[h], which, "naive")
            imp = error_from_batch(batches[h.other], which, "importance")
            rows.append({
                "a": float(a), "b": float(b), "hypothesis": h.name,
                "expected_t": et.mean, "expected_t_se": et.stderr,
                "error_naive": naive.mean, "error_naive_se": naive.stderr,
                "error_importance": imp.mean, "error_importance_se": imp.stderr,
                "censored": et.censored, "n": n_trials,
            })
    return rows


def expected_t_at_error(rows: Sequence[dict], levels: Sequence[float], error_key: str = "error_importance") -> np.ndarray:
    """Interpolate E[T] against log(1/error) at the requested error levels.

    Returns NaN where a level is outside the sweep's error range.
    """
    pts = sorted((-math.log(r[error_key]), r["expected_t"]) for r in rows if r[error_key] > 0)
    if len(pts) < 2:
        return np.full(len(levels), np.nan)
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    # keep the running maximum so that x is increasing for np.interp
    x = np.maximum.accumulate(x)
    q = -np.log(np.asarray(levels, dtype=float))
    out = np.interp(q, x, y)
    out[(q < x[0]) | (q > x[-1])] = np.nan
    return out


def estimate_rows(cfg: ExperimentConfig, estimates: Iterable[McEstimate]) -> list[dict]:
    t = cfg.test
    base = {
        "pair": cfg.pair.label(), "A": t.a_trunc,
        "eps_prime": t.epsilon if t.epsilon is not None else (math.inf if t.mode == TestMode.NON_PRIVATE else ""),
        "delta": t.delta if t.delta is not None else "",
        "sigma1": t.sigma1, "sigma2": t.sigma2, "a": t.thresholds.a, "b": t.thresholds.b,
    }
    rows = []
    for e in estimates:
        rows.append({**base, "quantity": e.quantity, "hypothesis": e.hypothesis, "estimator": e.estimator,
                     "mean": e.mean, "stderr": e.stderr, "n": e.n_trials, "censored": e.censored})
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def rows_to_csv(rows: Iterable[dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def rows_to_json(rows: Iterable[dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        return v
    return json.dumps([{c: clean(r.get(c)) for c in columns} for r in rows], indent=2, sort_keys=False)


def with_trials(cfg: ExperimentConfig, n_trials: int) -> ExperimentConfig:
    return replace(cfg, n_trials=n_trials)
