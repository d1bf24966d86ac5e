"""Command-line front end.

Subcommands: ``run``, ``reproduce``, ``privacy-report`` and ``bounds``. Every
command writes its outputs plus a ``manifest.json`` into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .accounting import best_dp_report
from .bounds import bounds_report
from .mechanisms import ParameterError
from .models import HypothesisPair
from .sequential_private import PrivTestConfig, TestMode, default_t_max
from .simulation import (
    CalibrationError,
    ExperimentConfig,
    calibrate_thresholds,
    estimate_rows,
    oc_asn_sweep,
    rows_to_csv,
    rows_to_json,
    run_experiment,
)
from .sprt import SprtThresholds

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_IO = 4

FULL_SCALE_TRIALS = 100_000
FIGURE_GRID = tuple(float(x) for x in np.geomspace(4.0, 240.0, 16))

REPRODUCE_COLUMNS = ("target", "row", "quantity", "reference", "reproduced", "rel_dev", "stderr", "n", "censored")
SWEEP_COLUMNS = ("pair", "A", "eps_prime", "a", "b", "hypothesis", "expected_t", "expected_t_se",
                 "error_naive", "error_naive_se", "error_importance", "error_importance_se", "n", "censored")


class ConfigError(ParameterError):
    """Invalid configuration; ``field`` names the offending key."""


# -- config handling ----------------------------------------------------------


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def load_config(path: str) -> dict:
    """Read a JSON config; a manifest file is accepted and its embedded config used."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    if "config" in raw and "config_hash" in raw:
        cfg = raw["config"]
        if config_hash(cfg) != raw["config_hash"]:
            raise ConfigError("config_hash", "embedded config does not match its hash")
        return cfg
    return raw


def _num(d: dict, key: str, default=None, required: bool = False) -> Optional[float]:
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(key, "is required")
        return default
    v = d[key]
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"must be a number, got {v!r}")
    return float(v)


def parse_pair(d: Any) -> HypothesisPair:
    if not isinstance(d, dict):
        raise ConfigError("pair", "must be an object")
    try:
        return HypothesisPair.from_dict(d)
    except KeyError as exc:
        raise ConfigError(f"pair.{exc.args[0]}", "is required") from None
    except ValueError as exc:
        raise ConfigError("pair", str(exc)) from None


def parse_test(d: Any, need_thresholds: bool = True) -> PrivTestConfig:
    if not isinstance(d, dict):
        raise ConfigError("test", "must be an object")
    mode = d.get("mode", "privsprt")
    try:
        mode = TestMode(mode)
    except ValueError:
        raise ConfigError("mode", f"expected one of privsprt, laplace, sprt; got {mode!r}") from None
    delta = _num(d, "delta", 1e-5)
    if not 0 < delta < 1:
        raise ConfigError("delta", f"must lie in (0, 1), got {delta}")
    a = _num(d, "a", required=need_thresholds)
    b = _num(d, "b", a)
    if a is None:
        a = b = 1.0  # placeholder, replaced by calibration
    try:
        th = SprtThresholds(a, b)
    except ValueError as exc:
        raise ConfigError("a" if not (a > 0 and math.isfinite(a)) else "b", str(exc)) from None
    t_max = d.get("t_max")
    if t_max is not None and (not isinstance(t_max, int) or t_max < 1):
        raise ConfigError("t_max", "must be a positive integer")
    A = _num(d, "A", math.inf if mode == TestMode.NON_PRIVATE else None, required=mode != TestMode.NON_PRIVATE)
    if not A > 0:
        raise ConfigError("A", f"must be > 0, got {A}")
    s1, s2 = _num(d, "sigma1"), _num(d, "sigma2")
    if mode == TestMode.NON_PRIVATE:
        return PrivTestConfig.non_private(th, A, t_max)
    if s1 is not None or s2 is not None:
        if s1 is None or s2 is None:
            raise ConfigError("sigma1" if s1 is None else "sigma2", "give both noise scales or neither")
        return PrivTestConfig(th, A, s1, s2, t_max, mode, _num(d, "eps_prime", _num(d, "epsilon")), delta)
    if mode == TestMode.GAUSSIAN_PRIVSPRT:
        eps = _num(d, "eps_prime", required=True)
        if not eps > 0:
            raise ConfigError("eps_prime", f"must be > 0, got {eps}")
        return PrivTestConfig.gaussian(th, A, eps, delta, t_max)
    eps = _num(d, "epsilon", _num(d, "eps_prime"), required=True)
    if eps is None or not eps > 0:
        raise ConfigError("epsilon", f"must be > 0, got {eps}")
    return PrivTestConfig.laplace(th, A, eps, t_max)


def parse_experiment(cfg: dict, seed: Optional[int] = None) -> tuple[ExperimentConfig, Optional[dict]]:
    pair = parse_pair(cfg.get("pair"))
    cal = cfg.get("calibrate")
    if cal is not None and not isinstance(cal, dict):
        raise ConfigError("calibrate", "must be an object")
    test = parse_test(cfg.get("test"), need_thresholds=cal is None)
    n = cfg.get("n_trials", 10_000)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError("n_trials", "must be a positive integer")
    s = cfg.get("seed", 0) if seed is None else seed
    if isinstance(s, bool) or not isinstance(s, int) or s < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    noise_source = "explicit" if cfg.get("test", {}).get("sigma1") is not None else "calibrated"
    return ExperimentConfig(pair, test, n, s, noise_source=noise_source), cal


# -- output -------------------------------------------------------------------


def _write(out_dir: Path, name: str, text: str, written: list) -> None:
    path = out_dir / name
    path.write_text(text)
    written.append(str(path))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _dump(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(obj), indent=2, default=_json_default) + "\n"


def _manifest(out_dir: Path, command: str, cfg: dict, seed: int, started: float, written: list) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "artifact_version": __version__,
        "master_seed": seed,
        "wall_time": round(time.time() - started, 3),
        "outputs": list(written),
        "config": cfg,
    }
    (out_dir / "manifest.json").write_text(_dump(manifest))


# -- commands -----------------------------------------------------------------


def _calibrate(exp: ExperimentConfig, cal: dict, threads: int) -> ExperimentConfig:
    t1 = _num(cal, "target_type1", required=True)
    t2 = _num(cal, "target_type2", t1)
    n = int(cal.get("n_per_probe", 10_000))
    sym = bool(cal.get("symmetric", True))
    res = calibrate_thresholds(exp.pair, exp.test, t1, t2, n, sym, exp.master_seed, threads=threads)
    return ExperimentConfig(exp.pair, exp.test.with_thresholds(res.thresholds.a, res.thresholds.b),
                            exp.n_trials, exp.master_seed, noise_source=exp.noise_source)


def cmd_run(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    exp, cal = parse_experiment(cfg, args.seed)
    if cal is not None:
        exp = _calibrate(exp, cal, args.threads)
    rows = estimate_rows(exp, run_experiment(exp, threads=args.threads))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list = []
    _write(out, "results.csv", rows_to_csv(rows), written)
    _write(out, "results.json", rows_to_json(rows) + "\n", written)
    _manifest(out, "run", cfg, exp.master_seed, started, written)
    print(rows_to_csv(rows), end="")
    return EXIT_OK


def cmd_privacy_report(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    exp, _ = parse_experiment(cfg, args.seed)
    delta = exp.test.delta if exp.test.delta is not None else _num(cfg.get("test", {}), "delta", 1e-5)
    if not exp.test.is_private:
        report = {"non_private": True, "epsilon": math.inf, "delta": delta,
                  "sigma1": exp.test.sigma1, "sigma2": exp.test.sigma2, "A": exp.test.a_trunc,
                  "note": "configuration adds no noise; no privacy guarantee"}
    elif exp.test.mode != TestMode.GAUSSIAN_PRIVSPRT:
        raise ConfigError("mode", "privacy reports cover the Gaussian-noise test only")
    else:
        t_max = default_t_max(exp.pair, exp.test)
        report = best_dp_report(exp.pair, exp.test, delta, seed=exp.master_seed, t_max=t_max).to_dict()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list = []
    text = _dump(report)
    _write(out, "privacy_report.json", text, written)
    _manifest(out, "privacy-report", cfg, exp.master_seed, started, written)
    print(text, end="")
    return EXIT_OK


def cmd_bounds(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    exp, _ = parse_experiment(cfg, args.seed)
    t = exp.test
    if not math.isfinite(t.a_trunc):
        raise ConfigError("A", "bounds need a finite truncation level")
    report = bounds_report(exp.pair, t.thresholds.a, t.thresholds.b, t.a_trunc, t.sigma1, t.sigma2)
    report["empirical"] = estimate_rows(exp, run_experiment(exp, threads=args.threads))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list = []
    text = _dump(report)
    _write(out, "bounds.json", text, written)
    _manifest(out, "bounds", cfg, exp.master_seed, started, written)
    print(text, end="")
    return EXIT_OK


def reference_values() -> dict:
    with resources.files("privsprt").joinpath("data/reference_values.json").open() as fh:
        return json.load(fh)


def _row_test(row: dict, delta: float) -> PrivTestConfig:
    th = SprtThresholds(float(row["a"]), float(row["b"]))
    mode = TestMode(row["mode"])
    if mode == TestMode.NON_PRIVATE:
        return PrivTestConfig.non_private(th)
    if mode == TestMode.LAPLACE_ABOVETHRESH:
        return PrivTestConfig.laplace(th, float(row["A"]), float(row["epsilon"]))
    return PrivTestConfig.gaussian(th, float(row["A"]), float(row["eps_prime"]), delta)


def _compare(target, row_id, quantity, ref, est_mean, est_se, n, censored) -> dict:
    rel = (est_mean - ref) / ref if ref else math.nan
    return {"target": target, "row": row_id, "quantity": quantity, "reference": ref, "reproduced": est_mean,
            "rel_dev": rel, "stderr": est_se, "n": n, "censored": censored}


def reproduce_table(target: str, n_trials: int, seed: int, threads: int) -> list[dict]:
    ref = reference_values()
    table = ref["tables"][target]
    pair = HypothesisPair.from_dict(table["pair"])
    out = []
    for row in table["rows"]:
        test = _row_test(row, ref["delta"])
        est = {(e.quantity, e.hypothesis, e.estimator): e
               for e in run_experiment(ExperimentConfig(pair, test, n_trials, seed), threads=threads)}
        e0 = est[("expected_t", "H0", "naive")]
        e1 = est[("expected_t", "H1", "naive")]
        t1 = est[("type1", "H1", "importance")]
        t2 = est[("type2", "H0", "importance")]
        cens = max(e0.censored, e1.censored)
        rid = row["id"]
        if "expected_t" in row:
            mean = 0.5 * (e0.mean + e1.mean)
            se = 0.5 * math.hypot(e0.stderr, e1.stderr)
            out.append(_compare(target, rid, "expected_t", row["expected_t"], mean, se, n_trials, cens))
        else:
            out.append(_compare(target, rid, "expected_t_H0", row["expected_t_H0"], e0.mean, e0.stderr, n_trials, cens))
            out.append(_compare(target, rid, "expected_t_H1", row["expected_t_H1"], e1.mean, e1.stderr, n_trials, cens))
        ref1 = row.get("type1", row.get("error"))
        ref2 = row.get("type2", row.get("error"))
        out.append(_compare(target, rid, "type1", ref1, t1.mean, t1.stderr, n_trials, cens))
        out.append(_compare(target, rid, "type2", ref2, t2.mean, t2.stderr, n_trials, cens))
    return out


def reproduce_figure(target: str, n_trials: int, seed: int, threads: int) -> list[dict]:
    fig = reference_values()["figures"][target]
    delta = reference_values()["delta"]
    rows = []
    for pd in fig["pairs"]:
        pair = HypothesisPair.from_dict(pd)
        for eps in fig["eps_prime"]:
            tmpl = PrivTestConfig.gaussian(SprtThresholds(1.0, 1.0), fig["A"], eps, delta)
            for r in oc_asn_sweep(pair, tmpl, FIGURE_GRID, n_trials=n_trials, seed=seed, threads=threads):
                rows.append({"pair": pair.label(), "A": fig["A"], "eps_prime": eps, **r})
    return rows


def cmd_reproduce(args) -> int:
    started = time.time()
    if not 0 < args.scale <= 1:
        raise ConfigError("scale", f"must lie in (0, 1], got {args.scale}")
    seed = 0 if args.seed is None else args.seed
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    n = max(1, round(args.scale * FULL_SCALE_TRIALS))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list = []
    if args.target.startswith("table"):
        rows = reproduce_table(args.target, n, seed, args.threads)
        cols = REPRODUCE_COLUMNS
    else:
        rows = reproduce_figure(args.target, n, seed, args.threads)
        cols = SWEEP_COLUMNS
    _write(out, f"{args.target}.csv", rows_to_csv(rows, cols), written)
    _write(out, f"{args.target}.json", rows_to_json(rows, cols) + "\n", written)
    cfg = {"target": args.target, "scale": args.scale, "seed": seed, "n_trials": n}
    _manifest(out, "reproduce", cfg, seed, started, written)
    print(rows_to_csv(rows, cols), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privsprt", description="Private sequential probability ratio tests")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default="privsprt_out")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run one experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("reproduce", parents=[common], help="re-run a published table or figure")
    rp.add_argument("target", choices=["table1", "table2", "table3", "fig1", "fig2"])
    rp.add_argument("--scale", type=float, default=1.0, help="fraction of 10^5 trials per estimate")
    rp.set_defaults(func=cmd_reproduce)

    pr = sub.add_parser("privacy-report", parents=[common], help="best (eps, delta) guarantee for a config")
    pr.add_argument("--config", required=True)
    pr.set_defaults(func=cmd_privacy_report)

    b = sub.add_parser("bounds", parents=[common], help="sample-size and error bounds next to estimates")
    b.add_argument("--config", required=True)
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: threads: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
