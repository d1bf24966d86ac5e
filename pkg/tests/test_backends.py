import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privsprt import _backend
from privsprt.models import HypothesisPair
from privsprt.sequential_private import PrivTestConfig
from privsprt.simulation import run_batch
from privsprt.sprt import SprtThresholds

compiled = pytest.mark.skipif("compiled" not in _backend.AVAILABLE, reason="extension not built")

PAIRS = [HypothesisPair.bernoulli(0.7, 0.2), HypothesisPair.gaussian_mean(0.0, 1.0),
         HypothesisPair.gaussian_mean(0.0, 2.0)]


def _configs(a, b, A):
    th = SprtThresholds(a, b)
    return [PrivTestConfig.non_private(th), PrivTestConfig.non_private(th, A),
            PrivTestConfig.gaussian(th, A, 1.0, 1e-5, t_max=20_000), PrivTestConfig.laplace(th, A, 1.0, t_max=20_000)]


def test_python_backend_always_available():
    assert "python" in _backend.AVAILABLE
    with pytest.raises(ValueError):
        _backend.get_runner("fortran")


@compiled
def test_extension_is_the_default():
    assert _backend.DEFAULT == "compiled"


@compiled
@settings(max_examples=20)
@given(st.sampled_from(PAIRS), st.floats(0.5, 10), st.floats(0.5, 10), st.floats(0.1, 2),
       st.integers(0, 2**40), st.sampled_from([0, 1]), st.integers(0, 3))
def test_backends_bit_identical(pair, a, b, A, seed, h, which):
    cfg = _configs(a, b, A)[which]
    py = run_batch(pair, cfg, h, 60, seed=seed, backend="python")
    cc = run_batch(pair, cfg, h, 60, seed=seed, backend="compiled")
    for f in ("decisions", "stops", "llr_sums", "stats"):
        np.testing.assert_array_equal(getattr(py, f), getattr(cc, f))


def test_environment_forces_fallback():
    env = {**os.environ, "PRIVSPRT_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", "import privsprt; print(privsprt.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
