"""Kernel selection and compiled/Python parity."""
import os
import subprocess
import sys

import numpy as np
import pytest

from ckyblowup import _backend, _fallback


def _default_backend(env_value):
    env = dict(os.environ)
    env.pop("CKYBLOWUP_BACKEND", None)
    if env_value is not None:
        env["CKYBLOWUP_BACKEND"] = env_value
    out = subprocess.run([sys.executable, "-c", "import ckyblowup; print(ckyblowup.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_environment_forces_python():
    assert _default_backend("python") == "python"


def test_default_prefers_compiled():
    expected = "compiled" if "compiled" in _backend.available() else "python"
    assert _default_backend(None) == expected


def test_named_lookup():
    assert _backend.kernels("python") is _fallback
    assert _backend.kernels("fallback") is _fallback
    if "compiled" not in _backend.available():
        with pytest.raises(ImportError):
            _backend.kernels("compiled")


def test_both_expose_the_same_kernels():
    names = {"NAME", "rk4_near", "rk4_far", "validated_run", "velocity", "theta_x",
             "max_compression", "rk4_particles"}
    for b in _backend.available():
        k = _backend.kernels(b)
        assert names <= set(dir(k)), b


needs_compiled = pytest.mark.skipif("compiled" not in _backend.available(),
                                    reason="compiled core not built")


@needs_compiled
def test_rk4_far_bitwise_parity():
    args = (3.3, 0.5, 4.0, 3000, -1.0, 0.3, 0.8)
    a = _backend.kernels("compiled").rk4_far(*args, stride=100)
    b = _backend.kernels("python").rk4_far(*args, stride=100)
    assert a[:3] == b[:3]
    for x, y in zip(a[3:], b[3:]):
        assert np.array_equal(np.asarray(x), np.asarray(y))


@needs_compiled
def test_rk4_near_bitwise_parity():
    args = (3.0, 1e-3, 0.5, 2000, -2.5e-3, 1e-6, 1e-6)
    a = _backend.kernels("compiled").rk4_near(*args)
    b = _backend.kernels("python").rk4_near(*args)
    assert a[:3] == b[:3]


@needs_compiled
def test_particle_operator_parity():
    rng = np.random.default_rng(9)
    q = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, 500)), [1.0]])
    w = rng.normal(size=502)
    w[0] = 0.0
    th = rng.uniform(size=502)
    c, p = _backend.kernels("compiled"), _backend.kernels("python")
    assert np.array_equal(np.asarray(c.velocity(q, w)), p.velocity(q, w))
    assert np.array_equal(np.asarray(c.theta_x(q, th)), p.theta_x(q, th))
    u = p.velocity(q, w)
    assert c.max_compression(q, u) == p.max_compression(q, u)
