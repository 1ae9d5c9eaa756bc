"""Cross-checks between the compiled and pure-numpy kernel backends."""

import numpy as np
import pytest

from lieopt import Kind, LieBatch, act, backend, compose, exp_map, inverse, log_map, random_tangent

from conftest import ALGEBRA_DIMS, clip_rotation

pytestmark = pytest.mark.skipif(
    "compiled" not in backend.available(), reason="compiled backend not built")

KINDS = [Kind.so3, Kind.se3, Kind.rxso3, Kind.sim3]


def _run_all(x, p):
    g = exp_map(x)
    return {
        "exp": g.values,
        "log": log_map(g).values,
        "mul": compose(g, g).values,
        "inv": inverse(g).values,
        "act": act(g, p),
    }


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_backend_agreement(kind, dtype):
    x = random_tangent(kind, (400,), sigma=1.2, seed=5, dtype=np.float64)
    vals = clip_rotation(x.values, kind.value, np.pi - 0.1).astype(dtype)
    xb = LieBatch._wrap(kind, vals)
    p = np.random.default_rng(6).normal(size=(400, 3)).astype(dtype)
    with backend.use("compiled"):
        a = _run_all(xb, p)
    with backend.use("python"):
        b = _run_all(xb, p)
    rtol = 1e-14 if dtype == np.float64 else 2e-6
    for name in a:
        av, bv = a[name].astype(np.float64), b[name].astype(np.float64)
        scale = 1.0 + np.abs(bv).max()
        assert np.abs(av - bv).max() < rtol * scale, name


def test_small_angle_agreement():
    # both backends must take the same branches near the thresholds
    eps = np.finfo(np.float64).eps
    thetas = [0.0, eps / 2, eps, eps * 2, eps ** 0.5, eps ** 0.25, 1e-3, 0.1]
    x = np.zeros((len(thetas), 3))
    x[:, 0] = thetas
    xb = LieBatch._wrap(Kind.so3, x)
    with backend.use("compiled"):
        a = log_map(exp_map(xb)).values
    with backend.use("python"):
        b = log_map(exp_map(xb)).values
    assert np.abs(a - b).max() < 1e-18


def test_wmat_corner_agreement():
    # sim3 W-matrix branch corners: small theta x {zero, tiny, medium, large} sigma
    cases = []
    for th in (0.0, 1e-12, 1e-5, 1e-3, 0.5):
        for sg in (0.0, 1e-14, 1e-5, 0.05, 0.3, 2.0, -2.0):
            cases.append([0.1, -0.2, 0.3, th, th / 2, th / 3, sg])
    x = np.array(cases)
    xb = LieBatch._wrap(Kind.sim3, x)
    with backend.use("compiled"):
        a = exp_map(xb).values
    with backend.use("python"):
        b = exp_map(xb).values
    assert np.abs(a - b).max() < 1e-14


def test_env_override(monkeypatch):
    assert backend.active_name() in ("compiled", "python")
    with backend.use("python"):
        assert backend.kernels().NAME == "python"
    with backend.use("compiled"):
        assert backend.kernels().NAME == "compiled"
    with pytest.raises(ValueError):
        backend.set_backend("nope")


def test_readonly_inputs():
    x = np.broadcast_to(np.array([0.1, 0.2, 0.3]), (10, 3))
    assert not x.flags.writeable
    with backend.use("compiled"):
        out = backend.kernels().so3_exp(np.ascontiguousarray(x))
        assert out.shape == (10, 4)
