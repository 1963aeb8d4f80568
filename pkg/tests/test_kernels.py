import numpy as np
import pytest

from isslyap import _kernels


def _reference_norms_sq(prop, x, n, w):
    out = [w * float(x @ x)]
    y = x.copy()
    for _ in range(n):
        y = prop @ y
        out.append(w * float(y @ y))
    return np.array(out)


def test_numpy_path_against_direct_products():
    rng = np.random.default_rng(0)
    prop = np.eye(5) + 0.01 * rng.standard_normal((5, 5))
    x = rng.standard_normal(5)
    got = _kernels.propagate_norm_sq_l2_numpy(prop, x, 30, 0.7)
    np.testing.assert_allclose(got, _reference_norms_sq(prop, x, 30, 0.7), rtol=1e-13)


def test_sup_norm_path():
    rng = np.random.default_rng(1)
    prop = 0.9 * np.eye(4) + 0.02 * rng.standard_normal((4, 4))
    x = rng.standard_normal(4)
    got = _kernels.propagate_norm_sup_numpy(prop, x, 20)
    y = x.copy()
    expect = [np.max(np.abs(y))]
    for _ in range(20):
        y = prop @ y
        expect.append(np.max(np.abs(y)))
    np.testing.assert_allclose(got, expect, rtol=1e-14)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable or disabled")
def test_numba_matches_numpy():
    rng = np.random.default_rng(2)
    for dim in (1, 3, 16):
        prop = np.ascontiguousarray(np.eye(dim) - 0.05 * rng.standard_normal((dim, dim)))
        x = np.ascontiguousarray(rng.standard_normal(dim))
        a = _kernels.propagate_norm_sq_l2_numba(prop, x, 50, 1.3)
        b = _kernels.propagate_norm_sq_l2_numpy(prop, x, 50, 1.3)
        np.testing.assert_allclose(a, b, rtol=1e-13)
        c = _kernels.propagate_norm_sup_numba(prop, x, 50)
        d = _kernels.propagate_norm_sup_numpy(prop, x, 50)
        np.testing.assert_allclose(c, d, rtol=1e-13)


def test_public_names_bound():
    assert callable(_kernels.propagate_norm_sq_l2)
    assert callable(_kernels.propagate_norm_sup)


def test_env_flag_selects_numpy_path(monkeypatch):
    import importlib
    monkeypatch.setenv("ISSLYAP_NO_NUMBA", "1")
    mod = importlib.reload(_kernels)
    try:
        assert not mod.HAVE_NUMBA
        assert mod.propagate_norm_sq_l2 is mod.propagate_norm_sq_l2_numpy
    finally:
        monkeypatch.delenv("ISSLYAP_NO_NUMBA")
        importlib.reload(mod)
