import numpy as np
import pytest

from isslyap.compfunc import (ComparisonFunction, DomainCapExceeded, KLFunction,
                              ClassIncompatible, compose, kl_eval, verify_class)


def test_eval_linear():
    f = ComparisonFunction.linear(2.0)
    assert f(3.0) == 6.0


def test_eval_zero_at_zero():
    for f in (ComparisonFunction.linear(2.0), ComparisonFunction.power(1.0, 2.0),
              ComparisonFunction.saturating(3.0, 1.0)):
        assert f(0.0) == 0.0


def test_eval_power():
    f = ComparisonFunction.power(1.0, 2.0)
    assert f(0.5) == 0.25


def test_eval_rejects_negative():
    with pytest.raises(ValueError):
        ComparisonFunction.linear(1.0)(-1.0)


def test_invert_linear_exact():
    f = ComparisonFunction.linear(2.0)
    assert f.invert(6.0) == 3.0


def test_invert_power_exact():
    f = ComparisonFunction.power(1.0, 2.0)
    assert f.invert(0.25) == 0.5


def test_invert_tabulated_against_cube_root():
    # bisection on monotone samples of r^3, checked against the analytic root
    grid = np.linspace(0.0, 2.0, 400)
    f = ComparisonFunction.tabulated(grid, grid ** 3)
    r = f.invert(1.0)
    assert abs(r - 1.0) <= 1e-6


def test_invert_beyond_range_raises():
    grid = np.linspace(0.0, 2.0, 50)
    f = ComparisonFunction.tabulated(grid, grid ** 3)
    with pytest.raises(DomainCapExceeded):
        f.invert(100.0)


def test_roundtrip_inverse_property():
    rng = np.random.default_rng(0)
    grid = np.linspace(0.0, 5.0, 300)
    fns = [ComparisonFunction.linear(3.0), ComparisonFunction.power(2.0, 1.5),
           ComparisonFunction.saturating(4.0, 2.0),
           ComparisonFunction.tabulated(grid, np.sinh(grid))]
    for f in fns:
        top = f(min(f.domain_cap, 5.0))
        for y in rng.uniform(0.0, top * 0.999, size=12):
            assert abs(f(f.invert(y)) - y) <= 1e-8 * max(1.0, y)


def test_compose_linear():
    f = compose(ComparisonFunction.linear(2.0), ComparisonFunction.linear(3.0))
    assert f(1.0) == 6.0
    assert f.form == "linear"


def test_compose_identity_is_identity():
    g = ComparisonFunction.power(1.5, 2.0)
    f = compose(ComparisonFunction.identity(), g)
    grid = np.linspace(0.0, 3.0, 17)
    np.testing.assert_allclose(f(grid), g(grid), rtol=1e-12)


def test_compose_gain_chain_symbolic():
    # gamma^{-1}(alpha^{-1}(2r/3)/4) with linear gamma, alpha collapses to r/(6 g C)
    g_slope, C = 2.5, 4.0
    gamma = ComparisonFunction.linear(g_slope)
    alpha = ComparisonFunction.linear(C)
    inner = alpha.inverse_function().scale_arg(2.0 / 3.0).scale_value(0.25)
    sigma = compose(gamma.inverse_function(), inner)
    assert sigma.form == "linear"
    assert abs(sigma.params[0] - 1.0 / (6.0 * g_slope * C)) < 1e-15
    for r in (0.1, 1.0, 7.3):
        assert abs(sigma(r) - r / (6.0 * g_slope * C)) < 1e-12


def test_compose_pointwise_matches_eval():
    grid = np.linspace(0.0, 4.0, 200)
    f = ComparisonFunction.tabulated(grid, np.log1p(grid) * 2.0)
    g = ComparisonFunction.power(0.5, 2.0, domain_cap=4.0)
    fg = compose(f, g)
    # exact on the shared grid, interpolation tolerance between nodes
    for r in fg.grid[::7]:
        assert abs(fg(float(r)) - f(g(float(r)))) <= 1e-12 * max(1.0, f(g(float(r))))
    for r in np.linspace(0.0, fg.domain_cap, 23):
        assert abs(fg(r) - f(g(r))) <= 1e-3 * max(1.0, f(g(r)))


def test_compose_rejects_decreasing():
    grid = np.linspace(0.0, 2.0, 20)
    ell = ComparisonFunction.tabulated(grid, 1.0 / (1.0 + grid), declared_class="L")
    with pytest.raises(ClassIncompatible):
        compose(ell, ComparisonFunction.identity())


def test_verify_class_linear_kinf_passes():
    rep = verify_class(ComparisonFunction.linear(1.0), "Kinf", 64,
                       unbounded_threshold=1e3)
    assert rep.passed


def test_verify_class_saturating_fails_unboundedness():
    rep = verify_class(ComparisonFunction.saturating(2.0, 1.0), "Kinf", 64)
    assert not rep.checks["unbounded_proxy"]
    assert rep.checks["strictly_increasing"]


def test_verify_class_constant_zero_fails_monotonicity():
    grid = np.linspace(0.0, 2.0, 16)
    zero = ComparisonFunction.tabulated(grid, np.zeros_like(grid))
    rep = verify_class(zero, "K", 32)
    assert not rep.checks["strictly_increasing"]


def test_verify_class_l_function():
    grid = np.geomspace(1e-6, 1e6, 200)
    grid = np.concatenate(([0.0], grid))
    ell = ComparisonFunction.tabulated(grid, 1.0 / (1.0 + grid), declared_class="L")
    rep = verify_class(ell, "L", 64)
    assert rep.passed


def test_kl_eval_identity_shape():
    beta = KLFunction.exp_family(1.0, 1.0)
    assert kl_eval(beta, 2.0, 0.0) == 2.0


def test_kl_eval_zero_state():
    beta = KLFunction.exp_family(3.0, 0.5)
    for t in (0.0, 1.0, 10.0):
        assert kl_eval(beta, 0.0, t) == 0.0


def test_kl_eval_closed_form():
    beta = KLFunction.exp_family(2.0, 1.0)
    assert abs(kl_eval(beta, 1.0, np.log(2.0)) - 1.0) < 1e-14


def test_kl_monotonicity_sampled():
    beta = KLFunction.exp_family(2.5, 0.7, ComparisonFunction.power(1.0, 1.5))
    ts = np.linspace(0.0, 10.0, 25)
    rs = np.linspace(0.0, 5.0, 25)
    for r in rs[1:]:
        vals = beta(r, ts)
        assert np.all(np.diff(vals) <= 1e-14)
    for t in ts:
        vals = np.array([beta(r, t) for r in rs])
        assert np.all(np.diff(vals) >= -1e-14)


def test_kl_at_zero_time_section():
    beta = KLFunction.exp_family(2.0, 1.0)
    alpha = beta.at_zero_time()
    assert alpha.form == "linear" and alpha.params[0] == 2.0


def test_kl_factored():
    grid = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, 100)))
    decay = ComparisonFunction.tabulated(grid, np.exp(-np.minimum(grid, 50.0)),
                                         declared_class="L")
    beta = KLFunction.factored(ComparisonFunction.linear(2.0), decay)
    assert abs(beta(3.0, 0.0) - 6.0) < 1e-12


def test_kl_exp_family_requires_m_at_least_one():
    with pytest.raises(ValueError):
        KLFunction.exp_family(0.5, 1.0)


def test_tabulated_csv_roundtrip(tmp_path):
    grid = np.linspace(0.0, 2.0, 40)
    f = ComparisonFunction.tabulated(grid, grid ** 2)
    path = tmp_path / "tab.csv"
    f.to_csv(path)
    g = ComparisonFunction.from_csv(path)
    np.testing.assert_allclose(g.grid, f.grid)
    np.testing.assert_allclose(g.values, f.values)
