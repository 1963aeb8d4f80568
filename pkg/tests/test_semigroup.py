import numpy as np
import pytest

from isslyap.semigroup import (DecayCertificate, GeneratorModel, NoDecayDetected,
                               apply_semigroup, certify_decay, discretize, norm_curve,
                               operator_norm, propagator)


def test_discretize_scalar():
    G = discretize("scalar", 1, a=-1.0)
    np.testing.assert_array_equal(G.matrix, [[-1.0]])


def test_discretize_heat_eigenvalues():
    # Dirichlet Laplacian spectrum -(k pi / L)^2, closed form
    G = discretize("heat_dirichlet", 3, length=1.0)
    np.testing.assert_allclose(np.diag(G.matrix),
                               [-np.pi ** 2, -4 * np.pi ** 2, -9 * np.pi ** 2],
                               rtol=1e-14)


def test_discretize_jordan2():
    G = discretize("jordan2", 2, eig=-1.0, coupling=10.0)
    np.testing.assert_array_equal(G.matrix, [[-1.0, 10.0], [0.0, -1.0]])


def test_discretize_transport_is_lower_bidiagonal():
    G = discretize("transport", 4, speed=1.0, damping=0.5, length=1.0)
    A = G.matrix
    assert np.all(np.triu(A, 1) == 0.0)
    np.testing.assert_allclose(np.diag(A), -4.5)
    np.testing.assert_allclose(np.diag(A, -1), 4.0)
    assert G.weight == 0.25


def test_discretize_rejects_unknown():
    with pytest.raises(ValueError):
        discretize("wave", 4)


def test_apply_scalar_closed_form():
    G = discretize("scalar", 1, a=-1.0)
    y = apply_semigroup(G, 1.0, np.array([1.0]))
    assert abs(y[0] - np.exp(-1.0)) < 1e-15


def test_apply_t_zero_is_identity():
    G = discretize("jordan2")
    x = np.array([0.3, -2.0])
    np.testing.assert_array_equal(apply_semigroup(G, 0.0, x), x)


def test_apply_heat_mode_closed_form():
    G = discretize("heat_dirichlet", 3)
    e1 = np.array([1.0, 0.0, 0.0])
    y = apply_semigroup(G, 0.1, e1)
    np.testing.assert_allclose(y, [np.exp(-0.1 * np.pi ** 2), 0.0, 0.0], rtol=1e-14)


def test_operator_norm_scalar():
    G = discretize("scalar", 1, a=-1.0)
    assert abs(operator_norm(G, 2.0) - np.exp(-2.0)) < 1e-14


def test_operator_norm_identity_at_zero():
    for G in (discretize("scalar"), discretize("jordan2"), discretize("heat_dirichlet", 4)):
        assert operator_norm(G, 0.0) == 1.0


def test_operator_norm_jordan_transient_growth():
    G = discretize("jordan2", 2, eig=-1.0, coupling=10.0)
    t = 0.05
    assert operator_norm(G, t) > np.exp(-t)


def test_certify_scalar():
    cert = certify_decay(discretize("scalar", 1, a=-1.0))
    assert abs(cert.lam - 1.0) < 1e-6
    assert 1.0 <= cert.M <= 1.01


def test_certify_heat():
    cert = certify_decay(discretize("heat_dirichlet", 16))
    assert abs(cert.lam - np.pi ** 2) < 1e-4 * np.pi ** 2
    assert 1.0 <= cert.M <= 1.01


def test_certify_jordan_reflects_transient():
    G = discretize("jordan2", 2, eig=-1.0, coupling=10.0)
    cert = certify_decay(G)
    assert cert.lam < 1.0 or cert.M > 1.0
    assert cert.M > 1.0
    # feasibility oracle: the certified envelope dominates a dense norm curve
    ts = np.linspace(0.0, 10.0, 1500)
    norms = norm_curve(G, ts)
    assert np.all(norms <= cert.envelope(ts) * (1.0 + 1e-9))


def test_certificate_slack_invariant():
    cert = certify_decay(discretize("jordan2"))
    assert cert.min_slack >= -1e-12


def test_certificate_requires_m_at_least_one():
    with pytest.raises(ValueError):
        DecayCertificate(0.9, 1.0, np.array([0.0]), np.array([0.0]), 0.0)


def test_no_decay_raises():
    with pytest.raises(NoDecayDetected):
        certify_decay(discretize("scalar", 1, a=1.0))


def test_semigroup_property_sampled():
    rng = np.random.default_rng(0)
    systems = [discretize("scalar", 1, a=-1.0), discretize("heat_dirichlet", 8),
               discretize("jordan2"), discretize("transport", 6, damping=1.0)]
    for G in systems:
        for _ in range(12):
            s, t = rng.uniform(0.0, 2.0, size=2)
            x = rng.standard_normal(G.dim)
            once = apply_semigroup(G, s + t, x)
            twice = apply_semigroup(G, s, apply_semigroup(G, t, x))
            assert G.norm(once - twice) <= 1e-11 * max(1.0, G.norm(x))


def test_norm_consistency():
    rng = np.random.default_rng(1)
    G = discretize("jordan2")
    for _ in range(20):
        t = rng.uniform(0.0, 3.0)
        x = rng.standard_normal(2)
        assert operator_norm(G, t) >= G.norm(apply_semigroup(G, t, x)) / G.norm(x) - 1e-12


def test_propagator_matches_apply():
    G = discretize("transport", 5, damping=0.7)
    x = np.arange(1.0, 6.0)
    np.testing.assert_allclose(propagator(G, 0.3) @ x, apply_semigroup(G, 0.3, x),
                               rtol=1e-12)


def test_state_dimension_check():
    G = discretize("heat_dirichlet", 4)
    with pytest.raises(Exception):
        apply_semigroup(G, 1.0, np.ones(3))


def test_sup_norm_tag():
    G = discretize("matrix", 2, rows=[[-1.0, 0.5], [0.0, -2.0]], norm_tag="sup")
    assert G.norm(np.array([1.0, -3.0])) == 3.0
    # max absolute row sum of the propagator
    E = propagator(G, 0.5)
    assert abs(operator_norm(G, 0.5) - np.max(np.sum(np.abs(E), axis=1))) < 1e-15
