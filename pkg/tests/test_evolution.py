import numpy as np
import pytest

from isslyap.compfunc import ComparisonFunction
from isslyap.evolution import (BlowUpDetected, ClosedLoopSystem, DisturbanceSignal,
                               Feedback, InputSignal, SemilinearSystem, close_loop,
                               closed_loop_lipschitz, estimate_lipschitz,
                               feedback_from_gain, flow_lipschitz_probe,
                               induced_input_norm, linear_input_system, rfc_probe,
                               solve_disturbed, solve_mild, zero_feedback)
from isslyap.semigroup import apply_semigroup, discretize


def scalar_plant(a=-1.0):
    return linear_input_system(discretize("scalar", 1, a=a), np.array([[1.0]]))


def test_input_signal_lookup_and_sup():
    u = InputSignal.steps([0.0, 1.0, 2.0], [[0.5], [-2.0], [1.0]])
    assert u(0.0) == 0.5
    assert u(1.5) == -2.0
    assert u(10.0) == 1.0
    assert u.sup_norm == 2.0


def test_input_signal_csv_roundtrip(tmp_path):
    u = InputSignal.steps([0.0, 0.5], [[1.0, 2.0], [3.0, -1.0]])
    p = tmp_path / "u.csv"
    u.to_csv(p)
    v = InputSignal.from_csv(p)
    np.testing.assert_array_equal(v.breakpoints, u.breakpoints)
    np.testing.assert_array_equal(v.values, u.values)


def test_disturbance_unit_ball_enforced():
    with pytest.raises(ValueError):
        DisturbanceSignal.constant(np.array([1.5]))


def test_solve_equilibrium_stays_zero():
    sys = scalar_plant()
    traj = solve_mild(sys, np.array([0.0]), InputSignal.zero(1), 2.0)
    assert np.all(traj.states == 0.0)


def test_solve_scalar_decay_closed_form():
    sys = scalar_plant()
    traj = solve_mild(sys, np.array([1.0]), InputSignal.zero(1), 1.0, max_step=0.005)
    assert abs(traj.states[-1, 0] - np.exp(-1.0)) < 1e-7


def test_solve_scalar_forced_closed_form():
    # variation of constants: x(1) = 1 - e^{-1} from rest under u = 1
    sys = scalar_plant()
    traj = solve_mild(sys, np.array([0.0]), InputSignal.constant([1.0]), 1.0,
                      max_step=0.005)
    assert abs(traj.states[-1, 0] - (1.0 - np.exp(-1.0))) < 5e-6


def test_consistency_with_semigroup_when_unforced():
    G = discretize("jordan2")
    sys = linear_input_system(G, np.eye(2))
    x0 = np.array([0.7, -0.4])
    traj = solve_mild(sys, x0, InputSignal.zero(2), 1.5)
    for t, state in zip(traj.times[::20], traj.states[::20]):
        np.testing.assert_allclose(state, apply_semigroup(G, t, x0),
                                   rtol=1e-9, atol=1e-12)


def _terminal_error(order, max_step):
    sys = scalar_plant()
    traj = solve_mild(sys, np.array([0.0]), InputSignal.constant([1.0]), 1.0,
                      max_step=max_step, order=order)
    return abs(traj.states[-1, 0] - (1.0 - np.exp(-1.0)))


@pytest.mark.parametrize("order,lo,hi", [(1, 1.5, 2.5), (2, 3.0, 5.0)])
def test_step_halving_convergence(order, lo, hi):
    errs = [_terminal_error(order, h) for h in (0.02, 0.01, 0.005)]
    for e0, e1 in zip(errs, errs[1:]):
        assert lo <= e0 / e1 <= hi


def test_causality_bitwise():
    sys = scalar_plant()
    x0 = np.array([1.0])
    u1 = InputSignal.steps([0.0, 1.0], [[1.0], [5.0]])
    u2 = InputSignal.steps([0.0, 1.0], [[1.0], [-3.0]])
    t1 = solve_mild(sys, x0, u1, 2.0)
    t2 = solve_mild(sys, x0, u2, 2.0)
    cut = np.searchsorted(t1.times, 1.0, side="right")
    assert t1.times[:cut].tobytes() == t2.times[:cut].tobytes()
    assert t1.states[:cut].tobytes() == t2.states[:cut].tobytes()
    assert not np.array_equal(t1.states, t2.states)


def test_estimate_lipschitz_linear_input():
    sys = scalar_plant()
    L1, L2 = estimate_lipschitz(sys, 2.0, n_pairs=32, seed=0)
    assert L1 == 0.0
    assert abs(L2 - 1.0) < 1e-9


def test_estimate_lipschitz_quadratic():
    # |x^2 - y^2| / |x - y| = |x + y| approaches 2C on the C-ball
    G = discretize("scalar", 1, a=-1.0)
    sys = SemilinearSystem(G, lambda x, u: x * x, 1)
    C = 2.0
    L1, _ = estimate_lipschitz(sys, C, n_pairs=256, seed=0)
    assert 0.8 * 2 * C <= L1 <= 2 * C * (1.0 + 1e-6)


def test_estimate_lipschitz_cube_root_blows_up():
    # u^{1/3} is not Lipschitz in u near 0: small balls expose huge slopes
    G = discretize("scalar", 1, a=-1.0)
    sys = SemilinearSystem(G, lambda x, u: np.cbrt(u), 1)
    _, L2_small = estimate_lipschitz(sys, 1e-6, n_pairs=64, seed=1)
    _, L2_big = estimate_lipschitz(sys, 1.0, n_pairs=64, seed=1)
    assert L2_small > 50.0 * L2_big


def test_close_loop_zero_feedback():
    sys = scalar_plant()
    cls = close_loop(sys, zero_feedback())
    for d in (np.array([1.0]), np.array([-0.3])):
        np.testing.assert_array_equal(cls.g(np.array([0.7]), d),
                                      sys.rhs(np.array([0.7]), np.zeros(1)))


def test_close_loop_direct_substitution():
    sys = scalar_plant()
    phi = feedback_from_gain(ComparisonFunction.identity(), sys.generator)
    cls = close_loop(sys, phi)
    x = np.array([-0.4])
    np.testing.assert_allclose(cls.g(x, np.array([1.0])), [abs(x[0])])


def test_finite_escape_watchdog():
    # x' = -x + x^2 from x0 = 2 escapes at t = ln 2
    sys = scalar_plant()
    phi = feedback_from_gain(ComparisonFunction.power(1.0, 2.0), sys.generator)
    cls = close_loop(sys, phi)
    with pytest.raises(BlowUpDetected) as exc_info:
        solve_disturbed(cls, np.array([2.0]), DisturbanceSignal.constant([1.0]), 2.0,
                        max_step=0.001)
    assert abs(exc_info.value.escape_time - np.log(2.0)) < 0.05


def test_solve_disturbed_halved_feedback_closed_form():
    # x' = -x + |x|/2 decays like e^{-t/2} for x0 > 0
    sys = scalar_plant()
    phi = feedback_from_gain(ComparisonFunction.linear(0.5), sys.generator)
    cls = close_loop(sys, phi)
    traj = solve_disturbed(cls, np.array([1.0]), DisturbanceSignal.constant([1.0]), 2.0,
                           max_step=0.005)
    assert abs(traj.states[-1, 0] - np.exp(-1.0)) < 1e-6


def test_solve_disturbed_zero_matches_plant():
    sys = scalar_plant()
    phi = feedback_from_gain(ComparisonFunction.linear(0.5), sys.generator)
    cls = close_loop(sys, phi)
    a = solve_disturbed(cls, np.array([1.0]), DisturbanceSignal.constant([0.0]), 1.0)
    b = solve_mild(sys, np.array([1.0]), InputSignal.zero(1), 1.0)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-12)


def test_closed_loop_lipschitz_linear_gain_exact():
    sys = scalar_plant()
    k = 0.37
    cls = close_loop(sys, feedback_from_gain(ComparisonFunction.linear(k), sys.generator))
    rep = closed_loop_lipschitz(cls, 2.0, n_pairs=64, seed=0)
    assert abs(rep.sampled - k) < 1e-6
    assert rep.sampled <= rep.analytic_bound + 1e-9


def test_closed_loop_lipschitz_footnote_bound():
    # g = d * x^2 on the 2-ball: slope sup 2|x| |d| = 4, matching the
    # analytic bound L1 + L2 * Lip(phi) = 0 + 1 * 4
    sys = scalar_plant()
    cls = close_loop(sys, feedback_from_gain(ComparisonFunction.power(1.0, 2.0),
                                             sys.generator))
    rep = closed_loop_lipschitz(cls, 2.0, n_pairs=256, seed=0)
    assert rep.sampled <= rep.analytic_bound * (1.0 + 1e-9)
    assert rep.sampled > 0.8 * rep.analytic_bound
    assert abs(rep.analytic_bound - 4.0) < 1e-6


def test_rfc_probe_stable_loop():
    sys = scalar_plant()
    cls = close_loop(sys, feedback_from_gain(ComparisonFunction.linear(1.0 / 6.0),
                                             sys.generator))
    probe = rfc_probe(cls, 1.0, 5.0, n_x0=3, n_d=3, seed=0)
    assert not probe.diverged
    assert probe.sup_norm <= 1.0 + 1e-9


def test_rfc_probe_zero_feedback_semigroup_bound():
    G = discretize("jordan2")
    sys = linear_input_system(G, np.eye(2))
    cls = close_loop(sys, zero_feedback())
    from isslyap.semigroup import certify_decay
    cert = certify_decay(G)
    probe = rfc_probe(cls, 1.5, 4.0, n_x0=3, n_d=2, seed=0)
    assert not probe.diverged
    assert probe.sup_norm <= cert.M * 1.5 * (1.0 + 1e-6)


def test_rfc_probe_reports_divergence():
    sys = scalar_plant()
    cls = close_loop(sys, feedback_from_gain(ComparisonFunction.power(1.0, 2.0),
                                             sys.generator))
    probe = rfc_probe(cls, 2.0, 3.0, n_x0=2, n_d=2, seed=0, max_step=0.002)
    assert probe.diverged
    assert probe.escape_time is not None


def test_flow_lipschitz_probe_scalar_loop():
    sys = scalar_plant()
    cls = close_loop(sys, feedback_from_gain(ComparisonFunction.linear(1.0 / 6.0),
                                             sys.generator))
    L = flow_lipschitz_probe(cls, 1.0, 2.0, n_pairs=6, seed=0)
    # contraction at rate at least 1 - 1/6: differences never amplify
    assert L <= 1.0 + 1e-6


def test_induced_input_norm_weighted():
    G = discretize("transport", 4, damping=0.5)
    B = np.eye(4)
    assert abs(induced_input_norm(G, B) - np.sqrt(G.weight)) < 1e-12


def test_sinusoid_sampled_input():
    u = InputSignal.sampled(lambda t: np.array([np.sin(t)]), np.linspace(0.0, 3.0, 7)[:-1])
    assert u.dim == 1
    assert abs(u(0.0)[0]) < 1e-15
    assert u.sup_norm <= 1.0
