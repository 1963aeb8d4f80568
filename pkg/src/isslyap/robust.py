"""Robustly stabilizing feedback synthesis and sampled UGAS certification.

Given an ISS estimate (beta, gamma) for a plant, the synthesis builds a
feedback magnitude small enough that unit-ball multiplicative
disturbances cannot re-excite the state:

    alpha(r) = beta(r, 0)            (so alpha(r) >= r)
    sigma(r) = gamma^{-1}( alpha^{-1}(2r/3) / 4 )
    psi      = locally Lipschitz minorant of sigma (psi = sigma for the
               closed-form families, which are already locally Lipschitz)
    phi(x)   = psi(||x||),  chi = psi^{-1}

Along any closed-loop trajectory the composite gain then stays below
half the initial norm, which pins the trajectory under beta(r, t) + r/2,
and repeated application of that envelope contracts the norm by 3/4 on a
uniform time scale.  verify_ugs / verify_ugatt / verify_ugas check those
three consequences on sampled disturbance sets (certification is over
the sampled set only; tau tables are stamped with the horizon used).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compfunc import ComparisonFunction, KLFunction, compose
from .evolution import (ClosedLoopSystem, DisturbanceSignal, Feedback, GeneratorModel,
                        InputSignal, feedback_from_gain, sample_ball, solve_disturbed,
                        state_on_sphere)

DEFAULT_FIT_PAD = 1e-3


@dataclass(frozen=True)
class FeedbackSynthesis:
    """Margin functions of the synthesized robust feedback."""

    alpha: ComparisonFunction
    sigma: ComparisonFunction
    psi: ComparisonFunction
    chi: ComparisonFunction

    def feedback_for(self, G: GeneratorModel) -> Feedback:
        return feedback_from_gain(self.psi, G)

    def chain_margins(self, r_grid, gamma: ComparisonFunction):
        """gamma(sigma(r)) <= alpha^{-1}(2r/3)/4 <= r/6 on the sampled grid."""
        r_grid = np.asarray(r_grid, dtype=float)
        g_sig = np.array([gamma(self.sigma(r)) for r in r_grid])
        mid = np.array([self.alpha.invert(2.0 * r / 3.0) / 4.0 for r in r_grid])
        return g_sig, mid, r_grid / 6.0


def synthesize_feedback(beta: KLFunction, gamma: ComparisonFunction) -> FeedbackSynthesis:
    """Build the robust feedback margin from an ISS estimate (beta, gamma).

    sigma is taken with equality in the defining bound (the inequalities
    are non-strict; equality maximizes the stabilizable margin).  psi is
    sigma itself whenever sigma lands in a closed form that is locally
    Lipschitz on [0, inf) (linear, power with p >= 1, saturating); the
    sampled tabulated interpolant of sigma otherwise.
    """
    alpha = beta.at_zero_time()
    inv_alpha = alpha.inverse_function()
    inv_gamma = gamma.inverse_function()
    inner = inv_alpha.scale_arg(2.0 / 3.0).scale_value(0.25)
    sigma = compose(inv_gamma, inner)
    if sigma.form in ("linear", "saturating") or (
            sigma.form == "power" and sigma.params[1] >= 1.0):
        psi = sigma
    else:
        grid = np.concatenate(([0.0], np.geomspace(sigma.domain_cap * 1e-9,
                                                   sigma.domain_cap, 255)))
        psi = ComparisonFunction.tabulated(grid, sigma(grid), sigma.declared_class)
    chi = psi.inverse_function()
    return FeedbackSynthesis(alpha, sigma, psi, chi)


def feedback_gain_margins(cls: ClosedLoopSystem, syn: FeedbackSynthesis,
                          gamma: ComparisonFunction, x0, d: DisturbanceSignal,
                          T: float, **solver_kw) -> np.ndarray:
    """gamma(||d(t)|| * phi(x(t))) - ||x0||/2 along the trajectory (all <= 0 claimed)."""
    G = cls.plant.generator
    traj = solve_disturbed(cls, x0, d, T, **solver_kw)
    x0_norm = G.norm(np.asarray(x0, dtype=float))
    margins = np.empty(traj.times.size)
    for i, (t, state) in enumerate(zip(traj.times, traj.states)):
        level = float(np.linalg.norm(d(t))) * cls.feedback(state)
        margins[i] = gamma(level) - 0.5 * x0_norm
    return margins


def disturbance_family(dim: int, T: float, n_random: int = 20, seed: int = 0,
                       n_switch: int = 16) -> list[DisturbanceSignal]:
    """Zero, extremal sign patterns, and seeded random piecewise-constant d.

    Sampled quantification over the admissible set is biased toward the
    extremes, where the multiplicative feedback disturbances do the most
    work.
    """
    family = [DisturbanceSignal.constant(np.zeros(dim))]
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        family.append(DisturbanceSignal.constant(e))
        family.append(DisturbanceSignal.constant(-e))
    if dim > 1:
        ones = np.ones(dim) / np.sqrt(dim)
        family.append(DisturbanceSignal.constant(ones))
        family.append(DisturbanceSignal.constant(-ones))
    rng = np.random.default_rng(seed)
    t_grid = np.linspace(0.0, T, n_switch + 1)[:-1]
    for _ in range(n_random):
        vals = np.array([sample_ball(dim, 1.0, rng) for _ in t_grid])
        # push random values to the boundary half the time
        boundary = rng.uniform(size=t_grid.size) < 0.5
        norms = np.linalg.norm(vals, axis=1)
        vals[boundary & (norms > 1e-12)] /= norms[boundary & (norms > 1e-12), None]
        family.append(DisturbanceSignal(t_grid, vals))
    return family


def greedy_adversary(cls: ClosedLoopSystem, x0, T: float, max_step: float = 0.01,
                     n_random_dirs: int = 4, seed: int = 0,
                     **solver_kw) -> tuple:
    """One-step-lookahead disturbance maximizing the instantaneous ||g(x, d)||."""
    rng = np.random.default_rng(seed)
    G = cls.plant.generator
    dim = cls.plant.input_dim
    candidates = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        candidates.extend([e, -e])
    for _ in range(n_random_dirs):
        v = rng.standard_normal(dim)
        candidates.append(v / max(np.linalg.norm(v), 1e-300))
    n = max(1, int(np.ceil(T / max_step)))
    grid = np.linspace(0.0, T, n + 1)
    x = G.check_state(x0)
    chosen = np.empty((n, dim))
    states = [x]
    for k in range(n):
        growth = [G.norm(cls.g(x, c)) for c in candidates]
        d_val = candidates[int(np.argmax(growth))]
        chosen[k] = d_val
        seg = solve_disturbed(cls, x, DisturbanceSignal.constant(d_val),
                              grid[k + 1] - grid[k], max_step=max_step, **solver_kw)
        x = seg.states[-1]
        states.append(x)
    d_signal = DisturbanceSignal(grid[:-1], chosen)
    return np.array(states), grid, d_signal


@dataclass(frozen=True)
class UGSRun:
    r: float
    times: np.ndarray
    norms: np.ndarray
    d_label: str


@dataclass(frozen=True)
class UGSReport:
    runs: tuple
    sigma_fit: ComparisonFunction
    pointwise_ok: bool
    crude_ok: bool
    envelope_ok: bool
    max_pointwise_excess: float
    horizon: float

    @property
    def passed(self) -> bool:
        return self.pointwise_ok and self.crude_ok and self.envelope_ok


def verify_ugs(cls: ClosedLoopSystem, beta: KLFunction, r_grid, T: float,
               disturbances=None, n_dirs: int = 2, seed: int = 0,
               tol: float = 1e-6, **solver_kw) -> UGSReport:
    """Trajectory norms against beta(r, t) + r/2 and the cruder 1.5*alpha(r).

    Fits sigma_UGS(r) as the sup of trajectory norms per initial norm r.
    """
    G = cls.plant.generator
    alpha = beta.at_zero_time()
    rng = np.random.default_rng(seed)
    if disturbances is None:
        disturbances = disturbance_family(cls.plant.input_dim, T, seed=seed)
    runs = []
    pointwise_ok = True
    crude_ok = True
    envelope_ok = True
    max_excess = -np.inf
    sups = []
    for r in np.asarray(r_grid, dtype=float):
        sup_r = 0.0
        for _ in range(n_dirs):
            x0 = state_on_sphere(G, r, rng)
            for j, d in enumerate(disturbances):
                traj = solve_disturbed(cls, x0, d, T, **solver_kw)
                norms = traj.norms()
                bound = beta(r, traj.times) + 0.5 * r
                excess = float(np.max(norms - bound))
                max_excess = max(max_excess, excess)
                if excess > tol * max(1.0, r):
                    pointwise_ok = False
                if np.max(norms) > 1.5 * alpha(r) * (1.0 + tol):
                    crude_ok = False
                sup_r = max(sup_r, float(np.max(norms)))
                runs.append(UGSRun(r, traj.times, norms, f"d{j}"))
        sups.append(sup_r)
        if sup_r > 1.5 * alpha(r) * (1.0 + tol):
            envelope_ok = False
    r_arr = np.asarray(r_grid, dtype=float)
    sigma_fit = ComparisonFunction.tabulated(np.concatenate(([0.0], r_arr)),
                                             np.concatenate(([0.0], np.maximum.accumulate(sups))),
                                             "K")
    return UGSReport(tuple(runs), sigma_fit, pointwise_ok, crude_ok, envelope_ok,
                     max_excess, T)


def _settle_time(times: np.ndarray, norms: np.ndarray, eps: float) -> float:
    """First time after which the norm stays <= eps on the recorded horizon."""
    above = norms > eps
    if not above.any():
        return 0.0
    last = int(np.max(np.nonzero(above)[0]))
    if last == norms.size - 1:
        return np.inf
    return float(times[last + 1])


@dataclass(frozen=True)
class UGATTReport:
    r_grid: np.ndarray
    eps_grid: np.ndarray
    tau_table: np.ndarray           # shape (len(r_grid), len(eps_grid)); inf = not reached
    contraction_times: dict         # r -> array of t_k for eps = (3/4)^k r
    counterevidence: tuple
    horizon: float
    runs: tuple

    @property
    def passed(self) -> bool:
        return len(self.counterevidence) == 0 and np.all(np.isfinite(self.tau_table))


def verify_ugatt(cls: ClosedLoopSystem, r_grid, eps_grid, T_max: float,
                 disturbances=None, n_dirs: int = 2, n_contraction: int = 5,
                 seed: int = 0, **solver_kw) -> UGATTReport:
    """Empirical settle-time table tau(r, eps) and the 3/4-contraction times.

    tau is the max over sampled (x0, d) of the first time the norm
    permanently drops below eps, judged on the simulated horizon only.
    Samples that never settle are counter-evidence entries, not errors.
    """
    G = cls.plant.generator
    rng = np.random.default_rng(seed)
    r_grid = np.asarray(r_grid, dtype=float)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if disturbances is None:
        disturbances = disturbance_family(cls.plant.input_dim, T_max, seed=seed)
    tau = np.zeros((r_grid.size, eps_grid.size))
    contraction = {}
    counter = []
    runs = []
    for i, r in enumerate(r_grid):
        fracs = (3.0 / 4.0) ** np.arange(1, n_contraction + 1)
        t_k = np.zeros(n_contraction)
        for _ in range(n_dirs):
            x0 = state_on_sphere(G, r, rng)
            for j, d in enumerate(disturbances):
                traj = solve_disturbed(cls, x0, d, T_max, **solver_kw)
                norms = traj.norms()
                runs.append(UGSRun(r, traj.times, norms, f"d{j}"))
                for je, eps in enumerate(eps_grid):
                    t = _settle_time(traj.times, norms, eps)
                    if np.isinf(t):
                        counter.append((r, eps, f"d{j}"))
                    tau[i, je] = max(tau[i, je], t)
                for k, frac in enumerate(fracs):
                    t = _settle_time(traj.times, norms, frac * r)
                    t_k[k] = max(t_k[k], t)
        contraction[float(r)] = t_k
    return UGATTReport(r_grid, eps_grid, tau, contraction, tuple(counter), T_max,
                       tuple(runs))


@dataclass(frozen=True)
class UGASReport:
    ugs: UGSReport
    ugatt: UGATTReport
    beta_hat: KLFunction
    coverage_max: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.ugs.passed and self.ugatt.passed and self.coverage_max <= 1.0 + self.tol


def fit_kl_envelope(runs, pad: float = DEFAULT_FIT_PAD,
                    floor: float = 1e-13) -> KLFunction:
    """Covering exponential KL envelope for a family of norm curves.

    The rate is the slowest tail log-slope over the runs; the overshoot
    constant is the sup envelope inflated by pad so the fit remains
    covering under grid refinement (sup-based, never least-squares).
    """
    lam = np.inf
    for run in runs:
        if run.r == 0.0:
            continue
        mask = run.norms > floor * max(run.r, 1.0)
        if np.count_nonzero(mask) < 3:
            continue
        times = run.times[mask]
        tail = times >= times[-1] * 2.0 / 3.0
        if np.count_nonzero(tail) < 2:
            tail = np.zeros_like(times, dtype=bool)
            tail[-2:] = True
        slope = np.polyfit(times[tail], np.log(run.norms[mask][tail]), 1)[0]
        lam = min(lam, -float(slope))
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError("no decaying run to anchor the envelope rate")
    M = 1.0
    for run in runs:
        if run.r == 0.0:
            continue
        M = max(M, float(np.max(run.norms / (run.r * np.exp(-lam * run.times)))))
    return KLFunction.exp_family(M * (1.0 + pad), lam)


def verify_ugas(cls: ClosedLoopSystem, ugs: UGSReport, ugatt: UGATTReport,
                tol: float = 1e-9, pad: float = DEFAULT_FIT_PAD) -> UGASReport:
    """Combine stability and attractivity evidence into a fitted KL envelope.

    UGAS holds on the sampled set iff both sub-properties hold and the
    fitted envelope covers every recorded norm curve.
    """
    runs = tuple(ugs.runs) + tuple(ugatt.runs)
    beta_hat = fit_kl_envelope(runs, pad=pad)
    cover = 0.0
    for run in runs:
        if run.r == 0.0:
            continue
        cover = max(cover, float(np.max(run.norms / beta_hat(run.r, run.times))))
    return UGASReport(ugs, ugatt, beta_hat, cover, tol)
