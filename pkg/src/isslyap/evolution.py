"""Mild-solution integration of x' = Ax + f(x, u) and closed-loop machinery.

Inputs are piecewise-constant representatives of piecewise-continuous
signals (the value on the first interval is what u(0) means downstream).
The solver advances the variation-of-constants form with the semigroup
applied exactly per step and the forcing integral quadratured at order 1
(left endpoint) or order 2 (trapezoid, closed by fixed-point iteration).
Solutions are verified against the integral-equation residual, not
classical differentiability: kinks at input breakpoints are the fidelity
boundary.

Forward completeness is an assumption, not a theorem: multiplicative
feedback can produce finite escape (x' = -x + d*x**2), so a blow-up
watchdog aborts with the escape time instead of overflowing silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .compfunc import ComparisonFunction
from .semigroup import GeneratorModel, DimensionMismatch, propagator

DEFAULT_MAX_STEP = 0.01
DEFAULT_SOLVER_TOL = 1e-10
DEFAULT_BLOWUP_FACTOR = 1e6
MAX_FP_ITER = 60


class BlowUpDetected(RuntimeError):
    """State norm exceeded the watchdog cap (finite-escape evidence)."""

    def __init__(self, escape_time: float, last_norm: float, cap: float):
        super().__init__(
            f"blow-up watchdog fired at t = {escape_time:.6g} (norm {last_norm:.3g} > cap {cap:.3g})")
        self.escape_time = escape_time
        self.last_norm = last_norm
        self.cap = cap


class FixedPointDivergence(RuntimeError):
    """Per-step fixed-point iteration failed to contract at the minimal step."""

    def __init__(self, t: float, h: float, effective_lipschitz: float):
        super().__init__(
            f"fixed-point iteration not contracting at t = {t:.6g}, step {h:.3g} "
            f"(effective Lipschitz ~ {effective_lipschitz:.3g})")
        self.effective_lipschitz = effective_lipschitz


class MissingLipschitzData(RuntimeError):
    """Operation needs Lipschitz estimates that were never computed."""


def input_norm(u_value: np.ndarray) -> float:
    """Norm on the input-value space U = R^m (Euclidean)."""
    return float(np.linalg.norm(np.asarray(u_value, dtype=float)))


@dataclass(frozen=True)
class InputSignal:
    """Piecewise-constant input: values[i] on [breakpoints[i], breakpoints[i+1])."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if bp.ndim != 1 or bp.size == 0 or bp[0] != 0.0:
            raise ValueError("breakpoints must be 1-d and start at 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if vals.shape[0] != bp.size:
            raise ValueError("one value row per breakpoint interval required")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def __call__(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[max(idx, 0)]

    # -- constructors (classmethods so subclasses keep their invariants) --

    @classmethod
    def constant(cls, value, dim: int | None = None) -> "InputSignal":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if dim is not None and v.size == 1:
            v = np.full(dim, float(v[0]))
        return cls(np.array([0.0]), v[None, :])

    @classmethod
    def zero(cls, dim: int) -> "InputSignal":
        return cls.constant(np.zeros(dim))

    @classmethod
    def steps(cls, breakpoints, values) -> "InputSignal":
        return cls(np.asarray(breakpoints, dtype=float),
                   np.asarray(values, dtype=float))

    @classmethod
    def sampled(cls, fn: Callable[[float], np.ndarray], t_grid) -> "InputSignal":
        """Left-sampled piecewise-constant representative of fn (e.g. a sinusoid)."""
        t_grid = np.asarray(t_grid, dtype=float)
        vals = np.array([np.atleast_1d(fn(t)) for t in t_grid], dtype=float)
        return cls(t_grid, vals)

    @classmethod
    def random_piecewise(cls, dim: int, radius: float, t_grid, rng) -> "InputSignal":
        """Values drawn uniformly from the radius-ball of U on each interval."""
        t_grid = np.asarray(t_grid, dtype=float)
        vals = np.array([sample_ball(dim, radius, rng) for _ in t_grid])
        return cls(t_grid, vals)

    def scaled(self, a: float) -> "InputSignal":
        return type(self)(self.breakpoints, a * self.values)

    # -- CSV round trip (breakpoint files) -----------------------------

    def to_csv(self, path) -> None:
        data = np.column_stack([self.breakpoints, self.values])
        header = "t," + ",".join(f"u{i}" for i in range(self.dim))
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path) -> "InputSignal":
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        return cls(data[:, 0], data[:, 1:])


class DisturbanceSignal(InputSignal):
    """Input with values in the closed unit ball of U."""

    def __post_init__(self):
        super().__post_init__()
        norms = np.linalg.norm(self.values, axis=1)
        if np.any(norms > 1.0 + 1e-9):
            raise ValueError(f"disturbance values must have norm <= 1 (got {norms.max():.3g})")


def sample_ball(dim: int, radius: float, rng) -> np.ndarray:
    """Uniform sample from the Euclidean ball of given radius."""
    direction = rng.standard_normal(dim)
    n = np.linalg.norm(direction)
    if n == 0.0:
        return np.zeros(dim)
    return radius * rng.uniform() ** (1.0 / dim) * direction / n


def _state_ball(G: GeneratorModel, radius: float, rng) -> np.ndarray:
    # euclidean ball rescaled so the state norm is uniform in [0, radius]
    d = rng.standard_normal(G.dim)
    n = G.norm(d)
    if n == 0.0:
        return np.zeros(G.dim)
    return d * (radius * rng.uniform() ** (1.0 / G.dim) / n)


def state_on_sphere(G: GeneratorModel, radius: float, rng) -> np.ndarray:
    d = rng.standard_normal(G.dim)
    n = G.norm(d)
    while n == 0.0:
        d = rng.standard_normal(G.dim)
        n = G.norm(d)
    return d * (radius / n)


@dataclass
class SemilinearSystem:
    """Plant x' = Ax + f(x, u) with Lipschitz bookkeeping for f."""

    generator: GeneratorModel
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    input_dim: int
    lipschitz_global: tuple | None = None   # (L1, L2) valid on every ball
    lipschitz_cache: dict = field(default_factory=dict)  # radius -> (L1, L2)
    B: np.ndarray | None = None             # set for linear input maps f = B u
    name: str = ""

    def rhs(self, x, u_value) -> np.ndarray:
        out = self.f(x, u_value)
        if type(out) is not np.ndarray or out.dtype != np.float64:
            out = np.asarray(out, dtype=float).reshape(-1)
        if out.shape != (self.generator.dim,):
            out = out.reshape(-1)
            if out.shape[0] != self.generator.dim:
                raise DimensionMismatch("nonlinearity output length != state dimension")
        return out

    def known_l1(self) -> float | None:
        """Most conservative state-Lipschitz constant currently on record."""
        candidates = []
        if self.lipschitz_global is not None:
            candidates.append(self.lipschitz_global[0])
        candidates.extend(v[0] for v in self.lipschitz_cache.values())
        return max(candidates) if candidates else None

    def record_lipschitz(self, radius: float, L1: float, L2: float) -> None:
        old = self.lipschitz_cache.get(radius)
        if old is not None:
            L1, L2 = max(L1, old[0]), max(L2, old[1])
        self.lipschitz_cache[radius] = (L1, L2)


def induced_input_norm(G: GeneratorModel, B: np.ndarray) -> float:
    """Norm of B as a map from (R^m, euclidean) to the generator's state space."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if G.norm_tag == "l2":
        return float(np.sqrt(G.weight) * np.linalg.norm(B, 2))
    return float(np.max(np.linalg.norm(B, axis=1)))


def linear_input_system(G: GeneratorModel, B) -> SemilinearSystem:
    """x' = Ax + Bu.  Lipschitz constants are exact: L1 = 0, L2 = ||B||."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != G.dim:
        raise DimensionMismatch("B row count != generator dim")
    return SemilinearSystem(G, lambda x, u: B @ u, B.shape[1],
                            lipschitz_global=(0.0, induced_input_norm(G, B)),
                            B=B, name="linear")


@dataclass(frozen=True)
class SolverStats:
    steps: int
    fp_iterations: int
    fp_iterations_max: int
    max_residual: float


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    stats: SolverStats
    generator: GeneratorModel

    def norms(self) -> np.ndarray:
        if self.generator.norm_tag == "l2":
            return np.sqrt(self.generator.weight) * np.linalg.norm(self.states, axis=1)
        return np.max(np.abs(self.states), axis=1)

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="left"))
        idx = min(idx, self.times.size - 1)
        return self.states[idx]

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.states, self.norms()])
        header = "t," + ",".join(f"x{i}" for i in range(self.states.shape[1])) + ",norm"
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def _step_grid(T: float, max_step: float, breakpoints: np.ndarray) -> np.ndarray:
    n = max(1, int(np.ceil(T / max_step)))
    grid = np.linspace(0.0, T, n + 1)
    inner = breakpoints[(breakpoints > 0.0) & (breakpoints < T)]
    if inner.size:
        grid = np.unique(np.concatenate([grid, inner]))
        keep = np.concatenate([[True], np.diff(grid) > 1e-14 * max(T, 1.0)])
        grid = grid[keep]
        grid[-1] = T
    return grid


def solve_mild(sys: SemilinearSystem, x0, u: InputSignal, T: float,
               tol: float = DEFAULT_SOLVER_TOL, max_step: float = DEFAULT_MAX_STEP,
               order: int = 2, blowup_factor: float = DEFAULT_BLOWUP_FACTOR) -> Trajectory:
    """Integrate the variation-of-constants form on [0, T].

    Per step of size h: x_next = T_h x + quadrature of T_{h-s} f(x(s), u),
    with the left-endpoint rule (order 1) or the trapezoid closed by
    fixed-point iteration (order 2, accepted when successive iterates
    differ by less than tol in the state norm).  When a state-Lipschitz
    constant for f is on record, the step is capped so the iteration map
    is a contraction with margin 1/2.
    """
    G = sys.generator
    x = G.check_state(x0)
    if T <= 0:
        raise ValueError("horizon T must be > 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if u.dim != sys.input_dim:
        raise DimensionMismatch(f"input dim {u.dim} != system input dim {sys.input_dim}")

    L1 = sys.known_l1()
    h_cap = max_step
    if L1 is not None and L1 > 0:
        from .semigroup import operator_norm
        M_loc = max(1.0, operator_norm(G, max_step))
        h_cap = min(max_step, 0.45 / (L1 * M_loc))
    grid = _step_grid(T, h_cap, u.breakpoints)

    cap = blowup_factor * (1.0 + G.norm(x))
    states = np.empty((grid.size, G.dim))
    states[0] = x
    stats = [0, 0, 0, 0.0]   # steps, fp total, fp max, max residual
    h_min = 1e-10 * max(T, 1.0)

    def substep(xk, t0, h):
        """One step of size h, recursively halved while f resists contraction."""
        E = propagator(G, h)
        u_val = u(t0)
        f_left = sys.rhs(xk, u_val)
        Ef_left = E @ f_left
        x_new = E @ xk + h * Ef_left
        iters = 1
        resid = 0.0
        if order == 2:
            base = E @ xk + 0.5 * h * Ef_left
            prev_delta = None
            converged = False
            for _ in range(MAX_FP_ITER):
                nxt = base + 0.5 * h * sys.rhs(x_new, u_val)
                delta = G.norm(nxt - x_new)
                x_new = nxt
                iters += 1
                if delta < tol:
                    resid = delta
                    converged = True
                    break
                if prev_delta is not None and delta >= prev_delta:
                    break
                prev_delta = delta
            if not converged:
                if not np.isfinite(delta):
                    raise BlowUpDetected(t0 + h, np.inf, cap)
                if h / 2.0 < h_min:
                    eff = 2.0 / h if prev_delta is None else 2.0 * delta / (prev_delta * h)
                    raise FixedPointDivergence(t0, h, eff)
                x_mid = substep(xk, t0, h / 2.0)
                return substep(x_mid, t0 + h / 2.0, h / 2.0)
        stats[1] += iters
        stats[2] = max(stats[2], iters)
        stats[3] = max(stats[3], resid)
        norm_new = G.norm(x_new)
        if not np.isfinite(norm_new) or norm_new > cap:
            raise BlowUpDetected(t0 + h, norm_new, cap)
        return x_new

    for k in range(grid.size - 1):
        x = substep(x, grid[k], float(grid[k + 1] - grid[k]))
        states[k + 1] = x
        stats[0] += 1

    return Trajectory(grid, states, SolverStats(*stats), G)


def estimate_lipschitz(sys: SemilinearSystem, C: float, n_pairs: int = 64,
                       seed: int = 0) -> tuple[float, float]:
    """Sampled lower bounds for the two Lipschitz constants of f on the C-ball.

    L1: state argument (shared input), L2: input argument (shared state).
    Results are max-merged into the system's cache at radius C.
    """
    if C <= 0:
        raise ValueError("radius C must be > 0")
    if n_pairs < 10:
        raise ValueError("need at least 10 pairs for a meaningful estimate")
    rng = np.random.default_rng(seed)
    G = sys.generator
    L1 = 0.0
    L2 = 0.0
    for _ in range(n_pairs):
        v = sample_ball(sys.input_dim, C, rng)
        x = _state_ball(G, C, rng)
        y = _state_ball(G, C, rng)
        dxy = G.norm(x - y)
        if dxy > 1e-12 * C:
            L1 = max(L1, G.norm(sys.rhs(x, v) - sys.rhs(y, v)) / dxy)
        # a near-coincident pair surfaces steep local slopes
        y2 = x * (1.0 - 1e-6) if np.any(x) else x + 1e-8
        dxy2 = G.norm(x - y2)
        if dxy2 > 0:
            L1 = max(L1, G.norm(sys.rhs(x, v) - sys.rhs(y2, v)) / dxy2)
        z = _state_ball(G, C, rng)
        uu = sample_ball(sys.input_dim, C, rng)
        vv = sample_ball(sys.input_dim, C, rng)
        duv = input_norm(uu - vv)
        if duv > 1e-12 * C:
            L2 = max(L2, G.norm(sys.rhs(z, uu) - sys.rhs(z, vv)) / duv)
    sys.record_lipschitz(C, L1, L2)
    return L1, L2


@dataclass(frozen=True)
class Feedback:
    """Nonnegative feedback magnitude phi(x) with Lipschitz metadata."""

    func: Callable[[np.ndarray], float]
    lipschitz: Callable[[float], float]
    bound: Callable[[float], float]
    description: str = ""

    def __call__(self, x) -> float:
        v = float(self.func(x))
        if v < 0:
            raise ValueError("feedback magnitude must be nonnegative")
        return v


def _max_slope(psi: ComparisonFunction, r: float, n: int = 257) -> float:
    if r <= 0:
        return 0.0
    if psi.form == "linear":
        return psi.params[0]
    if not np.isfinite(r):
        return np.inf
    if psi.form == "power":
        c, p = psi.params
        if p >= 1.0:
            return c * p * r ** (p - 1.0)
    grid = np.linspace(0.0, min(r, psi.domain_cap), n)
    vals = psi(grid)
    return float(np.max(np.diff(vals) / np.diff(grid))) * (1.0 + 1e-6)


def feedback_from_gain(psi: ComparisonFunction, G: GeneratorModel) -> Feedback:
    """phi(x) = psi(||x||): locally Lipschitz whenever psi is."""
    return Feedback(lambda x: float(psi(G.norm(x))),
                    lipschitz=lambda r: _max_slope(psi, r),
                    bound=lambda r: float(psi(r)),
                    description=f"psi({psi.form})∘norm")


def zero_feedback() -> Feedback:
    return Feedback(lambda x: 0.0, lambda r: 0.0, lambda r: 0.0, "zero")


@dataclass
class ClosedLoopSystem:
    """Plant under u = d * phi(x); right-hand side g(x, d) = f(x, d*phi(x))."""

    plant: SemilinearSystem
    feedback: Feedback

    def g(self, x, d_value) -> np.ndarray:
        return self.plant.rhs(x, np.asarray(d_value, dtype=float) * self.feedback(x))

    def as_disturbed_system(self) -> SemilinearSystem:
        lip = None
        if self.plant.lipschitz_global is not None:
            L1p, L2p = self.plant.lipschitz_global
            # valid whenever the feedback slope bound is global (linear gains);
            # the input-side constant of g is genuinely unbounded over x
            L1g = L1p + L2p * self.feedback.lipschitz(np.inf)
            if np.isfinite(L1g):
                lip = (L1g, np.inf)
        return SemilinearSystem(self.plant.generator, self.g, self.plant.input_dim,
                                lipschitz_global=lip, name="closed-loop")


def close_loop(sys: SemilinearSystem, feedback: Feedback) -> ClosedLoopSystem:
    return ClosedLoopSystem(sys, feedback)


def solve_disturbed(cls: ClosedLoopSystem, x0, d: InputSignal, T: float,
                    **solver_kw) -> Trajectory:
    return solve_mild(cls.as_disturbed_system(), x0, d, T, **solver_kw)


@dataclass(frozen=True)
class ClosedLoopLipschitz:
    sampled: float
    analytic_bound: float | None
    radius: float
    feedback_radius: float


def closed_loop_lipschitz(cls: ClosedLoopSystem, C: float, n_pairs: int = 64,
                          seed: int = 0) -> ClosedLoopLipschitz:
    """Sampled Lipschitz constant of g on the C-ball, uniform over unit d.

    Also returns the analytic bound L1_f(R) + L2_f(R) * Lip(phi) with R
    covering both the state ball and the feedback magnitudes on it;
    requires the plant's Lipschitz data at radius R.
    """
    plant = cls.plant
    G = plant.generator
    R = max(C, cls.feedback.bound(C))
    if plant.lipschitz_global is not None:
        L1, L2 = plant.lipschitz_global
    else:
        entry = None
        for radius in sorted(plant.lipschitz_cache):
            if radius >= R:
                entry = plant.lipschitz_cache[radius]
                break
        if entry is None:
            raise MissingLipschitzData(
                f"plant Lipschitz cache has no entry at radius >= {R:g}; "
                "run estimate_lipschitz first")
        L1, L2 = entry
    analytic = L1 + L2 * cls.feedback.lipschitz(C)

    rng = np.random.default_rng(seed)
    extremal = []
    for k in range(plant.input_dim):
        e = np.zeros(plant.input_dim)
        e[k] = 1.0
        extremal.extend([e, -e])
    sampled = 0.0
    for i in range(n_pairs):
        # the sup over the disturbance set is attained on the boundary
        d = extremal[i % len(extremal)] if i % 2 == 0 else sample_ball(
            plant.input_dim, 1.0, rng)
        x = _state_ball(G, C, rng)
        y = _state_ball(G, C, rng)
        dxy = G.norm(x - y)
        if dxy > 1e-12 * C:
            sampled = max(sampled, G.norm(cls.g(x, d) - cls.g(y, d)) / dxy)
        y2 = x * (1.0 - 1e-6) if np.any(x) else x
        dxy2 = G.norm(x - y2)
        if dxy2 > 0:
            sampled = max(sampled, G.norm(cls.g(x, d) - cls.g(y2, d)) / dxy2)
    return ClosedLoopLipschitz(sampled, analytic, C, R)


@dataclass(frozen=True)
class RFCProbe:
    sup_norm: float
    diverged: bool
    escape_time: float | None
    n_runs: int


def rfc_probe(cls: ClosedLoopSystem, C: float, tau: float, n_x0: int = 5,
              n_d: int = 5, seed: int = 0, **solver_kw) -> RFCProbe:
    """Sampled robust-forward-completeness check on the C-ball over [0, tau]."""
    rng = np.random.default_rng(seed)
    G = cls.plant.generator
    m = cls.plant.input_dim
    sup = 0.0
    runs = 0
    t_grid = np.linspace(0.0, tau, 9)[:-1]
    for i in range(n_x0):
        x0 = state_on_sphere(G, C * (1.0 - i / max(n_x0, 1) * 0.5), rng)
        disturbances = [DisturbanceSignal.constant(np.zeros(m))]
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            disturbances.extend([DisturbanceSignal.constant(e),
                                 DisturbanceSignal.constant(-e)])
        for _ in range(n_d):
            disturbances.append(DisturbanceSignal(
                t_grid, np.array([sample_ball(m, 1.0, rng) for _ in t_grid])))
        for d in disturbances:
            runs += 1
            try:
                traj = solve_disturbed(cls, x0, d, tau, **solver_kw)
            except BlowUpDetected as exc:
                return RFCProbe(np.inf, True, exc.escape_time, runs)
            sup = max(sup, float(np.max(traj.norms())))
    return RFCProbe(sup, False, None, runs)


def flow_lipschitz_probe(cls: ClosedLoopSystem, R: float, tau: float,
                         n_pairs: int = 12, seed: int = 0, **solver_kw) -> float:
    """Fitted constant L with ||phi(t,x,d) - phi(t,y,d)|| <= L ||x-y|| on samples."""
    rng = np.random.default_rng(seed)
    G = cls.plant.generator
    t_grid = np.linspace(0.0, tau, 7)[:-1]
    L = 0.0
    for _ in range(n_pairs):
        x = _state_ball(G, R, rng)
        y = _state_ball(G, R, rng)
        dxy = G.norm(x - y)
        if dxy <= 1e-12 * R:
            continue
        d = DisturbanceSignal(
            t_grid, np.array([sample_ball(cls.plant.input_dim, 1.0, rng) for _ in t_grid]))
        tx = solve_disturbed(cls, x, d, tau, **solver_kw)
        ty = solve_disturbed(cls, y, d, tau, **solver_kw)
        diffs = np.array([G.norm(a - b) for a, b in zip(tx.states, ty.states)])
        L = max(L, float(np.max(diffs)) / dxy)
    return L
