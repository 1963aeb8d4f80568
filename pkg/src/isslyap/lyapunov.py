"""Two explicit ISS Lyapunov functionals for x' = Ax + Bu and their checks.

* IntegralLyapunov: V(x) = integral of ||T_t x||^2 over [0, inf), evaluated
  by composite Simpson quadrature on a horizon derived from the decay
  certificate, so the truncation error bar is sound by construction.
  Non-coercive: V(x)/||x||^2 can approach 0 (fast-decaying modes).

* SupNormLyapunov: V_g(x) = max over s >= 0 of ||exp(g*s) T_s x||, an
  equivalent norm whenever g < lam.  The search horizon ln(M)/(lam - g)
  is where the weighted envelope drops below 1, making s = 0 dominate
  beyond it.  Coercive, globally Lipschitz with constant M.

Dissipation checks pit Dini difference quotients of these functionals
along mild solutions against the certified decay bounds; margins are
reported per sample, never silently aggregated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .compfunc import ComparisonFunction
from .evolution import InputSignal, SemilinearSystem, linear_input_system, solve_mild
from .semigroup import (DecayCertificate, GeneratorModel, apply_semigroup, certify_decay,
                        propagator)

DEFAULT_QUAD_TOL = 1e-8
DEFAULT_DINI_HSEQ = (4e-4, 2e-4, 1e-4)
DEFAULT_MARGIN_REL = 1e-6


class CertificateMissing(RuntimeError):
    """Operation needs a decay certificate that is not attached."""


class InvalidGain(ValueError):
    """Parameter choice breaks a construction's validity condition."""


class QuadratureDiverged(RuntimeError):
    """Simpson refinement failed to reach the requested tolerance."""


@dataclass
class LinearSystem:
    """x' = Ax + Bu with a certified decay envelope for the semigroup."""

    generator: GeneratorModel
    B: np.ndarray
    certificate: DecayCertificate | None = None
    _semilinear: SemilinearSystem | None = field(default=None, repr=False)

    def __post_init__(self):
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.B.shape[0] != self.generator.dim:
            raise ValueError("B row count != generator dim")

    @property
    def B_norm(self) -> float:
        from .evolution import induced_input_norm
        return induced_input_norm(self.generator, self.B)

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    def require_certificate(self) -> DecayCertificate:
        if self.certificate is None:
            raise CertificateMissing("run certify_decay and attach the result first")
        return self.certificate

    def as_semilinear(self) -> SemilinearSystem:
        if self._semilinear is None:
            self._semilinear = linear_input_system(self.generator, self.B)
        return self._semilinear


def make_linear_system(G: GeneratorModel, B, t_max: float | None = None,
                       n_samples: int = 200, safety: float = 1e-3) -> LinearSystem:
    return LinearSystem(G, B, certify_decay(G, t_max=t_max, n_samples=n_samples,
                                            safety=safety))


# -- node norms along the orbit ---------------------------------------

def _orbit_norms_sq(G: GeneratorModel, x: np.ndarray, delta: float, n_steps: int) -> np.ndarray:
    """||T_{j delta} x||^2 for j = 0..n_steps."""
    if G.is_diagonal:
        t = delta * np.arange(n_steps + 1)
        modes = x[None, :] * np.exp(np.outer(t, G.eigenvalues))
        return G.weight * np.sum(modes * modes, axis=1)
    prop = np.ascontiguousarray(propagator(G, delta))
    x = np.ascontiguousarray(x, dtype=float)
    if G.norm_tag == "l2":
        return _kernels.propagate_norm_sq_l2(prop, x, n_steps, G.weight)
    sup = _kernels.propagate_norm_sup(prop, x, n_steps)
    return sup * sup


def _simpson(vals: np.ndarray, h: float) -> float:
    return h / 3.0 * (vals[0] + vals[-1] + 4.0 * np.sum(vals[1:-1:2]) + 2.0 * np.sum(vals[2:-2:2]))


@dataclass(frozen=True)
class LyapunovValue:
    value: float
    error_bound: float
    horizon: float
    n_nodes: int


class IntegralLyapunov:
    """V(x) = integral of ||T_t x||^2 dt with a certified error bar.

    The horizon comes from the decay certificate (tail bound <= tol/2 by
    construction); the quadrature splits [0, T*] into geometrically
    graded panels so the boundary layer of the fastest mode does not
    force a uniform global step, and refines each panel's composite
    Simpson rule until the Richardson differences sum below tol/2.
    """

    def __init__(self, system: LinearSystem, tol: float = DEFAULT_QUAD_TOL,
                 max_nodes_per_panel: int = 1 << 17):
        self.system = system
        self.cert = system.require_certificate()
        self.tol = tol
        self.max_nodes_per_panel = max_nodes_per_panel
        G = system.generator
        if G.is_diagonal:
            rate = 2.0 * float(np.max(np.abs(G.eigenvalues)))
        else:
            rate = 2.0 * float(np.linalg.norm(G.matrix, 2))
        self._stiff_rate = max(rate, 1e-12)

    def horizon(self, x_norm: float, tol: float) -> float:
        """Truncation point: certificate tail beyond it is below tol/2."""
        M, lam = self.cert.M, self.cert.lam
        if x_norm == 0.0:
            return 0.0
        t_star = np.log(M * M * x_norm * x_norm / (lam * 0.5 * tol)) / (2.0 * lam)
        return max(t_star, 0.5 / lam)

    def _panel_edges(self, t_star: float) -> np.ndarray:
        # halve toward 0 until the fastest transient is resolved per panel
        k = int(np.clip(np.ceil(np.log2(self._stiff_rate * t_star / 8.0)), 1, 40))
        edges = t_star * 2.0 ** (-np.arange(k, -1, -1, dtype=float))
        return np.concatenate(([0.0], edges))

    def _panel_integral(self, G, y0, width: float, tol_panel: float) -> tuple:
        n = 16
        prev = None
        while n <= self.max_nodes_per_panel:
            vals = _orbit_norms_sq(G, y0, width / n, n)
            S = _simpson(vals, width / n)
            if prev is not None and abs(S - prev) <= tol_panel:
                return S, abs(S - prev), n
            prev = S
            n *= 2
        raise QuadratureDiverged(
            f"panel Simpson refinement stalled (width {width:g}, tol {tol_panel:g})")

    def evaluate(self, x, tol: float | None = None) -> LyapunovValue:
        """Quadrature value with error bar tol * max(1, ||x||^2).

        Exact homogeneity V(cx) = c^2 V(x) lets the quadrature run on the
        normalized state, which keeps the refinement clear of the
        roundoff plateau for large states.
        """
        tol = self.tol if tol is None else tol
        G = self.system.generator
        x = G.check_state(x)
        x_norm = G.norm(x)
        if x_norm == 0.0:
            return LyapunovValue(0.0, 0.0, 0.0, 0)
        scale = x_norm * x_norm
        xu = x / x_norm
        M, lam = self.cert.M, self.cert.lam
        t_star = self.horizon(1.0, tol)
        tail = M * M * np.exp(-2.0 * lam * t_star) / (2.0 * lam)
        edges = self._panel_edges(t_star)
        tol_panel = 0.5 * tol / (edges.size - 1)
        total = 0.0
        err = 0.0
        nodes = 0
        for a, b in zip(edges[:-1], edges[1:]):
            y0 = xu if a == 0.0 else apply_semigroup(G, a, xu)
            S, e, n = self._panel_integral(G, y0, b - a, tol_panel)
            total += S
            err += e
            nodes += n + 1
        return LyapunovValue(total * scale, (err + tail) * scale, t_star, nodes)

    def __call__(self, x) -> float:
        return self.evaluate(x).value


class SupNormLyapunov:
    """V_g(x) = max_{s >= 0} ||exp(g s) T_s x||: equivalent norm for g < lam."""

    def __init__(self, system: LinearSystem, gamma: float, grid_frac: float = 0.01):
        self.system = system
        self.cert = system.require_certificate()
        if not 0.0 < gamma < self.cert.lam:
            raise InvalidGain(
                f"gamma must satisfy 0 < gamma < lam = {self.cert.lam:g} "
                f"(equivalent-norm construction invalid otherwise); got {gamma:g}")
        self.gamma = gamma
        G = system.generator
        self.s_max = float(np.log(self.cert.M) / (self.cert.lam - gamma))
        # node spacing: keep the weighted envelope variation below grid_frac
        if G.norm_tag == "l2":
            rate = float(np.linalg.norm((G.matrix + G.matrix.T) / 2.0, 2))
        else:
            rate = float(np.max(np.sum(np.abs(G.matrix), axis=1)))
        delta = grid_frac / max(gamma + rate, 1e-12)
        self.n_grid = int(np.clip(np.ceil(self.s_max / max(delta, 1e-15)), 32, 400_000))

    def _weighted_norm(self, s: float, x: np.ndarray) -> float:
        G = self.system.generator
        return float(np.exp(self.gamma * s) * G.norm(apply_semigroup(G, s, x)))

    def __call__(self, x) -> float:
        G = self.system.generator
        x = G.check_state(x)
        if not np.any(x):
            return 0.0
        if self.s_max <= 0.0:
            return G.norm(x)
        n = self.n_grid
        delta = self.s_max / n
        norms = np.sqrt(_orbit_norms_sq(G, x, delta, n))
        s_nodes = delta * np.arange(n + 1)
        vals = np.exp(self.gamma * s_nodes) * norms
        j = int(np.argmax(vals))
        best = float(vals[j])
        lo = s_nodes[max(j - 1, 0)]
        hi = s_nodes[min(j + 1, n)]
        if hi > lo:
            best = max(best, self._refine(lo, hi, x))
        return best

    def _refine(self, lo: float, hi: float, x: np.ndarray) -> float:
        # fine sub-scan guards against a non-unimodal bracket, golden section polishes
        sub = np.linspace(lo, hi, 17)
        sub_vals = [self._weighted_norm(s, x) for s in sub]
        k = int(np.argmax(sub_vals))
        a = sub[max(k - 1, 0)]
        b = sub[min(k + 1, 16)]
        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc = self._weighted_norm(c, x)
        fd = self._weighted_norm(d, x)
        tol_s = 1e-8 * max(1.0, self.s_max)
        while (b - a) > tol_s:
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = self._weighted_norm(c, x)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = self._weighted_norm(d, x)
        return max(max(sub_vals), fc, fd)


# -- Dini derivative ---------------------------------------------------

@dataclass(frozen=True)
class DiniEstimate:
    """Difference quotients of V along the flow for a decreasing h sequence.

    estimate: max quotient over the three smallest h (upper-limit
    surrogate).  extrapolated: first-order Richardson value from the two
    smallest h, for convergence inspection.  monotone_tail flags whether
    the quotients move monotonically over the tail.
    """

    quotients: tuple
    estimate: float
    extrapolated: float
    monotone_tail: bool

    @property
    def h_min(self) -> float:
        return min(h for h, _ in self.quotients)


def dini_derivative(V, sys: SemilinearSystem, x, u: InputSignal,
                    h_seq=DEFAULT_DINI_HSEQ, solver_tol: float = 1e-12,
                    order: int = 2) -> DiniEstimate:
    """Forward difference quotients (V(phi(h,x,u)) - V(x)) / h."""
    hs = sorted(set(float(h) for h in h_seq), reverse=True)
    if not hs:
        raise ValueError("h_seq must be nonempty")
    v0 = float(V(x))
    quots = []
    for h in hs:
        traj = solve_mild(sys, x, u, T=h, tol=solver_tol, max_step=h, order=order)
        quots.append((h, (float(V(traj.states[-1])) - v0) / h))
    tail = quots[-3:]
    estimate = max(q for _, q in tail)
    (hb, qb), (ha, qa) = quots[-2], quots[-1]
    extrapolated = (qa * hb - qb * ha) / (hb - ha)
    diffs = np.diff([q for _, q in quots])
    monotone = bool(np.all(diffs >= 0) or np.all(diffs <= 0))
    return DiniEstimate(tuple(quots), float(estimate), float(extrapolated), monotone)


# -- dissipation reports ----------------------------------------------

@dataclass(frozen=True)
class DissipationRecord:
    """One sample of a dissipation check.

    lhs is the Dini value the margin was computed from; lhs_sup is the
    max-over-smallest-h limsup surrogate and lhs_refined the first-order
    Richardson value (both always recorded for convergence inspection).
    """

    index: int
    x_norm: float
    u_norm: float
    lhs: float
    rhs: float
    margin: float
    lhs_sup: float
    lhs_refined: float


@dataclass(frozen=True)
class DissipationReport:
    kind: str
    records: tuple
    params: dict
    tol_margin_rel: float = DEFAULT_MARGIN_REL

    @property
    def passed(self) -> bool:
        return all(r.margin >= -self.tol_margin_rel * abs(r.rhs) for r in self.records)

    @property
    def min_margin(self) -> float:
        return min((r.margin for r in self.records), default=np.inf)

    def csv_rows(self):
        yield ("sample", "x_norm", "u0_norm", "lhs", "rhs", "margin")
        for r in self.records:
            yield (r.index, repr(r.x_norm), repr(r.u_norm), repr(r.lhs),
                   repr(r.rhs), repr(r.margin))

    def summary(self) -> dict:
        out = {"kind": self.kind, "passed": self.passed,
               "min_margin": self.min_margin, "n_samples": len(self.records)}
        out.update(self.params)
        return out


def sample_state_input_pairs(L: LinearSystem, n: int, seed: int = 0,
                             x_norms=(0.3, 2.0), u_norms=(0.2, 1.0)):
    """Random (x, u0) pairs with norms bounded away from zero.

    Shell sampling keeps |rhs| away from the degenerate origin where the
    relative margin tolerance collapses.
    """
    rng = np.random.default_rng(seed)
    G = L.generator
    pairs = []
    for _ in range(n):
        dx = rng.standard_normal(G.dim)
        dx /= max(G.norm(dx), 1e-300)
        x = dx * rng.uniform(*x_norms)
        du = rng.standard_normal(L.input_dim)
        du /= max(np.linalg.norm(du), 1e-300)
        u0 = du * rng.uniform(*u_norms)
        pairs.append((x, u0))
    return pairs


def _sweep(worker, samples, n_jobs: int):
    """Per-sample map with deterministic, index-ordered assembly."""
    indexed = list(enumerate(samples))
    if n_jobs <= 1:
        return [worker(i, s) for i, s in indexed]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda pair: worker(*pair), indexed))


def check_dissipation_integral(L: LinearSystem, samples=None, n_samples: int = 50,
                               eps: float | None = None, seed: int = 0,
                               h_seq=DEFAULT_DINI_HSEQ, quad_tol: float = 2e-11,
                               tol_margin_rel: float = DEFAULT_MARGIN_REL,
                               n_jobs: int = 1) -> DissipationReport:
    """Check V' <= -||x||^2 + eps*M^2/(2 lam) ||x||^2 + M^2/(2 lam eps) ||B||^2 ||u0||^2.

    eps defaults to lam/M^2, half the validity threshold 2*lam/M^2.
    """
    cert = L.require_certificate()
    M, lam = cert.M, cert.lam
    if eps is None:
        eps = lam / (M * M)
    if eps <= 0:
        raise InvalidGain("eps must be > 0")
    if samples is None:
        samples = sample_state_input_pairs(L, n_samples, seed)
    V = IntegralLyapunov(L, tol=quad_tol)
    sys = L.as_semilinear()
    B_norm = L.B_norm
    G = L.generator

    def worker(i, sample):
        # the eps-slack in the bound dominates the O(h) upward bias of the
        # limsup surrogate, so the margin uses the surrogate directly
        x, u0 = sample
        u = InputSignal.constant(np.atleast_1d(u0))
        est = dini_derivative(V, sys, x, u, h_seq=h_seq)
        xn = G.norm(x)
        un = float(np.linalg.norm(np.atleast_1d(u0)))
        rhs = (-xn * xn + eps * M * M / (2 * lam) * xn * xn
               + M * M / (2 * lam * eps) * B_norm * B_norm * un * un)
        return DissipationRecord(i, xn, un, est.estimate, rhs,
                                 rhs - est.estimate, est.estimate, est.extrapolated)

    records = _sweep(worker, samples, n_jobs)
    return DissipationReport("integral", tuple(records),
                             {"M": M, "lam": lam, "eps": eps, "B_norm": B_norm},
                             tol_margin_rel)


def check_dissipation_gamma(L: LinearSystem, gamma: float, samples=None,
                            n_samples: int = 50, seed: int = 0,
                            h_seq=DEFAULT_DINI_HSEQ,
                            tol_margin_rel: float = DEFAULT_MARGIN_REL,
                            n_jobs: int = 1) -> DissipationReport:
    """Check V_g' <= -gamma V_g(x) + V_g(B u0) along mild solutions."""
    cert = L.require_certificate()
    V = SupNormLyapunov(L, gamma)
    sys = L.as_semilinear()
    G = L.generator
    if samples is None:
        samples = sample_state_input_pairs(L, n_samples, seed)

    def worker(i, sample):
        # this inequality is tight (equality along input directions aligned
        # with the state), so the margin uses the Richardson-extrapolated
        # quotient; the raw limsup surrogate carries an O(h) upward bias
        # that would flag tight samples spuriously
        x, u0 = sample
        u = InputSignal.constant(np.atleast_1d(u0))
        est = dini_derivative(V, sys, x, u, h_seq=h_seq)
        xn = G.norm(x)
        un = float(np.linalg.norm(np.atleast_1d(u0)))
        rhs = -gamma * V(x) + V(L.B @ np.atleast_1d(u0))
        return DissipationRecord(i, xn, un, est.extrapolated, rhs,
                                 rhs - est.extrapolated, est.estimate, est.extrapolated)

    records = _sweep(worker, samples, n_jobs)
    return DissipationReport("gamma", tuple(records),
                             {"M": cert.M, "lam": cert.lam, "gamma": gamma,
                              "B_norm": L.B_norm}, tol_margin_rel)


# -- bound checks -------------------------------------------------------

@dataclass(frozen=True)
class QuadraticBoundsReport:
    n_samples: int
    upper_bound: float
    max_ratio: float
    coercivity_floor: float
    all_positive: bool
    passed: bool


def check_quadratic_bounds(L: LinearSystem, n_samples: int = 50, seed: int = 0,
                           tol: float = 1e-6) -> QuadraticBoundsReport:
    """0 < V(x) <= M^2/(2 lam) ||x||^2 on sphere samples across magnitudes.

    The recorded coercivity floor min V(x)/||x||^2 may approach zero:
    that is the non-coercivity evidence, not a failure.
    """
    cert = L.require_certificate()
    G = L.generator
    V = IntegralLyapunov(L)
    bound = cert.M ** 2 / (2.0 * cert.lam)
    rng = np.random.default_rng(seed)
    magnitudes = np.geomspace(1e-2, 1e2, 7)
    xs = []
    for i in range(n_samples):
        d = rng.standard_normal(G.dim)
        d /= max(G.norm(d), 1e-300)
        xs.append(d * magnitudes[i % magnitudes.size])
    if G.is_diagonal:
        for k in range(G.dim):
            e = np.zeros(G.dim)
            e[k] = 1.0
            xs.append(e / G.norm(e))
    ratios = []
    positive = True
    for x in xs:
        v = V(x)
        positive = positive and v > 0.0
        ratios.append(v / G.norm(x) ** 2)
    ratios = np.array(ratios)
    max_ratio = float(np.max(ratios))
    return QuadraticBoundsReport(len(xs), bound, max_ratio, float(np.min(ratios)),
                                 positive, positive and max_ratio <= bound * (1.0 + tol))


@dataclass(frozen=True)
class LipschitzReport:
    v_quotient_sup: float
    v_bound: float
    vgamma_quotient_sup: float
    vgamma_bound: float
    n_pairs: int
    n_skipped: int

    @property
    def passed(self) -> bool:
        return (self.v_quotient_sup <= self.v_bound
                and self.vgamma_quotient_sup <= self.vgamma_bound)


def check_lipschitz_constants(L: LinearSystem, r: float, n_pairs: int = 200,
                              gamma: float | None = None, seed: int = 0,
                              tol: float = 1e-3) -> LipschitzReport:
    """Difference quotients of V on the r-ball vs M^2 r / lam; of V_g vs M.

    Deterministic near-boundary aligned pairs are included so the sampled
    supremum actually approaches the constant where it is tight.
    """
    cert = L.require_certificate()
    G = L.generator
    V = IntegralLyapunov(L, tol=1e-10 * max(r, 1.0) ** 2)
    gamma = cert.lam / 2.0 if gamma is None else gamma
    Vg = SupNormLyapunov(L, gamma)
    rng = np.random.default_rng(seed)

    pairs = []
    for k in range(G.dim):
        e = np.zeros(G.dim)
        e[k] = 1.0
        e /= G.norm(e)
        pairs.append((r * e, 0.999 * r * e))
        pairs.append((-r * e, -0.999 * r * e))
    while len(pairs) < n_pairs:
        d = rng.standard_normal(G.dim)
        d /= max(G.norm(d), 1e-300)
        x = d * r * rng.uniform() ** (1.0 / G.dim)
        if rng.uniform() < 0.5:
            y = x * (1.0 - 1e-3)
        else:
            dy = rng.standard_normal(G.dim)
            dy /= max(G.norm(dy), 1e-300)
            y = dy * r * rng.uniform() ** (1.0 / G.dim)
        pairs.append((x, y))

    sup_v = 0.0
    sup_vg = 0.0
    skipped = 0
    for x, y in pairs:
        gap = G.norm(x - y)
        if gap <= 1e-12 * r:
            skipped += 1
            continue
        sup_v = max(sup_v, abs(V(x) - V(y)) / gap)
        sup_vg = max(sup_vg, abs(Vg(x) - Vg(y)) / gap)
    v_bound = cert.M ** 2 * r / cert.lam * (1.0 + tol)
    vg_bound = cert.M * (1.0 + tol)
    return LipschitzReport(sup_v, v_bound, sup_vg, vg_bound, len(pairs), skipped)


@dataclass(frozen=True)
class GammaDecayReport:
    max_ratio: float
    tol_rel: float
    n_checks: int

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + self.tol_rel


def check_gamma_decay(L: LinearSystem, gamma: float, t_grid=None, n_states: int = 20,
                      seed: int = 0, tol_rel: float = 1e-8) -> GammaDecayReport:
    """V_g(T_t x) <= exp(-gamma t) V_g(x) on a (t, x) sample grid."""
    G = L.generator
    V = SupNormLyapunov(L, gamma)
    if t_grid is None:
        t_grid = np.concatenate(([0.0], np.geomspace(1e-3, 5.0, 19)))
    rng = np.random.default_rng(seed)
    max_ratio = 0.0
    n = 0
    for _ in range(n_states):
        x = rng.standard_normal(G.dim)
        x /= max(G.norm(x), 1e-300)
        vx = V(x)
        for t in t_grid:
            lhs = V(apply_semigroup(G, t, x))
            max_ratio = max(max_ratio, lhs / (np.exp(-gamma * t) * vx))
            n += 1
    return GammaDecayReport(float(max_ratio), tol_rel, n)


@dataclass(frozen=True)
class SandwichReport:
    min_lower_ratio: float   # V_g(x) / ||x||, must be >= 1
    max_upper_ratio: float   # V_g(x) / (M ||x||), must be <= 1 + tol
    tol_rel: float
    n_checks: int

    @property
    def passed(self) -> bool:
        return (self.min_lower_ratio >= 1.0 - 1e-12
                and self.max_upper_ratio <= 1.0 + self.tol_rel)


def check_sandwich(L: LinearSystem, gamma: float, n_states: int = 50, seed: int = 0,
                   tol_rel: float = 1e-6) -> SandwichReport:
    """||x|| <= V_g(x) <= M ||x|| on sampled states (the coercivity pair)."""
    cert = L.require_certificate()
    G = L.generator
    V = SupNormLyapunov(L, gamma)
    rng = np.random.default_rng(seed)
    magnitudes = np.geomspace(1e-2, 1e2, 5)
    lo = np.inf
    hi = 0.0
    n = 0
    for i in range(n_states):
        d = rng.standard_normal(G.dim)
        d /= max(G.norm(d), 1e-300)
        x = d * magnitudes[i % magnitudes.size]
        v = V(x)
        xn = G.norm(x)
        lo = min(lo, v / xn)
        hi = max(hi, v / (cert.M * xn))
        n += 1
    return SandwichReport(float(lo), float(hi), tol_rel, n)


# -- implication-form conversion ---------------------------------------

def implication_form_gain(report: DissipationReport,
                          alpha_target: ComparisonFunction,
                          s_cap: float = 1e3) -> ComparisonFunction:
    """Smallest linear gain chi(s) = R s making the implication form hold.

    For the integral functional: ||x|| >= R ||u0|| forces the dissipative
    right-hand side below -alpha_target(||x||).  Exact algebra for
    quadratic targets; the general case uses the sampled supremum of
    alpha_target(s)/s^2 (or /s for the sup-norm kind).
    """
    M, lam = report.params["M"], report.params["lam"]
    B_norm = report.params["B_norm"]
    grid = np.geomspace(1e-9 * s_cap, s_cap, 512)
    if report.kind == "integral":
        eps = report.params["eps"]
        a = 1.0 - eps * M * M / (2.0 * lam)
        if a <= 0:
            raise InvalidGain(
                f"eps = {eps:g} >= 2 lam / M^2 = {2 * lam / (M * M):g}: "
                "decay term nonnegative, no valid gain")
        b = M * M * B_norm * B_norm / (2.0 * lam * eps)
        if alpha_target.form == "power" and alpha_target.params[1] == 2.0:
            c_sup = alpha_target.params[0]
        else:
            c_sup = float(np.max(alpha_target(grid) / grid ** 2))
        if c_sup >= a:
            raise InvalidGain(
                f"alpha_target slope {c_sup:g} >= available decay {a:g}; no valid gain")
        R = float(np.sqrt(b / (a - c_sup)))
        return ComparisonFunction.linear(R)
    if report.kind == "gamma":
        gamma = report.params["gamma"]
        if alpha_target.form == "linear":
            c_sup = alpha_target.params[0]
        else:
            c_sup = float(np.max(alpha_target(grid) / grid))
        if c_sup >= gamma:
            raise InvalidGain(
                f"alpha_target rate {c_sup:g} >= gamma = {gamma:g}; no valid gain")
        R = float(M * B_norm / (gamma - c_sup))
        return ComparisonFunction.linear(R)
    raise ValueError(f"unknown report kind {report.kind!r}")
