"""Comparison functions: the classes PD, K, K-infinity, L and KL.

These carry the gains and envelopes used throughout the toolkit
(trajectory bounds, feedback synthesis, Lyapunov gains).  Parametric
forms (linear, power, saturating) evaluate and invert in closed form;
everything else is tabulated with shape-preserving interpolation so that
class membership survives interpolation.  Class membership itself is
certified on finite sample grids only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

DEFAULT_DOMAIN_CAP = 1.0e6
DEFAULT_GRID_POINTS = 256

VALID_CLASSES = ("PD", "K", "Kinf", "L")


class DomainCapExceeded(ValueError):
    """Argument (or target value) outside the certified domain of a function."""


class ClassIncompatible(ValueError):
    """Requested operation does not preserve the declared function classes."""


@dataclass(frozen=True)
class ComparisonFunction:
    """A scalar comparison function r >= 0 -> value >= 0.

    form is one of 'linear' (c*r), 'power' (c*r**p), 'saturating'
    (c*r/(s+r)) or 'tabulated' (monotone interpolation of samples).
    """

    form: str
    params: tuple = ()
    declared_class: str = "Kinf"
    domain_cap: float = DEFAULT_DOMAIN_CAP
    grid: np.ndarray | None = None
    values: np.ndarray | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    # -- constructors -------------------------------------------------

    @staticmethod
    def linear(c: float, declared_class: str = "Kinf",
               domain_cap: float = DEFAULT_DOMAIN_CAP) -> "ComparisonFunction":
        if c <= 0:
            raise ValueError("linear form needs slope c > 0")
        return ComparisonFunction("linear", (float(c),), declared_class, domain_cap)

    @staticmethod
    def power(c: float, p: float, declared_class: str = "Kinf",
              domain_cap: float = DEFAULT_DOMAIN_CAP) -> "ComparisonFunction":
        if c <= 0 or p <= 0:
            raise ValueError("power form needs c > 0 and p > 0")
        return ComparisonFunction("power", (float(c), float(p)), declared_class, domain_cap)

    @staticmethod
    def saturating(c: float, s: float, declared_class: str = "K",
                   domain_cap: float = DEFAULT_DOMAIN_CAP) -> "ComparisonFunction":
        """c*r/(s+r): zero at zero, strictly increasing, bounded by c (class K, not Kinf)."""
        if c <= 0 or s <= 0:
            raise ValueError("saturating form needs c > 0 and s > 0")
        return ComparisonFunction("saturating", (float(c), float(s)), declared_class, domain_cap)

    @staticmethod
    def identity(domain_cap: float = DEFAULT_DOMAIN_CAP) -> "ComparisonFunction":
        return ComparisonFunction.linear(1.0, "Kinf", domain_cap)

    @staticmethod
    def tabulated(grid, values, declared_class: str = "K") -> "ComparisonFunction":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("tabulated form needs matching 1-d grid/values, length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        interp = PchipInterpolator(grid, values, extrapolate=False)
        return ComparisonFunction(
            "tabulated", (), declared_class, float(grid[-1]), grid, values, interp)

    # -- evaluation ---------------------------------------------------

    def __call__(self, r):
        if isinstance(r, float) or isinstance(r, int):
            # scalar fast path (feedback evaluation sits in solver inner loops)
            if r < 0:
                raise ValueError("comparison functions are defined on r >= 0")
            if self.form == "linear":
                return self.params[0] * r
            if self.form == "power":
                return self.params[0] * r ** self.params[1]
            if self.form == "saturating":
                c, s = self.params
                return c * r / (s + r)
            if r > self.domain_cap * (1 + 1e-12):
                raise DomainCapExceeded(
                    f"argument beyond tabulated domain cap {self.domain_cap:g}")
            return float(self._interp(min(r, self.domain_cap)))
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0):
            raise ValueError("comparison functions are defined on r >= 0")
        if self.form == "linear":
            out = self.params[0] * r_arr
        elif self.form == "power":
            c, p = self.params
            out = c * r_arr ** p
        elif self.form == "saturating":
            c, s = self.params
            out = c * r_arr / (s + r_arr)
        else:
            if np.any(r_arr > self.domain_cap * (1 + 1e-12)):
                raise DomainCapExceeded(
                    f"argument beyond tabulated domain cap {self.domain_cap:g}")
            out = self._interp(np.minimum(r_arr, self.domain_cap))
        return float(out) if np.isscalar(r) else out

    def invert(self, y: float, tol: float = 1e-10) -> float:
        """Solve f(r) = y for r, |f(r) - y| <= tol*max(1, y).

        Closed form for linear/power, bracketing bisection otherwise.
        Raises DomainCapExceeded when y is not reached within domain_cap.
        """
        if y < 0:
            raise ValueError("target must be >= 0")
        if y == 0.0:
            return 0.0
        if self.form == "linear":
            return y / self.params[0]
        if self.form == "power":
            c, p = self.params
            return (y / c) ** (1.0 / p)
        hi = self.domain_cap
        f_hi = self(hi)
        if f_hi < y:
            raise DomainCapExceeded(
                f"target {y:g} above f(domain_cap) = {f_hi:g}; domain_cap too small")
        r = brentq(lambda t: self(t) - y, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
        if abs(self(r) - y) > tol * max(1.0, y):
            raise ArithmeticError("bisection failed to meet the inversion tolerance")
        return float(r)

    def inverse_function(self, n_points: int = DEFAULT_GRID_POINTS) -> "ComparisonFunction":
        """The inverse as a new function object (closed form where available)."""
        if self.form == "linear":
            return ComparisonFunction.linear(1.0 / self.params[0], self.declared_class,
                                             self.params[0] * self.domain_cap)
        if self.form == "power":
            c, p = self.params
            return ComparisonFunction.power(c ** (-1.0 / p), 1.0 / p, self.declared_class,
                                            self(self.domain_cap))
        grid = _sample_grid(self.domain_cap, n_points)
        vals = self(grid)
        if np.any(np.diff(vals) <= 0):
            raise ClassIncompatible("cannot invert: sampled values are not strictly increasing")
        return ComparisonFunction.tabulated(vals, grid, self.declared_class)

    # -- CSV round trip for tabulated forms ----------------------------

    def to_csv(self, path) -> None:
        if self.form != "tabulated":
            raise ValueError("only tabulated forms serialize to CSV")
        np.savetxt(path, np.column_stack([self.grid, self.values]),
                   delimiter=",", header="argument,value", comments="")

    @staticmethod
    def from_csv(path, declared_class: str = "K") -> "ComparisonFunction":
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        return ComparisonFunction.tabulated(data[:, 0], data[:, 1], declared_class)

    # -- algebra ------------------------------------------------------

    def scale_value(self, a: float) -> "ComparisonFunction":
        """a * f(r), a > 0."""
        if a <= 0:
            raise ValueError("scale factor must be > 0")
        if self.form == "linear":
            return ComparisonFunction.linear(a * self.params[0], self.declared_class, self.domain_cap)
        if self.form == "power":
            c, p = self.params
            return ComparisonFunction.power(a * c, p, self.declared_class, self.domain_cap)
        if self.form == "saturating":
            c, s = self.params
            return ComparisonFunction.saturating(a * c, s, self.declared_class, self.domain_cap)
        return ComparisonFunction.tabulated(self.grid, a * self.values, self.declared_class)

    def scale_arg(self, a: float) -> "ComparisonFunction":
        """f(a * r), a > 0."""
        if a <= 0:
            raise ValueError("argument scale must be > 0")
        if self.form == "linear":
            return ComparisonFunction.linear(a * self.params[0], self.declared_class,
                                             self.domain_cap / a)
        if self.form == "power":
            c, p = self.params
            return ComparisonFunction.power(c * a ** p, p, self.declared_class, self.domain_cap / a)
        if self.form == "saturating":
            c, s = self.params
            return ComparisonFunction.saturating(c, s / a, self.declared_class, self.domain_cap / a)
        return ComparisonFunction.tabulated(self.grid / a, self.values, self.declared_class)


def _sample_grid(cap: float, n: int) -> np.ndarray:
    """Log-spaced sample grid on (0, cap] plus the origin."""
    if n < 2:
        raise ValueError("need at least 2 sample points")
    pos = np.geomspace(cap * 1e-9, cap, n - 1)
    return np.concatenate(([0.0], pos))


def compose(f: ComparisonFunction, g: ComparisonFunction,
            n_points: int = DEFAULT_GRID_POINTS) -> ComparisonFunction:
    """f(g(r)).  Closed form for linear/power pairs, tabulated otherwise.

    K composed with K stays K; Kinf with Kinf stays Kinf.
    """
    if g.declared_class == "L" or f.declared_class == "L":
        raise ClassIncompatible("composition is only supported for increasing classes")
    cls = "Kinf" if f.declared_class == g.declared_class == "Kinf" else "K"
    if f.form == "linear" and g.form == "linear":
        return ComparisonFunction.linear(f.params[0] * g.params[0], cls,
                                         min(g.domain_cap, f.domain_cap / g.params[0]))
    if f.form in ("linear", "power") and g.form in ("linear", "power"):
        cf, pf = (f.params[0], 1.0) if f.form == "linear" else f.params
        cg, pg = (g.params[0], 1.0) if g.form == "linear" else g.params
        # f(g(r)) = cf * (cg * r**pg)**pf
        return ComparisonFunction.power(cf * cg ** pf, pf * pg, cls, g.domain_cap)
    cap = g.domain_cap
    # keep g's outputs inside f's certified domain
    if g(cap) > f.domain_cap:
        cap = g.invert(f.domain_cap)
    grid = _sample_grid(cap, n_points)
    return ComparisonFunction.tabulated(grid, f(g(grid)), cls)


@dataclass(frozen=True)
class ClassReport:
    """Per-property results of a sampled class-membership check."""

    claimed: str
    checks: dict
    n_samples: int

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def verify_class(f: ComparisonFunction, claimed: str,
                 n_samples: int = DEFAULT_GRID_POINTS,
                 unbounded_threshold: float = 1e3,
                 decay_tol: float = 1e-3) -> ClassReport:
    """Check the defining properties of the claimed class on a sampled grid.

    Failures are report entries, never exceptions.  Strict monotonicity
    and unboundedness are certified only up to the sample grid and
    domain_cap (proxy checks).
    """
    if claimed not in VALID_CLASSES:
        raise ValueError(f"unknown class {claimed!r}")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    grid = _sample_grid(f.domain_cap, n_samples)
    vals = f(grid)
    checks = {}
    if claimed in ("PD", "K", "Kinf"):
        checks["zero_at_zero"] = abs(vals[0]) <= 1e-12 * max(1.0, abs(vals[-1]))
        checks["positive_away_from_zero"] = bool(np.all(vals[1:] > 0))
    if claimed in ("K", "Kinf"):
        checks["strictly_increasing"] = bool(np.all(np.diff(vals) > 0))
    if claimed == "Kinf":
        checks["unbounded_proxy"] = vals[-1] > unbounded_threshold
    if claimed == "L":
        checks["strictly_decreasing"] = bool(np.all(np.diff(vals) < 0))
        checks["decays_to_zero"] = vals[-1] <= decay_tol * max(1.0, vals[0])
    return ClassReport(claimed, checks, n_samples)


@dataclass(frozen=True)
class KLFunction:
    """A KL envelope beta(r, t): class K in r for fixed t, decreasing to 0 in t.

    Two forms:
      * exp_family: beta(r, t) = shape(M * r) * exp(-lam * t), M >= 1, lam > 0
      * factored:   beta(r, t) = k_part(r) * decay(t), decay of class L
    """

    form: str
    M: float = 1.0
    lam: float = 1.0
    shape: ComparisonFunction | None = None
    k_part: ComparisonFunction | None = None
    decay: ComparisonFunction | None = None
    fit_residual: float = 0.0

    @staticmethod
    def exp_family(M: float, lam: float,
                   shape: ComparisonFunction | None = None,
                   fit_residual: float = 0.0) -> "KLFunction":
        if M < 1.0:
            raise ValueError("exp_family needs M >= 1 (value at t=0 must dominate r)")
        if lam <= 0:
            raise ValueError("exp_family needs decay rate lam > 0")
        return KLFunction("exp_family", float(M), float(lam),
                          shape or ComparisonFunction.identity(), fit_residual=fit_residual)

    @staticmethod
    def factored(k_part: ComparisonFunction, decay: ComparisonFunction) -> "KLFunction":
        if decay.declared_class != "L":
            raise ClassIncompatible("time factor must be declared class L")
        return KLFunction("factored", k_part=k_part, decay=decay)

    def __call__(self, r, t):
        if self.form == "exp_family":
            return self.shape(self.M * np.asarray(r, dtype=float)) * np.exp(-self.lam * np.asarray(t, dtype=float))
        return self.k_part(r) * self.decay(t)

    def at_zero_time(self) -> ComparisonFunction:
        """The class-K section beta(., 0)."""
        if self.form == "exp_family":
            return self.shape.scale_arg(self.M)
        return self.k_part.scale_value(float(self.decay(0.0)))


def kl_eval(beta: KLFunction, r: float, t: float) -> float:
    if r < 0 or t < 0:
        raise ValueError("kl_eval needs r >= 0 and t >= 0")
    return float(beta(r, t))
