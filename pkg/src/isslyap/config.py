"""Run configuration: TOML grammar, defaults, validation, serialization.

One file = one run.  parse_config resolves a user file against the
defaults tree and validates cross-field constraints; the resolved
configuration is echoed verbatim into the run manifest so every reported
number is reproducible from the manifest alone.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:
    import tomli as tomllib

from .compfunc import ComparisonFunction, KLFunction
from .exemplars import EXEMPLAR_NAMES, exemplar
from .semigroup import DecayCertificate, GeneratorModel, discretize

TASKS = ("simulate", "certify-decay", "build-lyap", "verify-dissipation",
         "synthesize-wurs", "verify-ugas", "estimate-iss", "falsify-iss",
         "equivalence")

OUT_ROOT_ENV = "ISSLYAP_OUT_ROOT"

DEFAULTS = {
    "run": {"task": "simulate", "seed": 0, "out": "", "jobs": 1, "quiet": False},
    "system": {"kind": "scalar", "a": -1.0, "N": 1, "length": 1.0, "speed": 1.0,
               "damping": 0.5, "eig": -1.0, "coupling": 10.0, "rows": [],
               "exemplar": "", "norm_tag": "l2", "weight": 1.0},
    "input": {"identity": True, "first_coordinate": False, "matrix": []},
    "certificate": {"M": 0.0, "lam": 0.0},
    "tolerances": {"quad_tol": 1e-8, "solver_tol": 1e-10, "margin_rel": 1e-6,
                   "cert_safety": 1e-3, "fit_pad": 1e-3, "ugs_tol": 1e-6,
                   "falsify_tol": 1e-7},
    "grids": {"n_samples": 50, "t_max": 0.0, "horizon": 0.0, "max_step": 0.01,
              "cert_samples": 200, "h_seq": [4e-4, 2e-4, 1e-4],
              "r_grid": [0.5, 1.0, 2.0], "eps_grid": [0.1, 0.2, 0.4],
              "n_random_disturbances": 20, "n_dirs": 2,
              "x0_norms": [0.5, 1.0, 2.0], "sup_norms": [0.25, 0.5, 1.0, 2.0],
              "n_lipschitz_pairs": 200},
    "lyapunov": {"gamma": 0.0, "eps": 0.0, "lipschitz_radius": 1.0},
    "wurs": {"beta_M": 1.0, "beta_lam": 1.0, "gamma_form": "linear",
             "gamma_c": 1.0, "gamma_p": 1.0, "resynthesize_on_failure": False},
    "falsify": {"beta_M": 1.0, "beta_lam": 1.0, "gamma_form": "linear",
                "gamma_c": 1.0, "gamma_p": 1.0, "budget": 60,
                "bound_form": "sum"},
    "simulate": {"x0": [1.0], "T": 5.0, "input": "zero", "value": [0.0],
                 "amplitude": 1.0, "frequency": 1.0, "n_pieces": 16,
                 "radius": 1.0, "csv": ""},
}


class ConfigError(ValueError):
    """Configuration file rejected; message carries the offending field."""


@dataclass(frozen=True)
class RunConfig:
    task: str
    seed: int
    out_dir: str
    jobs: int
    quiet: bool
    resolved: dict

    def section(self, name: str) -> dict:
        return self.resolved[name]


def _merge(defaults: dict, user: dict, path: str = "") -> dict:
    out = {}
    for key, dval in defaults.items():
        if key in user:
            uval = user[key]
            here = f"{path}.{key}" if path else key
            if isinstance(dval, dict):
                if not isinstance(uval, dict):
                    raise ConfigError(f"{here}: expected a table")
                out[key] = _merge(dval, uval, here)
            else:
                if isinstance(dval, bool) != isinstance(uval, bool) and isinstance(dval, bool):
                    raise ConfigError(f"{here}: expected a boolean")
                if isinstance(dval, (int, float)) and not isinstance(dval, bool):
                    if not isinstance(uval, (int, float)) or isinstance(uval, bool):
                        raise ConfigError(f"{here}: expected a number")
                    uval = type(dval)(uval) if isinstance(dval, float) else uval
                out[key] = uval
        else:
            out[key] = dval
    for key in user:
        if key not in defaults:
            here = f"{path}.{key}" if path else key
            raise ConfigError(f"{here}: unknown field")
    return out


def _validate(resolved: dict) -> None:
    run = resolved["run"]
    if run["task"] not in TASKS:
        raise ConfigError(f"run.task: unknown task {run['task']!r}; valid: {', '.join(TASKS)}")
    if run["jobs"] < 1:
        raise ConfigError("run.jobs: must be >= 1")
    for key, val in resolved["tolerances"].items():
        if val <= 0:
            raise ConfigError(f"tolerances.{key}: must be > 0")
    grids = resolved["grids"]
    for key in ("h_seq", "r_grid", "eps_grid", "x0_norms", "sup_norms"):
        if not grids[key]:
            raise ConfigError(f"grids.{key}: must be nonempty")
    if grids["n_samples"] < 1:
        raise ConfigError("grids.n_samples: must be >= 1")
    if grids["max_step"] <= 0:
        raise ConfigError("grids.max_step: must be > 0")
    sys_kind = resolved["system"]["kind"]
    if sys_kind not in ("scalar", "heat_dirichlet", "transport", "jordan2",
                        "matrix", "exemplar"):
        raise ConfigError(f"system.kind: unknown kind {sys_kind!r}")
    if sys_kind == "exemplar" and resolved["system"]["exemplar"] not in EXEMPLAR_NAMES:
        raise ConfigError(
            f"system.exemplar: unknown name {resolved['system']['exemplar']!r}")
    cert = resolved["certificate"]
    gamma = resolved["lyapunov"]["gamma"]
    if cert["lam"] > 0 and gamma > 0 and gamma >= cert["lam"]:
        raise ConfigError(
            f"lyapunov.gamma: gamma = {gamma:g} must be strictly below the "
            f"certified decay rate lam = {cert['lam']:g} for the "
            "equivalent-norm construction to be valid")
    if resolved["falsify"]["bound_form"] not in ("sum", "max"):
        raise ConfigError("falsify.bound_form: must be 'sum' or 'max'")


def parse_config(path: str) -> RunConfig:
    """Read, resolve against defaults, and validate a run configuration."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    resolved = _merge(DEFAULTS, data)
    _validate(resolved)
    run = resolved["run"]
    out = run["out"] or os.path.join(os.environ.get(OUT_ROOT_ENV, "runs"), run["task"])
    return RunConfig(run["task"], int(run["seed"]), out, int(run["jobs"]),
                     bool(run["quiet"]), resolved)


# -- serialization (round-trip and the manifest echo) -------------------

def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        out = repr(float(v))
        return out if any(c in out for c in ".einf") else out + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def serialize_config(resolved: dict) -> str:
    """Deterministic TOML text for a resolved configuration tree."""
    lines = []
    for section in sorted(resolved):
        body = resolved[section]
        lines.append(f"[{section}]")
        for key in sorted(body):
            lines.append(f"{key} = {_fmt_value(body[key])}")
        lines.append("")
    return "\n".join(lines)


# -- object builders ----------------------------------------------------

def build_generator(cfg: RunConfig) -> tuple[GeneratorModel, np.ndarray]:
    """Generator and input matrix from the [system]/[input] tables."""
    s = cfg.section("system")
    if s["kind"] == "exemplar":
        return exemplar(s["exemplar"])
    if s["kind"] == "scalar":
        G = discretize("scalar", 1, a=s["a"])
    elif s["kind"] == "heat_dirichlet":
        G = discretize("heat_dirichlet", int(s["N"]), length=s["length"])
    elif s["kind"] == "transport":
        G = discretize("transport", int(s["N"]), speed=s["speed"],
                       damping=s["damping"], length=s["length"])
    elif s["kind"] == "jordan2":
        G = discretize("jordan2", 2, eig=s["eig"], coupling=s["coupling"])
    else:
        if not s["rows"]:
            raise ConfigError("system.rows: required for kind = 'matrix'")
        G = discretize("matrix", len(s["rows"]), rows=s["rows"],
                       norm_tag=s["norm_tag"], weight=s["weight"])
    inp = cfg.section("input")
    if inp["matrix"]:
        B = np.asarray(inp["matrix"], dtype=float)
    elif inp["first_coordinate"]:
        B = np.zeros((G.dim, 1))
        B[0, 0] = 1.0
    else:
        B = np.eye(G.dim)
    return G, B


def build_certificate(cfg: RunConfig, times=None) -> DecayCertificate | None:
    """Certificate from the [certificate] table, if one is pinned there."""
    c = cfg.section("certificate")
    if c["M"] <= 0 or c["lam"] <= 0:
        return None
    t = np.asarray(times if times is not None else [0.0, 1.0], dtype=float)
    return DecayCertificate(c["M"], c["lam"], t, np.zeros_like(t), 0.0)


def build_gain(table: dict, prefix: str = "gamma") -> ComparisonFunction:
    form = table[f"{prefix}_form"]
    if form == "linear":
        return ComparisonFunction.linear(table[f"{prefix}_c"])
    if form == "power":
        return ComparisonFunction.power(table[f"{prefix}_c"], table[f"{prefix}_p"])
    raise ConfigError(f"{prefix}_form: unknown form {form!r}")


def build_kl(table: dict) -> KLFunction:
    return KLFunction.exp_family(table["beta_M"], table["beta_lam"])
