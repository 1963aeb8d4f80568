"""Command-line front end: parse a run config, dispatch, emit artifacts.

Exit status: 0 = all checks pass, 2 = falsified / violated / no decay,
3 = inconclusive (budget or horizon), 1 = operational error.  Artifacts
are CSV tables plus a manifest.toml echoing the fully resolved
configuration, so every reported number is reproducible from the
manifest alone.  Identical configs (including seeds) produce
byte-identical artifacts: nothing time- or host-dependent is written.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys

import numpy as np

from . import __version__
from .compfunc import ComparisonFunction
from .config import (ConfigError, RunConfig, build_certificate, build_gain,
                     build_generator, build_kl, parse_config, serialize_config)
from .evolution import (BlowUpDetected, InputSignal, linear_input_system, sample_ball,
                        solve_mild, state_on_sphere)
from .harness import (constant_input_family, equivalence_experiment, iss_estimate,
                      iss_falsify, zero_ugas_check)
from .lyapunov import (IntegralLyapunov, LinearSystem, SupNormLyapunov,
                       check_dissipation_gamma, check_dissipation_integral,
                       check_gamma_decay, check_lipschitz_constants,
                       check_quadratic_bounds, check_sandwich)
from .robust import (disturbance_family, feedback_gain_margins, synthesize_feedback,
                     verify_ugas, verify_ugatt, verify_ugs)
from .semigroup import NoDecayDetected, certify_decay, norm_curve

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_VIOLATED = 2
EXIT_INCONCLUSIVE = 3


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(cfg: RunConfig, results: dict, artifacts: list) -> None:
    results = dict(results)
    results["artifacts"] = sorted(artifacts)
    tree = dict(cfg.resolved)
    tree["meta"] = {"package": "isslyap", "version": __version__}
    tree["results"] = {k: _manifest_value(v) for k, v in results.items()}
    with open(os.path.join(cfg.out_dir, "manifest.toml"), "w") as fh:
        fh.write(serialize_config(tree))


def _manifest_value(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _solver_kw(cfg: RunConfig) -> dict:
    return {"tol": cfg.section("tolerances")["solver_tol"],
            "max_step": cfg.section("grids")["max_step"]}


def _build_input(cfg: RunConfig, dim: int, T: float):
    s = cfg.section("simulate")
    kind = s["input"]
    rng = np.random.default_rng(cfg.seed)
    if kind == "zero":
        return InputSignal.zero(dim)
    if kind == "constant":
        return InputSignal.constant(np.asarray(s["value"], dtype=float), dim=dim)
    if kind == "sinusoid":
        grid = np.linspace(0.0, T, int(s["n_pieces"]) + 1)[:-1]
        e = np.zeros(dim)
        e[0] = 1.0
        return InputSignal.sampled(
            lambda t: s["amplitude"] * np.sin(2.0 * np.pi * s["frequency"] * t) * e, grid)
    if kind == "random":
        grid = np.linspace(0.0, T, int(s["n_pieces"]) + 1)[:-1]
        return InputSignal.random_piecewise(dim, s["radius"], grid, rng)
    if kind == "csv":
        if not s["csv"]:
            raise ConfigError("simulate.csv: path required for input = 'csv'")
        return InputSignal.from_csv(s["csv"])
    raise ConfigError(f"simulate.input: unknown input kind {kind!r}")


def _certified_system(cfg: RunConfig):
    G, B = build_generator(cfg)
    cert = build_certificate(cfg)
    if cert is None:
        grids = cfg.section("grids")
        cert = certify_decay(G, t_max=grids["t_max"] or None,
                             n_samples=int(grids["cert_samples"]),
                             safety=cfg.section("tolerances")["cert_safety"])
    return LinearSystem(G, B, cert)


def _resolve_gamma(cfg: RunConfig, lam: float) -> float:
    gamma = cfg.section("lyapunov")["gamma"]
    if gamma <= 0.0:
        return lam / 2.0
    if gamma >= lam:
        raise ConfigError(
            f"lyapunov.gamma: gamma = {gamma:g} must be strictly below the "
            f"certified decay rate lam = {lam:g}")
    return gamma


# -- tasks ---------------------------------------------------------------

def _task_simulate(cfg: RunConfig):
    G, B = build_generator(cfg)
    sys = linear_input_system(G, B)
    s = cfg.section("simulate")
    x0 = np.asarray(s["x0"], dtype=float)
    if x0.size == 1 and G.dim > 1:
        x0 = np.full(G.dim, float(x0))
    T = float(s["T"])
    u = _build_input(cfg, sys.input_dim, T)
    try:
        traj = solve_mild(sys, x0, u, T, **_solver_kw(cfg))
    except BlowUpDetected as exc:
        return EXIT_VIOLATED, {"status": "diverged", "escape_time": exc.escape_time,
                               "last_norm": exc.last_norm}, []
    path = os.path.join(cfg.out_dir, "trajectory.csv")
    traj.to_csv(path)
    return EXIT_PASS, {"status": "ok", "steps": traj.stats.steps,
                       "final_norm": float(traj.norms()[-1]),
                       "max_residual": traj.stats.max_residual}, ["trajectory.csv"]


def _task_certify_decay(cfg: RunConfig):
    G, _ = build_generator(cfg)
    grids = cfg.section("grids")
    try:
        cert = certify_decay(G, t_max=grids["t_max"] or None,
                             n_samples=int(grids["cert_samples"]),
                             safety=cfg.section("tolerances")["cert_safety"])
    except NoDecayDetected as exc:
        return EXIT_VIOLATED, {"status": "no_decay", "reason": str(exc)}, []
    norms = norm_curve(G, cert.sample_times)
    path = os.path.join(cfg.out_dir, "norm_curve.csv")
    write_csv(path, ("t", "norm", "bound"),
              zip(cert.sample_times, norms, cert.envelope(cert.sample_times)))
    return EXIT_PASS, {"status": "certified", "M": cert.M, "lam": cert.lam,
                       "min_slack": cert.min_slack}, ["norm_curve.csv"]


def _task_build_lyap(cfg: RunConfig):
    L = _certified_system(cfg)
    gamma = _resolve_gamma(cfg, L.certificate.lam)
    V = IntegralLyapunov(L, tol=cfg.section("tolerances")["quad_tol"])
    Vg = SupNormLyapunov(L, gamma)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for i in range(int(cfg.section("grids")["n_samples"])):
        x = state_on_sphere(L.generator, float(rng.uniform(0.1, 2.0)), rng)
        rec = V.evaluate(x)
        rows.append((i, L.generator.norm(x), rec.value, rec.error_bound, Vg(x)))
    path = os.path.join(cfg.out_dir, "lyap_values.csv")
    write_csv(path, ("sample", "x_norm", "V", "V_error_bound", "V_gamma"), rows)
    return EXIT_PASS, {"status": "ok", "gamma": gamma, "M": L.certificate.M,
                       "lam": L.certificate.lam}, ["lyap_values.csv"]


def _task_verify_dissipation(cfg: RunConfig):
    L = _certified_system(cfg)
    tols = cfg.section("tolerances")
    grids = cfg.section("grids")
    lyap = cfg.section("lyapunov")
    gamma = _resolve_gamma(cfg, L.certificate.lam)
    eps = lyap["eps"] or None
    n = int(grids["n_samples"])
    rep_v = check_dissipation_integral(L, n_samples=n, eps=eps, seed=cfg.seed,
                                       h_seq=grids["h_seq"],
                                       tol_margin_rel=tols["margin_rel"],
                                       n_jobs=cfg.jobs)
    rep_g = check_dissipation_gamma(L, gamma, n_samples=n, seed=cfg.seed,
                                    h_seq=grids["h_seq"],
                                    tol_margin_rel=tols["margin_rel"],
                                    n_jobs=cfg.jobs)
    quad = check_quadratic_bounds(L, n_samples=n, seed=cfg.seed)
    sandwich = check_sandwich(L, gamma, n_states=n, seed=cfg.seed)
    decay = check_gamma_decay(L, gamma, seed=cfg.seed)
    lips = check_lipschitz_constants(L, lyap["lipschitz_radius"],
                                     n_pairs=int(grids["n_lipschitz_pairs"]),
                                     gamma=gamma, seed=cfg.seed)
    artifacts = []
    for name, rep in (("margins_integral.csv", rep_v), ("margins_gamma.csv", rep_g)):
        rows = list(rep.csv_rows())
        write_csv(os.path.join(cfg.out_dir, name), rows[0], rows[1:])
        artifacts.append(name)
    ok = all([rep_v.passed, rep_g.passed, quad.passed, sandwich.passed,
              decay.passed, lips.passed])
    results = {"status": "pass" if ok else "violated",
               "integral_min_margin": rep_v.min_margin,
               "gamma_min_margin": rep_g.min_margin,
               "quadratic_ok": quad.passed, "coercivity_floor": quad.coercivity_floor,
               "sandwich_ok": sandwich.passed, "gamma_decay_ok": decay.passed,
               "lipschitz_ok": lips.passed, "v_quotient_sup": lips.v_quotient_sup,
               "vgamma_quotient_sup": lips.vgamma_quotient_sup,
               "gamma": gamma, "eps": rep_v.params["eps"]}
    return (EXIT_PASS if ok else EXIT_VIOLATED), results, artifacts


def _synthesis_pieces(cfg: RunConfig):
    w = cfg.section("wurs")
    beta = build_kl(w)
    gam = build_gain(w)
    syn = synthesize_feedback(beta, gam)
    G, B = build_generator(cfg)
    plant = linear_input_system(G, B)
    from .evolution import close_loop
    cls = close_loop(plant, syn.feedback_for(G))
    return beta, gam, syn, cls


def _margin_sweep(cfg: RunConfig, syn, gam, cls, T: float):
    grids = cfg.section("grids")
    fam = disturbance_family(cls.plant.input_dim, T,
                             n_random=int(grids["n_random_disturbances"]),
                             seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    worst = -np.inf
    for r in grids["r_grid"]:
        x0 = state_on_sphere(cls.plant.generator, float(r), rng)
        for d in fam:
            m = feedback_gain_margins(cls, syn, gam, x0, d, T, **_solver_kw(cfg))
            worst = max(worst, float(np.max(m)))
    return worst, len(fam)


def _task_synthesize_wurs(cfg: RunConfig):
    beta, gam, syn, cls = _synthesis_pieces(cfg)
    grids = cfg.section("grids")
    horizon = grids["horizon"] or 6.0
    r_max = max(grids["r_grid"])
    r_tab = np.concatenate(([0.0], np.geomspace(r_max * 1e-3, r_max * 2.0, 64)))
    write_csv(os.path.join(cfg.out_dir, "synthesis.csv"),
              ("r", "alpha", "sigma", "psi", "chi"),
              ((r, syn.alpha(float(r)), syn.sigma(float(r)), syn.psi(float(r)),
                syn.chi(float(min(r, syn.chi.domain_cap)))) for r in r_tab))
    g_sig, mid, sixth = syn.chain_margins(r_tab[1:], gam)
    write_csv(os.path.join(cfg.out_dir, "chain_margins.csv"),
              ("r", "gamma_sigma", "quarter_alpha_inv", "r_over_6"),
              zip(r_tab[1:], g_sig, mid, sixth))
    worst, n_d = _margin_sweep(cfg, syn, gam, cls, horizon)
    resynthesized = False
    if worst > 0.0 and cfg.section("wurs")["resynthesize_on_failure"]:
        # shrink the feedback margin and retry once (policy knob, not a rule)
        syn = type(syn)(syn.alpha, syn.sigma.scale_value(0.5),
                        syn.psi.scale_value(0.5), syn.psi.scale_value(0.5).inverse_function())
        cls = type(cls)(cls.plant, syn.feedback_for(cls.plant.generator))
        worst, n_d = _margin_sweep(cfg, syn, gam, cls, horizon)
        resynthesized = True
    ok = worst <= 0.0
    return (EXIT_PASS if ok else EXIT_VIOLATED), {
        "status": "pass" if ok else "violated", "worst_gain_margin": worst,
        "n_disturbances": n_d, "resynthesized": resynthesized,
        "sigma_form": syn.sigma.form}, ["synthesis.csv", "chain_margins.csv"]


def _task_verify_ugas(cfg: RunConfig):
    beta, gam, syn, cls = _synthesis_pieces(cfg)
    grids = cfg.section("grids")
    tols = cfg.section("tolerances")
    horizon = grids["horizon"] or 8.0
    fam = disturbance_family(cls.plant.input_dim, horizon,
                             n_random=int(grids["n_random_disturbances"]), seed=cfg.seed)
    ugs = verify_ugs(cls, beta, grids["r_grid"], horizon, disturbances=fam,
                     n_dirs=int(grids["n_dirs"]), seed=cfg.seed, tol=tols["ugs_tol"],
                     **_solver_kw(cfg))
    ugatt = verify_ugatt(cls, grids["r_grid"], grids["eps_grid"], horizon,
                         disturbances=fam, n_dirs=int(grids["n_dirs"]), seed=cfg.seed,
                         **_solver_kw(cfg))
    report = verify_ugas(cls, ugs, ugatt)
    rows = []
    for i, r in enumerate(ugatt.r_grid):
        for j, eps in enumerate(ugatt.eps_grid):
            rows.append((r, eps, ugatt.tau_table[i, j]))
    write_csv(os.path.join(cfg.out_dir, "tau_table.csv"), ("r", "eps", "tau"), rows)
    write_csv(os.path.join(cfg.out_dir, "ugs_fit.csv"), ("r", "sigma_ugs"),
              zip(ugs.sigma_fit.grid, ugs.sigma_fit.values))
    results = {"status": "pass" if report.passed else "violated",
               "ugs_ok": ugs.passed, "ugatt_ok": ugatt.passed,
               "beta_hat_M": report.beta_hat.M, "beta_hat_lam": report.beta_hat.lam,
               "coverage_max": report.coverage_max,
               "n_counterevidence": len(ugatt.counterevidence),
               "horizon": horizon}
    if report.passed:
        code = EXIT_PASS
    elif ugs.passed and not ugatt.passed and ugatt.counterevidence:
        code = EXIT_INCONCLUSIVE  # never settled on this horizon
        results["status"] = "inconclusive_horizon"
    else:
        code = EXIT_VIOLATED
    return code, results, ["tau_table.csv", "ugs_fit.csv"]


def _task_estimate_iss(cfg: RunConfig):
    G, B = build_generator(cfg)
    sys = linear_input_system(G, B)
    grids = cfg.section("grids")
    rng = np.random.default_rng(cfg.seed)
    x0_grid = [state_on_sphere(G, float(r), rng) for r in grids["x0_norms"]]
    families = constant_input_family(sys.input_dim, grids["sup_norms"], seed=cfg.seed)
    result = iss_estimate(sys, x0_grid, families, T=grids["horizon"] or None,
                          seed=cfg.seed, pad=cfg.section("tolerances")["fit_pad"],
                          bound_form=cfg.section("falsify")["bound_form"],
                          **_solver_kw(cfg))
    if not result.passed:
        ev = result.divergence
        write_csv(os.path.join(cfg.out_dir, "divergence.csv"),
                  ("reason", "input", "escape_time", "last_norm"),
                  [(ev.reason, ev.input_label, ev.escape_time or "", ev.last_norm)])
        return EXIT_VIOLATED, {"status": "diverged", "reason": ev.reason}, ["divergence.csv"]
    est = result.estimate
    write_csv(os.path.join(cfg.out_dir, "gamma_hat.csv"), ("s", "gamma_hat"),
              zip(est.gamma_hat.grid, est.gamma_hat.values))
    return EXIT_PASS, {"status": "ok", "beta_M": est.beta_hat.M,
                       "beta_lam": est.beta_hat.lam,
                       "residual_max": est.residual_max,
                       "degenerate_gain": est.degenerate_gain}, ["gamma_hat.csv"]


def _task_falsify_iss(cfg: RunConfig):
    G, B = build_generator(cfg)
    sys = linear_input_system(G, B)
    f = cfg.section("falsify")
    grids = cfg.section("grids")
    beta = build_kl(f)
    gam = build_gain(f)
    result = iss_falsify(sys, beta, gam, budget=int(f["budget"]),
                         x0_norms=grids["x0_norms"], sup_norms=grids["sup_norms"],
                         T0=grids["horizon"] or None, seed=cfg.seed,
                         tol=cfg.section("tolerances")["falsify_tol"],
                         bound_form=f["bound_form"], **_solver_kw(cfg))
    if result.witness is not None:
        w = result.witness
        write_csv(os.path.join(cfg.out_dir, "counterexample.csv"),
                  ("input", "t", "norm", "bound", "sup_input", "x0_norm"),
                  [(w.input_label, w.t, w.norm, w.bound, w.sup_input,
                    sys.generator.norm(w.x0))])
        return EXIT_VIOLATED, {"status": "falsified", "witness_t": w.t,
                               "witness_norm": w.norm, "witness_bound": w.bound,
                               "runs": result.runs_used}, ["counterexample.csv"]
    if result.inconclusive:
        return EXIT_INCONCLUSIVE, {"status": "inconclusive_budget",
                                   "runs": result.runs_used}, []
    return EXIT_PASS, {"status": "pass", "runs": result.runs_used}, []


def _task_equivalence(cfg: RunConfig):
    G, B = build_generator(cfg)
    label = cfg.section("system")["exemplar"] or cfg.section("system")["kind"]
    report = equivalence_experiment(
        G, B, label=label, seed=cfg.seed,
        n_dissipation=int(cfg.section("grids")["n_samples"]),
        cert_t_max=cfg.section("grids")["t_max"] or None, **_solver_kw(cfg))
    rows = []
    results = {"status": report.overall, "system": label}
    for key, item in report.items.items():
        rows.append((key, item.status,
                     ";".join(f"{k}={_fmt(v)}" for k, v in sorted(item.details.items()))))
        results[f"item_{key}"] = item.status
    write_csv(os.path.join(cfg.out_dir, "equivalence_items.csv"),
              ("item", "status", "details"), rows)
    code = {"pass": EXIT_PASS, "fail": EXIT_VIOLATED,
            "inconclusive": EXIT_INCONCLUSIVE}[report.overall]
    return code, results, ["equivalence_items.csv"]


_TASKS = {
    "simulate": _task_simulate,
    "certify-decay": _task_certify_decay,
    "build-lyap": _task_build_lyap,
    "verify-dissipation": _task_verify_dissipation,
    "synthesize-wurs": _task_synthesize_wurs,
    "verify-ugas": _task_verify_ugas,
    "estimate-iss": _task_estimate_iss,
    "falsify-iss": _task_falsify_iss,
    "equivalence": _task_equivalence,
}


def run(cfg: RunConfig) -> int:
    """Execute the configured task; write artifacts + manifest; return exit code."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    code, results, artifacts = _TASKS[cfg.task](cfg)
    _write_manifest(cfg, results, artifacts)
    if not cfg.quiet:
        print(f"[isslyap] task={cfg.task} status={results.get('status')} "
              f"exit={code} out={cfg.out_dir}")
    return code


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    resolved = {k: dict(v) for k, v in cfg.resolved.items()}
    out = args.out if args.out is not None else cfg.out_dir
    seed = args.seed if args.seed is not None else cfg.seed
    jobs = args.jobs if args.jobs is not None else cfg.jobs
    quiet = True if args.quiet else cfg.quiet
    resolved["run"].update({"out": out, "seed": seed, "jobs": jobs, "quiet": quiet})
    return RunConfig(cfg.task, seed, out, jobs, quiet, resolved)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="isslyap",
        description="ISS Lyapunov verification runs driven by a TOML config")
    parser.add_argument("--config", required=True, help="path to the run config")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--jobs", type=int, help="parallelism cap for sample sweeps")
    parser.add_argument("--quiet", action="store_true", help="suppress the status line")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
        return run(cfg)
    except ConfigError as exc:
        print(f"[isslyap] config error: {exc}", file=_sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # operational errors keep a distinct exit code
        print(f"[isslyap] error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
