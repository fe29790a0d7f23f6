"""Command line driver.

Every subcommand writes ``<out>/<command>.record`` (flat key=value
summary) next to its CSV, OBJ and PNG artifacts.  Exit codes: 0 ok,
1 invariant violation, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, load_config, with_overrides
from .errors import CapillaryError, ConfigError
from .io import write_csv, write_obj, write_record

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class Run:
    """Output directory plus the record header shared by all commands."""

    def __init__(self, command, cfg, out, quiet):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.quiet = quiet

    def path(self, name):
        return self.out / name

    def say(self, msg):
        if not self.quiet:
            print(msg)

    def record(self, values, violations):
        rec = {"command": self.command, "config_hash": self.cfg.hash(), "seed": self.cfg.seed,
               "version.capminmax": __version__, "version.numpy": np.__version__,
               "version.scipy": scipy.__version__,
               "version.python": platform.python_version()}
        rec.update(values)
        rec["violations"] = len(violations)
        for k, v in enumerate(violations):
            rec[f"violation.{k}"] = v
        write_record(self.path(f"{self.command}.record"), rec)
        for v in violations:
            print(f"invariant violated: {v}", file=sys.stderr)
        return EXIT_VIOLATION if violations else EXIT_OK


def _require_ball(cfg):
    if cfg.domain_kind != "ball":
        raise ConfigError("this command needs a ball domain", field="domain.kind")


def _cap(cfg, resolution=None):
    from .surface import build_disk_cap
    D = cfg.domain()
    R = D.radii[0]
    return D, build_disk_cap(D, cfg.axis, cfg.a * R, cfg.theta_rad, resolution or cfg.resolution)


def _flow_options(cfg):
    from .flow import FlowOptions
    return FlowOptions(max_steps=cfg.flow_max_steps, grad_tol=cfg.flow_grad_tol,
                       step_init=cfg.flow_step_init)


def cmd_solve(run):
    """Seeded bump on the stationary disk-cap, pulled tight with the wall sheet held."""
    from .energy import capillarity_energy, energy_report
    from .flow import is_monotone, pull_tight
    from .meshes import add_pyramid_bump
    from .plotting import plot_flow
    cfg = run.cfg
    _require_ball(cfg)
    D, cap = _cap(cfg)
    rng = np.random.default_rng(cfg.seed)
    # keep the bump clear of the contact line, whose vertices it does not move
    radius = 0.3 * D.bounding_radius
    V = cap.vertices
    rim = V[cap.contact_polyline]
    dist = np.min(np.linalg.norm(V[:, None, :] - rim[None, :, :], axis=2), axis=1)
    inner = np.setdiff1d(cap.sigma_vertex_ids, np.flatnonzero(dist < 1.5 * radius))
    if len(inner) == 0:
        raise ConfigError("disk too small for the seed bump", field="solve.bump")
    center = V[rng.choice(inner)]
    seed_pair = add_pyramid_bump(cap, center, radius, cfg.solve_bump)
    # the cap is a saddle of F_a: hold the wall sheet so the flow cannot slide
    # off along the translation mode
    trace = pull_tight(seed_pair, D, _flow_options(cfg), free_mask=~cap.constrained_mask)
    rep = energy_report(trace.pair, D)
    F_cap = capillarity_energy(cap).F_a
    write_csv(run.path("flow.csv"), ["step", "F_a", "grad_norm", "step_size"], trace.rows())
    write_obj(run.path("solve.obj"), trace.pair, "solve")
    plot_flow(trace, run.path("flow.png"))
    run.say(f"{trace.reason} after {trace.steps} steps: F_a {rep.F_a:.10g}, "
            f"grad {rep.grad_norm:.3e}, contact residual {rep.max_contact_residual:.3e}")
    values = {"bump_center": center, "F_initial": trace.F_values[0], "F_cap": F_cap,
              "reason": trace.reason, "steps": trace.steps,
              "max_return_error": float(np.max(np.abs(trace.pair.vertices - cap.vertices))),
              **rep.to_record()}
    bad = [] if is_monotone(trace) else ["energy increased during the flow"]
    return run.record(values, bad)


def cmd_sweep(run):
    """Plane sweepout of the ball with a CSV energy profile."""
    from .plotting import plot_sweep
    from .sweepout import plane_sweep
    cfg = run.cfg
    _require_ball(cfg)
    D = cfg.domain()
    fam = plane_sweep(D, cfg.axis, cfg.sweep_slices, cfg.theta_rad, cfg.resolution)
    d = [s.meta["d"] for s in fam.slices]
    write_csv(run.path("sweep.csv"), ["t", "d", "volume_fraction", "F_a"],
              [(t, di, v, F) for (t, v, F), di in zip(fam.rows(), d)])
    i = fam.argmax
    plot_sweep(fam, run.path("sweep.png"), fam.t[i])
    run.say(f"max slice {i}: t {fam.t[i]:.4f}, d {d[i]:.4f}, F_a {fam.F_values[i]:.10g}")
    values = {"slices": len(fam), "argmax": i, "max_t": fam.t[i], "max_d": d[i],
              "max_F": fam.F_values[i], "max_volume_jump": fam.max_jump()}
    return run.record(values, fam.problems(4.0 / (len(fam) - 1)))


def cmd_minmax(run):
    """Sweep, min-max relaxation, critical slice OBJ and lower bound."""
    from .plotting import plot_history, plot_sweep
    from .sweepout import MinMaxOptions, lower_bound_check, minmax, plane_sweep
    cfg = run.cfg
    _require_ball(cfg)
    D = cfg.domain()
    fam = plane_sweep(D, cfg.axis, cfg.sweep_slices, cfg.theta_rad, cfg.resolution)
    opts = MinMaxOptions(max_outer=cfg.minmax_max_outer, tol_m0=cfg.minmax_tol_m0)
    res = minmax(fam, D, opts)
    lb = lower_bound_check(D, cfg.theta_rad, res)
    write_obj(run.path("critical_slice.obj"), res.critical_slice, "critical_slice")
    write_csv(run.path("minmax_history.csv"), ["iteration", "max_F"], res.history)
    write_csv(run.path("minmax_family.csv"), ["t", "volume_fraction", "F_a"], res.family.rows())
    plot_sweep(res.family, run.path("minmax_family.png"), res.critical_t)
    plot_history(res.history, run.path("minmax_history.png"))
    run.say(f"{res.status}: m0 {res.m0_estimate:.10g} at t {res.critical_t:.4f}, "
            f"lower-bound margin {lb.margin:.6g}")
    values = {"m0_estimate": res.m0_estimate, "critical_t": res.critical_t,
              "critical_d": res.critical_slice.meta.get("d", math.nan), "status": res.status,
              "outer_iterations": len(res.history) - 1, "lower_bound_margin": lb.margin,
              "analytic_margin": lb.analytic_margin}
    maxima = [F for _, F in res.history]
    bad = ["maximal slice energy rose"] if any(b > a for a, b in zip(maxima, maxima[1:])) else []
    return run.record(values, bad + res.family.problems(4.0 / (len(res.family) - 1)))


def cmd_stability(run):
    """Lowest eigenvalues of the second variation on the disk-cap."""
    from .analysis import stability_spectrum
    from .plotting import plot_spectrum
    cfg = run.cfg
    _require_ball(cfg)
    D, cap = _cap(cfg)
    rep = stability_spectrum(cap, D, n_eig=cfg.stability_eigenvalues, tol_eig=cfg.stability_tol)
    write_csv(run.path("spectrum.csv"), ["index", "eigenvalue"], list(enumerate(rep.eigenvalues)))
    plot_spectrum(rep.eigenvalues, run.path("spectrum.png"), cfg.stability_tol)
    run.say("eigenvalues: " + " ".join(f"{v:.6g}" for v in rep.eigenvalues))
    values = {"eigenvalues": rep.eigenvalues, "lambda_min": rep.lambda_min,
              "near_zero": rep.num_near_zero, "method": rep.method}
    asym = abs(rep.form.Q - rep.form.Q.T).max() if rep.form.Q.nnz else 0.0
    bad = []
    if not np.all(np.isfinite(rep.eigenvalues)):
        bad.append("non-finite eigenvalue")
    if asym > 1e-12 * max(abs(rep.form.Q).max(), 1.0):
        bad.append("stability form is not symmetric")
    return run.record(values, bad)


def cmd_monotonicity(run):
    """Density ratios at contact points of the disk-cap."""
    from .analysis import density_ratio, local_mesh_size
    from .plotting import plot_density
    cfg = run.cfg
    _require_ball(cfg)
    D, cap = _cap(cfg)
    ids = cap.contact_polyline
    R = D.radii[0]
    reports, rows = [], []
    for k in range(cfg.monotonicity_points):
        x = cap.vertices[ids[k * len(ids) // cfg.monotonicity_points]]
        h = local_mesh_size(cap, x, 0.1 * R)
        rep = density_ratio(cap, D, x, np.linspace(2.2 * h, 0.3 * R, cfg.monotonicity_radii))
        reports.append(rep)
        rows += [(k, r, q, s) for r, q, s in rep.rows()]
    write_csv(run.path("density.csv"), ["point", "radius", "ratio", "adjusted"], rows)
    target = math.pi * (1 + cfg.a) / 2
    plot_density(reports, run.path("density.png"), target)
    total = sum(r.violations for r in reports)
    limits = [r.density_limit_estimate for r in reports]
    run.say(f"{total} monotonicity violations; density limits {min(limits):.6g}..{max(limits):.6g}"
            f" (wedge value {target:.6g})")
    values = {"points": len(reports), "violations_total": total, "density_limits": limits,
              "wedge_density": target}
    return run.record(values, [f"{total} decreasing adjusted density pairs"] if total else [])


def cmd_blowup(run):
    """Wedge fit of the rescaled disk-cap at a contact point."""
    from .analysis import blowup, local_mesh_size
    from .plotting import plot_blowup
    cfg = run.cfg
    _require_ball(cfg)
    D, cap = _cap(cfg, cfg.blowup_resolution)
    x = cap.vertices[cap.contact_polyline[0]]
    h = local_mesh_size(cap, x, 0.2 * D.radii[0])
    rep = blowup(cap, D, x, 4 * h * np.array([3.0, 2.0, 1.01]))
    rows = [(s, dens, sf.rms if sf else math.nan, gf.rms if gf else math.nan)
            for s, dens, sf, gf in zip(rep.scales, rep.density_at_scale, rep.sigma_fits,
                                       rep.gamma_fits)]
    write_csv(run.path("blowup.csv"), ["scale", "density", "sigma_rms", "gamma_rms"], rows)
    plot_blowup(rep, run.path("blowup.png"))
    angle = math.degrees(rep.dihedral)
    run.say(f"dihedral {angle:.4f} deg (theta {cfg.theta:g} deg), mesh size {rep.mesh_size:.4g}")
    values = {"center": x, "scales": rep.scales, "dihedral_degrees": angle,
              "density_at_scale": rep.density_at_scale, "mesh_size": rep.mesh_size,
              "gamma_empty": rep.gamma_empty}
    return run.record(values, [] if math.isfinite(angle) else ["no wedge at the contact point"])


def cmd_fbsolve(run):
    """Capillary free-boundary graph over a flat obstacle."""
    from .fbsolver import contact_slope, fb_residuals, near_contact_slope, solve_fb, wedge_problem
    from .plotting import plot_fb
    cfg = run.cfg
    prob = wedge_problem(cfg.fb_n, cfg.a, offset=cfg.fb_offset)
    sol = solve_fb(prob, tol=cfg.fb_tol)
    interior, contact = fb_residuals(sol, prob)
    X, Y = prob.mesh()
    slope = contact_slope(cfg.a)
    err = np.abs(sol.g_field - np.maximum(slope * Y, 0.0))
    write_csv(run.path("fb_field.csv"), ["x", "y", "g", "contact"],
              zip(X.ravel(), Y.ravel(), sol.g_field.ravel(), sol.contact_set.ravel().astype(int)))
    plot_fb(prob, sol.g_field, sol.contact_set, run.path("fb_field.png"))
    measured = near_contact_slope(sol, prob)
    run.say(f"{sol.policy_iterations} policy steps, interior residual {interior:.3e}, "
            f"contact residual {contact:.3e}, near-contact slope {measured:.6g} "
            f"(exact {slope:.6g})")
    values = {"n": cfg.fb_n, "a": cfg.a, "interior_residual": sol.interior_residual,
              "contact_residual": sol.contact_residual, "recomputed_interior": interior,
              "recomputed_contact": contact, "sup_error": float(err.max()),
              "near_contact_slope": measured, "policy_iterations": sol.policy_iterations,
              "clamp_activations": sol.clamp_activations, "cycle_detected": sol.cycle_detected}
    bad = []
    if np.any(sol.g_field < prob.h_field - 1e-12):
        bad.append("solution below the obstacle")
    return run.record(values, bad)


def cmd_verify(run):
    """Run every acceptance check."""
    from .acceptance import results_record, run_all
    from .plotting import plot_fb, plot_spectrum, plot_sweep
    from .fbsolver import wedge_problem
    results = run_all(run.cfg.seed, log=run.say)
    by = {r.number: r for r in results}
    if 2 in by:
        plot_sweep(by[2].artifacts["family"], run.path("verify_sweep.png"),
                   by[2].values["critical_t"])
    if 6 in by:
        plot_spectrum(by[6].artifacts["cap"], run.path("verify_spectrum.png"), 0.05)
    if 7 in by:
        art = by[7].artifacts
        plot_fb(wedge_problem(129, 0.5), art["g"], art["contact"], run.path("verify_fb.png"))
    failed = [f"criterion {r.number} failed" for r in results if not r.passed]
    run.say(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return run.record(results_record(results), failed)


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "minmax": cmd_minmax,
            "stability": cmd_stability, "monotonicity": cmd_monotonicity,
            "blowup": cmd_blowup, "fbsolve": cmd_fbsolve, "verify": cmd_verify}


def build_parser():
    parser = argparse.ArgumentParser(prog="capminmax", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"capminmax {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", help="key=value config file (defaults built in)")
        p.add_argument("--out", default="capminmax-out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="only print errors")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = with_overrides(cfg, seed=args.seed)
        run = Run(args.command, cfg, args.out, args.quiet)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapillaryError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
