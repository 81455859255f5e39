"""Command line front end.

    sgbh run <cfg> [--threads N] [--out DIR]
    sgbh validate <cfg>
    sgbh kernel-check [--nu X] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numerical failure (the
diagnostic JSON is still written to the output directory).
"""

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend
from . import config as cfgmod
from .errors import ConfigError, NumericalError, SGBHError
from .grid import eigenfunctions, project

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
OUTPUT_ENV = "SGBH_OUTPUT_DIR"


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _versions():
    import scipy
    numba = getattr(_backend, "_numba", None)
    return {"sgbh": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": None if numba is None else numba.__version__,
            "backend": _backend.backend_name()}


# --------------------------------------------------------------------------
# experiments; each returns (summary dict, list of artifact names)
# --------------------------------------------------------------------------

def _simulate(rc, out, threads):
    from .solver import integrate
    eps = rc.params.epsilon
    traj, ledger = integrate(rc.u0, rc.params, rc.grid, rc.T, rc.dt,
                             spec=rc.spec if eps > 0 else None, g=rc.g, R_trunc=rc.R_trunc,
                             p=rc.monitor_p, save_stride=rc.save_stride)
    traj.to_csv(out / "trajectory.csv")
    ledger.to_csv(out / "energy.csv")
    a0 = float(project(rc.grid, rc.u0, 1))
    a1 = float(project(rc.grid, traj.final, 1))
    summary = {"final_mode1": a1, "initial_mode1": a0,
               "mode1_ratio": a1 / a0 if a0 != 0 else None,
               "audited_energy": traj.diagnostics["audited"], "p": traj.diagnostics["p"]}
    if rc.params.alpha == 0 and rc.params.beta == 0 and eps == 0:
        summary["heat_decay_reference"] = float(np.exp(-rc.params.nu * np.pi**2 * rc.T))
    return summary, ["trajectory.csv", "energy.csv"]


def _control_from(rc, spec):
    from .noise import steps_for
    N = steps_for(rc.T, rc.dt)
    prof = cfgmod.field_from_spec(spec or {"kind": "zero"}, rc.grid)
    return np.tile(prof, (N, 1))


def _skeleton(rc, out, threads):
    from .skeleton_control import Control, solve_skeleton
    phi = _control_from(rc, rc.blocks.get("skeleton", {}).get("control"))
    traj = solve_skeleton(rc.u0, rc.params, rc.g, phi, rc.T, rc.dt, rc.grid)
    traj.values = traj.values[::rc.save_stride] if rc.save_stride > 1 else traj.values
    traj.times = traj.times[::rc.save_stride] if rc.save_stride > 1 else traj.times
    traj.to_csv(out / "trajectory.csv")
    cost = Control(phi, rc.dt, rc.grid.h).cost
    return {"control_cost": cost, "final_mode1": float(project(rc.grid, traj.final, 1))}, \
        ["trajectory.csv"]


def _rate(rc, out, threads):
    from .skeleton_control import gramian_rate, rate_function_endpoint
    b = rc.blocks["rate"]
    target = cfgmod.field_from_spec(b["target"], rc.grid)
    opt = {"penalties": b.get("penalties", [1e2, 1e3, 1e4]), "tol": b.get("tol", 1e-6),
           "max_iter": b.get("max_iter", 2000)}
    res = rate_function_endpoint(rc.u0, rc.params, rc.g, target, rc.T, rc.dt, rc.grid, opt)
    res.to_json(out / "rate.json")
    res.control.to_csv(out / "control.csv")
    summary = {**res.to_dict(), "stages": res.diagnostics["stages"]}
    tk = b["target"]
    if (rc.params.alpha == 0 and rc.params.beta == 0 and rc.g.family == "constant"
            and not np.any(rc.u0) and tk.get("kind") == "mode"):
        j = int(tk["mode"])
        a = float(tk.get("amplitude", 1.0)) / rc.g.K
        summary["gramian_reference"] = float(gramian_rate(a, rc.params.nu, rc.T, (j * np.pi) ** 2))
    return summary, ["rate.json", "control.csv"]


def _mc_event(rc, ev):
    from .ldp_harness import TerminalBall, TubeExceed
    from .skeleton_control import solve_skeleton
    if ev["kind"] == "terminal_ball":
        center = cfgmod.field_from_spec(ev["center"], rc.grid)
        return TerminalBall(center, float(ev["radius"]), ev.get("norm", "L2"), float(ev.get("p", 2)))
    ref = solve_skeleton(rc.u0, rc.params, rc.g, _control_from(rc, None), rc.T, rc.dt, rc.grid)
    return TubeExceed(ref.values, float(ev.get("eta", ev.get("radius"))), ev.get("norm", "Lp"),
                      float(ev.get("p", rc.monitor_p)))


def _mc(rc, out, threads):
    from .ldp_harness import MCConfig, estimate_probability, ldp_curve, write_mc_csv
    from .skeleton_control import gramian_rate
    b = rc.blocks["mc"]
    event = _mc_event(rc, b["event"])
    mcc = MCConfig(rc.params, rc.grid, rc.T, rc.dt, rc.u0, rc.spec, rc.g, None, rc.R_trunc,
                   rc.monitor_p)
    ref = b.get("rate_reference")
    if isinstance(ref, dict) and ref.get("kind") == "gramian":
        ref = float(gramian_rate(float(ref["amplitude"]), rc.params.nu, rc.T,
                                 (int(ref.get("mode", 1)) * np.pi) ** 2))
    if b.get("extrapolate", True) and len(b["eps_ladder"]) >= 2:
        curve = ldp_curve(event, mcc, b["eps_ladder"], b["n_samples"], ref, threads)
        estimates, summary = curve.estimates, curve.summary()
    else:
        estimates = [estimate_probability(event, mcc, e, b["n_samples"], threads)
                     for e in b["eps_ladder"]]
        summary = {"config_hash": mcc.hash(), "rate_reference": ref,
                   "estimates": [e.to_dict() for e in estimates]}
    write_mc_csv(out / "mc.csv", estimates, ref)
    _dump(summary, out / "mc.json")
    return summary, ["mc.csv", "mc.json"]


def _uniform(rc, out, threads):
    from .ldp_harness import (MCConfig, halton_controls, halton_initial_conditions,
                              uniform_convergence_experiment)
    b = rc.blocks["uniform"]
    p = rc.monitor_p
    u0s = halton_initial_conditions(rc.grid, int(b.get("n_u0", 5)), float(b.get("u0_bound", 1.0)),
                                    p=p)
    phis = halton_controls(rc.grid, rc.T, rc.dt, int(b.get("n_phi", 3)), float(b.get("M", 1.0)))
    mcc = MCConfig(rc.params, rc.grid, rc.T, rc.dt, rc.u0, rc.spec, rc.g, None, rc.R_trunc, p)
    rep = uniform_convergence_experiment(mcc, u0s, phis, b["eps_ladder"], float(b["eta"]),
                                         int(b["n_samples"]), p, float(b.get("threshold", 0.05)),
                                         threads)
    with open(out / "uniform.csv", "w") as fh:
        fh.write("eps,u0,phi,p_hat,ci_lo,ci_hi\n")
        for row in rep.table:
            fh.write(f"{row['eps']:.17g},{row['u0']},{row['phi']},{row['p_hat']:.17g},"
                     f"{row['ci_lo']:.17g},{row['ci_hi']:.17g}\n")
    summary = rep.to_dict()
    _dump(summary, out / "uniform.json")
    return summary, ["uniform.csv", "uniform.json"]


def _decompose(rc, out, threads):
    from .ldp_harness import MCConfig, decompose_z_zeta, zeta_star_samples
    from .solver import integrate
    b = rc.blocks.get("decompose", {})
    kernel = b.get("kernel", "discrete")
    phi = _control_from(rc, b.get("control"))
    traj, _ = integrate(rc.u0, rc.params, rc.grid, rc.T, rc.dt, spec=rc.spec, g=rc.g,
                        control=phi, keep_noise=True)
    dec = decompose_z_zeta(traj, rc.g, kernel)
    dec.z.to_csv(out / "z.csv")
    dec.zeta.to_csv(out / "zeta.csv")
    n = int(b.get("n_samples", 500))
    mcc = MCConfig(rc.params, rc.grid, rc.T, rc.dt, rc.u0, rc.spec, rc.g, phi)
    stars = zeta_star_samples(mcc, rc.params.epsilon, 2 * n, kernel, threads)
    np.savetxt(out / "zeta_star.csv", stars, header="zeta_star", comments="", fmt="%.17g")
    m = int(b.get("moment", 8))
    half, full = float(np.mean(stars[:n] ** m)), float(np.mean(stars ** m))
    summary = {"kernel": kernel, "zeta_star_path": dec.zeta_star, "moment": m,
               "moment_n": half, "moment_2n": full, "doubling_ratio": full / half}
    _dump(summary, out / "decompose.json")
    return summary, ["z.csv", "zeta.csv", "zeta_star.csv", "decompose.json"]


def kernel_check(nu=1.0, out=None):
    """Kernel representation agreement and Gaussian bound constants."""
    from .kernel import (bound_reports_json, chapman_kolmogorov, default_bound_samples, g_image,
                         g_spectral, verify_kernel_bounds)
    pts = (np.arange(50) + 0.5) / 50
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    worst = 0.0
    for tau in np.geomspace(1e-3, 1.0, 13):
        t = tau / nu
        worst = max(worst, float(np.max(np.abs(g_image(t, X, Y, nu) - g_spectral(t, X, Y, nu)))))
    ck = 0.0
    for t in (0.01 / nu, 0.1 / nu, 0.5 / nu):
        for x, y in ((0.3, 0.6), (0.5, 0.5), (0.1, 0.85)):
            lhs, rhs = chapman_kolmogorov(t, x, y, nu)
            ck = max(ck, abs(lhs - rhs))
    ts, xy = default_bound_samples(nu)
    reports = bound_reports_json(verify_kernel_bounds(ts, xy, nu))
    summary = {"nu": nu, "image_vs_spectral_max": worst, "chapman_kolmogorov_max": ck,
               "bounds": reports, "pass": bool(worst < 1e-9 and ck < 1e-8
                                               and all(r["pass"] for r in reports))}
    artifacts = []
    if out is not None:
        _dump(summary, out / "kernel_check.json")
        artifacts = ["kernel_check.json"]
    return summary, artifacts


def _kernel(rc, out, threads):
    return kernel_check(float(rc.blocks.get("kernel-check", {}).get("nu", 1.0)), out)


RUNNERS = {"simulate": _simulate, "skeleton": _skeleton, "rate": _rate, "mc": _mc,
           "uniform": _uniform, "decompose": _decompose, "kernel-check": _kernel}


def _output_dir(cli_out, rc, cfg_path):
    d = cli_out or os.environ.get(OUTPUT_ENV) or rc.output_dir or f"sgbh_out/{Path(cfg_path).stem}"
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run(cfg_path, threads=None, out=None, stream=None):
    """Execute one config file; returns the exit code."""
    stream = stream or sys.stdout
    try:
        rc = cfgmod.load(cfg_path)
    except ConfigError as exc:
        print(f"{cfg_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"{cfg_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in rc.warnings:
        print(f"{cfg_path}: warning: {w}", file=sys.stderr)
    outdir = _output_dir(out, rc, cfg_path)
    threads = threads or os.cpu_count() or 1
    start = time.perf_counter()
    manifest = {"config": str(cfg_path), "config_hash": rc.config_hash, "experiment": rc.experiment,
                "versions": _versions(), "threads": threads}
    try:
        summary, artifacts = RUNNERS[rc.experiment](rc, outdir, threads)
    except SGBHError as exc:
        diag = exc.to_dict()
        _dump(diag, outdir / "diagnostic.json")
        manifest.update(status="error", wall_time_s=time.perf_counter() - start,
                        artifacts=["diagnostic.json"])
        _dump(manifest, outdir / "manifest.json")
        print(json.dumps(diag, default=_jsonable), file=stream)
        return EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_CONFIG
    except (FloatingPointError, OverflowError) as exc:
        diag = {"error": "numerical", "message": str(exc)}
        _dump(diag, outdir / "diagnostic.json")
        print(json.dumps(diag), file=stream)
        return EXIT_NUMERICAL
    _dump(summary, outdir / "summary.json")
    manifest.update(status="ok", wall_time_s=time.perf_counter() - start,
                    artifacts=sorted(artifacts + ["summary.json"]))
    _dump(manifest, outdir / "manifest.json")
    print(json.dumps({"experiment": rc.experiment, "output_dir": str(outdir), **{
        k: v for k, v in summary.items() if not isinstance(v, (list, dict))}}, default=_jsonable),
        file=stream)
    return EXIT_OK


def validate(cfg_path, stream=None):
    stream = stream or sys.stdout
    try:
        text = Path(cfg_path).read_text()
    except OSError as exc:
        print(json.dumps({"valid": False, "violations": [{"message": str(exc)}]}), file=stream)
        return EXIT_CONFIG
    issues = cfgmod.validate_text(text)
    errors = [i.to_dict() for i in issues if i.severity == "error"]
    warnings = [i.to_dict() for i in issues if i.severity == "warning"]
    print(json.dumps({"valid": not errors, "violations": errors, "warnings": warnings}, indent=2),
          file=stream)
    return EXIT_OK if not errors else EXIT_CONFIG


def build_parser():
    ap = argparse.ArgumentParser(prog="sgbh", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment named in a config file")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    r.add_argument("--out", default=None, help="output directory")
    v = sub.add_parser("validate", help="check a config file without computing")
    v.add_argument("config")
    k = sub.add_parser("kernel-check", help="heat kernel agreement and bound constants")
    k.add_argument("--nu", type=float, default=1.0)
    k.add_argument("--out", default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.threads is not None and args.threads < 1:
            print("--threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        return run(args.config, args.threads, args.out)
    if args.command == "validate":
        return validate(args.config)
    if args.nu <= 0:
        print("--nu must be > 0", file=sys.stderr)
        return EXIT_CONFIG
    out = None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    summary, _ = kernel_check(args.nu, out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK if summary["pass"] else EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
