"""Experiment driver for coefficient studies, law comparison and valuation.

Subcommands read a JSON config describing the model (field + noise), the
payoff and the schedule, then write CSV tables next to a JSON run
manifest recording the config hash, effective seed, RNG choices and
library versions.  Identical config and seed reproduce the CSV and JSON
outputs byte for byte; figures are rendered alongside unless --no-plot
is given.
"""

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import matplotlib
import numpy as np
import scipy

from . import __version__, figures
from .bounds import theoretical_bounds
from .coefficients import build_limit_coefficients, field_from_config
from .diffusion_ref import (NORMAL_METHOD, DiffusionSpec, euler_maruyama,
                            euler_maruyama_ensemble, atomic_law_cdf_ks,
                            ks_by_coordinate, reference_dt)
from .dynkin import (GridSpec, american_put_payoff, american_value,
                     game_put_payoff, value_exact_tree, value_markov_grid)
from .errors import AvgdiffError, InvalidModelError
from .noise import noise_from_config
from .scheme import eps_for, reachable_radius, simulate_ensemble, steps_for


# ---------------------------------------------------------------------------
# config plumbing


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def payoff_from_config(cfg, T):
    kind = cfg.get("kind")
    if kind == "game_put":
        return game_put_payoff(strike=float(cfg["strike"]),
                               rate=float(cfg.get("rate", 0.0)),
                               penalty=float(cfg.get("penalty", 0.05)), T=T)
    if kind == "american_put":
        return american_put_payoff(strike=float(cfg["strike"]),
                                   rate=float(cfg.get("rate", 0.0)), T=T)
    raise InvalidModelError(f"unknown payoff kind {kind!r}")


def schedule_from_config(cfg, T):
    """Epsilon schedule, strictly decreasing; accepts eps or N lists."""
    if "eps" in cfg:
        eps = [float(e) for e in np.atleast_1d(cfg["eps"])]
    elif "n_steps" in cfg:
        eps = [eps_for(int(n), T) for n in np.atleast_1d(cfg["n_steps"])]
    else:
        raise InvalidModelError("config needs an 'eps' or 'n_steps' schedule")
    if any(e <= 0 for e in eps):
        raise InvalidModelError("schedule entries must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InvalidModelError("schedule must be strictly decreasing in eps")
    return eps


def grid_from_config(cfg, field, eps, T, x0):
    if cfg and "lo" in cfg:
        return GridSpec(lo=cfg["lo"], hi=cfg["hi"], spacing=cfg["spacing"])
    if cfg and "spacing" in cfg:
        return GridSpec.cover(field, eps, T, x0, cfg["spacing"])
    spacing = max(1e-4, 0.1 * eps * field.bound_L)
    return GridSpec.cover(field, eps, T, x0, spacing)


def _value_once(field, noise, payoff_cfg, x0, eps, T, engine, grid_cfg,
                record_regions=False):
    payoffs = payoff_from_config(payoff_cfg, T)
    if payoff_cfg.get("kind") == "american_put":
        grid = (grid_from_config(grid_cfg, field, eps, T, x0)
                if engine == "grid" else None)
        return american_value(payoffs, field, noise, x0, eps, T, engine=engine,
                              grid=grid, record_regions=record_regions)
    if engine == "grid":
        grid = grid_from_config(grid_cfg, field, eps, T, x0)
        return value_markov_grid(payoffs, field, noise, x0, eps, T, grid,
                                 record_regions=record_regions)
    if engine == "tree":
        return value_exact_tree(payoffs, field, noise, x0, eps, T,
                                record_regions=record_regions)
    raise InvalidModelError(f"unknown engine {engine!r}")


# ---------------------------------------------------------------------------
# study operations


def convergence_study(config, seed=0, threads=1):
    """Value per schedule point with differences to the finest run.

    Returns (rows, meta).  The finest successful epsilon serves as the
    reference value; the fitted rate is the least-squares slope of
    log-difference against log-eps.  A failing engine run keeps its row
    with an error status and leaves the other rows intact.
    """
    T = float(config.get("T", 1.0))
    eps_list = schedule_from_config(config, T)
    if len(eps_list) < 3:
        raise InvalidModelError("convergence study needs at least 3 schedule points")
    field = field_from_config(config["field"])
    noise = noise_from_config(config["noise"])
    x0 = config.get("x0", [0.0] * field.d)
    engine = config.get("engine", "grid")

    def task(e):
        return _value_once(field, noise, config["payoff"], x0, e, T, engine,
                           config.get("grid"))

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(task, e) for e in eps_list]
        for e, fut in zip(eps_list, futures):
            row = {"eps": e, "n_steps": steps_for(e, T), "value": "",
                   "diff_to_finest": "", "rate": "", "status": "ok"}
            try:
                row["value"] = fut.result().value
            except Exception as exc:  # noqa: BLE001 - isolate per-point failures
                row["status"] = f"error:{type(exc).__name__}"
            rows.append(row)

    ok = [r for r in rows if r["status"] == "ok"]
    meta = {"rate": "", "reference_eps": ""}
    if ok:
        ref = min(ok, key=lambda r: r["eps"])
        meta["reference_eps"] = ref["eps"]
        for r in ok:
            r["diff_to_finest"] = abs(r["value"] - ref["value"])
        pts = [(np.log(r["eps"]), np.log(r["diff_to_finest"]))
               for r in ok if r is not ref and r["diff_to_finest"] > 0.0]
        others = [r for r in ok if r is not ref]
        if others and not pts:
            meta["rate"] = "exact"
        elif len(pts) >= 2:
            xs, ys = zip(*pts)
            meta["rate"] = float(np.polyfit(xs, ys, 1)[0])
        for r in ok:
            r["rate"] = meta["rate"]
    return rows, meta


def _constant_iid_normal_ks(field_cfg, noise, field, x0, eps, T):
    """Exact lattice-vs-Normal KS for the constant scalar i.i.d. case.

    The marginal at T is a scaled binomial; anything else returns None
    and the column stays empty.
    """
    if field.d != 1 or field_cfg.get("kind") != "constant":
        return None
    if float(field_cfg.get("b", 0.0)) != 0.0:
        return None
    if not noise.iid or noise.kind != "rademacher":
        return None
    from scipy.special import ndtr
    from scipy.stats import binom

    sigma0 = float(field_cfg["sigma"]) * float(noise.params.get("scale", 1.0))
    n = steps_for(eps, T)
    ks_idx = np.arange(n + 1)
    atoms = x0[0] + (2.0 * ks_idx - n) * eps * sigma0
    probs = binom.pmf(ks_idx, n, 0.5)
    sd = abs(sigma0) * np.sqrt(T)
    return atomic_law_cdf_ks(atoms, probs, lambda s: ndtr((s - x0[0]) / sd))


def law_comparison(config, seed=0, threads=1):
    """KS distances between scheme and reference-diffusion marginals at T."""
    T = float(config.get("T", 1.0))
    eps_list = schedule_from_config(config, T)
    field = field_from_config(config["field"])
    noise = noise_from_config(config["noise"])
    x0 = np.asarray(config.get("x0", [0.0] * field.d), dtype=float)
    n_paths = int(config.get("n_paths", 100_000))
    mode = config.get("mode", "analytic")

    lc = build_limit_coefficients(field, noise, mode=mode, seed=seed)
    if field.d == 1:
        a0 = float(lc.A(x0[None, :])[0, 0, 0])
        rad = max(reachable_radius(field, max(eps_list), T),
                  8.0 * np.sqrt(max(a0, 1e-12) * T)) + 1.0
        spec = DiffusionSpec.from_limit_coefficients(
            lc, x0, T, tabulate=(float(x0[0] - rad), float(x0[0] + rad), 4001))
    else:
        spec = DiffusionSpec.from_limit_coefficients(lc, x0, T)

    def task(e):
        xs = simulate_ensemble(field, noise, x0, e, T, n_paths=n_paths, seed=seed)
        ys = euler_maruyama_ensemble(spec, reference_dt(e), n_paths=n_paths,
                                     seed=seed + 1)
        out = ks_by_coordinate(xs, ys)
        exact = _constant_iid_normal_ks(config["field"], noise, field, x0, e, T)
        return out, exact

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(task, e) for e in eps_list]
        for e, fut in zip(eps_list, futures):
            row = {"eps": e, "n_steps": steps_for(e, T), "status": "ok"}
            for j in range(field.d):
                row[f"ks_x{j}"] = ""
            row["ks_norm"] = ""
            row["ks_exact_normal"] = ""
            try:
                out, exact = fut.result()
                for key, val in out.items():
                    row["ks_" + key] = val
                if exact is not None:
                    row["ks_exact_normal"] = exact
            except Exception as exc:  # noqa: BLE001 - isolate per-point failures
                row["status"] = f"error:{type(exc).__name__}"
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# output writers


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path, fieldnames, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(fieldnames) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(k, "")) for k in fieldnames) + "\n")


def write_manifest(path, command, config, seed, outputs, details=None):
    payload = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest(),
        "seed": seed,
        "outputs": sorted(outputs),
        "rng": {"bit_generator": "Philox", "normals": NORMAL_METHOD},
        "versions": {
            "python": "%d.%d.%d" % sys.version_info[:3],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
            "avgdiff": __version__,
        },
    }
    if details is not None:
        payload["details"] = details
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def region_envelopes(result):
    """Per-step lo/hi state bounds of the stop and cancel regions, d=1."""
    rows = []
    h = result.eps ** 2
    for n, (states, codes) in enumerate(result.stop_regions):
        t = result.diagnostics.get("terminal_time", n * h) if n == result.n_steps else n * h
        row = {"step": n, "time": float(t)}
        for code, prefix in ((2, "stop"), (1, "cancel")):
            sel = states[codes == code, 0]
            row[prefix + "_lo"] = float(sel.min()) if sel.size else ""
            row[prefix + "_hi"] = float(sel.max()) if sel.size else ""
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# subcommands


def _resolve_seed(args, config):
    return args.seed if args.seed is not None else int(config.get("seed", 0))


def cmd_coeffs(args):
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    field = field_from_config(config["field"])
    noise = noise_from_config(config["noise"])
    mode = config.get("mode", "analytic")
    lc = build_limit_coefficients(field, noise, mode=mode, seed=seed)
    if "probes" in config:
        xs = np.asarray(config["probes"], dtype=float).reshape(-1, field.d)
    elif "range" in config and field.d == 1:
        lo, hi, n = config["range"]
        xs = np.linspace(float(lo), float(hi), int(n))[:, None]
    else:
        raise InvalidModelError("coeffs needs 'probes' or a 1-d 'range'")

    b_bar = lc.b_bar(xs)
    c = lc.c(xs)
    A = lc.A(xs)
    sig = lc.sigma(xs)
    names = ["x%d" % j for j in range(field.d)]
    names += ["b_bar%d" % j for j in range(field.d)]
    names += ["c%d" % j for j in range(field.d)]
    names += ["A%d%d" % (i, j) for i in range(field.d) for j in range(field.d)]
    names += ["sigma%d%d" % (i, j) for i in range(field.d) for j in range(field.d)]
    rows = []
    for m in range(xs.shape[0]):
        vals = list(xs[m]) + list(b_bar[m]) + list(c[m]) + list(A[m].ravel()) + list(sig[m].ravel())
        rows.append({k: float(v) for k, v in zip(names, vals)})
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "coeffs.csv")
    write_csv(csv_path, names, rows)
    outputs = ["coeffs.csv"]
    if not args.no_plot and field.d == 1:
        fig_path = os.path.join(args.out, "coeffs.png")
        figures.save_coefficient_figure(xs[:, 0], b_bar[:, 0], c[:, 0],
                                        A[:, 0, 0], fig_path)
        outputs.append("coeffs.png")
    details = {"mode": mode, "n_max": lc.n_max,
               "c_tail_bound": lc.c_tail_bound, "A_tail_bound": lc.A_tail_bound}
    write_manifest(os.path.join(args.out, "coeffs_manifest.json"), "coeffs",
                   config, seed, outputs, details)
    return 0


def cmd_simulate(args):
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    T = float(config.get("T", 1.0))
    eps = schedule_from_config(config, T)[0]
    field = field_from_config(config["field"])
    noise = noise_from_config(config["noise"])
    x0 = config.get("x0", [0.0] * field.d)
    n_paths = int(config.get("n_paths", 10_000))
    finals = simulate_ensemble(field, noise, x0, eps, T, n_paths=n_paths, seed=seed)
    names = ["path"] + ["x%d" % j for j in range(field.d)]
    rows = [{"path": m, **{f"x{j}": float(finals[m, j]) for j in range(field.d)}}
            for m in range(n_paths)]
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "simulate.csv"), names, rows)
    outputs = ["simulate.csv"]
    if not args.no_plot:
        k = min(12, n_paths)
        paths = simulate_ensemble(field, noise, x0, eps, T, n_paths=k, seed=seed,
                                  keep_paths=True)
        times = np.arange(paths.shape[1]) * eps ** 2
        fig_path = os.path.join(args.out, "simulate.png")
        figures.save_path_figure(times, paths, fig_path, title="scheme paths")
        outputs.append("simulate.png")
    write_manifest(os.path.join(args.out, "simulate_manifest.json"), "simulate",
                   config, seed, outputs,
                   {"eps": eps, "n_steps": steps_for(eps, T), "n_paths": n_paths})
    return 0


def cmd_reference(args):
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    T = float(config.get("T", 1.0))
    eps = schedule_from_config(config, T)[0]
    field = field_from_config(config["field"])
    noise = noise_from_config(config["noise"])
    x0 = np.asarray(config.get("x0", [0.0] * field.d), dtype=float)
    n_paths = int(config.get("n_paths", 10_000))
    mode = config.get("mode", "analytic")
    dt = float(config.get("dt", reference_dt(eps)))

    lc = build_limit_coefficients(field, noise, mode=mode, seed=seed)
    if field.d == 1:
        a0 = float(lc.A(x0[None, :])[0, 0, 0])
        rad = max(reachable_radius(field, eps, T),
                  8.0 * np.sqrt(max(a0, 1e-12) * T)) + 1.0
        spec = DiffusionSpec.from_limit_coefficients(
            lc, x0, T, tabulate=(float(x0[0] - rad), float(x0[0] + rad), 4001))
    else:
        spec = DiffusionSpec.from_limit_coefficients(lc, x0, T)
    finals = euler_maruyama_ensemble(spec, dt, n_paths=n_paths, seed=seed)
    names = ["path"] + ["x%d" % j for j in range(field.d)]
    rows = [{"path": m, **{f"x{j}": float(finals[m, j]) for j in range(field.d)}}
            for m in range(n_paths)]
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "reference.csv"), names, rows)
    outputs = ["reference.csv"]
    if not args.no_plot:
        sample = [euler_maruyama(spec, dt, seed=seed + m) for m in range(8)]
        fig_path = os.path.join(args.out, "reference.png")
        figures.save_path_figure(sample[0].times,
                                 np.stack([p.states for p in sample]),
                                 fig_path, title="reference diffusion paths")
        outputs.append("reference.png")
    write_manifest(os.path.join(args.out, "reference_manifest.json"), "reference",
                   config, seed, outputs, {"dt": dt, "n_paths": n_paths})
    return 0


def cmd_compare(args):
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    rows = law_comparison(config, seed=seed, threads=args.threads)
    field_d = field_from_config(config["field"]).d
    names = ["eps", "n_steps"] + [f"ks_x{j}" for j in range(field_d)]
    names += ["ks_norm", "ks_exact_normal", "status"]
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "compare.csv"), names, rows)
    outputs = ["compare.csv"]
    if not args.no_plot:
        figures.save_law_figure(rows, os.path.join(args.out, "compare.png"))
        outputs.append("compare.png")
    write_manifest(os.path.join(args.out, "compare_manifest.json"), "compare",
                   config, seed, outputs)
    return 0


def cmd_value(args):
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    T = float(config.get("T", 1.0))
    eps = schedule_from_config(config, T)[0]
    field = field_from_config(config["field"])
    noise = noise_from_config(config["noise"])
    x0 = config.get("x0", [0.0] * field.d)
    engine = config.get("engine", "grid")
    res = _value_once(field, noise, config["payoff"], x0, eps, T, engine,
                      config.get("grid"), record_regions=True)
    row = {"eps": eps, "n_steps": res.n_steps, "engine": res.engine,
           "value": res.value}
    names = ["eps", "n_steps", "engine", "value"]
    for key in ("interp_error_bound", "node_count", "sandwich_violations"):
        if key in res.diagnostics:
            row[key] = res.diagnostics[key]
            names.append(key)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "value.csv"), names, [row])
    outputs = ["value.csv"]
    if res.stop_regions is not None and field.d == 1:
        env = region_envelopes(res)
        env_names = ["step", "time", "stop_lo", "stop_hi", "cancel_lo", "cancel_hi"]
        write_csv(os.path.join(args.out, "value_regions.csv"), env_names, env)
        outputs.append("value_regions.csv")
        if not args.no_plot:
            figures.save_region_figure(env, os.path.join(args.out, "value_regions.png"))
            outputs.append("value_regions.png")
    details = {k: (list(v) if isinstance(v, tuple) else v)
               for k, v in res.diagnostics.items()}
    write_manifest(os.path.join(args.out, "value_manifest.json"), "value",
                   config, seed, outputs, details)
    return 0


def cmd_converge(args):
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    rows, meta = convergence_study(config, seed=seed, threads=args.threads)
    names = ["eps", "n_steps", "value", "diff_to_finest", "rate", "status"]
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "converge.csv"), names, rows)
    outputs = ["converge.csv"]
    if not args.no_plot:
        figures.save_convergence_figure(rows, os.path.join(args.out, "converge.png"))
        outputs.append("converge.png")
    write_manifest(os.path.join(args.out, "converge_manifest.json"), "converge",
                   config, seed, outputs, meta)
    return 0


def cmd_bounds(args):
    rows = [theoretical_bounds(d, args.M) for d in args.d]
    names = ["d", "M", "delta", "log10_epsilon0"]
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "bounds.csv"), names, rows)
    note = rows[0]["note"] if rows else ""
    write_manifest(os.path.join(args.out, "bounds_manifest.json"), "bounds",
                   {"d": args.d, "M": args.M}, 0, ["bounds.csv"], {"note": note})
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(sp, with_config=True):
    if with_config:
        sp.add_argument("config", help="JSON experiment config")
    sp.add_argument("--seed", type=int, default=None,
                    help="master seed; overrides the config value")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--threads", type=int, default=1,
                    help="concurrent schedule points")
    sp.add_argument("--no-plot", action="store_true",
                    help="skip figure rendering")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="avgdiff",
        description="Averaged-diffusion approximation and Dynkin game valuation")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, descr in (
            ("coeffs", cmd_coeffs, "averaged limit coefficients at probe points"),
            ("simulate", cmd_simulate, "discrete-scheme ensemble at time T"),
            ("reference", cmd_reference, "reference diffusion ensemble at time T"),
            ("compare", cmd_compare, "KS distances scheme vs reference per eps"),
            ("value", cmd_value, "single Dynkin/American valuation"),
            ("converge", cmd_converge, "value convergence study over the schedule"),
    ):
        sp = sub.add_parser(name, help=descr)
        _add_common(sp)
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("bounds", help="theoretical constants from the limit theorem")
    sp.add_argument("--d", type=int, nargs="+", default=[1],
                    help="state dimensions to report")
    sp.add_argument("--M", type=int, default=1, help="moment order")
    _add_common(sp, with_config=False)
    sp.set_defaults(fn=cmd_bounds)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AvgdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
