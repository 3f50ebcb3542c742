"""Command-line front end: synth, fit, eval, and benchmark.

Every command is flag-driven (no environment inputs), optionally seeded
from a JSON config file whose keys must match known flags, and exits
nonzero on any flagged invariant violation so scripting stays honest.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, io
from ._backend import backend_name
from .bench import BENCH_COLUMNS, geometry_benchmark
from .errors import MonotonicityError
from .estimator import FitConfig, LineSearchConfig, fit
from .metrics import (
    MetricReport,
    best_state_permutation,
    eval_e_nll_gaussian,
    eval_e_nll_mixture,
    eval_e_w,
    eval_e_w_mixture,
    state_mae,
    theta_w2_errors,
)
from .model import Interpolation, ObjectiveConfig, WindowConfig, window_series
from .synth import SynthSpec, generate_toy

MODE_NAMES = {"dwb": Interpolation.WASSERSTEIN_BARYCENTER, "gmm": Interpolation.GMM_LINEAR}


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=str, default=None, help="JSON file of flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dwb",
        description="Wasserstein-barycentric state-space modeling of time series",
    )
    parser.add_argument("--version", action="version", version=f"dwb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic series plus ground truth")
    _add_common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--truth", required=True, help="output ground-truth JSON path")
    p.add_argument("--K", type=int, default=3, dest="k")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--steps", type=int, default=90)
    p.add_argument("--samples-per-window", type=int, default=None)
    p.add_argument("--hold-steps", type=int, default=0)
    p.add_argument("--e2", type=float, default=1.0, help="squared mean separation")
    p.add_argument("--b2", type=float, default=4.0, help="squared Bures separation")

    p = sub.add_parser("fit", help="estimate the model from a CSV series")
    _add_common(p)
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--out", required=True, help="output result JSON path")
    p.add_argument("--K", type=int, required=True, dest="k")
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default="dwb")
    p.add_argument("--window-n", type=int, required=True, help="window half-width")
    p.add_argument("--window-delta", type=int, required=True, help="window stride")
    p.add_argument("--lam", type=float, default=100.0, help="data-fit weight")
    p.add_argument("--s", type=float, default=1.0, help="pure-state prior spread")
    p.add_argument("--eta-outer", type=float, default=1e-4)
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--adam-lr", type=float, default=2e-3)
    p.add_argument("--adam-max-steps", type=int, default=200)
    p.add_argument("--eta-inner", type=float, default=0.05)
    p.add_argument("--theta-geometry", choices=("bw", "cholesky"), default="bw")
    p.add_argument("--single-beta", action="store_true",
                   help="use the non-mixture innovation prior (ablation variant)")
    p.add_argument("--mc-samples", type=int, default=5000,
                   help="Monte-Carlo samples for mixture-mode metrics")

    p = sub.add_parser("eval", help="score a fit against data and optional truth")
    _add_common(p)
    p.add_argument("--fit", required=True, help="fit result JSON path")
    p.add_argument("--data", required=True, help="data CSV path")
    p.add_argument("--truth", default=None, help="ground-truth JSON path")
    p.add_argument("--out", required=True, help="output metrics JSON path")
    p.add_argument("--mc-samples", type=int, default=5000)

    p = sub.add_parser("benchmark", help="compare pure-state optimization geometries")
    _add_common(p)
    p.add_argument("--dims", type=str, default="2,5,10,20")
    p.add_argument("--k-list", type=str, default="2,3")
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--force", action="store_true", help="override the cell-count budget")
    return parser


def _apply_config_file(args, argv) -> None:
    """Merge a JSON config file under explicit flags; reject unknown keys."""
    if args.config is None:
        return
    doc = io.load_json(args.config)
    known = set(vars(args))

    def resolve(key: str) -> str | None:
        attr = key.replace("-", "_")
        if attr in known:
            return attr
        if attr.lower() in known:
            return attr.lower()
        return None

    unknown = [k for k in doc if resolve(k) is None]
    if unknown:
        raise SystemExit(f"config file has unknown keys: {', '.join(sorted(unknown))}")
    given = set()
    for token in argv:
        if token.startswith("--"):
            name = token[2:].split("=", 1)[0].replace("-", "_")
            given.add(name)
            given.add(name.lower())
    for key, value in doc.items():
        attr = resolve(key)
        if attr not in given and attr.lower() not in given:
            setattr(args, attr, value)


def _metrics_for(report, data, y, mode, mc_samples, seed) -> MetricReport:
    if mode is Interpolation.WASSERSTEIN_BARYCENTER:
        e_w, per = eval_e_w(data, report.barycenter_means, report.barycenter_covs)
        e_nll, _ = eval_e_nll_gaussian(
            y, data.config, report.barycenter_means, report.barycenter_covs
        )
        return MetricReport(e_w=e_w, e_nll=e_nll, per_window_w2=per, seed=seed)
    e_w, per = eval_e_w_mixture(
        data, report.trajectory, report.theta, mc_samples=mc_samples, seed=seed
    )
    e_nll, _ = eval_e_nll_mixture(y, data.config, report.trajectory, report.theta)
    return MetricReport(
        e_w=e_w, e_nll=e_nll, per_window_w2=per, mc_samples=mc_samples, seed=seed
    )


def _metrics_doc(metrics: MetricReport) -> dict:
    return {
        "e_w": metrics.e_w,
        "e_nll": metrics.e_nll,
        "per_window_w2": metrics.per_window_w2.tolist(),
        "mc_samples": metrics.mc_samples,
        "seed": metrics.seed,
    }


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_states=args.k,
        dim=args.dim,
        t_steps=args.steps,
        e2=args.e2,
        b2=args.b2,
        samples_per_window=args.samples_per_window,
        seed=args.seed,
        hold_steps=args.hold_steps,
    )
    ds = generate_toy(spec)
    io.write_series_csv(args.out, ds.y)
    io.save_json(
        args.truth,
        io.truth_to_doc(
            ds.theta,
            ds.trajectory,
            spec={
                "n_states": spec.n_states,
                "dim": spec.dim,
                "t_steps": spec.t_steps,
                "e2": spec.e2,
                "b2": spec.b2,
                "samples_per_window": spec.samples_per_window,
                "seed": spec.seed,
                "hold_steps": spec.hold_steps,
                "window": {"n": spec.window_config.n, "delta": spec.window_config.delta},
            },
        ),
    )
    print(f"wrote {args.out} ({ds.y.shape[0]} samples) and {args.truth}")
    return 0


def cmd_fit(args) -> int:
    y, _ = io.read_series_csv(args.input)
    cfg_window = WindowConfig(n=args.window_n, delta=args.window_delta)
    data = window_series(y, cfg_window)
    mode = MODE_NAMES[args.mode]
    obj_cfg = ObjectiveConfig(
        lam=args.lam,
        interpolation=mode,
        innovation_prior="beta_single" if args.single_beta else "beta_mixture",
    )
    fit_cfg = FitConfig(
        eta_outer=args.eta_outer,
        max_outer=args.max_outer,
        adam_lr=args.adam_lr,
        adam_max_steps=args.adam_max_steps,
        eta_inner=args.eta_inner,
        theta_geometry=args.theta_geometry,
        line_search=LineSearchConfig(),
    )
    report = fit(data, args.k, cfg=obj_cfg, fit_cfg=fit_cfg, seed=args.seed,
                 samples=y, s=args.s)
    metrics = _metrics_for(report, data, y, mode, args.mc_samples, args.seed)
    doc = io.report_to_doc(report, metrics=_metrics_doc(metrics), backend=backend_name())
    doc["config"]["mode"] = args.mode
    doc["config"]["mc_samples"] = args.mc_samples
    io.save_json(args.out, doc)
    io.write_states_table(
        args.out + ".states.csv", report.trajectory, metrics.per_window_w2
    )
    print(
        f"fit: T={len(data)} windows, K={args.k}, mode={args.mode}, "
        f"outer_iters={len(report.cost_trace) - 1}, final_cost={report.cost_trace[-1]:.6g}, "
        f"e_w={metrics.e_w:.6g}"
    )
    return 0


def cmd_eval(args) -> int:
    doc = io.load_json(args.fit)
    report = io.doc_to_report(doc)
    y, _ = io.read_series_csv(args.data)
    window = doc["config"]["window"]
    data = window_series(y, WindowConfig(n=window["n"], delta=window["delta"]))
    if len(data) != report.trajectory.shape[0]:
        raise SystemExit(
            f"data yields {len(data)} windows but the fit covers "
            f"{report.trajectory.shape[0]}"
        )
    mode = MODE_NAMES[doc["config"].get("mode", "dwb")]
    metrics = _metrics_for(report, data, y, mode, args.mc_samples, args.seed)
    out = {
        "kind": io.METRICS_KIND,
        "version": io.FORMAT_VERSION,
        "fit": args.fit,
        "data": args.data,
        "seed": args.seed,
        **_metrics_doc(metrics),
    }
    if args.truth is not None:
        theta_true, traj_true = io.doc_to_truth(io.load_json(args.truth))
        perm = best_state_permutation(report.theta, theta_true)
        out["state_permutation"] = list(perm)
        out["theta_w2"] = theta_w2_errors(report.theta, theta_true, perm).tolist()
        out["state_mae"] = state_mae(report.trajectory, traj_true, perm)
    io.save_json(args.out, out)
    summary = f"e_w={out['e_w']:.6g} e_nll={out['e_nll']:.6g}"
    if "state_mae" in out:
        summary += f" state_mae={out['state_mae']:.6g}"
    print(summary)
    return 0


def cmd_benchmark(args) -> int:
    dims = [int(v) for v in args.dims.split(",") if v]
    k_list = [int(v) for v in args.k_list.split(",") if v]
    cells = len(dims) * len(k_list) * args.repeats
    if cells > 64 and not args.force:
        raise SystemExit(
            f"benchmark grid has {cells} cells (> 64); pass --force to run anyway"
        )
    rows = geometry_benchmark(dims, k_list, args.repeats, seed=args.seed)
    io.write_benchmark_table(args.out, rows, BENCH_COLUMNS)
    by_geom = {}
    for row in rows:
        by_geom.setdefault(row["geometry"], []).append(row["iterations"])
    summary = ", ".join(
        f"{g}: {np.mean(v):.1f} iters" for g, v in sorted(by_geom.items())
    )
    print(f"wrote {args.out} ({len(rows)} rows; mean iterations {summary})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    _apply_config_file(args, argv)
    handlers = {
        "synth": cmd_synth,
        "fit": cmd_fit,
        "eval": cmd_eval,
        "benchmark": cmd_benchmark,
    }
    try:
        return handlers[args.command](args)
    except MonotonicityError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
