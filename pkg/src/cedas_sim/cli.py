"""Command-line entry point.

Subcommands: run (execute one config), verify (built-in check suites),
figures (canned multi-run sweeps with plots), inspect (spectral data for a
topology). Exit codes: 0 success, 2 usage/config error, 3 divergence,
4 verification failure.
"""

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import algo, metrics, presets, topology, verify
from .errors import BudgetExceeded, CedasSimError, DivergenceDetected

ENV_OUT = "CEDAS_SIM_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_VERIFY = 4


def _default_out():
    return os.environ.get(ENV_OUT, "out")


def _set_by_path(d, dotted, value):
    parts = dotted.split(".")
    cur = d
    for part in parts[:-1]:
        cur = cur.setdefault(part, {})
        if not isinstance(cur, dict):
            raise ValueError(f"override path {dotted!r} walks through a non-object")
    cur[parts[-1]] = value


def _apply_overrides(d, overrides):
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} must look like key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_by_path(d, key, value)


def _plot(series, x_col, y_col, path, title, xlabel, ylabel, logx=False):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name, trace in series:
        x = trace.data[x_col]
        y = trace.data[y_col]
        keep = np.isfinite(y) & (y > 0)
        ax.plot(x[keep], y[keep], label=name, linewidth=1.2)
    ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def cmd_run(args):
    try:
        with open(args.config) as f:
            d = json.load(f)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as e:
        print(f"error: config is not valid JSON: {args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _apply_overrides(d, args.override)
        if args.seed is not None:
            d["seed"] = args.seed
        if args.reps is not None:
            d["reps"] = args.reps
        config = algo.config_from_dict(d)
    except (CedasSimError, ValueError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        trace = algo.run(config, threads=args.threads)
    except DivergenceDetected as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED

    out = args.out or _default_out()
    csv_path = os.path.join(out, f"{config.name}.csv")
    metrics.write_trace(trace, csv_path)
    print(f"wrote {csv_path}")
    if args.plot:
        y = "residual" if np.isfinite(trace.data["residual"]).any() else "grad_norm_sq"
        svg_path = os.path.join(out, f"{config.name}.svg")
        _plot([(config.name, trace)], "k", y, svg_path,
              config.name, "iteration", y)
        print(f"wrote {svg_path}")

    final = {c: trace.data[c][-1] for c in ("residual", "grad_norm_sq", "bits_cum")}
    if np.isfinite(final["residual"]):
        print(f"final residual: {final['residual']:.6e}")
    if np.isfinite(final["grad_norm_sq"]):
        print(f"final ||grad f(xbar)||^2: {final['grad_norm_sq']:.6e}")
    print(f"total bits per agent: {final['bits_cum']:.3e}")
    if args.transient_ref:
        try:
            cen = metrics.read_trace(args.transient_ref)
            t = metrics.transient_time(trace, cen)
            print(f"transient time vs {os.path.basename(args.transient_ref)}: "
                  f"{t if t is not None else 'not reached'}")
        except (CedasSimError, OSError, ValueError) as e:
            print(f"transient estimate unavailable: {e}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args):
    results = verify.run_all(args.level)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{r.name:<{width}}  {status}  {r.seconds:7.2f}s  {r.detail}")
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_figures(args):
    try:
        kwargs = {"scale": args.scale, "seed": args.seed, "reps": args.reps}
        if args.iters is not None:
            kwargs["iters"] = args.iters
        dicts = presets.SUITES[args.which](**kwargs)
        configs = [algo.config_from_dict(d) for d in dicts]
    except (BudgetExceeded, CedasSimError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or _default_out()
    traces = []
    for config in configs:
        try:
            trace = algo.run(config, threads=args.threads)
        except DivergenceDetected as e:
            print(f"error: {config.name}: {e}", file=sys.stderr)
            return EXIT_DIVERGED
        metrics.write_trace(trace, os.path.join(out, f"{config.name}.csv"))
        traces.append((config, trace))
        print(f"wrote {out}/{config.name}.csv")

    y = "grad_norm_sq" if args.which == "fig4" else "residual"
    x = "bits_cum" if args.which in ("fig3", "fig4") else "k"
    groups = {}
    for config, trace in traces:
        topo = config.raw["topology"]["kind"] if config.raw.get("topology") else "any"
        groups.setdefault(topo if args.which == "fig2" else args.which, []).append(
            (config.algorithm if args.which != "fig3" else config.name, trace))
    for group, series in groups.items():
        svg = os.path.join(out, f"{args.which}_{group}.svg" if args.which == "fig2"
                           else f"{args.which}.svg")
        _plot(series, x, y, svg, f"{args.which}-style ({group}, n={args.scale})",
              "iteration" if x == "k" else "bits per agent", y, logx=(x == "bits_cum"))
        print(f"wrote {svg}")
    return EXIT_OK


def cmd_inspect(args):
    try:
        g = topology.build_graph(args.kind, args.n)
        m = topology.lazy_metropolis(g)
    except CedasSimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    deg = g.degrees
    vals = m.eigenvalues
    print(f"kind: {g.kind}")
    print(f"nodes: {g.n}")
    print(f"edges: {len(g.edges)}")
    print(f"degree: min {deg.min()}, max {deg.max()}, mean {deg.mean():.2f}")
    print(f"lambda_2: {vals[1]:.6f}")
    print(f"lambda_n: {vals[-1]:.6f}")
    print(f"spectral gap 1 - lambda_2: {m.spectral_gap:.6f}")
    wt = topology.tilde_matrix(m, args.gamma)
    print(f"tilde gap at gamma={args.gamma}: {1.0 - wt.eigenvalues[1]:.6f} "
          f"(min eigenvalue {wt.eigenvalues[-1]:.6f})")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cedas-sim",
        description="Simulator for decentralized SGD with communication compression.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run config")
    p_run.add_argument("--config", required=True, help="path to a JSON run config")
    p_run.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT} or ./out)")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--reps", type=int, default=None, help="override the repetition count")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads across repetitions")
    p_run.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="set a config field by dotted path, e.g. schedule.c0=3.0")
    p_run.add_argument("--plot", action="store_true", help="also write an SVG line plot")
    p_run.add_argument("--transient-ref", default=None,
                       help="centralized trace CSV to estimate the transient time against")
    p_run.set_defaults(fn=cmd_run)

    p_verify = sub.add_parser("verify", help="run the built-in check suite")
    p_verify.add_argument("level", choices=("quick", "full"))
    p_verify.set_defaults(fn=cmd_verify)

    p_fig = sub.add_parser("figures", help="run a canned figure-style sweep")
    p_fig.add_argument("which", choices=sorted(presets.SUITES))
    p_fig.add_argument("--scale", type=int, default=25, help="number of agents (perfect square)")
    p_fig.add_argument("--iters", type=int, default=None, help="iteration budget per run")
    p_fig.add_argument("--seed", type=int, default=1)
    p_fig.add_argument("--reps", type=int, default=3)
    p_fig.add_argument("--threads", type=int, default=1)
    p_fig.add_argument("--out", default=None)
    p_fig.set_defaults(fn=cmd_figures)

    p_ins = sub.add_parser("inspect", help="print spectral data for a topology")
    p_ins.add_argument("--kind", required=True, choices=[k for k in topology.GRAPH_KINDS if k != "custom"])
    p_ins.add_argument("--n", type=int, required=True)
    p_ins.add_argument("--gamma", type=float, default=0.5)
    p_ins.set_defaults(fn=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CedasSimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
