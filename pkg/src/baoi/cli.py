"""Command-line front end.

Subcommands ``fixed-point``, ``analyze``, ``sweep`` and ``simulate`` all emit
CSV (to ``--out`` or stdout).  The effective configuration is written first
as ``# key=value`` comment lines.  Floats carry 12 significant digits.

Exit codes: 0 ok, 1 usage error, 2 infeasible or unstable regime, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import math
import os
import sys

from . import model_core as mc
from . import queue_analysis as qa
from . import simulator as sim

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".12g")
    return str(x)


# ---------------------------------------------------------------------------
# row builders shared by the single-point commands and the sweep


def fixed_point_row(params: mc.NetworkParams) -> dict:
    model = mc.solve_fixed_point(params)
    return {
        "density": params.density,
        "range": params.transmit_range,
        "wmin": params.w_min,
        "frame": params.frame_length,
        "lambda": model.lambda_nb,
        "p_tx": model.p_tx,
        "p_cl": model.p_cl_avg,
        "mu": model.mu,
        "load_margin": model.mu * params.frame_length,
        "stable": qa.is_stable(model.mu, params.frame_length),
    }


def analyze_row(params: mc.NetworkParams, modes, mu_override=None) -> dict:
    T = params.frame_length
    if mu_override is None:
        row = fixed_point_row(params)
        mu = row["mu"]
    else:
        mu = float(mu_override)
        row = {
            "density": params.density, "range": params.transmit_range, "wmin": params.w_min,
            "frame": T, "lambda": params.lambda_nb, "p_tx": None, "p_cl": None, "mu": mu,
            "load_margin": mu * T, "stable": qa.is_stable(mu, T),
        }
    sols = {m: qa.baoi_from_mu(mu, T, m) for m in modes}
    first = sols[modes[0]]
    row.update(alpha=first.alpha, nu=first.nu, mean_system_time=first.mean_system_time, e_xw=first.e_xw)
    for m, s in sols.items():
        row[f"ey_{m}"] = s.mean_interdeparture
        row[f"baoi_{m}"] = s.baoi_avg
        row[f"velocity_{m}"] = s.velocity
    if "consistent" in sols:
        row["ey_numeric"] = qa.left_derivative(lambda z: qa.pgf_Y(z, mu, first.nu, T))
    if len(modes) == 2:
        row["baoi_deviation"] = sols["paper"].baoi_avg - sols["consistent"].baoi_avg
    return row


def _modes(mode: str):
    return ("consistent", "paper") if mode == "both" else (mode,)


def analyze_columns(modes) -> list[str]:
    cols = ["density", "range", "wmin", "frame", "lambda", "p_tx", "p_cl", "mu", "load_margin", "stable",
            "alpha", "nu", "mean_system_time", "e_xw"]
    for m in modes:
        cols += [f"ey_{m}", f"baoi_{m}", f"velocity_{m}"]
    if "consistent" in modes:
        cols.append("ey_numeric")
    if len(modes) == 2:
        cols.append("baoi_deviation")
    return cols


FIXED_POINT_COLUMNS = ["density", "range", "wmin", "frame", "lambda", "p_tx", "p_cl", "mu", "load_margin", "stable"]
SIM_COLUMNS = ["sim_p_tx", "sim_p_tx_ci", "sim_p_cl", "sim_p_cl_ci", "sim_mu", "sim_mu_ci", "sim_baoi", "sim_baoi_ci"]
REPORT_COLUMNS = ["rep", "seed", "n_nodes", "n_active", "p_tx", "p_cl", "mu", "baoi", "overflow"]
TRACE_COLUMNS = ["node", "slot", "arrival_slot", "origin_slot", "baoi"]


# ---------------------------------------------------------------------------
# output


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _header(fh, effective: dict):
    for k in sorted(effective):
        fh.write(f"# {k}={fmt(effective[k])}\n")


def _writer(fh, columns):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    return w


def _write_row(w, columns, row):
    w.writerow([fmt(row.get(c)) for c in columns])


# ---------------------------------------------------------------------------
# commands


def _params(args) -> mc.NetworkParams:
    return mc.NetworkParams(args.density, args.range, args.wmin, args.frame)


def _effective(args) -> dict:
    skip = {"func", "config", "command", "out", "trace"}
    return {k.replace("_", "-"): v for k, v in vars(args).items() if k not in skip and v is not None}


def cmd_fixed_point(args) -> int:
    row = fixed_point_row(_params(args))
    with _output(args.out) as fh:
        _header(fh, _effective(args))
        _write_row(_writer(fh, FIXED_POINT_COLUMNS), FIXED_POINT_COLUMNS, row)
    if not row["stable"]:
        print(f"unstable: mu*T_F = {row['load_margin']:.6g} <= 1", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


def cmd_analyze(args) -> int:
    modes = _modes(args.mode)
    row = analyze_row(_params(args), modes, args.mu_override)
    cols = analyze_columns(modes)
    with _output(args.out) as fh:
        _header(fh, _effective(args))
        _write_row(_writer(fh, cols), cols, row)
    return EXIT_OK


def parse_grid(text: str, integer: bool = False) -> list:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must be min:max:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError(f"grid needs step > 0 and min <= max, got {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    pts = [round(lo + k * step, 12) for k in range(n)]
    if integer:
        if any(p != int(p) for p in pts):
            raise UsageError("frame grid must consist of integers")
        pts = [int(p) for p in pts]
    return pts


def _sim_config(args, params) -> sim.SimConfig:
    return sim.SimConfig(
        params=params,
        area_side=args.area_side,
        frames=args.frames,
        warmup=args.warmup,
        seed=args.seed,
        reps=args.reps,
        admission=args.admission,
        contention=args.contention,
    )


def cmd_sweep(args) -> int:
    integer = args.sweep == "frame"
    grid = parse_grid(args.grid, integer=integer)
    modes = _modes(args.mode)
    cols = analyze_columns(modes) + ["status"]
    if args.simulate:
        cols += SIM_COLUMNS
    ok = 0
    with _output(args.out) as fh:
        _header(fh, _effective(args))
        w = _writer(fh, cols)
        for value in grid:
            p = _params(args)
            p = mc.NetworkParams(
                value if args.sweep == "density" else p.density, p.transmit_range, p.w_min,
                value if args.sweep == "frame" else p.frame_length,
            )
            row = {}
            try:
                row.update(analyze_row(p, modes))
                row["status"] = "ok"
                ok += 1
            except qa.Unstable:
                row.update(fixed_point_row(p))
                row["status"] = "unstable"
            except mc.ModelError as exc:
                row["status"] = type(exc).__name__
            if args.simulate and row["status"] == "ok":
                rep = sim.run(_sim_config(args, p))
                row.update(
                    sim_p_tx=rep.p_tx, sim_p_tx_ci=rep.p_tx_ci, sim_p_cl=rep.p_cl, sim_p_cl_ci=rep.p_cl_ci,
                    sim_mu=rep.mu, sim_mu_ci=rep.mu_ci, sim_baoi=rep.baoi, sim_baoi_ci=rep.baoi_ci,
                )
            _write_row(w, cols, row)
            fh.flush()
    return EXIT_OK if ok else EXIT_UNSTABLE


def cmd_simulate(args) -> int:
    params = _params(args)
    config = _sim_config(args, params)
    reps = []
    for k in range(config.reps):
        want_trace = bool(args.trace) and k == 0
        res, world = sim.run_replication(config, config.seed + k, trace=want_trace)
        reps.append(res)
        if want_trace:
            sim.write_trace_csv(args.trace, world.trace_records())
    report = sim.summarize(config, reps)

    with _output(args.out) as fh:
        _header(fh, _effective(args))
        w = _writer(fh, REPORT_COLUMNS)
        for k, r in enumerate(reps):
            _write_row(w, REPORT_COLUMNS, dict(vars(r), rep=k))
        _write_row(w, REPORT_COLUMNS, dict(rep="mean", p_tx=report.p_tx, p_cl=report.p_cl, mu=report.mu, baoi=report.baoi))
        _write_row(w, REPORT_COLUMNS, dict(rep="ci95", p_tx=report.p_tx_ci, p_cl=report.p_cl_ci, mu=report.mu_ci, baoi=report.baoi_ci))

    _print_deltas(params, report)
    return EXIT_OK


def _print_deltas(params, report):
    err = sys.stderr
    try:
        model = mc.solve_fixed_point(params)
    except mc.ModelError as exc:
        print(f"analytic model unavailable: {exc}", file=err)
        return
    lines = [("p_tx", model.p_tx, report.p_tx, report.p_tx_ci), ("p_cl", model.p_cl_avg, report.p_cl, report.p_cl_ci),
             ("mu", model.mu, report.mu, report.mu_ci)]
    try:
        lines.append(("baoi", qa.baoi_from_mu(model.mu, params.frame_length).baoi_avg, report.baoi, report.baoi_ci))
    except qa.Unstable:
        print("analytic baoi: unstable regime", file=err)
    print(f"{'quantity':<8} {'analytic':>12} {'simulated':>12} {'ci95':>10} {'rel.dev':>8}", file=err)
    for name, a, s, ci in lines:
        print(f"{name:<8} {a:12.6g} {s:12.6g} {ci:10.3g} {s / a - 1:+8.3%}", file=err)


# ---------------------------------------------------------------------------
# parser


def _add_network(p):
    p.add_argument("--density", type=float, default=0.1, help="nodes per unit area")
    p.add_argument("--range", type=float, default=4.0, help="transmit range")
    p.add_argument("--wmin", type=int, default=16, help="minimum contention window (slots)")
    p.add_argument("--frame", type=int, default=50, help="frame length T_F (slots)")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--config", help="key=value file; command-line flags take precedence")


def _add_sim(p):
    p.add_argument("--frames", type=int, default=5000)
    p.add_argument("--warmup", type=int, default=None, help="warmup frames (default 20%%, at least 100)")
    p.add_argument("--seed", type=int, default=None, help="base seed (falls back to $BAOI_SEED, then 0)")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--area-side", type=float, default=40.0)
    p.add_argument("--admission", choices=sim.ADMISSIONS, default="frame_end")
    p.add_argument("--contention", choices=sim.CONTENTIONS, default="on_demand")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="baoi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fixed-point", help="solve the transmission/collision fixed point")
    _add_network(p)
    p.set_defaults(func=cmd_fixed_point)

    p = sub.add_parser("analyze", help="queue analysis and average broadcast age")
    _add_network(p)
    p.add_argument("--mode", choices=("paper", "consistent", "both"), default="consistent")
    p.add_argument("--mu-override", type=float, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="sweep density or frame length")
    _add_network(p)
    p.add_argument("--sweep", choices=("density", "frame"), default="density")
    p.add_argument("--grid", required=False, default=None, help="min:max:step")
    p.add_argument("--mode", choices=("paper", "consistent", "both"), default="consistent")
    p.add_argument("--simulate", action="store_true")
    _add_sim(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo simulation with analytic comparison")
    _add_network(p)
    _add_sim(p)
    p.add_argument("--trace", help="per-broadcast trace CSV of the first replication")
    p.set_defaults(func=cmd_simulate)
    return parser


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().lstrip("-")] = v.strip()
    return out


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when given."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in read_config(args.config).items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        else:
            val = act.type(raw) if act.type else raw
            if act.choices and val not in act.choices:
                raise UsageError(f"config key {key!r}: {val!r} not in {list(act.choices)}")
            defaults[dest] = val
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if getattr(args, "seed", "absent") is None:
            args.seed = int(os.environ.get("BAOI_SEED", "0"))
        if args.command == "sweep" and args.grid is None:
            args.grid = "0.05:0.3:0.05" if args.sweep == "density" else "10:200:10"
        return args.func(args)
    except UsageError as exc:
        print(f"baoi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (qa.Unstable, mc.InfeasibleRegime) as exc:
        print(f"baoi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (mc.NoConvergence, sim.DegenerateTopology, OSError) as exc:
        print(f"baoi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"baoi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
