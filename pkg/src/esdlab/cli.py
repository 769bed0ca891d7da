"""Command-line entry point: ``esdlab run|verify|sweep|metrics``.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when the
divergence guard aborts a run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import from_values, load_config
from .distill import ConfigError, Trajectory, run
from .metrics import metric_record, quality_variety, frechet_distance, inception_gain, MetricRecord
from .svg import scatter_svg
from .verify import SUITES, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2
SWEEP_KEYS = {
    "lambda": "distill.lambda",
    "p_null": "distill.p_null",
    "eta1": "distill.eta1",
    "init_scale": "distill.init_scale",
    "seed": "distill.seed",
}
N_PLOT_SAMPLES = 500


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _snapshot_rng(cfg, step):
    return np.random.default_rng([int(cfg["metrics.seed"]), int(step)])


def _records(exp, thetas, steps):
    cfg = exp.config
    out = []
    for step, theta in zip(steps, thetas):
        if not np.all(np.isfinite(theta)):
            out.append(MetricRecord(step=int(step)).to_dict())
            continue
        gen = exp.generator.with_params(theta)
        rec = metric_record(gen, exp.target, exp.classifier, _snapshot_rng(cfg, step),
                            int(cfg["metrics.n_views"]), int(cfg["metrics.n_reference"]), step=int(step))
        out.append(rec.to_dict())
    return out


def _plot_steps(cfg, steps):
    every = cfg["output.plot_every"]
    if every is None:
        return {int(steps[0]), int(steps[-1])}
    return {int(s) for s in steps if int(s) % int(every) == 0} | {int(steps[-1])}


def _write_plots(exp, traj, out):
    wanted = _plot_steps(exp.config, traj.steps)
    for step, theta in zip(traj.steps, traj.thetas):
        if int(step) not in wanted or not np.all(np.isfinite(theta)):
            continue
        rng = _snapshot_rng(exp.config, step)
        gen = exp.generator.with_params(theta)
        rendered = gen.render(gen.sample_cameras(rng, N_PLOT_SAMPLES))
        reference = exp.target.sample(rng, N_PLOT_SAMPLES)
        svg = scatter_svg(reference, rendered, title=f"step {int(step)}")
        (out / f"samples_{int(step)}.svg").write_text(svg)


def execute(cfg, out, plot=False, log=print):
    """Run one experiment into ``out``; return ``(exit_code, final MetricRecord dict or None)``."""
    try:
        exp = cfg.build()
    except ConfigError as exc:
        log(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    initial = exp.generator.params.copy()
    traj = run(exp.distill, exp.target, exp.generator, exp.schedule, exp.score_model)
    exp.generator.set_params(initial)
    (out / "config_echo.json").write_text(cfg.echo_text())
    (out / "trajectory.csv").write_text(traj.to_csv())
    records = _records(exp, traj.thetas, traj.steps)
    (out / "metrics.json").write_text(json.dumps(records, indent=2) + "\n")
    if plot or cfg["output.plot"]:
        _write_plots(exp, traj, out)
    if traj.diverged:
        theta = traj.thetas[-1]
        log(f"divergence guard: aborted at step {traj.abort_step}; ||theta|| = {np.linalg.norm(theta):.3e} "
            f"(guard {exp.distill.guard:.3e}), last grad norm {traj.grad_norms[-1]:.3e}", file=sys.stderr)
        return EXIT_DIVERGED, records[-1]
    return EXIT_OK, records[-1]


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(**{"distill.seed": args.seed})
    return cfg


def cmd_run(args):
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = execute(cfg, args.out, args.plot)
    if code == EXIT_OK:
        print(f"wrote trajectory.csv, metrics.json and config_echo.json to {args.out}")
    return code


def cmd_verify(args):
    names = args.suite or ["all"]
    unknown = [n for n in names if n != "all" and n not in SUITES]
    if unknown:
        print(f"unknown suite {unknown[0]!r}; available: all, {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if run_suites(names) else EXIT_CONFIG


def _parse_values(raw):
    values = []
    for item in raw:
        values.extend(v for v in item.split(",") if v.strip())
    return [json.loads(v) for v in values]


def _sweep_child(job):
    values, lines, source, out, plot = job
    cfg = from_values(values, lines, source)
    messages = []
    code, record = execute(cfg, out, plot, log=lambda msg, file=None: messages.append(msg))
    return code, record, messages


def cmd_sweep(args):
    try:
        cfg = _load(args)
        values = _parse_values(args.values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"invalid --values entry: {exc.doc!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("sweep needs at least one value", file=sys.stderr)
        return EXIT_CONFIG
    key = SWEEP_KEYS[args.param]
    out = Path(args.out)
    jobs = []
    for i, value in enumerate(values):
        child = cfg.with_overrides(**{key: value})
        try:
            child.build()
        except ConfigError as exc:
            print(f"config error for {args.param}={value}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        jobs.append((child.values, child.lines, child.source, str(out / f"{args.param}_{i:03d}"), args.plot))
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_sweep_child, jobs))
    fields = ["param", "value", "status", "exit_code", "step", "fid", "iq", "iv", "ig", "trace_cov", "mean_err",
              "out_dir"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    worst = EXIT_OK
    for value, job, (code, record, messages) in zip(values, jobs, results):
        for msg in messages:
            print(f"[{args.param}={value}] {msg}", file=sys.stderr)
        status = {EXIT_OK: "ok", EXIT_CONFIG: "config-error", EXIT_DIVERGED: "diverged"}[code]
        row = {"param": args.param, "value": value, "status": status, "exit_code": code, "out_dir": job[3]}
        row.update({k: v for k, v in (record or {}).items() if k in fields})
        writer.writerow(row)
        worst = max(worst, code)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(buf.getvalue())
    print(buf.getvalue(), end="")
    return worst


def _read_csv(path):
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    rows = [r for r in rows if r]
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    return rows


def cmd_metrics(args):
    try:
        cfg = _load(args)
        exp = cfg.build()
        rows = _read_csv(args.input)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    header = rows[0]
    if header[0] == "step":
        traj = Trajectory.from_csv(Path(args.input).read_text())
        if traj.thetas.shape[1] != exp.generator.n_params:
            print(f"{args.input}: trajectory has {traj.thetas.shape[1]} parameters, the configured generator "
                  f"has {exp.generator.n_params}", file=sys.stderr)
            return EXIT_CONFIG
        records = _records(exp, traj.thetas, traj.steps)
    else:
        try:
            float(header[0])
            body = rows
        except ValueError:
            body = rows[1:]
        samples = np.array([[float(v) for v in r] for r in body])
        if samples.ndim != 2 or samples.shape[1] != exp.target.dim:
            print(f"{args.input}: expected {exp.target.dim} columns of samples", file=sys.stderr)
            return EXIT_CONFIG
        rng = _snapshot_rng(cfg, 0)
        reference = exp.target.sample(rng, int(cfg["metrics.n_reference"]))
        iq, iv = quality_variety(samples, exp.classifier)
        records = [MetricRecord(fid=frechet_distance(samples, reference), iq=iq, iv=iv,
                                ig=inception_gain(iq, iv)).to_dict()]
    text = json.dumps(records, indent=2) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "metrics.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="esdlab", description="Score distillation on analytic toy problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one distillation experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--plot", action="store_true", help="write samples_<step>.svg scatter plots")
    p.add_argument("--seed", type=int, help="override distill.seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run identity suites")
    p.add_argument("suite", nargs="*", help=f"suite names or 'all' ({', '.join(SUITES)})")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run one experiment per parameter value, in parallel")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="sweep")
    p.add_argument("--param", required=True, choices=sorted(SWEEP_KEYS))
    p.add_argument("--values", nargs="*", default=[], help="values, space or comma separated")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="metrics for a trajectory or raw sample CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True, help="trajectory.csv or a CSV of samples")
    p.add_argument("--out", default=None, help="also write metrics.json into this directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
