"""Command line: ``vrscp run | eval | oracle-check | preset``.

Exit status is 0 on success, 1 when a run or check fails and 2 for
configuration or usage errors.  ``VRSCP_OUT_DIR`` and ``VRSCP_WORKERS``
override the config file; explicit flags override both.
"""

import argparse
import glob
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .baselines import reinforce_run, scrn_run
from .checks import SUITES, run_suite, summary_json
from .config import PRESETS, ExperimentConfig, preset_config
from .driver import vrscp_run
from .errors import ConfigError, VrscpError
from .evaluation import pr_metric
from .policy import save_params
from .records import RunRecord, dumps

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def record_name(algorithm, seed):
    return f"{algorithm}_seed{seed}"


def _write_trace(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("solver,t,iteration,h_norm,model_value,grad_norm\n")
        for solver, t, it, hn, mv, gn in rows:
            fh.write(f"{solver},{t},{it},{hn!r},{mv!r},{gn!r}\n")


def run_seed(cfg, seed, out_dir, trace=False):
    """Run one seed and write its record; returns ``(seed, status, message)``."""
    algo = cfg.algorithm["name"]
    base = os.path.join(out_dir, record_name(algo, seed))
    try:
        source = cfg.source()
        params = cfg.algorithm_params(seed)
        rows = [] if trace and algo != "reinforce" else None
        if algo == "reinforce":
            rec = reinforce_run(params, source)
        else:
            fn = vrscp_run if algo == "vrscp" else scrn_run
            rec = fn(params, source, trace=rows)
        rec.write(base + ".jsonl")
        save_params(base + ".params", rec.theta)
        if rows is not None:
            _write_trace(base + "_trace.csv", rows)
        return seed, "ok", ""
    except Exception as exc:  # noqa: BLE001 - every failure must leave a marker
        with open(base + ".failed", "w", encoding="utf-8") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
            fh.write(traceback.format_exc())
        return seed, "failed", f"{type(exc).__name__}: {exc}"


def _resolve(flag, env_name, default, cast=str):
    if flag is not None:
        return flag
    if os.environ.get(env_name):
        try:
            return cast(os.environ[env_name])
        except ValueError:
            raise ConfigError(f"{env_name}: cannot parse {os.environ[env_name]!r}") from None
    return default


def cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    out_dir = _resolve(args.out, "VRSCP_OUT_DIR", cfg.out_dir)
    workers = _resolve(args.workers, "VRSCP_WORKERS", cfg.workers, int)
    if workers < 1:
        raise ConfigError("workers: must be at least 1")
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    if workers == 1 or len(cfg.seeds) == 1:
        results = [run_seed(cfg, s, out_dir, args.trace) for s in cfg.seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_seed, cfg, s, out_dir, args.trace) for s in cfg.seeds]
            results = [f.result() for f in futures]
    manifest = {
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "config": os.path.abspath(args.config),
        "algorithm": cfg.algorithm["name"],
        "seeds": list(cfg.seeds),
        "records": [record_name(cfg.algorithm["name"], s) + ".jsonl" for s, st, _ in results if st == "ok"],
        "failed": [{"seed": s, "error": msg} for s, st, msg in results if st != "ok"],
        "workers": workers,
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(manifest) + "\n")
    for s, st, msg in results:
        print(f"seed={s}\tstatus={st}" + (f"\terror={msg}" if msg else ""))
    return EXIT_OK if all(st == "ok" for _, st, _ in results) else EXIT_FAIL


def cmd_eval(args):
    paths = sorted(glob.glob(args.records))
    paths = [p for p in paths if p.endswith(".jsonl")]
    if len(paths) < args.n:
        raise ConfigError(f"need {args.n} records, glob {args.records!r} matched {len(paths)}")
    records = [RunRecord.read(p) for p in paths]
    tags = sorted({r.algorithm for r in records})
    if len(tags) > 1:
        raise ConfigError(f"records mix algorithm tags {tags}; evaluate one algorithm at a time")
    records = sorted(records, key=lambda r: r.seed)[: args.n]
    report = pr_metric(records, n=args.n, T=args.T, grid_step=args.grid_step,
                       confidence=args.confidence)
    out_dir = args.out or os.path.dirname(paths[0]) or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, f"pr_{report.algorithm}_n{report.n}")
    report.write(stem + ".json", stem + "_lci.csv")
    if not args.no_plot:
        from .plotting import plot_reports
        plot_reports([report], stem + "_lci.png", title=f"{report.algorithm}, n={report.n}")
    print(f"algorithm={report.algorithm}\tn={report.n}\tT={report.T}\t"
          f"grid_step={report.grid_step}\tPR={report.pr!r}")
    return EXIT_OK


def cmd_oracle_check(args):
    results = run_suite(args.suite, quick=args.quick)
    for r in results:
        print(r.line())
    text = summary_json(results)
    if args.suite == "all":
        print(text, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"oracle_check_{args.suite}.json"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_preset(args):
    cfg = preset_config(args.name, algorithm=args.algorithm)
    sys.stdout.write(cfg.to_toml())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vrscp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every seed listed in a TOML config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config out_dir)")
    r.add_argument("--workers", type=int, help="parallel seed workers")
    r.add_argument("--trace", action="store_true", help="write per-iteration solver traces")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="PR metric and LCI curve for a set of records")
    e.add_argument("records", help="glob of .jsonl record files")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--confidence", type=float, default=0.95)
    e.add_argument("--grid-step", type=int, default=None)
    e.add_argument("--T", type=int, default=None, help="probe horizon (default: common horizon)")
    e.add_argument("--out", help="output directory (default: next to the records)")
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle-check", help="run oracle verification suites")
    o.add_argument("suite", choices=sorted(SUITES) + ["all"])
    o.add_argument("--quick", action="store_true", help="smaller sample sizes")
    o.add_argument("--out", help="directory for the JSON summary")
    o.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("preset", help="print a ready-to-edit config for a shipped preset")
    s.add_argument("name", choices=sorted(PRESETS))
    s.add_argument("--algorithm", default="vrscp", choices=["vrscp", "scrn", "reinforce"])
    s.set_defaults(func=cmd_preset)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VrscpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
