"""Command-line interface: ``mzeuler run``, ``mzeuler show-terms``, ``mzeuler presets``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, ConfigError, RunConfig, coerce, preset, read_config_file

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_BLOWUP = 3
EXIT_IO = 4

log = logging.getLogger("mzeuler")

# flag name -> RunConfig field
_OVERRIDES = {
    "model": "model", "n": "n", "m": "m", "dt": "dt", "t_end": "t_end", "t0": "t0",
    "integrator": "integrator", "quadrature": "quadrature", "memory_mode": "memory_mode",
    "record_interval": "record_interval", "threads": "threads", "initial": "initial",
    "seed": "seed", "rebase_interval": "rebase_interval", "blowup_factor": "blowup_factor",
    "max_order": "max_order",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mzeuler", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a simulation and write energy.csv + manifest.json")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", help="key = value configuration file")
    src.add_argument("--from-manifest", help="re-run the configuration stored in a manifest")
    r.add_argument("--model")
    r.add_argument("--n", type=str)
    r.add_argument("--m", type=str)
    r.add_argument("--dt", type=str)
    r.add_argument("--t-end", dest="t_end", type=str)
    r.add_argument("--t0", type=str, help="memory length; 'inf' for no truncation")
    r.add_argument("--integrator", choices=["modified-euler", "rk4"])
    r.add_argument("--quadrature", choices=["trapezoid", "simpson"])
    r.add_argument("--memory-mode", dest="memory_mode", choices=["incremental", "direct"])
    r.add_argument("--project-divergence", action="store_true", default=None)
    r.add_argument("--record-interval", dest="record_interval", type=str)
    r.add_argument("--fit-window", nargs=2, type=float, metavar=("TA", "TB"))
    r.add_argument("--threads", type=str)
    r.add_argument("--initial", choices=["taylor-green", "random"])
    r.add_argument("--seed", type=str)
    r.add_argument("--rebase-interval", dest="rebase_interval", type=str)
    r.add_argument("--blowup-factor", dest="blowup_factor", type=str)
    r.add_argument("--max-order", dest="max_order", type=str)
    r.add_argument("--out", "-o", help="output directory (default: runs/<preset or model>)")
    r.add_argument("--progress", type=float, default=0.0,
                   help="log progress every this many time units")

    s = sub.add_parser("show-terms", help="print the generated Z^n sums and plan")
    s.add_argument("order", type=int)
    s.add_argument("--plan", action="store_true", help="also print the evaluation plan")
    s.add_argument("--no-classify", action="store_true")
    s.add_argument("--max-order", type=int, default=4)

    sub.add_parser("presets", help="list the built-in presets")
    return p


def config_from_args(args) -> RunConfig:
    values: dict = {}
    if args.preset:
        values.update(PRESETS[args.preset])
        values["preset"] = args.preset
    elif args.config:
        values.update(read_config_file(args.config))
    elif args.from_manifest:
        man = json.loads(Path(args.from_manifest).read_text())
        values.update(RunConfig.from_dict(man["config"]).to_dict())
    for flag, key in _OVERRIDES.items():
        raw = getattr(args, flag, None)
        if raw is not None:
            values[key] = coerce(key, raw) if isinstance(raw, str) and key != "model" else raw
    if args.project_divergence:
        values["project_divergence"] = True
    if args.fit_window:
        values["fit_window"] = tuple(args.fit_window)
    if args.out:
        values["output_dir"] = args.out
    cfg = RunConfig.from_dict(values).validate()
    if cfg.output_dir is None:
        cfg.output_dir = str(Path("runs") / (cfg.preset or cfg.model))
    return cfg


def cmd_run(args) -> int:
    from .diagnostics import FitError, RunSummary, count_waves, fit_loglog_slope, write_outputs
    from .integrate import run_simulation

    cfg = config_from_args(args)
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO

    every = max(1, round(args.progress / cfg.dt)) if args.progress > 0 else 0

    def progress(state):
        if every and state.step % every == 0:
            log.info("t=%.3f", state.t)

    log.info("running %s (N=%d, M=%d, dt=%g, t_end=%g)", cfg.model, cfg.n, cfg.m_total,
             cfg.dt, cfg.t_end)
    res = run_simulation(cfg, progress=progress if every else None)
    fit = None
    try:
        fit = fit_loglog_slope(res.records, cfg.fit_window)
    except FitError as exc:
        log.info("no decay fit: %s", exc)
    extra = {
        "first_energy_increase": res.first_energy_increase,
        "waves_after_t2": count_waves(res.records),
    }
    summary = RunSummary(cfg.to_dict(), {"n_resolved": cfg.n, "m_total": cfg.m_total,
                                         "f_modes": res.grid.count(1),
                                         "g_modes": res.grid.count(2)},
                         fit, res.blowup.to_dict() if res.blowup else None, res.wall_time,
                         res.state.step, res.state.t, extra)
    try:
        csv_path, man_path = write_outputs(res.records, summary, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {csv_path} and {man_path}")
    if fit:
        print(f"slope {fit.slope:.4f} +- {fit.stderr:.4f} over t in "
              f"[{fit.window[0]:g}, {fit.window[1]:g}] ({fit.points} points)")
    if res.blowup:
        b = res.blowup
        print(f"blow-up at t={b.t:.4f} (step {b.step}): {b.reason}")
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_show_terms(args) -> int:
    from .compiler.classify import classify_order
    from .compiler.plan import generate_Z
    from .compiler.trees import degree, restrict_root

    ct = generate_Z(args.order, max_order=args.max_order)
    sums = ct.sums_on_output()
    trees_f = restrict_root(ct.trees, 1)
    degs = sorted({degree(t) for t in ct.trees})
    print(f"Z{args.order}: {len(sums)} bilinear sums on F "
          f"({len(trees_f)} atomic trees, degrees {degs}, expected {args.order + 3})")
    for s in sums:
        print("  " + s.render())
    if args.order >= 1 and not args.no_classify:
        counts = classify_order(args.order).counts()
        print("classification of QL(QL)^(n-1)QLu terms: "
              + ", ".join(f"type {k}: {v}" for k, v in counts.items()))
    if args.plan:
        print(ct.plan.to_text(), end="")
    return EXIT_OK if degs == [args.order + 3] else EXIT_ERROR


def cmd_presets(_args) -> int:
    for name in sorted(PRESETS):
        cfg = preset(name)
        print(f"{name}: " + ", ".join(f"{k}={v}" for k, v in PRESETS[name].items())
              + f"  (m={cfg.m_total}, integrator={cfg.integrator})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(message)s")
    handlers = {"run": cmd_run, "show-terms": cmd_show_terms, "presets": cmd_presets}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
