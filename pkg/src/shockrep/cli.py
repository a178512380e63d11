"""Command-line front end.

Subcommands: simulate, ensemble, analyze, verify, presets.  Exit status 0 on
success, 1 on configuration/validation errors, 2 when verification fails.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import analysis as an
from .acceptance import run_all
from .backend import active_name
from .errors import ConfigError, ShockrepError
from .scenarios import (default_output_root, load_config, parse_scenario,
                        preset_names, run_analysis, run_scenario)

PRESET_BLURBS = {
    "pure-noise-srd": "equal-payoff direct shocks: survival ~ initial share",
    "aggregate-elimination": "aggregate shocks wipe out the noisier strategy",
    "explearn-coexistence": "score-noise dynamics keep every strategy alive",
    "stratonovich-identity": "Stratonovich conversion matches the score-noise drift",
    "thm31-extinction": "dominated strategy dies under mild direct shocks",
    "thm33-strict-stability": "strict equilibrium attracts nearby starts",
    "remark35-non-nash": "high noise stabilizes a non-equilibrium vertex",
    "thm41-quadratic": "cumulative payoffs: log-ratio falls like -m t^2 / 2",
    "lemmaA2-hitting": "Brownian barrier-hitting probability vs closed form",
    "field-invariants": "tangency / boundary checks for all model fields",
}


def _apply_overrides(config, args):
    if args.seed is not None:
        config["seed"] = args.seed
    if args.paths is not None:
        config["paths"] = args.paths
    if args.dt is not None or args.horizon is not None:
        if config.get("type", "ensemble") == "hitting":
            if args.dt is not None:
                config["dt"] = args.dt
            if args.horizon is not None:
                config["horizon"] = args.horizon
        else:
            integ = config.setdefault("integrator", {})
            if args.dt is not None:
                integ["dt"] = args.dt
            if args.horizon is not None:
                integ["horizon"] = args.horizon
    return config


def _cmd_run(args, trajectory_only):
    config = _apply_overrides(load_config(args.config), args)
    if trajectory_only and config.get("type", "ensemble") != "ensemble":
        raise ConfigError("type", "simulate applies to ensemble scenarios")
    manifest = run_scenario(config, out_dir=args.out,
                            trajectory_only=trajectory_only)
    out_dir = args.out or config.get("output") or os.path.join(
        default_output_root(), manifest.name)
    print(f"run {manifest.name}: config {manifest.config_hash[:12]} "
          f"seed {manifest.seed} -> {out_dir}")
    for fname, meta in sorted(manifest.files.items()):
        print(f"  {fname}  {meta['bytes']}B  sha256:{meta['sha256'][:12]}")
    return 0


def _load_run_dir(run_dir):
    cfg_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise ConfigError("run-dir", f"{run_dir} has no config.json")
    with open(cfg_path) as fh:
        scenario = parse_scenario(json.load(fh))
    term_path = os.path.join(run_dir, "terminal.csv")
    if not os.path.exists(term_path):
        raise ConfigError("run-dir", f"{run_dir} has no terminal.csv "
                          "(only ensemble runs can be analyzed)")
    raw = np.genfromtxt(term_path, delimiter=",", names=True)
    dim = scenario.game.dim
    names = raw.dtype.names
    terminal = np.stack([raw[nm] for nm in names[1:1 + dim]], axis=-1)

    snapshots = times = None
    snap_path = os.path.join(run_dir, "snapshots.csv")
    if os.path.exists(snap_path):
        sraw = np.genfromtxt(snap_path, delimiter=",", names=True)
        times = np.unique(sraw["t"])
        n_paths = terminal.shape[0]
        cols = np.stack([sraw[nm] for nm in sraw.dtype.names[2:2 + dim]],
                        axis=-1)
        snapshots = cols.reshape(n_paths, times.size, dim)

    from .engine import EnsembleResult
    ens = EnsembleResult(
        times=times, terminal=np.atleast_2d(terminal), snapshots=snapshots,
        seed=scenario.seed, path0=0, n_paths=terminal.shape[0],
        kind=scenario.dynamics, dt=scenario.cfg.dt,
        horizon=scenario.cfg.horizon, x0=scenario.x0,
        floor_count=None, floor_first=None, max_drift=0.0,
        labels=scenario.game.coordinate_labels())
    return scenario, ens


def _cmd_analyze(args):
    scenario, ens = _load_run_dir(args.run_dir)
    entry = {"kind": args.analysis}
    if args.strategy is not None:
        entry["strategy"] = args.strategy
        entry["strategy_a"] = args.strategy
    if args.strategy_b is not None:
        entry["strategy_b"] = args.strategy_b
    if args.population is not None:
        entry["population"] = args.population
    if args.threshold is not None:
        entry["threshold"] = args.threshold
    if args.t is not None:
        entry["t"] = args.t
    if args.target is not None:
        entry["target"] = [float(v) for v in args.target.split(",")]
    if args.radius is not None:
        entry["radius"] = args.radius
    if args.delta is not None:
        entry["delta_conv"] = args.delta
    report = run_analysis(entry, scenario, ens)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"analysis_{args.analysis}.json")
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_verify(args):
    print(f"verification tier: {args.tier} (backend: {active_name()})")
    results = run_all(args.tier, echo=print)
    failed = [r for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed "
          f"in {total:.0f}s")
    return 2 if failed else 0


def _cmd_presets(args):
    for name in preset_names():
        print(f"{name:<24} {PRESET_BLURBS.get(name, '')}")
    return 0


def _cmd_hitprob(args):
    report = an.hitting_probability_mc(args.a, args.b, args.horizon,
                                       args.paths, args.dt, seed=args.seed or 0)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shockrep",
        description="Stochastic imitation dynamics: simulation and analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--paths", type=int, help="override the ensemble size")
        p.add_argument("--dt", type=float, help="override the time step")
        p.add_argument("--horizon", type=float, help="override the horizon")
        p.add_argument("--out", help="output directory")

    p_sim = sub.add_parser("simulate", help="integrate a single trajectory")
    p_sim.add_argument("config", help="scenario file or preset name")
    add_common(p_sim)

    p_ens = sub.add_parser("ensemble", help="run the configured ensemble")
    p_ens.add_argument("config", help="scenario file or preset name")
    add_common(p_ens)

    p_an = sub.add_parser("analyze", help="run an analysis over a saved run")
    p_an.add_argument("run_dir")
    p_an.add_argument("analysis", help="survival | extinction | martingale | "
                      "absorption | coexistence | stability | quadratic_decay")
    p_an.add_argument("--strategy", type=int)
    p_an.add_argument("--strategy-b", type=int, dest="strategy_b")
    p_an.add_argument("--population", type=int)
    p_an.add_argument("--threshold", type=float)
    p_an.add_argument("--t", type=float)
    p_an.add_argument("--target", help="comma-separated state coordinates")
    p_an.add_argument("--radius", type=float)
    p_an.add_argument("--delta", type=float)
    p_an.add_argument("--out")

    p_ver = sub.add_parser("verify", help="run the acceptance criteria")
    p_ver.add_argument("tier", nargs="?", default="full",
                       choices=["fast", "full"])

    p_pre = sub.add_parser("presets", help="list bundled scenario presets")
    p_pre.add_argument("action", nargs="?", default="list", choices=["list"])

    p_hit = sub.add_parser("hitprob",
                           help="barrier-hitting probability, MC vs closed form")
    p_hit.add_argument("--a", type=float, required=True)
    p_hit.add_argument("--b", type=float, required=True)
    p_hit.add_argument("--horizon", type=float, default=400.0)
    p_hit.add_argument("--dt", type=float, default=1e-3)
    p_hit.add_argument("--paths", type=int, default=20000)
    p_hit.add_argument("--seed", type=int)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_run(args, trajectory_only=True)
        if args.command == "ensemble":
            return _cmd_run(args, trajectory_only=False)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "presets":
            return _cmd_presets(args)
        if args.command == "hitprob":
            return _cmd_hitprob(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ShockrepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
