"""Configuration-driven experiment runner.

A scenario is one JSON document; `run_scenario` validates it, executes the
configured ensemble (or identity/field check, or barrier-hitting run), writes
the requested analysis reports plus a run manifest, and returns the manifest.
Identical (config, seed) runs produce byte-identical data files; wall-clock
timing lives only in the manifest.
"""

import hashlib
import importlib.resources
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import analysis as an
from . import fields as flds
from . import games as gm
from .engine import IntegratorConfig, integrate, simulate_ensemble
from .errors import ConfigError, ShockrepError
from .games import halton_states

SCENARIO_TYPES = ("ensemble", "hitting", "field_check")
DYNAMICS_KINDS = ("rd", "srd", "aggregate", "explearn", "stratonovich",
                  "bimatrix", "mutation", "second_order")
PER_STRATEGY_DYNAMICS = ("srd", "aggregate", "explearn", "stratonovich",
                         "second_order")
ANALYSIS_KINDS = ("survival", "extinction", "martingale", "absorption",
                  "coexistence", "stability", "quadratic_decay")
CHECK_KINDS = ("stratonovich_identity", "field_invariants")


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _require(config, key, types, where="config"):
    if key not in config:
        raise ConfigError(f"{where}.{key}", "missing required field")
    val = config[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{where}.{key}",
                          f"expected {types}, got {type(val).__name__}")
    return val


def build_game(desc):
    kind = _require(desc, "kind", str, "game")
    if kind == "constant":
        payoffs = _require(desc, "payoffs", list, "game")
        vectors = payoffs if isinstance(payoffs[0], list) else [payoffs]
        return gm.constant_game(vectors)
    if kind == "matrix":
        return gm.matrix_game(_require(desc, "matrix", list, "game"))
    if kind == "multilinear":
        return gm.multilinear_game(_require(desc, "tensors", list, "game"))
    raise ConfigError("game.kind", f"unknown payoff kind {kind!r} "
                      "(custom payoffs are library-only)")


def build_noise(desc, game):
    if desc is None:
        return gm.StrategyNoise(np.zeros(game.dim))
    kind = _require(desc, "kind", str, "noise")
    if kind == "per_strategy":
        sigma = _require(desc, "sigma", list, "noise")
        vectors = sigma if isinstance(sigma[0], list) else [sigma]
        flat = np.concatenate([np.asarray(v, dtype=np.float64) for v in vectors])
        if flat.size != game.dim:
            raise ConfigError("noise.sigma",
                              f"has {flat.size} entries, game has {game.dim}")
        return gm.StrategyNoise(flat)
    if kind == "matrix_entry":
        if game.payoff.kind != "matrix":
            raise ConfigError("noise.kind",
                              "matrix_entry noise requires a matrix game")
        return gm.MatrixEntryNoise(_require(desc, "sigma", list, "noise"))
    if kind == "mutation":
        etas = _require(desc, "eta", list, "noise")
        if not isinstance(etas[0][0], list):
            etas = [etas]
        return gm.MutationNoise([np.asarray(e, dtype=np.float64) for e in etas])
    raise ConfigError("noise.kind", f"unknown noise kind {kind!r}")


def build_x0(desc, game):
    x0 = desc if isinstance(desc[0], list) else [desc]
    try:
        return gm.make_state(game, [np.asarray(b, dtype=np.float64) for b in x0])
    except ShockrepError as exc:
        raise ConfigError("x0", str(exc)) from exc


@dataclass
class Scenario:
    raw: dict
    type: str
    seed: int
    game: object = None
    noise: object = None
    dynamics: str = None
    field: object = None
    x0: np.ndarray = None
    cfg: IntegratorConfig = None
    paths: int = 1
    analyses: tuple = ()
    save_snapshots: bool = False
    name: str = "scenario"

    @property
    def hash(self):
        return config_hash(self.raw)


def parse_scenario(config):
    """Validate a scenario dict; raises ConfigError naming the bad field."""
    if not isinstance(config, dict):
        raise ConfigError("config", "scenario must be a JSON object")
    stype = config.get("type", "ensemble")
    if stype not in SCENARIO_TYPES:
        raise ConfigError("type", f"unknown scenario type {stype!r}")
    if "seed" not in config:
        raise ConfigError("seed", "missing required field (no implicit entropy)")
    seed = config["seed"]
    if not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")
    name = config.get("name", "scenario")
    sc = Scenario(raw=config, type=stype, seed=seed, name=name)

    if stype == "hitting":
        for key in ("a", "b", "horizon", "dt", "paths"):
            _require(config, key, (int, float))
        if config["paths"] < 1:
            raise ConfigError("paths", "must be >= 1")
        return sc

    if stype == "field_check":
        checks = _require(config, "checks", list)
        for i, c in enumerate(checks):
            kind = _require(c, "kind", str, f"checks[{i}]")
            if kind not in CHECK_KINDS:
                raise ConfigError(f"checks[{i}].kind", f"unknown check {kind!r}")
        sc.game = build_game(_require(config, "game", dict))
        sc.noise = build_noise(config.get("noise"), sc.game)
        sc.analyses = tuple(checks)
        return sc

    game = build_game(_require(config, "game", dict))
    noise = build_noise(config.get("noise"), game)
    dynamics = _require(config, "dynamics", str)
    if dynamics not in DYNAMICS_KINDS:
        raise ConfigError("dynamics", f"unknown dynamics kind {dynamics!r}")
    if dynamics in PER_STRATEGY_DYNAMICS and noise.kind != "per_strategy":
        raise ConfigError("noise.kind",
                          f"{dynamics} dynamics require per_strategy noise")
    if dynamics == "bimatrix" and noise.kind != "matrix_entry":
        raise ConfigError("noise.kind",
                          "bimatrix dynamics require matrix_entry noise")
    if dynamics == "mutation" and noise.kind != "mutation":
        raise ConfigError("noise.kind",
                          "mutation dynamics require mutation noise")

    integ = _require(config, "integrator", dict)
    try:
        cfg = IntegratorConfig(
            dt=float(_require(integ, "dt", (int, float), "integrator")),
            horizon=float(_require(integ, "horizon", (int, float), "integrator")),
            floor=float(integ.get("floor", 1e-12)),
            scheme=integ.get("scheme", "x"),
            record_stride=int(integ.get("record_stride", 1)),
        )
        cfg.validate_floor(max(game.sizes))
    except ShockrepError as exc:
        raise ConfigError("integrator", str(exc)) from exc
    if cfg.scheme == "log_y" and dynamics != "srd":
        raise ConfigError("integrator.scheme",
                          "log_y scheme applies to srd dynamics only")

    paths = config.get("paths", 1)
    if not isinstance(paths, int) or paths < 1:
        raise ConfigError("paths", "must be a positive integer")

    analyses = config.get("analyses", [])
    for i, a in enumerate(analyses):
        kind = _require(a, "kind", str, f"analyses[{i}]")
        if kind not in ANALYSIS_KINDS:
            raise ConfigError(f"analyses[{i}].kind",
                              f"unknown analysis {kind!r}")

    sc.game, sc.noise, sc.dynamics, sc.cfg = game, noise, dynamics, cfg
    sc.x0 = build_x0(_require(config, "x0", list), game)
    sc.paths = paths
    sc.analyses = tuple(analyses)
    sc.save_snapshots = bool(config.get("save_snapshots", False))
    try:
        sc.field = flds.field_for(dynamics, game, noise)
    except ShockrepError as exc:
        raise ConfigError("dynamics", str(exc)) from exc
    return sc


# ---------------------------------------------------------------------------
# analyses over a finished ensemble
# ---------------------------------------------------------------------------

def _offsets(game):
    return game.offsets


def run_analysis(entry, scenario, ensemble):
    kind = entry["kind"]
    off = _offsets(scenario.game)
    pop = entry.get("population", 0)
    if kind == "survival":
        rep = an.survival_probability(
            ensemble, entry["strategy"], entry.get("threshold", 1e-4), pop, off)
    elif kind == "extinction":
        surv = an.survival_probability(
            ensemble, entry["strategy"], entry.get("threshold", 1e-4), pop, off)
        rep = {"strategy": surv["strategy"], "threshold": surv["threshold"],
               "extinct_fraction": 1.0 - surv["estimate"],
               "n_paths": surv["n_paths"]}
    elif kind == "martingale":
        rep = an.martingale_check(ensemble, entry["strategy"], entry["t"],
                                  pop, off)
    elif kind == "absorption":
        thr = entry.get("threshold", 0.01)
        interior = 1.0 - ensemble.terminal.max(axis=1)
        frac = float((interior > thr).mean())
        rep = {"threshold": thr, "interior_fraction": frac,
               "absorbed_fraction": 1.0 - frac, "n_paths": ensemble.n_paths}
    elif kind == "coexistence":
        thr = entry.get("threshold", 1e-3)
        frac = float((ensemble.terminal > thr).all(axis=1).mean())
        rep = {"threshold": thr, "all_above_fraction": frac,
               "n_paths": ensemble.n_paths}
    elif kind == "stability":
        target = np.asarray(entry["target"], dtype=np.float64).ravel()
        rep = an.stability_probability(
            ensemble, target, entry.get("radius", 0.5),
            entry.get("delta_conv", 1e-3)).to_dict()
    elif kind == "quadratic_decay":
        if ensemble.snapshots is None:
            raise ConfigError("analyses", "quadratic_decay needs snapshots")
        a_idx = off[pop] + entry["strategy_a"]
        b_idx = off[pop] + entry["strategy_b"]
        burn = entry.get("burn_in", 0.1)
        start = int(burn * ensemble.times.size)
        t2 = ensemble.times[start:] ** 2
        y = np.log(ensemble.snapshots[:, start:, a_idx]
                   / ensemble.snapshots[:, start:, b_idx])
        t2c = t2 - t2.mean()
        slopes = (y - y.mean(axis=1, keepdims=True)) @ t2c / np.sum(t2c * t2c)
        rep = {"slopes_mean": float(slopes.mean()),
               "slopes_std": float(slopes.std(ddof=1)) if slopes.size > 1 else 0.0,
               "n_paths": int(slopes.size), "burn_in": burn}
    else:
        raise ConfigError("analyses", f"unknown analysis {kind!r}")
    out = {"kind": kind}
    out.update(rep if isinstance(rep, dict) else rep.to_dict())
    return out


def run_check(entry, scenario):
    kind = entry["kind"]
    game, noise = scenario.game, scenario.noise
    n_states = int(entry.get("states", 100))
    if kind == "stratonovich_identity":
        f_strat = flds.stratonovich_field(game, noise)
        f_exp = flds.exponential_learning_field(game, noise)
        states = halton_states(game, n_states)
        gap = np.abs(f_strat.drift(states) - f_exp.drift(states)).max()
        return {"kind": kind, "states": n_states,
                "max_drift_gap": float(gap), "tolerance": 1e-12,
                "passed": bool(gap <= 1e-12)}
    if kind == "field_invariants":
        from .acceptance import field_invariant_report
        rep = field_invariant_report(n_states, seed=scenario.seed)
        rep["kind"] = kind
        return rep
    raise ConfigError("checks", f"unknown check {kind!r}")


# ---------------------------------------------------------------------------
# file emission
# ---------------------------------------------------------------------------

def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _csv_rows(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row))
    return "\n".join(lines) + "\n"


def write_terminal_csv(path, ensemble, labels):
    header = ["path"] + [f"x_{s}" for s in labels]
    rows = []
    vel = ensemble.terminal_velocity
    if vel is not None:
        header += [f"v_{s}" for s in labels]
    for i in range(ensemble.n_paths):
        row = [ensemble.path0 + i] + [float(v) for v in ensemble.terminal[i]]
        if vel is not None:
            row += [float(v) for v in vel[i]]
        rows.append(row)
    _write_text(path, _csv_rows(header, rows))


def write_snapshots_csv(path, ensemble, labels):
    header = ["path", "t"] + [f"x_{s}" for s in labels]
    rows = []
    for i in range(ensemble.n_paths):
        for j, t in enumerate(ensemble.times):
            rows.append([ensemble.path0 + i, float(t)]
                        + [float(v) for v in ensemble.snapshots[i, j]])
    _write_text(path, _csv_rows(header, rows))


def default_output_root():
    return os.environ.get("SHOCKREP_OUT", "shockrep-runs")


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str
    started: float
    finished: float
    files: dict
    name: str

    def to_dict(self):
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "tool_version": self.version,
            "started_unix": self.started,
            "finished_unix": self.finished,
            "files": self.files,
        }


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run_scenario(config, out_dir=None, trajectory_only=False):
    """Execute one scenario and write its outputs; returns the manifest.

    `trajectory_only` integrates a single path (the `simulate` subcommand)
    instead of the configured ensemble.
    """
    scenario = parse_scenario(config)
    started = time.time()
    if out_dir is None:
        out_dir = config.get("output") or os.path.join(
            default_output_root(), scenario.name)
    os.makedirs(out_dir, exist_ok=True)
    files = []

    reports = []
    if scenario.type == "hitting":
        raw = scenario.raw
        reports.append(an.hitting_probability_mc(
            raw["a"], raw["b"], raw["horizon"], raw["paths"], raw["dt"],
            seed=scenario.seed))
    elif scenario.type == "field_check":
        for entry in scenario.analyses:
            reports.append(run_check(entry, scenario))
    elif trajectory_only:
        traj = integrate(scenario.field, scenario.x0, scenario.cfg,
                         seed=scenario.seed, path=0)
        tpath = os.path.join(out_dir, "trajectory.csv")
        traj.to_csv(tpath)
        files.append(tpath)
    else:
        ref = None
        for entry in scenario.analyses:
            if entry["kind"] == "stability":
                ref = np.asarray(entry["target"], dtype=np.float64).ravel()
        need_snaps = scenario.save_snapshots or any(
            e["kind"] in ("martingale", "quadratic_decay")
            for e in scenario.analyses)
        ens = simulate_ensemble(scenario.field, scenario.x0, scenario.cfg,
                                scenario.seed, scenario.paths,
                                ref_point=ref, keep_snapshots=need_snaps)
        labels = scenario.game.coordinate_labels()
        tpath = os.path.join(out_dir, "terminal.csv")
        write_terminal_csv(tpath, ens, labels)
        files.append(tpath)
        if scenario.save_snapshots:
            spath = os.path.join(out_dir, "snapshots.csv")
            write_snapshots_csv(spath, ens, labels)
            files.append(spath)
        reports.append({**ens.summary(), "kind": "summary"})
        for entry in scenario.analyses:
            reports.append(run_analysis(entry, scenario, ens))

    rpath = os.path.join(out_dir, "reports.json")
    _write_text(rpath, json.dumps(reports, indent=2, sort_keys=True) + "\n")
    files.append(rpath)
    cpath = os.path.join(out_dir, "config.json")
    _write_text(cpath, canonical_json(config) + "\n")
    files.append(cpath)

    manifest = RunManifest(
        config_hash=scenario.hash,
        seed=scenario.seed,
        version=__version__,
        started=started,
        finished=time.time(),
        files={os.path.basename(p): {"sha256": _sha256(p),
                                     "bytes": os.path.getsize(p)}
               for p in files},
        name=scenario.name,
    )
    mpath = os.path.join(out_dir, "manifest.json")
    _write_text(mpath, json.dumps(manifest.to_dict(), indent=2, sort_keys=True)
                + "\n")
    return manifest


# ---------------------------------------------------------------------------
# bundled presets
# ---------------------------------------------------------------------------

def preset_names():
    root = importlib.resources.files("shockrep") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name):
    root = importlib.resources.files("shockrep") / "presets"
    path = root / f"{name}.json"
    if not path.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}; "
                          f"available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def load_config(path_or_preset):
    """A filesystem path takes precedence; otherwise a bundled preset name."""
    if os.path.exists(path_or_preset):
        with open(path_or_preset) as fh:
            try:
                return json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return load_preset(path_or_preset)
