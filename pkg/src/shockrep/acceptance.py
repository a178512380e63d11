"""The verification suite: every headline claim as a finite-horizon check.

Twelve criteria, each a seeded Monte Carlo experiment or exact identity with a
pinned tolerance.  The `full` tier runs the stated path counts and horizons;
`fast` shrinks them with correspondingly widened statistical tolerances (same
claims, lighter evidence).  Asymptotic/a.s. statements are tested through
their finite-horizon proxies (terminal thresholds, sup-norm excursions).
"""

import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import analysis as an
from . import fields as flds
from . import games as gm
from .engine import IntegratorConfig, integrate, simulate_ensemble
from .fields import pure_noise_closed_form
from .rng import NoiseStream, coarsen_increments
from .scenarios import run_scenario

BASE_SEED = 20250808

TIERS = {
    "full": {
        "pn_paths": 10000, "pn_T": 200.0, "pn_tol": 0.015, "pn_interior": 0.01,
        "agg_paths": 2000, "agg_T": 100.0, "agg_frac": 0.99,
        "exp_paths": 2000, "exp_T": 100.0, "exp_frac": 0.95, "exp_conv_paths": 8,
        "strat_states": 100,
        "ext_paths": 2000, "ext_T": 100.0, "ext_frac": 0.99,
        "stab_paths": 2000, "stab_T": 100.0, "stab_frac": 0.90,
        "nonnash_paths": 2000, "nonnash_T": 100.0, "nonnash_frac": 0.05,
        "so_paths": 100, "so_T": 20.0, "so_band": (-0.6, -0.4),
        "hit_paths": 20000, "hit_T": 400.0, "hit_tol": 0.010,
        "hit2_paths": 20000, "hit2_T": 400.0,
        "inv_states": 1000,
    },
    "fast": {
        "pn_paths": 2000, "pn_T": 50.0, "pn_tol": 0.034, "pn_interior": 0.02,
        "agg_paths": 500, "agg_T": 50.0, "agg_frac": 0.98,
        "exp_paths": 500, "exp_T": 50.0, "exp_frac": 0.95, "exp_conv_paths": 4,
        "strat_states": 100,
        "ext_paths": 500, "ext_T": 50.0, "ext_frac": 0.99,
        "stab_paths": 500, "stab_T": 50.0, "stab_frac": 0.90,
        "nonnash_paths": 500, "nonnash_T": 50.0, "nonnash_frac": 0.05,
        "so_paths": 50, "so_T": 15.0, "so_band": (-0.65, -0.35),
        "hit_paths": 4000, "hit_T": 100.0, "hit_tol": 0.020,
        "hit2_paths": 2000, "hit2_T": 50.0,
        "inv_states": 200,
    },
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    target: str
    seconds: float

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag}  {self.number:>2}  {self.name:<34} "
                f"{self.measured}  [target {self.target}]  "
                f"({self.seconds:.1f}s)")


class _SimplexAudit:
    """Collects simplex-preservation evidence from every acceptance run.

    Renormalization after clamping can shave a relative ~1e-12 off a floored
    coordinate, hence the (1 - 1e-9) slack against each run's own floor.
    """

    def __init__(self):
        self.max_sum_dev = 0.0
        self.floor_ok = True
        self.worst_floor_margin = np.inf
        self.runs = 0

    def add(self, ensemble, floor, x0):
        pos = x0 > 0.0
        arrays = [ensemble.terminal]
        if ensemble.snapshots is not None:
            arrays.append(ensemble.snapshots.reshape(-1, ensemble.terminal.shape[1]))
        for arr in arrays:
            self.max_sum_dev = max(self.max_sum_dev,
                                   float(np.abs(arr.sum(axis=-1) - 1.0).max()))
            if pos.any():
                min_share = float(arr[:, pos].min())
                self.floor_ok &= min_share >= floor * (1 - 1e-9)
                self.worst_floor_margin = min(self.worst_floor_margin,
                                              min_share / floor)
        self.runs += 1


def _pure_noise_ensemble(p, audit):
    game = gm.constant_game([[1.0, 1.0]])
    noise = gm.StrategyNoise([1.0, 1.0])
    field = flds.stochastic_replicator_field(game, noise)
    cfg = IntegratorConfig(dt=1e-3, horizon=p["pn_T"], record_stride=1000)
    x0 = np.array([0.3, 0.7])
    ens = simulate_ensemble(field, x0, cfg, BASE_SEED + 1, p["pn_paths"])
    audit.add(ens, cfg.floor, x0)
    return ens


def _crit_1_2_3(p, audit):
    t0 = time.time()
    ens = _pure_noise_ensemble(p, audit)
    mid = time.time()

    surv = an.survival_probability(ens, 0, threshold=0.5)
    ok1 = abs(surv["estimate"] - 0.30) <= p["pn_tol"]
    r1 = CriterionResult(1, "pure-noise survival ~ x0", ok1,
                         f"fraction={surv['estimate']:.4f}",
                         f"0.30 +- {p['pn_tol']}", mid - t0)

    mart = an.martingale_check(ens, 0, t=10.0)
    ok2 = abs(mart["z"]) < 4.0
    r2 = CriterionResult(2, "martingale mean at t=10", ok2,
                         f"mean={mart['mean']:.4f} z={mart['z']:.2f}",
                         "|z| < 4", 0.0)

    interior = 1.0 - ens.terminal.max(axis=1)
    frac_int = float((interior > 0.01).mean())
    ok3 = frac_int < p["pn_interior"]
    r3 = CriterionResult(3, "pure-noise absorption", ok3,
                         f"interior fraction={frac_int:.4f}",
                         f"< {p['pn_interior']}", time.time() - mid)
    return [r1, r2, r3]


def _crit_4(p, audit):
    t0 = time.time()
    game = gm.constant_game([[1.0, 1.0]])
    noise = gm.StrategyNoise([1.0, 0.1])
    field = flds.aggregate_shocks_field(game, noise)
    cfg = IntegratorConfig(dt=1e-3, horizon=p["agg_T"], record_stride=10000)
    x0 = np.array([0.5, 0.5])
    ens = simulate_ensemble(field, x0, cfg, BASE_SEED + 4, p["agg_paths"])
    audit.add(ens, cfg.floor, x0)
    frac = float((ens.terminal[:, 0] < 1e-3).mean())
    ok = frac >= p["agg_frac"]
    return [CriterionResult(4, "aggregate shocks eliminate noisier", ok,
                            f"eliminated fraction={frac:.4f}",
                            f">= {p['agg_frac']}", time.time() - t0)]


def _crit_5(p, audit):
    t0 = time.time()
    game = gm.constant_game([[1.0, 1.0]])
    x0 = np.array([0.5, 0.5])

    # strong-convergence half: one Brownian path per trial, seen at two step
    # sizes (coarse increments are sums of ten fine ones)
    noise_a = gm.StrategyNoise([1.0, 1.0])
    field_a = flds.exponential_learning_field(game, noise_a)
    sq_f, sq_c, n_f, n_c = 0.0, 0.0, 0, 0
    for path in range(p["exp_conv_paths"]):
        fine = NoiseStream(BASE_SEED + 5, path, 2, 1e-4).increments(0, 50000)
        coarse = coarsen_increments(fine, 10)
        cfg_f = IntegratorConfig(dt=1e-4, horizon=5.0, record_stride=100)
        cfg_c = IntegratorConfig(dt=1e-3, horizon=5.0, record_stride=10)
        tr_f = integrate(field_a, x0, cfg_f, increments=fine)
        tr_c = integrate(field_a, x0, cfg_c, increments=coarse)
        wien = np.vstack([np.zeros(2), np.cumsum(fine, axis=0)])
        exact = pure_noise_closed_form("explearn", x0, noise_a.values,
                                       tr_f.times, wien[::100])
        sq_f += float(((tr_f.states - exact) ** 2).sum())
        n_f += exact.size
        sq_c += float(((tr_c.states - exact) ** 2).sum())
        n_c += exact.size
    rms_f = np.sqrt(sq_f / n_f)
    rms_c = np.sqrt(sq_c / n_c)
    ok_conv = rms_f <= 0.5 * rms_c

    # coexistence half: unequal mild noise, every strategy keeps mass
    noise_b = gm.StrategyNoise([0.2, 0.1])
    field_b = flds.exponential_learning_field(game, noise_b)
    cfg_b = IntegratorConfig(dt=1e-3, horizon=p["exp_T"],
                             record_stride=int(p["exp_T"] / 1e-3))
    ens = simulate_ensemble(field_b, x0, cfg_b, BASE_SEED + 55, p["exp_paths"])
    audit.add(ens, cfg_b.floor, x0)
    both = float((ens.terminal > 1e-3).all(axis=1).mean())
    ok_both = both >= p["exp_frac"]

    return [CriterionResult(
        5, "exp-learning coexistence/convergence", ok_conv and ok_both,
        f"rms ratio={rms_c / rms_f:.2f} coexist={both:.4f}",
        f"ratio >= 2, coexist >= {p['exp_frac']}", time.time() - t0)]


def _crit_6(p, audit):
    t0 = time.time()
    rng = np.random.default_rng(BASE_SEED + 6)
    worst = 0.0
    states_left = p["strat_states"]
    while states_left > 0:
        n = int(rng.integers(2, 5))
        game = gm.constant_game([rng.normal(size=n)])
        noise = gm.StrategyNoise(rng.uniform(0.0, 2.0, size=n))
        f_strat = flds.stratonovich_field(game, noise)
        f_exp = flds.exponential_learning_field(game, noise)
        count = min(20, states_left)
        states = rng.dirichlet(np.ones(n), size=count)
        gap = np.abs(f_strat.drift(states) - f_exp.drift(states)).max()
        worst = max(worst, float(gap))
        states_left -= count
    ok = worst <= 1e-12
    return [CriterionResult(6, "Stratonovich-Ito drift identity", ok,
                            f"max gap={worst:.2e}", "<= 1e-12",
                            time.time() - t0)]


def _crit_7(p, audit):
    t0 = time.time()
    game = gm.constant_game([[0.0, 1.0]])
    noise = gm.StrategyNoise([0.5, 0.5])
    field = flds.stochastic_replicator_field(game, noise)
    cfg = IntegratorConfig(dt=1e-3, horizon=p["ext_T"], record_stride=10000)
    x0 = np.array([0.5, 0.5])
    ens = simulate_ensemble(field, x0, cfg, BASE_SEED + 7, p["ext_paths"])
    audit.add(ens, cfg.floor, x0)
    frac = float((ens.terminal[:, 0] < 1e-4).mean())
    ok = frac >= p["ext_frac"]
    margins = gm.margin_conditions(game, noise)
    cond = margins.extinction_holds(0, 0, 1)
    return [CriterionResult(7, "dominated-strategy extinction", ok and cond,
                            f"extinct fraction={frac:.4f} margin ok={cond}",
                            f">= {p['ext_frac']}", time.time() - t0)]


def _crit_8(p, audit):
    t0 = time.time()
    game = gm.constant_game([[1.0, 0.0]])
    noise = gm.StrategyNoise([0.5, 0.5])
    field = flds.stochastic_replicator_field(game, noise)
    cfg = IntegratorConfig(dt=1e-3, horizon=p["stab_T"], record_stride=10000)
    x0 = np.array([0.99, 0.01])
    target = np.array([1.0, 0.0])
    ens = simulate_ensemble(field, x0, cfg, BASE_SEED + 8, p["stab_paths"],
                            ref_point=target)
    audit.add(ens, cfg.floor, x0)
    est = an.stability_probability(ens, target, radius=0.5, delta_conv=1e-3)
    ok = est.converging_fraction >= p["stab_frac"]
    return [CriterionResult(8, "strict equilibrium attracts", ok,
                            f"converging={est.converging_fraction:.4f} "
                            f"staying={est.staying_fraction:.4f}",
                            f">= {p['stab_frac']}", time.time() - t0)]


def _crit_9(p, audit):
    t0 = time.time()
    game = gm.constant_game([[1.0, 1.3]])
    noise = gm.StrategyNoise([2.0, 2.0])
    field = flds.stochastic_replicator_field(game, noise)
    cfg = IntegratorConfig(dt=1e-3, horizon=p["nonnash_T"], record_stride=10000)
    x0 = np.array([0.99, 0.01])
    target = np.array([1.0, 0.0])
    ens = simulate_ensemble(field, x0, cfg, BASE_SEED + 9, p["nonnash_paths"],
                            ref_point=target)
    audit.add(ens, cfg.floor, x0)
    est = an.stability_probability(ens, target, radius=1.0, delta_conv=1e-3)
    # the vertex is not Nash for the base payoffs, yet the noise margin holds
    margins = gm.margin_conditions(game, noise)
    not_nash = gm.classify_equilibrium(game, target) == gm.Equilibrium.NOT_NASH
    cond = margins.vertex_holds((0,)) and not_nash
    ok = est.converging_fraction >= p["nonnash_frac"]
    return [CriterionResult(9, "high noise stabilizes non-Nash", ok and cond,
                            f"converging={est.converging_fraction:.4f} "
                            f"vertex condition={cond}",
                            f">= {p['nonnash_frac']}", time.time() - t0)]


def _crit_10(p, audit):
    t0 = time.time()
    game = gm.constant_game([[0.0, 1.0]])
    noise = gm.StrategyNoise([1.0, 1.0])
    field = flds.second_order_field(game, noise)
    # floor choice: large enough that x*x stays a normal double (the velocity
    # term squares the shares), small enough that the log ratio never
    # saturates before the -m T^2 / 2 target level
    cfg = IntegratorConfig(dt=1e-3, horizon=p["so_T"], record_stride=20,
                           floor=1e-150)
    x0 = np.array([0.5, 0.5])
    ens = simulate_ensemble(field, x0, cfg, BASE_SEED + 10, p["so_paths"])
    audit.add(ens, cfg.floor, x0)
    start = int(0.1 * ens.times.size)
    t2 = ens.times[start:] ** 2
    t2c = t2 - t2.mean()
    y = np.log(ens.snapshots[:, start:, 0] / ens.snapshots[:, start:, 1])
    slopes = (y - y.mean(axis=1, keepdims=True)) @ t2c / np.sum(t2c * t2c)
    mean_slope = float(slopes.mean())
    lo, hi = p["so_band"]
    ok = lo <= mean_slope <= hi
    return [CriterionResult(10, "cumulative payoffs: quadratic decay", ok,
                            f"mean slope={mean_slope:.4f}",
                            f"in [{lo}, {hi}]", time.time() - t0)]


def _crit_11(p, audit):
    t0 = time.time()
    rep = an.hitting_probability_mc(1.0, 1.0, p["hit_T"], p["hit_paths"],
                                    1e-3, seed=BASE_SEED + 11)
    ok_a = abs(rep["estimate"] - rep["closed_form"]) <= p["hit_tol"]
    rep2 = an.hitting_probability_mc(1.0, -0.5, p["hit2_T"], p["hit2_paths"],
                                     1e-3, seed=BASE_SEED + 111)
    ok_b = rep2["estimate"] >= 0.99
    return [CriterionResult(
        11, "Brownian barrier hitting probability", ok_a and ok_b,
        f"est={rep['estimate']:.4f} (exact {rep['closed_form']:.4f}), "
        f"sure-hit={rep2['estimate']:.4f}",
        f"|err| <= {p['hit_tol']}, sure-hit >= 0.99", time.time() - t0)]


def field_invariant_report(n_states, seed=BASE_SEED + 12):
    """Tangency and vertex-vanishing for all seven first-order fields."""
    rng = np.random.default_rng(seed)
    n = 3
    cgame = gm.constant_game([rng.normal(size=n)])
    mgame = gm.matrix_game(rng.normal(size=(n, n)))
    pnoise = gm.StrategyNoise(rng.uniform(0.1, 1.5, size=n))
    enoise = gm.MatrixEntryNoise(rng.uniform(0.1, 1.5, size=(n, n)))
    eta = rng.uniform(0.1, 1.5, size=(n, n))
    mnoise = gm.MutationNoise(np.triu(eta, 1) + np.triu(eta, 1).T)
    candidates = [
        flds.replicator_field(cgame),
        flds.stochastic_replicator_field(cgame, pnoise),
        flds.aggregate_shocks_field(cgame, pnoise),
        flds.exponential_learning_field(cgame, pnoise),
        flds.stratonovich_field(cgame, pnoise),
        flds.bimatrix_shock_field(mgame, enoise),
        flds.random_mutation_field(cgame, mnoise),
    ]
    states = rng.dirichlet(np.ones(n), size=n_states)
    verts = np.eye(n)
    worst_tan = 0.0
    worst_vertex = 0.0
    for field in candidates:
        drift = field.drift(states)
        worst_tan = max(worst_tan, float(np.abs(drift.sum(axis=-1)).max()))
        for j in range(field.noise_dim):
            basis = np.zeros(field.noise_dim)
            basis[j] = 1.0
            diff = field.diffusion(states, np.broadcast_to(basis,
                                                           (n_states,) + basis.shape))
            worst_tan = max(worst_tan, float(np.abs(diff.sum(axis=-1)).max()))
        vdrift = field.drift(verts)
        worst_vertex = max(worst_vertex, float(np.abs(vdrift).max()))
        for j in range(field.noise_dim):
            basis = np.zeros(field.noise_dim)
            basis[j] = 1.0
            vdiff = field.diffusion(verts, np.broadcast_to(basis,
                                                           (n,) + basis.shape))
            worst_vertex = max(worst_vertex, float(np.abs(vdiff).max()))
    return {
        "fields": len(candidates),
        "states": int(n_states),
        "max_tangency_violation": worst_tan,
        "max_vertex_violation": worst_vertex,
        "tolerance": 1e-12,
        "passed": bool(worst_tan <= 1e-12 and worst_vertex <= 1e-12),
    }


def _crit_12(p, audit):
    t0 = time.time()
    inv = field_invariant_report(p["inv_states"])

    simplex_ok = audit.max_sum_dev <= 1e-12 and audit.floor_ok

    # byte-level reproducibility of a small scenario, run twice
    config = {
        "name": "repro-check", "seed": BASE_SEED + 13,
        "game": {"kind": "constant", "payoffs": [[1.0, 1.0]]},
        "noise": {"kind": "per_strategy", "sigma": [1.0, 1.0]},
        "dynamics": "srd", "x0": [0.4, 0.6],
        "integrator": {"dt": 1e-3, "horizon": 2.0, "record_stride": 200},
        "paths": 50, "save_snapshots": True,
        "analyses": [{"kind": "survival", "strategy": 0, "threshold": 1e-3}],
    }
    with tempfile.TemporaryDirectory() as tmp:
        m1 = run_scenario(dict(config), out_dir=f"{tmp}/a")
        m2 = run_scenario(dict(config), out_dir=f"{tmp}/b")
    data_match = all(m1.files[k]["sha256"] == m2.files[k]["sha256"]
                     for k in m1.files)

    ok = inv["passed"] and simplex_ok and data_match
    return [CriterionResult(
        12, "structural invariants + determinism", ok,
        f"tangency={inv['max_tangency_violation']:.2e} "
        f"vertex={inv['max_vertex_violation']:.2e} "
        f"sum dev={audit.max_sum_dev:.2e} ({audit.runs} runs) "
        f"bytes identical={data_match}",
        "<= 1e-12, identical bytes", time.time() - t0)]


_CRITERIA = [_crit_1_2_3, _crit_4, _crit_5, _crit_6, _crit_7, _crit_8,
             _crit_9, _crit_10, _crit_11, _crit_12]


def run_all(tier="full", echo=None):
    """Run every criterion; returns the list of CriterionResult."""
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    params = TIERS[tier]
    audit = _SimplexAudit()
    results = []
    for fn in _CRITERIA:
        for res in fn(params, audit):
            results.append(res)
            if echo:
                echo(res.line())
    return results
