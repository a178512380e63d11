"""Long-run quantities computed from trajectories and ensembles:
extinction, survival and stability probabilities, divergence traces,
log-ratio decay fits, and barrier hitting probabilities.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import backend as backend_mod
from .errors import DomainError

Z95 = 1.959963984540054


def wilson_interval(successes, total, z=Z95):
    """Wilson 95% score interval for a binomial fraction."""
    if total <= 0:
        raise DomainError("need at least one trial")
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / total
                                   + z * z / (4 * total * total))
    return center - half, center + half


def kl_divergence(p, x):
    """sum_a p_a log(p_a / x_a); +inf when supp(p) is not inside supp(x)."""
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.any(p < 0) or np.any(x < 0):
        raise DomainError("distributions must be nonnegative")
    sup = p > 0.0
    if np.any(x[sup] == 0.0):
        return float("inf")
    return float(np.sum(p[sup] * np.log(p[sup] / x[sup])))


def cross_entropy_gap(p, p_prime, x):
    """KL(p, x) - KL(p', x): the decay functional for dominance analyses."""
    return kl_divergence(p, x) - kl_divergence(p_prime, x)


@dataclass
class ExtinctionReport:
    extinct: bool
    threshold: float
    terminal_min_share: float
    first_crossing_time: float  # nan if never below threshold
    support: np.ndarray

    def to_dict(self):
        return {
            "extinct": bool(self.extinct),
            "threshold": self.threshold,
            "terminal_min_share": self.terminal_min_share,
            "first_crossing_time": self.first_crossing_time,
            "support": self.support.tolist(),
        }


def detect_extinction(traj, strategy, threshold=1e-4, population=0,
                      offsets=None):
    """Terminal-threshold extinction of a pure or mixed strategy.

    `strategy` is a strategy index or a MixedStrategy; for mixed strategies
    the tracked quantity is the minimum share over the support.
    """
    states = traj.states
    if offsets is None:
        offsets = (0, states.shape[1])
    sl = slice(offsets[population], offsets[population + 1])
    block = states[:, sl]
    if hasattr(strategy, "support"):
        support = strategy.support()
    else:
        support = np.array([int(strategy)])
    track = block[:, support].min(axis=1)
    below = track < threshold
    first = float(traj.times[np.argmax(below)]) if below.any() else float("nan")
    return ExtinctionReport(
        extinct=bool(track[-1] < threshold),
        threshold=threshold,
        terminal_min_share=float(track[-1]),
        first_crossing_time=first,
        support=support,
    )


def survival_probability(ensemble, strategy, threshold=1e-4, population=0,
                         offsets=None):
    """Fraction of paths whose terminal share stays at or above the threshold."""
    terminal = ensemble.terminal
    if offsets is None:
        offsets = (0, terminal.shape[1])
    col = offsets[population] + int(strategy)
    survived = int((terminal[:, col] >= threshold).sum())
    n = terminal.shape[0]
    lo, hi = wilson_interval(survived, n)
    return {
        "strategy": int(strategy),
        "population": population,
        "threshold": threshold,
        "survived": survived,
        "n_paths": n,
        "estimate": survived / n,
        "ci95": [lo, hi],
    }


def extinction_fraction(ensemble, strategy, threshold=1e-4, population=0,
                        offsets=None):
    report = survival_probability(ensemble, strategy, threshold, population,
                                  offsets)
    return 1.0 - report["estimate"]


def martingale_check(ensemble, strategy, t, population=0, offsets=None):
    """z-score of the sample mean share at time t against the initial share.

    Deviations below float precision (1e-13 on the unit share scale) count as
    zero: with no noise the paths are bit-identical and the residual mean
    offset is summation rounding, not statistical evidence.
    """
    snap = ensemble.snapshot_at(t)
    if offsets is None:
        offsets = (0, snap.shape[1])
    col = offsets[population] + int(strategy)
    vals = snap[:, col]
    x0 = ensemble.x0[col]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    diff = mean - x0
    if abs(diff) < 1e-13:
        z = 0.0
    elif se == 0.0:
        z = math.inf
    else:
        z = diff / se
    return {
        "strategy": int(strategy),
        "t": float(t),
        "mean": mean,
        "start": float(x0),
        "standard_error": se,
        "z": float(z),
        "n_paths": int(vals.size),
    }


def hitting_probability_closed_form(a, b):
    """P(W(t) ever meets a + b t) = exp(-ab - |ab|)."""
    ab = a * b
    return math.exp(-ab - abs(ab))


def hitting_probability_mc(a, b, horizon, n_paths, dt, seed=0, path0=0,
                           backend=None):
    """Monte Carlo estimate of the finite-horizon crossing probability.

    Detects crossings by the sign change of W - (a + bt) between steps (the
    discrepancy is linear within a step, so this is the linear-interpolation
    criterion); the estimate is a lower bound on the infinite-horizon
    probability.  The bridge-corrected estimate quantifies the crossing mass
    the discrete grid cannot see, and is reported as the discretization bias.
    """
    if n_paths < 1:
        raise DomainError("need at least one path")
    impl, _ = backend_mod.resolve(backend)
    n_steps = max(1, int(round(horizon / dt)))
    out = impl.run_hitting(float(a), float(b), float(dt), n_steps, seed,
                           path0, n_paths)
    hits = int(out["hit"].sum())
    lo, hi = wilson_interval(hits, n_paths)
    estimate = hits / n_paths
    # P(missed crossing) per surviving path is 1 - exp(log_surv)
    surv = ~out["hit"]
    bridge_extra = float(np.sum(1.0 - np.exp(out["log_surv"][surv])))
    corrected = (hits + bridge_extra) / n_paths
    return {
        "a": float(a),
        "b": float(b),
        "horizon": float(horizon),
        "dt": float(dt),
        "n_paths": int(n_paths),
        "hits": hits,
        "estimate": estimate,
        "ci95": [lo, hi],
        "discretization_bias": corrected - estimate,
        "bridge_corrected_estimate": corrected,
        "closed_form": hitting_probability_closed_form(a, b),
        "mean_hit_time": float(np.mean(out["t_hit"][out["hit"]]))
        if hits else float("nan"),
    }


def quadratic_decay_fit(traj, strategy_a, strategy_b, burn_in=0.1,
                        population=0, offsets=None):
    """Least-squares slope of log(x_a / x_b) against t^2.

    Drops the first `burn_in` fraction of samples (the decay law is
    asymptotic; the early transient contaminates the slope).
    """
    states = traj.states
    if offsets is None:
        offsets = (0, states.shape[1])
    base = offsets[population]
    xa = states[:, base + int(strategy_a)]
    xb = states[:, base + int(strategy_b)]
    start = int(burn_in * len(traj.times))
    t2 = traj.times[start:] ** 2
    y = np.log(xa[start:] / xb[start:])
    if t2.size < 2 or np.ptp(t2) == 0.0:
        raise DomainError("degenerate fitting window")
    t2c = t2 - t2.mean()
    slope = float(np.sum(t2c * (y - y.mean())) / np.sum(t2c * t2c))
    return slope


@dataclass
class StabilityEstimate:
    target: np.ndarray
    radius: float
    delta_conv: float
    staying_fraction: float
    converging_fraction: float
    ci95: tuple
    n_paths: int

    def to_dict(self):
        return {
            "target": self.target.tolist(),
            "radius": self.radius,
            "delta_conv": self.delta_conv,
            "staying_fraction": self.staying_fraction,
            "converging_fraction": self.converging_fraction,
            "ci95": list(self.ci95),
            "n_paths": self.n_paths,
        }


def stability_probability(ensemble, target, radius, delta_conv):
    """Fractions of paths that never leave the sup-norm ball around `target`
    and that additionally end within `delta_conv` of it.

    Uses the exact running deviation tracked during integration when the
    ensemble was run with `ref_point=target`; otherwise falls back to the
    recorded snapshots.
    """
    target = np.asarray(target, dtype=np.float64)
    terminal_dev = np.abs(ensemble.terminal - target).max(axis=1)
    if ensemble.max_dev is not None and ensemble.ref_point is not None \
            and np.array_equal(ensemble.ref_point, target):
        path_dev = ensemble.max_dev
    elif ensemble.snapshots is not None:
        path_dev = np.abs(ensemble.snapshots - target).max(axis=(1, 2))
    else:
        raise DomainError("need ref_point tracking or snapshots for stability")
    stayed = path_dev <= radius
    converged = stayed & (terminal_dev < delta_conv)
    n = ensemble.n_paths
    lo, hi = wilson_interval(int(converged.sum()), n)
    return StabilityEstimate(
        target=target,
        radius=float(radius),
        delta_conv=float(delta_conv),
        staying_fraction=float(stayed.mean()),
        converging_fraction=float(converged.mean()),
        ci95=(lo, hi),
        n_paths=n,
    )
