"""Euler-Maruyama integration on products of simplices.

Stepping follows x <- x + drift dt + diffusion(dW), then clamps positive
coordinates to [floor, 1] and renormalizes each population block (coordinates
that start exactly at zero stay at zero: boundary faces are invariant for
every model here).  All noise comes from the per-path counter-based streams in
`rng`, so a path's increments depend only on (seed, path index, step,
coordinate) and ensembles reproduce bit-identically in any execution order.

Kernel-eligible runs (single population, constant coefficients, share-space
scheme) are dispatched to the compiled backend when it is available; the
numpy backend computes the same update in the same order.
"""

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import backend as backend_mod
from .errors import DomainError, NumericsError, UnsupportedError
from .fields import log_share_field, pure_noise_closed_form
from .games import validate_state
from .rng import NoiseStream, block_normals

DRIFT_DT_WARN = 0.1


@dataclass
class IntegratorConfig:
    dt: float
    horizon: float
    floor: float = 1e-12
    scheme: str = "x"          # "x" | "log_y" (log_y applies to srd only)
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DomainError("dt must be positive")
        if self.horizon < self.dt:
            raise DomainError("horizon must be at least one step")
        if self.scheme not in ("x", "log_y"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.record_stride < 1:
            raise DomainError("record_stride must be >= 1")

    @property
    def n_steps(self):
        return max(1, int(round(self.horizon / self.dt)))

    def validate_floor(self, max_strategies):
        if not 0.0 < self.floor < 1.0 / max_strategies:
            raise DomainError("floor must be in (0, 1/max strategy count)")


def record_grid(n_steps, stride):
    steps = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray                 # shares, shape (n_rec, dim)
    seed: int
    path: int
    kind: str
    dt: float
    floor_count: np.ndarray            # per coordinate
    floor_first: np.ndarray            # first flooring step, -1 if never
    max_drift: float
    labels: list
    velocities: np.ndarray = None      # second-order only
    cum_payoffs: np.ndarray = None
    cum_noise: np.ndarray = None

    def to_csv(self, path):
        cols = ["t"] + [f"x_{s}" for s in self.labels]
        blocks = [self.times[:, None], self.states]
        if self.velocities is not None:
            cols += [f"v_{s}" for s in self.labels]
            cols += [f"u_{s}" for s in self.labels]
            cols += [f"s_{s}" for s in self.labels]
            blocks += [self.velocities, self.cum_payoffs, self.cum_noise]
        data = np.hstack(blocks)
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass
class EnsembleResult:
    times: np.ndarray                  # snapshot times
    terminal: np.ndarray               # (n_paths, dim) shares
    snapshots: np.ndarray              # (n_paths, n_rec, dim) or None
    seed: int
    path0: int
    n_paths: int
    kind: str
    dt: float
    horizon: float
    x0: np.ndarray
    floor_count: np.ndarray
    floor_first: np.ndarray
    max_drift: float
    labels: list
    max_dev: np.ndarray = None         # sup-norm distance to ref point, per path
    ref_point: np.ndarray = None
    terminal_velocity: np.ndarray = None

    def snapshot_at(self, t):
        if self.snapshots is None or self.times is None:
            raise DomainError("snapshots were not recorded for this ensemble")
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 + 1e-9 * abs(t):
            raise DomainError(f"time {t} not on the snapshot grid")
        return self.snapshots[:, idx, :]

    def summary(self):
        return {
            "n_paths": int(self.n_paths),
            "seed": int(self.seed),
            "kind": self.kind,
            "terminal_mean": self.terminal.mean(axis=0).tolist(),
            "terminal_std": self.terminal.std(axis=0).tolist(),
            "floor_activations": int(self.floor_count.sum()),
        }


def _warn_drift(max_drift, dt):
    if max_drift * dt > DRIFT_DT_WARN:
        warnings.warn(
            f"max |drift| * dt = {max_drift * dt:.3g} exceeds {DRIFT_DT_WARN}; "
            "the explicit scheme may be unstable at this step size",
            RuntimeWarning, stacklevel=3)


def _kernel_eligible(field, cfg, increments):
    return (field.fast is not None and cfg.scheme == "x" and increments is None)


def _generic_run(field, x0, cfg, seed, path0, n_paths, want_snapshots, ref,
                 increments):
    """Vectorized-across-paths stepping through the field callables."""
    game = field.game
    offsets = field.offsets
    n = game.dim
    m = field.noise_dim
    n_steps = cfg.n_steps
    dt, sqdt, floor = cfg.dt, np.sqrt(cfg.dt), cfg.floor
    second = field.state_kind == "second_order"
    logc = field.state_kind == "log"

    if field.requires_interior and np.any(x0 <= 0.0):
        raise DomainError(f"{field.kind} dynamics need an interior start")

    if logc:
        state = np.broadcast_to(np.log(x0), (n_paths, n)).copy()
    elif second:
        state = np.zeros((n_paths, 2 * n))
        state[:, :n] = x0
    else:
        state = np.broadcast_to(x0, (n_paths, n)).copy()

    rec_steps = record_grid(n_steps, cfg.record_stride)
    times = rec_steps * dt
    snaps = np.empty((n_paths, rec_steps.size, n)) if want_snapshots else None
    vel = np.empty((n_paths, rec_steps.size, n)) if (want_snapshots and second) else None
    cum_u = np.empty_like(vel) if vel is not None else None
    cum_s = np.empty_like(vel) if vel is not None else None
    u_acc = np.zeros((n_paths, n)) if second else None
    s_acc = np.zeros((n_paths, n)) if second else None

    floor_count = np.zeros((n_paths, n), dtype=np.int64)
    floor_first = np.full((n_paths, n), -1, dtype=np.int64)
    max_drift = np.zeros(n_paths)
    max_dev = np.zeros(n_paths) if ref is not None else None
    pos_mask = x0 > 0.0

    def shares(st):
        if logc:
            return field.to_shares(st)
        if second:
            return st[:, :n]
        return st

    rec_ptr = 0
    if rec_steps[0] == 0:
        if want_snapshots:
            snaps[:, 0] = shares(state)
            if second:
                vel[:, 0] = state[:, n:]
                cum_u[:, 0] = u_acc
                cum_s[:, 0] = s_acc
        rec_ptr = 1
    if ref is not None:
        np.maximum(max_dev, np.abs(shares(state) - ref).max(axis=-1), out=max_dev)

    paths = np.arange(path0, path0 + n_paths, dtype=np.uint64)
    chunk = n_steps if m == 0 else max(
        1, min(n_steps, 4_000_000 // max(1, n_paths * m)))
    step = 0
    while step < n_steps:
        this = min(chunk, n_steps - step)
        state_before_chunk = state.copy()
        if m and increments is None:
            z = block_normals(seed, paths, step * m, this * m)
            dws = sqdt * z.reshape(n_paths, this, m)
        for i in range(this):
            if m:
                if increments is not None:
                    dw = np.broadcast_to(increments[step + i], (n_paths, m))
                else:
                    dw = dws[:, i]
            d = field.drift(state)
            if m:
                new = state + d * dt + field.diffusion(state, dw)
            else:
                new = state + d * dt
            if second:
                xs_old = state[:, :n]
                u_acc = u_acc + game.payoffs(xs_old) * dt
                s_acc = s_acc + field.noise.intensities(xs_old) * dw
            if not logc:
                xs = new[:, :n] if second else new
                low = (xs < floor) & pos_mask
                if low.any():
                    hit_first = low & (floor_first < 0)
                    floor_first[hit_first] = step + i + 1
                    floor_count += low
                    xs = np.where(low, floor, xs)
                xs = np.where(xs > 1.0, 1.0, xs)
                for k in range(len(offsets) - 1):
                    sl = slice(offsets[k], offsets[k + 1])
                    xs[:, sl] = xs[:, sl] / xs[:, sl].sum(axis=-1, keepdims=True)
                if second:
                    new[:, :n] = xs
                else:
                    new = xs
            state = new
            np.maximum(max_drift, np.abs(d).max(axis=-1), out=max_drift)
            if ref is not None:
                np.maximum(max_dev, np.abs(shares(state) - ref).max(axis=-1),
                           out=max_dev)
            done = step + i + 1
            if rec_ptr < rec_steps.size and done == rec_steps[rec_ptr]:
                if want_snapshots:
                    snaps[:, rec_ptr] = shares(state)
                    if second:
                        vel[:, rec_ptr] = state[:, n:]
                        cum_u[:, rec_ptr] = u_acc
                        cum_s[:, rec_ptr] = s_acc
                rec_ptr += 1
        step += this
        if not np.all(np.isfinite(state)):
            bad = int(np.argmin(np.isfinite(state).all(axis=-1)))
            last = shares(state_before_chunk)[bad]
            raise NumericsError(
                f"nonfinite state in path {path0 + bad} by step {step} "
                f"(last finite checkpoint at step {step - this})",
                step=step, last_state=last)

    return {
        "times": times,
        "terminal": shares(state).copy(),
        "snapshots": snaps,
        "floor_count": floor_count,
        "floor_first": floor_first,
        "max_drift": max_drift,
        "max_dev": max_dev,
        "velocity": vel,
        "cum_payoff": cum_u,
        "cum_noise": cum_s,
        "terminal_velocity": state[:, n:].copy() if second else None,
    }


def _resolve_field(field, cfg):
    if cfg.scheme == "log_y":
        if field.kind != "srd":
            raise UnsupportedError("the log-coordinate scheme applies to the "
                                   "direct-shock (srd) dynamics only")
        return log_share_field(field.game, field.noise)
    return field


def _run(field, x0, cfg, seed, path0, n_paths, want_snapshots, ref, increments,
         backend):
    x0 = validate_state(field.game, np.asarray(x0, dtype=np.float64))
    cfg.validate_floor(max(field.game.sizes))
    field = _resolve_field(field, cfg)
    impl, name = backend_mod.resolve(backend)
    if increments is not None:
        increments = np.asarray(increments, dtype=np.float64)
        if increments.shape != (cfg.n_steps, field.noise_dim):
            raise DomainError(
                f"increments must have shape {(cfg.n_steps, field.noise_dim)}")
    if _kernel_eligible(field, cfg, increments):
        spec = field.fast
        rec_steps = record_grid(cfg.n_steps, cfg.record_stride)
        out = impl.run_first_order(
            spec["model"], spec["v"], spec["V"], spec["sigma"], x0,
            cfg.dt, cfg.n_steps, cfg.floor, seed, path0, n_paths,
            rec_steps, want_snapshots, ref)
        out["times"] = rec_steps * cfg.dt
        out["velocity"] = out["cum_payoff"] = out["cum_noise"] = None
        out["terminal_velocity"] = None
    else:
        out = _generic_run(field, x0, cfg, seed, path0, n_paths,
                           want_snapshots, ref, increments)
    _warn_drift(float(out["max_drift"].max()), cfg.dt)
    return out


def integrate(field, x0, cfg, seed=0, path=0, increments=None, backend=None):
    """One trajectory; noise is stream (seed, path)."""
    out = _run(field, x0, cfg, seed, path, 1, True, None, increments, backend)
    return Trajectory(
        times=out["times"],
        states=out["snapshots"][0],
        seed=seed, path=path, kind=field.kind, dt=cfg.dt,
        floor_count=out["floor_count"][0],
        floor_first=out["floor_first"][0],
        max_drift=float(out["max_drift"][0]),
        labels=field.game.coordinate_labels(),
        velocities=None if out["velocity"] is None else out["velocity"][0],
        cum_payoffs=None if out["cum_payoff"] is None else out["cum_payoff"][0],
        cum_noise=None if out["cum_noise"] is None else out["cum_noise"][0],
    )


def simulate_ensemble(field, x0, cfg, seed, n_paths, path0=0, ref_point=None,
                      keep_snapshots=True, backend=None):
    """Independent paths path0 .. path0+n_paths-1 of the (seed, *) streams."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    ref = None if ref_point is None else np.asarray(ref_point, dtype=np.float64)
    out = _run(field, x0, cfg, seed, path0, n_paths, keep_snapshots, ref, None,
               backend)
    return EnsembleResult(
        times=out["times"],
        terminal=out["terminal"],
        snapshots=out["snapshots"],
        seed=seed, path0=path0, n_paths=n_paths, kind=field.kind,
        dt=cfg.dt, horizon=cfg.horizon,
        x0=np.asarray(x0, dtype=np.float64),
        floor_count=out["floor_count"],
        floor_first=out["floor_first"],
        max_drift=float(out["max_drift"].max()),
        labels=field.game.coordinate_labels(),
        max_dev=out["max_dev"],
        ref_point=ref,
        terminal_velocity=out["terminal_velocity"],
    )


def integrate_pathwise_vs_closed_form(model, game, noise, x0, cfg, seed=0,
                                      path=0, backend=None):
    """Integrate a comparison model and evaluate its exact solution on the
    same Wiener path; returns the pathwise deviation on the recording grid.

    Only defined in the pure-noise regime: constant payoffs, equal within
    each population, and constant intensities.
    """
    from .fields import field_for

    if game.payoff.kind != "constant":
        raise DomainError("closed forms need constant payoffs")
    for k, block in enumerate(game.blocks(game.payoff.flat)):
        if np.ptp(block) != 0.0:
            raise DomainError(f"population {k} payoffs are not all equal")
    if not noise.constant:
        raise DomainError("closed forms need constant intensities")
    if model not in ("aggregate", "explearn"):
        raise DomainError(f"no closed form for model {model!r}")

    fld = field_for(model, game, noise)
    traj = integrate(fld, x0, cfg, seed=seed, path=path, backend=backend)
    stream = NoiseStream(seed, path, fld.noise_dim, cfg.dt)
    wiener = stream.wiener(cfg.n_steps)
    rec = record_grid(cfg.n_steps, cfg.record_stride)
    exact = pure_noise_closed_form(model, x0, noise.values, traj.times,
                                   wiener[rec])
    dev = np.abs(traj.states - exact)
    return {
        "max_dev": float(dev.max()),
        "rms_dev": float(np.sqrt(np.mean(dev * dev))),
        "times": traj.times,
        "numeric": traj.states,
        "exact": exact,
    }


def integrate_second_order_integral_form(game, noise, x0, cfg, seed=0, path=0,
                                         increments=None):
    """Step the cumulative-payoff dynamics in their integral form.

    State is (shares, running payoff integral, running noise integral, running
    share-weighted noise integral); the share velocity is recomputed from the
    integrals each step.  Used to cross-check the autonomous position-velocity
    system driven by the same increments.
    """
    x0 = validate_state(game, np.asarray(x0, dtype=np.float64), interior=True)
    n = game.dim
    offsets = game.offsets
    dt, sqdt = cfg.dt, np.sqrt(cfg.dt)
    n_steps = cfg.n_steps
    if increments is None:
        increments = NoiseStream(seed, path, n, dt).increments(0, n_steps)

    x = x0.copy()
    u = np.zeros(n)
    s = np.zeros(n)
    rsum = np.zeros(n)   # per-population running sum, broadcast per block
    rec_steps = record_grid(n_steps, cfg.record_stride)
    states = np.empty((rec_steps.size, n))
    vels = np.zeros((rec_steps.size, n))
    rec_ptr = 0
    if rec_steps[0] == 0:
        states[0] = x
        rec_ptr = 1

    def block_sum(vals):
        out = np.empty_like(vals)
        for k in range(len(offsets) - 1):
            sl = slice(offsets[k], offsets[k + 1])
            out[sl] = vals[sl].sum()
        return out

    for k in range(n_steps):
        dw = increments[k]
        sig = noise.intensities(x)
        xdot = x * ((u + s) - (block_sum(x * u) + rsum))
        xn = x + xdot * dt
        u = u + game.payoffs(x) * dt
        s = s + sig * dw
        rsum = rsum + block_sum(x * sig * dw)
        low = xn < cfg.floor
        xn = np.where(low & (x0 > 0), cfg.floor, xn)
        xn = np.where(xn > 1.0, 1.0, xn)
        for kk in range(len(offsets) - 1):
            sl = slice(offsets[kk], offsets[kk + 1])
            xn[sl] = xn[sl] / xn[sl].sum()
        x = xn
        if rec_ptr < rec_steps.size and k + 1 == rec_steps[rec_ptr]:
            states[rec_ptr] = x
            vels[rec_ptr] = xdot
            rec_ptr += 1

    return Trajectory(
        times=rec_steps * dt, states=states, seed=seed, path=path,
        kind="second_order_integral", dt=dt,
        floor_count=np.zeros(n, dtype=np.int64),
        floor_first=np.full(n, -1, dtype=np.int64),
        max_drift=0.0, labels=game.coordinate_labels(), velocities=vels)
