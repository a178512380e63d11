"""Pure-numpy backend for the hot loops.

This is the reference implementation of the compiled kernels in _kernels.pyx:
identical update formulas in identical order, so both backends produce the
same bits for the same (seed, path, step) addressing (exactly for up to 7
strategies, where numpy's small-axis reductions are sequential like the C
loops; beyond that numpy's pairwise summation may differ in the last ulp).

Paths are advanced in lockstep (vectorized across the path axis) and normals
are generated in step chunks from each path's own Philox stream, so results
do not depend on chunk size or scheduling.
"""

import numpy as np

from .rng import block_normals

BACKEND_NAME = "python"

_CHUNK_TARGET = 4_000_000  # normals per chunk across all paths


def _chunk_steps(n_paths, m, n_steps):
    if m == 0:
        return n_steps
    return max(1, min(n_steps, _CHUNK_TARGET // max(1, n_paths * m)))


def run_first_order(model, v, V, sigma, x0, dt, n_steps, floor, seed, path0,
                    n_paths, rec_steps, want_snapshots, ref=None):
    """Euler-Maruyama over the share simplex for the per-strategy-noise models.

    model: 0 replicator, 1 direct shocks, 2 aggregate shocks, 3 exp. learning.
    Exactly one of v (constant payoffs) / V (matrix payoffs) is given.
    Returns terminal states, optional snapshots on `rec_steps`, per-path floor
    activation logs, max |drift| seen, and max sup-distance to `ref`.
    """
    n = x0.size
    m = 0 if model == 0 else n
    sqdt = np.sqrt(dt)
    sig = np.asarray(sigma, dtype=np.float64)
    sig2 = sig * sig
    pos_mask = x0 > 0.0

    x = np.broadcast_to(x0, (n_paths, n)).copy()
    terminal = np.empty((n_paths, n))
    snapshots = np.empty((n_paths, rec_steps.size, n)) if want_snapshots else None
    floor_count = np.zeros((n_paths, n), dtype=np.int64)
    floor_first = np.full((n_paths, n), -1, dtype=np.int64)
    max_drift = np.zeros(n_paths)
    max_dev = np.zeros(n_paths) if ref is not None else None

    rec_ptr = 0
    if want_snapshots and rec_steps[0] == 0:
        snapshots[:, 0] = x
        rec_ptr = 1
    if ref is not None:
        np.maximum(max_dev, np.abs(x - ref).max(axis=-1), out=max_dev)

    paths = np.arange(path0, path0 + n_paths, dtype=np.uint64)
    chunk = _chunk_steps(n_paths, m, n_steps)
    step = 0
    while step < n_steps:
        this = min(chunk, n_steps - step)
        if m:
            z = block_normals(seed, paths, step * m, this * m)
            z = z.reshape(n_paths, this, m)
        for i in range(this):
            if V is not None:
                vv = (V * x[:, None, :]).sum(axis=-1)
            else:
                vv = np.broadcast_to(v, x.shape)
            vbar = (x * vv).sum(axis=-1, keepdims=True)
            d = x * (vv - vbar)
            if model == 2:
                qsum = (sig2 * x * x).sum(axis=-1, keepdims=True)
                d = d + (-(x * (sig2 * x - qsum)))
            elif model == 3:
                bsum = (sig2 * x * (1.0 - 2.0 * x)).sum(axis=-1, keepdims=True)
                d = d + 0.5 * x * (sig2 * (1.0 - 2.0 * x) - bsum)
            if m:
                dw = sqdt * z[:, i]
                mix = (x * sig * dw).sum(axis=-1, keepdims=True)
                xn = x + d * dt + x * (sig * dw - mix)
            else:
                xn = x + d * dt
            low = (xn < floor) & pos_mask
            if low.any():
                hit_first = low & (floor_first < 0)
                floor_first[hit_first] = step + i + 1
                floor_count += low
                xn = np.where(low, floor, xn)
            xn = np.where(xn > 1.0, 1.0, xn)
            x = xn / xn.sum(axis=-1, keepdims=True)
            np.maximum(max_drift, np.abs(d).max(axis=-1), out=max_drift)
            if ref is not None:
                np.maximum(max_dev, np.abs(x - ref).max(axis=-1), out=max_dev)
            done = step + i + 1
            if rec_ptr < rec_steps.size and done == rec_steps[rec_ptr]:
                if want_snapshots:
                    snapshots[:, rec_ptr] = x
                rec_ptr += 1
        step += this
        if not np.all(np.isfinite(x)):
            bad = int(np.argmin(np.isfinite(x).all(axis=-1)))
            raise FloatingPointError(
                f"nonfinite state in path {path0 + bad} by step {step}")

    terminal[:] = x
    return {
        "terminal": terminal,
        "snapshots": snapshots,
        "floor_count": floor_count,
        "floor_first": floor_first,
        "max_drift": max_drift,
        "max_dev": max_dev,
    }


def run_hitting(a, b, dt, n_steps, seed, path0, n_paths):
    """First crossing of the moving level a + b t by a standard Wiener path.

    Crossing is declared on a sign change of W(t) - (a + bt) between steps
    (the discrepancy is linear on each step, so interpolation and sign change
    agree); the crossing time is linearly interpolated.  For steps without a
    sign change the log-probability that the bridge still crossed is
    accumulated, which measures the detection bias of the discretization.
    """
    sqdt = np.sqrt(dt)
    hit = np.zeros(n_paths, dtype=bool)
    t_hit = np.full(n_paths, np.inf)
    log_surv = np.zeros(n_paths)

    if a == 0.0:
        return {"hit": np.ones(n_paths, dtype=bool),
                "t_hit": np.zeros(n_paths),
                "log_surv": np.full(n_paths, -np.inf)}

    paths = np.arange(path0, path0 + n_paths, dtype=np.uint64)
    w = np.zeros(n_paths)
    d_prev = np.full(n_paths, -a)
    alive = np.arange(n_paths)

    chunk = _chunk_steps(n_paths, 1, n_steps)
    step = 0
    while step < n_steps and alive.size:
        this = min(chunk, n_steps - step)
        z = block_normals(seed, paths[alive], step, this)
        for i in range(this):
            k = step + i + 1
            w[alive] = w[alive] + sqdt * z[:, i]
            d = w[alive] - (a + b * (dt * k))
            dp = d_prev[alive]
            crossed = (d == 0.0) | (np.sign(d) != np.sign(dp))
            if crossed.any():
                idx = alive[crossed]
                frac = dp[crossed] / (dp[crossed] - d[crossed])
                t_hit[idx] = dt * (k - 1) + dt * frac
                hit[idx] = True
                log_surv[idx] = -np.inf
            keep = ~crossed
            expo = 2.0 * dp[keep] * d[keep] / dt
            small = expo < 37.0
            if small.any():
                sub = alive[keep][small]
                log_surv[sub] += np.log1p(-np.exp(-expo[small]))
            d_prev[alive[keep]] = d[keep]
            if crossed.any():
                alive = alive[keep]
                z = z[keep]
            if not alive.size:
                break
        step += this
    return {"hit": hit, "t_hit": t_hit, "log_surv": log_surv}
