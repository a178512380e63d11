"""Drift and diffusion maps for every dynamic in the family.

A `DynamicsField` bundles a drift function and a diffusion map over flat
(batched) states, plus the noise-coordinate layout the engine must feed it.
First-order fields act on share vectors; the log-share field acts on
log-coordinates; the second-order field acts on stacked (shares, velocities).

Noise layouts:
  * per-strategy models: one Wiener coordinate per (population, strategy);
  * matrix-entry shocks: one coordinate per payoff-matrix entry, row-major;
  * random mutations: one coordinate per unordered strategy pair (lexicographic
    within each population), oriented so +w is the net influx into the
    lower-indexed strategy.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, KindError, ShapeError, UnsupportedError
from .games import require_kind

MODEL_CODES = {"rd": 0, "srd": 1, "aggregate": 2, "explearn": 3}


@dataclass
class DynamicsField:
    kind: str
    game: object
    noise: object
    state_dim: int
    noise_dim: int
    offsets: tuple
    drift: callable
    diffusion: callable
    requires_interior: bool = False
    state_kind: str = "x"            # "x" | "log" | "second_order"
    to_shares: callable = None       # log-coordinates -> shares
    fast: dict = None                # compiled-kernel dispatch descriptor


def _block_sum(values, offsets, like=None):
    """Per-population sums of `values`, broadcast back to full width."""
    out = np.empty_like(values if like is None else like)
    for k in range(len(offsets) - 1):
        sl = slice(offsets[k], offsets[k + 1])
        out[..., sl] = values[..., sl].sum(axis=-1, keepdims=True)
    return out


def _replicator_drift(game, x):
    v = game.payoffs(x)
    vbar = _block_sum(x * v, game.offsets)
    return x * (v - vbar)


def _srd_diffusion(game, noise):
    offsets = game.offsets

    def diffusion(x, dw):
        sig = noise.intensities(x)
        mix = _block_sum(x * sig * dw, offsets)
        return x * (sig * dw - mix)

    return diffusion


def _fast_spec(model, game, noise):
    """Compiled-kernel descriptor, or None when the kernel cannot take this."""
    if game.n_pops != 1:
        return None
    if model != "rd" and not noise.constant:
        return None
    spec = {"model": MODEL_CODES[model], "n": game.dim}
    if game.payoff.kind == "constant":
        spec["v"] = game.payoff.flat
        spec["V"] = None
    elif game.payoff.kind == "matrix":
        spec["v"] = None
        spec["V"] = game.payoff.matrix
    else:
        return None
    spec["sigma"] = (np.zeros(game.dim) if model == "rd"
                     else np.ascontiguousarray(noise.values))
    return spec


def replicator_field(game):
    """Deterministic imitation-of-success dynamics (share-weighted payoff excess)."""

    def drift(x):
        return _replicator_drift(game, np.asarray(x, dtype=np.float64))

    def diffusion(x, dw):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    from .games import StrategyNoise
    silent = StrategyNoise(np.zeros(game.dim))
    return DynamicsField("rd", game, silent, game.dim, 0, game.offsets,
                         drift, diffusion, fast=_fast_spec("rd", game, silent))


def stochastic_replicator_field(game, noise):
    """Direct payoff shocks on the imitation dynamics: replicator drift,
    share-weighted shock bracket, no drift correction."""
    require_kind(noise, "per_strategy")

    def drift(x):
        return _replicator_drift(game, np.asarray(x, dtype=np.float64))

    return DynamicsField("srd", game, noise, game.dim, game.dim, game.offsets,
                         drift, _srd_diffusion(game, noise),
                         fast=_fast_spec("srd", game, noise))


def aggregate_shocks_field(game, noise):
    """Shocks on geometric population growth; carries the share-space drift
    correction -x_a (sigma_a^2 x_a - sum_b sigma_b^2 x_b^2)."""
    require_kind(noise, "per_strategy")
    if not noise.constant:
        raise UnsupportedError("aggregate-shocks dynamics need constant intensities")
    sig2 = noise.values * noise.values
    offsets = game.offsets

    def drift(x):
        x = np.asarray(x, dtype=np.float64)
        base = _replicator_drift(game, x)
        qsum = _block_sum(sig2 * x * x, offsets)
        return base + (-(x * (sig2 * x - qsum)))

    return DynamicsField("aggregate", game, noise, game.dim, game.dim,
                         game.offsets, drift, _srd_diffusion(game, noise),
                         fast=_fast_spec("aggregate", game, noise))


def exponential_learning_field(game, noise):
    """Shocks on cumulative-payoff scores pushed through the logit map; carries
    the correction x_a/2 [sigma_a^2 (1-2x_a) - sum_b sigma_b^2 x_b (1-2x_b)]."""
    require_kind(noise, "per_strategy")
    if not noise.constant:
        raise UnsupportedError(
            "exponential-learning dynamics need constant intensities")
    sig2 = noise.values * noise.values
    offsets = game.offsets

    def drift(x):
        x = np.asarray(x, dtype=np.float64)
        base = _replicator_drift(game, x)
        bsum = _block_sum(sig2 * x * (1.0 - 2.0 * x), offsets)
        return base + 0.5 * x * (sig2 * (1.0 - 2.0 * x) - bsum)

    return DynamicsField("explearn", game, noise, game.dim, game.dim,
                         game.offsets, drift, _srd_diffusion(game, noise),
                         fast=_fast_spec("explearn", game, noise))


def stratonovich_field(game, noise):
    """Ito form of the Stratonovich-perturbed dynamics.

    The correction is computed from the diffusion matrix M and its exact
    Jacobian, 1/2 sum_{b,c} dM_ab/dx_c M_cb, rather than from any simplified
    bracket, so agreement with `exponential_learning_field` is a genuine
    cross-check of the conversion.
    """
    require_kind(noise, "per_strategy")
    if not noise.constant:
        raise UnsupportedError("the Ito conversion assumes constant intensities")
    if game.n_pops != 1:
        raise UnsupportedError("Stratonovich conversion is single-population")
    sig = noise.values
    n = game.dim
    eye = np.eye(n)

    def correction(x):
        x = np.asarray(x, dtype=np.float64)
        # M[a,b] = x_a (delta_ab - x_b) sigma_b
        m = x[..., :, None] * (eye - x[..., None, :]) * sig[None, :]
        # dM[a,b]/dx_c = (delta_ac (delta_ab - x_b) - x_a delta_bc) sigma_b
        dm = (np.einsum("ac,...ab->...abc", eye,
                        (eye - x[..., None, :]) * sig[None, :])
              - np.einsum("...a,bc,b->...abc", x, eye, sig))
        return 0.5 * np.einsum("...abc,...cb->...a", dm, m)

    def drift(x):
        x = np.asarray(x, dtype=np.float64)
        return _replicator_drift(game, x) + correction(x)

    return DynamicsField("stratonovich", game, noise, game.dim, game.dim,
                         game.offsets, drift, _srd_diffusion(game, noise))


def bimatrix_shock_field(game, noise):
    """Per-entry payoff-matrix shocks for single-population random matching."""
    require_kind(noise, "matrix_entry")
    if game.payoff.kind != "matrix":
        raise KindError("matrix-entry noise requires a matrix game")
    n = game.dim
    if noise.matrix.shape[0] != n:
        raise ShapeError("entry intensities do not match the payoff matrix")
    sig = noise.matrix

    def drift(x):
        return _replicator_drift(game, np.asarray(x, dtype=np.float64))

    def diffusion(x, dw):
        x = np.asarray(x, dtype=np.float64)
        dwm = dw.reshape(dw.shape[:-1] + (n, n))
        own = (sig * x[..., None, :] * dwm).sum(axis=-1)
        total = (sig * (x[..., :, None] * x[..., None, :]) * dwm).sum(axis=(-1, -2))
        return x * (own - total[..., None])

    return DynamicsField("bimatrix", game, noise, n, n * n, game.offsets,
                         drift, diffusion)


def _pair_index(n):
    iu, ju = np.triu_indices(n, k=1)
    return iu, ju


def random_mutation_field(game, noise):
    """Zero-mean random switch flows between strategy pairs; replicator drift."""
    require_kind(noise, "mutation")
    offsets = game.offsets
    pairs = []
    total_pairs = 0
    for k, n in enumerate(game.sizes):
        eta = noise.per_pop[k]
        if not callable(eta) and eta.shape[0] != n:
            raise ShapeError(f"mutation intensities of population {k} have "
                             f"size {eta.shape[0]}, game has {n}")
        iu, ju = _pair_index(n)
        pairs.append((iu, ju, total_pairs))
        total_pairs += iu.size

    def drift(x):
        return _replicator_drift(game, np.asarray(x, dtype=np.float64))

    def diffusion(x, dw):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        mats = noise.matrices(x)
        for k, (iu, ju, base) in enumerate(pairs):
            sl = slice(offsets[k], offsets[k + 1])
            xk = x[..., sl]
            w = dw[..., base:base + iu.size]
            eta = mats[k]
            coef = eta[..., iu, ju] if np.ndim(eta) > 2 else eta[iu, ju]
            t = coef * w
            gk = np.zeros_like(xk)
            # +w flows into the lower index, -w out of the upper index
            lower = xk[..., iu] * (xk[..., ju] * t)
            upper = xk[..., ju] * (xk[..., iu] * t)
            for p in range(iu.size):
                gk[..., iu[p]] += lower[..., p]
                gk[..., ju[p]] -= upper[..., p]
            out[..., sl] = gk
        return out

    return DynamicsField("mutation", game, noise, game.dim, total_pairs,
                         game.offsets, drift, diffusion)


def second_order_field(game, noise):
    """Cumulative-payoff imitation: positions move with explicit velocities,
    shocks enter the velocity equation with the share-weighted bracket.

    The velocity term squares the shares, so integrate with a floor above
    ~1e-150: once a share drops below sqrt(smallest normal double) the
    squared share underflows and the drift degenerates to 0/0.
    """
    require_kind(noise, "per_strategy")
    n = game.dim
    offsets = game.offsets

    def drift(state):
        state = np.asarray(state, dtype=np.float64)
        x = state[..., :n]
        vel = state[..., n:]
        if np.any(x <= 0.0):
            raise DomainError("second-order dynamics need interior shares")
        out = np.empty_like(state)
        out[..., :n] = vel
        base = _replicator_drift(game, x)
        ssum = _block_sum(vel * vel / x, offsets)
        out[..., n:] = base + x * (vel * vel / (x * x) - ssum)
        return out

    def diffusion(state, dw):
        state = np.asarray(state, dtype=np.float64)
        x = state[..., :n]
        sig = noise.intensities(x)
        mix = _block_sum(x * sig * dw, offsets)
        out = np.zeros_like(state)
        out[..., n:] = x * (sig * dw - mix)
        return out

    return DynamicsField("second_order", game, noise, 2 * n, n, game.offsets,
                         drift, diffusion, requires_interior=True,
                         state_kind="second_order")


def log_share_field(game, noise):
    """Log-coordinate form of the direct-shock dynamics.

    Carries the log-transform drift correction
    -1/2 [(1 - 2x_a) sigma_a^2 + sum_b sigma_b^2 x_b^2]; shares are recovered
    with a per-population softmax.
    """
    require_kind(noise, "per_strategy")
    offsets = game.offsets

    def to_shares(y):
        y = np.asarray(y, dtype=np.float64)
        x = np.empty_like(y)
        for k in range(len(offsets) - 1):
            sl = slice(offsets[k], offsets[k + 1])
            block = y[..., sl]
            e = np.exp(block - block.max(axis=-1, keepdims=True))
            x[..., sl] = e / e.sum(axis=-1, keepdims=True)
        return x

    def drift(y):
        x = to_shares(y)
        v = game.payoffs(x)
        vbar = _block_sum(x * v, offsets)
        sig = noise.intensities(x)
        sig2 = sig * sig
        qsum = _block_sum(sig2 * x * x, offsets)
        return (v - vbar) - 0.5 * ((1.0 - 2.0 * x) * sig2 + qsum)

    def diffusion(y, dw):
        x = to_shares(y)
        sig = noise.intensities(x)
        mix = _block_sum(x * sig * dw, offsets)
        return sig * dw - mix

    return DynamicsField("srd_log", game, noise, game.dim, game.dim,
                         game.offsets, drift, diffusion,
                         requires_interior=True, state_kind="log",
                         to_shares=to_shares)


def pure_noise_closed_form(model, x0, sigma, times, wiener):
    """Exact share paths for the comparison models under constant equal payoffs.

    `wiener` holds W(t) on the same grid as `times`, one column per strategy.
    Aggregate shocks: x0_a exp(-sigma_a^2 t / 2 + sigma_a W_a(t)), normalized.
    Exponential learning: x0_a exp(sigma_a W_a(t)), normalized.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    wiener = np.asarray(wiener, dtype=np.float64)
    if wiener.shape != (times.size, x0.size):
        raise ShapeError("wiener path shape does not match times x strategies")
    if model == "aggregate":
        expo = -0.5 * sigma ** 2 * times[:, None] + sigma * wiener
    elif model == "explearn":
        expo = sigma * wiener
    else:
        raise KindError(f"no pure-noise closed form for model {model!r}")
    # subtract the running max before exponentiating to dodge overflow
    expo = expo - expo.max(axis=1, keepdims=True)
    z = x0 * np.exp(expo)
    return z / z.sum(axis=1, keepdims=True)


def field_for(kind, game, noise):
    """Field factory used by the scenario layer."""
    builders = {
        "rd": lambda: replicator_field(game),
        "srd": lambda: stochastic_replicator_field(game, noise),
        "aggregate": lambda: aggregate_shocks_field(game, noise),
        "explearn": lambda: exponential_learning_field(game, noise),
        "stratonovich": lambda: stratonovich_field(game, noise),
        "bimatrix": lambda: bimatrix_shock_field(game, noise),
        "mutation": lambda: random_mutation_field(game, noise),
        "second_order": lambda: second_order_field(game, noise),
        "srd_log": lambda: log_share_field(game, noise),
    }
    if kind not in builders:
        raise KindError(f"unknown dynamics kind {kind!r}")
    return builders[kind]()
