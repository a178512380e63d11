"""Population games, noise models, dominance/equilibrium tests, and the
noise-adjusted games associated with each shock mechanism.

States live on a product of simplices and are handled as flat float64 vectors;
`GameSpec.offsets` gives the population blocks.  All evaluators accept batched
states of shape (..., dim).
"""

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, KindError, ShapeError, UnsupportedError

TAU_EQ = 1e-9          # tolerance for every dominance/equilibrium inequality
STATE_ATOL = 1e-12     # simplex sum tolerance


# ---------------------------------------------------------------------------
# payoff models
# ---------------------------------------------------------------------------

class ConstantPayoffs:
    """State-independent payoff vector per population."""

    kind = "constant"
    approximate = False

    def __init__(self, vectors):
        self.vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
        self.flat = np.concatenate(self.vectors)

    def values(self, x, offsets):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(self.flat, x.shape).copy()


class MatrixPayoffs:
    """Single-population symmetric random matching: v_a(x) = sum_b V[a,b] x_b."""

    kind = "matrix"
    approximate = False

    def __init__(self, matrix):
        V = np.asarray(matrix, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ShapeError("payoff matrix must be square")
        self.matrix = V

    def values(self, x, offsets):
        x = np.asarray(x, dtype=np.float64)
        # explicit sum keeps the summation order identical to the kernels
        return (self.matrix * x[..., None, :]).sum(axis=-1)


class MultilinearPayoffs:
    """Multi-population random matching.

    One tensor per population; axes are (own strategy, then the other
    populations in ascending population order).
    """

    kind = "multilinear"
    approximate = False

    def __init__(self, tensors):
        self.tensors = [np.asarray(t, dtype=np.float64) for t in tensors]

    def values(self, x, offsets):
        x = np.asarray(x, dtype=np.float64)
        n_pops = len(offsets) - 1
        out = np.empty_like(x)
        for k in range(n_pops):
            t = self.tensors[k]
            others = [j for j in range(n_pops) if j != k]
            v = np.broadcast_to(t, x.shape[:-1] + t.shape).copy()
            for pos in range(len(others) - 1, -1, -1):
                j = others[pos]
                xj = x[..., offsets[j]:offsets[j + 1]]
                shape = xj.shape[:-1] + (1,) * (pos + 1) + (xj.shape[-1],)
                v = (v * xj.reshape(shape)).sum(axis=-1)
            out[..., offsets[k]:offsets[k + 1]] = v
        return out


class CustomPayoffs:
    """Caller-supplied evaluator; analyses over it are sampling-based."""

    kind = "custom"
    approximate = True

    def __init__(self, fn, vectorized=True):
        self.fn = fn
        self.vectorized = vectorized

    def values(self, x, offsets):
        x = np.asarray(x, dtype=np.float64)
        if self.vectorized or x.ndim == 1:
            return np.asarray(self.fn(x), dtype=np.float64)
        flat = x.reshape(-1, x.shape[-1])
        rows = [np.asarray(self.fn(row), dtype=np.float64) for row in flat]
        return np.stack(rows).reshape(x.shape)


@dataclass(frozen=True)
class GameSpec:
    """A population game: strategy sets plus a payoff model."""

    strategies: tuple          # tuple of per-population strategy-name tuples
    payoff: object

    def __post_init__(self):
        for names in self.strategies:
            if len(names) < 2:
                raise DomainError("every population needs at least 2 strategies")

    @property
    def n_pops(self):
        return len(self.strategies)

    @property
    def sizes(self):
        return tuple(len(s) for s in self.strategies)

    @property
    def offsets(self):
        out = [0]
        for n in self.sizes:
            out.append(out[-1] + n)
        return tuple(out)

    @property
    def dim(self):
        return self.offsets[-1]

    @property
    def approximate(self):
        return self.payoff.approximate

    def payoffs(self, x):
        """Payoff vector(s) at state(s) x, shape (..., dim)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ShapeError(
                f"state has {x.shape[-1]} coordinates, game has {self.dim}")
        v = self.payoff.values(x, self.offsets)
        if not np.all(np.isfinite(v)):
            raise DomainError("payoff evaluation produced nonfinite values")
        return v

    def blocks(self, x):
        off = self.offsets
        return [np.asarray(x)[..., off[k]:off[k + 1]] for k in range(self.n_pops)]

    def coordinate_labels(self):
        return [f"p{k}_{name}"
                for k, names in enumerate(self.strategies) for name in names]


def _names(counts_or_names):
    out = []
    for entry in counts_or_names:
        if isinstance(entry, int):
            out.append(tuple(str(i) for i in range(entry)))
        else:
            out.append(tuple(str(s) for s in entry))
    return tuple(out)


def constant_game(vectors):
    """Game with state-independent payoffs; one vector per population."""
    vecs = [np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in vectors]
    return GameSpec(_names([len(v) for v in vecs]), ConstantPayoffs(vecs))


def matrix_game(matrix):
    payoff = MatrixPayoffs(matrix)
    return GameSpec(_names([payoff.matrix.shape[0]]), payoff)


def multilinear_game(tensors):
    tensors = [np.asarray(t, dtype=np.float64) for t in tensors]
    sizes = [t.shape[0] for t in tensors]
    for k, t in enumerate(tensors):
        expect = tuple([sizes[k]] + [sizes[j] for j in range(len(sizes)) if j != k])
        if t.shape != expect:
            raise ShapeError(f"tensor {k} has shape {t.shape}, expected {expect}")
    return GameSpec(_names(sizes), MultilinearPayoffs(tensors))


def custom_game(sizes, fn, vectorized=True):
    return GameSpec(_names(list(sizes)), CustomPayoffs(fn, vectorized))


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def make_state(game, blocks):
    """Flat state vector from per-population probability vectors."""
    if game.n_pops == 1 and np.asarray(blocks[0]).ndim == 0:
        blocks = [blocks]
    if len(blocks) != game.n_pops:
        raise ShapeError(f"expected {game.n_pops} population blocks")
    x = np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks])
    validate_state(game, x)
    return x


def validate_state(game, x, interior=False, floor=0.0):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != game.dim:
        raise ShapeError(f"state has {x.shape[-1]} coordinates, game has {game.dim}")
    if np.any(x < -STATE_ATOL):
        raise DomainError("state has negative entries")
    for k, block in enumerate(game.blocks(x)):
        s = block.sum(axis=-1)
        if np.any(np.abs(s - 1.0) > 1e-12):
            raise DomainError(f"population {k} weights sum to {s}, not 1")
    if interior and np.any(x <= floor):
        raise DomainError("state is not interior")
    return x


def vertex_state(game, picks):
    """Pure joint state: picks[k] is the chosen strategy index of population k."""
    x = np.zeros(game.dim)
    for k, a in enumerate(picks):
        x[game.offsets[k] + a] = 1.0
    return x


def pure_profiles(game):
    """All joint pure states, with their per-population strategy indices."""
    for picks in itertools.product(*(range(n) for n in game.sizes)):
        yield picks, vertex_state(game, picks)


def halton_states(game, count, skip=32):
    """Deterministic quasi-random interior states (uniform on each simplex)."""
    dim = game.dim
    primes = []
    c = 2
    while len(primes) < dim:
        if all(c % p for p in primes):
            primes.append(c)
        c += 1
    idx = np.arange(skip, skip + count)
    u = np.empty((count, dim))
    for j, base in enumerate(primes):
        n = idx.astype(np.float64) * 0.0
        denom = 1.0
        i = idx.copy()
        while np.any(i > 0):
            denom *= base
            n += (i % base) / denom
            i //= base
        u[:, j] = n
    # exponential spacings give the uniform (flat Dirichlet) law per block
    e = -np.log(1.0 - u)
    x = np.empty_like(e)
    off = game.offsets
    for k in range(game.n_pops):
        block = e[:, off[k]:off[k + 1]]
        x[:, off[k]:off[k + 1]] = block / block.sum(axis=1, keepdims=True)
    return x


@dataclass(frozen=True)
class MixedStrategy:
    """A distribution over one population's strategies."""

    population: int
    weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0):
            raise DomainError("mixed strategy has negative weights")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixed strategy weights must sum to 1")
        object.__setattr__(self, "weights", w)

    def support(self):
        return np.nonzero(self.weights > 0.0)[0]


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------

class StrategyNoise:
    """One shock intensity per (population, strategy); constant or state-dependent."""

    kind = "per_strategy"

    def __init__(self, sigma, dim=None):
        if callable(sigma):
            if dim is None:
                raise ShapeError("state-dependent intensities need an explicit dim")
            self._fn = sigma
            self._values = None
            self.dim = int(dim)
            self.constant = False
        else:
            arr = np.ascontiguousarray(np.concatenate(
                [np.atleast_1d(np.asarray(s, dtype=np.float64)) for s in
                 (sigma if isinstance(sigma, (list, tuple)) and
                  np.asarray(sigma[0]).ndim > 0 else [sigma])]))
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise DomainError("intensities must be nonnegative and finite")
            self._fn = None
            self._values = arr
            self.dim = arr.size
            self.constant = True

    def intensities(self, x):
        if self.constant:
            x = np.asarray(x, dtype=np.float64)
            return np.broadcast_to(self._values, x.shape)
        out = np.asarray(self._fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise DomainError("intensities must be nonnegative and finite")
        return out

    @property
    def values(self):
        if not self.constant:
            raise UnsupportedError("noise intensities are state-dependent")
        return self._values

    def is_zero(self):
        return self.constant and not np.any(self._values)


class MatrixEntryNoise:
    """One constant intensity per payoff-matrix entry (matrix games only)."""

    kind = "matrix_entry"
    constant = True

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError("entry intensities must form a square matrix")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise DomainError("intensities must be nonnegative and finite")
        self.matrix = m
        self.dim = m.shape[0]

    def is_zero(self):
        return not np.any(self.matrix)


class MutationNoise:
    """Symmetric pairwise switch intensities per population.

    eta[k] is an (n_k, n_k) symmetric matrix (diagonal ignored), or a callable
    x -> (..., n_k, n_k) for state-dependent intensities.
    """

    kind = "mutation"

    def __init__(self, etas, game=None):
        if not isinstance(etas, (list, tuple)):
            etas = [etas]
        self.per_pop = []
        self.constant = True
        for k, eta in enumerate(etas):
            if callable(eta):
                if game is None:
                    raise ShapeError("state-dependent mutation noise needs the game")
                self.constant = False
                self._check_symmetry(eta, game, k)
                self.per_pop.append(eta)
            else:
                m = np.asarray(eta, dtype=np.float64)
                if m.ndim != 2 or m.shape[0] != m.shape[1]:
                    raise ShapeError("mutation intensities must be square")
                if np.any(m < 0) or not np.all(np.isfinite(m)):
                    raise DomainError("intensities must be nonnegative and finite")
                if not np.array_equal(m, m.T):
                    raise DomainError("mutation intensities must be symmetric")
                self.per_pop.append(m)

    @staticmethod
    def _check_symmetry(fn, game, k):
        for x in halton_states(game, 8):
            m = np.asarray(fn(x), dtype=np.float64)
            if not np.allclose(m, np.swapaxes(m, -1, -2), atol=1e-12):
                raise DomainError(
                    f"mutation intensities of population {k} are not symmetric")

    def matrices(self, x):
        out = []
        for eta in self.per_pop:
            if callable(eta):
                out.append(np.asarray(eta(np.asarray(x, dtype=np.float64)),
                                      dtype=np.float64))
            else:
                out.append(eta)
        return out

    def is_zero(self):
        return self.constant and not any(np.any(m) for m in self.per_pop)


def require_kind(noise, kind):
    if noise.kind != kind:
        raise KindError(f"expected {kind} noise, got {noise.kind}")
    return noise


# ---------------------------------------------------------------------------
# payoffs, dominance, equilibrium
# ---------------------------------------------------------------------------

def average_payoff(game, x, population=0):
    """Mean payoff of one population at state x."""
    x = validate_state(game, x)
    off = game.offsets
    v = game.payoffs(x)
    sl = slice(off[population], off[population + 1])
    return float(np.sum(x[sl] * v[sl]))


class Dominance(Enum):
    DOMINATED = "dominated"
    NOT_DOMINATED = "not_dominated"
    UNKNOWN = "unknown"


def _pair_margins(game, population, direction, states):
    """<v_k(x) | direction> at the given states (direction lives on population k)."""
    off = game.offsets
    sl = slice(off[population], off[population + 1])
    v = game.payoffs(states)
    return (v[..., sl] * direction).sum(axis=-1)


def check_dominance(game, population, p, q, samples=1000, tol=TAU_EQ):
    """Is mixed strategy p strictly worse than q at every state?

    Exact for constant/matrix/multilinear payoffs (the payoff difference is
    multilinear, so its minimum over the state space sits on a vertex);
    sampling-based for custom payoffs.
    """
    if p.population != q.population:
        raise DomainError("mixed strategies belong to different populations")
    if p.population != population:
        raise DomainError("mixed strategies belong to a different population")
    if p.weights.shape != q.weights.shape or \
            p.weights.size != game.sizes[population]:
        raise ShapeError("mixed strategy dimension does not match the game")

    direction = q.weights - p.weights
    if game.payoff.kind == "constant":
        margin = float(_pair_margins(game, population, direction,
                                     halton_states(game, 1)[0]))
        return Dominance.DOMINATED if margin > tol else Dominance.NOT_DOMINATED

    if game.payoff.kind in ("matrix", "multilinear"):
        verts = np.stack([x for _, x in pure_profiles(game)])
        margin = float(_pair_margins(game, population, direction, verts).min())
        return Dominance.DOMINATED if margin > tol else Dominance.NOT_DOMINATED

    margins = _pair_margins(game, population, direction,
                            halton_states(game, samples))
    mn = float(margins.min())
    if mn > tol:
        return Dominance.DOMINATED
    if mn < -tol:
        return Dominance.NOT_DOMINATED
    return Dominance.UNKNOWN


class Equilibrium(Enum):
    NOT_NASH = "not_nash"
    NASH = "nash"
    STRICT_NASH = "strict_nash"


def classify_equilibrium(game, x, tol=TAU_EQ):
    """Nash test at x; strict requires a pure state and strict off-support gaps."""
    x = validate_state(game, x)
    v = game.payoffs(x)
    off = game.offsets
    nash = True
    strict = True
    for k in range(game.n_pops):
        xk = x[off[k]:off[k + 1]]
        vk = v[off[k]:off[k + 1]]
        support = np.nonzero(xk > tol)[0]
        if support.size != 1:
            strict = False
        worst_support = vk[support].min()
        if worst_support < vk.max() - tol:
            nash = False
            break
        if support.size == 1:
            others = np.delete(vk, support[0])
            if others.size and others.max() >= vk[support[0]] - tol:
                strict = False
    if not nash:
        return Equilibrium.NOT_NASH
    return Equilibrium.STRICT_NASH if strict else Equilibrium.NASH


# ---------------------------------------------------------------------------
# noise-adjusted games
# ---------------------------------------------------------------------------

class _AdjustedPayoffs:
    """Base payoffs plus a state-dependent correction; analysis is sampling-based."""

    kind = "custom"
    approximate = True

    def __init__(self, base, correction):
        self.base = base
        self.correction = correction

    def values(self, x, offsets):
        return self.base.values(x, offsets) - self.correction(x)


def _adjusted(game, correction):
    return GameSpec(game.strategies, _AdjustedPayoffs(game.payoff, correction))


def adjust_srd(game, noise):
    """Direct payoff shocks: v_a(x) - (1 - 2 x_a) sigma_a(x)^2 / 2."""
    require_kind(noise, "per_strategy")
    if noise.constant and noise.is_zero():
        return game

    def correction(x):
        x = np.asarray(x, dtype=np.float64)
        sig = noise.intensities(x)
        return 0.5 * (1.0 - 2.0 * x) * sig * sig

    return _adjusted(game, correction)


def adjust_imhof(game, noise):
    """Aggregate shocks: v_a(x) - sigma_a^2 / 2, constant intensities only."""
    require_kind(noise, "per_strategy")
    if not noise.constant:
        raise UnsupportedError(
            "the aggregate-shocks adjustment is defined for constant intensities")
    if noise.is_zero():
        return game
    shift = 0.5 * noise.values * noise.values

    def correction(x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(shift, x.shape)

    return _adjusted(game, correction)


def adjust_bimatrix(game, noise):
    """Matrix-entry shocks: v_a(x) - (1 - 2 x_a)/2 * sum_b sigma_ab^2 x_b^2."""
    require_kind(noise, "matrix_entry")
    if game.payoff.kind != "matrix":
        raise KindError("matrix-entry noise requires a matrix game")
    if noise.matrix.shape[0] != game.dim:
        raise ShapeError("entry intensities do not match the payoff matrix")
    if noise.is_zero():
        return game
    sig2 = noise.matrix * noise.matrix

    def correction(x):
        x = np.asarray(x, dtype=np.float64)
        quad = (sig2 * (x * x)[..., None, :]).sum(axis=-1)
        return 0.5 * (1.0 - 2.0 * x) * quad

    return _adjusted(game, correction)


def adjust_mutation(game, noise):
    """Random strategy switches: v_a(x) - 1/2 sum_{b != a} x_b^2 eta_ba(x)^2."""
    require_kind(noise, "mutation")
    for k, eta in enumerate(noise.per_pop):
        if not callable(eta) and eta.shape[0] != game.sizes[k]:
            raise ShapeError(f"mutation intensities of population {k} have "
                             f"size {eta.shape[0]}, game has {game.sizes[k]}")
    if noise.is_zero():
        return game
    off = game.offsets

    def correction(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        mats = noise.matrices(x)
        for k, eta in enumerate(mats):
            xk = x[..., off[k]:off[k + 1]]
            eta2 = eta * eta
            if eta2.ndim == 2:
                eta2 = eta2 * (1.0 - np.eye(eta2.shape[0]))
            else:
                eye = np.eye(eta2.shape[-1])
                eta2 = eta2 * (1.0 - eye)
            quad = (eta2 * (xk * xk)[..., None, :]).sum(axis=-1)
            out[..., off[k]:off[k + 1]] = 0.5 * quad
        return out

    return _adjusted(game, correction)


# ---------------------------------------------------------------------------
# margin conditions
# ---------------------------------------------------------------------------

@dataclass
class MarginReport:
    """Noise-vs-payoff margins for extinction and vertex-stability conditions.

    `extinction` maps (population, dominated, dominating) to the worst slack
    of [payoff gap > half the summed squared intensities] over tested states;
    positive slack means the gap beats the noise everywhere tested.
    `vertex_stability` maps a joint pure profile to the worst slack of
    [payoff gap < half the summed squared intensities] at that vertex.
    """

    extinction: dict
    vertex_stability: dict
    exact: bool

    def extinction_holds(self, population, dominated, dominating):
        return self.extinction[(population, dominated, dominating)] > 0.0

    def vertex_holds(self, picks):
        return self.vertex_stability[tuple(picks)] > 0.0


def margin_conditions(game, noise, samples=1000):
    require_kind(noise, "per_strategy")
    exact = noise.constant and game.payoff.kind in ("constant", "matrix",
                                                    "multilinear")
    if exact:
        states = np.stack([x for _, x in pure_profiles(game)])
    else:
        states = halton_states(game, samples)
    v = game.payoffs(states)
    sig = noise.intensities(states)
    half2 = 0.5 * sig * sig
    off = game.offsets

    extinction = {}
    for k in range(game.n_pops):
        sl = slice(off[k], off[k + 1])
        vk, hk = v[:, sl], half2[:, sl]
        n = game.sizes[k]
        for a in range(n):
            for b in range(n):
                if a == b:
                    continue
                slack = (vk[:, b] - vk[:, a]) - (hk[:, a] + hk[:, b])
                extinction[(k, a, b)] = float(slack.min())

    vertex_stability = {}
    for picks, x in pure_profiles(game):
        vx = game.payoffs(x)
        hx = 0.5 * noise.intensities(x) ** 2
        worst = np.inf
        for k, a_star in enumerate(picks):
            sl = slice(off[k], off[k + 1])
            vk, hk = vx[sl], hx[sl]
            for b in range(game.sizes[k]):
                if b == a_star:
                    continue
                worst = min(worst, (hk[a_star] + hk[b]) - (vk[b] - vk[a_star]))
        vertex_stability[picks] = float(worst)

    return MarginReport(extinction, vertex_stability, exact)
