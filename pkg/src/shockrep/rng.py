"""Deterministic noise streams.

Every standard-normal increment is addressed by (master seed, path index,
step, coordinate): the stream for a path is Philox4x64-10 keyed by
(seed, path) and the word consumed for (step, coordinate) is output number
``step * noise_dim + coordinate`` of that stream.  Ensembles are therefore
reproducible no matter how paths are scheduled, and any sub-range of a path
can be regenerated in isolation.
"""

import numpy as np
from numpy.random import Philox

from ._normal import inv_norm_cdf, uniform_open01

_MASK64 = (1 << 64) - 1


def philox_key(seed, path):
    """Key words (k0, k1) for one path of one master seed."""
    return np.array([seed & _MASK64, path & _MASK64], dtype=np.uint64)


def raw_words(seed, path, start, count):
    """Raw uint64 outputs [start, start+count) of the (seed, path) stream."""
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    block, offset = divmod(int(start), 4)
    counter = np.array([block, 0, 0, 0], dtype=np.uint64)
    bitgen = Philox(key=philox_key(seed, path), counter=counter)
    return bitgen.random_raw(offset + count)[offset:]


def path_normals(seed, path, start, count):
    """Standard normals number [start, start+count) of the (seed, path) stream."""
    return inv_norm_cdf(uniform_open01(raw_words(seed, path, start, count)))


def block_normals(seed, paths, start, count):
    """Normals [start, start+count) for several paths, shape (len(paths), count)."""
    out = np.empty((len(paths), count), dtype=np.float64)
    for i, p in enumerate(paths):
        out[i] = path_normals(seed, p, start, count)
    return out


class NoiseStream:
    """Increment source for one trajectory.

    Produces the standard-normal table of one path, laid out one row per
    time step with ``noise_dim`` coordinates per row; `increments` scales
    rows by sqrt(dt).
    """

    def __init__(self, seed, path, noise_dim, dt):
        if noise_dim < 0:
            raise ValueError("noise_dim must be >= 0")
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.seed = int(seed) & _MASK64
        self.path = int(path) & _MASK64
        self.noise_dim = int(noise_dim)
        self.dt = float(dt)

    def normals(self, step0, nsteps):
        m = self.noise_dim
        if m == 0:
            return np.zeros((nsteps, 0), dtype=np.float64)
        flat = path_normals(self.seed, self.path, step0 * m, nsteps * m)
        return flat.reshape(nsteps, m)

    def increments(self, step0, nsteps):
        return self.normals(step0, nsteps) * np.sqrt(self.dt)

    def wiener(self, nsteps):
        """Wiener path on the step grid: W[0] = 0, W[k] = sum of increments."""
        w = np.empty((nsteps + 1, self.noise_dim), dtype=np.float64)
        w[0] = 0.0
        np.cumsum(self.increments(0, nsteps), axis=0, out=w[1:])
        return w


def coarsen_increments(dw, factor):
    """Sum groups of `factor` consecutive increments (same Brownian path, larger dt)."""
    n = dw.shape[0]
    if n % factor != 0:
        raise ValueError("step count not divisible by coarsening factor")
    return dw.reshape(n // factor, factor, *dw.shape[1:]).sum(axis=1)
