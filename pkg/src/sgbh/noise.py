"""Driving noises: colored Q-noise and cell-averaged space-time white noise.

All randomness comes from the Philox counter stream keyed by
``(seed, stream_id, step, index)``; a path's increments never depend on how
many other paths were simulated or in what order.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _hot
from .errors import AlignmentError, TraceConditionError
from .grid import eigenfunctions, eigenvalues

COLORED = "colored"
WHITE = "white"
MAX_DEFAULT_MODES = 128


@dataclass(frozen=True)
class NoiseSpec:
    """Noise regime plus its reproducibility key.

    ``q`` may be given explicitly (any finite non-negative weights); otherwise
    the colored regime uses ``q_j = lambda_j ** -eta`` which is square-summable
    only for ``eta > 1/4``.
    """

    regime: str = COLORED
    eta: float = 0.5
    J: int | None = None
    seed: int = 0
    stream_id: int = 0
    q: tuple | None = field(default=None)

    def __post_init__(self):
        if self.regime not in (COLORED, WHITE):
            raise ValueError(f"unknown noise regime {self.regime!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.regime == COLORED:
            if self.q is not None:
                q = np.asarray(self.q, dtype=float)
                if q.ndim != 1 or q.size == 0 or np.any(~np.isfinite(q)) or np.any(q < 0):
                    raise ValueError("explicit q weights must be finite and non-negative")
                object.__setattr__(self, "q", tuple(float(v) for v in q))
                object.__setattr__(self, "J", q.size)
            elif not self.eta > 0.25:
                raise TraceConditionError(
                    f"eta={self.eta} violates the trace condition: sum q_j^2 < inf needs eta > 1/4")
            if self.J is not None and self.J < 1:
                raise ValueError("J must be positive")

    def modes(self, grid):
        if self.regime == WHITE:
            return grid.n
        return self.J if self.J is not None else min(grid.n, MAX_DEFAULT_MODES)

    def weights(self, grid=None, J=None):
        """The retained ``q_j``."""
        if self.q is not None:
            return np.asarray(self.q)
        J = J or self.modes(grid)
        return eigenvalues(J) ** (-self.eta)

    def trace(self, grid=None):
        """``sum q_j^2`` over the retained modes."""
        return float(np.sum(self.weights(grid) ** 2))

    def full_trace(self):
        """``sum_{j>=1} lambda_j^{-2 eta} = zeta(4 eta) / pi^(4 eta)``."""
        from scipy.special import zeta
        return float(zeta(4.0 * self.eta) / np.pi ** (4.0 * self.eta))

    def with_stream(self, stream_id):
        return NoiseSpec(self.regime, self.eta, self.J, self.seed, stream_id, self.q)

    def to_dict(self):
        d = {"regime": self.regime, "eta": self.eta, "J": self.J, "seed": self.seed,
             "stream_id": self.stream_id}
        if self.q is not None:
            d["q"] = list(self.q)
        return d


@dataclass(frozen=True)
class NoiseIncrement:
    dt: float
    values: np.ndarray


class NoiseSampler:
    """Precomputed mode matrix for fast batched draws on one grid."""

    def __init__(self, spec, grid, dt):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.spec, self.grid, self.dt = spec, grid, float(dt)
        if spec.regime == COLORED:
            J = spec.modes(grid)
            q = spec.weights(grid, J)
            self.n_draws = J
            # rows: modes, cols: nodes
            self._map = (q[:, None] * eigenfunctions(grid, J)) * np.sqrt(self.dt)
        else:
            self.n_draws = grid.n
            self._scale = np.sqrt(self.dt / grid.h)

    def draw(self, step, streams=None, seed=None):
        """(P, n) increments for the given step and stream ids."""
        streams = np.atleast_1d(self.spec.stream_id if streams is None else streams)
        seed = self.spec.seed if seed is None else seed
        xi = _hot.standard_normals(seed, streams, step, self.n_draws)
        if self.spec.regime == COLORED:
            return xi @ self._map
        return xi * self._scale

    def covariance(self):
        """Exact covariance matrix of one increment at the grid nodes."""
        if self.spec.regime == COLORED:
            return self._map.T @ self._map
        return np.eye(self.grid.n) * (self.dt / self.grid.h)


def sample_colored_increment(spec, grid, dt, step=0):
    if spec.regime != COLORED:
        raise ValueError("spec is not a colored-noise spec")
    return NoiseIncrement(dt, NoiseSampler(spec, grid, dt).draw(step)[0])


def sample_white_increment(spec, grid, dt, step=0):
    if spec.regime != WHITE:
        raise ValueError("spec is not a white-noise spec")
    return NoiseIncrement(dt, NoiseSampler(spec, grid, dt).draw(step)[0])


def sample_increment(spec, grid, dt, step=0):
    return NoiseSampler(spec, grid, dt).draw(step)[0]


def steps_for(t, dt):
    """Number of steps of size dt that reach t; raises if t is not on the lattice."""
    k = t / dt
    kr = round(k)
    if kr < 0 or abs(k - kr) > 1e-9 * max(1.0, k):
        raise AlignmentError(f"t={t} is not an integer multiple of dt={dt}")
    return int(kr)


def brownian_sheet_checkpoint(spec, grid, t, dt, streams=None):
    """Running sum of the increments up to time t (zero at t = 0)."""
    k = steps_for(t, dt)
    sampler = NoiseSampler(spec, grid, dt)
    P = 1 if streams is None else np.atleast_1d(streams).size
    total = np.zeros((P, grid.n))
    for step in range(k):
        total += sampler.draw(step, streams)
    return total[0] if streams is None else total
