"""Uniform interior grid on [0, 1] with homogeneous Dirichlet ends."""

from dataclasses import dataclass, field

import numpy as np

from .errors import AliasingError, DegenerateGridError


@dataclass(frozen=True)
class Grid:
    """Interior nodes ``x_i = i*h``, ``i = 1..n``; the boundary values are zero.

    Attributes
    ----------
    n_interior : int
    h : float
        Mesh width ``1/(n_interior+1)``.
    nodes : ndarray
        Interior coordinates in ascending order.
    """

    n_interior: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 3:
            raise DegenerateGridError(
                f"need at least 3 interior nodes, got {self.n_interior}")
        h = 1.0 / (self.n_interior + 1)
        nodes = np.arange(1, self.n_interior + 1) * h
        nodes.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self):
        return self.n_interior

    def norm(self, u, p=2):
        """Discrete L^p norm ``(h * sum |u_i|^p)^(1/p)`` along the last axis."""
        return (self.h * np.sum(np.abs(u) ** p, axis=-1)) ** (1.0 / p)

    def inner(self, u, v):
        return self.h * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def sample(self, func):
        return np.asarray(func(self.nodes), dtype=float)

    def laplacian_eigenvalues(self):
        """Eigenvalues of the Dirichlet second-difference matrix, ``-D2 phi_j = mu_j phi_j``."""
        j = np.arange(1, self.n + 1)
        return 4.0 / self.h**2 * np.sin(j * np.pi * self.h / 2.0) ** 2

    def second_difference(self, u):
        """Dirichlet second difference ``(u_{i+1} - 2u_i + u_{i-1})/h^2`` with zero ghosts."""
        u = np.asarray(u, dtype=float)
        padded = np.zeros(u.shape[:-1] + (u.shape[-1] + 2,))
        padded[..., 1:-1] = u
        return (padded[..., 2:] - 2.0 * u + padded[..., :-2]) / self.h**2


def make_grid(n_interior):
    return Grid(n_interior)


@dataclass(frozen=True)
class EigenPair:
    """Dirichlet eigenpair of ``-d^2/dx^2`` on [0, 1]."""

    index: int

    @property
    def lam(self):
        return (self.index * np.pi) ** 2

    def phi(self, x):
        return np.sqrt(2.0) * np.sin(self.index * np.pi * np.asarray(x, dtype=float))

    def __call__(self, x):
        return self.phi(x)


def eigenpair(j):
    if j < 1:
        raise ValueError(f"mode index must be >= 1, got {j}")
    return EigenPair(int(j))


def eigenvalues(J):
    j = np.arange(1, J + 1)
    return (j * np.pi) ** 2


def eigenfunctions(grid, J):
    """(J, n) matrix of ``phi_j(x_i)``."""
    j = np.arange(1, J + 1)[:, None]
    return np.sqrt(2.0) * np.sin(j * np.pi * grid.nodes[None, :])


def project(grid, u, j):
    """Midpoint-rule coefficient ``h * sum_i u_i phi_j(x_i)``.

    Works on the last axis, so a (P, n) batch returns P coefficients.
    """
    if j < 1 or j > grid.n:
        raise AliasingError(f"mode {j} is not resolved by {grid.n} interior nodes")
    return grid.h * np.asarray(u, dtype=float) @ eigenpair(j).phi(grid.nodes)
