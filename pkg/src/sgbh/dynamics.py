"""Model coefficients, polynomial nonlinearities, truncation and noise coefficients."""

from dataclasses import asdict, dataclass

import numpy as np

from . import _hot


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of ``u_t = nu u_xx - alpha u^delta u_x + beta c(u) + sqrt(eps) g W``."""

    nu: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 1.0
    delta: int = 1
    epsilon: float = 1.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "delta", int(self.delta))

    def violations(self):
        out = []
        if not self.nu > 0:
            out.append("nu must be > 0")
        if self.alpha < 0:
            out.append("alpha must be >= 0")
        if self.beta < 0:
            out.append("beta must be >= 0")
        if self.gamma < 1:
            out.append("gamma must be >= 1")
        if int(self.delta) != self.delta or self.delta < 1:
            out.append("delta must be an integer >= 1")
        if not 0 <= self.epsilon <= 1:
            out.append("epsilon must lie in [0, 1]")
        return out

    def replace(self, **kw):
        return ModelParams(**{**asdict(self), **kw})

    def to_dict(self):
        return asdict(self)


def p_nl(u, delta):
    """Convective flux ``u^(delta+1)``."""
    return np.asarray(u, dtype=float) ** (delta + 1)


def dp_nl(u, delta):
    return (delta + 1) * np.asarray(u, dtype=float) ** delta


def c_nl(u, delta, gamma):
    """Reaction ``u (1 - u^delta)(u^delta - gamma)``."""
    u = np.asarray(u, dtype=float)
    ud = u**delta
    return u * (1.0 - ud) * (ud - gamma)


def dc_nl(u, delta, gamma):
    # c(u) = (1+gamma) u^(d+1) - gamma u - u^(2d+1)
    u = np.asarray(u, dtype=float)
    return (1.0 + gamma) * (delta + 1) * u**delta - gamma - (2 * delta + 1) * u ** (2 * delta)


def _smoothstep(theta):
    return 3.0 * theta**2 - 2.0 * theta**3


def cutoff(r, R):
    """C^1 cutoff: 1 on ``|r| <= R``, 0 on ``|r| >= R+1``, smoothstep bridge between.

    The bridge slope peaks at 1.5, inside the admissible bound of 2.
    """
    if R <= 0:
        raise ValueError("cutoff threshold must be positive")
    theta = np.clip(np.abs(np.asarray(r, dtype=float)) - R, 0.0, 1.0)
    return 1.0 - _smoothstep(theta)


def cutoff_derivative(r, R):
    r = np.asarray(r, dtype=float)
    theta = np.clip(np.abs(r) - R, 0.0, 1.0)
    return -np.sign(r) * 6.0 * theta * (1.0 - theta)


FAMILIES = {"constant": _hot.G_CONSTANT, "linear": _hot.G_LINEAR, "bounded_sigmoid": _hot.G_SIGMOID}


@dataclass(frozen=True)
class GCoefficient:
    """Autonomous noise coefficient ``g(r)``.

    ``constant``        g = K
    ``linear``          g = K sqrt(1 + r^2) / sqrt(2)   (linear growth, Lipschitz K/sqrt(2))
    ``bounded_sigmoid`` g = K tanh(L r / K)             (|g| <= K, Lipschitz L)
    """

    family: str = "constant"
    K: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown g family {self.family!r}; choose from {sorted(FAMILIES)}")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if self.family == "bounded_sigmoid" and not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def code(self):
        return FAMILIES[self.family]

    @property
    def bounded(self):
        """Whether the family satisfies ``|g| <= K`` globally."""
        return self.family in ("constant", "bounded_sigmoid")

    @property
    def lipschitz(self):
        if self.family == "constant":
            return 0.0
        if self.family == "linear":
            return self.K / np.sqrt(2.0)
        return self.L

    def __call__(self, r):
        return g_eval(self, 0.0, 0.0, r)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "constant":
            return np.zeros_like(r)
        if self.family == "linear":
            return self.K * r / (np.sqrt(2.0) * np.sqrt(1.0 + r * r))
        return self.L / np.cosh(self.L * r / self.K) ** 2

    def to_dict(self):
        return asdict(self)


def g_eval(coeff, t, x, r):
    """Evaluate the coefficient; ``t`` and ``x`` are accepted for signature parity only."""
    return _hot._g_numpy(coeff.code, coeff.K, coeff.L, np.asarray(r, dtype=float))
