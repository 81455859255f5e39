"""Skeleton and controlled equations, and endpoint rate functions by adjoint descent.

The skeleton replaces the noise by the control forcing ``dt g(u) phi`` inside
the same semi-implicit step as the SPDE solver, and the rate function of an
endpoint target is computed as

    I = 1/2 ||phi*||^2,  phi* = argmin 1/2 ||phi||^2 + mu/2 ||u_phi(T) - target||^2

with the penalty ``mu`` raised along a ladder. Gradients are the exact
transpose of the discrete forward map, expressed as L^2 (Riesz) gradients on
the space-time grid so that the optimizer is mesh independent.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import GCoefficient, dc_nl, dp_nl
from .errors import NonconvergenceError
from .noise import steps_for
from .solver import Stepper, central_difference, integrate

DEFAULT_PENALTIES = (1e2, 1e3, 1e4)


class Control:
    """Piecewise-constant control, ``values[k]`` acting on ``[t_k, t_{k+1})``."""

    def __init__(self, values, dt, h):
        values = np.array(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("control values must be a (steps, nodes) matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        self.values, self.dt, self.h = values, float(dt), float(h)
        self.cost = 0.5 * self.dt * self.h * float(np.sum(values * values))

    @classmethod
    def zeros(cls, grid, T, dt):
        return cls(np.zeros((steps_for(T, dt), grid.n)), dt, grid.h)

    @classmethod
    def from_function(cls, grid, T, dt, f):
        """Sample ``f(t, x)`` at the left end of each step."""
        t = np.arange(steps_for(T, dt)) * dt
        return cls(f(t[:, None], grid.nodes[None, :]) * np.ones((t.size, grid.n)), dt, grid.h)

    @property
    def shape(self):
        return self.values.shape

    def in_ball(self, M):
        """Membership in the set of controls with ``int int |phi|^2 <= M``."""
        return 2.0 * self.cost <= M

    def scaled(self, c):
        return Control(c * self.values, self.dt, self.h)

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


@dataclass
class RateResult:
    value: float
    control: Control
    grad_norm: float
    iterations: int
    feasibility_gap: float
    endpoint: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "iterations": self.iterations,
                "grad_norm": self.grad_norm, "feasibility_gap": self.feasibility_gap}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _values(phi):
    return phi.values if isinstance(phi, Control) else np.asarray(phi, dtype=float)


def solve_skeleton(u0, params, g, phi, T, dt, grid):
    """Deterministic controlled path; the noise term is dropped whatever ``params.epsilon`` is."""
    vals = _values(phi)
    if not np.all(np.isfinite(vals)):
        raise ValueError("control must be finite")
    traj, _ = integrate(u0, params.replace(epsilon=0.0), grid, T, dt, g=g, control=vals)
    return traj


def solve_controlled(u0, params, g, phi, spec, T, dt, grid, save_stride=1):
    """Stochastic path with both the noise and the control forcing."""
    vals = _values(phi)
    if not np.all(np.isfinite(vals)):
        raise ValueError("control must be finite")
    traj, _ = integrate(u0, params, grid, T, dt, spec=spec, g=g, control=vals,
                        save_stride=save_stride)
    return traj


class _Problem:
    """Forward map, objective and adjoint for one (u0, target, T, dt) setting."""

    def __init__(self, u0, params, g, target, T, dt, grid):
        self.params = params.replace(epsilon=0.0)
        self.g = g or GCoefficient()
        self.grid, self.dt, self.N = grid, float(dt), steps_for(T, dt)
        self.u0 = np.asarray(u0, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.stepper = Stepper(grid, self.params, dt, self.g)
        self.metric = self.dt * grid.h

    def forward(self, phi):
        U = np.empty((self.N + 1, self.grid.n))
        U[0] = self.u0
        st = self.stepper
        cur = self.u0[None, :]
        st.check(cur, 0)
        for k in range(self.N):
            cur = st.step(cur, ctrl=phi[k])
            st.check(cur, k + 1)
            U[k + 1] = cur[0]
        return U

    def objective(self, phi, U, mu):
        miss = U[-1] - self.target
        return 0.5 * self.metric * float(np.sum(phi * phi)) + 0.5 * mu * self.grid.h * float(miss @ miss)

    def gradient(self, phi, U, mu):
        """Riesz gradient in the space-time L^2 inner product."""
        p, h, dt = self.params, self.grid.h, self.dt
        a_c = p.alpha / (p.delta + 1)
        lam = mu * h * (U[-1] - self.target)
        grad = np.empty_like(phi)
        for k in range(self.N - 1, -1, -1):
            u = U[k]
            w = self.stepper.solve(lam)
            gu = self.g(u)
            grad[k] = phi[k] + gu * w / h
            # transpose of the explicit part: D1 is skew, so (D1 diag p')^T = -diag p' D1
            lam = w + dt * (a_c * dp_nl(u, p.delta) * central_difference(w, h)
                            + p.beta * dc_nl(u, p.delta, p.gamma) * w
                            + self.g.derivative(u) * phi[k] * w)
        return grad

    def norm(self, v):
        return float(np.sqrt(self.metric * np.sum(v * v)))

    def inner(self, a, b):
        return self.metric * float(np.sum(a * b))


def adjoint_gradient(u0, params, g, phi, target, T, dt, mu, grid):
    """Gradient of the penalized objective with respect to the control, shaped like it."""
    prob = _Problem(u0, params, g, target, T, dt, grid)
    phi = _values(phi)
    return prob.gradient(phi, prob.forward(phi), mu)


def penalized_objective(u0, params, g, phi, target, T, dt, mu, grid):
    prob = _Problem(u0, params, g, target, T, dt, grid)
    phi = _values(phi)
    return prob.objective(phi, prob.forward(phi), mu)


def _descend(prob, phi, mu, tol_scale, max_iter):
    """Barzilai-Borwein gradient descent with backtracking; returns the final state."""
    U = prob.forward(phi)
    J = prob.objective(phi, U, mu)
    G = prob.gradient(phi, U, mu)
    gnorm = prob.norm(G)
    step = 1.0 / (1.0 + mu)
    it = 0
    while gnorm > tol_scale * (1.0 + J) and it < max_iter:
        it += 1
        while True:
            trial = phi - step * G
            Ut = prob.forward(trial)
            Jt = prob.objective(trial, Ut, mu)
            if Jt <= J - 1e-4 * step * gnorm**2 or step < 1e-16:
                break
            step *= 0.5
        Gt = prob.gradient(trial, Ut, mu)
        s, y = trial - phi, Gt - G
        sy = prob.inner(s, y)
        phi, U, J, G = trial, Ut, Jt, Gt
        gnorm = prob.norm(G)
        step = prob.inner(s, s) / sy if sy > 0 else 2.0 * step
    return phi, U, J, gnorm, it


def rate_function_endpoint(u0, params, g, target, T, dt, grid, opt_cfg=None):
    """Endpoint rate ``I = 1/2 ||phi*||^2`` for reaching ``target`` at time T.

    ``opt_cfg`` keys: ``penalties`` (increasing ladder), ``tol`` (relative
    gradient tolerance, default 1e-6), ``max_iter`` per penalty stage and an
    optional warm start ``phi0``.
    """
    cfg = {"penalties": DEFAULT_PENALTIES, "tol": 1e-6, "max_iter": 2000, "phi0": None,
           **(opt_cfg or {})}
    target = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(target)):
        raise ValueError("target must be finite")
    penalties = [float(m) for m in cfg["penalties"]]
    if any(b <= a for a, b in zip(penalties, penalties[1:])) or penalties[0] <= 0:
        raise ValueError("penalties must be positive and increasing")
    prob = _Problem(u0, params, g, target, T, dt, grid)
    phi = (np.zeros((prob.N, grid.n)) if cfg["phi0"] is None
           else np.array(_values(cfg["phi0"]), dtype=float))
    stages, total = [], 0
    gnorm, J, U = np.inf, np.inf, None
    for mu in penalties:
        phi, U, J, gnorm, it = _descend(prob, phi, mu, cfg["tol"], cfg["max_iter"])
        total += it
        miss = U[-1] - target
        stages.append({"mu": mu, "iterations": it, "objective": J, "grad_norm": gnorm,
                       "cost": 0.5 * prob.metric * float(np.sum(phi * phi)),
                       "feasibility_gap": float(np.sqrt(grid.h * miss @ miss))})
    control = Control(phi, dt, grid.h)
    result = RateResult(control.cost, control, gnorm, total, stages[-1]["feasibility_gap"],
                        U[-1].copy(), {"stages": stages, "objective": J})
    if gnorm > cfg["tol"] * (1.0 + J):
        raise NonconvergenceError(
            f"gradient norm {gnorm:.3e} above tolerance after {total} iterations", result)
    return result


def gramian_rate(a, nu, T, lam=np.pi**2):
    """Closed-form one-mode rate ``a^2 / (2 Gamma)``, ``Gamma = (1 - exp(-2 nu lam T)) / (2 nu lam)``."""
    k = nu * lam
    gamma = -np.expm1(-2.0 * k * T) / (2.0 * k)
    return a * a / (2.0 * gamma)
