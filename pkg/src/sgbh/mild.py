"""Picard iteration of the mild (integral) form of the SGBH equation.

This is the cross-validation oracle for the finite-difference stepper, so it
shares none of the stepper's discretization: space integrals against the
kernel are done on the piecewise-linear interpolant of nodal data using the
sine-series kernel, and the time convolution is integrated exactly against
the exponential mode decay with the drift interpolated linearly in time. The
Walsh integral uses the supplied increments with the kernel frozen at the
left end of each step (Ito convention).

Each Picard sweep maps a whole trajectory to a new one; the semigroup
property lets the convolution be accumulated step by step, so one sweep
costs O(N J) per path rather than O(N^2 J).
"""

import numpy as np

from .dynamics import GCoefficient, c_nl, p_nl
from .errors import NoContractionError
from .noise import steps_for
from .solver import Trajectory

MAX_NODES = 63
MAX_HORIZON = 0.25


class MildOperator:
    """Precomputed kernel quadratures for one grid / diffusivity / time step."""

    def __init__(self, grid, nu, dt, J=None):
        self.grid, self.nu, self.dt = grid, nu, dt
        J = J or 4 * (grid.n + 1)
        self.J = J
        k = np.pi * np.arange(1, J + 1)
        x, h = grid.nodes, grid.h
        hat = (2.0 - 2.0 * np.cos(k * h)) / (k**2 * h)
        # int hat_l(y) phi_j(y) dy and int hat_l(y) phi_j'(y) dy
        self.hat_sin = np.sqrt(2.0) * np.sin(np.outer(x, k)) * hat
        self.hat_dcos = np.sqrt(2.0) * k * np.cos(np.outer(x, k)) * hat
        self.evaluate = np.sqrt(2.0) * np.sin(np.outer(k, x))
        # midpoint projection of cell-averaged noise; modes above n alias, so drop them
        self.noise_proj = np.zeros((grid.n, J))
        m = min(J, grid.n)
        self.noise_proj[:, :m] = h * np.sqrt(2.0) * np.sin(np.outer(x, k[:m]))
        kappa = nu * k**2
        z = kappa * dt
        self.decay = np.exp(-z)
        phi1 = np.where(z > 1e-4, -np.expm1(-z) / np.where(z > 0, z, 1.0), 1 - z / 2 + z * z / 6)
        phi2 = np.where(z > 1e-4, (z + np.expm1(-z)) / np.where(z > 0, z * z, 1.0),
                        0.5 - z / 6 + z * z / 24)
        self.w_left = dt * (phi1 - phi2)
        self.w_right = dt * phi2
        self.w_const = dt * phi1

    def coefficients(self, u):
        return np.asarray(u) @ self.hat_sin

    def sweep(self, U, u0, params, g, noise, control):
        """Apply the mild-form map once to a (N+1, P, n) trajectory."""
        a_c = params.alpha / (params.delta + 1)
        drift = (a_c * p_nl(U, params.delta)) @ self.hat_dcos
        drift += (params.beta * c_nl(U, params.delta, params.gamma)) @ self.hat_sin
        gU = g(U[:-1]) if (noise is not None or control is not None) else None
        forcing = None
        if control is not None:
            forcing = (gU * control) @ self.hat_sin
        kicks = None
        if noise is not None and params.epsilon > 0:
            kicks = (np.sqrt(params.epsilon) * gU * noise) @ self.noise_proj
        out = np.empty_like(U)
        out[0] = u0
        a = self.coefficients(u0)
        for k in range(U.shape[0] - 1):
            nxt = self.decay * a + self.w_left * drift[k] + self.w_right * drift[k + 1]
            if forcing is not None:
                nxt += self.w_const * forcing[k]
            if kicks is not None:
                nxt += self.decay * kicks[k]
            a = nxt
            out[k + 1] = a @ self.evaluate
        return out


def picard_batch(u0, params, grid, T, dt, noise=None, g=None, control=None,
                 max_iter=200, tol=1e-10, J=None, check_scale=True):
    """Picard fixed point for a batch; returns ``(values (N+1, P, n), residuals)``.

    ``noise`` holds the raw increments, shape (N, n) or (N, P, n).
    ``control`` has shape (N, n) or (N, P, n).
    """
    if check_scale and (grid.n > MAX_NODES or T > MAX_HORIZON + 1e-12):
        raise ValueError(f"the mild oracle is meant for n <= {MAX_NODES} and T <= {MAX_HORIZON}")
    N = steps_for(T, dt)
    g = g or GCoefficient()
    u0 = np.atleast_2d(np.asarray(u0, dtype=float))
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.ndim == 2:
            noise = noise[:, None, :]
        P = max(u0.shape[0], noise.shape[1])
    else:
        P = u0.shape[0]
    u0 = np.broadcast_to(u0, (P, grid.n))
    if control is not None:
        control = np.asarray(control, dtype=float)
        if control.ndim == 2:
            control = control[:, None, :]
    op = MildOperator(grid, params.nu, dt, J)
    U = np.broadcast_to(u0, (N + 1, P, grid.n)).copy()
    residuals = []
    for it in range(1, max_iter + 1):
        # divergence is reported below, so overflow inside a sweep is expected
        with np.errstate(over="ignore", invalid="ignore"):
            new = op.sweep(U, u0, params, g, noise, control)
        res = float(np.max(np.abs(new - U)))
        residuals.append(res)
        U = new
        if not np.isfinite(res):
            raise NoContractionError("Picard iterates diverged", res, residuals)
        if res < tol:
            return U, residuals
        if it >= 8 and res >= min(residuals[-8:-1]):
            raise NoContractionError(
                f"Picard residual stagnated at {res:.3e} after {it} sweeps", res, residuals)
    raise NoContractionError(
        f"Picard residual {residuals[-1]:.3e} above tol after {max_iter} sweeps",
        residuals[-1], residuals)


def picard_mild_oracle(u0, params, grid, T, dt, noise_realization=None, g=None,
                       max_iter=200, tol=1e-10, control=None, J=None):
    """Single-path mild solution as a Trajectory (every time step saved).

    ``diagnostics["iterations"]`` counts the sweeps before the fixed point was
    reached, so a purely linear heat problem reports 1.
    """
    U, res = picard_batch(u0, params, grid, T, dt, noise_realization, g, control,
                          max_iter, tol, J)
    N = U.shape[0] - 1
    return Trajectory(grid, np.arange(N + 1) * dt, U[:, 0, :], params, dt,
                      None if noise_realization is None else np.asarray(noise_realization),
                      {"residuals": res, "iterations": len(res) - 1, "oracle": "picard-mild"})
