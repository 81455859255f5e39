"""Semi-implicit finite-difference integration of the SGBH equation.

One step solves

    (I - nu dt D2) u+ = u + dt Pi [-(alpha/(delta+1)) D1 p(u) + beta c(u)]
                        + Pi sqrt(eps) g(u) dW + dt g(u) phi

with D2 the Dirichlet second difference, D1 the skew central difference
applied to ``p(u) = u^(delta+1)`` and ``Pi`` the optional norm cutoff.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _hot
from .dynamics import GCoefficient, cutoff
from .errors import BlowupError, CFLError
from .noise import NoiseSampler, steps_for

BLOWUP_LIMIT = 1e12


def default_monitor_p(delta):
    """Smallest even integer strictly above max(6, 2 delta + 1)."""
    p = int(max(6, 2 * delta + 1)) + 1
    return p + (p % 2)


def central_difference(v, h):
    """``(v_{i+1} - v_{i-1}) / 2h`` with zero ghost values."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 1:-1] = v[..., 2:] - v[..., :-2]
    out[..., 0] = v[..., 1]
    out[..., -1] = -v[..., -2]
    return out / (2.0 * h)


class Stepper:
    """Batched semi-implicit stepper bound to one grid, time step and model."""

    def __init__(self, grid, params, dt, g=None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.grid, self.params, self.dt = grid, params, float(dt)
        self.g = g if g is not None else GCoefficient("constant", 1.0)
        r = params.nu * self.dt / grid.h**2
        self.factor = _hot.thomas_factor(grid.n, r)

    def check(self, U, step):
        U = np.asarray(U)
        if not np.all(np.isfinite(U)):
            raise BlowupError("non-finite state", step)
        umax = float(np.max(np.abs(U))) if U.size else 0.0
        if umax > BLOWUP_LIMIT:
            raise BlowupError(f"|u| = {umax:.3e} exceeds {BLOWUP_LIMIT:g}", step)
        p = self.params
        if p.alpha > 0:
            courant = p.alpha * umax**p.delta * self.dt / self.grid.h
            if courant > 1.0:
                raise CFLError(f"convective Courant number {courant:.3g} > 1", step)

    def step(self, U, dW=None, ctrl=None, pi=None, sqrt_eps=None):
        U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
        p = self.params
        if pi is None:
            pi = np.ones(U.shape[0])
        if sqrt_eps is None:
            sqrt_eps = np.sqrt(p.epsilon)
        if dW is not None:
            dW = np.ascontiguousarray(np.broadcast_to(dW, U.shape), dtype=float)
        if ctrl is not None:
            ctrl = np.ascontiguousarray(np.atleast_2d(ctrl), dtype=float)
        return _hot.step_batch(U, self.dt, self.grid.h, p.alpha, p.beta, p.gamma, p.delta,
                               sqrt_eps, self.g.code, self.g.K, self.g.L, dW, ctrl,
                               np.ascontiguousarray(pi, dtype=float), self.factor)

    def solve(self, rhs):
        """Apply ``(I - nu dt D2)^-1`` along the last axis."""
        return _hot.thomas_solve(rhs, *self.factor)


def step_semi_implicit(u, params, grid, dt, dW=None, g=None, R_trunc=None, p=None,
                       control=None, step_index=0):
    """Advance one field by one step; ``dW`` are raw noise increments at the nodes."""
    st = Stepper(grid, params, dt, g)
    U = np.atleast_2d(np.asarray(u, dtype=float))
    st.check(U, step_index)
    pi = None
    if R_trunc is not None:
        p = p or default_monitor_p(params.delta)
        pi = cutoff(grid.norm(U, p), R_trunc)
    out = st.step(U, dW=dW, ctrl=control, pi=pi)
    st.check(out, step_index + 1)
    return out[0]


@dataclass
class Trajectory:
    """Saved states of one path; ``values[k]`` is the field at ``times[k]``."""

    grid: object
    times: np.ndarray
    values: np.ndarray
    params: object
    dt: float
    noise_record: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.values[-1]

    def to_csv(self, path):
        header = ",".join(["t"] + [f"x_{i}" for i in range(1, self.grid.n + 1)])
        data = np.column_stack([self.times, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass
class EnergyLedger:
    """Per-step ``||u||_p^p``, weighted dissipation and reaction functionals."""

    times: np.ndarray
    lp_norm_p: np.ndarray
    dissipation: np.ndarray
    reaction: np.ndarray
    p: float
    dt: float

    def to_csv(self, path):
        data = np.column_stack([self.times, self.lp_norm_p, self.dissipation, self.reaction])
        np.savetxt(path, data, delimiter=",", header="t,lp_norm_p,dissipation,reaction",
                   comments="", fmt="%.17g")


def energy_terms(U, h, p, delta):
    """(||u||_p^p, D, R) along the last axis with zero boundary values."""
    U = np.asarray(U, dtype=float)
    au = np.abs(U)
    lp = h * np.sum(au**p, axis=-1)
    padded = np.zeros(U.shape[:-1] + (U.shape[-1] + 2,))
    padded[..., 1:-1] = U
    grad = np.diff(padded, axis=-1) / h
    left = np.abs(padded[..., :-1])
    diss = h * np.sum(left ** (p - 2) * grad**2, axis=-1)
    react = h * np.sum(au ** (p + 2 * delta), axis=-1)
    return lp, diss, react


class EnergyAccumulator:
    """Observer that keeps the audited energy pieces for every path of a batch."""

    def __init__(self, grid, params, p, dt, keep_series=False):
        self.h, self.params, self.p, self.dt = grid.h, params, p, dt
        self.sup_lp = None
        self.sum_diss = None
        self.sum_react = None
        self.keep_series = keep_series
        self.series = []

    def __call__(self, k, t, U, last):
        lp, diss, react = energy_terms(U, self.h, self.p, self.params.delta)
        if self.sup_lp is None:
            self.sup_lp = lp.copy()
            self.sum_diss = np.zeros_like(lp)
            self.sum_react = np.zeros_like(lp)
        else:
            np.maximum(self.sup_lp, lp, out=self.sup_lp)
        if not last:
            # left Riemann sum over [t_k, t_{k+1})
            self.sum_diss += self.dt * diss
            self.sum_react += self.dt * react
        if self.keep_series:
            self.series.append((t, lp, diss, react))

    def audited(self):
        pr, p = self.params, self.p
        return (self.sup_lp + pr.nu * p * (p - 1) * self.sum_diss
                + p * pr.beta * self.sum_react)


def _as_batch(u0, P):
    U = np.asarray(u0, dtype=float)
    if U.ndim == 1:
        U = np.broadcast_to(U, (P, U.size))
    return np.ascontiguousarray(U, dtype=float).copy()


def run_batch(u0, params, grid, T, dt, spec=None, g=None, streams=None, control=None,
              R_trunc=None, p=None, observer=None, keep_noise=False, stepper=None):
    """Integrate a batch of paths sharing ``u0`` (or one ``u0`` per row).

    ``control`` is an (N, n) or (N, P, n) array, row k acting on [t_k, t_{k+1}).
    ``observer(k, t_k, U, last)`` is called at every step including the initial
    state. Returns the final (P, n) state and, if requested, the (N, P, n)
    increments that were applied.
    """
    N = steps_for(T, dt)
    streams = np.atleast_1d(np.arange(1) if streams is None else streams)
    P = streams.size
    st = stepper or Stepper(grid, params, dt, g)
    U = _as_batch(u0, P)
    if U.shape[0] != P:
        raise ValueError("u0 rows must match the number of streams")
    p = p or default_monitor_p(params.delta)
    use_noise = spec is not None and (params.epsilon > 0 or keep_noise)
    sampler = NoiseSampler(spec, grid, dt) if use_noise else None
    record = np.empty((N, P, grid.n)) if (keep_noise and sampler is not None) else None
    if control is not None:
        control = np.asarray(control, dtype=float)
        if control.shape[0] != N:
            raise ValueError(f"control has {control.shape[0]} rows, expected {N}")
    sqrt_eps = np.sqrt(params.epsilon)
    st.check(U, 0)
    if observer is not None:
        observer(0, 0.0, U, N == 0)
    for k in range(N):
        dW = sampler.draw(k, streams) if sampler is not None else None
        if record is not None:
            record[k] = dW
        pi = cutoff(grid.norm(U, p), R_trunc) if R_trunc is not None else None
        U = st.step(U, dW=dW, ctrl=None if control is None else control[k], pi=pi,
                    sqrt_eps=sqrt_eps)
        st.check(U, k + 1)
        if observer is not None:
            observer(k + 1, (k + 1) * dt, U, k + 1 == N)
    return U, record


def integrate(u0, params, grid, T, dt, spec=None, g=None, R_trunc=None, p=None,
              save_stride=1, monitor_R=None, control=None, keep_noise=False, stream_id=None):
    """Integrate one path and return ``(Trajectory, EnergyLedger)``.

    ``monitor_R`` records the first time ``||u||_{L^p} >= R`` (or T) in
    ``trajectory.diagnostics["tau_R"]``.
    """
    N = steps_for(T, dt)
    p = p or default_monitor_p(params.delta)
    stream = spec.stream_id if (stream_id is None and spec is not None) else (stream_id or 0)
    times, saved = [], []
    energy = EnergyAccumulator(grid, params, p, dt, keep_series=True)
    tau = {"value": T}

    def observe(k, t, U, last):
        energy(k, t, U, last)
        if k % save_stride == 0 or last:
            times.append(t)
            saved.append(U[0].copy())
        if monitor_R is not None and tau["value"] == T and k <= N:
            if grid.norm(U[0], p) >= monitor_R:
                tau["value"] = min(tau["value"], t)

    _, record = run_batch(u0, params, grid, T, dt, spec, g, [stream], control, R_trunc, p,
                          observe, keep_noise)
    ser = energy.series
    ledger = EnergyLedger(np.array([s[0] for s in ser]), np.array([s[1][0] for s in ser]),
                          np.array([s[2][0] for s in ser]), np.array([s[3][0] for s in ser]),
                          p, dt)
    traj = Trajectory(grid, np.array(times), np.array(saved), params, dt,
                      None if record is None else record[:, 0, :],
                      {"tau_R": tau["value"] if monitor_R is not None else None,
                       "p": p, "stream_id": stream, "save_stride": save_stride,
                       "g": (g or GCoefficient()).to_dict(),
                       "noise": None if spec is None else spec.to_dict(),
                       "audited": float(energy.audited()[0])})
    return traj, ledger


@dataclass
class AuditReport:
    p: float
    audited: np.ndarray
    ratios: np.ndarray
    mean_ratio: float
    ci_halfwidth: float
    C_audit: float | None
    bounded: bool | None

    def to_dict(self):
        return {"p": self.p, "mean_ratio": self.mean_ratio, "ci_halfwidth": self.ci_halfwidth,
                "n_paths": int(self.ratios.size), "C_audit": self.C_audit, "bounded": self.bounded}


def energy_audit(ledgers, params, p, u0, grid=None, C_audit=None):
    """Ratio of the audited energy to ``1 + ||u0||_p^p``.

    ``ledgers`` is an EnergyLedger, a list of them, or an array of already
    audited quantities (one per path, as produced by EnergyAccumulator).
    """
    if isinstance(ledgers, EnergyLedger):
        ledgers = [ledgers]
    if len(ledgers) and isinstance(ledgers[0], EnergyLedger):
        vals = []
        for L in ledgers:
            D = np.sum(L.dissipation[:-1]) * L.dt
            R = np.sum(L.reaction[:-1]) * L.dt
            vals.append(np.max(L.lp_norm_p) + params.nu * p * (p - 1) * D + p * params.beta * R)
        audited = np.array(vals)
    else:
        audited = np.asarray(ledgers, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    h = grid.h if grid is not None else 1.0 / (u0.size + 1)
    base = 1.0 + h * np.sum(np.abs(u0) ** p)
    ratios = audited / base
    mean = float(np.mean(ratios))
    half = float(1.96 * np.std(ratios, ddof=1) / np.sqrt(ratios.size)) if ratios.size > 1 else 0.0
    bounded = None if C_audit is None else bool(mean <= C_audit)
    return AuditReport(p, audited, ratios, mean, half, C_audit, bounded)
