"""Monte Carlo harness for small-noise probabilities and convergence experiments.

Every sample ``i`` uses noise stream ``i``, so two experiments that differ
only in the event, the radius or ``eps`` see the same underlying Gaussian
draws (common random numbers). Samples are processed in fixed-size chunks;
the chunking, not the thread count, fixes the floating point work, so the
results do not depend on ``threads``.
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _gauss
from scipy.stats import qmc

from . import _hot
from .dynamics import GCoefficient
from .errors import NoNoiseRecordError, UnestimableError
from .grid import eigenfunctions
from .noise import NoiseSampler, steps_for
from .skeleton_control import solve_skeleton
from .solver import Stepper, Trajectory, default_monitor_p, run_batch

CHUNK = 2048
MIN_SAMPLES = 100


# --------------------------------------------------------------------------
# Events
# --------------------------------------------------------------------------

def _field_norm(grid, V, norm, p):
    if norm == "sup":
        return np.max(np.abs(V), axis=-1)
    return grid.norm(V, p)


@dataclass(frozen=True)
class TerminalBall:
    """``{ ||u(T) - center|| < radius }``."""

    center: np.ndarray
    radius: float
    norm: str = "L2"
    p: float = 2.0
    description: str = ""

    def __post_init__(self):
        _check_event(self.radius, self.norm)

    def indicator(self, grid, U):
        return _field_norm(grid, U - self.center, self.norm, self._p) < self.radius

    @property
    def _p(self):
        return 2.0 if self.norm == "L2" else self.p


@dataclass(frozen=True)
class TubeExceed:
    """``{ max_k ||u(t_k) - reference[k]|| > eta }`` over every time step."""

    reference: np.ndarray
    eta: float
    norm: str = "Lp"
    p: float = 2.0
    description: str = ""

    def __post_init__(self):
        _check_event(self.eta, self.norm)

    def distance(self, grid, k, U):
        p = 2.0 if self.norm == "L2" else self.p
        return _field_norm(grid, U - self.reference[k], self.norm, p)


def _check_event(eta, norm):
    if not eta > 0:
        raise ValueError("event radius eta must be positive")
    if norm not in ("L2", "Lp", "sup"):
        raise ValueError(f"unknown norm {norm!r}")


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------

def wilson_interval(k, n, confidence=0.95):
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        raise ValueError("n must be positive")
    z = _gauss.ppf(0.5 + confidence / 2.0)
    phat = k / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # guard rounding so the interval always contains the point estimate
    return float(min(lo, phat)), float(max(hi, phat))


@dataclass
class MCEstimate:
    p_hat: float
    n_samples: int
    wilson_ci: tuple
    eps: float
    hits: int = 0

    @property
    def eps_log_p(self):
        """``eps * log(p_hat)``; ``-inf`` is the sentinel for zero hits."""
        return self.eps * math.log(self.p_hat) if self.hits > 0 else -math.inf

    @property
    def eps_log_p_upper(self):
        """One-sided bound ``eps * log(ci_hi)``, meaningful also for zero hits."""
        return self.eps * math.log(self.wilson_ci[1])

    def to_dict(self):
        return {"eps": self.eps, "p_hat": self.p_hat, "n_samples": self.n_samples,
                "hits": self.hits, "ci_lo": self.wilson_ci[0], "ci_hi": self.wilson_ci[1],
                "eps_log_p": "-inf" if self.hits == 0 else self.eps_log_p}


def _estimate(hits, n, eps):
    return MCEstimate(hits / n, n, wilson_interval(hits, n), float(eps), int(hits))


# --------------------------------------------------------------------------
# Configuration shared by the experiments
# --------------------------------------------------------------------------

@dataclass
class MCConfig:
    """Everything except ``eps`` and the event needed to simulate a batch of paths."""

    params: object
    grid: object
    T: float
    dt: float
    u0: np.ndarray
    spec: object
    g: GCoefficient = field(default_factory=GCoefficient)
    control: np.ndarray | None = None
    R_trunc: float | None = None
    p: int | None = None

    def to_dict(self):
        return {"model": self.params.to_dict(), "n_interior": self.grid.n, "T": self.T,
                "dt": self.dt, "u0": np.asarray(self.u0, dtype=float).tolist(),
                "noise": self.spec.to_dict(), "g": self.g.to_dict(),
                "control": None if self.control is None else _digest(self.control),
                "R_trunc": self.R_trunc, "p": self.p}

    def hash(self):
        return _digest(json.dumps(self.to_dict(), sort_keys=True).encode())


def _digest(obj):
    data = obj if isinstance(obj, bytes) else np.ascontiguousarray(obj, dtype=float).tobytes()
    return hashlib.sha256(data).hexdigest()


def _chunks(n, size=CHUNK):
    return [np.arange(a, min(a + size, n)) for a in range(0, n, size)]


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _count_hits(event, cfg, eps, streams):
    params = cfg.params.replace(epsilon=eps)
    grid = cfg.grid
    if isinstance(event, TerminalBall):
        U, _ = run_batch(cfg.u0, params, grid, cfg.T, cfg.dt, cfg.spec, cfg.g, streams,
                         cfg.control, cfg.R_trunc, cfg.p)
        return int(np.count_nonzero(event.indicator(grid, U)))
    worst = np.zeros(streams.size)

    def observe(k, t, U, last):
        np.maximum(worst, event.distance(grid, k, U), out=worst)

    run_batch(cfg.u0, params, grid, cfg.T, cfg.dt, cfg.spec, cfg.g, streams, cfg.control,
              cfg.R_trunc, cfg.p, observe)
    return int(np.count_nonzero(worst > event.eta))


def estimate_probability(event, config, eps, n_samples, threads=1):
    """Frequency of ``event`` over ``n_samples`` paths with stream ids ``0..n-1``."""
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    hits = _map(lambda s: _count_hits(event, config, eps, s), _chunks(n_samples), threads)
    return _estimate(sum(hits), n_samples, eps)


# --------------------------------------------------------------------------
# eps log P curves
# --------------------------------------------------------------------------

@dataclass
class LDPCurve:
    estimates: list
    slope: float
    intercept: float
    rate_reference: float | None
    config_hash: str

    @property
    def extrapolated_rate(self):
        """``-lim eps log p`` from the straight-line fit of ``eps log p_hat`` against eps."""
        return -self.intercept

    @property
    def relative_error(self):
        if self.rate_reference is None:
            return None
        return abs(self.extrapolated_rate - self.rate_reference) / self.rate_reference

    def summary(self):
        return {"config_hash": self.config_hash, "slope": self.slope,
                "intercept": self.intercept, "extrapolated_rate": self.extrapolated_rate,
                "rate_reference": self.rate_reference, "relative_error": self.relative_error,
                "estimates": [e.to_dict() for e in self.estimates]}


def ldp_curve(event, config, eps_ladder, n_samples_per_eps, rate_reference=None, threads=1):
    """Estimates along a decreasing eps ladder and the linear-in-eps extrapolation.

    Every rung must see at least 10 hits; otherwise UnestimableError carries
    the rungs computed so far.
    """
    ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    estimates = []
    for eps in ladder:
        est = estimate_probability(event, config, eps, n_samples_per_eps, threads)
        estimates.append(est)
        if est.hits < 10:
            raise UnestimableError(
                f"only {est.hits} hits at eps={eps}; need p_hat >= 10/n", estimates)
    e = np.array(ladder)
    y = np.array([est.eps_log_p for est in estimates])
    if e.size >= 2:
        slope, intercept = np.polyfit(e, y, 1)
    else:
        slope, intercept = 0.0, y[0]
    return LDPCurve(estimates, float(slope), float(intercept),
                    None if rate_reference is None else float(rate_reference), config.hash())


def write_mc_csv(path, estimates, rate_reference=None):
    ref = "" if rate_reference is None else f"{rate_reference:.17g}"
    with open(path, "w") as fh:
        fh.write("eps,p_hat,ci_lo,ci_hi,eps_log_p,rate_reference\n")
        for est in estimates:
            elp = "-inf" if est.hits == 0 else f"{est.eps_log_p:.17g}"
            fh.write(f"{est.eps:.17g},{est.p_hat:.17g},{est.wilson_ci[0]:.17g},"
                     f"{est.wilson_ci[1]:.17g},{elp},{ref}\n")


def ou_mode_variance(nu, dt, T, grid, eps=1.0, q=1.0):
    """Exact variance of the first-mode coefficient of the discrete linear scheme.

    With alpha = beta = 0, g = 1 and colored noise on mode 1 only, the
    coefficient obeys ``X_{k+1} = (X_k + sqrt(eps) q sqrt(dt) xi_k) / (1 + nu mu_1 dt)``
    with ``mu_1`` the first discrete Laplacian eigenvalue.
    """
    mu1 = grid.laplacian_eigenvalues()[0]
    rho = 1.0 / (1.0 + nu * mu1 * dt)
    N = steps_for(T, dt)
    return eps * q * q * dt * rho**2 * (1.0 - rho ** (2 * N)) / (1.0 - rho**2)


# --------------------------------------------------------------------------
# Uniform convergence in probability
# --------------------------------------------------------------------------

def halton_initial_conditions(grid, count, bound, modes=3, p=2.0):
    """Deterministic sample of fields with ``||u0||_{L^p} <= bound``.

    The first ``modes`` sine coefficients and a radius fraction come from an
    unscrambled Halton sequence.
    """
    pts = qmc.Halton(d=modes + 1, scramble=False).random(count + 1)[1:]
    phis = eigenfunctions(grid, modes)
    out = []
    for row in pts:
        u = (2.0 * row[:modes] - 1.0) @ phis
        nrm = grid.norm(u, p)
        out.append(u * (bound * (0.25 + 0.75 * row[-1]) / nrm) if nrm > 0 else u)
    return out


def halton_controls(grid, T, dt, count, M, modes=2):
    """Deterministic sample of controls with ``int int phi^2 <= M``.

    Each control is a sine profile modulated by ``1 + c cos(pi t / T)``.
    """
    N = steps_for(T, dt)
    t = np.arange(N) * dt
    pts = qmc.Halton(d=modes + 2, scramble=False).random(count + 1)[1:]
    phis = eigenfunctions(grid, modes)
    out = []
    for row in pts:
        prof = (2.0 * row[:modes] - 1.0) @ phis
        mod = 1.0 + (2.0 * row[modes] - 1.0) * np.cos(np.pi * t / T)
        phi = mod[:, None] * prof[None, :]
        energy = dt * grid.h * float(np.sum(phi * phi))
        target = M * (0.25 + 0.75 * row[-1])
        out.append(phi * math.sqrt(target / energy) if energy > 0 else phi)
    return out


@dataclass
class UniformReport:
    eps_ladder: list
    worst: list
    worst_ci: list
    worst_pair: list
    table: list
    eta: float
    threshold: float
    monotone: bool
    below_threshold: bool
    config_hash: str

    def to_dict(self):
        return {"eps_ladder": self.eps_ladder, "worst": self.worst,
                "worst_ci": [list(c) for c in self.worst_ci], "worst_pair": self.worst_pair,
                "eta": self.eta, "threshold": self.threshold, "monotone": self.monotone,
                "below_threshold": self.below_threshold, "config_hash": self.config_hash}


def _monotone_within_ci(values, cis):
    for i in range(1, len(values)):
        if values[i] > values[i - 1] and cis[i][0] > cis[i - 1][1]:
            return False
    return True


def uniform_convergence_experiment(config, u0_set, phi_set, eps_ladder, eta, n_samples,
                                   p=None, threshold=0.05, threads=1):
    """Worst-case frequency of ``sup_t ||u_eps,phi - u_0,phi||_{L^p} > eta`` over the sets.

    Monotonicity allows an increase only if the two Wilson intervals overlap.
    """
    grid = config.grid
    p = p or config.p or default_monitor_p(config.params.delta)
    refs = []
    for i, u0 in enumerate(u0_set):
        for j, phi in enumerate(phi_set):
            sk = solve_skeleton(u0, config.params, config.g, phi, config.T, config.dt, grid)
            refs.append(((i, j), np.asarray(u0, float), np.asarray(phi, float), sk.values))
    worst, worst_ci, worst_pair, table = [], [], [], []
    for eps in eps_ladder:
        best = None
        for (i, j), u0, phi, ref in refs:
            cfg = MCConfig(config.params, grid, config.T, config.dt, u0, config.spec, config.g,
                           phi, config.R_trunc, config.p)
            est = estimate_probability(TubeExceed(ref, eta, "Lp", p), cfg, eps, n_samples, threads)
            table.append({"eps": float(eps), "u0": i, "phi": j, **est.to_dict()})
            if best is None or est.p_hat > best[0].p_hat:
                best = (est, [i, j])
        worst.append(best[0].p_hat)
        worst_ci.append(best[0].wilson_ci)
        worst_pair.append(best[1])
    return UniformReport([float(e) for e in eps_ladder], worst, worst_ci, worst_pair, table,
                         float(eta), float(threshold), _monotone_within_ci(worst, worst_ci),
                         bool(worst[-1] <= threshold), config.hash())


# --------------------------------------------------------------------------
# z = u - zeta decomposition
# --------------------------------------------------------------------------

@dataclass
class Decomposition:
    z: Trajectory
    zeta: Trajectory
    zeta_star: float


def _zeta_step(kernel, stepper, decay, to_modes, from_modes, zeta, kick):
    if kernel == "discrete":
        return stepper.solve(zeta + kick)
    return ((zeta + kick) @ to_modes * decay) @ from_modes


def _spectral_maps(grid, nu, dt):
    phis = eigenfunctions(grid, grid.n)
    decay = np.exp(-nu * (np.pi * np.arange(1, grid.n + 1)) ** 2 * dt)
    return decay, grid.h * phis.T, phis


def decompose_z_zeta(trajectory, g=None, kernel="discrete"):
    """Split a path into the stochastic convolution ``zeta`` and the remainder ``z = u - zeta``.

    ``kernel="discrete"`` convolves the increments with the solver's own
    implicit heat propagator, so that ``z`` carries exactly the drift and
    control parts of the scheme. ``kernel="spectral"`` uses the exact heat
    semigroup on the resolved sine modes instead; the two agree for smooth
    noise but differ on the unresolved high modes of white noise.
    """
    if trajectory.noise_record is None:
        raise NoNoiseRecordError("trajectory was integrated without keep_noise=True")
    if trajectory.diagnostics.get("save_stride", 1) != 1:
        raise ValueError("decomposition needs every time step (save_stride=1)")
    if kernel not in ("discrete", "spectral"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if g is None:
        g = GCoefficient(**trajectory.diagnostics.get("g", {}))
    if not g.bounded:
        raise ValueError("decomposition is defined for the bounded-g regime")
    params, grid, dt = trajectory.params, trajectory.grid, trajectory.dt
    stepper = Stepper(grid, params, dt, g)
    maps = _spectral_maps(grid, params.nu, dt)
    sq = math.sqrt(params.epsilon)
    U = trajectory.values
    Z = np.zeros_like(U)
    for k in range(U.shape[0] - 1):
        kick = sq * g(U[k]) * trajectory.noise_record[k]
        Z[k + 1] = _zeta_step(kernel, stepper, *maps, Z[k], kick[None, :])[0]
    zeta = Trajectory(grid, trajectory.times, Z, params, dt, None, {"kernel": kernel})
    z = Trajectory(grid, trajectory.times, U - Z, params, dt, None, {"kernel": kernel})
    return Decomposition(z, zeta, float(np.max(np.abs(Z))))


def zeta_star_samples(config, eps, n_samples, kernel="discrete", threads=1):
    """``sup_{t,x} |zeta|`` for paths ``0..n-1``, without storing the noise."""
    params = config.params.replace(epsilon=eps)
    grid, dt = config.grid, config.dt
    N = steps_for(config.T, dt)
    if not config.g.bounded:
        raise ValueError("decomposition is defined for the bounded-g regime")
    sq = math.sqrt(eps)
    maps = _spectral_maps(grid, params.nu, dt)

    def chunk(streams):
        st = Stepper(grid, params, dt, config.g)
        sampler = NoiseSampler(config.spec, grid, dt)
        U = np.tile(np.asarray(config.u0, float), (streams.size, 1))
        Z = np.zeros_like(U)
        best = np.zeros(streams.size)
        for k in range(N):
            dW = sampler.draw(k, streams)
            kick = sq * config.g(U) * dW
            ctrl = None if config.control is None else config.control[k]
            U = st.step(U, dW=dW, ctrl=ctrl, sqrt_eps=sq)
            st.check(U, k + 1)
            Z = _zeta_step(kernel, st, *maps, Z, kick)
            np.maximum(best, np.max(np.abs(Z), axis=1), out=best)
        return best

    return np.concatenate(_map(chunk, _chunks(n_samples), threads))


# --------------------------------------------------------------------------
# Estimator sanity
# --------------------------------------------------------------------------

def wilson_coverage(p=0.05, n=200, repetitions=1000, seed=0, confidence=0.95):
    """Fraction of Wilson intervals covering ``p`` over seeded Bernoulli streams.

    Bernoulli draws are ``1{Z < Phi^-1(p)}`` from the Philox normal stream,
    one stream per repetition.
    """
    cut = _gauss.ppf(p)
    z = _hot.standard_normals(seed, np.arange(repetitions), 0, n)
    hits = np.count_nonzero(z < cut, axis=1)
    covered = 0
    for k in hits:
        lo, hi = wilson_interval(int(k), n, confidence)
        covered += lo <= p <= hi
    return covered / repetitions


def exact_wilson_coverage(p, n, confidence=0.95):
    """Binomial-exact coverage probability of the Wilson interval."""
    from scipy.stats import binom
    ks = np.arange(n + 1)
    inside = np.array([lo <= p <= hi for lo, hi in (wilson_interval(k, n, confidence) for k in ks)])
    return float(np.sum(binom.pmf(ks, n, p)[inside]))
