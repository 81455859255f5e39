import numpy as np
import pytest

from sgbh import _hot
from sgbh import GCoefficient, Grid, ModelParams, NoiseSpec, integrate, run_batch
from sgbh.dynamics import p_nl
from sgbh.errors import AlignmentError, BlowupError, CFLError
from sgbh.grid import eigenfunctions, project
from sgbh.mild import picard_mild_oracle
from sgbh.solver import (
    Stepper, central_difference, default_monitor_p, energy_audit, step_semi_implicit,
)

BENCH = ModelParams(nu=0.1, alpha=1.0, beta=1.0, gamma=1.0, delta=1, epsilon=0.0)


def mode1(grid, amp=1.0):
    return amp * eigenfunctions(grid, 1)[0]


@pytest.mark.parametrize("params", [BENCH, ModelParams(nu=2.0, alpha=3.0, beta=4.0, gamma=2.0, delta=3,
                                                       epsilon=0.0)])
def test_zero_is_fixed_point(params, backend):
    g = Grid(15)
    st = Stepper(g, params, 1e-3)
    zero = np.zeros((2, g.n))
    out = _hot.step_batch(zero, 1e-3, g.h, params.alpha, params.beta, params.gamma, params.delta, 0.0,
                          _hot.G_CONSTANT, 1.0, 1.0, None, None, np.ones(2), st.factor, backend=backend)
    assert np.all(out == 0.0)
    spec = NoiseSpec("colored", seed=1)
    tr, _ = integrate(np.zeros(g.n), params, g, 0.05, 1e-3, spec)
    assert np.all(tr.values == 0.0)


def test_heat_mode_decay():
    g = Grid(127)
    tr, _ = integrate(mode1(g), ModelParams(nu=1.0, epsilon=0.0), g, 0.1, 1e-4)
    ratio = project(g, tr.final, 1) / project(g, tr.values[0], 1)
    assert ratio == pytest.approx(np.exp(-np.pi**2 * 0.1), abs=5e-3)


def test_heat_matches_discrete_spectral_oracle():
    g, nu, dt, T = Grid(31), 0.7, 1e-3, 0.2
    u0 = g.sample(lambda x: x * (1 - x) * (1 + 3 * x))
    tr, _ = integrate(u0, ModelParams(nu=nu, epsilon=0.0), g, T, dt)
    # implicit Euler damps discrete mode j by (1 + nu dt mu_j)^-1 per step
    mu = g.laplacian_eigenvalues()
    V = eigenfunctions(g, g.n)
    coeff = g.h * V @ u0
    expected = (coeff * (1 + nu * dt * mu) ** (-round(T / dt))) @ V
    assert np.max(np.abs(tr.final - expected)) < 1e-12
    assert g.norm(tr.final) ** 2 == pytest.approx(np.sum((coeff * (1 + nu * dt * mu) ** -200) ** 2), abs=1e-12)


def test_heat_norm_against_continuum_semigroup():
    g, nu, T = Grid(255), 1.0, 0.05
    u0 = g.sample(lambda x: x * (1 - x))
    tr, _ = integrate(u0, ModelParams(nu=nu, epsilon=0.0), g, T, 1e-5)
    j = np.arange(1, 400)
    # sine coefficients of x(1-x): 4 sqrt2 / (j pi)^3 for odd j
    uh = np.where(j % 2 == 1, 4 * np.sqrt(2) / (j * np.pi) ** 3, 0.0)
    exact = np.sum(np.exp(-2 * nu * (j * np.pi) ** 2 * T) * uh**2)
    assert g.norm(tr.final) ** 2 == pytest.approx(exact, abs=1e-6)


def test_truncation_tail_gives_pure_heat():
    g = Grid(31)
    u0 = mode1(g, 3.0)
    assert g.norm(u0, 2) == pytest.approx(3.0)
    params = ModelParams(nu=0.1, alpha=1.0, beta=1.0, epsilon=1.0)
    heat = ModelParams(nu=0.1, epsilon=0.0)
    spec = NoiseSpec("colored", seed=3)
    out = step_semi_implicit(u0, params, g, 1e-3, dW=np.ones(g.n), R_trunc=1.0, p=2)
    ref = step_semi_implicit(u0, heat, g, 1e-3)
    np.testing.assert_array_equal(out, ref)
    tr, _ = integrate(u0, params, g, 0.01, 1e-3, spec, R_trunc=1.0, p=2)
    trh, _ = integrate(u0, heat, g, 0.01, 1e-3)
    np.testing.assert_array_equal(tr.final, trh.final)


def test_truncated_equals_untruncated_inside_ball():
    g = Grid(31)
    params = BENCH.replace(epsilon=0.01)
    spec = NoiseSpec("colored", seed=9)
    a, _ = integrate(mode1(g, 0.3), params, g, 0.1, 1e-3, spec, R_trunc=5.0)
    b, _ = integrate(mode1(g, 0.3), params, g, 0.1, 1e-3, spec)
    assert np.max([g.norm(u, default_monitor_p(1)) for u in a.values]) <= 5.0
    np.testing.assert_array_equal(a.values, b.values)


def _pairing(u, h, delta, p):
    return h * np.sum(np.abs(u) ** (p - 2) * u * central_difference(p_nl(u, delta), h))


@pytest.mark.parametrize("delta", [1, 2, 3, 4])
def test_d1_pairing_exact_for_matched_exponent(delta):
    # with p = delta + 2 the test function |u|^delta u equals p(u) whenever
    # delta is even or u >= 0, and sum f_i (f_{i+1} - f_{i-1}) telescopes
    rng = np.random.default_rng(delta)
    g = Grid(31)
    for _ in range(20):
        u = rng.normal(size=g.n)
        if delta % 2:
            u = np.abs(u)
        assert abs(_pairing(u, g.h, delta, delta + 2)) < 1e-10


def test_d1_pairing_second_order_otherwise():
    vals = []
    for n in (31, 63, 127, 255):
        g = Grid(n)
        u = g.sample(lambda x: np.sin(np.pi * x) + 0.5 * np.sin(2 * np.pi * x))
        vals.append(abs(_pairing(u, g.h, 1, 4)))
    rates = np.log2(np.array(vals[:-1]) / np.array(vals[1:]))
    assert np.all(rates > 1.8)
    assert vals[-1] < 1e-4


def test_d1_skew_symmetry():
    rng = np.random.default_rng(0)
    g = Grid(20)
    a, b = rng.normal(size=(2, g.n))
    assert g.inner(central_difference(a, g.h), b) == pytest.approx(-g.inner(a, central_difference(b, g.h)),
                                                                    abs=1e-12)


def test_blowup_and_cfl():
    g = Grid(15)
    with pytest.raises(CFLError) as err:
        integrate(mode1(g, 50.0), ModelParams(alpha=1.0, epsilon=0.0), g, 0.1, 1e-2)
    assert err.value.step == 0
    with pytest.raises(BlowupError):
        integrate(np.full(g.n, 1e13), ModelParams(epsilon=0.0), g, 0.1, 1e-2)
    with pytest.raises(BlowupError):
        integrate(np.full(g.n, np.nan), ModelParams(epsilon=0.0), g, 0.1, 1e-2)
    with pytest.raises(AlignmentError):
        integrate(np.zeros(g.n), ModelParams(epsilon=0.0), g, 0.1, 0.03)


def test_csv_export(tmp_path):
    g = Grid(7)
    tr, led = integrate(mode1(g), BENCH, g, 0.01, 1e-3, save_stride=5)
    tr.to_csv(tmp_path / "t.csv")
    led.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t," + ",".join(f"x_{i}" for i in range(1, 8))
    assert len(lines) == 1 + 3
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1:], tr.values)
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "t,lp_norm_p,dissipation,reaction"
    assert np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1).shape == (11, 4)


def test_energy_audit_zero():
    g = Grid(15)
    _, led = integrate(np.zeros(g.n), BENCH, g, 0.1, 1e-3, p=4)
    rep = energy_audit(led, BENCH, 4, np.zeros(g.n), g)
    assert rep.audited[0] == 0.0 and rep.mean_ratio == 0.0


def test_deterministic_long_run_is_finite():
    g = Grid(31)
    tr, led = integrate(mode1(g, 0.5), BENCH, g, 1.0, 1e-3, p=4)
    rep = energy_audit(led, BENCH, 4, tr.values[0], g)
    assert np.all(np.isfinite(tr.values)) and np.isfinite(rep.mean_ratio)


def test_monitor_stopping_time():
    g = Grid(31)
    tr, _ = integrate(mode1(g, 0.5), ModelParams(nu=0.1, epsilon=0.0), g, 0.2, 1e-3, p=2, monitor_R=0.4)
    norms = [g.norm(u, 2) for u in tr.values]
    first = next(t for t, v in zip(tr.times, norms) if v >= 0.4) if norms[0] >= 0.4 else None
    assert first == 0.0 and tr.diagnostics["tau_R"] == 0.0
    tr, _ = integrate(mode1(g, 0.5), ModelParams(nu=0.1, epsilon=0.0), g, 0.2, 1e-3, p=2, monitor_R=0.6)
    assert tr.diagnostics["tau_R"] == 0.2


def test_time_order_against_mild_oracle():
    g = Grid(31)
    u0 = mode1(g, 0.5)
    ref = picard_mild_oracle(u0, BENCH, g, 0.1, 1e-4).final
    errs = []
    for dt in (4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4):
        tr, _ = integrate(u0, BENCH, g, 0.1, dt)
        errs.append(np.max(np.abs(tr.final - ref)))
    # the spatial error is common to every rung, so the order is read off the
    # differences of consecutive errors
    d = -np.diff(errs)
    assert np.all(d > 0)
    orders = np.log2(d[:-1] / d[1:])
    assert np.all(orders >= 0.9)


def test_white_noise_mean_square_against_oracle():
    g = Grid(15)
    params = ModelParams(nu=0.1, epsilon=1.0)
    spec = NoiseSpec("white", seed=5)
    P, T, dt = 2000, 0.1, 1e-3
    U, _ = run_batch(np.zeros(g.n), params, g, T, dt, spec, GCoefficient("constant", 1.0),
                     streams=np.arange(P))
    # linear equation: E||u(T)||^2 is an exact discrete sum over modes
    mu = g.laplacian_eigenvalues()
    r = 1.0 / (1 + params.nu * dt * mu)
    N = round(T / dt)
    exact = dt * np.sum(r**2 * (1 - r ** (2 * N)) / (1 - r**2))
    assert np.mean(g.norm(U) ** 2) == pytest.approx(exact, rel=0.1)
