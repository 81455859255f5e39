import numpy as np
import pytest

from sgbh import GCoefficient, Grid, ModelParams, NoiseSpec, integrate
from sgbh.errors import NoContractionError
from sgbh.grid import eigenfunctions
from sgbh.mild import picard_batch, picard_mild_oracle


def test_heat_converges_in_one_iteration():
    g = Grid(31)
    phi = eigenfunctions(g, 1)[0]
    tr = picard_mild_oracle(phi, ModelParams(nu=0.5, epsilon=0.0), g, 0.1, 1e-3)
    assert tr.diagnostics["iterations"] == 1
    # remaining error is the spatial quadrature of the sampled mode
    assert np.max(np.abs(tr.final - np.exp(-0.5 * np.pi**2 * 0.1) * phi)) < 1e-3


def test_geometric_residuals_in_small_ball():
    g = Grid(31)
    u0 = 0.1 * eigenfunctions(g, 1)[0]
    params = ModelParams(nu=0.1, alpha=1.0, beta=1.0, epsilon=0.0)
    res = np.array(picard_mild_oracle(u0, params, g, 0.05, 1e-3).diagnostics["residuals"])
    assert res[-1] < 1e-10
    assert np.all(res[1:] / res[:-1] < 0.9)


def test_deterministic_benchmark_agrees_with_stepper():
    g = Grid(31)
    u0 = 0.5 * eigenfunctions(g, 1)[0]
    params = ModelParams(nu=0.1, alpha=1.0, beta=1.0, gamma=1.0, delta=1, epsilon=0.0)
    oracle = picard_mild_oracle(u0, params, g, 0.1, 1e-3)
    tr, _ = integrate(u0, params, g, 0.1, 1e-3)
    assert np.max(np.abs(oracle.values - tr.values)) <= 5e-3


def test_shared_noise_paired_paths():
    g, dt, T = Grid(15), 1e-3, 0.05
    params = ModelParams(nu=0.1, alpha=1.0, beta=1.0, epsilon=0.25)
    coeff = GCoefficient("bounded_sigmoid", 1.0, 1.0)
    u0 = 0.5 * eigenfunctions(g, 1)[0]
    tr, _ = integrate(u0, params, g, T, dt, NoiseSpec("white", seed=4), coeff, keep_noise=True)
    oracle = picard_mild_oracle(u0, params, g, T, dt, tr.noise_record, coeff)
    rel = g.norm(oracle.final - tr.final) / g.norm(tr.final)
    assert rel < 0.2


def test_scale_guard():
    with pytest.raises(ValueError):
        picard_mild_oracle(np.zeros(127), ModelParams(epsilon=0.0), Grid(127), 0.1, 1e-3)
    with pytest.raises(ValueError):
        picard_mild_oracle(np.zeros(15), ModelParams(epsilon=0.0), Grid(15), 0.5, 1e-3)


def test_no_contraction_reports_residual():
    g = Grid(31)
    u0 = 5.0 * eigenfunctions(g, 1)[0]
    params = ModelParams(nu=0.1, alpha=1.0, beta=5.0, delta=2, epsilon=0.0)
    with pytest.raises(NoContractionError) as err:
        picard_batch(u0, params, g, 0.25, 1e-2)
    assert err.value.residuals
    with pytest.raises(NoContractionError) as err:
        picard_mild_oracle(0.5 * eigenfunctions(g, 1)[0], params.replace(beta=1.0, delta=1), g, 0.1, 1e-3,
                           max_iter=2)
    assert err.value.residual > 1e-10
    assert "residual" in err.value.to_dict()
