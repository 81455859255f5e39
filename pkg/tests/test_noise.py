import numpy as np
import pytest
from scipy import stats
from scipy.special import zeta

from sgbh import _hot
from sgbh.errors import AlignmentError, TraceConditionError
from sgbh.grid import Grid, eigenfunctions
from sgbh.noise import (
    NoiseSampler, NoiseSpec, brownian_sheet_checkpoint, sample_colored_increment,
    sample_increment, sample_white_increment, steps_for,
)

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    assert _hot.philox4x32(ctr, key) == expected


def test_philox_matches_randomgen_stream():
    randomgen = pytest.importorskip("randomgen")
    bg = randomgen.Philox(key=np.array([0, 0], dtype=np.uint64), counter=np.zeros(4, dtype=np.uint64),
                          number=4, width=32)
    raw = [int(v) for v in bg.random_raw(12)]
    # randomgen increments the counter before its first block
    ours = [w for c in (1, 2, 3) for w in _hot.philox4x32((c, 0, 0, 0), (0, 0))]
    assert raw == ours


def test_normals_backends_agree():
    a = _hot.standard_normals(123, np.arange(50), 7, 33, backend="numpy")
    b = _hot.standard_normals(123, np.arange(50), 7, 33, backend="numba")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_normals_counter_independence():
    # a path's draws do not depend on which other streams share the batch
    batch = _hot.standard_normals(5, np.array([3, 9, 11]), 2, 16)
    alone = _hot.standard_normals(5, np.array([9]), 2, 16)
    np.testing.assert_array_equal(batch[1], alone[0])


def test_normals_marginal_ks():
    z = _hot.standard_normals(99, np.arange(10_000), 0, 8)
    for col in (0, 3, 7):
        assert stats.kstest(z[:, col], "norm").pvalue > 0.01


def test_stream_correlation():
    N = 20_000
    a = _hot.standard_normals(1, np.zeros(1, int), 0, N)[0]
    b = _hot.standard_normals(1, np.ones(1, int), 0, N)[0]
    assert abs(np.corrcoef(a, b)[0, 1]) <= 4 / np.sqrt(N)


def test_trace_condition_boundary():
    NoiseSpec("colored", eta=0.26)
    with pytest.raises(TraceConditionError):
        NoiseSpec("colored", eta=0.25)
    with pytest.raises(TraceConditionError):
        NoiseSpec("colored", eta=0.1)


def test_trace_values():
    spec = NoiseSpec("colored", eta=0.5)
    assert spec.full_trace() == pytest.approx(zeta(2.0) / np.pi**2)
    assert spec.trace(Grid(31)) < spec.full_trace()
    # sum_{j>J} (j pi)^-2 lies between 1/(pi^2 (J+1)) and 1/(pi^2 J)
    tail = spec.full_trace() - NoiseSpec("colored", eta=0.5, J=128).trace()
    assert 1 / (np.pi**2 * 129) < tail < 1 / (np.pi**2 * 128)
    # eta = 1 squares the weights and the 128-mode tail drops below 1e-6
    rough = NoiseSpec("colored", eta=1.0)
    assert rough.full_trace() - NoiseSpec("colored", eta=1.0, J=128).trace() < 1e-6


def test_explicit_weights():
    spec = NoiseSpec("colored", q=(1.0,))
    assert spec.J == 1
    np.testing.assert_array_equal(spec.weights(), [1.0])
    with pytest.raises(ValueError):
        NoiseSpec("colored", q=(-1.0,))


def test_colored_single_mode_variance():
    g, dt = Grid(31), 1e-3
    # q_1 = lambda_1^-eta, phi_1(0.5)^2 = 2; node 16 of a 31-node grid is x = 0.5
    half = NoiseSampler(NoiseSpec("colored", eta=0.5, J=1), g, dt).covariance()
    assert half[15, 15] == pytest.approx(2 * np.pi**-2 * dt, rel=1e-12)
    spec = NoiseSpec("colored", eta=1.0, J=1)
    cov = NoiseSampler(spec, g, dt).covariance()
    assert cov[15, 15] == pytest.approx(2 * np.pi**-4 * dt, rel=1e-12)
    assert cov[15, 15] / dt == pytest.approx(0.020532, abs=1e-6)
    inc = sample_colored_increment(spec, g, dt).values
    np.testing.assert_allclose(inc / eigenfunctions(g, 1)[0], inc[15] / np.sqrt(2), rtol=1e-12)


def test_colored_covariance_mc():
    g, dt, N = Grid(31), 1e-2, 100_000
    spec = NoiseSpec("colored", eta=0.5, J=32, seed=4)
    s = NoiseSampler(spec, g, dt)
    X = s.draw(0, np.arange(N))
    exact = s.covariance()
    emp = X.T @ X / N
    assert np.linalg.norm(emp - exact) / np.linalg.norm(exact) <= 5 * np.sqrt(2 / N)
    sd = np.sqrt(np.diag(exact) / N)
    assert np.all(np.abs(X.mean(axis=0)) <= 4 * sd)


def test_white_increment_statistics():
    g, dt, N = Grid(15), 1e-3, 100_000
    s = NoiseSampler(NoiseSpec("white", seed=8), g, dt)
    X = s.draw(0, np.arange(N))
    var = X.var(axis=0)
    np.testing.assert_allclose(var, dt / g.h, rtol=5 * np.sqrt(2 / N))
    C = np.corrcoef(X.T)
    off = C[~np.eye(g.n, dtype=bool)]
    assert np.max(np.abs(off)) <= 5 / np.sqrt(N)
    integral = X.sum(axis=1) * g.h
    assert integral.var() == pytest.approx(dt * (1 - g.h), rel=5 * np.sqrt(2 / N))
    assert sample_white_increment(NoiseSpec("white"), g, dt).values.shape == (g.n,)


def test_regime_mismatch():
    with pytest.raises(ValueError):
        sample_white_increment(NoiseSpec("colored"), Grid(5), 0.1)
    with pytest.raises(ValueError):
        sample_colored_increment(NoiseSpec("white"), Grid(5), 0.1)


def test_increment_reproducible():
    spec = NoiseSpec("colored", seed=77, stream_id=5)
    a = sample_increment(spec, Grid(31), 1e-3, step=4)
    b = sample_increment(spec, Grid(31), 1e-3, step=4)
    np.testing.assert_array_equal(a, b)
    c = sample_increment(spec.with_stream(6), Grid(31), 1e-3, step=4)
    assert not np.array_equal(a, c)


def test_checkpoint_zero_and_alignment():
    spec, g = NoiseSpec("colored", seed=1), Grid(15)
    assert np.all(brownian_sheet_checkpoint(spec, g, 0.0, 0.01) == 0)
    with pytest.raises(AlignmentError):
        brownian_sheet_checkpoint(spec, g, 0.015, 0.01)
    with pytest.raises(AlignmentError):
        steps_for(0.1, 0.03)
    np.testing.assert_array_equal(brownian_sheet_checkpoint(spec, g, 0.05, 0.01),
                                  brownian_sheet_checkpoint(spec, g, 0.05, 0.01))


def test_checkpoint_variance_linear_in_t():
    spec, g, dt, N = NoiseSpec("colored", eta=0.5, J=15, seed=3), Grid(15), 0.01, 20_000
    slope = float(np.sum(spec.weights(g) ** 2 * eigenfunctions(g, 15)[:, 7] ** 2))
    for t in (0.02, 0.05):
        W = brownian_sheet_checkpoint(spec, g, t, dt, streams=np.arange(N))
        assert W[:, 7].var() == pytest.approx(slope * t, rel=5 * np.sqrt(2 / N))
