import math

import numpy as np
import pytest

from heatlab.errors import ConvergenceError
from heatlab.grid import GridSpec, ScalarField
from heatlab.mild import (
    DriftSpec,
    InitialData,
    SpectralState,
    convolve_full,
    convolve_mild,
    initial_field,
    initial_term,
    mild_at,
    mild_weights,
    modes_for_budget,
    omitted_mode_variance,
    psi_functional,
    sample_white_at,
    sample_white_solution,
    solve_quasilinear,
    white_solution_covariance,
    white_solution_variance,
)
from heatlab.noise import NoiseSpec, white_noise_field

PI = math.pi


def _decay_sine(t, x, c=0.0):
    return np.exp(-(PI * PI - c) * t) * np.sin(PI * x)


# ---- grid plumbing -----------------------------------------------------------

def test_grid_validation_and_lookup():
    g = GridSpec(0.5, 8, 16)
    assert g.dt == 0.0625 and g.dx == 0.0625
    assert g.node_index(0.25, 0.5) == (4, 8)
    with pytest.raises(ValueError):
        g.node_index(0.26, 0.5)
    with pytest.raises(ValueError):
        GridSpec(0.0, 4, 4)
    assert g.is_aligned(4) and not g.is_aligned(3)


def test_field_csv_round_trip(tmp_path):
    g = GridSpec(1.0, 3, 4)
    f = ScalarField.from_function(g, lambda t, x: np.sin(t + 3 * x) / 7)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    back = ScalarField.from_csv(path, g)
    assert np.array_equal(back.values, f.values)
    assert path.read_text().splitlines()[0] == "t,x,value"


def test_dirichlet_flag_checked():
    g = GridSpec(1.0, 2, 2)
    with pytest.raises(ValueError):
        ScalarField(g, np.ones((3, 3)), dirichlet=True)


# ---- inputs -----------------------------------------------------------------------

def test_drift_lipschitz_checked():
    with pytest.raises(ValueError):
        DriftSpec(lambda u: u ** 2, 1.0, "square")
    assert DriftSpec(np.sin, 1.0, "sin")(np.array([0.0]))[0] == 0.0


def test_incompatible_u0_accepted():
    u0 = InitialData(lambda y: np.ones_like(y), name="one")
    assert initial_term(u0, 1e-3, 0.5) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        InitialData(lambda y: np.ones_like(y), boundary_compatible=True)


# ---- initial term -----------------------------------------------------------------

@pytest.mark.parametrize("t", [1e-6, 1e-3, 0.05, 0.5, 2.0])
def test_initial_term_sine(t):
    x = np.linspace(0, 1, 33)
    got = initial_term(InitialData.sine(), t, x)
    assert np.max(np.abs(got - _decay_sine(t, x))) < 1e-12


def test_initial_term_small_time_limit():
    got = initial_term(InitialData.parabola(), 1e-9, np.array([0.25, 0.5]))
    assert np.allclose(got, [0.1875, 0.25], atol=1e-7)
    assert initial_term(InitialData.parabola(), 0.0, 0.3) == pytest.approx(0.21)


def test_initial_field_rows():
    g = GridSpec(0.25, 4, 8)
    f = initial_field(InitialData.sine(2), g)
    assert np.allclose(f.values, np.exp(-4 * PI * PI * g.t_nodes)[:, None] * np.sin(2 * PI * g.x_nodes), atol=1e-12)


# ---- convolution ----------------------------------------------------------------

def test_convolution_of_constant():
    # int_0^t int G = sum_k odd (4/(k pi)) sin(k pi x) (1 - e^{-lam t}) / lam
    g = GridSpec(0.5, 64, 64)
    f = convolve_full(ScalarField(g, np.ones(g.shape("cell")), "cell"), g)
    k = np.arange(1, 4001, 2) * PI
    x = g.x_nodes
    ref = (4 / k * np.sin(np.outer(x, k)) * (-np.expm1(-k * k * 0.5)) / (k * k)).sum(axis=1)
    assert np.max(np.abs(f.values[-1] - ref)) < 1e-6


def test_convolution_of_sine_input():
    g = GridSpec(0.5, 512, 512)
    theta = ScalarField.from_function(g, lambda t, x: np.sin(PI * x), "cell")
    f = convolve_full(theta, g)
    tt, xx = np.meshgrid(g.t_nodes, g.x_nodes, indexing="ij")
    ref = -np.expm1(-PI * PI * tt) / (PI * PI) * np.sin(PI * xx)
    # the cell-midpoint input differs from sin by O(dx^2)
    assert np.max(np.abs(f.values - ref)) < 1e-6


def test_sparse_and_full_convolution_agree():
    g = GridSpec(0.5, 32, 32)
    theta = white_noise_field(np.random.default_rng(0), g)
    full = convolve_full(theta, g)
    nodes = [(0.5, 0.5), (0.25, 0.125), (0.5, 0.0)]
    sparse = convolve_mild(theta, eval_nodes=nodes)
    vals = mild_at(theta, nodes)
    for (t, x), v in zip(nodes, vals):
        assert full.at(t, x) == pytest.approx(v, abs=1e-12)
        assert sparse.at(t, x) == pytest.approx(v, abs=1e-12)
    assert np.isnan(sparse.values).sum() == sparse.values.size - 3


def test_convolution_is_linear():
    g = GridSpec(0.5, 16, 16)
    rng = np.random.default_rng(1)
    a, b = (ScalarField(g, rng.normal(size=(16, 16)), "cell") for _ in range(2))
    combo = ScalarField(g, 2 * a.values - 3 * b.values, "cell")
    lhs = convolve_full(combo, g).values
    rhs = 2 * convolve_full(a, g).values - 3 * convolve_full(b, g).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_mild_weights_support():
    g = GridSpec(0.5, 16, 16)
    w = mild_weights(g, 8, 8)
    assert np.all(w[8:] == 0)
    assert np.all(mild_weights(g, 8, 0) == 0)
    assert w.sum() == pytest.approx(convolve_full(ScalarField(g, np.ones((16, 16)), "cell"), g).at(0.25, 0.5))


# ---- white-noise solution -------------------------------------------------------

def test_variance_closed_form_against_series():
    for t in (0.01, 0.1, 0.5):
        for x in (0.1, 0.5, 0.8):
            trunc = white_solution_variance(t, x, K=200_000)
            assert float(white_solution_variance(t, x)) == pytest.approx(float(trunc), abs=2e-6)
    assert float(white_solution_variance(math.inf, 0.5)) == 0.125


def test_omitted_variance_and_budget():
    assert omitted_mode_variance(64) == pytest.approx(7.855e-4, rel=1e-3)
    K = modes_for_budget(1e-4)
    assert omitted_mode_variance(K) < 1e-4 <= omitted_mode_variance(K - 1)


def test_covariance_consistency():
    p = (0.5, 0.3)
    assert white_solution_covariance(p, p) == pytest.approx(float(white_solution_variance(0.5, 0.3)), abs=1e-15)
    q = (0.4, 0.6)
    assert white_solution_covariance(p, q) == pytest.approx(white_solution_covariance(p, q, K=5000), abs=1e-9)
    assert white_solution_covariance((0.0, 0.5), q) == 0.0


def test_white_sampler_second_moments():
    rng = np.random.default_rng(3)
    K = 64
    samples = np.array([sample_white_at(rng, [0.25, 0.5], [0.5], K)[:, 0] for _ in range(20000)])
    var = samples.var(axis=0)
    assert var[1] == pytest.approx(float(white_solution_variance(0.5, 0.5, K)), rel=0.04)
    prod = samples[:, 0] * samples[:, 1]
    se = prod.std() / math.sqrt(len(prod))
    assert abs(prod.mean() - white_solution_covariance((0.25, 0.5), (0.5, 0.5), K)) < 4 * se


def test_white_solution_boundary_and_start():
    g = GridSpec(0.5, 16, 16)
    f = sample_white_solution(np.random.default_rng(0), g)
    assert np.all(f.values[0] == 0)
    assert np.all(f.values[:, 0] == 0) and np.all(f.values[:, -1] == 0)


def test_spectral_state_validation():
    with pytest.raises(ValueError):
        SpectralState(0)
    with pytest.raises(ValueError):
        SpectralState(2, np.array([np.nan, 0.0]))
    s = SpectralState(4).step(np.random.default_rng(0), 0.1)
    assert s.t_current == pytest.approx(0.1)


# ---- quasi-linear equation --------------------------------------------------------

def test_psi_linear_drift_analytic():
    g = GridSpec(1.0, 256, 256)
    eta = ScalarField.zeros(g)
    U = psi_functional(eta, InitialData.sine(), DriftSpec.linear(-1.0))
    tt, xx = np.meshgrid(g.t_nodes, g.x_nodes, indexing="ij")
    assert np.max(np.abs(U.values - _decay_sine(tt, xx, c=-1.0))) < 1e-4


def test_psi_zero_drift_is_initial_plus_eta():
    g = GridSpec(0.5, 8, 8)
    eta = ScalarField.from_function(g, lambda t, x: t * x * (1 - x))
    U = psi_functional(eta, InitialData.zero(), DriftSpec.zero())
    assert np.array_equal(U.values, eta.values)


def test_psi_reports_divergence():
    g = GridSpec(1.0, 16, 16)
    eta = ScalarField.from_function(g, lambda t, x: np.sin(PI * x) * t)
    with pytest.raises(ConvergenceError) as err:
        psi_functional(eta, InitialData.zero(), DriftSpec.linear(5.0), max_iter=3)
    assert err.value.iterations == 3 and err.value.residual > 0


def test_solve_quasilinear_is_deterministic():
    g = GridSpec(0.5, 16, 16)
    for spec in (NoiseSpec.white(), NoiseSpec.kac_stroock(8), NoiseSpec.donsker(4)):
        a = solve_quasilinear(spec, InitialData.sine(), DriftSpec(np.sin, 1.0, "sin"), g, np.random.default_rng(9))
        b = solve_quasilinear(spec, InitialData.sine(), DriftSpec(np.sin, 1.0, "sin"), g, np.random.default_rng(9))
        assert np.array_equal(a.values, b.values)
        assert np.all(a.values[:, 0] == 0) and np.all(a.values[:, -1] == 0)
