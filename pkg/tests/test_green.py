import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatlab.errors import DomainError
from heatlab.green import (
    T_SWITCH,
    fit_exponent,
    gaussian_bound_margin,
    gaussian_envelope,
    green,
    green_image,
    green_spectral,
    image_pairs,
    kernel_composition,
    lemma_b1_integral,
    spectral_modes,
)

# Frozen from both series evaluated independently (they agree to 1e-13 here).
G_AT_0_1_CENTRE = 0.745693231


def _white_space_oracle(t, x, y, K=400_000):
    # int_0^t int |G(x,z) - G(y,z)|^2 = stationary closed form minus the transient mode sum
    stat = x * (1 - x) / 2 + y * (1 - y) / 2 - min(x, y) * (1 - max(x, y))
    k = np.arange(1, K + 1) * math.pi
    lam = k * k
    trans = np.sum(2 * (np.sin(k * x) - np.sin(k * y)) ** 2 * np.exp(-2 * lam * t) / (2 * lam))
    return stat - trans


def test_series_agree_on_lattice():
    pts = np.arange(1, 34) / 34
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    for t in (1e-3, 1e-2, 1e-1, 1.0):
        assert np.max(np.abs(green_spectral(t, X, Y) - green_image(t, X, Y))) < 1e-9


def test_centre_value():
    assert green_spectral(0.1, 0.5, 0.5) == pytest.approx(G_AT_0_1_CENTRE, abs=1e-9)
    assert green_image(0.1, 0.5, 0.5) == pytest.approx(G_AT_0_1_CENTRE, abs=1e-9)


def test_small_time_matches_free_gaussian():
    # for t = 1e-4 the reflected images are below double precision at the centre
    assert green_image(1e-4, 0.5, 0.5) == pytest.approx(1 / math.sqrt(4 * math.pi * 1e-4), rel=1e-12)


def test_truncation_sizes():
    assert spectral_modes(T_SWITCH) <= 5
    assert image_pairs(T_SWITCH) <= 3


def test_dispatch_uses_both_branches():
    t = np.array([0.01, 0.5])
    got = green(t, 0.3, 0.6)
    assert got[0] == pytest.approx(float(green_image(0.01, 0.3, 0.6)), abs=1e-13)
    assert got[1] == pytest.approx(float(green_spectral(0.5, 0.3, 0.6)), abs=1e-13)


@pytest.mark.parametrize("t", [0.0, -1e-3])
def test_nonpositive_time_rejected(t):
    with pytest.raises(DomainError):
        green(t, 0.5, 0.5)


def test_bad_tolerance_rejected():
    with pytest.raises(ValueError):
        green_spectral(0.5, 0.5, 0.5, tol=0)


def test_boundary_is_zero():
    for t in (1e-3, 0.2, 2.0):
        assert abs(green(t, 0.0, 0.3)) < 1e-12
        assert abs(green(t, 1.0, 0.3)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(t=st.floats(1e-4, 2.0), x=st.floats(0, 1), y=st.floats(0, 1))
def test_symmetry_positivity_and_bound(t, x, y):
    g = float(green(t, x, y))
    assert g == pytest.approx(float(green(t, y, x)), abs=1e-12)
    assert g >= -1e-12
    assert gaussian_bound_margin(t, x, y) >= -1e-12
    assert g <= gaussian_envelope(t, x, y) + 1e-12


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.01, 0.3), t=st.floats(0.01, 0.3), x=st.floats(0.05, 0.95), y=st.floats(0.05, 0.95))
def test_semigroup(s, t, x, y):
    assert kernel_composition(s, t, x, y) == pytest.approx(float(green(s + t, x, y)), rel=1e-6, abs=1e-9)


def test_mass_decays_like_first_mode():
    z = (np.arange(20000) + 0.5) / 20000
    mass = np.mean(green(1.0, 0.5, z))
    # int_0^1 G_t(1/2, z) dz = sum_k odd (4/(k pi)) sin(k pi/2) e^{-k^2 pi^2 t}
    k = np.arange(1, 40, 2)
    ref = np.sum(4 / (k * math.pi) * np.sin(k * math.pi / 2) * np.exp(-(k * math.pi) ** 2))
    assert mass == pytest.approx(ref, rel=1e-7)


def test_tail_integral_alpha2_exact():
    # int_0^t int G^2 = white-noise variance, known in closed form at t large
    t, x = 0.5, 0.5
    k = np.arange(1, 200) * math.pi
    ref = x * (1 - x) / 2 - np.sum(np.sin(k * x) ** 2 * np.exp(-2 * k * k * t) / (k * k))
    got = lemma_b1_integral("tail", 2.0, s=0.0, t=t, x=x)
    assert got == pytest.approx(ref, rel=1e-4)


@pytest.mark.parametrize("h", [1e-3, 1e-2, 1e-1])
def test_tail_integral_short_windows(h):
    # stationary part x(1-x)/2 in closed form; only the decaying remainder is summed
    k = np.arange(1, 4000) * math.pi
    ref = 0.125 - np.sum(np.sin(k * 0.5) ** 2 * np.exp(-2 * k * k * h) / (k * k))
    got = lemma_b1_integral("tail", 2.0, s=0.5 - h, t=0.5, x=0.5)
    assert got == pytest.approx(ref, rel=1e-4)


@pytest.mark.parametrize("h", [1e-3, 1e-2, 1e-1])
def test_space_increment_against_modes(h):
    got = lemma_b1_integral("space_incr", 2.0, t=0.5, x=0.5, y=0.5 + h)
    assert got == pytest.approx(_white_space_oracle(0.5, 0.5, 0.5 + h), rel=2e-4)


@pytest.mark.parametrize("h", [1e-3, 1e-2, 1e-1])
def test_time_increment_against_modes(h):
    t, x = 0.5, 0.5
    s = t - h
    k = np.arange(1, 4000) * math.pi
    lam = k * k
    kept = np.expm1(-lam * h) ** 2 * -np.expm1(-2 * lam * s)
    ref = x * (1 - x) / 2 - np.sum(np.sin(k * x) ** 2 * (1 - kept) / lam)
    got = lemma_b1_integral("time_incr", 2.0, t=t, x=x, s=s)
    assert got == pytest.approx(ref, rel=1e-4)


def test_alpha_ranges_enforced():
    with pytest.raises(ValueError):
        lemma_b1_integral("space_incr", 1.4, t=0.5, x=0.5, y=0.6)
    with pytest.raises(ValueError):
        lemma_b1_integral("tail", 3.0, t=0.5, x=0.5, s=0.1)
    with pytest.raises(ValueError):
        lemma_b1_integral("bogus", 2.0, t=0.5, x=0.5)


def test_degenerate_scales_vanish():
    assert lemma_b1_integral("space_incr", 2.0, t=0.5, x=0.4, y=0.4) == 0.0
    assert lemma_b1_integral("tail", 2.0, t=0.5, x=0.4, s=0.5) == 0.0


def test_fit_exponent_recovers_power_law():
    hs = np.logspace(-4, -1, 6)
    fit = fit_exponent(zip(hs, 3.0 * hs ** 0.75))
    assert fit.slope == pytest.approx(0.75, abs=1e-12)
    assert fit.constant == pytest.approx(3.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_exponent_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2), (3, 3)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 0), (3, 3), (4, 4)])
