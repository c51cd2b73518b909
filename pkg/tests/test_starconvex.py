import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prise.errors import InvalidConfig, LambdaOutOfRange, MuTooSmall, NonpositiveMu
from prise.starconvex import (
    PAPER_PRESETS, LambdaMode, NegativeGapWarning, StarConvexConfig, certify_star_convexity,
    deeplk_gaps, gap_condition1, gap_condition2, interpolate_omega, lemma2_check,
    near_optimality_bound, sample_linf_ball,
)

finite = st.floats(-1e3, 1e3)


def test_interpolation():
    a, b = np.zeros(8), np.full(8, 2.0)
    np.testing.assert_array_equal(interpolate_omega(a, b, 0.0), a)
    np.testing.assert_array_equal(interpolate_omega(a, b, 1.0), b)
    np.testing.assert_array_equal(interpolate_omega(a, b, 0.5), np.ones(8))
    rng = np.random.default_rng(0)
    x, y, lam = rng.normal(size=8), rng.normal(size=8), 0.3
    np.testing.assert_allclose(interpolate_omega(x, y, lam), [(1 - lam) * p + lam * q for p, q in zip(x, y)])
    with pytest.raises(LambdaOutOfRange):
        interpolate_omega(x, y, 1.5)


def test_condition1_plug_in_values():
    assert gap_condition1(0.0, 9.0, [0.0], [3.0], 2.0) == 0.0
    assert gap_condition1(0.0, 9.0, [0.0], [3.0], 4.0) == 9.0
    assert gap_condition1(1.0, 1.0, [2.0], [2.0], 5.0) == 0.0


def test_condition2_plug_in_values():
    assert gap_condition2(0.0, 1.0, 4.0, [0.0], [2.0], 0.5, 2.0) == 0.0
    assert gap_condition2(0.0, 3.0, 1.0, [0.0], [2.0], 0.5, 0.0) == 2.5
    assert gap_condition2(2.0, 2.0, 7.0, [0.0], [5.0], 0.0, 3.0) == 0.0
    assert gap_condition2(2.0, 7.0, 7.0, [0.0], [5.0], 1.0, 3.0) == 0.0


def test_deeplk_gaps():
    upper, lower = deeplk_gaps(3.0, 3.0, 5.0, [0.0], [1.0], 0.0)
    assert upper == lower == 0.0
    upper, lower = deeplk_gaps(1.0, 1.0, 0.5, [0.0], [1.0], 0.0)
    assert upper == lower == 1.5
    assert deeplk_gaps(0.0, 1.0, 4.0, [0.0], [2.0], 0.5)[0] == 0.0
    assert deeplk_gaps(0.0, 0.0, 0.0, np.zeros(8), np.ones(8), 0.5)[0] == 8.0


def test_lemma2_plug_in_values():
    res = lemma2_check(1.0, 5.0, 4.0, 0.3, 2.0)
    assert res.lhs == pytest.approx(res.rhs, abs=1e-12) and res.holds
    res = lemma2_check(1.0, 5.0, 4.0, 0.3, 3.0)
    assert res.holds and res.lhs < res.rhs
    res = lemma2_check(2.0, 5.0, 4.0, 0.0, 2.0)
    assert (res.lhs, res.rhs) == (2.0, 1.0) and not res.holds
    with pytest.raises(MuTooSmall):
        lemma2_check(1.0, 5.0, 4.0, 0.3, 1.5)
    assert lemma2_check(1.0, 5.0, 4.0, 0.3, 1.5, certified=False).lhs > 0


def test_lemma2_deeplk_lower_zero_when_condition2_tight():
    # a mu=2 landscape meeting the second condition with equality
    h_star, h_omega, d, lam = 1.0, 5.0, 4.0, 0.3
    h_tilde = (1 - lam) * h_star + lam * h_omega - lam * (1 - lam) * d
    assert gap_condition2(h_star, h_tilde, h_omega, [0.0], [2.0], lam, 2.0) == pytest.approx(0.0, abs=1e-12)
    assert deeplk_gaps(h_star, h_tilde, h_omega, [0.0], [2.0], lam)[1] == pytest.approx(0.0, abs=1e-12)


def test_near_optimality_bound():
    assert near_optimality_bound(3.0, 3.0, 2.0) == 0.0
    assert near_optimality_bound(8.0, 0.0, 2.0) == 8.0
    omega_star, omega = np.zeros(8), np.arange(8.0)
    h = float(((omega - omega_star) ** 2).sum())
    assert near_optimality_bound(h, 0.0, 2.0) == h
    with pytest.raises(NonpositiveMu):
        near_optimality_bound(1.0, 0.0, 0.0)
    with pytest.warns(NegativeGapWarning):
        near_optimality_bound(0.0, 1.0, 2.0)


@settings(max_examples=100, deadline=None)
@given(h_star=finite, h_tilde=finite, h_omega=finite, lam=st.floats(0, 1), mu=st.floats(0, 10),
       scale=st.floats(0.01, 100))
def test_gaps_nonnegative_and_positively_homogeneous(h_star, h_tilde, h_omega, lam, mu, scale):
    a, b = np.zeros(2), np.array([1.0, -2.0])
    tilde = interpolate_omega(a, b, lam)
    e = gap_condition1(h_star, h_tilde, a, tilde, mu)
    x = gap_condition2(h_star, h_tilde, h_omega, a, b, lam, mu)
    assert e >= 0 and x >= 0
    assert gap_condition1(scale * h_star, scale * h_tilde, a, tilde, scale * mu) == pytest.approx(
        scale * e, rel=1e-9, abs=1e-7)
    assert gap_condition2(scale * h_star, scale * h_tilde, scale * h_omega, a, b, lam, scale * mu) == pytest.approx(
        scale * x, rel=1e-9, abs=1e-7)


def test_config_validation_and_presets():
    with pytest.raises(LambdaOutOfRange):
        StarConvexConfig(lam=1.2)
    with pytest.raises(InvalidConfig):
        StarConvexConfig(radius=0)
    assert StarConvexConfig(lam=0.5).lambdas() == (0.5,)
    grid = StarConvexConfig(lam=0.55, lambda_mode=LambdaMode.SAMPLED_MAX).lambdas()
    assert 0.55 in grid and 0.1 in grid and 0.9 in grid and len(grid) == 10
    google = StarConvexConfig.preset("GoogleEarth")
    assert (google.mu, google.lam, google.rho, google.n_samples) == (4.0, 0.5, 0.2, 4)
    assert set(PAPER_PRESETS) == {"mscoco", "googleearth", "googlemap"}


def test_sample_linf_ball():
    rng = np.random.default_rng(1)
    center = np.arange(8.0)
    pts = sample_linf_ball(center, 1e-9, 100, rng)
    assert np.abs(pts - center).max() <= 1e-9
    pts = sample_linf_ball(center, 5.0, 10_000, np.random.default_rng(2))
    assert np.abs(pts.mean(axis=0) - center).max() < 5.0 / 50
    a = sample_linf_ball(center, 2.0, 5, np.random.default_rng(3))
    b = sample_linf_ball(center, 2.0, 5, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_certify_quadratic():
    omega_star = np.random.default_rng(4).normal(size=8)
    rep = certify_star_convexity(lambda w: float(((w - omega_star) ** 2).sum()), omega_star,
                                 StarConvexConfig(mu=2.0, lambda_mode="sampled_max"), rng=0)
    assert rep.certified and rep.max_gap < 1e-9


def test_certify_refutes_spurious_basin():
    omega_star = np.zeros(8)
    c = np.full(8, 3.0)
    loss = lambda w: min(float((w ** 2).sum()), float(((w - c) ** 2).sum()) + 0.1)
    rep = certify_star_convexity(loss, omega_star, StarConvexConfig(mu=0.5, radius=6, lambda_mode="sampled_max"),
                                 n_rays=256, rng=0)
    assert not rep.certified and rep.max_gap > 0.01
    assert 0 < rep.violated_fraction <= 1


def test_certify_constant_loss_edge():
    const = lambda w: 1.0
    assert certify_star_convexity(const, np.zeros(8), StarConvexConfig(mu=0.0), rng=0).certified
    assert not certify_star_convexity(const, np.zeros(8), StarConvexConfig(mu=0.1), rng=0).certified


def test_report_json(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = certify_star_convexity(lambda w: 1.0, np.zeros(8), StarConvexConfig(mu=0.0), n_rays=4, rng=0)
    path = tmp_path / "r.json"
    rep.to_json(path)
    data = json.loads(path.read_text())
    assert list(data) == ["mu", "lambda", "n_samples", "max_eps", "mean_eps", "max_xi", "mean_xi",
                          "violated_fraction", "certified"]
