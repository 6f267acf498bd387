import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chaoscope.dynamics import LogisticParams, LorenzParams, MapId, StandardMapParams, lorenz_step
from chaoscope.lyapunov import (
    UNDETERMINED,
    ChaosLabel,
    HistogramSpec,
    NoThresholdError,
    SuccessRates,
    TangentVector2D,
    baseline_curve,
    dead_band_labels,
    histogram,
    label_by_threshold,
    labels_from_lambdas,
    logistic_lyapunov_grid,
    lorenz_jacobian,
    lorenz_lyapunov_grid,
    lyapunov_fit,
    lyapunov_series,
    standard_lyapunov_grid,
    success_rates,
    tangent_step,
    threshold_from_counts,
    threshold_from_histogram,
)


def benettin_standard(p, x, K, N, scale=1.0):
    """Plain-Python running exponent, one tangent step per map step."""
    d, z = 1.0, 0.0
    total = 0.0
    for _ in range(N - 1):
        d = d + scale * K * z * math.cos(2 * math.pi * x)
        z = z + d
        p = (p + K / (2 * math.pi) * math.sin(2 * math.pi * x)) % 1.0
        x = (x + p) % 1.0
        n = math.hypot(d, z)
        total += math.log(n)
        d, z = d / n, z / n
    return total / N


# -- tangent dynamics -----------------------------------------------------

def test_tangent_step_examples():
    assert tangent_step((0.0, 0.25), (1.0, 0.0), StandardMapParams(3.0)) == pytest.approx((1.0, 1.0))
    assert tangent_step((0.4, 0.7), (0.3, -0.2), StandardMapParams(0.0)) == pytest.approx((0.3, 0.1))
    assert tangent_step((0.0, 0.0), TangentVector2D(0.0, 1.0), StandardMapParams(2.5)) == pytest.approx((2.5, 3.5))


def test_extra_2pi_mode_scales_the_kick_term():
    out = tangent_step((0.0, 0.0), (0.0, 1.0), StandardMapParams(1.0), jacobian="extra_2pi")
    assert out == pytest.approx((2 * math.pi, 1 + 2 * math.pi))
    with pytest.raises(ValueError):
        tangent_step((0.0, 0.0), (0.0, 1.0), StandardMapParams(1.0), jacobian="bogus")


@pytest.mark.parametrize("p,x,K", [(0.1, 0.2, 2.5), (0.37, 0.81, 0.9), (0.5, 0.5, 6.0)])
def test_series_matches_python_oracle(p, x, K):
    s = lyapunov_series(MapId.STANDARD, StandardMapParams(K), (p, x), 400)
    assert s.n_max == 400
    for N in (2, 3, 50, 400):
        assert s.at(N) == pytest.approx(benettin_standard(p, x, K, N), rel=1e-9, abs=1e-12)


def test_grid_matches_series():
    S = np.array([[0.1, 0.2], [0.8, 0.05], [0.33, 0.66]])
    ck = [2, 10, 250, 1000]
    table = standard_lyapunov_grid(2.0, S, ck)
    for m, s0 in enumerate(S):
        s = lyapunov_series(MapId.STANDARD, StandardMapParams(2.0), s0, 1000)
        np.testing.assert_allclose(table[m], [s.at(N) for N in ck], rtol=1e-12)


def test_grid_tangent_direction_is_normalized():
    S = np.array([[0.1, 0.2]])
    a = standard_lyapunov_grid(2.0, S, [500], tangents=[[3.0, 4.0]])
    s = lyapunov_series(MapId.STANDARD, StandardMapParams(2.0), S[0], 500, tangent=(0.6, 0.8))
    assert a[0, 0] == pytest.approx(s.final, rel=1e-12)


def test_integrable_case_decays():
    s = lyapunov_series(MapId.STANDARD, StandardMapParams(0.0), (0.3, 0.1), 100_000)
    assert 0 < s.final < 1e-3
    # linear shear: |tangent| grows like N, so lambda_N * N / ln N stays O(1)
    assert s.at(100_000) * 100_000 / math.log(100_000) < 2.0


def test_chaotic_sea_exponent_near_fit():
    s = lyapunov_series(MapId.STANDARD, StandardMapParams(2.5), (0.1, 0.2), 300_000)
    assert s.final == pytest.approx(0.56, abs=0.05)
    assert s.lyapunov_time == pytest.approx(1 / s.final)


def test_logistic_r4_is_ln2():
    s = lyapunov_series(MapId.LOGISTIC, LogisticParams(4.0), 0.3, 300_000)
    assert abs(s.final - math.log(2)) < 1e-3
    g = logistic_lyapunov_grid(4.0, [0.3, 0.123], [300_000])
    np.testing.assert_allclose(g[:, 0], math.log(2), atol=1e-3)


def test_logistic_stable_cycle_is_negative():
    x0 = (np.arange(20) + 0.5) / 20
    lam = logistic_lyapunov_grid(3.2, x0, [20_000])[:, 0]
    assert (lam < -0.1).all()
    assert (dead_band_labels(lam) == ChaosLabel.REGULAR).all()


def test_logistic_superstable_point_stays_finite():
    lam = logistic_lyapunov_grid(2.0, [0.5], [1000])[0, 0]
    assert np.isfinite(lam) and lam < -100


@given(X=st.floats(-20, 20), Y=st.floats(-20, 20), Z=st.floats(0, 40),
       form=st.sampled_from(["printed", "euler"]))
def test_lorenz_jacobian_matches_finite_differences(X, Y, Z, form):
    params = LorenzParams(rho=28.0, form=form)
    J = lorenz_jacobian((X, Y, Z), params)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (np.array(lorenz_step(tuple(np.array([X, Y, Z]) + e), params))
              - np.array(lorenz_step(tuple(np.array([X, Y, Z]) - e), params))) / (2 * h)
        np.testing.assert_allclose(J[:, k], fd, atol=1e-7)


def test_lorenz_exponent_matches_python_oracle():
    params = LorenzParams(rho=28.0)
    s = np.array([1.0, 1.0, 20.0])
    v = np.array([1.0, 0.0, 0.0])
    total = 0.0
    N = 3000
    for _ in range(N - 1):
        v = lorenz_jacobian(s, params) @ v
        s = np.array(lorenz_step(tuple(s), params))
        n = np.linalg.norm(v)
        total += math.log(n)
        v /= n
    grid = lorenz_lyapunov_grid(params, [s * 0 + [1.0, 1.0, 20.0]], [N])[0, 0]
    series = lyapunov_series(MapId.LORENZ, params, (1.0, 1.0, 20.0), N).final
    assert grid == pytest.approx(total / N, rel=1e-9)
    assert series == pytest.approx(total / N, rel=1e-9)


def test_series_rejects_short_runs():
    with pytest.raises(ValueError):
        lyapunov_series(MapId.STANDARD, StandardMapParams(1.0), (0.1, 0.2), 1)
    with pytest.raises(ValueError):
        standard_lyapunov_grid(1.0, [[0.1, 0.2]], [1])


# -- fit ------------------------------------------------------------------

def test_fit_values():
    assert lyapunov_fit(2.5) == pytest.approx(math.log(1.75))
    assert lyapunov_fit(5 / 7) == pytest.approx(0.0, abs=1e-15)
    assert lyapunov_fit(10.0) == pytest.approx(1.5892, abs=1e-4)
    with pytest.raises(ValueError):
        lyapunov_fit(-2.0)


# -- threshold protocol ---------------------------------------------------

def test_threshold_unique_minimum():
    assert threshold_from_counts([0.0, 0.1, 0.2, 0.3, 0.4], [10, 1, 0, 2, 9]) == pytest.approx(0.2)


def test_threshold_tie_goes_to_smaller_lambda():
    assert threshold_from_counts([0.0, 0.1, 0.2, 0.3], [8, 2, 2, 8]) == pytest.approx(0.1)


def test_threshold_needs_two_peaks():
    with pytest.raises(NoThresholdError):
        threshold_from_counts([0, 1, 2, 3, 4], [0, 2, 9, 2, 0])
    with pytest.raises(NoThresholdError):
        threshold_from_histogram([0.3, 0.3, 0.3])


def test_threshold_separates_mixture_clusters(rng):
    for _ in range(100):
        lo = rng.normal(0.0, 0.01, rng.integers(200, 800))
        hi = rng.normal(rng.uniform(0.3, 0.7), 0.05, rng.integers(800, 1800))
        lam = np.concatenate([lo, hi])
        thr = threshold_from_histogram(lam)
        assert lo.mean() < thr < hi.mean()
        # brute force over every bin position: the cuts that split the clusters perfectly
        centers, _ = histogram(lam)
        perfect = [c for c in centers if lo.max() <= c < hi.min()]
        if perfect:
            assert min(perfect) <= thr <= max(perfect)


def test_label_by_threshold():
    assert label_by_threshold(0.56, 0.2) is ChaosLabel.CHAOTIC
    assert label_by_threshold(0.0, 0.2) is ChaosLabel.REGULAR
    assert label_by_threshold(0.2, 0.2) is ChaosLabel.REGULAR
    np.testing.assert_array_equal(label_by_threshold(np.array([0.1, 0.3]), 0.2), [0, 1])


def test_two_point_toy_input():
    ref = labels_from_lambdas([0.0, 0.6], spec=HistogramSpec(3))
    assert ref.labels.tolist() == [ChaosLabel.REGULAR, ChaosLabel.CHAOTIC]
    assert not ref.fallback


def test_integrable_grid_falls_back_to_regular():
    S = np.random.default_rng(3).random((200, 2))
    lam = standard_lyapunov_grid(0.0, S, [20_000])[:, 0]
    ref = labels_from_lambdas(lam, K=0.0)
    assert (ref.labels == ChaosLabel.REGULAR).all()
    assert ref.fallback or ref.threshold > 0
    assert labels_from_lambdas(np.full(50, 0.9), K=2.5).labels.tolist() == [1] * 50
    with pytest.raises(NoThresholdError):
        labels_from_lambdas(np.full(50, 0.9), K=2.5, fallback=False)


def test_dead_band():
    lab = dead_band_labels([-0.5, -1e-3, 0.0, 5e-4, 2e-3])
    assert lab.tolist() == [0, UNDETERMINED, UNDETERMINED, UNDETERMINED, 1]


# -- success rates --------------------------------------------------------

def test_rates_perfect():
    ref = np.array([0, 1, 1, 0, 1])
    sr = success_rates(ref, ref)
    assert (sr.p_c, sr.p_r, sr.p_tot) == (1.0, 1.0, 1.0)


def test_rates_counting_example():
    sr = SuccessRates(a_c=100, a_r=100, b_c=88, b_r=91)
    assert (sr.p_c, sr.p_r, sr.p_tot) == pytest.approx((0.88, 0.91, 0.895))
    assert sr.n_errors == 21


def test_rates_all_chaotic_prediction():
    ref = np.array([0, 1] * 50)
    sr = success_rates(np.ones(100), ref)
    assert (sr.p_c, sr.p_r, sr.p_tot) == (1.0, 0.0, 0.5)


def test_empty_class_is_nan_not_zero():
    sr = success_rates([1, 1], [1, 1])
    assert math.isnan(sr.p_r) and sr.p_c == 1.0
    assert math.isnan(SuccessRates(0, 0, 0, 0).p_tot)


def test_undetermined_references_not_scored():
    sr = success_rates([1, 0, 1], [1, UNDETERMINED, 0])
    assert (sr.a_c, sr.a_r, sr.b_c, sr.b_r) == (1, 1, 1, 0)


def test_table_row_representable():
    # 89 = 44 + 45 of 100 with 50 per class
    sr = SuccessRates(50, 50, 44, 45)
    assert (round(sr.p_tot, 2), round(sr.p_c, 2), round(sr.p_r, 2)) == (0.89, 0.88, 0.9)
    with pytest.raises(ValueError):
        SuccessRates(1, 1, 2, 0)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_rates_add_up(pairs):
    pred, ref = map(np.array, zip(*pairs))
    half = len(pairs) // 2
    whole = success_rates(pred, ref)
    parts = success_rates(pred[:half], ref[:half]) + success_rates(pred[half:], ref[half:])
    assert whole == parts
    assert whole.n_errors == int((pred != ref).sum())


def test_baseline_curve_self_comparison():
    S = np.random.default_rng(0).random((300, 2))
    ck = [20, 200, 2000]
    table = standard_lyapunov_grid(2.5, S, ck)
    ref = labels_from_lambdas(table[:, -1], 2.5)
    rows = baseline_curve(table, ck, ref.labels)
    N, thr, sr = rows[-1]
    assert N == 2000 and thr == ref.threshold
    assert (sr.p_c, sr.p_r, sr.p_tot) == (1.0, 1.0, 1.0)
