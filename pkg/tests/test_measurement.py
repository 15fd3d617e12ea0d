import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats
from sklearn.base import clone

from airy_biphoton.biphoton import CoincidenceMap, conditional_slice
from airy_biphoton.grid import make_grid
from airy_biphoton.measurement import (
    DetectorSpec,
    GaussianFit,
    GaussianPeakRegressor,
    ScanSpec,
    blur,
    expected_profile,
    fit_gaussian,
    moment_variance,
    simulate_scan,
    variance_from_fit,
)

from oracles import gaussian_blur_direct

GRID = make_grid(512, 1e-6)
SIGMA = 20e-6


def ridge_map(profile):
    """Map whose row at signal position x1 is ``profile(x2 - x1)``."""
    x1, x2 = GRID.x[:, None], GRID.x[None, :]
    v = profile(x2 - x1)
    return CoincidenceMap(GRID, GRID, v / v.sum())


GAUSS_MAP = ridge_map(lambda d: np.exp(-(d**2) / (2 * SIGMA**2)))
# scans span +-3 sigma: the sqrt(max(n, 1)) weights bias the width when the
# window reaches far into near-empty tails


def scan_spec(seed, points=60, span=3.0, rate=100.0, time=10.0, center=0.0):
    pos = center + np.linspace(-span * SIGMA, span * SIGMA, points)
    return ScanSpec(tuple(pos), 0.0, time, rate, seed)


def visibility(values):
    """Largest contrast between neighbouring local maxima and minima."""
    d = np.diff(values)
    ext = [i for i in range(1, values.size - 1) if d[i - 1] * d[i] < 0]
    if len(ext) < 2:
        return 0.0
    e = values[ext]
    return float(np.max(np.abs(np.diff(e)) / (e[1:] + e[:-1])))


# -- blur ---------------------------------------------------------------------


def test_zero_aperture_is_identity():
    out = blur(GAUSS_MAP, DetectorSpec(0.0), DetectorSpec(0.0))
    assert np.array_equal(out.values, GAUSS_MAP.values)


def test_delta_blurs_to_gaussian():
    g = make_grid(256, 1e-6)
    v = np.zeros((256, 256))
    v[128, 128] = 1.0
    cmap = CoincidenceMap(g, g, v)
    s = 6e-6
    out = blur(cmap, DetectorSpec(s), DetectorSpec(s)).values
    gauss = np.exp(-(g.x**2) / (2 * s**2))
    gauss /= gauss.sum()
    assert np.allclose(out, np.outer(gauss, gauss), atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-13)


def test_blur_matches_direct_convolution():
    g = make_grid(256, 1e-6)
    rng = np.random.default_rng(8)
    v = rng.random((256, 256))
    cmap = CoincidenceMap(g, g, v / v.sum())
    out = blur(cmap, DetectorSpec(0.0), DetectorSpec(3.5e-6)).values
    row = cmap.values[17]
    assert np.allclose(out[17], gaussian_blur_direct(row, 3.5), atol=1e-15)


def test_airy_fringes_wash_out():
    # Airy slice on n = 256; aperture equal to the first lobe spacing
    g = make_grid(256, 1e-6)
    x0 = 8e-6
    prof = special.airy((g.x + 60e-6) / x0)[0] ** 2 * np.exp(0.1 * (g.x + 60e-6) / x0)
    cmap = CoincidenceMap(g, g, np.tile(prof / prof.sum() / 256, (256, 1)))
    sl = conditional_slice(cmap, "signal", 0.0)
    zeros = special.ai_zeros(2)[2]  # maxima of Ai
    spacing = float(zeros[0] - zeros[1]) * x0
    blurred = blur(sl, DetectorSpec(spacing))
    direct = gaussian_blur_direct(sl.values, spacing / g.dx)
    assert np.allclose(blurred.values, direct, atol=1e-15)
    lobes = (g.x + 60e-6) / x0 > -10
    lobes &= (g.x + 60e-6) / x0 < 1
    assert visibility(sl.values[lobes]) > 0.9
    assert visibility(blurred.values[lobes]) < 0.1
    assert moment_variance(g.x, blurred.values) > moment_variance(g.x, sl.values)


def test_under_resolved_aperture():
    with pytest.raises(ValueError):
        blur(GAUSS_MAP, DetectorSpec(1.5e-6))


def test_blur_rejects_other_types():
    with pytest.raises(TypeError):
        blur(np.ones((4, 4)), DetectorSpec())


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), sigma=st.floats(2.0, 12.0))
def test_blur_never_narrows(seed, sigma):
    g = make_grid(512, 1.0)
    rng = np.random.default_rng(seed)
    v = np.zeros(512)
    v[200:312] = rng.random(112)
    cmap = CoincidenceMap(g, g, np.tile(v / v.sum() / 512, (512, 1)))
    sl = conditional_slice(cmap, "signal", 0.0)
    out = blur(sl, DetectorSpec(sigma))
    assert out.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert moment_variance(g.x, out.values) >= moment_variance(g.x, sl.values)


# -- detector and scan specs ----------------------------------------------------


@pytest.mark.parametrize("kwargs", [{"aperture_sigma": -1.0}, {"efficiency": 0.0}, {"efficiency": 1.5}])
def test_detector_validation(kwargs):
    with pytest.raises(ValueError):
        DetectorSpec(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"positions": (0.0, 0.0, 1.0)},
        {"positions": (2.0, 1.0)},
        {"positions": (0.0, 1.0), "integration_time": 0.0},
        {"positions": (0.0, 1.0), "rng_seed": -1},
        {"positions": (0.0, 1.0), "rng_seed": 1.5},
    ],
)
def test_scan_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ScanSpec(**kwargs)


def test_scan_outside_grid():
    with pytest.raises(ValueError):
        simulate_scan(GAUSS_MAP, ScanSpec((0.0, 1.0, 2.0, 3.0, 4.0)))
    with pytest.raises(ValueError):
        simulate_scan(GAUSS_MAP, ScanSpec(scan_spec(0).positions, fixed_position=1.0))


# -- counting -------------------------------------------------------------------


def test_scan_is_deterministic():
    a = simulate_scan(GAUSS_MAP, scan_spec(11))
    b = simulate_scan(GAUSS_MAP, scan_spec(11))
    c = simulate_scan(GAUSS_MAP, scan_spec(12))
    assert a.counts.tobytes() == b.counts.tobytes()
    assert a.fit == b.fit
    assert not np.array_equal(a.counts, c.counts)
    assert a.metadata["seed"] == 11 and "PCG64" in a.metadata["rng"]


def test_counts_and_errors():
    res = simulate_scan(GAUSS_MAP, scan_spec(3, rate=0.5, time=1.0))
    assert res.counts.dtype.kind == "i" and np.all(res.counts >= 0)
    assert np.array_equal(res.count_errors, np.sqrt(np.maximum(res.counts, 1)))


def test_law_of_large_numbers():
    det = (DetectorSpec(3e-6), DetectorSpec(5e-6))
    spec = scan_spec(5, rate=1e6, time=10.0)
    res = simulate_scan(GAUSS_MAP, spec, det)
    sl = blur(conditional_slice(GAUSS_MAP, "signal", 0.0), det[1])
    shape = np.interp(res.positions, sl.coords, sl.values / sl.values.max())
    normalized = res.counts / (spec.mean_rate_at_peak * spec.integration_time)
    assert np.sqrt(np.mean((normalized - shape) ** 2)) < 0.005


def test_efficiency_scales_rate():
    spec = scan_spec(0)
    _, full = expected_profile(GAUSS_MAP, spec)
    _, half = expected_profile(GAUSS_MAP, spec, (DetectorSpec(0, 0.5), DetectorSpec(0, 0.8)))
    assert np.allclose(half, 0.4 * full)


def test_count_residuals_standard_normal():
    # high counts so the Poisson law is close to its normal limit
    spec0 = scan_spec(0, points=100, span=0.5, rate=1e4, time=10.0)
    residuals = []
    for seed in range(100):
        res = simulate_scan(GAUSS_MAP, ScanSpec(spec0.positions, 0.0, 10.0, 1e4, seed))
        residuals.append((res.counts - res.expected) / np.sqrt(res.expected))
    pooled = np.concatenate(residuals)
    assert pooled.size == 10_000
    assert stats.kstest(pooled, "norm").pvalue > 0.01


# -- fitting --------------------------------------------------------------------


def test_noiseless_fit_exact():
    x = np.linspace(-5, 7, 40)
    y = 3.0 * np.exp(-((x - 1.2) ** 2) / (2 * 1.7**2)) + 0.4
    fit = fit_gaussian(x, y)
    assert fit.converged
    for got, want in zip((fit.amplitude, fit.center, fit.sigma, fit.offset), (3.0, 1.2, 1.7, 0.4)):
        assert got == pytest.approx(want, abs=1e-9)
    assert fit.chi2_reduced < 1e-20


@settings(max_examples=60, deadline=None)
@given(
    factors=st.tuples(*[st.floats(0.5, 1.5)] * 3),
    shift=st.floats(-0.5, 0.5),
    scale=st.sampled_from([1e-5, 1.0, 1e4]),
)
def test_noiseless_fit_from_perturbed_guess(factors, shift, scale):
    truth = np.array([1000.0, 0.3 * scale, 2.0 * scale, 50.0])
    x = np.linspace(-8, 8, 61) * scale
    y = truth[0] * np.exp(-((x - truth[1]) ** 2) / (2 * truth[2] ** 2)) + truth[3]
    p0 = truth * np.array([factors[0], 1.0, factors[1], factors[2]])
    p0[1] += shift * truth[2]
    fit = fit_gaussian(x, y, p0=p0)
    assert fit.converged
    got = np.array([fit.amplitude, fit.center, fit.sigma, fit.offset])
    assert np.allclose(got, truth, rtol=1e-9, atol=1e-9 * scale)


def test_flat_data_not_converged():
    fit = fit_gaussian(np.arange(10.0), np.full(10, 7.0))
    assert not fit.converged and np.isnan(fit.sigma)


def test_too_few_points():
    with pytest.raises(ValueError):
        fit_gaussian(np.arange(4.0), np.arange(4.0))


def test_iteration_budget_is_honest():
    x = np.linspace(-5, 5, 30)
    y = np.exp(-(x**2) / 2) + 0.01 * np.sin(7 * x)
    reg = GaussianPeakRegressor(p0=[0.3, 2.0, 4.0, 0.5], max_nfev=2).fit(x, y)
    assert not reg.converged_


def test_estimator_interface():
    x = np.linspace(-5, 5, 30)
    y = 2 * np.exp(-((x - 0.5) ** 2) / 2) + 0.1
    reg = GaussianPeakRegressor().fit(x.reshape(-1, 1), y)
    assert np.allclose(reg.predict(x), y, atol=1e-9)
    assert reg.score(x, y) == pytest.approx(1.0)
    other = clone(reg)
    assert other.get_params() == reg.get_params() and not hasattr(other, "params_")


def test_variance_from_fit():
    assert variance_from_fit(GaussianFit(sigma=2.0, sigma_err=0.1, converged=True)) == pytest.approx((4.0, 0.4))
    assert variance_from_fit(GaussianFit(sigma=1.0, sigma_err=0.0, converged=True)) == (1.0, 0.0)
    with pytest.raises(ValueError):
        variance_from_fit(GaussianFit(sigma=1.0, sigma_err=0.0, converged=False))


def monte_carlo(repeats, seed0=1000):
    fits = [simulate_scan(GAUSS_MAP, scan_spec(seed0 + i)).fit for i in range(repeats)]
    assert all(f.converged for f in fits)
    return fits


def test_peak_counts_near_thousand():
    res = simulate_scan(GAUSS_MAP, scan_spec(1))
    assert res.expected.max() == pytest.approx(1000, rel=0.01)


def test_center_coverage():
    fits = monte_carlo(200)
    inside = np.mean([abs(f.center) < 3 * f.center_err for f in fits])
    assert inside >= 0.95


def test_sigma_coverage():
    fits = monte_carlo(500, seed0=5000)
    inside = np.mean([abs(f.sigma - SIGMA) < f.sigma_err for f in fits])
    assert 0.61 <= inside <= 0.75


def test_variance_coverage_end_to_end():
    fits = monte_carlo(300, seed0=9000)
    true_var = moment_variance(GRID.x, conditional_slice(GAUSS_MAP, "signal", 0.0).values)
    hits = []
    for f in fits:
        v, dv = variance_from_fit(f)
        hits.append(abs(v - true_var) < dv)
    assert 0.61 <= np.mean(hits) <= 0.75
