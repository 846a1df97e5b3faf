import math
import warnings

import numpy as np
import pytest
from scipy import stats

from conftest import cauchy_density, cauchy_mellin, cauchy_tail
from expfun.levy_model import DomainError, HyperExpLevyModel
from expfun.montecarlo import (
    EtaSpec,
    InfiniteVarianceWarning,
    Path,
    SamplerConfig,
    SampleSet,
    default_horizon,
    estimate_density,
    estimate_density_derivative,
    estimate_joint_moment,
    estimate_mellin,
    estimate_tail,
    exponential_moment_diagnostic,
    functionals,
    mellin_groups,
    sample_I,
    sample_I_general,
    sample_path,
    simulate,
)
from expfun.special_functions import gamma

DRIFT_ONLY = HyperExpLevyModel(sigma_xi=0.0, mu_xi=-1.0)


def single_sample(j1, j2, eta):
    cfg = SamplerConfig(n_paths=1)
    arr = np.array
    return SampleSet(arr([j1]), arr([j2]), arr([0.0]), arr([0.0]), DRIFT_ONLY, eta, cfg)


def test_eta_spec_validation_and_flip():
    with pytest.raises(ValueError):
        EtaSpec(mu=0.0, sigma=0.0)
    eta = EtaSpec(mu=0.5, sigma=0.0, pos_jumps=[(1.0, 2.0)])
    assert eta.mean == pytest.approx(0.5 + 1 / 4)
    assert eta.flipped().neg_jumps == eta.pos_jumps
    assert EtaSpec.from_dict(eta.to_dict()) == eta


def test_jump_intensity(example_model):
    assert example_model.jump_rate == pytest.approx(1 / 2 + 1 / 3)


def test_drift_only_path_is_deterministic():
    cfg = SamplerConfig(n_paths=1, seed=3, horizon=5.0, early_stop=False)
    path = sample_path(DRIFT_ONLY, cfg, np.random.default_rng(0))
    assert np.allclose(path.values, -path.times)
    j1, j2, _ = functionals(path)
    assert j1 == pytest.approx(1 - math.exp(-5.0), rel=1e-12)
    assert j2 == pytest.approx((1 - math.exp(-10.0)) / 2, rel=1e-12)


def test_functionals_exact_cases():
    t = np.linspace(0.0, 2.0, 5)
    j1, j2, _ = functionals(Path(t, np.zeros_like(t), 0.0))
    assert (j1, j2) == (pytest.approx(2.0), pytest.approx(2.0))
    t = np.linspace(0.0, 1.0, 3)
    j1, _, _ = functionals(Path(t, -t, 0.0))
    assert j1 == pytest.approx(1 - math.exp(-1.0), rel=1e-13)


def test_drift_only_functionals_over_long_horizon():
    samples = simulate(DRIFT_ONLY, EtaSpec(1.0, 1.0), SamplerConfig(n_paths=4, seed=1))
    assert np.allclose(samples.j1, 1.0, rtol=1e-6)
    assert np.allclose(samples.j2, 0.5, rtol=1e-6)
    assert np.allclose(samples.v, 2.0, rtol=1e-6)


def test_truncation_tail_bounds_the_dropped_part():
    cfg = SamplerConfig(n_paths=1, horizon=4.0, early_stop=False)
    samples = simulate(DRIFT_ONLY, EtaSpec(1.0, 1.0), cfg)
    dropped = math.exp(-4.0)
    assert samples.truncation_tail[0] == pytest.approx(dropped, rel=1e-9)
    assert samples.j1[0] + samples.truncation_tail[0] == pytest.approx(1.0, rel=1e-9)


def test_integration_is_stable_under_step_halving(bm_model):
    cfg = SamplerConfig(n_paths=1, horizon=20.0, grid_step=5e-5, max_step=5e-5, early_stop=False)
    path = sample_path(bm_model, cfg, np.random.default_rng(7), max_points=500_000)
    fine = functionals(path)
    coarse = functionals(Path(path.times[::2], path.values[::2], path.truncation_tail))
    assert abs(fine[0] - coarse[0]) / fine[0] < 1e-4
    assert abs(fine[1] - coarse[1]) / fine[1] < 1e-4


def test_equal_seeds_give_equal_samples(bm_model, std_eta):
    cfg = SamplerConfig(n_paths=5000, seed=42)
    a = simulate(bm_model, std_eta, cfg)
    b = simulate(bm_model, std_eta, cfg)
    assert np.array_equal(a.j1, b.j1) and np.array_equal(a.i_draw, b.i_draw)
    c = simulate(bm_model, std_eta, SamplerConfig(n_paths=5000, seed=43))
    assert not np.array_equal(a.j1, c.j1)


def test_thread_count_does_not_change_results(bm_model, std_eta, monkeypatch):
    cfg = SamplerConfig(n_paths=9000, seed=5)
    monkeypatch.setenv("EXPFUN_THREADS", "1")
    a = simulate(bm_model, std_eta, cfg)
    monkeypatch.setenv("EXPFUN_THREADS", "3")
    b = simulate(bm_model, std_eta, cfg)
    assert np.array_equal(a.j2, b.j2)


def test_default_horizon_positive(bm_model, example_model):
    assert default_horizon(bm_model) == pytest.approx(math.log(1e8) / 0.25, rel=1e-6)
    assert default_horizon(example_model) > 0


def test_sample_I_deterministic_and_mean():
    rng = np.random.default_rng(1)
    assert sample_I(1.0, 0.5, EtaSpec(1.0, 1e-12), rng) == pytest.approx(1.0, abs=1e-9)
    draws = sample_I(np.full(100_000, 2.0), np.full(100_000, 3.0), EtaSpec(0.7, 1.3), rng)
    stderr = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - 1.4) < 4 * stderr


def test_sample_I_sign_symmetric_for_zero_drift(bm_samples):
    positives = int(np.count_nonzero(bm_samples.i_draw > 0))
    assert stats.binomtest(positives, len(bm_samples)).pvalue > 0.01


def test_draws_follow_the_cauchy_law(bm_samples):
    sub = bm_samples.i_draw[:20000]
    assert stats.kstest(sub, stats.cauchy(scale=1 / math.sqrt(2)).cdf).pvalue > 0.01


def test_single_kernel_density():
    s = single_sample(1.0, 1.0, EtaSpec(0.0, 1.0))
    assert estimate_density(s, None, 0.0)[0] == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_rb_estimators_against_cauchy(bm_samples, std_eta):
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0, 10.0])
    value, err = estimate_density(bm_samples, std_eta, x)
    assert np.all(np.abs(value - cauchy_density(x)) < 4 * err)
    tail, terr = estimate_tail(bm_samples, std_eta, x)
    assert np.all(np.abs(tail - cauchy_tail(x)) < 4 * terr + 1e-12)
    assert np.all(np.diff(tail) <= 0)
    assert estimate_tail(bm_samples, std_eta, -1e9)[0] == pytest.approx(1.0)
    assert estimate_tail(bm_samples, std_eta, 0.0)[0] == pytest.approx(0.5, abs=1e-15)
    slope, serr = estimate_density_derivative(bm_samples, std_eta, 1.0)
    exact = -2 * (1 / math.sqrt(2)) / (math.pi * 2.25)
    assert abs(slope - exact) < 4 * serr


def test_density_symmetry_for_zero_drift(bm_samples, std_eta):
    a, ea = estimate_density(bm_samples, std_eta, 0.8)
    b, eb = estimate_density(bm_samples, std_eta, -0.8)
    assert abs(a - b) < 4 * math.hypot(ea, eb) + 1e-15


def test_mellin_estimators(bm_samples, std_eta):
    value, err = estimate_mellin(bm_samples, std_eta, 1.0, method="direct")
    assert abs(value - 0.5) < 4 * err
    s = np.array([0.3, 0.7 + 1.5j, 1.2, -0.4 + 0.3j])
    value, err = estimate_mellin(bm_samples, std_eta, s)
    assert np.all(np.abs(value - cauchy_mellin(s)) < 4 * err)


def test_cylinder_reduces_to_gamma_ratio_for_zero_drift(bm_samples, std_eta):
    s = np.array([0.3, 0.9 + 0.5j, 1.4])
    value, _ = estimate_mellin(bm_samples, std_eta, s)
    factor = 2 ** (-(s + 1) / 2) * gamma(s) / gamma((s + 1) / 2)
    moment = np.array([np.mean(bm_samples.j2 ** ((z - 1) / 2)) for z in s])
    assert np.allclose(value, factor * moment, rtol=1e-12)


def test_kummer_and_cylinder_agree_for_positive_drift(bm_samples):
    eta = EtaSpec(0.6, 1.0)
    s = np.array([0.4, 1.1 + 0.7j])
    cyl = mellin_groups(bm_samples, s, eta)
    kum = mellin_groups(bm_samples, s, eta, method="kummer")
    assert np.all(np.abs(cyl.mean - kum.mean) < 4 * np.hypot(cyl.stderr, kum.stderr))


def test_mellin_refuses_poles_and_out_of_strip(bm_samples, std_eta):
    with pytest.raises(DomainError):
        mellin_groups(bm_samples, 0.0, std_eta)
    with pytest.raises(DomainError):
        mellin_groups(bm_samples, 2.5, std_eta)
    with pytest.raises(DomainError):
        estimate_mellin(bm_samples, EtaSpec(0.5, 1.0), -0.5)


def test_joint_moments(bm_samples):
    assert estimate_joint_moment(bm_samples, 0, 0)[0] == 1.0
    drift = simulate(DRIFT_ONLY, EtaSpec(0.0, 1.0), SamplerConfig(n_paths=10, seed=0))
    assert estimate_joint_moment(drift, 0.5, 0.0)[0] == pytest.approx(1.0, rel=1e-6)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        estimate_joint_moment(bm_samples, 0.0, 2.0)
    assert any(issubclass(w.category, InfiniteVarianceWarning) for w in caught)


def test_exponential_moment_stabilizes(bm_samples):
    trace = exponential_moment_diagnostic(bm_samples, 0.01)
    values = np.array([v for _, v in trace])
    assert np.all(np.isfinite(values))
    assert np.ptp(values[1:]) / values[-1] < 0.05


def test_general_eta_reduces_to_gaussian_case(bm_model):
    eta = EtaSpec(0.3, 1.0)
    a = sample_I_general(bm_model, eta, SamplerConfig(n_paths=20000, seed=2))
    b = simulate(bm_model, eta, SamplerConfig(n_paths=20000, seed=9)).i_draw
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_general_eta_unit_jumps_have_unit_mean():
    eta = EtaSpec(0.0, 0.0, pos_jumps=[(1.0, 1.0)])
    draws = sample_I_general(DRIFT_ONLY, eta, SamplerConfig(n_paths=40000, seed=4))
    assert abs(draws.mean() - 1.0) < 4 * draws.std(ddof=1) / math.sqrt(draws.size)
    assert stats.kstest(draws, "expon").pvalue > 0.01
    again = sample_I_general(DRIFT_ONLY, eta, SamplerConfig(n_paths=40000, seed=4))
    assert np.array_equal(draws, again)


def test_rb_density_integrates_to_one(bm_samples, std_eta):
    # Cauchy tails beyond |x| = 1e4 carry 2 c/(pi 1e4) of mass; add it back
    x = np.concatenate([-np.logspace(4, -6, 600), [0.0], np.logspace(-6, 4, 600)])
    k, _ = estimate_density(bm_samples, std_eta, x)
    mass = np.trapezoid(k, x) + 2 * (1 / math.sqrt(2)) / (math.pi * 1e4)
    assert mass == pytest.approx(1.0, abs=5e-3)


def test_rb_density_non_increasing_for_non_positive_drift(bm_samples):
    eta = EtaSpec(-0.5, 1.0)
    x = np.linspace(0.0, 8.0, 41)
    k, err = estimate_density(bm_samples, eta, x)
    assert np.all(np.diff(k) <= 4 * np.hypot(err[1:], err[:-1]))


def test_truncation_tail_shrinks_with_horizon():
    tails = [simulate(DRIFT_ONLY, EtaSpec(1.0, 1.0),
                      SamplerConfig(n_paths=1, horizon=h, early_stop=False)).truncation_tail[0]
             for h in (4.0, 6.0)]
    assert tails[1] / tails[0] <= math.exp(-2.0) * (1 + 1e-9)
