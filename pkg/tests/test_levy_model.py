import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import optimize

from expfun.levy_model import (
    DomainError,
    HyperExpLevyModel,
    PoleProximityError,
    double_tail,
    exponents,
    pole_catalogue,
    positive_roots,
    psi,
    psi_derivative,
    psi_tail_form,
    validate_model,
)


def test_example_model_is_valid_with_hand_computed_mean(example_model):
    report = validate_model(example_model)
    assert report.valid
    assert report.mean == pytest.approx(-2 + 1 / 4 - 1 / 9, abs=1e-15)
    # rho_hat = 3 is an integer, so the expansions would carry logarithms
    assert not report.simple_poles


def test_positive_drift_is_invalid():
    report = validate_model(HyperExpLevyModel(sigma_xi=1.0, mu_xi=5.0))
    assert not report.valid
    assert report.mean == 5.0
    assert "invalid: E[xi_1] >= 0" in report.lines()


def test_integer_hat_rho_breaks_simple_poles():
    model = HyperExpLevyModel(sigma_xi=1.0, mu_xi=-1.0, neg_jumps=[(0.5, 1.0)])
    report = validate_model(model)
    assert report.valid
    assert not report.simple_poles
    assert report.violations


def test_construction_rejects_bad_parameters():
    with pytest.raises(ValueError):
        HyperExpLevyModel(sigma_xi=-1.0)
    with pytest.raises(ValueError):
        HyperExpLevyModel(pos_jumps=[(1.0, -2.0)])
    with pytest.raises(ValueError):
        HyperExpLevyModel(pos_jumps=[(1.0, 2.0), (3.0, 2.0)])


def test_dict_round_trip(example_model):
    assert HyperExpLevyModel.from_dict(example_model.to_dict()) == example_model


def test_psi_values(bm_model, example_model):
    assert psi(example_model, 0.0) == 0
    assert psi(bm_model, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert psi(bm_model, 3.0) == pytest.approx(6.0)
    assert psi(example_model, 1.0) == pytest.approx(-7 / 12, abs=1e-14)


def test_psi_at_jump_pole_raises(example_model):
    with pytest.raises(PoleProximityError):
        psi(example_model, 2.0)
    with pytest.raises(PoleProximityError):
        psi(example_model, -3.0)


@given(st.floats(-2.5, 1.8), st.floats(-5, 5))
@settings(max_examples=60, deadline=None)
def test_tail_form_matches_partial_fractions(re, im):
    model = HyperExpLevyModel(sigma_xi=0.7, mu_xi=-1.0, pos_jumps=[(1.0, 2.0), (0.5, 4.0)],
                              neg_jumps=[(1.0, 3.0)])
    z = complex(re, im)
    assume(abs(z - 2.0) > 1e-3 and abs(z + 3.0) > 1e-3)
    assert psi_tail_form(model, z) == pytest.approx(psi(model, z), rel=1e-11, abs=1e-12)


def test_psi_derivatives(bm_model, example_model):
    assert psi_derivative(bm_model, 0.0) == pytest.approx(-1.0)
    assert psi_derivative(bm_model, 1.0) == pytest.approx(1.0)
    theta = exponents(example_model).theta
    assert psi_derivative(example_model, theta / 2, order=2).real > 0
    h = 1e-5
    z = 0.3 + 0.2j
    numeric = (psi(example_model, z + h) - psi(example_model, z - h)) / (2 * h)
    assert psi_derivative(example_model, z) == pytest.approx(numeric, rel=1e-8)


def test_double_tail():
    model = HyperExpLevyModel(mu_xi=-1.0, pos_jumps=[(1.0, 2.0)])
    assert double_tail(model, "+", 0.0) == pytest.approx(0.25)
    assert double_tail(model, "-", 1.0) == 0.0
    assert double_tail(model, "+", 1.0) > double_tail(model, "+", 2.0)
    with pytest.raises(DomainError):
        double_tail(model, "+", -1.0)


def test_exponents_pure_bm(bm_model):
    e = exponents(bm_model)
    assert e.theta == pytest.approx(1.0, abs=1e-14)
    assert e.root_count == 1
    assert math.isinf(e.rho) and math.isinf(e.rho_hat)


def test_gaussian_part_adds_a_root_beyond_the_jumps(example_model):
    e = exponents(example_model)
    assert e.root_count == 2
    assert 0 < e.theta < 2 < e.positive_roots[1]


def test_theta_matches_independent_root_finder(example_model):
    theta = exponents(example_model).theta
    oracle = optimize.brentq(lambda z: psi(example_model, z).real, 1e-6, 2 - 1e-9, xtol=1e-15)
    assert theta == pytest.approx(oracle, abs=1e-12)


def test_roots_need_negative_mean():
    with pytest.raises(DomainError):
        positive_roots(HyperExpLevyModel(sigma_xi=1.0, mu_xi=0.5))


def test_pole_catalogue(bm_model, example_model):
    poles = pole_catalogue(bm_model, None, 2.5)
    locations = sorted(p.location for p in poles)
    assert locations == pytest.approx([-2.0, -1.0, 0.0, 2.0])
    shifted = HyperExpLevyModel(sigma_xi=1.0, mu_xi=-1.0, pos_jumps=[(1.0, 2.5)], neg_jumps=[(1.0, 3.5)])
    assert [p.location for p in pole_catalogue(shifted, None, 0.5)] == [0.0]
    model = HyperExpLevyModel(sigma_xi=1.0, mu_xi=0.0, neg_jumps=[(0.04, 0.4)])
    kinds = {(round(p.location, 12), p.kind) for p in pole_catalogue(model, None, 1.6)}
    assert (-1.4, "shifted-hat-rho") in kinds


def test_pole_catalogue_refuses_non_simple_regime():
    model = HyperExpLevyModel(sigma_xi=1.0, mu_xi=-1.0, neg_jumps=[(0.5, 1.0)])
    with pytest.raises(DomainError):
        pole_catalogue(model, None, 2.0)


def test_psi_vectorizes(example_model):
    z = np.array([0.1, 0.5 + 1j, -1.0])
    out = psi(example_model, z)
    assert out.shape == (3,)
    assert out[1] == pytest.approx(psi(example_model, 0.5 + 1j))


def test_psi_negative_inside_the_strip(example_model):
    theta = exponents(example_model).theta
    grid = np.linspace(1e-4, theta - 1e-4, 400)
    assert np.all(psi(example_model, grid).real < 0)


@given(st.floats(0.01, 0.99), st.floats(-20, 20))
@settings(max_examples=60, deadline=None)
def test_real_part_dominated_on_vertical_lines(frac, y):
    model = HyperExpLevyModel(sigma_xi=0.7, mu_xi=-1.0, pos_jumps=[(1.0, 2.0), (0.5, 4.0)],
                              neg_jumps=[(1.0, 3.0)])
    x = frac * exponents(model).theta
    assert psi(model, complex(x, y)).real <= psi(model, x).real + 1e-12


@given(st.integers(0, 3), st.integers(0, 3), st.booleans(), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_root_count_rule(n_pos, n_neg, gaussian, seed):
    rng = np.random.default_rng(seed)
    pos = [(float(rng.uniform(0.1, 1)), float(r)) for r in np.sort(rng.uniform(0.5, 6, n_pos))]
    neg = [(float(rng.uniform(0.1, 1)), float(rng.uniform(0.5, 6))) for _ in range(n_neg)]
    assume(len({r for _, r in pos}) == n_pos)
    model = HyperExpLevyModel(sigma_xi=1.0 if gaussian else 0.0, mu_xi=-2.0, pos_jumps=pos,
                              neg_jumps=neg)
    assume(model.mean < 0)
    expected = n_pos + 1 if gaussian else n_pos
    assert len(positive_roots(model)) == expected
