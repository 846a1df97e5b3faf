import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expfun.levy_model import DomainError, PoleProximityError
from expfun.special_functions import (
    cylinder_constants,
    cylinder_factor,
    gamma,
    hyp1f1,
    log_gamma,
    parabolic_cylinder,
    rgamma,
)

mpmath.mp.dps = 30

complex_arg = st.builds(complex, st.floats(-6, 8), st.floats(-12, 12))


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_classical_values():
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert gamma(5.0) == pytest.approx(24.0, rel=1e-14)
    assert rgamma(-3.0) == 0
    with pytest.raises(PoleProximityError):
        gamma(-2.0)


def test_gamma_modulus_on_vertical_line():
    y = 20.0
    asymptotic = math.sqrt(2 * math.pi) * abs(y) ** 0 * math.exp(-math.pi / 2 * y)
    assert abs(gamma(0.5 + 20j)) == pytest.approx(asymptotic, rel=1e-2)


@given(complex_arg)
@settings(max_examples=150, deadline=None)
def test_gamma_recursion(z):
    if abs(z - round(z.real)) < 1e-3 and z.real < 0.5:
        return
    assert rel_err(gamma(z + 1), z * gamma(z)) < 1e-11


@given(complex_arg)
@settings(max_examples=150, deadline=None)
def test_duplication_formula(z):
    if min(abs(z - round(z.real)), abs(z + 0.5 - round(z.real + 0.5))) < 1e-3 and z.real < 1:
        return
    lhs = gamma(2 * z)
    rhs = 2 ** (2 * z - 1) / math.sqrt(math.pi) * gamma(z) * gamma(z + 0.5)
    assert rel_err(lhs, rhs) < 1e-11


@given(complex_arg)
@settings(max_examples=80, deadline=None)
def test_log_gamma_against_mpmath(z):
    if abs(z - round(z.real)) < 1e-3 and z.real < 0.5:
        return
    oracle = complex(mpmath.gamma(z))
    assert rel_err(cmath.exp(log_gamma(z)), oracle) < 1e-11


def test_hyp1f1_elementary_cases():
    assert hyp1f1(0.3 + 1j, 1.7, 0.0) == 1
    assert hyp1f1(1, 1, 1.0) == pytest.approx(math.e, rel=1e-15)
    assert hyp1f1(1, 2, 1.0) == pytest.approx(math.e - 1, rel=1e-15)
    with pytest.raises(DomainError):
        hyp1f1(1.0, -2.0, 0.5)


@given(st.builds(complex, st.floats(-4, 4), st.floats(-4, 4)),
       st.floats(0.3, 3.0), st.floats(-40, 40))
@settings(max_examples=150, deadline=None)
def test_kummer_transformation(a, b, z):
    lhs = hyp1f1(a, b, z)
    rhs = cmath.exp(z) * hyp1f1(b - a, b, -z)
    assert rel_err(lhs, rhs) < 1e-11 or abs(lhs - rhs) < 1e-12


@pytest.mark.parametrize("a,b,z", [
    (0.5, 0.5, -30.0), (-2.3 + 1j, 1.5, -12.0), (1.2, 0.5, 25.0), (0.4 - 3j, 1.5, -0.7),
    (-0.45, 0.5, -18.0), (3.1, 1.5, 5.5),
])
def test_hyp1f1_against_mpmath(a, b, z):
    oracle = complex(mpmath.hyp1f1(a, b, z))
    assert rel_err(hyp1f1(a, b, z), oracle) < 1e-11


def test_parabolic_cylinder_at_zero():
    assert parabolic_cylinder(0.0, 0.0) == pytest.approx(1.0, rel=1e-14)
    for s in (2.0, 0.3 + 1.5j, -0.7):
        closed = math.sqrt(math.pi) * 2 ** (-s / 2) * rgamma((s + 1) / 2)
        assert rel_err(parabolic_cylinder(-s, 0.0), closed) < 1e-12


def test_parabolic_cylinder_order_zero():
    assert parabolic_cylinder(0.0, 2.0) == pytest.approx(math.exp(-1.0), rel=1e-12)


@pytest.mark.parametrize("p", [-0.5, -1.3 + 2j, -2.2, 0.7, -0.1 - 0.4j])
@pytest.mark.parametrize("z", [-3.0, -0.5, 1.0, 2.9, 4.5, 8.0])
def test_parabolic_cylinder_against_mpmath(p, z):
    oracle = complex(mpmath.pcfd(p, z))
    value = parabolic_cylinder(p, z)
    assert rel_err(value, oracle) < 1e-10 or abs(value - oracle) < 1e-14


@pytest.mark.parametrize("s", [0.4, 1.0, 2.3 + 1j])
def test_parabolic_cylinder_large_argument_is_bounded(s):
    # D_{-s}(z) z^s e^{z^2/4} -> 1 as z -> infinity
    z = np.linspace(3.0, 30.0, 28)
    scaled = np.array([parabolic_cylinder(-s, zz) * zz**s * math.exp(zz * zz / 4) for zz in z])
    assert np.all(np.isfinite(scaled))
    assert np.max(np.abs(scaled)) < 3
    assert abs(scaled[-1] - 1) < 0.05


@pytest.mark.parametrize("s", [0.3, 0.8 + 2j, 1.6, -0.5 + 0.5j])
@pytest.mark.parametrize("m", [-2.0, -0.4, 0.0, 1.5])
def test_cylinder_factor_matches_parabolic_cylinder(s, m):
    log_c1, ratio = cylinder_constants(s)
    value = cylinder_factor(complex(s), m, complex(log_c1), complex(ratio))
    expected = gamma(s) / math.sqrt(2 * math.pi) * math.exp(-m * m / 4) * parabolic_cylinder(-s, -m)
    assert rel_err(value, expected) < 1e-10


def test_non_finite_input_is_rejected():
    with pytest.raises(ValueError):
        gamma(float("nan"))
