"""Complex gamma, Kummer's 1F1 and the parabolic cylinder function D_p.

The scalar kernels are compiled with numba so the Monte Carlo Mellin
estimator can call them per sample. The public functions accept scalars or
arrays and broadcast.
"""

from __future__ import annotations

import cmath
import math

import numba
import numpy as np

from .levy_model import DomainError, PoleProximityError


class ConvergenceError(ArithmeticError):
    """A series did not reach its termination criterion within the term cap."""


# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)
_SERIES_CAP = 100_000
_LAPLACE_SWITCH = 3.0
_RESCALE = 1e250
_LOG_RESCALE = math.log(1e250)


@numba.njit(cache=True)
def _log_gamma_right(z):
    # valid for Re z >= 0.5
    z = z - 1.0
    x = _LANCZOS[0] + 0j
    for k in range(1, 9):
        x += _LANCZOS[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * cmath.log(t) - t + cmath.log(x)


@numba.njit(cache=True)
def _log_gamma_scalar(z):
    if z.real >= 0.5:
        return _log_gamma_right(z)
    # reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
    return _LOG_PI - cmath.log(cmath.sin(math.pi * z)) - _log_gamma_right(1.0 - z)


@numba.njit(cache=True)
def _hyp1f1_taylor(a, b, z):
    """Return (partial sum, log scale, converged) for the Taylor series."""
    total = 1.0 + 0j
    term = 1.0 + 0j
    log_scale = 0.0
    quiet = 0
    zabs = abs(z)
    for n in range(_SERIES_CAP):
        term = term * (a + n) / (b + n) * z / (n + 1.0)
        total += term
        if abs(term) <= 1e-17 * abs(total):
            quiet += 1
            if quiet >= 3 and n + 1.0 > zabs:
                return total, log_scale, True
        else:
            quiet = 0
        if abs(total) > _RESCALE:
            total /= _RESCALE
            term /= _RESCALE
            log_scale += _LOG_RESCALE
    return total, log_scale, False


@numba.njit(cache=True)
def _hyp1f1_scalar(a, b, z):
    """1F1(a; b; z) for complex arguments; NaN signals non-convergence."""
    if z.real < 0.0 and abs(z) > 1.0:
        # e^{-z} 1F1(a, b, z) = 1F1(b - a, b, -z): sum the non-alternating side
        total, log_scale, ok = _hyp1f1_taylor(b - a, b, -z)
        if not ok:
            return complex(np.nan, np.nan)
        return total * cmath.exp(log_scale + z)
    total, log_scale, ok = _hyp1f1_taylor(a, b, z)
    if not ok:
        return complex(np.nan, np.nan)
    if log_scale == 0.0:
        return total
    return total * math.exp(log_scale)


@numba.njit(cache=True)
def _log_gamma_array(z):
    out = np.empty(z.shape, dtype=np.complex128)
    for i in range(z.size):
        out.flat[i] = _log_gamma_scalar(z.flat[i])
    return out


@numba.njit(cache=True)
def _hyp1f1_array(a, b, z):
    out = np.empty(z.shape, dtype=np.complex128)
    for i in range(z.size):
        out.flat[i] = _hyp1f1_scalar(a.flat[i], b.flat[i], z.flat[i])
    return out


def _is_nonpositive_integer(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))


def _finite(name, value):
    arr = np.asarray(value, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _unwrap(out):
    return out[()] if out.ndim == 0 else out


def log_gamma(z):
    """log Gamma(z) for complex z, principal branch on Re z >= 1/2.

    Left of that line the value comes from the reflection formula, so the
    imaginary part is determined modulo 2*pi; ``exp(log_gamma(z))`` is exact.
    """
    z = _finite("z", z)
    if np.any(_is_nonpositive_integer(z)):
        raise PoleProximityError("Gamma has a pole at non-positive integers")
    return _unwrap(_log_gamma_array(np.ascontiguousarray(z)).reshape(z.shape))


def gamma(z):
    """Gamma(z) for complex z."""
    return np.exp(log_gamma(z))


def rgamma(z):
    """1/Gamma(z), zero at the non-positive integers."""
    z = _finite("z", z)
    poles = _is_nonpositive_integer(z)
    safe = np.where(poles, 0.5, z)
    out = np.where(poles, 0.0, np.exp(-_log_gamma_array(np.ascontiguousarray(safe)).reshape(z.shape)))
    return _unwrap(np.asarray(out, dtype=complex))


def hyp1f1(a, b, z):
    """Kummer's confluent hypergeometric function 1F1(a; b; z).

    Taylor series, switching to Kummer's transformation
    ``1F1(a, b, z) = e^z 1F1(b - a, b, -z)`` when Re z < 0 so that the summed
    series never alternates in sign for real arguments.
    """
    a, b, z = np.broadcast_arrays(_finite("a", a), _finite("b", b), _finite("z", z))
    if np.any(_is_nonpositive_integer(b)):
        raise DomainError("1F1 is undefined for b a non-positive integer")
    out = _hyp1f1_array(np.ascontiguousarray(a), np.ascontiguousarray(b),
                       np.ascontiguousarray(z)).reshape(z.shape)
    if np.any(np.isnan(out)):
        raise ConvergenceError(f"1F1 series did not converge within {_SERIES_CAP} terms")
    return _unwrap(out)


def _parabolic_cylinder_laplace(p, z, step=0.05):
    # D_p(z) = e^{-z^2/4} z^p / Gamma(-p) int_0^inf u^{-p-1} e^{-u - u^2/(2 z^2)} du,
    # summed by the trapezoid rule in v = log u (analytic, doubly-exponential
    # decay on the right); the part below v_min is integrated in closed form.
    order = -p
    # start where the left tail is below double precision; the closed-form
    # remainder then only carries the O(h^2) endpoint error
    v_min = max(-42.0 / order.real, -5000.0)
    v = np.arange(v_min, np.log(60.0) + step, step)
    u = np.exp(v)
    f = np.exp(order * v - u - u**2 / (2 * z**2))
    integral = step * (f.sum() - 0.5 * (f[0] + f[-1]))
    integral += np.exp(order * v_min) / order - np.exp((order + 1) * v_min) / (order + 1)
    return np.exp(-(z**2) / 4 + p * np.log(z)) * rgamma(order) * integral


def _parabolic_cylinder_far(p, z):
    # Laplace integral needs Re p < 0; reach other orders by the stable upward
    # recurrence D_{v+1}(z) = z D_v(z) - v D_{v-1}(z)
    if p.real < 0:
        return complex(_parabolic_cylinder_laplace(p, z))
    steps = int(math.floor(p.real)) + 1
    order = p - steps
    lower = complex(_parabolic_cylinder_laplace(order - 1, z))
    upper = complex(_parabolic_cylinder_laplace(order, z))
    for _ in range(steps):
        lower, upper = upper, z * upper - order * lower
        order += 1
    return upper


def parabolic_cylinder(p, z):
    """Weber's parabolic cylinder function D_p(z) for complex order, real z.

    Evaluated from its two-term 1F1 representation
    D_p(z) = 2^{p/2} e^{-z^2/4} [sqrt(pi)/Gamma((1-p)/2) 1F1(-p/2, 1/2, z^2/2)
             - sqrt(2 pi) z/Gamma(-p/2) 1F1((1-p)/2, 3/2, z^2/2)].
    For z > 3 the two terms cancel to many digits, so there the Laplace
    integral representation is summed by the trapezoid rule in log u, with the
    recurrence in the order covering Re p >= 0.
    """
    p = _finite("p", p)
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)):
        raise ValueError("z must be finite")
    p, z = np.broadcast_arrays(p, z)
    w = z**2 / 2
    # e^{-z^2/4} 1F1(a, b, z^2/2) = e^{z^2/4} 1F1(b - a, b, -z^2/2)
    first = np.sqrt(np.pi) * rgamma((1 - p) / 2) * hyp1f1((1 + p) / 2, 0.5, -w)
    second = np.sqrt(2 * np.pi) * z * rgamma(-p / 2) * hyp1f1(1 + p / 2, 1.5, -w)
    out = np.asarray(2.0 ** (p / 2) * np.exp(z**2 / 4) * (first - second), dtype=complex)
    far = z > _LAPLACE_SWITCH
    if np.any(far):
        out = np.atleast_1d(out).copy()
        flat_p, flat_z = np.atleast_1d(p).ravel(), np.atleast_1d(z).ravel()
        flat = out.ravel()
        for i in np.flatnonzero(np.atleast_1d(far)):
            flat[i] = _parabolic_cylinder_far(flat_p[i], flat_z[i])
        out = flat.reshape(np.shape(p))
    return _unwrap(np.asarray(out))


@numba.njit(cache=True)
def cylinder_factor(s, m, log_c1, ratio):
    """e^{-m^2/2} * int_0^inf u^{s-1} exp(-u^2/2 + m u) du / sqrt(2 pi).

    Equivalent to Gamma(s)/sqrt(2 pi) * e^{-m^2/4} D_{-s}(-m). The caller
    supplies ``log_c1 = log[Gamma(s) 2^{-s/2} / (sqrt 2 Gamma((1+s)/2))]`` and
    ``ratio = sqrt 2 Gamma((1+s)/2)/Gamma(s/2)`` since they depend on s only.
    """
    if m == 0.0:
        return cmath.exp(log_c1)
    w = -0.5 * m * m
    first = _hyp1f1_scalar((1.0 - s) / 2.0, 0.5 + 0j, w + 0j)
    second = _hyp1f1_scalar(1.0 - s / 2.0, 1.5 + 0j, w + 0j)
    return cmath.exp(log_c1) * (first + ratio * m * second)


def cylinder_constants(s):
    """The s-dependent constants consumed by :func:`cylinder_factor`."""
    s = np.asarray(s, dtype=complex)
    log_c1 = log_gamma(s) - s / 2 * np.log(2.0) - 0.5 * np.log(2.0) - log_gamma((1 + s) / 2)
    ratio = np.sqrt(2.0) * np.exp(log_gamma((1 + s) / 2)) * rgamma(s / 2)
    return log_c1, ratio
