"""Density and tail of I from the Mellin transform.

The central region is covered by trapezoid quadrature of the inverse Mellin
integral along a vertical line; both ends are covered by the power series
whose coefficients come from the residues of M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_model import DomainError
from .mellin_engine import ExpansionCoeffs, _combine, _fit_decay, _pochhammer
from .montecarlo import _group_stderr, estimate_density


@dataclass(frozen=True)
class InversionConfig:
    """Quadrature settings; ``None`` fields are taken from the Mellin source."""

    contour_re: float | None = None
    t_max: float | None = None
    quadrature_step: float = 0.05
    tail_bound_budget: float = 1e-6


@dataclass(frozen=True)
class InversionResult:
    value: np.ndarray
    error_estimate: np.ndarray
    stderr: np.ndarray
    quadrature_delta: np.ndarray
    truncation_bound: np.ndarray

    @property
    def within_budget(self) -> bool:
        return bool(np.all(np.isfinite(self.truncation_bound)))


def _theta(source) -> float:
    summary = getattr(source, "summary", None)
    return summary.theta if summary is not None else getattr(source, "theta", math.inf)


def default_contour(source) -> float:
    return min(1.0, _theta(source)) / 2


def _contour_integral(source, x, c, config, weight=None):
    """(1/pi) Re int_0^T x^{-c-it} w(c+it) M(c+it) dt at step h and h/2."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise DomainError("inversion needs x > 0; flip mu for x < 0 and use the series at 0")
    h = config.quadrature_step
    t_top = config.t_max if config.t_max is not None else source.t_max
    steps = int(math.floor(t_top / h + 1e-9))
    if steps < 2:
        raise DomainError("quadrature range is shorter than two steps")
    t = (h / 2) * np.arange(2 * steps + 1)
    line = source.line_groups(c, t)
    groups = line.groups * (1.0 if weight is None else weight(c + 1j * t))
    fine = np.full(t.size, h / 2)
    fine[[0, -1]] = h / 4
    coarse = np.zeros(t.size)
    coarse[::2] = h
    coarse[[0, -1]] = h / 2
    log_x = np.log(x)
    kernel = np.exp(-np.outer(c + 1j * t, log_x))  # (K, X)
    fine_groups = (groups * fine) @ kernel / math.pi
    coarse_groups = (groups * coarse) @ kernel / math.pi
    sizes = line.sizes
    fine_val = _combine(fine_groups, sizes)
    coarse_val = _combine(coarse_groups, sizes)
    value = fine_val.real
    stderr = _group_stderr(fine_groups.real, sizes) if groups.shape[0] > 1 else np.zeros(x.size)
    amplitude, rate = _fit_decay(t, np.abs(_combine(groups, sizes)))
    truncation = x ** (-c) * amplitude * math.exp(-rate * t[-1]) / rate / math.pi
    delta = np.abs(fine_val.real - coarse_val.real)
    return InversionResult(value, delta + truncation + stderr, stderr, delta, truncation)


def _scalarize(result: InversionResult, scalar: bool):
    if scalar:
        return float(result.value[0]), float(result.error_estimate[0])
    return result.value, result.error_estimate


def invert_density(source, x, config: InversionConfig | None = None, detailed: bool = False):
    """k(x) for x > 0 by inverse Mellin quadrature: (value, error_estimate).

    ``source`` is a :class:`MellinExtension` or :class:`SyntheticMellin`.
    The contour defaults to Re s = min(1, theta)/2. With ``detailed=True``
    the full :class:`InversionResult` is returned.
    """
    config = config or InversionConfig()
    c = default_contour(source) if config.contour_re is None else config.contour_re
    theta = _theta(source)
    if not 0 < c < theta:
        raise DomainError(f"contour Re s = {c} is outside the pole-free strip (0, {theta:g})")
    res = _contour_integral(source, x, c, config)
    return res if detailed else _scalarize(res, np.ndim(x) == 0)


def invert_remainder(source, x, contour_re: float, config: InversionConfig | None = None,
                     detailed: bool = False):
    """Inverse Mellin integral on a line left of the pole at 0.

    Moving the contour from the principal strip to Re s = contour_re < 0 picks
    up the residues of x^{-s} M(s) at the poles crossed, so the result is
    k(x) minus the small-x series terms whose exponents are below
    -contour_re, for instance k(x) - k(0) - k'(0) x when -2 < contour_re < -1
    and no other pole lies in between.
    """
    if contour_re >= 0:
        raise DomainError("the remainder contour must lie left of Re s = 0")
    config = config or InversionConfig()
    res = _contour_integral(source, x, contour_re, config)
    return res if detailed else _scalarize(res, np.ndim(x) == 0)


def invert_tail(source, x, config: InversionConfig | None = None, detailed: bool = False):
    """P(I > x) for x > 0: (1/2 pi i) int x^{1-s} M(s)/(s-1) ds on 1 < Re s < 1 + theta."""
    config = config or InversionConfig()
    if config.contour_re is None:
        c = 1.0 + default_contour(source) / 2
    else:
        c = config.contour_re
    theta = _theta(source)
    if not 1 < c < 1 + theta:
        raise DomainError(f"tail contour Re s = {c} must lie in (1, {1 + theta:g})")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    res = _contour_integral(source, x, c, config, weight=lambda s: 1.0 / (s - 1))
    # the integral above carries x^{-s}; the tail kernel is x^{1-s}
    res = InversionResult(res.value * x, res.error_estimate * x, res.stderr * x,
                          res.quadrature_delta * x, res.truncation_bound * x)
    return res if detailed else _scalarize(res, scalar)


# ------------------------------------------------------------------ series


def _truncate(terms):
    """Smallest-term rule over (exponent, value, stderr) sorted by exponent.

    Returns (sum, last_term, coefficient_error) where the last term is the
    first omitted one when the rule stops early. Terms within two standard
    errors of zero are summed but do not count as the last term, so a
    coefficient that is pure noise cannot masquerade as a tiny remainder.
    """
    terms = sorted(terms, key=lambda p: p[0])
    total = 0.0
    noise = 0.0
    last = 0.0
    nonzero = 0
    for _, value, err in terms:
        mag = abs(value)
        if mag == 0.0 or mag <= 2 * err:
            total += value
            noise += err
            continue
        if nonzero >= 2 and mag > last:
            return total, mag, noise
        total += value
        noise += err
        last = mag
        nonzero += 1
    return total, last, noise


def _small_terms(coeffs: ExpansionCoeffs, x: float, order_cap: float):
    terms = []
    for j, b in enumerate(coeffs.b_n):
        if j < order_cap:
            scale = x**j / math.factorial(j)
            terms.append((float(j), b * scale, coeffs.stderr.get(("n", 0, j), 0.0) * scale))
    for (i, j), b in coeffs.b_ij.items():
        r = coeffs.rho_hat_list[i - 1]
        if j + r < order_cap:
            scale = x ** (j + r) / _pochhammer(1 + r, j)
            terms.append((j + r, b * scale, coeffs.stderr.get(("b", i, j), 0.0) * scale))
    return terms


def series_small_x(coeffs: ExpansionCoeffs, x: float, order_cap: float = math.inf):
    """Small-x expansion of k: (value, last_term).

    ``last_term`` is the magnitude of the last summed (or first dropped) term
    plus the propagated coefficient standard errors.
    """
    if not coeffs.b_n and not coeffs.b_ij:
        raise DomainError("no small-x coefficients available")
    x = float(x)
    if x < 0:
        raise DomainError("the small-x series is for x >= 0; flip mu for x < 0")
    if x == 0.0:
        return float(coeffs.b_n[0]), coeffs.stderr.get(("n", 0, 0), 0.0)
    total, last, noise = _truncate(_small_terms(coeffs, x, order_cap))
    return total, last + noise


def series_large_x(coeffs: ExpansionCoeffs, x: float, order_cap: float = math.inf):
    """Large-x expansion: (density, tail probability, last_term).

    Terms are ordered by their power j + zeta_i regardless of the root index;
    the tail series is the term-wise integral of the density series.
    """
    if not coeffs.c_ij:
        raise DomainError("no large-x coefficients available")
    x = float(x)
    if x <= 0:
        raise DomainError("the large-x series needs x > 0")
    dens, tail = [], []
    for (i, j), c in coeffs.c_ij.items():
        z = coeffs.zeta_list[i - 1]
        if j + z > order_cap:
            continue
        err = coeffs.stderr.get(("c", i, j), 0.0)
        poch = _pochhammer(z, j)
        dens.append((j + z, c * poch * x ** (-j - z), err * abs(poch) * x ** (-j - z)))
        tail.append((j + z, c * poch * x ** (1 - j - z) / (j + z - 1), 0.0))
    k_val, last, noise = _truncate(dens)
    t_val, _, _ = _truncate(tail)
    return k_val, t_val, last + noise


# ------------------------------------------------------------------ dispatch


@dataclass(frozen=True)
class DensityReport:
    x: float
    value: float
    method: str
    error_estimate: float


def evaluate(extension, coeffs: ExpansionCoeffs | None, x: float, strategy: str = "auto",
             mirror=None, config: InversionConfig | None = None) -> DensityReport:
    """k(x) with a region-dispatch policy.

    For x < 0 the pair ``mirror = (extension, coeffs)`` built for -mu is used,
    since k_{mu}(-x) = k_{-mu}(x). ``strategy`` is one of auto, inversion,
    series or mc.
    """
    x = float(x)
    if x < 0:
        if mirror is None:
            raise DomainError("x < 0 needs the mirrored (-mu) extension")
        report = evaluate(mirror[0], mirror[1], -x, strategy, None, config)
        return DensityReport(x, report.value, report.method, report.error_estimate)
    if strategy == "mc":
        samples = getattr(extension, "samples", None)
        if samples is None:
            raise DomainError("the mc strategy needs a Monte Carlo backed extension")
        value, err = estimate_density(samples, extension.eta, x)
        return DensityReport(x, float(value), "mc", float(err))
    if strategy not in ("auto", "inversion", "series"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if x == 0.0:
        if coeffs is None:
            raise DomainError("k(0) needs the expansion coefficients")
        return DensityReport(x, float(coeffs.b_n[0]), "series", float(coeffs.stderr.get(("n", 0, 0), 0.0)))

    candidates = []
    if coeffs is not None and strategy in ("auto", "series"):
        try:
            value, last = series_small_x(coeffs, x)
            candidates.append((last, value, "series"))
        except DomainError:
            pass
        try:
            value, _, last = series_large_x(coeffs, x)
            candidates.append((last, value, "series"))
        except DomainError:
            pass
    if strategy == "series":
        if not candidates:
            raise DomainError("no series available")
        err, value, method = min(candidates)
        return DensityReport(x, float(value), method, float(err))
    inv_value, inv_err = invert_density(extension, x, config)
    if strategy == "inversion":
        return DensityReport(x, inv_value, "inversion", inv_err)
    best = (inv_err, inv_value, "inversion")
    for cand in candidates:
        if cand[0] < best[0]:
            best = cand
    return DensityReport(x, float(best[1]), best[2], float(best[0]))


def density_on_half_line(extension, coeffs: ExpansionCoeffs | None, config: InversionConfig | None = None):
    """Vectorized k on x > 0 under the ``auto`` policy of :func:`evaluate`.

    Inversion runs once for the whole array; each point then keeps whichever
    of inversion and the two series reports the smallest error.
    """

    def density(x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        value, err = invert_density(extension, flat, config)
        value, err = np.array(value, dtype=float), np.array(err, dtype=float)
        if coeffs is not None:
            for i, point in enumerate(flat):
                for series in (series_small_x, series_large_x):
                    try:
                        out = series(coeffs, float(point))
                    except DomainError:
                        continue
                    if out[-1] < err[i]:
                        value[i], err[i] = out[0], out[-1]
        return value.reshape(x.shape)

    return density
