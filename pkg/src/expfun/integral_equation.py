"""Residual of the integral equation satisfied by the law of I.

For a candidate density k on (0, inf) the checker evaluates, at each v > 0,

    b_xi F2 + sigma_xi^2/2 k(v) + F3 + F4 + b_eta F5 + sigma_eta^2/2 F6
        + (eta jump terms) = 0,

where F2..F6 are weighted integrals of k over (0, v) or (v, inf) and the
Levy measures enter through their twice-integrated tails. Every term is a
linear functional of k, so all of them are evaluated from one set of
density values on log-spaced Gauss-Legendre panels that have the v grid as
breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .levy_model import DomainError, HyperExpLevyModel
from .montecarlo import EtaSpec

PANELS_PER_DECADE = 3
GAUSS_ORDER = 8
CHECK_ORDER = 4
LOWER_DECADES = 9
TAIL_CUTOFF = 1e-12


@dataclass
class ResidualReport:
    """Residuals on a v grid with the individual terms that produced them."""

    grid: np.ndarray
    residuals: np.ndarray
    norm_sup: float
    norm_l2_weighted: float
    reference_scale: float
    terms: dict = field(default_factory=dict)
    failed: np.ndarray | None = None

    @property
    def relative_sup(self) -> float:
        if self.reference_scale == 0:
            return 0.0 if self.norm_sup == 0 else math.inf
        return self.norm_sup / self.reference_scale

    def rows(self):
        """(v, residual, reference_scale) rows for CSV export."""
        return [(float(v), float(r), self.reference_scale) for v, r in zip(self.grid, self.residuals)]


def _scaled_exp1(z):
    """e^z E_1(z) for z > 0."""
    z = np.asarray(z, dtype=float)
    small = z < 50
    out = np.empty_like(z)
    out[small] = np.exp(z[small]) * special.exp1(z[small])
    big = z[~small]
    series = np.zeros_like(big)
    term = np.ones_like(big)
    for n in range(12):
        series += term
        term = -term * (n + 1) / big
    out[~small] = series / big
    return out


def _scaled_expi(z):
    """e^{-z} Ei(z) for z > 0."""
    z = np.asarray(z, dtype=float)
    small = z < 50
    out = np.empty_like(z)
    out[small] = np.exp(-z[small]) * special.expi(z[small])
    big = z[~small]
    series = np.zeros_like(big)
    term = np.ones_like(big)
    for n in range(12):
        series += term
        term = term * (n + 1) / big
    out[~small] = series / big
    return out


class _Quadrature:
    """Gauss-Legendre panels in log x with prescribed breakpoints."""

    def __init__(self, breakpoints: np.ndarray, order: int):
        nodes, weights = np.polynomial.legendre.leggauss(order)
        logs = np.log(breakpoints)
        left, right = logs[:-1, None], logs[1:, None]
        half = (right - left) / 2
        u = left + half * (nodes + 1)
        self.x = np.exp(u).ravel()
        self.w = (half * weights * np.exp(u)).ravel()


def _breakpoints(density, v_grid: np.ndarray) -> np.ndarray:
    lo = v_grid.min() * 10.0 ** (-LOWER_DECADES)
    hi = v_grid.max() * 10.0
    probe = np.logspace(math.log10(lo), math.log10(hi), 64)
    peak = np.max(np.abs(probe * density(probe)))
    # extend to the right until the log-space integrand is negligible
    while hi < v_grid.max() * 1e16 and peak > 0:
        if abs(hi * float(np.atleast_1d(density(np.array([hi])))[0])) < TAIL_CUTOFF * peak:
            break
        hi *= 10.0
    decades = math.log10(hi / lo)
    base = np.logspace(math.log10(lo), math.log10(hi), int(math.ceil(decades * PANELS_PER_DECADE)) + 1)
    return np.unique(np.concatenate([base, v_grid]))


def _terms(model: HyperExpLevyModel, eta: EtaSpec, v: np.ndarray, x: np.ndarray, w: np.ndarray,
           k_nodes: np.ndarray, k_at_v: np.ndarray, dk_nodes: np.ndarray | None) -> dict:
    above = x[None, :] > v[:, None]
    below = ~above
    mass = w * k_nodes
    ratio = x[None, :] / v[:, None]
    inv_v = 1.0 / v

    terms = {}
    terms["gaussian_xi"] = 0.5 * model.sigma_xi**2 * k_at_v
    terms["drift_xi"] = model.mean * inv_v * (above @ mass)

    neg = np.zeros_like(v)
    for a_hat, r_hat in model.neg_jumps:
        neg += (a_hat / r_hat**2) * ((above * ratio ** (-r_hat)) @ mass)
    terms["neg_jumps_xi"] = neg * inv_v
    pos = np.zeros_like(v)
    for a, r in model.pos_jumps:
        pos += (a / r**2) * ((below * ratio**r) @ mass)
    terms["pos_jumps_xi"] = pos * inv_v

    terms["drift_eta"] = eta.mean * inv_v * (above @ (mass / x))
    if eta.sigma > 0:
        if dk_nodes is not None:
            f6 = -inv_v * (above @ (w * dk_nodes / x))
        else:
            f6 = inv_v * (k_at_v * inv_v - above @ (mass / x**2))
        terms["gaussian_eta"] = 0.5 * eta.sigma**2 * f6

    if eta.has_jumps:
        gap = np.abs(x[None, :] - v[:, None])
        single, double = np.zeros_like(v), np.zeros_like(v)
        for a, r in eta.pos_jumps:
            amp = a / r**2
            single += amp * ((below * np.exp(-r * gap)) @ mass)
            near = np.exp(-r * gap) * (inv_v[:, None] - r * _scaled_exp1(r * v)[:, None])
            far = 1.0 / x - r * _scaled_exp1(r * x)
            double += amp * (np.where(below, near, far[None, :]) @ mass)
        for a, r in eta.neg_jumps:
            amp = a / r**2
            single += amp * ((above * np.exp(-r * gap)) @ mass)
            decay = np.exp(-r * gap)
            kernel = (decay * inv_v[:, None] - 1.0 / x[None, :]
                      + r * (_scaled_expi(r * x)[None, :] - decay * _scaled_expi(r * v)[:, None]))
            double += amp * ((above * kernel) @ mass)
        terms["jumps_eta_single"] = single * inv_v**2
        terms["jumps_eta_double"] = -double * inv_v
    return terms


def _evaluate(density, derivative, model, eta, v_grid, min_density_ratio):
    v = np.asarray(v_grid, dtype=float).ravel()
    if v.size == 0 or np.any(v <= 0) or np.any(~np.isfinite(v)):
        raise DomainError("v_grid must be finite and positive")
    v = np.unique(v)
    k_at_v = np.asarray(density(v), dtype=float)
    top = np.max(np.abs(k_at_v)) if k_at_v.size else 0.0
    if min_density_ratio > 0 and top > 0:
        keep = k_at_v > min_density_ratio * top
        v, k_at_v = v[keep], k_at_v[keep]
        if v.size == 0:
            raise DomainError("no grid point carries enough density")
    breaks = _breakpoints(density, v)
    results = []
    for order in (GAUSS_ORDER, CHECK_ORDER):
        quad = _Quadrature(breaks, order)
        k_nodes = np.asarray(density(quad.x), dtype=float)
        dk_nodes = None if derivative is None else np.asarray(derivative(quad.x), dtype=float)
        results.append(_terms(model, eta, v, quad.x, quad.w, k_nodes, k_at_v, dk_nodes))
    terms, check = results
    residual = sum(terms.values())
    coarse = sum(check.values())
    scale = max((float(np.max(np.abs(t))) for t in terms.values()), default=0.0)
    failed = ~np.isfinite(residual) | (np.abs(residual - coarse) > 1e-3 * max(scale, 1e-300))
    return ResidualReport(
        grid=v,
        residuals=residual,
        norm_sup=float(np.max(np.abs(residual))),
        norm_l2_weighted=float(np.sqrt(np.mean((v * residual) ** 2))),
        reference_scale=scale,
        terms=terms,
        failed=failed,
    )


def residual_brownian_eta(density, model: HyperExpLevyModel, eta: EtaSpec, v_grid,
                          derivative=None, min_density_ratio: float = 0.0) -> ResidualReport:
    """Residual for eta_t = mu t + sigma B_t.

    ``density`` is a vectorized callable on (0, inf). When ``derivative`` is
    given the sigma^2 term uses -(1/v) int_v^inf k'(x)/x dx, which avoids the
    cancellation between k(v)/v^2 and the integral of k/x^2.
    """
    if eta.has_jumps:
        raise DomainError("use residual_general for eta with jumps")
    return _evaluate(density, derivative, model, eta, v_grid, min_density_ratio)


def residual_general(density, model: HyperExpLevyModel, eta: EtaSpec, v_grid, derivative=None,
                     min_density_ratio: float = 1e-6, side: str = "+") -> ResidualReport:
    """Residual for eta with exponential-mixture jumps.

    ``side='-'`` checks the negative half-line: the density is read at -v and
    the equation for -eta is used.
    """
    if side == "-":
        flipped = eta.flipped()
        reflected = (lambda x: density(-np.asarray(x)))
        slope = None if derivative is None else (lambda x: -derivative(-np.asarray(x)))
        return _evaluate(reflected, slope, model, flipped, v_grid, min_density_ratio)
    if side != "+":
        raise ValueError("side must be '+' or '-'")
    return _evaluate(density, derivative, model, eta, v_grid, min_density_ratio)


def histogram_density(draws: np.ndarray, bins: int | None = None, bandwidth: float | None = None):
    """Smoothed-histogram density estimate on [0, inf) with reflection at 0.

    Draws are binned on a fine grid, the counts are convolved with a Gaussian
    of the given bandwidth (Silverman's rule by default) with the mass that
    would leak below zero folded back, and the result is interpolated
    linearly. Negative draws are ignored.
    """
    draws = np.asarray(draws, dtype=float)
    total = draws.size
    pos = draws[draws >= 0]
    if pos.size < 2:
        raise DomainError("need at least two non-negative draws")
    if bandwidth is None:
        spread = min(pos.std(), (np.quantile(pos, 0.75) - np.quantile(pos, 0.25)) / 1.34)
        bandwidth = 0.9 * spread * pos.size ** (-0.2)
    top = np.quantile(pos, 0.9999) + 6 * bandwidth
    width = bandwidth / 8
    bins = bins or int(math.ceil(top / width))
    edges = np.linspace(0.0, bins * width, bins + 1)
    counts, _ = np.histogram(pos, edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    reach = int(math.ceil(6 * bandwidth / width))
    offsets = np.arange(-reach, reach + 1) * width
    kernel = np.exp(-0.5 * (offsets / bandwidth) ** 2)
    kernel /= kernel.sum()
    padded = np.concatenate([counts[:reach][::-1], counts, np.zeros(reach)])
    smooth = np.convolve(padded, kernel, mode="same")[reach:reach + bins]
    values = smooth / (total * width)
    tail_x = np.sort(pos[pos > centers[-1]])

    def density(x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, centers, values, left=values[0], right=0.0)
        return np.where(x < 0, 0.0, out)

    density.bandwidth = bandwidth
    density.tail_mass = tail_x.size / total
    return density
