"""Hyper-exponential Levy processes: Laplace exponent, integrated tails, roots.

The process is

    xi_t = mu_xi * t + sigma_xi * W_t + (compound Poisson jumps),

where the Levy density of the jumps is a finite mixture of exponentials,

    pi(x) = sum_n a_n exp(-rho_n x)          for x > 0,
    pi(x) = sum_n a_hat_n exp(rho_hat_n x)   for x < 0.

Its Laplace exponent psi(z) = log E[exp(z xi_1)] is a rational function of z
with poles at rho_n and -rho_hat_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class PoleProximityError(DomainError):
    """Evaluation point is within tolerance of a pole or of a zero divisor."""

    def __init__(self, message: str, location: complex | None = None):
        super().__init__(message)
        self.location = location


class JumpTerm(NamedTuple):
    weight: float
    rate: float


def _as_jumps(terms, kind: str) -> tuple[JumpTerm, ...]:
    out = []
    for term in terms:
        if isinstance(term, dict):
            keys = ("a", "rho") if kind == "pos" else ("a_hat", "rho_hat")
            weight, rate = term[keys[0]], term[keys[1]]
        else:
            weight, rate = term
        weight, rate = float(weight), float(rate)
        if not (math.isfinite(weight) and weight > 0):
            raise ValueError(f"jump weight must be positive and finite, got {weight}")
        if not (math.isfinite(rate) and rate > 0):
            raise ValueError(f"jump rate must be positive and finite, got {rate}")
        out.append(JumpTerm(weight, rate))
    out.sort(key=lambda t: t.rate)
    rates = [t.rate for t in out]
    if len(set(rates)) != len(rates):
        raise ValueError(f"jump rates must be distinct, got {rates}")
    return tuple(out)


@dataclass(frozen=True)
class HyperExpLevyModel:
    """Characteristics of a hyper-exponential Levy process.

    Parameters
    ----------
    sigma_xi : float
        Gaussian coefficient, >= 0.
    mu_xi : float
        Linear drift of the compound Poisson representation.
    pos_jumps : sequence of (a, rho)
        Upward jump mixture; the density is ``sum a * exp(-rho * x)``.
    neg_jumps : sequence of (a_hat, rho_hat)
        Downward jump mixture; the density is ``sum a_hat * exp(rho_hat * x)``
        on x < 0.

    Jump terms are sorted by rate on construction.
    """

    sigma_xi: float = 0.0
    mu_xi: float = 0.0
    pos_jumps: tuple[JumpTerm, ...] = field(default_factory=tuple)
    neg_jumps: tuple[JumpTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        sigma = float(self.sigma_xi)
        if not (math.isfinite(sigma) and sigma >= 0):
            raise ValueError(f"sigma_xi must be finite and >= 0, got {sigma}")
        if not math.isfinite(float(self.mu_xi)):
            raise ValueError("mu_xi must be finite")
        object.__setattr__(self, "sigma_xi", sigma)
        object.__setattr__(self, "mu_xi", float(self.mu_xi))
        object.__setattr__(self, "pos_jumps", _as_jumps(self.pos_jumps, "pos"))
        object.__setattr__(self, "neg_jumps", _as_jumps(self.neg_jumps, "neg"))

    @classmethod
    def from_dict(cls, data: dict) -> "HyperExpLevyModel":
        return cls(
            sigma_xi=data.get("sigma_xi", 0.0),
            mu_xi=data.get("mu_xi", 0.0),
            pos_jumps=data.get("pos_jumps", ()),
            neg_jumps=data.get("neg_jumps", ()),
        )

    def to_dict(self) -> dict:
        return {
            "sigma_xi": self.sigma_xi,
            "mu_xi": self.mu_xi,
            "pos_jumps": [{"a": t.weight, "rho": t.rate} for t in self.pos_jumps],
            "neg_jumps": [{"a_hat": t.weight, "rho_hat": t.rate} for t in self.neg_jumps],
        }

    @property
    def jump_rate(self) -> float:
        """Total jump intensity lambda."""
        return sum(t.weight / t.rate for t in self.pos_jumps) + sum(
            t.weight / t.rate for t in self.neg_jumps
        )

    @property
    def mean(self) -> float:
        """E[xi_1] = psi'(0), the drift b_xi of the compensated representation."""
        return (
            self.mu_xi
            + sum(t.weight / t.rate**2 for t in self.pos_jumps)
            - sum(t.weight / t.rate**2 for t in self.neg_jumps)
        )

    @property
    def rho(self) -> float:
        """Smallest upward jump rate, or inf without upward jumps."""
        return self.pos_jumps[0].rate if self.pos_jumps else math.inf

    @property
    def rho_hat(self) -> float:
        """Smallest downward jump rate, or inf without downward jumps."""
        return self.neg_jumps[0].rate if self.neg_jumps else math.inf


POLE_TOLERANCE = 1e-12


def _check_poles(model: HyperExpLevyModel, z) -> None:
    z = np.asarray(z)
    for t in model.pos_jumps:
        if np.any(np.abs(z - t.rate) <= POLE_TOLERANCE * max(1.0, t.rate)):
            raise PoleProximityError(f"psi has a pole at z = {t.rate}", t.rate)
    for t in model.neg_jumps:
        if np.any(np.abs(z + t.rate) <= POLE_TOLERANCE * max(1.0, t.rate)):
            raise PoleProximityError(f"psi has a pole at z = {-t.rate}", -t.rate)


def psi(model: HyperExpLevyModel, z):
    """Laplace exponent in partial-fraction form.

    Accepts scalars or arrays, real or complex.
    """
    _check_poles(model, z)
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    out = 0.5 * model.sigma_xi**2 * z**2 + model.mu_xi * z
    for a, r in model.pos_jumps:
        out = out + z * a / (r * (r - z))
    for a, r in model.neg_jumps:
        out = out - z * a / (r * (r + z))
    return out[()] if out.ndim == 0 else out


def psi_tail_form(model: HyperExpLevyModel, z):
    """Laplace exponent through the double integrated tails.

    psi(z) = sigma^2 z^2/2 + b z + z^2 * int exp(z x) Pi2(x) dx, where Pi2 is
    the double tail on each side. For exponential mixtures each integral has a
    closed form, which gives an evaluation path independent of the
    partial-fraction algebra used by :func:`psi`.
    """
    _check_poles(model, z)
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    integral = 0.0
    for a, r in model.pos_jumps:
        # int_0^inf exp(z x) a exp(-r x)/r^2 dx
        integral = integral + (a / r**2) / (r - z)
    for a, r in model.neg_jumps:
        integral = integral + (a / r**2) / (r + z)
    out = 0.5 * model.sigma_xi**2 * z**2 + model.mean * z + z**2 * integral
    return out[()] if np.ndim(out) == 0 else out


def psi_derivative(model: HyperExpLevyModel, z, order: int = 1):
    """First or second derivative of psi, differentiated analytically."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    _check_poles(model, z)
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    s2 = model.sigma_xi**2
    if order == 1:
        out = s2 * z + model.mu_xi
        # d/dz [z a/(r(r-z))] = a/(r-z)^2 ; d/dz [-z a/(r(r+z))] = -a/(r+z)^2
        for a, r in model.pos_jumps:
            out = out + a / (r - z) ** 2
        for a, r in model.neg_jumps:
            out = out - a / (r + z) ** 2
    else:
        out = s2 + 0 * z
        for a, r in model.pos_jumps:
            out = out + 2 * a / (r - z) ** 3
        for a, r in model.neg_jumps:
            out = out + 2 * a / (r + z) ** 3
    return out[()] if np.ndim(out) == 0 else out


def double_tail(model: HyperExpLevyModel, side: str, x):
    """Twice-integrated Levy tail on the given side ('+' or '-')."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("double_tail needs x >= 0")
    terms = model.pos_jumps if side == "+" else model.neg_jumps
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    out = np.zeros_like(x)
    for a, r in terms:
        out = out + a * np.exp(-r * x) / r**2
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ExponentSummary:
    rho: float
    rho_hat: float
    theta: float
    positive_roots: tuple[float, ...]

    @property
    def root_count(self) -> int:
        return len(self.positive_roots)


def _expected_root_count(model: HyperExpLevyModel) -> int:
    n = len(model.pos_jumps)
    if model.sigma_xi > 0 or model.mu_xi > 0:
        return n + 1
    return n


def _refine(model, lo: float, hi: float) -> float:
    f = lambda z: float(psi(model, z))
    root = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        d = float(psi_derivative(model, root))
        if d == 0:
            break
        step = f(root) / d
        cand = root - step
        if not (lo < cand < hi) or abs(step) <= 1e-16 * abs(root):
            break
        root = cand
    return root


def _inside_left(model, pole: float, sign: float, right: float = math.inf) -> float:
    """A point in (pole, right) just right of a pole (or of 0) where psi has the given sign."""
    width = right - pole if math.isfinite(right) else max(pole, 1.0)
    for k in range(1, 60):
        z = pole + width * 2.0**-k
        val = float(psi(model, z))
        if np.sign(val) == sign:
            return z
    raise RuntimeError(f"could not bracket a root right of {pole}")


def _inside_right(model, pole: float, sign: float, left: float = 0.0) -> float:
    for k in range(1, 60):
        z = pole - (pole - left) * 2.0**-k
        val = float(psi(model, z))
        if np.sign(val) == sign:
            return z
    raise RuntimeError(f"could not bracket a root left of {pole}")


def positive_roots(model: HyperExpLevyModel) -> tuple[float, ...]:
    """Zeros of psi on (0, inf), one per bracket between consecutive poles.

    Requires psi'(0) < 0 so that psi is negative just right of zero.
    """
    if model.mean >= 0:
        raise DomainError("root structure requires E[xi_1] < 0")
    poles = [t.rate for t in model.pos_jumps]
    roots = []
    left_edges = [0.0] + poles
    for k, right in enumerate(poles):
        lo = _inside_left(model, left_edges[k], -1.0, right)
        hi = _inside_right(model, right, 1.0, left_edges[k])
        roots.append(_refine(model, lo, hi))
    if _expected_root_count(model) == len(poles) + 1:
        lo = _inside_left(model, left_edges[-1], -1.0)
        span = max(1.0, lo)
        hi = lo + span
        while float(psi(model, hi)) <= 0:
            span *= 2.0
            hi = lo + span
            if span > 1e12:
                raise RuntimeError("failed to bracket the root beyond the last pole")
        roots.append(_refine(model, lo, hi))
    if len(roots) != _expected_root_count(model):
        raise RuntimeError("root count does not match the interlacing rule")
    return tuple(roots)


def exponents(model: HyperExpLevyModel) -> ExponentSummary:
    """rho, rho_hat, theta and the positive roots of psi."""
    roots = positive_roots(model)
    theta = roots[0] if roots else math.inf
    return ExponentSummary(model.rho, model.rho_hat, theta, roots)


def _near_integer(x: float, tol: float) -> bool:
    return abs(x - round(x)) < tol


@dataclass(frozen=True)
class ValidationReport:
    mean: float
    mean_negative: bool
    simple_poles: bool
    violations: tuple[str, ...]
    exponents: ExponentSummary | None

    @property
    def valid(self) -> bool:
        return self.mean_negative

    def lines(self) -> list[str]:
        out = [f"E[xi_1] = {self.mean:.17g}"]
        if not self.mean_negative:
            out.append("invalid: E[xi_1] >= 0")
        if self.exponents is not None:
            e = self.exponents
            out.append(f"theta = {e.theta:.17g}")
            out.append(f"rho = {e.rho:.17g}")
            out.append(f"rho_hat = {e.rho_hat:.17g}")
            out.append("roots = " + ", ".join(f"{r:.17g}" for r in e.positive_roots))
        out.append(f"simple-poles regime = {str(self.simple_poles).lower()}")
        out.extend(f"violation: {v}" for v in self.violations)
        return out


def validate_model(model: HyperExpLevyModel, integer_tol: float = 1e-6) -> ValidationReport:
    """Check the negative-mean assumption and the simple-poles conditions."""
    mean = model.mean
    violations = []
    summary = None
    if mean < 0:
        summary = exponents(model)
        roots = summary.positive_roots
        for i in range(len(roots)):
            for j in range(i + 1, len(roots)):
                if _near_integer(roots[j] - roots[i], integer_tol):
                    violations.append(f"zeta_{j + 1} - zeta_{i + 1} is an integer")
    rates = [t.rate for t in model.neg_jumps]
    for i, r in enumerate(rates):
        if _near_integer(r, integer_tol):
            violations.append(f"rho_hat_{i + 1} = {r:g} is an integer")
        for j in range(i + 1, len(rates)):
            if _near_integer(rates[j] - r, integer_tol):
                violations.append(f"rho_hat_{j + 1} - rho_hat_{i + 1} is an integer")
    return ValidationReport(mean, mean < 0, not violations, tuple(violations), summary)


class Pole(NamedTuple):
    location: float
    kind: str
    i: int
    j: int


def pole_catalogue(model: HyperExpLevyModel, eta=None, c_max: float = 2.0,
                   integer_tol: float = 1e-6) -> list[Pole]:
    """Candidate poles of the continued Mellin transform with |Re| <= c_max.

    Kinds are 'negative-integer', 'shifted-root' (zeta_i + j) and
    'shifted-hat-rho' (-rho_hat_i - j). A listed pole may carry a zero
    residue, e.g. at -1 when mu = 0.
    """
    report = validate_model(model, integer_tol)
    if not report.valid:
        raise DomainError("E[xi_1] >= 0: the model is not admissible")
    if not report.simple_poles:
        raise DomainError("simple-poles condition violated: " + "; ".join(report.violations))
    poles = [Pole(float(-m) + 0.0, "negative-integer", 0, m) for m in range(int(math.floor(c_max)) + 1)]
    for i, zeta in enumerate(report.exponents.positive_roots, start=1):
        j = 1
        while zeta + j <= c_max:
            poles.append(Pole(zeta + j, "shifted-root", i, j))
            j += 1
    for i, (_, r) in enumerate(model.neg_jumps, start=1):
        j = 1
        while r + j <= c_max:
            poles.append(Pole(-r - j, "shifted-hat-rho", i, j))
            j += 1
    poles.sort(key=lambda p: p.location)
    return poles
