"""Meromorphic continuation of the Mellin transform M(s) = E[I^{s-1}; I > 0].

M satisfies the three-term functional equation

    psi(s)/s * M(s+1) + mu * M(s) + sigma^2/2 * (s-1) * M(s-1) = 0,

so values on any vertical strip of width two determine M everywhere. The
strip is seeded with Rao-Blackwellized Monte Carlo estimates; everything
downstream (continued values, residues, expansion coefficients) is linear in
those estimates. Errors are propagated by evaluating the same linear map on
contiguous sample groups and taking the batch-means standard error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .levy_model import (
    DomainError,
    HyperExpLevyModel,
    PoleProximityError,
    exponents,
    pole_catalogue,
    psi,
    psi_derivative,
    validate_model,
)
from .montecarlo import (
    EtaSpec,
    InfiniteVarianceWarning,
    SampleSet,
    _group_stderr,
    estimate_density,
    mellin_groups,
)

ROOT_TOLERANCE = 1e-6
POLE_TOLERANCE = 1e-8
STRIP_MARGIN = 0.05
WIDE_MARGIN = 0.01


def step_up(model: HyperExpLevyModel, eta: EtaSpec, s, m_s, m_s_minus_1):
    """M(s+1) from M(s) and M(s-1)."""
    s = np.asarray(s, dtype=complex)
    if np.any(s == 0):
        raise DomainError("step_up is undefined at s = 0")
    value = psi(model, s)
    slope = psi_derivative(model, s)
    newton = np.abs(value) / np.maximum(np.abs(slope), 1e-300)
    if np.any(newton < ROOT_TOLERANCE * np.maximum(1.0, np.abs(s))):
        bad = np.atleast_1d(s - value / slope)[np.atleast_1d(newton).argmin()]
        raise PoleProximityError(f"psi(s) vanishes near s = {complex(bad):.12g}", complex(bad))
    half_var = 0.5 * eta.sigma**2
    return -s * (eta.mu * np.asarray(m_s) + half_var * (s - 1) * np.asarray(m_s_minus_1)) / value


def _psi_over_s(model, s):
    s = np.asarray(s, dtype=complex)
    near_zero = np.abs(s) < 1e-12
    safe = np.where(near_zero, 1.0, s)
    return np.where(near_zero, psi_derivative(model, 0.0), psi(model, safe) / safe)


def step_down(model: HyperExpLevyModel, eta: EtaSpec, s, m_s_plus_1, m_s):
    """M(s-1) from M(s+1) and M(s)."""
    s = np.asarray(s, dtype=complex)
    if np.any(np.abs(s - 1) < 1e-14):
        raise DomainError("step_down is undefined at s = 1")
    if eta.sigma <= 0:
        raise DomainError("step_down needs sigma > 0")
    factor = -(2.0 / eta.sigma**2) / (s - 1)
    return factor * (_psi_over_s(model, s) * np.asarray(m_s_plus_1) + eta.mu * np.asarray(m_s))


@dataclass(frozen=True)
class GroupValue:
    """A Monte Carlo quantity as an overall value plus per-group values."""

    value: np.ndarray
    groups: np.ndarray
    sizes: np.ndarray

    @property
    def stderr(self) -> np.ndarray:
        return _group_stderr(self.groups, self.sizes)


def _combine(groups: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    w = sizes / sizes.sum()
    return np.tensordot(w, groups, axes=1)


def _fit_decay(t: np.ndarray, magnitude: np.ndarray) -> tuple[float, float]:
    """(A, B) with |M(c + i t)| <= A exp(-B t) on the sampled grid."""
    keep = (t >= min(1.0, t.max() / 3)) & (magnitude > 0)
    if keep.sum() < 3:
        keep = magnitude > 0
    slope, _ = np.polyfit(t[keep], np.log(magnitude[keep]), 1)
    rate = max(-slope, 1e-3)
    amplitude = float(np.max(magnitude * np.exp(rate * t)))
    return amplitude, float(rate)


class MellinExtension:
    """Monte Carlo anchored Mellin transform with functional-equation continuation.

    The anchor strip is ``lo < Re s < hi`` where the cylinder estimator has
    finite variance: ``hi = 1 + theta/2`` and ``lo = max(-1, -rho_hat/2)``,
    both pulled in by a small margin. Any s whose real part differs from a
    point of the strip by an integer is reached by stepping the functional
    equation from a pair (s', s'+1) inside the strip.

    Two anchor lines Re s = s0 and s0 + 1, with s0 = min(1, theta)/4, are
    tabulated on a grid t_k >= 0 until |M| drops below ten standard errors;
    that height is ``t_max`` and bounds every continued evaluation.
    """

    def __init__(self, samples: SampleSet, eta: EtaSpec | None = None, groups: int = 256,
                 grid_step: float = 0.05, t_cap: float = 60.0):
        self.samples = samples
        self.model = samples.model
        self.eta = samples.eta if eta is None else eta
        if self.eta.has_jumps:
            raise DomainError("the Mellin machinery needs eta without jumps")
        self.summary = exponents(self.model)
        self.n_groups = groups
        theta = self.summary.theta
        rho_hat = self.model.rho_hat
        self.strip = (
            max(-1.0, -rho_hat / 2) + STRIP_MARGIN,
            1.0 + min(theta, 4.0) / 2 - STRIP_MARGIN,
        )
        # the estimator is unbiased on this wider strip but has infinite
        # variance outside self.strip; used only when no finite pair exists
        self.mean_strip = (-1.0 + WIDE_MARGIN, 1.0 + min(theta, 8.0) - WIDE_MARGIN)
        self.anchor_line_re = min(1.0, theta) / 4
        self._cache: dict[tuple[float, float], np.ndarray] = {}
        self._sizes = np.diff(samples.groups(groups)).astype(float)
        self._build_anchors(grid_step, t_cap)

    # ------------------------------------------------------------ anchors

    def _build_anchors(self, step: float, t_cap: float) -> None:
        s0 = self.anchor_line_re
        t_all = []
        lower, upper = [], []
        chunk = 40
        t_start = 0.0
        t_max = None
        while t_start < t_cap and t_max is None:
            t = t_start + step * np.arange(chunk)
            lo_vals = self._direct(s0 + 1j * t)
            hi_vals = self._direct(s0 + 1 + 1j * t)
            mean = _combine(lo_vals, self._sizes)
            err = _group_stderr(lo_vals, self._sizes)
            below = np.nonzero(np.abs(mean) < 10 * err)[0]
            if below.size:
                cut = below[0]
                t_max = float(t[max(cut - 1, 0)]) if (cut > 0 or t_all) else float(t[0])
                t, lo_vals, hi_vals = t[:cut], lo_vals[:, :cut], hi_vals[:, :cut]
            t_all.append(t)
            lower.append(lo_vals)
            upper.append(hi_vals)
            t_start += step * chunk
        self.t_grid = np.concatenate(t_all)
        if self.t_grid.size < 4:
            raise DomainError("too few paths: anchor values are dominated by noise")
        self.t_max = float(self.t_grid[-1]) if t_max is None else max(t_max, float(self.t_grid[-1]))
        low = np.concatenate(lower, axis=1)
        high = np.concatenate(upper, axis=1)
        self.anchor_lower = GroupValue(_combine(low, self._sizes), low, self._sizes)
        self.anchor_upper = GroupValue(_combine(high, self._sizes), high, self._sizes)
        self.decay = _fit_decay(self.t_grid, np.abs(self.anchor_lower.value))

    def _direct(self, s: np.ndarray) -> np.ndarray:
        """Group values of the Monte Carlo estimate at points inside the strip."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        keys = [(round(z.real, 12), round(z.imag, 12)) for z in s]
        missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            pts = s[missing]
            use_kummer = (self.eta.mu > 0) & (pts.real <= 0)
            out = np.empty((self._sizes.size, len(missing)), dtype=complex)
            for flag, method in ((False, "cylinder"), (True, "kummer")):
                sel = np.nonzero(use_kummer == flag)[0]
                if sel.size:
                    res = mellin_groups(self.samples, pts[sel], self.eta, self.n_groups, method)
                    out[:, sel] = res.group_means
            for col, i in enumerate(missing):
                self._cache[keys[i]] = out[:, col]
        return np.stack([self._cache[k] for k in keys], axis=1)

    # ------------------------------------------------------------ continuation

    def _in_strip(self, re: float, strip=None) -> bool:
        lo, hi = strip or self.strip
        return lo <= re <= hi

    def _near_real_pole(self, z: complex) -> bool:
        return abs(z.imag) < 0.05 and min(abs(z.real), abs(z.real + 1)) < 0.05

    def _base_shift(self, s: complex, strip=None) -> int:
        """Integer n such that s - n and s - n + 1 both lie in the strip."""
        lo, hi = strip or self.strip
        best = None
        for n in range(math.floor(s.real - hi) - 1, math.ceil(s.real - lo) + 2):
            base = s - n
            if not (lo <= base.real and base.real + 1 <= hi):
                continue
            if self._near_real_pole(base) or self._near_real_pole(base + 1):
                continue
            if best is None or abs(n) < abs(best):
                best = n
        if best is None:
            raise DomainError(f"s = {s} is not reachable from the anchor strip {(lo, hi)}")
        return best

    def _shift_for(self, s: complex) -> int:
        if self._in_strip(s.real):
            return 0
        try:
            return self._base_shift(s)
        except DomainError:
            pass
        warnings.warn(f"M({s}) uses estimates with infinite variance; its error bar is unreliable",
                      InfiniteVarianceWarning, stacklevel=3)
        if self._in_strip(s.real, self.mean_strip):
            return 0
        return self._base_shift(s, self.mean_strip)

    def _check_pole(self, s: complex) -> None:
        if abs(s.imag) > POLE_TOLERANCE:
            return
        for pole in self.poles(c_max=abs(s.real) + 1):
            if abs(s.real - pole.location) < POLE_TOLERANCE * max(1.0, abs(pole.location)):
                raise PoleProximityError(f"M has a pole at s = {pole.location:.12g} ({pole.kind})",
                                         pole.location)

    def poles(self, c_max: float):
        return pole_catalogue(self.model, self.eta, c_max)

    def _continue(self, s: np.ndarray, shift: int) -> np.ndarray:
        """Step from the anchor pair (s - shift, s - shift + 1) to s, all points at once."""
        if shift == 0:
            return self._direct(s)
        base = s - shift
        both = self._direct(np.concatenate([base, base + 1]))
        k = s.size
        m_lo, m_hi = both[:, :k], both[:, k:]
        if shift > 0:
            point = base + 1
            for _ in range(shift - 1):
                m_lo, m_hi = m_hi, step_up(self.model, self.eta, point, m_hi, m_lo)
                point = point + 1
            return m_hi
        point = base
        for _ in range(-shift):
            m_hi, m_lo = m_lo, step_down(self.model, self.eta, point, m_hi, m_lo)
            point = point - 1
        return m_lo

    def extend_groups(self, s) -> GroupValue:
        """Continued M at the points ``s`` with per-group values."""
        s = np.atleast_1d(np.asarray(s, dtype=complex)).ravel()
        too_high = np.abs(s.imag) > self.t_max + 1e-9
        if np.any(too_high):
            bad = np.abs(s.imag[too_high]).max()
            raise DomainError(f"|Im s| = {bad:.4g} exceeds the anchor height {self.t_max:.4g}")
        lower = s.imag < 0
        upper = np.where(lower, s.conj(), s)
        for z in upper[np.abs(upper.imag) <= POLE_TOLERANCE]:
            self._check_pole(complex(z))
        shifts = np.array([self._shift_for(complex(z)) for z in upper])
        groups = np.empty((self._sizes.size, s.size), dtype=complex)
        for shift in np.unique(shifts):
            sel = np.nonzero(shifts == shift)[0]
            groups[:, sel] = self._continue(upper[sel], int(shift))
        groups[:, lower] = np.conj(groups[:, lower])
        return GroupValue(_combine(groups, self._sizes), groups, self._sizes)

    def extend(self, s):
        """(value, error_estimate) of the continued Mellin transform."""
        res = self.extend_groups(s)
        if np.ndim(s) == 0:
            return complex(res.value[0]), float(res.stderr[0])
        return res.value, res.stderr

    def line_groups(self, re: float, t: np.ndarray) -> GroupValue:
        """Group values on the vertical line Re s = re at heights t >= 0."""
        return self.extend_groups(re + 1j * np.asarray(t, dtype=float))

    def residue_at_zero(self) -> GroupValue:
        """k(0) = lim s M(s) as s -> 0, from the Rao-Blackwellized density at 0."""
        bounds = self.samples.groups(self.n_groups)
        vals = np.empty(bounds.size - 1)
        for g in range(bounds.size - 1):
            part = _slice_samples(self.samples, bounds[g], bounds[g + 1])
            vals[g] = estimate_density(part, self.eta, 0.0)[0]
        groups = vals[:, None]
        return GroupValue(_combine(groups, self._sizes), groups, self._sizes)

    def to_dict(self) -> dict:
        return {
            "anchor_line_re": self.anchor_line_re,
            "strip": list(self.strip),
            "t_max": self.t_max,
            "decay": {"A": self.decay[0], "B": self.decay[1]},
            "anchors": [
                {"t": float(t), "lower": [lv.real, lv.imag], "upper": [uv.real, uv.imag],
                 "lower_stderr": float(le), "upper_stderr": float(ue)}
                for t, lv, uv, le, ue in zip(self.t_grid, self.anchor_lower.value,
                                             self.anchor_upper.value, self.anchor_lower.stderr,
                                             self.anchor_upper.stderr)
            ],
        }


def _slice_samples(samples: SampleSet, start: int, stop: int) -> SampleSet:
    return replace(samples, j1=samples.j1[start:stop], j2=samples.j2[start:stop],
                   i_draw=samples.i_draw[start:stop],
                   truncation_tail=samples.truncation_tail[start:stop])


class SyntheticMellin:
    """A known Mellin transform wrapped in the extension interface (no noise)."""

    def __init__(self, func, t_max: float = 40.0, theta: float = math.inf):
        self.func = func
        self.t_max = t_max
        self.theta = theta

    def line_groups(self, re: float, t: np.ndarray) -> GroupValue:
        vals = np.asarray(self.func(re + 1j * np.asarray(t, dtype=float)), dtype=complex)
        return GroupValue(vals, vals[None, :], np.ones(1))

    def extend(self, s):
        return complex(self.func(complex(s))), 0.0


def functional_equation_residual(samples: SampleSet, s, eta: EtaSpec | None = None,
                                 groups: int = 1000):
    """psi(s)/s M(s+1) + mu M(s) + sigma^2/2 (s-1) M(s-1) from direct estimates.

    Returns (residual, stderr) arrays; the stderr is the batch-means error of
    the whole combination, so correlations between the three estimates are
    accounted for.
    """
    eta = samples.eta if eta is None else eta
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    pts = np.concatenate([s + 1, s, s - 1])
    res = mellin_groups(samples, pts, eta, groups)
    k = s.size
    up, mid, down = res.group_means[:, :k], res.group_means[:, k:2 * k], res.group_means[:, 2 * k:]
    model = samples.model
    combo = _psi_over_s(model, s) * up + eta.mu * mid + 0.5 * eta.sigma**2 * (s - 1) * down
    return _combine(combo, res.group_sizes), _group_stderr(combo, res.group_sizes)


# ---------------------------------------------------------------- coefficients


def _b_recurrence(model, eta, k0, count):
    out = [np.zeros_like(k0), k0]
    coef = 2.0 / eta.sigma**2
    for n in range(count - 1):
        out.append(coef * (eta.mu * out[-1] - float(np.real(psi(model, -float(n)))) * out[-2]))
    return out[1:count + 1]


def small_x_coeffs(model: HyperExpLevyModel, eta: EtaSpec, k0, count: int):
    """b_0, ..., b_{count-1}: Taylor coefficients of the density at 0.

    The recurrence is trusted only while n < 1 + rho_hat; beyond that the
    expansion at zero picks up non-integer powers.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if count - 1 >= 1 + model.rho_hat:
        raise DomainError(
            f"b_n is defined by the recurrence only for n < 1 + rho_hat = {1 + model.rho_hat:g}"
        )
    return _b_recurrence(model, eta, k0, count)


@dataclass
class ExpansionCoeffs:
    """Coefficients of the two-sided expansions of the density.

    Small x:  k(x) ~ sum_j b_j x^j / j! + sum_{i,j} b_ij x^{j + rho_hat_i}/(1 + rho_hat_i)_j
    Large x:  k(x) ~ sum_{i,j} c_ij (zeta_i)_j x^{-j - zeta_i}
    """

    b_n: list
    b_ij: dict
    c_ij: dict
    k0: float
    theta: float
    zeta_list: tuple
    rho_hat_list: tuple
    stderr: dict = field(default_factory=dict)

    def residues(self) -> list[tuple[float, str, float]]:
        """(pole location, kind, residue of M) for every stored coefficient."""
        out = []
        for n, b in enumerate(self.b_n):
            out.append((-float(n), "negative-integer", b / math.factorial(n)))
        for (i, j), b in self.b_ij.items():
            r = self.rho_hat_list[i - 1]
            out.append((-r - j, "shifted-hat-rho", b / _pochhammer(1 + r, j)))
        for (i, j), c in self.c_ij.items():
            z = self.zeta_list[i - 1]
            out.append((z + j, "shifted-root", -_pochhammer(z, j) * c))
        return sorted(out)

    def to_dict(self) -> dict:
        def pairs(table):
            return [{"i": i, "j": j, "value": float(v), "stderr": float(self.stderr.get((kind, i, j), 0.0))}
                    for (i, j), v, kind in ((k, table[k], "b" if table is self.b_ij else "c")
                                            for k in sorted(table))]
        return {
            "k0": float(self.k0),
            "theta": float(self.theta),
            "zeta": [float(z) for z in self.zeta_list],
            "rho_hat": [float(r) for r in self.rho_hat_list],
            "b_n": [{"n": n, "value": float(b), "stderr": float(self.stderr.get(("n", 0, n), 0.0))}
                    for n, b in enumerate(self.b_n)],
            "b_ij": pairs(self.b_ij),
            "c_ij": pairs(self.c_ij),
            "poles": [{"location": float(p), "kind": k, "residue": float(r)}
                      for p, k, r in self.residues()],
        }


def _pochhammer(a: float, n: int) -> float:
    out = 1.0
    for k in range(n):
        out *= a + k
    return out


def _theta_pair(model, eta, extension, zeta):
    """Group values of mu M(zeta) + sigma^2/2 (zeta-1) M(zeta-1)."""
    m_zeta = extension.extend_groups(zeta).groups[:, 0].real
    if abs(zeta - 1) < ROOT_TOLERANCE:
        shifted = extension.residue_at_zero().groups[:, 0]
    else:
        shifted = (zeta - 1) * extension.extend_groups(zeta - 1).groups[:, 0].real
    return eta.mu * m_zeta + 0.5 * eta.sigma**2 * shifted


@dataclass(frozen=True)
class TailConstant:
    """P(I > x) ~ C x^{-theta}; ``lighter_than_power`` marks C = 0 (o(x^{-theta}))."""

    r_theta: float
    c: float
    stderr: float
    lighter_than_power: bool = False


def tail_constant(model: HyperExpLevyModel, eta: EtaSpec, extension) -> TailConstant:
    """R(theta) and C = -R(theta)/theta of the power tail of I."""
    summary = exponents(model)
    theta = summary.theta
    if not math.isfinite(theta) or theta >= model.rho:
        # no root of psi below rho and psi < 0 there: the tail is o(x^{-theta})
        return TailConstant(0.0, 0.0, 0.0, True)
    groups = _theta_pair(model, eta, extension, theta) / float(np.real(psi_derivative(model, theta)))
    sizes = extension._sizes
    c = float(_combine(groups, sizes))
    err = float(_group_stderr(groups, sizes))
    return TailConstant(-theta * c, c, err)


def hyperexp_coeffs(model: HyperExpLevyModel, eta: EtaSpec, extension, c_max: float) -> ExpansionCoeffs:
    """All expansion coefficients whose pole has |Re| <= c_max."""
    report = validate_model(model)
    if not report.valid:
        raise DomainError("E[xi_1] >= 0: the model is not admissible")
    if not report.simple_poles:
        raise DomainError("simple-poles condition violated: " + "; ".join(report.violations))
    summary = report.exponents
    sizes = extension._sizes
    stderr = {}

    def settle(groups, key):
        stderr[key] = float(_group_stderr(groups, sizes))
        return float(_combine(groups, sizes))

    k0_groups = extension.residue_at_zero().groups[:, 0]
    count = int(math.floor(c_max)) + 1
    b_groups = _b_recurrence(model, eta, k0_groups, count)
    b_n = [settle(g, ("n", 0, n)) for n, g in enumerate(b_groups)]

    coef = 2.0 / eta.sigma**2
    b_ij = {}
    for i, (a_hat, r) in enumerate(model.neg_jumps, start=1):
        if r + 1 > c_max:
            continue
        m = extension.extend_groups(1 - r).groups[:, 0].real
        prev, cur = np.zeros_like(m), -coef * (a_hat / r) * m
        j = 1
        while r + j <= c_max:
            b_ij[(i, j)] = settle(cur, ("b", i, j))
            prev, cur = cur, coef * (eta.mu * cur - float(np.real(psi(model, -j - r))) * prev)
            j += 1

    c_ij = {}
    for i, zeta in enumerate(summary.positive_roots, start=1):
        if zeta + 1 > c_max:
            continue
        cur = _theta_pair(model, eta, extension, zeta) / float(np.real(psi_derivative(model, zeta)))
        prev = np.zeros_like(cur)
        j = 1
        while zeta + j <= c_max:
            c_ij[(i, j)] = settle(cur, ("c", i, j))
            prev, cur = cur, -(eta.mu * cur + 0.5 * eta.sigma**2 * prev) / float(np.real(psi(model, j + zeta)))
            j += 1

    return ExpansionCoeffs(
        b_n=b_n,
        b_ij=b_ij,
        c_ij=c_ij,
        k0=b_n[0],
        theta=summary.theta,
        zeta_list=summary.positive_roots,
        rho_hat_list=tuple(t.rate for t in model.neg_jumps),
        stderr=stderr,
    )
