"""Monte Carlo oracle for the exponential functional.

Paths of xi are simulated with exact exponential jump times and Gaussian
increments on an adaptive grid. Each path yields J1 = int e^{xi}, J2 = int
e^{2 xi}; conditionally on them the functional driven by mu dt + sigma dB is
Normal(mu J1, sigma^2 J2), which gives Rao-Blackwellized estimators of the
density, tail and Mellin transform.

Random streams are keyed by (seed, batch index) through
``numpy.random.SeedSequence`` so results do not depend on thread scheduling.
"""

from __future__ import annotations

import cmath
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numba
import numpy as np
from scipy.optimize import minimize_scalar

from .levy_model import (
    DomainError,
    HyperExpLevyModel,
    JumpTerm,
    _as_jumps,
    exponents,
    psi,
)
from .special_functions import _hyp1f1_scalar, cylinder_constants, cylinder_factor, log_gamma

BATCH_SIZE = 4096


class InfiniteVarianceWarning(UserWarning):
    """Estimator parameters outside the region where the variance is finite."""


@dataclass(frozen=True)
class EtaSpec:
    """Integrator eta_t = mu t + sigma B_t (+ optional exponential-mixture jumps).

    ``mu`` is the linear drift; with jumps the mean slope is :attr:`mean`.
    """

    mu: float = 0.0
    sigma: float = 1.0
    pos_jumps: tuple[JumpTerm, ...] = field(default_factory=tuple)
    neg_jumps: tuple[JumpTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "pos_jumps", _as_jumps(self.pos_jumps, "pos"))
        object.__setattr__(self, "neg_jumps", _as_jumps(self.neg_jumps, "neg"))
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError("eta parameters must be finite")
        if self.sigma < 0 or (self.sigma == 0 and not self.has_jumps):
            raise ValueError("eta needs sigma > 0 unless it carries jumps")

    @classmethod
    def from_dict(cls, data: dict) -> "EtaSpec":
        jumps = data.get("jumps") or {}
        return cls(
            mu=data.get("mu", 0.0),
            sigma=data.get("sigma", 1.0),
            pos_jumps=jumps.get("pos_jumps", ()),
            neg_jumps=jumps.get("neg_jumps", ()),
        )

    def to_dict(self) -> dict:
        out = {"mu": self.mu, "sigma": self.sigma}
        if self.has_jumps:
            out["jumps"] = {
                "pos_jumps": [{"a": t.weight, "rho": t.rate} for t in self.pos_jumps],
                "neg_jumps": [{"a_hat": t.weight, "rho_hat": t.rate} for t in self.neg_jumps],
            }
        return out

    @property
    def has_jumps(self) -> bool:
        return bool(self.pos_jumps or self.neg_jumps)

    @property
    def jump_rate(self) -> float:
        return sum(t.weight / t.rate for t in self.pos_jumps + self.neg_jumps)

    @property
    def mean(self) -> float:
        """E[eta_1]."""
        return (
            self.mu
            + sum(t.weight / t.rate**2 for t in self.pos_jumps)
            - sum(t.weight / t.rate**2 for t in self.neg_jumps)
        )

    def flipped(self) -> "EtaSpec":
        """Parameters of -eta."""
        return EtaSpec(-self.mu, self.sigma, self.neg_jumps, self.pos_jumps)


@dataclass(frozen=True)
class SamplerConfig:
    """Simulation settings.

    ``horizon=None`` selects :func:`default_horizon`. ``grid_step`` is the
    Brownian step used while the path sits at its running maximum; below the
    maximum the step grows like ``exp(gap/2)`` up to ``max_step``, which keeps
    the relative contribution of every step roughly constant. With
    ``early_stop`` a path ends once its future contribution is negligible
    relative to the accumulated integrals.
    """

    n_paths: int = 100_000
    seed: int = 0
    horizon: float | None = None
    grid_step: float = 0.01
    max_step: float = 0.25
    early_stop: bool = True


class Path(NamedTuple):
    times: np.ndarray
    values: np.ndarray
    truncation_tail: float


class McSample(NamedTuple):
    j1: float
    j2: float
    v: float
    i_draw: float
    truncation_tail: float


@dataclass(frozen=True)
class SampleSet:
    """Per-path summaries of a simulation run (column arrays)."""

    j1: np.ndarray
    j2: np.ndarray
    i_draw: np.ndarray
    truncation_tail: np.ndarray
    model: HyperExpLevyModel
    eta: EtaSpec
    config: SamplerConfig

    @property
    def v(self) -> np.ndarray:
        return self.j1**2 / self.j2

    def __len__(self) -> int:
        return self.j1.size

    def __getitem__(self, i: int) -> McSample:
        return McSample(self.j1[i], self.j2[i], self.j1[i] ** 2 / self.j2[i],
                        self.i_draw[i], self.truncation_tail[i])

    def with_eta(self, eta: EtaSpec) -> "SampleSet":
        """Same xi paths, different integrator parameters (draws are kept)."""
        return replace(self, eta=eta)

    def groups(self, count: int = 64) -> np.ndarray:
        """Contiguous group boundaries used for batch-means error propagation."""
        count = max(2, min(count, len(self) // 2)) if len(self) >= 4 else 1
        return np.linspace(0, len(self), count + 1).astype(np.int64)


def _truncation_exponent(model: HyperExpLevyModel) -> tuple[float, float]:
    """(q, psi(q)) used for the horizon rule and the truncation bound."""
    psi_one = float(psi(model, 1.0)) if model.rho > 1 else math.inf
    if psi_one < 0:
        return 1.0, psi_one
    upper = min(1.0, exponents(model).theta, model.rho)
    res = minimize_scalar(lambda q: float(psi(model, q)), bounds=(0.0, upper), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def default_horizon(model: HyperExpLevyModel) -> float:
    """Horizon T with exp(psi(q) T) = 1e-8 for the truncation exponent q."""
    _, value = _truncation_exponent(model)
    return math.log(1e8) / -value


@numba.njit(cache=True, inline="always")
def _phi1(y):
    # (e^y - 1)/y
    if abs(y) < 1e-5:
        return 1.0 + 0.5 * y + y * y / 6.0
    return math.expm1(y) / y


@numba.njit(cache=True)
def _draw_jump(rng, cum_weights, rates, signs):
    u = rng.random() * cum_weights[-1]
    k = 0
    while k < cum_weights.size - 1 and u > cum_weights[k]:
        k += 1
    return signs[k] * rng.exponential(1.0 / rates[k])


@numba.njit(cache=True, nogil=True)
def _run_path(rng, mu, sigma, lam, cum_w, rates, signs,
              eta_lam, eta_cum, eta_rates, eta_signs,
              horizon, h0, h_max, stop1, stop2, corrected, rec_t, rec_x):
    """Simulate one path; returns (j1, j2, xi_end, eta_jump_sum, n_recorded).

    With ``corrected`` the per-step integrals include the Brownian-bridge
    mean factor exp(alpha^2 sigma^2 dt/12) and the exactly sampled bridge
    area; otherwise they integrate the linear interpolant. Recording is
    active when ``rec_t`` has nonzero length.
    """
    record = rec_t.size > 0
    t = 0.0
    x = 0.0
    top = 0.0
    j1 = 0.0
    j2 = 0.0
    jsum = 0.0
    n = 0
    if record:
        rec_t[0] = 0.0
        rec_x[0] = 0.0
        n = 1
    next_jump = t + rng.exponential(1.0 / lam) if lam > 0 else math.inf
    next_eta = t + rng.exponential(1.0 / eta_lam) if eta_lam > 0 else math.inf
    while t < horizon:
        if sigma > 0:
            h = min(h0 * math.exp(min(0.5 * (top - x), 50.0)), h_max)
        else:
            h = math.inf
        dt = min(h, next_jump - t, next_eta - t, horizon - t)
        if sigma > 0:
            z1 = rng.standard_normal()
            z2 = rng.standard_normal()
            dx = mu * dt + sigma * math.sqrt(dt) * z1
        else:
            z2 = 0.0
            dx = mu * dt
        for alpha in (1.0, 2.0):
            piece = math.exp(alpha * x) * dt * _phi1(alpha * dx)
            if corrected and sigma > 0:
                area = sigma * math.sqrt(dt / 12.0) * z2
                piece *= math.exp(alpha * area + alpha * alpha * sigma * sigma * dt / 24.0)
            if alpha == 1.0:
                j1 += piece
            else:
                j2 += piece
        t += dt
        x += dx
        if x > top:
            top = x
        if record:
            if n + 3 > rec_t.size:
                break
            rec_t[n] = t
            rec_x[n] = x
            n += 1
        if t >= next_eta:
            jsum += math.exp(x) * _draw_jump(rng, eta_cum, eta_rates, eta_signs)
            next_eta = t + rng.exponential(1.0 / eta_lam)
        if t >= next_jump:
            x += _draw_jump(rng, cum_w, rates, signs)
            if x > top:
                top = x
            if record:
                rec_t[n] = t
                rec_x[n] = x
                n += 1
            next_jump = t + rng.exponential(1.0 / lam)
        if x < math.log(j1) - stop1 and 2.0 * x < math.log(j2) - stop2:
            break
    return j1, j2, x, jsum, n


@numba.njit(cache=True, nogil=True)
def _run_batch(rng, count, mu, sigma, lam, cum_w, rates, signs,
               eta_lam, eta_cum, eta_rates, eta_signs,
               horizon, h0, h_max, stop1, stop2, out_j1, out_j2, out_x, out_jsum):
    empty = np.empty(0)
    for i in range(count):
        j1, j2, x, jsum, _ = _run_path(rng, mu, sigma, lam, cum_w, rates, signs,
                                       eta_lam, eta_cum, eta_rates, eta_signs,
                                       horizon, h0, h_max, stop1, stop2, True, empty, empty)
        out_j1[i] = j1
        out_j2[i] = j2
        out_x[i] = x
        out_jsum[i] = jsum


def _jump_tables(pos, neg):
    terms = [(t.weight / t.rate, t.rate, 1.0) for t in pos] + [
        (t.weight / t.rate, t.rate, -1.0) for t in neg
    ]
    if not terms:
        return 0.0, np.ones(1), np.ones(1), np.ones(1)
    weights = np.array([w for w, _, _ in terms])
    return (float(weights.sum()), np.cumsum(weights),
            np.array([r for _, r, _ in terms]), np.array([s for _, _, s in terms]))


def _stop_gaps(model: HyperExpLevyModel, early_stop: bool) -> tuple[float, float]:
    if not early_stop:
        return math.inf, math.inf
    theta = exponents(model).theta
    # the remaining integral is e^{alpha xi} times an independent copy whose
    # tail index is theta/alpha; leave room for its heavy upper quantiles
    slack = math.log(100.0) / min(theta, 1.0)
    return math.log(1e8) + slack, math.log(1e8) + 2 * slack


def _kernel_args(model: HyperExpLevyModel, eta: EtaSpec | None, config: SamplerConfig):
    if model.mean >= 0:
        raise DomainError("E[xi_1] >= 0: the exponential functional does not converge")
    horizon = config.horizon if config.horizon is not None else default_horizon(model)
    lam, cum, rates, signs = _jump_tables(model.pos_jumps, model.neg_jumps)
    if eta is not None and eta.has_jumps:
        eta_tables = _jump_tables(eta.pos_jumps, eta.neg_jumps)
    else:
        eta_tables = (0.0, np.ones(1), np.ones(1), np.ones(1))
    stop1, stop2 = _stop_gaps(model, config.early_stop)
    return (model.mu_xi, model.sigma_xi, lam, cum, rates, signs, *eta_tables,
            float(horizon), config.grid_step, config.max_step, stop1, stop2)


def _batch_rng(seed: int, batch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(batch, stream)))


def _thread_count() -> int:
    cap = os.environ.get("EXPFUN_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _simulate(model, eta, config):
    args = _kernel_args(model, eta, config)
    n = int(config.n_paths)
    if n <= 0:
        raise ValueError("n_paths must be positive")
    j1, j2, xe, js = (np.empty(n) for _ in range(4))
    starts = list(range(0, n, BATCH_SIZE))

    def work(start):
        stop = min(start + BATCH_SIZE, n)
        rng = _batch_rng(config.seed, start // BATCH_SIZE, 0)
        _run_batch(rng, stop - start, *args, j1[start:stop], j2[start:stop],
                   xe[start:stop], js[start:stop])

    threads = _thread_count()
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    else:
        for start in starts:
            work(start)
    return j1, j2, xe, js


def _truncation_tail(model, xi_end):
    q, value = _truncation_exponent(model)
    return np.exp(q * xi_end) / -value


def simulate(model: HyperExpLevyModel, eta: EtaSpec, config: SamplerConfig) -> SampleSet:
    """Simulate ``config.n_paths`` paths and return their summaries.

    ``i_draw`` holds one conditional draw of I per path (for eta with jumps,
    a draw of the general functional).
    """
    j1, j2, xe, jsum = _simulate(model, eta, config)
    draws = np.empty_like(j1)
    for start in range(0, j1.size, BATCH_SIZE):
        stop = min(start + BATCH_SIZE, j1.size)
        rng = _batch_rng(config.seed, start // BATCH_SIZE, 1)
        draws[start:stop] = _gaussian_part(j1[start:stop], j2[start:stop], eta, rng) + jsum[start:stop]
    return SampleSet(j1, j2, draws, _truncation_tail(model, xe), model, eta, config)


def sample_path(model: HyperExpLevyModel, config: SamplerConfig, rng: np.random.Generator,
                max_points: int = 2_000_000) -> Path:
    """One path of xi as (t_k, xi(t_k)); a jump appears as two points at equal t.

    The path is recorded at the steps of the batch sampler (the adaptive
    grid); pass ``early_stop=False`` in ``config`` to run to the horizon.
    """
    args = _kernel_args(model, None, config)
    rec_t = np.empty(max_points)
    rec_x = np.empty(max_points)
    _, _, x_end, _, n = _run_path(rng, *args, False, rec_t, rec_x)
    return Path(rec_t[:n].copy(), rec_x[:n].copy(), float(_truncation_tail(model, x_end)))


def functionals(path: Path) -> tuple[float, float, float]:
    """(J1, J2, truncation_tail) integrating the linear interpolant exactly."""
    t, x = path.times, path.values
    dt = np.diff(t)
    dx = np.diff(x)
    out = []
    for alpha in (1.0, 2.0):
        y = alpha * dx
        small = np.abs(y) < 1e-8
        ratio = np.where(small, 1.0 + 0.5 * y, np.expm1(y) / np.where(small, 1.0, y))
        out.append(float(np.sum(np.exp(alpha * x[:-1]) * dt * ratio)))
    return out[0], out[1], path.truncation_tail


def _gaussian_part(j1, j2, eta, rng):
    return eta.mu * j1 + eta.sigma * np.sqrt(j2) * rng.standard_normal(np.shape(j1))


def sample_I(j1, j2, eta: EtaSpec, rng: np.random.Generator):
    """Draw(s) from Normal(mu j1, sigma^2 j2)."""
    if eta.has_jumps:
        raise DomainError("sample_I needs eta without jumps; use sample_I_general")
    out = _gaussian_part(np.asarray(j1, float), np.asarray(j2, float), eta, rng)
    return out[()] if out.ndim == 0 else out


def sample_I_general(model: HyperExpLevyModel, eta: EtaSpec, config: SamplerConfig) -> np.ndarray:
    """Draws of int e^{xi_{t-}} d eta_t for eta with exponential-mixture jumps."""
    return simulate(model, eta, config).i_draw


# ---------------------------------------------------------------- estimators


@numba.njit(cache=True, nogil=True)
def _kernel_sums(x, j1, j2, mu, sigma, mode):
    """Sums and sums of squares over samples of the conditional Gaussian
    density (mode 0), its x-derivative (mode 1) or survival function (mode 2)."""
    m = x.size
    total = np.zeros(m)
    square = np.zeros(m)
    inv_root_2pi = 1.0 / math.sqrt(2.0 * math.pi)
    for i in range(j1.size):
        centre = mu * j1[i]
        scale = sigma * math.sqrt(j2[i])
        for k in range(m):
            u = (x[k] - centre) / scale
            if mode == 0:
                val = inv_root_2pi * math.exp(-0.5 * u * u) / scale
            elif mode == 1:
                val = -u * inv_root_2pi * math.exp(-0.5 * u * u) / (scale * scale)
            else:
                val = 0.5 * math.erfc(u / math.sqrt(2.0))
            total[k] += val
            square[k] += val * val
    return total, square


def _require_gaussian(samples: SampleSet, eta):
    eta = samples.eta if eta is None else eta
    if eta.has_jumps:
        raise DomainError("Rao-Blackwellized estimators need eta without jumps")
    return eta


def _rb_estimate(samples, eta, x, mode):
    eta = _require_gaussian(samples, eta)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    total, square = _kernel_sums(np.ascontiguousarray(x_arr), samples.j1, samples.j2,
                                 eta.mu, eta.sigma, mode)
    n = len(samples)
    mean = total / n
    var = np.maximum(square / n - mean**2, 0.0) * n / max(n - 1, 1)
    stderr = np.sqrt(var / n)
    if np.ndim(x) == 0:
        return float(mean[0]), float(stderr[0])
    return mean, stderr


def estimate_density(samples: SampleSet, eta: EtaSpec | None = None, x=0.0):
    """Rao-Blackwellized density of I at x: (value, stderr)."""
    return _rb_estimate(samples, eta, x, 0)


def estimate_density_derivative(samples: SampleSet, eta: EtaSpec | None = None, x=0.0):
    """Rao-Blackwellized derivative k'(x): (value, stderr)."""
    return _rb_estimate(samples, eta, x, 1)


def estimate_tail(samples: SampleSet, eta: EtaSpec | None = None, x=0.0):
    """Rao-Blackwellized P(I > x): (value, stderr)."""
    return _rb_estimate(samples, eta, x, 2)


def density_callable(samples: SampleSet, eta: EtaSpec | None = None):
    """(k, k') as vectorized callables backed by the sample set."""
    return (lambda x: estimate_density(samples, eta, x)[0],
            lambda x: estimate_density_derivative(samples, eta, x)[0])


_TABLE_NODES = 4096


@numba.njit(cache=True, nogil=True)
def _factor_table(s, log_c1, ratio, m_lo, step, count):
    table = np.empty((s.size, count), dtype=np.complex128)
    for q in range(s.size):
        for i in range(count):
            table[q, i] = cylinder_factor(s[q], m_lo + i * step, log_c1[q], ratio[q])
    return table


@numba.njit(cache=True, inline="always")
def _lagrange4(row, u):
    # cubic interpolation on unit-spaced nodes, u measured in node units
    count = row.size
    i = int(math.floor(u))
    if i < 1:
        i = 1
    elif i > count - 3:
        i = count - 3
    t = u - i
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0 * row[i - 1] + w1 * row[i] + w2 * row[i + 1] + w3 * row[i + 2]


@numba.njit(cache=True, nogil=True)
def _cylinder_group_sums(log_j2, m, s, table, m_lo, step, bounds):
    """Group sums of J2^{(s-1)/2} times the tabulated cylinder factor."""
    g = bounds.size - 1
    k = s.size
    sums = np.zeros((g, k), dtype=np.complex128)
    sq_re = np.zeros(k)
    sq_im = np.zeros(k)
    for grp in range(g):
        for i in range(bounds[grp], bounds[grp + 1]):
            u = (m[i] - m_lo) / step
            for q in range(k):
                val = cmath.exp((s[q] - 1.0) * 0.5 * log_j2[i])
                if table.shape[1] == 1:
                    val *= table[q, 0]
                else:
                    val *= _lagrange4(table[q], u)
                sums[grp, q] += val
                sq_re[q] += val.real * val.real
                sq_im[q] += val.imag * val.imag
    return sums, sq_re, sq_im


def _cylinder_sums(log_j2, m, s, bounds):
    log_c1, ratio = cylinder_constants(s)
    if not np.any(m):
        table = np.exp(log_c1)[:, None]
        return _cylinder_group_sums(log_j2, m, s, table, 0.0, 1.0, bounds)
    # the factor is smooth in m; tabulate it once per s and interpolate
    m_lo, m_hi = float(m.min()), float(m.max())
    step = max(m_hi - m_lo, 1e-6) / (_TABLE_NODES - 3)
    m_lo -= step
    table = _factor_table(s, log_c1, ratio, m_lo, step, _TABLE_NODES)
    return _cylinder_group_sums(log_j2, m, s, table, m_lo, step, bounds)


@numba.njit(cache=True, nogil=True)
def _kummer_group_sums(log_j2, v, mu, s, const, bounds):
    """Group sums of J2^{(s-1)/2} 1F1((1-s)/2, 1/2, -mu^2 V/2) times const."""
    g = bounds.size - 1
    k = s.size
    sums = np.zeros((g, k), dtype=np.complex128)
    for grp in range(g):
        for i in range(bounds[grp], bounds[grp + 1]):
            w = -0.5 * mu * mu * v[i]
            for q in range(k):
                val = cmath.exp((s[q] - 1.0) * 0.5 * log_j2[i]) * _hyp1f1_scalar((1.0 - s[q]) / 2.0, 0.5 + 0j, w + 0j)
                sums[grp, q] += const[q] * val
    return sums


class MellinGroups(NamedTuple):
    """Cylinder-method estimates of M(s) per contiguous sample group."""

    s: np.ndarray
    group_means: np.ndarray  # (groups, len(s))
    group_sizes: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray


def cylinder_strip(samples: SampleSet, eta: EtaSpec | None = None) -> tuple[float, float]:
    """Real-part interval where the cylinder estimator is used."""
    theta = exponents(samples.model).theta
    return (-1.0, 1.0 + theta)


def mellin_groups(samples: SampleSet, s, eta: EtaSpec | None = None, groups: int = 64,
                  method: str = "cylinder") -> MellinGroups:
    """Cylinder-method Mellin estimates at the points ``s``, by sample group.

    ``method='kummer'`` uses the mu -> -mu symmetrization (the 1F1 term minus
    the cylinder estimate for -mu); both agree on the common strip.
    """
    eta = _require_gaussian(samples, eta)
    s = np.atleast_1d(np.asarray(s, dtype=complex)).ravel()
    if np.any(np.isclose(s, np.round(s.real)) & (s.real <= 0)):
        raise DomainError("M has poles at 0 and -1; evaluate off those points")
    lo, hi = cylinder_strip(samples, eta)
    if np.any((s.real <= lo) | (s.real >= hi)):
        raise DomainError(f"Re(s) must lie in ({lo:g}, {hi:.6g}) for the cylinder estimator")
    bounds = samples.groups(groups)
    log_j2 = np.log(samples.j2)
    root_v = np.sqrt(samples.v)
    mu1 = eta.mu / eta.sigma
    if method == "cylinder":
        sums, sq_re, sq_im = _cylinder_sums(log_j2, mu1 * root_v, s, bounds)
    elif method == "kummer":
        const = np.exp(log_gamma(s) - (s - 1) / 2 * np.log(2.0) - log_gamma((s + 1) / 2))
        plus = _kummer_group_sums(log_j2, samples.v, mu1, s, const, bounds)
        minus, _, _ = _cylinder_sums(log_j2, -mu1 * root_v, s, bounds)
        sums = plus - minus
        sq_re = sq_im = None
    else:
        raise ValueError(f"unknown method {method!r}")
    sizes = np.diff(bounds).astype(float)
    scale = np.exp((s - 1) * np.log(eta.sigma))
    group_means = sums / sizes[:, None] * scale
    n = sizes.sum()
    mean = sums.sum(axis=0) / n * scale
    if sq_re is not None:
        raw = sums.sum(axis=0) / n
        var = sq_re / n - raw.real**2 + sq_im / n - raw.imag**2
        stderr = np.sqrt(np.maximum(var, 0.0) / max(n - 1, 1)) * np.abs(scale)
    else:
        stderr = _group_stderr(group_means, sizes)
    return MellinGroups(s, group_means, sizes, mean, stderr)


def _group_stderr(values: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Batch-means standard error of a weighted mean over groups (axis 0)."""
    w = sizes / sizes.sum()
    mean = np.tensordot(w, values, axes=1)
    dev = values - mean
    g = values.shape[0]
    if g < 2:
        return np.full(np.shape(mean), np.inf)
    var = np.tensordot(w, np.abs(dev) ** 2, axes=1) * g / (g - 1)
    return np.sqrt(var / g)


def estimate_mellin(samples: SampleSet, eta: EtaSpec | None = None, s=1.0, method: str = "cylinder"):
    """Mellin transform E[I^{s-1}; I > 0]: (value, stderr).

    ``direct`` averages the raw draws; it needs Re(s) >= 1 - 1e-9 to keep a
    finite variance near I = 0. ``cylinder`` is the Rao-Blackwellized form,
    valid on -1 < Re(s) < 1 + theta for mu <= 0 and 0 < Re(s) < 1 + theta
    otherwise (the ``kummer`` symmetrization covers -1 < Re(s) <= 0 for
    mu > 0).
    """
    eta = _require_gaussian(samples, eta)
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    theta = exponents(samples.model).theta
    if method == "direct":
        if np.any(s_arr.real < 1 - 1e-9) or np.any(s_arr.real >= 1 + theta):
            raise DomainError("direct Mellin estimate needs 1 <= Re(s) < 1 + theta")
        if eta is not samples.eta and eta != samples.eta:
            raise DomainError("direct estimate uses the stored draws; eta must match the sample set")
        draws = samples.i_draw
        positive = draws > 0
        logs = np.log(np.where(positive, draws, 1.0))
        vals = np.where(positive[:, None], np.exp((s_arr[None, :] - 1) * logs[:, None]), 0.0)
        mean = vals.mean(axis=0)
        stderr = np.sqrt((vals.real.var(axis=0, ddof=1) + vals.imag.var(axis=0, ddof=1)) / len(samples))
    else:
        if method == "cylinder" and eta.mu > 0 and np.any(s_arr.real <= 0):
            raise DomainError("cylinder estimate for mu > 0 needs Re(s) > 0; use method='kummer'")
        if method == "cylinder" and np.any(s_arr.real <= -1):
            raise DomainError("cylinder estimate needs Re(s) > -1")
        res = mellin_groups(samples, s_arr, eta, method=method)
        mean, stderr = res.mean, res.stderr
    if scalar:
        return complex(mean[0]), float(stderr[0])
    return mean, stderr


def joint_moment_domain(u: float, s: float, theta: float) -> bool:
    """Whether (Re u, Re s) lies where E[J1^{-u} J2^{(u+s-1)/2}] is finite."""
    return (u <= 0 and -1 < s < 1 + theta) or (u > 0 and s > 0 and u <= 1 - s)


def estimate_joint_moment(samples: SampleSet, u=0.0, w=0.0):
    """Plain average of J1^{-u} J2^{w}: (value, stderr).

    Warns with :class:`InfiniteVarianceWarning` when the parameters leave the
    region where the moment is known to be finite.
    """
    u, w = complex(u), complex(w)
    s = 2 * w.real - u.real + 1
    theta = exponents(samples.model).theta
    if not joint_moment_domain(u.real, s, theta):
        warnings.warn("joint moment parameters outside the finite-moment region",
                      InfiniteVarianceWarning, stacklevel=2)
    vals = np.exp(-u * np.log(samples.j1) + w * np.log(samples.j2))
    mean = vals.mean()
    stderr = math.sqrt((vals.real.var(ddof=1) + vals.imag.var(ddof=1)) / len(samples))
    if u.imag == 0 and w.imag == 0:
        return float(mean.real), stderr
    return complex(mean), stderr


def exponential_moment_diagnostic(samples: SampleSet, eps: float = 0.01, checkpoints=None):
    """Running estimates of E[exp(eps V)] over growing prefixes of the samples."""
    n = len(samples)
    if checkpoints is None:
        checkpoints = [n // 8, n // 4, n // 2, n]
    vals = np.exp(eps * samples.v)
    csum = np.cumsum(vals)
    return [(int(c), float(csum[c - 1] / c)) for c in checkpoints if c > 0]
