"""Spatially coloured radial Wiener process and its stochastic convolution.

The noise W = J B is diagonal in the eigenbasis of the discrete Dirichlet
Laplacian: W(t) = sum_j sigma_j B_j(t) e_j with -Delta e_j = mu_j e_j.  The
stochastic convolution z(t) = int_0^t e^{(t-s)Delta} dW_s is then a family of
independent Ornstein-Uhlenbeck modes, updated exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import RadialField, RadialGrid, lp_norm, sphere_area
from .simvar import Trajectory

log = logging.getLogger(__name__)


def required_smoothness(d: int, p: float, q: float) -> tuple[float, str]:
    """Sobolev index s = max(0, (d/q)(1 - 2q/(p(p-1)(d+2q))) - 1) and which branch binds."""
    raw = (d / q) * (1 - 2 * q / (p * (p - 1) * (d + 2 * q))) - 1
    if raw > 0:
        return float(raw), "formula"
    log.info("smoothness index clipped at 0 (formula gives %.4g) for d=%d p=%g q=%g", raw, d, p, q)
    return 0.0, "zero"


@dataclass(frozen=True, eq=False)
class NoiseColoring:
    grid: RadialGrid
    mu: np.ndarray              # Laplacian eigenvalues, ascending
    basis: np.ndarray           # (n, J) eigenfunctions at the nodes, L^2(R^d)-orthonormal
    sigmas: np.ndarray
    s_target: float
    q_target: float
    beta: float
    tail_ratio: float

    @property
    def cutoff(self) -> int:
        return self.mu.size

    def mode_field(self, j: int) -> RadialField:
        return self.grid.field(self.basis[:, j])

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Node values of sum_j c_j e_j; coeffs may carry leading batch axes."""
        return coeffs @ self.basis.T

    def gram(self) -> np.ndarray:
        """Discrete L^2(R^d) Gram matrix of the retained modes."""
        w = sphere_area(self.grid.d) * self.grid.weights
        return self.basis.T @ (w[:, None] * self.basis)


def _tail_ratio(terms: np.ndarray) -> float:
    """Estimated remainder beyond the last term relative to the partial sum.

    A power law c j^{-k} is fitted to the last quarter of the terms; k <= 1
    means the series diverges.
    """
    total = terms.sum()
    if total == 0:
        return 0.0
    m = terms.size
    j = np.arange(1, m + 1)
    sel = slice(max(0, 3 * m // 4), m)
    pos = terms[sel] > 0
    if pos.sum() < 3:
        return 0.0
    k, logc = np.polyfit(np.log(j[sel][pos]), np.log(terms[sel][pos]), 1)
    k = -k
    if k <= 1:
        return math.inf
    return float(math.exp(logc) * m ** (1 - k) / (k - 1) / total)


def build_noise_coloring(grid: RadialGrid, s: float | None = None, q: float = 2.0,
                         decay_exponent: float | None = None, cutoff: int | None = None,
                         amplitude: float = 1.0, p: float = 3.0, tail_tol: float = 1e-3) -> NoiseColoring:
    """sigma_j = amplitude (1 + mu_j)^{-beta/2} on the lowest `cutoff` Dirichlet modes.

    s defaults to the smoothness required for (d, p, q); beta defaults to
    s + d/2 + 1.
    """
    if s is None:
        s, _ = required_smoothness(grid.d, p, q)
    if s < 0:
        raise ValueError("s must be >= 0")
    beta = s + grid.d / 2 + 1 if decay_exponent is None else decay_exponent
    mu_all, vec = grid.heat_modes
    n_int = mu_all.size
    cutoff = n_int if cutoff is None else int(cutoff)
    if not 1 <= cutoff <= grid.n:
        raise ValueError(f"cutoff must lie in [1, {grid.n}], got {cutoff}")
    cutoff = min(cutoff, n_int)
    mu = mu_all[:cutoff]
    basis = np.zeros((grid.n, cutoff))
    basis[:-1] = vec[:, :cutoff] / np.sqrt(sphere_area(grid.d) * grid.weights[:-1, None])
    sigmas = amplitude * (1 + mu) ** (-beta / 2)
    ratio = _tail_ratio(sigmas ** 2 * (1 + mu) ** s) if cutoff > 8 else 0.0
    if ratio > tail_tol:
        raise ValueError(f"noise tail does not converge: partial-sum ratio {ratio:.3g} > {tail_tol:g} "
                         f"(beta={beta:g}, s={s:g})")
    for arr in (mu, basis, sigmas):
        arr.setflags(write=False)
    return NoiseColoring(grid, mu, basis, sigmas, float(s), float(q), float(beta), ratio)


def zero_coloring(nc: NoiseColoring) -> NoiseColoring:
    return NoiseColoring(nc.grid, nc.mu, nc.basis, np.zeros_like(nc.sigmas), nc.s_target,
                         nc.q_target, nc.beta, 0.0)


def sample_wiener_increment(nc: NoiseColoring, dt: float, rng: np.random.Generator) -> RadialField:
    """sum_j sigma_j sqrt(dt) xi_j e_j."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    xi = rng.standard_normal(nc.cutoff)
    return nc.grid.field(nc.synthesize(nc.sigmas * math.sqrt(dt) * xi))


def ou_factors(mu: np.ndarray, dt) -> tuple[np.ndarray, np.ndarray]:
    """Decay e^{-mu dt} and the standard deviation sqrt((1 - e^{-2 mu dt}) / (2 mu))."""
    dt = np.asarray(dt, dtype=float)[..., None]
    decay = np.exp(-mu * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(mu > 0, -np.expm1(-2 * mu * dt) / (2 * mu), dt)
    return decay, np.sqrt(var)


def ou_variance(nc: NoiseColoring, t: float) -> np.ndarray:
    """E z_j(t)^2 = sigma_j^2 (1 - e^{-2 mu_j t}) / (2 mu_j)."""
    return nc.sigmas ** 2 * ou_factors(nc.mu, t)[1] ** 2


def ou_paths(nc: NoiseColoring, times, rng: np.random.Generator, paths: int = 1,
             normals: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Modal coefficients z_j(t_k) for k = 0..K with t_0 = 0.

    Returns (coeffs, normals) with coeffs of shape (paths, K+1, J).  Passing
    the normals of an earlier call replays the same driver.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    steps = np.diff(times)
    decay, sd = ou_factors(nc.mu, steps)
    J = nc.cutoff
    if normals is None:
        normals = rng.standard_normal((paths, steps.size, J))
    out = np.zeros((normals.shape[0], times.size, J))
    z = np.zeros((normals.shape[0], J))
    for k in range(steps.size):
        z = decay[k] * z + nc.sigmas * sd[k] * normals[:, k]
        out[:, k + 1] = z
    return out, normals


@dataclass
class PathMonitor:
    times: np.ndarray
    norms: dict
    running_max: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("monitor times must increase")
        for k, v in self.norms.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.times.shape or np.any(v < 0):
                raise ValueError(f"bad norm record {k}")
            self.norms[k] = v
            self.running_max[k] = np.maximum.accumulate(v)

    def truncated(self, k: int) -> "PathMonitor":
        return PathMonitor(self.times[:k + 1], {n: v[:k + 1] for n, v in self.norms.items()})


def monitor_fields(times, fields, exponents: dict) -> PathMonitor:
    norms = {name: [lp_norm(f, e) for f in fields] for name, e in exponents.items()}
    return PathMonitor(np.asarray(times), norms)


def default_exponents(d: int, p: float, q: float) -> dict:
    """L^q, L^r and L^{pr} with r = (p + eps) q, eps the midpoint of its admissible interval."""
    r = branch_exponent(d, p, q)
    return {"L_q": q, "L_r": r, "L_pr": p * r}


def branch_exponent(d: int, p: float, q: float) -> float:
    """r = (p + eps) q with eps the midpoint of the admissible interval.

    The interval is d(p-1)/(2q) - p < eps < d(p-1)/(2q) - 1 intersected with eps > 0.
    """
    hi = d * (p - 1) / (2 * q) - 1
    lo = max(d * (p - 1) / (2 * q) - p, 0.0)
    if not hi > lo:
        raise ValueError(f"gate violated: q < q_c fails for d={d}, p={p}, q={q}")
    return (p + 0.5 * (lo + hi)) * q


def stochastic_convolution(nc: NoiseColoring, horizon: float, dt: float | None = None,
                           rng: np.random.Generator | None = None, times=None,
                           exponents: dict | None = None, normals: np.ndarray | None = None,
                           p: float = 3.0):
    """One path of z on [0, horizon] with exact per-mode updates.

    Returns (Trajectory of z, PathMonitor, normals).  Either a uniform step dt
    or an explicit time list (starting at 0) may be given.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if times is None:
        if dt is None or not dt > 0:
            raise ValueError("dt must be positive")
        k = max(1, int(round(horizon / dt)))
        times = np.linspace(0.0, horizon, k + 1)
    rng = np.random.default_rng() if rng is None else rng
    if normals is not None and normals.ndim == 2:
        normals = normals[None]
    coeffs, normals = ou_paths(nc, times, rng, 1, normals)
    vals = nc.synthesize(coeffs[0])
    fields = [nc.grid.field(v) for v in vals]
    if exponents is None:
        exponents = default_exponents(nc.grid.d, p, nc.q_target)
    mon = monitor_fields(times, fields, exponents)
    tr = Trajectory(np.asarray(times), fields, dict(mon.norms), {"coeffs": coeffs[0]})
    return tr, mon, normals[0]


@dataclass
class Clause:
    """Adapted functional of a monitor compared against a threshold (strict crossing)."""
    name: str
    func: Callable[[PathMonitor], np.ndarray]
    threshold: float


@dataclass
class StoppingTimeRecord:
    value: float
    trigger: str
    thresholds: dict
    index: int | None = None


def stopping_time(monitor: PathMonitor, clauses, horizon: float) -> StoppingTimeRecord:
    """First time any clause exceeds its threshold, capped at the horizon."""
    clauses = list(clauses)
    if not clauses:
        raise ValueError("at least one clause is required")
    best_t, best_name, best_k = horizon, "horizon", None
    t = monitor.times
    for cl in clauses:
        if math.isinf(cl.threshold) and cl.threshold > 0:
            continue
        vals = np.asarray(cl.func(monitor), dtype=float)
        hit = np.nonzero((vals > cl.threshold) & (t > 0) & (t <= horizon))[0]
        if hit.size and t[hit[0]] < best_t:
            best_t, best_name, best_k = float(t[hit[0]]), cl.name, int(hit[0])
    return StoppingTimeRecord(best_t, best_name, {c.name: c.threshold for c in clauses}, best_k)
