"""Flows in similarity variables.

With tau = ln t, rho = r / sqrt(t) and v = t^{1/(p-1)} u, expanders become
stationary and a perturbation w = v - U_alpha obeys

    dw/dtau = L_alpha w + N_alpha(w),
    N_alpha(w) = n(U + w) - n(U) - p|U|^{p-1} w,   n(f) = |f|^{p-1} f.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .numerics import RadialField, RadialGrid, intersection_norm, lp_norm
from .profile import ProfileSolution, critical_exponent
from .spectrum import LinearizedOperator, assemble_linearized

log = logging.getLogger(__name__)


def power(f, p):
    """n(f) = |f|^{p-1} f, pointwise."""
    return np.abs(f) ** (p - 1) * f


def default_gamma(d: int, p: float) -> float:
    """Upper integrability exponent used for norm records when none is given."""
    return 2 * p * critical_exponent(d, p)


def resample(f: RadialField, radii) -> np.ndarray:
    """Evaluate the radial field at arbitrary radii (even extension at 0, zero past rho_max)."""
    radii = np.asarray(radii, dtype=float)
    r = f.grid.nodes
    x = np.concatenate((-r[::-1], r))
    y = np.concatenate((f.values[::-1], f.values))
    sp = CubicSpline(x, y)
    out = np.zeros_like(radii)
    inside = radii <= f.grid.rho_max
    out[inside] = sp(radii[inside])
    return out


def to_similarity(f: RadialField, t: float, p: float, grid: RadialGrid | None = None) -> RadialField:
    """v(rho) = t^{1/(p-1)} f(rho sqrt t)."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    grid = f.grid if grid is None else grid
    return grid.field(t ** (1 / (p - 1)) * resample(f, grid.nodes * math.sqrt(t)))


def from_similarity(v: RadialField, t: float, p: float, grid: RadialGrid | None = None) -> RadialField:
    """f(r) = t^{-1/(p-1)} v(r / sqrt t)."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    grid = v.grid if grid is None else grid
    return grid.field(t ** (-1 / (p - 1)) * resample(v, grid.nodes / math.sqrt(t)))


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list
    norm_table: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.fields) != self.times.size:
            raise ValueError("times and fields differ in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for k, v in self.norm_table.items():
            if len(v) != self.times.size:
                raise ValueError(f"norm column {k} does not match times")

    def __len__(self):
        return self.times.size

    def norms(self, key: str) -> np.ndarray:
        return np.asarray(self.norm_table[key])


def norm_record(f: RadialField, eta: float, gamma: float, p: float) -> dict:
    return {
        "L_eta": lp_norm(f, eta),
        "L_gamma": lp_norm(f, gamma),
        "L_gamma_over_p": lp_norm(f, gamma / p),
        "L_eta_gamma": intersection_norm(f, eta, gamma),
    }


def nonlinear_remainder(U: np.ndarray, w: np.ndarray, p: float) -> np.ndarray:
    return power(U + w, p) - power(U, p) - p * np.abs(U) ** (p - 1) * w


def _banded(op: LinearizedOperator, a: float, b: float):
    """Banded storage of a*I - b*M for the symmetric matrix M."""
    m = op.diag.size
    ab = np.zeros((3, m))
    ab[0, 1:] = -b * op.offdiag
    ab[1] = a - b * op.diag
    ab[2, :-1] = -b * op.offdiag
    return ab


def evolve_perturbation(w0: RadialField, ps: ProfileSolution, tau0: float, tau1: float,
                        dt: float = 1e-3, eta: float = 1.0, gamma: float | None = None,
                        n_records: int = 201, nonlinear: bool = True,
                        blowup: float = 1e6, op: LinearizedOperator | None = None,
                        record_every: int | None = None, keep_from: float = -math.inf) -> Trajectory:
    """Integrate dw/dtau = L_alpha w + N_alpha(w) with constant-step BDF2.

    L_alpha is implicit (tridiagonal solve in symmetrised variables) and
    N_alpha is extrapolated explicitly.  The first step is backward Euler.
    Norms are recorded at about n_records evenly spaced times (or every
    record_every steps), skipping times before keep_from.
    """
    if not tau1 > tau0:
        raise ValueError("need tau1 > tau0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    p, d = ps.p, ps.d
    gamma = default_gamma(d, p) if gamma is None else gamma
    grid = w0.grid
    if op is None:
        op = assemble_linearized(ps, eta, grid=grid)
    U = ps(grid.nodes)[:-1]
    scale = np.exp(op.weight)
    nsteps = max(1, int(round((tau1 - tau0) / dt)))
    dt = (tau1 - tau0) / nsteps
    every = record_every or max(1, nsteps // max(n_records - 1, 1))
    be = _banded(op, 1.0, dt)
    bdf = _banded(op, 1.5, dt)

    def forcing(wv):
        if not nonlinear:
            return 0.0
        return scale * nonlinear_remainder(U, wv, p)

    v_prev = None
    v = scale * w0.values[:-1]
    n_prev = None
    times, fields, table = [], [], {}
    flags = {"blowup": False, "dt": dt}

    def record(k, vv):
        if tau0 + k * dt < keep_from:
            return
        f = op.grid.field(op.from_symmetric(vv))
        times.append(tau0 + k * dt)
        fields.append(f)
        for key, val in norm_record(f, eta, gamma, p).items():
            table.setdefault(key, []).append(val)

    record(0, v)
    for k in range(1, nsteps + 1):
        nk = forcing(v / scale)
        if v_prev is None:
            v_new = solve_banded((1, 1), be, v + dt * nk)
        else:
            rhs = 2.0 * v - 0.5 * v_prev + dt * (2.0 * nk - n_prev)
            v_new = solve_banded((1, 1), bdf, rhs)
        v_prev, v, n_prev = v, v_new, nk
        amp = np.max(np.abs(v / scale))
        if not np.isfinite(amp) or amp > blowup:
            flags["blowup"] = True
            flags["blowup_tau"] = tau0 + k * dt
            log.info("perturbation exceeded %g at tau=%.4g", blowup, tau0 + k * dt)
            break
        if k % every == 0 or k == nsteps:
            record(k, v)
    return Trajectory(np.array(times), fields, {k: np.array(v) for k, v in table.items()}, flags)


@dataclass
class RateFit:
    rate: float
    intercept: float
    r2: float
    flagged: bool


def growth_rate(tr: Trajectory, norm_key: str = "L_gamma_over_p", window: float = 0.5) -> RateFit:
    """Least-squares slope of log(norm) against time over the trailing window."""
    y = tr.norms(norm_key)
    t = tr.times
    if y.size < 10:
        raise ValueError("need at least 10 samples")
    if np.any(y <= 0):
        raise ValueError("norms must be positive")
    start = int((1 - window) * y.size)
    t, ly = t[start:], np.log(y[start:])
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss <= 1e-300 * ly.size else 1 - np.sum(resid ** 2) / ss
    return RateFit(float(slope), float(icpt), float(r2), r2 < 0.99)


@dataclass
class AncientReport:
    trajectory: Trajectory
    delta: float
    shift: float
    rate: RateFit
    upper_ok: bool
    lower_ok: bool
    rate_ok: bool
    lam: float
    eps: float

    @property
    def ok(self) -> bool:
        return self.upper_ok and self.lower_ok and self.rate_ok


def approximate_ancient_solution(ps: ProfileSolution, Ulin: RadialField, lam: float, eps: float,
                                 tau_start: float | None = None, tau_end: float = 0.0,
                                 eta: float = 1.0, gamma: float | None = None,
                                 dt: float = 1e-2, delta_scale: float = 1.0,
                                 n_records: int = 401) -> AncientReport:
    """Forward-shooting surrogate of the ancient solution along the unstable mode.

    Starts from delta * Ulin at tau_start with delta sized so that pure
    exponential growth would reach eps/2 in the L^{eta,gamma} norm at
    tau_end, then follows the full nonlinear perturbation flow.
    """
    if not lam > 0:
        raise ValueError("the unstable eigenvalue must be positive")
    p = ps.p
    gamma = default_gamma(ps.d, p) if gamma is None else gamma
    if tau_start is None:
        tau_start = tau_end - 10.0 / lam
    if not tau_end - tau_start > 0:
        raise ValueError("need tau_start < tau_end")
    base = intersection_norm(Ulin, eta, gamma)
    delta = delta_scale * 0.5 * eps / (math.exp(lam * (tau_end - tau_start)) * base)
    tr = evolve_perturbation(Ulin * delta, ps, tau_start, tau_end, dt, eta, gamma, n_records)
    big = tr.norms("L_eta_gamma")
    upper_ok = bool(np.all(big < eps)) and not tr.flags["blowup"]
    if not upper_ok:
        bad = int(np.argmax(big >= eps)) if np.any(big >= eps) else len(tr) - 1
        tr = Trajectory(tr.times[:bad + 1], tr.fields[:bad + 1],
                        {k: v[:bad + 1] for k, v in tr.norm_table.items()}, dict(tr.flags))
        tr.flags["eps_exceeded"] = True
    low = tr.norms("L_gamma_over_p")
    ref = lp_norm(Ulin, gamma / p)
    # shift c such that ||psi|| = e^{lam (tau - c)} ||Ulin|| in the least-squares sense
    shifts = tr.times - np.log(low / ref) / lam
    c = float(np.median(shifts))
    envelope = 0.5 * np.exp(lam * (tr.times - c)) * ref
    lower_ok = bool(np.all(low > envelope))
    rate = growth_rate(tr, "L_gamma_over_p", window=1.0)
    rate_ok = abs(rate.rate - lam) <= 0.1 * lam
    if not (lower_ok and rate_ok):
        tr.flags["lower_bound_failed"] = True
    return AncientReport(tr, delta, c, rate, upper_ok, lower_ok, rate_ok, lam, eps)
