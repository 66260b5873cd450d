"""Two mild solutions from one compactly supported datum.

With ubar the expander issued from ell |x|^{-2/(p-1)} and u' an ancient
perturbation along its unstable mode, the branches are

    u_1 = z + ubar - w_1,     u_2 = z + ubar + u' - w_2,

where z is the stochastic convolution and w_i solve

    dw/dt = Delta w + p|ubar|^{p-1} w + f(w),    w(0) = ubar(0) - u_0,
    f(w) = -[n(ubar+u'-w+z) - n(ubar+u') + p|ubar|^{p-1}(w-z)] - p|ubar|^{p-1} z.

Everything is discretised on a sinh-stretched radial grid (resolving the
self-similar core at the earliest time) and a geometric time mesh.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .noise import (Clause, NoiseColoring, PathMonitor, StoppingTimeRecord, branch_exponent,
                    build_noise_coloring, ou_paths, stopping_time, zero_coloring)
from .numerics import RadialField, RadialGrid, build_core_grid, heat_step, intersection_norm, lp_norm
from .profile import ProfileSolution, critical_exponent, integrate_profile, require_supercritical_fujita
from .simvar import Trajectory, evolve_perturbation, power, resample
from .spectrum import (assemble_linearized, find_small_unstable_alpha, top_eigenpairs)

log = logging.getLogger(__name__)


class BranchFailure(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class BranchConfig:
    d: int = 3
    p: float = 3.0
    q: float = 2.0
    r: float | None = None
    alpha_star: float | None = None
    lambda_star: float | None = None
    Rbar: float = 1.0
    horizon: float = 1e-2
    t_min: float = 1e-9
    theta: float = 1.05
    rho_max: float = 10.0
    n: int = 1500
    eta: float = 1.0
    psi_eps: float = 0.05
    eig_eps: float = 0.05
    C: float = 1.0
    C_prime: float = 1.0
    C_z: float = math.inf
    noise_amplitude: float = 1.0
    noise_cutoff: int = 100
    noise_beta: float | None = None
    perturbation: RadialField | None = None
    picard_tol: float = 1e-8
    max_iter: int = 60

    def __post_init__(self):
        require_supercritical_fujita(self.d, self.p)
        if self.r is None:
            self.r = branch_exponent(self.d, self.p, self.q)

    @property
    def q_a(self) -> float:
        return self.r / self.p

    @property
    def q_c(self) -> float:
        return critical_exponent(self.d, self.p)

    @property
    def epsilon(self) -> float:
        return self.r / self.q - self.p

    @property
    def decay_gap(self) -> float:
        """1/(p-1) - d/(2r), the ceiling for the unstable eigenvalue."""
        return 1 / (self.p - 1) - self.d / (2 * self.r)

    @property
    def expected_slope(self) -> float:
        return -(self.decay_gap - self.lambda_star)

    def validate(self):
        if not 1 <= self.q < self.q_a < self.q_c < self.r:
            raise ValueError(f"gate violated: 1 <= q < q_a < q_c < r fails "
                             f"(q={self.q:g}, q_a={self.q_a:g}, q_c={self.q_c:g}, r={self.r:g})")
        if self.lambda_star is not None and not 0 < self.lambda_star < self.decay_gap:
            raise ValueError(f"gate violated: 0 < lambda < 1/(p-1) - d/(2r) = {self.decay_gap:g} "
                             f"fails for lambda={self.lambda_star:g}")
        if not 0 < self.Rbar < self.rho_max:
            raise ValueError("need 0 < Rbar < rho_max")
        if not 0 < self.t_min < self.horizon < 1:
            raise ValueError("need 0 < t_min < horizon < 1")
        if not self.theta > 1:
            raise ValueError("theta must exceed 1")


def resolve_instability(cfg: BranchConfig) -> BranchConfig:
    """Fill alpha_star, lambda_star from the small-eigenvalue search if absent."""
    if cfg.alpha_star is None or cfg.lambda_star is None:
        hit = find_small_unstable_alpha(cfg.p, cfg.d, cfg.eig_eps, cfg.eta, r=cfg.r)
        cfg = replace(cfg, alpha_star=hit.alpha, lambda_star=hit.lam)
    cfg.validate()
    return cfg


def geometric_mesh(t_min: float, horizon: float, theta: float) -> np.ndarray:
    """t_k = horizon theta^{k-K}, k = 0..K, with t_0 <= t_min."""
    K = int(math.ceil(math.log(horizon / t_min) / math.log(theta)))
    return horizon * theta ** (np.arange(K + 1) - K)


def physical_grid(cfg: BranchConfig) -> RadialGrid:
    return build_core_grid(cfg.d, cfg.rho_max, cfg.n, 0.3 * math.sqrt(cfg.t_min))


# ---------------------------------------------------------------------------
# norms and forcing

def z_norm(tr: Trajectory, p: float, d: int, r: float, T: float | None = None) -> dict:
    """sup_t ||w||_{L^r} + sup_t t^{(d/2r)(p-1)/p} ||w||_{L^{pr}} over sampled t <= T."""
    if len(tr) == 0:
        raise ValueError("empty trajectory")
    t = tr.times
    keep = t <= (t[-1] if T is None else T)
    a = d / (2 * r) * (p - 1) / p
    lr = np.array([lp_norm(f, r) for f, k in zip(tr.fields, keep) if k])
    lpr = np.array([lp_norm(f, p * r) for f, k in zip(tr.fields, keep) if k])
    tk = t[keep]
    weighted = np.where(tk > 0, tk, 0.0) ** a * lpr
    return _z_summary(tk, lr, weighted)


def _z_summary(tk, lr, weighted) -> dict:
    pos = np.flatnonzero(tk > 0)
    m = max(3, pos.size // 3)
    early = pos[:m][weighted[pos[:m]] > 0]
    if early.size >= 3:
        slope = float(np.polyfit(np.log(tk[early]), np.log(weighted[early]), 1)[0])
        vanishing = slope > 0
    else:
        slope, vanishing = math.nan, bool(np.all(weighted[pos[:m]] == 0))
    return {"value": float(lr.max() + weighted.max()), "sup_r": float(lr.max()),
            "sup_weighted": float(weighted.max()), "early_slope": slope, "vanishing": bool(vanishing)}


def _z_norm_arrays(grid: RadialGrid, times, vals, p, r) -> dict:
    a = grid.d / (2 * r) * (p - 1) / p
    lr = np.array([lp_norm(grid.field(v), r) for v in vals])
    lpr = np.array([lp_norm(grid.field(v), p * r) for v in vals])
    return _z_summary(np.asarray(times), lr, np.asarray(times) ** a * lpr)


def _forcing_values(w, z, ubar, uprime, p):
    base = ubar + uprime
    return -(power(base - w + z, p) - power(base, p) + p * np.abs(ubar) ** (p - 1) * (w - z)) \
        - p * np.abs(ubar) ** (p - 1) * z


def nonlinear_forcing(w: RadialField, z: RadialField, ubar: RadialField, uprime: RadialField,
                      p: float) -> RadialField:
    return w.with_values(_forcing_values(w.values, z.values, ubar.values, uprime.values, p))


# ---------------------------------------------------------------------------
# linear solver with the singular potential

def _laplacian_bands(grid: RadialGrid):
    """Sub-, main and super-diagonal of W^{-1}K on interior nodes plus the boundary coupling."""
    c = grid.face_coeffs
    w = grid.weights
    m = grid.n - 1
    lower = c[:m - 1] / w[1:m]
    upper = c[:m - 1] / w[:m - 1]
    main = -(c[:m] + np.concatenate(([0.0], c[:m - 1]))) / w[:m]
    coupling = c[m - 1] / w[m - 1]
    return lower, main, upper, coupling


def linear_inhom_solve(w0: RadialField, forcing, potential, times, boundary=None) -> Trajectory:
    """Solve dw/dt = Delta w + V(t) w + f(t), w(times[0]) = w0, by variable-step BDF2.

    potential: None or array (K+1, n) of V at the mesh times; forcing: None,
    a Trajectory or an array (K+1, n); boundary: None (homogeneous
    Dirichlet) or the outer-node values at each time.  The first step is
    backward Euler.
    """
    grid = w0.grid
    times = np.asarray(times, dtype=float)
    K = times.size - 1
    n = grid.n
    if isinstance(forcing, Trajectory):
        forcing = np.array([f.values for f in forcing.fields])
    F = np.zeros((K + 1, n)) if forcing is None else np.asarray(forcing, dtype=float)
    V = np.zeros((K + 1, n)) if potential is None else np.asarray(potential, dtype=float)
    b = np.zeros(K + 1) if boundary is None else np.asarray(boundary, dtype=float)
    lower, main, upper, coup = _laplacian_bands(grid)
    out = np.empty((K + 1, n))
    out[0] = w0.values
    out[0, -1] = b[0]
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = -upper
    ab[2, :-1] = -lower
    for k in range(K):
        h = times[k + 1] - times[k]
        if k == 0:
            a0, rhs = 1.0, out[k, :-1].copy()
            hh = h
        else:
            om = h / (times[k] - times[k - 1])
            a0 = (1 + 2 * om) / (1 + om)
            rhs = (1 + om) * out[k, :-1] - om ** 2 / (1 + om) * out[k - 1, :-1]
            hh = h
        rhs += hh * F[k + 1, :-1]
        rhs[-1] += hh * coup * b[k + 1]
        band = ab * hh
        band[1] = a0 - hh * (main + V[k + 1, :-1])
        out[k + 1, :-1] = solve_banded((1, 1), band, rhs)
        out[k + 1, -1] = b[k + 1]
    fields = [grid.field(v) for v in out]
    return Trajectory(times, fields)


# ---------------------------------------------------------------------------
# ingredients on the physical mesh

@dataclass
class BranchSetup:
    cfg: BranchConfig
    grid: RadialGrid
    times: np.ndarray              # geometric mesh, times[0] = t_min
    profile: ProfileSolution
    ell: float
    ubar: np.ndarray               # (K+1, n)
    potential: np.ndarray
    boundary: np.ndarray
    uprime: np.ndarray
    w0: RadialField
    u0: RadialField
    ancient: Trajectory | None = None
    Ulin: RadialField | None = None
    meta: dict = field(default_factory=dict)


def ancient_on_mesh(ps: ProfileSolution, cfg: BranchConfig, times: np.ndarray, grid: RadialGrid,
                    substeps: int = 5):
    """Surrogate ancient solution psi sampled at tau_k = ln t_k and mapped to physical space.

    The similarity-variable step is ln(theta)/substeps so that every mesh
    time is hit exactly.  Before the surrogate's start time the pure mode
    delta e^{lambda (tau - tau_start)} Ulin is used.
    """
    op = assemble_linearized(ps, cfg.eta)
    rep = top_eigenpairs(op, 1)
    Ulin = rep.eigenfields[0]
    lam = float(rep.eigenvalues[0])
    p = cfg.p
    gamma = p * cfg.r
    log_theta = math.log(cfg.theta)
    tau = np.log(times)
    tau_end = tau[-1]
    span = 10.0 / lam
    steps_back = int(math.ceil(span / log_theta))
    tau_start = tau_end - steps_back * log_theta
    base = intersection_norm(Ulin, cfg.eta, gamma)
    delta = 0.5 * cfg.psi_eps / (math.exp(lam * (tau_end - tau_start)) * base)
    K = times.size - 1
    keep_from = tau_end - K * log_theta - 1e-9
    tr = evolve_perturbation(Ulin * delta, ps, tau_start, tau_end, log_theta / substeps, cfg.eta,
                             gamma, op=op, record_every=substeps, keep_from=keep_from)
    if tr.flags.get("blowup"):
        raise BranchFailure("ancient surrogate blew up", tr.flags)
    amp = tr.norms("L_eta_gamma")
    if np.any(amp >= cfg.psi_eps):
        raise BranchFailure("ancient surrogate left the eps-ball", {"max": float(amp.max())})
    psi_tau = tr.times
    vals = np.zeros((K + 1, grid.n))
    for k in range(K + 1):
        j = int(np.argmin(np.abs(psi_tau - tau[k])))
        if abs(psi_tau[j] - tau[k]) < 1e-6:
            psi = tr.fields[j]
        else:
            psi = Ulin * (delta * math.exp(lam * (tau[k] - tau_start)))
        vals[k] = times[k] ** (-1 / (p - 1)) * resample(psi, grid.nodes / math.sqrt(times[k]))
    return vals, tr, Ulin, lam, delta


def prepare_setup(cfg: BranchConfig, with_ancient: bool = True) -> BranchSetup:
    cfg = resolve_instability(cfg)
    grid = physical_grid(cfg)
    times = geometric_mesh(cfg.t_min, cfg.horizon, cfg.theta)
    ps = integrate_profile(cfg.alpha_star, cfg.p, cfg.d)
    ell = ps.asymptotic_ell()
    p = cfg.p
    r = grid.nodes
    ubar = np.array([t ** (-1 / (p - 1)) * ps(r / math.sqrt(t)) for t in times])
    pot = p * np.abs(ubar) ** (p - 1)
    a = 2 / (p - 1)
    u0_vals = np.where(r <= cfg.Rbar, ell * r ** (-a), 0.0)
    if cfg.perturbation is not None:
        u0_vals = u0_vals + resample(cfg.perturbation, r)
    tail = ell * r ** (-a) - u0_vals
    if with_ancient:
        uprime, anc, Ulin, lam, delta = ancient_on_mesh(ps, cfg, times, grid)
        meta = {"lambda_mesh": lam, "delta": delta}
    else:
        uprime, anc, Ulin, meta = np.zeros_like(ubar), None, None, {}
    setup = BranchSetup(cfg, grid, times, ps, ell, ubar, pot, ubar[:, -1] + uprime[:, -1], uprime,
                        grid.field(tail), grid.field(u0_vals), anc, Ulin, meta)
    return setup


# ---------------------------------------------------------------------------
# fixed point

def stopping_clauses(cfg: BranchConfig, M: float) -> list:
    p, d, r = cfg.p, cfg.d, cfg.r
    C, Cp = cfg.C, cfg.C_prime
    if p > 2:
        e = 1 / (p - 1) - d / (2 * r)

        def self_map(mon):
            zn = mon.running_max["L_r_pr"]
            return C * (zn + mon.times ** e * (M ** 2 + M ** p + zn ** 2 + zn ** p))

        def contraction(mon):
            zn = mon.running_max["L_r_pr"]
            return Cp * mon.times ** e * (M + M ** (p - 1) + zn + zn ** (p - 1))
    else:
        e = 1 - d * (p - 1) / (2 * r)

        def self_map(mon):
            zn = mon.running_max["L_r_pr"]
            return C * (zn + mon.times ** e * (M ** p + zn ** p))

        def contraction(mon):
            zn = mon.running_max["L_r_pr"]
            return Cp * mon.times ** e * (M ** (p - 1) + zn ** (p - 1))

    return [
        Clause("self-map", self_map, M / 2),
        Clause("contraction", contraction, 0.25),
        Clause("noise-size", lambda mon: mon.running_max["L_r_pr"], cfg.C_z),
    ]


def z_monitor(grid: RadialGrid, times, zvals, r: float, p: float) -> PathMonitor:
    lr = np.array([lp_norm(grid.field(v), r) for v in zvals])
    lpr = np.array([lp_norm(grid.field(v), p * r) for v in zvals])
    return PathMonitor(np.asarray(times), {"L_r": lr, "L_pr": lpr, "L_r_pr": lr + lpr})


@dataclass
class PicardCertificate:
    residuals: list
    ratios: list
    iterations: int
    converged: bool
    max_ratio_after_2: float
    M: float

    @property
    def ok(self) -> bool:
        return self.converged and self.max_ratio_after_2 <= 0.6


def solve_w(setup: BranchSetup, which: int, zvals: np.ndarray, monitor: PathMonitor):
    """Picard iteration for w_which on [t_min, T'] with T' from the stopping clauses.

    Returns (Trajectory of w on the full mesh, frozen after T'), the stopping
    record, and the contraction certificate.
    """
    cfg, grid, times = setup.cfg, setup.grid, setup.times
    p, r = cfg.p, cfg.r
    uprime = setup.uprime if which == 2 else np.zeros_like(setup.ubar)
    boundary = setup.ubar[:, -1] + uprime[:, -1]
    start = heat_step(setup.w0, times[0])
    homog = linear_inhom_solve(start, None, setup.potential, times, boundary)
    hvals = np.array([f.values for f in homog.fields])
    M = _z_norm_arrays(grid, times, hvals, p, r)["value"]
    stop = stopping_time(monitor, stopping_clauses(cfg, M), times[-1])
    kT = int(np.searchsorted(times, stop.value, side="right")) - 1
    kT = max(kT, 1)
    t_loc = times[:kT + 1]
    pot = setup.potential[:kT + 1]
    zl, ul, upl = zvals[:kT + 1], setup.ubar[:kT + 1], uprime[:kT + 1]
    zero = grid.field(np.zeros(grid.n))

    def gamma_map(w):
        f = _forcing_values(w, zl, ul, upl, p)
        f[:, -1] = 0.0
        sol = linear_inhom_solve(zero, f, pot, t_loc, None)
        return hvals[:kT + 1] + np.array([g.values for g in sol.fields])

    def znorm(v):
        return _z_norm_arrays(grid, t_loc, v, p, r)["value"]

    w = np.zeros((kT + 1, grid.n))
    w[:, -1] = hvals[:kT + 1, -1]
    residuals, ratios = [], []
    scale = max(M, 1.0)
    converged = False
    bad = 0
    for it in range(cfg.max_iter):
        w_new = gamma_map(w)
        res = znorm(w_new - w)
        residuals.append(res)
        if len(residuals) > 1:
            ratio = res / residuals[-2] if residuals[-2] > 0 else 0.0
            ratios.append(ratio)
            bad = bad + 1 if ratio > 0.9 else 0
            if bad >= 3:
                raise BranchFailure("Picard iteration is not contracting",
                                    {"residuals": residuals, "T_prime": stop.value})
        w = w_new
        if res <= cfg.picard_tol * scale:
            converged = True
            break
    if not converged:
        raise BranchFailure("Picard iteration did not converge",
                            {"residuals": residuals, "T_prime": stop.value})
    tail = ratios[1:] if len(ratios) > 1 else []
    # small residuals near round-off are not informative about the contraction rate
    tail = [q for q, res in zip(tail, residuals[2:]) if res > 1e3 * np.finfo(float).eps * scale]
    cert = PicardCertificate(residuals, ratios, len(residuals), converged,
                             float(max(tail)) if tail else 0.0, M)
    full = np.empty((times.size, grid.n))
    full[:kT + 1] = w
    full[kT + 1:] = w[-1]
    traj = Trajectory(times, [grid.field(v) for v in full], flags={"T_prime_index": kT})
    bounds = _z_norm_arrays(grid, t_loc, w, p, r)
    traj.flags.update({"z_norm": bounds["value"], "vanishing_weight": bounds["vanishing"],
                       "w0_Lr": lp_norm(setup.w0, r)})
    return traj, stop, cert


# ---------------------------------------------------------------------------
# residual of the mild formulation

def _exp_weights(mu, h):
    """Weights of F_k and F_{k+1} in int_0^h e^{-mu x} (linear interpolant) dx."""
    x = mu * h
    small = x < 1e-3
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e1 = np.where(small, h * (1 - x / 2 + x ** 2 / 6 - x ** 3 / 24), -np.expm1(-x) / mu)
        e2 = np.where(small, h * h * (0.5 - x / 3 + x ** 2 / 8 - x ** 3 / 30),
                      (e1 - h * np.exp(-x)) / mu)
    a = e2 / h
    return a, e1 - a


def duhamel_residual(grid: RadialGrid, times, u: np.ndarray, z: np.ndarray, p: float, q: float,
                     probes: int = 10, last: int | None = None) -> dict:
    """Relative L^q residual of v = u - z in v(t) = e^{(t-t0)Delta} v(t0) + int e^{(t-s)Delta} n(u(s)) ds.

    The integral uses the exact exponential of the discrete Laplacian applied
    to the piecewise-linear interpolant of n(u) on the mesh.
    """
    times = np.asarray(times)
    last = times.size - 1 if last is None else last
    mu, vec = grid.heat_modes
    sw = np.sqrt(grid.weights[:-1])

    def to_modes(f):
        return vec.T @ (sw * f[:-1])

    def from_modes(c):
        out = np.zeros(grid.n)
        out[:-1] = (vec @ c) / sw
        return out

    v = u - z
    D = to_modes(v[0])
    F_prev = to_modes(power(u[0], p))
    idx = np.unique(np.geomspace(1, last, probes).astype(int))
    res = {}
    for k in range(last):
        h = times[k + 1] - times[k]
        F_next = to_modes(power(u[k + 1], p))
        a, b = _exp_weights(mu, h)
        D = np.exp(-mu * h) * D + a * F_prev + b * F_next
        F_prev = F_next
        if k + 1 in idx:
            R = v[k + 1] - from_modes(D)
            ref = lp_norm(grid.field(v[k + 1]), q)
            res[float(times[k + 1])] = lp_norm(grid.field(R), q) / max(ref, 1e-300)
    vals = np.array(list(res.values()))
    return {"times": np.array(list(res.keys())), "relative": vals, "max": float(vals.max())}


# ---------------------------------------------------------------------------
# the experiment

@dataclass
class BranchResult:
    u1: Trajectory
    u2: Trajectory
    w1: Trajectory
    w2: Trajectory
    separation: np.ndarray
    fitted_slope: float
    expected_slope: float
    stop: StoppingTimeRecord
    stops: tuple
    certificates: tuple
    residuals: tuple
    fit_window: tuple
    config: BranchConfig
    meta: dict = field(default_factory=dict)


def fit_separation_slope(times, sep, t_hi, skip: int = 5):
    """Log-log slope of the separation over [times[skip], t_hi]."""
    sel = np.arange(times.size)
    sel = sel[(sel >= skip) & (times <= t_hi) & (sep > 0)]
    if sel.size < 5:
        return math.nan, (math.nan, math.nan)
    slope = np.polyfit(np.log(times[sel]), np.log(sep[sel]), 1)[0]
    return float(slope), (float(times[sel[0]]), float(times[sel[-1]]))


def noise_for(setup: BranchSetup) -> NoiseColoring:
    cfg = setup.cfg
    nc = build_noise_coloring(setup.grid, q=cfg.q, p=cfg.p, decay_exponent=cfg.noise_beta,
                              cutoff=cfg.noise_cutoff, amplitude=max(cfg.noise_amplitude, 0.0) or 1.0)
    return zero_coloring(nc) if cfg.noise_amplitude == 0 else nc


def assemble_branches(cfg: BranchConfig | BranchSetup, seed: int | np.random.Generator = 0,
                      normals: np.ndarray | None = None, with_ancient: bool = True,
                      residual_probes: int = 10) -> BranchResult:
    setup = cfg if isinstance(cfg, BranchSetup) else prepare_setup(cfg, with_ancient)
    cfg = setup.cfg
    grid, times = setup.grid, setup.times
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    nc = noise_for(setup)
    zt = np.concatenate(([0.0], times))
    coeffs, normals = ou_paths(nc, zt, rng, 1, None if normals is None else normals[None])
    zvals = nc.synthesize(coeffs[0])[1:]
    mon = z_monitor(grid, times, zvals, cfg.r, cfg.p)
    w1, s1, c1 = solve_w(setup, 1, zvals, mon)
    w2, s2, c2 = solve_w(setup, 2, zvals, mon)
    W1 = np.array([f.values for f in w1.fields])
    W2 = np.array([f.values for f in w2.fields])
    U1 = zvals + setup.ubar - W1
    U2 = zvals + setup.ubar + setup.uprime - W2
    k_stop = min(w1.flags["T_prime_index"], w2.flags["T_prime_index"])
    stop = s1 if s1.value <= s2.value else s2
    sep = np.array([lp_norm(grid.field(a - b), cfg.r) for a, b in zip(U1, U2)])
    t_hi = math.exp(0.5 * (math.log(times[0]) + math.log(times[k_stop])))
    slope, window = fit_separation_slope(times[:k_stop + 1], sep[:k_stop + 1], t_hi)
    r1 = duhamel_residual(grid, times, U1, zvals, cfg.p, cfg.q, residual_probes, k_stop)
    r2 = duhamel_residual(grid, times, U2, zvals, cfg.p, cfg.q, residual_probes, k_stop)
    u1 = Trajectory(times, [grid.field(v) for v in U1])
    u2 = Trajectory(times, [grid.field(v) for v in U2])
    expected = cfg.expected_slope
    meta = {"k_stop": k_stop, "ell": setup.ell, "normals": normals[0],
            "u0_Lq": lp_norm(setup.u0, cfg.q), "r": cfg.r}
    return BranchResult(u1, u2, w1, w2, sep, slope, expected, stop, (s1, s2), (c1, c2), (r1, r2),
                        window, cfg, meta)


# ---------------------------------------------------------------------------
# continuity in time

@dataclass
class ContinuityReport:
    levels: list
    moduli: list
    ratios: list
    worst_times: list
    passed: bool


def continuity_diagnostic(u: Trajectory, q: float, levels: int = 3, upto: int | None = None,
                          min_ratio: float = 1.3, norm=None) -> ContinuityReport:
    """Largest L^q jump between consecutive samples on successively refined sub-meshes.

    Level k keeps every 2^(levels-1-k)-th sample, so each level halves the
    (logarithmic or uniform) time step of the previous one.  `norm(f, q)`
    defaults to the radial L^q norm.
    """
    norm = lp_norm if norm is None else norm
    n = len(u) if upto is None else upto + 1
    strides = [2 ** (levels - 1 - k) for k in range(levels)]
    if n < 2 * strides[0] + 1:
        raise ValueError("trajectory too short for the requested refinement levels")
    moduli, worst = [], []
    top = (n - 1) // strides[0] * strides[0]
    for s in strides:
        idx = np.arange(0, top + 1, s)
        jumps = np.array([norm(u.fields[b] - u.fields[a], q) for a, b in zip(idx[:-1], idx[1:])])
        j = int(np.argmax(jumps))
        moduli.append(float(jumps[j]))
        worst.append((float(u.times[idx[j]]), float(u.times[idx[j + 1]])))
    ratios = [a / b if b > 0 else (math.inf if a > 0 else math.inf) for a, b in zip(moduli, moduli[1:])]
    passed = all(m == 0 for m in moduli) or all(r >= min_ratio for r in ratios)
    return ContinuityReport(strides, moduli, ratios, worst, passed)
