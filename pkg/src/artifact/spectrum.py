"""Linearisation of the expander in similarity variables and its leading spectrum.

L_alpha = d^2/drho^2 + ((d-1)/rho + rho/2) d/drho + 1/(p-1) + p|U_alpha|^{p-1}

is self-adjoint in L^2(rho^{d-1} e^{rho^2/4} drho).  Conjugating by the square
root of that weight gives a symmetric tridiagonal matrix.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .numerics import RadialField, RadialGrid, build_core_grid
from .profile import ProfileError, ProfileSolution, integrate_profile, validate_power_range

log = logging.getLogger(__name__)

SPECTRAL_RHO_MAX = 30.0
SPECTRAL_N = 2000


def gaussian_face_weight(grid: RadialGrid) -> np.ndarray:
    """exp((face^2 - (rho_j^2 + rho_{j+1}^2)/2)/4) for each face, i.e. the relative
    Gaussian weight carried by the flux between two nodes after symmetrisation."""
    r = grid.nodes
    f = 0.5 * (r[1:] + r[:-1])
    return np.exp((f ** 2 - 0.5 * (r[1:] ** 2 + r[:-1] ** 2)) / 4)


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    profile: ProfileSolution | None
    grid: RadialGrid
    p: float
    potential: np.ndarray       # p|U|^{p-1} on all nodes
    diag: np.ndarray            # symmetric matrix, interior nodes
    offdiag: np.ndarray
    weight: np.ndarray          # sqrt of rho^{d-1} e^{rho^2/4} quadrature weight (interior nodes), log scale
    eta: float

    @property
    def threshold(self) -> float:
        return 1 / (self.p - 1) - self.grid.d / (2 * self.eta)

    def to_symmetric(self, values: np.ndarray) -> np.ndarray:
        return values[:-1] * np.exp(self.weight)

    def from_symmetric(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n)
        out[:-1] = v * np.exp(-self.weight)
        return out

    def apply(self, f: RadialField) -> RadialField:
        """L_alpha f in original variables (Dirichlet node set to 0)."""
        v = self.to_symmetric(f.values)
        sv = self.diag * v
        sv[:-1] += self.offdiag * v[1:]
        sv[1:] += self.offdiag * v[:-1]
        return f.with_values(self.from_symmetric(sv))

    def weighted_inner(self, f: RadialField, g: RadialField) -> float:
        return float(np.dot(self.to_symmetric(f.values), self.to_symmetric(g.values)))

    def dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        m += np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        return m


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    eigenfields: list
    threshold: float
    converged: np.ndarray
    residuals: np.ndarray

    @property
    def above_threshold(self) -> int:
        return int(np.sum(self.eigenvalues > self.threshold))


def core_scale(alpha: float, p: float) -> float:
    """Radius below which the profile is resolved with near-uniform spacing."""
    return min(1.0, alpha ** (-(p - 1) / 2)) if alpha > 0 else 1.0


def spectral_grid(d: int, rho_max: float = SPECTRAL_RHO_MAX, n: int = SPECTRAL_N,
                  core: float = 1.0) -> RadialGrid:
    return build_core_grid(d, rho_max, n, core)


def assemble_from_potential(grid: RadialGrid, p: float, potential: np.ndarray, eta: float,
                            profile: ProfileSolution | None = None) -> LinearizedOperator:
    d = grid.d
    qc = d * (p - 1) / 2
    if not 1 <= eta < qc:
        raise ValueError(f"need 1 <= eta < d(p-1)/2 = {qc:g}, got eta={eta}")
    r = grid.nodes
    w = grid.weights
    c = grid.face_coeffs
    f = 0.5 * (r[1:] + r[:-1])
    # flux through a face carries e^{face^2/4}; divide by the node weight e^{rho^2/4}
    full_diag = np.zeros(grid.n)
    full_diag[:-1] -= c * np.exp((f ** 2 - r[:-1] ** 2) / 4)
    full_diag[1:] -= c * np.exp((f ** 2 - r[1:] ** 2) / 4)
    diag = full_diag[:-1] / w[:-1] + 1 / (p - 1) + potential[:-1]
    off = (c * gaussian_face_weight(grid))[:-1] / np.sqrt(w[:-2] * w[1:-1])
    log_weight = 0.5 * np.log(w[:-1]) + r[:-1] ** 2 / 8
    return LinearizedOperator(profile, grid, p, potential, diag, off, log_weight, float(eta))


def assemble_linearized(ps: ProfileSolution | None, eta: float, grid: RadialGrid | None = None,
                        p: float | None = None, d: int | None = None) -> LinearizedOperator:
    """Assemble L_alpha for the profile ps (ps=None gives L_0, which needs p and d)."""
    if ps is not None:
        p, d = ps.p, ps.d
    if grid is None:
        grid = spectral_grid(d, core=core_scale(ps.alpha, p) if ps is not None else 1.0)
    if ps is None:
        pot = np.zeros(grid.n)
    else:
        pot = p * np.abs(ps(grid.nodes)) ** (p - 1)
    return assemble_from_potential(grid, p, pot, eta, ps)


def top_eigenpairs(op: LinearizedOperator, k: int = 1, tol: float = 1e-6) -> SpectralReport:
    if k < 1:
        raise ValueError("k must be >= 1")
    m = op.diag.size
    k = min(k, m)
    lam, vec = eigh_tridiagonal(op.diag, op.offdiag, select="i", select_range=(m - k, m - 1))
    order = np.argsort(-lam)
    lam, vec = lam[order], vec[:, order]
    fields, res = [], []
    for i in range(k):
        v = vec[:, i]
        sv = op.diag * v
        sv[:-1] += op.offdiag * v[1:]
        sv[1:] += op.offdiag * v[:-1]
        res.append(np.linalg.norm(sv - lam[i] * v) / np.linalg.norm(v))
        f = op.from_symmetric(v)
        j = np.argmax(np.abs(f))
        f = f / f[j]
        if f[0] < 0:
            f = -f
        fields.append(op.grid.field(f))
    res = np.array(res)
    return SpectralReport(lam, fields, op.threshold, res <= tol, res)


def lambda_max(alpha: float, p: float, d: int, eta: float, n: int = SPECTRAL_N,
               rho_max: float = SPECTRAL_RHO_MAX, profile_kw: dict | None = None) -> float:
    ps = integrate_profile(alpha, p, d, **(profile_kw or {}))
    grid = spectral_grid(d, rho_max, n, core_scale(alpha, p))
    return float(top_eigenpairs(assemble_linearized(ps, eta, grid), 1).eigenvalues[0])


@dataclass
class SweepRow:
    alpha: float
    lam: float
    ok: bool
    reason: str = ""


def unstable_eigenvalue_sweep(p: float, d: int, alphas, eta: float, n: int = SPECTRAL_N,
                              rho_max: float = SPECTRAL_RHO_MAX, profile_kw: dict | None = None) -> dict:
    """lambda_max over a list of alphas with the unstable subset and its smallest member."""
    rng = validate_power_range(d, p)
    if not rng.jl_subcritical and not rng.jl_supercritical:
        raise ValueError(f"gate violated: 1+2/d < p fails for d={d}, p={p}")
    rows = []
    for a in alphas:
        try:
            rows.append(SweepRow(float(a), lambda_max(a, p, d, eta, n, rho_max, profile_kw), True))
        except ProfileError as exc:
            log.warning("alpha=%g skipped: %s", a, exc)
            rows.append(SweepRow(float(a), math.nan, False, str(exc)))
    unstable = [r for r in rows if r.ok and r.lam > 0]
    return {
        "rows": rows,
        "unstable": unstable,
        "min_positive": min((r.lam for r in unstable), default=None),
        "jl_subcritical": rng.jl_subcritical,
    }


@dataclass
class SmallEigenvalue:
    alpha: float
    lam: float
    bracket: tuple
    bracket_lams: tuple
    target: float
    evaluations: int


class SearchExhausted(RuntimeError):
    def __init__(self, msg, data):
        super().__init__(msg)
        self.data = data


def find_small_unstable_alpha(p: float, d: int, eps: float, eta: float, r: float | None = None,
                              alphas=None, n: int = SPECTRAL_N, rho_max: float = SPECTRAL_RHO_MAX,
                              max_iter: int = 60, profile_kw: dict | None = None) -> SmallEigenvalue:
    """Locate alpha with 0 < lambda_max(alpha) < eps by a scan followed by Brent bisection.

    If r is given, additionally require lambda_max < 1/(p-1) - d/(2r).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not validate_power_range(d, p).jl_subcritical:
        raise ValueError(f"gate violated: p={p} is not below the Joseph-Lundgren exponent for d={d}")
    cap = eps
    if r is not None:
        cap = min(cap, 1 / (p - 1) - d / (2 * r))
        if cap <= 0:
            raise ValueError(f"gate violated: 1/(p-1) - d/(2r) <= 0 for r={r}")
    if alphas is None:
        alphas = np.geomspace(0.25, 32, 29)
    count = 0

    def lam(a):
        nonlocal count
        count += 1
        return lambda_max(a, p, d, eta, n, rho_max, profile_kw)

    table = []
    target = 0.5 * cap
    for a in alphas:
        try:
            la = lam(a)
        except ProfileError:
            continue
        table.append((a, la))
        if la > 0 and math.isinf(cap):
            return SmallEigenvalue(a, la, (a, a), (la, la), cap, count)
        if len(table) < 2:
            continue
        (a0, l0), (a1, l1) = table[-2], table[-1]
        if (l0 - target) * (l1 - target) < 0:
            if 0 < l0 < cap:
                return SmallEigenvalue(a0, l0, (a0, a1), (l0, l1), target, count)
            if 0 < l1 < cap:
                return SmallEigenvalue(a1, l1, (a0, a1), (l0, l1), target, count)
            a_star = brentq(lambda a: lam(a) - target, a0, a1, xtol=1e-10, rtol=1e-10, maxiter=max_iter)
            l_star = lam(a_star)
            if not 0 < l_star < cap:
                raise SearchExhausted("root refinement left the admissible window",
                                      {"bracket": (a0, a1), "lams": (l0, l1), "last": (a_star, l_star)})
            return SmallEigenvalue(a_star, l_star, (a0, a1), (l0, l1), target, count)
    raise SearchExhausted(f"no alpha with 0 < lambda_max < {cap:g} found", {"table": table})
