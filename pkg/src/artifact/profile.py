"""Expanding self-similar profiles and exponent arithmetic.

The profile U solves

    U'' + ((d-1)/rho + rho/2) U' + U/(p-1) + |U|^{p-1} U = 0,   U(0)=alpha, U'(0)=0,

and decays like ell * rho^{-2/(p-1)}.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .numerics import RadialField, RadialGrid, build_radial_grid

log = logging.getLogger(__name__)


class ProfileError(RuntimeError):
    """Shooting failed before reaching rho_max."""

    def __init__(self, msg, last_rho):
        super().__init__(msg)
        self.last_rho = last_rho


def joseph_lundgren(d: int) -> float:
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")
    if d <= 10:
        return math.inf
    return 1.0 + 4.0 / (d - 4 - 2 * math.sqrt(d - 1))


def critical_exponent(d: int, p: float) -> float:
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")
    if not p > 1:
        raise ValueError(f"power must exceed 1, got {p}")
    return d * (p - 1) / 2


@dataclass(frozen=True)
class PowerRange:
    d: int
    p: float
    below_fujita: bool
    haraux_weissler: bool
    jl_subcritical: bool
    jl_supercritical: bool

    @property
    def labels(self) -> list[str]:
        names = {
            "below-Fujita": self.below_fujita,
            "Haraux-Weissler-range": self.haraux_weissler,
            "JL-subcritical": self.jl_subcritical,
            "JL-supercritical": self.jl_supercritical,
        }
        return [k for k, v in names.items() if v]


def validate_power_range(d: int, p: float) -> PowerRange:
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")
    fujita = 1 + 2 / d
    pjl = joseph_lundgren(d)
    above = p > fujita
    return PowerRange(
        d, p,
        below_fujita=not above,
        haraux_weissler=above and p < 1 + 4 / (d - 2),
        jl_subcritical=above and p < pjl,
        jl_supercritical=above and p >= pjl,
    )


def require_supercritical_fujita(d: int, p: float):
    """Gate used by every experiment: 1 + 2/d < p."""
    if not p > 1 + 2 / d:
        raise ValueError(f"gate violated: 1+2/d < p fails for d={d}, p={p}")


def _rhs(p, d):
    pm1 = p - 1

    def f(rho, y):
        u, du = y
        return [du, -((d - 1) / rho + rho / 2) * du - u / pm1 - np.abs(u) ** pm1 * u]

    return f


def _tail_shape(rho, p, d, ell):
    a = 2 / (p - 1)
    c = a * (a + 1) - (d - 1) * a + abs(ell) ** (p - 1)
    return rho ** (-a) * (1 + c / rho ** 2)


@dataclass(frozen=True, eq=False)
class ProfileSolution:
    alpha: float
    p: float
    d: int
    grid: RadialGrid
    U: RadialField
    dU: RadialField
    ell: float
    residual: float
    tail_oscillation: float
    tail_warning: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def decay_rate(self) -> float:
        return 2 / (self.p - 1)

    def asymptotic_ell(self) -> float:
        """ell with the leading rho^{-2} correction of the tail divided out."""
        r = self.grid.rho_max
        u = self.U.values[-1]
        return float(u / _tail_shape(r, self.p, self.d, self.ell))

    def __call__(self, rho) -> np.ndarray:
        """Evaluate U at arbitrary radii; beyond rho_max the asymptotic tail is used."""
        rho = np.asarray(rho, dtype=float)
        g = self.grid
        spline = self._spline
        out = np.empty_like(rho)
        inside = rho <= g.rho_max
        dense = self.meta.get("dense")
        r0 = self.meta.get("r0", g.nodes[0])
        lo = rho < r0
        mid = inside & ~lo
        if not np.any(mid):
            pass
        elif dense is not None:
            out[mid] = dense(rho[mid])[0]
        else:
            out[mid] = spline(rho[mid])
        # series near the origin
        c = -(self.alpha / (self.p - 1) + self.alpha ** self.p) / (2 * self.d)
        out[lo] = self.alpha + c * rho[lo] ** 2
        far = ~inside
        if np.any(far):
            u_end = self.U.values[-1]
            out[far] = u_end * _tail_shape(rho[far], self.p, self.d, self.ell) / _tail_shape(
                g.rho_max, self.p, self.d, self.ell)
        return out

    @property
    def _spline(self):
        sp = self.meta.get("_spline")
        if sp is None:
            sp = CubicHermiteSpline(self.grid.nodes, self.U.values, self.dU.values)
            self.meta["_spline"] = sp
        return sp


def _fd_derivative(y, h):
    """Fourth-order central difference on a uniform grid (interior points)."""
    return (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)


def integrate_profile(alpha: float, p: float, d: int, rho_max: float = 40.0, n: int = 20000,
                      rtol: float = 1e-12, method: str = "DOP853") -> ProfileSolution:
    """Shoot the profile ODE from the origin with an adaptive Runge-Kutta method."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    require_supercritical_fujita(d, p)
    grid = build_radial_grid(d, rho_max, n, 1.0)
    core = alpha ** (-(p - 1) / 2)
    r0 = min(1e-3 * min(core, 1.0), 0.5 * grid.nodes[0])
    c = -(alpha / (p - 1) + alpha ** p) / (2 * d)
    y0 = [alpha + c * r0 ** 2, 2 * c * r0]

    def blowup(rho, y):
        return 1e8 * max(alpha, 1.0) - abs(y[0])

    blowup.terminal = True
    sol = solve_ivp(_rhs(p, d), (r0, rho_max), y0, method=method, t_eval=grid.nodes,
                    rtol=rtol, atol=rtol * 1e-2 * min(alpha, 1.0), events=blowup,
                    dense_output=True)
    if sol.status != 0 or sol.y.shape[1] != grid.n:
        last = float(sol.t[-1]) if sol.t.size else r0
        raise ProfileError(f"profile integration stopped at rho={last:.4g}: {sol.message}", last)
    U, dU = sol.y
    h = grid.nodes[1] - grid.nodes[0]
    rho = grid.nodes
    d2 = _fd_derivative(dU, h)
    rr = rho[2:-2]
    res = d2 + ((d - 1) / rr + rr / 2) * dU[2:-2] + U[2:-2] / (p - 1) + np.abs(U[2:-2]) ** (p - 1) * U[2:-2]
    residual = float(np.abs(res).max())
    scaled = rho ** (2 / (p - 1)) * U
    ell = float(scaled[-1])
    tail = scaled[int(0.9 * grid.n):]
    osc = float((tail.max() - tail.min()) / max(abs(ell), 1e-300))
    warn = osc > 1e-3
    if warn:
        log.warning("profile tail has not settled: oscillation %.3g (alpha=%g)", osc, alpha)
    return ProfileSolution(alpha, p, d, grid, grid.field(U), grid.field(dU), ell, residual, osc, warn,
                           {"method": method, "rtol": rtol, "dense": sol.sol, "r0": r0})


def physical_self_similar(ps: ProfileSolution, t: float, grid: RadialGrid | None = None) -> RadialField:
    """u(t, r) = t^{-1/(p-1)} U(r / sqrt t) sampled on grid (default: the profile grid)."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    grid = ps.grid if grid is None else grid
    return grid.field(t ** (-1 / (ps.p - 1)) * ps(grid.nodes / math.sqrt(t)))


def singular_datum(ell: float, p: float, grid: RadialGrid, Rbar: float) -> RadialField:
    """ell |x|^{-2/(p-1)} restricted to |x| <= Rbar."""
    if Rbar > grid.rho_max:
        raise ValueError(f"Rbar={Rbar} exceeds rho_max={grid.rho_max}")
    rho = grid.nodes
    vals = np.where(rho <= Rbar, ell * rho ** (-2 / (p - 1)), 0.0)
    return grid.field(vals)
