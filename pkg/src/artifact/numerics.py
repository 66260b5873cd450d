"""Radial grids, quadrature, L^p norms and the discrete radial heat semigroup.

All radial experiments share the objects defined here.  A field f(|x|) on
R^d is stored by its samples on a graded grid 0 < rho_0 < ... < rho_{n-1}
with a homogeneous Dirichlet condition at the outer node and a symmetry
(Neumann) condition at the origin.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gamma as gamma_fn


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)


def _segment_weights(a, b, stencil_nodes, d):
    """Integrate the three Lagrange basis polynomials against rho^(d-1) on [a, b].

    Vectorised over segments; uses Gauss-Legendre nodes exact for the
    degree 2 + d - 1 integrand.
    """
    m = d // 2 + 3
    x, wq = np.polynomial.legendre.leggauss(m)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    rho = mid[:, None] + half[:, None] * x[None, :]
    s0, s1, s2 = stencil_nodes
    jac = half[:, None] * wq[None, :] * rho ** (d - 1)
    l0 = (rho - s1[:, None]) * (rho - s2[:, None]) / ((s0 - s1) * (s0 - s2))[:, None]
    l1 = (rho - s0[:, None]) * (rho - s2[:, None]) / ((s1 - s0) * (s1 - s2))[:, None]
    l2 = (rho - s0[:, None]) * (rho - s1[:, None]) / ((s2 - s0) * (s2 - s1))[:, None]
    return (l0 * jac).sum(1), (l1 * jac).sum(1), (l2 * jac).sum(1)


def _quadrature_weights(nodes: np.ndarray, d: int) -> np.ndarray:
    """Product quadrature for int_0^rho_max f rho^(d-1) drho, exact for quadratic f."""
    n = nodes.size
    w = np.zeros(n)
    # interval [0, rho_0] and [rho_i, rho_{i+1}] use forward three-point stencils,
    # the last interval a backward one
    left = np.concatenate(([0.0], nodes[:-1]))
    right = nodes.copy()
    first = np.concatenate(([0], np.arange(n - 1)))
    first = np.minimum(first, n - 3)
    idx = (first, first + 1, first + 2)
    parts = _segment_weights(left, right, tuple(nodes[i] for i in idx), d)
    for i, part in zip(idx, parts):
        np.add.at(w, i, part)
    return w


@dataclass(frozen=True, eq=False)
class RadialGrid:
    d: int
    nodes: np.ndarray
    rho_max: float
    weights: np.ndarray
    grading: float = 1.0

    @property
    def n(self) -> int:
        return self.nodes.size

    @cached_property
    def face_coeffs(self) -> np.ndarray:
        """Flux coefficients c_{j+1/2} of the symmetric stiffness operator.

        Chosen so that the discrete Laplacian maps rho^2 to 2d exactly and
        conserves the quadrature mass sum_j w_j f_j.
        """
        cum = np.cumsum(self.weights)[:-1]
        r = self.nodes
        return 2.0 * self.d * cum / (r[1:] ** 2 - r[:-1] ** 2)

    @cached_property
    def heat_modes(self):
        """Eigenpairs of the symmetrised Dirichlet Laplacian on interior nodes.

        Returns (mu, V) with Laplacian eigenvalues -mu (mu > 0, ascending) and
        eigenvectors V orthonormal in the Euclidean product of the symmetrised
        variables W^(1/2) f.
        """
        diag, off = symmetric_laplacian(self)
        lam, vec = eigh_tridiagonal(diag, off)
        order = np.argsort(-lam)
        return -lam[order], vec[:, order]

    def field(self, values) -> "RadialField":
        return RadialField(self, np.asarray(values, dtype=float))

    def sample(self, func) -> "RadialField":
        return self.field(func(self.nodes))

    def integrate(self, values) -> float:
        """int_0^rho_max f(rho) rho^(d-1) drho."""
        return float(np.dot(self.weights, values))


def build_radial_grid(d: int, rho_max: float, n: int, grading: float = 1.0) -> RadialGrid:
    """Nodes rho_j = rho_max ((j+1)/n)^grading, j = 0..n-1."""
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    if n < 16:
        raise ValueError(f"need at least 16 nodes, got {n}")
    if not rho_max > 0:
        raise ValueError(f"rho_max must be positive, got {rho_max}")
    if grading < 1:
        raise ValueError(f"grading must be >= 1, got {grading}")
    s = np.arange(1, n + 1) / n
    nodes = rho_max * s ** grading
    nodes[-1] = rho_max
    weights = _quadrature_weights(nodes, int(d))
    if np.any(weights <= 0):
        raise ValueError("grading too strong: non-positive quadrature weight")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadialGrid(int(d), nodes, float(rho_max), weights, float(grading))


def build_core_grid(d: int, rho_max: float, n: int, core: float) -> RadialGrid:
    """Nodes rho_j = core sinh(s_j asinh(rho_max/core)), s_j = (j+1)/n.

    Spacing is roughly uniform (~ core * asinh(rho_max/core) / n) inside the
    core and grows linearly with rho beyond it, so scales from core to
    rho_max are resolved at a bounded matrix norm.
    """
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    if n < 16 or not rho_max > 0 or not core > 0:
        raise ValueError("need n >= 16, rho_max > 0 and core > 0")
    s = np.arange(1, n + 1) / n
    nodes = core * np.sinh(s * np.arcsinh(rho_max / core))
    nodes[-1] = rho_max
    weights = _quadrature_weights(nodes, int(d))
    if np.any(weights <= 0):
        raise ValueError("non-positive quadrature weight")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    grading = float(np.arcsinh(rho_max / core))
    return RadialGrid(int(d), nodes, float(rho_max), weights, grading)


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("values do not match grid")

    def with_values(self, values) -> "RadialField":
        return RadialField(self.grid, np.asarray(values, dtype=float))

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def _vals(x):
    return x.values if isinstance(x, RadialField) else x


def lp_norm(f: RadialField, p_exp: float) -> float:
    """||f||_{L^p(R^d)} of the radial function f."""
    if not p_exp >= 1:
        raise ValueError(f"exponent must be >= 1, got {p_exp}")
    g = f.grid
    a = np.abs(f.values)
    if np.isinf(p_exp):
        return float(a.max())
    scale = a.max()
    if scale == 0:
        return 0.0
    s = sphere_area(g.d) * np.dot(g.weights, (a / scale) ** p_exp)
    return float(scale * max(s, 0.0) ** (1.0 / p_exp))


def intersection_norm(f: RadialField, eta: float, gamma: float) -> float:
    """||f||_eta + 1_{gamma > eta} ||f||_gamma."""
    if eta < 1 or eta > gamma:
        raise ValueError(f"need 1 <= eta <= gamma, got eta={eta}, gamma={gamma}")
    out = lp_norm(f, eta)
    if gamma > eta:
        out += lp_norm(f, gamma)
    return out


def stiffness_tridiagonal(grid: RadialGrid, face_weight=None):
    """Diagonal and off-diagonal of the symmetric stiffness matrix K (all nodes).

    (K f)_j = c_{j+1/2}(f_{j+1}-f_j) - c_{j-1/2}(f_j-f_{j-1}); face_weight
    multiplies c (used for the Gaussian weight in similarity variables).
    """
    c = grid.face_coeffs if face_weight is None else grid.face_coeffs * face_weight
    diag = np.zeros(grid.n)
    diag[:-1] -= c
    diag[1:] -= c
    return diag, c


def symmetric_laplacian(grid: RadialGrid):
    """W^(-1/2) K W^(-1/2) restricted to interior nodes (Dirichlet at rho_max)."""
    diag, c = stiffness_tridiagonal(grid)
    w = grid.weights
    sd = diag[:-1] / w[:-1]
    so = c[:-1] / np.sqrt(w[:-2] * w[1:-1])
    return sd, so


def apply_radial_laplacian(f: RadialField) -> RadialField:
    """Discrete d-dimensional radial Laplacian, second order, exact on 1 and rho^2.

    The outer (Dirichlet) node carries a linear extrapolation of the interior values.
    """
    g = f.grid
    u = f.values
    c = g.face_coeffs
    flux = c * np.diff(u)
    k = np.zeros(g.n)
    k[:-1] += flux
    k[1:] -= flux
    out = k / g.weights
    r = g.nodes
    out[-1] = out[-2] + (out[-2] - out[-3]) * (r[-1] - r[-2]) / (r[-2] - r[-3])
    return f.with_values(out)


def heat_step(f: RadialField, t: float) -> RadialField:
    """e^{t Delta} f computed exactly from the spectral decomposition of the discrete Laplacian."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    g = f.grid
    mu, vec = g.heat_modes
    sw = np.sqrt(g.weights[:-1])
    coef = vec.T @ (sw * f.values[:-1])
    out = np.zeros(g.n)
    out[:-1] = (vec @ (np.exp(-t * mu) * coef)) / sw
    return f.with_values(out)


def boundary_ratio(f: RadialField) -> float:
    """|f| near the outer boundary relative to the interior maximum (validity diagnostic)."""
    a = np.abs(f.values)
    top = a.max()
    return 0.0 if top == 0 else float(a[-2] / top)


def field_to_csv(f: RadialField, extra: dict | None = None, header: str | None = None) -> str:
    g = f.grid
    lines = [f"# d={g.d} rho_max={g.rho_max:.17g} n={g.n}"]
    if header:
        lines.append(f"# {header}")
    cols = {"rho": g.nodes, "value": f.values}
    if extra:
        cols.update({k: np.asarray(v) for k, v in extra.items()})
    lines.append(",".join(cols))
    data = np.column_stack(list(cols.values()))
    buf = io.StringIO()
    np.savetxt(buf, data, delimiter=",", fmt="%.17g")
    return "\n".join(lines) + "\n" + buf.getvalue()


def write_field_csv(path, f: RadialField, extra: dict | None = None, header: str | None = None):
    with open(path, "w") as fh:
        fh.write(field_to_csv(f, extra, header))


def read_field_csv(path, grading: float = 1.0) -> RadialField:
    """Read a field written by write_field_csv; the grid is rebuilt from its nodes."""
    with open(path) as fh:
        lines = fh.readlines()
    meta = dict(kv.split("=") for kv in lines[0][1:].split())
    skip = next(i for i, line in enumerate(lines) if not line.startswith("#"))
    data = np.genfromtxt(path, delimiter=",", skip_header=skip, names=True)
    nodes = np.asarray(data["rho"], dtype=float)
    d = int(meta["d"])
    grid = RadialGrid(d, nodes, float(meta["rho_max"]), _quadrature_weights(nodes, d), grading)
    return RadialField(grid, np.asarray(data["value"], dtype=float))
