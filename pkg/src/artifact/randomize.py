"""Wiener randomization of initial data on a periodic box and the local theory it feeds.

R^d is replaced by the torus [-L, L]^d.  Fields are stored as Fourier-series
coefficients c_m on the dual lattice xi = (pi/L) m, in numpy FFT order, so
that f(x) = sum_m c_m e^{i xi_m . x} and ||f||_{L^2}^2 = (2L)^d sum |c_m|^2.

Frequency space is cut into unit cubes by the multipliers
psi_k = phi(. - k) / sum_l phi(. - l), |k|_inf <= K, and a datum f is
randomized as f^w = sum_k h_k P_k f with Gaussian h_k = conj(h_{-k}).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import roots_legendre

from .branch import ContinuityReport, PicardCertificate, _exp_weights, continuity_diagnostic
from .noise import Clause, PathMonitor, StoppingTimeRecord, stopping_time
from .profile import critical_exponent
from .simvar import Trajectory, power

log = logging.getLogger(__name__)

SPECTRAL_TOL = 1e-6


def as_generator(rng) -> np.random.Generator:
    """Integers become Philox-backed generators; generators pass through."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


def axis_frequencies(L: float, n: int) -> np.ndarray:
    return (math.pi / L) * sfft.fftfreq(n, 1.0 / n)


def _nyquist_mask(d: int, n: int) -> np.ndarray:
    """True on every node that has a Nyquist index along some axis (even n only)."""
    mask = np.zeros((n,) * d, dtype=bool)
    if n % 2 == 0:
        for ax in range(d):
            idx = [slice(None)] * d
            idx[ax] = n // 2
            mask[tuple(idx)] = True
    return mask


def _reflect(c: np.ndarray, axes) -> np.ndarray:
    """c(-m) in FFT order."""
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


@dataclass(frozen=True, eq=False)
class LatticeField:
    d: int
    L: float
    n: int
    spectrum: np.ndarray

    def __post_init__(self):
        spec = np.asarray(self.spectrum, dtype=complex)
        if spec.shape != (self.n,) * self.d:
            raise ValueError(f"spectrum shape {spec.shape} does not match n={self.n}, d={self.d}")
        object.__setattr__(self, "spectrum", spec)

    @classmethod
    def from_values(cls, values, L: float) -> "LatticeField":
        values = np.asarray(values)
        if np.iscomplexobj(values):
            raise ValueError("physical fields must be real")
        n = values.shape[0]
        if any(s != n for s in values.shape):
            raise ValueError("grid must have the same size along every axis")
        return cls(values.ndim, float(L), n, sfft.fftn(values) / n ** values.ndim)

    @classmethod
    def zeros(cls, d: int, L: float, n: int) -> "LatticeField":
        return cls(d, float(L), n, np.zeros((n,) * d, dtype=complex))

    def with_spectrum(self, spec) -> "LatticeField":
        return LatticeField(self.d, self.L, self.n, spec)

    @property
    def dx(self) -> float:
        return 2 * self.L / self.n

    @property
    def volume(self) -> float:
        return (2 * self.L) ** self.d

    @property
    def axes(self) -> tuple:
        return tuple(range(self.d))

    def coordinates(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    def frequency_squared(self) -> np.ndarray:
        return frequency_squared(self.d, self.L, self.n)

    def complex_values(self) -> np.ndarray:
        return sfft.ifftn(self.spectrum) * self.n ** self.d

    @property
    def values(self) -> np.ndarray:
        v = self.complex_values()
        return v.real

    def imag_residue(self) -> float:
        v = self.complex_values()
        scale = max(np.max(np.abs(v)), 1e-300)
        return float(np.max(np.abs(v.imag)) / scale)

    def symmetry_defect(self) -> float:
        """max |c(-m) - conj c(m)| relative to max |c|."""
        c = self.spectrum
        scale = max(np.max(np.abs(c)), 1e-300)
        return float(np.max(np.abs(_reflect(c, self.axes) - np.conj(c))) / scale)

    @property
    def is_real(self) -> bool:
        return self.symmetry_defect() < 1e-12

    def l2_spectral(self) -> float:
        return math.sqrt(self.volume * float(np.sum(np.abs(self.spectrum) ** 2)))

    def lp_norm(self, p: float) -> float:
        return lattice_lp(self.complex_values(), p, self.dx, self.d)

    def sobolev_norm(self, s: float) -> float:
        """H^s norm with weight (1 + |xi|^2)^s."""
        w = (1 + self.frequency_squared()) ** s
        return math.sqrt(self.volume * float(np.sum(w * np.abs(self.spectrum) ** 2)))

    def heat(self, t: float) -> "LatticeField":
        if t < 0:
            raise ValueError("heat flow needs t >= 0")
        return self.with_spectrum(self.spectrum * np.exp(-t * self.frequency_squared()))

    def _check(self, other):
        if (self.d, self.L, self.n) != (other.d, other.L, other.n):
            raise ValueError("fields live on different lattices")

    def __add__(self, other):
        self._check(other)
        return self.with_spectrum(self.spectrum + other.spectrum)

    def __sub__(self, other):
        self._check(other)
        return self.with_spectrum(self.spectrum - other.spectrum)

    def __mul__(self, c):
        return self.with_spectrum(self.spectrum * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_spectrum(-self.spectrum)


def lattice_lp(values: np.ndarray, p: float, dx: float, d: int) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max())
    return float((dx ** d * np.sum(a ** p)) ** (1 / p))


def lattice_norm(f: LatticeField, q: float) -> float:
    return f.lp_norm(q)


def frequency_squared(d: int, L: float, n: int) -> np.ndarray:
    xi2 = axis_frequencies(L, n) ** 2
    out = np.zeros((n,) * d)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        out = out + xi2.reshape(shape)
    return out


def band_limited_field(d: int, L: float, n: int, xi_cut: float, rng, amplitude: float = 1.0,
                       decay: float = 0.0) -> LatticeField:
    """Real random field with spectrum on |xi|_inf <= xi_cut, off the Nyquist planes.

    decay > 0 damps the coefficients by (1 + |xi|^2)^{-decay/2}.
    """
    rng = as_generator(rng)
    noise = rng.standard_normal((n,) * d)
    spec = sfft.fftn(noise) / n ** d
    xi = axis_frequencies(L, n)
    keep = np.ones((n,) * d, dtype=bool)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        keep &= (np.abs(xi) <= xi_cut).reshape(shape)
    keep &= ~_nyquist_mask(d, n)
    spec = np.where(keep, spec, 0.0)
    if decay:
        spec *= (1 + frequency_squared(d, L, n)) ** (-decay / 2)
    f = LatticeField(d, float(L), n, spec)
    norm = f.l2_spectral()
    return f * (amplitude / norm) if norm > 0 else f


def gaussian_bump(d: int, L: float, n: int, width: float = 1.0, amplitude: float = 1.0) -> LatticeField:
    x = -L + (2 * L / n) * np.arange(n)
    r2 = sum(np.meshgrid(*([x ** 2] * d), indexing="ij"))
    return LatticeField.from_values(amplitude * np.exp(-r2 / (2 * width ** 2)), L)


# ---------------------------------------------------------------------------
# unit-scale frequency decomposition

def _exp_ramp(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def bump1d(s) -> np.ndarray:
    """Smooth even bump, identically 1 on [-1/2, 1/2] and 0 outside (-1, 1)."""
    a = np.abs(np.asarray(s, dtype=float))
    g1, g2 = _exp_ramp(1 - a), _exp_ramp(a - 0.5)
    return g1 / (g1 + g2)


def block_weight1d(k: int, s) -> np.ndarray:
    """psi_k along one axis: phi(s - k) / sum_l phi(s - l)."""
    s = np.asarray(s, dtype=float)
    base = np.floor(s)
    denom = sum(bump1d(s - (base + j)) for j in (-1, 0, 1, 2))
    return bump1d(s - k) / denom


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """psi_k(xi) = prod_i psi_{k_i}(xi_i) for |k|_inf <= K.

    The tensor form is exact: the normalising sum of the tensor bump
    factorises over the axes.
    """
    d: int
    K: int
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return 2 * self.K + 1

    def blocks(self):
        return itertools.product(range(-self.K, self.K + 1), repeat=self.d)

    def check_block(self, k) -> tuple:
        k = tuple(int(v) for v in k)
        if len(k) != self.d:
            raise ValueError(f"block index must have {self.d} entries, got {k}")
        if max(abs(v) for v in k) > self.K:
            raise ValueError(f"block {k} lies outside the table |k|_inf <= {self.K}")
        return k

    def axis_table(self, L: float, n: int) -> np.ndarray:
        """(2K+1, n) array of psi_k(xi) along one axis of the dual lattice."""
        key = (float(L), int(n))
        if key not in self._tables:
            xi = axis_frequencies(L, n)
            tab = np.array([block_weight1d(k, xi) for k in range(-self.K, self.K + 1)])
            tab.setflags(write=False)
            self._tables[key] = tab
        return self._tables[key]

    def evaluate(self, k, xi) -> np.ndarray:
        """psi_k at arbitrary points xi of shape (..., d)."""
        k = self.check_block(k)
        xi = np.asarray(xi, dtype=float)
        out = np.ones(xi.shape[:-1])
        for ax in range(self.d):
            out = out * block_weight1d(k[ax], xi[..., ax])
        return out

    def multiplier(self, k, L: float, n: int) -> np.ndarray:
        k = self.check_block(k)
        tab = self.axis_table(L, n)
        out = np.ones((n,) * self.d)
        for ax in range(self.d):
            shape = [1] * self.d
            shape[ax] = n
            out = out * tab[k[ax] + self.K].reshape(shape)
        return out

    def combine(self, h: np.ndarray, L: float, n: int) -> np.ndarray:
        """sum_k h_k psi_k on the lattice; h has shape (..., 2K+1, ..., 2K+1) with d trailing block axes."""
        tab = self.axis_table(L, n)
        h = np.asarray(h)
        lead = h.ndim - self.d
        out = h
        for _ in range(self.d):
            # contracts the first remaining block axis and appends a frequency axis
            out = np.tensordot(out, tab, axes=([lead], [0]))
        return out

    def active_blocks(self, f: LatticeField, tol: float = 0.0) -> list:
        """Blocks whose multiplier meets the spectral support of f."""
        tab = self.axis_table(f.L, f.n)
        mass = np.abs(f.spectrum) > tol * max(np.max(np.abs(f.spectrum)), 1e-300)
        present = []
        for ax in range(self.d):
            other = tuple(a for a in range(self.d) if a != ax)
            on_axis = mass.any(axis=other) if other else mass
            present.append([k for k in range(-self.K, self.K + 1) if np.any(tab[k + self.K] * on_axis > 0)])
        return [k for k in itertools.product(*present)
                if np.any(self.multiplier(k, f.L, f.n) * mass > 0)]


def build_block_partition(d: int, K: int) -> BlockPartition:
    if K < 1:
        raise ValueError(f"block cutoff K must be >= 1, got {K}")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return BlockPartition(int(d), int(K))


def project_block(f: LatticeField, bp: BlockPartition, k) -> LatticeField:
    """P_k f with spectrum psi_k c."""
    if f.d != bp.d:
        raise ValueError("partition and field dimensions differ")
    return f.with_spectrum(f.spectrum * bp.multiplier(k, f.L, f.n))


def spectral_excess(f: LatticeField, K: int) -> float:
    """Fraction of |c|^2 beyond |xi|_inf <= K or on a Nyquist plane."""
    xi = np.abs(axis_frequencies(f.L, f.n))
    outside = _nyquist_mask(f.d, f.n).copy()
    for ax in range(f.d):
        shape = [1] * f.d
        shape[ax] = f.n
        outside |= (xi > K).reshape(shape)
    total = float(np.sum(np.abs(f.spectrum) ** 2))
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(f.spectrum[outside]) ** 2)) / total


# ---------------------------------------------------------------------------
# randomization

@dataclass(frozen=True, eq=False)
class RandomizedDatum:
    base: LatticeField
    seed: int | None
    coefficients: np.ndarray    # h_k, shape (2K+1,)*d, h[K,...,K] = h_0
    result: LatticeField


def draw_coefficients(bp: BlockPartition, rng, batch: int | None = None) -> np.ndarray:
    """Gaussian h_k = a_k + i b_k with h_{-k} = conj(h_k) and h_0 = a_0 real.

    Only the draws at k > 0 (lexicographically) and at k = 0 are used, so
    the pairing is exact.
    """
    rng = as_generator(rng)
    N = bp.size ** bp.d
    lead = () if batch is None else (batch,)
    a = rng.standard_normal(lead + (N,))
    b = rng.standard_normal(lead + (N,))
    h = a + 1j * b
    c = (N - 1) // 2
    h[..., :c] = np.conj(h[..., :c:-1])  # flat index i <-> block -k at N-1-i
    h[..., c] = a[..., c]
    return h.reshape(lead + (bp.size,) * bp.d)


def _check_datum(f: LatticeField, bp: BlockPartition, tol: float):
    if f.d != bp.d:
        raise ValueError("partition and field dimensions differ")
    if not f.is_real:
        raise ValueError(f"datum is not real (conjugate-symmetry defect {f.symmetry_defect():.3g})")
    excess = spectral_excess(f, bp.K)
    if excess > tol:
        raise ValueError(f"spectral mass fraction {excess:.3g} lies beyond the block cutoff K={bp.K} "
                         f"or on the Nyquist planes (tolerance {tol:g}); increase K or band-limit the datum")


def random_multiplier(bp: BlockPartition, h: np.ndarray, L: float, n: int) -> np.ndarray:
    """sum_k h_k psi_k on the lattice, zero on the Nyquist planes."""
    m = bp.combine(h, L, n)
    return np.where(_nyquist_mask(bp.d, n), 0.0, m)


def randomize(f: LatticeField, bp: BlockPartition, rng=None, coefficients=None,
              tol: float = SPECTRAL_TOL) -> RandomizedDatum:
    """f^w = sum_k h_k P_k f.  Passing coefficients (e.g. all ones) bypasses the draw."""
    _check_datum(f, bp, tol)
    seed = None
    if coefficients is None:
        seed = rng if isinstance(rng, (int, np.integer)) else None
        h = draw_coefficients(bp, 0 if rng is None else rng)
    else:
        h = np.broadcast_to(np.asarray(coefficients, dtype=complex), (bp.size,) * bp.d).copy()
        flat = h.ravel()
        if np.max(np.abs(flat - np.conj(flat[::-1]))) > 1e-14:
            raise ValueError("coefficients must satisfy h_{-k} = conj(h_k)")
    out = f.with_spectrum(f.spectrum * random_multiplier(bp, h, f.L, f.n))
    h.setflags(write=False)
    return RandomizedDatum(f, seed, h, out)


def multiplier_second_moment(bp: BlockPartition, L: float, n: int) -> np.ndarray:
    """E|sum_k h_k psi_k(xi)|^2 = 2 sum_k psi_k^2 - psi_0^2.

    E|h_k|^2 = 2 for k != 0 and E h_0^2 = 1.  The paired terms E h_k h_{-k}
    vanish, and psi_k psi_{-k} is zero anyway unless k = 0.
    """
    tab = bp.axis_table(L, n)
    sq = np.ones((n,) * bp.d)
    zero = np.ones((n,) * bp.d)
    for ax in range(bp.d):
        shape = [1] * bp.d
        shape[ax] = n
        sq = sq * np.sum(tab ** 2, axis=0).reshape(shape)
        zero = zero * tab[bp.K].reshape(shape)
    out = 2 * sq - zero ** 2
    return np.where(_nyquist_mask(bp.d, n), 0.0, out)


def expected_l2_squared(f: LatticeField, bp: BlockPartition) -> float:
    m2 = multiplier_second_moment(bp, f.L, f.n)
    return f.volume * float(np.sum(np.abs(f.spectrum) ** 2 * m2))


def heat_blockwise(datum: RandomizedDatum, t: float) -> LatticeField:
    """sum_k h_k e^{t Delta} P_k f, assembled block by block in physical space."""
    f = datum.base
    bp = build_block_partition(f.d, (datum.coefficients.shape[0] - 1) // 2)
    total = np.zeros((f.n,) * f.d, dtype=complex)
    heated = f.heat(t)
    for k in bp.active_blocks(f):
        blk = project_block(heated, bp, k)
        total += datum.coefficients[tuple(v + bp.K for v in k)] * blk.complex_values()
    return LatticeField(f.d, f.L, f.n, sfft.fftn(total) / f.n ** f.d)


def pointwise_variance(f: LatticeField, bp: BlockPartition) -> np.ndarray:
    """E|f^w(x)|^2 = |P_0 f(x)|^2 + 2 sum_{k != 0} |P_k f(x)|^2 on the grid."""
    out = np.zeros((f.n,) * f.d)
    for k in bp.active_blocks(f):
        w = 1.0 if not any(k) else 2.0
        out += w * np.abs(project_block(f, bp, k).complex_values()) ** 2
    return out


def gaussian_moment_oracle(f: LatticeField, bp: BlockPartition, rhos) -> dict:
    """E||f^w||_{L^rho}^rho = (rho-1)!! int sigma(x)^rho dx, f^w(x) being centred Gaussian."""
    sig = np.sqrt(pointwise_variance(f, bp))
    out = {}
    for r in rhos:
        dfact = math.prod(range(r - 1, 0, -2)) if r > 1 else 1
        out[r] = float(dfact * f.dx ** f.d * np.sum(sig ** r))
    return out


def modulation_norm(f: LatticeField, bp: BlockPartition, p_exp: float, q_exp: float, s: float) -> float:
    """(sum_k (1 + |k|^2)^{s q / 2} ||P_k f||_{L^p}^q)^{1/q}, with max for q = inf."""
    if p_exp < 1 or q_exp < 1:
        raise ValueError("modulation exponents must be >= 1")
    parts = []
    for k in bp.active_blocks(f):
        w = (1 + sum(v * v for v in k)) ** (s / 2)
        parts.append(w * project_block(f, bp, k).lp_norm(p_exp))
    if not parts:
        return 0.0
    parts = np.array(parts)
    if math.isinf(q_exp):
        return float(parts.max())
    return float(np.sum(parts ** q_exp) ** (1 / q_exp))


# ---------------------------------------------------------------------------
# batched sampling

def _sample_batches(u0: LatticeField, bp: BlockPartition, rng, samples: int, batch: int):
    """Yield spectra of successive batches of randomizations, shape (B, n, ..., n)."""
    rng = as_generator(rng)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        h = draw_coefficients(bp, rng, b)
        yield u0.spectrum * random_multiplier(bp, h, u0.L, u0.n)
        done += b


def _to_physical(spec: np.ndarray, d: int) -> np.ndarray:
    n = spec.shape[-1]
    axes = tuple(range(spec.ndim - d, spec.ndim))
    return (sfft.ifftn(spec, axes=axes, workers=-1) * n ** d).real


def lq_moment_check(u0: LatticeField, q: float, samples: int, rng, bp: BlockPartition | None = None,
                    rhos=(2, 4, 6, 8), batch: int = 32) -> dict:
    """Empirical moments of u0^w against the closed-form L^2 mean and the Gaussian moment bound."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    bp = build_block_partition(u0.d, 8) if bp is None else bp
    _check_datum(u0, bp, SPECTRAL_TOL)
    d, dx = u0.d, u0.dx
    axes = tuple(range(1, d + 1))
    l2sq, lqsq, mom = [], [], {r: [] for r in rhos}
    for spec in _sample_batches(u0, bp, rng, samples, batch):
        l2sq.append(u0.volume * np.sum(np.abs(spec) ** 2, axis=axes))
        vals = np.abs(_to_physical(spec, d))
        lqsq.append((dx ** d * np.sum(vals ** q, axis=axes)) ** (2 / q))
        for r in rhos:
            mom[r].append(dx ** d * np.sum(vals ** r, axis=axes))
    l2sq = np.concatenate(l2sq)
    lqsq = np.concatenate(lqsq)
    mom = {r: np.concatenate(v) for r, v in mom.items()}
    closed = expected_l2_squared(u0, bp)
    u0_l2 = u0.l2_spectral()
    moments = {r: float(v.mean()) for r, v in mom.items()}
    half = samples // 2
    if q < 2:
        rhs = modulation_norm(u0, bp, q, q, 0.0) ** 2
        ratio = float(lqsq.mean() / rhs) if rhs > 0 else 0.0
        ratio_half = float(lqsq[:half].mean() / rhs) if rhs > 0 else 0.0
        bound = {"kind": "modulation", "rhs": rhs}
    else:
        rhs = {r: float(r ** (r / 2) * u0_l2 ** r) for r in rhos}
        ratio = max(moments[r] / rhs[r] for r in rhos) if u0_l2 > 0 else 0.0
        ratio_half = max(float(mom[r][:half].mean()) / rhs[r] for r in rhos) if u0_l2 > 0 else 0.0
        bound = {"kind": "gaussian_moments", "rhs": rhs}
    oracle = gaussian_moment_oracle(u0, bp, rhos)
    if all(m > 0 for m in moments.values()):
        lr = np.log(np.array(rhos, dtype=float))
        growth = np.array([math.log(moments[r]) / r for r in rhos])
        slope = float(np.polyfit(lr, growth, 1)[0])
        # the same growth with the spatial profile of the variance divided out
        sig = np.sqrt(pointwise_variance(u0, bp))
        prof = np.array([math.log(u0.dx ** d * np.sum(sig ** r)) / r for r in rhos])
        slope_pointwise = float(np.polyfit(lr, growth - prof, 1)[0])
    else:
        slope = slope_pointwise = float("nan")
    return {
        "samples": samples, "q": q,
        "l2_mean": float(l2sq.mean()), "l2_closed_form": closed,
        "l2_ratio": float(l2sq.mean() / closed) if closed > 0 else float("nan"),
        "lq_mean_square": float(lqsq.mean()),
        "moments": moments, "moment_oracle": oracle, "growth_slope": slope,
        "pointwise_growth_slope": slope_pointwise,
        "bound": bound, "ratio": ratio, "ratio_half": ratio_half,
    }


# ---------------------------------------------------------------------------
# smoothing and tail estimates

def geometric_gauss_nodes(T: float, panels: int = 4, nodes: int = 6, shrink: float = 4.0):
    """Gauss-Legendre nodes on panels [0, T/shrink^(panels-1)], ..., [T/shrink, T]."""
    edges = [0.0] + [T / shrink ** j for j in range(panels - 1, -1, -1)]
    x, w = roots_legendre(nodes)
    ts, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ts.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(ts), np.concatenate(ws)


@dataclass
class TailReport:
    norms: np.ndarray
    lam: np.ndarray
    survival: np.ndarray
    a: float
    b: float
    fit_from: float
    dominated: bool
    C_T: float
    data_norm: float
    mean_square: float
    mean_square_oracle: float | None
    params: dict

    def bound_fit(self, lam) -> np.ndarray:
        return np.exp(self.a - self.b * np.asarray(lam) ** 2)


def smoothing_tail_estimate(u0: LatticeField, gamma: float, sigma: float, theta2: float, theta3: float,
                            T: float, samples: int, rng, alpha: float = 0.0,
                            bp: BlockPartition | None = None, batch: int = 32,
                            tail_from: float = 0.5, min_count: int = 5) -> TailReport:
    """Survival function of N = ||t^gamma (1 - Delta)^{sigma/2} e^{t Delta} u0^w||_{L^theta3(0,T; L^theta2)}.

    A quadratic a - b lambda^2 is fitted to log P(N > lambda) above the
    tail_from quantile, then a is raised until the model dominates the data.
    """
    lhs = (sigma + alpha - 2 * gamma) * theta3
    if not lhs < 2:
        raise ValueError(f"gate violated: (sigma + alpha - 2 gamma) theta3 < 2 fails, left side = {lhs:.4g}")
    if theta2 < 2:
        raise ValueError(f"theta2 must be >= 2, got {theta2}")
    if not T > 0:
        raise ValueError("T must be positive")
    bp = build_block_partition(u0.d, 8) if bp is None else bp
    _check_datum(u0, bp, SPECTRAL_TOL)
    d = u0.d
    axes = tuple(range(1, d + 1))
    ts, ws = geometric_gauss_nodes(T)
    xi2 = u0.frequency_squared()
    smooth = (1 + xi2) ** (sigma / 2)
    norms = []
    for spec in _sample_batches(u0, bp, rng, samples, batch):
        acc = np.zeros(spec.shape[0])
        for t, w in zip(ts, ws):
            vals = _to_physical(spec * (t ** gamma * smooth * np.exp(-t * xi2)), d)
            inner = (u0.dx ** d * np.sum(np.abs(vals) ** theta2, axis=axes)) ** (1 / theta2)
            acc += w * inner ** theta3
        norms.append(acc ** (1 / theta3))
    norms = np.concatenate(norms)
    lam = np.sort(norms)
    surv = (samples - 1 - np.arange(samples)) / samples
    data_norm = u0.sobolev_norm(-alpha)
    oracle = None
    if gamma == 0 and sigma == 0 and theta2 == 2 and theta3 == 2:
        m2 = multiplier_second_moment(bp, u0.L, u0.n)
        with np.errstate(divide="ignore", invalid="ignore"):
            per = np.where(xi2 > 0, -np.expm1(-2 * T * xi2) / (2 * xi2), T)
        oracle = u0.volume * float(np.sum(np.abs(u0.spectrum) ** 2 * m2 * per))
    params = {"gamma": gamma, "sigma": sigma, "theta2": theta2, "theta3": theta3, "T": T,
              "alpha": alpha, "samples": samples, "integrability_lhs": lhs}
    if lam[-1] == 0:
        return TailReport(norms, lam, surv, float("nan"), float("nan"), 0.0, True, float("nan"),
                          data_norm, 0.0, oracle, params)
    lo = np.quantile(norms, tail_from)
    sel = (lam >= lo) & (surv * samples >= min_count)
    x, y = lam[sel] ** 2, np.log(surv[sel])
    slope, icpt = np.polyfit(x, y, 1)
    b = -float(slope)
    a = float(np.max(y + b * x)) if b > 0 else float(icpt)
    dominated = bool(np.all(a - b * x >= y - 1e-12))
    C_T = 1.0 / (b * data_norm ** 2) if b > 0 and data_norm > 0 else float("inf")
    return TailReport(norms, lam, surv, a, b, float(lo), dominated, C_T, data_norm,
                      float(np.mean(norms ** 2)), oracle, params)


# ---------------------------------------------------------------------------
# local theory for randomized data

def random_data_gate(d: int, p: float, q: float):
    """Raise naming the violated inequality of the randomized local theory."""
    lo_p = 0.5 + math.sqrt(0.25 + 4.0 / d)
    if not p > lo_p:
        raise ValueError(f"gate violated: p > 1/2 + sqrt(1/4 + 4/d) = {lo_p:.4g} fails for p={p}")
    qc = critical_exponent(d, p)
    lo_q = 2 - 8 / (4 + d * p)
    if not lo_q < q < qc:
        raise ValueError(f"gate violated: 2 - 8/(4+dp) < q < q_c fails "
                         f"({lo_q:.4g} < {q} < {qc:.4g})")
    if q < 2:
        s0 = d * (2 - q) / (2 * q)
        if not s0 * p < 2:
            raise ValueError(f"gate violated: s0 = d(2-q)/(2q) < 2/p fails (s0={s0:.4g})")


def fixed_point_exponent(d: int, p: float) -> float:
    """r = q_c max(p, p')."""
    pp = p / (p - 1)
    return critical_exponent(d, p) * max(p, pp)


def kappa_exponents(d: int, p: float) -> tuple[float, float]:
    """(1/p, 2/(p-1) - d/(r-p+1)) with r = q_c max(p, p')."""
    r = fixed_point_exponent(d, p)
    return 1.0 / p, 2.0 / (p - 1) - d / (r - p + 1)


def tail_exponent(d: int, p: float, q: float) -> float:
    a, b = kappa_exponents(d, p)
    return a if q >= 2 else min(a, b)


def case_two_parameters(d: int, p: float, q: float) -> dict:
    """Weights and exponents of the sub-quadratic case, eps' at the midpoint of its interval."""
    s0 = d * (2 - q) / (2 * q)
    pp = p / (p - 1)
    pv = max(p, pp)
    alpha = 2.0
    alpha_p = max(pp, 2 / (p - 1))
    upper = min((2 - s0 * (p - 1) - 2 / pv) / (2 * alpha_p),
                alpha_p * (2 - s0 * (p - 1)),
                alpha * (2 - s0 * p) / 2)
    if not upper > 0:
        raise ValueError(f"gate violated: admissible interval for eps' is empty (upper end {upper:.4g})")
    eps = 0.5 * upper
    gamma = (s0 * p - 1 + eps) / (2 * p)
    gamma_p = (alpha_p - 1) / (alpha_p * (p - 1)) - (alpha_p * (2 - s0 * (p - 1)) - eps) / (2 * alpha * (p - 1))
    return {"s0": s0, "eps": eps, "gamma": gamma, "gamma_p": gamma_p, "alpha_p": alpha_p,
            "self_power": (2 - s0 * p) / 4, "contraction_power": (2 - s0 * (p - 1) - 2 / pv) / 4}


def heat_ratio_constant(d: int, p: float, r: float, L: float = 8.0, n: int = 32,
                        widths=(0.5, 1.0, 2.0), times=None) -> float:
    """Largest t^{d(p-1)/(2r)} ||e^{t Delta} f||_{L^r} / ||f||_{L^{r/p}} over a Gaussian calibration set."""
    a = d * (p - 1) / (2 * r)
    times = np.geomspace(1e-3, 1.0, 10) if times is None else times
    best = 0.0
    for w in widths:
        f = gaussian_bump(d, L, n, w)
        base = f.lp_norm(r / p)
        for t in times:
            best = max(best, t ** a * f.heat(t).lp_norm(r) / base)
    return best


_CONSTANTS: dict = {}


def scheme_constant(d: int, p: float, r: float, L: float = 8.0, n: int = 32) -> float:
    """Calibrated C for the ball radius and the stopping clauses, frozen per (d, p, r).

    Heat-kernel smoothing ratio over a calibration set, times the time
    integral 1/(1 - d(p-1)/(2r)) and the Lipschitz factor p 2^{max(p-2, 0)}
    of |u|^{p-1} u.
    """
    key = (d, float(p), float(r))
    if key not in _CONSTANTS:
        a = d * (p - 1) / (2 * r)
        kappa = heat_ratio_constant(d, p, r, L, n)
        _CONSTANTS[key] = max(1.0, p * 2 ** max(p - 2, 0.0) * kappa / (1 - a))
    return _CONSTANTS[key]


def monitor_mesh(horizon: float, points: int = 64, decades: float = 4.0) -> np.ndarray:
    return np.concatenate(([0.0], np.geomspace(horizon * 10 ** (-decades), horizon, points)))


def _cumulative_time_norm(times, vals, power_: float, weight_exp: float = 0.0) -> np.ndarray:
    """||s^weight v(s)||_{L^power(0, t)} at every mesh time (trapezoid, first cell one-sided)."""
    t = np.asarray(times)
    vals = np.asarray(vals)
    if weight_exp == 0:
        g = vals ** power_
    else:
        g = np.zeros_like(t)
        g[1:] = t[1:] ** (weight_exp * power_) * vals[1:] ** power_
    cells = 0.5 * (g[1:] + g[:-1]) * np.diff(t)
    if weight_exp != 0:
        # integrable power singularity on the first cell
        cells[0] = g[1] * t[1] / (1 + weight_exp * power_)
    return np.concatenate(([0.0], np.cumsum(cells))) ** (1 / power_)


def zhat_monitor(u: LatticeField, times, r: float, p: float) -> PathMonitor:
    """L^r and L^{rp} norms of e^{t Delta} u on the mesh."""
    xi2 = u.frequency_squared()
    spec = u.spectrum[None] * np.exp(-np.asarray(times).reshape((-1,) + (1,) * u.d) * xi2)
    vals = np.abs(_to_physical(spec, u.d))
    axes = tuple(range(1, u.d + 1))
    dv = u.dx ** u.d
    lr = (dv * np.sum(vals ** r, axis=axes)) ** (1 / r)
    lpr = (dv * np.sum(vals ** (r * p), axis=axes)) ** (1 / (r * p))
    return PathMonitor(np.asarray(times), {"L_r": lr, "L_pr": lpr})


def fixed_point_clauses(d: int, p: float, q: float, r: float, C: float, M: float) -> list:
    """Inf-clauses of the stopping time for the randomized fixed point."""
    if q >= 2:
        e_contr = 1 - d * (p - 1) / (2 * (r - p + 1))

        def self_map(m):
            return C * m.times ** 0.5 * _cumulative_time_norm(m.times, m.norms["L_pr"], 2 * p) ** p

        def contraction(m):
            return C * m.times ** e_contr * _cumulative_time_norm(m.times, m.norms["L_r"], r) ** (p - 1)
    else:
        cp = case_two_parameters(d, p, q)

        def self_map(m):
            return C * m.times ** cp["self_power"] * _cumulative_time_norm(
                m.times, m.norms["L_pr"], 2 * p, cp["gamma"]) ** p

        def contraction(m):
            return C * m.times ** cp["contraction_power"] * _cumulative_time_norm(
                m.times, m.norms["L_r"], cp["alpha_p"] * (p - 1), cp["gamma_p"]) ** (p - 1)
    return [Clause("self_map", self_map, M / 2), Clause("contraction", contraction, 0.25)]


def _refine_crossing(monitor: PathMonitor, clauses, rec: StoppingTimeRecord) -> float:
    """Log-linear interpolation of the crossing inside the mesh cell that triggered."""
    k = rec.index
    if k is None or k == 0:
        return rec.value
    cl = next(c for c in clauses if c.name == rec.trigger)
    vals = np.asarray(cl.func(monitor))
    t0, t1 = monitor.times[k - 1], monitor.times[k]
    v0, v1 = vals[k - 1], vals[k]
    if t0 <= 0 or v0 <= 0:
        return float(t1)
    s = (math.log(cl.threshold) - math.log(v0)) / (math.log(v1) - math.log(v0))
    return float(t0 * (t1 / t0) ** min(max(s, 0.0), 1.0))


def _scaled(mon: PathMonitor, c: float) -> PathMonitor:
    return PathMonitor(mon.times, {k: c * v for k, v in mon.norms.items()})


def stopping_from_monitor(mon: PathMonitor, d: int, p: float, q: float, horizon: float, C: float,
                          r: float) -> StoppingTimeRecord:
    M = (2 * C) ** (-1 / (p - 1))
    clauses = fixed_point_clauses(d, p, q, r, C, M)
    rec = stopping_time(mon, clauses, horizon)
    rec.value = _refine_crossing(mon, clauses, rec)
    return rec


def random_stopping_time(u: LatticeField, p: float, q: float, horizon: float, C: float | None = None,
                         mesh: int = 64) -> tuple[StoppingTimeRecord, float, float]:
    """Stopping time of the randomized fixed point; returns (record, C, M)."""
    d = u.d
    r = fixed_point_exponent(d, p)
    C = scheme_constant(d, p, r) if C is None else C
    mon = zhat_monitor(u, monitor_mesh(horizon, mesh), r, p)
    return stopping_from_monitor(mon, d, p, q, horizon, C, r), C, (2 * C) ** (-1 / (p - 1))


class FixedPointFailure(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class MildSolution:
    v: Trajectory
    u: Trajectory
    stop: StoppingTimeRecord
    certificate: PicardCertificate
    uniqueness_gap: float
    self_map_ok: bool
    sup_v_Lr: float
    continuity: ContinuityReport | None
    r: float
    C: float


def _picard(zvals, times, xi2, d, p, r, dv, v0, tol, max_iter):
    n_t = times.size
    h = np.diff(times)
    axes = tuple(range(1, d + 1))
    n = zvals.shape[-1]

    def gamma_map(v):
        F = sfft.fftn(power(v + zvals, p), axes=axes, workers=-1)
        out = np.zeros_like(F)
        for j in range(n_t - 1):
            a, b = _exp_weights(xi2, h[j])
            out[j + 1] = np.exp(-xi2 * h[j]) * out[j] + b * F[j] + a * F[j + 1]
        return sfft.ifftn(out, axes=axes, workers=-1).real

    def lr_sup(v):
        return float(np.max((dv * np.sum(np.abs(v) ** r, axis=axes)) ** (1 / r)))

    v = v0
    residuals, ratios = [], []
    converged = False
    for _ in range(max_iter):
        v_new = gamma_map(v)
        res = lr_sup(v_new - v)
        residuals.append(res)
        if len(residuals) > 1:
            ratios.append(res / residuals[-2] if residuals[-2] > 0 else 0.0)
        v = v_new
        if res <= tol:
            converged = True
            break
    return v, residuals, ratios, converged, lr_sup


def mild_fixed_point(datum: RandomizedDatum | LatticeField, p: float, d: int, q: float, horizon: float,
                     C: float | None = None, steps: int = 64, tol: float = 1e-12,
                     max_iter: int = 80, mesh: int = 64) -> MildSolution:
    """Picard iteration for v = Gamma[v] on [0, T] with T the randomized stopping time.

    Gamma[v](t) = int_0^t e^{(t-s) Delta} n(v + zhat)(s) ds, zhat(t) = e^{t Delta} u0^w.
    The Duhamel integral is exact in each Fourier mode for a piecewise-linear
    integrand in time.
    """
    u0 = datum.result if isinstance(datum, RandomizedDatum) else datum
    if u0.d != d:
        raise ValueError("datum dimension does not match d")
    random_data_gate(d, p, q)
    if not 0 < horizon <= 1:
        raise ValueError("horizon must lie in (0, 1]")
    r = fixed_point_exponent(d, p)
    stop, C, M = random_stopping_time(u0, p, q, horizon, C, mesh)
    T = stop.value
    times = np.linspace(0.0, T, steps + 1)
    xi2 = u0.frequency_squared()
    axes = tuple(range(1, d + 1))
    spec = u0.spectrum[None] * np.exp(-times.reshape((-1,) + (1,) * d) * xi2)
    zvals = _to_physical(spec, d)
    dv = u0.dx ** d
    zero = np.zeros_like(zvals)
    v, residuals, ratios, converged, lr_sup = _picard(zvals, times, xi2, d, p, r, dv, zero, tol * max(M, 1),
                                                      max_iter)
    tail = [x for x, res in zip(ratios[1:], residuals[2:]) if res > 1e3 * np.finfo(float).eps * max(M, 1)]
    cert = PicardCertificate(residuals, ratios, len(residuals), converged,
                             float(max(tail)) if tail else 0.0, M)
    if not converged:
        raise FixedPointFailure("Picard iteration did not converge", {"residuals": residuals, "T": T})
    if not cert.ok:
        raise FixedPointFailure("Picard iteration is not contracting fast enough",
                                {"ratios": ratios, "T": T})
    # second start on the boundary of the ball
    bump = gaussian_bump(d, u0.L, u0.n, 1.0).values
    edge = np.broadcast_to(M * bump / lattice_lp(bump, r, u0.dx, d), zvals.shape).copy()
    v2, *_ = _picard(zvals, times, xi2, d, p, r, dv, edge, tol * max(M, 1), max_iter)
    gap = lr_sup(v2 - v)
    sup_v = lr_sup(v)

    def fields(arr):
        return [LatticeField(d, u0.L, u0.n, sfft.fftn(a) / u0.n ** d) for a in arr]

    vt = Trajectory(times, fields(v), {"L_r": np.array([lattice_lp(a, r, u0.dx, d) for a in v])})
    ut = Trajectory(times, fields(v + zvals), {"L_q": np.array([lattice_lp(a, q, u0.dx, d) for a in v + zvals])})
    cont = continuity_diagnostic(ut, q, norm=lattice_norm) if steps >= 8 else None
    return MildSolution(vt, ut, stop, cert, gap, sup_v <= M * (1 + 1e-9), sup_v, cont, r, C)


# ---------------------------------------------------------------------------
# probability of a long local existence time

def success_probability(u0: LatticeField, q: float, p: float, d: int, T_list, ensemble: int, rng,
                        bp: BlockPartition | None = None, horizon: float | None = None,
                        C: float | None = None, mesh: int = 64, batch: int = 16,
                        scales=(1.0,)) -> dict:
    """Empirical P(stopping time >= T) over an ensemble of randomizations of u0.

    Each entry of `scales` reuses the same draws for the datum c u0, so
    curves for different amplitudes share their randomness.
    """
    if ensemble < 100:
        raise ValueError("ensemble must be >= 100")
    random_data_gate(d, p, q)
    T_list = np.sort(np.asarray(T_list, dtype=float))
    horizon = float(T_list[-1]) if horizon is None else horizon
    if not T_list[-1] <= horizon <= 1:
        raise ValueError("need max(T_list) <= horizon <= 1")
    bp = build_block_partition(d, 8) if bp is None else bp
    _check_datum(u0, bp, SPECTRAL_TOL)
    r = fixed_point_exponent(d, p)
    C = scheme_constant(d, p, r) if C is None else C
    times = monitor_mesh(horizon, mesh)
    stops = {c: [] for c in scales}
    triggers = {c: [] for c in scales}
    for spec in _sample_batches(u0, bp, rng, ensemble, batch):
        for s in spec:
            mon = zhat_monitor(u0.with_spectrum(s), times, r, p)
            for c in scales:
                rec = stopping_from_monitor(_scaled(mon, c), d, p, q, horizon, C, r)
                stops[c].append(rec.value)
                triggers[c].append(rec.trigger)
    kappa = tail_exponent(d, p, q)
    curves = {}
    for c in scales:
        st = np.array(stops[c])
        P = np.array([np.mean(st >= T) for T in T_list])
        curves[c] = {"P": P, "stops": st, "triggers": triggers[c],
                     "fit": fit_failure_curve(T_list, P, kappa, ensemble)}
    first = curves[scales[0]]
    return {"T": T_list, "P": first["P"], "stops": first["stops"], "fit": first["fit"],
            "curves": curves, "kappa": kappa, "C": C, "r": r, "ensemble": ensemble,
            "data_l2": u0.l2_spectral()}


def fit_failure_curve(T, P, kappa: float, ensemble: int, min_count: int = 5,
                      small_time: float = 0.5) -> dict:
    """Least squares of log(1 - P) on T^{-kappa} over the small-time branch.

    Uses the points with P >= small_time and at least min_count failures.
    """
    T, P = np.asarray(T), np.asarray(P)
    fails = (1 - P) * ensemble
    sel = (fails >= min_count) & (P >= small_time) & (P * ensemble >= min_count)
    if sel.sum() < 3:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan"), "points": int(sel.sum())}
    x, y = T[sel] ** (-kappa), np.log(1 - P[sel])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return {"slope": float(slope), "intercept": float(icpt), "r2": r2, "points": int(sel.sum())}


def amplitude_scaling(result: dict, c_small: float, c_large: float, min_count: int = 5) -> dict:
    """Slope ratio of log(1 - P) on T^{-kappa} for two amplitudes over their common window.

    With a Gaussian tail exp(-c x / ||u0||^2) the ratio equals (c_large/c_small)^2
    whatever the power of T inside x.
    """
    T, n, kappa = result["T"], result["ensemble"], result["kappa"]
    P1, P2 = result["curves"][c_small]["P"], result["curves"][c_large]["P"]
    ok = np.ones(T.size, dtype=bool)
    for P in (P1, P2):
        ok &= ((1 - P) * n >= min_count) & (P * n >= min_count)
    if ok.sum() < 3:
        return {"ratio": float("nan"), "points": int(ok.sum())}
    x = T[ok] ** (-kappa)
    s1 = np.polyfit(x, np.log(1 - P1[ok]), 1)[0]
    s2 = np.polyfit(x, np.log(1 - P2[ok]), 1)[0]
    return {"ratio": float(s1 / s2), "slope_small": float(s1), "slope_large": float(s2),
            "points": int(ok.sum()), "window": (float(T[ok][0]), float(T[ok][-1]))}
