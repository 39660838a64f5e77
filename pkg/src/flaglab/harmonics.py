"""Harmonic analysis on the flag manifold.

SL2R: the flag manifold is P^1, points are angles theta in [0, pi) and the
orthonormal basis (probability Haar measure) is 1, sqrt(2) cos(2 n theta),
sqrt(2) sin(2 n theta).  The pair with frequency 2n forms one isotypic block
of dimension 2.

SL2C: the flag manifold is CP^1 = S^2, points are unit vectors and the basis
is the complex spherical harmonics Y_lm (Condon-Shortley phase) scaled by
sqrt(4 pi) so that they are orthonormal for the probability measure.

Labels are enumerated by ascending tau, then ascending inner index; this order
is shared by every coefficient vector, matrix and file in the package.  The
casimir value is c(tau) = 1 + lambda_tau with lambda_tau the Laplace-Beltrami
eigenvalue (4 n^2 on the circle, l (l + 1) on the sphere), and the
Littlewood-Paley block of a label is the k with 2^k <= c(tau) < 2^(k+1).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .group import Backend, GroupElement, _as_backend

__all__ = [
    "BASIS_ORDER_VERSION",
    "ConfigurationError",
    "FlagPoint",
    "BasisLabel",
    "QuadratureRule",
    "FunctionCoefficients",
    "LPBlocking",
    "line_vectors",
    "points_from_lines",
    "act_on_flag",
    "act_on_points",
    "labels",
    "n_basis",
    "label_index",
    "basis_eval",
    "basis_matrix",
    "quadrature",
    "quadrature_for",
    "analyze",
    "synthesize",
    "casimir_value",
    "lp_block_of",
    "lp_blocking",
    "project_block",
    "block_norms",
    "sobolev_norm",
    "sobolev_norm_blocks",
    "bernstein_check",
    "block_counts",
    "complete_blocks",
    "laplace_beltrami_fd",
    "random_coefficients",
    "random_points",
]

BASIS_ORDER_VERSION = "tau-asc-inner-asc/1"


class ConfigurationError(ValueError):
    """Inconsistent cutoff / quadrature / label configuration."""


# ---------------------------------------------------------------------------
# Flag points

@dataclass(frozen=True, eq=False)
class FlagPoint:
    backend: Backend
    coords: np.ndarray

    def __post_init__(self):
        backend = _as_backend(self.backend)
        c = np.atleast_1d(np.asarray(self.coords, dtype=float)).copy()
        if backend is Backend.SL2R:
            if c.shape != (1,):
                raise ValueError("SL2R flag point is a single angle")
            c = _reduce_angles(c)
        else:
            if c.shape != (3,):
                raise ValueError("SL2C flag point is a unit 3-vector")
            n = np.linalg.norm(c)
            if abs(n - 1.0) > 1e-6:
                raise ValueError(f"flag point off the sphere (norm {n})")
            c = c / n
        c.setflags(write=False)
        object.__setattr__(self, "backend", backend)
        object.__setattr__(self, "coords", c)

    @classmethod
    def angle(cls, theta: float) -> "FlagPoint":
        return cls(Backend.SL2R, [theta])

    @classmethod
    def sphere(cls, x) -> "FlagPoint":
        return cls(Backend.SL2C, x)

    @classmethod
    def base(cls, backend) -> "FlagPoint":
        """The flag fixed by the upper-triangular subgroup (line through e1)."""
        backend = _as_backend(backend)
        return cls(backend, [0.0] if backend is Backend.SL2R else [0.0, 0.0, 1.0])

    @property
    def theta(self) -> float:
        return float(self.coords[0])

    def __repr__(self):
        return f"FlagPoint({self.backend.value}, {self.coords.tolist()})"


def _reduce_angles(theta):
    theta = np.mod(theta, np.pi)
    return np.where(theta >= np.pi, 0.0, theta)


def line_vectors(backend, pts: np.ndarray) -> np.ndarray:
    """Unit representatives (n, 2) of the lines for points of shape (n, d)."""
    backend = _as_backend(backend)
    pts = np.asarray(pts, dtype=float)
    if backend is Backend.SL2R:
        th = pts[:, 0]
        return np.column_stack([np.cos(th), np.sin(th)])
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    north = z >= 0
    v = np.empty((len(pts), 2), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        sp = np.sqrt(2.0 * (1.0 + z))
        sm = np.sqrt(2.0 * (1.0 - z))
        v[:, 0] = np.where(north, 0.5 * sp, (x + 1j * y) / sm)
        v[:, 1] = np.where(north, (x - 1j * y) / sp, 0.5 * sm)
    return v


def points_from_lines(backend, v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`line_vectors`; any nonzero vector on the line is accepted."""
    backend = _as_backend(backend)
    v = np.asarray(v)
    if backend is Backend.SL2R:
        th = np.arctan2(v[:, 1].real, v[:, 0].real)
        return _reduce_angles(th)[:, None]
    a, b = v[:, 0], v[:, 1]
    ab = a * np.conj(b)
    pts = np.column_stack([2 * ab.real, 2 * ab.imag, np.abs(a) ** 2 - np.abs(b) ** 2])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def act_on_points(g, pts: np.ndarray) -> np.ndarray:
    """Vectorized projective action of a group element on an array of points."""
    if isinstance(g, GroupElement):
        backend, m = g.backend, g.matrix
    else:
        m = np.asarray(g)
        backend = Backend.SL2C if np.iscomplexobj(m) else Backend.SL2R
    v = line_vectors(backend, pts)
    return points_from_lines(backend, v @ m.T)


def act_on_flag(g: GroupElement, xi: FlagPoint) -> FlagPoint:
    if g.backend is not xi.backend:
        raise ValueError("backend mismatch")
    return FlagPoint(xi.backend, act_on_points(g, xi.coords[None])[0])


def random_points(backend, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points drawn from the K-invariant probability measure, shape (n, d)."""
    backend = _as_backend(backend)
    if backend is Backend.SL2R:
        return rng.uniform(0, np.pi, size=(n, 1))
    x = rng.standard_normal((n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Labels

@dataclass(frozen=True)
class BasisLabel:
    tau: int
    inner_index: int | str
    casimir_value: float
    dim_tau: int

    @property
    def block(self) -> int:
        return lp_block_of(self)


def casimir_value(backend, tau: int) -> float:
    backend = _as_backend(backend)
    if backend is Backend.SL2R:
        return 1.0 + 4.0 * tau * tau
    return 1.0 + tau * (tau + 1.0)


@functools.lru_cache(maxsize=None)
def _labels(backend: Backend, cutoff: int) -> tuple[BasisLabel, ...]:
    out = []
    for tau in range(cutoff + 1):
        c = casimir_value(backend, tau)
        if backend is Backend.SL2R:
            if tau == 0:
                out.append(BasisLabel(0, "const", c, 1))
            else:
                out.append(BasisLabel(tau, "cos", c, 2))
                out.append(BasisLabel(tau, "sin", c, 2))
        else:
            out.extend(BasisLabel(tau, m, c, 2 * tau + 1) for m in range(-tau, tau + 1))
    return tuple(out)


def labels(backend, cutoff: int) -> tuple[BasisLabel, ...]:
    """Canonical label enumeration up to and including ``cutoff``."""
    return _labels(_as_backend(backend), int(cutoff))


def n_basis(backend, cutoff: int) -> int:
    backend = _as_backend(backend)
    return 2 * cutoff + 1 if backend is Backend.SL2R else (cutoff + 1) ** 2


def label_index(backend, tau: int, inner) -> int:
    backend = _as_backend(backend)
    if backend is Backend.SL2R:
        if tau == 0:
            return 0
        return 2 * tau - 1 + (1 if inner == "sin" else 0)
    return tau * tau + tau + int(inner)


def _tau_array(backend: Backend, cutoff: int) -> np.ndarray:
    return np.array([lab.tau for lab in labels(backend, cutoff)])


def _casimir_array(backend: Backend, cutoff: int) -> np.ndarray:
    return np.array([lab.casimir_value for lab in labels(backend, cutoff)])


# ---------------------------------------------------------------------------
# Basis evaluation

def _legendre_table(L: int, x: np.ndarray, s: np.ndarray) -> dict:
    """Orthonormal associated Legendre functions P[l, m](x), m >= 0, scaled by sqrt(4 pi).

    Standard three-term recurrence in l at fixed m, seeded by the sectoral
    terms; includes the Condon-Shortley phase.
    """
    P = {}
    pmm = np.ones_like(x)
    for m in range(L + 1):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        P[m, m] = pmm
        if m + 1 <= L:
            P[m + 1, m] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def basis_matrix(backend, cutoff: int, pts: np.ndarray) -> np.ndarray:
    """Values of every basis function up to ``cutoff`` at points, shape (n_pts, n_basis)."""
    backend = _as_backend(backend)
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    if backend is Backend.SL2R:
        th = pts[:, 0]
        out = np.empty((n, 2 * cutoff + 1))
        out[:, 0] = 1.0
        for tau in range(1, cutoff + 1):
            out[:, 2 * tau - 1] = np.sqrt(2.0) * np.cos(2 * tau * th)
            out[:, 2 * tau] = np.sqrt(2.0) * np.sin(2 * tau * th)
        return out
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    s = np.hypot(x, y)
    phi = np.arctan2(y, x)
    P = _legendre_table(cutoff, np.clip(z, -1.0, 1.0), s)
    out = np.empty((n, (cutoff + 1) ** 2), dtype=complex)
    for m in range(cutoff + 1):
        e = np.exp(1j * m * phi)
        sign = -1.0 if m % 2 else 1.0
        for l in range(m, cutoff + 1):
            y_pos = P[l, m] * e
            out[:, l * l + l + m] = y_pos
            if m:
                out[:, l * l + l - m] = sign * np.conj(y_pos)
    return out


def basis_eval(backend, label: BasisLabel, xi: FlagPoint) -> complex:
    backend = _as_backend(backend)
    row = basis_matrix(backend, label.tau, xi.coords[None])[0]
    return row[label_index(backend, label.tau, label.inner_index)]


# ---------------------------------------------------------------------------
# Quadrature

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Positive weights summing to 1, exact on all harmonics of degree <= band_limit.

    For SL2R the band limit counts tau (frequency 2 tau); for SL2C it is the
    spherical degree.  Exactness on harmonics up to ``band_limit`` makes
    products of basis functions up to ``band_limit // 2`` integrate exactly.
    """

    backend: Backend
    band_limit: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)

    def exactness_error(self) -> float:
        w = self.weights
        err = abs(w.sum() - 1.0)
        B = self.band_limit
        if self.backend is Backend.SL2R:
            th = self.nodes[:, 0]
            m = np.arange(1, B + 1)
            err = max(err, np.abs(np.exp(2j * np.outer(m, th)) @ w).max(initial=0.0))
        else:
            z = self.nodes[:, 2]
            phi = np.arctan2(self.nodes[:, 1], self.nodes[:, 0])
            leg = np.polynomial.legendre.legvander(z, B)[:, 1:]
            err = max(err, np.abs(leg.T @ w).max(initial=0.0))
            m = np.arange(1, B + 1)
            err = max(err, np.abs(np.exp(1j * np.outer(m, phi)) @ w).max(initial=0.0))
        return float(err)


@functools.lru_cache(maxsize=32)
def _quadrature(backend: Backend, band_limit: int) -> QuadratureRule:
    if backend is Backend.SL2R:
        M = band_limit + 1
        th = np.pi * np.arange(M) / M
        nodes = th[:, None]
        weights = np.full(M, 1.0 / M)
    else:
        n_theta = band_limit // 2 + 1
        n_phi = band_limit + 1
        x, wx = np.polynomial.legendre.leggauss(n_theta)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        st = np.sqrt(1.0 - x * x)
        nodes = np.column_stack([
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(x, n_phi),
        ])
        weights = np.repeat(wx / 2.0, n_phi) / n_phi
    nodes.setflags(write=False)
    weights.setflags(write=False)
    rule = QuadratureRule(backend, band_limit, nodes, weights)
    err = rule.exactness_error()
    if err > 1e-12:
        raise ConfigurationError(f"quadrature exactness check failed ({err:.2e})")
    return rule


def quadrature(backend, band_limit: int) -> QuadratureRule:
    """Quadrature rule exact on harmonics up to ``band_limit`` (verified on build)."""
    return _quadrature(_as_backend(backend), max(int(band_limit), 1))


# integrands are not band-limited, so tiny cutoffs still get a modest rule
MIN_BAND_LIMIT = 24


def quadrature_for(backend, cutoff: int, oversampling: float = 4.0) -> QuadratureRule:
    return quadrature(backend, max(int(np.ceil(oversampling * cutoff)), 2 * cutoff, MIN_BAND_LIMIT))


# ---------------------------------------------------------------------------
# Coefficient vectors

@dataclass(frozen=True, eq=False)
class FunctionCoefficients:
    backend: Backend
    cutoff: int
    values: np.ndarray

    def __post_init__(self):
        backend = _as_backend(self.backend)
        v = np.asarray(self.values, dtype=backend.dtype)
        if v.shape != (n_basis(backend, self.cutoff),):
            raise ConfigurationError(
                f"{v.shape[0] if v.ndim else 0} coefficients do not match cutoff {self.cutoff}")
        object.__setattr__(self, "backend", backend)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, backend, cutoff: int) -> "FunctionCoefficients":
        backend = _as_backend(backend)
        return cls(backend, cutoff, np.zeros(n_basis(backend, cutoff), dtype=backend.dtype))

    @classmethod
    def constant(cls, backend, cutoff: int, value: float = 1.0) -> "FunctionCoefficients":
        u = cls.zeros(backend, cutoff)
        v = u.values.copy()
        v[0] = value
        return cls(u.backend, cutoff, v)

    @property
    def labels(self):
        return labels(self.backend, self.cutoff)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def resized(self, cutoff: int) -> "FunctionCoefficients":
        """Zero-pad or truncate to another cutoff (label order is prefix-stable)."""
        n = n_basis(self.backend, cutoff)
        v = np.zeros(n, dtype=self.backend.dtype)
        k = min(n, len(self.values))
        v[:k] = self.values[:k]
        return FunctionCoefficients(self.backend, cutoff, v)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return synthesize(self, pts)

    def __add__(self, other):
        return FunctionCoefficients(self.backend, self.cutoff, self.values + other.values)

    def __sub__(self, other):
        return FunctionCoefficients(self.backend, self.cutoff, self.values - other.values)

    def __mul__(self, c):
        return FunctionCoefficients(self.backend, self.cutoff, c * self.values)

    __rmul__ = __mul__


def analyze(samples: np.ndarray, rule: QuadratureRule, cutoff: int) -> FunctionCoefficients:
    """Project samples at the quadrature nodes onto the basis up to ``cutoff``."""
    if rule.band_limit < 2 * cutoff:
        raise ConfigurationError(
            f"quadrature band limit {rule.band_limit} < 2 x cutoff {cutoff}")
    samples = np.asarray(samples)
    if samples.shape[0] != rule.size:
        raise ConfigurationError("samples do not match the quadrature nodes")
    E = basis_matrix(rule.backend, cutoff, rule.nodes)
    c = E.conj().T @ (rule.weights * samples)
    if rule.backend is Backend.SL2R:
        c = np.real(c)
    return FunctionCoefficients(rule.backend, cutoff, c)


def synthesize(u: FunctionCoefficients, pts) -> np.ndarray:
    """Evaluate u at points (array of shape (n, d)) or at a single FlagPoint."""
    if isinstance(pts, FlagPoint):
        return synthesize(u, pts.coords[None])[0]
    return basis_matrix(u.backend, u.cutoff, pts) @ u.values


def random_coefficients(backend, cutoff: int, rng: np.random.Generator,
                        band: int | None = None) -> FunctionCoefficients:
    """Gaussian coefficients supported on tau <= band (default: cutoff), unit L2 norm."""
    backend = _as_backend(backend)
    band = cutoff if band is None else band
    n = n_basis(backend, cutoff)
    k = n_basis(backend, band)
    v = np.zeros(n, dtype=backend.dtype)
    v[:k] = rng.standard_normal(k)
    if backend is Backend.SL2C:
        v[:k] = v[:k] + 1j * rng.standard_normal(k)
    v /= np.linalg.norm(v)
    return FunctionCoefficients(backend, cutoff, v)


# ---------------------------------------------------------------------------
# Littlewood-Paley blocks and Sobolev norms

def lp_block_of(label: BasisLabel) -> int:
    # casimir values are integers on both backends; avoid float log2 edges
    return int(round(label.casimir_value)).bit_length() - 1


@dataclass(frozen=True)
class LPBlocking:
    backend: Backend
    cutoff: int
    blocks: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    @property
    def top(self) -> int:
        return max(self.blocks)

    def indices(self, k: int) -> np.ndarray:
        return np.asarray(self.blocks.get(k, ()), dtype=int)

    def below(self, k: int) -> np.ndarray:
        """Label indices of blocks < k."""
        idx = [i for j, ii in self.blocks.items() if j < k for i in ii]
        return np.array(sorted(idx), dtype=int)

    def at_or_above(self, k: int) -> np.ndarray:
        idx = [i for j, ii in self.blocks.items() if j >= k for i in ii]
        return np.array(sorted(idx), dtype=int)


@functools.lru_cache(maxsize=None)
def _lp_blocking(backend: Backend, cutoff: int) -> LPBlocking:
    labs = labels(backend, cutoff)
    top = lp_block_of(labs[-1])
    blocks = {k: [] for k in range(top + 1)}
    taus = {k: set() for k in range(top + 1)}
    for i, lab in enumerate(labs):
        k = lp_block_of(lab)
        blocks[k].append(i)
        taus[k].add(lab.tau)
    return LPBlocking(backend, cutoff,
                      {k: tuple(v) for k, v in blocks.items()},
                      {k: len(v) for k, v in taus.items()})


def lp_blocking(backend, cutoff: int) -> LPBlocking:
    return _lp_blocking(_as_backend(backend), int(cutoff))


def project_block(u: FunctionCoefficients, k: int) -> FunctionCoefficients:
    v = np.zeros_like(u.values)
    idx = lp_blocking(u.backend, u.cutoff).indices(k)
    v[idx] = u.values[idx]
    return FunctionCoefficients(u.backend, u.cutoff, v)


def block_norms(u: FunctionCoefficients) -> dict[int, float]:
    lp = lp_blocking(u.backend, u.cutoff)
    return {k: float(np.linalg.norm(u.values[lp.indices(k)])) for k in lp.blocks}


def sobolev_norm(u: FunctionCoefficients, s: float) -> float:
    """Diagonal H^s norm sqrt(sum c(tau)^s |u_tau|^2)."""
    c = _casimir_array(u.backend, u.cutoff)
    return float(np.sqrt(np.sum(c ** s * np.abs(u.values) ** 2)))


def sobolev_norm_blocks(u: FunctionCoefficients, s: float) -> float:
    """Littlewood-Paley form sqrt(sum_k 2^(s k) ||P_k u||^2)."""
    return float(np.sqrt(sum(2.0 ** (s * k) * b * b for k, b in block_norms(u).items())))


def _dense_grid(backend: Backend, tau: int, factor: int = 10) -> np.ndarray:
    if backend is Backend.SL2R:
        M = max(64, factor * 2 * max(tau, 1) + 1)
        return (np.pi * np.arange(M) / M)[:, None]
    n = max(32, factor * (tau + 1))
    th = np.linspace(0.0, np.pi, n + 1)
    phi = 2 * np.pi * np.arange(2 * n) / (2 * n)
    st, ct = np.sin(th), np.cos(th)
    return np.column_stack([
        np.outer(st, np.cos(phi)).ravel(),
        np.outer(st, np.sin(phi)).ravel(),
        np.repeat(ct, len(phi)),
    ])


def bernstein_check(u: FunctionCoefficients, grid_factor: int = 10) -> tuple[float, float]:
    """Grid estimate of sup|u| and the bound dim(tau) ||u||_2 for isotypic u."""
    taus = _tau_array(u.backend, u.cutoff)
    support = np.unique(taus[np.abs(u.values) > 0])
    if len(support) > 1:
        raise ValueError(f"u is not isotypic (taus {support.tolist()})")
    tau = int(support[0]) if len(support) else 0
    dim = next(lab.dim_tau for lab in labels(u.backend, u.cutoff) if lab.tau == tau)
    grid = _dense_grid(u.backend, tau, grid_factor)
    coeffs = u.resized(tau)
    sup = float(np.max(np.abs(synthesize(coeffs, grid))))
    return sup, dim * u.norm()


def block_counts(backend, cutoff: int) -> dict[int, int]:
    """Number N_k of isotypic labels tau <= cutoff in each block."""
    return dict(lp_blocking(backend, cutoff).counts)


def complete_blocks(backend, cutoff: int) -> list[int]:
    """Blocks whose every label lies below the cutoff."""
    backend = _as_backend(backend)
    next_c = casimir_value(backend, cutoff + 1)
    return [k for k in lp_blocking(backend, cutoff).blocks if 2 ** (k + 1) <= next_c]


def laplace_beltrami_fd(u: FunctionCoefficients, pts: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Second-order finite-difference Laplace-Beltrami (positive) of u at points.

    Circle: -d^2/dtheta^2.  Sphere: minus the spherical-coordinate Laplacian,
    valid away from the poles.
    """
    pts = np.asarray(pts, dtype=float)
    if u.backend is Backend.SL2R:
        th = pts[:, 0]
        f = lambda t: synthesize(u, t[:, None])
        return -(f(th + h) - 2 * f(th) + f(th - h)) / (h * h)

    x, y, z = pts.T
    th = np.arccos(np.clip(z, -1, 1))
    ph = np.arctan2(y, x)

    def f(t, p):
        q = np.column_stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])
        return synthesize(u, q)

    st = np.sin(th)
    d_theta = (np.sin(th + h / 2) * (f(th + h, ph) - f(th, ph))
               - np.sin(th - h / 2) * (f(th, ph) - f(th - h, ph))) / (h * h * st)
    d_phi = (f(th, ph + h) - 2 * f(th, ph) + f(th, ph - h)) / (h * h * st * st)
    return -(d_theta + d_phi)
