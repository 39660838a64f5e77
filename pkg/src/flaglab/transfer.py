"""Markov operator, its adjoint, the unitary representation and the spectral experiments.

Conventions (probability Haar measure m on the flag manifold):

    (T u)(x)   = sum_g mu(g) u(g^-1 x)
    (T* v)(x)  = sum_g mu(g) v(g x) exp(-2 rho(sigma(g, x)))
    (pi(g) u)(x) = u(g^-1 x) exp(-rho(sigma(g^-1, x)))

The weight in pi is the square root of the density of g_* m, which is what
makes pi unitary under the cocycle convention of :mod:`flaglab.group`.
Matrices hold <A e_j, e_i> in the canonical label order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .group import Backend, GroupElement, group_spec
from .harmonics import (
    ConfigurationError,
    FunctionCoefficients,
    QuadratureRule,
    _dense_grid,
    act_on_points,
    analyze,
    basis_matrix,
    block_norms,
    line_vectors,
    lp_blocking,
    n_basis,
    quadrature,
    quadrature_for,
    sobolev_norm,
    synthesize,
)
from .measures import SupportMeasure

log = logging.getLogger(__name__)

__all__ = [
    "SupportMeasure",
    "OperatorMatrix",
    "DensityEstimate",
    "GapReport",
    "DecayReport",
    "PiResult",
    "IterationTrace",
    "GrowthProbe",
    "QuadratureError",
    "TruncationError",
    "FitError",
    "log_norm_on_lines",
    "log_jacobian",
    "assemble_markov",
    "assemble_adjoint",
    "pi_act",
    "stationary_density",
    "power_iteration_density",
    "lp_spectrum",
    "restricted_gap_estimate",
    "highfreq_iteration_experiment",
    "low_frequency_profile",
    "sobolev_growth_probe",
]

NODE_CHUNK = 4096


class QuadratureError(RuntimeError):
    """Doubling the quadrature changed an assembled entry beyond tolerance."""


class TruncationError(RuntimeError):
    """Mass leaking past the output cutoff exceeds the configured bound."""


class FitError(ValueError):
    pass


def log_norm_on_lines(g: np.ndarray, pts: np.ndarray, backend) -> np.ndarray:
    """log |g v| for the unit line vectors v of the points: sigma(g, x) coordinate."""
    v = line_vectors(backend, pts)
    return np.log(np.linalg.norm(v @ np.asarray(g).T, axis=1))


def log_jacobian(g: GroupElement, pts: np.ndarray) -> np.ndarray:
    """-2 rho(sigma(g, x)) at each point, vectorized."""
    rho = group_spec(g.backend).rho_coefficient
    return -2.0 * rho * log_norm_on_lines(g.matrix, pts, g.backend)


# ---------------------------------------------------------------------------
# Operator assembly

@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    backend: Backend
    cutoff: int
    matrix: np.ndarray
    adjoint: bool
    band_limit: int
    measure_hash: str = ""
    self_check_error: float | None = None

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix)

    def apply(self, u: FunctionCoefficients) -> FunctionCoefficients:
        if u.cutoff != self.cutoff:
            u = u.resized(self.cutoff)
        return FunctionCoefficients(self.backend, self.cutoff, self.matrix @ u.values)

    def conj_transpose(self) -> "OperatorMatrix":
        return OperatorMatrix(self.backend, self.cutoff, self.matrix.conj().T.copy(),
                              not self.adjoint, self.band_limit, self.measure_hash)

    def top_singular_value(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def _atom_block(g: GroupElement, rule: QuadratureRule, cutoff: int, adjoint: bool) -> np.ndarray:
    n = n_basis(rule.backend, cutoff)
    acc = np.zeros((n, n), dtype=rule.backend.dtype)
    move = g if adjoint else g.inv()
    for start in range(0, rule.size, NODE_CHUNK):
        pts = rule.nodes[start:start + NODE_CHUNK]
        w = rule.weights[start:start + NODE_CHUNK]
        E = basis_matrix(rule.backend, cutoff, pts)
        Eg = basis_matrix(rule.backend, cutoff, act_on_points(move, pts))
        if adjoint:
            w = w * np.exp(log_jacobian(g, pts))
        acc += E.conj().T @ (w[:, None] * Eg)
    return acc


def _assemble(mu: SupportMeasure, cutoff: int, rule: QuadratureRule, adjoint: bool,
              threads: int) -> np.ndarray:
    if rule.backend is not mu.backend:
        raise ConfigurationError("quadrature and measure backends differ")
    if rule.band_limit < 2 * cutoff:
        raise ConfigurationError(f"band limit {rule.band_limit} too small for cutoff {cutoff}")
    if threads > 1 and len(mu) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda g: _atom_block(g, rule, cutoff, adjoint), mu.atoms))
    else:
        blocks = [_atom_block(g, rule, cutoff, adjoint) for g in mu.atoms]
    out = np.zeros_like(blocks[0])
    for w, b in zip(mu.weights, blocks):  # fixed reduction order
        out += w * b
    return out


def _assemble_checked(mu, cutoff, rule, oversampling, adjoint, self_check, check_tol, threads):
    if rule is None:
        rule = quadrature_for(mu.backend, cutoff, oversampling)
    mat = _assemble(mu, cutoff, rule, adjoint, threads)
    err = None
    if self_check:
        fine = _assemble(mu, cutoff, quadrature(mu.backend, 2 * rule.band_limit), adjoint, threads)
        diff = np.abs(fine - mat)
        err = float(diff.max())
        if err > check_tol:
            i, j = np.unravel_index(np.argmax(diff), diff.shape)
            raise QuadratureError(
                f"entry ({i}, {j}) moved by {err:.3e} when the quadrature doubled "
                f"({mat[i, j].item()!r} -> {fine[i, j].item()!r}); raise the oversampling")
    return OperatorMatrix(mu.backend, cutoff, mat, adjoint, rule.band_limit, mu.digest(), err)


def assemble_markov(mu: SupportMeasure, cutoff: int, rule: QuadratureRule | None = None, *,
                    oversampling: float = 4.0, self_check: bool = True,
                    check_tol: float = 1e-9, threads: int = 1) -> OperatorMatrix:
    """Truncated matrix of T by quadrature, optionally re-assembled on a doubled rule."""
    return _assemble_checked(mu, cutoff, rule, oversampling, False, self_check, check_tol, threads)


def assemble_adjoint(mu: SupportMeasure, cutoff: int, rule: QuadratureRule | None = None, *,
                     oversampling: float = 4.0, self_check: bool = True,
                     check_tol: float = 1e-9, threads: int = 1) -> OperatorMatrix:
    """Truncated matrix of T* assembled directly with the Radon-Nikodym weight."""
    return _assemble_checked(mu, cutoff, rule, oversampling, True, self_check, check_tol, threads)


# ---------------------------------------------------------------------------
# The representation pi

@dataclass(frozen=True)
class PiResult:
    coefficients: FunctionCoefficients
    leak: float | None


def _pi_samples(g: GroupElement, u: FunctionCoefficients, rule: QuadratureRule) -> np.ndarray:
    g_inv = g.inv()
    pts = rule.nodes
    rho = group_spec(g.backend).rho_coefficient
    weight = np.exp(-rho * log_norm_on_lines(g_inv.matrix, pts, g.backend))
    return synthesize(u, act_on_points(g_inv, pts)) * weight


def pi_act(g: GroupElement, u: FunctionCoefficients, out_cutoff: int, *,
           oversampling: float = 4.0, leak_bound: float | None = None,
           measure_leak: bool = True) -> PiResult:
    """Coefficients of pi(g) u up to ``out_cutoff``.

    The leak is the L2 mass that appears between ``out_cutoff`` and twice it.
    """
    if out_cutoff < u.cutoff:
        raise ConfigurationError("output cutoff must be at least the input cutoff")
    rule = quadrature_for(g.backend, out_cutoff, oversampling)
    v = analyze(_pi_samples(g, u, rule), rule, out_cutoff)
    leak = None
    if measure_leak:
        rule2 = quadrature_for(g.backend, 2 * out_cutoff, oversampling)
        v2 = analyze(_pi_samples(g, u, rule2), rule2, 2 * out_cutoff)
        leak = float(np.linalg.norm(v2.values[len(v.values):]))
        if leak_bound is not None and leak > leak_bound:
            raise TruncationError(
                f"leak {leak:.3e} above bound {leak_bound:.1e}; output cutoff {out_cutoff} "
                "is too small for this element")
    return PiResult(v, leak)


# ---------------------------------------------------------------------------
# Stationary density

@dataclass(frozen=True, eq=False)
class DensityEstimate:
    coefficients: FunctionCoefficients
    residual: float
    grid_min: float
    grid_max: float
    cutoff: int
    tolerance: float
    smallest_singular: float
    second_singular: float
    near_degenerate: bool

    @property
    def converged(self) -> bool:
        return self.residual <= self.tolerance

    @property
    def positive(self) -> bool:
        return self.grid_min >= -1e-3 * self.grid_max


def stationary_density(mu: SupportMeasure | None = None, cutoff: int | None = None, *,
                       adjoint: OperatorMatrix | None = None, oversampling: float = 4.0,
                       tol: float = 1e-8, degeneracy_tol: float = 1e-6,
                       threads: int = 1) -> DensityEstimate:
    """Unit-mass minimizer of |(T* - I) x| from the smallest singular direction."""
    if adjoint is None:
        adjoint = assemble_adjoint(mu, cutoff, oversampling=oversampling, threads=threads)
    elif not adjoint.adjoint:
        raise ConfigurationError("stationary_density needs the adjoint operator")
    A = adjoint.matrix - np.eye(adjoint.matrix.shape[0])
    _, s, Vh = np.linalg.svd(A)
    x = Vh[-1].conj()
    if abs(x[0]) < 1e-300:
        raise ArithmeticError("null direction has no mass")
    x = x / x[0]
    if adjoint.backend is Backend.SL2R:
        x = np.real(x)
    x[0] = 1.0
    coeffs = FunctionCoefficients(adjoint.backend, adjoint.cutoff, x)
    residual = float(np.linalg.norm(adjoint.matrix @ x - x))
    grid = _dense_grid(adjoint.backend, adjoint.cutoff, 4)
    vals = np.real(synthesize(coeffs, grid))
    second = float(s[-2]) if len(s) > 1 else float("inf")
    est = DensityEstimate(coeffs, residual, float(vals.min()), float(vals.max()), adjoint.cutoff,
                          tol, float(s[-1]), second, second < degeneracy_tol)
    if not est.converged:
        log.warning("stationary density residual %.3e above tolerance %.1e", residual, tol)
    return est


def power_iteration_density(adjoint: OperatorMatrix, max_iter: int = 100000,
                            tol: float = 1e-12) -> tuple[FunctionCoefficients, int]:
    """Cross-check: iterate T* from the constant density until it stops moving."""
    x = np.zeros(adjoint.matrix.shape[0], dtype=adjoint.matrix.dtype)
    x[0] = 1.0
    for it in range(1, max_iter + 1):
        y = adjoint.matrix @ x
        y = y / y[0]
        if np.linalg.norm(y - x) <= tol:
            return FunctionCoefficients(adjoint.backend, adjoint.cutoff, y), it
        x = y
    return FunctionCoefficients(adjoint.backend, adjoint.cutoff, x), max_iter


# ---------------------------------------------------------------------------
# Fourier decay of the density

@dataclass(frozen=True)
class DecayReport:
    block_norms: dict
    slope: float | None
    intercept: float | None
    fit_blocks: tuple
    sobolev_exponent: float | None
    cutoff: int

    def to_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "block_norms": {str(k): v for k, v in sorted(self.block_norms.items())},
            "slope": self.slope,
            "intercept": self.intercept,
            "fit_blocks": list(self.fit_blocks),
            "sobolev_exponent": self.sobolev_exponent,
        }


def lp_spectrum(density, window: tuple[int, int] | None = None, *,
                noise_floor: float = 1e-11, min_points: int = 3,
                require_fit: bool = False) -> DecayReport:
    """Per-block norms and the least-squares slope of log2 |P_k g| against k.

    The window defaults to blocks 1 .. top-2; the two top blocks are always
    dropped since truncation contaminates them.  Blocks without labels or with
    norm below ``noise_floor * |g|`` are skipped.  The Sobolev exponent is
    -2 * slope, the threshold at which sum 2^(t k) |P_k g|^2 stops converging.
    """
    u = density.coefficients if isinstance(density, DensityEstimate) else density
    norms = block_norms(u)
    lp = lp_blocking(u.backend, u.cutoff)
    top = lp.top
    lo, hi = (1, top) if window is None else window
    hi = min(hi, top - 2)
    floor = noise_floor * u.norm()
    ks = [k for k in range(lo, hi + 1) if lp.counts.get(k) and norms[k] > floor]
    if len(ks) < min_points:
        if require_fit:
            raise FitError(f"only {len(ks)} usable blocks in window [{lo}, {hi}]")
        return DecayReport(norms, None, None, tuple(ks), None, u.cutoff)
    y = np.log2([norms[k] for k in ks])
    slope, intercept = np.polyfit(np.array(ks, float), y, 1)
    return DecayReport(norms, float(slope), float(intercept), tuple(ks), float(-2 * slope), u.cutoff)


# ---------------------------------------------------------------------------
# Restricted spectral gap

@dataclass(frozen=True)
class GapReport:
    N: int
    cutoff: int
    estimate: float
    estimate_doubled: float | None
    change: float | None
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _compressed_norm(op: OperatorMatrix, N: int) -> float:
    lp = lp_blocking(op.backend, op.cutoff)
    if N > lp.top:
        raise ConfigurationError(f"block {N} lies above the top block {lp.top}")
    idx = lp.at_or_above(N)
    if len(idx) == 0:
        return 0.0
    return float(np.linalg.norm(op.matrix[np.ix_(idx, idx)], 2))


def restricted_gap_estimate(mu: SupportMeasure, N: int, cutoff: int, *,
                            oversampling: float = 4.0, doubling: bool = True,
                            convergence_tol: float = 0.05, threads: int = 1,
                            operator: OperatorMatrix | None = None) -> GapReport:
    """Top singular value of T compressed to blocks >= N, with a cutoff-doubling trace.

    A numerical proxy for the contraction on the complement of the low blocks,
    not a certified bound.  The measure must be symmetric, since only then
    does the operator agree with u -> sum mu(g) u(g x).
    """
    if not mu.symmetric:
        raise ConfigurationError("gap experiments need a symmetric measure")
    op = operator or assemble_markov(mu, cutoff, oversampling=oversampling, threads=threads)
    est = _compressed_norm(op, N)
    est2 = change = None
    converged = True
    if doubling:
        op2 = assemble_markov(mu, 2 * cutoff, oversampling=oversampling, threads=threads)
        est2 = _compressed_norm(op2, N)
        change = est2 - est
        converged = abs(change) <= convergence_tol
        if not converged:
            log.warning("gap estimate moved by %.3f when the cutoff doubled", change)
    return GapReport(N, cutoff, est, est2, change, converged)


# ---------------------------------------------------------------------------
# The iteration of the regularity argument

@dataclass(frozen=True)
class IterationTrace:
    k: int
    N: int
    norms: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def recursion_slack(self, gap: float) -> np.ndarray:
        """gap |T^l u| + |P_<N T^(l+1) u| - |P_>=N T^(l+1) u| for each step l."""
        return gap * self.norms[:-1] + self.low[1:] - self.high[1:]


def _random_in_block(backend, cutoff, k, rng) -> FunctionCoefficients:
    idx = lp_blocking(backend, cutoff).indices(k)
    if len(idx) == 0:
        raise ConfigurationError(f"block {k} has no labels below cutoff {cutoff}")
    v = np.zeros(n_basis(backend, cutoff), dtype=backend.dtype)
    v[idx] = rng.standard_normal(len(idx))
    if backend is Backend.SL2C:
        v[idx] = v[idx] + 1j * rng.standard_normal(len(idx))
    return FunctionCoefficients(backend, cutoff, v / np.linalg.norm(v))


def highfreq_iteration_experiment(op: OperatorMatrix, k: int, ell_max: int, N: int, *,
                                  rng: np.random.Generator | None = None,
                                  u: FunctionCoefficients | None = None) -> IterationTrace:
    """|T^l u|, |P_<N T^l u| and |P_>=N T^l u| for l = 0..ell_max, u a unit vector in block k."""
    if op.adjoint:
        raise ConfigurationError("the iteration runs on T, not T*")
    rng = rng or np.random.default_rng(0)
    if u is None:
        u = _random_in_block(op.backend, op.cutoff, k, rng)
    low_idx = lp_blocking(op.backend, op.cutoff).below(N)
    x = u.values
    norms, low, high = [], [], []
    for _ in range(ell_max + 1):
        n = np.linalg.norm(x)
        lo = np.linalg.norm(x[low_idx]) if len(low_idx) else 0.0
        norms.append(n)
        low.append(lo)
        high.append(np.sqrt(max(n * n - lo * lo, 0.0)))
        x = op.matrix @ x
    return IterationTrace(k, N, np.array(norms), np.array(low), np.array(high))


def low_frequency_profile(op: OperatorMatrix, N: int, ks, *, trials: int = 10,
                          rng: np.random.Generator | None = None) -> tuple[dict, float]:
    """Mean |P_<N T u| over random unit u in each block k, and its log2-slope in k."""
    rng = rng or np.random.default_rng(0)
    low_idx = lp_blocking(op.backend, op.cutoff).below(N)
    prof = {}
    for k in ks:
        vals = []
        for _ in range(trials):
            u = _random_in_block(op.backend, op.cutoff, k, rng)
            vals.append(np.linalg.norm((op.matrix @ u.values)[low_idx]))
        prof[k] = float(np.mean(vals))
    x = np.array(list(prof), float)
    slope = float(np.polyfit(x, np.log2(list(prof.values())), 1)[0])
    return prof, slope


# ---------------------------------------------------------------------------
# Growth of Sobolev norms

@dataclass(frozen=True)
class GrowthProbe:
    c_hat: float
    r_squared: float
    abscissa: np.ndarray
    log_ratios: np.ndarray
    fait_c_hat: float | None = None
    fait_r_squared: float | None = None
    poor_fit: bool = field(default=False)


def _fit_through_origin(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    c = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - c * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return c, r2


def sobolev_growth_probe(g_samples, s_values, u_samples, out_cutoff: int, *,
                         adjoint: OperatorMatrix | None = None, m_values=(),
                         epsilon: float | None = None, oversampling: float = 4.0) -> GrowthProbe:
    """Fit log(|pi(g) u|_{H^s} / |u|_{H^s}) = c s |kappa(g)|.

    With an adjoint operator, the same fit on (T*)^m with m * epsilon on the
    abscissa probes the growth of |(T*)^m|_{H^s}.  A fit with R^2 < 0.9 is
    flagged through ``poor_fit`` rather than raised.
    """
    from .group import cartan_norm

    xs, ys = [], []
    for g in g_samples:
        kn = cartan_norm(g)
        for u in u_samples:
            v = pi_act(g, u, out_cutoff, oversampling=oversampling, measure_leak=False).coefficients
            for s in s_values:
                xs.append(s * kn)
                ys.append(np.log(sobolev_norm(v, s) / sobolev_norm(u, s)))
    c, r2 = _fit_through_origin(xs, ys)
    fc = fr2 = None
    if adjoint is not None and len(m_values):
        eps = epsilon if epsilon is not None else 1.0
        fx, fy = [], []
        for u in u_samples:
            base = u.resized(adjoint.cutoff)
            for m in m_values:
                x = base.values
                for _ in range(m):
                    x = adjoint.matrix @ x
                v = FunctionCoefficients(adjoint.backend, adjoint.cutoff, x)
                for s in s_values:
                    fx.append(s * m * eps)
                    fy.append(np.log(sobolev_norm(v, s) / sobolev_norm(base, s)))
        fc, fr2 = _fit_through_origin(fx, fy)
    poor = r2 < 0.9 or (fr2 is not None and fr2 < 0.9)
    return GrowthProbe(c, r2, np.array(xs), np.array(ys), fc, fr2, poor)
