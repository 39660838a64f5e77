"""Monte Carlo simulation of the random walk on the flag manifold.

Each trajectory draws its steps from its own generator, seeded by
``SeedSequence(seed, spawn_key=(i,))`` for trajectory ``i``.  Trajectories are
processed in fixed chunks of ``CHUNK`` and the per-batch results are
concatenated in trajectory order, so outputs do not depend on how many
threads run the chunks.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .group import Backend, cartan_coordinate, group_spec
from .harmonics import (
    BASIS_ORDER_VERSION,
    ConfigurationError,
    FlagPoint,
    basis_matrix,
    labels,
    line_vectors,
    n_basis,
    points_from_lines,
)
from .measures import SupportMeasure

__all__ = [
    "WalkConfig",
    "EmpiricalMoments",
    "SpectralComparison",
    "trajectory_rng",
    "simulate_walk",
    "compare_empirical_spectral",
    "lyapunov_estimate",
    "walk_positions",
]

CHUNK = 64
# re-factorization period for the running product in the Lyapunov estimate
RENORM_EVERY = 64


@dataclass(frozen=True, eq=False)
class WalkConfig:
    """Parameters of a batch of independent walks.

    ``steps`` counts every step including the burn-in; moments use the
    ``steps - burn_in`` positions after it.  ``cutoff`` bounds the basis
    labels whose moments are accumulated.  ``batches`` is the number of
    batch-means batches each trajectory is split into.
    """

    measure: SupportMeasure
    steps: int = 2000
    trajectories: int = 100
    burn_in: int = 1000
    seed: int = 0
    initial: FlagPoint | None = None
    cutoff: int = 8
    batches: int = 1

    def __post_init__(self):
        if not (self.steps > self.burn_in >= 0):
            raise ConfigurationError("need steps > burn_in >= 0")
        if self.trajectories < 1:
            raise ConfigurationError("need at least one trajectory")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.batches < 1 or self.batches > self.steps - self.burn_in:
            raise ConfigurationError("batches must lie in [1, steps - burn_in]")
        if self.trajectories * self.batches < 2:
            object.__setattr__(self, "batches", min(20, self.steps - self.burn_in))
        if self.initial is not None and self.initial.backend is not self.backend:
            raise ConfigurationError("initial point lives on another backend")

    @property
    def backend(self) -> Backend:
        return self.measure.backend

    @property
    def samples(self) -> int:
        return self.trajectories * (self.steps - self.burn_in)


def trajectory_rng(seed: int, i: int) -> np.random.Generator:
    """Independent sub-stream for trajectory ``i`` of the master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def _step_indices(cfg: WalkConfig, i: int) -> np.ndarray:
    rng = trajectory_rng(cfg.seed, i)
    return rng.choice(len(cfg.measure), size=cfg.steps, p=cfg.measure.weights)


def _chunks(n: int):
    return [(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]


def _run_chunks(fn, cfg: WalkConfig, threads: int) -> list:
    spans = _chunks(cfg.trajectories)
    if threads <= 1:
        return [fn(cfg, a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(cfg, *s), spans))


def _initial_lines(cfg: WalkConfig, n: int) -> np.ndarray:
    xi = cfg.initial if cfg.initial is not None else FlagPoint.base(cfg.backend)
    v = line_vectors(cfg.backend, xi.coords[None])
    return np.repeat(v.astype(cfg.backend.dtype), n, axis=0)


def _walk_chunk(cfg: WalkConfig, a: int, b: int):
    """Batch sums of conj(e_i) for trajectories a..b-1, shape (b-a, batches, n_basis)."""
    mats = cfg.measure.matrices()
    idx = np.stack([_step_indices(cfg, i) for i in range(a, b)], axis=1)
    v = _initial_lines(cfg, b - a)
    post = cfg.steps - cfg.burn_in
    edges = np.linspace(0, post, cfg.batches + 1).round().astype(int)
    sums = np.zeros((b - a, cfg.batches, n_basis(cfg.backend, cfg.cutoff)), dtype=complex)
    buf = np.empty((post, b - a, 2), dtype=v.dtype)
    for n in range(cfg.steps):
        v = np.einsum("tij,tj->ti", mats[idx[n]], v)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if n >= cfg.burn_in:
            buf[n - cfg.burn_in] = v
    for j in range(cfg.batches):
        seg = buf[edges[j]:edges[j + 1]]
        pts = points_from_lines(cfg.backend, seg.reshape(-1, 2))
        vals = np.conj(basis_matrix(cfg.backend, cfg.cutoff, pts))
        sums[:, j] = vals.reshape(len(seg), b - a, -1).sum(axis=0)
    return sums, np.diff(edges), v


@dataclass(frozen=True, eq=False)
class EmpiricalMoments:
    """Empirical means of conj(e_i) over post-burn-in positions, in basis order.

    Standard errors come from batch means across trajectories (and batches
    within them).  A label whose batch means all agree, such as the constant,
    gets standard error 0.
    """

    backend: Backend
    cutoff: int
    means: np.ndarray
    standard_errors: np.ndarray
    count: int
    seed: int
    basis_order_version: str = BASIS_ORDER_VERSION
    final_points: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "real", "imag", "standard_error", "count"])
        for lab, m, se in zip(labels(self.backend, self.cutoff), self.means, self.standard_errors):
            w.writerow([f"{lab.tau}:{lab.inner_index}", repr(float(m.real)),
                        repr(float(m.imag)), repr(float(se)), self.count])
        return buf.getvalue()


def simulate_walk(cfg: WalkConfig, threads: int = 1) -> EmpiricalMoments:
    parts = _run_chunks(_walk_chunk, cfg, threads)
    sums = np.concatenate([p[0] for p in parts], axis=0)
    sizes = parts[0][1]
    batch_means = (sums / sizes[None, :, None]).reshape(-1, sums.shape[-1])
    total = sums.sum(axis=(0, 1))
    means = total / cfg.samples
    means[0] = 1.0
    nb = len(batch_means)
    spread = batch_means - batch_means.mean(axis=0)
    # unequal batch sizes only arise from rounding; the plain batch-means formula is kept
    var = (np.abs(spread) ** 2).sum(axis=0) / (nb - 1)
    se = np.sqrt(var / nb)
    se[0] = 0.0
    final = np.concatenate([p[2] for p in parts], axis=0)
    return EmpiricalMoments(cfg.backend, cfg.cutoff, means, se, cfg.samples, cfg.seed,
                            final_points=points_from_lines(cfg.backend, final))


def walk_positions(cfg: WalkConfig, trajectory: int = 0) -> np.ndarray:
    """Every position of one trajectory, shape (steps + 1, d); for inspection."""
    mats = cfg.measure.matrices()
    idx = _step_indices(cfg, trajectory)
    v = _initial_lines(cfg, 1)
    out = [v[0]]
    for n in range(cfg.steps):
        v = v @ mats[idx[n]].T
        v /= np.linalg.norm(v)
        out.append(v[0])
    return points_from_lines(cfg.backend, np.array(out))


# ---------------------------------------------------------------------------
# Cross-validation against a spectral density

@dataclass(frozen=True)
class SpectralComparison:
    labels: tuple
    empirical: np.ndarray
    predicted: np.ndarray
    standard_errors: np.ndarray
    z: np.ndarray
    max_abs_z: float
    n_compared: int

    def to_dict(self) -> dict:
        return {
            "labels": [f"{lab.tau}:{lab.inner_index}" for lab in self.labels],
            "z": [float(x) for x in self.z],
            "max_abs_z": float(self.max_abs_z),
            "n_compared": self.n_compared,
        }


def compare_empirical_spectral(moments: EmpiricalMoments, density, n_labels: int = 10,
                               exact_tol: float = 1e-12) -> SpectralComparison:
    """z-scores |empirical - predicted| / SE over the shared label prefix.

    The density predicts the mean of conj(e_i) as its i-th coefficient.  The
    density solves the adjoint of u -> sum mu(g) u(g^-1 .), whose stationary
    law belongs to the walk driven by the inverted measure; for symmetric
    measures this is the same walk.
    """
    coeffs = getattr(density, "coefficients", density)
    version = getattr(density, "basis_order_version", BASIS_ORDER_VERSION)
    if version != moments.basis_order_version:
        raise ConfigurationError(
            f"basis order {moments.basis_order_version!r} does not match {version!r}")
    if coeffs.backend is not moments.backend:
        raise ConfigurationError("moments and density live on different backends")
    cut = min(coeffs.cutoff, moments.cutoff)
    n = n_basis(moments.backend, cut)
    emp = moments.means[:n]
    pred = coeffs.values[:n]
    se = moments.standard_errors[:n]
    diff = np.abs(emp - pred)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff <= exact_tol, 0.0, np.inf))
    z[0] = 0.0
    m = min(n_labels, n)
    return SpectralComparison(labels(moments.backend, cut), emp, pred, se, z,
                              float(np.max(z[:m])), m)


# ---------------------------------------------------------------------------
# Lyapunov growth of the Cartan projection

def _lyapunov_chunk(cfg: WalkConfig, a: int, b: int) -> np.ndarray:
    """Per-window increments of log sigma_max(product) after the burn-in."""
    mats = cfg.measure.matrices()
    idx = np.stack([_step_indices(cfg, i) for i in range(a, b)], axis=1)
    P = np.repeat(np.eye(2, dtype=mats.dtype)[None], b - a, axis=0)
    log_scale = np.zeros(b - a)
    mark_at = set(range(cfg.burn_in, cfg.steps, RENORM_EVERY)) | {cfg.steps}
    marks = [log_scale.copy()] if 0 in mark_at else []
    for n in range(1, cfg.steps + 1):
        P = np.einsum("tij,tjk->tik", mats[idx[n - 1]], P)
        if n % RENORM_EVERY == 0 or n in mark_at:
            t = cartan_coordinate(P)
            P = P / np.exp(t)[:, None, None]
            log_scale = log_scale + t
        if n in mark_at:
            marks.append(log_scale.copy())
    marks = np.array(marks)
    return np.diff(marks, axis=0).T


def lyapunov_estimate(cfg: WalkConfig, threads: int = 1) -> tuple[float, float]:
    """Growth rate of |kappa(g_n ... g_1)| per step, with a batch-means error.

    The running product is divided by its top singular value every
    ``RENORM_EVERY`` steps and the logarithm carried separately.  Increments
    of log sigma_max over windows telescope, so the rate is exact for
    deterministic products.
    """
    parts = _run_chunks(_lyapunov_chunk, cfg, threads)
    inc = np.concatenate(parts, axis=0)
    post = cfg.steps - cfg.burn_in
    h = group_spec(cfg.backend).h_norm
    per_traj = inc.sum(axis=1) / post
    rate = float(per_traj.mean() * h)
    if cfg.trajectories >= 2:
        se = float(per_traj.std(ddof=1) / np.sqrt(cfg.trajectories) * h)
    else:
        window_len = np.full(inc.shape[1], RENORM_EVERY, dtype=float)
        window_len[-1] = post - RENORM_EVERY * (inc.shape[1] - 1)
        r = inc[0] / window_len
        se = float(r.std(ddof=1) / np.sqrt(len(r)) * h) if len(r) > 1 else 0.0
    return rate, se
