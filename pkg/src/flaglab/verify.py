"""The invariant suite behind ``flaglab verify``.

Every check uses fixed seeds and default sizes, so two runs print the same
summary.  ``perturb`` injects an offset into one entry of the assembled
Markov matrix before the adjointness comparison; it exists to show that the
check can fail.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .group import (
    Backend,
    cartan_norm,
    cartan_project,
    group_spec,
    iwasawa_cocycle,
    iwasawa_decompose,
    random_element,
)
from .harmonics import (
    FlagPoint,
    FunctionCoefficients,
    act_on_flag,
    basis_matrix,
    bernstein_check,
    block_norms,
    label_index,
    labels,
    quadrature_for,
    random_coefficients,
    random_points,
)
from .io import decode_matrix, encode_matrix
from .measures import MeasureFamilySpec, build_measure
from .transfer import (
    assemble_adjoint,
    assemble_markov,
    pi_act,
    stationary_density,
)
from .walk import WalkConfig, simulate_walk

__all__ = ["CheckResult", "CHECKS", "run_checks", "adjointness_error", "cocycle_errors"]

BACKENDS = (Backend.SL2R, Backend.SL2C)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def summary_line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# Reusable measurements (also used by the test suite)

def cocycle_errors(backend, n: int, rng, kappa_max: float = 2.0) -> tuple[float, float]:
    """Max cocycle residual and max excess of |sigma(g, xi)| over |kappa(g)|."""
    h = group_spec(backend).h_norm
    resid = excess = 0.0
    for _ in range(n):
        g = random_element(backend, rng, kappa_max)
        k = random_element(backend, rng, kappa_max)
        xi = FlagPoint(backend, random_points(backend, 1, rng)[0])
        lhs = iwasawa_cocycle(g @ k, xi).coordinates[0]
        rhs = iwasawa_cocycle(g, act_on_flag(k, xi)).coordinates[0] + \
            iwasawa_cocycle(k, xi).coordinates[0]
        resid = max(resid, abs(lhs - rhs) * h)
        s = abs(iwasawa_cocycle(g, xi).coordinates[0]) * h
        excess = max(excess, s - cartan_norm(g))
    return resid, excess


def adjointness_error(T, Ts, n_pairs: int, rng) -> float:
    """Max relative |<Tu, v> - <u, T* v>| over random unit pairs."""
    worst = 0.0
    for _ in range(n_pairs):
        u = random_coefficients(T.backend, T.cutoff, rng).values
        v = random_coefficients(T.backend, T.cutoff, rng).values
        lhs = np.vdot(v, T.matrix @ u)
        rhs = np.vdot(Ts.matrix @ v, u)
        scale = max(abs(lhs), np.linalg.norm(T.matrix @ u) * np.linalg.norm(v), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return float(worst)


def _fmt(x: float) -> str:
    return f"{x:.2e}"


# ---------------------------------------------------------------------------
# Checks: each returns (passed, detail)

def check_cocycle(ctx):
    worst_r = worst_e = 0.0
    for b in BACKENDS:
        r, e = cocycle_errors(b, 100, np.random.default_rng(1))
        worst_r, worst_e = max(worst_r, r), max(worst_e, e)
    return worst_r <= 1e-9 and worst_e <= 1e-9, \
        f"residual {_fmt(worst_r)}, bound excess {_fmt(worst_e)}"


def check_decompositions(ctx):
    rng = np.random.default_rng(2)
    worst = 0.0
    for b in BACKENDS:
        for _ in range(100):
            g = random_element(b, rng, 3.0)
            worst = max(worst, np.max(np.abs(cartan_project(g).reconstruct() - g.matrix)),
                        np.max(np.abs(iwasawa_decompose(g).reconstruct() - g.matrix)))
            r = np.linalg.qr(g.matrix)[1]
            worst = max(worst, abs(np.log(abs(r[0, 0])) - iwasawa_decompose(g).h_coordinate))
    return worst <= 1e-10, f"reconstruction error {_fmt(worst)}"


def check_orthonormality(ctx):
    worst = 0.0
    for b, cut in ((Backend.SL2R, 32), (Backend.SL2C, 12)):
        rule = quadrature_for(b, cut)
        E = basis_matrix(b, cut, rule.nodes)
        G = E.conj().T @ (rule.weights[:, None] * E)
        worst = max(worst, np.max(np.abs(G - np.eye(len(G)))))
    return worst <= 1e-12, f"Gram deviation {_fmt(worst)}"


def check_parseval(ctx):
    rng = np.random.default_rng(3)
    worst = 0.0
    for b, cut in ((Backend.SL2R, 64), (Backend.SL2C, 16)):
        u = random_coefficients(b, cut, rng)
        tot = sum(v * v for v in block_norms(u).values())
        worst = max(worst, abs(tot - u.norm() ** 2))
    return worst <= 1e-12, f"Parseval defect {_fmt(worst)}"


def check_bernstein(ctx):
    rng = np.random.default_rng(4)
    violations = 0
    for b in BACKENDS:
        for _ in range(20):
            tau = int(rng.integers(0, 12))
            u = isotypic_random(b, tau, rng)
            sup, bound = bernstein_check(u)
            violations += sup > bound * (1 + 1e-12)
    return violations == 0, f"{violations} violations in 40 functions"


def isotypic_random(backend, tau: int, rng) -> FunctionCoefficients:
    u = FunctionCoefficients.zeros(backend, max(tau, 1))
    v = u.values.copy()
    idx = [label_index(backend, lab.tau, lab.inner_index)
           for lab in labels(backend, max(tau, 1)) if lab.tau == tau]
    v[idx] = rng.standard_normal(len(idx))
    if backend is Backend.SL2C:
        v[idx] = v[idx] + 1j * rng.standard_normal(len(idx))
    return FunctionCoefficients(backend, u.cutoff, v / np.linalg.norm(v))


def check_measures(ctx):
    ok = True
    prev = 0.0
    for eps in (0.1, 0.2, 0.4, 0.8):
        mu = build_measure(MeasureFamilySpec("exp-basis-family", epsilon=eps))
        ok &= mu.symmetric and mu.epsilon > prev
        prev = mu.epsilon
    rot = build_measure(MeasureFamilySpec("rotation-pair", angle=1.0))
    ok &= rot.epsilon <= 1e-12
    return bool(ok), "exp-basis family symmetric with increasing epsilon; rotation pair compact"


def check_rotation_oracle(ctx):
    cut = 64
    mu = build_measure(MeasureFamilySpec("rotation-pair", angle=1.0))
    T = assemble_markov(mu, cut)
    expected = np.diag([1.0] + [np.cos(2 * n * 1.0) for n in range(1, cut + 1) for _ in (0, 1)])
    err = float(np.max(np.abs(T.matrix - expected)))
    return err <= 1e-10, f"max entry error {_fmt(err)}"


def check_adjointness(ctx):
    rng = np.random.default_rng(5)
    worst = 0.0
    for b, cut in ((Backend.SL2R, 32), (Backend.SL2C, 8)):
        mu = build_measure(MeasureFamilySpec("conjugated-pair", backend=b, epsilon=0.25))
        T = assemble_markov(mu, cut)
        Ts = assemble_adjoint(mu, cut)
        if ctx.get("perturb") and b is Backend.SL2R:
            i, j, delta = ctx["perturb"]
            m = T.matrix.copy()
            m[i, j] += delta
            T = type(T)(T.backend, T.cutoff, m, T.adjoint, T.band_limit, T.measure_hash)
        worst = max(worst, adjointness_error(T, Ts, 20, rng))
    return worst <= 1e-8, f"relative error {_fmt(worst)}"


def check_operator_bounds(ctx):
    worst_const = 0.0
    ok = True
    for b, cut in ((Backend.SL2R, 32), (Backend.SL2C, 8)):
        mu = build_measure(MeasureFamilySpec("conjugated-pair", backend=b, epsilon=0.5))
        T = assemble_markov(mu, cut)
        e0 = np.zeros(T.matrix.shape[0])
        e0[0] = 1
        worst_const = max(worst_const, np.max(np.abs(T.matrix[:, 0] - e0)))
        bound = np.exp(group_spec(b).rho_norm * mu.epsilon) + 1e-6
        ok &= T.top_singular_value() <= bound
    return bool(ok) and worst_const <= 1e-12, \
        f"constant column error {_fmt(worst_const)}, norm bound {'held' if ok else 'broken'}"


def check_density(ctx):
    rot = build_measure(MeasureFamilySpec("rotation-pair", angle=1.0))
    d0 = stationary_density(rot, 32)
    const_err = float(np.max(np.abs(d0.coefficients.values[1:])))
    mu = build_measure(MeasureFamilySpec("conjugated-pair", epsilon=0.25))
    d = stationary_density(mu, 64)
    ok = d0.residual <= 1e-10 and const_err <= 1e-10 and d.converged and d.positive
    return ok, f"rotation residual {_fmt(d0.residual)}, conjugated-pair residual " \
               f"{_fmt(d.residual)}, grid min {d.grid_min:.3f}"


def check_unitarity(ctx):
    rng = np.random.default_rng(6)
    worst = 0.0
    ok = True
    for b in BACKENDS:
        for _ in range(3):
            g = random_element(b, rng, 0.5, exact=True)
            u = random_coefficients(b, 2, rng)
            e1 = abs(pi_act(g, u, 8, measure_leak=False).coefficients.norm() - 1)
            e2 = abs(pi_act(g, u, 16, measure_leak=False).coefficients.norm() - 1)
            ok &= e1 <= 1e-3 and e2 < e1
            worst = max(worst, e1)
    return bool(ok), f"worst error at cutoff 8 {_fmt(worst)}"


def check_walk(ctx):
    mu = build_measure(MeasureFamilySpec("conjugated-pair", epsilon=0.25))
    cfg = WalkConfig(mu, steps=400, trajectories=80, burn_in=100, seed=11)
    a = simulate_walk(cfg, threads=1)
    b = simulate_walk(cfg, threads=3)
    on = bool(np.all((a.final_points >= 0) & (a.final_points < np.pi)))
    same = a.to_csv() == b.to_csv()
    return same and on, f"thread-invariant {same}, on manifold {on}"


def check_formats(ctx):
    rng = np.random.default_rng(7)
    ok = True
    cplx = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    for m in (rng.standard_normal((5, 7)), cplx):
        back, adj = decode_matrix(encode_matrix(m, True))
        ok &= bool(np.array_equal(back, m)) and adj
    cfg = RunConfig()
    ok &= RunConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    return bool(ok), "matrix and config round trips"


CHECKS = (
    ("group.cocycle", check_cocycle),
    ("group.decompositions", check_decompositions),
    ("harmonics.orthonormality", check_orthonormality),
    ("harmonics.parseval", check_parseval),
    ("harmonics.bernstein", check_bernstein),
    ("measures.families", check_measures),
    ("transfer.rotation-oracle", check_rotation_oracle),
    ("transfer.adjointness", check_adjointness),
    ("transfer.operator-bounds", check_operator_bounds),
    ("transfer.density", check_density),
    ("transfer.unitarity", check_unitarity),
    ("walk.determinism", check_walk),
    ("io.round-trips", check_formats),
)


def run_checks(perturb=None, only=None, echo=None) -> list[CheckResult]:
    ctx = {"perturb": perturb}
    out = []
    for name, fn in CHECKS:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(ctx)
        except Exception as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(passed), detail, time.perf_counter() - t0)
        if echo:
            echo(res)
        out.append(res)
    return out
