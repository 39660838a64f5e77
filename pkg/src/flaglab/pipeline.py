"""The end-to-end pipeline behind ``flaglab pipeline``.

Stages run in order: measure, assemble, density, lp, gap, walk, figures.
A failing stage is recorded in the manifest and the stages that depend on it
are skipped.  Every JSON and CSV payload is a pure function of the config and
seed; wall-clock timings appear only in the manifest.
"""

from __future__ import annotations

import logging
import platform
import time
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig
from .harmonics import BASIS_ORDER_VERSION
from .io import coefficients_csv, dumps_json, sha256_file, write_json, write_operator, write_text
from .measures import build_measure
from .transfer import (
    assemble_adjoint,
    assemble_markov,
    lp_spectrum,
    restricted_gap_estimate,
    stationary_density,
)
from .walk import compare_empirical_spectral, lyapunov_estimate, simulate_walk

__all__ = ["StageFailure", "RunState", "run_pipeline", "measure_stage", "density_stage"]

log = logging.getLogger(__name__)


class StageFailure(RuntimeError):
    """A stage finished but its result fails the stage's acceptance check."""


@dataclass
class RunState:
    out: Path
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def record(self, path: Path):
        self.files.append(Path(path))

    def write_json(self, rel: str, obj):
        self.record(write_json(self.out / rel, obj))

    def write_text(self, rel: str, text: str):
        self.record(write_text(self.out / rel, text))

    def stage(self, name: str, fn, *deps):
        """Run ``fn`` unless a dependency failed; returns its value or None."""
        if any(d is None for d in deps):
            self.skipped.append(name)
            return None
        t0 = time.perf_counter()
        try:
            return fn()
        except Exception as exc:  # recorded, not raised: the manifest is the report
            log.error("stage %s failed: %s", name, exc)
            self.failures.append({"stage": name, "error": f"{type(exc).__name__}: {exc}"})
            return None
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def _stamp(cfg: RunConfig, d: dict) -> dict:
    return {**d, "seed": cfg.seed, "basis_order_version": BASIS_ORDER_VERSION}


def measure_stage(spec):
    return build_measure(spec)


def density_stage(cfg: RunConfig, adjoint):
    d = stationary_density(adjoint=adjoint, tol=cfg.solve_tol)
    if not d.converged:
        raise StageFailure(f"density residual {d.residual:.3e} above {cfg.solve_tol:.1e}")
    return d


def density_payload(cfg: RunConfig, d) -> dict:
    return _stamp(cfg, {
        "cutoff": d.cutoff,
        "residual": d.residual,
        "tolerance": d.tolerance,
        "converged": d.converged,
        "mass": float(np.real(d.coefficients.values[0])),
        "grid_min": d.grid_min,
        "grid_max": d.grid_max,
        "positive": d.positive,
        "smallest_singular": d.smallest_singular,
        "second_singular": d.second_singular,
        "near_degenerate": d.near_degenerate,
    })


def _run_one(cfg: RunConfig, spec, st: RunState, prefix: str, threads: int):
    mu = st.stage(prefix + "measure", lambda: measure_stage(spec))
    if mu is not None:
        st.write_json(prefix + "measure.json", _stamp(cfg, {
            "spec": spec.to_dict(), "measure": mu.to_dict(),
            "epsilon": mu.epsilon, "digest": mu.digest()}))

    def assemble():
        T = assemble_markov(mu, cfg.cutoff, oversampling=cfg.oversampling, threads=threads)
        Ts = assemble_adjoint(mu, cfg.cutoff, oversampling=cfg.oversampling, threads=threads)
        for name, op in (("markov", T), ("adjoint", Ts)):
            for p in write_operator(st.out / f"{prefix}{name}.fslmat", op):
                st.record(p)
        return T, Ts

    ops = st.stage(prefix + "assemble", assemble, mu)
    T, Ts = ops if ops else (None, None)

    dens = st.stage(prefix + "density", lambda: density_stage(cfg, Ts), Ts)
    if dens is not None:
        st.write_text(prefix + "density.csv", coefficients_csv(dens.coefficients))
        st.write_json(prefix + "density.json", density_payload(cfg, dens))

    decay = st.stage(prefix + "lp", lambda: lp_spectrum(dens, cfg.lp_window), dens)
    if decay is not None:
        st.write_json(prefix + "decay.json", _stamp(cfg, decay.to_dict()))

    def gap():
        g = restricted_gap_estimate(mu, cfg.gap_N, cfg.cutoff, oversampling=cfg.oversampling,
                                    doubling=cfg.gap_doubling, threads=threads, operator=T)
        st.write_json(prefix + "gap.json", _stamp(cfg, g.to_dict()))
        return g

    st.stage(prefix + "gap", gap, T)

    def walk():
        moments = simulate_walk(cfg.walk.config(mu, cfg.seed), threads=threads)
        rate, se = lyapunov_estimate(cfg.walk.lyapunov_config(mu, cfg.seed), threads=threads)
        st.write_text(prefix + "walk.csv", moments.to_csv())
        payload = {"samples": moments.count, "lyapunov_rate": rate,
                   "lyapunov_standard_error": se}
        if dens is not None:
            payload["comparison"] = compare_empirical_spectral(moments, dens).to_dict()
        st.write_json(prefix + "walk.json", _stamp(cfg, payload))
        return moments

    st.stage(prefix + "walk", walk, mu)

    def figures():
        if decay is not None:
            st.record(plotting.plot_decay(decay, st.out / f"{prefix}decay.png",
                                          label=f"eps = {spec.epsilon}" if spec.epsilon else None))
        st.record(plotting.plot_density(dens, st.out / f"{prefix}density.png"))
        return True

    st.stage(prefix + "figures", figures, dens)
    return decay


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def run_pipeline(cfg: RunConfig, out: Path | str | None = None, threads: int = 1) -> tuple[dict, bool]:
    """Run every stage and write the manifest last; returns (manifest, ok)."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    st = RunState(out)
    # the copy lives inside the output directory, so its location is recorded as "."
    st.write_text("config.json", replace(cfg, output_dir=".").to_json())

    specs = cfg.measure_specs()
    decays = {}
    for spec in specs:
        prefix = "" if cfg.epsilons is None else f"eps_{spec.epsilon:g}/"
        decays[spec.epsilon] = _run_one(cfg, spec, st, prefix, threads)

    if cfg.epsilons is not None:
        def sweep():
            slopes = {e: (None if d is None else d.slope) for e, d in decays.items()}
            order = sorted(slopes, reverse=True)
            vals = [slopes[e] for e in order]
            ok = all(v is not None for v in vals) and all(
                abs(b) > abs(a) for a, b in zip(vals, vals[1:]))
            st.write_json("sweep.json", _stamp(cfg, {
                "epsilons": order, "slopes": vals, "abs_slope_strictly_increasing": ok}))
            if all(d is not None for d in decays.values()):
                st.record(plotting.plot_sweep(decays, out / "sweep.png"))
            if not ok:
                raise StageFailure("|slope| does not strictly increase as epsilon shrinks")
            return ok

        st.stage("sweep", sweep)

    ok = not st.failures
    manifest = {
        "config_hash": replace(cfg, output_dir=".").digest(),
        "seed": cfg.seed,
        "basis_order_version": BASIS_ORDER_VERSION,
        "versions": _versions(),
        "timings_seconds": {k: round(v, 4) for k, v in st.timings.items()},
        "created_unix": round(time.time(), 3),
        "threads": threads,
        "files": [{"path": p.relative_to(out).as_posix(), "sha256": sha256_file(p),
                   "bytes": p.stat().st_size} for p in st.files],
        "failures": st.failures,
        "skipped": st.skipped,
        "ok": ok,
    }
    write_text(out / "manifest.json", dumps_json(manifest))
    return manifest, ok
