"""Command-line entry point: ``flaglab <subcommand> [options]``.

Exit codes: 0 success, 1 a check or experiment failed, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, default_config, load_config
from .group import Backend, GroupElement, cartan_project, group_spec, iwasawa_decompose
from .harmonics import ConfigurationError
from .io import coefficients_csv, dumps_json, write_text
from .measures import MeasureError
from .pipeline import density_payload, run_pipeline
from .transfer import (
    QuadratureError,
    assemble_adjoint,
    lp_spectrum,
    restricted_gap_estimate,
    stationary_density,
)
from .verify import run_checks
from .walk import lyapunov_estimate, simulate_walk

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _perturbation(text: str):
    try:
        i, j, d = text.split(",")
        return int(i), int(j), float(d)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected I,J,DELTA") from exc


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--cutoff", type=_positive, help="basis cutoff")
    p.add_argument("--threads", type=_positive, default=1, help="worker threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flaglab",
        description="Stationary measures of random walks on flag manifolds of SL2(R) and SL2(C).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="Cartan and Iwasawa factors of a 2x2 matrix")
    p.add_argument("matrix", help='JSON matrix, e.g. "[[2,0],[0,0.5]]"; complex entries as [re, im]')
    p.add_argument("--backend", choices=[b.value for b in Backend])
    _common(p)

    for name, text in (("pipeline", "run every stage and write a manifest"),
                       ("gap", "restricted spectral gap estimate"),
                       ("density", "stationary density"),
                       ("lp", "Littlewood-Paley decay of the stationary density"),
                       ("walk", "Monte Carlo moments and Lyapunov rate")):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("verify", help="run the invariant suite")
    _common(p)
    p.add_argument("--perturb-entry", type=_perturbation, help=argparse.SUPPRESS)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.cutoff is not None:
        changes["cutoff"] = args.cutoff
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if changes:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **changes})
    return cfg


# ---------------------------------------------------------------------------
# decompose

def _parse_matrix(text: str, backend: str | None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed matrix: {exc}") from exc
    try:
        arr = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"malformed matrix: {exc}") from exc
    if arr.shape == (2, 2, 2):
        arr = arr[..., 0] + 1j * arr[..., 1]
    elif arr.shape != (2, 2):
        raise UsageError(f"malformed matrix: expected 2x2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError("malformed matrix: non-finite entries")
    b = Backend(backend) if backend else (Backend.SL2C if np.iscomplexobj(arr) else Backend.SL2R)
    det = arr[0, 0] * arr[1, 1] - arr[0, 1] * arr[1, 0]
    if abs(det - 1) > 1e-6:
        raise UsageError(f"matrix is not unimodular: det = {det}")
    return GroupElement(arr, b)


def _fmt_matrix(m) -> str:
    m = np.asarray(m)
    if np.iscomplexobj(m) and np.max(np.abs(m.imag)) > 0:
        rows = [", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in r) for r in m]
    else:
        rows = [", ".join(f"{z + 0.0:.6g}" for z in np.real(r)) for r in m]
    return "[" + "; ".join(rows) + "]"


def cmd_decompose(args) -> int:
    g = _parse_matrix(args.matrix, args.backend)
    h = group_spec(g.backend).h_norm
    c = cartan_project(g)
    w = iwasawa_decompose(g)
    print(f"backend            {g.backend.value}")
    print(f"cartan  k1         {_fmt_matrix(c.k1.matrix)}")
    print(f"cartan  t          {c.a_coordinate:.12g}")
    print(f"cartan  k2         {_fmt_matrix(c.k2.matrix)}")
    print(f"cartan  |kappa|    {c.a_coordinate * h:.12g}")
    print(f"iwasawa k          {_fmt_matrix(w.k.matrix)}")
    print(f"iwasawa t          {w.h_coordinate:.12g}")
    print(f"iwasawa n          {_fmt_matrix(w.n_matrix())}")
    print(f"iwasawa |H|        {abs(w.h_coordinate) * h:.12g}")
    print(f"reconstruction     cartan {np.max(np.abs(c.reconstruct() - g.matrix)):.3e}"
          f"  iwasawa {np.max(np.abs(w.reconstruct() - g.matrix)):.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# single-stage commands

def _density(cfg: RunConfig, threads: int):
    mu = cfg.build()
    Ts = assemble_adjoint(mu, cfg.cutoff, oversampling=cfg.oversampling, threads=threads)
    return mu, stationary_density(adjoint=Ts, tol=cfg.solve_tol)


def _emit(out: Path | None, name: str, payload: dict):
    text = dumps_json(payload)
    sys.stdout.write(text)
    if out is not None:
        write_text(out / name, text)


def cmd_density(args, cfg: RunConfig) -> int:
    _, d = _density(cfg, args.threads)
    if args.out is not None:
        write_text(args.out / "density.csv", coefficients_csv(d.coefficients))
    _emit(args.out, "density.json", density_payload(cfg, d))
    return EXIT_OK if d.converged and d.positive else EXIT_FAIL


def cmd_lp(args, cfg: RunConfig) -> int:
    _, d = _density(cfg, args.threads)
    rep = lp_spectrum(d, cfg.lp_window)
    _emit(args.out, "decay.json", {**rep.to_dict(), "seed": cfg.seed})
    return EXIT_OK if d.converged else EXIT_FAIL


def cmd_gap(args, cfg: RunConfig) -> int:
    rep = restricted_gap_estimate(cfg.build(), cfg.gap_N, cfg.cutoff,
                                  oversampling=cfg.oversampling, doubling=cfg.gap_doubling,
                                  threads=args.threads)
    _emit(args.out, "gap.json", {**rep.to_dict(), "seed": cfg.seed})
    return EXIT_OK if rep.converged else EXIT_FAIL


def cmd_walk(args, cfg: RunConfig) -> int:
    mu = cfg.build()
    m = simulate_walk(cfg.walk.config(mu, cfg.seed), threads=args.threads)
    rate, se = lyapunov_estimate(cfg.walk.lyapunov_config(mu, cfg.seed), threads=args.threads)
    payload = {"samples": m.count, "lyapunov_rate": rate, "lyapunov_standard_error": se,
               "seed": cfg.seed}
    if args.out is not None:
        write_text(args.out / "walk.csv", m.to_csv())
    else:
        sys.stdout.write(m.to_csv())
    _emit(args.out, "walk.json", payload)
    return EXIT_OK


def cmd_pipeline(args, cfg: RunConfig) -> int:
    manifest, ok = run_pipeline(cfg, cfg.output_dir, threads=args.threads)
    for f in manifest["failures"]:
        print(f"stage {f['stage']} failed: {f['error']}", file=sys.stderr)
    print(f"wrote {len(manifest['files'])} files and manifest.json to {cfg.output_dir}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    def echo(r):
        print(f"{r.summary_line()}  [{r.seconds:.2f} s]", flush=True)

    results = run_checks(perturb=args.perturb_entry, echo=echo)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "decompose":
            return cmd_decompose(args)
        if args.command == "verify":
            return cmd_verify(args)
        cfg = _resolve_config(args)
        handler = {"pipeline": cmd_pipeline, "gap": cmd_gap, "density": cmd_density,
                   "lp": cmd_lp, "walk": cmd_walk}[args.command]
        return handler(args, cfg)
    except (UsageError, ConfigurationError, MeasureError) as exc:
        print(f"flaglab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuadratureError as exc:
        print(f"flaglab: quadrature check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
