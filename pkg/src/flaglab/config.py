"""Run configuration for the command-line pipeline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .group import Backend, _as_backend
from .harmonics import ConfigurationError
from .measures import MeasureError, MeasureFamilySpec, build_measure
from .walk import WalkConfig

__all__ = ["SCHEMA_VERSION", "WalkSettings", "RunConfig", "load_config", "default_config"]

SCHEMA_VERSION = 1

MAX_CUTOFF = {Backend.SL2R: 1024, Backend.SL2C: 64}


@dataclass(frozen=True)
class WalkSettings:
    steps: int = 2000
    trajectories: int = 200
    burn_in: int = 1000
    cutoff: int = 5
    batches: int = 1
    lyapunov_steps: int = 2000
    lyapunov_trajectories: int = 20

    def __post_init__(self):
        if not self.steps > self.burn_in >= 0:
            raise ConfigurationError("walk: need steps > burn_in >= 0")
        if self.trajectories < 1 or self.lyapunov_trajectories < 1:
            raise ConfigurationError("walk: trajectory counts must be positive")
        if self.cutoff < 1 or self.batches < 1:
            raise ConfigurationError("walk: cutoff and batches must be positive")
        if self.lyapunov_steps < 1:
            raise ConfigurationError("walk: lyapunov_steps must be positive")

    def config(self, measure, seed: int) -> WalkConfig:
        return WalkConfig(measure, steps=self.steps, trajectories=self.trajectories,
                          burn_in=self.burn_in, seed=seed, cutoff=self.cutoff,
                          batches=self.batches)

    def lyapunov_config(self, measure, seed: int) -> WalkConfig:
        burn = min(self.burn_in, self.lyapunov_steps // 2)
        return WalkConfig(measure, steps=self.lyapunov_steps,
                          trajectories=self.lyapunov_trajectories, burn_in=burn,
                          seed=seed, cutoff=1)


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on.

    ``epsilons`` turns the run into a sweep over the scale of the measure
    family; each value gets its own output subdirectory.  ``lp_window`` is an
    inclusive block range, ``None`` for the default window.
    """

    backend: Backend = Backend.SL2R
    measure: MeasureFamilySpec = field(
        default_factory=lambda: MeasureFamilySpec("conjugated-pair", epsilon=0.25))
    cutoff: int = 64
    oversampling: float = 4.0
    solve_tol: float = 1e-8
    lp_window: tuple[int, int] | None = None
    gap_N: int = 4
    gap_doubling: bool = True
    walk: WalkSettings = field(default_factory=WalkSettings)
    output_dir: str = "out"
    seed: int = 0
    epsilons: tuple[float, ...] | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        backend = _as_backend(self.backend)
        object.__setattr__(self, "backend", backend)
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema version {self.schema_version}")
        if self.measure.backend is not backend:
            object.__setattr__(self, "measure", replace(self.measure, backend=backend))
        if not 1 <= self.cutoff <= MAX_CUTOFF[backend]:
            raise ConfigurationError(f"cutoff must lie in [1, {MAX_CUTOFF[backend]}] for {backend.value}")
        if not 2.0 <= self.oversampling <= 16.0:
            raise ConfigurationError("oversampling must lie in [2, 16]")
        if not 0 < self.solve_tol <= 1e-2:
            raise ConfigurationError("solve_tol must lie in (0, 1e-2]")
        if self.lp_window is not None:
            lo, hi = self.lp_window
            if not 0 <= lo < hi:
                raise ConfigurationError("lp_window must be an increasing block pair")
            object.__setattr__(self, "lp_window", (int(lo), int(hi)))
        if self.gap_N < 1:
            raise ConfigurationError("gap_N must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.epsilons is not None:
            eps = tuple(float(e) for e in self.epsilons)
            if not eps:
                raise ConfigurationError("epsilons must be nonempty when given")
            object.__setattr__(self, "epsilons", eps)
            for e in eps:
                self.measure.with_epsilon(e)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "backend": self.backend.value,
            "measure": self.measure.to_dict(),
            "cutoff": self.cutoff,
            "oversampling": self.oversampling,
            "solve_tol": self.solve_tol,
            "lp_window": list(self.lp_window) if self.lp_window else None,
            "gap_N": self.gap_N,
            "gap_doubling": self.gap_doubling,
            "walk": asdict(self.walk),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "epsilons": list(self.epsilons) if self.epsilons else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        try:
            if "measure" in d:
                m = dict(d["measure"])
                m.setdefault("backend", d.get("backend", "SL2R"))
                d["measure"] = MeasureFamilySpec.from_dict(m)
            if "walk" in d:
                d["walk"] = WalkSettings(**d["walk"])
            if d.get("lp_window") is not None:
                d["lp_window"] = tuple(d["lp_window"])
            if d.get("epsilons") is not None:
                d["epsilons"] = tuple(d["epsilons"])
            return cls(**d)
        except (TypeError, MeasureError) as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    # -- derived -------------------------------------------------------------

    def measure_specs(self) -> list[MeasureFamilySpec]:
        if self.epsilons is None:
            return [self.measure]
        return [self.measure.with_epsilon(e) for e in self.epsilons]

    def build(self, spec: MeasureFamilySpec | None = None):
        return build_measure(spec or self.measure)


def default_config() -> RunConfig:
    return RunConfig()


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    return RunConfig.from_dict(data)
