"""Finitely supported measures on the group and the candidate families built from them."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .group import (
    AlgebraVector,
    Backend,
    GroupElement,
    _as_backend,
    algebra_basis,
    cartan_norm,
    exp_algebra,
    group_spec,
    killing_norm,
    rotation,
)

__all__ = [
    "MeasureError",
    "SupportMeasure",
    "MeasureFamilySpec",
    "FAMILY_KINDS",
    "build_measure",
    "symmetrize",
    "dirac",
    "default_conjugators",
]

FAMILY_KINDS = ("explicit-atoms", "exp-basis-family", "rotation-pair", "conjugated-pair")

# matrices closer than this are treated as the same atom
MERGE_TOL = 1e-12


class MeasureError(ValueError):
    pass


def _matrix_hex(m: np.ndarray) -> list:
    return [[float(z).hex() for z in np.atleast_1d(x).view(float)] for x in m.ravel()]


@dataclass(frozen=True, eq=False)
class SupportMeasure:
    atoms: tuple
    weights: np.ndarray
    symmetric: bool = False
    epsilon: float = field(init=False)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise MeasureError("measure needs at least one atom")
        backend = atoms[0].backend
        if any(g.backend is not backend for g in atoms):
            raise MeasureError("atoms mix backends")
        w = np.asarray(self.weights, dtype=float).copy()
        if w.shape != (len(atoms),) or np.any(w <= 0):
            raise MeasureError("weights must be positive, one per atom")
        if abs(w.sum() - 1.0) > 1e-12:
            raise MeasureError(f"weights sum to {w.sum()!r}, not 1")
        for g in atoms:
            if abs(g.det() - 1) > 1e-12:
                raise MeasureError(f"determinant drift {abs(g.det() - 1):.2e} on {g!r}")
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        if self.symmetric and not _is_symmetric(atoms, w):
            raise MeasureError("symmetric flag set but the inverse atoms are missing")
        object.__setattr__(self, "epsilon", max(cartan_norm(g) for g in atoms))

    @property
    def backend(self) -> Backend:
        return self.atoms[0].backend

    def __len__(self):
        return len(self.atoms)

    def matrices(self) -> np.ndarray:
        return np.stack([g.matrix for g in self.atoms])

    def to_dict(self) -> dict:
        def enc(m):
            if self.backend is Backend.SL2R:
                return m.tolist()
            return [[[z.real, z.imag] for z in row] for row in m]
        return {
            "backend": self.backend.value,
            "atoms": [enc(g.matrix) for g in self.atoms],
            "weights": self.weights.tolist(),
            "symmetric": self.symmetric,
        }

    def digest(self) -> str:
        """Stable content hash over exact float bits of atoms and weights."""
        payload = {
            "backend": self.backend.value,
            "atoms": [_matrix_hex(g.matrix) for g in self.atoms],
            "weights": [float(x).hex() for x in self.weights],
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _find(atoms, m: np.ndarray) -> int:
    for i, g in enumerate(atoms):
        if np.max(np.abs(g.matrix - m)) <= MERGE_TOL:
            return i
    return -1


def _is_symmetric(atoms, w) -> bool:
    for g, wg in zip(atoms, w):
        j = _find(atoms, g.inv().matrix)
        if j < 0 or abs(w[j] - wg) > 1e-12:
            return False
    return True


def dirac(g: GroupElement) -> SupportMeasure:
    return SupportMeasure((g,), np.ones(1), symmetric=g.allclose(g.inv(), MERGE_TOL))


def symmetrize(mu: SupportMeasure) -> SupportMeasure:
    """(mu + mu-check) / 2, merging atoms that agree entrywise to 1e-12."""
    atoms: list[GroupElement] = []
    weights: list[float] = []
    for g, w in zip(mu.atoms, mu.weights):
        for h in (g, g.inv()):
            j = _find(atoms, h.matrix)
            if j < 0:
                atoms.append(h)
                weights.append(0.5 * w)
            else:
                weights[j] += 0.5 * w
    w = np.array(weights)
    return SupportMeasure(tuple(atoms), w / w.sum(), symmetric=True)


@dataclass(frozen=True)
class MeasureFamilySpec:
    """Parameters of a measure family.

    kind: one of FAMILY_KINDS.
    epsilon: scale of exp-basis and conjugated-pair families (> 0).
    angle: rotation angle of the rotation pair.
    element: algebra coordinates of the conjugated-pair generator; defaults to
        the Cartan generator scaled to unit Killing norm.
    conjugator: list of 2x2 matrices h, one conjugated pair each;
        defaults to :func:`default_conjugators`.
    atoms / weights: explicit atoms (list of 2x2 matrices) and weights.
    """

    kind: str
    backend: Backend = Backend.SL2R
    epsilon: float | None = None
    angle: float | None = None
    element: tuple | None = None
    conjugator: tuple | None = None
    atoms: tuple | None = None
    weights: tuple | None = None
    symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "backend", _as_backend(self.backend))
        if self.kind not in FAMILY_KINDS:
            raise MeasureError(f"unknown family kind {self.kind!r}")
        if self.kind in ("exp-basis-family", "conjugated-pair"):
            if self.epsilon is None or not np.isfinite(self.epsilon) or self.epsilon < 0:
                raise MeasureError("epsilon must be a finite nonnegative number")
            if self.epsilon == 0:
                raise MeasureError("epsilon = 0 collapses every atom onto the identity")
            if self.epsilon > 5:
                raise MeasureError("epsilon outside the supported range (0, 5]")
        if self.kind == "rotation-pair" and self.angle is None:
            raise MeasureError("rotation-pair needs an angle")
        if self.kind == "explicit-atoms" and not self.atoms:
            raise MeasureError("explicit-atoms needs atoms")

    def with_epsilon(self, eps: float) -> "MeasureFamilySpec":
        d = dict(self.__dict__)
        d["epsilon"] = eps
        return MeasureFamilySpec(**d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "backend": self.backend.value}
        for key in ("epsilon", "angle", "element", "conjugator", "atoms", "weights"):
            val = getattr(self, key)
            if val is not None:
                out[key] = _listify(val)
        if self.symmetric:
            out["symmetric"] = True
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureFamilySpec":
        d = dict(d)
        unknown = set(d) - {"kind", "backend", "epsilon", "angle", "element",
                            "conjugator", "atoms", "weights", "symmetric"}
        if unknown:
            raise MeasureError(f"unknown measure keys {sorted(unknown)}")
        for key in ("element", "conjugator", "atoms", "weights"):
            if d.get(key) is not None:
                d[key] = _tuplify(d[key])
        return cls(**d)


def _listify(x):
    if isinstance(x, (tuple, list)):
        return [_listify(y) for y in x]
    return x


def _tuplify(x):
    if isinstance(x, (tuple, list)):
        return tuple(_tuplify(y) for y in x)
    return x


def _parse_matrix(m, backend: Backend) -> np.ndarray:
    """Accept nested numbers, or [re, im] pairs for complex entries."""
    arr = np.array(_listify(m), dtype=float)
    if arr.shape == (2, 2):
        return arr.astype(backend.dtype)
    if arr.shape == (2, 2, 2):
        return arr[..., 0] + 1j * arr[..., 1]
    raise MeasureError(f"cannot read a 2x2 matrix from shape {arr.shape}")


def _pm_pair(X: AlgebraVector, eps: float):
    return exp_algebra(eps * X), exp_algebra(-eps * X)


def build_measure(spec: MeasureFamilySpec) -> SupportMeasure:
    backend = spec.backend
    if spec.kind == "explicit-atoms":
        atoms = tuple(GroupElement(_parse_matrix(m, backend), backend) for m in spec.atoms)
        w = np.full(len(atoms), 1.0 / len(atoms)) if spec.weights is None else np.array(spec.weights, float)
        return SupportMeasure(atoms, w / w.sum(), symmetric=spec.symmetric)

    if spec.kind == "rotation-pair":
        atoms = (rotation(spec.angle, backend), rotation(-spec.angle, backend))
        return SupportMeasure(atoms, np.full(2, 0.5), symmetric=True)

    eps = float(spec.epsilon)
    if spec.kind == "exp-basis-family":
        atoms = []
        for X in algebra_basis(backend):
            atoms.extend(_pm_pair(AlgebraVector.from_matrix(backend, X), eps))
        return SupportMeasure(tuple(atoms), np.full(len(atoms), 1.0 / len(atoms)), symmetric=True)

    # conjugated-pair: exp(+-eps X) together with h exp(+-eps X) h^-1 for each conjugator h
    if spec.element is None:
        X = AlgebraVector.cartan(backend, 1.0 / group_spec(backend).h_norm)
    else:
        X = AlgebraVector(backend, np.array(spec.element, dtype=float))
        X = X * (1.0 / killing_norm(X))
    a, a_inv = _pm_pair(X, eps)
    atoms = [a, a_inv]
    for h in _conjugators(spec):
        atoms.extend([h @ a @ h.inv(), h @ a_inv @ h.inv()])
    return SupportMeasure(tuple(atoms), np.full(len(atoms), 1.0 / len(atoms)), symmetric=True)


def default_conjugators(backend) -> list[GroupElement]:
    """rotation(1.0), plus an x-axis rotation for SL2C.

    On the sphere, a K-conjugate of a hyperbolic element of the p-part always
    shares an invariant great circle with it, so a single conjugator would
    confine the walk to a copy of P^1.
    """
    backend = _as_backend(backend)
    hs = [rotation(1.0, backend)]
    if backend is Backend.SL2C:
        c, s = np.cos(0.8), np.sin(0.8)
        hs.append(GroupElement(np.array([[c, 1j * s], [1j * s, c]]), backend))
    return hs


def _conjugators(spec: MeasureFamilySpec) -> list[GroupElement]:
    if spec.conjugator is None:
        return default_conjugators(spec.backend)
    return [GroupElement(_parse_matrix(m, spec.backend), spec.backend) for m in spec.conjugator]
