"""Lie-theoretic primitives for SL2(R) and SL2(C).

Both groups are rank one: the Cartan subalgebra is spanned by H = diag(1, -1),
so Cartan projections and Iwasawa components are carried as a single real
coordinate t standing for diag(t, -t).

The maximal compact subgroups are SO(2) and SU(2).  The flag manifold is the
projective line, and a flag point is represented by a unit vector ``v`` on the
line it spans (a real 2-vector for SL2R, a spinor in C^2 for SL2C).  The compact
representative of the flag point is the element of K whose first column is v.

Cocycle convention
------------------
The Iwasawa cocycle is ``sigma(g, kP) = H(g k)``, which is ``log |g v|`` for the
unit vector ``v = k e1``.  This is the convention under which both the cocycle
identity ``sigma(gh, x) = sigma(g, h x) + sigma(h, x)`` and the change of
variables ``d(g^-1)_* m / dm (x) = exp(-2 rho(sigma(g, x)))`` hold; the variant
``H(g k^-1)`` breaks the cocycle identity (see ``tests/test_group.py``).
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "Backend",
    "GroupSpec",
    "GroupElement",
    "AlgebraVector",
    "CartanFactors",
    "IwasawaFactors",
    "group_spec",
    "algebra_basis",
    "killing_norm",
    "cartan_project",
    "cartan_coordinate",
    "cartan_norm",
    "iwasawa_decompose",
    "iwasawa_cocycle",
    "radon_nikodym_weight",
    "log_radon_nikodym_weight",
    "compact_representative",
    "exp_algebra",
    "rotation",
    "identity",
    "random_compact",
    "random_element",
]


class Backend(str, enum.Enum):
    SL2R = "SL2R"
    SL2C = "SL2C"

    @property
    def dtype(self):
        return np.float64 if self is Backend.SL2R else np.complex128


def _as_backend(backend) -> Backend:
    return backend if isinstance(backend, Backend) else Backend(str(backend).upper())


# ---------------------------------------------------------------------------
# Lie algebra and Killing form

def algebra_basis(backend) -> list[np.ndarray]:
    """Fixed ordered real basis of the Lie algebra.

    SL2R: H, E, F.  SL2C (as a real Lie algebra): H, E, F, iH, iE, iF.
    """
    backend = _as_backend(backend)
    H = np.array([[1.0, 0.0], [0.0, -1.0]])
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    F = np.array([[0.0, 0.0], [1.0, 0.0]])
    if backend is Backend.SL2R:
        return [H, E, F]
    real = [X.astype(complex) for X in (H, E, F)]
    return real + [1j * X for X in real]


def _coordinates(backend: Backend, Z: np.ndarray) -> np.ndarray:
    """Real coordinates of a traceless 2x2 matrix in :func:`algebra_basis`."""
    c = np.array([0.5 * (Z[0, 0] - Z[1, 1]), Z[0, 1], Z[1, 0]])
    if backend is Backend.SL2R:
        return np.real(c).astype(float)
    return np.concatenate([c.real, c.imag])


def _ad_matrices(backend: Backend) -> list[np.ndarray]:
    basis = algebra_basis(backend)
    return [
        np.column_stack([_coordinates(backend, X @ Y - Y @ X) for Y in basis])
        for X in basis
    ]


def _cartan_involution(X: np.ndarray) -> np.ndarray:
    return -X.conj().T


@dataclass(frozen=True)
class GroupSpec:
    backend: Backend
    rank_of_compact: int
    killing_gram: np.ndarray
    rho_coefficient: float

    @property
    def h_norm(self) -> float:
        """Killing norm of the unit Cartan generator diag(1, -1)."""
        return float(np.sqrt(self.killing_gram[0, 0]))

    @property
    def rho_norm(self) -> float:
        """Dual norm of rho on the one-dimensional Cartan subalgebra."""
        return self.rho_coefficient / self.h_norm

    @property
    def dim(self) -> int:
        return self.killing_gram.shape[0]


@functools.lru_cache(maxsize=None)
def group_spec(backend) -> GroupSpec:
    """Build the backend constants from ad-matrices.

    The Gram matrix of <X, Y> = -B(X, theta Y) with B(X, Y) = tr(ad X ad Y) and
    rho(H) = half the sum of the positive eigenvalues of ad H (counted with
    real multiplicity) are both computed here rather than hard-coded.
    """
    backend = _as_backend(backend)
    basis = algebra_basis(backend)
    ads = _ad_matrices(backend)
    theta_ads = []
    for X in basis:
        tX = _coordinates(backend, _cartan_involution(X))
        theta_ads.append(sum(c * A for c, A in zip(tX, ads)))
    gram = np.array([[-np.trace(A @ TB) for TB in theta_ads] for A in ads])
    gram = 0.5 * (gram + gram.T)
    eig = np.linalg.eigvals(ads[0]).real
    rho = 0.5 * float(np.sum(eig[eig > 1e-9]))
    spec = GroupSpec(backend=backend, rank_of_compact=1, killing_gram=gram,
                     rho_coefficient=rho)
    gram.setflags(write=False)
    if np.linalg.eigvalsh(gram).min() <= 0 or rho <= 0:
        raise RuntimeError(f"degenerate Killing data for {backend.value}")
    return spec


@dataclass(frozen=True)
class AlgebraVector:
    """Real coordinates in the fixed algebra basis."""

    backend: Backend
    coordinates: np.ndarray

    @classmethod
    def cartan(cls, backend, t: float) -> "AlgebraVector":
        backend = _as_backend(backend)
        c = np.zeros(group_spec(backend).dim)
        c[0] = t
        return cls(backend, c)

    @classmethod
    def from_matrix(cls, backend, Z) -> "AlgebraVector":
        backend = _as_backend(backend)
        return cls(backend, _coordinates(backend, np.asarray(Z)))

    def matrix(self) -> np.ndarray:
        return sum(c * X for c, X in zip(self.coordinates, algebra_basis(self.backend)))

    def __mul__(self, c: float) -> "AlgebraVector":
        return AlgebraVector(self.backend, c * np.asarray(self.coordinates, float))

    __rmul__ = __mul__


def killing_norm(x: AlgebraVector) -> float:
    gram = group_spec(x.backend).killing_gram
    c = np.asarray(x.coordinates, dtype=float)
    return float(np.sqrt(max(c @ gram @ c, 0.0)))


# ---------------------------------------------------------------------------
# Group elements

@dataclass(frozen=True, eq=False)
class GroupElement:
    """A unimodular 2x2 matrix, renormalized by sqrt(det) on construction."""

    matrix: np.ndarray
    backend: Backend = Backend.SL2R

    def __post_init__(self):
        backend = _as_backend(self.backend)
        m = np.array(self.matrix, dtype=backend.dtype)
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise ValueError("group element must be a finite 2x2 matrix")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if backend is Backend.SL2R:
            if not det > 0:
                raise ValueError(f"SL2R element needs a positive determinant, got {det}")
            m = m / np.sqrt(det)
        else:
            if abs(det) == 0:
                raise ValueError("singular matrix")
            m = m / np.sqrt(complex(det))
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "backend", backend)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.matrix @ other.matrix, self.backend)

    def inv(self) -> "GroupElement":
        a, b, c, d = self.matrix.ravel()
        return GroupElement(np.array([[d, -b], [-c, a]]), self.backend)

    def det(self):
        m = self.matrix
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    def is_compact(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(2))) <= tol)

    def allclose(self, other: "GroupElement", tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= tol)

    def __repr__(self):
        return f"GroupElement({self.backend.value}, {self.matrix.tolist()!r})"


def identity(backend) -> GroupElement:
    return GroupElement(np.eye(2), _as_backend(backend))


def rotation(phi: float, backend=Backend.SL2R) -> GroupElement:
    c, s = np.cos(phi), np.sin(phi)
    return GroupElement(np.array([[c, -s], [s, c]]), _as_backend(backend))


def exp_algebra(x, backend=None) -> GroupElement:
    """exp of an algebra element given as an :class:`AlgebraVector` or matrix."""
    if isinstance(x, AlgebraVector):
        backend, Z = x.backend, x.matrix()
    else:
        Z = np.asarray(x)
        backend = _as_backend(backend or (Backend.SL2C if np.iscomplexobj(Z) else Backend.SL2R))
    return GroupElement(scipy.linalg.expm(Z), backend)


# ---------------------------------------------------------------------------
# Decompositions

@dataclass(frozen=True)
class CartanFactors:
    k1: GroupElement
    a_coordinate: float
    k2: GroupElement

    def reconstruct(self) -> np.ndarray:
        t = self.a_coordinate
        return self.k1.matrix @ np.diag([np.exp(t), np.exp(-t)]) @ self.k2.matrix

    def kappa(self) -> AlgebraVector:
        return AlgebraVector.cartan(self.k1.backend, self.a_coordinate)


@dataclass(frozen=True)
class IwasawaFactors:
    k: GroupElement
    h_coordinate: float
    n_upper: complex | float

    def n_matrix(self) -> np.ndarray:
        return np.array([[1.0, self.n_upper], [0.0, 1.0]], dtype=self.k.backend.dtype)

    def reconstruct(self) -> np.ndarray:
        t = self.h_coordinate
        return self.k.matrix @ np.diag([np.exp(t), np.exp(-t)]) @ self.n_matrix()

    def h(self) -> AlgebraVector:
        return AlgebraVector.cartan(self.k.backend, self.h_coordinate)


def _det_one_columns(U: np.ndarray, backend: Backend) -> np.ndarray:
    # scale a unitary / orthogonal matrix into SU(2) / SO(2)
    det = U[0, 0] * U[1, 1] - U[0, 1] * U[1, 0]
    if backend is Backend.SL2R:
        if det < 0:
            U = U.copy()
            U[:, 1] *= -1
        return U
    return U / np.sqrt(complex(det))


def cartan_project(g: GroupElement) -> CartanFactors:
    """KA+K factorization g = k1 exp(diag(t, -t)) k2 with t >= 0.

    For g in K the factorization is not unique; (g, 0, e) is returned.
    """
    backend = g.backend
    if g.is_compact():
        return CartanFactors(g, 0.0, identity(backend))
    try:
        U, s, Vh = np.linalg.svd(g.matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - 2x2 SVD always converges
        raise ArithmeticError(f"singular value decomposition failed for {g!r}") from exc
    t = 0.5 * (np.log(s[0]) - np.log(s[1]))
    if backend is Backend.SL2R:
        if np.linalg.det(U) < 0:
            U = U.copy()
            Vh = Vh.copy()
            U[:, 1] *= -1
            Vh[1, :] *= -1
    else:
        U = _det_one_columns(U, backend)
        Vh = _det_one_columns(Vh, backend)
        # k1 a k2 may now differ from g by the central sign -1
        if np.real(np.vdot((U * s) @ Vh, g.matrix)) < 0:
            U = -U
    return CartanFactors(GroupElement(U, backend), float(t), GroupElement(Vh, backend))


def cartan_coordinate(mats: np.ndarray) -> np.ndarray:
    """Vectorized log of the largest singular value of a stack of 2x2 matrices."""
    mats = np.asarray(mats)
    s = np.linalg.svd(mats, compute_uv=False)
    return np.log(s[..., 0])


def cartan_norm(g: GroupElement) -> float:
    """Killing norm of the Cartan projection."""
    return cartan_project(g).a_coordinate * group_spec(g.backend).h_norm


def iwasawa_decompose(g: GroupElement) -> IwasawaFactors:
    """KAN factorization via Gram-Schmidt on the columns of g."""
    backend = g.backend
    m = g.matrix
    col = m[:, 0]
    r11 = float(np.sqrt(np.sum(np.abs(col) ** 2)))
    q1 = col / r11
    if backend is Backend.SL2R:
        q2 = np.array([-q1[1], q1[0]])
    else:
        q2 = np.array([-np.conj(q1[1]), np.conj(q1[0])])
    k = np.column_stack([q1, q2])
    r12 = np.vdot(q1, m[:, 1])
    n = r12 / r11
    if backend is Backend.SL2R:
        n = float(np.real(n))
    return IwasawaFactors(GroupElement(k, backend), float(np.log(r11)), n)


def compact_representative(backend, v: np.ndarray) -> GroupElement:
    """Element k of K with k e1 = v for a unit vector v on the line."""
    backend = _as_backend(backend)
    v = np.asarray(v, dtype=backend.dtype)
    v = v / np.linalg.norm(v)
    if backend is Backend.SL2R:
        k = np.array([[v[0], -v[1]], [v[1], v[0]]])
    else:
        k = np.array([[v[0], -np.conj(v[1])], [v[1], np.conj(v[0])]])
    return GroupElement(k, backend)


def _line_vector(xi) -> tuple[Backend, np.ndarray]:
    # late import: harmonics depends on this module
    from .harmonics import FlagPoint, line_vectors

    if not isinstance(xi, FlagPoint):
        raise TypeError("expected a FlagPoint")
    return xi.backend, line_vectors(xi.backend, xi.coords[None])[0]


def iwasawa_cocycle(g: GroupElement, xi) -> AlgebraVector:
    """sigma(g, xi) = H(g k) with k the compact representative of xi."""
    backend, v = _line_vector(xi)
    if backend is not g.backend:
        raise ValueError("backend mismatch")
    k = compact_representative(backend, v)
    return iwasawa_decompose(g @ k).h()


def log_radon_nikodym_weight(g: GroupElement, xi) -> float:
    """-2 rho(sigma(g, xi)), the log-density of (g^-1)_* m against m."""
    spec = group_spec(g.backend)
    t = iwasawa_cocycle(g, xi).coordinates[0]
    return -2.0 * spec.rho_coefficient * float(t)


def radon_nikodym_weight(g: GroupElement, xi) -> float:
    return float(np.exp(log_radon_nikodym_weight(g, xi)))


def random_compact(backend, rng: np.random.Generator) -> GroupElement:
    """Haar-random element of K (SO(2) or SU(2))."""
    backend = _as_backend(backend)
    if backend is Backend.SL2R:
        return rotation(rng.uniform(0, 2 * np.pi))
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    a, b = q[0] + 1j * q[1], q[2] + 1j * q[3]
    return GroupElement(np.array([[a, -np.conj(b)], [b, np.conj(a)]]), backend)


def random_element(backend, rng: np.random.Generator, kappa_max: float = 1.0,
                   exact: bool = False) -> GroupElement:
    """k1 exp(tH) k2 with K-Haar k1, k2 and |kappa| uniform on [0, kappa_max].

    With ``exact`` the Cartan norm is kappa_max itself.
    """
    backend = _as_backend(backend)
    kappa = kappa_max if exact else rng.uniform(0, kappa_max)
    t = kappa / group_spec(backend).h_norm
    a = GroupElement(np.diag([np.exp(t), np.exp(-t)]), backend)
    return random_compact(backend, rng) @ a @ random_compact(backend, rng)
