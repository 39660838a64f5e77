import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flaglab.group import (
    Backend,
    GroupElement,
    cartan_norm,
    group_spec,
    identity,
    random_element,
    rotation,
)
from flaglab.harmonics import act_on_points, random_points
from flaglab.measures import (
    MeasureError,
    MeasureFamilySpec,
    SupportMeasure,
    build_measure,
    default_conjugators,
    dirac,
    symmetrize,
)


def test_weights_validated():
    g = identity("SL2R")
    with pytest.raises(MeasureError):
        SupportMeasure((g, g), np.array([0.5, 0.6]))
    with pytest.raises(MeasureError):
        SupportMeasure((g,), np.array([-1.0]))
    with pytest.raises(MeasureError):
        SupportMeasure((rotation(0.3), rotation(0.3)), np.array([0.5, 0.5]), symmetric=True)


def test_epsilon_cached_as_max_cartan_norm(rng):
    atoms = tuple(random_element("SL2C", rng, 2.0) for _ in range(4))
    mu = SupportMeasure(atoms, np.full(4, 0.25))
    assert mu.epsilon == pytest.approx(max(cartan_norm(g) for g in atoms))


def test_exp_basis_family(backend):
    mu = build_measure(MeasureFamilySpec("exp-basis-family", backend=backend, epsilon=0.3))
    assert mu.symmetric and len(mu) == 2 * group_spec(backend).dim
    # |kappa(exp X)| <= |X| in the Killing norm; the longest basis vector sets the bound
    gram = group_spec(backend).killing_gram
    assert mu.epsilon <= 0.3 * np.sqrt(np.max(np.diag(gram))) + 1e-12


def test_exp_basis_epsilon_monotone():
    eps = np.linspace(0.05, 2.0, 12)
    vals = [build_measure(MeasureFamilySpec("exp-basis-family", epsilon=e)).epsilon for e in eps]
    assert np.all(np.diff(vals) > 0)


def test_rotation_pair_is_compact():
    mu = build_measure(MeasureFamilySpec("rotation-pair", angle=1.0))
    assert mu.epsilon == 0.0 and mu.symmetric


def test_zero_epsilon_rejected():
    with pytest.raises(MeasureError, match="identity"):
        MeasureFamilySpec("exp-basis-family", epsilon=0.0)
    with pytest.raises(MeasureError):
        MeasureFamilySpec("conjugated-pair", epsilon=-1.0)
    with pytest.raises(MeasureError):
        MeasureFamilySpec("no-such-kind")


def test_conjugated_pair_default(backend):
    mu = build_measure(MeasureFamilySpec("conjugated-pair", backend=backend, epsilon=0.25))
    assert mu.symmetric
    assert len(mu) == 2 + 2 * len(default_conjugators(backend))
    assert mu.epsilon == pytest.approx(0.25, abs=1e-12)


def _fixed_points(mu):
    fixed = []
    for g in mu.atoms[::2]:
        _, vecs = np.linalg.eig(g.matrix)
        for v in vecs.T:
            a, b = v
            p = np.array([2 * (a * np.conj(b)).real, 2 * (a * np.conj(b)).imag, abs(a) ** 2 - abs(b) ** 2])
            fixed.append(p / np.linalg.norm(p))
    return np.array(fixed)


def test_conjugated_pair_sphere_has_no_common_circle():
    # points on a common great circle span only a 2-plane of R^3
    mu = build_measure(MeasureFamilySpec("conjugated-pair", backend="SL2C", epsilon=0.5))
    assert np.linalg.svd(_fixed_points(mu), compute_uv=False)[-1] > 1e-3
    one = build_measure(MeasureFamilySpec("conjugated-pair", backend="SL2C", epsilon=0.5,
                                          conjugator=(rotation(1.0, "SL2C").matrix.real.tolist(),)))
    assert np.linalg.svd(_fixed_points(one), compute_uv=False)[-1] < 1e-10


def test_explicit_atoms_complex_encoding():
    spec = MeasureFamilySpec("explicit-atoms", backend="SL2C",
                             atoms=(((( 1, 0), (0, 1)), ((0, 0), (1, 0))),), weights=(1.0,))
    mu = build_measure(spec)
    np.testing.assert_allclose(mu.atoms[0].matrix, [[1, 1j], [0, 1]])


def test_spec_dict_round_trip():
    spec = MeasureFamilySpec("conjugated-pair", epsilon=0.5,
                             conjugator=(((1.0, 0.0), (0.0, 1.0)), ((0.0, -1.0), (1.0, 0.0))))
    assert MeasureFamilySpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(MeasureError):
        MeasureFamilySpec.from_dict({"kind": "rotation-pair", "angle": 1, "bogus": 2})


def test_symmetrize_dirac(rng):
    g = random_element("SL2R", rng, 1.0)
    mu = symmetrize(dirac(g))
    assert len(mu) == 2 and mu.symmetric
    np.testing.assert_allclose(mu.weights, [0.5, 0.5])
    assert mu.atoms[1].allclose(g.inv())


def test_symmetrize_idempotent_on_symmetric():
    mu = build_measure(MeasureFamilySpec("exp-basis-family", epsilon=0.2))
    nu = symmetrize(mu)
    assert len(nu) == len(mu)
    np.testing.assert_allclose(np.sort(nu.weights), np.sort(mu.weights))


@given(st.integers(0, 2**31 - 1))
def test_symmetrize_preserves_epsilon(seed):
    rng = np.random.default_rng(seed)
    backend = Backend.SL2C if seed % 2 else Backend.SL2R
    atoms = tuple(random_element(backend, rng, 2.0) for _ in range(3))
    mu = SupportMeasure(atoms, np.array([0.2, 0.3, 0.5]))
    assert symmetrize(mu).epsilon == pytest.approx(mu.epsilon, abs=1e-10)


def test_digest_stable_and_sensitive():
    a = build_measure(MeasureFamilySpec("conjugated-pair", epsilon=0.25))
    b = build_measure(MeasureFamilySpec("conjugated-pair", epsilon=0.25))
    c = build_measure(MeasureFamilySpec("conjugated-pair", epsilon=0.2500001))
    assert a.digest() == b.digest() != c.digest()


def test_determinant_drift_rejected():
    g = GroupElement(np.eye(2))
    object.__setattr__(g, "matrix", np.diag([1.0, 1.0 + 1e-9]))
    with pytest.raises(MeasureError, match="drift"):
        SupportMeasure((g,), np.ones(1))


def test_atoms_act_consistently(rng):
    mu = build_measure(MeasureFamilySpec("conjugated-pair", epsilon=0.25))
    pts = random_points("SL2R", 5, rng)
    for g in mu.atoms:
        out = act_on_points(g.inv(), act_on_points(g, pts))
        assert np.abs(np.angle(np.exp(2j * (out - pts)))).max() < 1e-12
