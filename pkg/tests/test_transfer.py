import numpy as np
import pytest

from flaglab.group import (
    Backend,
    GroupElement,
    group_spec,
    identity,
    random_compact,
    random_element,
    rotation,
)
from flaglab.harmonics import (
    ConfigurationError,
    FunctionCoefficients,
    act_on_points,
    block_norms,
    labels,
    lp_blocking,
    quadrature,
    random_coefficients,
    synthesize,
)
from flaglab.measures import MeasureFamilySpec, SupportMeasure, build_measure, dirac
from flaglab.transfer import (
    FitError,
    QuadratureError,
    TruncationError,
    assemble_adjoint,
    assemble_markov,
    highfreq_iteration_experiment,
    log_jacobian,
    low_frequency_profile,
    lp_spectrum,
    pi_act,
    power_iteration_density,
    restricted_gap_estimate,
    sobolev_growth_probe,
    stationary_density,
)
from flaglab.verify import adjointness_error

CUT = {Backend.SL2R: 24, Backend.SL2C: 6}


@pytest.fixture(scope="module")
def conj_ops():
    out = {}
    for b in Backend:
        mu = build_measure(MeasureFamilySpec("conjugated-pair", backend=b, epsilon=0.25))
        out[b] = (mu, assemble_markov(mu, CUT[b]), assemble_adjoint(mu, CUT[b]))
    return out


# --- assembly ---------------------------------------------------------------

def test_rotation_pair_is_diagonal_cosines():
    a = 0.7
    T = assemble_markov(build_measure(MeasureFamilySpec("rotation-pair", angle=a)), 20)
    expected = [1.0] + [np.cos(2 * n * a) for n in range(1, 21) for _ in (0, 1)]
    np.testing.assert_allclose(T.matrix, np.diag(expected), atol=1e-12)


def test_dirac_at_identity_is_identity(backend):
    mu = dirac(identity(backend))
    for op in (assemble_markov(mu, CUT[backend]), assemble_adjoint(mu, CUT[backend])):
        np.testing.assert_allclose(op.matrix, np.eye(op.matrix.shape[0]), atol=1e-12)


def test_compact_measure_on_sphere_preserves_degree(rng):
    # rotations of S^2 mix only within each degree l
    atoms = tuple(random_compact("SL2C", rng) for _ in range(3))
    T = assemble_markov(SupportMeasure(atoms, np.full(3, 1 / 3)), 5)
    deg = np.array([lab.tau for lab in labels("SL2C", 5)])
    off = np.abs(T.matrix[deg[:, None] != deg[None, :]])
    assert off.max() < 1e-12
    assert np.linalg.norm(T.matrix, 2) <= 1 + 1e-12


def test_adjointness(conj_ops, rng, backend):
    _, T, Ts = conj_ops[backend]
    assert adjointness_error(T, Ts, 20, rng) < 1e-10
    np.testing.assert_allclose(Ts.matrix, T.matrix.conj().T, atol=1e-10)


def test_constants_and_mass(conj_ops, backend):
    # T fixes constants and T* preserves total mass
    _, T, Ts = conj_ops[backend]
    e0 = np.zeros(T.matrix.shape[0])
    e0[0] = 1
    np.testing.assert_allclose(T.matrix[:, 0], e0, atol=1e-12)
    np.testing.assert_allclose(Ts.matrix[0, :], e0, atol=1e-12)


def test_operator_norm_bound(conj_ops, backend):
    mu, T, Ts = conj_ops[backend]
    bound = np.exp(group_spec(backend).rho_norm * mu.epsilon)
    assert T.top_singular_value() <= bound + 1e-9
    assert Ts.top_singular_value() <= bound + 1e-9


def test_self_check_reports_error(conj_ops):
    _, T, _ = conj_ops[Backend.SL2R]
    assert T.self_check_error is not None and T.self_check_error < 1e-9


def test_undersampled_quadrature_raises():
    mu = build_measure(MeasureFamilySpec("exp-basis-family", epsilon=1.5))
    with pytest.raises(QuadratureError, match="entry"):
        assemble_markov(mu, 16, oversampling=1.0)


def test_change_of_variables_identity(backend, rng):
    # int f(g^-1 x) dm = int f(x) exp(-2 rho sigma(g, x)) dm on an independent dense rule
    rule = quadrature(backend, 160 if backend is Backend.SL2R else 60)
    for _ in range(3):
        g = random_element(backend, rng, 1.0)
        f = random_coefficients(backend, 4, rng)
        lhs = rule.weights @ synthesize(f, act_on_points(g.inv(), rule.nodes))
        rhs = rule.weights @ (synthesize(f, rule.nodes) * np.exp(log_jacobian(g, rule.nodes)))
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), 1e-3)


# --- the representation ------------------------------------------------------

def test_pi_identity_and_compact(backend, rng):
    u = random_coefficients(backend, 3, rng)
    v = pi_act(identity(backend), u, 3, measure_leak=False).coefficients
    np.testing.assert_allclose(v.values, u.values, atol=1e-12)
    w = pi_act(random_compact(backend, rng), u, 3).coefficients
    assert w.norm() == pytest.approx(1.0, abs=1e-12)


def test_pi_is_a_homomorphism(backend, rng):
    g = random_element(backend, rng, 0.3, exact=True)
    h = random_element(backend, rng, 0.3, exact=True)
    u = random_coefficients(backend, 2, rng)
    out = 24 if backend is Backend.SL2R else 12
    a = pi_act(g @ h, u, out, measure_leak=False).coefficients
    b = pi_act(g, pi_act(h, u, out, measure_leak=False).coefficients, out,
               measure_leak=False).coefficients
    assert (a - b).norm() < 1e-6


def test_pi_unitarity_improves_with_cutoff(backend, rng):
    g = random_element(backend, rng, 0.5, exact=True)
    u = random_coefficients(backend, 2, rng)
    e1 = abs(pi_act(g, u, 8, measure_leak=False).coefficients.norm() - 1)
    e2 = abs(pi_act(g, u, 16, measure_leak=False).coefficients.norm() - 1)
    assert e1 <= 1e-3 and e2 < e1


def test_pi_leak_bound(rng):
    g = GroupElement(np.diag([np.exp(1.5), np.exp(-1.5)]))
    u = random_coefficients("SL2R", 2, rng)
    with pytest.raises(TruncationError):
        pi_act(g, u, 4, leak_bound=1e-6)


# --- densities and decay -----------------------------------------------------

def test_rotation_density_is_constant():
    d = stationary_density(build_measure(MeasureFamilySpec("rotation-pair", angle=1.0)), 16)
    assert d.residual < 1e-12 and d.converged
    np.testing.assert_allclose(d.coefficients.values[1:], 0, atol=1e-12)


def test_density_matches_power_iteration(conj_ops, backend):
    _, _, Ts = conj_ops[backend]
    d = stationary_density(adjoint=Ts)
    assert d.converged and d.positive
    p, _ = power_iteration_density(Ts)
    np.testing.assert_allclose(p.values, d.coefficients.values, atol=1e-8)


def test_density_requires_adjoint(conj_ops):
    _, T, _ = conj_ops[Backend.SL2R]
    with pytest.raises(ConfigurationError):
        stationary_density(adjoint=T)


def test_decay_report_is_parseval_consistent(conj_ops):
    _, _, Ts = conj_ops[Backend.SL2R]
    d = stationary_density(adjoint=Ts)
    rep = lp_spectrum(d)
    assert sum(v * v for v in rep.block_norms.values()) == pytest.approx(
        d.coefficients.norm() ** 2, rel=1e-12)
    assert rep.slope is not None and rep.slope < 0
    assert rep.sobolev_exponent == pytest.approx(-2 * rep.slope)
    assert max(rep.fit_blocks) <= lp_blocking("SL2R", CUT[Backend.SL2R]).top - 2


def test_constant_density_has_no_fit():
    u = FunctionCoefficients.zeros("SL2R", 32)
    v = u.values.copy()
    v[0] = 1
    rep = lp_spectrum(FunctionCoefficients("SL2R", 32, v))
    assert rep.slope is None and rep.fit_blocks == ()
    with pytest.raises(FitError):
        lp_spectrum(FunctionCoefficients("SL2R", 32, v), require_fit=True)


# --- gap and iteration --------------------------------------------------------

def test_rotation_gap_closed_form():
    a, N, cut = 1.0, 3, 32
    mu = build_measure(MeasureFamilySpec("rotation-pair", angle=a))
    rep = restricted_gap_estimate(mu, N, cut, doubling=False)
    ns = [n for n in range(1, cut + 1) if (1 + 4 * n * n).bit_length() - 1 >= N]
    assert rep.estimate == pytest.approx(max(abs(np.cos(2 * n * a)) for n in ns), abs=1e-10)


def test_gap_bounded_by_operator_norm(conj_ops):
    mu, T, _ = conj_ops[Backend.SL2R]
    rep = restricted_gap_estimate(mu, 3, CUT[Backend.SL2R], operator=T, doubling=False)
    assert 0 < rep.estimate <= T.top_singular_value() + 1e-12


def test_iteration_of_identity_keeps_norm(rng):
    T = assemble_markov(dirac(identity("SL2R")), 16)
    tr = highfreq_iteration_experiment(T, 5, 4, 3, rng=rng)
    np.testing.assert_allclose(tr.norms, 1.0, atol=1e-12)
    np.testing.assert_allclose(tr.low, 0.0, atol=1e-12)
    np.testing.assert_allclose(tr.norms ** 2, tr.low ** 2 + tr.high ** 2, atol=1e-12)


def test_iteration_rejects_adjoint(conj_ops):
    _, _, Ts = conj_ops[Backend.SL2R]
    with pytest.raises(ConfigurationError):
        highfreq_iteration_experiment(Ts, 4, 2, 2)


def test_low_frequency_leakage_decays(conj_ops, rng):
    _, T, _ = conj_ops[Backend.SL2R]
    prof, slope = low_frequency_profile(T, 3, range(4, 9), trials=5, rng=rng)
    assert slope < 0 and set(prof) == set(range(4, 9))


# --- Sobolev growth -----------------------------------------------------------

def test_growth_probe_compact_elements_give_zero(rng):
    gs = [rotation(0.4), rotation(1.3)]
    us = [random_coefficients("SL2R", 4, rng)]
    probe = sobolev_growth_probe(gs + [GroupElement(np.diag([1.2, 1 / 1.2]))], [0.5, 1.0], us, 16)
    # only the non-compact element has a non-zero abscissa
    assert np.all(np.abs(probe.log_ratios[np.abs(probe.abscissa) < 1e-12]) < 1e-10)


def test_l2_growth_bounded_by_rho(rng):
    backend = Backend.SL2R
    rho = group_spec(backend).rho_norm
    for _ in range(3):
        g = random_element(backend, rng, 1.0, exact=True)
        u = random_coefficients(backend, 3, rng)
        v = pi_act(g, u, 48, measure_leak=False).coefficients
        # pi is unitary; even the truncated image cannot exceed exp(|rho| |kappa|)
        assert v.norm() <= np.exp(rho * 1.0)
        assert sum(x * x for x in block_norms(v).values()) == pytest.approx(v.norm() ** 2)


def test_gap_requires_symmetric_measure(rng):
    mu = dirac(random_element("SL2R", rng, 0.5, exact=True))
    with pytest.raises(ConfigurationError, match="symmetric"):
        restricted_gap_estimate(mu, 3, 16, doubling=False)
