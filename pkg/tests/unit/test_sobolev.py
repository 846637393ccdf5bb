from django.test import override_settings

import numpy as np
import pytest

from tests import slow
from transport_bounds.grid import (
    Boundary, BoundedRandom, Density, GridDomain, InvalidDomainException, ScalarField, SignedDensity, SmoothRandom,
    Uniform, make_measure,
)
from transport_bounds.sobolev import (
    ConstantFieldException, NoConvergenceException, NonPositiveWeightException, NonZeroMassException,
    WeightedLaplacian, dense_poisson_solve, duality_gap_check, h1_seminorm, hminus1_norm, interval_hminus1_norm,
    weighted_poisson_solve,
)

DOMAINS = [
    GridDomain((50,), (1.0,), Boundary.INTERVAL),
    GridDomain((40,), (2.0,), Boundary.TORUS),
    GridDomain((12, 10), (1.0, 1.5), Boundary.TORUS),
]


def random_source(domain, seed):
    values = np.random.default_rng(seed).normal(size=domain.size)
    return SignedDensity(domain, values - values.mean())


def random_weight(domain, seed):
    return make_measure(domain, BoundedRandom(0.5, 2.0, seed=seed))


def test_h1_seminorm_constant__ok():
    domain = DOMAINS[2]
    f = ScalarField(domain, np.full(domain.size, 3.0))
    assert h1_seminorm(f, random_weight(domain, 0)) == 0.0


def test_h1_seminorm_linear__ok():
    n = 64
    domain = GridDomain((n,), (1.0,), Boundary.INTERVAL)
    f = ScalarField(domain, domain.centers[:, 0])
    # no face beyond the two ends, so only n - 1 differences contribute
    assert h1_seminorm(f, make_measure(domain, Uniform(1.0))) ** 2 == pytest.approx((n - 1) / n, rel=1e-12)


def unit_torus(cells=256):
    domain = GridDomain((cells,), (1.0,), Boundary.TORUS)
    return domain, domain.centers[:, 0], make_measure(domain, Uniform(1.0))


def test_h1_seminorm_sine__ok():
    domain, x, w = unit_torus()
    f = ScalarField(domain, np.sin(2 * np.pi * x))
    assert h1_seminorm(f, w) == pytest.approx(np.sqrt(2 * np.pi ** 2), rel=1e-3)


def test_h1_seminorm_weight_scaling__ok():
    domain = DOMAINS[1]
    f = ScalarField(domain, np.sin(2 * np.pi * domain.centers[:, 0] / 2.0))
    w = random_weight(domain, 1)
    scaled = Density(domain, 4.0 * w.values)
    assert h1_seminorm(f, scaled) == pytest.approx(2.0 * h1_seminorm(f, w), rel=1e-12)


def test_h1_seminorm_nonpositive_weight__raise():
    domain = DOMAINS[0]
    w = Density(domain, np.concatenate([[0.0], np.ones(domain.size - 1)]))
    with pytest.raises(NonPositiveWeightException, match='strictly positive'):
        h1_seminorm(ScalarField(domain, np.zeros(domain.size)), w)


def test_laplacian_matrix__ok():
    domain = DOMAINS[2]
    matrix = WeightedLaplacian.from_weight(random_weight(domain, 2)).matrix()
    assert abs(matrix - matrix.T).max() == pytest.approx(0.0, abs=1e-15)
    assert np.abs(matrix @ np.ones(domain.size)).max() == pytest.approx(0.0, abs=1e-12)


def test_laplacian_harmonic_faces__ok():
    domain = GridDomain((2,), (2.0,), Boundary.INTERVAL)
    laplacian = WeightedLaplacian.from_weight(Density(domain, [1.0, 3.0]))
    assert laplacian.face_weights == pytest.approx([1.5])


@pytest.mark.parametrize('domain', DOMAINS)
def test_weighted_poisson_solve__ok(domain):
    for seed in range(5):
        sigma = random_source(domain, seed)
        w = random_weight(domain, 100 + seed)
        solution = weighted_poisson_solve(sigma, w, tol=1e-12)
        oracle = dense_poisson_solve(sigma, w)
        assert solution.residual <= 1e-11
        assert abs(solution.potential.values.mean()) < 1e-12
        assert np.max(np.abs(solution.potential.values - oracle.values)) <= 1e-8 * np.max(np.abs(oracle.values))
        norm = h1_seminorm(solution.potential, w)
        assert norm == pytest.approx(h1_seminorm(oracle, w), rel=1e-10)


def test_weighted_poisson_solve_cosine__ok():
    domain, x, w = unit_torus()
    solution = weighted_poisson_solve(SignedDensity(domain, np.cos(2 * np.pi * x)), w, tol=1e-12)
    expected = np.cos(2 * np.pi * x) / (4 * np.pi ** 2)
    error = np.linalg.norm(solution.potential.values - expected) / np.linalg.norm(expected)
    assert error <= 1e-4


def test_weighted_poisson_solve_zero_source__ok():
    domain = DOMAINS[1]
    solution = weighted_poisson_solve(SignedDensity(domain, np.zeros(domain.size)), random_weight(domain, 0))
    assert solution.iterations == 0
    assert not solution.potential.values.any()


def test_weighted_poisson_solve_nonzero_mass__raise():
    domain = DOMAINS[0]
    with pytest.raises(NonZeroMassException, match='neutrality'):
        weighted_poisson_solve(SignedDensity(domain, np.ones(domain.size)), random_weight(domain, 0))


def test_weighted_poisson_solve_no_convergence__raise(mocker):
    domain = DOMAINS[0]
    mocker.patch('transport_bounds.sobolev.cg', return_value=(np.zeros(domain.size), 25))
    with pytest.raises(NoConvergenceException, match='Conjugate gradient stopped'):
        weighted_poisson_solve(random_source(domain, 0), random_weight(domain, 0))


@slow
@override_settings(TRANSPORT_BOUNDS_DENSE_ORACLE_MAX_CELLS=4096)
@pytest.mark.parametrize('domain', [
    GridDomain((4096,), (1.0,), Boundary.INTERVAL),
    GridDomain((64, 64), (1.0, 1.0), Boundary.TORUS),
])
def test_weighted_poisson_solve_large__ok(domain):
    for seed in range(3):
        sigma = random_source(domain, seed)
        w = random_weight(domain, 100 + seed)
        solution = weighted_poisson_solve(sigma, w, tol=1e-12)
        oracle = dense_poisson_solve(sigma, w)
        assert h1_seminorm(solution.potential, w) == pytest.approx(h1_seminorm(oracle, w), rel=1e-10)


@override_settings(TRANSPORT_BOUNDS_DENSE_ORACLE_MAX_CELLS=10)
def test_dense_poisson_solve_too_large__raise():
    domain = DOMAINS[0]
    with pytest.raises(ValueError, match='Dense oracle limited to 10 cells'):
        dense_poisson_solve(random_source(domain, 0), random_weight(domain, 0))


def test_hminus1_norm_homogeneity__ok():
    domain = DOMAINS[2]
    sigma = random_source(domain, 3)
    w = random_weight(domain, 4)
    base = hminus1_norm(sigma, w, tol=1e-12)
    assert hminus1_norm(sigma, Density(domain, 9.0 * w.values), tol=1e-12) == pytest.approx(base / 3, rel=1e-10)
    doubled = SignedDensity(domain, 2.0 * sigma.values)
    assert hminus1_norm(doubled, w, tol=1e-12) == pytest.approx(2 * base, rel=1e-10)


@pytest.mark.parametrize('boundary', [Boundary.TORUS, Boundary.INTERVAL])
def test_hminus1_norm_cosine__ok(boundary):
    domain = GridDomain((256,), (1.0,), boundary)
    x = domain.centers[:, 0]
    sigma = SignedDensity(domain, np.cos(2 * np.pi * x))
    expected = 1 / (2 * np.pi * np.sqrt(2))
    assert hminus1_norm(sigma, make_measure(domain, Uniform(1.0))) == pytest.approx(expected, rel=1e-3)


def test_interval_hminus1_norm_two_cells__ok():
    domain = GridDomain((2,), (1.0,), Boundary.INTERVAL)
    sigma = SignedDensity(domain, [1.0, -1.0])
    w = make_measure(domain, Uniform(1.0))
    assert interval_hminus1_norm(sigma, w) == pytest.approx(np.sqrt(1 / 12), rel=1e-14)
    # the harmonic-face norm puts the whole flux on the single face
    assert hminus1_norm(sigma, w, tol=1e-12) == pytest.approx(np.sqrt(1 / 8), rel=1e-10)


def test_interval_hminus1_norm_cosine__ok():
    domain = GridDomain((256,), (1.0,), Boundary.INTERVAL)
    sigma = SignedDensity(domain, np.cos(2 * np.pi * domain.centers[:, 0]))
    w = make_measure(domain, Uniform(1.0))
    assert interval_hminus1_norm(sigma, w) == pytest.approx(1 / (2 * np.pi * np.sqrt(2)), rel=1e-3)


@pytest.mark.parametrize('cells', [16, 64, 256])
def test_interval_hminus1_norm_below_grid_norm__ok(cells):
    domain = GridDomain((cells,), (1.0,), Boundary.INTERVAL)
    for seed in range(5):
        sigma_values = SmoothRandom(0.0, 1.0, seed=2 * seed).sample(domain)
        sigma = SignedDensity(domain, sigma_values - sigma_values.mean())
        w = make_measure(domain, SmoothRandom(1.0, 2.0, seed=2 * seed + 1))
        continuum = interval_hminus1_norm(sigma, w)
        grid = hminus1_norm(sigma, w, tol=1e-12)
        assert continuum <= grid * (1 + 1e-10)
        if cells == 256:
            assert grid / continuum - 1 < 2e-3


def test_interval_hminus1_norm_scaling__ok():
    domain = DOMAINS[0]
    sigma = random_source(domain, 5)
    w = random_weight(domain, 6)
    base = interval_hminus1_norm(sigma, w)
    assert interval_hminus1_norm(sigma, Density(domain, 4.0 * w.values)) == pytest.approx(base / 2, rel=1e-12)
    assert interval_hminus1_norm(SignedDensity(domain, 3.0 * sigma.values), w) == pytest.approx(3 * base, rel=1e-12)


def test_interval_hminus1_norm_torus__raise():
    domain = DOMAINS[1]
    with pytest.raises(InvalidDomainException, match='one-dimensional interval'):
        interval_hminus1_norm(random_source(domain, 0), random_weight(domain, 0))


def test_interval_hminus1_norm_nonpositive_weight__raise():
    domain = DOMAINS[0]
    with pytest.raises(NonPositiveWeightException):
        interval_hminus1_norm(random_source(domain, 0), Density(domain, np.zeros(domain.size)))


@pytest.mark.parametrize('domain', DOMAINS + [GridDomain((32,), (1.0,), Boundary.TORUS)])
def test_duality_gap_check__ok(domain):
    sigma = random_source(domain, 7)
    w = random_weight(domain, 8)
    norm = hminus1_norm(sigma, w, tol=1e-12)
    rng = np.random.default_rng(9)
    for _ in range(100):
        f = ScalarField(domain, rng.normal(size=domain.size))
        assert duality_gap_check(sigma, w, f) <= norm * (1 + 1e-8)
    potential = weighted_poisson_solve(sigma, w, tol=1e-12).potential
    assert duality_gap_check(sigma, w, potential) == pytest.approx(norm, rel=1e-8)


def test_duality_gap_check_constant__raise():
    domain = DOMAINS[0]
    with pytest.raises(ConstantFieldException):
        duality_gap_check(random_source(domain, 0), random_weight(domain, 0), ScalarField(domain, np.ones(50)))
