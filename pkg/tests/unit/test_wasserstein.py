import itertools
import math

from django.test import override_settings

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings as hypothesis_settings, strategies as st

from transport_bounds.grid import (
    Boundary, BoundedRandom, Bump, Density, DiracLike, GridDomain, InvalidDomainException, Uniform, make_measure,
    total_mass,
)
from transport_bounds.wasserstein import (
    Coupling, DominationViolatedException, MassMismatchException, ProblemTooLargeException,
    TransportSolverException, coupling_cost, diag_coupling, lemma_coupling_transform, quantile_segments, w2_1d,
    w2_exact, w2_to_atom,
)


def random_pair(domain, seed, low=0.0, high=1.0):
    mu = make_measure(domain, BoundedRandom(low, high, seed=2 * seed))
    nu = make_measure(domain, BoundedRandom(low, high, seed=2 * seed + 1))
    return mu, Density(domain, nu.values * (total_mass(mu) / total_mass(nu)))


def linprog_w2(mu, nu):
    domain = mu.domain
    a, b = mu.masses, nu.masses * (mu.masses.sum() / nu.masses.sum())
    n = domain.size
    cost = domain.squared_distances(np.arange(n), np.arange(n)).reshape(-1)
    rows = np.kron(np.eye(n), np.ones(n))
    cols = np.kron(np.ones(n), np.eye(n))
    result = scipy.optimize.linprog(
        cost, A_eq=np.vstack([rows, cols]), b_eq=np.concatenate([a, b]), bounds=(0, None), method='highs',
        options={'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10},
    )
    return math.sqrt(max(result.fun, 0.0))


def test_w2_exact_diracs__ok():
    domain = GridDomain((10,), (1.0,), Boundary.INTERVAL)
    mu = make_measure(domain, DiracLike(2, mass=1.0))
    nu = make_measure(domain, DiracLike(7, mass=1.0))
    value, coupling = w2_exact(mu, nu)
    assert value == pytest.approx(0.5, abs=1e-12)
    assert list(coupling.rows) == [2]
    assert list(coupling.cols) == [7]


def test_w2_exact_same_measure__ok():
    domain = GridDomain((6, 6), (1.0, 1.0))
    mu, _ = random_pair(domain, 0)
    value, coupling = w2_exact(mu, mu)
    assert value == pytest.approx(0.0, abs=1e-12)
    assert coupling_cost(coupling) == pytest.approx(0.0, abs=1e-14)


def test_w2_exact_marginals__ok():
    domain = GridDomain((5, 4), (1.0, 2.0))
    mu, nu = random_pair(domain, 1)
    value, coupling, info = w2_exact(mu, nu, log=True)
    assert info['result_code'] == 1
    assert info['support'] == [20, 20]
    assert coupling.row_marginal() == pytest.approx(mu.masses, abs=1e-12)
    assert coupling.col_marginal() == pytest.approx(nu.masses, abs=1e-12)
    assert coupling_cost(coupling) == pytest.approx(value ** 2, rel=1e-12)


@pytest.mark.parametrize('domain', [
    GridDomain((6,), (1.0,), Boundary.INTERVAL),
    GridDomain((5,), (1.0,), Boundary.TORUS),
    GridDomain((2, 3), (1.0, 1.5), Boundary.TORUS),
])
def test_w2_exact_against_linprog__ok(domain):
    for seed in range(10):
        mu, nu = random_pair(domain, seed)
        assert w2_exact(mu, nu)[0] == pytest.approx(linprog_w2(mu, nu), rel=1e-8, abs=1e-10)


def vertex_w2(mu, nu):
    """Cheapest basic feasible coupling, enumerating every basis of the transportation polytope."""
    domain = mu.domain
    a, b = mu.masses, nu.masses * (mu.masses.sum() / nu.masses.sum())
    m, n = a.size, b.size
    cost = domain.squared_distances(np.arange(m), np.arange(n)).reshape(-1)
    constraints = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
    marginals = np.concatenate([a, b])
    best = math.inf
    for basis in itertools.combinations(range(m * n), m + n - 1):
        columns = constraints[:, basis]
        if np.linalg.matrix_rank(columns) < m + n - 1:
            continue
        plan, *_ = np.linalg.lstsq(columns, marginals, rcond=None)
        if plan.min() < -1e-14 or np.abs(columns @ plan - marginals).max() > 1e-13:
            continue
        best = min(best, float(cost[list(basis)] @ plan))
    return math.sqrt(max(best, 0.0))


@pytest.mark.parametrize('domain', [
    GridDomain((3,), (1.0,), Boundary.INTERVAL),
    GridDomain((3,), (1.0,), Boundary.TORUS),
    GridDomain((4,), (1.0,), Boundary.INTERVAL),
    GridDomain((2, 2), (1.0, 2.0), Boundary.TORUS),
])
def test_w2_exact_against_vertices__ok(domain):
    for seed in range(3):
        mu, nu = random_pair(domain, seed, low=0.1, high=1.0)
        assert w2_exact(mu, nu)[0] == pytest.approx(vertex_w2(mu, nu), abs=1e-10)


def test_w2_exact_two_cell_split__ok():
    domain = GridDomain((4,), (2.0,))
    mu = make_measure(domain, DiracLike(1, mass=1.0))
    nu = Density(domain, [1.0, 0.0, 1.0, 0.0])
    value, coupling = w2_exact(mu, nu)
    assert coupling_cost(coupling) == pytest.approx(0.25, abs=1e-12)
    assert value == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize('domain', [
    GridDomain((8,), (1.0,), Boundary.INTERVAL),
    GridDomain((8,), (1.0,), Boundary.TORUS),
    GridDomain((2, 4), (1.0, 1.0), Boundary.TORUS),
])
def test_w2_exact_metric__ok(domain):
    for seed in range(20):
        first, second = random_pair(domain, seed, low=0.0, high=1.0)
        _, third = random_pair(domain, seed + 100, low=0.0, high=1.0)
        third = Density(domain, third.values * (total_mass(first) / total_mass(third)))
        forward = w2_exact(first, second)[0]
        assert forward == pytest.approx(w2_exact(second, first)[0], abs=1e-9)
        assert w2_exact(first, first)[0] == pytest.approx(0.0, abs=1e-12)
        assert forward > 0
        assert w2_exact(first, third)[0] <= forward + w2_exact(second, third)[0] + 1e-9


@pytest.mark.parametrize('domain, shift', [
    (GridDomain((12,), (1.0,)), 5),
    (GridDomain((6, 6), (1.0, 1.0)), (2, -3)),
])
def test_w2_exact_torus_translation__ok(domain, shift):
    axes = tuple(range(domain.dims))
    for seed in range(5):
        mu, nu = random_pair(domain, seed)
        moved = [Density(domain, np.roll(m.as_grid(), shift, axis=axes)) for m in (mu, nu)]
        assert w2_exact(*moved)[0] == pytest.approx(w2_exact(mu, nu)[0], rel=1e-10, abs=1e-12)


def test_w2_exact_mass_mismatch__raise():
    domain = GridDomain((8,), (1.0,), Boundary.INTERVAL)
    with pytest.raises(MassMismatchException, match='total masses'):
        w2_exact(make_measure(domain, Uniform(1.0)), make_measure(domain, Uniform(2.0)))


@override_settings(TRANSPORT_BOUNDS_MAX_COUPLING_PAIRS=10)
def test_w2_exact_too_large__raise():
    domain = GridDomain((4,), (1.0,))
    mu = make_measure(domain, Uniform(1.0))
    with pytest.raises(ProblemTooLargeException, match='above the limit of 10 pairs'):
        w2_exact(mu, mu)


def test_w2_exact_solver_failure__raise(mocker):
    domain = GridDomain((4,), (1.0,))
    mu, nu = random_pair(domain, 0)
    mocker.patch('transport_bounds.wasserstein.ot.emd', return_value=(
        np.zeros((4, 4)), {'result_code': 0, 'warning': 'numItermax reached before optimality', 'cost': 0.0},
    ))
    with pytest.raises(TransportSolverException, match='numItermax'):
        w2_exact(mu, nu)


def test_w2_1d_translation__ok():
    domain = GridDomain((40,), (1.0,), Boundary.INTERVAL)
    values = np.zeros(40)
    shifted = np.zeros(40)
    values[:20] = 1.0
    shifted[10:30] = 1.0
    mu, nu = Density(domain, values), Density(domain, shifted)
    # half the unit mass moves by a quarter
    assert w2_1d(mu, nu) == pytest.approx(0.25 * math.sqrt(0.5), rel=1e-12)
    assert w2_1d(mu, nu, atoms=True) == pytest.approx(0.25 * math.sqrt(0.5), rel=1e-12)


def test_w2_1d_total_above_cumulative__ok(mocker):
    domain = GridDomain((4,), (1.0,), Boundary.INTERVAL)
    mu = Density(domain, [2.0, 2.0, 0.0, 0.0])
    nu = Density(domain, [0.0, 0.0, 2.0, 2.0])
    # the summed total may exceed the last cumulative mass by an ulp
    total = 1.0 + 2.0 ** -52
    mocker.patch('transport_bounds.wasserstein.check_same_mass', return_value=(total, total))
    segments = quantile_segments(mu, nu)
    assert np.all(np.isfinite(segments.mu_end)) and np.all(np.isfinite(segments.nu_end))
    assert np.sum(segments.lengths) == 1.0
    assert w2_1d(mu, nu) == pytest.approx(0.5, rel=1e-12)


def test_w2_1d_vanishing_target__ok():
    domain = GridDomain((128,), (1.0,), Boundary.INTERVAL)
    rng = np.random.default_rng(3)
    for seed in range(40):
        mu = make_measure(domain, BoundedRandom(1.0, 4.0, seed=2 * seed))
        bump = Bump(float(rng.uniform(0.2, 0.7)), float(rng.uniform(0.02, 0.2)), total_mass(mu))
        nu = make_measure(domain, bump)
        assert not nu.values[-1]
        value = w2_1d(mu, nu)
        assert math.isfinite(value)
        assert value <= w2_1d(mu, nu, atoms=True) * (1 + 1e-12)
        assert w2_1d(nu, mu) == pytest.approx(value, rel=1e-9)


def test_w2_1d_atoms_match_lp__ok():
    rng = np.random.default_rng(0)
    for seed in range(200):
        domain = GridDomain((int(rng.integers(2, 33)),), (1.0,), Boundary.INTERVAL)
        mu, nu = random_pair(domain, seed)
        assert w2_1d(mu, nu, atoms=True) == pytest.approx(w2_exact(mu, nu)[0], rel=1e-8, abs=1e-12)


def test_w2_1d_cells_below_atoms__ok():
    domain = GridDomain((32,), (1.0,), Boundary.INTERVAL)
    for seed in range(20):
        mu, nu = random_pair(domain, seed)
        assert w2_1d(mu, nu) <= w2_1d(mu, nu, atoms=True) * (1 + 1e-12)


def test_w2_1d_torus__raise():
    domain = GridDomain((8,), (1.0,))
    mu = make_measure(domain, Uniform(1.0))
    with pytest.raises(InvalidDomainException, match='one-dimensional interval'):
        w2_1d(mu, mu)


@hypothesis_settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 64))
def test_w2_1d_metric__ok(seed, cells):
    domain = GridDomain((cells,), (1.0,), Boundary.INTERVAL)
    mu, nu = random_pair(domain, seed)
    _, rho = random_pair(domain, seed + 1)
    rho = Density(domain, rho.values * (total_mass(mu) / total_mass(rho)))
    assert w2_1d(mu, nu) == pytest.approx(w2_1d(nu, mu), rel=1e-9, abs=1e-12)
    assert w2_1d(mu, rho) <= w2_1d(mu, nu) + w2_1d(nu, rho) + 1e-9


def test_w2_to_atom__ok():
    domain = GridDomain((8, 8), (1.0, 1.0))
    mu = make_measure(domain, BoundedRandom(0.5, 2.0, seed=4))
    atom = make_measure(domain, DiracLike((4, 4), mass=total_mass(mu)))
    assert w2_to_atom(mu, (4, 4)) == pytest.approx(w2_exact(mu, atom)[0], rel=1e-10)


def test_diag_coupling__ok():
    domain = GridDomain((6,), (1.0,), Boundary.INTERVAL)
    mu = Density(domain, [0.0, 1.0, 2.0, 0.0, 3.0, 1.0])
    pi = diag_coupling(mu)
    assert coupling_cost(pi) == 0.0
    assert pi.row_marginal() == pytest.approx(mu.masses)
    assert pi.col_marginal() == pytest.approx(mu.masses)
    assert list(pi.rows) == [1, 2, 4, 5]


def test_coupling_negative_mass__raise():
    domain = GridDomain((2,), (1.0,))
    with pytest.raises(ValueError, match='nonnegative'):
        Coupling(domain, domain, [0], [1], [-1.0])


def test_coupling_from_triplets__ok():
    domain = GridDomain((3,), (1.0,))
    pi = Coupling.from_triplets(domain, domain, [0, 0, 1, 2], [1, 1, 2, 0], [0.25, 0.25, 0.0, 0.5])
    assert pi.to_json() == {'rows': [0, 2], 'cols': [1, 0], 'masses': [0.5, 0.5]}


@pytest.mark.parametrize('domain', [
    GridDomain((16,), (1.0,), Boundary.INTERVAL),
    GridDomain((5, 5), (1.0, 1.0)),
])
def test_lemma_coupling_transform__ok(domain):
    for seed in range(100):
        mu, nu = random_pair(domain, seed, low=0.5, high=2.0)
        rho = 0.25 + (seed % 7) / 4
        extra = BoundedRandom(0.0, 1.0, seed=seed).sample(domain)
        mu_prime = Density(domain, rho * mu.values + extra)
        _, pi = w2_exact(mu, nu)
        transformed = lemma_coupling_transform(pi, mu_prime, rho)
        assert coupling_cost(transformed) == pytest.approx(rho * coupling_cost(pi), rel=1e-12, abs=1e-15)
        assert transformed.row_marginal() == pytest.approx(mu_prime.masses, abs=1e-12)
        expected = mu_prime.masses + rho * (pi.col_marginal() - pi.row_marginal())
        assert transformed.col_marginal() == pytest.approx(expected, abs=1e-12)


def test_lemma_coupling_transform_domination__raise():
    domain = GridDomain((8,), (1.0,), Boundary.INTERVAL)
    mu, nu = random_pair(domain, 0, low=1.0, high=2.0)
    _, pi = w2_exact(mu, nu)
    with pytest.raises(DominationViolatedException, match='mu_prime < rho'):
        lemma_coupling_transform(pi, mu, 2.0)


def test_lemma_coupling_transform_bad_rho__raise():
    domain = GridDomain((8,), (1.0,), Boundary.INTERVAL)
    mu, nu = random_pair(domain, 0)
    _, pi = w2_exact(mu, nu)
    with pytest.raises(ValueError, match='rho must be positive'):
        lemma_coupling_transform(pi, mu, 0.0)
