"""Comparison inequalities between W2 and weighted negative Sobolev norms.

Every check evaluates both sides of one inequality on a concrete instance and returns
a ``CheckReport``. Its ``passed`` flag is ``lhs <= rhs * (1 + tolerance)``; checks
with an exact side condition pass it as ``holds`` and fail when it does not.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from .conf import get_setting
from .grid import Boundary, Density, DiracLike, GridDomain, Uniform, make_measure, signed_difference, sup_density
from .interpolation import (
    HypothesisViolatedException, density_bound_audit, displacement_path, linear_path, refined_density_bound,
)
from .sobolev import dense_poisson_solve, h1_seminorm, hminus1_norm, interval_hminus1_norm, weighted_poisson_solve
from .wasserstein import (
    DominationViolatedException, coupling_cost, lemma_coupling_transform, w2_1d, w2_exact, w2_to_atom,
)


class Invalid:
    POSITIVE_WEIGHT = 'mu must be strictly positive for the weighted norm, smallest value is %(value)r'
    LOWER_BOUND = 'mu >= rho fails: smallest value %(value)r < rho=%(rho)r'
    UPPER_BOUND = 'sup %(name)s = %(sup)r exceeds %(bound_name)s=%(bound)r'
    DOMINATION = "w' >= rho * w fails on %(count)s cells"
    RHO = 'rho must be positive, got %(rho)r'
    PREFACTOR = 'Density bounds must be positive, got rho0=%(rho0)r rho1=%(rho1)r'
    BOUNDARY = '%(check)s needs the %(expected)s boundary, got %(domain)s'
    EPSILONS = 'Linearization needs at least two decreasing epsilons, got %(epsilons)s'
    PERTURBATION = 'mu + %(epsilon)r * sigma is not strictly positive'
    CROSS_CHECK = '%(quantity)s disagrees between independent solvers: %(first)r vs %(second)r'
    NON_FINITE = '%(check)s produced a non-finite side: lhs=%(lhs)r rhs=%(rhs)r'
    SCAN_ROWS = 'Counterexample scan needs at least two sizes, got %(count)s'


class CrossCheckException(RuntimeError):
    pass


class NonFiniteReportException(ArithmeticError):
    pass


# independent solver paths must agree this closely
CROSS_CHECK_RTOL = 1e-8
# exact identities are only allowed rounding error
IDENTITY_RTOL = 1e-12
# Gauss-Legendre nodes for the path integral along the linear interpolation
PATH_NODES = 12


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    instance: dict
    lhs: float
    rhs: float
    ratio: float
    tolerance: float
    passed: bool
    extras: dict = field(default_factory=dict)

    @classmethod
    def build(cls, check_name, instance, lhs, rhs, tolerance, holds=True, **extras):
        lhs, rhs = float(lhs), float(rhs)
        if not (math.isfinite(lhs) and math.isfinite(rhs)):
            raise NonFiniteReportException(Invalid.NON_FINITE % {'check': check_name, 'lhs': lhs, 'rhs': rhs})
        if rhs > 0:
            ratio = lhs / rhs
        else:
            ratio = 0.0 if lhs <= 0 else math.inf
        return cls(
            check_name=check_name,
            instance=dict(instance or {}),
            lhs=lhs,
            rhs=rhs,
            ratio=ratio,
            tolerance=float(tolerance),
            passed=bool(lhs <= rhs * (1 + tolerance) and holds),
            extras=extras,
        )

    def to_json(self):
        return {
            'check_name': self.check_name,
            'instance': self.instance,
            'lhs': self.lhs,
            'rhs': self.rhs,
            'ratio': self.ratio,
            'tolerance': self.tolerance,
            'passed': self.passed,
            'extras': self.extras,
        }


def _tolerance(tolerance):
    if tolerance is None:
        return get_setting('TRANSPORT_BOUNDS_CHECK_TOLERANCE')
    return float(tolerance)


def _agree(quantity, first, second):
    if abs(first - second) > CROSS_CHECK_RTOL * max(1.0, abs(first), abs(second)):
        raise CrossCheckException(Invalid.CROSS_CHECK % {'quantity': quantity, 'first': first, 'second': second})


def _w2(mu, nu, cross_check=False):
    """W2 with its diagnostics: quantile formula on an interval, exact LP otherwise."""
    domain = mu.domain
    if domain.boundary is Boundary.INTERVAL:
        value = w2_1d(mu, nu)
        extras = {'w2_method': 'quantile'}
        if cross_check:
            atoms = w2_1d(mu, nu, atoms=True)
            exact, _ = w2_exact(mu, nu)
            _agree('W2 between cell-center atoms', atoms, exact)
            extras['w2_atoms'] = exact
        return value, extras

    value, coupling, info = w2_exact(mu, nu, log=True)
    extras = {'w2_method': 'network_simplex', 'w2_basis_size': info['basis_size']}
    if cross_check:
        _agree('coupling row marginal', 0.0, float(np.max(np.abs(coupling.row_marginal() - mu.masses))))
        scale = np.sum(mu.masses) / np.sum(nu.masses)
        _agree('coupling column marginal', 0.0, float(np.max(np.abs(coupling.col_marginal() - nu.masses * scale))))
        _agree('coupling cost', value ** 2, coupling_cost(coupling))
    return value, extras


def _hminus1(sigma, w, cross_check=False):
    solution = weighted_poisson_solve(sigma, w)
    value = h1_seminorm(solution.potential, w)
    extras = {'hminus1_iterations': solution.iterations, 'hminus1_residual': solution.residual}
    if cross_check and w.domain.size <= get_setting('TRANSPORT_BOUNDS_DENSE_ORACLE_MAX_CELLS'):
        dense = h1_seminorm(dense_poisson_solve(sigma, w), w)
        _agree('H^-1 norm', value, dense)
        extras['hminus1_dense'] = dense
    return value, extras


def _unit_weight(domain):
    return Density(domain, np.ones(domain.size))


def _require_boundary(check_name, domain, boundary):
    if domain.boundary is not boundary:
        raise HypothesisViolatedException(Invalid.BOUNDARY % {
            'check': check_name, 'expected': boundary.value, 'domain': domain,
        })


def _require_upper(name, density, bound_name, bound):
    sup = sup_density(density)
    if sup > bound:
        raise HypothesisViolatedException(Invalid.UPPER_BOUND % {
            'name': name, 'sup': sup, 'bound_name': bound_name, 'bound': bound,
        })


def path_integral(mu, nu, nodes=PATH_NODES):
    """``int_0^1 |nu - mu|_{H^-1(mu_t)} dt`` along the linear interpolation ``mu_t``.

    Integrated in ``s`` with ``t = 1 - s^2``, which absorbs the ``(1 - t)^(-1/2)`` growth
    of the integrand when ``nu`` vanishes on some cells. Returns the value and the times used.
    """
    points, weights = np.polynomial.legendre.leggauss(nodes)
    s = (points + 1) / 2
    ts = 1 - s * s
    path = linear_path(mu, nu, ts)
    sigma = signed_difference(nu, mu)
    norms = np.array([hminus1_norm(sigma, density) for _, density in path.samples])
    # dt = 2 s ds and the Legendre weights sum to two on (-1, 1)
    return float(np.sum(weights * s * norms)), [float(t) for t in path.times]


def check_thm1(mu, nu, tolerance=None, instance=None, cross_check=False):
    """``W2(mu, nu) <= 2 |nu - mu|_{H^-1(mu)}``.

    The bound passes through ``int_0^1 |nu - mu|_{H^-1(mu_t)} dt`` along the linear path:
    that integral never exceeds ``2 |nu - mu|_{H^-1(mu)}`` because ``mu_t >= (1 - t) mu``,
    and on an interval it dominates W2. Both links of the chain must hold for the report
    to pass; on a torus the link to W2 is reported but not enforced.
    """
    if mu.values.min() <= 0:
        raise HypothesisViolatedException(Invalid.POSITIVE_WEIGHT % {'value': float(mu.values.min())})
    tolerance = _tolerance(tolerance)
    w2, extras = _w2(mu, nu, cross_check)
    norm, norm_extras = _hminus1(signed_difference(nu, mu), mu, cross_check)
    integral, times = path_integral(mu, nu)
    below_bound = integral <= 2 * norm * (1 + tolerance)
    above_w2 = w2 <= integral * (1 + tolerance)
    holds = below_bound and (above_w2 or mu.domain.boundary is not Boundary.INTERVAL)
    return CheckReport.build(
        'check_thm1', instance, w2, 2 * norm, tolerance, holds=holds,
        path_integral=integral, path_times=times, path_below_bound=below_bound, path_above_w2=above_w2,
        **extras, **norm_extras,
    )


def check_cor1(mu, nu, rho, tolerance=None, instance=None, cross_check=False):
    """``W2(mu, nu) <= 2 rho^(-1/2) |nu - mu|_{H^-1}`` when ``mu >= rho``."""
    if rho <= 0:
        raise HypothesisViolatedException(Invalid.RHO % {'rho': rho})
    if mu.values.min() < rho:
        raise HypothesisViolatedException(Invalid.LOWER_BOUND % {'value': float(mu.values.min()), 'rho': rho})
    w2, extras = _w2(mu, nu, cross_check)
    norm, norm_extras = _hminus1(signed_difference(nu, mu), _unit_weight(mu.domain), cross_check)
    return CheckReport.build(
        'check_cor1', instance, w2, 2 * norm / math.sqrt(rho), _tolerance(tolerance), **extras, **norm_extras,
    )


def check_lemma_qq(sigma, w, w_prime, rho, tolerance=None, instance=None):
    """``|sigma|_{H^-1(w')} <= rho^(-1/2) |sigma|_{H^-1(w)}`` when ``w' >= rho * w``."""
    if rho <= 0:
        raise HypothesisViolatedException(Invalid.RHO % {'rho': rho})
    deficit = w_prime.values < rho * w.values
    if deficit.any():
        raise DominationViolatedException(Invalid.DOMINATION % {'count': int(deficit.sum())})
    lhs = hminus1_norm(sigma, w_prime)
    rhs = hminus1_norm(sigma, w) / math.sqrt(rho)
    return CheckReport.build('check_lemma_qq', instance, lhs, rhs, _tolerance(tolerance))


def thm2_prefactor(rho0, rho1):
    """``2 (sqrt(rho1) - sqrt(rho0)) / ln(rho1 / rho0)``, the logarithmic mean of the square roots."""
    if not rho0 > 0 or not rho1 > 0:
        raise ValueError(Invalid.PREFACTOR % {'rho0': rho0, 'rho1': rho1})
    u = math.log(rho1 / rho0)
    if abs(u) < 1e-6:
        return math.sqrt(rho0) * (1 + u / 4)
    return 2 * math.sqrt(rho0) * math.expm1(u / 2) / u


def refined_prefactor(n, rho0, rho1):
    """Integral over ``t`` of the square root of the dimensional density bound.

    Replaces ``thm2_prefactor`` when the geometric-mean density bound is swapped for the
    dimension-dependent one; ``rho1`` may be infinite.
    """
    value, _ = scipy.integrate.quad(
        lambda t: math.sqrt(refined_density_bound(n, t, rho0, rho1)), 0.0, 1.0,
        epsabs=0.0, epsrel=1e-10, limit=200,
    )
    return value


def check_thm2(mu, nu, rho0=None, rho1=None, tolerance=None, instance=None, cross_check=False):
    """``|nu - mu|_{H^-1} <= thm2_prefactor(rho0, rho1) * W2(mu, nu)`` on a flat torus."""
    domain = mu.domain
    _require_boundary('check_thm2', domain, Boundary.TORUS)
    rho0 = sup_density(mu) if rho0 is None else rho0
    rho1 = sup_density(nu) if rho1 is None else rho1
    _require_upper('mu', mu, 'rho0', rho0)
    _require_upper('nu', nu, 'rho1', rho1)
    norm, extras = _hminus1(signed_difference(nu, mu), _unit_weight(domain), cross_check)
    w2, w2_extras = _w2(mu, nu, cross_check)
    if rho0 > 0 and rho1 > 0:
        prefactor = thm2_prefactor(rho0, rho1)
        extras['refined_prefactor'] = refined_prefactor(domain.dims, rho0, rho1)
    else:
        # an empty endpoint forces both measures to vanish
        prefactor = 0.0
    extras['prefactor'] = prefactor
    return CheckReport.build('check_thm2', instance, norm, prefactor * w2, _tolerance(tolerance), **extras, **w2_extras)


def check_thm3(mu, nu, rho0=None, tolerance=None, instance=None, cross_check=False):
    """``|nu - mu|_{H^-1} <= 2 sqrt(rho0) W2(mu, nu)`` on an interval, with no bound on ``nu``."""
    domain = mu.domain
    _require_boundary('check_thm3', domain, Boundary.INTERVAL)
    rho0 = sup_density(mu) if rho0 is None else rho0
    _require_upper('mu', mu, 'rho0', rho0)
    norm, extras = _hminus1(signed_difference(nu, mu), _unit_weight(domain), cross_check)
    w2, w2_extras = _w2(mu, nu, cross_check)
    return CheckReport.build(
        'check_thm3', instance, norm, 2 * math.sqrt(rho0) * w2, _tolerance(tolerance), **extras, **w2_extras,
    )


@dataclass(frozen=True)
class CounterexampleRow:
    cells: int
    w2: float
    w2_analytic: float
    hminus1: float
    method: str

    def to_json(self):
        return {
            'cells': self.cells, 'w2': self.w2, 'w2_squared': self.w2 ** 2,
            'w2_analytic': self.w2_analytic, 'hminus1': self.hminus1, 'method': self.method,
        }


def counterexample_scan(sizes=(8, 16, 32, 64), extent=1.0, lp_max_cells=1024):
    """Uniform measure against a single-cell atom on a 2-D torus, refined over ``sizes``.

    W2 stays bounded while the negative Sobolev norm of the difference keeps growing.
    Above ``lp_max_cells`` cells only the analytic transport formula is used.
    """
    rows = []
    for n in sizes:
        domain = GridDomain((n, n), (extent, extent), Boundary.TORUS)
        mu = make_measure(domain, Uniform(1.0))
        atom = (n // 2, n // 2)
        nu = make_measure(domain, DiracLike(atom, mass=extent * extent))
        analytic = w2_to_atom(mu, atom)
        if domain.size <= lp_max_cells:
            w2, _ = w2_exact(mu, nu)
            method = 'network_simplex'
        else:
            w2, method = analytic, 'single_atom'
        norm = hminus1_norm(signed_difference(nu, mu), mu)
        rows.append(CounterexampleRow(n, w2, analytic, norm, method))
    return tuple(rows)


def counterexample_reports(rows, extent=1.0, tolerance=0.05, instance=None):
    """Certify the scan: strictly growing negative norm, and W2 squared near its continuum limit."""
    if len(rows) < 2:
        raise ValueError(Invalid.SCAN_ROWS % {'count': len(rows)})
    instance = dict(instance or {}, sizes=[row.cells for row in rows])
    norms = [row.hminus1 for row in rows]
    # ratio of consecutive norms; strictly increasing means every ratio is below one
    growth = max(norms[k] / norms[k + 1] for k in range(len(norms) - 1))
    increments = [b - a for a, b in zip(norms, norms[1:])]
    strictly_increasing = all(d > 0 for d in increments)
    monotone = CheckReport.build(
        'counterexample_scan', instance, growth, 1.0, 0.0, holds=strictly_increasing,
        hminus1=norms, increments=increments, strictly_increasing=strictly_increasing,
    )
    limit = extent ** 4 / 6
    last = rows[-1]
    gap = abs(last.w2 ** 2 - limit) / limit
    converged = CheckReport.build(
        'counterexample_scan_w2_limit', instance, gap, tolerance, 0.0,
        w2_squared=[row.w2 ** 2 for row in rows], limit=limit,
        lp_gap=max(abs(row.w2 - row.w2_analytic) for row in rows),
    )
    return [monotone, converged]


def check_linearization(mu, sigma, epsilons=(1e-1, 1e-2, 1e-3), instance=None):
    """``W2(mu, mu + eps sigma) / |eps sigma|_{H^-1(mu)}`` approaches one as ``eps`` shrinks.

    The norm is the closed-form continuum one, matching the slab transport of ``w2_1d``,
    so ``|r - 1| = O(eps)`` with no floor from the grid. Passes when ``|r - 1|`` never
    grows from one epsilon to the next. The band ``|r - 1| <= 5 eps C`` with ``C``
    measured at the largest epsilon, and the ratios against the harmonic-face norm of
    ``hminus1_norm``, are reported in extras.
    """
    domain = mu.domain
    _require_boundary('check_linearization', domain, Boundary.INTERVAL)
    epsilons = tuple(float(e) for e in epsilons)
    if len(epsilons) < 2 or any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError(Invalid.EPSILONS % {'epsilons': epsilons})
    if mu.values.min() <= 0:
        raise HypothesisViolatedException(Invalid.POSITIVE_WEIGHT % {'value': float(mu.values.min())})
    norm = interval_hminus1_norm(sigma, mu)
    discrete = hminus1_norm(sigma, mu)
    distances = []
    for epsilon in epsilons:
        values = mu.values + epsilon * sigma.values
        if values.min() <= 0:
            raise HypothesisViolatedException(Invalid.PERTURBATION % {'epsilon': epsilon})
        distances.append(w2_1d(mu, Density(domain, values)) / epsilon)
    ratios = [distance / norm for distance in distances]
    errors = [abs(r - 1) for r in ratios]
    constant = errors[0] / epsilons[0]
    pairs = list(zip(errors, errors[1:]))
    steps = [b / a for a, b in pairs if a > 0]
    return CheckReport.build(
        'check_linearization', instance, max(steps, default=0.0), 1.0, 0.0,
        # an error that was exactly zero may not come back
        holds=all(b == 0 for a, b in pairs if a == 0),
        epsilons=list(epsilons), ratios=ratios, constant=constant,
        within_band=all(err <= 5 * eps * constant for eps, err in zip(epsilons[1:], errors[1:])),
        discrete_ratios=[distance / discrete for distance in distances],
        discretization_gap=discrete / norm - 1,
    )


def check_coupling_transform(mu, nu, mu_prime, rho, tolerance=None, instance=None):
    """``rho pi + diag(mu' - rho mu)`` couples ``mu'`` with ``mu' + rho (nu - mu)`` at cost ``rho I[pi]``.

    The report compares ``W2(mu', mu' + rho (nu - mu))^2`` with that cost, and fails
    unless the cost identity holds to rounding error.
    """
    domain = mu.domain
    w2, pi = w2_exact(mu, nu)
    transformed = lemma_coupling_transform(pi, mu_prime, rho)
    target = Density(domain, transformed.col_marginal() / domain.cell_volume)
    cost = coupling_cost(transformed)
    expected = rho * coupling_cost(pi)
    w2_target, _ = w2_exact(mu_prime, target)
    expected_target = mu_prime.masses + rho * (pi.col_marginal() - pi.row_marginal())
    identity_gap = abs(cost - expected)
    return CheckReport.build(
        'check_coupling_transform', instance, w2_target ** 2, cost, _tolerance(tolerance),
        holds=identity_gap <= IDENTITY_RTOL * max(cost, expected),
        identity_gap=identity_gap, scaled_cost=expected, w2=w2,
        marginal_gap=float(np.max(np.abs(transformed.col_marginal() - expected_target))),
    )


def check_density_bound(mu, nu, ts=None, tolerance=None, instance=None):
    """Audit ``sup mu_t`` along the displacement path against both density bounds."""
    domain = mu.domain
    rho0, rho1 = sup_density(mu), sup_density(nu)
    path = displacement_path(mu, nu, ts)
    audit = density_bound_audit(path, rho0, rho1, tolerance)
    samples = [sample.to_json() for sample in audit.samples]
    geometric = CheckReport.build(
        'check_density_bound', instance, audit.worst_ratio, 1.0, audit.tolerance,
        rho0=rho0, rho1=rho1, samples=samples,
    )
    refined_ratio = max(sample.sup / sample.refined_bound for sample in audit.samples)
    refined = CheckReport.build(
        'check_density_bound_refined', instance, refined_ratio, 1.0, audit.tolerance,
        rho0=rho0, rho1=rho1, dims=domain.dims,
    )
    return [geometric, refined]
