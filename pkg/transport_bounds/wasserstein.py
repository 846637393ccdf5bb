"""Quadratic Wasserstein distance between cell measures.

``w2_exact`` places each cell's mass at its center and solves the balanced
transportation problem with the network simplex of POT. ``w2_1d`` integrates the
quantile functions in closed form on an interval; by default each cell's mass is
spread uniformly over the cell, which is the continuum distance between the two
piecewise-constant densities.
"""
from dataclasses import dataclass

import numpy as np
import ot
import scipy.sparse

from .conf import get_setting
from .grid import Boundary, DomainMismatchException, InvalidDomainException, check_same_domain


class Invalid:
    MASS_MISMATCH = 'Measures have total masses %(first)r and %(second)r, relative gap above %(tol)r'
    NOT_INTERVAL = 'Quantile transport needs a one-dimensional interval, got %(domain)s'
    TOO_LARGE = 'Transport problem couples %(rows)s x %(cols)s cells, above the limit of %(limit)s pairs'
    DOMINATION = 'mu_prime < rho * mu on %(count)s cells (largest deficit %(deficit)r)'
    SOLVER = 'Network simplex stopped without reaching optimality: %(warning)s'
    RHO = 'rho must be positive, got %(rho)r'
    NEGATIVE = 'Coupling masses must be nonnegative, smallest is %(value)r'


class MassMismatchException(ValueError):
    pass


class ProblemTooLargeException(RuntimeError):
    pass


class DominationViolatedException(ValueError):
    pass


class TransportSolverException(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Coupling:
    """Sparse nonnegative measure on cell pairs, stored as ``(rows, cols, masses)`` triplets."""

    row_domain: object
    col_domain: object
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        for name, dtype in (('rows', np.intp), ('cols', np.intp), ('masses', np.float64)):
            array = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.masses.size and self.masses.min() < 0:
            raise ValueError(Invalid.NEGATIVE % {'value': float(self.masses.min())})

    @classmethod
    def from_triplets(cls, row_domain, col_domain, rows, cols, masses):
        """Build a coupling, summing duplicate pairs and dropping empty ones."""
        matrix = scipy.sparse.coo_matrix(
            (masses, (rows, cols)), shape=(row_domain.size, col_domain.size),
        ).tocsr()
        matrix.eliminate_zeros()
        matrix = matrix.tocoo()
        return cls(row_domain, col_domain, matrix.row, matrix.col, matrix.data)

    def row_marginal(self):
        return np.bincount(self.rows, weights=self.masses, minlength=self.row_domain.size)

    def col_marginal(self):
        return np.bincount(self.cols, weights=self.masses, minlength=self.col_domain.size)

    def total_mass(self):
        return float(np.sum(self.masses))

    def to_json(self):
        return {'rows': self.rows.tolist(), 'cols': self.cols.tolist(), 'masses': self.masses.tolist()}


def check_same_mass(mu, nu):
    first, second = float(np.sum(mu.masses)), float(np.sum(nu.masses))
    tol = get_setting('TRANSPORT_BOUNDS_MASS_TOL')
    if abs(first - second) > tol * max(first, second):
        raise MassMismatchException(Invalid.MASS_MISMATCH % {'first': first, 'second': second, 'tol': tol})
    return first, second


def coupling_cost(pi):
    if pi.row_domain != pi.col_domain:
        raise DomainMismatchException('coupling between %s and %s has no common distance'
                                      % (pi.row_domain, pi.col_domain))
    domain = pi.row_domain
    delta = domain.displacements(domain.centers[pi.rows], domain.centers[pi.cols])
    return float(np.sum(np.einsum('ij,ij->i', delta, delta) * pi.masses))


def _quantiles(masses, cumulative, spacing, levels, atoms):
    """Value and slope of the left-continuous quantile function at interior ``levels``."""
    # rounding can push a level past the last occupied cell, never into an empty one
    last = np.flatnonzero(masses > 0)[-1]
    cell = np.minimum(np.searchsorted(cumulative, levels, side='right'), last)
    if atoms:
        return (cell + 0.5) * spacing, np.zeros(levels.size)
    start = np.concatenate([[0.0], cumulative[:-1]])[cell]
    slope = spacing / masses[cell]
    return cell * spacing + (levels - start) * slope, slope


@dataclass(frozen=True)
class QuantileSegments:
    """Common refinement of two quantile functions on an interval.

    On segment ``k`` (of mass ``lengths[k]``) both quantile functions are affine and run
    from ``*_start[k]`` to ``*_end[k]``.
    """

    lengths: np.ndarray
    mu_start: np.ndarray
    mu_end: np.ndarray
    nu_start: np.ndarray
    nu_end: np.ndarray


def quantile_segments(mu, nu, atoms=False):
    domain = check_same_domain(mu, nu)
    if domain.boundary is not Boundary.INTERVAL:
        raise InvalidDomainException(Invalid.NOT_INTERVAL % {'domain': domain})
    first, second = check_same_mass(mu, nu)
    if first == 0:
        empty = np.zeros(0)
        return QuantileSegments(empty, empty, empty, empty, empty)
    mu_masses = mu.masses
    nu_masses = nu.masses * (first / second)
    mu_cumulative, nu_cumulative = np.cumsum(mu_masses), np.cumsum(nu_masses)
    # cumsum and sum may disagree in the last ulp; the top level must be reached by both
    total = min(mu_cumulative[-1], nu_cumulative[-1])

    inner = np.concatenate([mu_cumulative[:-1], nu_cumulative[:-1]])
    inner = inner[(inner > 0) & (inner < total)]
    levels = np.unique(np.concatenate([[0.0, total], inner]))
    lengths = np.diff(levels)
    keep = lengths > 0
    lengths = lengths[keep]
    middles = ((levels[:-1] + levels[1:]) / 2)[keep]

    spacing = domain.spacing[0]
    mu_at, mu_slope = _quantiles(mu_masses, mu_cumulative, spacing, middles, atoms)
    nu_at, nu_slope = _quantiles(nu_masses, nu_cumulative, spacing, middles, atoms)
    return QuantileSegments(
        lengths=lengths,
        mu_start=mu_at - mu_slope * lengths / 2,
        mu_end=mu_at + mu_slope * lengths / 2,
        nu_start=nu_at - nu_slope * lengths / 2,
        nu_end=nu_at + nu_slope * lengths / 2,
    )


def w2_1d(mu, nu, atoms=False):
    segments = quantile_segments(mu, nu, atoms)
    start = segments.mu_start - segments.nu_start
    end = segments.mu_end - segments.nu_end
    # exact integral of the squared affine gap over each segment
    cost = np.sum(segments.lengths * (start * start + start * end + end * end)) / 3
    return float(np.sqrt(max(cost, 0.0)))


def w2_exact(mu, nu, log=False):
    """Exact W2 between cell-center atoms and an optimal coupling.

    With ``log=True`` a third value carries solver diagnostics.
    """
    domain = check_same_domain(mu, nu)
    first, second = check_same_mass(mu, nu)
    rows = np.flatnonzero(mu.values > 0)
    cols = np.flatnonzero(nu.values > 0)
    limit = get_setting('TRANSPORT_BOUNDS_MAX_COUPLING_PAIRS')
    if rows.size * cols.size > limit:
        raise ProblemTooLargeException(Invalid.TOO_LARGE % {'rows': rows.size, 'cols': cols.size, 'limit': limit})

    info = {'support': [int(rows.size), int(cols.size)], 'result_code': 1, 'warning': None, 'basis_size': 0}
    if first == 0:
        coupling = Coupling(domain, domain, [], [], [])
        info['cost'] = 0.0
        return (0.0, coupling, info) if log else (0.0, coupling)

    a = mu.masses[rows]
    b = nu.masses[cols] * (a.sum() / nu.masses[cols].sum())
    cost_matrix = np.ascontiguousarray(domain.squared_distances(rows, cols))
    plan, emd_log = ot.emd(a, b, cost_matrix, numItermax=get_setting('TRANSPORT_BOUNDS_EMD_MAX_ITER'), log=True)
    if emd_log['result_code'] != 1:
        raise TransportSolverException(Invalid.SOLVER % {'warning': emd_log['warning']})

    i, j = np.nonzero(plan)
    masses = plan[i, j]
    coupling = Coupling(domain, domain, rows[i], cols[j], masses)
    cost = float(np.sum(masses * cost_matrix[i, j]))
    value = float(np.sqrt(max(cost, 0.0)))
    if not log:
        return value, coupling
    info.update(cost=cost, result_code=int(emd_log['result_code']), warning=emd_log['warning'], basis_size=int(i.size))
    return value, coupling, info


def w2_to_atom(mu, cell):
    """W2 from ``mu`` to a single atom of the same mass at the center of ``cell``.

    The product coupling is the only one, so no optimization is involved.
    """
    domain = mu.domain
    target = domain.centers[domain.flat_index(cell)]
    delta = domain.displacements(domain.centers, target)
    return float(np.sqrt(np.sum(np.einsum('ij,ij->i', delta, delta) * mu.masses)))


def diag_coupling(m):
    cells = np.flatnonzero(m.values > 0)
    return Coupling(m.domain, m.domain, cells, cells, m.masses[cells])


def lemma_coupling_transform(pi, mu_prime, rho):
    """``rho * pi + diag(mu_prime - rho * mu)`` where ``mu`` is the row marginal of ``pi``.

    The result couples ``mu_prime`` with ``mu_prime + rho * (nu - mu)`` and costs ``rho * cost(pi)``.
    """
    if rho <= 0:
        raise ValueError(Invalid.RHO % {'rho': rho})
    domain = pi.row_domain
    if mu_prime.domain != domain or pi.col_domain != domain:
        raise DomainMismatchException('coupling on %s cannot be combined with a measure on %s'
                                      % (domain, mu_prime.domain))
    scaled = rho * pi.row_marginal()
    extra = mu_prime.masses - scaled
    # rounding slack only; any real deficit is rejected
    slack = 1e-12 * np.maximum(mu_prime.masses, scaled)
    deficit = extra < -slack
    if deficit.any():
        raise DominationViolatedException(Invalid.DOMINATION % {
            'count': int(deficit.sum()), 'deficit': float(-extra.min()),
        })
    extra = np.maximum(extra, 0.0)
    cells = np.flatnonzero(extra > 0)
    return Coupling.from_triplets(
        domain, domain,
        np.concatenate([pi.rows, cells]),
        np.concatenate([pi.cols, cells]),
        np.concatenate([rho * pi.masses, extra[cells]]),
    )
