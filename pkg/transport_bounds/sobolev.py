"""Weighted homogeneous Sobolev seminorm and its dual norm on cell grids.

The discrete Dirichlet form is ``E_w(f) = sum_faces c_f (f_i - f_j)^2`` with
``c_f = w_f * cell_volume / h_axis^2`` and ``w_f`` the harmonic mean of the two
adjacent cell weights. Interval ends carry no face (zero flux); torus axes wrap.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.linalg import cg

from .conf import get_setting
from .grid import Boundary, InvalidDomainException, InvalidMeasureException, ScalarField, check_same_domain


class Invalid:
    NON_POSITIVE_WEIGHT = 'Weight must be strictly positive, found %(count)s nonpositive cells (min %(value)r)'
    NON_ZERO_MASS = 'Source has total mass %(mass)r, above the neutrality tolerance %(limit)r'
    NO_CONVERGENCE = 'Conjugate gradient stopped after %(iterations)s iterations with relative residual ' \
                     '%(residual)r > %(tol)r'
    CONSTANT_FIELD = 'Test field has zero weighted Dirichlet energy'
    TOO_LARGE = 'Dense oracle limited to %(limit)s cells, domain has %(size)s'
    NOT_INTERVAL = 'Closed-form dual norm needs a one-dimensional interval, got %(domain)s'


class NonPositiveWeightException(InvalidMeasureException):
    pass


class NonZeroMassException(ValueError):
    pass


class NoConvergenceException(RuntimeError):
    pass


class ConstantFieldException(ZeroDivisionError):
    pass


def _face_pairs(domain):
    """Yield ``(axis, left, right)`` flat index arrays for every face of the grid."""
    index = np.arange(domain.size).reshape(domain.shape)
    for axis in range(domain.dims):
        if domain.is_torus:
            left, right = index, np.roll(index, -1, axis=axis)
        else:
            count = domain.shape[axis]
            left = np.take(index, np.arange(count - 1), axis=axis)
            right = np.take(index, np.arange(1, count), axis=axis)
        yield axis, left.reshape(-1), right.reshape(-1)


@dataclass(frozen=True, eq=False)
class WeightedLaplacian:
    domain: object
    weight: object
    left: np.ndarray
    right: np.ndarray
    face_weights: np.ndarray
    coefficients: np.ndarray

    @classmethod
    def from_weight(cls, weight):
        values = weight.values
        if values.min() <= 0:
            raise NonPositiveWeightException(Invalid.NON_POSITIVE_WEIGHT % {
                'count': int(np.sum(values <= 0)), 'value': float(values.min()),
            })
        domain = weight.domain
        lefts, rights, coefficients, face_weights = [], [], [], []
        for axis, left, right in _face_pairs(domain):
            w_left, w_right = values[left], values[right]
            harmonic = 2 * w_left * w_right / (w_left + w_right)
            lefts.append(left)
            rights.append(right)
            face_weights.append(harmonic)
            coefficients.append(harmonic * domain.cell_volume / domain.spacing[axis] ** 2)
        return cls(
            domain=domain,
            weight=weight,
            left=np.concatenate(lefts),
            right=np.concatenate(rights),
            face_weights=np.concatenate(face_weights),
            coefficients=np.concatenate(coefficients),
        )

    def energy(self, values):
        jumps = values[self.left] - values[self.right]
        return float(np.sum(self.coefficients * jumps * jumps))

    def matrix(self):
        """Sparse symmetric positive semidefinite operator with zero row sums."""
        c = self.coefficients
        rows = np.concatenate([self.left, self.right, self.left, self.right])
        cols = np.concatenate([self.left, self.right, self.right, self.left])
        data = np.concatenate([c, c, -c, -c])
        size = self.domain.size
        return scipy.sparse.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


@dataclass(frozen=True)
class PoissonSolution:
    potential: ScalarField
    iterations: int
    residual: float


def h1_seminorm(f, w):
    check_same_domain(f, w)
    return float(np.sqrt(max(WeightedLaplacian.from_weight(w).energy(f.values), 0.0)))


def _neutral_source(sigma):
    """Cell masses of ``sigma`` with its (tolerated) total mass removed."""
    masses = sigma.masses
    mass = float(np.sum(masses))
    limit = get_setting('TRANSPORT_BOUNDS_NEUTRALITY_TOL') * float(np.sum(np.abs(masses)))
    if abs(mass) > limit:
        raise NonZeroMassException(Invalid.NON_ZERO_MASS % {'mass': mass, 'limit': limit})
    return masses - mass / masses.size


def weighted_poisson_solve(sigma, w, tol=None):
    """Zero-mean solution of ``L_w phi = sigma * cell_volume`` by Jacobi-preconditioned CG."""
    domain = check_same_domain(sigma, w)
    if tol is None:
        tol = get_setting('TRANSPORT_BOUNDS_POISSON_TOL')
    maxiter = get_setting('TRANSPORT_BOUNDS_POISSON_MAXITER_FACTOR') * domain.size
    laplacian = WeightedLaplacian.from_weight(w)
    rhs = _neutral_source(sigma)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0:
        return PoissonSolution(ScalarField(domain, np.zeros(domain.size)), 0, 0.0)

    matrix = laplacian.matrix()
    preconditioner = scipy.sparse.diags(1 / matrix.diagonal())
    iterations = []
    solution, info = cg(
        matrix, rhs, rtol=tol, atol=0.0, maxiter=maxiter, M=preconditioner,
        callback=lambda xk: iterations.append(1),
    )
    residual = float(np.linalg.norm(rhs - matrix @ solution)) / rhs_norm
    if info != 0:
        raise NoConvergenceException(Invalid.NO_CONVERGENCE % {
            'iterations': len(iterations), 'residual': residual, 'tol': tol,
        })
    solution = solution - solution.mean()
    return PoissonSolution(ScalarField(domain, solution), len(iterations), residual)


def dense_poisson_solve(sigma, w):
    """Dense direct solve of the same system; oracle for ``weighted_poisson_solve``."""
    domain = check_same_domain(sigma, w)
    limit = get_setting('TRANSPORT_BOUNDS_DENSE_ORACLE_MAX_CELLS')
    if domain.size > limit:
        raise ValueError(Invalid.TOO_LARGE % {'limit': limit, 'size': domain.size})
    matrix = WeightedLaplacian.from_weight(w).matrix().toarray()
    rhs = _neutral_source(sigma)
    # adding the constants projector makes the system definite and forces a zero-mean solution
    solution = scipy.linalg.solve(matrix + 1.0, rhs, assume_a='pos')
    return ScalarField(domain, solution - solution.mean())


def hminus1_norm(sigma, w, tol=None):
    return h1_seminorm(weighted_poisson_solve(sigma, w, tol).potential, w)


def duality_gap_check(sigma, w, f):
    """Ratio ``|<f, sigma>| / |f|_{H^1(w)}``; never exceeds ``hminus1_norm(sigma, w)`` beyond solver tolerance."""
    check_same_domain(sigma, w, f)
    seminorm = h1_seminorm(f, w)
    if seminorm == 0:
        raise ConstantFieldException(Invalid.CONSTANT_FIELD)
    pairing = float(np.dot(f.values, _neutral_source(sigma)))
    return abs(pairing) / seminorm


def interval_hminus1_norm(sigma, w):
    """Continuum ``|sigma|_{H^-1(w)}`` on an interval for cellwise constant ``sigma`` and ``w``.

    The flux ``J`` with ``J' = sigma`` and zero ends is piecewise linear, running from the
    cumulative mass ``F_k`` at the left face of cell ``k`` to ``F_{k+1}``, so
    ``int J^2 / w = sum_k h (F_k^2 + F_k F_{k+1} + F_{k+1}^2) / (3 w_k)`` exactly. The
    harmonic-face discretization behind ``hminus1_norm`` uses ``(F_k^2 + F_{k+1}^2) / 2`` instead and never
    falls below this value; the two agree to ``O(h^2)``.
    """
    domain = check_same_domain(sigma, w)
    if domain.boundary is not Boundary.INTERVAL or domain.dims != 1:
        raise InvalidDomainException(Invalid.NOT_INTERVAL % {'domain': domain})
    values = w.values
    if values.min() <= 0:
        raise NonPositiveWeightException(Invalid.NON_POSITIVE_WEIGHT % {
            'count': int(np.sum(values <= 0)), 'value': float(values.min()),
        })
    faces = np.concatenate([[0.0], np.cumsum(_neutral_source(sigma))])
    faces[-1] = 0.0
    left, right = faces[:-1], faces[1:]
    energy = domain.spacing[0] * np.sum((left * left + left * right + right * right) / values) / 3
    return float(np.sqrt(max(energy, 0.0)))
