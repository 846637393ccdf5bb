"""Linear and displacement interpolation between two measures, and the density bound audit."""
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .conf import get_setting
from .grid import Boundary, Density, check_same_domain, sup_density
from .wasserstein import check_same_mass, quantile_segments, w2_exact

DEFAULT_TIMES = tuple(k / 16 for k in range(17))


class Invalid:
    TIME = 'Interpolation times must lie in [0, 1], got %(t)r'
    HYPOTHESIS = 'Endpoint density %(sup)r exceeds the assumed bound %(bound)r at t=%(t)r'
    BOUND = 'Density bounds must be positive, got rho0=%(rho0)r rho1=%(rho1)r'
    DIMS = 'Dimension must be a positive integer, got %(n)r'
    VIOLATION = 'Density exceeds rho0^(1-t) rho1^t beyond tolerance %(tolerance)r at t=%(times)s'


class InvalidTimeException(ValueError):
    pass


class HypothesisViolatedException(ValueError):
    pass


class DensityBoundException(Exception):
    pass


class DensityBoundWarning(Warning):
    pass


class PathKind(enum.Enum):
    LINEAR = 'linear'
    DISPLACEMENT = 'displacement'


@dataclass(frozen=True, eq=False)
class MeasurePath:
    kind: PathKind
    endpoints: tuple
    samples: tuple

    @property
    def times(self):
        return tuple(t for t, _ in self.samples)

    def density_at(self, t):
        for time, density in self.samples:
            if time == t:
                return density
        raise KeyError(t)

    def to_json(self):
        return {
            'kind': self.kind.value,
            'samples': [{'t': t, 'density': density.to_json()} for t, density in self.samples],
        }


def _times(ts):
    if ts is None:
        return DEFAULT_TIMES
    times = tuple(float(t) for t in ts)
    for t in times:
        if not 0 <= t <= 1:
            raise InvalidTimeException(Invalid.TIME % {'t': t})
    return times


def linear_path(mu, nu, ts=None):
    domain = check_same_domain(mu, nu)
    check_same_mass(mu, nu)
    samples = tuple(
        (t, Density(domain, (1 - t) * mu.values + t * nu.values)) for t in _times(ts)
    )
    return MeasurePath(PathKind.LINEAR, (mu, nu), samples)


def _quantile_displacement(mu, nu):
    """Densities of the monotone rearrangement path on an interval.

    Each quantile segment moves as a uniform slab between its interpolated ends; the
    slabs are binned exactly through the cumulative mass at every cell face.
    """
    domain = mu.domain
    segments = quantile_segments(mu, nu)
    faces = np.arange(domain.size + 1) * domain.spacing[0]
    total = float(np.sum(segments.lengths))

    def at(t):
        start = (1 - t) * segments.mu_start + t * segments.nu_start
        end = (1 - t) * segments.mu_end + t * segments.nu_end
        width = end - start
        with np.errstate(divide='ignore', invalid='ignore'):
            covered = (faces[:, None] - start[None, :]) / width[None, :]
        # degenerate slabs are points; a point on a face belongs to the cell on its right
        covered = np.where(width[None, :] > 0, covered, (faces[:, None] > start[None, :]).astype(float))
        cumulative = np.clip(covered, 0.0, 1.0) @ segments.lengths
        cumulative[0], cumulative[-1] = 0.0, total
        masses = np.maximum(np.diff(cumulative), 0.0)
        return masses / domain.cell_volume

    return at


def _coupling_displacement(mu, nu):
    """Densities obtained by moving every atom of an optimal coupling along its geodesic."""
    domain = mu.domain
    _, coupling = w2_exact(mu, nu)
    sources = domain.centers[coupling.rows]
    delta = domain.displacements(sources, domain.centers[coupling.cols])

    def at(t):
        cells = domain.locate(sources + t * delta)
        masses = np.bincount(cells, weights=coupling.masses, minlength=domain.size)
        return masses / domain.cell_volume

    return at


def displacement_path(mu, nu, ts=None):
    domain = check_same_domain(mu, nu)
    check_same_mass(mu, nu)
    times = _times(ts)
    if domain.boundary is Boundary.INTERVAL:
        density_at = _quantile_displacement(mu, nu)
    else:
        density_at = _coupling_displacement(mu, nu)
    samples = tuple((t, Density(domain, density_at(t))) for t in times)
    return MeasurePath(PathKind.DISPLACEMENT, (mu, nu), samples)


def _check_bounds(rho0, rho1):
    if not rho0 > 0 or not rho1 > 0:
        raise ValueError(Invalid.BOUND % {'rho0': rho0, 'rho1': rho1})


def refined_density_bound(n, t, rho0, rho1):
    """Dimension-dependent bound ``((1-t) rho0^(-1/n) + t rho1^(-1/n))^(-n)``.

    Never larger than ``rho0^(1-t) rho1^t``; ``rho1`` may be infinite.
    """
    if int(n) != n or n < 1:
        raise ValueError(Invalid.DIMS % {'n': n})
    if not 0 <= t <= 1:
        raise InvalidTimeException(Invalid.TIME % {'t': t})
    _check_bounds(rho0, rho1)
    base = (1 - t) * rho0 ** (-1 / n) + t * rho1 ** (-1 / n)
    if base == 0:
        return math.inf
    return base ** -n


@dataclass(frozen=True)
class DensityBoundSample:
    t: float
    sup: float
    bound: float
    refined_bound: float
    flagged: bool

    def to_json(self):
        return {
            't': self.t, 'sup': self.sup, 'bound': self.bound,
            'refined_bound': self.refined_bound, 'flagged': self.flagged,
        }


@dataclass(frozen=True)
class DensityBoundAudit:
    samples: tuple
    tolerance: float

    @property
    def flagged(self):
        return tuple(sample for sample in self.samples if sample.flagged)

    @property
    def worst_ratio(self):
        return max((sample.sup / sample.bound for sample in self.samples), default=0.0)


def density_bound_audit(path, rho0, rho1, tolerance=None):
    """Compare ``sup mu_t`` against ``rho0^(1-t) rho1^t`` along a sampled path.

    Samples above the bound by more than ``tolerance`` (relative; ``10/N`` by default)
    are flagged and reported with ``DensityBoundWarning``, or raised as
    ``DensityBoundException`` when ``TRANSPORT_BOUNDS_RAISE_FOR_VIOLATION`` is set.
    """
    _check_bounds(rho0, rho1)
    mu, nu = path.endpoints
    for t, density, bound in ((0.0, mu, rho0), (1.0, nu, rho1)):
        if sup_density(density) > bound:
            raise HypothesisViolatedException(Invalid.HYPOTHESIS % {
                'sup': sup_density(density), 'bound': bound, 't': t,
            })
    domain = mu.domain
    if tolerance is None:
        tolerance = 10 / max(domain.cells)

    samples = []
    for t, density in path.samples:
        sup = sup_density(density)
        bound = rho0 ** (1 - t) * rho1 ** t
        samples.append(DensityBoundSample(
            t=t,
            sup=sup,
            bound=bound,
            refined_bound=refined_density_bound(domain.dims, t, rho0, rho1),
            flagged=bool(sup > bound * (1 + tolerance)),
        ))
    audit = DensityBoundAudit(tuple(samples), tolerance)

    if audit.flagged:
        message = Invalid.VIOLATION % {
            'tolerance': tolerance, 'times': ', '.join('%g' % sample.t for sample in audit.flagged),
        }
        if get_setting('TRANSPORT_BOUNDS_RAISE_FOR_VIOLATION'):
            raise DensityBoundException(message)
        warnings.warn(DensityBoundWarning(message))
    return audit
