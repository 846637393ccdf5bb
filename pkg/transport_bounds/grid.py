import enum
import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np


class Invalid:
    DIMS = 'Domain needs at least one dimension and as many extents as cell counts, got cells=%(cells)s ' \
           'extents=%(extents)s'
    CELLS = 'Cell counts must be positive integers, got %(cells)s'
    EXTENTS = 'Extents must be positive finite reals, got %(extents)s'
    INTERVAL_DIMS = 'Interval boundary is only supported in one dimension, got dims=%(dims)s'
    SIZE = 'Expected %(expected)s cell values for domain %(domain)s, got %(actual)s'
    NOT_FINITE = '%(kind)s values must be finite'
    NEGATIVE = 'Density values must be nonnegative, smallest value is %(value)r'
    DOMAIN_MISMATCH = 'Fields live on different domains: %(first)s and %(second)s'
    BOUNDS = 'Generator bounds are inverted: rho_min=%(rho_min)r > rho_max=%(rho_max)r'
    NEGATIVE_LEVEL = 'Generator density levels must be nonnegative, got %(value)r'
    MASS = 'Generator mass must be positive, got %(mass)r'
    NARROW_BUMP = 'Bump of width %(width)r around %(center)s does not cover any cell center'
    UNKNOWN_GENERATOR = 'Unknown generator %(kind)r, expected one of %(kinds)s'


class InvalidDomainException(ValueError):
    pass


class InvalidMeasureException(ValueError):
    pass


class DomainMismatchException(ValueError):
    pass


class Boundary(enum.Enum):
    INTERVAL = 'interval'
    TORUS = 'torus'


def _as_tuple(value):
    if np.ndim(value) == 0:
        return (value,)
    return tuple(value)


@dataclass(frozen=True)
class GridDomain:
    """Uniform cell grid on an interval (reflecting ends) or a flat torus.

    Cells are indexed row-major; cell ``k`` along an axis has its center at
    ``(k + 1/2) * spacing``.
    """

    cells: tuple
    extents: tuple
    boundary: Boundary = Boundary.TORUS

    def __post_init__(self):
        cells = _as_tuple(self.cells)
        extents = _as_tuple(self.extents)
        if not cells or len(cells) != len(extents):
            raise InvalidDomainException(Invalid.DIMS % {'cells': cells, 'extents': extents})
        if any(int(c) != c or c < 1 for c in cells):
            raise InvalidDomainException(Invalid.CELLS % {'cells': cells})
        if any(not math.isfinite(e) or e <= 0 for e in extents):
            raise InvalidDomainException(Invalid.EXTENTS % {'extents': extents})
        boundary = Boundary(self.boundary)
        if boundary is Boundary.INTERVAL and len(cells) != 1:
            raise InvalidDomainException(Invalid.INTERVAL_DIMS % {'dims': len(cells)})
        object.__setattr__(self, 'cells', tuple(int(c) for c in cells))
        object.__setattr__(self, 'extents', tuple(float(e) for e in extents))
        object.__setattr__(self, 'boundary', boundary)

    @property
    def dims(self):
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @property
    def size(self):
        return int(np.prod(self.cells))

    @property
    def spacing(self):
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def is_torus(self):
        return self.boundary is Boundary.TORUS

    @cached_property
    def centers(self):
        index = np.indices(self.cells).reshape(self.dims, -1).T
        centers = (index + 0.5) * np.asarray(self.spacing)
        centers.setflags(write=False)
        return centers

    def flat_index(self, index):
        """Normalize a flat or per-axis cell index, raising ``IndexError`` when out of range."""
        if np.ndim(index) == 0:
            index = int(index)
            if not 0 <= index < self.size:
                raise IndexError('cell index %s out of range for %s cells' % (index, self.size))
            return index
        index = tuple(int(i) for i in index)
        if len(index) != self.dims or any(not 0 <= i < n for i, n in zip(index, self.cells)):
            raise IndexError('cell index %s out of range for grid %s' % (index, self.cells))
        return int(np.ravel_multi_index(index, self.cells))

    def displacements(self, sources, targets):
        """Displacement vectors from ``sources`` to ``targets`` along minimizing geodesics.

        On the torus each axis uses the minimum image in ``[-L/2, L/2)``, so antipodal
        ties resolve to the lexicographically smallest vector.
        """
        delta = np.asarray(targets, dtype=np.float64) - np.asarray(sources, dtype=np.float64)
        if self.is_torus:
            extents = np.asarray(self.extents)
            delta = np.mod(delta + extents / 2, extents) - extents / 2
        return delta

    def squared_distances(self, rows, cols):
        """Matrix of squared geodesic distances between the centers of two cell index lists."""
        sources = self.centers[np.asarray(rows, dtype=np.intp)][:, None, :]
        targets = self.centers[np.asarray(cols, dtype=np.intp)][None, :, :]
        delta = self.displacements(sources, targets)
        return np.einsum('ijk,ijk->ij', delta, delta)

    def locate(self, points):
        """Flat indices of the cells containing ``points``, wrapping on the torus."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dims)
        index = np.floor(points / np.asarray(self.spacing)).astype(np.intp)
        cells = np.asarray(self.cells)
        if self.is_torus:
            index = np.mod(index, cells)
        else:
            index = np.clip(index, 0, cells - 1)
        return np.ravel_multi_index(tuple(index.T), self.cells)

    def to_json(self):
        return {
            'dims': self.dims,
            'cells': list(self.cells),
            'extents': list(self.extents),
            'boundary': self.boundary.value,
        }

    @classmethod
    def from_json(cls, data):
        domain = cls(tuple(data['cells']), tuple(data['extents']), Boundary(data['boundary']))
        if 'dims' in data and data['dims'] != domain.dims:
            raise InvalidDomainException(Invalid.DIMS % {'cells': domain.cells, 'extents': domain.extents})
        return domain


class CellField:
    """Immutable real values per cell of a ``GridDomain``."""

    kind = 'field'

    def __init__(self, domain, values):
        values = np.array(values, dtype=np.float64).reshape(-1)
        if values.size != domain.size:
            raise InvalidMeasureException(Invalid.SIZE % {
                'expected': domain.size, 'domain': domain.cells, 'actual': values.size,
            })
        if not np.all(np.isfinite(values)):
            raise InvalidMeasureException(Invalid.NOT_FINITE % {'kind': self.kind})
        self._validate(values)
        values.setflags(write=False)
        self._domain = domain
        self._values = values

    def _validate(self, values):
        pass

    @property
    def domain(self):
        return self._domain

    @property
    def values(self):
        return self._values

    @property
    def masses(self):
        return self._values * self._domain.cell_volume

    def integral(self):
        return float(np.sum(self._values) * self._domain.cell_volume)

    def as_grid(self):
        return self._values.reshape(self._domain.shape)

    def __repr__(self):
        return '%s(domain=%r, values=%r)' % (self.__class__.__name__, self._domain, self._values)

    def to_json(self):
        return {'domain': self._domain.to_json(), 'values': self._values.tolist()}

    @classmethod
    def from_json(cls, data):
        return cls(GridDomain.from_json(data['domain']), data['values'])


class Density(CellField):
    kind = 'density'

    def _validate(self, values):
        if values.size and values.min() < 0:
            raise InvalidMeasureException(Invalid.NEGATIVE % {'value': float(values.min())})


class SignedDensity(CellField):
    kind = 'signed density'


class ScalarField(CellField):
    kind = 'scalar field'


def check_same_domain(*fields):
    first = fields[0].domain
    for other in fields[1:]:
        if other.domain != first:
            raise DomainMismatchException(Invalid.DOMAIN_MISMATCH % {'first': first, 'second': other.domain})
    return first


def signed_difference(nu, mu):
    """``nu - mu`` as a signed density."""
    domain = check_same_domain(nu, mu)
    return SignedDensity(domain, nu.values - mu.values)


def total_mass(m):
    return float(np.sum(m.values) * m.domain.cell_volume)


def sup_density(m):
    return float(np.max(m.values))


def geodesic_distance(domain, i, j):
    source = domain.centers[domain.flat_index(i)]
    target = domain.centers[domain.flat_index(j)]
    return float(np.linalg.norm(domain.displacements(source, target)))


@dataclass(frozen=True)
class Uniform:
    rho: float
    kind = 'uniform'

    def __post_init__(self):
        if self.rho < 0:
            raise InvalidMeasureException(Invalid.NEGATIVE_LEVEL % {'value': self.rho})

    def sample(self, domain):
        return np.full(domain.size, float(self.rho))


@dataclass(frozen=True)
class BoundedRandom:
    rho_min: float
    rho_max: float
    seed: int = 0
    kind = 'bounded_random'

    def __post_init__(self):
        if self.rho_min > self.rho_max:
            raise InvalidMeasureException(Invalid.BOUNDS % {'rho_min': self.rho_min, 'rho_max': self.rho_max})
        if self.rho_min < 0:
            raise InvalidMeasureException(Invalid.NEGATIVE_LEVEL % {'value': self.rho_min})

    def sample(self, domain):
        rng = np.random.default_rng(self.seed)
        return rng.uniform(self.rho_min, self.rho_max, size=domain.size)


@dataclass(frozen=True)
class SmoothRandom:
    """Random trigonometric field with wave numbers up to ``modes``, rescaled onto ``[rho_min, rho_max]``."""

    rho_min: float
    rho_max: float
    modes: int = 2
    seed: int = 0
    kind = 'smooth_random'

    def __post_init__(self):
        if self.rho_min > self.rho_max:
            raise InvalidMeasureException(Invalid.BOUNDS % {'rho_min': self.rho_min, 'rho_max': self.rho_max})
        if self.rho_min < 0:
            raise InvalidMeasureException(Invalid.NEGATIVE_LEVEL % {'value': self.rho_min})

    def sample(self, domain):
        rng = np.random.default_rng(self.seed)
        phases = domain.centers / np.asarray(domain.extents) * 2 * np.pi
        field = np.zeros(domain.size)
        for wave in np.ndindex(*(2 * self.modes + 1,) * domain.dims):
            wave = np.asarray(wave) - self.modes
            if not wave.any():
                continue
            amplitude = rng.normal() / float(np.dot(wave, wave))
            field += amplitude * np.cos(phases @ wave + rng.uniform(0, 2 * np.pi))
        low, high = field.min(), field.max()
        if high - low <= 0:
            return np.full(domain.size, (self.rho_min + self.rho_max) / 2)
        return self.rho_min + (self.rho_max - self.rho_min) * (field - low) / (high - low)


@dataclass(frozen=True)
class Bump:
    """Raised-cosine bump of total ``mass`` on top of a constant ``background`` density."""

    center: tuple
    width: float
    mass: float
    background: float = 0.0
    kind = 'bump'

    def __post_init__(self):
        object.__setattr__(self, 'center', tuple(float(c) for c in _as_tuple(self.center)))
        if self.mass <= 0:
            raise InvalidMeasureException(Invalid.MASS % {'mass': self.mass})
        if self.background < 0:
            raise InvalidMeasureException(Invalid.NEGATIVE_LEVEL % {'value': self.background})

    def sample(self, domain):
        delta = domain.displacements(np.asarray(self.center), domain.centers)
        radius = np.sqrt(np.einsum('ij,ij->i', delta, delta))
        profile = np.where(radius < self.width, (1 + np.cos(np.pi * radius / self.width)) / 2, 0.0)
        if profile.sum() <= 0:
            raise InvalidMeasureException(Invalid.NARROW_BUMP % {'width': self.width, 'center': self.center})
        return self.background + profile * (self.mass / (profile.sum() * domain.cell_volume))


@dataclass(frozen=True)
class DiracLike:
    cell: object
    mass: float = 1.0
    kind = 'dirac_like'

    def __post_init__(self):
        if self.mass <= 0:
            raise InvalidMeasureException(Invalid.MASS % {'mass': self.mass})

    def sample(self, domain):
        values = np.zeros(domain.size)
        values[domain.flat_index(self.cell)] = self.mass / domain.cell_volume
        return values


GENERATORS = {g.kind: g for g in (Uniform, BoundedRandom, SmoothRandom, Bump, DiracLike)}


def generator_from_options(kind, **options):
    try:
        generator_class = GENERATORS[kind]
    except KeyError:
        raise InvalidMeasureException(Invalid.UNKNOWN_GENERATOR % {'kind': kind, 'kinds': sorted(GENERATORS)})
    return generator_class(**options)


def describe_generator(spec):
    """JSON-ready description of a generator, recorded with every report."""
    data = asdict(spec)
    data['kind'] = spec.kind
    return data


def make_measure(domain, spec):
    return Density(domain, spec.sample(domain))
