"""Batch experiments: INI configs, the check registry and the seeded runner."""
import configparser
import contextlib
import csv
import json
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from django.conf import ENVIRONMENT_VARIABLE, settings
from django.test.utils import override_settings

import numpy as np

from .bounds import (
    check_coupling_transform, check_cor1, check_density_bound, check_lemma_qq, check_linearization, check_thm1,
    check_thm2, check_thm3, counterexample_reports, counterexample_scan,
)
from .conf import get_setting
from .grid import (
    Boundary, BoundedRandom, Bump, Density, DiracLike, GridDomain, SignedDensity, SmoothRandom, Uniform,
    describe_generator, make_measure, total_mass,
)
from .interpolation import DensityBoundException, DensityBoundWarning


class Invalid:
    UNREADABLE = 'Cannot read config %(path)r: %(error)s'
    SYNTAX = 'Malformed config %(path)r: %(error)s'
    NO_EXPERIMENT = 'Config %(path)r has no [experiment] section'
    UNKNOWN_CHECK = 'Unknown check %(name)r, valid checks are: %(names)s'
    UNKNOWN_KNOB = 'Section [%(section)s] has unknown key %(key)r, valid keys are: %(keys)s'
    BAD_VALUE = 'Section [%(section)s] key %(key)r: cannot parse %(value)r (%(error)s)'
    SEEDS = 'Seed range must look like START-STOP or SEED with START <= STOP, got %(value)r'
    JOBS = 'jobs must be a positive integer, got %(value)r'
    LP_CAP = 'Section [%(section)s]: %(size)s cells need %(pairs)s transport pairs, above the cap of %(limit)s'
    BAD_OPTION = 'Section [%(section)s] key %(key)r: %(value)r %(problem)s'


class ConfigException(ValueError):
    pass


class UnknownCheckException(ConfigException):
    pass


def _split(text):
    return [item for item in re.split(r'[,\s]+', text.strip()) if item]


def _ints(text):
    return tuple(int(item) for item in _split(text))


def _floats(text):
    return tuple(float(item) for item in _split(text))


def _optional_float(text):
    return float(text) if text.strip() else None


def _boolean(text):
    try:
        return configparser.ConfigParser.BOOLEAN_STATES[text.strip().lower()]
    except KeyError:
        raise ValueError('not a boolean')


KNOB_TYPES = {
    'cells': _ints,
    'extents': _floats,
    'boundary': lambda text: Boundary(text.strip()),
    'generator': str.strip,
    'rho_min': float,
    'rho_max': float,
    'modes': int,
    'rho': _optional_float,
    'extra': float,
    'identity': _boolean,
    'cross_check': _boolean,
    'target': str.strip,
    'epsilons': _floats,
    'sizes': _ints,
    'extent': float,
    'lp_max_cells': int,
    'w2_tolerance': float,
    'samples': int,
    'background': float,
    'binning_tolerance': _optional_float,
}

SEEDED_GENERATORS = ('uniform', 'bounded_random', 'smooth_random')
THM3_TARGETS = ('mixed', 'dirac_like', 'bump', 'random')


def _strictly_monotone(values, sign):
    return all(sign * (b - a) > 0 for a, b in zip(values, values[1:]))


# (predicate, problem) per knob, applied after parsing
KNOB_RULES = {
    'generator': (lambda v: v in SEEDED_GENERATORS, 'is not one of ' + ', '.join(SEEDED_GENERATORS)),
    'target': (lambda v: v in THM3_TARGETS, 'is not one of ' + ', '.join(THM3_TARGETS)),
    'rho_min': (lambda v: v >= 0, 'must be nonnegative'),
    'modes': (lambda v: v >= 1, 'must be at least 1'),
    'rho': (lambda v: v is None or v > 0, 'must be positive'),
    'extra': (lambda v: v >= 0, 'must be nonnegative'),
    'epsilons': (
        lambda v: len(v) >= 2 and min(v) > 0 and _strictly_monotone(v, -1),
        'must hold at least two positive, strictly decreasing values',
    ),
    'sizes': (
        lambda v: len(v) >= 2 and min(v) >= 2 and _strictly_monotone(v, 1),
        'must hold at least two strictly increasing sizes of 2 or more',
    ),
    'extent': (lambda v: v > 0, 'must be positive'),
    'lp_max_cells': (lambda v: v >= 1, 'must be at least 1'),
    'w2_tolerance': (lambda v: v >= 0, 'must be nonnegative'),
    'samples': (lambda v: v >= 2, 'must be at least 2'),
    'background': (lambda v: v >= 0, 'must be nonnegative'),
    'binning_tolerance': (lambda v: v is None or v >= 0, 'must be nonnegative'),
}

SOLVER_KEYS = {
    'poisson_tol': ('TRANSPORT_BOUNDS_POISSON_TOL', float),
    'poisson_maxiter_factor': ('TRANSPORT_BOUNDS_POISSON_MAXITER_FACTOR', int),
    'mass_tol': ('TRANSPORT_BOUNDS_MASS_TOL', float),
    'neutrality_tol': ('TRANSPORT_BOUNDS_NEUTRALITY_TOL', float),
    'max_coupling_pairs': ('TRANSPORT_BOUNDS_MAX_COUPLING_PAIRS', int),
    'emd_max_iter': ('TRANSPORT_BOUNDS_EMD_MAX_ITER', int),
    'dense_oracle_max_cells': ('TRANSPORT_BOUNDS_DENSE_ORACLE_MAX_CELLS', int),
}

MEASURE_KNOBS = {
    'cells': '128',
    'extents': '1.0',
    'boundary': 'interval',
    'generator': 'bounded_random',
    'rho_min': '1.0',
    'rho_max': '4.0',
    'modes': '2',
    'identity': 'false',
    'cross_check': 'false',
}


@dataclass(frozen=True)
class CheckDefinition:
    name: str
    statement: str
    reference: str
    hypotheses: tuple
    knobs: dict
    run: object
    seeded: bool = True
    uses_lp: bool = False

    def describe(self):
        lines = [
            '%s: %s' % (self.name, self.statement),
            'reference: %s' % self.reference,
            'hypotheses:',
        ]
        lines.extend('  - %s' % hypothesis for hypothesis in self.hypotheses)
        lines.append('knobs:')
        lines.extend('  %s = %s' % (key, value) for key, value in sorted(self.knobs.items()))
        lines.append('seeded: %s' % ('yes' if self.seeded else 'no'))
        return '\n'.join(lines)


@dataclass(frozen=True)
class CheckConfig:
    label: str
    name: str
    options: dict


@dataclass(frozen=True)
class ExperimentConfig:
    checks: tuple
    seeds: range
    tolerance: float
    out_dir: str
    jobs: int = 1
    solver: dict = field(default_factory=dict)


def _domain(options):
    cells = options['cells']
    extents = options['extents']
    if len(extents) == 1 and len(cells) > 1:
        extents = extents * len(cells)
    return GridDomain(cells, extents, options['boundary'])


def _generator(options, seed):
    kind = options['generator']
    if kind == 'uniform':
        return Uniform(options['rho_min'])
    if kind == 'bounded_random':
        return BoundedRandom(options['rho_min'], options['rho_max'], seed)
    if kind == 'smooth_random':
        return SmoothRandom(options['rho_min'], options['rho_max'], options['modes'], seed)
    raise ValueError('generator %r cannot build seeded families' % kind)


def _rescaled(density, mass):
    return Density(density.domain, density.values * (mass / total_mass(density)))


def _pair(options, seed):
    """``mu`` from seed ``2s`` and ``nu`` from ``2s + 1``, rescaled to the mass of ``mu``."""
    domain = _domain(options)
    mu_spec = _generator(options, 2 * seed)
    mu = make_measure(domain, mu_spec)
    instance = {'seed': seed, 'domain': domain.to_json(), 'mu': describe_generator(mu_spec)}
    if options['identity']:
        instance['nu'] = 'mu'
        return mu, mu, instance
    nu_spec = _generator(options, 2 * seed + 1)
    instance['nu'] = describe_generator(nu_spec)
    return mu, _rescaled(make_measure(domain, nu_spec), total_mass(mu)), instance


def _extra_weight(domain, options, seed):
    if options['extra'] <= 0:
        return np.zeros(domain.size)
    return BoundedRandom(0.0, options['extra'], 2 * seed + 2).sample(domain)


def _run_thm1(options, seed, tolerance):
    mu, nu, instance = _pair(options, seed)
    return [check_thm1(mu, nu, tolerance, instance, options['cross_check'])], []


def _run_cor1(options, seed, tolerance):
    mu, nu, instance = _pair(options, seed)
    rho = options['rho'] if options['rho'] is not None else options['rho_min']
    instance['rho'] = rho
    return [check_cor1(mu, nu, rho, tolerance, instance, options['cross_check'])], []


def _run_lemma_qq(options, seed, tolerance):
    mu, nu, instance = _pair(options, seed)
    rho = options['rho']
    instance.update(rho=rho, extra=options['extra'])
    w_prime = Density(mu.domain, rho * mu.values + _extra_weight(mu.domain, options, seed))
    sigma = SignedDensity(mu.domain, nu.values - mu.values)
    return [check_lemma_qq(sigma, mu, w_prime, rho, tolerance, instance)], []


def _run_thm2(options, seed, tolerance):
    mu, nu, instance = _pair(options, seed)
    return [check_thm2(mu, nu, tolerance=tolerance, instance=instance, cross_check=options['cross_check'])], []


def _thm3_target(mu, options, seed):
    """Mix of single-cell atoms, narrow bumps and bounded random targets, cycling with the seed."""
    domain = mu.domain
    mass = total_mass(mu)
    rng = np.random.default_rng(2 * seed + 1)
    variant = options['target']
    if variant == 'mixed':
        variant = ('dirac_like', 'bump', 'random')[seed % 3]
    if variant == 'dirac_like':
        spec = DiracLike(int(rng.integers(domain.size)), mass)
    elif variant == 'bump':
        extent = domain.extents[0]
        spec = Bump(float(rng.uniform(0.2, 0.8) * extent), float(rng.uniform(0.02, 0.2) * extent), mass)
    else:
        spec = _generator(options, 2 * seed + 1)
        return _rescaled(make_measure(domain, spec), mass), describe_generator(spec)
    return make_measure(domain, spec), describe_generator(spec)


def _run_thm3(options, seed, tolerance):
    domain = _domain(options)
    mu_spec = _generator(options, 2 * seed)
    mu = make_measure(domain, mu_spec)
    instance = {'seed': seed, 'domain': domain.to_json(), 'mu': describe_generator(mu_spec)}
    if options['identity']:
        nu, instance['nu'] = mu, 'mu'
    else:
        nu, instance['nu'] = _thm3_target(mu, options, seed)
    return [check_thm3(mu, nu, tolerance=tolerance, instance=instance, cross_check=options['cross_check'])], []


def _run_linearization(options, seed, tolerance):
    domain = _domain(options)
    mu_spec = SmoothRandom(options['rho_min'], options['rho_max'], options['modes'], 2 * seed)
    sigma_spec = SmoothRandom(0.0, 1.0, options['modes'], 2 * seed + 1)
    mu = make_measure(domain, mu_spec)
    sigma_values = sigma_spec.sample(domain)
    sigma = SignedDensity(domain, sigma_values - sigma_values.mean())
    instance = {
        'seed': seed, 'domain': domain.to_json(),
        'mu': describe_generator(mu_spec), 'sigma': describe_generator(sigma_spec),
    }
    report = check_linearization(mu, sigma, options['epsilons'], instance)
    rows = [
        {'seed': seed, 'epsilon': epsilon, 'ratio': ratio}
        for epsilon, ratio in zip(report.extras['epsilons'], report.extras['ratios'])
    ]
    return [report], rows


def _run_coupling_transform(options, seed, tolerance):
    mu, nu, instance = _pair(options, seed)
    rho = options['rho']
    instance.update(rho=rho, extra=options['extra'])
    mu_prime = Density(mu.domain, rho * mu.values + _extra_weight(mu.domain, options, seed))
    return [check_coupling_transform(mu, nu, mu_prime, rho, tolerance, instance)], []


def _run_density_bound(options, seed, tolerance):
    domain = _domain(options)
    extent = domain.extents[0]
    rng = np.random.default_rng(seed)
    specs = [
        Bump(float(rng.uniform(0.3, 0.7) * extent), float(rng.uniform(0.05, 0.25) * extent), 1.0,
             options['background'])
        for _ in range(2)
    ]
    mu, nu = (make_measure(domain, spec) for spec in specs)
    nu = _rescaled(nu, total_mass(mu))
    instance = {
        'seed': seed, 'domain': domain.to_json(),
        'mu': describe_generator(specs[0]), 'nu': describe_generator(specs[1]),
    }
    times = tuple(k / (options['samples'] - 1) for k in range(options['samples']))
    with warnings.catch_warnings():
        # flagged samples already fail the report
        warnings.simplefilter('ignore', DensityBoundWarning)
        reports = check_density_bound(mu, nu, times, options['binning_tolerance'], instance)
    rows = [dict(seed=seed, **sample) for sample in reports[0].extras['samples']]
    return reports, rows


def _run_counterexample(options, seed, tolerance):
    table = counterexample_scan(options['sizes'], options['extent'], options['lp_max_cells'])
    reports = counterexample_reports(table, options['extent'], options['w2_tolerance'])
    return reports, [row.to_json() for row in table]


CHECKS = {check.name: check for check in (
    CheckDefinition(
        name='check_thm1',
        statement='W2(mu, nu) <= 2 * ||nu - mu||_{H^-1(mu)}, the negative Sobolev norm weighted by mu itself',
        reference='Theorem 1, transport distance controlled by the mu-weighted H^-1 norm with constant 2',
        hypotheses=('mu and nu have equal mass', 'mu is strictly positive on every cell'),
        knobs=dict(MEASURE_KNOBS, rho_min='0.5'),
        run=_run_thm1,
        uses_lp=True,
    ),
    CheckDefinition(
        name='check_cor1',
        statement='W2(mu, nu) <= 2 * rho^(-1/2) * ||nu - mu||_{H^-1(Lebesgue)}',
        reference='Corollary of Theorem 1, lower density bound mu >= rho',
        hypotheses=('mu and nu have equal mass', 'mu >= rho on every cell (rho defaults to rho_min)'),
        knobs=dict(MEASURE_KNOBS, rho=''),
        run=_run_cor1,
        uses_lp=True,
    ),
    CheckDefinition(
        name='check_lemma_qq',
        statement="||sigma||_{H^-1(w')} <= rho^(-1/2) * ||sigma||_{H^-1(w)}",
        reference='Lemma on comparing weights, w\' >= rho * w',
        hypotheses=('sigma has zero mass', "w' >= rho * w on every cell, w' = rho * w + extra noise"),
        knobs=dict(MEASURE_KNOBS, rho='0.5', extra='1.0'),
        run=_run_lemma_qq,
    ),
    CheckDefinition(
        name='check_thm2',
        statement='||nu - mu||_{H^-1} <= 2 (sqrt(rho1) - sqrt(rho0)) / ln(rho1 / rho0) * W2(mu, nu)',
        reference='Theorem 2, nonnegative Ricci curvature with mu <= rho0 and nu <= rho1',
        hypotheses=('flat torus domain', 'mu <= rho0 = sup mu and nu <= rho1 = sup nu', 'equal masses'),
        knobs=dict(MEASURE_KNOBS, boundary='torus'),
        run=_run_thm2,
        uses_lp=True,
    ),
    CheckDefinition(
        name='check_thm3',
        statement='||nu - mu||_{H^-1} <= 2 * sqrt(rho0) * W2(mu, nu)',
        reference='Theorem 3, one dimension with an upper bound on mu only',
        hypotheses=('interval domain', 'mu <= rho0 = sup mu', 'nu arbitrary: single cells, narrow bumps, noise'),
        knobs=dict(MEASURE_KNOBS, target='mixed'),
        run=_run_thm3,
    ),
    CheckDefinition(
        name='check_linearization',
        statement='W2(mu, mu + eps * sigma) / ||eps * sigma||_{H^-1(mu)} -> 1 as eps -> 0',
        reference='linearized transport distance for small perturbations',
        hypotheses=('interval domain', 'smooth mu bounded below', 'smooth zero-mass sigma with |sigma| <= 1'),
        knobs={
            'cells': '256', 'extents': '1.0', 'boundary': 'interval', 'rho_min': '1.0', 'rho_max': '2.0',
            'modes': '2', 'epsilons': '0.1, 0.01, 0.001',
        },
        run=_run_linearization,
    ),
    CheckDefinition(
        name='check_coupling_transform',
        statement="W2(mu', mu' + rho (nu - mu))^2 <= I[rho * pi + diag(mu' - rho * mu)] = rho * W2(mu, nu)^2",
        reference='transport proof of the weight comparison lemma',
        hypotheses=('equal masses', "mu' >= rho * mu on every cell"),
        knobs=dict(MEASURE_KNOBS, cells='32', rho='0.5', extra='1.0'),
        run=_run_coupling_transform,
        uses_lp=True,
    ),
    CheckDefinition(
        name='check_density_bound',
        statement='sup mu_t <= rho0^(1-t) * rho1^t along the displacement interpolation, and the dimensional '
                  'bound ((1-t) rho0^(-1/n) + t rho1^(-1/n))^(-n)',
        reference='density bound along W2 geodesics under nonnegative Ricci curvature',
        hypotheses=('interval domain', 'mu <= rho0 = sup mu and nu <= rho1 = sup nu', 'binning tolerance 10/N'),
        knobs={
            'cells': '256', 'extents': '1.0', 'boundary': 'interval', 'background': '0.0', 'samples': '17',
            'binning_tolerance': '',
        },
        run=_run_density_bound,
    ),
    CheckDefinition(
        name='counterexample_scan',
        statement='Dirac on the 2-torus against the uniform measure: W2 stays bounded while '
                  '||nu - mu||_{H^-1} grows without bound under refinement',
        reference='remark that no bound valid for all nu exists in dimension n >= 2',
        hypotheses=('2-D torus', 'mu uniform', 'nu a single-cell atom of equal mass'),
        knobs={'sizes': '8, 16, 32, 64', 'extent': '1.0', 'lp_max_cells': '1024', 'w2_tolerance': '0.05'},
        run=_run_counterexample,
        seeded=False,
    ),
)}


def get_check(name):
    try:
        return CHECKS[name]
    except KeyError:
        raise UnknownCheckException(Invalid.UNKNOWN_CHECK % {'name': name, 'names': ', '.join(sorted(CHECKS))})


def describe(name):
    return get_check(name).describe()


def parse_seed_range(value):
    match = re.fullmatch(r'\s*(\d+)\s*(?:-\s*(\d+)\s*)?', str(value))
    if not match:
        raise ConfigException(Invalid.SEEDS % {'value': value})
    start = int(match.group(1))
    stop = int(match.group(2)) if match.group(2) is not None else start
    if stop < start:
        raise ConfigException(Invalid.SEEDS % {'value': value})
    return range(start, stop + 1)


def _parse(section, key, text, parse):
    try:
        return parse(text)
    except ValueError as exc:
        raise ConfigException(Invalid.BAD_VALUE % {'section': section, 'key': key, 'value': text, 'error': exc})


def _check_options(label, definition, raw):
    unknown = sorted(set(raw) - set(definition.knobs))
    if unknown:
        raise ConfigException(Invalid.UNKNOWN_KNOB % {
            'section': label, 'key': unknown[0], 'keys': ', '.join(sorted(definition.knobs)),
        })
    options = {}
    for key, default in definition.knobs.items():
        options[key] = _parse(label, key, raw.get(key, default), KNOB_TYPES[key])
    if 'cells' in options:
        domain = _parse(label, 'cells', options, _domain)
        options['cells'], options['extents'] = domain.cells, domain.extents
    _validate_options(label, definition, options)
    return options


def _reject(section, key, value, problem):
    raise ConfigException(Invalid.BAD_OPTION % {'section': section, 'key': key, 'value': value, 'problem': problem})


def _validate_options(label, definition, options):
    """Reject knob values that would only fail once the check runs."""
    for key, value in options.items():
        if key in KNOB_RULES:
            accept, problem = KNOB_RULES[key]
            if not accept(value):
                _reject(label, key, value, problem)
    if 'rho_max' in options and options['rho_max'] < options['rho_min']:
        _reject(label, 'rho_max', options['rho_max'], 'is below rho_min=%r' % options['rho_min'])
    if options.get('rho', 0.0) is None:
        # only a check whose default is empty falls back to rho_min
        if definition.knobs['rho'] != '':
            _reject(label, 'rho', '', 'is required')
        if options['rho_min'] <= 0:
            _reject(label, 'rho', '', 'falls back to rho_min=%r, which must be positive' % options['rho_min'])


def _check_lp_cap(label, definition, options, solver):
    if not definition.uses_lp or 'cells' not in options:
        return
    domain = _domain(options)
    if definition.name != 'check_coupling_transform' and domain.boundary is Boundary.INTERVAL:
        return
    limit = solver.get('TRANSPORT_BOUNDS_MAX_COUPLING_PAIRS', get_setting('TRANSPORT_BOUNDS_MAX_COUPLING_PAIRS'))
    pairs = domain.size * domain.size
    if pairs > limit:
        raise ConfigException(Invalid.LP_CAP % {'section': label, 'size': domain.size, 'pairs': pairs, 'limit': limit})


def load_config(path, tolerance=None, seed_range=None, out_dir=None, jobs=None):
    """Parse and validate an experiment INI file; keyword arguments override its values."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigException(Invalid.UNREADABLE % {'path': path, 'error': exc})
    except configparser.Error as exc:
        raise ConfigException(Invalid.SYNTAX % {'path': path, 'error': exc})
    if not parser.has_section('experiment'):
        raise ConfigException(Invalid.NO_EXPERIMENT % {'path': path})
    experiment = parser['experiment']

    solver = {}
    if parser.has_section('solver'):
        for key, text in parser['solver'].items():
            if key not in SOLVER_KEYS:
                raise ConfigException(Invalid.UNKNOWN_KNOB % {
                    'section': 'solver', 'key': key, 'keys': ', '.join(sorted(SOLVER_KEYS)),
                })
            name, parse = SOLVER_KEYS[key]
            solver[name] = _parse('solver', key, text, parse)

    checks = []
    for label in _split(experiment.get('checks', '')):
        definition = get_check(label.split(':', 1)[0])
        raw = dict(parser[label]) if parser.has_section(label) else {}
        options = _check_options(label, definition, raw)
        _check_lp_cap(label, definition, options, solver)
        checks.append(CheckConfig(label, definition.name, options))

    if tolerance is None:
        tolerance = _parse('experiment', 'tolerance', experiment.get('tolerance', ''), _optional_float)
    if jobs is None:
        jobs = _parse('experiment', 'jobs', experiment.get('jobs', '1'), int)
    if jobs < 1:
        raise ConfigException(Invalid.JOBS % {'value': jobs})
    return ExperimentConfig(
        checks=tuple(checks),
        seeds=parse_seed_range(seed_range if seed_range is not None else experiment.get('seeds', '0')),
        tolerance=tolerance if tolerance is not None else get_setting('TRANSPORT_BOUNDS_CHECK_TOLERANCE'),
        out_dir=out_dir or experiment.get('out_dir', 'reports'),
        jobs=jobs,
        solver=solver,
    )


@dataclass(frozen=True)
class TaskResult:
    label: str
    seed: object
    reports: tuple = ()
    plot_rows: tuple = ()
    error: str = None

    @property
    def passed(self):
        return self.error is None and all(report.passed for report in self.reports)


def _solver_settings(solver):
    if not solver:
        return contextlib.nullcontext()
    if not settings.configured and not os.environ.get(ENVIRONMENT_VARIABLE):
        settings.configure()
    return override_settings(**solver)


def _run_task(task):
    check, seed, tolerance, solver = task
    definition = CHECKS[check.name]
    try:
        with _solver_settings(solver):
            reports, rows = definition.run(check.options, seed, tolerance)
    except (ValueError, RuntimeError, ArithmeticError, DensityBoundException) as exc:
        return TaskResult(check.label, seed, error='%s: %s' % (type(exc).__name__, exc))
    return TaskResult(check.label, seed, tuple(reports), tuple(rows))


def _tasks(config):
    for check in config.checks:
        seeds = config.seeds if CHECKS[check.name].seeded else [None]
        for seed in seeds:
            yield check, seed, config.tolerance, config.solver


def run_experiment(config):
    """Run every (check, seed) pair, fanning out over ``config.jobs`` processes.

    Results come back ordered by check then seed regardless of completion order.
    """
    tasks = list(_tasks(config))
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as executor:
            results = list(executor.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * config.jobs))))
    else:
        results = [_run_task(task) for task in tasks]
    order = {check.label: index for index, check in enumerate(config.checks)}
    return sorted(results, key=lambda result: (order[result.label], -1 if result.seed is None else result.seed))


def _summary_key(label, check_name):
    base, _, variant = label.partition(':')
    return check_name + (':' + variant if variant else '')


def summarize(results):
    """Rows of ``(check_name, n_pass, n_fail, worst_ratio)`` in first-seen order."""
    summary = {}
    for result in results:
        if result.error is not None:
            entry = summary.setdefault(_summary_key(result.label, result.label.partition(':')[0]), [0, 0, 0.0])
            entry[1] += 1
            continue
        for report in result.reports:
            entry = summary.setdefault(_summary_key(result.label, report.check_name), [0, 0, 0.0])
            entry[0 if report.passed else 1] += 1
            entry[2] = max(entry[2], report.ratio)
    return [(name, n_pass, n_fail, worst) for name, (n_pass, n_fail, worst) in summary.items()]


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Boundary):
        return value.value
    raise TypeError('%r is not JSON serializable' % (value,))


def _dumps(data):
    return json.dumps(data, sort_keys=True, default=_to_builtin)


def write_outputs(results, out_dir):
    """Write ``reports.jsonl``, ``errors.jsonl``, ``summary.csv`` and ``plots/<check>.csv``."""
    plots_dir = os.path.join(out_dir, 'plots')
    os.makedirs(plots_dir, exist_ok=True)
    with open(os.path.join(out_dir, 'reports.jsonl'), 'w') as handle:
        for result in results:
            for report in result.reports:
                handle.write(_dumps(report.to_json()) + '\n')
    with open(os.path.join(out_dir, 'errors.jsonl'), 'w') as handle:
        for result in results:
            if result.error is not None:
                handle.write(_dumps({'check': result.label, 'seed': result.seed, 'error': result.error}) + '\n')
    with open(os.path.join(out_dir, 'summary.csv'), 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['check_name', 'n_pass', 'n_fail', 'worst_ratio'])
        writer.writerows(summarize(results))

    plots = {}
    for result in results:
        plots.setdefault(result.label, []).extend(result.plot_rows)
    for label, rows in plots.items():
        if not rows:
            continue
        with open(os.path.join(plots_dir, '%s.csv' % label.replace(':', '__')), 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0]), lineterminator='\n', extrasaction='ignore')
            writer.writeheader()
            writer.writerows({key: _plot_value(value) for key, value in row.items()} for row in rows)


def _plot_value(value):
    if isinstance(value, (list, tuple)):
        return ' '.join(repr(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return value
