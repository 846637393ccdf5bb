from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DEFAULTS = {
    'TRANSPORT_BOUNDS_POISSON_TOL': 1e-10,
    'TRANSPORT_BOUNDS_POISSON_MAXITER_FACTOR': 50,
    'TRANSPORT_BOUNDS_MASS_TOL': 1e-9,
    'TRANSPORT_BOUNDS_NEUTRALITY_TOL': 1e-10,
    'TRANSPORT_BOUNDS_MAX_COUPLING_PAIRS': 1024 * 1024,
    'TRANSPORT_BOUNDS_EMD_MAX_ITER': 1000000,
    'TRANSPORT_BOUNDS_CHECK_TOLERANCE': 1e-6,
    'TRANSPORT_BOUNDS_DENSE_ORACLE_MAX_CELLS': 1024,
    'TRANSPORT_BOUNDS_RAISE_FOR_VIOLATION': False,
}


def get_setting(name):
    """Read a library setting, falling back to the default outside a Django project."""
    default = DEFAULTS[name]
    try:
        return getattr(settings, name, default)
    except ImproperlyConfigured:
        return default
