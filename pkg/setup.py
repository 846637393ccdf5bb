from setuptools import find_packages, setup

VERSION = __import__('transport_bounds').__version__


def _get_long_description():
    with open('README.md') as readme_handle:
        readme = readme_handle.read()
    with open('CHANGES.md') as changes_handle:
        changes = changes_handle.read()
    return readme + '\n\n' + changes


setup(
    name='transport-bounds',
    version=VERSION,
    license='MIT',
    description='Quadratic Wasserstein distances, weighted negative Sobolev norms and numerical checks '
                'of the inequalities between them',
    long_description=_get_long_description(),
    long_description_content_type='text/markdown',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Framework :: Django',
        'Framework :: Django :: 4.2',
        'Framework :: Django :: 5.0',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    keywords='optimal transport wasserstein sobolev poisson',
    packages=find_packages(exclude=['manage*', 'tests*']),
    python_requires='>=3.10',
    install_requires=[
        'django>=3.2',
        'numpy>=1.23',
        'scipy>=1.12',
        'POT>=0.9',
    ]
)
