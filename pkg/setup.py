from setuptools import setup, find_packages

setup(
    name='triphoton',
    description='Three-photon states from a quantum dot in a cavity with cascaded down-conversion',
    license='Apache License 2.0',
    use_scm_version=True,
    packages=find_packages(exclude=['test']),
    setup_requires=["setuptools_scm"],
    python_requires='>=3.9',

    install_requires=[
        'numpy',
        'scipy',
        'xarray',
        'pandas',
        'netcdf4',
        'tqdm',
        'sqlalchemy<2.0',
        'joblib',
        'pyyaml',
    ],
    entry_points={
        'console_scripts': [
            'triphoton = triphoton.cli:main',
        ]
    },
    extras_require = {
        'build': ['pytest', 'pytest-cov']
    }
)
