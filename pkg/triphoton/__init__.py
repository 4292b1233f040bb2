# -*- coding: utf-8 -*-
"""
Quantum dot, cavity and cascaded down-conversion: density-matrix dynamics,
three-photon statistics and Wigner functions
"""

from . import config
from . import fockspace
from . import dynamics
from . import integrator
from . import analysis
from . import oracle
from . import output
from . import database

from importlib.metadata import version, PackageNotFoundError

try:
    __version__ = version("triphoton")
except PackageNotFoundError:
    pass
