"""sastra: a stochastic-optimization lab.

Online (stochastic approximation) and offline (sample average approximation)
solvers over synthetic problems with known optima, plus a benchmark harness
that measures convergence-rate exponents and sample complexities.
"""

from . import cli, errors, geometry, harness, problems, sa_solvers, saa_solvers, sliding

__all__ = [
    "cli",
    "errors",
    "geometry",
    "harness",
    "problems",
    "sa_solvers",
    "saa_solvers",
    "sliding",
]
__version__ = "0.1.0"
