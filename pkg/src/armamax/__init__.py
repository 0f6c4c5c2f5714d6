"""Exact finite-n distribution of the running maximum of an ARMA(1,1) process.

The probability ``u_n = P(max(X_1, ..., X_n) <= x)`` for
``X_i = r X_{i-1} + e_i + s e_{i-1}`` is obtained from a linear
recurrence ``G_n = K G_{n-1}`` on joint cdfs.  The squared operator has an
ordinary kernel ``K_2`` that is discretized by Nyström quadrature; ``u_n``
then follows by matrix powers, by the biorthogonal eigen-expansion, or
from the dominant eigenvalue alone.  A Monte Carlo simulator and direct
low-dimensional quadratures serve as independent oracles.
"""

__version__ = "0.1.0"

from .dist import ErrorDistribution, InitialJoint, eval_G0  # noqa: E402
from .errors import (  # noqa: E402
    ArmaMaxError,
    ComparisonFailure,
    ConfigError,
    NumericalError,
)
from .kernel import ModelConfig, eval_k2  # noqa: E402
from .maxdist import MaxDistResult, un_leading, un_power, un_spectral  # noqa: E402
from .oracle import MCEstimate, direct_small_n, simulate_paths  # noqa: E402
from .spectral import GridSpec, build_k2_matrix, eigensolve  # noqa: E402

__all__ = [
    "ArmaMaxError",
    "ComparisonFailure",
    "ConfigError",
    "ErrorDistribution",
    "GridSpec",
    "InitialJoint",
    "MCEstimate",
    "MaxDistResult",
    "ModelConfig",
    "NumericalError",
    "build_k2_matrix",
    "direct_small_n",
    "eigensolve",
    "eval_G0",
    "eval_k2",
    "simulate_paths",
    "un_leading",
    "un_power",
    "un_spectral",
]
