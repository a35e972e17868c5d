"""ncmart: a numerical laboratory for weighted maximal inequalities of
matrix-valued martingales on dyadic and general atomic filtrations."""

from ._accel import BACKEND, NUMBA_ENABLED

__version__ = "0.1.0"

__all__ = ["BACKEND", "NUMBA_ENABLED", "__version__"]
