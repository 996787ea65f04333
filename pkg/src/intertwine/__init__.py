"""Weighted-Hessian fields, spectral-gap certificates and intertwining checks for L = lap - grad V . grad."""

__version__ = "0.1.0"

from .errors import IntertwineError  # noqa: E402,F401
from .grid import GridSpec  # noqa: E402,F401
from .potential import (Potential, make_coupled_quartic, make_gaussian,  # noqa: E402,F401
                        make_gen_cauchy, make_subbotin)
from .weights import identity_weight, m_field, make_epsilon_weight  # noqa: E402,F401
