"""Optimal allocation of protection resources against spreading processes on
weighted directed networks."""

__version__ = "0.1.0"

from .exceptions import *  # noqa: F401,F403
from .graph import *  # noqa: F401,F403
from .costs import *  # noqa: F401,F403
from .gp import *  # noqa: F401,F403
from .allocate import *  # noqa: F401,F403
from .dynamics import *  # noqa: F401,F403
from .heuristics import *  # noqa: F401,F403
