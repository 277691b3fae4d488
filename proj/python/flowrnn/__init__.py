"""Learning flow functions of control systems with recurrent networks."""

from ._flowrnn import *  # noqa: F401,F403
from ._flowrnn import __doc__  # noqa: F401

__version__ = "0.1.0"
