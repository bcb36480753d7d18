"""Python bindings for the scgn C++ core."""

from ._scgn import *  # noqa: F401,F403
from ._scgn import __doc__  # noqa: F401
