"""Log-Gaussian Cox process models for gridded fire occurrence counts."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"
