"""Autler-Townes splitting simulator for a driven V-type three-level system.

Angular frequencies are rad/us, times are us and rates are 1/us, as in the
C++ library. Use mhz_to_angular to convert ordinary frequencies.
"""

from ._atsim import *  # noqa: F401,F403
from ._atsim import __doc__  # noqa: F401
