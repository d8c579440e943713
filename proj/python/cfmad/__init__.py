"""Counterfactual multi-agent debate orchestration: python surface.

The compiled extension carries everything; this package only locates it. An
installed wheel places ``_core`` inside the package, while a CMake build tree
leaves it next to the package on ``PYTHONPATH``.
"""

try:
    from cfmad._core import *  # noqa: F401,F403
    from cfmad._core import __version__  # noqa: F401
except ImportError:  # build-tree layout
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
