"""Python interface to the multi-resolution periodic-patch forecaster."""

try:
    from ._multiresformer import *  # noqa: F401,F403
    from ._multiresformer import __doc__  # noqa: F401
except ImportError:  # in-tree build: extension sits on PYTHONPATH directly
    from _multiresformer import *  # noqa: F401,F403
