"""Python surface of the BENet forgery-detection library.

The heavy lifting lives in the compiled `_benet` module; this package just
re-exports it so `import benet` works both from an installed wheel and from
a build tree with the extension on PYTHONPATH.
"""

try:
    from ._benet import *  # noqa: F401,F403
    from ._benet import __doc__ as _doc
except ImportError:  # build-tree layout: _benet.so next to the sources
    from _benet import *  # noqa: F401,F403
    from _benet import __doc__ as _doc

__doc__ = _doc
