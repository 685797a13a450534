"""Backend selection for the hot coordinate-descent loop.

The compiled extension ``argojoint._cd`` is used when it was built; otherwise
the pure-Python ``argojoint._cd_py`` takes over. Setting the environment
variable ``ARGOJOINT_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _cd_py

BACKEND = "python"
cd_lasso = _cd_py.cd_lasso

if not os.environ.get("ARGOJOINT_PURE_PYTHON"):
    try:
        from . import _cd
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        cd_lasso = _cd.cd_lasso


def get_backend(name=None):
    """Return the ``cd_lasso`` implementation for ``name`` ("cython"/"python").

    ``None`` gives the import-time selection.
    """
    if name is None:
        return cd_lasso
    if name == "python":
        return _cd_py.cd_lasso
    if name == "cython":
        from . import _cd

        return _cd.cd_lasso
    raise ValueError(f"unknown backend {name!r}")
