"""Hot numerical kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built (``pip install -e .``).
Set ``KNOCKBENCH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import cd_lasso_py

BACKEND = "python"
cd_lasso_path = cd_lasso_py.cd_lasso_path

if os.environ.get("KNOCKBENCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._cd_lasso import cd_lasso_path  # noqa: F811
    except ImportError:
        pass
    else:
        BACKEND = "cython"

__all__ = ["BACKEND", "cd_lasso_path", "cd_lasso_py"]
