"""Numerical laboratory for the p-Laplacian of the Grushin vector fields.

Modules: ``geometry`` (gauge, dilations, parameters), ``mesh`` (tensor grids
and fields), ``operators`` (discrete energies and residuals), ``solvers``
(quotient minimization, eigenvalues, ground states), ``analysis`` (decay,
concentration, test-function expansions, defect diagnostics), ``config`` and
``cli``.

Setting ``GRUSHIN_THREADS`` before import caps the thread pools of the
numeric libraries.
"""

import os as _os

_threads = _os.environ.get("GRUSHIN_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ[_var] = _threads

from .geometry import GrushinParams, Point, critical_exponent, gauge, homogeneous_dimension  # noqa: E402

__version__ = "0.1.0"
__all__ = ["GrushinParams", "Point", "critical_exponent", "gauge", "homogeneous_dimension"]
