"""Hot grid kernels with a compiled core and a numpy fallback.

The compiled module is used when it was built at install time; set
``MULTISYMP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MULTISYMP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

plucker_minors = _impl.plucker_minors
contract_omega = _impl.contract_omega

__all__ = ["BACKEND", "plucker_minors", "contract_omega"]
