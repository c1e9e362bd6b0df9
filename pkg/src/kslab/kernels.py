"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension ``kslab._kernels`` is used when it was built; set
``KSLAB_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("KSLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

chemotactic_flux = _impl.chemotactic_flux
radial_face_flux = _impl.radial_face_flux
thomas = _impl.thomas

__all__ = ["BACKEND", "chemotactic_flux", "radial_face_flux", "thomas"]
