"""Backend selection for the risk-set accumulation kernels.

Two interchangeable implementations of the same four-function interface
exist: a compiled extension (``_riskset_cy``) and a pure-numpy fallback
(``_riskset_np``).  The compiled module is preferred when importable; the
environment variable ``COXSIEVE_BACKEND`` (``cython`` / ``numpy`` / ``auto``)
overrides the choice, with a forced ``cython`` raising if the extension is
missing.  ``BACKEND`` records which implementation won.
"""

from __future__ import annotations

import os

_requested = os.environ.get("COXSIEVE_BACKEND", "auto").strip().lower() or "auto"

if _requested == "auto":
    try:
        from . import _riskset_cy as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        from . import _riskset_np as _impl

        BACKEND = "numpy"
elif _requested in ("cython", "compiled", "cy"):
    from . import _riskset_cy as _impl

    BACKEND = "cython"
elif _requested in ("numpy", "python", "np"):
    from . import _riskset_np as _impl

    BACKEND = "numpy"
else:
    raise ImportError(
        f"unrecognized COXSIEVE_BACKEND value {_requested!r}; "
        "expected 'auto', 'cython', or 'numpy'"
    )

const_value_grad = _impl.const_value_grad
const_quad = _impl.const_quad
tv_value_grad = _impl.tv_value_grad
tv_quad = _impl.tv_quad

__all__ = [
    "BACKEND",
    "const_value_grad",
    "const_quad",
    "tv_value_grad",
    "tv_quad",
]
