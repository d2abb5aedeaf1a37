"""Hot kernels for the Monte Carlo and raw-data paths.

Two interchangeable backends implement the same contracts: a compiled
Cython module and a numpy fallback.  Selection happens once, at import:
the compiled module is preferred when it built, and the environment
variable ``SLOPESYNTH_BACKEND`` (``c`` | ``python`` | ``auto``) overrides
the choice -- ``c`` fails loudly when the extension is unavailable, which
is what the benchmark and CI want.
"""

import os

_requested = os.environ.get("SLOPESYNTH_BACKEND", "auto").strip().lower()

if _requested in ("", "auto", "c"):
    try:
        from . import _core as _impl
        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise ImportError(
                "SLOPESYNTH_BACKEND=c but the compiled kernel module is not "
                "available; reinstall with a C compiler and Cython present"
            ) from None
        from . import _pure as _impl
        BACKEND = "python"
elif _requested in ("python", "pure"):
    from . import _pure as _impl
    BACKEND = "python"
else:
    raise ImportError(
        f"unknown SLOPESYNTH_BACKEND value {_requested!r}; use 'auto', 'c' or 'python'"
    )

ols_batch = _impl.ols_batch
stacked_gls = _impl.stacked_gls

__all__ = ["BACKEND", "ols_batch", "stacked_gls"]
