"""SGD inner loops, compiled when available.

The Cython extension ``_core`` is preferred. If it is missing, or the
environment sets ``MATREC_KERNELS=python``, the NumPy fallback is used.
``BACKEND`` names the active implementation.
"""

import os

from . import _fallback

_forced = os.environ.get("MATREC_KERNELS", "").strip().lower()

_compiled = None
if _forced != "python":
    try:
        from . import _core as _compiled
    except ImportError:
        if _forced == "cython":
            raise

if _compiled is not None:
    BACKEND = "cython"
    matrec_epoch = _compiled.matrec_epoch
    matrec_scores = _compiled.matrec_scores
    bpr_epoch = _compiled.bpr_epoch
else:
    BACKEND = "python"
    matrec_epoch = _fallback.matrec_epoch
    matrec_scores = _fallback.matrec_scores
    bpr_epoch = _fallback.bpr_epoch


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (``"cython"``, ``"python"``) or the active one."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built (run `pip install -e .`)")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]
