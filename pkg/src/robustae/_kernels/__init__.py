"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
pure numpy/Python fallback is used.  Force a backend with the environment
variable ``ROBUSTAE_BACKEND=compiled`` or ``ROBUSTAE_BACKEND=python``.
"""

import os

from . import pure as _pure

_forced = os.environ.get("ROBUSTAE_BACKEND", "").strip().lower()
if _forced not in ("", "compiled", "python"):
    raise ImportError(
        "ROBUSTAE_BACKEND must be 'compiled' or 'python', got %r" % _forced
    )

_compiled = None
if _forced != "python":
    try:
        from . import _core as _compiled
    except ImportError:
        if _forced == "compiled":
            raise
        _compiled = None

_impl = _compiled if _compiled is not None else _pure
BACKEND = "compiled" if _compiled is not None else "python"

fill_uniform = _impl.fill_uniform
next_u64_block = _impl.next_u64_block
jacobi_rows = _impl.jacobi_rows


def available_backends():
    """Map of backend name -> kernel module, for tests and benchmarks."""
    table = {"python": _pure}
    if _compiled is not None:
        table["compiled"] = _compiled
    return table
