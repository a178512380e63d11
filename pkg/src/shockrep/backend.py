"""Backend selection: compiled stepping kernels with a numpy fallback.

The compiled module implements the same update sequences as `_kernels_py`;
`SHOCKREP_BACKEND=python|compiled` (or the `backend=` argument on the engine
entry points) overrides the automatic choice.
"""

import os

from . import _kernels_py
from .errors import ConfigError

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None


def resolve(name=None):
    """Return (implementation module, backend name)."""
    if name is None:
        name = os.environ.get("SHOCKREP_BACKEND", "auto")
    if name in ("auto", "", None):
        if HAVE_COMPILED:
            return _compiled, "compiled"
        return _kernels_py, "python"
    if name == "compiled":
        if not HAVE_COMPILED:
            raise ConfigError("backend", "compiled kernels are not built")
        return _compiled, "compiled"
    if name == "python":
        return _kernels_py, "python"
    raise ConfigError("backend", f"unknown backend {name!r}")


def active_name(name=None):
    return resolve(name)[1]
