"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the numpy
implementation in ``_pykernels`` takes over.  ``STREAMPCA_BACKEND`` set to
``python`` or ``compiled`` forces a choice at import time, and
:func:`use_backend` switches at runtime (tests and benchmarks use it).
"""

import contextlib
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available():
    return sorted(_BACKENDS)


def _pick(name):
    if name in (None, "", "auto"):
        return _compiled if _compiled is not None else _pykernels
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available()}") from None


kernels = _pick(os.environ.get("STREAMPCA_BACKEND"))
log.debug("streampca kernels: %s", kernels.NAME)


def name():
    return kernels.NAME


def set_backend(backend):
    global kernels
    kernels = _pick(backend)
    return kernels.NAME


@contextlib.contextmanager
def use_backend(backend):
    global kernels
    previous = kernels
    kernels = _pick(backend)
    try:
        yield kernels
    finally:
        kernels = previous
