"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``RTFLEET_PURE_PYTHON=1`` to force the fallback (used by the
equivalence tests and the benchmark).
"""
import os

from . import _pykernels

BACKEND = "python"
QueueSim = _pykernels.QueueSim
Router = _pykernels.Router

if os.environ.get("RTFLEET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None
    else:
        QueueSim = _ckernels.QueueSim
        Router = _ckernels.Router
        BACKEND = "cython"


def implementations():
    """All importable ``(name, QueueSim, Router)`` triples."""
    out = [("python", _pykernels.QueueSim, _pykernels.Router)]
    try:
        from . import _ckernels as ck
    except ImportError:
        return out
    out.append(("cython", ck.QueueSim, ck.Router))
    return out
