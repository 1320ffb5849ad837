"""Scoring and beam-search kernels, compiled when available.

The compiled lane (``_ckern``, Cython) and the pure-Python lane (``_pure``)
implement identical arithmetic in identical order, so their outputs are
bit-equal; the compiled lane is simply faster.  Selection happens at import:
the extension is preferred, with a silent fallback to pure Python.  Set
``ECOLM_KERNEL=pure`` to force the fallback or ``ECOLM_KERNEL=c`` to require
the extension.
"""

import os

_requested = os.environ.get("ECOLM_KERNEL", "").lower()

if _requested == "pure":
    from . import _pure as impl

    BACKEND = "pure"
else:
    try:
        from . import _ckern as impl

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        from . import _pure as impl

        BACKEND = "pure"

block_log_probs = impl.block_log_probs
continuation_log_probs = impl.continuation_log_probs
beam_continuations = impl.beam_continuations
