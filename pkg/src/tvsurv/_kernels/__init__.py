"""Kernel backend selection.

The compiled Cython module is preferred when built; the pure numpy
implementation is the fallback.  Set ``TVSURV_PURE=1`` to force the pure
backend (useful for benchmarking and cross-checking).  Both backends are
bit-identical by construction.
"""
import os

from . import _pure

if os.environ.get("TVSURV_PURE"):
    _impl = _pure
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
ltrc_event_table = _impl.ltrc_event_table
logrank_scores = _impl.logrank_scores
cif_best_cut = _impl.cif_best_cut
rrf_best_cut = _impl.rrf_best_cut

__all__ = [
    "BACKEND",
    "ltrc_event_table",
    "logrank_scores",
    "cif_best_cut",
    "rrf_best_cut",
]
