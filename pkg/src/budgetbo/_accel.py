"""Pick the compiled core when it is importable, the pure-Python loops otherwise.

Set ``BUDGETBO_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("BUDGETBO_PURE_PYTHON", "") not in ("", "0"):
    from ._fallback import gibbs_tmvn, qei_reduce

    BACKEND = "python"
else:
    try:
        from ._core import gibbs_tmvn, qei_reduce

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import gibbs_tmvn, qei_reduce

        BACKEND = "python"

__all__ = ["BACKEND", "gibbs_tmvn", "qei_reduce"]
