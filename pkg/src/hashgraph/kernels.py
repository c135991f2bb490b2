"""Kernel dispatch: the compiled extension when it is built, else pure Python.

Set ``HASHGRAPH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from hashgraph import _kernels_py as python

try:
    from hashgraph import _kernels as compiled
except ImportError:
    compiled = None

NAMES = ("merge_last", "earliest_with_ancestor", "strongly_seeing_creators")


def select(module) -> None:
    """Route every kernel call through ``module``."""
    globals().update({name: getattr(module, name) for name in NAMES})
    globals()["COMPILED"] = module is compiled


COMPILED = False
select(compiled if compiled is not None and not os.environ.get("HASHGRAPH_PURE_PYTHON") else python)
