"""Kernel backend selection.

The tower-defense cost family is evaluated inside every Newton iteration of
every subgame solve, so it gets a compiled core. Importing this package picks
the compiled extension when it is present and importable, and the numpy
implementation otherwise. Set ``SCOUTGAME_PURE_PYTHON=1`` to force the numpy
backend (used by the benchmark and the backend-equivalence tests).
"""

import os

from . import _td_numpy

if os.environ.get("SCOUTGAME_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _td_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _td_cython as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _td_numpy
        BACKEND = "numpy"

zeta_values = _impl.zeta_values
attacker_value = _impl.attacker_value
attacker_terms = _impl.attacker_terms
attacker_terms_batch = _impl.attacker_terms_batch
attacker_values_pairs = _impl.attacker_values_pairs


def get_backend(name):
    """Return the named backend module ("cython" or "numpy"), for benchmarks."""
    if name == "numpy":
        return _td_numpy
    if name == "cython":
        from . import _td_cython

        return _td_cython
    raise ValueError(f"unknown kernel backend: {name!r}")
