"""Table-driven sampling kernel with import-time backend selection.

``BACKEND`` is ``"compiled"`` when the C++ extension imports and ``"python"``
otherwise. Set ``PERFECTSIM_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernel_py
from .tables import Tables

_ck = None
if not os.environ.get("PERFECTSIM_PURE_PYTHON"):
    try:
        from . import _ckernel as _ck
    except ImportError:  # extension not built
        _ck = None

BACKEND = "compiled" if _ck is not None else "python"


def _compiled(t: Tables):
    ct = getattr(t, "_compiled", None)
    if ct is None:
        ct = _ck.CompiledTables(t)
        t._compiled = ct
    return ct


def _window_array(t: Tables, window) -> np.ndarray:
    pad = (0,) * (3 - t.dim)
    return np.array([tuple(v) + pad for v in window], dtype=np.intc).reshape(-1, 3)


def sample(t: Tables, window, rng: np.random.Generator, max_steps: int, backend: str | None = None):
    """One replica: ``(window_spins, n_stop, max_set_size, visited)``."""
    backend = backend or BACKEND
    if backend == "compiled":
        if _ck is None:
            raise ImportError("compiled kernel is not available")
        return _ck.run(_compiled(t), _window_array(t, window), rng.bit_generator, int(max_steps))
    return _kernel_py.sample(t, window, rng, max_steps)


def spin_matrix(t: Tables, window, seed: int, replicas: int, max_steps: int,
                backend: str | None = None) -> np.ndarray:
    from .sampler import replica_rng

    backend = backend or BACKEND
    if backend != "compiled":
        return _kernel_py.spin_matrix(t, window, seed, replicas, max_steps)
    ct = _compiled(t)
    win = _window_array(t, window)
    out = np.empty((replicas, len(window)), dtype=np.int8)
    for i in range(replicas):
        spins, *_ = _ck.run(ct, win, replica_rng(seed, i).bit_generator, int(max_steps))
        out[i] = spins
    return out
