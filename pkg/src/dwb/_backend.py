"""Selects between the compiled kernel core and the NumPy fallback.

The compiled extension (``dwb._core``, Cython) implements the same hot
kernels as ``dwb._kernels_np`` for matrix dimensions up to ``EXT_MAX_DIM``;
above that LAPACK wins and the NumPy path is used regardless.  Selection
happens at import time and can be forced with the ``DWB_BACKEND``
environment variable (``auto`` | ``ext`` | ``numpy``).
"""

from __future__ import annotations

import os

from . import _kernels_np

EXT_MAX_DIM = 32

try:
    from . import _core  # type: ignore[attr-defined]

    HAVE_EXT = True
except ImportError:  # pragma: no cover - depends on the build
    _core = None
    HAVE_EXT = False

_mode = os.environ.get("DWB_BACKEND", "auto").lower()
if _mode not in ("auto", "ext", "numpy"):
    raise RuntimeError(f"DWB_BACKEND must be auto|ext|numpy, got {_mode!r}")
if _mode == "ext" and not HAVE_EXT:
    raise RuntimeError("DWB_BACKEND=ext but the compiled core is not importable")

_USE_EXT = HAVE_EXT and _mode != "numpy"


def backend_name() -> str:
    """Name of the kernel backend active for small dimensions."""
    return "ext" if _USE_EXT else "numpy"


def _ext_ok(d: int) -> bool:
    return _USE_EXT and d <= EXT_MAX_DIM


def barycenter_cov_fixpoint(weights, covs, iters, want_stash=False, want_residual=False):
    if _ext_ok(covs.shape[-1]):
        return _core.barycenter_cov_fixpoint(weights, covs, iters, want_stash, want_residual)
    return _kernels_np.barycenter_cov_fixpoint(weights, covs, iters, want_stash, want_residual)


def barycenter_cov_backward(weights, covs, stash, sbar):
    if _ext_ok(covs.shape[-1]) and getattr(stash, "is_ext", False):
        return _core.barycenter_cov_backward(weights, covs, stash, sbar)
    return _kernels_np.barycenter_cov_backward(weights, covs, stash, sbar)


def bures_sq_fixed(ref_sqrt, ref_trace, s, want_stash=False):
    if _ext_ok(s.shape[-1]):
        return _core.bures_sq_fixed(ref_sqrt, ref_trace, s, want_stash)
    return _kernels_np.bures_sq_fixed(ref_sqrt, ref_trace, s, want_stash)


def bures_sq_fixed_backward(ref_sqrt, stash, seed):
    if isinstance(stash, tuple):
        return _kernels_np.bures_sq_fixed_backward(ref_sqrt, stash, seed)
    return _core.bures_sq_fixed_backward(ref_sqrt, stash, seed)


def emd_sqeuclidean(x, y, wx, wy):
    """Exact discrete OT with squared-Euclidean cost, or None if unavailable.

    Returns (cost, plan_rows, plan_cols, plan_vals) when the compiled network
    simplex is present; callers fall back to SciPy-based solvers otherwise.
    """
    if _USE_EXT:
        return _core.emd_sqeuclidean(x, y, wx, wy)
    return None
