"""Backend selection for the numeric hot loops.

The compiled extension ``framesift._kernels`` is used when it imports; the
numpy implementation in ``framesift._pykernels`` is the fallback. Setting
``FRAMESIFT_PURE_PYTHON=1`` forces the fallback. Both backends are bit-exact
with each other, so the choice only affects speed.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _default_backend() -> str:
    if os.environ.get("FRAMESIFT_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
        return "python"
    return "compiled"


_active = _default_backend()


def backend() -> str:
    """Name of the backend currently in use (``"compiled"`` or ``"python"``)."""
    return _active


def use_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _active = name


def _impl() -> ModuleType:
    return _BACKENDS[_active]


def lower_median(stack: np.ndarray) -> np.ndarray:
    """Lower median along axis 0 of an ``(n, ...)`` uint8 stack.

    For even ``n`` the smaller of the two central values is returned, so the
    result always belongs to the input value set.
    """
    stack = np.asarray(stack, dtype=np.uint8)
    shape = stack.shape[1:]
    flat = np.ascontiguousarray(stack.reshape(stack.shape[0], -1))
    return _impl().lower_median(flat).reshape(shape)


def histogram_u8(plane: np.ndarray) -> np.ndarray:
    flat = np.ascontiguousarray(np.asarray(plane, dtype=np.uint8).reshape(-1))
    return _impl().histogram_u8(flat)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    return _impl().rgb_to_luma(np.ascontiguousarray(rgb, dtype=np.uint8))


def box_sums(plane: np.ndarray, row_edges, col_edges) -> np.ndarray:
    return _impl().box_sums(
        np.ascontiguousarray(plane, dtype=np.uint8),
        np.ascontiguousarray(row_edges, dtype=np.int64),
        np.ascontiguousarray(col_edges, dtype=np.int64),
    )


def bilinear_sample(src: np.ndarray, xs: np.ndarray, ys: np.ndarray, clamp: bool = False,
                    fill: float = 0.0) -> np.ndarray:
    """Sample a single uint8 plane at float pixel coordinates (pixel centres at integers)."""
    return _impl().bilinear_sample(
        np.ascontiguousarray(src, dtype=np.uint8),
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
        bool(clamp),
        float(fill),
    )


def convolve_separable(src: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return _impl().convolve_separable(
        np.ascontiguousarray(src, dtype=np.uint8),
        np.ascontiguousarray(weights, dtype=np.float64),
    )
