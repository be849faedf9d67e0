"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .forward import ScaleRange


def check_image(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("image contains non-finite values")
    return arr


def check_stack(y, scales: ScaleRange | None = None) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 3 or arr.size == 0:
        raise DataError(f"expected a (J, N1, N2) stack, got shape {arr.shape}")
    if scales is not None and arr.shape[0] != scales.J:
        raise DataError(
            f"stack has {arr.shape[0]} planes, octave range expects {scales.J}"
        )
    if not np.isfinite(arr).all():
        raise DataError("stack contains non-finite values")
    return arr


def check_pair(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise DataError(f"expected a (2, N1, N2) attribute pair, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("attribute pair contains non-finite values")
    return arr


def check_hyperparams(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=np.float64).reshape(-1)
    if arr.shape != (2,):
        raise DataError("expected two regularization weights")
    if not np.isfinite(arr).all() or (arr <= 0.0).any():
        raise DataError("regularization weights must be strictly positive and finite")
    return arr


def check_label_map(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D label map, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.allclose(arr, np.round(arr)):
            raise DataError("label map must hold integers")
        arr = np.round(arr).astype(np.int64)
    return arr.astype(np.int64)
