"""Unoriented angular error, RMS and proportion-of-good-points metrics."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def angle_errors(a, b) -> np.ndarray:
    """Row-wise unoriented angle in degrees, in [0, 90].

    atan2(|a x b|, |a . b|) on normalized inputs stays well conditioned near
    both 0 and 90 degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise DataError("zero vector has no direction")
    a, b = a / na, b / nb
    s = np.linalg.norm(np.cross(a, b), axis=-1)
    c = np.abs(np.sum(a * b, axis=-1))
    return np.degrees(np.arctan2(s, c))


def angle_error_unoriented(a, b) -> float:
    return float(angle_errors(a, b))


def rms_error(errors) -> float:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise DataError("no errors to aggregate")
    return float(np.sqrt(np.mean(e * e)))


def pgp(errors, alpha: float) -> float:
    """Fraction of errors strictly below ``alpha`` degrees."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise DataError("no errors to aggregate")
    if not alpha > 0:
        raise DataError("alpha must be positive")
    return float(np.mean(e < alpha))


def sin_errors(a, b) -> np.ndarray:
    """|a x b| / (|a| |b|), the per-sample distance used by the expert loss."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.linalg.norm(np.cross(a, b), axis=-1) / (
        np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    )
