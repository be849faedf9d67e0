"""Scale-regression forward model and its derived operators.

The observation stack holds ``J`` planes indexed by octave ``j`` running from
``j1`` to ``j2`` (shape ``(J, N1, N2)``).  The unknown is an attribute pair
stored as a ``(2, N1, N2)`` array: plane 0 is the regularity map ``h``, plane
1 the log-variance map ``v``.  The degradation maps ``(h, v)`` to the planes
``j*h + v``; everything derived from it (adjoint, Gram inverse, projector,
composite estimator-side operator) acts pixel by pixel through 2x2 blocks, so
all operators below are matrix-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScaleRangeError

H, V = 0, 1  # attribute-pair plane indices


@dataclass(frozen=True)
class ScaleRange:
    """Octave range ``j1..j2`` with the power sums the 2x2 blocks need."""

    j1: int
    j2: int

    def __post_init__(self):
        if self.j1 < 1 or self.j2 < self.j1:
            raise ValueError(f"invalid octave range [{self.j1}, {self.j2}]")

    @property
    def J(self) -> int:
        return self.j2 - self.j1 + 1

    @property
    def scales(self) -> np.ndarray:
        return np.arange(self.j1, self.j2 + 1, dtype=np.float64)

    @property
    def F0(self) -> float:
        return float(self.J)

    @property
    def F1(self) -> float:
        return float(self.scales.sum())

    @property
    def F2(self) -> float:
        return float((self.scales**2).sum())

    @property
    def gram_det(self) -> float:
        return self.F0 * self.F2 - self.F1**2

    def require_invertible(self):
        if self.J < 2:
            raise DegenerateScaleRangeError(
                f"octave range [{self.j1}, {self.j2}] has a singular Gram block"
            )


def apply_phi(x: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Degradation: plane ``j`` of the output is ``j*h + v``."""
    return s.scales[:, None, None] * x[H] + x[V]


def apply_phi_adjoint(y: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Adjoint of :func:`apply_phi`: ``(sum_j j*y_j, sum_j y_j)``."""
    out = np.empty((2,) + y.shape[1:])
    out[H] = np.tensordot(s.scales, y, axes=(0, 0))
    out[V] = y.sum(axis=0)
    return out


def invert_gram(x: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Apply the closed-form inverse of the per-pixel Gram block.

    The Gram block is ``[[F2, F1], [F1, F0]]``; its cofactor inverse is
    ``[[F0, -F1], [-F1, F2]] / (F0*F2 - F1^2)``, applied pixelwise.
    """
    s.require_invertible()
    det = s.gram_det
    out = np.empty_like(x)
    out[H] = (s.F0 * x[H] - s.F1 * x[V]) / det
    out[V] = (-s.F1 * x[H] + s.F2 * x[V]) / det
    return out


def apply_gram(x: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Per-pixel Gram block ``[[F2, F1], [F1, F0]]`` (composition phi* phi)."""
    out = np.empty_like(x)
    out[H] = s.F2 * x[H] + s.F1 * x[V]
    out[V] = s.F1 * x[H] + s.F0 * x[V]
    return out


def apply_projection(x: np.ndarray) -> np.ndarray:
    """Keep the regularity plane, zero the log-variance plane."""
    out = np.zeros_like(x)
    out[H] = x[H]
    return out


def apply_A(y: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Composite operator: projection of the Gram-inverted adjoint.

    Equivalent to a per-plane scalar weight ``(F0*j - F1) / (F0*F2 - F1^2)``
    feeding the regularity plane, zero in the log-variance plane.
    """
    return apply_projection(invert_gram(apply_phi_adjoint(y, s), s))


def apply_A_adjoint(x: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Adjoint of :func:`apply_A`; maps an attribute pair to a stack."""
    s.require_invertible()
    w = (s.F0 * s.scales - s.F1) / s.gram_det
    return w[:, None, None] * x[H]


def linear_regression(y: np.ndarray, s: ScaleRange) -> np.ndarray:
    """Per-pixel least-squares fit of ``j*h + v`` to the planes of ``y``."""
    return invert_gram(apply_phi_adjoint(y, s), s)


def strong_convexity_modulus(s: ScaleRange) -> float:
    """Twice the smallest eigenvalue of the per-pixel Gram block."""
    s.require_invertible()
    tr = s.F0 + s.F2
    lam_min = (tr - np.sqrt(tr**2 - 4.0 * s.gram_det)) / 2.0
    return float(2.0 * lam_min)
