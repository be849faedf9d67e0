"""Noise covariance models for log-leader stacks.

A model couples an inter-octave matrix ``C`` (shape ``(J, J)``) with, for the
``full`` kind, one normalized stationary spatial kernel per octave pair.  The
kernel for pair ``(a, b)`` is a square array of odd side ``2*R+1`` indexed by
spatial lag, centered at lag zero where it equals 1 by construction; its
radius grows with the coarser octave of the pair.  ``var`` keeps only the
per-octave variances, ``inter`` the full inter-octave matrix; both use
implicit Kronecker-delta kernels.

Spatial conventions are periodic throughout: the sample estimator averages
lagged products with wraparound and the covariance product applies circular
convolutions, which makes the dense-matrix oracle exactly representable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ZeroVarianceError
from .forward import ScaleRange

KINDS = ("var", "inter", "full")
VAR_FLOOR = 1e-12


@dataclass
class CovarianceModel:
    kind: str
    scales: ScaleRange
    C: np.ndarray
    kernels: list | None = None  # kernels[a][b]: 2-D lag window, or None
    seed_lineage: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown covariance kind {self.kind!r}")
        self.C = np.asarray(self.C, dtype=np.float64)
        J = self.scales.J
        if self.C.shape != (J, J):
            raise DataError(f"inter-octave matrix must be {J}x{J}")
        if self.kind == "full" and self.kernels is None:
            raise DataError("full covariance model requires spatial kernels")

    @property
    def J(self) -> int:
        return self.scales.J

    def kernel(self, a: int, b: int) -> np.ndarray | None:
        if self.kernels is None:
            return None
        return self.kernels[a][b]


def kernel_radius(scales: ScaleRange, a: int, b: int, shape: tuple, radius_factor: float = 4.0) -> int:
    """Retained lag radius for octave pair ``(a, b)`` on an ``N1 x N2`` grid."""
    coarser = 2 ** max(scales.j1 + a, scales.j1 + b)
    cap = (min(shape) - 1) // 2
    return int(min(radius_factor * coarser, cap))


def _lag_window(surface: np.ndarray, radius: int) -> np.ndarray:
    """Extract lags with max-norm <= radius from a wrapped lag surface."""
    idx1 = np.arange(-radius, radius + 1) % surface.shape[0]
    idx2 = np.arange(-radius, radius + 1) % surface.shape[1]
    return surface[np.ix_(idx1, idx2)]


def estimate_covariance(
    leaders: np.ndarray, scales: ScaleRange, radius_factor: float = 4.0
) -> CovarianceModel:
    """Sample covariance of a single log-leader stack.

    Lagged products are averaged over the full grid with periodic wraparound;
    the inter-octave matrix comes from the zero lag and each kernel is the lag
    surface normalized by it.
    """
    leaders = np.asarray(leaders, dtype=np.float64)
    J = scales.J
    if leaders.shape[0] != J:
        raise DataError("leader stack does not match the octave range")
    n_pix = leaders.shape[1] * leaders.shape[2]

    means = leaders.mean(axis=(1, 2))
    ffts = [np.fft.fft2(leaders[a]) for a in range(J)]

    C = np.empty((J, J))
    surfaces: list[list] = [[None] * J for _ in range(J)]
    for a in range(J):
        for b in range(a, J):
            surf = np.fft.ifft2(np.conj(ffts[a]) * ffts[b]).real / n_pix
            surf -= means[a] * means[b]
            surfaces[a][b] = surf
            C[a, b] = surf[0, 0]
            C[b, a] = surf[0, 0]
    if np.any(np.diag(C) <= VAR_FLOOR):
        raise ZeroVarianceError("constant log-leader plane: zero sample variance")
    C = 0.5 * (C + C.T)

    kernels: list[list] = [[None] * J for _ in range(J)]
    for a in range(J):
        for b in range(a, J):
            radius = kernel_radius(scales, a, b, leaders.shape[1:], radius_factor)
            window = _lag_window(surfaces[a][b], radius)
            denom = C[a, b] if abs(C[a, b]) > VAR_FLOOR else np.sign(C[a, b]) * VAR_FLOOR or VAR_FLOOR
            kern = window / denom
            kern[radius, radius] = 1.0
            kernels[a][b] = kern
            # pair consistency: kernel of the swapped pair is the lag-reversed copy
            kernels[b][a] = kern[::-1, ::-1].copy()
    return CovarianceModel("full", scales, C, kernels)


def average_covariance(models: list) -> CovarianceModel:
    """Entrywise mean of same-shaped covariance models."""
    if not models:
        raise DataError("cannot average an empty list of covariance models")
    first = models[0]
    for m in models[1:]:
        if m.kind != first.kind or m.scales != first.scales:
            raise DataError("covariance models disagree in kind or octave range")
    C = np.mean([m.C for m in models], axis=0)
    kernels = None
    if first.kernels is not None:
        J = first.J
        kernels = [[None] * J for _ in range(J)]
        for a in range(J):
            for b in range(J):
                stack = [m.kernels[a][b] for m in models]
                if len({k.shape for k in stack}) != 1:
                    raise DataError("kernel supports disagree across models")
                kernels[a][b] = np.mean(stack, axis=0)
    return CovarianceModel(first.kind, first.scales, C, kernels,
                           seed_lineage=first.seed_lineage)


def restrict(model: CovarianceModel, kind: str) -> CovarianceModel:
    """Drop spatial kernels (``inter``) and optionally off-diagonals (``var``)."""
    if kind == "var":
        return CovarianceModel("var", model.scales, np.diag(np.diag(model.C)),
                               seed_lineage=model.seed_lineage)
    if kind == "inter":
        return CovarianceModel("inter", model.scales, model.C.copy(),
                               seed_lineage=model.seed_lineage)
    raise DataError(f"cannot restrict to kind {kind!r}")


def torus_kernel(kernel: np.ndarray, shape: tuple) -> np.ndarray:
    """Fold a centered lag window onto the ``N1 x N2`` torus (lag 0 at [0,0])."""
    radius = kernel.shape[0] // 2
    out = np.zeros(shape)
    idx1 = np.arange(-radius, radius + 1) % shape[0]
    idx2 = np.arange(-radius, radius + 1) % shape[1]
    np.add.at(out, (idx1[:, None], idx2[None, :]), kernel)
    return out


def apply_S(model: CovarianceModel, eps: np.ndarray) -> np.ndarray:
    """Covariance product: per octave, the sum over octave pairs of circular
    convolutions of the probe planes with the scaled kernels."""
    eps = np.asarray(eps, dtype=np.float64)
    if model.kernels is None:
        return np.tensordot(model.C, eps, axes=(1, 0))
    J = model.J
    shape = eps.shape[1:]
    eps_fft = [np.fft.fft2(eps[b]) for b in range(J)]
    out = np.zeros_like(eps)
    for a in range(J):
        acc = np.zeros(shape, dtype=complex)
        for b in range(J):
            kern_fft = np.fft.fft2(torus_kernel(model.kernels[a][b], shape))
            acc += model.C[a, b] * kern_fft * eps_fft[b]
        out[a] = np.fft.ifft2(acc).real
    return out


def trace_term(model: CovarianceModel, n_total: int) -> float:
    """Closed-form third Stein term ``Tr(A S A*)``.

    Only the inter-octave matrix enters: the spatial kernels drop out at zero
    lag because they are normalized there.  ``n_total`` is the attribute
    dimension ``2*N1*N2``.
    """
    s = model.scales
    s.require_invertible()
    jv = s.scales
    coef = (
        s.F1**2
        - 2.0 * s.F0 * s.F1 * jv[None, :]
        + s.F0**2 * jv[:, None] * jv[None, :]
    )
    total = float((coef * model.C).sum())
    return (n_total / 2.0) / s.gram_det**2 * total


def draw_probe(scales: ScaleRange, shape: tuple, seed: int) -> np.ndarray:
    """Seeded i.i.d. standard normal probe shaped like a leader stack."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((scales.J,) + tuple(shape))


# -- serialization ---------------------------------------------------------


def save_covariance(model: CovarianceModel, path) -> None:
    """One file: a JSON header line, then little-endian float64 raw blocks
    for ``C`` and (for ``full`` models) each kernel in row-major pair order."""
    header = {
        "format": "steintv-covariance",
        "version": 1,
        "kind": model.kind,
        "j1": model.scales.j1,
        "j2": model.scales.j2,
        "seed_lineage": model.seed_lineage,
        "kernel_radii": None,
    }
    if model.kernels is not None:
        header["kernel_radii"] = [
            [model.kernels[a][b].shape[0] // 2 for b in range(model.J)]
            for a in range(model.J)
        ]
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(model.C.astype("<f8").tobytes())
        if model.kernels is not None:
            for a in range(model.J):
                for b in range(model.J):
                    fh.write(model.kernels[a][b].astype("<f8").tobytes())


def load_covariance(path) -> CovarianceModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "steintv-covariance":
            raise DataError(f"{path}: not a covariance file")
        scales = ScaleRange(header["j1"], header["j2"])
        J = scales.J
        C = np.frombuffer(fh.read(8 * J * J), dtype="<f8").reshape(J, J).copy()
        kernels = None
        if header["kernel_radii"] is not None:
            kernels = [[None] * J for _ in range(J)]
            for a in range(J):
                for b in range(J):
                    side = 2 * header["kernel_radii"][a][b] + 1
                    raw = fh.read(8 * side * side)
                    kernels[a][b] = (
                        np.frombuffer(raw, dtype="<f8").reshape(side, side).copy()
                    )
    return CovarianceModel(header["kind"], scales, C, kernels,
                           seed_lineage=header.get("seed_lineage"))
