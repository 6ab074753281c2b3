"""Friedrichs smoothing kernels and circular convolution.

The kernel is sampled on the grid and then renormalized discretely, so
constant fields are exact fixed points of the smoothing operator.  The
fast path computes convolutions through the FFT (exact circular
convolution on power-of-two grids); `direct_convolution` is the
quadratic-cost reference implementation used as an oracle in tests.

Width convention: delta is the physical support radius.  The resolvable
range is 8h <= delta <= 1/4; widths used in sweeps follow the ladder
delta_k = 2^-k, k = 2, 3, ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CostGuardError, GridMismatchError, KernelWidthError
from .fields import GridSpec, ScalarField, derivative

__all__ = [
    "MollifierKernel",
    "build_kernel",
    "mollify",
    "convolve_field",
    "direct_convolution",
    "weighted_moment_first",
    "second_moment_matrix",
    "kernel_derivative",
    "delta_ladder",
    "dump_kernel_csv",
]

DIRECT_COST_GUARD = 2 ** 16


@dataclass(frozen=True)
class MollifierKernel:
    """Nonnegative, even, compactly supported kernel of unit discrete mass."""

    grid: GridSpec
    delta: float
    kind: str
    samples: ScalarField = field(repr=False)

    @property
    def mass(self) -> float:
        return self.grid.cell_volume * math.fsum(self.samples.values.flat)


def build_kernel(kind: str, delta: float, grid: GridSpec) -> MollifierKernel:
    """Sample and renormalize a kernel of the given width.

    kinds: "bump" (default semantics) and "truncated-gaussian" (kept
    only to check robustness of conclusions against the kernel choice).
    """
    delta = float(delta)
    if delta < 8.0 * grid.h * (1.0 - 1e-12):
        raise KernelWidthError(
            f"under-resolved kernel: delta={delta} < 8h={8 * grid.h}"
        )
    if delta > 0.25 * (1.0 + 1e-12):
        raise KernelWidthError(
            f"support exceeds torus: delta={delta} > 1/4"
        )
    r2 = np.zeros(grid.shape)
    for ax in range(grid.d):
        r2 = r2 + grid.signed_offsets(ax) ** 2
    w = r2 / (delta * delta)
    vals = np.zeros(grid.shape)
    if kind == "bump":
        inside = w < 1.0
        vals[inside] = np.exp(-1.0 / (1.0 - w[inside]))
    elif kind == "truncated-gaussian":
        inside = w < 1.0
        s2 = (delta / 3.0) ** 2
        vals[inside] = np.exp(-r2[inside] / (2.0 * s2))
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    # renormalize until the discrete mass is exactly 1.0; one extra pass
    # removes the rounding left by the first division
    for _ in range(3):
        mass = grid.cell_volume * math.fsum(vals.flat)
        if mass == 1.0:
            break
        vals = vals / mass
    return MollifierKernel(grid=grid, delta=delta, kind=kind, samples=ScalarField(grid, vals))


def convolve_field(kernel_values: ScalarField, f: ScalarField) -> ScalarField:
    """h^d-weighted circular convolution of two fields via the FFT."""
    if kernel_values.grid != f.grid:
        raise GridMismatchError("kernel and field grids differ")
    g = f.grid
    out = np.fft.ifftn(np.fft.fftn(kernel_values.values) * np.fft.fftn(f.values)).real
    return ScalarField(g, out * g.cell_volume)


def mollify(f: ScalarField, kernel: MollifierKernel) -> ScalarField:
    """Smooth f by circular convolution with the kernel (fast path)."""
    return convolve_field(kernel.samples, f)


def direct_convolution(f: ScalarField, kernel: MollifierKernel) -> ScalarField:
    """Literal double-sum convolution; reference semantics for mollify."""
    return direct_convolve_field(kernel.samples, f)


def direct_convolve_field(kernel_values: ScalarField, f: ScalarField) -> ScalarField:
    """Quadratic-cost convolution of arbitrary kernel samples with f."""
    if kernel_values.grid != f.grid:
        raise GridMismatchError("kernel and field grids differ")
    g = f.grid
    if g.npoints > DIRECT_COST_GUARD:
        raise CostGuardError(
            f"direct convolution needs N^d <= {DIRECT_COST_GUARD}, got {g.npoints}"
        )
    kv = kernel_values.values
    # k_rev[m] = k[-m mod N] so that out[n] = h^d sum_m k_rev[m - n] f[m]
    krev = kv
    for ax in range(g.d):
        krev = np.roll(np.flip(krev, axis=ax), 1, axis=ax)
    fv = f.values
    out = np.empty(g.shape)
    for idx in np.ndindex(*g.shape):
        out[idx] = (np.roll(krev, idx, axis=tuple(range(g.d))) * fv).sum()
    return ScalarField(g, out * g.cell_volume)


def kernel_derivative(kernel: MollifierKernel, axes) -> ScalarField:
    """Spectral derivative of the sampled kernel along the given axes.

    Composed first-order derivatives, matching exactly the operators
    used elsewhere, so convolution identities hold to rounding error.
    """
    out = kernel.samples
    for ax in axes:
        out = derivative(out, ax)
    return out


def weighted_moment_first(kernel: MollifierKernel, axis: int) -> float:
    """h^d * sum |z| |d_axis J(z)|: the distance-weighted L1 size of the
    kernel gradient.  Scale invariance of the kernel family makes this
    essentially independent of delta."""
    dj = kernel_derivative(kernel, (axis,))
    r = kernel.grid.radius()
    return float(kernel.grid.cell_volume * (r * np.abs(dj.values)).sum())


def second_moment_matrix(kernel: MollifierKernel, i: int, j: int, a: int, b: int) -> float:
    """h^d * sum z_a z_b d2_{ij} J(z).

    The continuum value is delta_{ia} delta_{jb} + delta_{ja} delta_{ib}
    (integrate by parts twice against the unit-mass kernel); the
    discrete value approaches it as delta/h grows.
    """
    g = kernel.grid
    for ax in (i, j, a, b):
        if ax < 0 or ax >= g.d:
            raise ValueError(f"axis {ax} out of range for d={g.d}")
    d2 = kernel_derivative(kernel, (i, j))
    za = g.signed_offsets(a)
    zb = g.signed_offsets(b)
    return float(g.cell_volume * (za * zb * d2.values).sum())


def delta_ladder(grid: GridSpec, k_min: int = 2, k_max: int | None = None):
    """Widths delta_k = 2^-k for k = k_min..k_max, k_max capped by 8h."""
    if k_min < 2:
        raise ValueError("k_min must be >= 2 so that delta <= 1/4")
    cap = int(math.floor(math.log2(grid.N / 8.0)))
    if k_max is None:
        k_max = cap
    if k_max > cap:
        raise KernelWidthError(
            f"delta ladder k_max={k_max} under-resolved on N={grid.N} (cap {cap})"
        )
    if k_max < k_min:
        raise ValueError(f"empty ladder: k_min={k_min}, k_max={k_max}")
    return [2.0 ** (-k) for k in range(k_min, k_max + 1)]


def dump_kernel_csv(kernel: MollifierKernel, path) -> None:
    """CSV of (z, J(z)) for 1-d kernels, ordered by z for plotting."""
    if kernel.grid.d != 1:
        raise ValueError("kernel dump is defined for d = 1")
    z = kernel.grid.signed_offsets(0)
    order = np.argsort(z)
    with open(path, "w", newline="") as fh:
        fh.write("z,J\n")
        for n in order:
            fh.write(f"{float(z[n])!r},{float(kernel.samples.values[n])!r}\n")
