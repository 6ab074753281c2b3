"""Divergence-form noise operators on torus fields.

The central object is the operator K taking a scalar f to the m-vector
with components sum_i d_i(sigma_{ik} f), and an m-vector g to the scalar
sum_{i,k} d_i(sigma_{ik} g_k).  K is implemented in divergence form
(multiply, then differentiate) so every output is an exact total
divergence and integrates to zero on the torus.

Products of grid fields are pointwise; the optional 2/3-rule dealiasing
of products is off by default and recorded by the harness when enabled.
"""

from __future__ import annotations

import numpy as np

from .errors import GridMismatchError
from .fields import (
    ScalarField,
    SigmaField,
    VectorFieldM,
    constant_field,
    dealias_23,
    derivative,
)

__all__ = ["apply_K_scalar", "apply_K_vector", "div_sigma", "ito_correction"]


def _product(a: ScalarField, b: ScalarField, dealias: bool) -> ScalarField:
    out = a * b
    return dealias_23(out) if dealias else out


def apply_K_scalar(sigma: SigmaField, f: ScalarField, dealias: bool = False) -> VectorFieldM:
    """Component k of the result is sum_i d_i(sigma_{ik} f)."""
    if sigma.grid != f.grid:
        raise GridMismatchError("sigma and f grids differ")
    comps = []
    for k in range(sigma.m):
        acc = np.zeros(f.grid.shape)
        for i in range(sigma.d):
            acc += derivative(_product(sigma.comp(i, k), f, dealias), i).values
        comps.append(ScalarField(f.grid, acc))
    return VectorFieldM(tuple(comps))


def apply_K_vector(sigma: SigmaField, g: VectorFieldM, dealias: bool = False) -> ScalarField:
    """Scalar contraction sum_{i,k} d_i(sigma_{ik} g_k)."""
    if sigma.grid != g.grid:
        raise GridMismatchError("sigma and g grids differ")
    if sigma.m != g.m:
        raise ValueError(f"component mismatch: sigma has m={sigma.m}, g has m={g.m}")
    acc = np.zeros(g.grid.shape)
    for k in range(sigma.m):
        for i in range(sigma.d):
            acc += derivative(_product(sigma.comp(i, k), g[k], dealias), i).values
    return ScalarField(g.grid, acc)


def div_sigma(sigma: SigmaField) -> VectorFieldM:
    """Row divergence of sigma: component k is sum_i d_i sigma_{ik}.

    Identical to applying K to the constant field 1.
    """
    return apply_K_scalar(sigma, constant_field(sigma.grid, 1.0))


def ito_correction(sigma: SigmaField, u: ScalarField, dealias: bool = False) -> ScalarField:
    """Second-order correction (1/2) K(K u) from the noise conversion."""
    return ScalarField(
        u.grid,
        0.5 * apply_K_vector(sigma, apply_K_scalar(sigma, u, dealias), dealias).values,
    )
