"""Mollification error terms and the double-commutator decomposition.

With J the smoothing operator and K the divergence-form noise operator,
the two error terms measured here are

    e2(u) = J K u - K J u          (an m-vector field),
    e3(u) = (K K J u - J K K u)/2  (a scalar field),

and the central object is the double commutator

    [[K, J], K] u = 2 K J K u - J K K u - K K J u.

The decomposition splits the double commutator into eight literal
integral terms T1..T8 (convolutions of the field against kernel
derivatives with sigma-dependent coefficients), grouped as

    I1 = T2 - T6,  I2 = -T4 - T8,  I3 = T1 - T3 - T7,

so that I1 + I2 + I3 - T5 reassembles the double commutator.  Each term
has a closed-form limit as the kernel width shrinks; the four limit
fields cancel pointwise, which is exactly why the double commutator
vanishes.

Every T_n is computed by convolving against sampled kernel derivatives
(never by differentiating the smoothed output), which matches the
integral expressions literally and keeps the terms well defined for
rough u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, SigmaField, VectorFieldM, derivative, lq_norm
from .mollifier import MollifierKernel, build_kernel, convolve_field, kernel_derivative, mollify
from .operators import apply_K_scalar, apply_K_vector

__all__ = [
    "DecompositionTerms",
    "LimitFields",
    "e2",
    "e3",
    "double_commutator",
    "kj_bracket_scalar",
    "kj_bracket_vector",
    "decompose",
    "analytic_limits",
    "limit_residuals",
    "dump_terms_csv",
]


def _as_kernel(grid, delta) -> MollifierKernel:
    if isinstance(delta, MollifierKernel):
        return delta
    return build_kernel("bump", float(delta), grid)


def _mollify_vector(g: VectorFieldM, kernel: MollifierKernel) -> VectorFieldM:
    return VectorFieldM(tuple(mollify(c, kernel) for c in g.components))


def kj_bracket_scalar(sigma: SigmaField, u: ScalarField, kernel: MollifierKernel,
                      dealias: bool = False) -> VectorFieldM:
    """[K, J] u = K J u - J K u on a scalar field (m-vector result)."""
    kju = apply_K_scalar(sigma, mollify(u, kernel), dealias)
    jku = _mollify_vector(apply_K_scalar(sigma, u, dealias), kernel)
    return kju - jku


def kj_bracket_vector(sigma: SigmaField, g: VectorFieldM, kernel: MollifierKernel,
                      dealias: bool = False) -> ScalarField:
    """[K, J] g = K J g - J K g on an m-vector field (scalar result)."""
    kjg = apply_K_vector(sigma, _mollify_vector(g, kernel), dealias)
    jkg = mollify(apply_K_vector(sigma, g, dealias), kernel)
    return kjg - jkg


def e2(sigma: SigmaField, u: ScalarField, delta, dealias: bool = False) -> VectorFieldM:
    """First mollification error J K u - K J u (sign convention JK - KJ)."""
    kernel = _as_kernel(u.grid, delta)
    jku = _mollify_vector(apply_K_scalar(sigma, u, dealias), kernel)
    kju = apply_K_scalar(sigma, mollify(u, kernel), dealias)
    return jku - kju


def e3(sigma: SigmaField, u: ScalarField, delta, dealias: bool = False) -> ScalarField:
    """Second mollification error (K K J u - J K K u)/2."""
    kernel = _as_kernel(u.grid, delta)
    kkju = apply_K_vector(sigma, apply_K_scalar(sigma, mollify(u, kernel), dealias), dealias)
    jkku = mollify(apply_K_vector(sigma, apply_K_scalar(sigma, u, dealias), dealias), kernel)
    return ScalarField(u.grid, 0.5 * (kkju.values - jkku.values))


def double_commutator(sigma: SigmaField, u: ScalarField, delta,
                      dealias: bool = False, form: str = "unpacked") -> ScalarField:
    """[[K, J], K] u.

    form "unpacked" evaluates 2 K J K u - J K K u - K K J u; form
    "nested" evaluates [K,J](K u) - K([K,J] u).  The two agree to
    rounding error, which is one of the verified identities.
    """
    kernel = _as_kernel(u.grid, delta)
    if form == "unpacked":
        ku = apply_K_scalar(sigma, u, dealias)
        kjku = apply_K_vector(sigma, _mollify_vector(ku, kernel), dealias)
        jkku = mollify(apply_K_vector(sigma, ku, dealias), kernel)
        kkju = apply_K_vector(sigma, apply_K_scalar(sigma, mollify(u, kernel), dealias), dealias)
        return ScalarField(u.grid, 2.0 * kjku.values - jkku.values - kkju.values)
    if form == "nested":
        ku = apply_K_scalar(sigma, u, dealias)
        outer = kj_bracket_vector(sigma, ku, kernel, dealias)
        inner = apply_K_vector(sigma, kj_bracket_scalar(sigma, u, kernel, dealias), dealias)
        return outer - inner
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class DecompositionTerms:
    """The eight integral terms and their grouped sums."""

    T1: ScalarField
    T2: ScalarField
    T3: ScalarField
    T4: ScalarField
    T5: ScalarField
    T6: ScalarField
    T7: ScalarField
    T8: ScalarField

    @property
    def I1(self) -> ScalarField:
        return self.T2 - self.T6

    @property
    def I2(self) -> ScalarField:
        return -self.T4 - self.T8

    @property
    def I3(self) -> ScalarField:
        return self.T1 - self.T3 - self.T7

    @property
    def standalone(self) -> ScalarField:
        return self.T5

    def reassembled(self) -> ScalarField:
        """I1 + I2 + I3 - T5, which equals the double commutator."""
        return ScalarField(
            self.T1.grid,
            self.I1.values + self.I2.values + self.I3.values - self.T5.values,
        )


def decompose(sigma: SigmaField, u: ScalarField, delta,
              conv=convolve_field) -> DecompositionTerms:
    """Evaluate T1..T8 literally as kernel-derivative convolutions.

    `conv` selects the convolution backend; tests pass the direct
    double-sum to use each term's literal integral as an oracle.
    """
    kernel = _as_kernel(u.grid, delta)
    grid = u.grid
    d, m = sigma.d, sigma.m

    dj = [kernel_derivative(kernel, (i,)) for i in range(d)]
    d2j = [[kernel_derivative(kernel, (i, j)) for j in range(d)] for i in range(d)]
    dsig = [[derivative(sigma.comp(i, k), j) for k in range(m)] for i in range(d) for j in range(d)]

    def ds(i, j, k):
        # d_j sigma_{ik}
        return dsig[i * d + j][k]

    ju = conv(kernel.samples, u)
    dju = [conv(dj[i], u) for i in range(d)]
    d2ju = [[conv(d2j[i][j], u) for j in range(d)] for i in range(d)]

    t1 = np.zeros(grid.shape)
    t2 = np.zeros(grid.shape)
    t3 = np.zeros(grid.shape)
    t4 = np.zeros(grid.shape)
    t5 = np.zeros(grid.shape)
    t6 = np.zeros(grid.shape)
    t7 = np.zeros(grid.shape)
    t8 = np.zeros(grid.shape)

    for k in range(m):
        sig_u = [sigma.comp(j, k) * u for j in range(d)]
        dj_sig_u = [conv(dj[j], sig_u[j]) for j in range(d)]
        for i in range(d):
            si = sigma.comp(i, k)
            div_i = ds(i, i, k)  # d_i sigma_{ik}
            for j in range(d):
                sj = sigma.comp(j, k)
                t1 += 2.0 * si.values * conv(d2j[i][j], sig_u[j]).values
                t3 += conv(d2j[i][j], si * sig_u[j]).values
                t7 += si.values * sj.values * d2ju[i][j].values
                t4 -= conv(dj[i], sj * ds(i, j, k) * u).values
                t8 += si.values * ds(j, i, k).values * dju[j].values
            t2 += 2.0 * div_i.values * sum(dj_sig_u[j].values for j in range(d))
    # terms carrying the row divergence of sigma
    for k in range(m):
        divk = np.zeros(grid.shape)
        for j in range(d):
            divk += ds(j, j, k).values
        divk_f = ScalarField(grid, divk)
        for i in range(d):
            si = sigma.comp(i, k)
            t5 += derivative(si * divk_f, i).values * ju.values
            t6 += 2.0 * si.values * divk * conv(dj[i], u).values

    return DecompositionTerms(
        T1=ScalarField(grid, t1),
        T2=ScalarField(grid, t2),
        T3=ScalarField(grid, t3),
        T4=ScalarField(grid, t4),
        T5=ScalarField(grid, t5),
        T6=ScalarField(grid, t6),
        T7=ScalarField(grid, t7),
        T8=ScalarField(grid, t8),
    )


@dataclass(frozen=True)
class LimitFields:
    """Closed-form small-width limits of I1, I2, I3 and -T5.

    The four fields cancel pointwise: L1 + L2 + L3 + L5 = 0.  The
    gradient contraction |grad sigma|^2 means sum_k (sum_i d_i
    sigma_{ik})^2, i.e. the squared row divergence, matching the f = 1
    convention of the operator; the pointwise cancellation of the four
    limits is the arbiter of that choice.
    """

    L1: ScalarField
    L2: ScalarField
    L3: ScalarField
    L5: ScalarField

    def total(self) -> ScalarField:
        return ScalarField(
            self.L1.grid,
            self.L1.values + self.L2.values + self.L3.values + self.L5.values,
        )


def analytic_limits(sigma: SigmaField, u: ScalarField) -> LimitFields:
    """Assemble the four limit fields from sigma derivatives and u.

    All second derivatives enter through shared ingredient arrays so the
    analytic cancellation survives in floating point:

        A = sum_k (d_i sigma_{ik})(d_j sigma_{jk})       (row divergence squared)
        B = sum_{ijk} (d_j sigma_{ik})(d_i sigma_{jk})
        C = sum_{ijk} sigma_{ik} d_i d_j sigma_{jk}

        L1 = 2 A u,  L2 = (B + C) u,  L3 = -(B + A) u,  L5 = -(A + C) u.
    """
    grid = u.grid
    d, m = sigma.d, sigma.m
    ds = [[[derivative(sigma.comp(i, k), j) for j in range(d)] for k in range(m)] for i in range(d)]

    A = np.zeros(grid.shape)
    B = np.zeros(grid.shape)
    C = np.zeros(grid.shape)
    for k in range(m):
        divk = np.zeros(grid.shape)
        for i in range(d):
            divk += ds[i][k][i].values
        A += divk * divk
        for i in range(d):
            for j in range(d):
                B += ds[i][k][j].values * ds[j][k][i].values
                C += sigma.comp(i, k).values * derivative(ds[j][k][j], i).values

    uv = u.values
    return LimitFields(
        L1=ScalarField(grid, 2.0 * A * uv),
        L2=ScalarField(grid, (B + C) * uv),
        L3=ScalarField(grid, -(B + A) * uv),
        L5=ScalarField(grid, -(A + C) * uv),
    )


def limit_residuals(sigma: SigmaField, u: ScalarField, delta, q) -> tuple:
    """L^q distances of (I1, I2, I3, -T5) from their closed-form limits."""
    terms = decompose(sigma, u, delta)
    lim = analytic_limits(sigma, u)
    minus_t5 = ScalarField(u.grid, -terms.T5.values)
    return (
        lq_norm(terms.I1 - lim.L1, q),
        lq_norm(terms.I2 - lim.L2, q),
        lq_norm(terms.I3 - lim.L3, q),
        lq_norm(minus_t5 - lim.L5, q),
    )


def dump_terms_csv(terms: DecompositionTerms, dc: ScalarField, path) -> None:
    """Per-node CSV of T1..T8, I1..I3 and the double commutator."""
    grid = terms.T1.grid
    names = ["T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8"]
    cols = [getattr(terms, n) for n in names] + [terms.I1, terms.I2, terms.I3, dc]
    header = [f"i{ax}" for ax in range(grid.d)] + names + ["I1", "I2", "I3", "double_commutator"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for idx in np.ndindex(*grid.shape):
            row = [str(i) for i in idx] + [repr(float(c.values[idx])) for c in cols]
            fh.write(",".join(row) + "\n")
