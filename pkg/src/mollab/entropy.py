"""Entropy families and the renormalisation error combination.

An entropy is a C^2 function S with polynomial growth of exponent q:
|S| <= c0 (1+|r|^q), |S'| <= c1 (1+|r|^(q-1)), |S''| <= c2 (1+|r|^(q-2)).
The certificates are measured empirically over a sampled range and
reported, never assumed.

The quantity driven to zero by shrinking the kernel width is

    S'(u_d) e3(u) - S''(u_d) e2(u) . K(u_d),       u_d = J u,

tested through its smooth-test-function integrals.  The same quantity
also equals

    (1/2) S'(u_d) [[K,J],K] u  +  S''(u_d) u_d [K,J](u) . div(sigma)
        + K( sigma-weighted S'(u_d) [K,J](u) ),

an identity that is exact operator algebra; `proof_identity` returns
the residual of that rewriting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .fields import ScalarField, SigmaField, VectorFieldM
from .mollifier import mollify
from .operators import apply_K_scalar, apply_K_vector, div_sigma
from .commutators import _as_kernel, double_commutator, e2, e3, kj_bracket_scalar

__all__ = [
    "Entropy",
    "make_entropy",
    "growth_certificate",
    "theorem_combination",
    "proof_identity",
    "weighted_integral",
]


@dataclass(frozen=True)
class Entropy:
    """Pointwise C^2 map with its first two derivatives and growth exponent."""

    kind: str
    q: float
    s: object
    s1: object
    s2: object

    def __call__(self, r):
        return self.s(r)


def make_entropy(kind: str, q: float, s=None, s1=None, s2=None) -> Entropy:
    """Construct a named entropy.

    kinds:
      power-smooth   S(r) = (1 + r^2)^(q/2), smooth for every q >= 1,
      quadratic      S(r) = r^2, requires q >= 2 to satisfy the growth,
      linear         S(r) = r (degenerate check: S'' = 0),
      custom         user-supplied evaluators.
    """
    q = float(q)
    if kind == "power-smooth":
        if q < 1:
            raise ValueError("power-smooth entropy needs q >= 1")

        def s_(r):
            return (1.0 + np.asarray(r) ** 2) ** (q / 2.0)

        def s1_(r):
            r = np.asarray(r)
            return q * r * (1.0 + r ** 2) ** (q / 2.0 - 1.0)

        def s2_(r):
            r = np.asarray(r)
            return q * (1.0 + r ** 2) ** (q / 2.0 - 2.0) * (1.0 + (q - 1.0) * r ** 2)

        return Entropy("power-smooth", q, s_, s1_, s2_)
    if kind == "quadratic":
        if q < 2:
            raise ValueError("quadratic entropy violates the growth bound for q < 2")
        return Entropy(
            "quadratic",
            q,
            lambda r: np.asarray(r) ** 2,
            lambda r: 2.0 * np.asarray(r),
            lambda r: np.full_like(np.asarray(r, dtype=float), 2.0),
        )
    if kind == "linear":
        return Entropy(
            "linear",
            max(q, 1.0),
            lambda r: np.asarray(r, dtype=float),
            lambda r: np.ones_like(np.asarray(r, dtype=float)),
            lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        )
    if kind == "custom":
        if s is None or s1 is None or s2 is None:
            raise ValueError("custom entropy needs s, s1 and s2")
        return Entropy("custom", q, s, s1, s2)
    raise ValueError(f"unknown entropy kind {kind!r}")


def growth_certificate(entropy: Entropy, rmax: float = 100.0, samples: int = 10001) -> tuple:
    """Empirical growth constants (c0, c1, c2) over [-rmax, rmax].

    c_j is the largest observed ratio |S^(j)(r)| / max(1, |r|^(q-j)),
    a valid constant for the polynomial bound c_j (1 + |r|^(q-j)).
    """
    r = np.linspace(-rmax, rmax, samples)
    q = entropy.q
    out = []
    for j, fn in enumerate((entropy.s, entropy.s1, entropy.s2)):
        with np.errstate(divide="ignore"):
            bound = np.maximum(1.0, np.abs(r) ** (q - j))
        out.append(float(np.max(np.abs(np.asarray(fn(r))) / bound)))
    return tuple(out)


def _entropy_weights(entropy: Entropy, u_delta: ScalarField):
    g = u_delta.grid
    s1 = ScalarField(g, np.asarray(entropy.s1(u_delta.values), dtype=float))
    s2 = ScalarField(g, np.asarray(entropy.s2(u_delta.values), dtype=float))
    return s1, s2


def theorem_combination(sigma: SigmaField, u: ScalarField, delta, entropy: Entropy,
                        dealias: bool = False) -> ScalarField:
    """S'(u_d) e3 - S''(u_d) e2 . K(u_d) with u_d the smoothed field."""
    kernel = _as_kernel(u.grid, delta)
    u_delta = mollify(u, kernel)
    s1, s2 = _entropy_weights(entropy, u_delta)
    err3 = e3(sigma, u, kernel, dealias)
    err2 = e2(sigma, u, kernel, dealias)
    ku_delta = apply_K_scalar(sigma, u_delta, dealias)
    dot = np.zeros(u.grid.shape)
    for k in range(err2.m):
        dot += err2[k].values * ku_delta[k].values
    return ScalarField(u.grid, s1.values * err3.values - s2.values * dot)


def proof_identity(sigma: SigmaField, u: ScalarField, delta, entropy: Entropy,
                   dealias: bool = False) -> ScalarField:
    """Residual of the double-commutator rewriting of the combination.

    Assembles (1/2) S'(u_d) [[K,J],K]u + S''(u_d) u_d [K,J](u).div(sigma)
    + K(S'(u_d) [K,J](u)) and subtracts it from `theorem_combination`.
    Exact in exact arithmetic; for band-limited inputs and polynomial
    entropies the residual is pure rounding noise.
    """
    kernel = _as_kernel(u.grid, delta)
    u_delta = mollify(u, kernel)
    s1, s2 = _entropy_weights(entropy, u_delta)

    bracket = kj_bracket_scalar(sigma, u, kernel, dealias)  # [K,J](u), equals -e2
    dc = double_commutator(sigma, u, kernel, dealias)
    grad_sigma = div_sigma(sigma)

    dot = np.zeros(u.grid.shape)
    for k in range(bracket.m):
        dot += bracket[k].values * grad_sigma[k].values

    weighted = VectorFieldM(tuple(s1 * bracket[k] for k in range(bracket.m)))
    transport = apply_K_vector(sigma, weighted, dealias)

    rhs = 0.5 * s1.values * dc.values + s2.values * u_delta.values * dot + transport.values
    combo = theorem_combination(sigma, u, kernel, entropy, dealias)
    return ScalarField(u.grid, combo.values - rhs)


def weighted_integral(f: ScalarField, phi: ScalarField) -> float:
    """h^d-weighted integral of phi * f over the torus."""
    if f.grid != phi.grid:
        raise GridMismatchError("integrand grids differ")
    return float(f.grid.cell_volume * math.fsum((phi.values * f.values).flat))
