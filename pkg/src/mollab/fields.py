"""Periodic grids, field containers, derivatives and discrete norms.

Everything in this package lives on the unit torus [0, 1)^d sampled on a
uniform grid with N points per axis (N a power of two, so transform-based
convolution is exact circular convolution).  Fields are immutable after
construction; all operations are pure functions and safe to evaluate
concurrently.

Discrete conventions
--------------------
* node coordinates: x_n = n * h with h = 1/N,
* L^q norm: (h^d * sum |f|^q)^(1/q), max |f| for q = inf,
* spectral derivative: Fourier multiplier 2*pi*i*n with the Nyquist mode
  zeroed (odd derivative of a real field), so the derivative of every
  field has exactly zero mean,
* second and higher derivatives are compositions of the first-order
  operator, never separate multipliers, so operator identities that hold
  for compositions hold verbatim in the discrete setting.
"""

from __future__ import annotations

import csv
import itertools
import math
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorFieldM",
    "SigmaField",
    "Exponents",
    "make_grid",
    "lq_norm",
    "sobolev_norm",
    "derivative",
    "exponents",
    "gen_sigma",
    "gen_u",
    "parse_preset",
    "power_singularity_lp_norm",
    "dealias_23",
    "save_binary",
    "load_binary",
    "save_csv",
]

SINGULARITY_CAP = 1.0e6


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [0,1)^d with N nodes per axis."""

    d: int
    N: int

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def npoints(self) -> int:
        return self.N ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    def axis_coords(self) -> np.ndarray:
        """1-d array of node coordinates n*h."""
        return np.arange(self.N) / self.N

    def coords(self, axis: int) -> np.ndarray:
        """d-dim array of the given coordinate at every node."""
        x = self.axis_coords()
        mesh = np.meshgrid(*([x] * self.d), indexing="ij")
        return mesh[axis]

    def signed_offsets(self, axis: int) -> np.ndarray:
        """Signed periodic displacement z_axis of every node from the origin.

        Built from integer offsets so that z(-n) == -z(n) exactly; the
        value at the antipodal node is -1/2 (its own mirror image).
        """
        n = np.arange(self.N)
        off = np.where(n < self.N // 2, n, n - self.N).astype(float)
        z = off / self.N
        mesh = np.meshgrid(*([z] * self.d), indexing="ij")
        return mesh[axis]

    def radius(self) -> np.ndarray:
        """Periodic Euclidean distance of every node from the origin."""
        r2 = np.zeros(self.shape)
        for ax in range(self.d):
            r2 = r2 + self.signed_offsets(ax) ** 2
        return np.sqrt(r2)


def make_grid(d: int, N: int) -> GridSpec:
    """Build a grid, rejecting unsupported dimensions and node counts."""
    if not isinstance(d, int) or d < 1 or d > 3:
        raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d!r}")
    if not isinstance(N, int) or N < 16 or (N & (N - 1)) != 0:
        raise ValueError(f"N must be a power of two >= 16, got {N!r}")
    return GridSpec(d=d, N=N)


@dataclass(frozen=True)
class ScalarField:
    """Real samples of a scalar function on a GridSpec (row-major)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(
                f"value shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mean(self) -> float:
        return float(self.values.mean())

    def same_grid(self, other) -> None:
        if self.grid != other.grid:
            raise GridMismatchError(
                f"grids differ: {self.grid} vs {other.grid}"
            )

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.same_grid(other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.same_grid(other)
        return ScalarField(self.grid, self.values - other.values)

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self.same_grid(other)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * float(other))

    __rmul__ = __mul__


def constant_field(grid: GridSpec, c: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(c)))


@dataclass(frozen=True)
class VectorFieldM:
    """m scalar components sharing one grid (noise-space valued fields)."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("vector field needs at least one component")
        g = comps[0].grid
        for c in comps:
            if c.grid != g:
                raise GridMismatchError("vector components on different grids")
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    def __getitem__(self, k: int) -> ScalarField:
        return self.components[k]

    def __sub__(self, other: "VectorFieldM") -> "VectorFieldM":
        if self.m != other.m:
            raise ValueError("component counts differ")
        return VectorFieldM(tuple(a - b for a, b in zip(self.components, other.components)))

    def pointwise_norm(self) -> ScalarField:
        """Euclidean magnitude over components at every node."""
        acc = np.zeros(self.grid.shape)
        for c in self.components:
            acc += c.values ** 2
        return ScalarField(self.grid, np.sqrt(acc))


@dataclass(frozen=True)
class SigmaField:
    """d x m matrix of scalar components sigma_{ik} on a shared grid."""

    components: tuple  # nested: components[i][k] is a ScalarField

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.components)
        if not rows or not rows[0]:
            raise ValueError("sigma needs at least one component")
        g = rows[0][0].grid
        m = len(rows[0])
        for row in rows:
            if len(row) != m:
                raise ValueError("ragged sigma component matrix")
            for c in row:
                if c.grid != g:
                    raise GridMismatchError("sigma components on different grids")
        if len(rows) != g.d:
            raise ValueError(
                f"sigma has {len(rows)} rows but the grid dimension is {g.d}"
            )
        object.__setattr__(self, "components", rows)

    @property
    def grid(self) -> GridSpec:
        return self.components[0][0].grid

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def m(self) -> int:
        return len(self.components[0])

    def comp(self, i: int, k: int) -> ScalarField:
        return self.components[i][k]

    def squared_magnitude(self) -> np.ndarray:
        """Pointwise sum of sigma_{ik}^2 over all components."""
        acc = np.zeros(self.grid.shape)
        for row in self.components:
            for c in row:
                acc += c.values ** 2
        return acc

    def regularity(self, order: int, r) -> float:
        """Discrete Sobolev norm: sum of component W^{order,r} norms.

        Recorded alongside experiment results; thresholds are never
        enforced because the continuum constants are not quantified.
        """
        return float(
            sum(sobolev_norm(c, order, r) for row in self.components for c in row)
        )


@dataclass(frozen=True)
class Exponents:
    """Integrability pair (p, q) with the derived conjugates.

    r1 = p*q/(p - q) and r2 = 2*p*q/(p - q); both are math.inf when
    p == q (the symbolic infinite value, never a large float).
    """

    p: float
    q: float
    r1: float
    r2: float


def exponents(p: float, q: float) -> Exponents:
    p = float(p)
    q = float(q)
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if q < 1 or q > p:
        raise ValueError(f"q must lie in [1, p], got q={q}, p={p}")
    if p == q:
        r1 = math.inf
        r2 = math.inf
    else:
        r1 = p * q / (p - q)
        r2 = 2.0 * r1
    return Exponents(p=p, q=q, r1=r1, r2=r2)


# ---------------------------------------------------------------------------
# norms and derivatives
# ---------------------------------------------------------------------------


def lq_norm(f: ScalarField, q) -> float:
    """Discrete L^q norm on the probability-normalized torus."""
    if q != math.inf and q < 1:
        raise ValueError(f"q must be >= 1 or inf, got {q}")
    a = np.abs(f.values)
    if q == math.inf:
        return float(a.max())
    return float((f.grid.cell_volume * (a ** q).sum()) ** (1.0 / q))


def _spectral_multiplier(grid: GridSpec, axis: int) -> np.ndarray:
    """First-derivative Fourier multiplier 2*pi*i*n, Nyquist zeroed."""
    k = 2j * np.pi * np.fft.fftfreq(grid.N, d=grid.h)
    k[grid.N // 2] = 0.0
    shape = [1] * grid.d
    shape[axis] = grid.N
    return k.reshape(shape)


def derivative(f: ScalarField, axis: int, backend: str = "spectral") -> ScalarField:
    """Periodic derivative along one axis.

    The spectral backend is exact for trigonometric polynomials below
    the Nyquist mode; "centered2" is the 2nd-order centered difference
    used as an independent cross-check.
    """
    if axis < 0 or axis >= f.grid.d:
        raise ValueError(f"axis {axis} out of range for d={f.grid.d}")
    if backend == "spectral":
        F = np.fft.fft(f.values, axis=axis)
        out = np.fft.ifft(_spectral_multiplier(f.grid, axis) * F, axis=axis).real
        return ScalarField(f.grid, out)
    if backend == "centered2":
        v = f.values
        out = (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * f.grid.h)
        return ScalarField(f.grid, out)
    raise ValueError(f"unknown derivative backend {backend!r}")


def sobolev_norm(f: ScalarField, order: int, r) -> float:
    """Sum of L^r norms of f and its spectral derivatives up to `order`."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if r != math.inf and r < 1:
        raise ValueError(f"r must be >= 1 or inf, got {r}")
    total = lq_norm(f, r)
    d = f.grid.d
    for n in range(1, order + 1):
        for alpha in itertools.combinations_with_replacement(range(d), n):
            g = f
            for ax in alpha:
                g = derivative(g, ax)
            total += lq_norm(g, r)
    return float(total)


def dealias_23(f: ScalarField) -> ScalarField:
    """Zero every Fourier mode with |n| > N/3 on any axis (2/3 rule)."""
    F = np.fft.fftn(f.values)
    n1 = np.fft.fftfreq(f.grid.N) * f.grid.N
    keep = np.abs(n1) <= f.grid.N / 3.0
    for ax in range(f.grid.d):
        shape = [1] * f.grid.d
        shape[ax] = f.grid.N
        F = F * keep.reshape(shape)
    return ScalarField(f.grid, np.fft.ifftn(F).real)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_PRESET_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_-]*)\s*(?:\(([^)]*)\))?\s*(.*)$")


def parse_preset(spec: str):
    """Split a preset string into (name, numeric args).

    Accepts both "name(a,b)" and "name a b"; e.g. "constant 1",
    "fourier-decay 3", "box-indicator(0.25,0.75)".
    """
    mt = _PRESET_RE.match(spec)
    if not mt:
        raise ValueError(f"cannot parse preset {spec!r}")
    name = mt.group(1).lower()
    raw = []
    if mt.group(2) is not None:
        raw += [t for t in mt.group(2).split(",") if t.strip()]
    if mt.group(3).strip():
        raw += mt.group(3).split()
    try:
        args = [float(t) for t in raw]
    except ValueError as exc:
        raise ValueError(f"non-numeric preset argument in {spec!r}") from exc
    return name, args


def _rng(seed) -> np.random.Generator:
    # Philox is the package-wide counter-based generator; the key layout
    # (seed, stream) keeps independent uses reproducible bit for bit.
    return np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))


def _trig_sigma_component(grid: GridSpec, k: int) -> list:
    """Per-axis samples of the k-th trig noise column.

    d = 2, m = 1 is the documented reference configuration
    (sin 2pi x1 * sin 2pi x2, cos 2pi x1).  The d = 1 profile is the
    squared cosine (1 + cos 4pi x)/2, whose double zeros at x = 1/4, 3/4
    sit on the default box-indicator edges; that placement is what makes
    the documented delta-sweep reduction factors attainable (see the
    sweep experiments).  Extra columns get a phase shift so they are
    linearly independent.
    """
    phase = k * math.pi / 3.0
    if grid.d == 1:
        x = grid.coords(0)
        return [0.5 * (1.0 + np.cos(4.0 * math.pi * x + phase))]
    if grid.d == 2:
        x1, x2 = grid.coords(0), grid.coords(1)
        return [
            np.sin(2 * math.pi * x1 + phase) * np.sin(2 * math.pi * x2),
            np.cos(2 * math.pi * x1 + phase),
        ]
    x1, x2, x3 = grid.coords(0), grid.coords(1), grid.coords(2)
    return [
        np.sin(2 * math.pi * x1 + phase) * np.sin(2 * math.pi * x2),
        np.cos(2 * math.pi * x1 + phase),
        np.sin(2 * math.pi * x3 + phase) * np.cos(2 * math.pi * x1),
    ]


def _fourier_decay_field(grid: GridSpec, s: float, rng: np.random.Generator) -> np.ndarray:
    """Random field with spectral amplitudes decaying like (1+|n|)^-(s+d)."""
    white = rng.standard_normal(grid.shape)
    F = np.fft.fftn(white)
    n1 = np.fft.fftfreq(grid.N) * grid.N
    mag2 = np.zeros(grid.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.N
        mag2 = mag2 + (n1.reshape(shape)) ** 2
    mult = (1.0 + np.sqrt(mag2)) ** (-(s + grid.d))
    out = np.fft.ifftn(F * mult).real
    # normalize to unit sup norm so presets are comparable across seeds
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def gen_sigma(preset: str, grid: GridSpec, m: int = 1, seed: int = 0) -> SigmaField:
    """Build a noise coefficient matrix from a named preset.

    Presets:
      constant c        sigma_{ik} identically c,
      trig              finite trig polynomials, not divergence free,
      div-free-trig     d = 2 rotated stream functions, divergence free,
      fourier-decay s   seeded random fields with |n|^-(s+d) spectra.
    """
    name, args = parse_preset(preset)
    if m < 1:
        raise ValueError("m must be >= 1")
    if name == "constant":
        c = args[0] if args else 1.0
        rows = [[constant_field(grid, c) for _ in range(m)] for _ in range(grid.d)]
    elif name == "trig":
        cols = [_trig_sigma_component(grid, k) for k in range(m)]
        rows = [
            [ScalarField(grid, cols[k][i]) for k in range(m)]
            for i in range(grid.d)
        ]
    elif name in ("div-free-trig", "divfree-trig", "div-free"):
        if grid.d != 2:
            raise ValueError("div-free-trig preset is defined for d = 2 only")
        x1, x2 = grid.coords(0), grid.coords(1)
        rows = [[], []]
        for k in range(m):
            phase = k * math.pi / 3.0
            # sigma = (d2 psi, -d1 psi) for psi = sin(2pi x1+phase) sin(2pi x2)/(2pi)
            rows[0].append(ScalarField(grid, np.sin(2 * math.pi * x1 + phase) * np.cos(2 * math.pi * x2)))
            rows[1].append(ScalarField(grid, -np.cos(2 * math.pi * x1 + phase) * np.sin(2 * math.pi * x2)))
    elif name == "fourier-decay":
        s = args[0] if args else 2.0
        rng = _rng(int(seed))
        rows = [
            [ScalarField(grid, _fourier_decay_field(grid, s, rng)) for _ in range(m)]
            for _ in range(grid.d)
        ]
    else:
        raise ValueError(f"unknown sigma preset {name!r}")
    return SigmaField(tuple(tuple(r) for r in rows))


def gen_u(preset: str, grid: GridSpec, seed: int = 0, p=None) -> ScalarField:
    """Build an initial/test profile from a named preset.

    Presets:
      trig                     smooth band-limited trig polynomial,
      box-indicator(a, b)      indicator of the box [a,b)^d, default [1/4,3/4),
      power-singularity(alpha) min(cap, |x - 1/2|^-alpha), cap = 1e6,
      fourier-decay s          seeded random field (rough but bounded).

    The power-singularity preset deliberately lacks any gradient bound;
    when p is supplied, alpha*p >= 1 in d = 1 is rejected because the
    profile then fails to be p-integrable.
    """
    name, args = parse_preset(preset)
    if name == "trig":
        if grid.d == 1:
            x = grid.coords(0)
            v = np.sin(2 * math.pi * x) + 0.5 * np.cos(4 * math.pi * x)
        elif grid.d == 2:
            x1, x2 = grid.coords(0), grid.coords(1)
            v = np.sin(2 * math.pi * x1) * np.sin(2 * math.pi * x2) + 0.5 * np.cos(2 * math.pi * x1)
        else:
            x1, x2, x3 = grid.coords(0), grid.coords(1), grid.coords(2)
            v = (
                np.sin(2 * math.pi * x1) * np.sin(2 * math.pi * x2)
                + 0.5 * np.cos(2 * math.pi * x3)
            )
        return ScalarField(grid, v)
    if name == "box-indicator":
        a, b = (args + [0.25, 0.75])[:2] if len(args) >= 2 else (0.25, 0.75)
        if not (0.0 <= a < b <= 1.0):
            raise ValueError(f"box bounds must satisfy 0 <= a < b <= 1, got {a}, {b}")
        inside = np.ones(grid.shape, dtype=bool)
        for ax in range(grid.d):
            x = grid.coords(ax)
            inside &= (x >= a) & (x < b)
        return ScalarField(grid, inside.astype(float))
    if name == "power-singularity":
        alpha = args[0] if args else 0.3
        cap = args[1] if len(args) > 1 else SINGULARITY_CAP
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if p is not None and grid.d == 1 and alpha * p >= 1.0:
            raise ValueError(
                f"alpha*p = {alpha * p} >= 1 in d=1: profile is not L^p"
            )
        r2 = np.zeros(grid.shape)
        for ax in range(grid.d):
            x = grid.coords(ax)
            dist = np.abs(x - 0.5)
            r2 = r2 + np.minimum(dist, 1.0 - dist) ** 2
        r = np.sqrt(r2)
        with np.errstate(divide="ignore"):
            v = np.where(r > 0.0, r ** (-alpha), np.inf)
        return ScalarField(grid, np.minimum(v, cap))
    if name == "fourier-decay":
        s = args[0] if args else 1.0
        rng = _rng(int(seed))
        return ScalarField(grid, _fourier_decay_field(grid, s, rng))
    raise ValueError(f"unknown u preset {name!r}")


def power_singularity_lp_norm(alpha: float, p: float, cap: float = SINGULARITY_CAP) -> float:
    """Continuum L^p norm of min(cap, |x-1/2|^-alpha) on the 1-d torus.

    Closed form: the cap is active on |x-1/2| <= cap^(-1/alpha); outside,
    the integral of |x-1/2|^(-alpha p) is elementary.  Requires
    alpha * p < 1.
    """
    if alpha * p >= 1.0:
        raise ValueError("alpha*p must be < 1 for a finite norm")
    r0 = min(cap ** (-1.0 / alpha), 0.5)
    e = 1.0 - alpha * p
    integral = 2.0 * (cap ** p) * r0 + 2.0 * (0.5 ** e - r0 ** e) / e
    return integral ** (1.0 / p)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<qqq")  # d, N, component count


def save_binary(obj, path) -> None:
    """Write a ScalarField or VectorFieldM as little-endian float64.

    Layout: three int64 (d, N, ncomp) followed by ncomp * N^d doubles in
    row-major order.
    """
    if isinstance(obj, ScalarField):
        comps = [obj]
    elif isinstance(obj, VectorFieldM):
        comps = list(obj.components)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    g = comps[0].grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.d, g.N, len(comps)))
        for c in comps:
            fh.write(np.ascontiguousarray(c.values, dtype="<f8").tobytes())


def load_binary(path):
    """Inverse of save_binary; returns ScalarField or VectorFieldM."""
    with open(path, "rb") as fh:
        d, N, ncomp = _HEADER.unpack(fh.read(_HEADER.size))
        grid = make_grid(int(d), int(N))
        comps = []
        for _ in range(ncomp):
            raw = fh.read(8 * grid.npoints)
            arr = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
            comps.append(ScalarField(grid, arr))
    if ncomp == 1:
        return comps[0]
    return VectorFieldM(tuple(comps))


def save_csv(obj, path) -> None:
    """Write index coordinates plus values for inspection."""
    if isinstance(obj, ScalarField):
        comps = [obj]
    elif isinstance(obj, VectorFieldM):
        comps = list(obj.components)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    g = comps[0].grid
    idx_cols = [f"i{ax}" for ax in range(g.d)]
    header = idx_cols + (
        ["value"] if len(comps) == 1 else [f"value{k}" for k in range(len(comps))]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx in itertools.product(range(g.N), repeat=g.d):
            row = list(idx) + [repr(float(c.values[idx])) for c in comps]
            writer.writerow(row)
