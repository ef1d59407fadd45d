"""Functions sampled on a symmetric box lattice and their group convolution.

Sites sit at ``i_a * h_a`` for ``|i_a| <= M_a`` on every axis, so the origin
is a site and reflection through it maps the lattice onto itself.  Values
outside the box are zero; off-lattice evaluation is multilinear.
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from . import _engine
from .groups import GroupStructure


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class LatticeMismatchError(ValueError):
    """Two grid functions live on different groups or lattices."""


class ResolutionError(ValueError):
    """Lattice too coarse for the requested object."""


class TruncationWarning(UserWarning):
    def __init__(self, message: str, escaped_fraction: float):
        super().__init__(message)
        self.escaped_fraction = escaped_fraction


class TruncationError(ValueError):
    def __init__(self, message: str, escaped_fraction: float):
        super().__init__(message)
        self.escaped_fraction = escaped_fraction


@dataclass(frozen=True)
class Lattice:
    """Per-axis half counts ``M`` and spacings ``h``."""

    half: tuple[int, ...]
    h: tuple[float, ...]

    def __post_init__(self):
        if len(self.half) != len(self.h):
            raise ValueError("half counts and spacings differ in length")
        if any(m < 1 for m in self.half) or any(s <= 0 for s in self.h):
            raise ValueError("lattice needs M >= 1 and h > 0 on every axis")
        object.__setattr__(self, "half", tuple(int(m) for m in self.half))
        object.__setattr__(self, "h", tuple(float(s) for s in self.h))

    @classmethod
    def from_box(cls, R, half) -> "Lattice":
        R = np.broadcast_to(np.asarray(R, dtype=float), np.shape(half) or (1,))
        half = np.broadcast_to(np.asarray(half), R.shape)
        return cls(tuple(int(m) for m in half), tuple(float(r / m) for r, m in zip(R, half)))

    @property
    def n(self) -> int:
        return len(self.half)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2 * m + 1 for m in self.half)

    @property
    def R(self) -> tuple[float, ...]:
        return tuple(m * s for m, s in zip(self.half, self.h))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [np.arange(-m, m + 1) * s for m, s in zip(self.half, self.h)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([c.ravel() for c in self.mesh()], axis=-1)

    def to_dict(self) -> dict:
        return {"half": list(self.half), "h": list(self.h), "R": list(self.R)}


def min_spacing_norm(group: GroupStructure, lattice: Lattice) -> float:
    """Quasi-norm size of one lattice step (largest over axes)."""
    return max(s ** (1.0 / a) for s, a in zip(lattice.h, group.alpha))


@dataclass(frozen=True, eq=False)
class GridFunction:
    group: GroupStructure
    lattice: Lattice
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.lattice.shape:
            raise ValueError(f"values shape {v.shape} != lattice shape {self.lattice.shape}")
        if self.group.n != self.lattice.n:
            raise ValueError("group and lattice dimensions differ")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, group, lattice):
        return cls(group, lattice, np.zeros(lattice.shape))

    @classmethod
    def from_function(cls, group, lattice, fn):
        pts = lattice.points()
        return cls(group, lattice, np.asarray(fn(pts), dtype=float).reshape(lattice.shape))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.group, self.lattice, values)

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, GridFunction):
            return
        if other.lattice != self.lattice or other.group != self.group:
            raise LatticeMismatchError("grid functions live on different lattices")

    def __add__(self, other):
        self._check(other)
        o = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values + o)

    def __sub__(self, other):
        self._check(other)
        o = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values - o)

    def __mul__(self, other):
        self._check(other)
        o = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values * o)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    # -- geometry -----------------------------------------------------------
    def rho(self) -> np.ndarray:
        """Quasi-norm of every lattice site, shaped like ``values``."""
        return self.group.quasi_norm(self.lattice.points()).reshape(self.lattice.shape)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.lattice.cell_volume)

    def inner(self, other: "GridFunction") -> float:
        self._check(other)
        return float(np.sum(self.values * other.values) * self.lattice.cell_volume)

    def __call__(self, points) -> np.ndarray:
        return interpolate(self.values, self.lattice, points)

    # -- serialization ------------------------------------------------------
    def to_bytes(self) -> bytes:
        lat = self.lattice
        head = struct.pack("<8sq", b"HLGRID01", lat.n)
        head += struct.pack(f"<{lat.n}d", *lat.R) + struct.pack(f"<{lat.n}d", *lat.h)
        head += struct.pack(f"<{lat.n}q", *lat.shape)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, group: GroupStructure, data: bytes) -> "GridFunction":
        magic, n = struct.unpack_from("<8sq", data, 0)
        if magic != b"HLGRID01":
            raise ValueError("not a grid function file")
        off = 16
        R = struct.unpack_from(f"<{n}d", data, off); off += 8 * n
        h = struct.unpack_from(f"<{n}d", data, off); off += 8 * n
        dims = struct.unpack_from(f"<{n}q", data, off); off += 8 * n
        half = tuple((d - 1) // 2 for d in dims)
        lat = Lattice(half, h)
        if not np.allclose(lat.R, R):
            raise ValueError("inconsistent header")
        vals = np.frombuffer(data, dtype="<f8", offset=off).reshape(dims)
        return cls(group, lat, vals)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, group, path) -> "GridFunction":
        return cls.from_bytes(group, Path(path).read_bytes())

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = [f"x{i + 1}" for i in range(self.lattice.n)] + ["value"]
        buf.write(",".join(cols) + "\n")
        data = np.column_stack([self.lattice.points(), self.values.ravel()])
        np.savetxt(buf, data, delimiter=",", fmt="%.17g")
        return buf.getvalue()


def interpolate(values: np.ndarray, lattice: Lattice, points) -> np.ndarray:
    """Multilinear interpolation with zero extension outside the box."""
    pts = np.asarray(points, dtype=float)
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, lattice.n)
    n = lattice.n
    idx, frac = [], []
    for a in range(n):
        u = pts[:, a] / lattice.h[a] + lattice.half[a]
        fl = np.floor(u)
        idx.append(fl.astype(np.int64))
        frac.append(u - fl)
    out = np.zeros(pts.shape[0])
    shape = lattice.shape
    for corner in range(1 << n):
        w = np.ones(pts.shape[0])
        ok = np.ones(pts.shape[0], dtype=bool)
        ii = []
        for a in range(n):
            bit = (corner >> a) & 1
            ia = idx[a] + bit
            ok &= (ia >= 0) & (ia < shape[a])
            w = w * (frac[a] if bit else 1.0 - frac[a])
            ii.append(np.clip(ia, 0, shape[a] - 1))
        out += np.where(ok, w * values[tuple(ii)], 0.0)
    return out.reshape(lead)


def reflect(f: GridFunction) -> GridFunction:
    """``x -> f(x^{-1})``; exact index flip for negation inverses."""
    if f.group.inverse_rule == "negation":
        return f.with_values(f.values[(slice(None, None, -1),) * f.lattice.n])
    pts = f.group.invert(f.lattice.points())
    return f.with_values(f(pts).reshape(f.lattice.shape))


def escaped_fraction(f: GridFunction, t: float) -> float:
    """Share of |f| mass carried outside the box by the dilation ``t``."""
    pts = f.group.dilate(t, f.lattice.points())
    out = np.any(np.abs(pts) > np.asarray(f.lattice.R) * (1 + 1e-12), axis=-1)
    tot = np.sum(np.abs(f.values))
    return float(np.sum(np.abs(f.values.ravel())[out]) / tot) if tot > 0 else 0.0


def scale(t: float, f: GridFunction, warn: bool = True) -> GridFunction:
    """Mass-preserving dilation ``t^{-Q} f(t^{-1} x)`` by interpolation."""
    if t <= 0:
        raise DomainError("dilation factor must be positive")
    if warn and t > 1:
        esc = escaped_fraction(f, t)
        if esc > 0:
            warnings.warn(TruncationWarning(
                f"dilation by {t:g} pushes {esc:.3e} of the mass out of the box", esc))
    pts = f.group.dilate(1.0 / t, f.lattice.points())
    vals = f(pts).reshape(f.lattice.shape) * t ** (-f.group.Q)
    return f.with_values(vals)


def lq_norm(f: GridFunction, q: float) -> float:
    if not q > 1:
        raise DomainError("L^q norms are computed for q > 1 only")
    if np.isinf(q):
        return float(np.max(np.abs(f.values)))
    return float((np.sum(np.abs(f.values) ** q) * f.lattice.cell_volume) ** (1.0 / q))


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

SMALL_SUPPORT = 64


def _support(values: np.ndarray) -> np.ndarray:
    return np.flatnonzero(values.ravel())


def convolve(f: GridFunction, g: GridFunction, method: str = "auto") -> GridFunction:
    """``(f * g)(x) = sum_y f(y) g(y^{-1} x) |cell|`` restricted to the box.

    ``method`` is ``"auto"``, ``"fft"`` (abelian or central-extension
    spectral path), ``"direct"`` (support loop) or ``"reference"`` (explicit
    law with full multilinear interpolation; slow, for validation).
    """
    f._check(g)
    grp, lat = f.group, f.lattice
    if method == "reference":
        return f.with_values(_reference(f, g))
    if grp.is_abelian:
        if method == "direct":
            return f.with_values(_small_f(f, g))
        return f.with_values(_abelian_fft(f.values, g.values) * lat.cell_volume)
    corr = grp.central_correction()
    if corr is None:
        if method == "auto" and _support(f.values).size <= SMALL_SUPPORT:
            return f.with_values(_small_f(f, g))
        return f.with_values(_reference(f, g))
    if method == "auto":
        nf = _support(f.values).size
        if nf <= SMALL_SUPPORT:
            return f.with_values(_small_f(f, g))
        gcols = _nonzero_columns(g.values)
        if gcols.size <= SMALL_SUPPORT:
            return f.with_values(_central_small_g(f, g, corr, gcols))
        return f.with_values(_central_fft(f, g, corr))
    if method == "direct":
        return f.with_values(_central_small_g(f, g, corr, _nonzero_columns(g.values)))
    if method == "fft":
        return f.with_values(_central_fft(f, g, corr))
    raise ValueError(f"unknown convolution method {method!r}")


def _abelian_fft(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # values at site i of the output are entry i + M of the full correlation
    return fftconvolve(a, b, mode="same")


def _small_f(f: GridFunction, g: GridFunction) -> np.ndarray:
    """Loop over the support of f, interpolating g at y^{-1} x."""
    grp, lat = f.group, f.lattice
    pts = lat.points()
    flat = f.values.ravel()
    out = np.zeros(pts.shape[0])
    for q in _support(f.values):
        y = pts[q]
        z = grp.multiply(grp.invert(y)[None, :], pts)
        out += flat[q] * interpolate(g.values, lat, z)
    return out.reshape(lat.shape) * lat.cell_volume


def _law_arrays(grp: GroupStructure):
    xps, yps, cfs, offs = [], [], [], [0]
    for j in range(grp.n):
        terms = [t for t in grp.law if t.out == j]
        xps += [t.x_pow for t in terms]
        yps += [t.y_pow for t in terms]
        cfs += [t.coeff for t in terms]
        offs.append(len(cfs))
    return (np.array(xps, dtype=np.int64), np.array(yps, dtype=np.int64),
            np.array(cfs, dtype=float), np.array(offs, dtype=np.int64))


def _reference(f: GridFunction, g: GridFunction) -> np.ndarray:
    grp, lat = f.group, f.lattice
    pts = lat.points()
    q = _support(f.values)
    xp, yp, cf, offs = _law_arrays(grp)
    out = _engine.direct_generic(f.values.ravel()[q], grp.invert(pts[q]),
                                 np.ascontiguousarray(g.values.ravel()),
                                 np.array(lat.half, dtype=np.int64), np.array(lat.h),
                                 pts, xp, yp, cf, offs, lat.cell_volume)
    return out.reshape(lat.shape)


def _nonzero_columns(values: np.ndarray) -> np.ndarray:
    cols = values.reshape(-1, values.shape[-1])
    return np.flatnonzero(np.any(cols != 0, axis=1))


def _horizontal(lat: Lattice):
    hl = Lattice(lat.half[:-1], lat.h[:-1]) if lat.n > 1 else None
    idx = np.stack([c.ravel() for c in np.meshgrid(
        *[np.arange(-m, m + 1) for m in lat.half[:-1]], indexing="ij")], axis=-1)
    return hl, idx.astype(np.int64), idx * np.asarray(lat.h[:-1])


def _corr_tables(corr):
    cx, cy, cc = corr
    # P(y', -y') collapses to a polynomial in y' alone
    c2x = cx + cy
    c2c = cc * (-1.0) ** np.sum(cy, axis=1)
    return cx, cy, cc, c2x.astype(np.int64), c2c


def _shift_bounds(lat: Lattice, hcoord, corr) -> tuple[int, int]:
    """Bounds of floor(c / h_last) over all horizontal pairs (on the box corners).

    The twist is a polynomial, so its extremes over the box are bounded by the
    sum of absolute term values at the box radius.
    """
    cx, cy, cc, c2x, c2c = _corr_tables(corr)
    R = np.asarray(lat.R[:-1])
    bound = 0.0
    for k in range(cc.size):
        bound += abs(cc[k]) * np.prod(R ** cx[k]) * np.prod(R ** cy[k])
        bound += abs(c2c[k]) * np.prod(R ** c2x[k])
    m = int(np.ceil(bound / lat.h[-1])) + 1
    return -m, m


def _central_fft(f: GridFunction, g: GridFunction, corr) -> np.ndarray:
    lat = f.lattice
    M = lat.half[-1]
    nl = 2 * M + 1
    _, hidx, hcoord = _horizontal(lat)
    mlo, mhi = _shift_bounds(lat, hcoord, corr)
    L = sfft.next_fast_len(max(4 * M + 1, 3 * M + mhi + 3, 3 * M - mlo + 2), real=True)
    F = f.values.reshape(-1, nl)
    G = g.values.reshape(-1, nl)
    Fh = sfft.rfft(F, n=L, axis=-1)
    Gh = sfft.rfft(G, n=L, axis=-1)
    om = 2 * np.pi * np.arange(Fh.shape[1]) / L
    ks = np.arange(M + mlo, M + mhi + 2)
    E = np.exp(1j * np.outer(ks, om))
    E1 = np.exp(1j * om)
    fcols = _nonzero_columns(f.values)
    gnz = np.any(G != 0, axis=1)
    cx, cy, cc, c2x, c2c = _corr_tables(corr)
    out_h = _engine.central_pairs(Fh, Gh, fcols, hidx, hcoord,
                                  np.array(lat.half[:-1], dtype=np.int64), gnz,
                                  cx, cy, cc, c2x, c2c, lat.h[-1], M, int(ks[0]), E, E1)
    out = sfft.irfft(out_h, n=L, axis=-1)[:, :nl]
    return out.reshape(lat.shape) * lat.cell_volume


def _central_small_g(f: GridFunction, g: GridFunction, corr, gcols) -> np.ndarray:
    lat = f.lattice
    nl = lat.shape[-1]
    _, hidx, hcoord = _horizontal(lat)
    cx, cy, cc, c2x, c2c = _corr_tables(corr)
    out = _engine.central_small_g(
        np.ascontiguousarray(f.values.reshape(-1, nl)),
        np.ascontiguousarray(g.values.reshape(-1, nl)),
        np.array(lat.half[:-1], dtype=np.int64), lat.h[-1],
        gcols.astype(np.int64), hidx[gcols], cx, cy, cc, c2x, c2c,
        hcoord, hidx, lat.cell_volume)
    return out.reshape(lat.shape)
