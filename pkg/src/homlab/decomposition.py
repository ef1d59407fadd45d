"""Littlewood-Paley cutoffs, dyadic operators and recombined pieces.

The cutoff ``phi`` is a smooth rho-radial bump on a thin annulus near the
origin.  Its dilates are put on the lattice by projecting onto the dual
basis of piecewise-quadratic Lagrange interpolation, which keeps the mass
and the first two moments exact even when the dilate is far below the
lattice spacing (point sampling would collapse such bumps to a delta).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import parallel
from .grid import GridFunction, Lattice, ResolutionError, convolve, reflect
from .groups import GroupStructure
from .kernels import K0Samples, KernelSpec, RadialFactor, a_j, a_j_quadrature, b_j, build_K0


# ---------------------------------------------------------------------------
# cutoff profile and its lattice projection
# ---------------------------------------------------------------------------

def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def _dbump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    sm = s[m]
    out[m] = np.exp(-1.0 / (1.0 - sm ** 2)) * (-2.0 * sm / (1.0 - sm ** 2) ** 2)
    return out


def _Omega(th):
    """Odd antiderivative of the quadratic Lagrange cardinal function."""
    th = np.asarray(th, dtype=float)
    a = np.abs(th)
    out = np.full_like(a, 0.5)
    m1 = a <= 0.5
    out[m1] = a[m1] - a[m1] ** 3 / 3
    m2 = (a > 0.5) & (a <= 1.5)
    u = a[m2]
    # int_{1/2}^{u} (v-1)(v-2)/2 dv added to the value at 1/2
    prim = lambda v: (v ** 3 / 3 - 1.5 * v ** 2 + 2 * v) / 2
    out[m2] = (0.5 - 1 / 24) + prim(u) - prim(0.5)
    return np.sign(th) * out


def _box_weight(centers, h, R):
    """``int_{-R}^{R} w((x - c)/h) dx`` for all centers (rows) and radii (cols)."""
    c = np.asarray(centers, dtype=float)[:, None]
    R = np.asarray(R, dtype=float)[None, :]
    return h * (_Omega((R - c) / h) - _Omega((-R - c) / h))


@dataclass(frozen=True)
class CutoffPhi:
    """rho-radial bump ``b(s(rho))`` on ``[inner, outer]`` with unit mass.

    ``profile`` chooses ``s`` affine in ``log rho`` ("log") or in ``rho``
    ("linear").  ``nodes`` is the midpoint rule used in the layer-cake
    projection.
    """

    inner: float = 1 / 200
    outer: float = 1 / 100
    profile: str = "log"
    nodes: int = 256

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("cutoff annulus needs 0 < inner < outer")
        if self.profile not in ("log", "linear"):
            raise ValueError(f"unknown cutoff profile {self.profile!r}")

    def radius(self, s):
        s = np.asarray(s, dtype=float)
        if self.profile == "log":
            a, b = np.log(self.inner), np.log(self.outer)
            return np.exp(0.5 * (a + b) + 0.5 * (b - a) * s)
        return 0.5 * (self.inner + self.outer) + 0.5 * (self.outer - self.inner) * s

    def coordinate(self, r):
        r = np.asarray(r, dtype=float)
        if self.profile == "log":
            a, b = np.log(self.inner), np.log(self.outer)
            return (np.log(np.where(r > 0, r, 1e-300)) - 0.5 * (a + b)) / (0.5 * (b - a))
        return (r - 0.5 * (self.inner + self.outer)) / (0.5 * (self.outer - self.inner))

    def _rule(self):
        s = -1 + (np.arange(self.nodes) + 0.5) * 2.0 / self.nodes
        return s, np.full(self.nodes, 2.0 / self.nodes)

    def mass_constant(self, group: GroupStructure) -> float:
        """``-int b'(s) |B(r(s))| ds`` with the projection's own rule."""
        s, w = self._rule()
        vol = 2.0 ** group.n * self.radius(s) ** group.Q
        return float(-np.sum(w * _dbump(s) * vol))

    def density(self, group: GroupStructure, x) -> np.ndarray:
        """Continuum values of ``phi`` (pointwise)."""
        r = group.quasi_norm(x)
        return _bump(self.coordinate(r)) / self.mass_constant(group)

    def dilate_density(self, group, t, x):
        return t ** (-group.Q) * self.density(group, group.dilate(1.0 / t, x))

    def project(self, group: GroupStructure, lattice: Lattice, t: float) -> np.ndarray:
        """Lattice values of ``Delta[t] phi`` by moment-preserving projection."""
        s, w = self._rule()
        db = _dbump(s) * w
        Z = self.mass_constant(group)
        rr = t * self.radius(s)
        vals_axes, slices = [], []
        for a in range(group.n):
            h, M = lattice.h[a], lattice.half[a]
            reach = (t * self.outer) ** group.alpha[a] / h + 2
            m = int(min(M, np.ceil(reach)))
            idx = np.arange(-m, m + 1)
            vals_axes.append(_box_weight(idx * h, h, rr ** group.alpha[a]))
            slices.append(slice(M - m, M + m + 1))
        letters = "abcdefgh"[: group.n]
        spec = ",".join(f"{c}z" for c in letters) + ",z->" + letters
        window = np.einsum(spec, *vals_axes, db, optimize=True)
        out = np.zeros(lattice.shape)
        out[tuple(slices)] = -window * t ** (-group.Q) / (Z * lattice.cell_volume)
        return out

    def to_dict(self) -> dict:
        return {"inner": self.inner, "outer": self.outer, "profile": self.profile,
                "nodes": self.nodes}


def build_phi(group: GroupStructure, lattice: Lattice, cutoff: CutoffPhi | None = None,
              min_sites: int = 100) -> GridFunction:
    """``phi`` itself on a lattice that resolves its annulus."""
    cutoff = cutoff or CutoffPhi()
    rho = group.quasi_norm(lattice.points())
    count = int(np.count_nonzero((rho >= cutoff.inner) & (rho <= cutoff.outer)))
    if count < min_sites:
        raise ResolutionError(
            f"cutoff annulus holds {count} lattice sites, need at least {min_sites}")
    return GridFunction(group, lattice, cutoff.project(group, lattice, 1.0))


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NSchedule:
    """Strictly increasing integers ``N(0) = 0 < N(1) < ... < N(J_max)``."""

    values: tuple[int, ...]

    def __post_init__(self):
        v = tuple(int(x) for x in self.values)
        if not v or v[0] != 0:
            raise ValueError("schedule must start with N(0) = 0")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("schedule must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def powers_of_two(cls, j_max: int = 4) -> "NSchedule":
        return cls((0,) + tuple(2 ** j for j in range(1, j_max + 1)))

    @classmethod
    def linear(cls, j_max: int = 4, step: int = 1) -> "NSchedule":
        return cls(tuple(step * j for j in range(j_max + 1)))

    @property
    def j_max(self) -> int:
        return len(self.values) - 1

    def __call__(self, j: int) -> int:
        if not 0 <= j <= self.j_max:
            raise IndexError(f"schedule index {j} outside [0, {self.j_max}]")
        return self.values[j]


# ---------------------------------------------------------------------------
# operator pieces
# ---------------------------------------------------------------------------

@dataclass
class LinearOperatorHandle:
    """Matrix-free operator on grid functions of one lattice."""

    apply: Callable[[GridFunction], GridFunction]
    adjoint: Callable[[GridFunction], GridFunction]
    group: GroupStructure
    lattice: Lattice
    label: str = ""

    def compose(self, other: "LinearOperatorHandle", label: str = "") -> "LinearOperatorHandle":
        """``self o other``."""
        return LinearOperatorHandle(lambda f: self.apply(other.apply(f)),
                                    lambda g: other.adjoint(self.adjoint(g)),
                                    self.group, self.lattice, label or f"{self.label}*{other.label}")

    def star(self) -> "LinearOperatorHandle":
        return LinearOperatorHandle(self.adjoint, self.apply, self.group, self.lattice,
                                    f"{self.label}^*")

    @classmethod
    def convolution(cls, kernel: GridFunction, label: str = "") -> "LinearOperatorHandle":
        kt = reflect(kernel)
        return cls(lambda f: convolve(f, kernel), lambda g: convolve(g, kt),
                   kernel.group, kernel.lattice, label)


@dataclass
class OperatorPiece:
    """``f -> sum_k (f * D_k) * A_k`` with ``D_k`` a difference of cutoff dilates."""

    tag: str
    indices: dict
    k_range: tuple[int, int]
    steps: list = field(repr=False)
    decomposition: "Decomposition" = field(repr=False)
    _kernel: GridFunction | None = field(default=None, repr=False)
    scale_pairs: list = field(default_factory=list, repr=False)

    def _terms(self, f, fn):
        return parallel.ordered_sum(parallel.map_ordered(fn, self.steps)) if self.steps else \
            np.zeros(f.lattice.shape)

    def apply(self, f: GridFunction) -> GridFunction:
        dec = self.decomposition
        return f.with_values(self._terms(
            f, lambda st: convolve(convolve(f, st[1]), dec.average(st[0])).values))

    def adjoint(self, g: GridFunction) -> GridFunction:
        dec = self.decomposition
        return g.with_values(self._terms(
            g, lambda st: convolve(convolve(g, dec.average_reflected(st[0])), reflect(st[1])).values))

    def kernel_grid(self) -> GridFunction:
        """Materialized ``K = sum_k D_k * A_k`` (cached)."""
        if self._kernel is None:
            dec = self.decomposition
            vals = self._terms(dec.zeros(), lambda st: convolve(st[1], dec.average(st[0])).values)
            self._kernel = dec.zeros().with_values(vals)
        return self._kernel

    def handle(self, materialized: bool = False) -> LinearOperatorHandle:
        label = f"{self.tag}{self.indices}"
        if materialized:
            return LinearOperatorHandle.convolution(self.kernel_grid(), label)
        dec = self.decomposition
        return LinearOperatorHandle(self.apply, self.adjoint, dec.group, dec.lattice, label)

    def descriptor(self) -> dict:
        dec = self.decomposition
        return {"tag": self.tag, "indices": self.indices, "k_range": list(self.k_range),
                "scales": [[k, d] for k, d in self.scale_pairs],
                "lattice": dec.lattice.to_dict(), "group": dec.group.name,
                "kernel": dec.kernel.describe(), "cutoff": dec.cutoff.to_dict(),
                "radial": dec.radial.describe() if dec.radial else None,
                "route": dec.route}

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True, default=float)


class Decomposition:
    """Dyadic machinery for a kernel on a fixed lattice.

    ``route`` picks how ``A_k K_0`` is produced: ``"homogeneous"`` (closed
    form from the radial shell weights) or ``"quadrature"`` (log-t nodes of
    interpolated dilates).  With ``radial`` set, ``B_k`` replaces ``A_k``.
    """

    def __init__(self, kernel: KernelSpec, lattice: Lattice, k_range=(0, 0),
                 cutoff: CutoffPhi | None = None, radial: RadialFactor | None = None,
                 route: str = "homogeneous", quad_nodes: int = 32):
        if route not in ("homogeneous", "quadrature"):
            raise ValueError(f"unknown route {route!r}")
        self.kernel = kernel
        self.group = kernel.group
        self.lattice = lattice
        self.k_range = (int(k_range[0]), int(k_range[1]))
        self.cutoff = cutoff or CutoffPhi()
        self.radial = radial
        self.route = route
        self.quad_nodes = quad_nodes
        self._k0: K0Samples | None = None
        self._avg: dict[int, GridFunction] = {}
        self._avg_r: dict[int, GridFunction] = {}
        self._bumps: dict[int, np.ndarray] = {}

    # -- building blocks ----------------------------------------------------
    def zeros(self) -> GridFunction:
        return GridFunction.zeros(self.group, self.lattice)

    def ks(self) -> range:
        return range(self.k_range[0], self.k_range[1] + 1)

    @property
    def k0(self) -> K0Samples:
        if self._k0 is None:
            self._k0 = build_K0(self.kernel, self.lattice)
        return self._k0

    def average(self, k: int) -> GridFunction:
        if k not in self._avg:
            if self.radial is not None:
                self._avg[k] = b_j(self.k0, k, self.radial)
            elif self.route == "homogeneous":
                self._avg[k] = a_j(self.k0, k)
            else:
                self._avg[k] = a_j_quadrature(self.k0, k, self.quad_nodes)
        return self._avg[k]

    def average_reflected(self, k: int) -> GridFunction:
        if k not in self._avg_r:
            self._avg_r[k] = reflect(self.average(k))
        return self._avg_r[k]

    def bump(self, e: int) -> np.ndarray:
        """Lattice values of ``Delta[2^e] phi``."""
        if e not in self._bumps:
            self._bumps[e] = self.cutoff.project(self.group, self.lattice, 2.0 ** e)
        return self._bumps[e]

    def psi(self, j: int) -> GridFunction:
        return GridFunction(self.group, self.lattice, self.bump(j - 1) - self.bump(j))

    def S(self, j: int, f: GridFunction) -> GridFunction:
        return convolve(f, GridFunction(self.group, self.lattice, self.bump(j - 1)))

    def T(self, k: int, f: GridFunction) -> GridFunction:
        return convolve(f, self.average(k))

    # -- pieces -------------------------------------------------------------
    def _piece(self, tag, indices, pairs) -> OperatorPiece:
        """``pairs``: (k, e_plus, e_minus) meaning D_k = Delta[2^e+]phi - Delta[2^e-]phi."""
        steps, scales = [], []
        for k, ep, em in pairs:
            vals = self.bump(ep) - (self.bump(em) if em is not None else 0.0)
            steps.append((k, GridFunction(self.group, self.lattice, vals)))
            scales.append((k, [ep, em]))
        return OperatorPiece(tag, indices, self.k_range, steps, self, scale_pairs=scales)

    def piece_T(self, k: int) -> OperatorPiece:
        """``T_k`` alone, written with a unit delta so the machinery is shared."""
        delta = np.zeros(self.lattice.shape)
        delta[tuple(m for m in self.lattice.half)] = 1.0 / self.lattice.cell_volume
        p = OperatorPiece("T_k", {"k": k}, (k, k),
                          [(k, GridFunction(self.group, self.lattice, delta))], self)
        return p

    def piece_tilde(self, j: int) -> OperatorPiece:
        """Single-scale piece: ``T~_0 = sum T_k S_k``, ``T~_j = sum T_k (S_{k-j} - S_{k-j+1})``."""
        if j < 0:
            raise ValueError("single-scale pieces are indexed by j >= 0")
        if j == 0:
            return self._piece("T~_j", {"j": 0}, [(k, k - 1, None) for k in self.ks()])
        return self._piece("T~_j", {"j": j}, [(k, k - j - 1, k - j) for k in self.ks()])

    def piece_tilde_N(self, j: int, sched: NSchedule) -> OperatorPiece:
        """``T~_j^N = sum_k T_k (S_{k-N(j)} - S_{k-N(j-1)})`` (``j = 0``: ``sum T_k S_k``)."""
        if j == 0:
            return self._piece("T~_j^N", {"j": 0}, [(k, k - 1, None) for k in self.ks()])
        a, b = sched(j), sched(j - 1)
        return self._piece("T~_j^N", {"j": j, "N": [b, a]},
                           [(k, k - a - 1, k - b - 1) for k in self.ks()])

    def piece_G(self, j: int) -> OperatorPiece:
        """``G_j = sum_k T_k (S_{k-j} - S_{k-j+1})`` for any integer ``j``."""
        return self._piece("G_j", {"j": j}, [(k, k - j - 1, k - j) for k in self.ks()])

    def piece_G_k(self, j: int, k: int) -> OperatorPiece:
        """One term ``G_{j,k} = T_k (S_{k-j} - S_{k-j+1})``."""
        p = self._piece("G_jk", {"j": j, "k": k}, [(k, k - j - 1, k - j)])
        p.k_range = (k, k)
        return p

    def piece_full(self, J: int, sched: NSchedule) -> OperatorPiece:
        """Truncated operator ``sum_k T_k S_{k-N(J)} = sum_{j<=J} T~_j^N``."""
        a = sched(J)
        return self._piece("full-T-truncated", {"J": J, "N": a},
                           [(k, k - a - 1, None) for k in self.ks()])

    # -- convenience actions -----------------------------------------------
    def T_tilde(self, j: int, sched: NSchedule | None, f: GridFunction) -> GridFunction:
        p = self.piece_tilde(j) if sched is None else self.piece_tilde_N(j, sched)
        return p.apply(f)

    def G(self, j: int, f: GridFunction) -> GridFunction:
        return self.piece_G(j).apply(f)

    def materialize_kernel(self, j: int, sched: NSchedule) -> GridFunction:
        return self.piece_tilde_N(j, sched).kernel_grid()
