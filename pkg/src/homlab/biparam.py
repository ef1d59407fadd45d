"""Product-group layer: bi-parameter kernels, pieces, rectangles and weights.

Both factors are homogeneous groups with their own dilations.  The product
lattice concatenates the factor axes, so a grid function is an array of
shape ``shape1 + shape2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .decomposition import CutoffPhi, NSchedule, OperatorPiece
from .grid import DomainError, GridFunction, Lattice, min_spacing_norm, reflect
from .groups import GroupStructure, product
from .kernels import LN2, shell_weight, sphere_quadrature
from .weights import _box_sums, _prefix


@dataclass(frozen=True)
class ProductGroup:
    g1: GroupStructure
    g2: GroupStructure

    @property
    def Q1(self):
        return self.g1.Q

    @property
    def Q2(self):
        return self.g2.Q

    @property
    def joint(self) -> GroupStructure:
        return product(self.g1, self.g2)

    def lattice(self, lat1: Lattice, lat2: Lattice) -> Lattice:
        return Lattice(lat1.half + lat2.half, lat1.h + lat2.h)

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., : self.g1.n], x[..., self.g1.n:]


@dataclass
class BiKernelSpec:
    """``K(u, v) = Omega(theta1, theta2) / (rho1^Q1 rho2^Q2)``.

    ``omega`` takes two arrays of sphere points.  Both partial means are
    checked by quadrature on the factor spheres for every sampled angle of
    the other factor.
    """

    pg: ProductGroup
    omega: Callable
    q: float = np.inf
    tol: float = 1e-8
    label: str = ""
    quad_order: int = 32

    def __post_init__(self):
        p1, w1 = sphere_quadrature(self.pg.g1, self.quad_order)
        p2, w2 = sphere_quadrature(self.pg.g2, self.quad_order)
        vals = np.asarray(self.omega(p1[:, None, :], p2[None, :, :]), dtype=float)
        self.partial_mean_1 = float(np.max(np.abs(w1 @ vals))) * LN2
        self.partial_mean_2 = float(np.max(np.abs(vals @ w2))) * LN2
        if max(self.partial_mean_1, self.partial_mean_2) > self.tol:
            raise DomainError("bi-parameter kernel lacks cancellation in one variable")
        Q1, Q2 = self.pg.Q1, self.pg.Q2
        if np.isinf(self.q):
            self.norm_q = float(np.max(np.abs(vals)))
        else:
            q = self.q
            rad = ((1 - 2.0 ** (Q1 * (1 - q))) / (Q1 * (q - 1))) * \
                  ((1 - 2.0 ** (Q2 * (1 - q))) / (Q2 * (q - 1)))
            self.norm_q = float((rad * (w1 @ np.abs(vals) ** q @ w2)) ** (1 / q))

    def __call__(self, u, v):
        g1, g2 = self.pg.g1, self.pg.g2
        r1, r2 = g1.quasi_norm(u), g2.quasi_norm(v)
        s1, s2 = np.where(r1 > 0, r1, 1.0), np.where(r2 > 0, r2, 1.0)
        t1 = g1.dilate(1 / s1, u)
        t2 = g2.dilate(1 / s2, v)
        val = np.asarray(self.omega(t1, t2), dtype=float) * s1 ** -g1.Q * s2 ** -g2.Q
        return np.where((r1 > 0) & (r2 > 0), val, 0.0)

    def describe(self):
        return {"label": self.label, "q": self.q, "norm_q": self.norm_q,
                "partial_means": [self.partial_mean_1, self.partial_mean_2]}


def tensor_kernel(pg: ProductGroup, om1: Callable, om2: Callable, **kw) -> BiKernelSpec:
    return BiKernelSpec(pg, lambda a, b: om1(a) * om2(b), **kw)


def _project_slices(X: np.ndarray, s1: np.ndarray, s2: np.ndarray, n1: int) -> np.ndarray:
    """Remove partial sums so every u-slice and v-slice sums to zero.

    ``s1``/``s2`` are nonnegative profiles carrying the correction.
    """
    sh1, sh2 = X.shape[:n1], X.shape[n1:]
    M = X.reshape(int(np.prod(sh1)), int(np.prod(sh2)))
    a = s1.ravel() / np.sum(s1)
    b = s2.ravel() / np.sum(s2)
    col = M.sum(axis=0)          # sums over u for each v
    row = M.sum(axis=1)          # sums over v for each u
    tot = M.sum()
    M = M - np.outer(a, col) - np.outer(row, b) + tot * np.outer(a, b)
    return M.reshape(X.shape)


class BiDecomposition:
    """Tensor Littlewood-Paley machinery on a product lattice.

    Exposes the same hooks as :class:`Decomposition` so that
    :class:`OperatorPiece` can be reused with pair indices ``(k1, k2)``.
    """

    route = "homogeneous"
    radial = None

    def __init__(self, kernel: BiKernelSpec, lat1: Lattice, lat2: Lattice,
                 k_range1=(0, 0), k_range2=(0, 0), cutoff1: CutoffPhi | None = None,
                 cutoff2: CutoffPhi | None = None):
        self.kernel = kernel
        self.pg = kernel.pg
        self.lat1, self.lat2 = lat1, lat2
        self.group = self.pg.joint
        self.lattice = self.pg.lattice(lat1, lat2)
        self.k_range1 = tuple(k_range1)
        self.k_range2 = tuple(k_range2)
        self.k_range = (self.k_range1, self.k_range2)
        self.cutoff1 = cutoff1 or CutoffPhi()
        self.cutoff2 = cutoff2 or CutoffPhi()
        self.cutoff = self.cutoff1
        self._avg: dict = {}
        self._avg_r: dict = {}
        self._b1: dict = {}
        self._b2: dict = {}

    def zeros(self) -> GridFunction:
        return GridFunction.zeros(self.group, self.lattice)

    def pairs(self):
        return [(a, b) for a in range(self.k_range1[0], self.k_range1[1] + 1)
                for b in range(self.k_range2[0], self.k_range2[1] + 1)]

    def rho_factors(self):
        r1 = self.pg.g1.quasi_norm(self.lat1.points()).reshape(self.lat1.shape)
        r2 = self.pg.g2.quasi_norm(self.lat2.points()).reshape(self.lat2.shape)
        return r1, r2

    def average(self, k) -> GridFunction:
        """``A_{k1,k2} K^0`` from product homogeneity, with exact slice cancellation."""
        if k not in self._avg:
            k1, k2 = k
            g1, g2 = self.pg.g1, self.pg.g2
            for kk, g, lat in ((k1, g1, self.lat1), (k2, g2, self.lat2)):
                outer = 2.0 ** (kk + 2)
                if any(R < outer ** a * (1 - 1e-12) for R, a in zip(lat.R, g.alpha)):
                    from .grid import TruncationError
                    raise TruncationError(f"bi-dyadic average at scale {kk} leaves the factor box", 1.0)
            r1, r2 = self.rho_factors()
            w1, w2 = shell_weight(k1, r1), shell_weight(k2, r2)
            v1, v2 = shell_weight(k1, r1, g1.Q), shell_weight(k2, r2, g2.Q)
            pts = self.lattice.points()
            u, v = self.pg.split(pts)
            K = self.kernel(u, v).reshape(self.lattice.shape)
            X = K * np.multiply.outer(w1, w2)
            X = _project_slices(X, v1, v2, self.lat1.n)
            self._avg[k] = GridFunction(self.group, self.lattice, X)
        return self._avg[k]

    def average_reflected(self, k) -> GridFunction:
        if k not in self._avg_r:
            self._avg_r[k] = reflect(self.average(k))
        return self._avg_r[k]

    def bump1(self, e):
        if e not in self._b1:
            self._b1[e] = self.cutoff1.project(self.pg.g1, self.lat1, 2.0 ** e)
        return self._b1[e]

    def bump2(self, e):
        if e not in self._b2:
            self._b2[e] = self.cutoff2.project(self.pg.g2, self.lat2, 2.0 ** e)
        return self._b2[e]

    @staticmethod
    def _exps(k, j, sched):
        if j == 0:
            return (k - 1, None)
        return (k - sched(j) - 1, k - sched(j - 1) - 1)

    def piece(self, j1: int, j2: int, sched: NSchedule) -> OperatorPiece:
        """``T~_{j1,j2}^N = sum_{k1,k2} T_{k1,k2} (D^1_{k1,j1} (x) D^2_{k2,j2})``."""
        steps, scales = [], []
        for k1, k2 in self.pairs():
            a1, b1 = self._exps(k1, j1, sched)
            a2, b2 = self._exps(k2, j2, sched)
            d1 = self.bump1(a1) - (self.bump1(b1) if b1 is not None else 0.0)
            d2 = self.bump2(a2) - (self.bump2(b2) if b2 is not None else 0.0)
            steps.append(((k1, k2), GridFunction(self.group, self.lattice, np.multiply.outer(d1, d2))))
            scales.append(((k1, k2), [[a1, b1], [a2, b2]]))
        return OperatorPiece("T~_{j1,j2}^N", {"j1": j1, "j2": j2}, self.k_range, steps, self,
                             scale_pairs=scales)

    def piece_smoothed(self, J1: int, J2: int, sched: NSchedule) -> OperatorPiece:
        """``sum T_{k1,k2} S_{k1-N(J1)} (x) S_{k2-N(J2)}`` (double telescoping target)."""
        steps = []
        for k1, k2 in self.pairs():
            d1 = self.bump1(k1 - sched(J1) - 1)
            d2 = self.bump2(k2 - sched(J2) - 1)
            steps.append(((k1, k2), GridFunction(self.group, self.lattice, np.multiply.outer(d1, d2))))
        return OperatorPiece("bi-full-truncated", {"J1": J1, "J2": J2}, self.k_range, steps, self)


def bi_piece(dec: BiDecomposition, j1: int, j2: int, sched: NSchedule, f: GridFunction) -> GridFunction:
    return dec.piece(j1, j2, sched).apply(f)


def slice_sums(kernel: GridFunction, n1: int) -> tuple[float, float]:
    """Largest |integral| over u-slices and over v-slices."""
    X = kernel.values
    sh1 = X.shape[:n1]
    M = X.reshape(int(np.prod(sh1)), -1)
    h = kernel.lattice.h
    vol1 = float(np.prod(h[:n1]))
    vol2 = float(np.prod(h[n1:]))
    return float(np.max(np.abs(M.sum(axis=0))) * vol1), float(np.max(np.abs(M.sum(axis=1))) * vol2)


# ---------------------------------------------------------------------------
# rectangles: weights and the strong maximal function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RectangleSampler:
    """Center grid (stride per factor) times independent dyadic radius pairs."""

    stride: int = 16
    random_count: int = 0
    seed: int = 0
    min_sites: int = 8

    def radii(self, g, lat):
        rmax = max(R ** (1 / a) for R, a in zip(lat.R, g.alpha)) * 2.0
        rmin = min_spacing_norm(g, lat)
        return rmax * 2.0 ** -np.arange(int(np.ceil(np.log2(rmax / rmin))) + 1)


def _factor_boxes(g, lat, centers, radii):
    ext = radii[:, None] ** np.asarray(g.alpha)[None, :] / np.asarray(lat.h)[None, :]
    span = np.ceil(ext) - 1
    half = np.asarray(lat.half)
    shape = np.asarray(lat.shape)
    lo = np.clip(centers + half - span, 0, shape).astype(np.int64)
    hi = np.clip(centers + half + span + 1, 0, shape).astype(np.int64)
    return lo, hi


@dataclass
class ProductWeight:
    """Positive weight on a product lattice with rectangle characteristics."""

    pg: ProductGroup
    lat1: Lattice
    lat2: Lattice
    values: np.ndarray
    p: float = 2.0
    sampler: RectangleSampler = field(default_factory=RectangleSampler)

    def __post_init__(self):
        if not (self.pg.g1.is_abelian and self.pg.g2.is_abelian):
            raise NotImplementedError("rectangle sampling is implemented for abelian factors")
        v = np.asarray(self.values, dtype=float)
        if not np.all(v > 0):
            raise DomainError("weights must be positive")
        p = self.p
        sig = v ** (-1 / (p - 1))
        lo, hi = self._rectangles()
        counts = np.prod(hi - lo, axis=1).astype(float)
        used = counts >= self.sampler.min_sites
        lo, hi, counts = lo[used], hi[used], counts[used]
        mw = _box_sums(_prefix(v), lo, hi) / counts
        ms = _box_sums(_prefix(sig), lo, hi) / counts
        ml = _box_sums(_prefix(np.log(v)), lo, hi) / counts
        self.rectangles = int(used.sum())
        self.Ap = float(np.max(mw * ms ** (p - 1)))
        self.Ainf = float(np.max(mw * np.exp(-ml)))

    def _rectangles(self):
        s = self.sampler
        g1, g2 = self.pg.g1, self.pg.g2
        c1 = np.arange(-self.lat1.half[0], self.lat1.half[0] + 1, s.stride)[:, None] \
            if self.lat1.n == 1 else None
        c2 = np.arange(-self.lat2.half[0], self.lat2.half[0] + 1, s.stride)[:, None] \
            if self.lat2.n == 1 else None
        if c1 is None or c2 is None:
            raise NotImplementedError("rectangle grids are built for 1-D factors")
        r1, r2 = s.radii(g1, self.lat1), s.radii(g2, self.lat2)
        l1, h1 = _factor_boxes(g1, self.lat1, np.repeat(c1, r1.size, 0), np.tile(r1, c1.shape[0]))
        l2, h2 = _factor_boxes(g2, self.lat2, np.repeat(c2, r2.size, 0), np.tile(r2, c2.shape[0]))
        i1 = np.repeat(np.arange(l1.shape[0]), l2.shape[0])
        i2 = np.tile(np.arange(l2.shape[0]), l1.shape[0])
        lo = np.concatenate([l1[i1], l2[i2]], axis=1)
        hi = np.concatenate([h1[i1], h2[i2]], axis=1)
        return lo, hi


def product_ap(wp: ProductWeight) -> float:
    return wp.Ap


def strong_maximal(f: GridFunction, pg: ProductGroup, lat1: Lattice, lat2: Lattice,
                   radii1=None, radii2=None) -> GridFunction:
    """Max over rectangles centered at each site of the average of |f|.

    Radii default to all dyadic radii down to one lattice step.  The
    degenerate one-site rectangle is always included, so the result
    dominates |f| pointwise.
    """
    if not (pg.g1.is_abelian and pg.g2.is_abelian and lat1.n == 1 and lat2.n == 1):
        raise NotImplementedError("strong maximal function is implemented for 1-D abelian factors")
    s = RectangleSampler()
    radii1 = s.radii(pg.g1, lat1) if radii1 is None else np.asarray(radii1)
    radii2 = s.radii(pg.g2, lat2) if radii2 is None else np.asarray(radii2)
    a = np.abs(f.values)
    P = _prefix(a)
    n1, n2 = a.shape
    i1 = np.arange(-lat1.half[0], lat1.half[0] + 1)[:, None]
    i2 = np.arange(-lat2.half[0], lat2.half[0] + 1)[:, None]
    out = a.copy()  # one-site rectangles, taken exactly
    for r1 in radii1:
        l1, h1 = _factor_boxes(pg.g1, lat1, i1, np.full(n1, r1))
        for r2 in radii2:
            l2, h2 = _factor_boxes(pg.g2, lat2, i2, np.full(n2, r2))
            lo = np.stack(np.broadcast_arrays(l1[:, 0][:, None], l2[:, 0][None, :]), -1).reshape(-1, 2)
            hi = np.stack(np.broadcast_arrays(h1[:, 0][:, None], h2[:, 0][None, :]), -1).reshape(-1, 2)
            cnt = np.prod(hi - lo, axis=1)
            avg = _box_sums(P, lo, hi) / cnt
            out = np.maximum(out, avg.reshape(n1, n2))
    return f.with_values(out)


# ---------------------------------------------------------------------------
# kernel estimates for materialized bi-parameter kernels
# ---------------------------------------------------------------------------

def _offset_table(lat: Lattice, radii, ts):
    """Integer base sites and shifts for 1-D factors: (base index, shift, t, r)."""
    h = lat.h[0]
    rows = []
    for r in radii:
        b = int(round(r / h))
        for t in ts:
            s = int(round(t * b))
            if s >= 1 and b + s <= lat.half[0]:
                rows.append((b, s, s / b, b * h))
    return rows


def _default_radii(lat: Lattice):
    return lat.R[0] * 2.0 ** -np.arange(2, 6)


def one_variable_modulus(X: np.ndarray, lat: Lattice, other_rho: np.ndarray, Q: float,
                         other_Q: float, ts, radii=None, axis: int = 0):
    """``sup |K(u,v) - K(u+s,v)| rho1(u)^Q rho2(v)^Q'`` binned by ``t = s/|u|``.

    Base points are ``u = +-r``; the supremum over the other variable runs
    over all nonzero sites.  Returns the nondecreasing modulus on ``ts``.
    """
    Y = np.moveaxis(X, axis, 0)
    c = lat.half[0]
    wv = np.where(other_rho > 0, other_rho, 0.0) ** other_Q
    out = np.zeros(len(ts))
    for b, s, _, r in _offset_table(lat, radii if radii is not None else _default_radii(lat), ts):
        i = list(ts).index(min(ts, key=lambda t: abs(t - s / b)))
        for sg in (1, -1):
            d = np.abs(Y[c + sg * b] - Y[c + sg * (b + s)])
            out[i] = max(out[i], float(np.max(d * wv)) * r ** Q)
    return np.maximum.accumulate(out)


def double_difference(X: np.ndarray, lat1: Lattice, lat2: Lattice, Q1, Q2, ts, radii1=None,
                      radii2=None) -> np.ndarray:
    """Table ``omega12[t1, t2]`` of the rectangle second difference."""
    c1, c2 = lat1.half[0], lat2.half[0]
    T1 = _offset_table(lat1, radii1 if radii1 is not None else _default_radii(lat1), ts)
    T2 = _offset_table(lat2, radii2 if radii2 is not None else _default_radii(lat2), ts)
    ts = list(ts)
    out = np.zeros((len(ts), len(ts)))
    for b1, s1, _, r1 in T1:
        i = ts.index(min(ts, key=lambda t: abs(t - s1 / b1)))
        for b2, s2, _, r2 in T2:
            j = ts.index(min(ts, key=lambda t: abs(t - s2 / b2)))
            for g1 in (1, -1):
                u0, u1 = c1 + g1 * b1, c1 + g1 * (b1 + s1)
                for g2 in (1, -1):
                    v0, v1 = c2 + g2 * b2, c2 + g2 * (b2 + s2)
                    d = abs(X[u0, v0] - X[u1, v0] - X[u0, v1] + X[u1, v1])
                    out[i, j] = max(out[i, j], d * r1 ** Q1 * r2 ** Q2)
    return np.maximum.accumulate(np.maximum.accumulate(out, axis=0), axis=1)


def holder_constant(ts, omega, N: int) -> float:
    """``max_t omega(t) / min(1, 2^N t)``."""
    ts = np.asarray(ts, dtype=float)
    return float(np.max(np.asarray(omega) / np.minimum(1.0, 2.0 ** N * ts)))


def bi_kernel_checks(dec: BiDecomposition, sched: NSchedule, pairs=((1, 1), (1, 2), (2, 1), (2, 2)),
                     ts=None, stability: float = 3.0):
    """Measured constants of the bi-parameter kernel bounds over ``pairs``.

    Every constant is normalized by ``||K^0||_q`` and the predicted growth in
    ``N(j1), N(j2)``; the report passes when each normalized constant varies
    by at most ``stability`` across the tested pairs.
    """
    from .norms import EstimateReport, dini_integral

    if dec.lat1.n != 1 or dec.lat2.n != 1:
        raise NotImplementedError("kernel checks use exact site shifts on 1-D factors")
    ts = list(2.0 ** -np.arange(7, 0, -1)) if ts is None else list(ts)
    ts = [t for t in ts if t <= 0.5]  # separation d_i >= 2 A0 d_i' with A0 = 1
    Q1, Q2 = dec.pg.Q1, dec.pg.Q2
    q = dec.kernel.q
    nq = dec.kernel.norm_q
    r1, r2 = dec.rho_factors()
    rho = np.multiply.outer(r1 ** Q1, r2 ** Q2)
    rep = EstimateReport("bi-kernel")
    rows = []
    for j1, j2 in pairs:
        n1, n2 = sched(j1), sched(j2)
        growth = 2.0 ** (n1 * Q1 / q + n2 * Q2 / q) if np.isfinite(q) else 1.0
        X = dec.piece(j1, j2, sched).kernel_grid().values
        size = float(np.max(np.abs(X) * rho)) / (growth * nq)
        w1 = one_variable_modulus(X, dec.lat1, r2, Q1, Q2, ts, axis=0)
        w2 = one_variable_modulus(X, dec.lat2, r1, Q2, Q1, ts, axis=1)
        w12 = double_difference(X, dec.lat1, dec.lat2, Q1, Q2, ts)
        shape12 = np.outer(np.minimum(1, 2.0 ** n1 * np.asarray(ts)),
                           np.minimum(1, 2.0 ** n2 * np.asarray(ts)))
        d1 = dini_integral(ts, w1) + dini_integral(ts, w1, log_weight=True)
        d2 = dini_integral(ts, w2) + dini_integral(ts, w2, log_weight=True)
        rows.append({
            "j1": j1, "j2": j2, "N1": n1, "N2": n2,
            "size": size,
            "holder1": holder_constant(ts, w1, n1) / (growth * nq),
            "holder2": holder_constant(ts, w2, n2) / (growth * nq),
            "double": float(np.max(w12 / shape12)) / (growth * nq),
            "dini1_u": d1 / (growth * nq * (1 + n1) ** 2),
            "dini1_v": d2 / (growth * nq * (1 + n2) ** 2),
            "omega_u": w1.tolist(), "omega_v": w2.tolist(),
        })
    rep.tables["constants"] = rows
    rep.quantities["t"] = ts
    for key in ("size", "holder1", "holder2", "double", "dini1_u", "dini1_v"):
        vals = np.array([r[key] for r in rows])
        spread = float(vals.max() / vals.min()) if vals.min() > 0 else float("inf")
        rep.quantities[f"{key}_spread"] = spread
        rep.check(f"{key} stable", spread <= stability, spread, stability)
    return rep
