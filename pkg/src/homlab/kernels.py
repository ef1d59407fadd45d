"""Rough homogeneous kernels and their smooth dyadic radial averages.

``K(x) = Omega(theta) / rho(x)^Q`` with ``theta = rho(x)^{-1} o x`` on the unit
quasi-sphere.  ``K_0`` is the restriction of ``K`` to the annulus
``1 <= rho <= 2`` with its mean removed.  The dyadic averages

    A_j F = int 2^{-j} phi(2^{-j} t) Delta[t] F dt,  Delta[t]F = t^{-Q} F(t^{-1} o x)

use a log-radial bump ``phi`` on ``(1/2, 2)`` normalized so that
``sum_j 2^{-j} t phi(2^{-j} t) = 1 / ln 2``; hence ``sum_j A_j K_0 = K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree

from .grid import GridFunction, Lattice, TruncationError, scale
from .groups import GroupStructure

LN2 = np.log(2.0)


class KernelMeanError(ValueError):
    """Kernel mean exceeds the tolerance and correction is disabled."""


# ---------------------------------------------------------------------------
# the dyadic t-bump
# ---------------------------------------------------------------------------

def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def _periodized(u):
    return sum(_bump(u / LN2 - j) for j in (-2, -1, 0, 1, 2))


def log_density(u):
    """Density in ``u = log t`` of ``t phi(t)``; integrates to one."""
    u = np.asarray(u, dtype=float)
    g = _bump(u / LN2)
    p = _periodized(u)
    return np.where(g > 0, g / np.where(p > 0, p, 1.0), 0.0) / LN2


def phi_t(t):
    """``phi(t)`` itself (zero off ``(1/2, 2)``)."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, log_density(np.log(safe)) / safe, 0.0)


@lru_cache(maxsize=16)
def _cumulative(power: float, cells: int = 4096):
    """Spline of ``C(u) = int_{-ln2}^{u} log_density(v) e^{-power v} dv``."""
    edges = np.linspace(-LN2, LN2, cells + 1)
    xg, wg = leggauss(10)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = mid[:, None] + half[:, None] * xg[None, :]
    vals = log_density(nodes) * np.exp(-power * nodes)
    cell_int = np.sum(vals * wg[None, :], axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(cell_int)])
    dens = log_density(edges) * np.exp(-power * edges)
    return CubicHermiteSpline(edges, cum, dens), float(cum[-1])


def cumulative_phi(r, power: float = 0.0):
    """``int_0^r phi(tau) tau^{-power} dtau``."""
    r = np.asarray(r, dtype=float)
    spline, total = _cumulative(float(power))
    u = np.log(np.where(r > 0, r, 1.0))
    out = np.where(u <= -LN2, 0.0, np.where(u >= LN2, total, spline(np.clip(u, -LN2, LN2))))
    return np.where(r > 0, out, 0.0)


def shell_weight(j: int, r, power: float = 0.0):
    """``int_{r/2}^{r} 2^{-j} phi(2^{-j} t) t^{-power} dt`` (power = Q gives the mean term)."""
    s = 2.0 ** (-j) * np.asarray(r, dtype=float)
    return 2.0 ** (-j * power) * (cumulative_phi(s, power) - cumulative_phi(s / 2, power))


def log_nodes(nodes: int):
    """Midpoint nodes in ``u`` on ``(-ln2, ln2)`` and their weights."""
    du = 2 * LN2 / nodes
    u = -LN2 + (np.arange(nodes) + 0.5) * du
    return u, log_density(u) * du


# ---------------------------------------------------------------------------
# quasi-sphere quadrature
# ---------------------------------------------------------------------------

def sphere_quadrature(group: GroupStructure, order: int = 64):
    """Nodes and weights for the surface measure of ``{rho = 1}``.

    The sphere is the boundary of ``[-1, 1]^n``; on the face ``x_a = +-1`` the
    measure is ``alpha_a`` times Lebesgue measure, so that
    ``int f dx = int_0^inf int f(r o theta) r^{Q-1} dsigma dr``.
    """
    n = group.n
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([group.alpha[0]] * 2)
    xg, wg = leggauss(order)
    grids = np.meshgrid(*([xg] * (n - 1)), indexing="ij")
    wts = np.ones_like(grids[0])
    for i in range(n - 1):
        wts = wts * wg[np.indices(grids[0].shape)[i]]
    face_pts = np.stack([g.ravel() for g in grids], axis=-1)
    face_w = wts.ravel()
    pts, ws = [], []
    for a in range(n):
        for sgn in (1.0, -1.0):
            p = np.insert(face_pts, a, sgn, axis=1)
            pts.append(p)
            ws.append(face_w * group.alpha[a])
    return np.concatenate(pts), np.concatenate(ws)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def omega_from_samples(directions, values) -> Callable:
    """Nearest-sample lookup for an angular profile given on sphere points."""
    directions = np.asarray(directions, dtype=float)
    values = np.asarray(values, dtype=float)
    tree = cKDTree(directions)

    def omega(theta):
        theta = np.asarray(theta, dtype=float)
        _, idx = tree.query(theta.reshape(-1, directions.shape[1]))
        return values[idx].reshape(theta.shape[:-1])

    return omega


@dataclass
class KernelSpec:
    """Angular profile ``Omega`` of a homogeneous kernel plus cached sizes.

    ``norm_q`` is ``||K_0||_q`` on the annulus and ``mean`` its integral, both
    by quadrature on the quasi-sphere.  With ``enforce=False`` a mean larger
    than ``mean_tol`` is rejected; otherwise it is corrected on grids.
    """

    group: GroupStructure
    omega: Callable
    q: float = np.inf
    mean_tol: float = 1e-8
    enforce: bool = True
    label: str = ""
    quad_order: int = 64
    norm_q: float = field(init=False)
    mean: float = field(init=False)

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("kernel integrability exponent must exceed 1")
        pts, w = sphere_quadrature(self.group, self.quad_order)
        om = np.asarray(self.omega(pts), dtype=float)
        self.sphere_mass = float(np.sum(w * om))
        self.mean = float(LN2 * self.sphere_mass)
        Q = self.group.Q
        if np.isinf(self.q):
            self.norm_q = float(np.max(np.abs(om)))
        else:
            radial = (1 - 2.0 ** (Q * (1 - self.q))) / (Q * (self.q - 1))
            self.norm_q = float((radial * np.sum(w * np.abs(om) ** self.q)) ** (1 / self.q))
        if not self.enforce and abs(self.mean) > self.mean_tol:
            raise KernelMeanError(
                f"kernel mean {self.mean:.3e} exceeds tolerance {self.mean_tol:.1e}")

    def __call__(self, x) -> np.ndarray:
        """Values of the full homogeneous kernel ``K`` (zero at the origin)."""
        x = np.asarray(x, dtype=float)
        r = self.group.quasi_norm(x)
        safe = np.where(r > 0, r, 1.0)
        theta = self.group.dilate(1.0 / safe, x)
        val = np.asarray(self.omega(theta), dtype=float) * safe ** (-self.group.Q)
        return np.where(r > 0, val, 0.0)

    def describe(self) -> dict:
        return {"label": self.label, "q": self.q, "norm_q": self.norm_q, "mean": self.mean,
                "expression": getattr(self.omega, "expression", None)}


def hilbert_kernel(group: GroupStructure | None = None, q: float = np.inf) -> KernelSpec:
    """``1/x`` on the line (``Omega(+-1) = +-1``)."""
    from .groups import abelian
    group = group or abelian(1)
    return KernelSpec(group, lambda th: np.sign(th[..., 0]), q=q, label="hilbert")


@dataclass
class K0Samples:
    """``K_0`` on a lattice; ``correction`` is the constant removed on the annulus."""

    spec: KernelSpec
    grid: GridFunction
    correction: float
    raw_mean: float

    @property
    def group(self):
        return self.spec.group

    @property
    def lattice(self):
        return self.grid.lattice


def annulus_mask(group: GroupStructure, lattice: Lattice, lo: float = 1.0, hi: float = 2.0):
    rho = group.quasi_norm(lattice.points()).reshape(lattice.shape)
    return (rho >= lo) & (rho <= hi), rho


def build_K0(spec: KernelSpec, lattice: Lattice) -> K0Samples:
    """Point samples of ``K`` on the annulus, made exactly mean zero on the grid."""
    g = spec.group
    if any(R < 2.0 ** a for R, a in zip(lattice.R, g.alpha)):
        raise TruncationError("lattice box does not contain the annulus 1 <= rho <= 2", 1.0)
    mask, _ = annulus_mask(g, lattice)
    vals = np.where(mask, spec(lattice.points()).reshape(lattice.shape), 0.0)
    vol = lattice.cell_volume
    raw = float(np.sum(vals) * vol)
    corr = 0.0
    if abs(raw) > spec.mean_tol:
        if not spec.enforce:
            raise KernelMeanError(f"discrete kernel mean {raw:.3e} exceeds tolerance")
    if spec.enforce and raw != 0.0:
        corr = raw / (np.count_nonzero(mask) * vol)
        vals = np.where(mask, vals - corr, 0.0)
    return K0Samples(spec, GridFunction(g, lattice, vals), corr, raw)


@dataclass
class RadialFactor:
    """Bounded radial multiplier ``h(t)`` with its ``d_q`` and ``Lambda^eta`` sizes."""

    h: Callable
    q: float = 2.0
    eta: float = 0.5
    label: str = ""
    j_range: tuple[int, int] = (-8, 8)

    def __post_init__(self):
        self.dq = dq_norm(self, self.q, self.j_range)
        self.lam = lambda_norm(self, self.eta)

    def __call__(self, t):
        return np.asarray(self.h(np.asarray(t, dtype=float)), dtype=float)

    def describe(self) -> dict:
        return {"label": self.label, "q": self.q, "eta": self.eta, "dq": self.dq,
                "lambda": self.lam, "expression": getattr(self.h, "expression", None)}


def _log_panels(a: float, b: float, panels: int = 16, order: int = 16):
    xg, wg = leggauss(order)
    edges = np.linspace(np.log(a), np.log(b), panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = (mid[:, None] + half[:, None] * xg).ravel()
    w = (half[:, None] * wg).ravel()
    return np.exp(u), w  # nodes in r, weights for dr / r


def dq_norm(h, q: float, j_range=(-8, 8)) -> float:
    """``sup_j (int_{2^j}^{2^{j+1}} |h(t)|^q dt/t)^{1/q}`` over the sampled j."""
    vals = []
    for j in range(j_range[0], j_range[1] + 1):
        t, w = _log_panels(2.0 ** j, 2.0 ** (j + 1))
        ht = np.abs(np.asarray(h(t), dtype=float))
        vals.append(np.max(ht) if np.isinf(q) else float(np.sum(w * ht ** q)) ** (1 / q))
    return float(max(vals))


def lambda_modulus(h, t: float, radii=None, s_count: int = 64) -> float:
    """``sup_{R, |s| < tR/2} int_R^{2R} |h(r - s) - h(r)| dr/r`` on sampled R, s.

    The s-grid is fixed per R (fractions of R/2) and filtered by |s| < tR/2,
    so the estimate is nondecreasing in t.
    """
    if radii is None:
        radii = 2.0 ** np.arange(-6, 7)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    frac = np.arange(-s_count + 1, s_count) / s_count
    best = 0.0
    for R in radii:
        s = frac * R / 2
        s = s[np.abs(s) < t * R / 2]
        if s.size == 0:
            continue
        r, w = _log_panels(R, 2 * R, panels=8, order=16)
        diff = np.abs(np.asarray(h(r[None, :] - s[:, None])) - np.asarray(h(r))[None, :])
        best = max(best, float(np.max(diff @ w)))
    return best


def lambda_norm(h, eta: float, ts=None, radii=None) -> float:
    """``sup_t t^{-eta} u(h, t)`` over a dyadic t-grid in (0, 1]."""
    ts = 2.0 ** -np.arange(0, 11) if ts is None else np.asarray(ts, dtype=float)
    return float(max(t ** (-eta) * lambda_modulus(h, t, radii) for t in ts))


# ---------------------------------------------------------------------------
# dyadic averages on a lattice
# ---------------------------------------------------------------------------

def _escape_or_raise(group, lattice, j, what):
    outer = 2.0 ** (j + 2)
    short = [R < outer ** a * (1 - 1e-12) for R, a in zip(lattice.R, group.alpha)]
    if any(short):
        # share of the shell weight living outside the box, radial estimate
        r = np.geomspace(2.0 ** (j - 1), outer, 512)
        inside = min(R ** (1 / a) for R, a in zip(lattice.R, group.alpha))
        w = shell_weight(j, r) * r ** (-1.0)
        frac = float(np.sum(w[r > inside]) / np.sum(w))
        if frac > 0:
            raise TruncationError(f"{what} for j={j} leaves the lattice box", frac)


def a_j(k0: K0Samples, j: int, zero_mean: bool | None = None) -> GridFunction:
    """``A_j K_0`` from homogeneity: ``K w_j(rho) - c v_j(rho)``.

    ``w_j`` and ``v_j`` are the shell weights with powers 0 and Q.  With
    mean enforcement the constant ``c`` is fitted so that the discrete
    integral vanishes exactly; otherwise the grid correction of ``K_0`` is used.
    """
    spec, lat = k0.spec, k0.lattice
    g = spec.group
    _escape_or_raise(g, lat, j, "A_j K_0")
    rho = g.quasi_norm(lat.points()).reshape(lat.shape)
    wj = shell_weight(j, rho)
    vj = shell_weight(j, rho, g.Q)
    main = np.where(wj > 0, spec(lat.points()).reshape(lat.shape), 0.0) * wj
    enforce = spec.enforce if zero_mean is None else zero_mean
    if enforce and np.sum(vj) > 0:
        c = np.sum(main) / np.sum(vj)
    else:
        c = k0.correction
    return GridFunction(g, lat, main - c * vj)


def a_j_quadrature(k0: K0Samples, j: int, nodes: int = 32) -> GridFunction:
    """``A_j K_0`` by midpoint quadrature in ``log t`` of interpolated dilates."""
    g = k0.group
    _escape_or_raise(g, k0.lattice, j, "A_j K_0")
    u, w = log_nodes(nodes)
    acc = np.zeros(k0.lattice.shape)
    for ui, wi in zip(u, w):
        acc += wi * scale(2.0 ** j * np.exp(ui), k0.grid, warn=False).values
    return k0.grid.with_values(acc)


def b_j(k0: K0Samples, j: int, radial: RadialFactor) -> GridFunction:
    """Radially modulated average ``h(rho) A_j K_0``; equals ``A_j`` for ``h = 1``."""
    base = a_j(k0, j)
    rho = base.rho()
    safe = np.where(rho > 0, rho, 1.0)
    return base.with_values(np.where(base.values != 0, radial(safe), 0.0) * base.values)
