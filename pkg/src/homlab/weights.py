"""Muckenhoupt characteristics of lattice weights estimated over sampled balls.

Every value is a maximum over a finite family of balls, hence a lower bound
for the continuum supremum, and adding balls can only increase it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DomainError, GridFunction, Lattice, min_spacing_norm
from .groups import GroupStructure


@dataclass(frozen=True)
class BallSampler:
    """Grid of centers (every ``stride``-th site per axis) times dyadic radii,
    plus ``random_count`` seeded balls with log-uniform radii."""

    stride: int = 8
    radii_per_octave: int = 1
    random_count: int = 2000
    seed: int = 0
    min_sites: int = 8

    def balls(self, group: GroupStructure, lattice: Lattice):
        """Centers as integer site indices (m, n) and radii (m,)."""
        n = lattice.n
        rmax = max(R ** (1 / a) for R, a in zip(lattice.R, group.alpha)) * 2.0
        rmin = min_spacing_norm(group, lattice)
        octaves = int(np.ceil(np.log2(rmax / rmin)))
        radii = rmax * 2.0 ** (-np.arange(octaves * self.radii_per_octave + 1) / self.radii_per_octave)
        axes = [np.arange(-m, m + 1, self.stride) for m in lattice.half]
        cgrid = np.stack([c.ravel() for c in np.meshgrid(*axes, indexing="ij")], axis=-1)
        cs = np.repeat(cgrid, radii.size, axis=0)
        rs = np.tile(radii, cgrid.shape[0])
        rng = np.random.default_rng(self.seed)
        rc = np.stack([rng.integers(-m, m + 1, size=self.random_count) for m in lattice.half], axis=-1) \
            if self.random_count else np.zeros((0, n), dtype=np.int64)
        rr = np.exp(rng.uniform(np.log(rmin), np.log(rmax), size=self.random_count))
        return np.concatenate([cs, rc]).astype(np.int64), np.concatenate([rs, rr])

    def to_dict(self):
        return {"stride": self.stride, "radii_per_octave": self.radii_per_octave,
                "random_count": self.random_count, "seed": self.seed, "min_sites": self.min_sites}


def _prefix(a: np.ndarray) -> np.ndarray:
    p = a
    for ax in range(a.ndim):
        p = np.cumsum(p, axis=ax)
    return np.pad(p, [(1, 0)] * a.ndim)


def _box_sums(prefix: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sums over index boxes [lo, hi) by inclusion-exclusion on a prefix table."""
    n = lo.shape[1]
    out = np.zeros(lo.shape[0])
    for corner in range(1 << n):
        idx, sign = [], 1
        for a in range(n):
            if (corner >> a) & 1:
                idx.append(lo[:, a])
                sign = -sign
            else:
                idx.append(hi[:, a])
        out += sign * prefix[tuple(idx)]
    return out


def ball_averages(group: GroupStructure, lattice: Lattice, fields: list[np.ndarray],
                  centers: np.ndarray, radii: np.ndarray, min_sites: int = 8):
    """Averages of each field over the balls; returns (averages, used mask)."""
    shape = np.asarray(lattice.shape)
    half = np.asarray(lattice.half)
    h = np.asarray(lattice.h)
    alpha = np.asarray(group.alpha)
    if group.is_abelian:
        ext = radii[:, None] ** alpha[None, :] / h[None, :]
        # sites with |i - c| * h < r^alpha, i.e. |i - c| < ext (strict)
        span = np.ceil(ext) - 1
        lo = np.clip(centers + half - span, 0, shape).astype(np.int64)
        hi = np.clip(centers + half + span + 1, 0, shape).astype(np.int64)
        counts = np.prod(hi - lo, axis=1).astype(float)
        used = counts >= min_sites
        avgs = []
        for fld in fields:
            s = _box_sums(_prefix(fld), lo[used], hi[used])
            avgs.append(s / counts[used])
        return avgs, used
    pts = lattice.points()
    avgs = [np.zeros(int(0)) for _ in fields]
    res = [[] for _ in fields]
    used = np.zeros(len(radii), dtype=bool)
    flat = [f.ravel() for f in fields]
    for b, (c, r) in enumerate(zip(centers, radii)):
        cpt = c * h
        d = group.quasi_norm(group.multiply(group.invert(cpt)[None, :], pts))
        m = d < r
        if np.count_nonzero(m) < min_sites:
            continue
        used[b] = True
        for i, f in enumerate(flat):
            res[i].append(float(np.mean(f[m])))
    avgs = [np.asarray(r) for r in res]
    return avgs, used


@dataclass
class WeightGrid:
    """Positive weight on a lattice with cached characteristics for exponent p."""

    w: GridFunction
    p: float = 2.0
    sampler: BallSampler = field(default_factory=BallSampler)
    label: str = ""

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError("A_p needs p > 1")
        vals = self.w.values
        if not np.all(vals > 0) or not np.all(np.isfinite(vals)):
            raise DomainError("weights must be positive and finite on the box")
        p = self.p
        pp = p / (p - 1)
        sigma = vals ** (-1.0 / (p - 1))
        logw = np.log(vals)
        centers, radii = self.sampler.balls(self.w.group, self.w.lattice)
        (mw, ms, ml), used = ball_averages(self.w.group, self.w.lattice,
                                           [vals, sigma, logw], centers, radii,
                                           self.sampler.min_sites)
        self.balls_used = int(np.count_nonzero(used))
        self.balls_skipped = int(used.size - self.balls_used)
        if self.balls_used == 0:
            raise ValueError("no sampled ball holds enough lattice sites")
        self.Ap = float(np.max(mw * ms ** (p - 1)))
        self.Ainf_w = float(np.max(mw * np.exp(-ml)))
        # log sigma = -log w / (p - 1)
        self.Ainf_dual = float(np.max(ms * np.exp(ml / (p - 1))))
        self.braces = self.Ap ** (1 / p) * max(self.Ainf_w ** (1 / pp), self.Ainf_dual ** (1 / p))
        self.parens = max(self.Ainf_w, self.Ainf_dual)

    @classmethod
    def from_values(cls, group, lattice, values, p=2.0, sampler=None, label=""):
        return cls(GridFunction(group, lattice, values), p, sampler or BallSampler(), label)

    def derived(self) -> tuple[float, float]:
        return self.braces, self.parens

    def summary(self) -> dict:
        return {"label": self.label, "p": self.p, "Ap": self.Ap, "Ainf_w": self.Ainf_w,
                "Ainf_dual": self.Ainf_dual, "braces": self.braces, "parens": self.parens,
                "balls_used": self.balls_used, "balls_skipped": self.balls_skipped,
                "lower_bound": True}


def ap_constant(wg: WeightGrid) -> float:
    return wg.Ap


def ainfty_constant(wg: WeightGrid) -> float:
    return wg.Ainf_w


def derived_characteristics(wg: WeightGrid) -> tuple[float, float]:
    return wg.derived()


def power_weight(a: float, group: GroupStructure, lattice: Lattice, p: float = 2.0,
                 sampler: BallSampler | None = None) -> WeightGrid:
    """``max(rho(x), h)^a`` with ``h`` the quasi-norm size of one lattice step."""
    if a <= -group.Q:
        raise DomainError("power weights need a > -Q")
    floor = min_spacing_norm(group, lattice)
    rho = group.quasi_norm(lattice.points()).reshape(lattice.shape)
    vals = np.maximum(rho, floor) ** a
    return WeightGrid(GridFunction(group, lattice, vals), p, sampler or BallSampler(),
                      label=f"power a={a:g}")


def reverse_holder_probe(wg: WeightGrid, delta: float, ceiling: float = np.inf) -> dict:
    """Characteristics of ``w^{1 + delta/2}`` relative to powers of those of ``w``."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    e = 1 + delta / 2
    with np.errstate(over="raise"):
        try:
            vals = wg.w.values ** e
        except FloatingPointError as exc:
            raise DomainError("w^(1+delta/2) overflows") from exc
    if not np.all(np.isfinite(vals)):
        raise DomainError("w^(1+delta/2) overflows")
    wd = WeightGrid(wg.w.with_values(vals), wg.p, wg.sampler, label=f"{wg.label}^{e:g}")
    r_par = wd.parens / wg.parens ** e
    r_br = wd.braces / wg.braces ** e
    return {"delta": delta, "parens_ratio": r_par, "braces_ratio": r_br,
            "parens": wd.parens, "braces": wd.braces,
            "flagged": bool(max(r_par, r_br) > ceiling)}


def interval_bruteforce(values: np.ndarray, p: float = 2.0, min_sites: int = 1) -> dict:
    """Exact maxima over all runs of consecutive sites of a 1-D weight."""
    v = np.asarray(values, dtype=float)
    n = v.size
    sig = v ** (-1.0 / (p - 1))
    P = [np.concatenate([[0.0], np.cumsum(a)]) for a in (v, sig, np.log(v))]
    best_ap = best_inf = best_dual = 0.0
    for i in range(n):
        j = np.arange(i + min_sites, n + 1)
        cnt = j - i
        mw, ms, ml = ((Pk[j] - Pk[i]) / cnt for Pk in P)
        best_ap = max(best_ap, float(np.max(mw * ms ** (p - 1))))
        best_inf = max(best_inf, float(np.max(mw * np.exp(-ml))))
        best_dual = max(best_dual, float(np.max(ms * np.exp(ml / (p - 1)))))
    return {"Ap": best_ap, "Ainf_w": best_inf, "Ainf_dual": best_dual}
