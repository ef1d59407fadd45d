"""Operator-norm estimation, decay fits and kernel regularity measurements."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .decomposition import LinearOperatorHandle
from .grid import DomainError, GridFunction, interpolate

log = logging.getLogger(__name__)


@dataclass
class NormEstimate:
    value: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list, repr=False)


def l2_opnorm(op: LinearOperatorHandle, iters: int = 60, tol: float = 1e-4,
              seed: int = 0, start: GridFunction | None = None) -> NormEstimate:
    """Power iteration on ``op^* op``; the Rayleigh quotient gives a lower bound.

    Stops when successive estimates differ by less than ``tol`` (relative).
    The zero operator returns 0 immediately.
    """
    if start is None:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(op.lattice.shape)
    else:
        v = np.array(start.values, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("power iteration needs a nonzero start vector")
    v /= nv
    f = GridFunction(op.group, op.lattice, v)
    hist: list[float] = []
    prev = None
    for it in range(1, iters + 1):
        tv = op.apply(f)
        est = float(np.linalg.norm(tv.values))  # ||T v|| with ||v|| = 1
        hist.append(est)
        if est == 0.0:
            return NormEstimate(0.0, True, it, hist)
        w = op.adjoint(tv).values
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return NormEstimate(est, True, it, hist)
        if prev is not None and abs(est - prev) <= tol * est:
            return NormEstimate(est, True, it, hist)
        prev = est
        f = f.with_values(w / nw)
    log.info("power iteration for %s stopped after %d steps", op.label, iters)
    return NormEstimate(hist[-1], False, iters, hist)


@dataclass
class DecayFit:
    slope: float            # fitted exponent in base 2: norm ~ C 2^{-slope * index}
    intercept: float
    r2: float
    indices: list
    values: list

    @property
    def constant(self) -> float:
        return float(2.0 ** self.intercept)


MIN_FIT_POINTS = 4


def decay_fit(indices, values) -> DecayFit:
    """Least squares fit ``log2 v = b - a * i``; returns ``a`` and R^2.

    Fewer than four points or nonpositive values are an error because the
    fit would be meaningless.
    """
    i = np.asarray(indices, dtype=float)
    v = np.asarray(values, dtype=float)
    if i.size < MIN_FIT_POINTS:
        raise ValueError(f"decay fit needs at least {MIN_FIT_POINTS} points")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("decay fit needs positive finite values")
    y = np.log2(v)
    A = np.column_stack([np.ones_like(i), i])
    (b, m), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (b + m * i)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return DecayFit(float(-m), float(b), r2, i.tolist(), v.tolist())


def cotlar_table(pieces: dict, iters: int = 40, tol: float = 1e-4, seed: int = 0):
    """``||G_k^* G_k'|| + ||G_k' G_k^*||`` for all pairs of the given handles.

    ``pieces`` maps k to a LinearOperatorHandle.  Returns (ks, matrix).
    """
    ks = sorted(pieces)
    n = len(ks)
    mat = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            A, B = pieces[ks[a]], pieces[ks[b]]
            s1 = l2_opnorm(A.star().compose(B), iters, tol, seed).value
            s2 = l2_opnorm(B.compose(A.star()), iters, tol, seed).value
            mat[a, b] = mat[b, a] = s1 + s2
    return ks, mat


# ---------------------------------------------------------------------------
# weighted L^p lower bounds
# ---------------------------------------------------------------------------

def _wnorm(v, w, p, vol):
    return float((np.sum(np.abs(v) ** p * w) * vol) ** (1 / p))


def weighted_norm_lower(op: LinearOperatorHandle, weight: np.ndarray, p: float = 2.0,
                        restarts: int = 3, steps: int = 40, seed: int = 0,
                        starts: list | None = None, iters: int = 400, tol: float = 1e-8) -> dict:
    """Lower bound for ``||op||_{L^p(w) -> L^p(w)}``.

    At ``p = 2`` the weighted norm is the plain L^2 norm of
    ``w^{1/2} T w^{-1/2}``, so power iteration on that conjugate is used.
    Otherwise each restart runs monotone gradient ascent on
    ``log(||Tf||/||f||)`` in ``L^p(w)`` with the exact gradient (computed
    through the adjoint) and a backtracking step; only improving steps are
    accepted, so the reported value never decreases along a run.
    """
    rng = np.random.default_rng(seed)
    w = np.asarray(weight, dtype=float)
    if w.shape != op.lattice.shape or not np.all(np.isfinite(w)) or not np.all(w > 0):
        raise DomainError("weight must be positive and finite on the lattice")
    if p == 2.0:
        s = np.sqrt(w)
        conj = LinearOperatorHandle(
            lambda f: f.with_values(s * op.apply(f.with_values(f.values / s)).values),
            lambda g: g.with_values(op.adjoint(g.with_values(g.values * s)).values / s),
            op.group, op.lattice, f"w^1/2 {op.label} w^-1/2")
        est = l2_opnorm(conj, iters=iters, tol=tol, seed=seed)
        return {"value": est.value, "maximizer": None, "converged": est.converged}
    vol = op.lattice.cell_volume
    best, best_f = 0.0, None
    inits = list(starts or [])
    inits += [rng.standard_normal(op.lattice.shape) for _ in range(restarts)]
    grid = GridFunction(op.group, op.lattice, np.zeros(op.lattice.shape))

    def ratio_and_grad(f):
        tf = op.apply(grid.with_values(f)).values
        nt, nf = _wnorm(tf, w, p, vol), _wnorm(f, w, p, vol)
        if nt == 0 or nf == 0:
            return 0.0, np.zeros_like(f)
        # d/df log ||Tf||_{p,w} = T^*(w |Tf|^{p-2} Tf) / ||Tf||^p, similarly for f
        gt = op.adjoint(grid.with_values(w * np.abs(tf) ** (p - 2) * tf)).values / nt ** p
        gf = w * np.abs(f) ** (p - 2) * f / nf ** p
        return nt / nf, (gt - gf) / vol

    for f in inits:
        f = np.asarray(f, dtype=float)
        r, g = ratio_and_grad(f)
        step = 1.0
        for _ in range(steps):
            scale = np.linalg.norm(f) / max(np.linalg.norm(g), 1e-300)
            improved = False
            for _ in range(12):
                cand = f + step * scale * g
                rc, gc = ratio_and_grad(cand)
                if rc > r:
                    f, r, g = cand, rc, gc
                    step = min(step * 2.0, 4.0)
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        if r > best:
            best, best_f = r, f
    return {"value": best, "maximizer": best_f, "converged": None}


def loglog_fit(x, y) -> tuple[float, float]:
    """OLS slope of ``log y`` against ``log x`` and its R^2."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    A = np.column_stack([np.ones_like(lx), lx])
    (b, m), *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - b - m * lx) ** 2)) / ss if ss > 0 else 1.0
    return float(m), r2


def sharpness_probe(op: LinearOperatorHandle, p: float = 2.0, a_family=(0.0, 0.3, 0.6, 0.8, 0.9),
                    sampler=None, slack: float = 0.3, factor: float = 10.0, seed: int = 0,
                    **norm_kw) -> EstimateReport:
    """Weighted-norm growth of ``op`` over power weights ``|x|^a``.

    Fits ``log norm`` against ``log [w]_{A_p}`` and checks the exponent
    against ``2 + slack``; every point is also compared with
    ``factor * C * {w}(w)``, with ``C`` the unweighted norm.
    """
    from .weights import power_weight

    a_family = [float(a) for a in a_family]
    if len(a_family) < MIN_FIT_POINTS:
        raise DomainError(f"sharpness probe needs at least {MIN_FIT_POINTS} weights")
    g, lat = op.group, op.lattice
    base = weighted_norm_lower(op, np.ones(lat.shape), p, seed=seed, **norm_kw)["value"]
    rep = EstimateReport("sharpness")
    rows = []
    for a in a_family:
        wg = power_weight(a, g, lat, p, sampler)
        val = weighted_norm_lower(op, wg.w.values, p, seed=seed, **norm_kw)["value"]
        bound = factor * base * wg.braces * wg.parens
        rows.append({"a": a, "Ap": wg.Ap, "braces": wg.braces, "parens": wg.parens,
                     "norm_lower": val, "bound": bound})
    slope, r2 = loglog_fit([r["Ap"] for r in rows], [r["norm_lower"] for r in rows])
    rep.quantities.update({"p": p, "C_unweighted": base, "exponent": slope, "r2": r2,
                           "slack": slack, "factor": factor})
    rep.tables["family"] = rows
    rep.check("growth exponent", slope <= 2 + slack, slope, 2 + slack)
    for r in rows:
        rep.check(f"a={r['a']:g} below C{{w}}(w)", r["norm_lower"] <= r["bound"],
                  r["norm_lower"], r["bound"])
    return rep


# ---------------------------------------------------------------------------
# kernel regularity
# ---------------------------------------------------------------------------

def dini_integral(ts, omega, log_weight: bool = False) -> float:
    """``int_0^1 omega(t) (1 + [log(1/t)]) dt / t`` for tabulated omega.

    ``omega`` is taken piecewise linear in t between the (increasing) nodes,
    linear through the origin below the first node and constant above the
    last one; each piece is integrated in closed form.
    """
    t = np.asarray(ts, dtype=float)
    w = np.asarray(omega, dtype=float)
    if t[-1] < 1.0:
        t = np.append(t, 1.0)
        w = np.append(w, w[-1])

    def seg(t0, t1, a, b):
        # int_{t0}^{t1} (a + b t) dt / t  and  int (a + b t) log(1/t) dt / t
        L0, L1 = np.log(t0), np.log(t1)
        plain = a * (L1 - L0) + b * (t1 - t0)
        if not log_weight:
            return plain
        lg = -a * (L1 ** 2 - L0 ** 2) / 2 - b * ((t1 * L1 - t1) - (t0 * L0 - t0))
        return lg

    total = w[0] if not log_weight else w[0] * (1 - np.log(t[0]))
    for i in range(len(t) - 1):
        b = (w[i + 1] - w[i]) / (t[i + 1] - t[i])
        a = w[i] - b * t[i]
        total += seg(t[i], t[i + 1], a, b)
    return float(total)


def dini_closed_form(N: float, log_weight: bool = False) -> float:
    """``int_0^1 min(1, 2^N t) dt/t`` (optionally times ``log(1/t)``)."""
    base = 1 + N * np.log(2)
    return float(base + (N * np.log(2)) ** 2 / 2) if log_weight else float(base)


def dini_modulus(kernel: GridFunction, ts=None, radii=None, directions: int = 16,
                 A0: float = 1.0, seed: int = 0) -> dict:
    """Empirical modulus ``omega(t)`` of a convolution kernel.

    For base points u at quasi-norm r and displacements delta with
    ``rho(delta) = t r`` the quantity ``|K(u) - K(u delta)| r^Q`` is maximized,
    together with the same expression for the reflected kernel.  Only
    ``t <= 1/(2 A0)`` is sampled; the table is made nondecreasing.
    """
    g, lat = kernel.group, kernel.lattice
    rng = np.random.default_rng(seed)
    if ts is None:
        ts = 2.0 ** np.arange(-12, 0)
    ts = np.asarray(ts, dtype=float)
    ts = ts[ts <= 1 / (2 * A0) + 1e-15]
    if radii is None:
        R = min(r ** (1 / a) for r, a in zip(lat.R, g.alpha))
        radii = R * 2.0 ** -np.arange(1, 6)
    vals = kernel.values
    refl = vals[(slice(None, None, -1),) * lat.n] if g.inverse_rule == "negation" else None
    out = np.zeros(ts.size)
    base_dirs = rng.uniform(-1, 1, size=(directions, g.n))
    for r in radii:
        # base points on the sphere of radius r
        th = base_dirs / np.max(np.abs(base_dirs) ** (1 / np.asarray(g.alpha)), axis=1,
                                keepdims=True) ** np.asarray(g.alpha)
        u = g.dilate(np.full(len(th), r), th)
        for i, t in enumerate(ts):
            for a in range(g.n):
                for sgn in (1.0, -1.0):
                    e = np.zeros(g.n)
                    e[a] = sgn * (t * r) ** g.alpha[a]
                    u2 = g.multiply(u, e[None, :])
                    for arr in (vals, refl):
                        if arr is None:
                            continue
                        d = np.abs(interpolate(arr, lat, u) - interpolate(arr, lat, u2))
                        out[i] = max(out[i], float(np.max(d)) * r ** g.Q)
    out = np.maximum.accumulate(out)
    return {"t": ts.tolist(), "omega": out.tolist()}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EstimateReport:
    """Named measured quantities with pass/fail against stated targets."""

    kind: str
    quantities: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def check(self, name: str, ok: bool, value=None, target=None, note: str = "") -> bool:
        self.checks.append({"name": name, "passed": bool(ok), "value": value,
                            "target": target, "note": note})
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("tables")
        d["passed"] = self.passed
        return d
