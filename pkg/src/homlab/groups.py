"""Polynomial group laws on R^n with anisotropic dilations.

A group is described by dilation exponents ``alpha`` and, for every output
coordinate, a list of monomial terms ``coeff * x^a * y^b``.  The quasi-norm
is ``rho(x) = max_j |x_j| ** (1 / alpha_j)`` so every rho-ball is an
axis-aligned box, which the lattice code relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GroupLawError(ValueError):
    """Raised when a law table is inconsistent or not dilation-compatible."""


@dataclass(frozen=True)
class LawTerm:
    out: int
    x_pow: tuple[int, ...]
    y_pow: tuple[int, ...]
    coeff: float


@dataclass(frozen=True)
class InverseTerm:
    out: int
    x_pow: tuple[int, ...]
    coeff: float


@dataclass(frozen=True)
class GroupStructure:
    """Homogeneous group on R^n.

    ``inverse_rule`` is ``"negation"`` (x^{-1} = -x) or ``"explicit"``, in
    which case ``inverse_terms`` gives the polynomial inverse.
    """

    name: str
    alpha: tuple[float, ...]
    law: tuple[LawTerm, ...]
    inverse_rule: str = "negation"
    inverse_terms: tuple[InverseTerm, ...] = ()
    _tables: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.alpha)
        if n == 0:
            raise GroupLawError("group must have at least one coordinate")
        if any(a <= 0 for a in self.alpha):
            raise GroupLawError("dilation exponents must be positive")
        if self.inverse_rule not in ("negation", "explicit"):
            raise GroupLawError(f"unknown inverse rule {self.inverse_rule!r}")
        for t in self.law:
            if not 0 <= t.out < n or len(t.x_pow) != n or len(t.y_pow) != n:
                raise GroupLawError(f"malformed law term {t}")
            deg = sum((a + b) * al for a, b, al in zip(t.x_pow, t.y_pow, self.alpha))
            if abs(deg - self.alpha[t.out]) > 1e-12:
                raise GroupLawError(
                    f"term {t} has weighted degree {deg}, expected {self.alpha[t.out]}"
                )
            # a term may only involve coordinates of strictly smaller weight,
            # or be the linear x_j / y_j term of its own coordinate
            for j in range(n):
                if (t.x_pow[j] or t.y_pow[j]) and j != t.out and self.alpha[j] >= self.alpha[t.out]:
                    raise GroupLawError(f"term {t} breaks the graded structure")
        for t in self.inverse_terms:
            deg = sum(a * al for a, al in zip(t.x_pow, self.alpha))
            if abs(deg - self.alpha[t.out]) > 1e-12:
                raise GroupLawError(f"inverse term {t} is not homogeneous")
        for j in range(n):
            lin_x = tuple(int(i == j) for i in range(n))
            zero = (0,) * n
            terms = {(t.x_pow, t.y_pow): t.coeff for t in self.law if t.out == j}
            if terms.get((lin_x, zero)) != 1.0 or terms.get((zero, lin_x)) != 1.0:
                raise GroupLawError(f"coordinate {j} must contain x_{j} + y_{j}")
        object.__setattr__(self, "_tables", _compile(self))

    # -- basic data ---------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def Q(self) -> float:
        return float(sum(self.alpha))

    @property
    def is_abelian(self) -> bool:
        return all(sum(t.x_pow) + sum(t.y_pow) == 1 for t in self.law)

    def central_correction(self):
        """Twist of the last coordinate if all others are additive.

        Returns arrays ``(x_pow, y_pow, coeff)`` restricted to the first
        ``n - 1`` coordinates, or ``None`` if the law has another shape.
        """
        n = self.n
        xs, ys, cs = [], [], []
        for t in self.law:
            nonlinear = sum(t.x_pow) + sum(t.y_pow) > 1
            if not nonlinear:
                continue
            if t.out != n - 1 or t.x_pow[-1] or t.y_pow[-1]:
                return None
            xs.append(t.x_pow[:-1])
            ys.append(t.y_pow[:-1])
            cs.append(t.coeff)
        if not cs or self.inverse_rule != "negation":
            return None
        return (np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64),
                np.array(cs, dtype=np.float64))

    # -- operations (vectorized over leading axes) --------------------------
    def multiply(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        out = np.zeros(x.shape, dtype=float)
        for j, (xp, yp, c) in enumerate(self._tables["law"]):
            acc = np.zeros(x.shape[:-1])
            for k in range(len(c)):
                mono = c[k] * np.ones(x.shape[:-1])
                for i in range(self.n):
                    if xp[k, i]:
                        mono = mono * x[..., i] ** xp[k, i]
                    if yp[k, i]:
                        mono = mono * y[..., i] ** yp[k, i]
                acc = acc + mono
            out[..., j] = acc
        return out

    def invert(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.inverse_rule == "negation":
            return -x
        out = np.zeros_like(x)
        for t in self.inverse_terms:
            mono = t.coeff * np.ones(x.shape[:-1])
            for i, p in enumerate(t.x_pow):
                if p:
                    mono = mono * x[..., i] ** p
            out[..., t.out] += mono
        return out

    def dilate(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)[..., None]
        return x * t ** np.asarray(self.alpha)

    def quasi_norm(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max(np.abs(x) ** (1.0 / np.asarray(self.alpha)), axis=-1)

    def distance(self, x, y) -> np.ndarray:
        return self.quasi_norm(self.multiply(self.invert(x), y))

    def identity(self) -> np.ndarray:
        return np.zeros(self.n)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "exponents": list(self.alpha),
            "law": [[t.out, list(t.x_pow), list(t.y_pow), t.coeff] for t in self.law],
            "inverse_rule": self.inverse_rule,
            "inverse": [[t.out, list(t.x_pow), t.coeff] for t in self.inverse_terms],
        }


def _compile(g: GroupStructure) -> dict:
    law = []
    for j in range(g.n):
        terms = [t for t in g.law if t.out == j]
        law.append((np.array([t.x_pow for t in terms], dtype=np.int64),
                    np.array([t.y_pow for t in terms], dtype=np.int64),
                    np.array([t.coeff for t in terms], dtype=float)))
    return {"law": law}


def _unit(n, j):
    return tuple(int(i == j) for i in range(n))


def _additive_terms(n) -> list[LawTerm]:
    zero = (0,) * n
    out = []
    for j in range(n):
        out.append(LawTerm(j, _unit(n, j), zero, 1.0))
        out.append(LawTerm(j, zero, _unit(n, j), 1.0))
    return out


def abelian(exponents: Sequence[float] | int = 1) -> GroupStructure:
    """R^n with vector addition; an int argument means isotropic R^n."""
    if isinstance(exponents, int):
        exponents = (1.0,) * exponents
    alpha = tuple(float(a) for a in exponents)
    return GroupStructure(name=f"abelian{len(alpha)}", alpha=alpha,
                          law=tuple(_additive_terms(len(alpha))))


def heisenberg() -> GroupStructure:
    """First Heisenberg group with (x,y,t)(x',y',t') twisted by (xy'-yx')/2."""
    terms = _additive_terms(3)
    terms.append(LawTerm(2, (1, 0, 0), (0, 1, 0), 0.5))
    terms.append(LawTerm(2, (0, 1, 0), (1, 0, 0), -0.5))
    return GroupStructure(name="heisenberg", alpha=(1.0, 1.0, 2.0), law=tuple(terms))


def product(g1: GroupStructure, g2: GroupStructure) -> GroupStructure:
    """Direct product law on R^{n1+n2} (dilations applied jointly)."""
    n1, n2 = g1.n, g2.n
    terms = []
    for t in g1.law:
        terms.append(LawTerm(t.out, t.x_pow + (0,) * n2, t.y_pow + (0,) * n2, t.coeff))
    for t in g2.law:
        terms.append(LawTerm(n1 + t.out, (0,) * n1 + t.x_pow, (0,) * n1 + t.y_pow, t.coeff))
    return GroupStructure(name=f"{g1.name}x{g2.name}", alpha=g1.alpha + g2.alpha,
                          law=tuple(terms))


def from_config(cfg: dict) -> GroupStructure:
    """Build a group from a config mapping.

    Accepts ``{"builtin": "heisenberg"}``, ``{"builtin": "abelian", "exponents": [...]}``
    or an explicit ``exponents`` / ``law`` / ``inverse_rule`` table.
    """
    builtin = cfg.get("builtin")
    if builtin == "heisenberg":
        return heisenberg()
    if builtin == "abelian":
        return abelian(cfg.get("exponents", [1.0] * int(cfg.get("dim", 1))))
    if builtin is not None:
        raise GroupLawError(f"unknown builtin group {builtin!r}")
    try:
        alpha = tuple(float(a) for a in cfg["exponents"])
        law = tuple(LawTerm(int(o), tuple(int(v) for v in xp), tuple(int(v) for v in yp), float(c))
                    for o, xp, yp, c in cfg["law"])
        inv = tuple(InverseTerm(int(o), tuple(int(v) for v in xp), float(c))
                    for o, xp, c in cfg.get("inverse", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise GroupLawError(f"malformed group config: {exc}") from exc
    return GroupStructure(name=cfg.get("name", "custom"), alpha=alpha, law=law,
                          inverse_rule=cfg.get("inverse_rule", "negation"),
                          inverse_terms=inv)


def sample_points(g: GroupStructure, count: int, rng: np.random.Generator,
                  spread: float = 4.0) -> np.ndarray:
    """Random points: uniform in the unit box, then dilated by log-uniform scales."""
    base = rng.uniform(-1.0, 1.0, size=(count, g.n))
    scales = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=count))
    return g.dilate(scales, base)


def estimate_A0(g: GroupStructure, samples: int = 10_000, seed: int = 0,
                points: Iterable | None = None, chunk: int = 100_000) -> float:
    """Lower estimate of the quasi-triangle constant from random triples.

    When ``points`` is given it must have shape (m, 3, n) and is used instead
    of random triples.  Degenerate triples (zero denominator) are skipped; if
    nothing is left the estimate is 1.0.
    """
    best = 1.0
    if points is not None:
        batches = [np.asarray(points, dtype=float)]
    else:
        rng = np.random.default_rng(seed)
        batches = (sample_points(g, 3 * min(chunk, samples - s), rng).reshape(-1, 3, g.n)
                   for s in range(0, samples, chunk))
    for pts in batches:
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        num = g.distance(x, y)
        den = g.distance(x, z) + g.distance(z, y)
        ok = den > 0
        if np.any(ok):
            best = max(best, float(np.max(num[ok] / den[ok])))
    return best


def check_axioms(g: GroupStructure, count: int = 10_000, seed: int = 0) -> dict:
    """Worst-case residuals of the group and dilation identities on random points."""
    rng = np.random.default_rng(seed)
    x, y, z = (sample_points(g, count, rng) for _ in range(3))
    t = np.exp(rng.uniform(-2.0, 2.0, size=count))
    s = np.exp(rng.uniform(-2.0, 2.0, size=count))
    scale = 1.0 + np.max(np.abs(np.stack([x, y, z])), axis=(0, 2))
    e = np.zeros_like(x)
    resid = {
        "associativity": g.multiply(g.multiply(x, y), z) - g.multiply(x, g.multiply(y, z)),
        "identity": np.concatenate([g.multiply(x, e) - x, g.multiply(e, x) - x]),
        "inverse": np.concatenate([g.multiply(x, g.invert(x)), g.multiply(g.invert(x), x)]),
        "dilation_hom": g.dilate(t, g.multiply(x, y)) - g.multiply(g.dilate(t, x), g.dilate(t, y)),
        "dilation_group": g.dilate(t * s, x) - g.dilate(t, g.dilate(s, x)),
    }
    out = {}
    for k, r in resid.items():
        sc = np.tile(scale, r.shape[0] // count)
        amp = sc ** (3 * max(g.alpha) / min(g.alpha))
        if k.startswith("dilation"):
            amp = amp * np.tile(np.maximum(t, 1 / t), r.shape[0] // count) ** max(g.alpha)
        out[k] = float(np.max(np.abs(r) / amp[:, None]))
    out["norm_homogeneity"] = float(np.max(np.abs(g.quasi_norm(g.dilate(t, x)) - t * g.quasi_norm(x))
                                           / (1 + t * g.quasi_norm(x))))
    out["norm_symmetry"] = float(np.max(np.abs(g.quasi_norm(g.invert(x)) - g.quasi_norm(x))))
    return out
